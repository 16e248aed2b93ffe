//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/element.h"

#include <cctype>
#include <string>

#include "madgen/error.h"
#include "madgen/formula.h"

namespace madgen {

namespace {

struct ElementInfo {
  Element element;
  std::string_view symbol;
  int atomic_number;
  double mass;
};

constexpr std::array<ElementInfo, 10> kElementTable = { {
  { Element::H, "H", 1, 1.00783 },
  { Element::C, "C", 6, 12.000 },
  { Element::N, "N", 7, 14.00307 },
  { Element::O, "O", 8, 15.99491 },
  { Element::S, "S", 16, 31.97207 },
  { Element::P, "P", 15, 30.97376 },
  { Element::F, "F", 9, 18.99840 },
  { Element::Cl, "Cl", 17, 34.96885 },
  { Element::Br, "Br", 35, 78.91834 },
  { Element::I, "I", 53, 126.90447 },
} };

const ElementInfo &info(Element e) {
  return kElementTable[static_cast<std::size_t>(e)];
}

}  // namespace

std::string_view element_symbol(Element e) {
  return info(e).symbol;
}

std::optional<Element> element_from_symbol(std::string_view symbol) {
  for (const auto &row: kElementTable) {
    if (row.symbol == symbol)
      return row.element;
  }
  return std::nullopt;
}

double monoisotopic_mass(Element e) {
  return info(e).mass;
}

int atomic_number(Element e) {
  return info(e).atomic_number;
}

int heavy_index(Element e) {
  return static_cast<int>(e) - 1;
}

int total_count(const AtomMultiset &atoms) {
  int n = 0;
  for (const auto &[_, c]: atoms)
    n += c;
  return n;
}

// ---------------------------------------------------------------------------
// ChemFormula

ChemFormula::ChemFormula(std::map<Element, int> counts)
    : counts_(std::move(counts)) {
  for (auto it = counts_.begin(); it != counts_.end();) {
    if (it->second < 0)
      throw FormatError("negative element count in formula");
    if (it->second == 0)
      it = counts_.erase(it);
    else
      ++it;
  }
}

int ChemFormula::count(Element e) const {
  auto it = counts_.find(e);
  return it == counts_.end() ? 0 : it->second;
}

int ChemFormula::heavy_atom_count() const {
  int n = 0;
  for (const auto &[e, c]: counts_) {
    if (e != Element::H)
      n += c;
  }
  return n;
}

double ChemFormula::monoisotopic_mass() const {
  double m = 0;
  for (const auto &[e, c]: counts_)
    m += c * madgen::monoisotopic_mass(e);
  return m;
}

std::string ChemFormula::to_string() const {
  std::string out;
  auto emit = [&](Element e, int c) {
    out += element_symbol(e);
    if (c > 1)
      out += std::to_string(c);
  };

  const bool has_carbon = count(Element::C) > 0;
  if (has_carbon) {
    emit(Element::C, count(Element::C));
    if (count(Element::H) > 0)
      emit(Element::H, count(Element::H));
  }

  std::map<std::string_view, int> rest;
  for (const auto &[e, c]: counts_) {
    if (has_carbon && (e == Element::C || e == Element::H))
      continue;
    rest[element_symbol(e)] = c;
  }
  for (const auto &[sym, c]: rest) {
    out += sym;
    if (c > 1)
      out += std::to_string(c);
  }
  return out;
}

ChemFormula parse_formula(std::string_view text) {
  if (text.empty())
    throw FormatError("empty formula");

  std::map<Element, int> counts;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (!std::isupper(static_cast<unsigned char>(text[pos])))
      throw FormatError("unexpected character in formula '"
                        + std::string(text) + "'");

    std::size_t end = pos + 1;
    if (end < text.size() && std::islower(static_cast<unsigned char>(text[end])))
      ++end;
    auto elem = element_from_symbol(text.substr(pos, end - pos));
    if (!elem) {
      throw FormatError("unknown element '"
                        + std::string(text.substr(pos, end - pos))
                        + "' in formula");
    }

    pos = end;
    int n = 1;
    if (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      n = 0;
      while (pos < text.size()
             && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        n = n * 10 + (text[pos] - '0');
        ++pos;
      }
      if (n == 0)
        throw FormatError("zero count in formula '" + std::string(text) + "'");
    }
    counts[*elem] += n;
  }
  return ChemFormula(std::move(counts));
}

AtomMultiset heavy_atom_multiset(const ChemFormula &f) {
  AtomMultiset out;
  for (const auto &[e, c]: f.counts()) {
    if (e != Element::H)
      out[e] = c;
  }
  return out;
}

}  // namespace madgen
