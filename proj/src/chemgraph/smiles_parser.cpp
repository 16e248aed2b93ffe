//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "madgen/chemgraph.h"
#include "madgen/error.h"

namespace madgen {

namespace {

struct RingOpening {
  int atom;
  std::optional<BondType> bond;
};

class SmilesParser {
public:
  explicit SmilesParser(std::string_view text): text_(text) { }

  MolGraph parse() {
    if (text_.empty())
      throw ParseError("empty SMILES");
    for (char c: text_) {
      if (static_cast<unsigned char>(c) > 127)
        throw ParseError("non-ASCII character in SMILES");
    }

    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(') {
        if (prev_ < 0)
          fail("branch opened before any atom");
        if (pending_bond_)
          fail("bond symbol before branch");
        branch_stack_.push_back(prev_);
        ++pos_;
      } else if (c == ')') {
        if (branch_stack_.empty())
          fail("unmatched ')'");
        if (pending_bond_)
          fail("dangling bond before ')'");
        prev_ = branch_stack_.back();
        branch_stack_.pop_back();
        ++pos_;
      } else if (c == '.') {
        if (pending_bond_)
          fail("dangling bond before '.'");
        prev_ = -1;
        ++pos_;
      } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/'
                 || c == '\\') {
        if (pending_bond_ || prev_ < 0)
          fail("misplaced bond symbol");
        pending_bond_ = true;
        pending_type_ = bond_from_symbol(c);
        ++pos_;
      } else if (c == '$') {
        throw UnsupportedFeatureError("quadruple bonds are not supported");
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        ring_closure();
      } else {
        atom();
      }
    }

    if (pending_bond_)
      fail("SMILES ends with a bond symbol");
    if (!branch_stack_.empty())
      fail("unclosed branch");
    if (!open_rings_.empty())
      fail("unclosed ring " + std::to_string(open_rings_.begin()->first));

    for (int i = 0; i < mol_.num_atoms(); ++i) {
      if (!bracket_[i])
        mol_.mutable_atom(i).implicit_h = default_hydrogens(mol_, i);
    }
    mol_.validate();
    return std::move(mol_);
  }

private:
  [[noreturn]] void fail(const std::string &what) const {
    throw ParseError("SMILES '" + std::string(text_) + "' at position "
                     + std::to_string(pos_) + ": " + what);
  }

  static std::optional<BondType> bond_from_symbol(char c) {
    switch (c) {
    case '=':
      return BondType::kDouble;
    case '#':
      return BondType::kTriple;
    case ':':
      return BondType::kAromatic;
    default:
      // '-' and the directional '/' '\' markers are all single bonds.
      return BondType::kSingle;
    }
  }

  BondType implied_bond(int a, int b) const {
    return mol_.atom(a).aromatic && mol_.atom(b).aromatic ? BondType::kAromatic
                                                          : BondType::kSingle;
  }

  void add_atom(const Atom &atom, bool bracket) {
    const int idx = mol_.add_atom(atom);
    bracket_.push_back(bracket);
    if (prev_ >= 0) {
      BondType type = pending_bond_ && pending_type_ ? *pending_type_
                                                     : implied_bond(prev_, idx);
      mol_.add_bond(prev_, idx, type);
    } else if (pending_bond_) {
      fail("bond without a preceding atom");
    }
    pending_bond_ = false;
    pending_type_.reset();
    prev_ = idx;
  }

  void atom() {
    const char c = text_[pos_];
    if (c == '[') {
      bracket_atom();
      return;
    }
    if (c == '*')
      throw UnsupportedFeatureError("wildcard atoms are not supported");

    Atom a;
    std::size_t len = 1;
    if (c == 'C' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'l') {
      a.element = Element::Cl;
      len = 2;
    } else if (c == 'B' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'r') {
      a.element = Element::Br;
      len = 2;
    } else {
      switch (c) {
      case 'C':
        a.element = Element::C;
        break;
      case 'N':
        a.element = Element::N;
        break;
      case 'O':
        a.element = Element::O;
        break;
      case 'S':
        a.element = Element::S;
        break;
      case 'P':
        a.element = Element::P;
        break;
      case 'F':
        a.element = Element::F;
        break;
      case 'I':
        a.element = Element::I;
        break;
      case 'c':
        a.element = Element::C;
        a.aromatic = true;
        break;
      case 'n':
        a.element = Element::N;
        a.aromatic = true;
        break;
      case 'o':
        a.element = Element::O;
        a.aromatic = true;
        break;
      case 's':
        a.element = Element::S;
        a.aromatic = true;
        break;
      case 'p':
        a.element = Element::P;
        a.aromatic = true;
        break;
      case 'B':
      case 'b':
        throw UnsupportedFeatureError("element B is not supported");
      default:
        fail(std::string("unexpected character '") + c + "'");
      }
    }
    pos_ += len;
    add_atom(a, false);
  }

  void bracket_atom() {
    const std::size_t close = text_.find(']', pos_);
    if (close == std::string_view::npos)
      fail("unterminated bracket atom");
    std::string_view body = text_.substr(pos_ + 1, close - pos_ - 1);
    std::size_t k = 0;

    if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k])))
      throw UnsupportedFeatureError("isotopes are not supported");
    if (body.empty())
      fail("empty bracket atom");
    if (body[k] == '*')
      throw UnsupportedFeatureError("wildcard atoms are not supported");

    Atom a;
    std::string sym;
    if (std::islower(static_cast<unsigned char>(body[k]))) {
      a.aromatic = true;
      sym = static_cast<char>(std::toupper(static_cast<unsigned char>(body[k])));
      ++k;
      if (k < body.size() && std::islower(static_cast<unsigned char>(body[k])))
        throw UnsupportedFeatureError("aromatic element '" + std::string(body)
                                      + "' is not supported");
    } else if (std::isupper(static_cast<unsigned char>(body[k]))) {
      sym = body[k++];
      if (k < body.size() && std::islower(static_cast<unsigned char>(body[k])))
        sym += body[k++];
    } else {
      fail("malformed bracket atom");
    }
    auto elem = element_from_symbol(sym);
    if (!elem)
      throw UnsupportedFeatureError("element '" + sym + "' is not supported");
    if (*elem == Element::H)
      throw UnsupportedFeatureError("explicit hydrogen atoms are not supported");
    if (a.aromatic && *elem != Element::C && *elem != Element::N
        && *elem != Element::O && *elem != Element::S && *elem != Element::P) {
      fail("element cannot be aromatic");
    }
    a.element = *elem;

    // Chirality markers are accepted and discarded.
    while (k < body.size() && body[k] == '@')
      ++k;
    while (k < body.size() && std::isupper(static_cast<unsigned char>(body[k]))
           && body[k] != 'H') {
      ++k;  // @TH1, @SP2 style classes
    }
    while (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k]))
           && k > 0 && body[k - 1] != 'H') {
      ++k;
    }

    if (k < body.size() && body[k] == 'H') {
      ++k;
      int h = 1;
      if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k]))) {
        h = 0;
        while (k < body.size()
               && std::isdigit(static_cast<unsigned char>(body[k])))
          h = h * 10 + (body[k++] - '0');
      }
      a.implicit_h = h;
    }

    if (k < body.size() && (body[k] == '+' || body[k] == '-')) {
      const char sign = body[k++];
      int magnitude = 1;
      if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k]))) {
        magnitude = 0;
        while (k < body.size()
               && std::isdigit(static_cast<unsigned char>(body[k])))
          magnitude = magnitude * 10 + (body[k++] - '0');
      } else {
        while (k < body.size() && body[k] == sign) {
          ++magnitude;
          ++k;
        }
      }
      a.formal_charge = sign == '+' ? magnitude : -magnitude;
    }

    // Atom classes (":n") carry no chemistry.
    if (k < body.size() && body[k] == ':') {
      ++k;
      while (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k])))
        ++k;
    }
    if (k != body.size())
      fail("unparsed characters in bracket atom '" + std::string(body) + "'");

    pos_ = close + 1;
    add_atom(a, true);
  }

  void ring_closure() {
    if (prev_ < 0)
      fail("ring closure without a preceding atom");
    int label;
    if (text_[pos_] == '%') {
      if (pos_ + 2 >= text_.size()
          || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))
          || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
        fail("malformed %nn ring closure");
      }
      label = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
      pos_ += 3;
    } else {
      label = text_[pos_] - '0';
      ++pos_;
    }

    std::optional<BondType> bond;
    if (pending_bond_)
      bond = pending_type_;
    pending_bond_ = false;
    pending_type_.reset();

    auto it = open_rings_.find(label);
    if (it == open_rings_.end()) {
      open_rings_[label] = { prev_, bond };
      return;
    }

    const RingOpening opening = it->second;
    open_rings_.erase(it);
    if (opening.atom == prev_)
      fail("ring closure to the same atom");
    if (opening.bond && bond && *opening.bond != *bond)
      fail("conflicting bond symbols on ring closure");
    BondType type = bond             ? *bond
                    : opening.bond   ? *opening.bond
                                     : implied_bond(opening.atom, prev_);
    if (mol_.find_bond(opening.atom, prev_) >= 0)
      fail("ring closure duplicates an existing bond");
    mol_.add_bond(opening.atom, prev_, type);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  MolGraph mol_;
  std::vector<bool> bracket_;
  int prev_ = -1;
  bool pending_bond_ = false;
  std::optional<BondType> pending_type_;
  std::vector<int> branch_stack_;
  std::map<int, RingOpening> open_rings_;
};

}  // namespace

MolGraph parse_smiles(std::string_view text) {
  return SmilesParser(text).parse();
}

}  // namespace madgen
