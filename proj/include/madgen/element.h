//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_ELEMENT_H_
#define MADGEN_ELEMENT_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>

namespace madgen {

// Hydrogen is only used in formulas; molecular graphs carry it as counts.
enum class Element: std::uint8_t { H, C, N, O, S, P, F, Cl, Br, I };

inline constexpr std::array<Element, 9> kHeavyElements = {
  Element::C, Element::N,  Element::O,  Element::S, Element::P,
  Element::F, Element::Cl, Element::Br, Element::I,
};

inline constexpr int kNumHeavyElements = 9;

std::string_view element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view symbol);
double monoisotopic_mass(Element e);
int atomic_number(Element e);

// Index into kHeavyElements; -1 for hydrogen.
int heavy_index(Element e);

/// Heavy atoms counted by element.
using AtomMultiset = std::map<Element, int>;

int total_count(const AtomMultiset &atoms);

inline constexpr double kProtonMass = 1.00728;

}  // namespace madgen

#endif  // MADGEN_ELEMENT_H_
