//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_FORMULA_H_
#define MADGEN_FORMULA_H_

#include <map>
#include <string>
#include <string_view>

#include "madgen/element.h"

namespace madgen {

/// Element counts of a neutral molecule, hydrogen included.
class ChemFormula {
public:
  ChemFormula() = default;
  explicit ChemFormula(std::map<Element, int> counts);

  const std::map<Element, int> &counts() const { return counts_; }
  int count(Element e) const;
  int heavy_atom_count() const;
  double monoisotopic_mass() const;

  // Hill notation: C first, then H, then the rest alphabetically.
  std::string to_string() const;

  friend bool operator==(const ChemFormula &,
                         const ChemFormula &) = default;

private:
  std::map<Element, int> counts_;
};

ChemFormula parse_formula(std::string_view text);

AtomMultiset heavy_atom_multiset(const ChemFormula &f);

}  // namespace madgen

#endif  // MADGEN_FORMULA_H_
