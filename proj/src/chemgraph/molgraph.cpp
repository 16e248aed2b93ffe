//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <string>

#include "madgen/chemgraph.h"
#include "madgen/error.h"

namespace madgen {

int valence_contribution(BondType t) {
  switch (t) {
  case BondType::kSingle:
  case BondType::kAromatic:
    return 1;
  case BondType::kDouble:
    return 2;
  case BondType::kTriple:
    return 3;
  }
  return 1;
}

int MolGraph::add_atom(const Atom &atom) {
  atoms_.push_back(atom);
  adj_.emplace_back();
  return num_atoms() - 1;
}

int MolGraph::add_bond(int i, int j, BondType type) {
  if (i == j)
    throw ParseError("self-loop on atom " + std::to_string(i));
  if (i < 0 || j < 0 || i >= num_atoms() || j >= num_atoms())
    throw ParseError("bond references a missing atom");
  if (find_bond(i, j) >= 0) {
    throw ParseError("duplicate bond between atoms " + std::to_string(i)
                     + " and " + std::to_string(j));
  }
  if (i > j)
    std::swap(i, j);
  bonds_.push_back({ i, j, type });
  const int b = num_bonds() - 1;
  adj_[i].push_back({ j, b });
  adj_[j].push_back({ i, b });
  return b;
}

int MolGraph::find_bond(int i, int j) const {
  if (i < 0 || i >= num_atoms())
    return -1;
  for (const auto &nb: adj_[i]) {
    if (nb.atom == j)
      return nb.bond;
  }
  return -1;
}

std::optional<BondType> MolGraph::bond_between(int i, int j) const {
  const int b = find_bond(i, j);
  if (b < 0)
    return std::nullopt;
  return bonds_[b].type;
}

int MolGraph::bond_valence(int i) const {
  int v = 0;
  for (const auto &nb: adj_[i])
    v += valence_contribution(bonds_[nb.bond].type);
  return v;
}

AtomMultiset MolGraph::composition() const {
  AtomMultiset out;
  for (const auto &a: atoms_)
    ++out[a.element];
  return out;
}

ChemFormula MolGraph::formula() const {
  std::map<Element, int> counts;
  int h = 0;
  for (const auto &a: atoms_) {
    ++counts[a.element];
    h += a.implicit_h;
  }
  if (h > 0)
    counts[Element::H] = h;
  return ChemFormula(std::move(counts));
}

void MolGraph::validate() const {
  for (int i = 0; i < num_atoms(); ++i) {
    const Atom &a = atoms_[i];
    if (a.element == Element::H)
      throw UnsupportedFeatureError("explicit hydrogen atoms are not supported");
    if (a.implicit_h < 0)
      throw ValenceError("negative hydrogen count");
    const int total = bond_valence(i) + a.implicit_h;
    if (total > max_valence(a.element, a.formal_charge)) {
      throw ValenceError("atom " + std::to_string(i) + " ("
                         + std::string(element_symbol(a.element))
                         + ") exceeds its valence: " + std::to_string(total));
    }
  }
  for (const auto &b: bonds_) {
    if (b.type == BondType::kAromatic
        && (!atoms_[b.begin].aromatic || !atoms_[b.end].aromatic)) {
      throw ValenceError("aromatic bond between non-aromatic atoms");
    }
  }
}

MolGraph MolGraph::permuted(const std::vector<int> &order) const {
  std::vector<int> new_index(atoms_.size());
  MolGraph out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    new_index[order[k]] = static_cast<int>(k);
    out.add_atom(atoms_[order[k]]);
  }
  for (const auto &b: bonds_)
    out.add_bond(new_index[b.begin], new_index[b.end], b.type);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> allowed_valences(Element e, int charge) {
  switch (e) {
  case Element::C:
    return charge == 0 ? std::vector<int> { 4 } : std::vector<int> { 3 };
  case Element::N:
    if (charge == 1)
      return { 4 };
    if (charge == -1)
      return { 2 };
    return { 3 };
  case Element::O:
    if (charge == 1)
      return { 3 };
    if (charge == -1)
      return { 1 };
    return { 2 };
  case Element::S:
    if (charge == 1)
      return { 3, 5 };
    if (charge == -1)
      return { 1, 3, 5 };
    return { 2, 4, 6 };
  case Element::P:
    if (charge == 1)
      return { 4 };
    return { 3, 5 };
  case Element::F:
  case Element::Cl:
  case Element::Br:
  case Element::I:
    if (charge == -1)
      return { 0 };
    return { 1 };
  case Element::H:
    return { 1 };
  }
  return { 0 };
}

int max_valence(Element e, int charge) {
  return allowed_valences(e, charge).back();
}

int saturating_hydrogens(Element e, int bond_valence) {
  for (int v: allowed_valences(e, 0)) {
    if (v >= bond_valence)
      return v - bond_valence;
  }
  return -1;
}

int default_hydrogens(const MolGraph &mol, int atom) {
  const Atom &a = mol.atom(atom);
  const int bv = mol.bond_valence(atom);
  int need = bv;
  if (a.aromatic
      && (a.element == Element::C || a.element == Element::N
          || a.element == Element::P)) {
    need += 1;
  }
  for (int v: allowed_valences(a.element, a.formal_charge)) {
    if (v >= need)
      return v - need;
  }
  return 0;
}

}  // namespace madgen
