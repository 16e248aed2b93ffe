//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <string>
#include <vector>

#include "madgen/chemgraph.h"
#include "madgen/error.h"

namespace madgen {

namespace {

// Tarjan bridge finding; a bond is a ring bond iff it is not a bridge.
class BridgeFinder {
public:
  explicit BridgeFinder(const MolGraph &mol)
      : mol_(mol), disc_(mol.num_atoms(), -1), low_(mol.num_atoms(), 0),
        bridge_(mol.num_bonds(), false) { }

  std::vector<bool> run() {
    for (int i = 0; i < mol_.num_atoms(); ++i) {
      if (disc_[i] < 0)
        dfs(i, -1);
    }
    return bridge_;
  }

private:
  void dfs(int u, int parent_bond) {
    disc_[u] = low_[u] = timer_++;
    for (const auto &nb: mol_.neighbors(u)) {
      if (nb.bond == parent_bond)
        continue;
      if (disc_[nb.atom] >= 0) {
        low_[u] = std::min(low_[u], disc_[nb.atom]);
      } else {
        dfs(nb.atom, nb.bond);
        low_[u] = std::min(low_[u], low_[nb.atom]);
        if (low_[nb.atom] > disc_[u])
          bridge_[nb.bond] = true;
      }
    }
  }

  const MolGraph &mol_;
  std::vector<int> disc_, low_;
  std::vector<bool> bridge_;
  int timer_ = 0;
};

}  // namespace

std::vector<bool> ring_bonds(const MolGraph &mol) {
  auto bridges = BridgeFinder(mol).run();
  std::vector<bool> ring(mol.num_bonds());
  for (int b = 0; b < mol.num_bonds(); ++b)
    ring[b] = !bridges[b];
  return ring;
}

std::vector<bool> ring_atoms(const MolGraph &mol) {
  const auto ring = ring_bonds(mol);
  std::vector<bool> atoms(mol.num_atoms(), false);
  for (int b = 0; b < mol.num_bonds(); ++b) {
    if (ring[b]) {
      atoms[mol.bond(b).begin] = true;
      atoms[mol.bond(b).end] = true;
    }
  }
  return atoms;
}

std::vector<std::vector<int>> connected_components(const MolGraph &mol) {
  std::vector<int> comp(mol.num_atoms(), -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < mol.num_atoms(); ++s) {
    if (comp[s] >= 0)
      continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<int> stack { s };
    comp[s] = id;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      out[id].push_back(u);
      for (const auto &nb: mol.neighbors(u)) {
        if (comp[nb.atom] < 0) {
          comp[nb.atom] = id;
          stack.push_back(nb.atom);
        }
      }
    }
    std::sort(out[id].begin(), out[id].end());
  }
  return out;
}

MolGraph induced_subgraph(const MolGraph &mol, const std::vector<int> &keep) {
  std::vector<int> new_index(mol.num_atoms(), -1);
  MolGraph out;
  for (int old: keep)
    new_index[old] = out.add_atom(mol.atom(old));
  for (const auto &b: mol.bonds()) {
    const int i = new_index[b.begin], j = new_index[b.end];
    if (i >= 0 && j >= 0) {
      out.add_bond(i, j, b.type);
    } else if (i >= 0 || j >= 0) {
      // The dropped neighbour is replaced by hydrogens.
      const int kept = i >= 0 ? i : j;
      out.mutable_atom(kept).implicit_h += valence_contribution(b.type);
    }
  }
  return out;
}

Scaffold murcko_scaffold(const MolGraph &mol) {
  const auto in_ring = ring_atoms(mol);
  std::vector<bool> alive(mol.num_atoms(), true);
  std::vector<int> degree(mol.num_atoms());
  for (int i = 0; i < mol.num_atoms(); ++i)
    degree[i] = mol.degree(i);

  auto removable = [&](int i) {
    if (!alive[i] || in_ring[i] || degree[i] > 1)
      return false;
    if (degree[i] == 1) {
      for (const auto &nb: mol.neighbors(i)) {
        if (!alive[nb.atom])
          continue;
        const BondType t = mol.bond(nb.bond).type;
        if (in_ring[nb.atom]
            && (t == BondType::kDouble || t == BondType::kTriple)) {
          return false;
        }
      }
    }
    return true;
  };

  std::vector<int> queue;
  for (int i = 0; i < mol.num_atoms(); ++i) {
    if (removable(i))
      queue.push_back(i);
  }
  while (!queue.empty()) {
    const int u = queue.back();
    queue.pop_back();
    if (!removable(u))
      continue;
    alive[u] = false;
    for (const auto &nb: mol.neighbors(u)) {
      if (!alive[nb.atom])
        continue;
      --degree[nb.atom];
      if (removable(nb.atom))
        queue.push_back(nb.atom);
    }
  }

  Scaffold s;
  for (int i = 0; i < mol.num_atoms(); ++i) {
    if (alive[i])
      s.parent_atom_index.push_back(i);
  }
  s.graph = induced_subgraph(mol, s.parent_atom_index);
  return s;
}

Scaffold scaffold_from_smiles(std::string_view smiles) {
  Scaffold s;
  if (!smiles.empty())
    s.graph = parse_smiles(smiles);
  return s;
}

AtomMultiset free_atoms(const ChemFormula &mol_formula,
                        const Scaffold &scaffold) {
  AtomMultiset out = heavy_atom_multiset(mol_formula);
  for (const auto &[e, c]: scaffold.graph.composition()) {
    auto it = out.find(e);
    const int have = it == out.end() ? 0 : it->second;
    if (have < c) {
      throw CompositionError(
        "scaffold needs " + std::to_string(c) + " "
        + std::string(element_symbol(e)) + " but formula "
        + mol_formula.to_string() + " provides " + std::to_string(have));
    }
    if (have == c)
      out.erase(it);
    else
      it->second -= c;
  }
  return out;
}

}  // namespace madgen
