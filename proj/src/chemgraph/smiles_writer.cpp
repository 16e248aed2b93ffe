//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "madgen/chemgraph.h"

namespace madgen {

namespace {

// Upper bound on explored tie-breaking leaves. Beyond it only the first
// member of each tied class is tried.
constexpr int kMaxTieLeaves = 4096;

template <class Key>
std::vector<int> dense_ranks(const std::vector<Key> &keys) {
  std::vector<int> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return keys[a] < keys[b]; });
  std::vector<int> ranks(keys.size());
  int r = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && keys[order[k - 1]] < keys[order[k]])
      ++r;
    ranks[order[k]] = r;
  }
  return ranks;
}

int num_classes(const std::vector<int> &ranks) {
  return ranks.empty() ? 0 : *std::max_element(ranks.begin(), ranks.end()) + 1;
}

std::vector<int> initial_ranks(const MolGraph &mol) {
  using Key = std::tuple<int, int, int, int, int, int>;
  std::vector<Key> keys;
  keys.reserve(mol.num_atoms());
  for (int i = 0; i < mol.num_atoms(); ++i) {
    const Atom &a = mol.atom(i);
    keys.emplace_back(atomic_number(a.element), a.formal_charge, mol.degree(i),
                      mol.bond_valence(i), a.aromatic ? 1 : 0, a.implicit_h);
  }
  return dense_ranks(keys);
}

std::vector<int> refine(const MolGraph &mol, std::vector<int> ranks) {
  using Key = std::pair<int, std::vector<std::pair<int, int>>>;
  int classes = num_classes(ranks);
  while (true) {
    std::vector<Key> keys(mol.num_atoms());
    for (int i = 0; i < mol.num_atoms(); ++i) {
      keys[i].first = ranks[i];
      for (const auto &nb: mol.neighbors(i)) {
        keys[i].second.emplace_back(
          ranks[nb.atom], static_cast<int>(mol.bond(nb.bond).type));
      }
      std::sort(keys[i].second.begin(), keys[i].second.end());
    }
    auto next = dense_ranks(keys);
    const int next_classes = num_classes(next);
    ranks = std::move(next);
    if (next_classes == classes)
      break;
    classes = next_classes;
  }
  return ranks;
}

std::string atom_token(const MolGraph &mol, int i) {
  const Atom &a = mol.atom(i);
  std::string sym(element_symbol(a.element));
  if (a.aromatic)
    sym[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[0])));

  const bool organic = a.element != Element::H;
  if (organic && a.formal_charge == 0
      && default_hydrogens(mol, i) == a.implicit_h) {
    return sym;
  }

  std::string out = "[" + sym;
  if (a.implicit_h > 0) {
    out += 'H';
    if (a.implicit_h > 1)
      out += std::to_string(a.implicit_h);
  }
  if (a.formal_charge != 0) {
    out += a.formal_charge > 0 ? '+' : '-';
    const int mag = std::abs(a.formal_charge);
    if (mag > 1)
      out += std::to_string(mag);
  }
  out += ']';
  return out;
}

std::string bond_token(const MolGraph &mol, const Bond &b) {
  switch (b.type) {
  case BondType::kSingle:
    return mol.atom(b.begin).aromatic && mol.atom(b.end).aromatic ? "-" : "";
  case BondType::kDouble:
    return "=";
  case BondType::kTriple:
    return "#";
  case BondType::kAromatic:
    return "";
  }
  return "";
}

class SmilesEmitter {
public:
  SmilesEmitter(const MolGraph &mol, const std::vector<int> &ranks)
      : mol_(mol), ranks_(ranks), visited_(mol.num_atoms(), false),
        is_closure_(mol.num_bonds(), false), closure_digit_(mol.num_bonds(), -1),
        closures_(mol.num_atoms()), children_(mol.num_atoms()) { }

  std::string emit() {
    std::vector<int> order(mol_.num_atoms());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return ranks_[a] < ranks_[b]; });

    std::string out;
    for (int start: order) {
      if (visited_[start])
        continue;
      build_tree(start, -1);
      if (!out.empty())
        out += '.';
      write(start, out);
    }
    return out;
  }

private:
  std::vector<Neighbor> sorted_neighbors(int u) const {
    auto nbs = mol_.neighbors(u);
    std::sort(nbs.begin(), nbs.end(), [&](const Neighbor &a, const Neighbor &b) {
      return ranks_[a.atom] < ranks_[b.atom];
    });
    return nbs;
  }

  void build_tree(int u, int parent_bond) {
    visited_[u] = true;
    for (const auto &nb: sorted_neighbors(u)) {
      if (nb.bond == parent_bond || is_closure_[nb.bond])
        continue;
      if (visited_[nb.atom]) {
        is_closure_[nb.bond] = true;
        closures_[nb.atom].push_back(nb);
        closures_[u].push_back({ nb.atom, nb.bond });
      } else {
        children_[u].push_back(nb);
        build_tree(nb.atom, nb.bond);
      }
    }
  }

  int take_digit() {
    int d = 1;
    while (used_digits_.count(d) != 0)
      ++d;
    used_digits_.insert({ d, true });
    return d;
  }

  static std::string digit_token(int d) {
    return d < 10 ? std::to_string(d) : "%" + std::to_string(d);
  }

  void write(int u, std::string &out) {
    out += atom_token(mol_, u);

    auto rings = closures_[u];
    std::sort(rings.begin(), rings.end(),
              [&](const Neighbor &a, const Neighbor &b) {
                return ranks_[a.atom] < ranks_[b.atom];
              });
    std::vector<int> released;
    for (const auto &nb: rings) {
      if (closure_digit_[nb.bond] >= 0) {
        out += digit_token(closure_digit_[nb.bond]);
        released.push_back(closure_digit_[nb.bond]);
      }
    }
    for (const auto &nb: rings) {
      if (closure_digit_[nb.bond] < 0) {
        const int d = take_digit();
        closure_digit_[nb.bond] = d;
        out += bond_token(mol_, mol_.bond(nb.bond));
        out += digit_token(d);
      }
    }
    for (int d: released)
      used_digits_.erase(d);

    const auto &kids = children_[u];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last)
        out += '(';
      out += bond_token(mol_, mol_.bond(kids[k].bond));
      write(kids[k].atom, out);
      if (!last)
        out += ')';
    }
  }

  const MolGraph &mol_;
  const std::vector<int> &ranks_;
  std::vector<bool> visited_;
  std::vector<bool> is_closure_;
  std::vector<int> closure_digit_;
  std::vector<std::vector<Neighbor>> closures_;
  std::vector<std::vector<Neighbor>> children_;
  std::map<int, bool> used_digits_;
};

std::string smiles_from_ranks(const MolGraph &mol,
                              const std::vector<int> &ranks) {
  return SmilesEmitter(mol, ranks).emit();
}

struct TieSearch {
  const MolGraph &mol;
  std::string best;
  std::vector<int> best_ranks;
  int leaves = 0;

  void run(std::vector<int> ranks) {
    ranks = refine(mol, std::move(ranks));
    const int n = mol.num_atoms();
    if (num_classes(ranks) == n) {
      std::string s = smiles_from_ranks(mol, ranks);
      if (leaves == 0 || s < best) {
        best = std::move(s);
        best_ranks = ranks;
      }
      ++leaves;
      return;
    }

    std::vector<int> class_size(n, 0);
    for (int r: ranks)
      ++class_size[r];
    int tied = 0;
    while (class_size[tied] < 2)
      ++tied;

    bool first = true;
    for (int m = 0; m < n; ++m) {
      if (ranks[m] != tied)
        continue;
      if (!first && leaves >= kMaxTieLeaves)
        break;
      first = false;
      std::vector<int> split(n);
      for (int i = 0; i < n; ++i)
        split[i] = 2 * ranks[i] + (ranks[i] == tied && i != m ? 1 : 0);
      run(dense_ranks(split));
    }
  }
};

}  // namespace

std::vector<int> canonical_ranks(const MolGraph &mol) {
  if (mol.empty())
    return {};
  TieSearch search { mol, {}, {}, 0 };
  search.run(initial_ranks(mol));
  return search.best_ranks;
}

std::string write_smiles(const MolGraph &mol) {
  if (mol.empty())
    return "";
  TieSearch search { mol, {}, {}, 0 };
  search.run(initial_ranks(mol));
  return search.best;
}

std::string canonical_smiles(std::string_view text) {
  return write_smiles(parse_smiles(text));
}

bool graphs_equal(const MolGraph &a, const MolGraph &b) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds())
    return false;
  return write_smiles(a) == write_smiles(b);
}

}  // namespace madgen
