//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_CHEMGRAPH_H_
#define MADGEN_CHEMGRAPH_H_

#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "madgen/element.h"
#include "madgen/formula.h"

namespace madgen {

// Numeric values double as the non-zero edge categories of the bridge.
enum class BondType: std::uint8_t {
  kSingle = 1,
  kDouble = 2,
  kTriple = 3,
  kAromatic = 4,
};

inline constexpr int kNumBondTypes = 4;

// Contribution to an atom's valence; aromatic bonds count as one.
int valence_contribution(BondType t);

struct Atom {
  Element element = Element::C;
  int formal_charge = 0;
  bool aromatic = false;
  int implicit_h = 0;

  friend bool operator==(const Atom &, const Atom &) = default;
};

struct Bond {
  int begin;
  int end;
  BondType type;

  friend bool operator==(const Bond &, const Bond &) = default;
};

struct Neighbor {
  int atom;
  int bond;
};

/// Undirected heavy-atom graph. Hydrogens are stored as per-atom counts.
class MolGraph {
public:
  MolGraph() = default;

  int add_atom(const Atom &atom);

  // Bonds are stored with begin < end. Throws ParseError on self-loops and
  // on a second bond between the same pair.
  int add_bond(int i, int j, BondType type);

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  bool empty() const { return atoms_.empty(); }

  const std::vector<Atom> &atoms() const { return atoms_; }
  const Atom &atom(int i) const { return atoms_[i]; }
  Atom &mutable_atom(int i) { return atoms_[i]; }

  const std::vector<Bond> &bonds() const { return bonds_; }
  const Bond &bond(int b) const { return bonds_[b]; }
  const std::vector<Neighbor> &neighbors(int i) const { return adj_[i]; }
  int degree(int i) const { return static_cast<int>(adj_[i].size()); }

  std::optional<BondType> bond_between(int i, int j) const;
  int find_bond(int i, int j) const;

  // Sum of valence contributions of the atom's bonds (hydrogens excluded).
  int bond_valence(int i) const;

  AtomMultiset composition() const;
  ChemFormula formula() const;

  // Throws ValenceError if any atom exceeds its element's valence or an
  // aromatic bond touches a non-aromatic atom.
  void validate() const;

  // Graph with atoms reordered so that new index k holds old atom order[k].
  MolGraph permuted(const std::vector<int> &order) const;

private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adj_;
};

// ---------------------------------------------------------------------------
// Valence model

/// Allowed total valences (bonds + hydrogens) for an element and charge, in
/// increasing order.
std::vector<int> allowed_valences(Element e, int charge);
int max_valence(Element e, int charge);

// Hydrogen count a SMILES reader infers for an organic-subset atom.
int default_hydrogens(const MolGraph &mol, int atom);

// Hydrogen count for a neutral, non-aromatic atom with the given bond
// valence, or -1 if the valence cannot be satisfied.
int saturating_hydrogens(Element e, int bond_valence);

// ---------------------------------------------------------------------------
// SMILES

MolGraph parse_smiles(std::string_view text);

/// Canonical SMILES. Isomorphic graphs produce identical strings.
std::string write_smiles(const MolGraph &mol);

/// Shorthand for write_smiles(parse_smiles(text)).
std::string canonical_smiles(std::string_view text);

// Canonical ranks in [0, n) that write_smiles uses for traversal order.
std::vector<int> canonical_ranks(const MolGraph &mol);

bool graphs_equal(const MolGraph &a, const MolGraph &b);

// ---------------------------------------------------------------------------
// Rings and scaffolds

// Per-bond flag: bond lies on at least one cycle.
std::vector<bool> ring_bonds(const MolGraph &mol);
std::vector<bool> ring_atoms(const MolGraph &mol);

// Connected components as atom-index lists, each sorted ascending.
std::vector<std::vector<int>> connected_components(const MolGraph &mol);

// Subgraph induced on the given atoms (kept in their relative order). The
// hydrogens of kept atoms grow by the valence of every dropped bond.
MolGraph induced_subgraph(const MolGraph &mol, const std::vector<int> &keep);

struct Scaffold {
  MolGraph graph;
  // parent_atom_index[k] is the parent-molecule index of scaffold atom k.
  // Empty for scaffolds that were not derived from a parent.
  std::vector<int> parent_atom_index;

  bool empty() const { return graph.empty(); }
};

/// Bemis-Murcko scaffold: iteratively prunes terminal acyclic atoms. An atom
/// joined to a ring atom by a double or triple bond is kept with its bond.
Scaffold murcko_scaffold(const MolGraph &mol);

Scaffold scaffold_from_smiles(std::string_view smiles);

/// Heavy atoms of the formula that are not covered by the scaffold.
AtomMultiset free_atoms(const ChemFormula &mol_formula,
                        const Scaffold &scaffold);

// ---------------------------------------------------------------------------
// Fingerprints

inline constexpr int kFingerprintBits = 2048;
inline constexpr int kFingerprintRadius = 2;

struct Fingerprint {
  std::bitset<kFingerprintBits> bits;

  int popcount() const { return static_cast<int>(bits.count()); }
  friend bool operator==(const Fingerprint &, const Fingerprint &) = default;
};

/// Circular (Morgan/ECFP-style) fingerprint for radii 0..2 folded to 2048
/// bits. Environments that do not grow, or that duplicate an already seen
/// bond set, are skipped.
Fingerprint morgan_fingerprint(const MolGraph &mol);

}  // namespace madgen

#endif  // MADGEN_CHEMGRAPH_H_
