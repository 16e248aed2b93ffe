//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "madgen/chemgraph.h"
#include "madgen/error.h"

namespace {

using namespace madgen;

const std::vector<std::string> kCorpus = {
  "C",
  "CC(=O)O",
  "c1ccccc1",
  "Cc1ccccc1",
  "Cc1ccc(CC2CC2)cc1",
  "O=C1CCCCC1",
  "c1ccc2ccccc2c1",
  "c1ccc(-c2ccccc2)cc1",
  "c1cc[nH]c1",
  "Cn1cccc1",
  "c1ccncc1",
  "c1ccoc1",
  "c1ccsc1",
  "CC(C)(C)c1ccc(O)cc1",
  "OC(=O)c1ccccc1N",
  "C1CCNCC1",
  "C1COCCN1",
  "N#Cc1ccccc1",
  "CCOC(=O)c1ccc(Cl)cc1",
  "O=[N+]([O-])c1ccccc1",
  "CS(=O)(=O)c1ccccc1",
  "c1ccc2[nH]ccc2c1",
  "O=c1cccc[nH]1",
  "C1CC1C(=O)NC1CCCC1",
  "FC(F)(F)c1ccccc1Br",
  "CC(C)Cc1ccc(C(C)C(=O)O)cc1",
  "c1ccc(Cc2ccccc2)cc1",
  "CCCCCCCC",
  "OCC(O)CO",
  "C[NH3+]",
  "C1CC2CCC1C2",
  "c1ccc2c(c1)Cc1ccccc1-2",
};

MolGraph shuffled(const MolGraph &m, std::mt19937 &rng) {
  std::vector<int> order(m.num_atoms());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return m.permuted(order);
}

TEST(ParseSmiles, SingleAtom) {
  MolGraph m = parse_smiles("C");
  EXPECT_EQ(m.num_atoms(), 1);
  EXPECT_EQ(m.num_bonds(), 0);
  EXPECT_EQ(m.atom(0).element, Element::C);
  EXPECT_EQ(m.atom(0).implicit_h, 4);
}

TEST(ParseSmiles, BenzeneRingClosure) {
  MolGraph m = parse_smiles("c1ccccc1");
  ASSERT_EQ(m.num_atoms(), 6);
  ASSERT_EQ(m.num_bonds(), 6);
  for (const auto &a: m.atoms()) {
    EXPECT_TRUE(a.aromatic);
    EXPECT_EQ(a.implicit_h, 1);
  }
  for (const auto &b: m.bonds())
    EXPECT_EQ(b.type, BondType::kAromatic);
  for (int i = 0; i < 6; ++i)
    EXPECT_EQ(m.degree(i), 2);
  EXPECT_EQ(connected_components(m).size(), 1u);
}

TEST(ParseSmiles, AceticAcidBonds) {
  MolGraph m = parse_smiles("CC(=O)O");
  ASSERT_EQ(m.num_atoms(), 4);
  ASSERT_EQ(m.num_bonds(), 3);
  EXPECT_EQ(m.bond_between(0, 1), BondType::kSingle);
  EXPECT_EQ(m.bond_between(1, 2), BondType::kDouble);
  EXPECT_EQ(m.bond_between(1, 3), BondType::kSingle);
  EXPECT_EQ(m.atom(0).implicit_h, 3);
  EXPECT_EQ(m.atom(1).implicit_h, 0);
  EXPECT_EQ(m.atom(2).implicit_h, 0);
  EXPECT_EQ(m.atom(3).implicit_h, 1);
}

TEST(ParseSmiles, BracketAtomsAndCharges) {
  MolGraph m = parse_smiles("O=[N+]([O-])c1ccccc1");
  EXPECT_EQ(m.atom(1).formal_charge, 1);
  EXPECT_EQ(m.atom(2).formal_charge, -1);
  EXPECT_EQ(parse_smiles("[NH4+]").atom(0).implicit_h, 4);
  EXPECT_EQ(parse_smiles("c1cc[nH]c1").atom(3).implicit_h, 1);
}

TEST(ParseSmiles, StereoIsDiscarded) {
  EXPECT_EQ(canonical_smiles("F/C=C/F"), canonical_smiles("FC=CF"));
  EXPECT_EQ(canonical_smiles("C[C@@H](N)C(=O)O"),
            canonical_smiles("CC(N)C(=O)O"));
}

TEST(ParseSmiles, PercentRingLabels) {
  EXPECT_EQ(canonical_smiles("C%10CCCCC%10"), canonical_smiles("C1CCCCC1"));
}

TEST(ParseSmiles, Errors) {
  EXPECT_THROW(parse_smiles("C1CC"), ParseError);
  EXPECT_THROW(parse_smiles("CC(C"), ParseError);
  EXPECT_THROW(parse_smiles("CC)C"), ParseError);
  EXPECT_THROW(parse_smiles("C="), ParseError);
  EXPECT_THROW(parse_smiles("C11"), ParseError);
  EXPECT_THROW(parse_smiles("CXC"), ParseError);
  EXPECT_THROW(parse_smiles(""), ParseError);
  EXPECT_THROW(parse_smiles("C(=C)(=C)(=C)"), ValenceError);
  EXPECT_THROW(parse_smiles("FF(C)"), ValenceError);
  EXPECT_THROW(parse_smiles("[13CH4]"), UnsupportedFeatureError);
  EXPECT_THROW(parse_smiles("C*"), UnsupportedFeatureError);
  EXPECT_THROW(parse_smiles("[Si]"), UnsupportedFeatureError);
}

TEST(WriteSmiles, Methane) {
  EXPECT_EQ(write_smiles(parse_smiles("C")), "C");
}

TEST(WriteSmiles, BenzeneUnderPermutations) {
  MolGraph benzene = parse_smiles("c1ccccc1");
  const std::string ref = write_smiles(benzene);
  std::mt19937 rng(7);
  for (int k = 0; k < 20; ++k)
    EXPECT_EQ(write_smiles(shuffled(benzene, rng)), ref);
}

TEST(WriteSmiles, AceticAcidSpellings) {
  EXPECT_EQ(write_smiles(parse_smiles("CC(=O)O")),
            write_smiles(parse_smiles("OC(C)=O")));
}

TEST(WriteSmiles, RoundTripIsIsomorphicAndStable) {
  std::mt19937 rng(11);
  for (const auto &smi: kCorpus) {
    MolGraph m = parse_smiles(smi);
    const std::string canon = write_smiles(m);
    MolGraph back = parse_smiles(canon);
    EXPECT_EQ(back.num_atoms(), m.num_atoms()) << smi;
    EXPECT_EQ(back.num_bonds(), m.num_bonds()) << smi;
    EXPECT_EQ(back.formula(), m.formula()) << smi << " -> " << canon;
    EXPECT_EQ(write_smiles(back), canon) << smi;
    for (int k = 0; k < 5; ++k)
      EXPECT_EQ(write_smiles(shuffled(m, rng)), canon) << smi;
  }
}

TEST(WriteSmiles, AromaticSingleBondIsExplicit) {
  const std::string s = canonical_smiles("c1ccc(-c2ccccc2)cc1");
  EXPECT_NE(s.find('-'), std::string::npos);
  EXPECT_EQ(parse_smiles(s).num_bonds(), 13);
}

TEST(GraphsEqual, Basics) {
  MolGraph m = parse_smiles("CCO");
  EXPECT_TRUE(graphs_equal(m, m));
  EXPECT_FALSE(graphs_equal(parse_smiles("c1ccccc1"), parse_smiles("Cc1ccccc1")));
  EXPECT_TRUE(graphs_equal(parse_smiles("CC(=O)O"), parse_smiles("OC(C)=O")));
  EXPECT_FALSE(graphs_equal(parse_smiles("CCO"), parse_smiles("COC")));
}

TEST(Murcko, AcyclicIsEmpty) {
  EXPECT_TRUE(murcko_scaffold(parse_smiles("CCCC")).empty());
  EXPECT_TRUE(murcko_scaffold(parse_smiles("C")).empty());
}

TEST(Murcko, BenzeneIsFixpoint) {
  Scaffold s = murcko_scaffold(parse_smiles("c1ccccc1"));
  EXPECT_EQ(write_smiles(s.graph), canonical_smiles("c1ccccc1"));
  EXPECT_EQ(s.parent_atom_index.size(), 6u);
}

TEST(Murcko, MethylPrunedLinkerKept) {
  Scaffold s = murcko_scaffold(parse_smiles("Cc1ccc(CC2CC2)cc1"));
  EXPECT_EQ(write_smiles(s.graph), canonical_smiles("c1ccc(CC2CC2)cc1"));
}

TEST(Murcko, ExocyclicDoubleBondRetained) {
  Scaffold s = murcko_scaffold(parse_smiles("CCC1CCCCC1=O"));
  EXPECT_EQ(write_smiles(s.graph), canonical_smiles("O=C1CCCCC1"));
  // Carbonyls on linkers and side chains are pruned.
  Scaffold t = murcko_scaffold(parse_smiles("CC(=O)c1ccccc1"));
  EXPECT_EQ(write_smiles(t.graph), canonical_smiles("c1ccccc1"));
}

TEST(Murcko, HydrogensReplaceSubstituents) {
  Scaffold s = murcko_scaffold(parse_smiles("Cn1cccc1"));
  EXPECT_EQ(write_smiles(s.graph), canonical_smiles("c1cc[nH]c1"));
}

TEST(Murcko, CorpusProperties) {
  for (const auto &smi: kCorpus) {
    MolGraph m = parse_smiles(smi);
    Scaffold s = murcko_scaffold(m);
    // Idempotent.
    EXPECT_EQ(write_smiles(murcko_scaffold(s.graph).graph), write_smiles(s.graph))
      << smi;
    // Side chains are acyclic.
    std::vector<int> rest;
    std::vector<bool> in_scaffold(m.num_atoms(), false);
    for (int i: s.parent_atom_index)
      in_scaffold[i] = true;
    for (int i = 0; i < m.num_atoms(); ++i) {
      if (!in_scaffold[i])
        rest.push_back(i);
    }
    MolGraph side = induced_subgraph(m, rest);
    for (bool r: ring_bonds(side))
      EXPECT_FALSE(r) << smi;
    // Composition accounting.
    AtomMultiset fa = free_atoms(m.formula(), s);
    AtomMultiset total = s.graph.composition();
    for (const auto &[e, c]: fa)
      total[e] += c;
    EXPECT_EQ(total, m.composition()) << smi;
  }
}

TEST(FreeAtoms, Examples) {
  Scaffold benzene = scaffold_from_smiles("c1ccccc1");
  EXPECT_TRUE(free_atoms(parse_formula("C6H6"), benzene).empty());
  EXPECT_EQ(free_atoms(parse_formula("C7H8"), benzene),
            (AtomMultiset { { Element::C, 1 } }));
  EXPECT_EQ(free_atoms(parse_formula("C9H11NO2"), Scaffold {}),
            (AtomMultiset { { Element::C, 9 }, { Element::N, 1 }, { Element::O, 2 } }));
  EXPECT_THROW(free_atoms(parse_formula("C5H5N"), benzene), CompositionError);
}

TEST(Morgan, Deterministic) {
  MolGraph m = parse_smiles("CC(C)Cc1ccc(C(C)C(=O)O)cc1");
  EXPECT_EQ(morgan_fingerprint(m), morgan_fingerprint(m));
}

TEST(Morgan, MethaneHasOneBit) {
  EXPECT_EQ(morgan_fingerprint(parse_smiles("C")).popcount(), 1);
}

TEST(Morgan, BenzeneHasThreeBits) {
  EXPECT_EQ(morgan_fingerprint(parse_smiles("c1ccccc1")).popcount(), 3);
}

TEST(Morgan, PermutationInvariant) {
  std::mt19937 rng(3);
  for (const auto &smi: kCorpus) {
    MolGraph m = parse_smiles(smi);
    const Fingerprint ref = morgan_fingerprint(m);
    for (int k = 0; k < 3; ++k)
      EXPECT_EQ(morgan_fingerprint(shuffled(m, rng)), ref) << smi;
  }
}

TEST(RingDetection, FusedAndLinked) {
  MolGraph m = parse_smiles("c1ccc(CC2CC2)cc1");
  auto ring = ring_atoms(m);
  EXPECT_EQ(std::count(ring.begin(), ring.end(), true), 9);
}

}  // namespace
