//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <bit>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "madgen/error.h"
#include "madgen/metrics.h"
#include "madgen/random.h"

namespace {

using namespace madgen;

std::vector<std::string> load_fixture(const std::string &name) {
  const char *dir = std::getenv("MADGEN_FIXTURES");
  std::ifstream in(std::string(dir ? dir : "tests/fixtures") + "/" + name);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty())
      out.push_back(line);
  return out;
}

// Does the edge subset `mask` of a embed into b (labels respected)?
bool embeds(const MolGraph &a, unsigned mask, const MolGraph &b) {
  std::vector<int> nodes;
  std::vector<int> edges;
  for (int e = 0; e < a.num_bonds(); ++e)
    if (mask & (1U << e)) {
      edges.push_back(e);
      for (int v: { a.bond(e).begin, a.bond(e).end })
        if (std::find(nodes.begin(), nodes.end(), v) == nodes.end())
          nodes.push_back(v);
    }
  std::vector<int> map(a.num_atoms(), -1);
  std::vector<bool> used(b.num_atoms(), false);
  std::function<bool(std::size_t)> rec = [&](std::size_t k) {
    if (k == nodes.size()) {
      for (int e: edges) {
        const auto &bd = a.bond(e);
        const int be = b.find_bond(map[bd.begin], map[bd.end]);
        if (be < 0 || b.bond(be).type != bd.type)
          return false;
      }
      return true;
    }
    const int u = nodes[k];
    for (int v = 0; v < b.num_atoms(); ++v) {
      if (used[v] || b.atom(v).element != a.atom(u).element)
        continue;
      used[v] = true;
      map[u] = v;
      if (rec(k + 1))
        return true;
      used[v] = false;
      map[u] = -1;
    }
    return false;
  };
  return rec(0);
}

int brute_force_mces(const MolGraph &a, const MolGraph &b) {
  const unsigned full = (1U << a.num_bonds()) - 1;
  int best = 0;
  for (unsigned mask = 0; mask <= full; ++mask) {
    const int size = std::popcount(mask);
    if (size > best && embeds(a, mask, b))
      best = size;
  }
  return best;
}

TEST(Mces, Examples) {
  auto benzene = parse_smiles("c1ccccc1");
  auto toluene = parse_smiles("Cc1ccccc1");
  auto r = mces_distance(benzene, toluene);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.distance, 1);
  EXPECT_EQ(mces_distance(parse_smiles("CC"), parse_smiles("NN")).distance, 2);
  EXPECT_EQ(mces_distance(toluene, toluene).distance, 0);
}

TEST(Mces, AgreesWithBruteForceOnFixtures) {
  auto smiles = load_fixture("mces_graphs.smi");
  ASSERT_GE(smiles.size(), 20U);
  std::vector<MolGraph> graphs;
  for (const auto &s: smiles) {
    graphs.push_back(parse_smiles(s));
    ASSERT_LE(graphs.back().num_bonds(), 8) << s;
  }
  int pairs = 0;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    for (std::size_t j = i; j < graphs.size(); ++j) {
      const auto &a = graphs[i];
      const auto &b = graphs[j];
      const int common = brute_force_mces(a, b);
      const auto r = mces_distance(a, b);
      const auto rs = mces_distance(b, a);
      ASSERT_TRUE(r.exact);
      EXPECT_EQ(r.distance, a.num_bonds() + b.num_bonds() - 2 * common)
          << smiles[i] << " vs " << smiles[j];
      EXPECT_EQ(r.distance, rs.distance);
      ++pairs;
    }
  EXPECT_GE(pairs, 200);
}

TEST(Mces, BudgetGivesLowerBound) {
  auto a = parse_smiles("CCCCCCCCCCCCCCCCCCCC");
  auto b = parse_smiles("CC(C)CC(C)CC(C)CC(C)CC(C)CC(C)CC");
  auto exact = mces_distance(a, b);
  auto cut = mces_distance(a, b, 5);
  EXPECT_FALSE(cut.exact);
  EXPECT_LE(cut.distance, exact.distance);
}

Fingerprint random_fp(Rng &rng) {
  Fingerprint f;
  const int n = static_cast<int>(rng() % 40);
  for (int i = 0; i < n; ++i)
    f.bits.set(rng() % kFingerprintBits);
  return f;
}

TEST(Tanimoto, Examples) {
  Fingerprint a, b;
  a.bits.set(1);
  a.bits.set(2);
  b.bits.set(2);
  b.bits.set(3);
  EXPECT_DOUBLE_EQ(tanimoto(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(tanimoto(a, a), 1.0);
  Fingerprint c;
  c.bits.set(7);
  EXPECT_DOUBLE_EQ(tanimoto(a, c), 0.0);
  EXPECT_DOUBLE_EQ(tanimoto(Fingerprint {}, Fingerprint {}), 1.0);
}

TEST(Tanimoto, PropertySuite) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto a = random_fp(rng);
    auto b = random_fp(rng);
    const double t = tanimoto(a, b);
    EXPECT_EQ(t, tanimoto(b, a));
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
    if (a.bits.any())
      EXPECT_EQ(tanimoto(a, a), 1.0);
  }
}

RankedMolecules ranked_of(const std::vector<std::string> &smiles) {
  RankedMolecules r;
  for (const auto &s: smiles) {
    RankedMolecule m;
    m.graph = parse_smiles(s);
    m.smiles = write_smiles(m.graph);
    m.frequency = 1;
    r.entries.push_back(m);
  }
  return r;
}

TEST(TopK, RankThreshold) {
  auto truth = parse_smiles("CCO");
  std::vector<std::string> list { "CC", "CCC", "CCCC", "CCN", "CN", "CCl", "OCC" };
  auto r = ranked_of(list);
  EXPECT_EQ(topk_accuracy(r, truth, 1), 0);
  EXPECT_EQ(topk_accuracy(r, truth, 6), 0);
  EXPECT_EQ(topk_accuracy(r, truth, 7), 1);
  EXPECT_EQ(topk_accuracy(r, truth, 10), 1);
  EXPECT_EQ(topk_accuracy(ranked_of({}), truth, 10), 0);
  for (int k = 1; k < 12; ++k)
    EXPECT_LE(topk_accuracy(r, truth, k), topk_accuracy(r, truth, k + 1));
}

TEST(Evaluate, Examples) {
  std::vector<MolGraph> truths { parse_smiles("CCO"), parse_smiles("c1ccccc1"),
                                 parse_smiles("CC=O"), parse_smiles("CCN") };
  std::vector<RankedMolecules> all_right { ranked_of({ "OCC" }),
                                           ranked_of({ "c1ccccc1" }),
                                           ranked_of({ "O=CC" }),
                                           ranked_of({ "NCC" }) };
  auto rep = evaluate(all_right, truths);
  EXPECT_EQ(rep.top1_accuracy, 1.0);
  EXPECT_EQ(rep.top10_accuracy, 1.0);
  EXPECT_EQ(rep.mean_top1_tanimoto, 1.0);
  EXPECT_EQ(rep.mean_top1_mces, 0.0);

  std::vector<RankedMolecules> none(4);
  auto empty = evaluate(none, truths);
  EXPECT_EQ(empty.top1_accuracy, 0.0);
  EXPECT_EQ(empty.top10_accuracy, 0.0);
  EXPECT_EQ(empty.n_empty, 4);
  // 2 x (2 + 6 + 2 + 2) / 4
  EXPECT_DOUBLE_EQ(empty.mean_top1_mces, 6.0);

  std::vector<RankedMolecules> half { ranked_of({ "OCC" }), ranked_of({ "C1CCCCC1" }),
                                      ranked_of({ "CCC", "CC=O" }),
                                      ranked_of({ "NCC" }) };
  auto h = evaluate(half, truths, { "a", "b" }, { "a", "c" });
  EXPECT_DOUBLE_EQ(h.top1_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(h.top10_accuracy, 0.75);
  EXPECT_GE(h.mean_top10_best_tanimoto, h.mean_top1_tanimoto);
  EXPECT_LE(h.mean_top10_best_mces, h.mean_top1_mces);
  ASSERT_TRUE(h.spa.has_value());
  EXPECT_DOUBLE_EQ(*h.spa, 0.5);
  auto table = format_report_table({ h });
  EXPECT_NE(table.find("Top10"), std::string::npos);
  EXPECT_THROW(evaluate(half, { truths[0] }), ShapeError);
}

}  // namespace
