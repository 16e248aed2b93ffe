//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gradcheck.h"
#include "madgen/data.h"
#include "madgen/error.h"
#include "madgen/retrieval.h"

namespace madgen {
namespace {

using nn::Mat;
using nn::Var;

Mat randm(int r, int c, Rng &rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      m(i, j) = 2 * uniform01(rng) - 1;
  return m;
}

TEST(Similarity, Examples) {
  Embedding a(3), b(3);
  a << 1, 2, 3;
  EXPECT_NEAR(similarity_score(a, a, 1.0), std::exp(1.0), 1e-12);
  EXPECT_NEAR(similarity_score(a, 2.5 * a, 0.07), std::exp(1 / 0.07), 1e-3);
  // exp(1 / 0.07) = exp(14.2857...) = 1.6003e6.
  EXPECT_NEAR(similarity_score(a, a, 0.07), 1.6003e6, 1e2);
  a << 1, 0, 0;
  b << 0, 4, 0;
  EXPECT_NEAR(similarity_score(a, b, 0.3), 1.0, 1e-15);
  EXPECT_THROW(similarity_score(a, Embedding::Zero(3), 1.0), ZeroVectorError);
}

TEST(ContrastiveLoss, Examples) {
  Rng rng(1);
  Mat one = randm(1, 8, rng);
  EXPECT_EQ(contrastive_loss(nn::constant(one), nn::constant(randm(1, 8, rng)), 0.07).item(),
            0.0);
  Mat same = Mat::Ones(2, 4);
  EXPECT_NEAR(contrastive_loss(nn::constant(same), nn::constant(same), 0.5).item(),
              std::log(2.0), 1e-12);
  // Matched pairs at cosine 1, mismatched at -1: the loss vanishes as tau -> 0.
  Mat s(2, 2), m(2, 2);
  s << 1, 0, -1, 0;
  m << 1, 0, -1, 0;
  double prev = 1e9;
  for (double tau: { 1.0, 0.1, 0.01 }) {
    const double l = contrastive_loss(nn::constant(s), nn::constant(m), tau).item();
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-80);
  EXPECT_THROW(contrastive_loss(nn::constant(s), nn::constant(Mat::Ones(3, 2)), 1.0),
               ShapeError);
}

TEST(ContrastiveLoss, NonNegativeAndMatchesDefinition) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 6;
    Mat s = randm(k, 5, rng), m = randm(k, 5, rng);
    const double tau = 0.05 + uniform01(rng);
    const double got = contrastive_loss(nn::constant(s), nn::constant(m), tau).item();
    double want = 0;
    for (int n = 0; n < k; ++n) {
      Embedding zs = s.row(n).transpose();
      double den = 0;
      for (int j = 0; j < k; ++j)
        den += similarity_score(zs, m.row(j).transpose(), tau);
      want -= std::log(similarity_score(zs, m.row(n).transpose(), tau) / den);
    }
    want /= k;
    EXPECT_GE(got, 0.0);
    EXPECT_NEAR(got, want, 1e-9 * std::max(1.0, want));
  }
}

TEST(ContrastiveLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  auto r = madgen::testing::gradcheck(
      [](const std::vector<Var> &v) { return contrastive_loss(v[0], v[1], 0.5); },
      { randm(4, 5, rng), randm(4, 5, rng) });
  EXPECT_LT(r.max_rel_err, 1e-3);
}

// ---------------------------------------------------------------------------

const char *const kRings[] = { "c1ccccc1", "c1ccncc1", "C1CCCCC1", "C1CCCC1",
                               "C1CC1",    "c1ccsc1",  "c1ccoc1",  "C1CCOCC1",
                               "C1CCNCC1", "c1ccc2ccccc2c1" };
const char *const kChains[] = { "C", "CC", "CCC", "O", "OC", "N", "NC", "F", "Cl", "OCC" };

std::vector<DatasetRecord> hundred_pairs() {
  std::vector<DatasetRecord> out;
  for (const char *ring: kRings)
    for (const char *chain: kChains) {
      const std::string smi = std::string(chain) + ring;
      Spectrum s = simulate_spectrum(parse_smiles(smi), "[M+H]+", 32, out.size());
      s.record_id = "P" + std::to_string(out.size());
      out.push_back(make_record(std::move(s), smi));
    }
  return out;
}

std::vector<RetrievalExample> examples(const std::vector<DatasetRecord> &recs) {
  std::vector<RetrievalExample> ex;
  for (const auto &r: recs)
    ex.push_back({ &r.spectrum, r.scaffold_smiles });
  return ex;
}

TEST(TrainRetrieval, LossFallsBelowUniformBaseline) {
  auto recs = hundred_pairs();
  RetrievalConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e-3;
  TrainLog log;
  auto model = train_retrieval(examples(recs), cfg, &log);
  ASSERT_EQ(log.epoch_loss.size(), 50u);
  // 100 records -> batches of 64 and 36; uniform loss is the mean of their logs.
  const double uniform = (std::log(64.0) + std::log(36.0)) / 2;
  EXPECT_NEAR(log.initial_loss, uniform, 0.2 * uniform);
  EXPECT_LT(log.epoch_loss.back(), std::log(64.0));
  EXPECT_LT(log.epoch_loss.back(), log.initial_loss);
}

TEST(TrainRetrieval, RejectsSingleScaffoldAndBadConfig) {
  auto recs = hundred_pairs();
  recs.resize(10);  // all on benzene
  RetrievalConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_retrieval(examples(recs), cfg), ConfigError);
  cfg.epochs = 0;
  EXPECT_THROW(train_retrieval(examples(hundred_pairs()), cfg), ConfigError);
}

TEST(RankCandidates, ContractAndScaleInvariance) {
  RetrievalConfig cfg;
  cfg.epochs = 1;
  RetrievalModel model(cfg);
  Spectrum spec = simulate_spectrum(parse_smiles("Cc1ccccc1"));
  EXPECT_THROW(rank_candidates(model, spec, {}), EmptyPoolError);

  auto one = rank_candidates(model, spec, { "C1CCCCC1" });
  ASSERT_EQ(one.entries.size(), 1u);
  EXPECT_EQ(one.entries[0].smiles, "C1CCCCC1");

  std::vector<std::string> pool = { "c1ccccc1", "C1CCCCC1", "c1ccncc1", "C1CC1", "",
                                    "c1ccccc1", "C1CCOCC1" };
  auto base = rank_candidates(model, spec, pool);
  EXPECT_EQ(base.entries.size(), 6u);  // deduplicated
  for (std::size_t i = 1; i < base.entries.size(); ++i)
    EXPECT_GE(base.entries[i - 1].score, base.entries[i].score);

  // Uniform positive rescaling of both encoders' outputs keeps the order.
  for (const char *name: { "spectrum.1.w", "spectrum.1.b", "graph.head.1.w",
                           "graph.head.1.b", "graph.empty" })
    model.store().get(name).value *= 3.7;
  auto scaled = rank_candidates(model, spec, pool);
  for (std::size_t i = 0; i < base.entries.size(); ++i) {
    EXPECT_EQ(scaled.entries[i].smiles, base.entries[i].smiles);
    EXPECT_NEAR(scaled.entries[i].score, base.entries[i].score, 1e-12);
  }
}

TEST(RankScores, SortContractAndTieBreak) {
  auto r = rank_scores("q", { { "B", 0.2 }, { "A", 0.9 } });
  EXPECT_EQ(r.entries[0].score, 0.9);
  EXPECT_EQ(r.entries[1].score, 0.2);
  auto t = rank_scores("q", { { "c1ccccc1", 1.0 }, { "C1CC1", 1.0 }, { "C1CCC1", 0.5 } });
  EXPECT_EQ(t.entries[0].smiles, "C1CC1");
  EXPECT_EQ(t.entries[1].smiles, "c1ccccc1");
}

TEST(Aggregate, Examples) {
  auto mk = [](std::vector<std::string> order) {
    std::vector<ScoredScaffold> e;
    double s = 1;
    for (auto &o: order)
      e.push_back({ o, s -= 0.1 });
    return RankedScaffolds { "q", e };
  };
  EXPECT_EQ(aggregate_topk_frequency({ mk({ "A", "B" }), mk({ "A", "C" }) }, 1), "A");
  EXPECT_EQ(aggregate_topk_frequency(
                { mk({ "B", "A" }), mk({ "C", "A" }), mk({ "D", "A" }) }, 2),
            "A");
  EXPECT_EQ(aggregate_topk_frequency({ mk({ "Z", "A", "B" }) }, 1), "Z");
  // Equal counts: lower rank sum wins, then SMILES order.
  EXPECT_EQ(aggregate_topk_frequency({ mk({ "B", "A" }), mk({ "A", "B" }) }, 2), "A");
  EXPECT_EQ(aggregate_topk_frequency({ mk({ "B", "A" }) }, 10), "B");
  EXPECT_THROW(aggregate_topk_frequency({}, 3), EmptyPoolError);
}

TEST(Oracle, Examples) {
  std::map<std::string, std::string> lookup = { { "tol", "Cc1ccccc1" }, { "but", "CCCC" } };
  EXPECT_EQ(oracle_scaffold("tol", lookup), write_smiles(murcko_scaffold(parse_smiles("Cc1ccccc1")).graph));
  EXPECT_EQ(oracle_scaffold("tol", lookup), canonical_smiles("c1ccccc1"));
  EXPECT_EQ(oracle_scaffold("but", lookup), "");
  EXPECT_THROW(oracle_scaffold("none", lookup), MissingRecordError);
}

TEST(Spa, Examples) {
  std::vector<std::string> t = { "c1ccccc1", "C1CC1", "", "C1CCCCC1", "c1ccncc1" };
  EXPECT_EQ(spa(t, t), 1.0);
  EXPECT_EQ(spa({ "C1CCC1", "C1CCC1", "C1CCC1", "C1CCC1", "C1CCC1" }, t), 0.0);
  EXPECT_DOUBLE_EQ(spa({ "n1ccccc1", "C1CC1", "CC", "C1CCCC1", "c1ccccc1" },
                       { "c1ccncc1", "C1CC1", "C1CCC1", "C1CCC1", "C1CCC1" }),
                   0.4);
  EXPECT_THROW(spa({ "a" }, {}), ShapeError);
}

TEST(RetrievalModel, CheckpointRoundTrip) {
  RetrievalConfig cfg;
  cfg.seed = 5;
  RetrievalModel a(cfg);
  std::stringstream ss;
  a.save(ss);
  auto b = RetrievalModel::load(ss);
  EXPECT_EQ(b.config().seed, 5u);
  Spectrum spec = simulate_spectrum(parse_smiles("CCc1ccccc1"));
  EXPECT_EQ(a.spectrum_embedding(spec), b.spectrum_embedding(spec));
  EXPECT_EQ(a.scaffold_embedding(parse_smiles("c1ccccc1")),
            b.scaffold_embedding(parse_smiles("c1ccccc1")));
  std::stringstream junk("not a checkpoint");
  EXPECT_THROW(RetrievalModel::load(junk), FormatError);
}

}  // namespace
}  // namespace madgen
