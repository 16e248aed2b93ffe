//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_RETRIEVAL_H_
#define MADGEN_RETRIEVAL_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "madgen/chemgraph.h"
#include "madgen/nn.h"
#include "madgen/spectra.h"

namespace madgen {

inline constexpr double kDefaultTemperature = 0.07;
inline constexpr int kDefaultAggregationK = 10;

struct RetrievalConfig {
  int embed_dim = 64;
  int spectrum_hidden = 256;
  int graph_hidden = 64;
  int graph_layers = 3;
  double temperature = kDefaultTemperature;
  double bin_width = kDefaultBinWidth;
  double max_mz = kDefaultMaxMz;
  double intensity_threshold = kDefaultIntensityThreshold;
  int batch_size = 64;
  int epochs = 100;
  double lr = 2e-4;
  double weight_decay = 1e-12;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
  static RetrievalConfig from_json(const nlohmann::json &j);
};

using Embedding = Eigen::VectorXd;

/// exp(cos(zs, zm) / tau). Throws ZeroVectorError for zero vectors.
double similarity_score(const Embedding &zs, const Embedding &zm, double tau);

/// Mean over rows n of -log softmax_m(cos(s_n, m_m) / tau)[n].
nn::Var contrastive_loss(const nn::Var &spec_embs, const nn::Var &scaf_embs,
                         double tau);

// Input features shared by the scaffold encoder.
inline constexpr int kScaffoldAtomFeatures = 9 + 1 + 1 + 5 + 5;
nn::Mat scaffold_atom_features(const MolGraph &g);

class RetrievalModel {
public:
  explicit RetrievalModel(const RetrievalConfig &config);

  const RetrievalConfig &config() const { return config_; }
  nn::ParamStore &store() { return store_; }

  // Unnormalized embeddings, one row per input.
  nn::Var encode_spectra(const std::vector<const Spectrum *> &spectra) const;
  nn::Var encode_scaffolds(const std::vector<const MolGraph *> &scaffolds) const;

  Embedding spectrum_embedding(const Spectrum &s) const;
  Embedding scaffold_embedding(const MolGraph &scaffold) const;

  void save(std::ostream &out) const;
  static RetrievalModel load(std::istream &in);
  void save_file(const std::string &path) const;
  static RetrievalModel load_file(const std::string &path);

private:
  nn::Mat binned_rows(const std::vector<const Spectrum *> &spectra) const;

  RetrievalConfig config_;
  nn::ParamStore store_;
  nn::Mlp2 spectrum_mlp_;
  nn::Linear atom_in_;
  std::vector<nn::Linear> message_, self_;
  nn::Mlp2 graph_head_;
};

struct RetrievalExample {
  const Spectrum *spectrum;
  std::string scaffold_smiles;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  double initial_loss = 0;         // before the first update
};

/// Throws ConfigError when fewer than 2 distinct scaffolds are present.
RetrievalModel train_retrieval(const std::vector<RetrievalExample> &data,
                               const RetrievalConfig &config,
                               TrainLog *log = nullptr);

struct ScoredScaffold {
  std::string smiles;  // canonical scaffold
  double score = 0;    // cosine similarity
};

struct RankedScaffolds {
  std::string query_id;
  std::vector<ScoredScaffold> entries;
};

/// Deduplicated pool scaffolds by descending cosine, ties by SMILES.
/// Throws EmptyPoolError.
RankedScaffolds rank_candidates(const RetrievalModel &model, const Spectrum &spec,
                                const std::vector<std::string> &pool_scaffolds);

// Ranking from precomputed scores; shared by the model path and tests.
RankedScaffolds rank_scores(std::string query_id,
                            std::vector<ScoredScaffold> scored);

/// Most frequent scaffold among each ranking's top-k; ties by lowest rank
/// sum, then SMILES.
std::string aggregate_topk_frequency(const std::vector<RankedScaffolds> &rankings,
                                     int k = kDefaultAggregationK);

/// Canonical Murcko scaffold of the record's molecule. Throws
/// MissingRecordError.
std::string oracle_scaffold(const std::string &record_id,
                            const std::map<std::string, std::string> &lookup);

/// Fraction of positions with equal canonical scaffold SMILES.
double spa(const std::vector<std::string> &predicted,
           const std::vector<std::string> &truth);

}  // namespace madgen

#endif  // MADGEN_RETRIEVAL_H_
