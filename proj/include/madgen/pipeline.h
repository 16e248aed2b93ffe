//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

// Run configuration and the end-to-end commands behind the CLI.

#ifndef MADGEN_PIPELINE_H_
#define MADGEN_PIPELINE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madgen/data.h"
#include "madgen/generator.h"
#include "madgen/metrics.h"
#include "madgen/retrieval.h"

namespace madgen {

inline constexpr int kDefaultPoolSize = 64;

struct RunConfig {
  std::uint64_t seed = 0;

  // Empty paths resolve against data_dir (MADGEN_DATA_DIR, else "data").
  std::string data_dir;
  std::string dataset;
  std::string pools;
  std::string out_dir;
  std::string retrieval_checkpoint;
  std::string generator_checkpoint;

  SyntheticConfig synthetic;
  int pool_size = kDefaultPoolSize;
  RetrievalConfig retrieval;
  GeneratorConfig generator;
  GenerationConfig generation;

  int aggregation_k = kDefaultAggregationK;
  std::string rank_mode = "predictive";  // predictive | oracle
  std::string retriever = "oracle";      // predictive | oracle
  std::string train_split = "train";
  std::string eval_split = "test";
  int max_queries = 0;  // 0 = every record of the split
  std::int64_t mces_budget = kDefaultMcesBudget;
  int ablation_train_steps = 0;  // 0 = generator.train_steps

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are rejected so typos do not pass silently.
  static RunConfig from_json(const nlohmann::json &j);
  static RunConfig from_file(const std::string &path);

  // Resolved paths.
  std::string data_root() const;
  std::string dataset_path() const;
  std::string pools_path() const;
  std::string output_dir() const;
  std::string retrieval_checkpoint_path() const;
  std::string generator_checkpoint_path() const;

  // Stage configs with seeds drawn from the root seed's named substreams.
  SyntheticConfig seeded_synthetic() const;
  RetrievalConfig seeded_retrieval() const;
  GeneratorConfig seeded_generator() const;
  std::uint64_t sampling_seed(std::size_t query_index) const;
};

using Logger = std::function<void(const std::string &)>;

struct SimulateResult {
  DatasetStats stats;
  std::vector<std::string> files;
};
SimulateResult cmd_simulate(const RunConfig &cfg, const Logger &log = nullptr);

TrainLog cmd_train_retrieval(const RunConfig &cfg, const Logger &log = nullptr);

struct ScaffoldPrediction {
  std::string record_id;
  std::string scaffold;  // canonical, "" for acyclic
  double score = 0;      // cosine; 1 for the oracle
};

/// One predicted scaffold per record. Spectra sharing formula, adduct and
/// precursor m/z are treated as one compound and aggregated by top-k
/// frequency. Throws EmptyPoolError when a formula has no candidates.
std::vector<ScaffoldPrediction>
predict_scaffolds(const RetrievalModel &model, const std::vector<DatasetRecord> &records,
                  const CandidatePool &pool, int k = kDefaultAggregationK);
std::vector<ScaffoldPrediction> oracle_scaffolds(const std::vector<DatasetRecord> &records);

struct RankResult {
  std::vector<ScaffoldPrediction> predictions;
  double spa = 0;
  std::string output;
};
RankResult cmd_rank(const RunConfig &cfg, const Logger &log = nullptr);

GeneratorTrainLog cmd_train_generator(const RunConfig &cfg, const Logger &log = nullptr);

/// Generates for each query record with the given scaffold predictions and
/// scores the results. Incompatible scaffolds give empty outputs.
std::vector<RankedMolecules>
generate_for_records(const GeneratorModel &model, const std::vector<DatasetRecord> &records,
                     const std::vector<ScaffoldPrediction> &scaffolds,
                     const RunConfig &cfg, const Logger &log = nullptr);

struct EvaluateResult {
  EvalReport report;
  std::vector<RankedMolecules> generations;
  std::string table;
  std::vector<std::string> files;
};
EvaluateResult cmd_generate_evaluate(const RunConfig &cfg, const Logger &log = nullptr);

/// One row of the encoding / conditioning ablation grid.
struct AblationRow {
  std::string encoding_label;
  std::string conditioning_label;
  SpectrumEncoding encoding;
  Conditioning conditioning;
  std::optional<AttentionTarget> guidance;  // nullopt: no guidance
};
std::vector<AblationRow> ablation_grid();
GeneratorConfig ablation_config(const GeneratorConfig &base, const AblationRow &row);

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<EvalReport> reports;
  std::string table;
  std::vector<std::string> files;
};
std::string format_ablation_table(const std::vector<AblationRow> &rows,
                                  const std::vector<EvalReport> &reports);
AblationResult cmd_ablate(const RunConfig &cfg, const Logger &log = nullptr);

}  // namespace madgen

#endif  // MADGEN_PIPELINE_H_
