//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_METRICS_H_
#define MADGEN_METRICS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madgen/chemgraph.h"

namespace madgen {

struct RankedMolecule {
  std::string smiles;  // canonical
  MolGraph graph;
  int frequency = 0;
  double mean_log_likelihood = 0;
};

struct RankedMolecules {
  std::string query_id;
  std::vector<RankedMolecule> entries;  // rank order
  double valid_fraction = 0;
};

/// 1 iff one of the first k entries is the same molecule as truth.
int topk_accuracy(const RankedMolecules &ranked, const MolGraph &truth, int k);

/// Jaccard index of set bits; 1.0 when both are empty.
double tanimoto(const Fingerprint &a, const Fingerprint &b);

inline constexpr std::int64_t kDefaultMcesBudget = 200000;

struct McesResult {
  // Exact distance, or a lower bound when exact == false.
  double distance = 0;
  bool exact = true;
  // Size of the best common edge subgraph found.
  int common_edges = 0;
  std::int64_t nodes_explored = 0;
};

/// |E_a| + |E_b| - 2 |MCES| over element- and bond-type-labelled edges.
McesResult mces_distance(const MolGraph &a, const MolGraph &b,
                         std::int64_t budget = kDefaultMcesBudget);

struct EvalReport {
  int n_queries = 0;
  double top1_accuracy = 0;
  double top10_accuracy = 0;
  double mean_top1_tanimoto = 0;
  double mean_top10_best_tanimoto = 0;
  double mean_top1_mces = 0;
  double mean_top10_best_mces = 0;
  std::optional<double> spa;
  int n_empty = 0;        // queries without any valid output
  int n_inexact_mces = 0; // MCES values that are lower bounds
  std::string label;

  nlohmann::json to_json() const;
};

/// Per-query results aligned with truths. Scaffold lists may be empty (no SPA).
EvalReport evaluate(const std::vector<RankedMolecules> &results,
                    const std::vector<MolGraph> &truths,
                    const std::vector<std::string> &scaffolds_pred = {},
                    const std::vector<std::string> &scaffolds_true = {},
                    std::int64_t mces_budget = kDefaultMcesBudget);

/// Aligned text table with one row per report.
std::string format_report_table(const std::vector<EvalReport> &reports);

}  // namespace madgen

#endif  // MADGEN_METRICS_H_
