//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_DATA_H_
#define MADGEN_DATA_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "madgen/chemgraph.h"
#include "madgen/spectra.h"

namespace madgen {

struct DatasetRecord {
  Spectrum spectrum;  // spectrum.record_id is the record id
  std::string smiles;           // canonical
  std::string scaffold_smiles;  // canonical, "" for acyclic molecules
  std::string split;            // train | val | test

  const std::string &id() const { return spectrum.record_id; }
};

/// Fills smiles and scaffold_smiles from a SMILES string and checks the
/// spectrum formula against the molecule. Throws DataError on mismatch.
DatasetRecord make_record(Spectrum spectrum, std::string_view smiles,
                          std::string split = "train");

// Columns: record_id, split, formula, smiles, scaffold_smiles, adduct,
// precursor_mz, peaks.
void write_dataset_tsv(std::ostream &out,
                       const std::vector<DatasetRecord> &records);
std::vector<DatasetRecord> read_dataset_tsv(std::istream &in);
std::vector<DatasetRecord> read_dataset_file(const std::string &path);
void write_dataset_file(const std::string &path,
                        const std::vector<DatasetRecord> &records);

std::vector<DatasetRecord> filter_split(const std::vector<DatasetRecord> &records,
                                        std::string_view split);

inline constexpr std::array<double, 3> kDefaultSplitRatios = { 0.8, 0.1, 0.1 };
inline constexpr std::array<const char *, 3> kSplitNames = { "train", "val",
                                                             "test" };

/// Scaffold-disjoint relabelling. Scaffolds are shuffled with the seed and
/// each goes to the split furthest below its molecule-count target.
std::vector<DatasetRecord>
scaffold_split(std::vector<DatasetRecord> records,
               std::array<double, 3> ratios = kDefaultSplitRatios,
               std::uint64_t seed = 0);

struct PoolCandidate {
  std::string smiles;
  std::string scaffold_smiles;
};

struct CandidatePool {
  // Formula (Hill notation) -> candidates, sorted by SMILES.
  std::map<std::string, std::vector<PoolCandidate>> by_formula;

  // Empty when the formula has no candidates.
  const std::vector<PoolCandidate> &candidates(const std::string &formula) const;
};

/// One pool per formula among the records; every record molecule with that
/// formula is excluded.
CandidatePool build_candidate_pool(const std::vector<DatasetRecord> &records,
                                   const std::vector<std::string> &source_smiles,
                                   int pool_size, std::uint64_t seed);

// Rows: formula \t SMILES.
void write_pool_tsv(std::ostream &out, const CandidatePool &pool);
CandidatePool read_pool_tsv(std::istream &in);
CandidatePool read_pool_file(const std::string &path);

struct DatasetStats {
  int n_spectra = 0;
  int n_molecules = 0;
  int n_scaffolds = 0;
  double mean_free_atoms = 0;
  double mean_nodes_per_mol = 0;
  double mean_edges_per_mol = 0;
  double mean_spectra_per_mol = 0;
  double mean_nodes_per_scaffold = 0;
  double mean_mols_per_scaffold = 0;

  nlohmann::json to_json() const;
  static DatasetStats from_json(const nlohmann::json &j);
};

/// Molecules are distinct canonical SMILES; the acyclic (empty) scaffold
/// counts as one scaffold.
DatasetStats dataset_stats(const std::vector<DatasetRecord> &records);

inline constexpr int kDefaultMaxPeaks = 32;

/// Fragments from every single and double cleavage of acyclic bonds.
Spectrum simulate_spectrum(const MolGraph &mol,
                           const std::string &adduct = "[M+H]+",
                           int max_peaks = kDefaultMaxPeaks,
                           std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticConfig {
  int n_molecules = 200;
  int min_heavy_atoms = 8;
  int max_heavy_atoms = 16;
  // Formulas with more library isomers than this are not used as targets.
  int max_isomers = 64;
  int max_peaks = kDefaultMaxPeaks;
  std::array<double, 3> split_ratios = kDefaultSplitRatios;
  std::uint64_t seed = 0;
};

/// Every molecule the ring templates and substituents produce, canonical and
/// sorted.
std::vector<std::string> isomer_library();

struct SyntheticCorpus {
  std::vector<DatasetRecord> records;
  std::vector<std::string> library;
};

/// Picks n_molecules library members with pairwise distinct formulas, each
/// sharing its formula with at least one other library molecule of the same
/// scaffold and one of a different scaffold, then simulates one spectrum per
/// molecule and splits by scaffold.
SyntheticCorpus make_synthetic_corpus(const SyntheticConfig &config);

}  // namespace madgen

#endif  // MADGEN_DATA_H_
