//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "madgen/data.h"
#include "madgen/error.h"
#include "madgen/random.h"
#include "madgen/strings.h"

namespace madgen {

DatasetRecord make_record(Spectrum spectrum, std::string_view smiles,
                          std::string split) {
  MolGraph mol;
  try {
    mol = parse_smiles(smiles);
  } catch (const UserError &e) {
    throw DataError("record " + spectrum.record_id + ": " + e.what());
  }
  DatasetRecord r;
  r.smiles = write_smiles(mol);
  r.scaffold_smiles = write_smiles(murcko_scaffold(mol).graph);
  r.split = std::move(split);
  const ChemFormula f = mol.formula();
  if (spectrum.formula.counts().empty()) {
    spectrum.formula = f;
  } else if (heavy_atom_multiset(spectrum.formula) != heavy_atom_multiset(f)) {
    throw DataError("record " + spectrum.record_id + ": formula "
                    + spectrum.formula.to_string()
                    + " does not match molecule " + f.to_string());
  }
  r.spectrum = std::move(spectrum);
  return r;
}

namespace {

const char *kDatasetHeader = "record_id\tsplit\tformula\tsmiles\tscaffold_smiles"
                             "\tadduct\tprecursor_mz\tpeaks";

}  // namespace

void write_dataset_tsv(std::ostream &out,
                       const std::vector<DatasetRecord> &records) {
  out << kDatasetHeader << '\n';
  for (const auto &r: records) {
    const Spectrum &s = r.spectrum;
    out << s.record_id << '\t' << r.split << '\t' << s.formula.to_string()
        << '\t' << r.smiles << '\t' << r.scaffold_smiles << '\t' << s.adduct
        << '\t' << format_double(s.precursor_mz) << '\t'
        << format_peaks(s.peaks) << '\n';
  }
}

std::vector<DatasetRecord> read_dataset_tsv(std::istream &in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kDatasetHeader)
    throw FormatError("dataset TSV must start with the header row");
  std::vector<DatasetRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty())
      continue;
    auto f = split(line, '\t');
    if (f.size() != 8)
      throw FormatError("dataset line " + std::to_string(lineno) + ": expected 8 columns, got "
                        + std::to_string(f.size()));
    std::string spec_line = std::string(f[0]) + '\t' + std::string(f[2]) + '\t'
                            + std::string(f[5]) + '\t' + std::string(f[6]) + '\t'
                            + std::string(f[7]);
    Spectrum s = spectrum_from_tsv(spec_line);
    DatasetRecord r = make_record(std::move(s), f[3], std::string(f[1]));
    if (r.scaffold_smiles != f[4])
      throw DataError("record " + r.id() + ": stored scaffold "
                      + std::string(f[4]) + " differs from computed "
                      + r.scaffold_smiles);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DatasetRecord> read_dataset_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open dataset " + path);
  return read_dataset_tsv(in);
}

void write_dataset_file(const std::string &path,
                        const std::vector<DatasetRecord> &records) {
  std::ofstream out(path);
  if (!out)
    throw DataError("cannot write " + path);
  write_dataset_tsv(out, records);
}

std::vector<DatasetRecord> filter_split(const std::vector<DatasetRecord> &records,
                                        std::string_view split) {
  std::vector<DatasetRecord> out;
  for (const auto &r: records)
    if (r.split == split)
      out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<DatasetRecord> scaffold_split(std::vector<DatasetRecord> records,
                                          std::array<double, 3> ratios,
                                          std::uint64_t seed) {
  double total = 0;
  for (double r: ratios) {
    if (r < 0)
      throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");

  std::map<std::string, std::set<std::string>> mols_by_scaffold;
  for (const auto &r: records)
    mols_by_scaffold[r.scaffold_smiles].insert(r.smiles);
  if (mols_by_scaffold.size() < 3)
    throw InsufficientScaffoldsError(
      "scaffold split needs at least 3 distinct scaffolds, found "
      + std::to_string(mols_by_scaffold.size()));

  std::vector<std::string> order;
  std::size_t n_mols = 0;
  for (const auto &[s, m]: mols_by_scaffold) {
    order.push_back(s);
    n_mols += m.size();
  }
  Rng rng(seed);
  stable_shuffle(order, rng);

  std::map<std::string, int> assigned;
  std::array<double, 3> count = { 0, 0, 0 };
  for (const auto &s: order) {
    int best = 0;
    double best_deficit = -1e300;
    for (int k = 0; k < 3; ++k) {
      if (ratios[k] <= 0)
        continue;
      const double deficit = ratios[k] * static_cast<double>(n_mols) - count[k];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = k;
      }
    }
    assigned[s] = best;
    count[best] += static_cast<double>(mols_by_scaffold[s].size());
  }
  for (auto &r: records)
    r.split = kSplitNames[assigned.at(r.scaffold_smiles)];
  return records;
}

// ---------------------------------------------------------------------------

const std::vector<PoolCandidate> &
CandidatePool::candidates(const std::string &formula) const {
  static const std::vector<PoolCandidate> empty;
  auto it = by_formula.find(formula);
  return it == by_formula.end() ? empty : it->second;
}

CandidatePool build_candidate_pool(const std::vector<DatasetRecord> &records,
                                   const std::vector<std::string> &source_smiles,
                                   int pool_size, std::uint64_t seed) {
  if (pool_size < 0)
    throw ConfigError("pool size must be non-negative");
  std::map<std::string, std::set<std::string>> targets;
  for (const auto &r: records)
    targets[r.spectrum.formula.to_string()].insert(r.smiles);

  std::map<std::string, std::set<std::string>> matches;
  for (const auto &smi: source_smiles) {
    MolGraph mol = parse_smiles(smi);
    const std::string f = mol.formula().to_string();
    auto t = targets.find(f);
    if (t == targets.end())
      continue;
    std::string can = write_smiles(mol);
    if (!t->second.contains(can))
      matches[f].insert(std::move(can));
  }

  CandidatePool pool;
  for (const auto &[f, _]: targets) {
    auto &out = pool.by_formula[f];
    auto m = matches.find(f);
    if (m == matches.end()) {
      std::clog << "pool for " << f << " is empty after removing targets\n";
      continue;
    }
    std::vector<std::string> picked(m->second.begin(), m->second.end());
    if (static_cast<int>(picked.size()) > pool_size) {
      Rng rng = make_rng(seed, f);
      stable_shuffle(picked, rng);
      picked.resize(static_cast<std::size_t>(pool_size));
      std::sort(picked.begin(), picked.end());
    }
    for (auto &smi: picked)
      out.push_back({ smi, write_smiles(murcko_scaffold(parse_smiles(smi)).graph) });
  }
  return pool;
}

void write_pool_tsv(std::ostream &out, const CandidatePool &pool) {
  for (const auto &[f, cands]: pool.by_formula)
    for (const auto &c: cands)
      out << f << '\t' << c.smiles << '\n';
}

CandidatePool read_pool_tsv(std::istream &in) {
  CandidatePool pool;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty())
      continue;
    auto f = split(line, '\t');
    if (f.size() != 2)
      throw FormatError("pool line " + std::to_string(lineno)
                        + ": expected formula and SMILES");
    MolGraph mol = parse_smiles(trim(f[1]));
    const std::string key = parse_formula(trim(f[0])).to_string();
    if (mol.formula().to_string() != key)
      throw DataError("pool line " + std::to_string(lineno) + ": "
                      + std::string(f[1]) + " does not have formula " + key);
    pool.by_formula[key].push_back(
        { write_smiles(mol), write_smiles(murcko_scaffold(mol).graph) });
  }
  for (auto &[_, cands]: pool.by_formula) {
    std::sort(cands.begin(), cands.end(),
              [](const auto &a, const auto &b) { return a.smiles < b.smiles; });
    cands.erase(std::unique(cands.begin(), cands.end(),
                            [](const auto &a, const auto &b) {
                              return a.smiles == b.smiles;
                            }),
                cands.end());
  }
  return pool;
}

CandidatePool read_pool_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open pool file " + path);
  return read_pool_tsv(in);
}

// ---------------------------------------------------------------------------

nlohmann::json DatasetStats::to_json() const {
  return {
    { "n_spectra", n_spectra },
    { "n_molecules", n_molecules },
    { "n_scaffolds", n_scaffolds },
    { "mean_free_atoms", mean_free_atoms },
    { "mean_nodes_per_mol", mean_nodes_per_mol },
    { "mean_edges_per_mol", mean_edges_per_mol },
    { "mean_spectra_per_mol", mean_spectra_per_mol },
    { "mean_nodes_per_scaffold", mean_nodes_per_scaffold },
    { "mean_mols_per_scaffold", mean_mols_per_scaffold },
  };
}

DatasetStats DatasetStats::from_json(const nlohmann::json &j) {
  DatasetStats s;
  s.n_spectra = j.at("n_spectra").get<int>();
  s.n_molecules = j.at("n_molecules").get<int>();
  s.n_scaffolds = j.at("n_scaffolds").get<int>();
  s.mean_free_atoms = j.at("mean_free_atoms").get<double>();
  s.mean_nodes_per_mol = j.at("mean_nodes_per_mol").get<double>();
  s.mean_edges_per_mol = j.at("mean_edges_per_mol").get<double>();
  s.mean_spectra_per_mol = j.at("mean_spectra_per_mol").get<double>();
  s.mean_nodes_per_scaffold = j.at("mean_nodes_per_scaffold").get<double>();
  s.mean_mols_per_scaffold = j.at("mean_mols_per_scaffold").get<double>();
  return s;
}

DatasetStats dataset_stats(const std::vector<DatasetRecord> &records) {
  if (records.empty())
    throw DataError("dataset statistics need at least one record");
  std::map<std::string, std::string> scaffold_of;
  for (const auto &r: records)
    scaffold_of.emplace(r.smiles, r.scaffold_smiles);
  std::set<std::string> scaffolds;
  for (const auto &[_, s]: scaffold_of)
    scaffolds.insert(s);

  DatasetStats st;
  st.n_spectra = static_cast<int>(records.size());
  st.n_molecules = static_cast<int>(scaffold_of.size());
  st.n_scaffolds = static_cast<int>(scaffolds.size());

  long nodes = 0, edges = 0, free = 0;
  for (const auto &[smi, scaf]: scaffold_of) {
    MolGraph m = parse_smiles(smi);
    MolGraph s = scaffold_from_smiles(scaf).graph;
    nodes += m.num_atoms();
    edges += m.num_bonds();
    free += m.num_atoms() - s.num_atoms();
  }
  long scaffold_nodes = 0;
  for (const auto &s: scaffolds)
    scaffold_nodes += scaffold_from_smiles(s).graph.num_atoms();

  const auto nm = static_cast<double>(st.n_molecules);
  st.mean_free_atoms = static_cast<double>(free) / nm;
  st.mean_nodes_per_mol = static_cast<double>(nodes) / nm;
  st.mean_edges_per_mol = static_cast<double>(edges) / nm;
  st.mean_spectra_per_mol = static_cast<double>(st.n_spectra) / nm;
  st.mean_nodes_per_scaffold =
      static_cast<double>(scaffold_nodes) / static_cast<double>(st.n_scaffolds);
  st.mean_mols_per_scaffold = nm / static_cast<double>(st.n_scaffolds);
  return st;
}

}  // namespace madgen
