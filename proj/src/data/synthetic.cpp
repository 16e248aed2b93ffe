//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <set>

#include "madgen/data.h"
#include "madgen/error.h"
#include "madgen/random.h"

namespace madgen {

namespace {

// Ring systems used as scaffolds.
const char *const kTemplates[] = {
  "c1ccccc1",         "c1ccncc1",           "c1cncnc1",
  "c1ccsc1",          "c1ccoc1",            "c1cc[nH]c1",
  "c1cnc[nH]1",       "c1cn[nH]c1",         "c1cscn1",
  "c1cocn1",          "C1CCCCC1",           "C1CCCC1",
  "C1CCC1",           "C1CC1",              "C1CCNCC1",
  "C1COCCN1",         "C1CCOC1",            "C1CNCCN1",
  "C1CCOCC1",         "C1CCNC1",            "C1=CCCCC1",
  "O=C1CCCCC1",       "O=C1CCCN1",          "O=c1cccc[nH]1",
  "c1ccc2ccccc2c1",   "c1ccc2[nH]ccc2c1",   "c1ccc2occc2c1",
  "c1ccc2ncccc2c1",   "c1ccc2[nH]cnc2c1",   "C1CC1c1ccccc1",
  "c1ccc(-c2ccccc2)cc1", "c1ccc(Cc2ccccc2)cc1", "c1ccc(OC2CCCC2)cc1",
};

// Side chains; atom 0 bonds to the ring.
const char *const kSubstituents[] = {
  "C",    "CC",   "CCC",    "C(C)C", "O",     "OC",    "N",     "NC",
  "F",    "Cl",   "Br",     "C=O",   "C#N",   "C(=O)O", "C(=O)C", "CO",
  "C(F)(F)F",     "SC",     "C(=O)N", "OCC",
};

// Side chains allowed in three-substituent combinations.
const char *const kSmallSubstituents[] = { "C", "O", "N", "F", "Cl" };

constexpr int kLibraryMaxHeavy = 18;

MolGraph attach(const MolGraph &core,
                const std::vector<std::pair<int, const MolGraph *>> &subs) {
  MolGraph m = core;
  for (const auto &[site, sub]: subs) {
    const int base = m.num_atoms();
    for (const auto &a: sub->atoms())
      m.add_atom(a);
    for (const auto &b: sub->bonds())
      m.add_bond(base + b.begin, base + b.end, b.type);
    m.add_bond(site, base, BondType::kSingle);
    m.mutable_atom(site).implicit_h -= 1;
    m.mutable_atom(base).implicit_h -= 1;
  }
  return m;
}

struct LibraryEntry {
  std::string scaffold;
  std::string formula;
  int heavy = 0;
};

struct Enumerator {
  std::map<std::string, LibraryEntry> out;
  MolGraph core;
  std::string core_smiles;
  std::vector<int> sites;

  void emit(const std::vector<std::pair<int, const MolGraph *>> &subs) {
    int heavy = core.num_atoms();
    for (const auto &[site, sub]: subs) {
      if (core.atom(site).implicit_h < 1 || sub->atom(0).implicit_h < 1)
        return;
      heavy += sub->num_atoms();
    }
    if (heavy > kLibraryMaxHeavy)
      return;
    MolGraph m = attach(core, subs);
    m.validate();
    if (write_smiles(murcko_scaffold(m).graph) != core_smiles)
      return;
    out.emplace(write_smiles(m),
                LibraryEntry { core_smiles, m.formula().to_string(), heavy });
  }
};

std::map<std::string, LibraryEntry> enumerate_library() {
  std::vector<MolGraph> subs, small;
  for (const char *s: kSubstituents)
    subs.push_back(parse_smiles(s));
  for (const char *s: kSmallSubstituents)
    small.push_back(parse_smiles(s));

  Enumerator en;
  for (const char *t: kTemplates) {
    en.core = parse_smiles(t);
    en.core_smiles = write_smiles(en.core);
    en.sites.clear();
    for (int i = 0; i < en.core.num_atoms(); ++i)
      if (en.core.atom(i).implicit_h > 0)
        en.sites.push_back(i);
    const auto &sites = en.sites;

    for (const auto &a: subs)
      for (int s1: sites)
        en.emit({ { s1, &a } });

    // Unordered substituent pairs over ordered site pairs; a site may carry
    // two substituents when it has two hydrogens.
    for (std::size_t i = 0; i < subs.size(); ++i)
      for (std::size_t j = i; j < subs.size(); ++j)
        for (int s1: sites)
          for (int s2: sites) {
            if (s1 == s2 && en.core.atom(s1).implicit_h < 2)
              continue;
            en.emit({ { s1, &subs[i] }, { s2, &subs[j] } });
          }

    for (std::size_t i = 0; i < small.size(); ++i)
      for (std::size_t j = i; j < small.size(); ++j)
        for (std::size_t k = j; k < small.size(); ++k)
          for (std::size_t x = 0; x < sites.size(); ++x)
            for (std::size_t y = x + 1; y < sites.size(); ++y)
              for (std::size_t z = y + 1; z < sites.size(); ++z) {
                const MolGraph *p[3] = { &small[i], &small[j], &small[k] };
                // Each distinct assignment of the three side chains.
                std::sort(p, p + 3);
                do {
                  en.emit({ { sites[x], p[0] }, { sites[y], p[1] },
                            { sites[z], p[2] } });
                } while (std::next_permutation(p, p + 3));
              }
  }
  return std::move(en.out);
}

}  // namespace

std::vector<std::string> isomer_library() {
  std::vector<std::string> out;
  for (const auto &[smi, _]: enumerate_library())
    out.push_back(smi);
  return out;
}

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig &config) {
  if (config.n_molecules < 3)
    throw ConfigError("synthetic corpus needs at least 3 molecules");
  SyntheticCorpus corpus;
  const auto library = enumerate_library();

  struct Entry {
    std::string smiles, scaffold;
    int heavy;
  };
  std::map<std::string, std::vector<Entry>> by_formula;
  for (const auto &[smi, e]: library) {
    corpus.library.push_back(smi);
    by_formula[e.formula].push_back({ smi, e.scaffold, e.heavy });
  }

  // Eligible targets grouped by scaffold; formulas are used at most once.
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> eligible;
  for (const auto &[f, entries]: by_formula) {
    if (static_cast<int>(entries.size()) > config.max_isomers + 1)
      continue;
    std::map<std::string, int> per_scaffold;
    for (const auto &e: entries)
      per_scaffold[e.scaffold] += 1;
    if (per_scaffold.size() < 2)
      continue;
    for (const auto &e: entries)
      if (per_scaffold[e.scaffold] >= 2 && e.heavy >= config.min_heavy_atoms
          && e.heavy <= config.max_heavy_atoms)
        eligible[e.scaffold].emplace_back(f, e.smiles);
  }

  Rng rng = make_rng(config.seed, "corpus");
  std::vector<std::string> scaffolds;
  for (auto &[s, list]: eligible) {
    scaffolds.push_back(s);
    stable_shuffle(list, rng);
  }

  // Round robin over scaffolds keeps the corpus spread across templates.
  std::set<std::string> used_formulas;
  std::vector<std::string> picked;
  std::map<std::string, std::size_t> cursor;
  bool progress = true;
  while (static_cast<int>(picked.size()) < config.n_molecules && progress) {
    progress = false;
    for (const auto &s: scaffolds) {
      if (static_cast<int>(picked.size()) >= config.n_molecules)
        break;
      auto &list = eligible[s];
      auto &c = cursor[s];
      while (c < list.size() && used_formulas.contains(list[c].first))
        ++c;
      if (c == list.size())
        continue;
      used_formulas.insert(list[c].first);
      picked.push_back(list[c].second);
      ++c;
      progress = true;
    }
  }
  if (static_cast<int>(picked.size()) < config.n_molecules)
    throw ConfigError("isomer library only supports "
                      + std::to_string(picked.size()) + " corpus molecules");

  for (std::size_t i = 0; i < picked.size(); ++i) {
    MolGraph m = parse_smiles(picked[i]);
    Spectrum s = simulate_spectrum(m, "[M+H]+", config.max_peaks,
                                   substream_seed(substream_seed(config.seed, "spectra"), i));
    char id[32];
    std::snprintf(id, sizeof id, "SYN%04zu", i);
    s.record_id = id;
    corpus.records.push_back(make_record(std::move(s), picked[i]));
  }
  corpus.records = scaffold_split(std::move(corpus.records), config.split_ratios,
                                  substream_seed(config.seed, "split"));
  return corpus;
}

}  // namespace madgen
