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

// Components after removing the given bonds, as sorted atom lists.
std::vector<std::vector<int>> components_without(const MolGraph &mol,
                                                 const std::vector<int> &cut) {
  std::vector<int> comp(mol.num_atoms(), -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < mol.num_atoms(); ++s) {
    if (comp[s] >= 0)
      continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<int> stack = { s };
    comp[s] = id;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      out[id].push_back(u);
      for (const auto &nb: mol.neighbors(u)) {
        if (comp[nb.atom] >= 0
            || std::find(cut.begin(), cut.end(), nb.bond) != cut.end())
          continue;
        comp[nb.atom] = id;
        stack.push_back(nb.atom);
      }
    }
    std::sort(out[id].begin(), out[id].end());
  }
  return out;
}

// Fragment mass from element counts in a fixed order, so equal compositions
// give bit-identical masses.
double fragment_mass(const MolGraph &mol, const std::vector<int> &atoms) {
  std::map<Element, int> counts;
  for (int a: atoms) {
    counts[mol.atom(a).element] += 1;
    counts[Element::H] += mol.atom(a).implicit_h;
  }
  return ChemFormula(counts).monoisotopic_mass();
}

}  // namespace

Spectrum simulate_spectrum(const MolGraph &mol, const std::string &adduct,
                           int max_peaks, std::uint64_t seed) {
  if (adduct != "[M+H]+")
    throw UnsupportedFeatureError("simulator only supports [M+H]+, got " + adduct);
  if (max_peaks < 1)
    throw ConfigError("max_peaks must be at least 1");
  if (mol.empty())
    throw DataError("cannot simulate a spectrum for an empty molecule");
  if (connected_components(mol).size() != 1)
    throw DataError("simulator needs a connected molecule");

  const auto in_ring = ring_bonds(mol);
  std::vector<int> acyclic;
  for (int b = 0; b < mol.num_bonds(); ++b)
    if (!in_ring[b])
      acyclic.push_back(b);

  std::set<std::vector<int>> fragments;
  for (std::size_t i = 0; i < acyclic.size(); ++i) {
    for (auto &c: components_without(mol, { acyclic[i] }))
      fragments.insert(std::move(c));
    for (std::size_t j = i + 1; j < acyclic.size(); ++j)
      for (auto &c: components_without(mol, { acyclic[i], acyclic[j] }))
        fragments.insert(std::move(c));
  }

  Rng rng(seed);
  auto noisy = [&](double base) { return base * (1 + 0.1 * (2 * uniform01(rng) - 1)); };
  const double n = mol.num_atoms();

  Spectrum spec;
  spec.adduct = adduct;
  spec.formula = mol.formula();
  spec.precursor_mz = spec.formula.monoisotopic_mass() + kProtonMass;
  std::vector<Peak> peaks;
  peaks.push_back({ spec.precursor_mz, noisy(1.0) });
  for (const auto &f: fragments)
    peaks.push_back({ fragment_mass(mol, f) + kProtonMass,
                      noisy(static_cast<double>(f.size()) / n) });
  canonicalize_peaks(peaks);

  if (static_cast<int>(peaks.size()) > max_peaks) {
    auto prec = std::find_if(peaks.begin(), peaks.end(), [&](const Peak &p) {
      return p.mz == spec.precursor_mz;
    });
    const Peak keep = *prec;
    peaks.erase(prec);
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak &a, const Peak &b) {
      return a.intensity > b.intensity;
    });
    peaks.resize(static_cast<std::size_t>(max_peaks - 1));
    peaks.push_back(keep);
    canonicalize_peaks(peaks);
  }
  spec.peaks = std::move(peaks);
  return spec;
}

}  // namespace madgen
