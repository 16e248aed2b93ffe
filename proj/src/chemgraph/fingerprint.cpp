//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "madgen/chemgraph.h"

namespace madgen {

namespace {

inline void hash_combine(std::uint32_t &seed, std::uint32_t value) {
  seed ^= value + 0x9e3779b9U + (seed << 6) + (seed >> 2);
}

std::uint32_t atom_invariant(const MolGraph &mol, int i,
                             const std::vector<bool> &in_ring) {
  const Atom &a = mol.atom(i);
  std::uint32_t h = 0;
  hash_combine(h, static_cast<std::uint32_t>(atomic_number(a.element)));
  hash_combine(h, static_cast<std::uint32_t>(mol.degree(i)));
  hash_combine(h, static_cast<std::uint32_t>(a.implicit_h));
  hash_combine(h, static_cast<std::uint32_t>(a.formal_charge + 16));
  hash_combine(h, in_ring[i] ? 1U : 0U);
  return h;
}

}  // namespace

Fingerprint morgan_fingerprint(const MolGraph &mol) {
  Fingerprint fp;
  const int n = mol.num_atoms();
  if (n == 0)
    return fp;

  const auto in_ring = ring_atoms(mol);
  std::vector<std::uint32_t> inv(n);
  for (int i = 0; i < n; ++i) {
    inv[i] = atom_invariant(mol, i, in_ring);
    fp.bits.set(inv[i] % kFingerprintBits);
  }

  // Bond coverage of each atom's environment, as sorted bond-index lists.
  std::vector<std::vector<int>> env(n);
  std::vector<bool> active(n, true);
  std::set<std::vector<int>> seen;

  for (int layer = 1; layer <= kFingerprintRadius; ++layer) {
    std::vector<std::uint32_t> next(n);
    std::vector<std::vector<int>> next_env(n);
    // (neighbourhood, atom) pairs in a deterministic order so that duplicate
    // environments are resolved the same way for isomorphic inputs.
    std::vector<std::pair<std::uint32_t, int>> emitted;

    for (int i = 0; i < n; ++i) {
      if (!active[i])
        continue;
      std::vector<std::pair<std::uint32_t, std::uint32_t>> nbr;
      std::set<int> cover(env[i].begin(), env[i].end());
      for (const auto &nb: mol.neighbors(i)) {
        nbr.emplace_back(static_cast<std::uint32_t>(mol.bond(nb.bond).type),
                         inv[nb.atom]);
        cover.insert(nb.bond);
        cover.insert(env[nb.atom].begin(), env[nb.atom].end());
      }
      std::sort(nbr.begin(), nbr.end());

      std::uint32_t h = static_cast<std::uint32_t>(layer);
      hash_combine(h, inv[i]);
      for (const auto &[bt, ni]: nbr) {
        hash_combine(h, bt);
        hash_combine(h, ni);
      }
      next[i] = h;
      next_env[i].assign(cover.begin(), cover.end());

      if (next_env[i].size() == env[i].size()) {
        // Environment stopped growing.
        active[i] = false;
        continue;
      }
      emitted.emplace_back(h, i);
    }

    std::sort(emitted.begin(), emitted.end());
    for (const auto &[h, i]: emitted) {
      if (!seen.insert(next_env[i]).second)
        continue;
      fp.bits.set(h % kFingerprintBits);
    }

    for (int i = 0; i < n; ++i) {
      if (active[i]) {
        inv[i] = next[i];
        env[i] = std::move(next_env[i]);
      }
    }
  }
  return fp;
}

}  // namespace madgen
