//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <sstream>

#include "madgen/error.h"

namespace madgen {

int topk_accuracy(const RankedMolecules &ranked, const MolGraph &truth, int k) {
  if (k < 1)
    throw ConfigError("k must be at least 1");
  const int n = std::min<int>(k, static_cast<int>(ranked.entries.size()));
  for (int i = 0; i < n; ++i)
    if (graphs_equal(ranked.entries[i].graph, truth))
      return 1;
  return 0;
}

double tanimoto(const Fingerprint &a, const Fingerprint &b) {
  const auto uni = (a.bits | b.bits).count();
  if (uni == 0)
    return 1.0;
  return static_cast<double>((a.bits & b.bits).count())
         / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// MCES

namespace {

int edge_label(const MolGraph &g, const Bond &b) {
  int za = atomic_number(g.atom(b.begin).element);
  int zb = atomic_number(g.atom(b.end).element);
  if (za > zb)
    std::swap(za, zb);
  return (za * 128 + zb) * 8 + static_cast<int>(b.type);
}

class McesSearch {
public:
  McesSearch(const MolGraph &a, const MolGraph &b, std::int64_t budget)
      : a_(a), b_(b), budget_(budget) {
    std::map<int, int> ids;
    auto id_of = [&](int label) {
      auto [it, _] = ids.emplace(label, static_cast<int>(ids.size()));
      return it->second;
    };
    for (const auto &bond: a.bonds())
      a_label_.push_back(id_of(edge_label(a, bond)));
    for (const auto &bond: b.bonds())
      b_label_.push_back(id_of(edge_label(b, bond)));
    undecided_a_.assign(ids.size(), 0);
    avail_b_.assign(ids.size(), 0);
    for (int l: a_label_)
      ++undecided_a_[l];
    for (int l: b_label_)
      ++avail_b_[l];
    map_.assign(a.num_atoms(), kUndecided);
    used_b_.assign(b.num_atoms(), false);
    order_ = bfs_order();
  }

  int root_bound() const { return bound(); }

  // Returns false when the budget ran out.
  bool run() {
    search(0);
    return !aborted_;
  }

  int best() const { return best_; }
  std::int64_t explored() const { return explored_; }

private:
  static constexpr int kUndecided = -2;
  static constexpr int kSkipped = -1;

  std::vector<int> bfs_order() const {
    const int n = a_.num_atoms();
    std::vector<int> order;
    std::vector<bool> seen(n, false);
    std::vector<int> by_degree(n);
    for (int i = 0; i < n; ++i)
      by_degree[i] = i;
    std::stable_sort(by_degree.begin(), by_degree.end(), [&](int x, int y) {
      return a_.degree(x) > a_.degree(y);
    });
    for (int root: by_degree) {
      if (seen[root])
        continue;
      std::deque<int> queue { root };
      seen[root] = true;
      while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        order.push_back(u);
        for (const auto &nb: a_.neighbors(u))
          if (!seen[nb.atom]) {
            seen[nb.atom] = true;
            queue.push_back(nb.atom);
          }
      }
    }
    return order;
  }

  int bound() const {
    int ub = current_;
    for (std::size_t l = 0; l < undecided_a_.size(); ++l)
      ub += std::min(undecided_a_[l], avail_b_[l]);
    return ub;
  }

  struct Undo {
    std::vector<int> a_labels;  // undecided counts to restore (+1)
    std::vector<int> b_labels;  // available counts to restore (+1)
    int gained = 0;
  };

  // Applies decision map[u] = v (v may be kSkipped).
  void apply(int u, int v, Undo &undo) {
    map_[u] = v;
    if (v >= 0)
      used_b_[v] = true;
    for (const auto &nb: a_.neighbors(u)) {
      const int w = map_[nb.atom];
      const int l = a_label_[nb.bond];
      if (w == kSkipped)
        continue;  // already removed when w was skipped
      if (v == kSkipped || w >= 0) {
        --undecided_a_[l];
        undo.a_labels.push_back(l);
      }
      if (v >= 0 && w >= 0) {
        const int bb = b_.find_bond(v, w);
        if (bb >= 0 && b_label_[bb] == l)
          ++undo.gained;
      }
    }
    if (v >= 0) {
      for (const auto &nb: b_.neighbors(v))
        if (used_b_[nb.atom]) {
          --avail_b_[b_label_[nb.bond]];
          undo.b_labels.push_back(b_label_[nb.bond]);
        }
    }
    current_ += undo.gained;
  }

  void revert(int u, int v, const Undo &undo) {
    current_ -= undo.gained;
    for (int l: undo.a_labels)
      ++undecided_a_[l];
    for (int l: undo.b_labels)
      ++avail_b_[l];
    if (v >= 0)
      used_b_[v] = false;
    map_[u] = kUndecided;
  }

  int immediate_gain(int u, int v) const {
    int g = 0;
    for (const auto &nb: a_.neighbors(u)) {
      const int w = map_[nb.atom];
      if (w < 0)
        continue;
      const int bb = b_.find_bond(v, w);
      if (bb >= 0 && b_label_[bb] == a_label_[nb.bond])
        ++g;
    }
    return g;
  }

  void search(std::size_t depth) {
    if (aborted_)
      return;
    if (++explored_ > budget_) {
      aborted_ = true;
      return;
    }
    best_ = std::max(best_, current_);
    if (depth == order_.size() || bound() <= best_)
      return;

    const int u = order_[depth];
    std::vector<std::pair<int, int>> cands;
    for (int v = 0; v < b_.num_atoms(); ++v)
      if (!used_b_[v] && b_.atom(v).element == a_.atom(u).element)
        cands.emplace_back(-immediate_gain(u, v), v);
    std::stable_sort(cands.begin(), cands.end());
    cands.emplace_back(0, kSkipped);

    for (const auto &[_, v]: cands) {
      Undo undo;
      apply(u, v, undo);
      if (bound() > best_)
        search(depth + 1);
      revert(u, v, undo);
      if (aborted_)
        return;
    }
  }

  const MolGraph &a_;
  const MolGraph &b_;
  std::int64_t budget_;
  std::vector<int> a_label_, b_label_;
  std::vector<int> undecided_a_, avail_b_;
  std::vector<int> map_;
  std::vector<bool> used_b_;
  std::vector<int> order_;
  int current_ = 0;
  int best_ = 0;
  std::int64_t explored_ = 0;
  bool aborted_ = false;
};

}  // namespace

McesResult mces_distance(const MolGraph &a, const MolGraph &b,
                         std::int64_t budget) {
  // Searching over the smaller vertex set keeps the tree shallow.
  const bool swap = a.num_atoms() > b.num_atoms();
  const MolGraph &x = swap ? b : a;
  const MolGraph &y = swap ? a : b;
  McesSearch search(x, y, budget);
  const int total = a.num_bonds() + b.num_bonds();
  McesResult res;
  res.exact = search.run();
  res.nodes_explored = search.explored();
  res.common_edges = search.best();
  res.distance = res.exact ? total - 2 * search.best()
                           : total - 2 * search.root_bound();
  return res;
}

// ---------------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j {
    { "label", label },
    { "n_queries", n_queries },
    { "top1_accuracy", top1_accuracy },
    { "top10_accuracy", top10_accuracy },
    { "mean_top1_tanimoto", mean_top1_tanimoto },
    { "mean_top10_best_tanimoto", mean_top10_best_tanimoto },
    { "mean_top1_mces", mean_top1_mces },
    { "mean_top10_best_mces", mean_top10_best_mces },
    { "n_empty", n_empty },
    { "n_inexact_mces", n_inexact_mces },
    { "footnote",
      "queries without valid output score accuracy 0, similarity 0 and "
      "MCES = 2 x (truth edge count); inexact MCES values are lower bounds" },
  };
  j["spa"] = spa ? nlohmann::json(*spa) : nlohmann::json(nullptr);
  return j;
}

EvalReport evaluate(const std::vector<RankedMolecules> &results,
                    const std::vector<MolGraph> &truths,
                    const std::vector<std::string> &scaffolds_pred,
                    const std::vector<std::string> &scaffolds_true,
                    std::int64_t mces_budget) {
  if (results.size() != truths.size())
    throw ShapeError("evaluate: results and truths differ in length");
  if (scaffolds_pred.size() != scaffolds_true.size())
    throw ShapeError("evaluate: scaffold lists differ in length");
  EvalReport rep;
  rep.n_queries = static_cast<int>(results.size());
  if (rep.n_queries == 0)
    return rep;

  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto &entries = results[q].entries;
    const MolGraph &truth = truths[q];
    if (entries.empty()) {
      ++rep.n_empty;
      rep.mean_top1_mces += 2.0 * truth.num_bonds();
      rep.mean_top10_best_mces += 2.0 * truth.num_bonds();
      continue;
    }
    rep.top1_accuracy += topk_accuracy(results[q], truth, 1);
    rep.top10_accuracy += topk_accuracy(results[q], truth, 10);
    const auto fp_truth = morgan_fingerprint(truth);
    double best_sim = 0;
    double best_mces = std::numeric_limits<double>::infinity();
    const std::size_t n = std::min<std::size_t>(10, entries.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double sim = tanimoto(morgan_fingerprint(entries[i].graph), fp_truth);
      const auto m = mces_distance(entries[i].graph, truth, mces_budget);
      rep.n_inexact_mces += m.exact ? 0 : 1;
      if (i == 0) {
        rep.mean_top1_tanimoto += sim;
        rep.mean_top1_mces += m.distance;
      }
      best_sim = std::max(best_sim, sim);
      best_mces = std::min(best_mces, m.distance);
    }
    rep.mean_top10_best_tanimoto += best_sim;
    rep.mean_top10_best_mces += best_mces;
  }
  const double nq = rep.n_queries;
  rep.top1_accuracy /= nq;
  rep.top10_accuracy /= nq;
  rep.mean_top1_tanimoto /= nq;
  rep.mean_top10_best_tanimoto /= nq;
  rep.mean_top1_mces /= nq;
  rep.mean_top10_best_mces /= nq;

  if (!scaffolds_true.empty()) {
    int hit = 0;
    for (std::size_t i = 0; i < scaffolds_true.size(); ++i)
      hit += scaffolds_pred[i] == scaffolds_true[i];
    rep.spa = hit / static_cast<double>(scaffolds_true.size());
  }
  return rep;
}

std::string format_report_table(const std::vector<EvalReport> &reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-18s %7s | %9s %7s %8s | %9s %7s %8s\n",
                "", "", "Top1", "", "", "Top10", "", "");
  out << line;
  std::snprintf(line, sizeof(line), "%-18s %7s | %9s %7s %8s | %9s %7s %8s\n",
                "Retriever", "SPA", "Accuracy", "Sim.", "MCES", "Accuracy",
                "Sim.", "MCES");
  out << line;
  out << std::string(86, '-') << '\n';
  bool inexact = false;
  for (const auto &r: reports) {
    char spa[16];
    if (r.spa)
      std::snprintf(spa, sizeof(spa), "%.1f%%", 100 * *r.spa);
    else
      std::snprintf(spa, sizeof(spa), "-");
    inexact = inexact || r.n_inexact_mces > 0;
    const char *mark = r.n_inexact_mces > 0 ? "*" : "";
    char m1[24], m10[24];
    std::snprintf(m1, sizeof(m1), "%.2f%s", r.mean_top1_mces, mark);
    std::snprintf(m10, sizeof(m10), "%.2f%s", r.mean_top10_best_mces, mark);
    std::snprintf(line, sizeof(line),
                  "%-18s %7s | %8.1f%% %7.2f %8s | %8.1f%% %7.2f %8s\n",
                  r.label.c_str(), spa, 100 * r.top1_accuracy,
                  r.mean_top1_tanimoto, m1, 100 * r.top10_accuracy,
                  r.mean_top10_best_tanimoto, m10);
    out << line;
  }
  out << "Empty outputs score accuracy 0, similarity 0, MCES 2x truth edges.\n";
  if (inexact)
    out << "* some MCES values are lower bounds (search budget exceeded).\n";
  return out.str();
}

}  // namespace madgen
