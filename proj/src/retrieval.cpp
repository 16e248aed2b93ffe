//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/retrieval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "madgen/error.h"
#include "madgen/random.h"

namespace madgen {

void RetrievalConfig::validate() const {
  if (embed_dim < 1 || spectrum_hidden < 1 || graph_hidden < 1 || graph_layers < 1)
    throw ConfigError("retrieval dimensions must be positive");
  if (!(temperature > 0))
    throw ConfigError("temperature must be positive");
  if (!(bin_width > 0) || !(max_mz > bin_width))
    throw ConfigError("invalid binning");
  if (!(intensity_threshold >= 0 && intensity_threshold < 1))
    throw ConfigError("intensity threshold must lie in [0, 1)");
  if (batch_size < 1)
    throw ConfigError("batch size must be positive");
  if (epochs < 1)
    throw ConfigError("epochs must be at least 1");
  if (!(lr > 0) || weight_decay < 0)
    throw ConfigError("invalid optimizer settings");
}

nlohmann::json RetrievalConfig::to_json() const {
  return {
    { "embed_dim", embed_dim },
    { "spectrum_hidden", spectrum_hidden },
    { "graph_hidden", graph_hidden },
    { "graph_layers", graph_layers },
    { "temperature", temperature },
    { "bin_width", bin_width },
    { "max_mz", max_mz },
    { "intensity_threshold", intensity_threshold },
    { "batch_size", batch_size },
    { "epochs", epochs },
    { "lr", lr },
    { "weight_decay", weight_decay },
    { "seed", seed },
  };
}

RetrievalConfig RetrievalConfig::from_json(const nlohmann::json &j) {
  RetrievalConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.spectrum_hidden = j.value("spectrum_hidden", c.spectrum_hidden);
  c.graph_hidden = j.value("graph_hidden", c.graph_hidden);
  c.graph_layers = j.value("graph_layers", c.graph_layers);
  c.temperature = j.value("temperature", c.temperature);
  c.bin_width = j.value("bin_width", c.bin_width);
  c.max_mz = j.value("max_mz", c.max_mz);
  c.intensity_threshold = j.value("intensity_threshold", c.intensity_threshold);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------

double similarity_score(const Embedding &zs, const Embedding &zm, double tau) {
  if (!(tau > 0))
    throw ConfigError("temperature must be positive");
  if (zs.size() != zm.size())
    throw ShapeError("embedding dimensions differ");
  const double ns = zs.norm(), nm = zm.norm();
  if (ns == 0 || nm == 0)
    throw ZeroVectorError("similarity of a zero embedding is undefined");
  return std::exp(zs.dot(zm) / (ns * nm) / tau);
}

nn::Var contrastive_loss(const nn::Var &spec_embs, const nn::Var &scaf_embs,
                         double tau) {
  if (spec_embs.rows() != scaf_embs.rows() || spec_embs.cols() != scaf_embs.cols())
    throw ShapeError("contrastive loss: embedding matrices differ in shape");
  if (spec_embs.rows() < 1)
    throw ShapeError("contrastive loss: empty batch");
  if (!(tau > 0))
    throw ConfigError("temperature must be positive");
  auto s = nn::row_l2_normalize(spec_embs);
  auto m = nn::row_l2_normalize(scaf_embs);
  auto logits = nn::scale(nn::matmul(s, nn::transpose(m)), 1.0 / tau);
  nn::Index diag(static_cast<std::size_t>(spec_embs.rows()));
  for (std::size_t i = 0; i < diag.size(); ++i)
    diag[i] = static_cast<int>(i);
  return nn::scale(nn::mean(nn::pick(nn::log_softmax_rows(logits), diag)), -1.0);
}

// ---------------------------------------------------------------------------

nn::Mat scaffold_atom_features(const MolGraph &g) {
  nn::Mat x = nn::Mat::Zero(g.num_atoms(), kScaffoldAtomFeatures);
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom &a = g.atom(i);
    x(i, heavy_index(a.element)) = 1;
    x(i, 9) = a.aromatic ? 1 : 0;
    x(i, 10) = a.formal_charge;
    x(i, 11 + std::min(a.implicit_h, 4)) = 1;
    x(i, 16 + std::min(g.degree(i), 4)) = 1;
  }
  return x;
}

RetrievalModel::RetrievalModel(const RetrievalConfig &config): config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.seed, "init.retrieval");
  const int bins = static_cast<int>(std::ceil(config_.max_mz / config_.bin_width));
  spectrum_mlp_ = nn::Mlp2(store_, "spectrum", bins, config_.spectrum_hidden,
                           config_.embed_dim, rng);
  const int h = config_.graph_hidden;
  atom_in_ = nn::Linear(store_, "graph.in", kScaffoldAtomFeatures, h, rng);
  for (int l = 0; l < config_.graph_layers; ++l) {
    message_.emplace_back(store_, "graph.msg" + std::to_string(l),
                          h + kNumBondTypes, h, rng);
    self_.emplace_back(store_, "graph.self" + std::to_string(l), h, h, rng);
  }
  graph_head_ = nn::Mlp2(store_, "graph.head", h, h, config_.embed_dim, rng);
  nn::Mat empty(1, config_.embed_dim);
  for (int c = 0; c < config_.embed_dim; ++c)
    empty(0, c) = 2 * uniform01(rng) - 1;
  store_.create("graph.empty", empty);
}

nn::Mat RetrievalModel::binned_rows(const std::vector<const Spectrum *> &spectra) const {
  const int bins = static_cast<int>(std::ceil(config_.max_mz / config_.bin_width));
  nn::Mat x = nn::Mat::Zero(static_cast<Eigen::Index>(spectra.size()), bins);
  for (std::size_t r = 0; r < spectra.size(); ++r) {
    auto b = bin_spectrum(normalize_and_filter(*spectra[r], config_.intensity_threshold),
                          config_.bin_width, config_.max_mz);
    for (int c = 0; c < bins && c < static_cast<int>(b.bins.size()); ++c)
      x(static_cast<Eigen::Index>(r), c) = b.bins[static_cast<std::size_t>(c)];
  }
  return x;
}

nn::Var RetrievalModel::encode_spectra(const std::vector<const Spectrum *> &spectra) const {
  return spectrum_mlp_(nn::constant(binned_rows(spectra)));
}

nn::Var RetrievalModel::encode_scaffolds(
    const std::vector<const MolGraph *> &scaffolds) const {
  // Disjoint union of the non-empty graphs.
  std::vector<nn::Mat> feats;
  nn::Index src, dst, seg, row_of(scaffolds.size());
  std::vector<std::array<double, kNumBondTypes>> edge_feat;
  int offset = 0, graphs = 0;
  for (std::size_t k = 0; k < scaffolds.size(); ++k) {
    const MolGraph &g = *scaffolds[k];
    if (g.empty()) {
      row_of[k] = -1;
      continue;
    }
    row_of[k] = graphs;
    feats.push_back(scaffold_atom_features(g));
    for (int i = 0; i < g.num_atoms(); ++i)
      seg.push_back(graphs);
    for (const auto &b: g.bonds()) {
      std::array<double, kNumBondTypes> f {};
      f[static_cast<std::size_t>(b.type) - 1] = 1;
      for (auto [u, v]: { std::pair { b.begin, b.end }, std::pair { b.end, b.begin } }) {
        src.push_back(offset + u);
        dst.push_back(offset + v);
        edge_feat.push_back(f);
      }
    }
    offset += g.num_atoms();
    ++graphs;
  }

  const nn::Var empty = nn::param(const_cast<nn::ParamStore &>(store_).get("graph.empty"));
  nn::Var pooled_head;
  if (graphs > 0) {
    nn::Mat x(offset, kScaffoldAtomFeatures);
    int r = 0;
    for (const auto &f: feats) {
      x.middleRows(r, f.rows()) = f;
      r += static_cast<int>(f.rows());
    }
    nn::Mat e(static_cast<Eigen::Index>(edge_feat.size()), kNumBondTypes);
    for (std::size_t i = 0; i < edge_feat.size(); ++i)
      for (int c = 0; c < kNumBondTypes; ++c)
        e(static_cast<Eigen::Index>(i), c) = edge_feat[i][static_cast<std::size_t>(c)];
    const nn::Var ev = nn::constant(std::move(e));

    nn::Var h = nn::relu(atom_in_(nn::constant(std::move(x))));
    for (std::size_t l = 0; l < message_.size(); ++l) {
      nn::Var self = self_[l](h);
      if (!src.empty()) {
        auto msg = nn::relu(message_[l](nn::concat_cols({ nn::gather_rows(h, src), ev })));
        self = nn::add(self, nn::scatter_add_rows(msg, dst, offset));
      }
      h = nn::add(h, nn::relu(self));
    }
    pooled_head = graph_head_(nn::segment_max(h, seg, graphs));
  }

  nn::Index pick(scaffolds.size());
  for (std::size_t k = 0; k < scaffolds.size(); ++k)
    pick[k] = row_of[k] >= 0 ? row_of[k] : graphs;
  nn::Var table = graphs > 0 ? nn::concat_rows({ pooled_head, empty }) : empty;
  return nn::gather_rows(table, pick);
}

Embedding RetrievalModel::spectrum_embedding(const Spectrum &s) const {
  nn::NoGradGuard guard;
  return encode_spectra({ &s }).value().row(0).transpose();
}

Embedding RetrievalModel::scaffold_embedding(const MolGraph &scaffold) const {
  nn::NoGradGuard guard;
  return encode_scaffolds({ &scaffold }).value().row(0).transpose();
}

void RetrievalModel::save(std::ostream &out) const {
  nlohmann::json cfg = { { "kind", "retrieval" }, { "config", config_.to_json() } };
  store_.save(out, cfg);
}

RetrievalModel RetrievalModel::load(std::istream &in) {
  std::stringstream buf;
  buf << in.rdbuf();
  std::istringstream head(buf.str());
  auto cfg = nn::read_checkpoint_config(head);
  if (cfg.value("kind", "") != "retrieval")
    throw FormatError("checkpoint is not a retrieval model");
  RetrievalModel m(RetrievalConfig::from_json(cfg.at("config")));
  std::istringstream body(buf.str());
  m.store_.load(body);
  return m;
}

void RetrievalModel::save_file(const std::string &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write checkpoint " + path);
  save(out);
}

RetrievalModel RetrievalModel::load_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open checkpoint " + path);
  return load(in);
}

// ---------------------------------------------------------------------------

RetrievalModel train_retrieval(const std::vector<RetrievalExample> &data,
                               const RetrievalConfig &config, TrainLog *log) {
  config.validate();
  std::map<std::string, MolGraph> graphs;
  for (const auto &ex: data)
    if (!graphs.contains(ex.scaffold_smiles))
      graphs.emplace(ex.scaffold_smiles, scaffold_from_smiles(ex.scaffold_smiles).graph);
  if (graphs.size() < 2)
    throw ConfigError("contrastive training needs at least 2 distinct scaffolds");

  RetrievalModel model(config);
  nn::AdamW opt(model.store(), { config.lr, 0.9, 0.999, 1e-8, config.weight_decay });
  Rng rng = make_rng(config.seed, "data.retrieval");

  auto batch_loss = [&](const std::vector<std::size_t> &idx) {
    std::vector<const Spectrum *> specs;
    std::vector<const MolGraph *> scafs;
    for (auto i: idx) {
      specs.push_back(data[i].spectrum);
      scafs.push_back(&graphs.at(data[i].scaffold_smiles));
    }
    return contrastive_loss(model.encode_spectra(specs),
                            model.encode_scaffolds(scafs), config.temperature);
  };

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  std::vector<std::vector<std::size_t>> batches;
  auto make_batches = [&]() {
    stable_shuffle(order, rng);
    batches.clear();
    for (std::size_t s = 0; s < order.size(); s += bs)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(s + bs, order.size())));
  };

  make_batches();
  if (log) {
    nn::NoGradGuard guard;
    double total = 0;
    for (const auto &b: batches)
      total += batch_loss(b).item();
    log->initial_loss = total / static_cast<double>(batches.size());
    log->epoch_loss.clear();
  }
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0)
      make_batches();
    double total = 0;
    for (const auto &b: batches) {
      model.store().zero_grad();
      auto loss = batch_loss(b);
      loss.backward();
      opt.step();
      total += loss.item();
    }
    if (log)
      log->epoch_loss.push_back(total / static_cast<double>(batches.size()));
  }
  return model;
}

// ---------------------------------------------------------------------------

RankedScaffolds rank_scores(std::string query_id, std::vector<ScoredScaffold> scored) {
  std::sort(scored.begin(), scored.end(), [](const auto &a, const auto &b) {
    if (a.score != b.score)
      return a.score > b.score;
    return a.smiles < b.smiles;
  });
  return { std::move(query_id), std::move(scored) };
}

RankedScaffolds rank_candidates(const RetrievalModel &model, const Spectrum &spec,
                                const std::vector<std::string> &pool_scaffolds) {
  if (pool_scaffolds.empty())
    throw EmptyPoolError("no candidates for " + spec.record_id);
  std::set<std::string> unique(pool_scaffolds.begin(), pool_scaffolds.end());
  std::vector<MolGraph> graphs;
  std::vector<std::string> names;
  for (const auto &s: unique) {
    graphs.push_back(scaffold_from_smiles(s).graph);
    names.push_back(write_smiles(graphs.back()));
  }
  std::vector<const MolGraph *> ptrs;
  for (const auto &g: graphs)
    ptrs.push_back(&g);

  nn::NoGradGuard guard;
  Embedding zs = model.encode_spectra({ &spec }).value().row(0).transpose();
  nn::Mat zm = model.encode_scaffolds(ptrs).value();
  const double ns = zs.norm();
  if (ns == 0)
    throw ZeroVectorError("spectrum embedding is zero");
  std::map<std::string, double> best;
  for (std::size_t k = 0; k < names.size(); ++k) {
    Embedding m = zm.row(static_cast<Eigen::Index>(k)).transpose();
    const double nm = m.norm();
    if (nm == 0)
      throw ZeroVectorError("scaffold embedding is zero for " + names[k]);
    best.emplace(names[k], zs.dot(m) / (ns * nm));
  }
  std::vector<ScoredScaffold> scored;
  for (const auto &[s, c]: best)
    scored.push_back({ s, c });
  return rank_scores(spec.record_id, std::move(scored));
}

std::string aggregate_topk_frequency(const std::vector<RankedScaffolds> &rankings,
                                     int k) {
  if (k < 1)
    throw ConfigError("aggregation k must be at least 1");
  std::map<std::string, std::pair<int, long>> tally;  // count, rank sum
  for (const auto &r: rankings) {
    const auto n = std::min<std::size_t>(r.entries.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
      auto &t = tally[r.entries[i].smiles];
      t.first += 1;
      t.second += static_cast<long>(i);
    }
  }
  if (tally.empty())
    throw EmptyPoolError("no rankings to aggregate");
  auto best = tally.begin();
  for (auto it = tally.begin(); it != tally.end(); ++it) {
    const auto &[c, rs] = it->second;
    if (c > best->second.first || (c == best->second.first && rs < best->second.second))
      best = it;
  }
  return best->first;
}

std::string oracle_scaffold(const std::string &record_id,
                            const std::map<std::string, std::string> &lookup) {
  auto it = lookup.find(record_id);
  if (it == lookup.end())
    throw MissingRecordError("no ground truth for record " + record_id);
  return write_smiles(murcko_scaffold(parse_smiles(it->second)).graph);
}

double spa(const std::vector<std::string> &predicted,
           const std::vector<std::string> &truth) {
  if (predicted.size() != truth.size())
    throw ShapeError("SPA needs one prediction per truth");
  if (truth.empty())
    return 0;
  int hits = 0;
  auto canon = [](const std::string &s) {
    return write_smiles(scaffold_from_smiles(s).graph);
  };
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i] || canon(predicted[i]) == canon(truth[i]))
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace madgen
