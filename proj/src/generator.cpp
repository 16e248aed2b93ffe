//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/generator.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "madgen/error.h"

namespace madgen {

using nn::Mat;
using nn::Var;

std::string to_string(SpectrumEncoding e) {
  switch (e) {
  case SpectrumEncoding::kBinnedMlp: return "binned_mlp";
  case SpectrumEncoding::kTokens: return "tokens";
  case SpectrumEncoding::kTokensSelfAttention: return "tokens_self_attention";
  }
  return "?";
}

std::string to_string(Conditioning c) {
  return c == Conditioning::kConcatenation ? "concatenation" : "cross_attention";
}

std::string to_string(AttentionTarget t) {
  switch (t) {
  case AttentionTarget::kNode: return "node";
  case AttentionTarget::kEdge: return "edge";
  case AttentionTarget::kBoth: return "both";
  }
  return "?";
}

SpectrumEncoding parse_encoding(std::string_view s) {
  if (s == "binned_mlp")
    return SpectrumEncoding::kBinnedMlp;
  if (s == "tokens")
    return SpectrumEncoding::kTokens;
  if (s == "tokens_self_attention")
    return SpectrumEncoding::kTokensSelfAttention;
  throw ConfigError("unknown spectrum encoding '" + std::string(s) + "'");
}

Conditioning parse_conditioning(std::string_view s) {
  if (s == "concatenation")
    return Conditioning::kConcatenation;
  if (s == "cross_attention")
    return Conditioning::kCrossAttention;
  throw ConfigError("unknown conditioning '" + std::string(s) + "'");
}

AttentionTarget parse_attention_target(std::string_view s) {
  if (s == "node")
    return AttentionTarget::kNode;
  if (s == "edge")
    return AttentionTarget::kEdge;
  if (s == "both")
    return AttentionTarget::kBoth;
  throw ConfigError("unknown attention target '" + std::string(s) + "'");
}

void GeneratorConfig::validate() const {
  if (node_dim < 1 || edge_dim < 1 || token_dim < 2 || layers < 1 || heads < 1
      || node_ffn < 1 || edge_ffn < 1 || spectrum_hidden < 1 || time_dim < 1)
    throw ConfigError("generator dimensions must be positive");
  if (node_dim % heads || edge_dim % heads || token_dim % heads || token_dim % 2)
    throw ConfigError("node, edge and token dims must be divisible by the head count");
  if (max_tokens < 1)
    throw ConfigError("max_tokens must be positive");
  if (!(bin_width > 0) || !(max_mz > bin_width))
    throw ConfigError("invalid binning");
  if (!(cond_dropout >= 0 && cond_dropout < 1))
    throw ConfigError("condition dropout must lie in [0, 1)");
  if (steps < 1)
    throw ConfigError("steps must be positive");
  if (batch_size < 1 || train_steps < 0)
    throw ConfigError("batch_size must be positive and train_steps non-negative");
  if (!(lr > 0) || weight_decay < 0 || grad_clip < 0)
    throw ConfigError("invalid optimizer settings");
  if (lr_schedule != "constant" && lr_schedule != "cosine")
    throw ConfigError("lr_schedule must be constant or cosine");
}

double GeneratorConfig::lr_at(int step) const {
  if (lr_schedule == "constant" || train_steps <= 1)
    return lr;
  const int warmup = std::max(1, train_steps / 20);
  if (step < warmup)
    return lr * (step + 1) / warmup;
  const double progress = static_cast<double>(step - warmup) / std::max(1, train_steps - warmup);
  return lr * 0.5 * (1 + std::cos(std::numbers::pi * progress));
}

nlohmann::json GeneratorConfig::to_json() const {
  return {
    { "node_dim", node_dim },
    { "edge_dim", edge_dim },
    { "token_dim", token_dim },
    { "heads", heads },
    { "layers", layers },
    { "node_ffn", node_ffn },
    { "edge_ffn", edge_ffn },
    { "spectrum_hidden", spectrum_hidden },
    { "time_dim", time_dim },
    { "max_tokens", max_tokens },
    { "bin_width", bin_width },
    { "max_mz", max_mz },
    { "encoding", to_string(encoding) },
    { "conditioning", to_string(conditioning) },
    { "attention_target", to_string(attention_target) },
    { "classifier_free", classifier_free },
    { "cond_dropout", cond_dropout },
    { "steps", steps },
    { "batch_size", batch_size },
    { "train_steps", train_steps },
    { "lr", lr },
    { "lr_schedule", lr_schedule },
    { "weight_decay", weight_decay },
    { "grad_clip", grad_clip },
    { "seed", seed },
  };
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json &j) {
  GeneratorConfig c;
  if (!j.is_object())
    throw ConfigError("generator config must be a JSON object");
  try {
    c.node_dim = j.value("node_dim", c.node_dim);
    c.edge_dim = j.value("edge_dim", c.edge_dim);
    c.token_dim = j.value("token_dim", c.token_dim);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.node_ffn = j.value("node_ffn", c.node_ffn);
    c.edge_ffn = j.value("edge_ffn", c.edge_ffn);
    c.spectrum_hidden = j.value("spectrum_hidden", c.spectrum_hidden);
    c.time_dim = j.value("time_dim", c.time_dim);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.bin_width = j.value("bin_width", c.bin_width);
    c.max_mz = j.value("max_mz", c.max_mz);
    if (j.contains("encoding"))
      c.encoding = parse_encoding(j.at("encoding").get<std::string>());
    if (j.contains("conditioning"))
      c.conditioning = parse_conditioning(j.at("conditioning").get<std::string>());
    if (j.contains("attention_target"))
      c.attention_target = parse_attention_target(j.at("attention_target").get<std::string>());
    c.classifier_free = j.value("classifier_free", c.classifier_free);
    c.cond_dropout = j.value("cond_dropout", c.cond_dropout);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.train_steps = j.value("train_steps", c.train_steps);
    c.lr = j.value("lr", c.lr);
    c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("bad generator config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Layout

GenerationLayout make_layout(const MolGraph &scaffold, const ChemFormula &formula) {
  Scaffold sc;
  sc.graph = scaffold;
  const AtomMultiset extra = free_atoms(formula, sc);  // CompositionError

  GenerationLayout out;
  out.scaffold = scaffold;
  out.n_scaffold = scaffold.num_atoms();
  for (const auto &a: scaffold.atoms()) {
    out.atoms.push_back(a);
    out.scaffold_atom.push_back(1);
  }
  for (const auto &[e, c]: extra)  // map order: by element
    for (int i = 0; i < c; ++i) {
      Atom a;
      a.element = e;
      out.atoms.push_back(a);
      out.scaffold_atom.push_back(0);
    }

  out.start = EdgeStateTensor(out.num_atoms());
  for (int p = 0; p < out.start.num_pairs(); ++p) {
    auto [i, j] = out.start.pair_atoms(p);
    if (out.scaffold_atom[i] && out.scaffold_atom[j]) {
      auto b = scaffold.bond_between(i, j);
      out.start.set_state(p, b ? static_cast<int>(*b) : 0);
      out.start.set_frozen(p, true);
    }
  }
  return out;
}

std::optional<MolGraph> layout_to_molecule(const GenerationLayout &layout,
                                           const EdgeStateTensor &state) {
  const int n = layout.num_atoms();
  if (state.num_atoms() != n)
    throw ShapeError("edge state does not match the layout");
  MolGraph mol;
  for (const auto &a: layout.atoms)
    mol.add_atom(a);
  std::vector<int> added(n, 0);
  for (int p = 0; p < state.num_pairs(); ++p) {
    const int c = state.state(p);
    if (c == 0)
      continue;
    auto [i, j] = state.pair_atoms(p);
    const auto type = static_cast<BondType>(c);
    if (!state.frozen(p)) {
      if (type == BondType::kAromatic)
        return std::nullopt;
      added[i] += valence_contribution(type);
      added[j] += valence_contribution(type);
    }
    mol.add_bond(i, j, type);
  }
  for (int i = 0; i < n; ++i) {
    Atom &a = mol.mutable_atom(i);
    int h;
    if (layout.scaffold_atom[i])
      h = layout.atoms[i].implicit_h - added[i];
    else
      h = saturating_hydrogens(a.element, mol.bond_valence(i));
    if (h < 0)
      return std::nullopt;
    a.implicit_h = h;
  }
  try {
    mol.validate();
  } catch (const ValenceError &) {
    return std::nullopt;
  }
  return mol;
}

Mat cfg_logits(const Mat &cond, const Mat &uncond, double scale) {
  if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols())
    throw ShapeError("conditional and unconditional logits differ in shape");
  if (scale == 0)
    return cond;
  return (1 + scale) * cond - scale * uncond;
}

PreparedExample prepare_example(const MolGraph &mol, const ChemFormula &formula) {
  if (mol.empty())
    throw DataError("empty training molecule");
  if (mol.composition() != heavy_atom_multiset(formula))
    throw DataError("molecule " + write_smiles(mol) + " does not match formula "
                    + formula.to_string());
  Scaffold sc = murcko_scaffold(mol);
  PreparedExample ex { make_layout(sc.graph, formula), {} };

  // Map molecule atoms onto layout slots.
  const int n = mol.num_atoms();
  std::vector<int> slot(n, -1);
  for (int i = 0; i < sc.graph.num_atoms(); ++i)
    slot[sc.parent_atom_index[i]] = i;
  std::vector<int> rest;
  for (int i = 0; i < n; ++i)
    if (slot[i] < 0)
      rest.push_back(i);
  std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
    return mol.atom(a).element < mol.atom(b).element;
  });
  for (std::size_t k = 0; k < rest.size(); ++k) {
    const int s = ex.layout.n_scaffold + static_cast<int>(k);
    if (ex.layout.atoms[s].element != mol.atom(rest[k]).element)
      throw DataError("free atoms of " + write_smiles(mol) + " do not match formula");
    slot[rest[k]] = s;
  }

  ex.target = ex.layout.start;
  for (int p = 0; p < ex.target.num_pairs(); ++p)
    if (!ex.target.frozen(p))
      ex.target.set_state(p, 0);
  for (const auto &b: mol.bonds()) {
    const int p = ex.target.pair_index(slot[b.begin], slot[b.end]);
    if (ex.target.frozen(p)) {
      if (ex.target.state(p) != static_cast<int>(b.type))
        throw DataError("scaffold bond mismatch in " + write_smiles(mol));
    } else {
      ex.target.set_state(p, static_cast<int>(b.type));
    }
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Model

namespace {

constexpr int kFourierTerms = 16;
constexpr int kMzFeatures = 2 * kFourierTerms + 1;
constexpr int kIntensityFeatures = 2;

// Periods spread geometrically from 0.5 to 1000 Da.
double fourier_period(int k) {
  return 0.5 * std::pow(2000.0, static_cast<double>(k) / (kFourierTerms - 1));
}

Mat node_features(const GenerationLayout &layout) {
  Mat x = Mat::Zero(layout.num_atoms(), kGeneratorNodeFeatures);
  for (int i = 0; i < layout.num_atoms(); ++i) {
    const Atom &a = layout.atoms[i];
    x(i, heavy_index(a.element)) = 1;
    x(i, kNumHeavyElements) = a.formal_charge;
    x(i, kNumHeavyElements + 1) = layout.scaffold_atom[i] ? 1 : 0;
    x(i, kNumHeavyElements + 2) = a.aromatic ? 1 : 0;
    // Substitutable hydrogens of scaffold atoms.
    x(i, kNumHeavyElements + 3) = layout.scaffold_atom[i] ? a.implicit_h : 0;
  }
  return x;
}

bool attends_nodes(const GeneratorConfig &c) {
  return c.conditioning == Conditioning::kCrossAttention
         && c.attention_target != AttentionTarget::kEdge;
}

bool attends_edges(const GeneratorConfig &c) {
  return c.conditioning == Conditioning::kCrossAttention
         && c.attention_target != AttentionTarget::kNode;
}

// Multi-head attention along an explicit (query row, key row) list.
Var list_attention(const Var &q, const Var &k, const Var &v, const nn::Index &qi,
                   const nn::Index &ki, int n_query, int heads) {
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols() / heads));
  Var score = nn::scale(nn::head_dot(nn::gather_rows(q, qi), nn::gather_rows(k, ki), heads), s);
  Var att = nn::segment_softmax(score, qi, n_query);
  Var msg = nn::head_scale(nn::gather_rows(v, ki), att, heads);
  return nn::scatter_add_rows(msg, qi, n_query);
}

}  // namespace

GeneratorModel::GeneratorModel(const GeneratorConfig &config): config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.seed, "init.generator");
  const auto &c = config_;
  const int dt = c.token_dim, dn = c.node_dim, de = c.edge_dim;

  if (c.encoding == SpectrumEncoding::kBinnedMlp) {
    const int bins = static_cast<int>(std::ceil(c.max_mz / c.bin_width));
    binned_mlp_ = nn::Mlp2(store_, "spectrum.binned", bins, c.spectrum_hidden, dt, rng);
  } else {
    mz_mlp_ = nn::Mlp2(store_, "spectrum.mz", kMzFeatures, c.spectrum_hidden, dt / 2, rng);
    intensity_mlp_ = nn::Mlp2(store_, "spectrum.intensity", kIntensityFeatures,
                              c.spectrum_hidden, dt - dt / 2, rng);
    if (c.encoding == SpectrumEncoding::kTokensSelfAttention) {
      sa_q_ = nn::Linear(store_, "spectrum.attn.q", dt, dt, rng);
      sa_k_ = nn::Linear(store_, "spectrum.attn.k", dt, dt, rng);
      sa_v_ = nn::Linear(store_, "spectrum.attn.v", dt, dt, rng);
      sa_o_ = nn::Linear(store_, "spectrum.attn.o", dt, dt, rng);
      sa_norm_ = nn::LayerNorm(store_, "spectrum.attn.norm", dt);
    }
  }
  null_token_ = &store_.create("spectrum.null", nn::xavier(1, dt, rng));
  time_mlp_ = nn::Mlp2(store_, "time", 1, c.time_dim, c.time_dim, rng);

  const int node_in = kGeneratorNodeFeatures + c.time_dim
                      + (c.conditioning == Conditioning::kConcatenation ? dt : 0);
  node_in_ = nn::Linear(store_, "node.in", node_in, dn, rng);
  edge_in_ = nn::Linear(store_, "edge.in", kGeneratorEdgeFeatures, de, rng);

  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    GeneratorLayer L;
    L.q = nn::Linear(store_, p + "q", dn, dn, rng);
    L.k = nn::Linear(store_, p + "k", dn, dn, rng);
    L.v = nn::Linear(store_, p + "v", dn, dn, rng);
    L.o = nn::Linear(store_, p + "o", dn, dn, rng);
    L.edge_bias = nn::Linear(store_, p + "edge_bias", de, c.heads, rng);
    L.node_attn_norm = nn::LayerNorm(store_, p + "node_attn_norm", dn);
    L.edge_update = nn::Linear(store_, p + "edge_update", de + 2 * dn, de, rng);
    L.edge_update_norm = nn::LayerNorm(store_, p + "edge_update_norm", de);
    if (attends_nodes(c)) {
      L.nq = nn::Linear(store_, p + "cross.node.q", dn, dn, rng);
      L.nk = nn::Linear(store_, p + "cross.node.k", dt, dn, rng);
      L.nv = nn::Linear(store_, p + "cross.node.v", dt, dn, rng);
      L.no = nn::Linear(store_, p + "cross.node.o", dn, dn, rng);
      L.node_cross_norm = nn::LayerNorm(store_, p + "cross.node.norm", dn);
    }
    if (attends_edges(c)) {
      L.eq = nn::Linear(store_, p + "cross.edge.q", de, de, rng);
      L.ek = nn::Linear(store_, p + "cross.edge.k", dt, de, rng);
      L.ev = nn::Linear(store_, p + "cross.edge.v", dt, de, rng);
      L.eo = nn::Linear(store_, p + "cross.edge.o", de, de, rng);
      L.edge_cross_norm = nn::LayerNorm(store_, p + "cross.edge.norm", de);
    }
    L.node_ffn = nn::Mlp2(store_, p + "node_ffn", dn, c.node_ffn, dn, rng);
    L.edge_ffn = nn::Mlp2(store_, p + "edge_ffn", de, c.edge_ffn, de, rng);
    L.node_ffn_norm = nn::LayerNorm(store_, p + "node_ffn_norm", dn);
    L.edge_ffn_norm = nn::LayerNorm(store_, p + "edge_ffn_norm", de);
    layers_.push_back(L);
  }
  out_ = nn::Mlp2(store_, "out", de + dn, de, kEdgeClasses, rng);
}

PeakTokens GeneratorModel::tokenize_peaks(const Spectrum &spec) const {
  const Spectrum s = normalize_and_filter(spec, 0.0);  // EmptySpectrumError
  std::vector<Peak> peaks = s.peaks;
  if (static_cast<int>(peaks.size()) > config_.max_tokens) {
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak &a, const Peak &b) {
      return a.intensity > b.intensity;
    });
    peaks.resize(config_.max_tokens);
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak &a, const Peak &b) { return a.mz < b.mz; });
  }

  if (config_.encoding == SpectrumEncoding::kBinnedMlp) {
    Spectrum kept = s;
    kept.peaks = peaks;
    const BinnedSpectrum b = bin_spectrum(kept, config_.bin_width, config_.max_mz);
    Mat row(1, static_cast<Eigen::Index>(b.bins.size()));
    for (std::size_t i = 0; i < b.bins.size(); ++i)
      row(0, static_cast<Eigen::Index>(i)) = b.bins[i];
    return { binned_mlp_(nn::constant(row)) };
  }

  const int k = static_cast<int>(peaks.size());
  Mat mz(k, kMzFeatures), in(k, kIntensityFeatures);
  for (int i = 0; i < k; ++i) {
    const double m = peaks[i].mz;
    for (int f = 0; f < kFourierTerms; ++f) {
      const double w = 2 * std::numbers::pi * m / fourier_period(f);
      mz(i, 2 * f) = std::sin(w);
      mz(i, 2 * f + 1) = std::cos(w);
    }
    mz(i, 2 * kFourierTerms) = m / config_.max_mz;
    in(i, 0) = peaks[i].intensity;
    in(i, 1) = std::sqrt(peaks[i].intensity);
  }
  Var tokens = nn::concat_cols({ mz_mlp_(nn::constant(mz)), intensity_mlp_(nn::constant(in)) });
  if (config_.encoding == SpectrumEncoding::kTokensSelfAttention) {
    nn::Index qi, ki;
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        qi.push_back(a);
        ki.push_back(b);
      }
    Var att = list_attention(sa_q_(tokens), sa_k_(tokens), sa_v_(tokens), qi, ki, k,
                             config_.heads);
    tokens = sa_norm_(nn::add(tokens, sa_o_(att)));
  }
  return { tokens };
}

PeakTokens GeneratorModel::null_tokens() const {
  return { nn::param(*null_token_) };
}

Var GeneratorModel::spectrum_vector(const PeakTokens &tokens) const {
  const int k = tokens.count();
  return nn::matmul(nn::constant(Mat::Constant(1, k, 1.0 / k)), tokens.tokens);
}

Var GeneratorModel::predict_endpoint(const std::vector<Query> &batch) const {
  const auto &c = config_;
  const int H = c.heads;

  // Token blocks shared between queries that use the same tokens.
  std::vector<const PeakTokens *> blocks;
  std::unordered_map<const PeakTokens *, int> block_of;
  std::vector<int> block_offset;
  int n_tokens = 0;
  for (const auto &q: batch) {
    if (!q.tokens)
      throw ShapeError("query without tokens");
    if (block_of.emplace(q.tokens, static_cast<int>(blocks.size())).second) {
      blocks.push_back(q.tokens);
      block_offset.push_back(n_tokens);
      n_tokens += q.tokens->count();
    }
  }

  int N = 0, P = 0;
  for (const auto &q: batch) {
    if (q.state->num_atoms() != q.layout->num_atoms())
      throw ShapeError("edge state does not match the layout");
    N += q.layout->num_atoms();
    P += q.state->num_pairs();
  }
  Mat xn(N, kGeneratorNodeFeatures), tn(N, 1), xe = Mat::Zero(P, kGeneratorEdgeFeatures);
  nn::Index node_block(N), pu(P), pv(P), dsrc, ddst, dpair, free_rows;
  nn::Index cn_q, cn_k, ce_q, ce_k;
  dsrc.reserve(2 * P);
  ddst.reserve(2 * P);
  dpair.reserve(2 * P);
  int node_off = 0, pair_off = 0;
  for (const auto &q: batch) {
    const int n = q.layout->num_atoms();
    const int blk = block_of.at(q.tokens);
    xn.middleRows(node_off, n) = node_features(*q.layout);
    tn.middleRows(node_off, n).setConstant(static_cast<double>(q.t) / c.steps);
    for (int i = 0; i < n; ++i)
      node_block[node_off + i] = blk;
    const int kb = q.tokens->count(), ko = block_offset[blk];
    if (attends_nodes(c))
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < kb; ++t) {
          cn_q.push_back(node_off + i);
          cn_k.push_back(ko + t);
        }
    const auto &st = *q.state;
    for (int p = 0; p < st.num_pairs(); ++p) {
      auto [i, j] = st.pair_atoms(p);
      const int g = pair_off + p;
      pu[g] = node_off + i;
      pv[g] = node_off + j;
      xe(g, st.state(p)) = 1;
      xe(g, kEdgeClasses) = st.frozen(p) ? 1 : 0;
      dsrc.push_back(pu[g]);
      ddst.push_back(pv[g]);
      dpair.push_back(g);
      dsrc.push_back(pv[g]);
      ddst.push_back(pu[g]);
      dpair.push_back(g);
      if (attends_edges(c))
        for (int t = 0; t < kb; ++t) {
          ce_q.push_back(g);
          ce_k.push_back(ko + t);
        }
    }
    for (int p: st.free_pairs())
      free_rows.push_back(pair_off + p);
    node_off += n;
    pair_off += st.num_pairs();
  }
  if (free_rows.empty())
    return nn::constant(Mat(0, kEdgeClasses));

  std::vector<Var> parts;
  for (const auto *b: blocks)
    parts.push_back(b->tokens);
  Var tokens = nn::concat_rows(parts);

  std::vector<Var> node_in = { nn::constant(xn), time_mlp_(nn::constant(tn)) };
  if (c.conditioning == Conditioning::kConcatenation) {
    std::vector<Var> vecs;
    for (const auto *b: blocks)
      vecs.push_back(spectrum_vector(*b));
    node_in.push_back(nn::gather_rows(nn::concat_rows(vecs), node_block));
  }
  Var h = node_in_(nn::concat_cols(node_in));
  Var e = edge_in_(nn::constant(xe));

  for (const auto &L: layers_) {
    // Node self-attention over all atom pairs, biased by edge features.
    {
      const double s = 1.0 / std::sqrt(static_cast<double>(c.node_dim / H));
      Var score = nn::add(
          nn::scale(nn::head_dot(nn::gather_rows(L.q(h), ddst), nn::gather_rows(L.k(h), dsrc), H), s),
          nn::gather_rows(L.edge_bias(e), dpair));
      Var att = nn::segment_softmax(score, ddst, N);
      Var agg = nn::scatter_add_rows(nn::head_scale(nn::gather_rows(L.v(h), dsrc), att, H), ddst, N);
      h = L.node_attn_norm(nn::add(h, L.o(agg)));
    }
    // Edge update from its endpoints (symmetric in the two atoms).
    {
      Var hu = nn::gather_rows(h, pu), hv = nn::gather_rows(h, pv);
      Var upd = nn::relu(L.edge_update(nn::concat_cols({ e, nn::add(hu, hv), nn::mul(hu, hv) })));
      e = L.edge_update_norm(nn::add(e, upd));
    }
    if (attends_nodes(c)) {
      Var agg = list_attention(L.nq(h), L.nk(tokens), L.nv(tokens), cn_q, cn_k, N, H);
      h = L.node_cross_norm(nn::add(h, L.no(agg)));
    }
    if (attends_edges(c)) {
      Var agg = list_attention(L.eq(e), L.ek(tokens), L.ev(tokens), ce_q, ce_k, P, H);
      e = L.edge_cross_norm(nn::add(e, L.eo(agg)));
    }
    h = L.node_ffn_norm(nn::add(h, L.node_ffn(h)));
    e = L.edge_ffn_norm(nn::add(e, L.edge_ffn(e)));
  }

  nn::Index fu, fv;
  for (int g: free_rows) {
    fu.push_back(pu[g]);
    fv.push_back(pv[g]);
  }
  Var pair_nodes = nn::add(nn::gather_rows(h, fu), nn::gather_rows(h, fv));
  return out_(nn::concat_cols({ nn::gather_rows(e, free_rows), pair_nodes }));
}

void GeneratorModel::save(std::ostream &out) const {
  nlohmann::json cfg = { { "kind", "generator" },
                         { "config", config_.to_json() },
                         { "unconditional_trained", unconditional_trained_ } };
  store_.save(out, cfg);
}

GeneratorModel GeneratorModel::load(std::istream &in) {
  std::stringstream buf;
  buf << in.rdbuf();
  std::istringstream head(buf.str());
  auto cfg = nn::read_checkpoint_config(head);
  if (cfg.value("kind", "") != "generator")
    throw FormatError("checkpoint is not a generator model");
  GeneratorModel m(GeneratorConfig::from_json(cfg.at("config")));
  m.unconditional_trained_ = cfg.value("unconditional_trained", false);
  std::istringstream body(buf.str());
  m.store_.load(body);
  return m;
}

void GeneratorModel::save_file(const std::string &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write checkpoint " + path);
  save(out);
}

GeneratorModel GeneratorModel::load_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open checkpoint " + path);
  return load(in);
}

// ---------------------------------------------------------------------------
// Training

Var generator_batch_loss(const GeneratorModel &model, const NoiseSchedule &schedule,
                         const std::vector<const GenerationLayout *> &layouts,
                         const std::vector<const EdgeStateTensor *> &targets,
                         const std::vector<const EdgeStateTensor *> &states,
                         const std::vector<int> &steps,
                         const std::vector<const PeakTokens *> &tokens) {
  const std::size_t b = layouts.size();
  if (targets.size() != b || states.size() != b || steps.size() != b || tokens.size() != b)
    throw ShapeError("batch loss inputs differ in length");
  std::vector<GeneratorModel::Query> queries;
  std::vector<int> cur, tgt;
  std::vector<double> alpha, weight;
  int counted = 0;
  for (std::size_t i = 0; i < b; ++i)
    counted += states[i]->free_pairs().empty() ? 0 : 1;
  if (counted == 0)
    return nn::constant(Mat::Zero(1, 1));
  for (std::size_t i = 0; i < b; ++i) {
    const auto &free = states[i]->free_pairs();
    if (free.empty())
      continue;
    if (steps[i] < 0 || steps[i] >= schedule.steps())
      throw ShapeError("step outside the schedule");
    queries.push_back({ layouts[i], states[i], steps[i], tokens[i] });
    const double w = static_cast<double>(schedule.steps())
                     / (static_cast<double>(free.size()) * counted);
    for (int p: free) {
      cur.push_back(states[i]->state(p));
      tgt.push_back(targets[i]->state(p));
      alpha.push_back(schedule.alphas[steps[i]]);
      weight.push_back(w);
    }
  }
  Var logits = model.predict_endpoint(queries);
  Var kl = bridge_kl_rows(logits, cur, tgt, alpha);
  Mat wm = Eigen::Map<const Mat>(weight.data(), static_cast<Eigen::Index>(weight.size()), 1);
  return nn::sum(nn::mul(kl, nn::constant(wm)));
}

GeneratorModel train_generator(const std::vector<GeneratorExample> &data,
                               const GeneratorConfig &config, GeneratorTrainLog *log,
                               const std::function<void(int, double)> &progress) {
  config.validate();
  std::vector<PreparedExample> prepared;
  std::vector<const Spectrum *> spectra;
  for (const auto &ex: data) {
    if (!ex.spectrum)
      throw DataError("training example without spectrum");
    auto p = prepare_example(ex.molecule, ex.spectrum->formula);
    if (p.layout.start.free_pairs().empty())
      continue;  // nothing to learn: the molecule is its scaffold
    prepared.push_back(std::move(p));
    spectra.push_back(ex.spectrum);
  }
  if (prepared.empty())
    throw DataError("no training molecule has atoms outside its scaffold");

  GeneratorModel model(config);
  const NoiseSchedule schedule = cosine_schedule(config.steps);
  nn::AdamW opt(model.store(), { config.lr, 0.9, 0.999, 1e-8, config.weight_decay });
  Rng rng = make_rng(config.seed, "train.generator");
  const double p_drop = config.effective_dropout();

  std::vector<int> order;
  std::size_t cursor = 0;
  GeneratorTrainLog local;
  for (int step = 0; step < config.train_steps; ++step) {
    std::vector<const GenerationLayout *> layouts;
    std::vector<const EdgeStateTensor *> targets, states;
    std::vector<EdgeStateTensor> state_store;
    std::vector<PeakTokens> token_store;
    std::vector<int> steps;
    std::vector<int> picks;
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor >= order.size()) {
        order.resize(prepared.size());
        for (std::size_t k = 0; k < order.size(); ++k)
          order[k] = static_cast<int>(k);
        stable_shuffle(order, rng);
        cursor = 0;
      }
      picks.push_back(order[cursor++]);
    }
    state_store.reserve(picks.size());
    token_store.reserve(picks.size());
    std::vector<const PeakTokens *> tokens;
    for (int idx: picks) {
      const auto &ex = prepared[idx];
      const int t = std::min(static_cast<int>(uniform01(rng) * config.steps), config.steps - 1);
      state_store.push_back(
          sample_training_state(schedule, t, ex.layout.start, ex.target, rng));
      const bool drop = p_drop > 0 && uniform01(rng) < p_drop;
      token_store.push_back(drop ? model.null_tokens() : model.tokenize_peaks(*spectra[idx]));
      layouts.push_back(&ex.layout);
      targets.push_back(&ex.target);
      states.push_back(&state_store.back());
      steps.push_back(t);
      tokens.push_back(&token_store.back());
    }
    opt.set_lr(config.lr_at(step));
    model.store().zero_grad();
    Var loss = generator_batch_loss(model, schedule, layouts, targets, states, steps, tokens);
    loss.backward();
    if (config.grad_clip > 0)
      model.store().clip_grad_norm(config.grad_clip);
    opt.step();
    local.step_loss.push_back(loss.item());
    if (progress)
      progress(step, loss.item());
  }
  model.set_unconditional_trained(p_drop > 0);

  const std::size_t n = local.step_loss.size();
  if (n > 0) {
    const std::size_t w = std::max<std::size_t>(1, n / 10);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < w; ++i) {
      a += local.step_loss[i];
      b += local.step_loss[n - 1 - i];
    }
    local.initial_smoothed = a / static_cast<double>(w);
    local.final_smoothed = b / static_cast<double>(w);
  }
  if (log)
    *log = std::move(local);
  return model;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

// Endpoint draw that keeps every atom within its valence: pairs are visited in
// random order and bond orders exceeding either atom's remaining capacity are
// masked before renormalizing.
std::vector<int> draw_within_valence(const GenerationLayout &layout,
                                     const EdgeStateTensor &state, const Mat &probs,
                                     Rng &rng) {
  std::vector<int> cap(layout.num_atoms());
  for (int i = 0; i < layout.num_atoms(); ++i)
    cap[i] = layout.scaffold_atom[i] ? layout.atoms[i].implicit_h
                                     : max_valence(layout.atoms[i].element, 0);
  const auto &free = state.free_pairs();
  std::vector<int> visit(free.size());
  for (std::size_t r = 0; r < visit.size(); ++r)
    visit[r] = static_cast<int>(r);
  stable_shuffle(visit, rng);
  std::vector<int> out(free.size(), 0);
  for (int r: visit) {
    auto [i, j] = state.pair_atoms(free[r]);
    const int room = std::min(cap[i], cap[j]);
    double w[kEdgeClasses] = {};
    double total = 0;
    for (int c = 0; c < kEdgeClasses; ++c) {
      const bool ok = c == 0 || (c != static_cast<int>(BondType::kAromatic) && c <= room);
      w[c] = ok ? probs(r, c) : 0;
      total += w[c];
    }
    int pick = 0;
    double u = uniform01(rng) * total;
    for (int c = 0; c < kEdgeClasses && total > 0; ++c) {
      if (w[c] == 0)
        continue;
      pick = c;
      u -= w[c];
      if (u < 0)
        break;
    }
    out[r] = pick;
    cap[i] -= pick;
    cap[j] -= pick;
  }
  return out;
}

}  // namespace

RankedMolecules generate(const GeneratorModel &model, const Spectrum &spec,
                         const MolGraph &scaffold, const GenerationConfig &config) {
  if (config.samples < 1)
    throw ConfigError("samples must be positive");
  const double lambda = config.guidance_scale;
  if (lambda != 0 && !model.unconditional_trained())
    throw UncalibratedError(
        "guidance needs a model trained with condition dropout; set the guidance scale to 0");
  const GenerationLayout layout = make_layout(scaffold, spec.formula);

  RankedMolecules out;
  out.query_id = spec.record_id;
  nn::NoGradGuard no_grad;
  const PeakTokens cond = model.tokenize_peaks(spec);
  const PeakTokens uncond = model.null_tokens();
  const NoiseSchedule schedule = cosine_schedule(model.config().steps);

  BatchEndpointPredictor predictor = [&](const std::vector<const EdgeStateTensor *> &states,
                                         int t) {
    std::vector<GeneratorModel::Query> qc, qu;
    for (const auto *s: states) {
      qc.push_back({ &layout, s, t, &cond });
      qu.push_back({ &layout, s, t, &uncond });
    }
    Mat zc = model.predict_endpoint(qc).value();
    if (lambda != 0)
      zc = cfg_logits(zc, model.predict_endpoint(qu).value(), lambda);
    std::vector<Mat> res;
    Eigen::Index off = 0;
    for (const auto *s: states) {
      const auto m = static_cast<Eigen::Index>(s->free_pairs().size());
      res.push_back(zc.middleRows(off, m));
      off += m;
    }
    return res;
  };
  EndpointDraw draw;
  if (config.valence_masking)
    draw = [&](const EdgeStateTensor &s, const Mat &probs, Rng &rng) {
      return draw_within_valence(layout, s, probs, rng);
    };

  std::vector<std::uint64_t> seeds(config.samples);
  for (int i = 0; i < config.samples; ++i)
    seeds[i] = substream_seed(config.seed, static_cast<std::uint64_t>(i));
  const auto runs = sample_trajectories(schedule, layout.start, predictor, seeds, draw);

  struct Acc {
    MolGraph graph;
    int count = 0;
    double ll = 0;
  };
  std::map<std::string, Acc> groups;
  int valid = 0;
  for (const auto &run: runs) {
    auto mol = layout_to_molecule(layout, run.terminal);
    if (!mol)
      continue;
    ++valid;
    const std::string smi = write_smiles(*mol);
    auto [it, fresh] = groups.try_emplace(smi);
    if (fresh)
      it->second.graph = std::move(*mol);
    it->second.count += 1;
    it->second.ll += run.log_likelihood;
  }
  for (auto &[smi, acc]: groups)
    out.entries.push_back({ smi, std::move(acc.graph), acc.count, acc.ll / acc.count });
  std::sort(out.entries.begin(), out.entries.end(),
            [](const RankedMolecule &a, const RankedMolecule &b) {
              if (a.frequency != b.frequency)
                return a.frequency > b.frequency;
              if (a.mean_log_likelihood != b.mean_log_likelihood)
                return a.mean_log_likelihood > b.mean_log_likelihood;
              return a.smiles < b.smiles;
            });
  out.valid_fraction = static_cast<double>(valid) / config.samples;
  return out;
}

void write_generation_jsonl(std::ostream &out, const RankedMolecules &ranked) {
  for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
    const auto &e = ranked.entries[r];
    nlohmann::json j = { { "query_id", ranked.query_id },
                         { "rank", r + 1 },
                         { "smiles", e.smiles },
                         { "frequency", e.frequency },
                         { "mean_log_likelihood", e.mean_log_likelihood },
                         { "valid_fraction_of_batch", ranked.valid_fraction } };
    out << j.dump() << '\n';
  }
}

}  // namespace madgen
