//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_GENERATOR_H_
#define MADGEN_GENERATOR_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "madgen/bridge.h"
#include "madgen/chemgraph.h"
#include "madgen/metrics.h"
#include "madgen/nn.h"
#include "madgen/spectra.h"

namespace madgen {

enum class SpectrumEncoding { kBinnedMlp, kTokens, kTokensSelfAttention };
enum class Conditioning { kConcatenation, kCrossAttention };
enum class AttentionTarget { kNode, kEdge, kBoth };

std::string to_string(SpectrumEncoding e);
std::string to_string(Conditioning c);
std::string to_string(AttentionTarget t);
SpectrumEncoding parse_encoding(std::string_view s);
Conditioning parse_conditioning(std::string_view s);
AttentionTarget parse_attention_target(std::string_view s);

struct GeneratorConfig {
  int node_dim = 64;
  int edge_dim = 64;
  int token_dim = 64;
  int heads = 4;
  int layers = 5;
  int node_ffn = 256;
  int edge_ffn = 128;
  int spectrum_hidden = 256;
  int time_dim = 16;
  int max_tokens = 32;  // most intense peaks kept as tokens
  double bin_width = kDefaultBinWidth;
  double max_mz = kDefaultMaxMz;

  SpectrumEncoding encoding = SpectrumEncoding::kTokensSelfAttention;
  Conditioning conditioning = Conditioning::kCrossAttention;
  AttentionTarget attention_target = AttentionTarget::kNode;
  // Guidance on/off. Off means the condition is never dropped in training.
  bool classifier_free = true;
  double cond_dropout = 0.1;

  int steps = kDefaultSteps;  // bridge length T
  int batch_size = 32;
  int train_steps = 2000;
  double lr = 1e-3;
  // "constant", or "cosine": linear warmup over the first 5% of steps, then
  // cosine decay to zero.
  std::string lr_schedule = "cosine";
  double weight_decay = 1e-12;
  double grad_clip = 0;  // 0 disables clipping
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json &j);
  // Condition dropout actually used in training.
  double effective_dropout() const { return classifier_free ? cond_dropout : 0.0; }
  // Learning rate at optimizer step `step` under lr_schedule.
  double lr_at(int step) const;
};

/// One row per peak after the tokenizer (and self-attention, when enabled).
struct PeakTokens {
  nn::Var tokens;  // K x token_dim
  int count() const { return static_cast<int>(tokens.rows()); }
};

/// Per-query generation input laid out for the network: scaffold atoms
/// first (scaffold order), then free atoms sorted by element.
struct GenerationLayout {
  MolGraph scaffold;
  std::vector<Atom> atoms;
  std::vector<char> scaffold_atom;  // per atom; free atoms are 0
  int n_scaffold = 0;
  EdgeStateTensor start;  // scaffold pairs frozen at their bonds

  int num_atoms() const { return static_cast<int>(atoms.size()); }
};

/// Throws CompositionError when the scaffold does not fit the formula.
GenerationLayout make_layout(const MolGraph &scaffold, const ChemFormula &formula);

/// Terminal edge states -> molecule, or nullopt when valences cannot be met.
std::optional<MolGraph> layout_to_molecule(const GenerationLayout &layout,
                                           const EdgeStateTensor &state);

/// Elementwise (1 + scale) cond - scale uncond; exactly cond for scale 0.
nn::Mat cfg_logits(const nn::Mat &cond, const nn::Mat &uncond, double scale);

// One node-edge transformer block.
struct GeneratorLayer {
  nn::Linear q, k, v, o, edge_bias;
  nn::LayerNorm node_attn_norm;
  nn::Linear edge_update;
  nn::LayerNorm edge_update_norm;
  // Cross-attention to peak tokens, for nodes and for edges.
  nn::Linear nq, nk, nv, no, eq, ek, ev, eo;
  nn::LayerNorm node_cross_norm, edge_cross_norm;
  nn::Mlp2 node_ffn, edge_ffn;
  nn::LayerNorm node_ffn_norm, edge_ffn_norm;
};

inline constexpr int kGeneratorNodeFeatures = kNumHeavyElements + 4;
inline constexpr int kGeneratorEdgeFeatures = kEdgeClasses + 1;

class GeneratorModel {
public:
  explicit GeneratorModel(const GeneratorConfig &config);

  const GeneratorConfig &config() const { return config_; }
  nn::ParamStore &store() { return store_; }
  // Set once training has dropped the condition at least once.
  bool unconditional_trained() const { return unconditional_trained_; }
  void set_unconditional_trained(bool v) { unconditional_trained_ = v; }

  /// Throws EmptySpectrumError.
  PeakTokens tokenize_peaks(const Spectrum &spec) const;
  // The learnable stand-in used when the spectrum is dropped.
  PeakTokens null_tokens() const;

  struct Query {
    const GenerationLayout *layout;
    const EdgeStateTensor *state;
    int t;
    const PeakTokens *tokens;  // null_tokens() for the unconditional pass
  };
  /// Logits for the free pairs of every query, stacked in query order.
  nn::Var predict_endpoint(const std::vector<Query> &batch) const;

  void save(std::ostream &out) const;
  static GeneratorModel load(std::istream &in);
  void save_file(const std::string &path) const;
  static GeneratorModel load_file(const std::string &path);

private:
  nn::Var spectrum_vector(const PeakTokens &tokens) const;

  GeneratorConfig config_;
  nn::ParamStore store_;
  bool unconditional_trained_ = false;
  // Tokenizer / spectrum encoders.
  nn::Mlp2 mz_mlp_, intensity_mlp_, binned_mlp_;
  nn::Linear sa_q_, sa_k_, sa_v_, sa_o_;
  nn::LayerNorm sa_norm_;
  nn::Mlp2 time_mlp_;
  nn::Linear node_in_, edge_in_;
  std::vector<GeneratorLayer> layers_;
  nn::Parameter *null_token_ = nullptr;
  nn::Mlp2 out_;
};

struct GeneratorExample {
  const Spectrum *spectrum;
  MolGraph molecule;
};

struct GeneratorTrainLog {
  std::vector<double> step_loss;
  // Mean of the first and last 10% of steps.
  double initial_smoothed = 0;
  double final_smoothed = 0;
};

/// Throws DataError when a molecule is inconsistent with its formula.
GeneratorModel train_generator(const std::vector<GeneratorExample> &data,
                               const GeneratorConfig &config,
                               GeneratorTrainLog *log = nullptr,
                               const std::function<void(int, double)> &progress = nullptr);

/// A training molecule in layout order with its terminal edge states.
/// Throws DataError when the molecule does not match the formula.
struct PreparedExample {
  GenerationLayout layout;
  EdgeStateTensor target;
};
PreparedExample prepare_example(const MolGraph &mol, const ChemFormula &formula);

/// Mean over queries of the bridge loss at each query's step. Pass
/// null_tokens() to train the unconditional branch.
nn::Var generator_batch_loss(const GeneratorModel &model,
                             const NoiseSchedule &schedule,
                             const std::vector<const GenerationLayout *> &layouts,
                             const std::vector<const EdgeStateTensor *> &targets,
                             const std::vector<const EdgeStateTensor *> &states,
                             const std::vector<int> &steps,
                             const std::vector<const PeakTokens *> &tokens);

struct GenerationConfig {
  double guidance_scale = 1.0;
  int samples = 100;
  bool valence_masking = false;
  std::uint64_t seed = 0;
};

/// Samples, filters, deduplicates and ranks candidate molecules for one
/// spectrum given a scaffold. Throws CompositionError and UncalibratedError.
RankedMolecules generate(const GeneratorModel &model, const Spectrum &spec,
                         const MolGraph &scaffold, const GenerationConfig &config);

/// JSON lines: query_id, rank, smiles, frequency, mean_log_likelihood,
/// valid_fraction_of_batch.
void write_generation_jsonl(std::ostream &out, const RankedMolecules &ranked);

}  // namespace madgen

#endif  // MADGEN_GENERATOR_H_
