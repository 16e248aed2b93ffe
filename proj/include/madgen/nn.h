//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_NN_H_
#define MADGEN_NN_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "madgen/random.h"

namespace madgen::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = std::vector<int>;

/// Trainable tensor with AdamW moments.
struct Parameter {
  Mat value;
  Mat grad;
  Mat m;
  Mat v;

  explicit Parameter(Mat init);
  void zero_grad();
};

struct Node;
/// Handle to a value in the current computation graph.
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node): node_(std::move(node)) { }

  const Mat &value() const;
  const Mat &grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const { return value()(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }
  bool requires_grad() const;

  // Runs reverse-mode accumulation from this scalar.
  void backward() const;

  const std::shared_ptr<Node> &node() const { return node_; }

private:
  std::shared_ptr<Node> node_;
};

/// Gradient recording is on by default; the guard disables it in a scope.
bool grad_enabled();
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool prev_;
};

Var constant(Mat value);
Var param(Parameter &p);
// A leaf that records gradients but is not tied to a Parameter.
Var leaf(Mat value);

Var matmul(const Var &a, const Var &b);
Var transpose(const Var &a);
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
Var scale(const Var &a, double s);
// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(const Var &a, const Var &row);
Var relu(const Var &a);
Var tanh(const Var &a);
Var exp(const Var &a);
Var log(const Var &a);
Var sum(const Var &a);
Var mean(const Var &a);
Var layer_norm(const Var &x, const Var &gamma, const Var &beta,
               double eps = 1e-5);
Var softmax_rows(const Var &a);
Var log_softmax_rows(const Var &a);
Var row_l2_normalize(const Var &a, double eps = 1e-12);
// out(i, 0) = a(i, idx[i])
Var pick(const Var &a, const Index &idx);

Var gather_rows(const Var &a, const Index &idx);
Var scatter_add_rows(const Var &a, const Index &idx, int out_rows);
// Softmax over rows sharing a segment id, independently per column.
Var segment_softmax(const Var &scores, const Index &segment, int n_segments);
// Column-wise max over rows of each segment; empty segments give zero.
Var segment_max(const Var &a, const Index &segment, int n_segments);

Var concat_cols(const std::vector<Var> &parts);
Var concat_rows(const std::vector<Var> &parts);
Var slice_cols(const Var &a, int start, int len);

// Per-head dot products: q, k are E x (H*dh); result E x H.
Var head_dot(const Var &q, const Var &k, int heads);
// Per-head scaling: v is E x (H*dh), w is E x H; result E x (H*dh).
Var head_scale(const Var &v, const Var &w, int heads);

Var dropout(const Var &a, double p, Rng &rng);

// Op with a caller-supplied backward: given the upstream gradient, return one
// gradient per parent (an empty matrix means "no contribution").
using BackwardFn = std::function<std::vector<Mat>(const Mat &grad_out)>;
Var custom(Mat value, const std::vector<Var> &parents, BackwardFn backward);

// ---------------------------------------------------------------------------

class ParamStore {
public:
  Parameter &create(const std::string &name, Mat init);
  Parameter &get(const std::string &name);
  const Parameter &get(const std::string &name) const;
  bool contains(const std::string &name) const;

  std::vector<std::pair<std::string, Parameter *>> items();
  std::size_t num_scalars() const;
  void zero_grad();
  double grad_norm() const;
  void clip_grad_norm(double max_norm);

  void save(std::ostream &out, const nlohmann::json &config) const;
  // Overwrites values of existing parameters; returns the stored config.
  nlohmann::json load(std::istream &in);

private:
  std::vector<std::string> order_;
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

nlohmann::json read_checkpoint_config(std::istream &in);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-12;
};

class AdamW {
public:
  AdamW(ParamStore &store, AdamWConfig cfg): store_(&store), cfg_(cfg) { }
  void step();
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

private:
  ParamStore *store_;
  AdamWConfig cfg_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Layers

class Linear {
public:
  Linear() = default;
  Linear(ParamStore &store, const std::string &name, int in, int out, Rng &rng,
         bool bias = true);
  Var operator()(const Var &x) const;
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

private:
  Parameter *w_ = nullptr;
  Parameter *b_ = nullptr;
  int in_ = 0, out_ = 0;
};

class LayerNorm {
public:
  LayerNorm() = default;
  LayerNorm(ParamStore &store, const std::string &name, int dim);
  Var operator()(const Var &x) const;

private:
  Parameter *gamma_ = nullptr;
  Parameter *beta_ = nullptr;
};

// Linear -> ReLU -> Linear.
class Mlp2 {
public:
  Mlp2() = default;
  Mlp2(ParamStore &store, const std::string &name, int in, int hidden, int out,
       Rng &rng);
  Var operator()(const Var &x) const;

private:
  Linear a_, b_;
};

Mat xavier(int rows, int cols, Rng &rng);

}  // namespace madgen::nn

#endif  // MADGEN_NN_H_
