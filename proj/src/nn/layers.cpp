//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "madgen/error.h"
#include "madgen/nn.h"

namespace madgen::nn {

namespace {

constexpr char kMagic[8] = { 'M', 'A', 'D', 'G', 'E', 'N', 'C', 'K' };
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream &out, const T &v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream &in) {
  T v {};
  in.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!in)
    throw FormatError("checkpoint truncated");
  return v;
}

nlohmann::json read_header(std::istream &in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("not a madgen checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version "
                      + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in)
    throw FormatError("checkpoint truncated");
  return nlohmann::json::parse(text);
}

}  // namespace

Mat xavier(int rows, int cols, Rng &rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = (2 * uniform01(rng) - 1) * limit;
  return m;
}

// ---------------------------------------------------------------------------

Parameter &ParamStore::create(const std::string &name, Mat init) {
  if (params_.count(name) != 0)
    throw ConfigError("duplicate parameter '" + name + "'");
  order_.push_back(name);
  auto &slot = params_[name];
  slot = std::make_unique<Parameter>(std::move(init));
  return *slot;
}

Parameter &ParamStore::get(const std::string &name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw ConfigError("unknown parameter '" + name + "'");
  return *it->second;
}

const Parameter &ParamStore::get(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw ConfigError("unknown parameter '" + name + "'");
  return *it->second;
}

bool ParamStore::contains(const std::string &name) const {
  return params_.count(name) != 0;
}

std::vector<std::pair<std::string, Parameter *>> ParamStore::items() {
  std::vector<std::pair<std::string, Parameter *>> out;
  for (const auto &name: order_)
    out.emplace_back(name, params_.at(name).get());
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto &[_, p]: params_)
    n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto &[_, p]: params_)
    p->zero_grad();
}

double ParamStore::grad_norm() const {
  double s = 0;
  for (const auto &[_, p]: params_)
    s += p->grad.squaredNorm();
  return std::sqrt(s);
}

void ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0) {
    const double f = max_norm / norm;
    for (auto &[_, p]: params_)
      p->grad *= f;
  }
}

void ParamStore::save(std::ostream &out, const nlohmann::json &config) const {
  out.write(kMagic, 8);
  put(out, kVersion);
  const std::string text = config.dump();
  put(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put(out, static_cast<std::uint64_t>(order_.size()));
  for (const auto &name: order_) {
    const Mat &m = params_.at(name)->value;
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint64_t>(m.rows()));
    put(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char *>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out)
    throw DataError("failed to write checkpoint");
}

nlohmann::json ParamStore::load(std::istream &in) {
  auto config = read_header(in);
  const auto count = read_pod<std::uint64_t>(in);
  if (count != order_.size())
    throw FormatError("checkpoint has " + std::to_string(count)
                      + " tensors, model expects "
                      + std::to_string(order_.size()));
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    auto it = params_.find(name);
    if (it == params_.end())
      throw FormatError("checkpoint tensor '" + name + "' unknown to model");
    Mat &m = it->second->value;
    if (static_cast<std::uint64_t>(m.rows()) != rows
        || static_cast<std::uint64_t>(m.cols()) != cols)
      throw FormatError("checkpoint tensor '" + name + "' has wrong shape");
    in.read(reinterpret_cast<char *>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in)
      throw FormatError("checkpoint truncated");
  }
  return config;
}

nlohmann::json read_checkpoint_config(std::istream &in) {
  return read_header(in);
}

// ---------------------------------------------------------------------------

void AdamW::step() {
  ++t_;
  const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto &[_, p]: store_->items()) {
    p->value *= 1 - cfg_.lr * cfg_.weight_decay;
    p->m = cfg_.beta1 * p->m + (1 - cfg_.beta1) * p->grad;
    p->v = cfg_.beta2 * p->v + (1 - cfg_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= cfg_.lr * (p->m.array() / bc1)
                        / ((p->v.array() / bc2).sqrt() + cfg_.eps);
  }
}

// ---------------------------------------------------------------------------

Linear::Linear(ParamStore &store, const std::string &name, int in, int out,
               Rng &rng, bool bias)
    : in_(in), out_(out) {
  w_ = &store.create(name + ".w", xavier(in, out, rng));
  if (bias)
    b_ = &store.create(name + ".b", Mat::Zero(1, out));
}

Var Linear::operator()(const Var &x) const {
  Var y = matmul(x, param(*w_));
  if (b_ != nullptr)
    y = add_row(y, param(*b_));
  return y;
}

LayerNorm::LayerNorm(ParamStore &store, const std::string &name, int dim) {
  gamma_ = &store.create(name + ".gamma", Mat::Ones(1, dim));
  beta_ = &store.create(name + ".beta", Mat::Zero(1, dim));
}

Var LayerNorm::operator()(const Var &x) const {
  return layer_norm(x, param(*gamma_), param(*beta_));
}

Mlp2::Mlp2(ParamStore &store, const std::string &name, int in, int hidden,
           int out, Rng &rng)
    : a_(store, name + ".0", in, hidden, rng),
      b_(store, name + ".1", hidden, out, rng) { }

Var Mlp2::operator()(const Var &x) const {
  return b_(relu(a_(x)));
}

}  // namespace madgen::nn
