//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "madgen/error.h"
#include "madgen/nn.h"

namespace madgen::nn {

struct Node {
  Mat own;
  const Mat *ref = nullptr;
  Mat grad;
  bool has_grad = false;
  bool requires_grad = false;
  Parameter *param = nullptr;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward_fn;

  const Mat &val() const { return ref != nullptr ? *ref : own; }
  Mat &g() {
    if (!has_grad) {
      grad = Mat::Zero(val().rows(), val().cols());
      has_grad = true;
    }
    return grad;
  }
};

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_next_id = 0;

Node &P(Node &n, int i) {
  return *n.parents[i];
}

void acc(Node &p, const Mat &g) {
  if (p.requires_grad)
    p.g() += g;
}

Var make(Mat value, std::initializer_list<Var> parents,
         std::function<void(Node &)> bw) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  n->id = g_next_id++;
  if (g_grad_enabled) {
    bool rg = false;
    for (const auto &p: parents)
      rg = rg || p.requires_grad();
    if (rg) {
      n->requires_grad = true;
      for (const auto &p: parents)
        n->parents.push_back(p.node());
      n->backward_fn = std::move(bw);
    }
  }
  return Var(std::move(n));
}

Var make_n(Mat value, const std::vector<Var> &parents,
           std::function<void(Node &)> bw) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  n->id = g_next_id++;
  if (g_grad_enabled) {
    bool rg = false;
    for (const auto &p: parents)
      rg = rg || p.requires_grad();
    if (rg) {
      n->requires_grad = true;
      for (const auto &p: parents)
        n->parents.push_back(p.node());
      n->backward_fn = std::move(bw);
    }
  }
  return Var(std::move(n));
}

void require_same_shape(const Mat &a, const Mat &b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Parameter::Parameter(Mat init): value(std::move(init)) {
  grad = Mat::Zero(value.rows(), value.cols());
  m = Mat::Zero(value.rows(), value.cols());
  v = Mat::Zero(value.rows(), value.cols());
}

void Parameter::zero_grad() {
  grad.setZero();
}

const Mat &Var::value() const {
  return node_->val();
}

const Mat &Var::grad() const {
  return node_->g();
}

bool Var::requires_grad() const {
  return node_ && node_->requires_grad;
}

void Var::backward() const {
  if (!node_->requires_grad)
    return;
  // Ids increase with creation, so sorting the reachable set by descending
  // id gives a reverse topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  std::vector<Node *> work { node_.get() };
  while (!work.empty()) {
    Node *n = work.back();
    work.pop_back();
    if (!visited.insert(n).second)
      continue;
    order.push_back(n);
    for (auto &p: n->parents)
      if (p->requires_grad)
        work.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node *a, const Node *b) { return a->id > b->id; });

  node_->g().setOnes();
  for (Node *n: order) {
    if (n->has_grad && n->backward_fn)
      n->backward_fn(*n);
  }
  for (Node *n: order) {
    if (n->param != nullptr && n->has_grad)
      n->param->grad += n->grad;
  }
}

bool grad_enabled() {
  return g_grad_enabled;
}

NoGradGuard::NoGradGuard(): prev_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
  g_grad_enabled = prev_;
}

Var constant(Mat value) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  n->id = g_next_id++;
  return Var(std::move(n));
}

Var param(Parameter &p) {
  auto n = std::make_shared<Node>();
  n->ref = &p.value;
  n->id = g_next_id++;
  n->requires_grad = g_grad_enabled;
  n->param = &p;
  return Var(std::move(n));
}

Var leaf(Mat value) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  n->id = g_next_id++;
  n->requires_grad = g_grad_enabled;
  return Var(std::move(n));
}

// ---------------------------------------------------------------------------

Var matmul(const Var &a, const Var &b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ");
  return make(a.value() * b.value(), { a, b }, [](Node &n) {
    acc(P(n, 0), n.grad * P(n, 1).val().transpose());
    acc(P(n, 1), P(n, 0).val().transpose() * n.grad);
  });
}

Var transpose(const Var &a) {
  return make(a.value().transpose(), { a },
              [](Node &n) { acc(P(n, 0), n.grad.transpose()); });
}

Var add(const Var &a, const Var &b) {
  require_same_shape(a.value(), b.value(), "add");
  return make(a.value() + b.value(), { a, b }, [](Node &n) {
    acc(P(n, 0), n.grad);
    acc(P(n, 1), n.grad);
  });
}

Var sub(const Var &a, const Var &b) {
  require_same_shape(a.value(), b.value(), "sub");
  return make(a.value() - b.value(), { a, b }, [](Node &n) {
    acc(P(n, 0), n.grad);
    acc(P(n, 1), -n.grad);
  });
}

Var mul(const Var &a, const Var &b) {
  require_same_shape(a.value(), b.value(), "mul");
  return make(a.value().cwiseProduct(b.value()), { a, b }, [](Node &n) {
    acc(P(n, 0), n.grad.cwiseProduct(P(n, 1).val()));
    acc(P(n, 1), n.grad.cwiseProduct(P(n, 0).val()));
  });
}

Var scale(const Var &a, double s) {
  return make(a.value() * s, { a }, [s](Node &n) { acc(P(n, 0), n.grad * s); });
}

Var add_row(const Var &a, const Var &row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row: row must be 1 x cols");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), { a, row }, [](Node &n) {
    acc(P(n, 0), n.grad);
    acc(P(n, 1), n.grad.colwise().sum());
  });
}

Var relu(const Var &a) {
  return make(a.value().cwiseMax(0.0), { a }, [](Node &n) {
    const Mat &x = P(n, 0).val();
    acc(P(n, 0), (x.array() > 0).select(n.grad, 0.0));
  });
}

Var tanh(const Var &a) {
  Mat y = a.value().array().tanh().matrix();
  return make(y, { a }, [](Node &n) {
    acc(P(n, 0),
        n.grad.cwiseProduct((1.0 - n.own.array().square()).matrix()));
  });
}

Var exp(const Var &a) {
  return make(a.value().array().exp().matrix(), { a }, [](Node &n) {
    acc(P(n, 0), n.grad.cwiseProduct(n.own));
  });
}

Var log(const Var &a) {
  return make(a.value().array().log().matrix(), { a }, [](Node &n) {
    acc(P(n, 0), n.grad.cwiseQuotient(P(n, 0).val()));
  });
}

Var sum(const Var &a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), { a }, [](Node &n) {
    const Mat &x = P(n, 0).val();
    acc(P(n, 0), Mat::Constant(x.rows(), x.cols(), n.grad(0, 0)));
  });
}

Var mean(const Var &a) {
  const double count = static_cast<double>(a.value().size());
  if (count == 0)
    throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / count);
}

Var layer_norm(const Var &x, const Var &gamma, const Var &beta, double eps) {
  const Mat &v = x.value();
  const auto rows = v.rows(), cols = v.cols();
  Mat xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = v.row(i).mean();
    const double var = (v.row(i).array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (v.row(i).array() - mu) * inv_std[i];
  }
  Mat out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make(std::move(out), { x, gamma, beta },
              [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node &n) {
                const Mat &gm = P(n, 1).val();
                if (P(n, 0).requires_grad) {
                  Mat dxhat = n.grad;
                  dxhat.array().rowwise() *= gm.row(0).array();
                  Mat dx(dxhat.rows(), dxhat.cols());
                  for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                    const double m1 = dxhat.row(i).mean();
                    const double m2 = dxhat.row(i).dot(xhat.row(i))
                                      / static_cast<double>(dxhat.cols());
                    dx.row(i) = (dxhat.row(i).array() - m1
                                 - xhat.row(i).array() * m2)
                                * inv_std[i];
                  }
                  acc(P(n, 0), dx);
                }
                acc(P(n, 1), n.grad.cwiseProduct(xhat).colwise().sum());
                acc(P(n, 2), n.grad.colwise().sum());
              });
}

Var softmax_rows(const Var &a) {
  Mat s = a.value();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
  return make(s, { a }, [](Node &n) {
    const Mat &s = n.own;
    Eigen::VectorXd dot = n.grad.cwiseProduct(s).rowwise().sum();
    Mat dx = n.grad;
    dx.colwise() -= dot;
    acc(P(n, 0), dx.cwiseProduct(s));
  });
}

Var log_softmax_rows(const Var &a) {
  Mat y = a.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    const double lse = m + std::log((y.row(i).array() - m).exp().sum());
    y.row(i).array() -= lse;
  }
  return make(y, { a }, [](Node &n) {
    Mat s = n.own.array().exp().matrix();
    Eigen::VectorXd total = n.grad.rowwise().sum();
    Mat dx = n.grad;
    for (Eigen::Index i = 0; i < dx.rows(); ++i)
      dx.row(i) -= s.row(i) * total[i];
    acc(P(n, 0), dx);
  });
}

Var row_l2_normalize(const Var &a, double eps) {
  const Mat &x = a.value();
  Eigen::VectorXd norm(x.rows());
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    norm[i] = std::max(x.row(i).norm(), eps);
    y.row(i) = x.row(i) / norm[i];
  }
  return make(y, { a }, [norm = std::move(norm)](Node &n) {
    const Mat &y = n.own;
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double d = y.row(i).dot(n.grad.row(i));
      dx.row(i) = (n.grad.row(i) - y.row(i) * d) / norm[i];
    }
    acc(P(n, 0), dx);
  });
}

Var pick(const Var &a, const Index &idx) {
  const Mat &x = a.value();
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw ShapeError("pick: one index per row required");
  Mat out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out(i, 0) = x(i, idx[i]);
  return make(std::move(out), { a }, [idx](Node &n) {
    Node &p = P(n, 0);
    if (!p.requires_grad)
      return;
    Mat &g = p.g();
    for (std::size_t i = 0; i < idx.size(); ++i)
      g(static_cast<Eigen::Index>(i), idx[i]) += n.grad(i, 0);
  });
}

Var gather_rows(const Var &a, const Index &idx) {
  const Mat &x = a.value();
  Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return make(std::move(out), { a }, [idx](Node &n) {
    Node &p = P(n, 0);
    if (!p.requires_grad)
      return;
    Mat &g = p.g();
    for (std::size_t i = 0; i < idx.size(); ++i)
      g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var scatter_add_rows(const Var &a, const Index &idx, int out_rows) {
  const Mat &x = a.value();
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw ShapeError("scatter_add_rows: one index per row required");
  Mat out = Mat::Zero(out_rows, x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(idx[i]) += x.row(static_cast<Eigen::Index>(i));
  return make(std::move(out), { a }, [idx](Node &n) {
    Node &p = P(n, 0);
    if (!p.requires_grad)
      return;
    Mat &g = p.g();
    for (std::size_t i = 0; i < idx.size(); ++i)
      g.row(static_cast<Eigen::Index>(i)) += n.grad.row(idx[i]);
  });
}

Var segment_softmax(const Var &scores, const Index &segment, int n_segments) {
  const Mat &x = scores.value();
  const auto rows = x.rows(), cols = x.cols();
  if (static_cast<Eigen::Index>(segment.size()) != rows)
    throw ShapeError("segment_softmax: one segment id per row required");
  Mat mx = Mat::Constant(n_segments, cols,
                         -std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < rows; ++i)
    mx.row(segment[i]) = mx.row(segment[i]).cwiseMax(x.row(i));
  Mat e(rows, cols);
  Mat total = Mat::Zero(n_segments, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    e.row(i) = (x.row(i) - mx.row(segment[i])).array().exp().matrix();
    total.row(segment[i]) += e.row(i);
  }
  for (Eigen::Index i = 0; i < rows; ++i)
    e.row(i) = e.row(i).cwiseQuotient(total.row(segment[i]));
  return make(e, { scores }, [segment, n_segments](Node &n) {
    const Mat &s = n.own;
    Mat dot = Mat::Zero(n_segments, s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      dot.row(segment[i]) += n.grad.row(i).cwiseProduct(s.row(i));
    Mat dx(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      dx.row(i) = s.row(i).cwiseProduct(n.grad.row(i) - dot.row(segment[i]));
    acc(P(n, 0), dx);
  });
}

Var segment_max(const Var &a, const Index &segment, int n_segments) {
  const Mat &x = a.value();
  const auto cols = x.cols();
  if (static_cast<Eigen::Index>(segment.size()) != x.rows())
    throw ShapeError("segment_max: one segment id per row required");
  Mat out = Mat::Zero(n_segments, cols);
  std::vector<int> arg(static_cast<std::size_t>(n_segments * cols), -1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int s = segment[i];
    for (Eigen::Index c = 0; c < cols; ++c) {
      int &best = arg[static_cast<std::size_t>(s * cols + c)];
      if (best < 0 || x(i, c) > x(best, c)) {
        best = static_cast<int>(i);
        out(s, c) = x(i, c);
      }
    }
  }
  return make(std::move(out), { a }, [arg = std::move(arg), cols](Node &n) {
    Node &p = P(n, 0);
    if (!p.requires_grad)
      return;
    Mat &g = p.g();
    for (Eigen::Index s = 0; s < n.grad.rows(); ++s)
      for (Eigen::Index c = 0; c < cols; ++c) {
        const int r = arg[static_cast<std::size_t>(s * cols + c)];
        if (r >= 0)
          g(r, c) += n.grad(s, c);
      }
  });
}

Var concat_cols(const std::vector<Var> &parts) {
  if (parts.empty())
    throw ShapeError("concat_cols: no inputs");
  const auto rows = parts[0].rows();
  Eigen::Index total = 0;
  for (const auto &p: parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  Mat out(rows, total);
  Eigen::Index off = 0;
  for (const auto &p: parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return make_n(std::move(out), parts, [](Node &n) {
    Eigen::Index off = 0;
    for (auto &p: n.parents) {
      const auto c = p->val().cols();
      acc(*p, n.grad.middleCols(off, c));
      off += c;
    }
  });
}

Var concat_rows(const std::vector<Var> &parts) {
  if (parts.empty())
    throw ShapeError("concat_rows: no inputs");
  const auto cols = parts[0].cols();
  Eigen::Index total = 0;
  for (const auto &p: parts) {
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
  }
  Mat out(total, cols);
  Eigen::Index off = 0;
  for (const auto &p: parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return make_n(std::move(out), parts, [](Node &n) {
    Eigen::Index off = 0;
    for (auto &p: n.parents) {
      const auto r = p->val().rows();
      acc(*p, n.grad.middleRows(off, r));
      off += r;
    }
  });
}

Var slice_cols(const Var &a, int start, int len) {
  if (start < 0 || len < 0 || start + len > a.cols())
    throw ShapeError("slice_cols: out of range");
  return make(a.value().middleCols(start, len), { a }, [start, len](Node &n) {
    Node &p = P(n, 0);
    if (p.requires_grad)
      p.g().middleCols(start, len) += n.grad;
  });
}

Var head_dot(const Var &q, const Var &k, int heads) {
  require_same_shape(q.value(), k.value(), "head_dot");
  const Mat &a = q.value();
  const Mat &b = k.value();
  const int dh = static_cast<int>(a.cols()) / heads;
  Mat out(a.rows(), heads);
  for (int h = 0; h < heads; ++h)
    out.col(h) = a.middleCols(h * dh, dh)
                     .cwiseProduct(b.middleCols(h * dh, dh))
                     .rowwise()
                     .sum();
  return make(std::move(out), { q, k }, [heads, dh](Node &n) {
    const Mat &a = P(n, 0).val();
    const Mat &b = P(n, 1).val();
    Mat da(a.rows(), a.cols()), db(b.rows(), b.cols());
    for (int h = 0; h < heads; ++h) {
      da.middleCols(h * dh, dh) =
          b.middleCols(h * dh, dh).array().colwise() * n.grad.col(h).array();
      db.middleCols(h * dh, dh) =
          a.middleCols(h * dh, dh).array().colwise() * n.grad.col(h).array();
    }
    acc(P(n, 0), da);
    acc(P(n, 1), db);
  });
}

Var head_scale(const Var &v, const Var &w, int heads) {
  const Mat &a = v.value();
  const Mat &s = w.value();
  if (a.rows() != s.rows() || s.cols() != heads || a.cols() % heads != 0)
    throw ShapeError("head_scale: shape mismatch");
  const int dh = static_cast<int>(a.cols()) / heads;
  Mat out(a.rows(), a.cols());
  for (int h = 0; h < heads; ++h)
    out.middleCols(h * dh, dh) =
        a.middleCols(h * dh, dh).array().colwise() * s.col(h).array();
  return make(std::move(out), { v, w }, [heads, dh](Node &n) {
    const Mat &a = P(n, 0).val();
    const Mat &s = P(n, 1).val();
    if (P(n, 0).requires_grad) {
      Mat da(a.rows(), a.cols());
      for (int h = 0; h < heads; ++h)
        da.middleCols(h * dh, dh) =
            n.grad.middleCols(h * dh, dh).array().colwise() * s.col(h).array();
      acc(P(n, 0), da);
    }
    if (P(n, 1).requires_grad) {
      Mat ds(s.rows(), heads);
      for (int h = 0; h < heads; ++h)
        ds.col(h) = n.grad.middleCols(h * dh, dh)
                        .cwiseProduct(a.middleCols(h * dh, dh))
                        .rowwise()
                        .sum();
      acc(P(n, 1), ds);
    }
  });
}

Var dropout(const Var &a, double p, Rng &rng) {
  if (p <= 0)
    return a;
  const Mat &x = a.value();
  Mat mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = uniform01(rng) < p ? 0.0 : keep;
  return make(x.cwiseProduct(mask), { a }, [mask = std::move(mask)](Node &n) {
    acc(P(n, 0), n.grad.cwiseProduct(mask));
  });
}

Var custom(Mat value, const std::vector<Var> &parents, BackwardFn backward) {
  return make_n(std::move(value), parents, [backward](Node &n) {
    auto grads = backward(n.grad);
    for (std::size_t i = 0; i < grads.size() && i < n.parents.size(); ++i)
      if (grads[i].size() > 0)
        acc(*n.parents[i], grads[i]);
  });
}

}  // namespace madgen::nn
