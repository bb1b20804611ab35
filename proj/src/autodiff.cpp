// Copyright 2026 The ctrnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctrnas/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ctrnas::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Splits a shape around one axis: outer * n * inner == numel.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_rank(Primitive kind, const Value& v, std::size_t rank) {
  if (v.rank() != rank) {
    throw ShapeError(kind, v.shape(), "expected rank " + std::to_string(rank));
  }
}

void require_axis(Primitive kind, const Value& v, std::size_t axis) {
  if (axis >= v.rank()) {
    throw ShapeError(kind, v.shape(), "axis " + std::to_string(axis) + " out of range");
  }
}

bool is_suffix(const Shape& shape, const Shape& suffix) {
  if (suffix.size() > shape.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), shape.rbegin());
}

template <typename F>
Value unary(Tape& t, Primitive kind, const Value& a, F&& f,
            std::function<double(double x, double y)> dfdx) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return t.emit(kind, {a}, a.shape(), std::move(out),
                [dfdx = std::move(dfdx)](const Node& o, std::vector<Value>& inputs) {
                  auto& x = inputs[0];
                  auto gx = x.grad();
                  const auto xd = x.data();
                  for (std::size_t i = 0; i < gx.size(); ++i) {
                    gx[i] += o.grad[i] * dfdx(xd[i], o.data[i]);
                  }
                });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::kAdd: return "add";
    case Primitive::kMul: return "mul";
    case Primitive::kScale: return "scale";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kBatchedMatmul: return "bmm";
    case Primitive::kFieldMix: return "field_mix";
    case Primitive::kRelu: return "relu";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
    case Primitive::kSumAll: return "sum_all";
    case Primitive::kConcat: return "concat";
    case Primitive::kReshape: return "reshape";
    case Primitive::kGatherRows: return "gather_rows";
    case Primitive::kBatchNorm: return "batch_norm";
    case Primitive::kRmsNormalize: return "rms_normalize";
    case Primitive::kWeightedSum: return "weighted_sum";
    case Primitive::kScaleRows: return "scale_rows";
    case Primitive::kPairwiseInner: return "pairwise_inner";
    case Primitive::kBinaryCrossEntropy: return "binary_cross_entropy";
  }
  return "unknown";
}

ShapeError::ShapeError(Primitive kind, const Shape& lhs, const Shape& rhs)
    : std::invalid_argument(std::string(primitive_name(kind)) + ": shape mismatch " +
                            to_string(lhs) + " vs " + to_string(rhs)) {}

ShapeError::ShapeError(Primitive kind, const Shape& shape, const std::string& what)
    : std::invalid_argument(std::string(primitive_name(kind)) + ": " + what + ", got " +
                            to_string(shape)) {}

Value Value::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("Value::leaf: shape " + to_string(shape) + " does not hold " +
                                std::to_string(data.size()) + " elements");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->grad.assign(data.size(), 0.0);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Value(std::move(node));
}

Value Value::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Value Value::scalar(double v, bool requires_grad) { return leaf({}, {v}, requires_grad); }

double Value::item() const {
  if (size() != 1) {
    throw std::invalid_argument("Value::item: not a scalar, shape " + to_string(shape()));
  }
  return node_->data[0];
}

void Value::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Value clone(const Value& v, bool requires_grad) {
  return Value::leaf(v.shape(), v.data_vec(), requires_grad);
}

void zero_grads(std::span<Value> values) {
  for (auto& v : values) v.zero_grad();
}

Value Tape::emit(Primitive kind, std::vector<Value> inputs, Shape shape, std::vector<double> data,
                 BackwardFn backward) {
  const bool needs = recording_ && std::any_of(inputs.begin(), inputs.end(), [](const Value& v) {
                       return v.requires_grad();
                     });
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = needs;
  if (needs) {
    node->grad.assign(node->data.size(), 0.0);
    node->tape = this;
  }
  Value out(std::move(node));
  if (needs) entries_.push_back({kind, std::move(inputs), out, std::move(backward)});
  return out;
}

void Tape::backward(Value& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw BackwardError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (loss.node().tape != this) {
    throw BackwardError("backward: loss was not recorded on this tape");
  }
  for (auto& e : entries_) e.output.zero_grad();
  loss.grad()[0] = 1.0;
  // Backward functions write only into inputs that require a gradient.
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward(it->output.node(), it->inputs);
  }
}

// ---------------------------------------------------------------------------
// Elementwise.

Value add(Tape& t, const Value& a, const Value& b) {
  if (!is_suffix(a.shape(), b.shape())) throw ShapeError(Primitive::kAdd, a.shape(), b.shape());
  const std::size_t period = b.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % period];
  return t.emit(Primitive::kAdd, {a, b}, a.shape(), std::move(out),
                [period](const Node& o, std::vector<Value>& in) {
                  if (in[0].requires_grad()) {
                    auto ga = in[0].grad();
                    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
                  }
                  if (in[1].requires_grad()) {
                    auto gb = in[1].grad();
                    for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % period] += o.grad[i];
                  }
                });
}

Value mul(Tape& t, const Value& a, const Value& b) {
  if (a.shape() != b.shape()) throw ShapeError(Primitive::kMul, a.shape(), b.shape());
  std::vector<double> out(a.size());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return t.emit(Primitive::kMul, {a, b}, a.shape(), std::move(out),
                [](const Node& o, std::vector<Value>& in) {
                  const auto ad = in[0].data();
                  const auto bd = in[1].data();
                  if (in[0].requires_grad()) {
                    auto ga = in[0].grad();
                    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bd[i];
                  }
                  if (in[1].requires_grad()) {
                    auto gb = in[1].grad();
                    for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * ad[i];
                  }
                });
}

Value scale(Tape& t, const Value& a, double factor) {
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
  return t.emit(Primitive::kScale, {a}, a.shape(), std::move(out),
                [factor](const Node& o, std::vector<Value>& in) {
                  auto ga = in[0].grad();
                  for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * factor;
                });
}

Value relu(Tape& t, const Value& a) {
  // Subgradient 0 at the kink.
  return unary(
      t, Primitive::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(Tape& t, const Value& a) {
  return unary(
      t, Primitive::kSigmoid, a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Value exp(Tape& t, const Value& a) {
  return unary(
      t, Primitive::kExp, a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Value log(Tape& t, const Value& a) {
  return unary(
      t, Primitive::kLog, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Products.

Value matmul(Tape& t, const Value& a, const Value& b) {
  require_rank(Primitive::kMatmul, a, 2);
  require_rank(Primitive::kMatmul, b, 2);
  if (a.dim(1) != b.dim(0)) throw ShapeError(Primitive::kMatmul, a.shape(), b.shape());
  const auto n = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<double> out(n * q);
  MatMap(out.data(), n, q).noalias() =
      ConstMatMap(a.data().data(), n, p) * ConstMatMap(b.data().data(), p, q);
  return t.emit(Primitive::kMatmul, {a, b}, {n, q}, std::move(out),
                [n, p, q](const Node& o, std::vector<Value>& in) {
                  ConstMatMap g(o.grad.data(), n, q);
                  if (in[0].requires_grad()) {
                    MatMap(in[0].grad().data(), n, p).noalias() +=
                        g * ConstMatMap(in[1].data().data(), p, q).transpose();
                  }
                  if (in[1].requires_grad()) {
                    MatMap(in[1].grad().data(), p, q).noalias() +=
                        ConstMatMap(in[0].data().data(), n, p).transpose() * g;
                  }
                });
}

Value bmm(Tape& t, const Value& a, const Value& b, bool transpose_b) {
  require_rank(Primitive::kBatchedMatmul, a, 3);
  require_rank(Primitive::kBatchedMatmul, b, 3);
  const auto batch = a.dim(0), n = a.dim(1), p = a.dim(2);
  const auto bp = transpose_b ? b.dim(2) : b.dim(1);
  const auto q = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != batch || bp != p) {
    throw ShapeError(Primitive::kBatchedMatmul, a.shape(), b.shape());
  }
  std::vector<double> out(batch * n * q);
  const std::size_t sa = n * p, sb = p * q, so = n * q;
  for (std::size_t s = 0; s < batch; ++s) {
    ConstMatMap A(a.data().data() + s * sa, n, p);
    MatMap O(out.data() + s * so, n, q);
    if (transpose_b) {
      O.noalias() = A * ConstMatMap(b.data().data() + s * sb, q, p).transpose();
    } else {
      O.noalias() = A * ConstMatMap(b.data().data() + s * sb, p, q);
    }
  }
  return t.emit(
      Primitive::kBatchedMatmul, {a, b}, {batch, n, q}, std::move(out),
      [=](const Node& o, std::vector<Value>& in) {
        for (std::size_t s = 0; s < batch; ++s) {
          ConstMatMap G(o.grad.data() + s * so, n, q);
          ConstMatMap A(in[0].data().data() + s * sa, n, p);
          MatMap GA(in[0].grad().data() + s * sa, n, p);
          if (transpose_b) {
            ConstMatMap B(in[1].data().data() + s * sb, q, p);
            MatMap GB(in[1].grad().data() + s * sb, q, p);
            if (in[0].requires_grad()) GA.noalias() += G * B;
            if (in[1].requires_grad()) GB.noalias() += G.transpose() * A;
          } else {
            ConstMatMap B(in[1].data().data() + s * sb, p, q);
            MatMap GB(in[1].grad().data() + s * sb, p, q);
            if (in[0].requires_grad()) GA.noalias() += G * B.transpose();
            if (in[1].requires_grad()) GB.noalias() += A.transpose() * G;
          }
        }
      });
}

Value field_mix(Tape& t, const Value& c, const Value& x) {
  require_rank(Primitive::kFieldMix, c, 2);
  require_rank(Primitive::kFieldMix, x, 3);
  if (c.dim(1) != x.dim(1)) throw ShapeError(Primitive::kFieldMix, c.shape(), x.shape());
  const auto batch = x.dim(0), m = x.dim(1), k = x.dim(2), r = c.dim(0);
  std::vector<double> out(batch * r * k);
  ConstMatMap C(c.data().data(), r, m);
  for (std::size_t s = 0; s < batch; ++s) {
    MatMap(out.data() + s * r * k, r, k).noalias() =
        C * ConstMatMap(x.data().data() + s * m * k, m, k);
  }
  return t.emit(Primitive::kFieldMix, {c, x}, {batch, r, k}, std::move(out),
                [=](const Node& o, std::vector<Value>& in) {
                  ConstMatMap C(in[0].data().data(), r, m);
                  MatMap GC(in[0].grad().data(), r, m);
                  for (std::size_t s = 0; s < batch; ++s) {
                    ConstMatMap G(o.grad.data() + s * r * k, r, k);
                    if (in[0].requires_grad()) {
                      GC.noalias() +=
                          G * ConstMatMap(in[1].data().data() + s * m * k, m, k).transpose();
                    }
                    if (in[1].requires_grad()) {
                      MatMap(in[1].grad().data() + s * m * k, m, k).noalias() +=
                          C.transpose() * G;
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations.

Value softmax(Tape& t, const Value& a, std::size_t axis) {
  require_axis(Primitive::kSoftmax, a, axis);
  const auto s = split_at(a.shape(), axis);
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < s.n; ++j) mx = std::max(mx, in[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(in[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= z;
    }
  }
  return t.emit(Primitive::kSoftmax, {a}, a.shape(), std::move(out),
                [s](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  for (std::size_t oo = 0; oo < s.outer; ++oo) {
                    for (std::size_t i = 0; i < s.inner; ++i) {
                      const std::size_t base = oo * s.n * s.inner + i;
                      double dot = 0.0;
                      for (std::size_t j = 0; j < s.n; ++j) {
                        dot += o.grad[base + j * s.inner] * o.data[base + j * s.inner];
                      }
                      for (std::size_t j = 0; j < s.n; ++j) {
                        const std::size_t idx = base + j * s.inner;
                        g[idx] += o.data[idx] * (o.grad[idx] - dot);
                      }
                    }
                  }
                });
}

namespace {

Value reduce_axis(Tape& t, Primitive kind, const Value& a, std::size_t axis, double factor) {
  require_axis(kind, a, axis);
  const auto s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += in[(o * s.n + j) * s.inner + i];
      }
    }
  }
  for (auto& v : out) v *= factor;
  return t.emit(kind, {a}, std::move(shape), std::move(out),
                [s, factor](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  for (std::size_t oo = 0; oo < s.outer; ++oo) {
                    for (std::size_t j = 0; j < s.n; ++j) {
                      for (std::size_t i = 0; i < s.inner; ++i) {
                        g[(oo * s.n + j) * s.inner + i] += factor * o.grad[oo * s.inner + i];
                      }
                    }
                  }
                });
}

}  // namespace

Value sum(Tape& t, const Value& a, std::size_t axis) {
  return reduce_axis(t, Primitive::kSum, a, axis, 1.0);
}

Value mean(Tape& t, const Value& a, std::size_t axis) {
  require_axis(Primitive::kMean, a, axis);
  return reduce_axis(t, Primitive::kMean, a, axis, 1.0 / static_cast<double>(a.dim(axis)));
}

Value sum_all(Tape& t, const Value& a) {
  const auto d = a.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return t.emit(Primitive::kSumAll, {a}, {}, {total}, [](const Node& o, std::vector<Value>& in) {
    for (auto& g : in[0].grad()) g += o.grad[0];
  });
}

Value batch_norm(Tape& t, const Value& x, double eps) {
  require_rank(Primitive::kBatchNorm, x, 3);
  const auto batch = x.dim(0), m = x.dim(1), k = x.dim(2);
  const double count = static_cast<double>(batch * k);
  std::vector<double> out(x.size());
  std::vector<double> inv_std(m);
  const auto in = x.data();
  for (std::size_t f = 0; f < m; ++f) {
    double mu = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < k; ++c) mu += in[(b * m + f) * k + c];
    }
    mu /= count;
    double var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < k; ++c) {
        const double d = in[(b * m + f) * k + c] - mu;
        var += d * d;
      }
    }
    var /= count;
    inv_std[f] = 1.0 / std::sqrt(var + eps);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < k; ++c) {
        const auto idx = (b * m + f) * k + c;
        out[idx] = (in[idx] - mu) * inv_std[f];
      }
    }
  }
  return t.emit(Primitive::kBatchNorm, {x}, x.shape(), std::move(out),
                [=, inv_std = std::move(inv_std)](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  for (std::size_t f = 0; f < m; ++f) {
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (std::size_t b = 0; b < batch; ++b) {
                      for (std::size_t c = 0; c < k; ++c) {
                        const auto idx = (b * m + f) * k + c;
                        mean_g += o.grad[idx];
                        mean_gy += o.grad[idx] * o.data[idx];
                      }
                    }
                    mean_g /= count;
                    mean_gy /= count;
                    for (std::size_t b = 0; b < batch; ++b) {
                      for (std::size_t c = 0; c < k; ++c) {
                        const auto idx = (b * m + f) * k + c;
                        g[idx] += inv_std[f] * (o.grad[idx] - mean_g - o.data[idx] * mean_gy);
                      }
                    }
                  }
                });
}

Value rms_normalize(Tape& t, const Value& x, double eps) {
  if (x.rank() < 1 || x.dim(0) == 0) {
    throw ShapeError(Primitive::kRmsNormalize, x.shape(), "expected a leading sample axis");
  }
  const auto rows = x.dim(0);
  const auto n = x.size() / rows;
  std::vector<double> out(x.size());
  std::vector<double> rms(rows);
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += in[r * n + i] * in[r * n + i];
    rms[r] = std::sqrt(ss / static_cast<double>(n));
    const double inv = 1.0 / (rms[r] + eps);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = in[r * n + i] * inv;
  }
  return t.emit(Primitive::kRmsNormalize, {x}, x.shape(), std::move(out),
                [=, rms = std::move(rms)](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  const auto xd = in[0].data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double d = rms[r] + eps;
                    double gx = 0.0;
                    for (std::size_t i = 0; i < n; ++i) gx += o.grad[r * n + i] * xd[r * n + i];
                    // d rms / dx_i = x_i / (n * rms); undefined at rms = 0 where x = 0.
                    const double coupling =
                        rms[r] > 0.0 ? gx / (d * d * rms[r] * static_cast<double>(n)) : 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                      g[r * n + i] += o.grad[r * n + i] / d - xd[r * n + i] * coupling;
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Structural.

Value concat(Tape& t, const std::vector<Value>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const auto& first = parts.front();
  require_axis(Primitive::kConcat, first, axis);
  Shape shape = first.shape();
  shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.rank()) throw ShapeError(Primitive::kConcat, first.shape(), probe);
    probe[axis] = first.dim(axis);
    if (probe != first.shape()) throw ShapeError(Primitive::kConcat, first.shape(), p.shape());
    shape[axis] += p.dim(axis);
  }
  const auto s = split_at(shape, axis);
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto w = p.dim(axis) * s.inner;
    widths.push_back(w);
    const auto d = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * s.n * s.inner + offset));
    }
    offset += w;
  }
  const std::size_t row = s.n * s.inner;
  return t.emit(Primitive::kConcat, parts, shape, std::move(out),
                [=, widths = std::move(widths)](const Node& o, std::vector<Value>& in) {
                  std::size_t off = 0;
                  for (std::size_t p = 0; p < in.size(); ++p) {
                    const auto w = widths[p];
                    if (in[p].requires_grad()) {
                      auto g = in[p].grad();
                      for (std::size_t oo = 0; oo < s.outer; ++oo) {
                        for (std::size_t i = 0; i < w; ++i) {
                          g[oo * w + i] += o.grad[oo * row + off + i];
                        }
                      }
                    }
                    off += w;
                  }
                });
}

Value reshape(Tape& t, const Value& a, Shape shape) {
  if (numel(shape) != a.size()) throw ShapeError(Primitive::kReshape, a.shape(), shape);
  return t.emit(Primitive::kReshape, {a}, std::move(shape), a.data_vec(),
                [](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                });
}

Value gather_rows(Tape& t, const Value& table, std::span<const std::size_t> indices) {
  require_rank(Primitive::kGatherRows, table, 2);
  const auto rows = table.dim(0), k = table.dim(1);
  std::vector<double> out(indices.size() * k);
  const auto d = table.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw ShapeError(Primitive::kGatherRows, table.shape(),
                       "row index " + std::to_string(indices[r]) + " out of range");
    }
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(indices[r] * k), k,
                out.begin() + static_cast<std::ptrdiff_t>(r * k));
  }
  std::vector<std::size_t> saved(indices.begin(), indices.end());
  return t.emit(Primitive::kGatherRows, {table}, {indices.size(), k}, std::move(out),
                [k, saved = std::move(saved)](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  for (std::size_t r = 0; r < saved.size(); ++r) {
                    for (std::size_t c = 0; c < k; ++c) g[saved[r] * k + c] += o.grad[r * k + c];
                  }
                });
}

Value weighted_sum(Tape& t, const std::vector<Value>& xs, const Value& w) {
  if (xs.empty()) throw std::invalid_argument("weighted_sum: no inputs");
  if (w.size() != xs.size()) {
    throw ShapeError(Primitive::kWeightedSum, w.shape(),
                     "expected " + std::to_string(xs.size()) + " weights");
  }
  const auto& shape = xs.front().shape();
  for (const auto& x : xs) {
    if (x.shape() != shape) throw ShapeError(Primitive::kWeightedSum, shape, x.shape());
  }
  std::vector<double> out(xs.front().size(), 0.0);
  const auto wd = w.data();
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto d = xs[j].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wd[j] * d[i];
  }
  std::vector<Value> inputs = xs;
  inputs.push_back(w);
  const std::size_t n = xs.size();
  return t.emit(Primitive::kWeightedSum, std::move(inputs), shape, std::move(out),
                [n](const Node& o, std::vector<Value>& in) {
                  auto& wv = in[n];
                  const auto wd = wv.data();
                  for (std::size_t j = 0; j < n; ++j) {
                    if (wv.requires_grad()) {
                      const auto d = in[j].data();
                      double dot = 0.0;
                      for (std::size_t i = 0; i < d.size(); ++i) dot += o.grad[i] * d[i];
                      wv.grad()[j] += dot;
                    }
                    if (in[j].requires_grad()) {
                      auto g = in[j].grad();
                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += wd[j] * o.grad[i];
                    }
                  }
                });
}

Value scale_rows(Tape& t, const Value& x, const Value& a) {
  require_rank(Primitive::kScaleRows, x, 3);
  require_rank(Primitive::kScaleRows, a, 2);
  if (a.dim(0) != x.dim(0) || a.dim(1) != x.dim(1)) {
    throw ShapeError(Primitive::kScaleRows, x.shape(), a.shape());
  }
  const auto rows = a.size(), k = x.dim(2);
  std::vector<double> out(x.size());
  const auto xd = x.data();
  const auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] = ad[r] * xd[r * k + c];
  }
  return t.emit(Primitive::kScaleRows, {x, a}, x.shape(), std::move(out),
                [rows, k](const Node& o, std::vector<Value>& in) {
                  const auto xd = in[0].data();
                  const auto ad = in[1].data();
                  const bool want_x = in[0].requires_grad();
                  const bool want_a = in[1].requires_grad();
                  for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < k; ++c) {
                      if (want_x) in[0].grad()[r * k + c] += ad[r] * o.grad[r * k + c];
                      dot += xd[r * k + c] * o.grad[r * k + c];
                    }
                    if (want_a) in[1].grad()[r] += dot;
                  }
                });
}

Value pairwise_inner(Tape& t, const Value& x) {
  require_rank(Primitive::kPairwiseInner, x, 3);
  const auto batch = x.dim(0), m = x.dim(1), k = x.dim(2);
  if (m < 2) throw ShapeError(Primitive::kPairwiseInner, x.shape(), "needs at least 2 fields");
  const auto pairs = m * (m - 1) / 2;
  std::vector<double> out(batch * pairs);
  const auto d = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = d.data() + b * m * k;
    std::size_t p = 0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j, ++p) {
        double dot = 0.0;
        for (std::size_t c = 0; c < k; ++c) dot += xb[i * k + c] * xb[j * k + c];
        out[b * pairs + p] = dot;
      }
    }
  }
  return t.emit(Primitive::kPairwiseInner, {x}, {batch, pairs}, std::move(out),
                [=](const Node& o, std::vector<Value>& in) {
                  const auto d = in[0].data();
                  auto g = in[0].grad();
                  for (std::size_t b = 0; b < batch; ++b) {
                    const double* xb = d.data() + b * m * k;
                    double* gb = g.data() + b * m * k;
                    std::size_t p = 0;
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = i + 1; j < m; ++j, ++p) {
                        const double go = o.grad[b * pairs + p];
                        for (std::size_t c = 0; c < k; ++c) {
                          gb[i * k + c] += go * xb[j * k + c];
                          gb[j * k + c] += go * xb[i * k + c];
                        }
                      }
                    }
                  }
                });
}

Value binary_cross_entropy(Tape& t, const Value& prob, std::span<const double> labels,
                           double clip) {
  if (prob.size() != labels.size()) {
    throw ShapeError(Primitive::kBinaryCrossEntropy, prob.shape(),
                     std::to_string(labels.size()) + " labels given");
  }
  if (labels.empty()) {
    throw ShapeError(Primitive::kBinaryCrossEntropy, prob.shape(), "empty batch");
  }
  const auto n = static_cast<double>(labels.size());
  const auto p = prob.data();
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double c = std::clamp(p[i], clip, 1.0 - clip);
    total -= labels[i] * std::log(c) + (1.0 - labels[i]) * std::log(1.0 - c);
  }
  std::vector<double> y(labels.begin(), labels.end());
  return t.emit(Primitive::kBinaryCrossEntropy, {prob}, {}, {total / n},
                [n, clip, y = std::move(y)](const Node& o, std::vector<Value>& in) {
                  auto g = in[0].grad();
                  const auto p = in[0].data();
                  for (std::size_t i = 0; i < y.size(); ++i) {
                    if (p[i] < clip || p[i] > 1.0 - clip) continue;
                    g[i] -= o.grad[0] * (y[i] / p[i] - (1.0 - y[i]) / (1.0 - p[i])) / n;
                  }
                });
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Value(Tape&, const Value&)>& f, const Value& input,
                           double eps, double floor) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  Value x = input;
  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  std::vector<double> analytic(x.size(), 0.0);
  {
    Tape tape;
    Value y = f(tape, x);
    if (y.size() != 1) throw BackwardError("grad_check: function is not scalar-valued");
    if (!std::isfinite(y.item())) throw std::domain_error("grad_check: non-finite output at x");
    // A constant output is never recorded; its gradient is exactly zero.
    if (y.requires_grad()) {
      tape.backward(y);
      std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    }
  }
  auto eval = [&](std::size_t i, double delta) {
    Tape tape(false);
    const double saved = x.data()[i];
    x.data()[i] = saved + delta;
    const double out = f(tape, x).item();
    x.data()[i] = saved;
    if (!std::isfinite(out)) {
      throw std::domain_error("grad_check: non-finite output when perturbing coordinate " +
                              std::to_string(i));
    }
    return out;
  };
  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = (eval(i, eps) - eval(i, -eps)) / (2.0 * eps);
    const double err = std::abs(analytic[i] - fd) /
                       std::max({std::abs(analytic[i]), std::abs(fd), floor});
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  x.zero_grad();
  x.set_requires_grad(had_grad);
  return result;
}

}  // namespace ctrnas::ad
