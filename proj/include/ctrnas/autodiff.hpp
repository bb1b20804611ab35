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

#ifndef CTRNAS_AUTODIFF_HPP_
#define CTRNAS_AUTODIFF_HPP_

// Reverse-mode automatic differentiation over dense double tensors.
//
// Values are reference-counted handles. A Tape records every primitive whose
// inputs require gradients, in execution order, so a reverse sweep over the
// tape visits each node after all of its consumers. Leaf gradients accumulate
// across backward calls until they are reset with zero_grad().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctrnas::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Primitive : std::uint8_t {
  kAdd,
  kMul,
  kScale,
  kMatmul,
  kBatchedMatmul,
  kFieldMix,
  kRelu,
  kSigmoid,
  kExp,
  kLog,
  kSoftmax,
  kSum,
  kMean,
  kSumAll,
  kConcat,
  kReshape,
  kGatherRows,
  kBatchNorm,
  kRmsNormalize,
  kWeightedSum,
  kScaleRows,
  kPairwiseInner,
  kBinaryCrossEntropy,
};

std::string_view primitive_name(Primitive kind);

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(Primitive kind, const Shape& lhs, const Shape& rhs);
  ShapeError(Primitive kind, const Shape& shape, const std::string& what);
};

class BackwardError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // Identity of the tape that produced this node, null for leaves.
  const void* tape = nullptr;
};

class Value {
 public:
  Value() = default;

  static Value leaf(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Value zeros(Shape shape, bool requires_grad = false);
  static Value scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  std::span<double> grad() { return node_->grad; }
  std::span<const double> grad() const { return node_->grad; }
  std::vector<double>& data_vec() { return node_->data; }
  const std::vector<double>& data_vec() const { return node_->data; }

  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad();

  bool is_leaf() const { return node_->tape == nullptr; }
  bool same_node(const Value& other) const { return node_ == other.node_; }

  Node& node() { return *node_; }
  const Node& node() const { return *node_; }

 private:
  explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend class Tape;
};

// Copies of the data; independent storage.
Value clone(const Value& v, bool requires_grad = false);

class Tape {
 public:
  // A non-recording tape evaluates primitives without saving anything,
  // for inference and metric passes.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  using BackwardFn = std::function<void(const Node& out, std::vector<Value>& inputs)>;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }
  Primitive kind_at(std::size_t i) const { return entries_.at(i).kind; }

  // Creates the output value. The entry is recorded only when the tape is
  // recording and any input requires a gradient.
  Value emit(Primitive kind, std::vector<Value> inputs, Shape shape, std::vector<double> data,
             BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Gradients of
  // intermediate nodes are reset first; leaf gradients accumulate.
  void backward(Value& loss);

 private:
  struct Entry {
    Primitive kind;
    std::vector<Value> inputs;
    Value output;
    BackwardFn backward;
  };
  bool recording_;
  std::vector<Entry> entries_;
};

void zero_grads(std::span<Value> values);

// Elementwise a + b. b may have the shape of a or of a trailing suffix of a's
// shape, in which case it is broadcast over the leading axes.
Value add(Tape& t, const Value& a, const Value& b);
Value mul(Tape& t, const Value& a, const Value& b);
Value scale(Tape& t, const Value& a, double factor);

// 2-D (n,p) x (p,q).
Value matmul(Tape& t, const Value& a, const Value& b);
// 3-D batched (B,n,p) x (B,p,q), or (B,n,p) x (B,q,p)^T when transpose_b.
Value bmm(Tape& t, const Value& a, const Value& b, bool transpose_b = false);
// Shared left factor: c (r,m) applied to every x_b (m,k), giving (B,r,k).
Value field_mix(Tape& t, const Value& c, const Value& x);

Value relu(Tape& t, const Value& a);
Value sigmoid(Tape& t, const Value& a);
Value exp(Tape& t, const Value& a);
Value log(Tape& t, const Value& a);

Value softmax(Tape& t, const Value& a, std::size_t axis);
Value sum(Tape& t, const Value& a, std::size_t axis);
Value mean(Tape& t, const Value& a, std::size_t axis);
Value sum_all(Tape& t, const Value& a);

Value concat(Tape& t, const std::vector<Value>& parts, std::size_t axis);
Value reshape(Tape& t, const Value& a, Shape shape);

// Rows of table (V,k) selected by index; output (indices.size(), k).
Value gather_rows(Tape& t, const Value& table, std::span<const std::size_t> indices);

// x (B,m,k): each field i is standardized with the mean and biased variance
// of its B*k entries. Scale 1, shift 0.
Value batch_norm(Tape& t, const Value& x, double eps = 1e-5);

// Divides each leading-axis slice by its root-mean-square entry plus eps.
Value rms_normalize(Tape& t, const Value& x, double eps = 1e-12);

// sum_i w[i] * xs[i]; all xs share a shape, w has xs.size() entries.
Value weighted_sum(Tape& t, const std::vector<Value>& xs, const Value& w);

// x (B,m,k), a (B,m): row i of sample b scaled by a[b,i].
Value scale_rows(Tape& t, const Value& x, const Value& a);

// x (B,m,k) -> (B, m(m-1)/2) of <x_i, x_j> for i<j in row-major pair order.
Value pairwise_inner(Tape& t, const Value& x);

// Mean binary cross-entropy of probabilities against 0/1 labels. Probabilities
// are clipped to [clip, 1-clip]; the gradient is zero outside that range.
Value binary_cross_entropy(Tape& t, const Value& prob, std::span<const double> labels,
                           double clip = 1e-7);

// Largest relative deviation between the backward gradient of f at input and
// central differences with step eps. Each coordinate's error is
// |g - fd| / max(|g|, |fd|, floor).
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};
GradCheckResult grad_check(const std::function<Value(Tape&, const Value&)>& f, const Value& input,
                           double eps = 1e-5, double floor = 1e-3);

}  // namespace ctrnas::ad

#endif  // CTRNAS_AUTODIFF_HPP_
