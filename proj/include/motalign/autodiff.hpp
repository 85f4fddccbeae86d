#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "motalign/tensor.hpp"

namespace motalign::ad {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; only valid while the
// graph is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph& graph() const;
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// A trainable tensor. Backward passes over independent graphs accumulate into
// grad in call order.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;

  void zero_grad();
};

class Graph;

// View handed to an op's backward rule.
class BackwardContext {
 public:
  BackwardContext(Graph& graph, std::uint32_t node) : graph_(graph), node_(node) {}

  std::span<const double> out_grad() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  // Accumulator for input i; allocated (zeroed) on first use.
  std::span<double> input_grad(std::size_t i) const;

 private:
  Graph& graph_;
  std::uint32_t node_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Define-by-run tape. Nodes are appended in creation order, which is a
// topological order because an op can only consume existing nodes.
// A graph supports exactly one backward pass.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Input whose gradient is tracked iff t.requires_grad().
  Var leaf(Tensor t);
  // Input that never receives a gradient.
  Var constant(Tensor t);
  // Leaf whose gradient accumulates into p.grad.
  Var parameter(Parameter& p);

  // Used by op implementations. `backward` is dropped when no input needs a
  // gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Gradient of the last backward root with respect to v. Zero tensor when
  // nothing flowed into v.
  Tensor grad(Var v) const;

  void backward(Var root);
  bool consumed() const noexcept { return consumed_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::vector<double> grad;
    std::span<double> external_grad;
  };

  void check_owned(Var v) const;
  std::span<double> grad_buffer(std::uint32_t id);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// ---- operations -----------------------------------------------------------
// Shapes must match exactly; the only implicit broadcast is a scalar factor
// and add_bias along the trailing axis.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
// x[..., n] + bias[n]
Var add_bias(Var x, Var bias);
// Tanh approximation.
Var gelu(Var x);
Var softmax(Var x, std::size_t axis);
// Normalises over the trailing axis; gamma and beta have shape [n].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var sum(Var x);
Var mean(Var x);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(Var x, Shape shape);
Var l2_norm(Var x);
Var dot(Var a, Var b);
// Throws DegenerateError when either norm is at or below 1e-12.
Var cosine_similarity(Var a, Var b);

inline constexpr double kCosineEps = 1e-12;

}  // namespace motalign::ad
