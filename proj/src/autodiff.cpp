#include "motalign/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "motalign/error.hpp"

namespace motalign::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Graph& same_graph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) throw ContractError(std::string(op) + ": operands live on different graphs");
  return a.graph();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// tanh through one exp; glibc's tanh is about twice as slow and GELU sits on
// the hot path of every feed-forward block.
inline double fast_tanh(double u) {
  if (u > 20.0) return 1.0;
  if (u < -20.0) return -1.0;
  return 1.0 - 2.0 / (std::exp(2.0 * u) + 1.0);
}

}  // namespace

// ---- Var / Parameter -------------------------------------------------------

Graph& Var::graph() const {
  if (!graph_) throw ContractError("use of an unbound Var");
  return *graph_;
}

const Tensor& Var::value() const { return graph().value(*this); }
bool Var::requires_grad() const { return graph().requires_grad(*this); }

void Parameter::zero_grad() { grad.assign(value.size(), 0.0); }

// ---- BackwardContext -------------------------------------------------------

std::span<const double> BackwardContext::out_grad() const { return graph_.nodes_[node_].grad; }

const Tensor& BackwardContext::output() const { return graph_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs.at(i)].value;
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs.at(i)].requires_grad;
}

std::span<double> BackwardContext::input_grad(std::size_t i) const {
  const auto id = graph_.nodes_[node_].inputs.at(i);
  if (!graph_.nodes_[id].requires_grad) return {};
  return graph_.grad_buffer(id);
}

// ---- Graph -----------------------------------------------------------------

Var Graph::leaf(Tensor t) {
  Node n;
  n.requires_grad = t.requires_grad();
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::constant(Tensor t) {
  t.set_requires_grad(false);
  return leaf(std::move(t));
}

Var Graph::parameter(Parameter& p) {
  if (p.grad.size() != p.value.size()) p.zero_grad();
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.external_grad = p.grad;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw ContractError("graph already consumed by backward; rebuild it with a new forward pass");
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    check_owned(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Graph::check_owned(Var v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw ContractError("Var does not belong to this graph");
}

const Tensor& Graph::value(Var v) const {
  check_owned(v);
  return nodes_[v.id()].value;
}

bool Graph::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].requires_grad;
}

std::span<double> Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.external_grad.empty()) return n.external_grad;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  if (!n.external_grad.empty()) {
    return Tensor(n.value.shape(), std::vector<double>(n.external_grad.begin(), n.external_grad.end()));
  }
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

void Graph::backward(Var root) {
  check_owned(root);
  if (consumed_) throw ContractError("backward called twice on the same graph");
  if (nodes_[root.id()].value.size() != 1) {
    throw ContractError("backward root must be a scalar, got shape " +
                        shape_string(nodes_[root.id()].value.shape()));
  }
  consumed_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id())[0] += 1.0;
  for (std::int64_t id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || (n.grad.empty() && n.external_grad.empty())) continue;
    n.backward(BackwardContext(*this, static_cast<std::uint32_t>(id)));
  }
  // Release intermediate buffers of non-leaf nodes; leaf grads stay readable.
  for (auto& n : nodes_) {
    if (n.backward) std::vector<double>().swap(n.grad);
  }
}

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()));
  }
  const auto m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(av.data().data(), m, k) * ConstMap(bv.data().data(), k, n);
  return g.record(Tensor({m, n}, std::move(out)), {a, b}, [m, k, n](const BackwardContext& ctx) {
    ConstMap dc(ctx.out_grad().data(), m, n);
    if (ctx.needs_grad(0)) {
      MutMap(ctx.input_grad(0).data(), m, k).noalias() += dc * ConstMap(ctx.input(1).data().data(), k, n).transpose();
    }
    if (ctx.needs_grad(1)) {
      MutMap(ctx.input_grad(1).data(), k, n).noalias() += ConstMap(ctx.input(0).data().data(), m, k).transpose() * dc;
    }
  });
}

Var transpose(Var a) {
  const auto& av = a.value();
  if (av.rank() != 2) throw DimensionError("transpose: needs rank 2, got " + shape_string(av.shape()));
  const auto m = av.dim(0), n = av.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(av.data().data(), m, n).transpose();
  return a.graph().record(Tensor({n, m}, std::move(out)), {a}, [m, n](const BackwardContext& ctx) {
    MutMap(ctx.input_grad(0).data(), m, n) += ConstMap(ctx.out_grad().data(), n, m).transpose();
  });
}

namespace {

template <typename Fwd>
Var binary_elementwise(Var a, Var b, const char* name, Fwd fwd, int kind) {
  Graph& g = same_graph(a, b, name);
  require_same_shape(a, b, name);
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return g.record(Tensor(a.shape(), std::move(out)), {a, b}, [kind](const BackwardContext& ctx) {
    const auto go = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      if (kind == 2) {
        const auto bv2 = ctx.input(1).data();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
      } else {
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      if (kind == 2) {
        const auto av2 = ctx.input(0).data();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
      } else if (kind == 1) {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      } else {
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(a, b, "add", [](double x, double y) { return x + y; }, 0);
}

Var sub(Var a, Var b) {
  return binary_elementwise(a, b, "sub", [](double x, double y) { return x - y; }, 1);
}

Var mul(Var a, Var b) {
  return binary_elementwise(a, b, "mul", [](double x, double y) { return x * y; }, 2);
}

Var scale(Var a, double factor) {
  const auto av = a.value().data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return a.graph().record(Tensor(a.shape(), std::move(out)), {a}, [factor](const BackwardContext& ctx) {
    auto ga = ctx.input_grad(0);
    const auto go = ctx.out_grad();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * factor;
  });
}

Var add_scalar(Var a, double value) {
  const auto av = a.value().data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + value;
  return a.graph().record(Tensor(a.shape(), std::move(out)), {a}, [](const BackwardContext& ctx) {
    auto ga = ctx.input_grad(0);
    const auto go = ctx.out_grad();
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = same_graph(x, bias, "add_bias");
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (xv.rank() == 0 || bv.rank() != 1 || bv.dim(0) != xv.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match trailing axis of " +
                         shape_string(xv.shape()));
  }
  const auto n = bv.dim(0);
  const auto rows = xv.size() / n;
  std::vector<double> out(xv.data().begin(), xv.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  }
  return g.record(Tensor(xv.shape(), std::move(out)), {x, bias}, [rows, n](const BackwardContext& ctx) {
    const auto go = ctx.out_grad();
    if (ctx.needs_grad(0)) {
      auto gx = ctx.input_grad(0);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
      }
    }
  });
}

Var gelu(Var x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  const auto xv = x.value().data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + fast_tanh(k * (v + c * v * v * v)));
  }
  return x.graph().record(Tensor(x.shape(), std::move(out)), {x}, [](const BackwardContext& ctx) {
    const auto in = ctx.input(0).data();
    const auto go = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) {
      const double v = in[i];
      const double t = fast_tanh(k * (v + c * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
      gx[i] += go[i] * d;
    }
  });
}

Var softmax(Var x, std::size_t axis) {
  const auto& xv = x.value();
  const auto s = split_axis(xv.shape(), axis, "softmax");
  const auto in = xv.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = in[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, in[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(in[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  return x.graph().record(Tensor(xv.shape(), std::move(out)), {x}, [s](const BackwardContext& ctx) {
    const auto y = ctx.output().data();
    const auto go = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double inner = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) inner += go[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const auto idx = base + k * s.inner;
          gx[idx] += y[idx] * (go[idx] - inner);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = same_graph(x, gamma, "layer_norm");
  same_graph(x, beta, "layer_norm");
  const auto& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const auto n = xv.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw DimensionError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
  }
  const auto rows = xv.size() / n;
  const auto in = xv.data();
  const auto gm = gamma.value().data();
  const auto bt = beta.value().data();
  std::vector<double> out(in.size());
  // Normalised activations and inverse std are kept for the backward rule.
  auto xhat = std::make_shared<std::vector<double>>(in.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gm[j] + bt[j];
    }
  }
  return g.record(Tensor(xv.shape(), std::move(out)), {x, gamma, beta},
                  [rows, n, xhat, inv_std](const BackwardContext& ctx) {
                    const auto go = ctx.out_grad();
                    const auto gm2 = ctx.input(1).data();
                    if (ctx.needs_grad(1)) {
                      auto gg = ctx.input_grad(1);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) gg[j] += go[r * n + j] * (*xhat)[r * n + j];
                    }
                    if (ctx.needs_grad(2)) {
                      auto gb = ctx.input_grad(2);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
                    }
                    if (ctx.needs_grad(0)) {
                      auto gx = ctx.input_grad(0);
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          const double dh = go[r * n + j] * gm2[j];
                          m1 += dh;
                          m2 += dh * (*xhat)[r * n + j];
                        }
                        m1 *= inv_n;
                        m2 *= inv_n;
                        for (std::size_t j = 0; j < n; ++j) {
                          const double dh = go[r * n + j] * gm2[j];
                          gx[r * n + j] += (*inv_std)[r] * (dh - m1 - (*xhat)[r * n + j] * m2);
                        }
                      }
                    }
                  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.graph().record(Tensor::scalar(total), {x}, [](const BackwardContext& ctx) {
    const double go = ctx.out_grad()[0];
    for (auto& g : ctx.input_grad(0)) g += go;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& xv = x.value();
  const auto s = split_axis(xv.shape(), axis, "slice");
  if (length == 0 || start + length > s.extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of extent " + std::to_string(s.extent));
  }
  Shape out_shape = xv.shape();
  out_shape[axis] = length;
  const auto in = xv.data();
  std::vector<double> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * s.extent + start) * s.inner), length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  }
  return x.graph().record(Tensor(out_shape, std::move(out)), {x}, [s, start, length](const BackwardContext& ctx) {
    const auto go = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = go.data() + o * length * s.inner;
      double* dst = gx.data() + (o * s.extent + start) * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Graph& g = parts[0].graph();
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_string(ref));
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    same_graph(parts[0], p, "concat");
    const Shape& sh = p.shape();
    bool ok = sh.size() == ref.size();
    for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = (i == axis) || sh[i] == ref[i];
    if (!ok) throw DimensionError("concat: shape " + shape_string(sh) + " incompatible with " + shape_string(ref));
    extents.push_back(sh[axis]);
    total += sh[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const auto s = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto in = parts[p].value().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * extents[p] * s.inner), extents[p] * s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * s.inner));
    }
    offset += extents[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(Tensor(out_shape, std::move(out)), std::move(inputs), [s, extents, total](const BackwardContext& ctx) {
    const auto go = ctx.out_grad();
    std::size_t off = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      if (ctx.needs_grad(p)) {
        auto gp = ctx.input_grad(p);
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = go.data() + (o * total + off) * s.inner;
          double* dst = gp.data() + o * extents[p] * s.inner;
          for (std::size_t i = 0; i < extents[p] * s.inner; ++i) dst[i] += src[i];
        }
      }
      off += extents[p];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    const auto go = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

Var l2_norm(Var x) {
  double ss = 0.0;
  for (double v : x.value().data()) ss += v * v;
  const double norm = std::sqrt(ss);
  return x.graph().record(Tensor::scalar(norm), {x}, [norm](const BackwardContext& ctx) {
    if (norm == 0.0) return;  // subgradient 0 at the origin
    const double go = ctx.out_grad()[0];
    const auto in = ctx.input(0).data();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += go * in[i] / norm;
  });
}

Var dot(Var a, Var b) {
  Graph& g = same_graph(a, b, "dot");
  require_same_shape(a, b, "dot");
  const auto av = a.value().data();
  const auto bv = b.value().data();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
  return g.record(Tensor::scalar(total), {a, b}, [](const BackwardContext& ctx) {
    const double go = ctx.out_grad()[0];
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      const auto bv2 = ctx.input(1).data();
      for (std::size_t i = 0; i < bv2.size(); ++i) ga[i] += go * bv2[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      const auto av2 = ctx.input(0).data();
      for (std::size_t i = 0; i < av2.size(); ++i) gb[i] += go * av2[i];
    }
  });
}

Var cosine_similarity(Var a, Var b) {
  Graph& g = same_graph(a, b, "cosine_similarity");
  require_same_shape(a, b, "cosine_similarity");
  const auto av = a.value().data();
  const auto bv = b.value().data();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  if (na <= kCosineEps || nb <= kCosineEps) {
    throw DegenerateError("cosine_similarity: vector norm at or below 1e-12");
  }
  const double c = std::clamp(ab / (na * nb), -1.0, 1.0);
  return g.record(Tensor::scalar(c), {a, b}, [na, nb, c](const BackwardContext& ctx) {
    const double go = ctx.out_grad()[0];
    const auto av2 = ctx.input(0).data();
    const auto bv2 = ctx.input(1).data();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < av2.size(); ++i) ga[i] += go * (bv2[i] / (na * nb) - c * av2[i] / (na * na));
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < bv2.size(); ++i) gb[i] += go * (av2[i] / (na * nb) - c * bv2[i] / (nb * nb));
    }
  });
}

}  // namespace motalign::ad
