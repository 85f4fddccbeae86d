#pragma once

// Randomised gradient-check cases, one per differentiable operation. Each
// case draws fresh shapes and values from the trial RNG.

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "motalign/rotation.hpp"
#include "motalign/skeleton.hpp"

namespace motalign::check {

struct OpCase {
  ScalarFn fn;
  std::vector<ad::Tensor> inputs;
};

struct OpFamily {
  std::string name;
  std::function<OpCase(Rng&)> make;
};

inline std::size_t extent(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline std::vector<OpFamily> op_catalog() {
  using ad::Var;
  using VV = const std::vector<Var>&;
  std::vector<OpFamily> ops;

  ops.push_back({"matmul", [](Rng& r) {
                   const auto m = extent(r, 1, 4), k = extent(r, 1, 4), n = extent(r, 1, 4);
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::matmul(v[0], v[1]), 1); },
                                 {random_tensor(r, {m, k}), random_tensor(r, {k, n})}};
                 }});
  ops.push_back({"transpose", [](Rng& r) {
                   const auto m = extent(r, 1, 4), n = extent(r, 1, 4);
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::transpose(v[0]), 2); },
                                 {random_tensor(r, {m, n})}};
                 }});
  ops.push_back({"add", [](Rng& r) {
                   const ad::Shape s{extent(r, 1, 3), extent(r, 1, 4)};
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::add(v[0], v[1]), 3); },
                                 {random_tensor(r, s), random_tensor(r, s)}};
                 }});
  ops.push_back({"sub", [](Rng& r) {
                   const ad::Shape s{extent(r, 1, 3), extent(r, 1, 4)};
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::sub(v[0], v[1]), 4); },
                                 {random_tensor(r, s), random_tensor(r, s)}};
                 }});
  ops.push_back({"mul", [](Rng& r) {
                   const ad::Shape s{extent(r, 1, 3), extent(r, 1, 4)};
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::mul(v[0], v[1]), 5); },
                                 {random_tensor(r, s), random_tensor(r, s)}};
                 }});
  ops.push_back({"scale", [](Rng& r) {
                   const double f = r.uniform(-3.0, 3.0);
                   return OpCase{[f](ad::Graph& g, VV v) { return weighted_sum(g, ad::scale(v[0], f), 6); },
                                 {random_tensor(r, {extent(r, 1, 5)})}};
                 }});
  ops.push_back({"add_scalar", [](Rng& r) {
                   const double c = r.uniform(-3.0, 3.0);
                   return OpCase{[c](ad::Graph& g, VV v) { return weighted_sum(g, ad::add_scalar(v[0], c), 7); },
                                 {random_tensor(r, {extent(r, 1, 5)})}};
                 }});
  ops.push_back({"add_bias", [](Rng& r) {
                   const auto m = extent(r, 1, 4), n = extent(r, 1, 4);
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::add_bias(v[0], v[1]), 8); },
                                 {random_tensor(r, {m, n}), random_tensor(r, {n})}};
                 }});
  ops.push_back({"gelu", [](Rng& r) {
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, ad::gelu(v[0]), 9); },
                                 {random_tensor(r, {extent(r, 1, 4), extent(r, 1, 4)}, 2.0)}};
                 }});
  ops.push_back({"softmax", [](Rng& r) {
                   const ad::Shape s{extent(r, 1, 3), extent(r, 1, 4), extent(r, 1, 3)};
                   const auto axis = r.below(3);
                   return OpCase{[axis](ad::Graph& g, VV v) { return weighted_sum(g, ad::softmax(v[0], axis), 10); },
                                 {random_tensor(r, s, 2.0)}};
                 }});
  ops.push_back({"layer_norm", [](Rng& r) {
                   const auto m = extent(r, 1, 3), n = extent(r, 2, 6);
                   return OpCase{
                       [](ad::Graph& g, VV v) { return weighted_sum(g, ad::layer_norm(v[0], v[1], v[2]), 11); },
                       {random_tensor(r, {m, n}), random_tensor(r, {n}), random_tensor(r, {n})}};
                 }});
  ops.push_back({"sum", [](Rng& r) {
                   return OpCase{[](ad::Graph&, VV v) { return ad::scale(ad::sum(v[0]), 1.7); },
                                 {random_tensor(r, {extent(r, 1, 3), extent(r, 1, 3)})}};
                 }});
  ops.push_back({"mean", [](Rng& r) {
                   return OpCase{[](ad::Graph&, VV v) { return ad::mul(ad::mean(v[0]), ad::mean(v[0])); },
                                 {random_tensor(r, {extent(r, 1, 3), extent(r, 1, 3)})}};
                 }});
  ops.push_back({"slice", [](Rng& r) {
                   const ad::Shape s{extent(r, 1, 3), extent(r, 2, 5)};
                   const auto axis = r.below(2);
                   const auto start = r.below(s[axis]);
                   const auto len = 1 + r.below(s[axis] - start);
                   return OpCase{[=](ad::Graph& g, VV v) { return weighted_sum(g, ad::slice(v[0], axis, start, len), 12); },
                                 {random_tensor(r, s)}};
                 }});
  ops.push_back({"concat", [](Rng& r) {
                   const auto axis = r.below(2);
                   ad::Shape a{extent(r, 1, 3), extent(r, 1, 3)};
                   ad::Shape b = a;
                   b[axis] = extent(r, 1, 3);
                   return OpCase{[axis](ad::Graph& g, VV v) {
                                   const std::vector<Var> parts{v[0], v[1]};
                                   return weighted_sum(g, ad::concat(parts, axis), 13);
                                 },
                                 {random_tensor(r, a), random_tensor(r, b)}};
                 }});
  ops.push_back({"reshape", [](Rng& r) {
                   const auto m = extent(r, 1, 3), n = extent(r, 1, 3);
                   return OpCase{[=](ad::Graph& g, VV v) { return weighted_sum(g, ad::reshape(v[0], {n, m}), 14); },
                                 {random_tensor(r, {m, n})}};
                 }});
  ops.push_back({"l2_norm", [](Rng& r) {
                   return OpCase{[](ad::Graph&, VV v) { return ad::scale(ad::l2_norm(v[0]), 0.9); },
                                 {random_tensor(r, {extent(r, 1, 6)})}};
                 }});
  ops.push_back({"dot", [](Rng& r) {
                   const ad::Shape s{extent(r, 1, 6)};
                   return OpCase{[](ad::Graph&, VV v) { return ad::dot(v[0], v[1]); },
                                 {random_tensor(r, s), random_tensor(r, s)}};
                 }});
  ops.push_back({"cosine_similarity", [](Rng& r) {
                   const ad::Shape s{extent(r, 2, 8)};
                   return OpCase{[](ad::Graph&, VV v) { return ad::cosine_similarity(v[0], v[1]); },
                                 {random_tensor(r, s), random_tensor(r, s)}};
                 }});
  ops.push_back({"rot6d_to_matrix", [](Rng& r) {
                   return OpCase{[](ad::Graph& g, VV v) { return weighted_sum(g, rot::rot6d_to_matrix(v[0]), 15); },
                                 {random_tensor(r, {extent(r, 1, 4), 6})}};
                 }});
  ops.push_back({"sequence_geometry", [](Rng& r) {
                   const std::size_t T = 2;
                   std::vector<double> pose(T * skel::kPoseWidth);
                   for (std::size_t i = 0; i < pose.size(); ++i) {
                     const auto k = i % 6;
                     pose[i] = (k == 0 || k == 4 ? 1.0 : 0.0) + 0.3 * r.normal();
                   }
                   return OpCase{[](ad::Graph& g, VV v) {
                                   return weighted_sum(g, skel::sequence_geometry(skel::SkeletonModel::canonical(), v[0], v[1]), 16);
                                 },
                                 {ad::Tensor({T, skel::kPoseWidth}, pose), random_tensor(r, {T, 3}, 0.2)}};
                 }});
  ops.push_back({"composite", [](Rng& r) {
                   const auto m = extent(r, 1, 3), k = extent(r, 2, 4), n = extent(r, 2, 4);
                   return OpCase{[](ad::Graph& g, VV v) {
                                   auto h = ad::layer_norm(ad::matmul(v[0], v[1]), v[2], v[3]);
                                   return weighted_sum(g, ad::softmax(ad::gelu(h), 1), 17);
                                 },
                                 {random_tensor(r, {m, k}), random_tensor(r, {k, n}), random_tensor(r, {n}),
                                  random_tensor(r, {n})}};
                 }});
  return ops;
}

}  // namespace motalign::check
