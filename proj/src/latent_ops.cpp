#include "motalign/latent_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "motalign/error.hpp"

namespace motalign::ops {

const char* kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::motion: return "motion";
    case SourceKind::text: return "text";
    case SourceKind::latent: return "latent";
  }
  return "?";
}

SourceKind parse_kind(const std::string& name) {
  if (name == "motion") return SourceKind::motion;
  if (name == "text") return SourceKind::text;
  if (name == "latent") return SourceKind::latent;
  throw InputError("unknown term kind '" + name + "' (expected motion, text or latent)");
}

std::vector<std::size_t> ClassScores::top(std::size_t k) const {
  std::vector<std::size_t> idx(probabilities.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

LatentSpace::LatentSpace(const model::MotionClipModel& model, std::shared_ptr<embed::EmbeddingProvider> provider)
    : model_(model), provider_(std::move(provider)) {
  if (!provider_) throw ContractError("latent space needs an embedding provider");
}

ad::Tensor LatentSpace::encode(const ad::Tensor& motion) const {
  if (motion.rank() != 2 || motion.dim(1) != 144)
    throw DimensionError("encode: motion must be [T, 144], got " + ad::shape_string(motion.shape()));
  motion.validate_finite("encode: motion");
  return model_.encode(motion);
}

ad::Tensor LatentSpace::decode(const ad::Tensor& z, std::size_t frames) const {
  if (z.rank() != 1 || z.size() != dimension())
    throw DimensionError("decode: latent must be [" + std::to_string(dimension()) + "], got " +
                         ad::shape_string(z.shape()));
  z.validate_finite("decode: latent");
  return model_.decode(z, frames);
}

ad::Tensor LatentSpace::embed_text(const std::string& text) const {
  if (embed::canonical_text(text).empty()) throw InputError("text must not be empty");
  auto v = provider_->embed_text(text);
  if (v.size() != dimension())
    throw DimensionError("provider returned " + std::to_string(v.size()) + "-d vectors, model expects " +
                         std::to_string(dimension()));
  return ad::Tensor::vector(std::move(v.values));
}

ad::Tensor LatentSpace::text_to_motion(const std::string& text, std::size_t frames) const {
  return decode(embed_text(text), frames);
}

std::vector<ad::Tensor> LatentSpace::interpolate_latents(const ad::Tensor& za, const ad::Tensor& zb, std::size_t steps) {
  if (steps < 2) throw InputError("interpolate: steps must be at least 2");
  if (za.shape() != zb.shape())
    throw DimensionError("interpolate: " + ad::shape_string(za.shape()) + " vs " + ad::shape_string(zb.shape()));
  std::vector<ad::Tensor> out;
  out.reserve(steps);
  out.push_back(za);
  const auto a = za.data(), b = zb.data();
  for (std::size_t k = 1; k + 1 < steps; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(steps - 1);
    std::vector<double> z(a.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - alpha) * a[i] + alpha * b[i];
    out.emplace_back(za.shape(), std::move(z));
  }
  out.push_back(zb);
  return out;
}

std::vector<ad::Tensor> LatentSpace::interpolate(const ad::Tensor& za, const ad::Tensor& zb, std::size_t steps,
                                                 std::size_t frames) const {
  std::vector<ad::Tensor> out;
  for (const auto& z : interpolate_latents(za, zb, steps)) out.push_back(decode(z, frames));
  return out;
}

ad::Tensor LatentSpace::resolve(const EditTerm& term, const std::string& label) const {
  try {
    switch (term.kind) {
      case SourceKind::text:
        return embed_text(term.text);
      case SourceKind::motion:
        if (term.motion.size() == 0) throw InputError("empty motion");
        return encode(term.motion);
      case SourceKind::latent:
        if (term.latent.rank() != 1 || term.latent.size() != dimension())
          throw DimensionError("latent must be [" + std::to_string(dimension()) + "], got " +
                               ad::shape_string(term.latent.shape()));
        term.latent.validate_finite("latent");
        return term.latent;
    }
  } catch (const TransportError&) {
    throw;
  } catch (const Error& e) {
    throw ResolutionError(label + " (" + kind_name(term.kind) + "): " + e.what());
  }
  throw ContractError("unreachable term kind");
}

namespace {

bool same_source(const EditTerm& a, const EditTerm& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case SourceKind::text: return a.text == b.text;
    case SourceKind::motion: return a.motion.bitwise_equal(b.motion);
    case SourceKind::latent: return a.latent.bitwise_equal(b.latent);
  }
  return false;
}

}  // namespace

ad::Tensor LatentSpace::edit_latent(const EditExpression& e) const {
  if (e.terms.empty()) throw InputError("edit: expression needs at least one term");
  struct Group {
    std::size_t first;
    double coefficient;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < e.terms.size(); ++i) {
    const auto& t = e.terms[i];
    if (!std::isfinite(t.coefficient)) throw InputError("edit: coefficient of term " + std::to_string(i) + " is not finite");
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return same_source(e.terms[g.first], t); });
    if (it == groups.end()) groups.push_back({i, t.coefficient});
    else it->coefficient += t.coefficient;
  }

  std::vector<double> acc(dimension(), 0.0);
  for (const auto& g : groups) {
    const auto& t = e.terms[g.first];
    const auto v = resolve(t, t.label.empty() ? "term " + std::to_string(g.first) : t.label);
    const auto d = v.data();
    if (groups.size() == 1 && g.coefficient == 1.0) {
      std::copy(d.begin(), d.end(), acc.begin());
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.coefficient * d[i];
    }
  }
  if (e.renormalize) {
    const double n = embed::norm(acc);
    if (!(n > 1e-12)) throw DegenerateError("edit: cannot renormalise a zero-norm sum");
    for (auto& x : acc) x /= n;
  }
  return ad::Tensor::vector(std::move(acc));
}

ad::Tensor LatentSpace::edit(const EditExpression& e, std::size_t frames) const {
  return decode(edit_latent(e), frames);
}

ClassScores LatentSpace::classify_latent(const ad::Tensor& z, const std::vector<std::string>& classes,
                                         double temperature) const {
  if (classes.size() < 2) throw InputError("classify: needs at least two classes");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InputError("classify: temperature must be positive");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (embed::canonical_text(c).empty()) throw InputError("classify: empty class name");
    if (!seen.insert(c).second) throw InputError("classify: duplicate class name '" + c + "'");
  }
  if (z.rank() != 1 || z.size() != dimension())
    throw DimensionError("classify: latent must be [" + std::to_string(dimension()) + "]");

  ClassScores s;
  s.classes = classes;
  for (const auto& c : classes) s.cosines.push_back(embed::cosine(z.data(), embed_text(c).data()));
  double top = -std::numeric_limits<double>::infinity();
  for (double c : s.cosines) top = std::max(top, c / temperature);
  double total = 0.0;
  for (double c : s.cosines) {
    s.probabilities.push_back(std::exp(c / temperature - top));
    total += s.probabilities.back();
  }
  for (auto& p : s.probabilities) p /= total;
  return s;
}

ClassScores LatentSpace::classify(const ad::Tensor& motion, const std::vector<std::string>& classes,
                                  double temperature) const {
  return classify_latent(encode(motion), classes, temperature);
}

}  // namespace motalign::ops
