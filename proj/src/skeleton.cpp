#include "motalign/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "motalign/error.hpp"

namespace motalign::skel {

extern const char* const kCanonicalSkeletonJson;

namespace {

using rot::Mat3;
using rot::Vec3;

Mat3 mat_from_row_major(const double* m) {
  Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = m[i * 3 + j];
  return R;
}

struct ChainState {
  std::vector<Mat3> world_rot;
  std::vector<Vec3> world_pos;
};

ChainState run_chain(const SkeletonModel& m, const std::vector<Mat3>& local, const Vec3& root) {
  const auto& parents = m.parents();
  const auto& offsets = m.rest_offsets();
  ChainState s;
  s.world_rot.resize(kJointCount);
  s.world_pos.resize(kJointCount);
  s.world_rot[0] = local[0];
  s.world_pos[0] = root + offsets[0];
  for (std::size_t j = 1; j < kJointCount; ++j) {
    const auto p = static_cast<std::size_t>(parents[j]);
    s.world_pos[j] = s.world_pos[p] + s.world_rot[p] * offsets[j];
    s.world_rot[j] = s.world_rot[p] * local[j];
  }
  return s;
}

std::vector<Vec3> proxy_vertices(const SkeletonModel& m, const ChainState& s) {
  std::vector<Vec3> out;
  out.reserve(m.vertex_count());
  for (std::size_t j = 0; j < kJointCount; ++j) {
    for (const auto& u : m.vertex_proxy()[j]) out.push_back(s.world_pos[j] + s.world_rot[j] * u);
  }
  return out;
}

std::vector<Mat3> validated_local(const Pose& pose) {
  std::vector<Mat3> local(kJointCount);
  for (std::size_t j = 0; j < kJointCount; ++j) local[j] = rot::to_matrix(pose.rotations[j]);
  return local;
}

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("skeleton: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// Rigid chain over precomputed local rotation matrices. rotmats [T*24, 9],
// root [T, 3] -> [T, 24 + V, 3].
ad::Var rigid_chain(const SkeletonModel& m, ad::Var rotmats, ad::Var root) {
  const auto& rv = rotmats.value();
  const auto& tv = root.value();
  if (rv.rank() != 2 || rv.dim(1) != 9 || rv.dim(0) % kJointCount != 0) {
    throw DimensionError("sequence_geometry: rotation block must be [T*24, 9], got " + ad::shape_string(rv.shape()));
  }
  const std::size_t T = rv.dim(0) / kJointCount;
  if (tv.shape() != ad::Shape{T, 3}) {
    throw DimensionError("sequence_geometry: root translation must be [" + std::to_string(T) + ",3]");
  }
  const std::size_t V = m.vertex_count();
  const std::size_t rows = kJointCount + V;
  std::vector<double> out(T * rows * 3);
  const auto rdata = rv.data();
  const auto tdata = tv.data();
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<Mat3> local(kJointCount);
    for (std::size_t j = 0; j < kJointCount; ++j) local[j] = mat_from_row_major(rdata.data() + (t * kJointCount + j) * 9);
    const ChainState s = run_chain(m, local, Vec3(tdata[t * 3], tdata[t * 3 + 1], tdata[t * 3 + 2]));
    double* dst = out.data() + t * rows * 3;
    for (std::size_t j = 0; j < kJointCount; ++j)
      for (int c = 0; c < 3; ++c) dst[j * 3 + c] = s.world_pos[j][c];
    const auto verts = proxy_vertices(m, s);
    for (std::size_t v = 0; v < V; ++v)
      for (int c = 0; c < 3; ++c) dst[(kJointCount + v) * 3 + c] = verts[v][c];
  }
  const SkeletonModel* model = &m;
  return rotmats.graph().record(
      ad::Tensor({T, rows, 3}, std::move(out)), {rotmats, root}, [model, T, rows](const ad::BackwardContext& ctx) {
        const auto& mm = *model;
        const auto rd = ctx.input(0).data();
        const auto td = ctx.input(1).data();
        const auto go = ctx.out_grad();
        const bool want_r = ctx.needs_grad(0);
        const bool want_t = ctx.needs_grad(1);
        std::span<double> gr = want_r ? ctx.input_grad(0) : std::span<double>{};
        std::span<double> gt = want_t ? ctx.input_grad(1) : std::span<double>{};
        for (std::size_t t = 0; t < T; ++t) {
          std::vector<Mat3> local(kJointCount);
          for (std::size_t j = 0; j < kJointCount; ++j) local[j] = mat_from_row_major(rd.data() + (t * kJointCount + j) * 9);
          const ChainState s = run_chain(mm, local, Vec3(td[t * 3], td[t * 3 + 1], td[t * 3 + 2]));
          const double* g = go.data() + t * rows * 3;
          std::vector<Vec3> dp(kJointCount);
          std::vector<Mat3> dG(kJointCount, Mat3::Zero());
          for (std::size_t j = 0; j < kJointCount; ++j) dp[j] = Vec3(g[j * 3], g[j * 3 + 1], g[j * 3 + 2]);
          std::size_t vi = kJointCount;
          for (std::size_t j = 0; j < kJointCount; ++j) {
            for (const auto& u : mm.vertex_proxy()[j]) {
              const Vec3 gv(g[vi * 3], g[vi * 3 + 1], g[vi * 3 + 2]);
              dp[j] += gv;
              dG[j] += gv * u.transpose();
              ++vi;
            }
          }
          std::vector<Mat3> dR(kJointCount);
          for (std::size_t j = kJointCount - 1; j >= 1; --j) {
            const auto p = static_cast<std::size_t>(mm.parents()[j]);
            dG[p] += dG[j] * local[j].transpose();
            dR[j] = s.world_rot[p].transpose() * dG[j];
            dG[p] += dp[j] * mm.rest_offsets()[j].transpose();
            dp[p] += dp[j];
          }
          dR[0] = dG[0];
          if (want_r) {
            for (std::size_t j = 0; j < kJointCount; ++j) {
              double* dst = gr.data() + (t * kJointCount + j) * 9;
              for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) dst[a * 3 + b] += dR[j](a, b);
            }
          }
          if (want_t) {
            for (int c = 0; c < 3; ++c) gt[t * 3 + c] += dp[0][c];
          }
        }
      });
}

}  // namespace

ad::Tensor to_tensor(const MotionSequence& seq) {
  if (seq.frames.empty()) throw InputError("motion sequence has no frames");
  std::vector<double> data;
  data.reserve(seq.length() * kPoseWidth);
  for (const auto& f : seq.frames)
    for (const auto& r : f.rotations) data.insert(data.end(), r.v.begin(), r.v.end());
  return ad::Tensor({seq.length(), kPoseWidth}, std::move(data));
}

MotionSequence from_tensor(const ad::Tensor& frames, double fps) {
  if (frames.rank() != 2 || frames.dim(1) != kPoseWidth) {
    throw DimensionError("motion tensor must be [T,144], got " + ad::shape_string(frames.shape()));
  }
  MotionSequence seq;
  seq.fps = fps;
  seq.frames.resize(frames.dim(0));
  const auto d = frames.data();
  for (std::size_t t = 0; t < frames.dim(0); ++t)
    for (std::size_t j = 0; j < kJointCount; ++j)
      for (std::size_t k = 0; k < kRotWidth; ++k) seq.frames[t].rotations[j].v[k] = d[t * kPoseWidth + j * kRotWidth + k];
  return seq;
}

bool all_finite(const MotionSequence& seq) {
  for (const auto& f : seq.frames) {
    if (!f.root_translation.allFinite()) return false;
    for (const auto& r : f.rotations)
      for (double v : r.v)
        if (!std::isfinite(v)) return false;
  }
  return true;
}

SkeletonModel::SkeletonModel(std::vector<int> parents, std::vector<Vec3> rest_offsets,
                             std::vector<std::vector<Vec3>> vertex_proxy, int version)
    : version_(version),
      parents_(std::move(parents)),
      rest_offsets_(std::move(rest_offsets)),
      vertex_proxy_(std::move(vertex_proxy)) {
  if (parents_.size() != kJointCount || rest_offsets_.size() != kJointCount || vertex_proxy_.size() != kJointCount) {
    throw InputError("skeleton: expected 24 joints in parents, rest_offsets and vertex_proxy");
  }
  if (parents_[0] != -1) throw InputError("skeleton: joint 0 must be the root (parent -1)");
  for (std::size_t j = 1; j < kJointCount; ++j) {
    if (parents_[j] < 0 || static_cast<std::size_t>(parents_[j]) >= j) {
      throw InputError("skeleton: parent of joint " + std::to_string(j) + " must precede it");
    }
  }
  for (const auto& p : vertex_proxy_) vertex_count_ += p.size();
}

SkeletonModel SkeletonModel::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("skeleton: invalid JSON: ") + e.what());
  }
  for (const char* key : {"version", "parents", "rest_offsets", "vertex_proxy"}) {
    if (!doc.contains(key)) throw InputError(std::string("skeleton: missing field '") + key + "'");
  }
  std::vector<Vec3> offsets;
  for (const auto& o : doc["rest_offsets"]) offsets.push_back(vec3_from_json(o));
  std::vector<std::vector<Vec3>> proxy;
  for (const auto& joint : doc["vertex_proxy"]) {
    auto& verts = proxy.emplace_back();
    for (const auto& v : joint) verts.push_back(vec3_from_json(v));
  }
  return SkeletonModel(doc["parents"].get<std::vector<int>>(), std::move(offsets), std::move(proxy),
                       doc["version"].get<int>());
}

SkeletonModel SkeletonModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skeleton file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const SkeletonModel& SkeletonModel::canonical() {
  static const SkeletonModel model = from_json(kCanonicalSkeletonJson);
  return model;
}

std::vector<Vec3> SkeletonModel::forward_kinematics(const Pose& pose) const {
  return run_chain(*this, validated_local(pose), pose.root_translation).world_pos;
}

std::vector<Vec3> SkeletonModel::vertices(const Pose& pose) const {
  return proxy_vertices(*this, run_chain(*this, validated_local(pose), pose.root_translation));
}

FrameGeometry SkeletonModel::geometry(const Pose& pose) const {
  const auto s = run_chain(*this, validated_local(pose), pose.root_translation);
  return {s.world_pos, proxy_vertices(*this, s)};
}

std::vector<FrameGeometry> sequence_geometry(const SkeletonModel& model, const MotionSequence& seq) {
  std::vector<FrameGeometry> out;
  out.reserve(seq.length());
  for (const auto& f : seq.frames) out.push_back(model.geometry(f));
  return out;
}

ad::Var sequence_geometry(const SkeletonModel& model, ad::Var pose6d, ad::Var root) {
  const auto& pv = pose6d.value();
  if (pv.rank() != 2 || pv.dim(1) != kPoseWidth) {
    throw DimensionError("sequence_geometry: pose block must be [T,144], got " + ad::shape_string(pv.shape()));
  }
  const auto T = pv.dim(0);
  auto mats = rot::rot6d_to_matrix(ad::reshape(pose6d, {T * kJointCount, kRotWidth}));
  return rigid_chain(model, mats, root);
}

ad::Var sequence_geometry(const SkeletonModel& model, ad::Var pose6d) {
  const auto T = pose6d.value().dim(0);
  auto root = pose6d.graph().constant(ad::Tensor::zeros({T, 3}));
  return sequence_geometry(model, pose6d, root);
}

ad::Var vertex_positions(const SkeletonModel& model, ad::Var pose6d) {
  auto geo = sequence_geometry(model, pose6d);
  return ad::slice(geo, 1, kJointCount, model.vertex_count());
}

}  // namespace motalign::skel
