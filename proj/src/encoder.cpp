#include "cnav/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace cnav {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Depth: return "depth";
    case Modality::Pose: return "pose";
    case Modality::PrevAction: return "prev_action";
    case Modality::Goal: return "goal";
  }
  return "?";
}

std::string projector_weight(Modality m) {
  return std::string("encoder.proj_") + modality_name(m) + ".weight";
}
std::string projector_bias(Modality m) {
  return std::string("encoder.proj_") + modality_name(m) + ".bias";
}

std::size_t EncoderConfig::input_dim(Modality m) const {
  switch (m) {
    case Modality::Visual:
      return static_cast<std::size_t>(obs.patch_size * obs.patch_size) *
             (kCodeObjectBase + static_cast<std::size_t>(obs.num_categories));
    case Modality::Depth: return static_cast<std::size_t>(obs.depth_rays);
    case Modality::Pose: return 7;
    case Modality::PrevAction: return kNumActions;
    case Modality::Goal: return static_cast<std::size_t>(obs.num_categories);
  }
  return 0;
}

std::size_t EncoderConfig::feature_dim() const {
  std::size_t d = 0;
  for (auto v : projector_dims) d += v;
  return d;
}

std::size_t EncoderConfig::feature_offset(Modality m) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) off += projector_dims[i];
  return off;
}

DenseArray orthogonal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  // Gram-Schmidt (run twice for numerical orthogonality) over the shorter side.
  const bool by_rows = rows <= cols;
  const std::size_t n_vec = by_rows ? rows : cols;
  const std::size_t len = by_rows ? cols : rows;
  std::vector<std::vector<double>> v(n_vec, std::vector<double>(len));
  for (auto& vec : v)
    for (auto& x : vec) x = rng.normal();
  for (std::size_t i = 0; i < n_vec; ++i) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += v[i][k] * v[j][k];
        for (std::size_t k = 0; k < len; ++k) v[i][k] -= dot * v[j][k];
      }
    double norm = 0.0;
    for (double x : v[i]) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v[i]) x /= norm;
  }
  DenseArray m(Shape{rows, cols});
  for (std::size_t i = 0; i < n_vec; ++i)
    for (std::size_t k = 0; k < len; ++k) {
      if (by_rows) m.at(i, k) = v[i][k];
      else m.at(k, i) = v[i][k];
    }
  return m;
}

Encoder::Encoder(EncoderConfig cfg, std::uint64_t backbone_seed) : cfg_(cfg) {
  Rng rng(backbone_seed);
  for (Modality m : kModalities) {
    const auto i = static_cast<std::size_t>(m);
    backbones_[i] = orthogonal_matrix(cfg_.backbone_dims[i], cfg_.input_dim(m), rng);
  }
}

std::array<DenseArray, kNumModalities> Encoder::raw_inputs(const Observation& obs) const {
  const auto& oc = cfg_.obs;
  const std::size_t cells = static_cast<std::size_t>(oc.patch_size * oc.patch_size);
  const std::size_t codes = kCodeObjectBase + static_cast<std::size_t>(oc.num_categories);
  if (obs.semantic_patch.size() != cells || obs.depth_rays.size() != static_cast<std::size_t>(oc.depth_rays))
    throw std::invalid_argument("encoder: observation dimensions do not match configuration");
  if (obs.goal_category < 0 || obs.goal_category >= oc.num_categories)
    throw std::invalid_argument("encoder: goal category outside vocabulary");

  std::array<DenseArray, kNumModalities> raw;
  DenseArray visual(Shape{cells * codes});
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t code = obs.semantic_patch[c];
    if (code >= codes) throw std::invalid_argument("encoder: patch code outside vocabulary");
    visual[c * codes + code] = 1.0;
  }
  raw[0] = std::move(visual);
  raw[1] = DenseArray::vector(obs.depth_rays);
  raw[2] = DenseArray::vector(std::vector<double>(obs.pose_delta.begin(), obs.pose_delta.end()));
  DenseArray prev(Shape{kNumActions});
  if (obs.prev_action) prev[static_cast<std::size_t>(*obs.prev_action)] = 1.0;
  raw[3] = std::move(prev);
  DenseArray goal(Shape{static_cast<std::size_t>(oc.num_categories)});
  goal[static_cast<std::size_t>(obs.goal_category)] = 1.0;
  raw[4] = std::move(goal);
  return raw;
}

BackboneFrame Encoder::backbone(const Observation& obs) const {
  auto raw = raw_inputs(obs);
  BackboneFrame frame;
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    frame[i] = DenseArray(Shape{cfg_.backbone_dims[i]});
    kernels::matvec(backbones_[i], raw[i].data(), frame[i].data());
  }
  return frame;
}

DenseArray Encoder::visual_embedding(const Observation& obs) const {
  auto raw = raw_inputs(obs);
  DenseArray out(Shape{cfg_.backbone_dims[0]});
  kernels::matvec(backbones_[0], raw[0].data(), out.data());
  return out;
}

void Encoder::init_params(ParamStore& store, Rng& rng) const {
  for (Modality m : kModalities) {
    const auto i = static_cast<std::size_t>(m);
    const std::size_t in = cfg_.backbone_dims[i], out = cfg_.projector_dims[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseArray w(Shape{out, in});
    for (auto& x : w.data()) x = rng.uniform(-bound, bound);
    store.add(projector_weight(m), std::move(w));
    store.add(projector_bias(m), DenseArray(Shape{out}));
  }
}

Var Encoder::encode(Tape& tape, const ParamStore& store, const BackboneFrame& frame) const {
  std::array<Var, kNumModalities> parts;
  for (Modality m : kModalities) {
    const auto i = static_cast<std::size_t>(m);
    if (frame[i].size() != cfg_.backbone_dims[i])
      throw std::invalid_argument(std::string("encode: ") + modality_name(m) +
                                  " backbone output has wrong dimension");
    Var x = tape.constant(frame[i]);
    Var y = tape.add(tape.matmul(tape.param(store, projector_weight(m)), x),
                     tape.param(store, projector_bias(m)));
    if (m == Modality::Visual || m == Modality::Depth) y = tape.tanh(y);
    parts[i] = y;
  }
  return tape.concat(parts);
}

DenseArray Encoder::encode(const ParamStore& store, const BackboneFrame& frame) const {
  Tape tape;
  return tape.value(encode(tape, store, frame));
}

std::vector<Var> Encoder::encode_trajectory(Tape& tape, const ParamStore& store,
                                            const std::vector<BackboneFrame>& frames) const {
  if (frames.empty()) throw std::invalid_argument("encode_trajectory: empty trajectory");
  std::vector<Var> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(encode(tape, store, f));
  return out;
}

std::vector<DenseArray> Encoder::encode_trajectory(const ParamStore& store,
                                                   const std::vector<BackboneFrame>& frames) const {
  if (frames.empty()) throw std::invalid_argument("encode_trajectory: empty trajectory");
  std::vector<DenseArray> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(encode(store, f));
  return out;
}

}  // namespace cnav
