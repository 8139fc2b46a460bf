#pragma once

// Multimodal observation encoder: frozen seeded backbones per modality,
// trainable affine projectors, concatenated into one feature vector.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cnav/env.hpp"
#include "cnav/params.hpp"
#include "cnav/rng.hpp"
#include "cnav/tensor.hpp"

namespace cnav {

enum class Modality : std::uint8_t { Visual = 0, Depth, Pose, PrevAction, Goal };
inline constexpr std::size_t kNumModalities = 5;
inline constexpr std::array<Modality, kNumModalities> kModalities{
    Modality::Visual, Modality::Depth, Modality::Pose, Modality::PrevAction, Modality::Goal};

const char* modality_name(Modality m);

struct EncoderConfig {
  ObsConfig obs;
  // Frozen backbone output widths.
  std::array<std::size_t, kNumModalities> backbone_dims{256, 16, 16, 8, 8};
  // Trainable projector output widths; their sum is the feature dimension.
  std::array<std::size_t, kNumModalities> projector_dims{64, 32, 16, 8, 8};

  std::size_t input_dim(Modality m) const;
  std::size_t feature_dim() const;
  // Offset of a modality's slice within the concatenated feature.
  std::size_t feature_offset(Modality m) const;
};

// Frozen backbone outputs of one observation, one array per modality.
using BackboneFrame = std::array<DenseArray, kNumModalities>;

// Semi-orthogonal matrix (orthonormal rows if rows <= cols, else columns).
DenseArray orthogonal_matrix(std::size_t rows, std::size_t cols, Rng& rng);

class Encoder {
 public:
  Encoder(EncoderConfig cfg, std::uint64_t backbone_seed);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return cfg_.feature_dim(); }

  // Raw per-modality input vectors (one-hots, depth, pose).
  std::array<DenseArray, kNumModalities> raw_inputs(const Observation& obs) const;
  BackboneFrame backbone(const Observation& obs) const;
  // Frozen visual backbone output; independent of trainable parameters.
  DenseArray visual_embedding(const Observation& obs) const;
  const DenseArray& backbone_matrix(Modality m) const {
    return backbones_[static_cast<std::size_t>(m)];
  }

  // Adds `encoder.proj_<modality>.{weight,bias}` to the store.
  void init_params(ParamStore& store, Rng& rng) const;

  Var encode(Tape& tape, const ParamStore& store, const BackboneFrame& frame) const;
  DenseArray encode(const ParamStore& store, const BackboneFrame& frame) const;
  DenseArray encode(const ParamStore& store, const Observation& obs) const {
    return encode(store, backbone(obs));
  }

  std::vector<Var> encode_trajectory(Tape& tape, const ParamStore& store,
                                     const std::vector<BackboneFrame>& frames) const;
  std::vector<DenseArray> encode_trajectory(const ParamStore& store,
                                            const std::vector<BackboneFrame>& frames) const;

 private:
  EncoderConfig cfg_;
  std::array<DenseArray, kNumModalities> backbones_;
};

std::string projector_weight(Modality m);
std::string projector_bias(Modality m);

}  // namespace cnav
