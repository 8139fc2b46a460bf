#pragma once

// Keyframe selection over a trajectory's frozen visual embeddings.
//
// Frames are scored with the Local Outlier Factor under cosine distance; a
// frame whose local reachability density is lower than its neighbours'
// (score > 1) marks a semantic change such as a doorway or the goal coming
// into view. Uniform and k-means sampling are the comparison baselines.

#include <cstdint>
#include <span>
#include <vector>

#include "cnav/tensor.hpp"

namespace cnav {

using EmbeddingSequence = std::vector<DenseArray>;

struct LofConfig {
  std::size_t k_neighbors = 10;  // clamped to L - 1
  double threshold = 1.0;
  double epsilon_norm = 1e-12;
  std::size_t min_keep = 2;
  double max_keep_ratio = 1.0;
};

void validate(const LofConfig& cfg);

struct KeyframeSet {
  std::vector<std::size_t> indices;  // 0-based, strictly increasing
  std::vector<double> scores;        // LOF score per stored index
};

// 1 - cos(u, v) with each norm floored at `epsilon_norm`; clamped to [0, 2].
double cosine_distance(std::span<const double> u, std::span<const double> v,
                       double epsilon_norm = 1e-12);

// Symmetric pairwise cosine distance matrix, row-major L x L.
std::vector<double> cosine_distance_matrix(const EmbeddingSequence& seq, double epsilon_norm);

struct Neighborhood {
  double k_distance = 0.0;
  std::vector<std::size_t> members;  // ascending index order; size >= k
};

// Distance to the k-th nearest other frame and every frame within it.
Neighborhood k_distance_neighborhood(const EmbeddingSequence& seq, std::size_t i, std::size_t k,
                                     double epsilon_norm = 1e-12);

// LOF score per frame. Requires L >= 2; k is clamped to [1, L - 1].
std::vector<double> lof_scores(const EmbeddingSequence& seq, const LofConfig& cfg);

// Frames with LOF > threshold, always including the final frame, then
// widened to min_keep or trimmed to max_keep_ratio * L by score.
KeyframeSet select_keyframes(const EmbeddingSequence& seq, const LofConfig& cfg);

// ceil(r * L) evenly spaced indices including the first and last frame.
std::vector<std::size_t> uniform_sample(std::size_t length, double ratio);

// k-means (k = ceil(r * L), k-means++ seeding, at most 50 iterations) on the
// L2-normalized embeddings; returns the frame nearest each centroid.
std::vector<std::size_t> cluster_sample(const EmbeddingSequence& seq, double ratio,
                                        std::uint64_t seed);

}  // namespace cnav
