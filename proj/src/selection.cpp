#include "cnav/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cnav/errors.hpp"
#include "cnav/rng.hpp"

namespace cnav {

namespace {

// Guards floor/ceil of ratio * length against representation error
// (0.29 * 100 == 28.999999999999996).
constexpr double kRatioSlack = 1e-9;

std::size_t floor_ratio(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + kRatioSlack));
}

std::size_t ceil_ratio(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - kRatioSlack));
}

void check_dims(const EmbeddingSequence& seq) {
  for (const auto& v : seq)
    if (v.size() != seq.front().size())
      throw std::invalid_argument("selection: embeddings differ in dimension");
}

}  // namespace

void validate(const LofConfig& cfg) {
  if (cfg.k_neighbors < 1) throw ValidationError("lof: k_neighbors must be >= 1");
  if (!(cfg.threshold > 0.0)) throw ValidationError("lof: threshold must be positive");
  if (!(cfg.max_keep_ratio > 0.0 && cfg.max_keep_ratio <= 1.0))
    throw ValidationError("lof: max_keep_ratio must lie in (0, 1]");
  if (!(cfg.epsilon_norm > 0.0)) throw ValidationError("lof: epsilon_norm must be positive");
}

double cosine_distance(std::span<const double> u, std::span<const double> v, double epsilon_norm) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_distance: dimension mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  const double nu = std::max(std::sqrt(uu), epsilon_norm);
  const double nv = std::max(std::sqrt(vv), epsilon_norm);
  return std::clamp(1.0 - dot / (nu * nv), 0.0, 2.0);
}

std::vector<double> cosine_distance_matrix(const EmbeddingSequence& seq, double epsilon_norm) {
  check_dims(seq);
  const std::size_t L = seq.size();
  std::vector<double> d(L * L, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = i + 1; j < L; ++j) {
      const double x = cosine_distance(seq[i].data(), seq[j].data(), epsilon_norm);
      d[i * L + j] = x;
      d[j * L + i] = x;
    }
  return d;
}

namespace {

Neighborhood neighborhood_from_row(const std::vector<double>& dist, std::size_t L, std::size_t i,
                                   std::size_t k) {
  std::vector<double> others;
  others.reserve(L - 1);
  for (std::size_t j = 0; j < L; ++j)
    if (j != i) others.push_back(dist[i * L + j]);
  std::nth_element(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1), others.end());
  Neighborhood n;
  n.k_distance = others[k - 1];
  for (std::size_t j = 0; j < L; ++j)
    if (j != i && dist[i * L + j] <= n.k_distance) n.members.push_back(j);
  return n;
}

}  // namespace

Neighborhood k_distance_neighborhood(const EmbeddingSequence& seq, std::size_t i, std::size_t k,
                                     double epsilon_norm) {
  const std::size_t L = seq.size();
  if (L < 2) throw std::invalid_argument("k_distance_neighborhood: need at least two frames");
  if (k < 1 || k > L - 1) throw std::invalid_argument("k_distance_neighborhood: k outside [1, L-1]");
  if (i >= L) throw std::out_of_range("k_distance_neighborhood: frame index");
  return neighborhood_from_row(cosine_distance_matrix(seq, epsilon_norm), L, i, k);
}

std::vector<double> lof_scores(const EmbeddingSequence& seq, const LofConfig& cfg) {
  const std::size_t L = seq.size();
  if (L < 2) throw std::invalid_argument("lof_scores: need at least two frames");
  const std::size_t k = std::clamp<std::size_t>(cfg.k_neighbors, 1, L - 1);
  const auto dist = cosine_distance_matrix(seq, cfg.epsilon_norm);

  std::vector<Neighborhood> hoods;
  hoods.reserve(L);
  for (std::size_t i = 0; i < L; ++i) hoods.push_back(neighborhood_from_row(dist, L, i, k));

  std::vector<double> lrd(L);
  for (std::size_t i = 0; i < L; ++i) {
    double reach = 0.0;
    for (std::size_t j : hoods[i].members) reach += std::max(hoods[j].k_distance, dist[i * L + j]);
    reach /= static_cast<double>(hoods[i].members.size());
    lrd[i] = 1.0 / std::max(reach, cfg.epsilon_norm);
  }

  std::vector<double> lof(L);
  for (std::size_t i = 0; i < L; ++i) {
    double s = 0.0;
    for (std::size_t j : hoods[i].members) s += lrd[j];
    lof[i] = s / static_cast<double>(hoods[i].members.size()) / lrd[i];
  }
  return lof;
}

KeyframeSet select_keyframes(const EmbeddingSequence& seq, const LofConfig& cfg) {
  validate(cfg);
  const std::size_t L = seq.size();
  KeyframeSet out;
  if (L == 0) return out;
  if (L == 1) {
    out.indices = {0};
    out.scores = {1.0};
    return out;
  }
  const auto scores = lof_scores(seq, cfg);

  // Every outcome is a prefix of one ranking: the final (Stop) frame first,
  // then descending score, ties by earlier index.
  std::vector<std::size_t> ranking(L - 1);
  std::iota(ranking.begin(), ranking.end(), 0);
  std::stable_sort(ranking.begin(), ranking.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  ranking.insert(ranking.begin(), L - 1);

  std::size_t above = 1;
  for (std::size_t i = 0; i + 1 < L; ++i)
    if (scores[i] > cfg.threshold) ++above;
  std::size_t m = std::max(above, std::min(cfg.min_keep, L));
  const std::size_t cap = std::max<std::size_t>(1, floor_ratio(cfg.max_keep_ratio, L));
  m = std::min(m, cap);

  out.indices.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(out.indices.begin(), out.indices.end());
  for (std::size_t i : out.indices) out.scores.push_back(scores[i]);
  return out;
}

std::vector<std::size_t> uniform_sample(std::size_t length, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("uniform_sample: ratio outside (0, 1]");
  if (length == 0) return {};
  std::size_t m = std::clamp<std::size_t>(ceil_ratio(ratio, length), 1, length);
  // Both endpoints are always kept, so a single pick widens to two.
  if (m == 1 && length > 1) m = 2;
  if (m == 1) return {0};
  std::vector<std::size_t> out(m);
  const std::size_t span = length - 1, gaps = m - 1;
  for (std::size_t j = 0; j < m; ++j) out[j] = (2 * j * span + gaps) / (2 * gaps);
  return out;
}

std::vector<std::size_t> cluster_sample(const EmbeddingSequence& seq, double ratio,
                                        std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("cluster_sample: ratio outside (0, 1]");
  const std::size_t L = seq.size();
  if (L == 0) return {};
  check_dims(seq);
  const std::size_t k = std::clamp<std::size_t>(ceil_ratio(ratio, L), 1, L);
  if (k == L) {
    std::vector<std::size_t> all(L);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  const std::size_t dim = seq.front().size();
  std::vector<std::vector<double>> pts(L, std::vector<double>(dim));
  for (std::size_t i = 0; i < L; ++i) {
    double n = 0.0;
    for (double x : seq[i].data()) n += x * x;
    n = std::max(std::sqrt(n), 1e-12);
    for (std::size_t d = 0; d < dim; ++d) pts[i][d] = seq[i][d] / n;
  }
  auto sq = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };

  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  std::vector<bool> chosen(L, false);
  std::size_t first = rng.below(L);
  centroids.push_back(pts[first]);
  chosen[first] = true;
  while (centroids.size() < k) {
    std::vector<double> w(L, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sq(pts[i], c));
      w[i] = chosen[i] ? 0.0 : best;
      total += w[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < L; ++i)
        if (!chosen[i]) open.push_back(i);
      pick = open[rng.below(open.size())];
    } else {
      double u = rng.uniform() * total;
      pick = L - 1;
      for (std::size_t i = 0; i < L; ++i) {
        if (w[i] <= 0.0) continue;
        if (u < w[i]) {
          pick = i;
          break;
        }
        u -= w[i];
      }
      while (chosen[pick]) pick = (pick + L - 1) % L;
    }
    chosen[pick] = true;
    centroids.push_back(pts[pick]);
  }

  std::vector<std::size_t> assign(L, 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < L; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (sq(pts[i], centroids[c]) < sq(pts[i], centroids[best])) best = c;
      if (best != assign[i]) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> mean(dim, 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < L; ++i)
        if (assign[i] == c) {
          for (std::size_t d = 0; d < dim; ++d) mean[d] += pts[i][d];
          ++count;
        }
      if (count == 0) continue;  // empty cluster keeps its centroid
      for (auto& x : mean) x /= static_cast<double>(count);
      centroids[c] = std::move(mean);
    }
  }

  std::vector<bool> taken(L, false);
  std::vector<std::size_t> out;
  for (const auto& c : centroids) {
    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sq(pts[a], c) < sq(pts[b], c); });
    for (std::size_t i : order)
      if (!taken[i]) {
        taken[i] = true;
        out.push_back(i);
        break;
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cnav
