#include "oracles.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace oracles {

OracleReport compare(std::string descriptor, std::vector<double> reference,
                     std::vector<double> implementation) {
  OracleReport r{std::move(descriptor), std::move(reference), std::move(implementation), 0.0, 0.0};
  if (r.reference.size() != r.implementation.size()) {
    r.max_abs = r.max_rel = std::numeric_limits<double>::infinity();
    return r;
  }
  for (std::size_t i = 0; i < r.reference.size(); ++i) {
    const double a = std::fabs(r.reference[i] - r.implementation[i]);
    const double scale = std::max({std::fabs(r.reference[i]), std::fabs(r.implementation[i]), 1e-8});
    r.max_abs = std::max(r.max_abs, a);
    r.max_rel = std::max(r.max_rel, a / scale);
  }
  return r;
}

namespace {

double cosdist(const std::vector<double>& a, const std::vector<double>& b, double eps) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  double d = 1.0 - ab / (std::max(std::sqrt(aa), eps) * std::max(std::sqrt(bb), eps));
  if (d < 0) d = 0;
  if (d > 2) d = 2;
  return d;
}

}  // namespace

std::vector<double> lof_bruteforce(const std::vector<std::vector<double>>& seq, std::size_t k,
                                   double eps) {
  const std::size_t L = seq.size();
  assert(L >= 2 && L <= 200);
  if (k > L - 1) k = L - 1;
  if (k < 1) k = 1;
  std::vector<std::vector<double>> d(L, std::vector<double>(L, 0.0));
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (i != j) d[i][j] = cosdist(seq[i], seq[j], eps);

  std::vector<double> kdist(L);
  std::vector<std::vector<std::size_t>> hood(L);
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < L; ++j)
      if (j != i) row.push_back(d[i][j]);
    std::sort(row.begin(), row.end());
    kdist[i] = row[k - 1];
    for (std::size_t j = 0; j < L; ++j)
      if (j != i && d[i][j] <= kdist[i]) hood[i].push_back(j);
  }
  std::vector<double> lrd(L);
  for (std::size_t i = 0; i < L; ++i) {
    double total = 0;
    for (std::size_t j : hood[i]) total += std::max(kdist[j], d[i][j]);
    const double mean = total / static_cast<double>(hood[i].size());
    lrd[i] = 1.0 / std::max(mean, eps);
  }
  std::vector<double> lof(L);
  for (std::size_t i = 0; i < L; ++i) {
    double total = 0;
    for (std::size_t j : hood[i]) total += lrd[j];
    lof[i] = total / static_cast<double>(hood[i].size()) / lrd[i];
  }
  return lof;
}

std::vector<double> fd_gradient(const std::function<double(const cnav::ParamStore&)>& loss,
                                const cnav::ParamStore& params, const std::vector<ParamProbe>& probes,
                                double step) {
  assert(step > 0 && probes.size() <= 10000);
  std::vector<double> out;
  out.reserve(probes.size());
  cnav::ParamStore work = params;
  for (const auto& p : probes) {
    double& x = work.value(p.name)[p.index];
    const double orig = x;
    x = orig + step;
    const double up = loss(work);
    x = orig - step;
    const double down = loss(work);
    x = orig;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

std::vector<ParamProbe> all_entries(const cnav::ParamStore& params) {
  std::vector<ParamProbe> out;
  for (const auto& [name, entry] : params)
    for (std::size_t i = 0; i < entry.value.size(); ++i) out.push_back({name, i});
  assert(out.size() <= 10000);
  return out;
}

double geodesic_bfs(const cnav::Scene& scene, int row, int col, int category) {
  const int H = scene.height(), W = scene.width();
  auto free_cell = [&](int r, int c) {
    return r >= 0 && c >= 0 && r < H && c < W && scene.kind(r, c) == cnav::CellKind::Free;
  };
  auto target = [&](int r, int c) {
    if (!free_cell(r, c)) return false;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr >= 0 && cc >= 0 && rr < H && cc < W && scene.kind(rr, cc) == cnav::CellKind::Object &&
            scene.category_at(rr, cc) == category)
          return true;
      }
    return false;
  };
  if (!free_cell(row, col)) throw std::invalid_argument("geodesic_bfs: start is not a free cell");
  std::vector<int> dist(static_cast<std::size_t>(H * W), -1);
  std::deque<std::pair<int, int>> q{{row, col}};
  dist[static_cast<std::size_t>(row * W + col)] = 0;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    if (target(r, c)) return dist[static_cast<std::size_t>(r * W + c)];
    const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    for (int i = 0; i < 4; ++i) {
      const int nr = r + dr[i], nc = c + dc[i];
      if (!free_cell(nr, nc) || dist[static_cast<std::size_t>(nr * W + nc)] >= 0) continue;
      dist[static_cast<std::size_t>(nr * W + nc)] = dist[static_cast<std::size_t>(r * W + c)] + 1;
      q.push_back({nr, nc});
    }
  }
  throw std::runtime_error("geodesic_bfs: goal unreachable");
}

bool line_of_sight_dense(const cnav::Scene& scene, int r0, int c0, int r1, int c1, int samples) {
  // Cell (r, c) covers [r - 0.5, r + 0.5] x [c - 0.5, c + 0.5].
  for (int s = 1; s < samples; ++s) {
    const double t = static_cast<double>(s) / samples;
    const double y = r0 + t * (r1 - r0), x = c0 + t * (c1 - c0);
    const int r = static_cast<int>(std::lround(y)), c = static_cast<int>(std::lround(x));
    if ((r == r0 && c == c0) || (r == r1 && c == c1)) continue;
    const double fy = std::fabs(y - r), fx = std::fabs(x - c);
    const double margin = 1e-9;
    if (fy < 0.5 - margin && fx < 0.5 - margin && scene.blocks(r, c)) return false;
  }
  return true;
}

std::vector<int> exact_two_means(const std::vector<std::vector<double>>& points) {
  const std::size_t L = points.size();
  assert(L >= 2 && L <= 16);
  const std::size_t dim = points.front().size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels;
  for (unsigned mask = 1; mask + 1 < (1u << L); ++mask) {
    if (mask & 1u) continue;  // label of point 0 fixed to 0
    std::vector<int> labels(L);
    for (std::size_t i = 0; i < L; ++i) labels[i] = (mask >> i) & 1u;
    double cost = 0;
    for (int g = 0; g < 2; ++g) {
      std::vector<double> mean(dim, 0.0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < L; ++i)
        if (labels[i] == g) {
          ++n;
          for (std::size_t d = 0; d < dim; ++d) mean[d] += points[i][d];
        }
      for (auto& m : mean) m /= static_cast<double>(n);
      for (std::size_t i = 0; i < L; ++i)
        if (labels[i] == g)
          for (std::size_t d = 0; d < dim; ++d) cost += (points[i][d] - mean[d]) * (points[i][d] - mean[d]);
    }
    if (cost < best) {
      best = cost;
      best_labels = labels;
    }
  }
  return best_labels;
}

}  // namespace oracles
