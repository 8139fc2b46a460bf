#pragma once

// Brute-force reference implementations for tests. Nothing here calls the
// routine it is used to check.

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cnav/env.hpp"
#include "cnav/params.hpp"

namespace oracles {

struct OracleReport {
  std::string descriptor;
  std::vector<double> reference;
  std::vector<double> implementation;
  double max_abs = 0.0;
  double max_rel = 0.0;
};

OracleReport compare(std::string descriptor, std::vector<double> reference,
                     std::vector<double> implementation);

// LOF straight from the definitions: full distance matrix, sorted rows.
std::vector<double> lof_bruteforce(const std::vector<std::vector<double>>& seq, std::size_t k,
                                   double eps = 1e-12);

struct ParamProbe {
  std::string name;
  std::size_t index;
};

// Central differences of `loss` at each probed entry.
std::vector<double> fd_gradient(const std::function<double(const cnav::ParamStore&)>& loss,
                                const cnav::ParamStore& params, const std::vector<ParamProbe>& probes,
                                double step = 1e-5);

// Every entry of every parameter (guarded to 1e4 entries).
std::vector<ParamProbe> all_entries(const cnav::ParamStore& params);

// Exact BFS (4-connected, Free cells) from (row, col) to the nearest Free
// cell within Chebyshev 1 of an instance of `category`. Throws if unreachable.
double geodesic_bfs(const cnav::Scene& scene, int row, int col, int category);

// Visibility by dense sampling of the open segment between cell centres: a
// cell blocks when a sample falls strictly inside its square.
bool line_of_sight_dense(const cnav::Scene& scene, int r0, int c0, int r1, int c1,
                         int samples = 20000);

// Optimal 2-means partition by exhaustive search (L <= 16). Returns the
// cluster label of every point.
std::vector<int> exact_two_means(const std::vector<std::vector<double>>& points);

}  // namespace oracles
