#pragma once

// Continual evaluation: SR and SPL over the cumulative category set after each
// stage, old/new decomposition, Avg/Last aggregation and forgetting curves.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cnav/env.hpp"
#include "json.hpp"

namespace cnav {

// S * l / max(p, l); a successful episode with l = 0 scores 1.
double spl(bool success, double shortest, double taken);

struct EvalEpisode {
  std::size_t scene_index = 0;
  Episode episode;
};

struct EvalSuite {
  int stage = 1;
  std::vector<int> categories;      // C_1 .. C_k, in stage order
  std::vector<int> new_categories;  // C_k
  std::map<int, std::vector<EvalEpisode>> episodes;
};

// Episodes for category c are drawn from the ("eval-episode", c) sub-stream
// and cycle over the scenes, so a category's episodes are the same at every
// stage. Throws ValidationError when a category cannot be sampled.
EvalSuite build_suite(const std::vector<Scene>& scenes, const std::vector<std::vector<int>>& stages,
                      int stage, std::size_t episodes_per_category, const EpisodeConfig& cfg,
                      std::uint64_t seed);

struct EpisodeRecord {
  int category = 0;
  std::string scene_id;
  bool success = false;
  double shortest = 0.0;
  double taken = 0.0;
  double spl = 0.0;
  std::size_t steps = 0;
};

struct CategoryMetrics {
  int category = 0;
  bool is_new = false;
  std::size_t episodes = 0;
  double sr = 0.0;
  double spl = 0.0;
};

struct GroupMetrics {
  std::size_t episodes = 0;
  double sr = 0.0;
  double spl = 0.0;
};

struct StageReport {
  int stage = 1;
  std::vector<CategoryMetrics> categories;
  GroupMetrics overall;
  std::optional<GroupMetrics> old_tasks;  // absent at stage 1
  GroupMetrics new_tasks;
  std::vector<EpisodeRecord> records;

  const CategoryMetrics& category(int c) const;
  // Episode-pooled SR over an arbitrary category subset.
  double sr_over(const std::vector<int>& cats) const;
};

// Groups are episode-pooled, so old and new recombine to the overall mean
// weighted by their episode counts.
StageReport make_report(int stage, const std::vector<int>& new_categories,
                        std::vector<EpisodeRecord> records);

StageReport evaluate_stage(NavPolicy& policy, const EvalSuite& suite,
                           const std::vector<Scene>& scenes, const ObsConfig& obs);

struct BenchmarkSummary {
  std::string run;
  std::size_t stages = 0;
  double avg_sr = 0.0, avg_spl = 0.0;
  double last_sr = 0.0, last_spl = 0.0;
  std::vector<std::optional<double>> forgetting_curve;  // old-task SR per stage
  double retention_ratio = 0.0;
  std::size_t buffer_frames = 0;
  std::size_t full_frames = 0;
  std::size_t buffer_bytes = 0;
};

// Avg: unweighted mean of stage means. Last: the final stage's mean.
BenchmarkSummary summarize(const std::string& run, const std::vector<StageReport>& reports);

nlohmann::json to_json(const StageReport& r);
StageReport stage_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkSummary& s);

// One row per category per stage: run,stage,category,role,episodes,sr,spl.
inline constexpr const char* kReportCsvHeader = "run,stage,category,role,episodes,sr,spl";
std::string report_csv_rows(const std::string& run, const std::vector<StageReport>& reports);
// One row per stage: run,stage,old_sr,new_sr,overall_sr.
inline constexpr const char* kForgettingCsvHeader = "run,stage,old_sr,new_sr,overall_sr";
std::string forgetting_csv_rows(const std::string& run, const std::vector<StageReport>& reports);

std::string format_double(double v);

}  // namespace cnav
