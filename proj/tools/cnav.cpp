// cnav: dataset generation, continual training, evaluation and reports.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cnav/bench.hpp"
#include "cnav/errors.hpp"

namespace fs = std::filesystem;
using namespace cnav;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> stages;
  std::vector<std::string> runs;
  std::optional<int> resume_after;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_run_config(o.config);
  } else if (!o.out.empty() && fs::exists(fs::path(o.out) / "config.json")) {
    cfg = load_run_config(fs::path(o.out) / "config.json");
  }
  if (o.seed) cfg.seed = cfg.trainer.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.stages) cfg = truncate_stages(cfg, *o.stages);
  validate(cfg);
  return cfg;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
  const nlohmann::json manifest = {{"command", command}, {"created", utc_now()}, {"config", to_json(cfg)}};
  write_file(cfg.out_dir / "manifest.json", manifest.dump(1) + "\n");
  write_file(cfg.out_dir / "config.json", to_json(cfg).dump(1) + "\n");
}

std::vector<std::string> selected_runs(const RunConfig& cfg, const Options& o) {
  if (!o.runs.empty()) return o.runs;
  std::vector<std::string> names;
  for (const auto& r : cfg.effective_runs()) names.push_back(r.name);
  return names;
}

void do_gen(const RunConfig& cfg) {
  const Dataset d = generate_dataset(cfg);
  write_dataset(cfg.out_dir / "dataset", d);
  std::printf("%-6s %-16s %12s %8s\n", "stage", "categories", "trajectories", "frames");
  for (std::size_t k = 0; k < d.stages.size(); ++k) {
    std::string cats;
    for (int c : cfg.stages[k]) cats += (cats.empty() ? "" : ",") + std::to_string(c);
    std::size_t frames = 0;
    for (const auto& t : d.stages[k]) frames += t.trajectory.size();
    std::printf("%-6zu %-16s %12zu %8zu\n", k + 1, cats.c_str(), d.stages[k].size(), frames);
  }
  std::printf("scenes: %zu train, %zu eval\n", d.train_scenes.size(), d.eval_scenes.size());
}

BenchData load_bench(const RunConfig& cfg) {
  const fs::path dir = cfg.out_dir / "dataset";
  if (!fs::exists(dir)) throw MissingArtifactError("no dataset under " + dir.string() + "; run `cnav gen` first");
  return prepare(cfg, read_dataset(dir, cfg));
}

void do_train(const BenchData& data, const Options& o) {
  for (const auto& name : selected_runs(data.config, o)) {
    std::printf("training %s\n", name.c_str());
    std::fflush(stdout);
    cmd_train(data, name, o.resume_after);
  }
}

void do_eval(const BenchData& data, const Options& o, bool with_expert) {
  auto names = selected_runs(data.config, o);
  if (with_expert) names.push_back("expert");
  for (const auto& name : names) {
    const auto reports = cmd_eval(data, name);
    std::printf("%-16s", name.c_str());
    for (const auto& r : reports) std::printf("  S%d SR %.3f SPL %.3f", r.stage, r.overall.sr, r.overall.spl);
    std::printf("\n");
  }
}

void do_report(const RunConfig& cfg) {
  const auto summary = cmd_report(cfg);
  std::printf("%-16s %8s %8s %8s %8s\n", "run", "avg_sr", "last_sr", "avg_spl", "last_spl");
  for (const auto& s : summary.at("runs"))
    std::printf("%-16s %8.3f %8.3f %8.3f %8.3f\n", s.at("run").get<std::string>().c_str(),
                s.at("avg_sr").get<double>(), s.at("last_sr").get<double>(), s.at("avg_spl").get<double>(),
                s.at("last_spl").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual object-goal navigation benchmark"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "RunConfig JSON file");
    sub->add_option("--seed", o.seed, "master seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--stages", o.stages, "train and evaluate only the first N stages");
  };
  auto* gen = app.add_subcommand("gen", "generate scenes, demonstrations and evaluation suites");
  auto* train = app.add_subcommand("train", "train runs stage by stage");
  auto* eval = app.add_subcommand("eval", "evaluate saved checkpoints");
  auto* report = app.add_subcommand("report", "aggregate evaluation reports");
  auto* bench = app.add_subcommand("bench", "gen, train, eval and report every run");
  for (auto* sub : {gen, train, eval, report, bench}) common(sub);
  for (auto* sub : {train, eval})
    sub->add_option("--strategy", o.runs, "run name(s); defaults to every configured run")->delimiter(',');
  train->add_option("--resume-after", o.resume_after, "continue from the saved state of this stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve_config(o);
    RunLock lock(cfg.out_dir);
    if (gen->parsed()) {
      write_manifest(cfg, "gen");
      do_gen(cfg);
    } else if (train->parsed()) {
      do_train(load_bench(cfg), o);
    } else if (eval->parsed()) {
      do_eval(load_bench(cfg), o, o.runs.empty());
    } else if (report->parsed()) {
      do_report(cfg);
    } else if (bench->parsed()) {
      write_manifest(cfg, "bench");
      do_gen(cfg);
      const BenchData data = load_bench(cfg);
      do_train(data, o);
      do_eval(data, o, true);
      do_report(cfg);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
