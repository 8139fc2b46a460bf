#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnav/tensor.hpp"
#include "json.hpp"

namespace cnav {

struct ParamEntry {
  DenseArray value;
  DenseArray adam_m;
  DenseArray adam_v;
  std::uint64_t step = 0;

  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

// Named trainable arrays plus their AdamW state. Names are dotted paths such
// as `encoder.proj_visual.weight` or `policy.gru.w_x`.
class ParamStore {
 public:
  using Map = std::map<std::string, ParamEntry>;

  void add(const std::string& name, DenseArray value);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const DenseArray& value(const std::string& name) const { return entry(name).value; }
  DenseArray& value(const std::string& name) { return entry(name).value; }
  const ParamEntry& entry(const std::string& name) const;
  ParamEntry& entry(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  void reset_moments();

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  Map entries_;
};

struct OptimConfig {
  double base_lr = 3e-3;
  std::uint64_t warmup_steps = 100;
  std::uint64_t total_steps = 1000;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void validate(const OptimConfig& cfg);

// Linear warmup to base_lr at warmup_steps, then linear decay to 0 at
// total_steps. Never negative.
double learning_rate(const OptimConfig& cfg, std::uint64_t step);

// One decoupled-weight-decay Adam update of every parameter in `store`.
// `grads` must hold an entry for every parameter name.
void adamw_step(ParamStore& store, const Gradients& grads, const OptimConfig& cfg,
                std::uint64_t step);

// alpha * a + (1 - alpha) * b for every parameter; moments and counters reset.
ParamStore interpolate_params(const ParamStore& a, const ParamStore& b, double alpha);

// Accumulates `src` into `dst` (dst += scale * src), inserting missing keys.
void accumulate(Gradients& dst, const Gradients& src, double scale = 1.0);

// --- cnav-ckpt-v1 -----------------------------------------------------------

inline constexpr std::string_view kCheckpointVersion = "cnav-ckpt-v1";

struct SerializedStore {
  nlohmann::json manifest;
  std::vector<std::uint8_t> blob;
};

// Little-endian float64 blob helpers shared by checkpoint and buffer files.
std::size_t append_f64(std::vector<std::uint8_t>& blob, std::span<const double> values);
std::vector<double> read_f64(std::span<const std::uint8_t> blob, std::size_t offset,
                             std::size_t byte_len);

SerializedStore serialize(const ParamStore& store, const nlohmann::json& meta = {});
ParamStore deserialize(const nlohmann::json& manifest, std::span<const std::uint8_t> blob);

// Writes `<base>.json` and `<base>.bin`.
void save_checkpoint(const std::filesystem::path& base, const ParamStore& store,
                     const nlohmann::json& meta = {});
ParamStore load_checkpoint(const std::filesystem::path& base, nlohmann::json* meta = nullptr);

void write_file(const std::filesystem::path& path, std::string_view contents);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace cnav
