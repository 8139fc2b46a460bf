#include "cnav/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "cnav/errors.hpp"

namespace cnav {

void ParamStore::add(const std::string& name, DenseArray value) {
  if (entries_.contains(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  ParamEntry e;
  e.adam_m = DenseArray::zeros_like(value);
  e.adam_v = DenseArray::zeros_like(value);
  e.value = std::move(value);
  entries_.emplace(name, std::move(e));
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
  return it->second;
}

ParamEntry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::reset_moments() {
  for (auto& [_, e] : entries_) {
    e.adam_m = DenseArray::zeros_like(e.value);
    e.adam_v = DenseArray::zeros_like(e.value);
    e.step = 0;
  }
}

void validate(const OptimConfig& cfg) {
  if (cfg.warmup_steps > cfg.total_steps)
    throw ValidationError("optimizer: warmup_steps exceeds total_steps");
  if (cfg.base_lr < 0.0 || cfg.weight_decay < 0.0)
    throw ValidationError("optimizer: negative learning rate or weight decay");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ValidationError("optimizer: betas must lie in [0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("optimizer: epsilon must be positive");
}

double learning_rate(const OptimConfig& cfg, std::uint64_t step) {
  const double s = static_cast<double>(step);
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.base_lr;
    return cfg.base_lr * s / static_cast<double>(cfg.warmup_steps);
  }
  if (step >= cfg.total_steps) return 0.0;
  return cfg.base_lr * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

void adamw_step(ParamStore& store, const Gradients& grads, const OptimConfig& cfg,
                std::uint64_t step) {
  if (step == 0) throw std::invalid_argument("adamw_step: step must be >= 1");
  for (const auto& name : store.names())
    if (!grads.contains(name)) throw std::invalid_argument("adamw_step: missing gradient for " + name);

  const double lr = learning_rate(cfg, step);
  for (const auto& name : store.names()) {
    ParamEntry& e = store.entry(name);
    const DenseArray& g = grads.at(name);
    if (g.shape() != e.value.shape())
      throw std::invalid_argument("adamw_step: gradient shape mismatch for " + name);
    e.step += 1;
    const double t = static_cast<double>(e.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      e.adam_m[i] = cfg.beta1 * e.adam_m[i] + (1.0 - cfg.beta1) * g[i];
      e.adam_v[i] = cfg.beta2 * e.adam_v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = e.adam_m[i] / bc1;
      const double vhat = e.adam_v[i] / bc2;
      e.value[i] -= lr * cfg.weight_decay * e.value[i];
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

ParamStore interpolate_params(const ParamStore& a, const ParamStore& b, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("interpolate_params: alpha outside [0, 1]");
  if (a.size() != b.size()) throw std::invalid_argument("interpolate_params: name sets differ");
  ParamStore out;
  for (const auto& [name, ea] : a) {
    if (!b.contains(name)) throw std::invalid_argument("interpolate_params: missing " + name);
    const DenseArray& vb = b.value(name);
    if (vb.shape() != ea.value.shape())
      throw std::invalid_argument("interpolate_params: shape mismatch for " + name);
    DenseArray v(ea.value.shape());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = alpha * ea.value[i] + (1.0 - alpha) * vb[i];
    out.add(name, std::move(v));
  }
  return out;
}

void accumulate(Gradients& dst, const Gradients& src, double scale) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      DenseArray scaled = g;
      for (auto& x : scaled.data()) x *= scale;
      dst.emplace(name, std::move(scaled));
    } else {
      if (it->second.shape() != g.shape())
        throw std::invalid_argument("accumulate: shape mismatch for " + name);
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += scale * g[i];
    }
  }
}

// --- serialization ----------------------------------------------------------

std::size_t append_f64(std::vector<std::uint8_t>& blob, std::span<const double> values) {
  const std::size_t offset = blob.size();
  blob.reserve(blob.size() + values.size() * 8);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return offset;
}

std::vector<double> read_f64(std::span<const std::uint8_t> blob, std::size_t offset,
                             std::size_t byte_len) {
  if (byte_len % 8 != 0 || offset + byte_len > blob.size())
    throw IoError("blob range out of bounds or misaligned");
  std::vector<double> out(byte_len / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(blob[offset + i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

namespace {

nlohmann::json array_record(const std::string& name, const std::string& role,
                            const DenseArray& a, std::vector<std::uint8_t>& blob) {
  const std::size_t offset = append_f64(blob, a.data());
  return {{"name", name},  {"role", role},       {"shape", a.shape()},
          {"dtype", "f64"}, {"byte_offset", offset}, {"byte_len", a.size() * 8}};
}

}  // namespace

SerializedStore serialize(const ParamStore& store, const nlohmann::json& meta) {
  SerializedStore out;
  nlohmann::json arrays = nlohmann::json::array();
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, e] : store) {
    arrays.push_back(array_record(name, "value", e.value, out.blob));
    arrays.push_back(array_record(name, "adam_m", e.adam_m, out.blob));
    arrays.push_back(array_record(name, "adam_v", e.adam_v, out.blob));
    steps[name] = e.step;
  }
  out.manifest = {{"version", kCheckpointVersion},
                  {"arrays", std::move(arrays)},
                  {"steps", std::move(steps)},
                  {"blob_bytes", out.blob.size()},
                  {"meta", meta.is_null() ? nlohmann::json::object() : meta}};
  return out;
}

ParamStore deserialize(const nlohmann::json& manifest, std::span<const std::uint8_t> blob) {
  if (!manifest.contains("version") || manifest.at("version") != kCheckpointVersion)
    throw ValidationError("checkpoint version mismatch: expected " +
                          std::string(kCheckpointVersion));
  if (manifest.at("blob_bytes").get<std::size_t>() != blob.size())
    throw IoError("checkpoint blob size does not match manifest");
  std::map<std::string, ParamEntry> staged;
  for (const auto& rec : manifest.at("arrays")) {
    if (rec.at("dtype") != "f64") throw IoError("checkpoint: unsupported dtype");
    const auto name = rec.at("name").get<std::string>();
    const auto role = rec.at("role").get<std::string>();
    Shape shape = rec.at("shape").get<Shape>();
    DenseArray a(std::move(shape), read_f64(blob, rec.at("byte_offset").get<std::size_t>(),
                                            rec.at("byte_len").get<std::size_t>()));
    ParamEntry& e = staged[name];
    if (role == "value") e.value = std::move(a);
    else if (role == "adam_m") e.adam_m = std::move(a);
    else if (role == "adam_v") e.adam_v = std::move(a);
    else throw IoError("checkpoint: unknown array role " + role);
  }
  ParamStore store;
  for (auto& [name, e] : staged) {
    if (e.value.empty() || e.adam_m.shape() != e.value.shape() ||
        e.adam_v.shape() != e.value.shape())
      throw IoError("checkpoint: incomplete record for " + name);
    store.add(name, e.value);
    ParamEntry& dst = store.entry(name);
    dst.adam_m = std::move(e.adam_m);
    dst.adam_v = std::move(e.adam_v);
    dst.step = manifest.at("steps").at(name).get<std::uint64_t>();
  }
  return store;
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void save_checkpoint(const std::filesystem::path& base, const ParamStore& store,
                     const nlohmann::json& meta) {
  const SerializedStore s = serialize(store, meta);
  write_file(base.string() + ".bin", s.blob);
  write_file(base.string() + ".json", s.manifest.dump(2) + "\n");
}

ParamStore load_checkpoint(const std::filesystem::path& base, nlohmann::json* meta) {
  const std::filesystem::path manifest_path = base.string() + ".json";
  const std::filesystem::path blob_path = base.string() + ".bin";
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(blob_path))
    throw MissingArtifactError("missing checkpoint " + base.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  ParamStore store = deserialize(manifest, read_bytes(blob_path));
  if (meta) *meta = manifest.value("meta", nlohmann::json::object());
  return store;
}

}  // namespace cnav
