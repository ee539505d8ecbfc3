#include "ovgt/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ovgt {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) { return static_cast<std::uint64_t>(to_size(v)); }

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dim", [](RunConfig& c, const std::string& v) { c.backbone.dim = to_size(v); }},
      {"layers", [](RunConfig& c, const std::string& v) { c.backbone.layers = to_size(v); }},
      {"heads", [](RunConfig& c, const std::string& v) { c.backbone.heads = to_size(v); }},
      {"patch", [](RunConfig& c, const std::string& v) { c.backbone.patch = to_size(v); }},
      {"registers", [](RunConfig& c, const std::string& v) { c.backbone.registers = to_size(v); }},
      {"image_height", [](RunConfig& c, const std::string& v) { c.backbone.height = to_size(v); }},
      {"image_width", [](RunConfig& c, const std::string& v) { c.backbone.width = to_size(v); }},
      {"mlp_ratio", [](RunConfig& c, const std::string& v) { c.backbone.mlp_ratio = to_size(v); }},
      {"camera_head_layers", [](RunConfig& c, const std::string& v) { c.backbone.camera_head_layers = to_size(v); }},
      {"variant", [](RunConfig& c, const std::string& v) { c.variant = parse_adapter_variant(v); }},
      {"rgb_only_prob", [](RunConfig& c, const std::string& v) { c.sampler.rgb_only_prob = to_double(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.sampler.seed = to_u64(v); }},
      {"init_seed", [](RunConfig& c, const std::string& v) { c.init_seed = to_u64(v); }},
      {"eval_seed", [](RunConfig& c, const std::string& v) { c.eval_seed = to_u64(v); }},
      {"eval_depth_subset", [](RunConfig& c, const std::string& v) { c.eval_depth_subset = parse_depth_subset(v); }},
      {"alpha", [](RunConfig& c, const std::string& v) { c.loss.alpha = to_double(v); }},
      {"gradient_terms", [](RunConfig& c, const std::string& v) { c.loss.gradient_terms = to_bool(v); }},
      {"optimizer", [](RunConfig& c, const std::string& v) { c.optimizer.kind = parse_optimizer_kind(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.optimizer.lr = to_double(v); }},
      {"momentum", [](RunConfig& c, const std::string& v) { c.optimizer.momentum = to_double(v); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.optimizer.beta1 = to_double(v); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.optimizer.beta2 = to_double(v); }},
      {"adam_eps", [](RunConfig& c, const std::string& v) { c.optimizer.eps = to_double(v); }},
      {"clip_norm", [](RunConfig& c, const std::string& v) { c.optimizer.clip_norm = to_double(v); }},
      {"steps", [](RunConfig& c, const std::string& v) { c.optimizer.steps = to_size(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.optimizer.batch_size = to_size(v); }},
      {"scene_seed", [](RunConfig& c, const std::string& v) { c.data.scene_seed = to_u64(v); }},
      {"train_scenes", [](RunConfig& c, const std::string& v) { c.data.train_scenes = to_size(v); }},
      {"eval_scenes", [](RunConfig& c, const std::string& v) { c.data.eval_scenes = to_size(v); }},
      {"scene_frames", [](RunConfig& c, const std::string& v) { c.data.scene_frames = to_size(v); }},
      {"frames_per_sequence", [](RunConfig& c, const std::string& v) { c.data.frames_per_sequence = to_size(v); }},
      {"top_n", [](RunConfig& c, const std::string& v) { c.data.top_n = to_size(v); }},
      {"world",
       [](RunConfig& c, const std::string& v) {
         if (v != "mixed") parse_world_type(v);
         c.data.world = v;
       }},
      {"radius_min", [](RunConfig& c, const std::string& v) { c.data.radius_min = to_double(v); }},
      {"radius_max", [](RunConfig& c, const std::string& v) { c.data.radius_max = to_double(v); }},
      {"orbit_arc", [](RunConfig& c, const std::string& v) { c.data.orbit_arc = to_double(v); }},
      {"jitter", [](RunConfig& c, const std::string& v) { c.data.jitter = to_double(v); }},
      {"fov_min", [](RunConfig& c, const std::string& v) { c.data.fov_min = to_double(v); }},
      {"fov_max", [](RunConfig& c, const std::string& v) { c.data.fov_max = to_double(v); }},
      {"translation_weight", [](RunConfig& c, const std::string& v) { c.data.translation_weight = to_double(v); }},
      {"eval_schedule",
       [](RunConfig& c, const std::string& v) {
         c.eval_schedule = parse_schedule(v);
         if (c.eval_schedule.empty()) throw std::invalid_argument("eval_schedule lists no settings");
       }},
  };
  return table;
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kMomentum:
      return "momentum";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (sgd | momentum | adam)");
}

std::string to_string(DepthSubset subset) { return subset == DepthSubset::kFirst ? "first" : "random"; }

DepthSubset parse_depth_subset(const std::string& name) {
  if (name == "random") return DepthSubset::kRandom;
  if (name == "first") return DepthSubset::kFirst;
  throw std::invalid_argument("unknown depth subset '" + name + "' (random | first)");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
}

void DataConfig::validate() const {
  if (world != "mixed") parse_world_type(world);
  if (train_scenes == 0) throw std::invalid_argument("train_scenes must be at least 1");
  if (scene_frames == 0) throw std::invalid_argument("scene_frames must be at least 1");
  if (frames_per_sequence == 0 || frames_per_sequence > scene_frames) {
    throw std::invalid_argument("frames_per_sequence must lie in [1, scene_frames]");
  }
  if (top_n + 1 < frames_per_sequence) throw std::invalid_argument("top_n must be at least frames_per_sequence - 1");
  if (top_n >= scene_frames) throw std::invalid_argument("top_n must be below scene_frames");
  if (!(translation_weight >= 0.0)) throw std::invalid_argument("translation_weight must be non-negative");
}

SceneSpec DataConfig::scene_spec(std::uint64_t seed, std::size_t index, const BackboneConfig& backbone) const {
  SceneSpec spec;
  spec.seed = seed;
  spec.num_frames = scene_frames;
  spec.height = backbone.height;
  spec.width = backbone.width;
  if (world == "mixed") {
    spec.world = index % 2 == 0 ? WorldType::kPlanes : WorldType::kBlobs;
  } else {
    spec.world = parse_world_type(world);
  }
  spec.radius_min = radius_min;
  spec.radius_max = radius_max;
  spec.orbit_arc = orbit_arc;
  spec.jitter = jitter;
  spec.fov_min = fov_min;
  spec.fov_max = fov_max;
  return spec;
}

void RunConfig::validate() const {
  backbone.validate();
  if (backbone.channels != 3) throw std::invalid_argument("synthetic scenes are rendered with 3 channels");
  sampler.validate();
  loss.validate();
  optimizer.validate();
  data.validate();
  data.scene_spec(0, 0, backbone).validate();
  for (const auto& s : eval_schedule) {
    if (s.camera_pct < 0 || s.camera_pct > 100 || s.depth_pct < 0 || s.depth_pct > 100) {
      throw std::invalid_argument("injection percentages must lie in [0, 100]");
    }
  }
}

std::vector<InjectionSetting> parse_schedule(const std::string& text) {
  std::vector<InjectionSetting> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("schedule entry '" + item + "' is not camera:depth");
    InjectionSetting s;
    s.camera_pct = static_cast<int>(to_size(trim(item.substr(0, colon))));
    s.depth_pct = static_cast<int>(to_size(trim(item.substr(colon + 1))));
    if (s.camera_pct > 100 || s.depth_pct > 100) throw std::invalid_argument("percentages must lie in [0, 100]");
    out.push_back(s);
  }
  return out;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
    }
    seen[key] = lineno;
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      it->second(config, value);
    } catch (const std::exception& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    config.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  if (config.eval_schedule.empty()) throw ConfigError(source + ": eval_schedule is empty");
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

}  // namespace ovgt
