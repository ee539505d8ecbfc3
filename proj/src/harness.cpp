#include "ovgt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace ovgt {

namespace {

constexpr std::uint64_t kEvalSceneOffset = 1'000'003;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<SceneSample> make_scenes(const RunConfig& config, std::size_t count, std::uint64_t first_seed) {
  std::vector<SceneSample> scenes(count);
  parallel_for(count, [&](std::size_t i) {
    scenes[i] = generate(config.data.scene_spec(first_seed + i, i, config.backbone));
  });
  return scenes;
}

}  // namespace

std::size_t worker_threads() {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("OVGT_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------

Model::Model(const BackboneConfig& config, AdapterVariant variant, std::uint64_t seed)
    : init_rng_(seed), backbone(config, init_rng_), adapter(config, variant, init_rng_) {}

ParameterList Model::parameters() const {
  ParameterList params = backbone.parameters();
  const ParameterList extra = adapter.parameters();
  params.insert(params.end(), extra.begin(), extra.end());
  return params;
}

std::size_t analytic_parameter_count(const BackboneConfig& c, AdapterVariant variant) {
  const std::size_t d = c.dim;
  const std::size_t pp = c.patch * c.patch;
  const std::size_t hidden = c.mlp_ratio * d;
  const std::size_t linear_dd = d * d + d;
  const std::size_t layer = 2 * (2 * d) + 4 * linear_dd + (d * hidden + hidden) + (hidden * d + d);

  std::size_t total = c.channels * pp * d + d;  // patch embedding
  total += c.patches_per_frame() * d;           // positions
  total += d + c.registers * d + d;             // camera token, registers, first-frame flag
  total += 2 * c.layers * layer;
  total += c.camera_head_layers * layer + 2 * d + (d * 9 + 9);
  total += 2 * d + d * 2 * pp + 2 * pp;  // depth head
  total += 2 * d + d * 4 * pp + 4 * pp;  // point-map head

  const std::size_t encoders = variant == AdapterVariant::kOneLayer ? 1 : c.layers + 1;
  total += encoders * (9 * d + d);
  if (variant != AdapterVariant::kReplace) total += encoders * linear_dd;
  total += 2 * pp * d + d + d;  // depth encoder and placeholder
  if (variant == AdapterVariant::kDepthZeroConv) total += linear_dd;
  return total;
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(const OptimizerConfig& config, ParameterList params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    if (config_.kind == OptimizerKind::kAdam) v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Optimizer::step() {
  ++t_;
  double scale = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }
  const double lr = config_.lr;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    const auto w = t.mutable_values();
    auto& m = m_[k];
    switch (config_.kind) {
      case OptimizerKind::kSgd:
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * scale * g[i];
        break;
      case OptimizerKind::kMomentum:
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = config_.momentum * m[i] + scale * g[i];
          w[i] -= lr * m[i];
        }
        break;
      case OptimizerKind::kAdam: {
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = scale * g[i];
          m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
          v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
          w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
        }
        break;
      }
    }
    t.zero_grad();
  }
}

// ---------------------------------------------------------------------------

std::vector<SceneSample> make_train_scenes(const RunConfig& config) {
  return make_scenes(config, config.data.train_scenes, config.data.scene_seed);
}

std::vector<SceneSample> make_eval_scenes(const RunConfig& config) {
  return make_scenes(config, config.data.eval_scenes, config.data.scene_seed + kEvalSceneOffset);
}

std::vector<SceneSample> make_eval_sequences(const RunConfig& config, const std::vector<SceneSample>& scenes) {
  const FrameSamplerConfig fs{config.data.translation_weight};
  std::vector<SceneSample> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Rng rng = worker_rng(config.eval_seed, i);
    const auto poses = scenes[i].poses();
    const auto idx = sample_frames(poses, config.data.frames_per_sequence, config.data.top_n, rng, fs);
    out.push_back(scenes[i].select(idx));
  }
  return out;
}

TrainLog train(Model& model, const RunConfig& config, const std::vector<SceneSample>& scenes,
               const std::function<void(const LossRecord&)>& on_step) {
  if (scenes.empty()) throw std::invalid_argument("training needs at least one scene");
  const ParameterList params = model.parameters();
  zero_grad(params);
  Optimizer optimizer(config.optimizer, params);
  const FrameSamplerConfig fs{config.data.translation_weight};
  const std::size_t n = config.data.frames_per_sequence;
  const std::size_t batch = config.optimizer.batch_size;
  Rng rng = worker_rng(config.sampler.seed, 0);
  std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);

  TrainLog log;
  for (std::size_t step = 1; step <= config.optimizer.steps; ++step) {
    LossRecord rec;
    rec.step = step;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t scene = pick(rng);
      const auto idx = sample_frames(scenes[scene].poses(), n, config.data.top_n, rng, fs);
      const SceneSample seq = scenes[scene].select(idx);
      const GroundTruth gt = build_ground_truth(seq);
      ModalityAssignment assignment = sample_assignment(n, config.sampler, rng);
      const Predictions preds = model.forward(apply_assignment(seq, assignment));
      const LossBreakdown loss = total_loss(preds, gt, config.loss);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss (" + fmt(total) + ") at step " + std::to_string(step));
      }
      (batch == 1 ? loss.total : loss.total * (1.0 / static_cast<double>(batch))).backward();
      rec.camera += loss.camera.item() / static_cast<double>(batch);
      rec.depth += loss.depth.item() / static_cast<double>(batch);
      rec.pmap += loss.pmap.item() / static_cast<double>(batch);
      rec.total += total / static_cast<double>(batch);
      log.assignments.push_back({step, scene, std::move(assignment)});
    }
    optimizer.step();
    log.losses.push_back(rec);
    if (on_step) on_step(rec);
  }
  return log;
}

double mean_total_loss(const Model& model, const std::vector<SceneSample>& sequences,
                       const std::vector<ModalityAssignment>& assignments, const LossConfig& loss) {
  if (sequences.empty() || sequences.size() != assignments.size()) {
    throw std::invalid_argument("need one assignment per sequence");
  }
  std::vector<double> totals(sequences.size());
  parallel_for(sequences.size(), [&](std::size_t i) {
    NoGradGuard guard;
    const GroundTruth gt = build_ground_truth(sequences[i]);
    totals[i] = total_loss(model.forward(apply_assignment(sequences[i], assignments[i])), gt, loss).total.item();
  });
  return std::accumulate(totals.begin(), totals.end(), 0.0) / static_cast<double>(totals.size());
}

// ---------------------------------------------------------------------------

ModalityAssignment eval_assignment(std::size_t frames, const InjectionSetting& setting, std::uint64_t eval_seed,
                                   std::size_t sequence_index, DepthSubset subset) {
  const auto count = [frames](int pct) {
    return (frames * static_cast<std::size_t>(pct) + 99) / 100;
  };
  ModalityAssignment a;
  a.camera_flags.assign(frames, 0);
  a.depth_flags.assign(frames, 0);
  std::fill_n(a.camera_flags.begin(), count(setting.camera_pct), std::uint8_t{1});
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (subset == DepthSubset::kRandom) {
    // the same permutation for every setting, so depth subsets are nested
    Rng rng = worker_rng(eval_seed + 1, sequence_index);
    std::shuffle(order.begin(), order.end(), rng);
  }
  for (std::size_t i = 0; i < count(setting.depth_pct); ++i) a.depth_flags[order[i]] = 1;
  a.rgb_only = setting.camera_pct == 0 && setting.depth_pct == 0;
  return a;
}

MetricsReport evaluate_sequence(const Model& model, const SceneSample& sequence, const ModalityAssignment& assignment) {
  NoGradGuard guard;
  const Predictions preds = model.forward(apply_assignment(sequence, assignment));
  const GroundTruth gt = build_ground_truth(sequence);
  const std::size_t n = gt.frames();
  const std::size_t h = gt.mask.size(1);
  const std::size_t w = gt.mask.size(2);
  const std::size_t hw = h * w;

  std::vector<std::uint8_t> mask(n * hw);
  const auto mv = gt.mask.values();
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mv[i] > 0.5 ? 1 : 0;

  MetricsReport r;
  const DepthMetrics dm = depth_metrics(preds.depth.values(), gt.depth.values(), mask);
  r.abs_rel = dm.abs_rel;
  r.delta_125 = dm.delta_125;

  std::vector<CameraPose> pred_poses;
  for (const auto& g : preds.camera_vectors()) pred_poses.push_back(decode_camera(g, w, h).pose);
  if (n >= 2) {
    const auto errors = pairwise_pose_errors(pred_poses, gt.poses);
    const PoseAccuracy acc = rra_rta_auc(errors, 5.0, 30.0);
    r.rra5 = acc.rra;
    r.rta5 = acc.rta;
    r.auc30 = acc.auc;
  }

  std::vector<Eigen::Vector3d> pred_pts, gt_pts;
  const auto pp = preds.pmap.values();
  const auto gp = gt.pmap.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) {
      if (!mask[i * hw + p]) continue;
      const std::size_t base = i * 3 * hw + p;
      pred_pts.emplace_back(pp[base], pp[base + hw], pp[base + 2 * hw]);
      gt_pts.emplace_back(gp[base], gp[base + hw], gp[base + 2 * hw]);
    }
  }
  const auto aligned = median_scale_align(pred_pts, gt_pts);
  const ReconstructionMetrics rm = reconstruction_metrics(aligned, gt_pts);
  r.acc_mean = rm.acc_mean;
  r.acc_med = rm.acc_med;
  r.comp_mean = rm.comp_mean;
  r.comp_med = rm.comp_med;
  r.nc_mean = rm.nc_mean;
  r.nc_med = rm.nc_med;
  return r;
}

MetricsReport evaluate_setting(const Model& model, const std::vector<SceneSample>& sequences,
                               const InjectionSetting& setting, std::uint64_t eval_seed, DepthSubset subset) {
  if (sequences.empty()) throw std::invalid_argument("evaluation needs at least one sequence");
  std::vector<MetricsReport> reports(sequences.size());
  parallel_for(sequences.size(), [&](std::size_t i) {
    const auto a = eval_assignment(sequences[i].frames.size(), setting, eval_seed, i, subset);
    reports[i] = evaluate_sequence(model, sequences[i], a);
  });
  return MetricsReport::average(reports);
}

std::vector<SweepRow> evaluate_schedule(const Model& model, const RunConfig& config,
                                        const std::vector<SceneSample>& sequences) {
  if (config.eval_schedule.empty()) throw std::invalid_argument("eval schedule is empty");
  std::vector<SweepRow> rows;
  for (const auto& s : config.eval_schedule) {
    rows.push_back({s, evaluate_setting(model, sequences, s, config.eval_seed, config.eval_depth_subset)});
  }
  return rows;
}

std::string metrics_csv_header() {
  return "abs_rel,delta_125,rra5,rta5,auc30,acc_mean,acc_med,comp_mean,comp_med,nc_mean,nc_med";
}

std::string metrics_csv_values(const MetricsReport& r) {
  std::ostringstream os;
  os << fmt(r.abs_rel) << ',' << fmt(r.delta_125) << ',' << fmt(r.rra5) << ',' << fmt(r.rta5) << ','
     << fmt(r.auc30) << ',' << fmt(r.acc_mean) << ',' << fmt(r.acc_med) << ',' << fmt(r.comp_mean) << ','
     << fmt(r.comp_med) << ',' << fmt(r.nc_mean) << ',' << fmt(r.nc_med);
  return os.str();
}

void write_sweep(const std::filesystem::path& dir, const std::vector<SweepRow>& rows) {
  std::filesystem::create_directories(dir);
  auto csv = open_out(dir / "sweep.csv");
  csv << "camera_pct,depth_pct," << metrics_csv_header() << '\n';
  for (const auto& row : rows) {
    const std::string name =
        "setting_c" + std::to_string(row.setting.camera_pct) + "_d" + std::to_string(row.setting.depth_pct) + ".json";
    open_out(dir / name) << row.report.to_json() << '\n';
    csv << row.setting.camera_pct << ',' << row.setting.depth_pct << ',' << metrics_csv_values(row.report) << '\n';
  }
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& losses) {
  auto out = open_out(path);
  out << "step,camera,depth,pmap,total\n";
  for (const auto& r : losses) {
    out << r.step << ',' << fmt(r.camera) << ',' << fmt(r.depth) << ',' << fmt(r.pmap) << ',' << fmt(r.total) << '\n';
  }
}

void write_assignment_log(const std::filesystem::path& path, const std::vector<AssignmentRecord>& records) {
  auto out = open_out(path);
  out << "step,scene,rgb_only,cameras,depth_flags\n";
  for (const auto& r : records) {
    std::string flags;
    for (auto f : r.assignment.depth_flags) flags += f ? '1' : '0';
    out << r.step << ',' << r.scene << ',' << (r.assignment.rgb_only ? 1 : 0) << ',' << r.assignment.camera_count()
        << ',' << flags << '\n';
  }
}

// ---------------------------------------------------------------------------

std::vector<AblationRow> ablation_rows(const Model& model, AdapterVariant variant,
                                       const std::vector<SceneSample>& sequences, std::uint64_t eval_seed,
                                       DepthSubset subset) {
  return {{variant, false, evaluate_setting(model, sequences, {0, 0}, eval_seed, subset)},
          {variant, true, evaluate_setting(model, sequences, {100, 100}, eval_seed, subset)}};
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const std::function<void(const std::string&)>& progress) {
  const auto scenes = make_train_scenes(config);
  const auto sequences = make_eval_sequences(config, make_eval_scenes(config));
  std::vector<AblationRow> rows;
  for (const AdapterVariant v : {AdapterVariant::kOmniVGGT, AdapterVariant::kReplace, AdapterVariant::kOneLayer,
                                 AdapterVariant::kDepthZeroConv}) {
    if (progress) progress("training " + to_string(v));
    Model model(config.backbone, v, config.init_seed);
    train(model, config, scenes);
    for (auto& r : ablation_rows(model, v, sequences, config.eval_seed, config.eval_depth_subset)) rows.push_back(std::move(r));
  }
  return rows;
}

void write_ablation(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_out(path);
  out << "variant,aux," << metrics_csv_header() << '\n';
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << (r.full_aux ? "full-aux" : "no-aux") << ',' << metrics_csv_values(r.report)
        << '\n';
  }
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, double>> zero_map_norms(const std::vector<CheckpointRecord>& records) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& r : records) {
    const bool camera_zero = r.name.rfind("adapter.camera.zero", 0) == 0;
    const bool depth_zero = r.name.rfind("adapter.depth.zero.", 0) == 0;
    if (!camera_zero && !depth_zero) continue;
    const std::string map = r.name.substr(0, r.name.rfind('.'));
    double sq = 0.0;
    for (double v : r.values) sq += v * v;
    if (!out.empty() && out.back().first == map) {
      out.back().second = std::sqrt(out.back().second * out.back().second + sq);
    } else {
      out.emplace_back(map, std::sqrt(sq));
    }
  }
  return out;
}

std::string inspect_checkpoint(const std::vector<CheckpointRecord>& records, const std::optional<RunConfig>& config) {
  std::ostringstream os;
  std::size_t width = 4;
  for (const auto& r : records) width = std::max(width, r.name.size());
  os << std::left << std::setw(static_cast<int>(width)) << "name" << "  " << std::setw(16) << "shape"
     << "  count\n";
  std::size_t total = 0;
  for (const auto& r : records) {
    os << std::setw(static_cast<int>(width)) << r.name << "  " << std::setw(16) << to_string(r.shape) << "  "
       << r.values.size() << (r.dtype == DType::kFloat32 ? " (f32)" : "") << '\n';
    total += r.values.size();
  }
  os << "total parameters: " << total << '\n';
  const auto norms = zero_map_norms(records);
  os << "zero-init maps: " << norms.size() << '\n';
  for (const auto& [name, norm] : norms) os << "  " << name << "  deviation " << fmt(norm) << '\n';
  if (config) {
    const std::size_t expected = analytic_parameter_count(config->backbone, config->variant);
    os << "analytic count for " << to_string(config->variant) << ": " << expected
       << (expected == total ? " (matches)" : " (MISMATCH)") << '\n';
  }
  return os.str();
}

}  // namespace ovgt
