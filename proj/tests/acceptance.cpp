// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero on any failure.
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "loss_reference.hpp"
#include "ovgt/checkpoint.hpp"
#include "ovgt/config.hpp"
#include "ovgt/harness.hpp"
#include "ovgt/metrics.hpp"

#ifndef OVGT_CONFIG_DIR
#define OVGT_CONFIG_DIR "configs"
#endif

using namespace ovgt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(shape, std::move(v));
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

RunConfig desk_config() { return load_config(std::filesystem::path(OVGT_CONFIG_DIR) / "desk.cfg"); }

// State shared between the trend and ablation criteria.
struct DeskRun {
  RunConfig config;
  std::vector<SceneSample> scenes;
  std::vector<SceneSample> sequences;
  std::optional<Model> model;
  double train_seconds = 0.0;
};

DeskRun& desk_run() {
  static DeskRun run = [] {
    DeskRun r;
    r.config = desk_config();
    const auto start = Clock::now();
    r.scenes = make_train_scenes(r.config);
    r.sequences = make_eval_sequences(r.config, make_eval_scenes(r.config));
    r.model.emplace(r.config.backbone, r.config.variant, r.config.init_seed);
    train(*r.model, r.config, r.scenes);
    r.train_seconds = seconds_since(start);
    return r;
  }();
  return run;
}

// ---------------------------------------------------------------------------

Outcome zero_init_transparency() {
  const auto start = Clock::now();
  const RunConfig config;
  const Model model(config.backbone, AdapterVariant::kOmniVGGT, 11);
  std::size_t identical = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const SceneSpec spec = config.data.scene_spec(5000 + i, i, config.backbone);
    SceneSample scene = generate(spec);
    const std::size_t frames = 1 + i % 5;
    std::vector<std::size_t> idx(frames);
    for (std::size_t k = 0; k < frames; ++k) idx[k] = k;
    const FrameBundle bundle = rgb_bundle(scene.select(idx));
    const Predictions with = model.forward(bundle);
    const Predictions without = model.backbone.forward(bundle);
    bool same = true;
    for (auto [a, b] : {std::pair{&with.cameras, &without.cameras}, {&with.depth, &without.depth},
                        {&with.depth_conf, &without.depth_conf}, {&with.pmap, &without.pmap},
                        {&with.pmap_conf, &without.pmap_conf}}) {
      same = same && values_of(*a) == values_of(*b);
    }
    identical += same ? 1 : 0;
  }
  const double secs = seconds_since(start);
  return {identical == 20 && secs < 10.0,
          std::to_string(identical) + "/20 bundles bit-identical, " + num(secs) + " s (limit 10 s)"};
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  RunConfig config;
  config.backbone.height = 16;
  config.backbone.width = 16;
  Model model(config.backbone, AdapterVariant::kDepthZeroConv, 21);
  Rng rng(22);
  // move the zero-initialized maps off zero so both adapters carry gradient
  std::normal_distribution<double> n(0.0, 0.02);
  for (auto p : model.adapter.zero_init_parameters()) {
    for (auto& x : p.tensor.mutable_values()) x = n(rng);
  }
  SceneSpec spec = config.data.scene_spec(23, 0, config.backbone);
  spec.num_frames = 2;
  const SceneSample seq = generate(spec);
  ModalityAssignment a;
  a.camera_flags = {1, 0};
  a.depth_flags = {1, 0};
  const FrameBundle bundle = apply_assignment(seq, a);
  const GroundTruth gt = build_ground_truth(seq);
  const auto loss = [&] { return total_loss(model.forward(bundle), gt, config.loss).total; };

  const std::vector<std::pair<std::string, std::vector<std::string>>> modules{
      {"embed", {"backbone.patch_embed", "backbone.pos_embed"}},
      {"aa", {"backbone.block"}},
      {"camera adapter", {"adapter.camera."}},
      {"depth adapter", {"adapter.depth."}},
      {"camera head", {"head.camera."}},
      {"depth head", {"head.depth."}},
      {"pmap head", {"head.pmap."}},
  };
  const ParameterList params = model.parameters();
  zero_grad(params);
  loss().backward();

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  for (const auto& [module, prefixes] : modules) {
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (const auto& pre : prefixes) {
        if (params[p].name.rfind(pre, 0) == 0) {
          members.push_back(p);
          break;
        }
      }
    }
    if (members.empty()) return {false, "no parameters found for module " + module};
    for (int pick = 0; pick < 2; ++pick) {
      const Parameter& prm = params[members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)]];
      Tensor t = prm.tensor;
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, t.numel() - 1)(rng);
      const double analytic = t.grad()[i];
      auto v = t.mutable_values();
      const double saved = v[i];
      double up, down;
      {
        NoGradGuard guard;
        v[i] = saved + h;
        up = loss().item();
        v[i] = saved - h;
        down = loss().item();
      }
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel >= worst) {
        worst = rel;
        worst_name = prm.name + "[" + std::to_string(i) + "]";
      }
      ++checked;
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && checked >= 10 && secs < 60.0,
          std::to_string(checked) + " parameters over 7 modules, max rel error " + num(worst) + " at " + worst_name +
              " (limit 1e-4), " + num(secs) + " s"};
}

Outcome pose_normalization_invariance() {
  const auto start = Clock::now();
  Rng rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> scale(0.2, 5.0);
  double worst = 0.0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n = 2 + static_cast<std::size_t>(set % 7);
    std::vector<CameraPose> poses(n);
    for (auto& p : poses) {
      p.rotation = random_rotation(rng);
      p.translation = Eigen::Vector3d(u(rng), u(rng), u(rng));
    }
    // world map x -> s*Q*x + c; a world-to-camera pose follows as R Q^T, s*t - R Q^T c
    const Eigen::Matrix3d q = random_rotation(rng);
    const Eigen::Vector3d c(u(rng), u(rng), u(rng));
    const double s = scale(rng);
    std::vector<CameraPose> moved(n);
    for (std::size_t i = 0; i < n; ++i) {
      moved[i].rotation = poses[i].rotation * q.transpose();
      moved[i].translation = s * poses[i].translation - moved[i].rotation * c;
    }
    const auto a = normalize_poses(poses);
    const auto b = normalize_poses(moved);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, (a.poses[i].rotation - b.poses[i].rotation).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.poses[i].translation - b.poses[i].translation).cwiseAbs().maxCoeff());
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-9 && secs < 1.0,
          "100 camera sets, max output change " + num(worst) + " (limit 1e-9), " + num(secs) + " s"};
}

Outcome loss_oracle() {
  Rng rng(41);
  std::bernoulli_distribution keep(0.7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 3);
    const std::size_t c = trial % 2 ? 3 : 1;
    const Tensor pred = random_tensor({n, c, 4, 4}, rng, -2.0, 2.0);
    const Tensor gt = random_tensor({n, c, 4, 4}, rng, -2.0, 2.0);
    const Tensor conf = random_tensor({n, 4, 4}, rng, 1.0, 4.0);
    std::vector<double> m(n * 16);
    for (auto& x : m) x = keep(rng) ? 1.0 : 0.0;
    const Tensor mask({n, 4, 4}, m);
    LossConfig cfg;
    cfg.alpha = 0.01 * trial;
    const double got = dense_loss(pred, gt, mask, conf, cfg).item();
    const double want = testing::reference_dense_loss(values_of(pred), values_of(gt), m, values_of(conf), n, c, 4, 4,
                                                      cfg.alpha, true);
    worst = std::max(worst, std::abs(got - want));
  }
  // breakdown sum on real ground truth with random predictions
  RunConfig config;
  config.backbone.height = 16;
  config.backbone.width = 16;
  double sum_gap = 0.0;
  for (std::size_t s = 0; s < 10; ++s) {
    SceneSpec spec = config.data.scene_spec(4100 + s, s, config.backbone);
    spec.num_frames = 3;
    const GroundTruth gt = build_ground_truth(generate(spec));
    Predictions p;
    p.cameras = random_tensor({3, 9}, rng, -1.0, 1.0);
    p.depth = random_tensor({3, 16, 16}, rng, 0.0, 2.0);
    p.depth_conf = random_tensor({3, 16, 16}, rng, 1.0, 3.0);
    p.pmap = random_tensor({3, 3, 16, 16}, rng, -1.0, 1.0);
    p.pmap_conf = random_tensor({3, 16, 16}, rng, 1.0, 3.0);
    const LossBreakdown b = total_loss(p, gt, config.loss);
    sum_gap = std::max(sum_gap, std::abs(b.total.item() - (b.camera.item() + b.depth.item() + b.pmap.item())));
  }
  return {worst <= 1e-12 && sum_gap <= 1e-12,
          "100 instances, max |loss - reference| " + num(worst) + ", max |total - sum| " + num(sum_gap) +
              " (limit 1e-12)"};
}

Outcome metric_oracles() {
  Rng rng(51);
  // AUC vs a fine Riemann sum of the fraction of pairs whose worse error is below theta
  std::uniform_real_distribution<double> err(0.0, 45.0);
  double auc_gap = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<PairError> errors(10 + 5 * static_cast<std::size_t>(trial));
    for (auto& e : errors) e = {err(rng), err(rng)};
    const int samples = 100000;
    double riemann = 0.0;
    for (int s = 0; s < samples; ++s) {
      const double theta = (s + 0.5) * 30.0 / samples;
      double hit = 0.0;
      for (const auto& e : errors) hit += std::max(e.rotation_deg, e.translation_deg) < theta ? 1.0 : 0.0;
      riemann += hit / static_cast<double>(errors.size());
    }
    riemann /= samples;
    auc_gap = std::max(auc_gap, std::abs(rra_rta_auc(errors, 5.0).auc - riemann));
  }
  // nearest-neighbour distances vs an exhaustive scan
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Eigen::Vector3d> a(200), b(200);
    for (auto& p : a) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
    for (auto& p : b) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
    const KdTree tree(b);
    double brute_sum = 0.0;
    for (const auto& q : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : b) best = std::min(best, (p - q).norm());
      if (tree.nearest(q).distance != best) ++mismatches;
      brute_sum += best;
    }
    if (reconstruction_metrics(a, b).acc_mean != brute_sum / 200.0) ++mismatches;
  }
  // depth scale invariance
  std::uniform_real_distribution<double> d(0.5, 5.0);
  std::vector<double> gt(400);
  for (auto& g : gt) g = d(rng);
  const std::vector<std::uint8_t> mask(400, 1);
  double worst_abs_rel = 0.0, worst_delta = 1.0;
  for (double c : {0.5, 2.0, 10.0}) {
    std::vector<double> pred(gt);
    for (auto& p : pred) p *= c;
    const auto m = depth_metrics(pred, gt, mask);
    worst_abs_rel = std::max(worst_abs_rel, m.abs_rel);
    worst_delta = std::min(worst_delta, m.delta_125);
  }
  return {auc_gap <= 1e-4 && mismatches == 0 && worst_abs_rel <= 1e-12 && worst_delta == 1.0,
          "AUC gap " + num(auc_gap) + " (limit 1e-4), NN mismatches " + std::to_string(mismatches) +
              ", scaled-depth abs_rel " + num(worst_abs_rel) + " delta " + num(worst_delta)};
}

Outcome sampler_distribution() {
  Rng rng = worker_rng(61, 0);
  const SamplerConfig cfg{0.1, 61};
  const int draws = 50000;
  int rgb_only = 0, mixed = 0;
  std::vector<double> q(5, 0.0), depth(4, 0.0);
  bool prefix = true;
  for (int i = 0; i < draws; ++i) {
    const auto a = sample_assignment(4, cfg, rng);
    bool seen_zero = false;
    for (auto f : a.camera_flags) {
      if (f == 0) seen_zero = true;
      if (f == 1 && seen_zero) prefix = false;
    }
    if (a.rgb_only) {
      ++rgb_only;
      continue;
    }
    ++mixed;
    q[a.camera_count()] += 1.0;
    for (std::size_t k = 0; k < 4; ++k) depth[k] += a.depth_flags[k];
  }
  const double p_rgb = static_cast<double>(rgb_only) / draws;
  double q_gap = 0.0, d_gap = 0.0;
  for (double c : q) q_gap = std::max(q_gap, std::abs(c / mixed - 0.2));
  for (double c : depth) d_gap = std::max(d_gap, std::abs(c / mixed - 0.5));
  return {std::abs(p_rgb - 0.1) <= 0.01 && q_gap <= 0.02 && d_gap <= 0.02 && prefix,
          "rgb_only " + num(p_rgb) + " (0.10 +- 0.01), max Q gap " + num(q_gap) + ", max depth gap " + num(d_gap) +
              " (+- 0.02), prefix " + (prefix ? "always" : "violated")};
}

Outcome training_sanity() {
  const auto start = Clock::now();
  const RunConfig config;  // 200 SGD steps on 20 scenes
  const auto scenes = make_train_scenes(config);
  // fixed probe: one sequence per training scene with a fixed assignment
  std::vector<SceneSample> probe;
  std::vector<ModalityAssignment> assignments;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    probe.push_back(make_eval_sequences(config, {scenes[i]})[0]);
    assignments.push_back(eval_assignment(config.data.frames_per_sequence, {50, 50}, config.eval_seed, i));
  }
  Model a(config.backbone, config.variant, config.init_seed);
  const double before = mean_total_loss(a, probe, assignments, config.loss);
  const TrainLog la = train(a, config, scenes);
  const double after = mean_total_loss(a, probe, assignments, config.loss);
  Model b(config.backbone, config.variant, config.init_seed);
  const TrainLog lb = train(b, config, scenes);
  bool same = encode_checkpoint(a.parameters()) == encode_checkpoint(b.parameters());
  for (std::size_t i = 0; i < la.losses.size(); ++i) same = same && la.losses[i].total == lb.losses[i].total;
  double tail = 0.0;
  for (std::size_t i = la.losses.size() - 10; i < la.losses.size(); ++i) tail += la.losses[i].total / 10.0;
  const double reduction = 1.0 - after / before;
  return {reduction >= 0.5 && same,
          "fixed-probe loss " + num(before) + " -> " + num(after) + " (" + num(100 * reduction) +
              "% reduction, need 50%); step-1 loss " + num(la.losses.front().total) + ", last-10 mean " + num(tail) +
              "; repeat run " + (same ? "bit-identical" : "DIFFERS") + ", " + num(seconds_since(start)) + " s"};
}

// Counts adjacent steps that move the wrong way.
std::size_t inversions(const std::vector<double>& v, bool increasing) {
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (increasing ? v[i + 1] < v[i] : v[i + 1] > v[i]) ++count;
  }
  return count;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + num(v[i]);
  return out;
}

Outcome injection_trend() {
  DeskRun& run = desk_run();
  const auto start = Clock::now();
  const auto rows = evaluate_schedule(*run.model, run.config, run.sequences);
  const double secs = run.train_seconds + seconds_since(start);
  std::vector<double> abs_rel, auc;
  for (const auto& r : rows) {
    abs_rel.push_back(r.report.abs_rel);
    auc.push_back(r.report.auc30);
  }
  const bool endpoints = abs_rel.back() <= abs_rel.front() && auc.back() >= auc.front();
  const std::size_t inv_d = inversions(abs_rel, false), inv_a = inversions(auc, true);
  const bool ok = endpoints && inv_d <= 1 && inv_a <= 1 && secs < 1800.0 && run.config.optimizer.steps >= 2000 &&
                  run.config.data.train_scenes >= 100;
  return {ok, "abs_rel [" + join(abs_rel) + "] (" + std::to_string(inv_d) + " inversions), auc30 [" + join(auc) +
                  "] (" + std::to_string(inv_a) + " inversions), " + std::to_string(run.config.optimizer.steps) +
                  " steps on " + std::to_string(run.config.data.train_scenes) + " scenes, " + num(secs) +
                  " s (limit 1800 s)"};
}

Outcome ablation_direction() {
  DeskRun& run = desk_run();
  const auto base = ablation_rows(*run.model, run.config.variant, run.sequences, run.config.eval_seed);
  std::vector<AblationRow> rows = base;
  for (auto v : {AdapterVariant::kReplace, AdapterVariant::kDepthZeroConv}) {
    Model m(run.config.backbone, v, run.config.init_seed);
    train(m, run.config, run.scenes);
    for (auto& r : ablation_rows(m, v, run.sequences, run.config.eval_seed)) rows.push_back(std::move(r));
  }
  const double default_full_abs_rel = rows[1].report.abs_rel;
  const double default_none_auc = rows[0].report.auc30;
  const double replace_none_auc = rows[2].report.auc30;
  const double dzc_full_abs_rel = rows[5].report.abs_rel;
  return {dzc_full_abs_rel >= default_full_abs_rel && replace_none_auc <= default_none_auc,
          "full-aux abs_rel depth_zeroconv " + num(dzc_full_abs_rel) + " vs default " + num(default_full_abs_rel) +
              "; no-aux auc30 replace " + num(replace_none_auc) + " vs default " + num(default_none_auc)};
}

Outcome persistence() {
  const RunConfig config;
  const Model model(config.backbone, config.variant, 71);
  const auto dir = std::filesystem::temp_directory_path() / "ovgt_acceptance";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.ckpt", model.parameters());
  Model other(config.backbone, config.variant, 72);
  restore_parameters(other.parameters(), load_checkpoint(dir / "a.ckpt"));
  save_checkpoint(dir / "b.ckpt", other.parameters());
  const bool identical = read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt");
  std::filesystem::remove_all(dir);

  // every byte of a small checkpoint, plus random bytes of the full one
  std::size_t missed = 0, tried = 0;
  const std::vector<CheckpointRecord> small{{"w", DType::kFloat64, {3, 4}, std::vector<double>(12, 0.25)},
                                            {"b", DType::kFloat32, {4}, {1, 2, 3, 4}}};
  const auto check = [&](const std::vector<std::uint8_t>& bytes, std::size_t i, std::uint8_t mask) {
    auto bad = bytes;
    bad[i] ^= mask;
    ++tried;
    try {
      decode_checkpoint(bad);
      ++missed;
    } catch (const CheckpointError&) {
    }
  };
  const auto small_bytes = encode_checkpoint(small);
  for (std::size_t i = 0; i < small_bytes.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) check(small_bytes, i, static_cast<std::uint8_t>(1u << bit));
    check(small_bytes, i, 0xFF);
  }
  const auto full = encode_checkpoint(model.parameters());
  Rng rng(73);
  std::uniform_int_distribution<std::size_t> pos(0, full.size() - 1);
  std::uniform_int_distribution<int> mask(1, 255);
  for (int k = 0; k < 300; ++k) check(full, pos(rng), static_cast<std::uint8_t>(mask(rng)));
  return {identical && missed == 0, std::string("save-load-save ") + (identical ? "byte-identical" : "DIFFERS") +
                                        ", corrupted copies detected " + std::to_string(tried - missed) + "/" +
                                        std::to_string(tried)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"zero-init transparency", zero_init_transparency},
      {"gradient integrity", gradient_integrity},
      {"pose-normalization invariance", pose_normalization_invariance},
      {"loss oracle equivalence", loss_oracle},
      {"metric oracles", metric_oracles},
      {"sampler distribution", sampler_distribution},
      {"training sanity", training_sanity},
      {"injection trend", injection_trend},
      {"ablation direction", ablation_direction},
      {"persistence", persistence},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected.empty() && !selected.count(k + 1)) continue;
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    std::printf("[%s] %zu %s: %s\n", out.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                out.detail.c_str());
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
