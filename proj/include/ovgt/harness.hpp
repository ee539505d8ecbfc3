#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovgt/backbone.hpp"
#include "ovgt/checkpoint.hpp"
#include "ovgt/config.hpp"
#include "ovgt/fusion_sampler.hpp"
#include "ovgt/geoadapter.hpp"
#include "ovgt/losses.hpp"
#include "ovgt/metrics.hpp"
#include "ovgt/synthscene.hpp"

namespace ovgt {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker count from OVGT_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_threads();

/// Runs fn(i) for i in [0, count) on up to worker_threads() threads.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

/// Backbone plus GeoAdapter, initialized from one seed.
class Model {
 public:
  Model(const BackboneConfig& config, AdapterVariant variant, std::uint64_t seed);

  Predictions forward(const FrameBundle& bundle) const { return backbone.forward(bundle, &adapter); }
  ParameterList parameters() const;

 private:
  Rng init_rng_;  // consumed by the two members below, in order

 public:
  Backbone backbone;
  GeoAdapter adapter;
};

/// Closed-form parameter count of Model for a configuration.
std::size_t analytic_parameter_count(const BackboneConfig& config, AdapterVariant variant);

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, ParameterList params);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  ParameterList params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

std::vector<SceneSample> make_train_scenes(const RunConfig& config);
std::vector<SceneSample> make_eval_scenes(const RunConfig& config);
/// One fixed-length sequence per eval scene, drawn with the eval seed.
std::vector<SceneSample> make_eval_sequences(const RunConfig& config, const std::vector<SceneSample>& scenes);

struct LossRecord {
  std::size_t step = 0;
  double camera = 0.0;
  double depth = 0.0;
  double pmap = 0.0;
  double total = 0.0;
};

struct AssignmentRecord {
  std::size_t step = 0;
  std::size_t scene = 0;
  ModalityAssignment assignment;
};

struct TrainLog {
  std::vector<LossRecord> losses;
  std::vector<AssignmentRecord> assignments;
};

/// Draws sequences, modality assignments and takes optimizer steps.
/// Throws TrainingError naming the step when a loss is not finite.
TrainLog train(Model& model, const RunConfig& config, const std::vector<SceneSample>& scenes,
               const std::function<void(const LossRecord&)>& on_step = {});

/// Mean total loss over `sequences`, each with the given assignment (no gradients).
double mean_total_loss(const Model& model, const std::vector<SceneSample>& sequences,
                       const std::vector<ModalityAssignment>& assignments, const LossConfig& loss);

/// Frames flagged for a setting: a camera prefix and a depth subset that is either
/// a seeded random draw or the first frames. Subsets grow monotonically with the percentage.
ModalityAssignment eval_assignment(std::size_t frames, const InjectionSetting& setting, std::uint64_t eval_seed,
                                   std::size_t sequence_index, DepthSubset subset = DepthSubset::kRandom);

/// Every metric for one sequence and one injection setting.
MetricsReport evaluate_sequence(const Model& model, const SceneSample& sequence, const ModalityAssignment& assignment);

/// Metrics averaged over the sequences.
MetricsReport evaluate_setting(const Model& model, const std::vector<SceneSample>& sequences,
                               const InjectionSetting& setting, std::uint64_t eval_seed,
                               DepthSubset subset = DepthSubset::kRandom);

struct SweepRow {
  InjectionSetting setting;
  MetricsReport report;
};

std::vector<SweepRow> evaluate_schedule(const Model& model, const RunConfig& config,
                                        const std::vector<SceneSample>& sequences);

/// Writes setting_c<cam>_d<depth>.json per row and sweep.csv.
void write_sweep(const std::filesystem::path& dir, const std::vector<SweepRow>& rows);

std::string metrics_csv_header();
std::string metrics_csv_values(const MetricsReport& report);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& losses);
void write_assignment_log(const std::filesystem::path& path, const std::vector<AssignmentRecord>& records);

struct AblationRow {
  AdapterVariant variant;
  bool full_aux = false;
  MetricsReport report;
};

/// No-aux and full-aux rows for one trained model.
std::vector<AblationRow> ablation_rows(const Model& model, AdapterVariant variant,
                                       const std::vector<SceneSample>& sequences, std::uint64_t eval_seed,
                                       DepthSubset subset = DepthSubset::kRandom);

/// Trains every variant with the same seeds and budget; evaluates with no aux and full aux.
std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const std::function<void(const std::string&)>& progress = {});
void write_ablation(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

/// Human-readable table of a checkpoint: parameters, total count, zero-init map drift.
/// With a config, also the analytic parameter count for it.
std::string inspect_checkpoint(const std::vector<CheckpointRecord>& records, const std::optional<RunConfig>& config);

/// Frobenius norm of every zero-initialized injection map, keyed by map name.
std::vector<std::pair<std::string, double>> zero_map_norms(const std::vector<CheckpointRecord>& records);

}  // namespace ovgt
