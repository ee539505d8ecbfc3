#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ovgt/checkpoint.hpp"
#include "ovgt/config.hpp"
#include "ovgt/harness.hpp"

namespace fs = std::filesystem;
using namespace ovgt;

namespace {

int cmd_train(const std::string& config_path, const std::string& out) {
  const RunConfig config = load_config(config_path);
  const auto scenes = make_train_scenes(config);
  Model model(config.backbone, config.variant, config.init_seed);
  const std::size_t every = std::max<std::size_t>(1, config.optimizer.steps / 20);
  const TrainLog log = train(model, config, scenes, [&](const LossRecord& r) {
    if (r.step == 1 || r.step % every == 0 || r.step == config.optimizer.steps) {
      std::fprintf(stderr, "step %zu  total %.4f  camera %.4f  depth %.4f  pmap %.4f\n", r.step, r.total, r.camera,
                   r.depth, r.pmap);
    }
  });
  save_checkpoint(out, model.parameters());
  write_loss_log(out + ".loss.csv", log.losses);
  write_assignment_log(out + ".assign.csv", log.assignments);
  std::cout << "wrote " << out << ", " << out << ".loss.csv and " << out << ".assign.csv\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& config_path, const std::string& out_dir) {
  const RunConfig config = load_config(config_path);
  Model model(config.backbone, config.variant, config.init_seed);
  restore_parameters(model.parameters(), load_checkpoint(ckpt));
  const auto sequences = make_eval_sequences(config, make_eval_scenes(config));
  std::fprintf(stderr, "depth subset: %s\n", to_string(config.eval_depth_subset).c_str());
  const auto rows = evaluate_schedule(model, config, sequences);
  write_sweep(out_dir, rows);
  std::cout << "camera_pct,depth_pct," << metrics_csv_header() << '\n';
  for (const auto& r : rows) {
    std::cout << r.setting.camera_pct << ',' << r.setting.depth_pct << ',' << metrics_csv_values(r.report) << '\n';
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out) {
  const RunConfig config = load_config(config_path);
  std::fprintf(stderr, "depth subset: %s\n", to_string(config.eval_depth_subset).c_str());
  const auto rows = run_ablation(config, [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
  write_ablation(out, rows);
  std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& config_path) {
  std::optional<RunConfig> config;
  if (!config_path.empty()) config = load_config(config_path);
  std::cout << inspect_checkpoint(load_checkpoint(ckpt), config);
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir, bool eval_split) {
  const RunConfig config = load_config(config_path);
  const auto scenes = eval_split ? make_eval_scenes(config) : make_train_scenes(config);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    write_scene(fs::path(out_dir) / name, scenes[i]);
  }
  std::cout << "wrote " << scenes.size() << " scenes to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale multi-view geometry model with auxiliary camera and depth injection"};
  app.require_subcommand(1);

  std::string config, out, ckpt, out_dir;
  bool eval_split = false;

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint plus loss log");
  train_cmd->add_option("--config", config, "run configuration")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "checkpoint path")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over the injection schedule");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", config, "run configuration")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out-dir", out_dir, "report directory")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the four adapter variants");
  ablate_cmd->add_option("--config", config, "run configuration")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", out, "CSV path")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--config", config, "optional configuration for the analytic count")
      ->check(CLI::ExistingFile);

  auto* synth_cmd = app.add_subcommand("synth", "write the configured synthetic scenes to disk");
  synth_cmd->add_option("--config", config, "run configuration")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  synth_cmd->add_flag("--eval", eval_split, "write the evaluation scenes instead of the training scenes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config, out);
    if (*eval_cmd) return cmd_eval(ckpt, config, out_dir);
    if (*ablate_cmd) return cmd_ablate(config, out);
    if (*inspect_cmd) return cmd_inspect(ckpt, config);
    if (*synth_cmd) return cmd_synth(config, out_dir, eval_split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
