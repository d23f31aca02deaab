// dyml: synthetic benchmark generation, training, retrieval evaluation and
// the three bundled studies. Exit codes: 0 success, 2 configuration error,
// 3 runtime error.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "dyml/commands.hpp"

namespace {

dyml::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return dyml::ExperimentConfig{};
  return dyml::ExperimentConfig::parse_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic metric learning workbench"};
  app.require_subcommand(1);

  std::string config_path;
  dyml::CommandOptions opts;
  bool out_set = false;
  std::string study_name;

  app.add_option("--config", config_path, "experiment config file")->capture_default_str();

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& v) { opts.out_dir = v; out_set = true; },
        "output directory");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { opts.seed = v; opts.seed_overridden = true; },
        "override the config seed list with one seed");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic benchmark files");
  add_common(gen);
  gen->add_flag("--csv", opts.csv, "also export CSV alongside the binary containers");

  CLI::App* train = app.add_subcommand("train", "train a model per the config");
  add_common(train);
  train->add_option("--resume", opts.resume, "checkpoint to continue from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval);
  eval->add_option("--checkpoint", opts.checkpoint, "checkpoint file (default <out>/checkpoint.dymc)");
  eval->add_option("--dataset", opts.dataset_file, "explicit test dataset file");
  eval->add_option("--embeddings", opts.embeddings, "precomputed DYME1 embeddings instead of a model");

  CLI::App* study = app.add_subcommand("study", "run a named study");
  add_common(study);
  study->add_option("name", study_name, "single_vs_multi | benchmark | conflict")->required();
  study->add_option("--jobs", opts.jobs, "worker threads for study cells")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const dyml::ExperimentConfig cfg = load_config(config_path);
    if (!out_set) {
      const char* env_out = std::getenv("DYML_OUT");
      opts.out_dir = env_out != nullptr ? env_out : cfg.out;
    }
    if (gen->parsed()) return dyml::cmd_gen(cfg, opts);
    if (train->parsed()) return dyml::cmd_train(cfg, opts);
    if (eval->parsed()) return dyml::cmd_eval(cfg, opts);
    if (study->parsed()) return dyml::cmd_study(cfg, study_name, opts);
  } catch (const dyml::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.category() == dyml::ErrorCategory::config ? 2 : 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
