#pragma once

#include <cstdint>
#include <string>

#include "dyml/config.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Command implementations behind the CLI. Each writes its artifacts under
// `out_dir` with fixed names and embeds the config hash and seed, so a rerun
// with identical inputs reproduces identical bytes.
//
//   gen    -> train.dyml test.dyml (+ train.csv test.csv when csv is set)
//   train  -> checkpoint.dymc diagnostics.csv
//   eval   -> report.json report.csv embeddings.dyme
//   study  -> study_<name>*.csv
// ---------------------------------------------------------------------------

struct CommandOptions {
  std::string out_dir = "out";
  std::uint64_t seed = 0;     // 0 = use the config's first seed
  bool seed_overridden = false;
  int jobs = 1;
  bool csv = false;           // gen: also export CSV
  std::string resume;         // train: checkpoint to continue from
  std::string checkpoint;     // eval: model source
  std::string dataset_file;   // eval: explicit dataset (defaults to config)
  std::string embeddings;     // eval: precomputed DYME1 instead of a model
};

int cmd_gen(const ExperimentConfig& cfg, const CommandOptions& opts);
int cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts);
int cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opts);
int cmd_study(const ExperimentConfig& cfg, const std::string& study_name,
              const CommandOptions& opts);

}  // namespace dyml
