#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dyml/losses.hpp"
#include "dyml/taxonomy.hpp"
#include "dyml/trainer.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Experiment configuration. Flat key-value text with [sections]; parsing is
// strict (unknown keys are errors) and serialize() emits a canonical form
// that reparses to an identical config. The config hash is FNV-1a 64 over
// that canonical form and is embedded in every emitted artifact.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // [dataset] - either a synthetic spec or explicit container files
  SynthSpec dataset{{4, 3, 3}, 20, 32, {0.5, 0.1}, 0.12, 7};
  std::string train_file;
  std::string test_file;

  // [loss]
  std::string loss_kind = "csl_cls";
  std::string loss_mode = "multi";  // multi | single (baselines only)
  int loss_scale = 0;               // trained scale when mode = single
  LossConfig loss_config;

  // [sampler]
  SamplerSpec sampler;

  // [trainer]
  int epochs = 30;
  double lr_model = 0.01;
  double lr_proxies = 0.05;
  double momentum = 0.9;
  bool cosine_decay = true;
  int embed_dim = 128;
  bool two_layer = false;
  int hidden_dim = 64;
  bool use_bias = false;

  // [run]
  std::vector<std::uint64_t> seeds = {7};
  std::string out = "out";

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_text(const std::string& text);
  std::string serialize() const;
  std::uint64_t hash() const;

  TrainOptions train_options(std::uint64_t run_seed) const;

  // Each run seed pairs with its own dataset seed so seed medians cover
  // generation randomness as well as training randomness.
  SynthSpec dataset_spec(std::uint64_t run_seed) const;
  std::pair<Dataset, Dataset> load_or_generate(std::uint64_t run_seed) const;
};

}  // namespace dyml
