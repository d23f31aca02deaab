#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dyml/common.hpp"
#include "dyml/geometry.hpp"
#include "dyml/losses.hpp"
#include "dyml/proxies.hpp"
#include "dyml/taxonomy.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Hierarchical batch sampling. A batch nests class draws without replacement
// from coarse to fine, then draws instances per fine class: batch size =
// coarse_per_batch * middle_per_coarse * fine_per_middle * instances_per_fine
// for three scales. With M != 3 scales the middle count is repeated (M > 3)
// or dropped (M < 3); a single-scale taxonomy draws fine_per_middle classes.
// ---------------------------------------------------------------------------

struct SamplerSpec {
  int coarse_per_batch = 2;
  int middle_per_coarse = 2;
  int fine_per_middle = 2;
  int instances_per_fine = 3;

  int batch_size(int num_scales) const;
};

// Sample indices into dataset.samples. Throws InsufficientClasses when any
// level cannot supply the requested count.
std::vector<int> sample_batch(const Dataset& dataset, const SamplerSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Training configuration and state
// ---------------------------------------------------------------------------

enum class LossFamily { csl_cls, csl_pair, csl_joint, baseline_multi, baseline_single };

struct LossSpec {
  LossFamily family = LossFamily::csl_cls;
  BaselineKind baseline = BaselineKind::cosface;  // baseline_* families only
  int single_scale = 0;                           // baseline_single only

  std::string name() const;
  static LossSpec parse(const std::string& kind, const std::string& mode, int scale);
};

struct TrainOptions {
  LossSpec loss;
  LossConfig loss_config;
  SamplerSpec sampler;
  int epochs = 30;
  double lr_model = 0.01;
  double lr_proxies = 0.05;
  double momentum = 0.9;
  bool cosine_decay = true;
  int embed_dim = 128;
  bool two_layer = false;
  int hidden_dim = 64;
  bool use_bias = false;
  std::uint64_t seed = 7;
};

struct TrainState {
  TrainOptions options;
  EmbeddingModel model;
  ModelGrads model_velocity;
  std::optional<ProxyBank> bank;      // csl_cls / csl_joint
  Matrix bank_velocity;
  std::vector<ProxySet> scale_sets;   // classification baselines
  std::vector<Matrix> set_velocity;
  int epoch = 0;       // completed epochs
  long long step = 0;  // completed optimizer steps
};

struct EpochDiagnostics {
  int epoch = 0;
  double loss = 0.0;
  std::vector<double> accuracy;    // per scale, percent
  std::vector<double> within_sim;  // per scale, exclusive tiers (positive at
                                   // scale s but not at any finer scale)
  double between_sim = 0.0;        // pairs negative at every scale
};

// ---------------------------------------------------------------------------
// Training. SGD with momentum; proxies are renormalized to the unit sphere
// after every step. The batch schedule is re-derived from the seed at the
// start of each epoch, so every epoch visits the same batch sequence and the
// whole run is a pure function of (dataset, options).
// ---------------------------------------------------------------------------

TrainState init_train_state(const Dataset& dataset, const TrainOptions& options);

struct BatchEval {
  std::vector<int> indices;
  std::vector<Vec> inputs;  // widened features
  Matrix embeddings;
  std::vector<ForwardCache> caches;
  LossOutput loss;
};

BatchEval evaluate_batch(const TrainState& state, const Dataset& dataset,
                         const std::vector<int>& batch);

int steps_per_epoch(const Dataset& dataset, const TrainOptions& options);
double lr_decay(const TrainState& state, const Dataset& dataset);

// One SGD+momentum step from a prepared batch evaluation.
void optimizer_step(TrainState& state, const Dataset& dataset, const BatchEval& eval);

std::pair<TrainState, std::vector<EpochDiagnostics>> train(const Dataset& dataset,
                                                           const TrainOptions& options);
// Continues from state.epoch to state.options.epochs; stop_after_epoch < 0
// runs to the end, otherwise the run pauses there (the decay schedule keeps
// its full horizon, so pausing and resuming reproduces an unbroken run).
std::vector<EpochDiagnostics> train_continue(TrainState& state, const Dataset& dataset,
                                             int stop_after_epoch = -1);

Matrix embed_all(const EmbeddingModel& model, const Dataset& dataset);
std::vector<std::vector<std::int32_t>> chains_of(const Dataset& dataset);

// Tier means over `sample_count` random pairs per tier (with replacement
// from the exhaustive tier populations). Deterministic under `seed`.
// Throws InsufficientPairs when a tier is empty.
EpochDiagnostics record_similarity_distributions(const TrainState& state, const Dataset& dataset,
                                                 int sample_count, std::uint64_t seed = 12345);

// Checkpoint container, magic "DYMC1": options, model, proxies (with their
// label chains, so the bank's taxonomy view rebuilds without the dataset),
// momentum buffers and step counters.
void write_checkpoint(const std::string& path, const TrainState& state,
                      std::uint64_t config_hash);
TrainState read_checkpoint(const std::string& path, std::uint64_t* config_hash = nullptr);

void write_diagnostics_csv(const std::string& path, const std::vector<EpochDiagnostics>& diags,
                           std::uint64_t config_hash, std::uint64_t seed);

}  // namespace dyml
