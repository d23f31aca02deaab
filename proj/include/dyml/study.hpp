#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyml/config.hpp"
#include "dyml/evaluator.hpp"
#include "dyml/trainer.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Study runner: trains one model per (method, seed) cell on the configured
// benchmark and evaluates it on the held-out split. Cells are independent
// and internally deterministic; they may run on worker threads, results are
// aggregated in (method, seed) order regardless of completion order.
//
// Method tokens: "csl_cls", "csl_pair", "csl_joint", a baseline name
// ("cosface", ...) for multi-scale supervision, or "cosface@s0" for
// single-scale supervision at scale 0.
// ---------------------------------------------------------------------------

struct StudyCell {
  std::string method;
  std::uint64_t seed = 0;
  OverallReport report;                      // held-out retrieval metrics
  std::vector<double> per_scale_r1;          // CMC@1 per scale
  std::vector<EpochDiagnostics> diagnostics; // training curves
  EpochDiagnostics heldout_tiers;            // tier means on the test split
};

LossSpec parse_method_token(const std::string& token);

std::vector<StudyCell> run_study_cells(const ExperimentConfig& cfg,
                                       const std::vector<std::string>& methods,
                                       const std::vector<std::uint64_t>& seeds, int jobs);

double median(std::vector<double> values);

// Canonical method lists for the named studies.
std::vector<std::string> single_vs_multi_methods(int num_scales);  // singles + multi, cosface
std::vector<std::string> benchmark_methods();                      // six baselines + csl_cls
std::vector<std::string> conflict_methods();                       // softmax, cosface, csl_cls

}  // namespace dyml
