#include "dyml/study.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace dyml {

LossSpec parse_method_token(const std::string& token) {
  const std::size_t at = token.find("@s");
  if (at == std::string::npos) return LossSpec::parse(token, "multi", 0);
  const std::string kind = token.substr(0, at);
  const int scale = static_cast<int>(std::strtol(token.c_str() + at + 2, nullptr, 10));
  return LossSpec::parse(kind, "single", scale);
}

namespace {

StudyCell run_one_cell(const ExperimentConfig& cfg, const std::string& method,
                       std::uint64_t seed) {
  StudyCell cell;
  cell.method = method;
  cell.seed = seed;

  const auto [train_ds, test_ds] = cfg.load_or_generate(seed);
  TrainOptions opt = cfg.train_options(seed);
  opt.loss = parse_method_token(method);

  TrainState state = init_train_state(train_ds, opt);
  cell.diagnostics = train_continue(state, train_ds);

  const Matrix embeddings = embed_all(state.model, test_ds);
  cell.report = evaluate(embeddings, chains_of(test_ds), test_ds.taxonomy);
  cell.report.config_hash = cfg.hash();
  cell.report.seed = seed;
  for (const auto& s : cell.report.scales) cell.per_scale_r1.push_back(s.cmc1);
  cell.heldout_tiers = record_similarity_distributions(state, test_ds, 1000);
  return cell;
}

}  // namespace

std::vector<StudyCell> run_study_cells(const ExperimentConfig& cfg,
                                       const std::vector<std::string>& methods,
                                       const std::vector<std::uint64_t>& seeds, int jobs) {
  struct Job {
    std::string method;
    std::uint64_t seed;
  };
  std::vector<Job> todo;
  for (const auto& m : methods)
    for (std::uint64_t s : seeds) todo.push_back({m, s});
  std::vector<StudyCell> cells(todo.size());

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < todo.size(); ++i)
      cells[i] = run_one_cell(cfg, todo[i].method, todo[i].seed);
    return cells;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w]() {
      try {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= todo.size()) break;
          cells[i] = run_one_cell(cfg, todo[i].method, todo[i].seed);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return cells;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidSpec("median of empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::string> single_vs_multi_methods(int num_scales) {
  std::vector<std::string> methods;
  for (int s = 0; s < num_scales; ++s) methods.push_back("cosface@s" + std::to_string(s));
  methods.push_back("cosface");
  return methods;
}

std::vector<std::string> benchmark_methods() {
  return {"triplet", "npair", "multisim", "softmax", "cosface", "circle", "csl_cls"};
}

std::vector<std::string> conflict_methods() { return {"softmax", "cosface", "csl_cls"}; }

}  // namespace dyml
