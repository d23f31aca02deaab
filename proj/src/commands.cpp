#include "dyml/commands.hpp"

#include <cstdarg>
#include <cstdio>
#include <filesystem>

#include "dyml/study.hpp"

namespace dyml {

namespace {

namespace fs = std::filesystem;

std::string prepare_out(const std::string& out_dir) {
  fs::create_directories(out_dir);
  return out_dir + "/";
}

std::uint64_t effective_seed(const ExperimentConfig& cfg, const CommandOptions& opts) {
  if (opts.seed_overridden) return opts.seed;
  return cfg.seeds.empty() ? 7 : cfg.seeds[0];
}

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& cfg,
                                           const CommandOptions& opts) {
  if (opts.seed_overridden) return {opts.seed};
  return cfg.seeds;
}

struct Csv {
  std::FILE* f;
  explicit Csv(const std::string& path) : f(std::fopen(path.c_str(), "w")) {
    if (!f) throw IoError("cannot open for write: " + path);
  }
  ~Csv() {
    if (f) std::fclose(f);
  }
  void line(const char* fmt, ...) __attribute__((format(printf, 2, 3))) {
    va_list args;
    va_start(args, fmt);
    std::vfprintf(f, fmt, args);
    va_end(args);
    std::fputc('\n', f);
  }
};

void stamp(Csv& csv, const ExperimentConfig& cfg) {
  csv.line("# config_hash=%016llx", static_cast<unsigned long long>(cfg.hash()));
}

}  // namespace

int cmd_gen(const ExperimentConfig& cfg, const CommandOptions& opts) {
  const std::string out = prepare_out(opts.out_dir);
  const std::uint64_t seed = effective_seed(cfg, opts);
  const auto [train_ds, test_ds] = cfg.load_or_generate(seed);
  write_dataset(out + "train.dyml", train_ds);
  write_dataset(out + "test.dyml", test_ds);
  if (opts.csv) {
    export_csv(out + "train.csv", train_ds);
    export_csv(out + "test.csv", test_ds);
  }
  const auto& t = train_ds.taxonomy;
  std::printf("wrote %strain.dyml (%zu samples) and %stest.dyml (%zu samples)\n", out.c_str(),
              train_ds.samples.size(), out.c_str(), test_ds.samples.size());
  std::printf("scales:");
  for (int s = 0; s < t.num_scales; ++s)
    std::printf(" %zu", train_ds.class_ids_at(s).size());
  std::printf(" train classes (fine to coarse), d_in=%d\n", train_ds.d_in());
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts) {
  const std::string out = prepare_out(opts.out_dir);
  const std::uint64_t seed = effective_seed(cfg, opts);
  const auto [train_ds, test_ds] = cfg.load_or_generate(seed);

  TrainState state;
  std::vector<EpochDiagnostics> diags;
  if (!opts.resume.empty()) {
    state = read_checkpoint(opts.resume);
    state.options.epochs = cfg.epochs;  // allow extending a finished run
  } else {
    state = init_train_state(train_ds, cfg.train_options(seed));
  }
  try {
    diags = train_continue(state, train_ds);
  } catch (const NonFiniteLoss&) {
    write_checkpoint(out + "abort.dymc", state, cfg.hash());
    std::fprintf(stderr, "state snapshot written to %sabort.dymc\n", out.c_str());
    throw;
  }
  write_checkpoint(out + "checkpoint.dymc", state, cfg.hash());
  write_diagnostics_csv(out + "diagnostics.csv", diags, cfg.hash(), seed);
  std::printf("trained %s for %d epochs (seed %llu)", state.options.loss.name().c_str(),
              state.epoch, static_cast<unsigned long long>(seed));
  if (!diags.empty()) std::printf(", final loss %.6f", diags.back().loss);
  std::printf("\n");
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opts) {
  const std::string out = prepare_out(opts.out_dir);
  const std::uint64_t seed = effective_seed(cfg, opts);

  Dataset test_ds = opts.dataset_file.empty()
                        ? cfg.load_or_generate(seed).second
                        : read_dataset(opts.dataset_file, Split::test);

  Matrix embeddings;
  if (!opts.embeddings.empty()) {
    embeddings = read_embeddings(opts.embeddings);
    if (embeddings.rows() != test_ds.samples.size())
      throw DimensionMismatch("embedding count vs dataset size");
  } else {
    const std::string ckpt = opts.checkpoint.empty() ? out + "checkpoint.dymc" : opts.checkpoint;
    const TrainState state = read_checkpoint(ckpt);
    embeddings = embed_all(state.model, test_ds);
  }
  OverallReport report = evaluate(embeddings, chains_of(test_ds), test_ds.taxonomy);
  report.config_hash = cfg.hash();
  report.seed = seed;
  report.config_echo = "loss=" + cfg.loss_kind + " mode=" + cfg.loss_mode;
  write_report_json(out + "report.json", report);
  write_report_csv(out + "report.csv", report);
  write_embeddings(out + "embeddings.dyme", embeddings);
  std::printf("overall: R@1 %.4f  R@10 %.4f  R@20 %.4f  mAP %.4f  ASI %.4f\n",
              report.overall_cmc1, report.overall_cmc10, report.overall_cmc20,
              report.overall_map, report.asi);
  return 0;
}

int cmd_study(const ExperimentConfig& cfg, const std::string& study_name,
              const CommandOptions& opts) {
  const std::string out = prepare_out(opts.out_dir);
  const std::vector<std::uint64_t> seeds = effective_seeds(cfg, opts);

  if (study_name == "single_vs_multi") {
    // per-scale retrieval for single-scale supervision at each level vs the
    // summed multi-scale supervision, same loss everywhere
    const int m = static_cast<int>(cfg.dataset.branching.size());
    const auto methods = single_vs_multi_methods(m);
    const auto cells = run_study_cells(cfg, methods, seeds, opts.jobs);
    Csv csv(out + "study_single_vs_multi.csv");
    stamp(csv, cfg);
    std::string header = "method,seed";
    for (int s = 0; s < m; ++s) header += ",r1_scale" + std::to_string(s);
    header += ",overall_r1";
    csv.line("%s", header.c_str());
    std::size_t i = 0;
    for (const auto& method : methods) {
      std::vector<std::vector<double>> per_scale(m);
      std::vector<double> overall;
      for (std::size_t k = 0; k < seeds.size(); ++k, ++i) {
        const auto& cell = cells[i];
        std::string row = method + "," + std::to_string(cell.seed);
        for (int s = 0; s < m; ++s) {
          per_scale[s].push_back(cell.per_scale_r1[s]);
          row += "," + std::to_string(cell.per_scale_r1[s]);
        }
        overall.push_back(cell.report.overall_cmc1);
        row += "," + std::to_string(cell.report.overall_cmc1);
        csv.line("%s", row.c_str());
      }
      std::string row = method + ",median";
      for (int s = 0; s < m; ++s) row += "," + std::to_string(median(per_scale[s]));
      row += "," + std::to_string(median(overall));
      csv.line("%s", row.c_str());
    }
    std::printf("wrote %sstudy_single_vs_multi.csv (%zu cells)\n", out.c_str(), cells.size());
    return 0;
  }

  if (study_name == "benchmark") {
    const auto methods = benchmark_methods();
    const auto cells = run_study_cells(cfg, methods, seeds, opts.jobs);
    Csv csv(out + "study_benchmark.csv");
    stamp(csv, cfg);
    csv.line("method,seed,asi,map,r1,r10,r20");
    std::size_t i = 0;
    for (const auto& method : methods) {
      std::vector<double> asi, map, r1, r10, r20;
      for (std::size_t k = 0; k < seeds.size(); ++k, ++i) {
        const auto& c = cells[i].report;
        asi.push_back(c.asi);
        map.push_back(c.overall_map);
        r1.push_back(c.overall_cmc1);
        r10.push_back(c.overall_cmc10);
        r20.push_back(c.overall_cmc20);
        csv.line("%s,%llu,%.6f,%.6f,%.6f,%.6f,%.6f", method.c_str(),
                 static_cast<unsigned long long>(cells[i].seed), c.asi, c.overall_map,
                 c.overall_cmc1, c.overall_cmc10, c.overall_cmc20);
      }
      csv.line("%s,median,%.6f,%.6f,%.6f,%.6f,%.6f", method.c_str(), median(asi), median(map),
               median(r1), median(r10), median(r20));
    }
    std::printf("wrote %sstudy_benchmark.csv (%zu cells)\n", out.c_str(), cells.size());
    return 0;
  }

  if (study_name == "conflict") {
    const auto methods = conflict_methods();
    const auto cells = run_study_cells(cfg, methods, seeds, opts.jobs);
    const int m = static_cast<int>(cfg.dataset.branching.size());
    {
      Csv csv(out + "study_conflict_similarity.csv");
      stamp(csv, cfg);
      std::string header = "method,seed,epoch";
      for (int s = 0; s < m; ++s) header += ",within_scale" + std::to_string(s);
      header += ",between";
      csv.line("%s", header.c_str());
      for (const auto& cell : cells)
        for (const auto& d : cell.diagnostics) {
          std::string row = cell.method + "," + std::to_string(cell.seed) + "," +
                            std::to_string(d.epoch);
          for (int s = 0; s < m; ++s) row += "," + std::to_string(d.within_sim[s]);
          row += "," + std::to_string(d.between_sim);
          csv.line("%s", row.c_str());
        }
    }
    {
      Csv csv(out + "study_conflict_accuracy.csv");
      stamp(csv, cfg);
      std::string header = "method,seed,epoch,loss";
      for (int s = 0; s < m; ++s) header += ",acc_scale" + std::to_string(s);
      csv.line("%s", header.c_str());
      for (const auto& cell : cells)
        for (const auto& d : cell.diagnostics) {
          std::string row = cell.method + "," + std::to_string(cell.seed) + "," +
                            std::to_string(d.epoch) + "," + std::to_string(d.loss);
          for (int s = 0; s < m; ++s) row += "," + std::to_string(d.accuracy[s]);
          csv.line("%s", row.c_str());
        }
    }
    std::printf("wrote %sstudy_conflict_{similarity,accuracy}.csv (%zu cells)\n", out.c_str(),
                cells.size());
    return 0;
  }

  throw ConfigParseError("unknown study: " + study_name +
                         " (expected single_vs_multi, benchmark or conflict)");
}

}  // namespace dyml
