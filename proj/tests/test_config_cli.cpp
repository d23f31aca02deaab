#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dyml/commands.hpp"
#include "dyml/study.hpp"

using namespace dyml;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.dataset.branching = {2, 2, 2};
  cfg.dataset.samples_per_fine_class = 6;
  cfg.dataset.d_in = 12;
  cfg.epochs = 3;
  cfg.embed_dim = 16;
  cfg.sampler = {2, 2, 2, 2};
  cfg.seeds = {5};
  return cfg;
}

}  // namespace

TEST_CASE("config round-trips losslessly through its text form") {
  ExperimentConfig cfg = tiny_config();
  cfg.loss_kind = "cosface";
  cfg.loss_mode = "single";
  cfg.loss_scale = 2;
  cfg.lr_model = 0.012345678901234567;
  cfg.seeds = {1, 2, 3};
  const std::string text = cfg.serialize();
  const ExperimentConfig back = ExperimentConfig::parse_text(text);
  CHECK(back.serialize() == text);
  CHECK(back.hash() == cfg.hash());
  CHECK(back.lr_model == cfg.lr_model);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.dataset.branching == cfg.dataset.branching);
}

TEST_CASE("config parse errors") {
  CHECK_THROWS_AS(ExperimentConfig::parse_text("[loss]\nbogus_key = 1\n"), ConfigParseError);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("[trainer]\nepochs = soon\n"), ConfigParseError);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("no equals sign"), ConfigParseError);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("[loss\nkind = csl_cls\n"), ConfigParseError);
  // defaults survive an empty config
  const ExperimentConfig cfg = ExperimentConfig::parse_text("");
  CHECK(cfg.loss_kind == "csl_cls");
  CHECK(cfg.loss_config.alpha == 32.0);
  CHECK(cfg.loss_config.margins.values == std::vector<double>{0.1, 0.2, 0.3});
}

TEST_CASE("method tokens") {
  CHECK(parse_method_token("csl_joint").family == LossFamily::csl_joint);
  CHECK(parse_method_token("cosface").family == LossFamily::baseline_multi);
  const LossSpec single = parse_method_token("cosface@s2");
  CHECK(single.family == LossFamily::baseline_single);
  CHECK(single.single_scale == 2);
  CHECK_THROWS_AS(parse_method_token("mystery"), ConfigParseError);
}

TEST_CASE("gen writes deterministic containers and honors the header") {
  const ExperimentConfig cfg = tiny_config();
  CommandOptions opts;
  opts.out_dir = "cli_gen_a";
  opts.csv = true;
  CHECK(cmd_gen(cfg, opts) == 0);
  opts.out_dir = "cli_gen_b";
  CHECK(cmd_gen(cfg, opts) == 0);
  CHECK(slurp("cli_gen_a/train.dyml") == slurp("cli_gen_b/train.dyml"));
  CHECK(slurp("cli_gen_a/test.dyml") == slurp("cli_gen_b/test.dyml"));
  CHECK(slurp("cli_gen_a/train.csv") == slurp("cli_gen_b/train.csv"));

  const Dataset train = read_dataset("cli_gen_a/train.dyml", Split::train);
  CHECK(train.samples.size() == 8 * 6);
  CHECK(train.d_in() == 12);

  ExperimentConfig bad = cfg;
  bad.dataset.sigma = {0.1, 0.5};
  CHECK_THROWS_AS(cmd_gen(bad, opts), InvalidSpec);
}

TEST_CASE("train/eval pipeline: determinism, resume, report consistency") {
  const ExperimentConfig cfg = tiny_config();
  CommandOptions opts;
  opts.out_dir = "cli_run_a";
  CHECK(cmd_train(cfg, opts) == 0);
  CHECK(cmd_eval(cfg, opts) == 0);

  opts.out_dir = "cli_run_b";
  CHECK(cmd_train(cfg, opts) == 0);
  CHECK(cmd_eval(cfg, opts) == 0);

  CHECK(slurp("cli_run_a/checkpoint.dymc") == slurp("cli_run_b/checkpoint.dymc"));
  CHECK(slurp("cli_run_a/diagnostics.csv") == slurp("cli_run_b/diagnostics.csv"));
  CHECK(slurp("cli_run_a/report.json") == slurp("cli_run_b/report.json"));
  CHECK(slurp("cli_run_a/report.csv") == slurp("cli_run_b/report.csv"));
  CHECK(slurp("cli_run_a/embeddings.dyme") == slurp("cli_run_b/embeddings.dyme"));

  // rerunning eval on the same checkpoint reproduces the same report
  opts.out_dir = "cli_run_a";
  CHECK(cmd_eval(cfg, opts) == 0);
  CHECK(slurp("cli_run_a/report.json") == slurp("cli_run_b/report.json"));

  // a run paused mid-way and resumed through the CLI lands on the
  // identical checkpoint bytes
  const auto [train_half, test_half] = cfg.load_or_generate(5);
  TrainState paused = init_train_state(train_half, cfg.train_options(5));
  train_continue(paused, train_half, 1);
  fs::create_directories("cli_resume");
  write_checkpoint("cli_resume/half.dymc", paused, cfg.hash());
  CommandOptions ropts;
  ropts.out_dir = "cli_resume";
  ropts.resume = "cli_resume/half.dymc";
  CHECK(cmd_train(cfg, ropts) == 0);
  CHECK(slurp("cli_resume/checkpoint.dymc") == slurp("cli_run_a/checkpoint.dymc"));

  // library-level evaluation agrees with the emitted report
  const auto [train_ds, test_ds] = cfg.load_or_generate(5);
  const TrainState state = read_checkpoint("cli_run_a/checkpoint.dymc");
  const OverallReport direct = evaluate(embed_all(state.model, test_ds), chains_of(test_ds),
                                        test_ds.taxonomy);
  const std::string json = slurp("cli_run_a/report.json");
  CHECK(json.find("\"map\"") != std::string::npos);
  CHECK(direct.overall_cmc1 ==
        doctest::Approx((direct.scales[0].cmc1 + direct.scales[1].cmc1 + direct.scales[2].cmc1) /
                        3.0)
            .epsilon(1e-12));
}

TEST_CASE("zero-epoch training emits the initialization checkpoint") {
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 0;
  CommandOptions opts;
  opts.out_dir = "cli_zero";
  CHECK(cmd_train(cfg, opts) == 0);
  const auto [train_ds, test_ds] = cfg.load_or_generate(5);
  const TrainState loaded = read_checkpoint("cli_zero/checkpoint.dymc");
  const TrainState fresh = init_train_state(train_ds, cfg.train_options(5));
  CHECK(loaded.model.w1 == fresh.model.w1);
  CHECK(loaded.epoch == 0);
  CHECK(loaded.step == 0);
}

TEST_CASE("a single study cell reduces to train + eval") {
  ExperimentConfig cfg = tiny_config();
  cfg.loss_kind = "csl_cls";
  const auto cells = run_study_cells(cfg, {"csl_cls"}, {5}, 1);
  REQUIRE(cells.size() == 1);

  CommandOptions opts;
  opts.out_dir = "cli_cellred";
  CHECK(cmd_train(cfg, opts) == 0);
  CHECK(cmd_eval(cfg, opts) == 0);
  const auto [train_ds, test_ds] = cfg.load_or_generate(5);
  const TrainState state = read_checkpoint("cli_cellred/checkpoint.dymc");
  const OverallReport direct =
      evaluate(embed_all(state.model, test_ds), chains_of(test_ds), test_ds.taxonomy);
  CHECK(cells[0].report.overall_cmc1 == direct.overall_cmc1);
  CHECK(cells[0].report.overall_map == direct.overall_map);
  CHECK(cells[0].report.asi == direct.asi);
}

TEST_CASE("eval against a standalone dataset file") {
  // the file-loaded taxonomy only knows the test split's classes; the
  // checkpoint must still reconstruct its train-side proxy bank
  const ExperimentConfig cfg = tiny_config();
  CommandOptions opts;
  opts.out_dir = "cli_filedat";
  opts.csv = false;
  CHECK(cmd_gen(cfg, opts) == 0);
  CHECK(cmd_train(cfg, opts) == 0);
  CHECK(cmd_eval(cfg, opts) == 0);
  const std::string direct = slurp("cli_filedat/report.json");

  CommandOptions file_opts = opts;
  file_opts.out_dir = "cli_filedat2";
  file_opts.checkpoint = "cli_filedat/checkpoint.dymc";
  file_opts.dataset_file = "cli_filedat/test.dyml";
  CHECK(cmd_eval(cfg, file_opts) == 0);
  CHECK(slurp("cli_filedat2/report.json") == direct);
}

TEST_CASE("eval from a precomputed embedding dump matches the model path") {
  const ExperimentConfig cfg = tiny_config();
  CommandOptions opts;
  opts.out_dir = "cli_embdump";
  CHECK(cmd_train(cfg, opts) == 0);
  CHECK(cmd_eval(cfg, opts) == 0);
  const std::string via_model = slurp("cli_embdump/report.json");

  CommandOptions from_dump;
  from_dump.out_dir = "cli_embdump2";
  from_dump.embeddings = "cli_embdump/embeddings.dyme";
  CHECK(cmd_eval(cfg, from_dump) == 0);
  CHECK(slurp("cli_embdump2/report.json") == via_model);
}

TEST_CASE("cli binary: exit codes and DYML_OUT") {
  const std::string cli = DYML_CLI_PATH;

  {
    std::ofstream bad("cli_bad.cfg");
    bad << "[dataset]\nsigma = 0.1 0.5\n";
  }
  int rc = std::system((cli + " gen --config cli_bad.cfg --out cli_bin_out 2> cli_bin_err.txt")
                           .c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  CHECK(slurp("cli_bin_err.txt").find("InvalidSpec") != std::string::npos);

  {
    std::ofstream good("cli_good.cfg");
    good << "[dataset]\nbranching = 2 2 2\nsamples_per_fine_class = 4\nd_in = 8\n";
  }
  setenv("DYML_OUT", "cli_env_out", 1);
  rc = std::system((cli + " gen --config cli_good.cfg > /dev/null").c_str());
  unsetenv("DYML_OUT");
  CHECK(WEXITSTATUS(rc) == 0);
  CHECK(fs::exists("cli_env_out/train.dyml"));

  rc = std::system((cli + " study mystery --config cli_good.cfg 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  rc = std::system((cli + " eval --config cli_good.cfg --checkpoint does_not_exist.dymc "
                          "--out cli_bin_out 2> /dev/null")
                       .c_str());
  CHECK(WEXITSTATUS(rc) == 3);
}

TEST_CASE("study csvs are written with medians") {
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.seeds = {3, 4};
  CommandOptions opts;
  opts.out_dir = "cli_study";
  opts.jobs = 2;
  CHECK(cmd_study(cfg, "single_vs_multi", opts) == 0);
  const std::string csv = slurp("cli_study/study_single_vs_multi.csv");
  CHECK(csv.find("cosface@s0,median") != std::string::npos);
  CHECK(csv.find("cosface,median") != std::string::npos);
  CHECK(csv.find("r1_scale2") != std::string::npos);

  CHECK(cmd_study(cfg, "conflict", opts) == 0);
  CHECK(slurp("cli_study/study_conflict_similarity.csv").find("within_scale1") !=
        std::string::npos);
  CHECK(slurp("cli_study/study_conflict_accuracy.csv").find("acc_scale2") != std::string::npos);

  CHECK_THROWS_AS(cmd_study(cfg, "mystery", opts), ConfigParseError);

  // identical study rerun is byte-identical
  opts.out_dir = "cli_study2";
  CHECK(cmd_study(cfg, "single_vs_multi", opts) == 0);
  CHECK(slurp("cli_study/study_single_vs_multi.csv") ==
        slurp("cli_study2/study_single_vs_multi.csv"));
}
