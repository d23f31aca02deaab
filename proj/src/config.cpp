#include "dyml/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dyml {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigParseError("bad number for " + key + ": '" + v + "'");
  }
}

long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigParseError("bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigParseError("bad boolean for " + key + ": '" + v + "'");
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
  ExperimentConfig cfg;
  cfg.dataset.sigma.clear();  // lists are replaced, not appended
  bool sigma_set = false, margins_set = false, seeds_set = false;

  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigParseError("bad section header at line " +
                                                  std::to_string(line_no));
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigParseError("expected key = value at line " + std::to_string(line_no));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "dataset.branching") {
      cfg.dataset.branching.clear();
      for (const auto& tok : split_ws(value))
        cfg.dataset.branching.push_back(static_cast<int>(parse_int(tok, qual)));
    } else if (qual == "dataset.samples_per_fine_class") {
      cfg.dataset.samples_per_fine_class = static_cast<int>(parse_int(value, qual));
    } else if (qual == "dataset.d_in") {
      cfg.dataset.d_in = static_cast<int>(parse_int(value, qual));
    } else if (qual == "dataset.sigma") {
      cfg.dataset.sigma.clear();
      for (const auto& tok : split_ws(value)) cfg.dataset.sigma.push_back(parse_double(tok, qual));
      sigma_set = true;
    } else if (qual == "dataset.sigma_sample") {
      cfg.dataset.sigma_sample = parse_double(value, qual);
    } else if (qual == "dataset.seed") {
      cfg.dataset.seed = static_cast<std::uint64_t>(parse_int(value, qual));
    } else if (qual == "dataset.train_file") {
      cfg.train_file = value;
    } else if (qual == "dataset.test_file") {
      cfg.test_file = value;
    } else if (qual == "loss.kind") {
      cfg.loss_kind = value;
    } else if (qual == "loss.mode") {
      cfg.loss_mode = value;
    } else if (qual == "loss.scale") {
      cfg.loss_scale = static_cast<int>(parse_int(value, qual));
    } else if (qual == "loss.alpha") {
      cfg.loss_config.alpha = parse_double(value, qual);
    } else if (qual == "loss.margins") {
      cfg.loss_config.margins.values.clear();
      for (const auto& tok : split_ws(value))
        cfg.loss_config.margins.values.push_back(parse_double(tok, qual));
      margins_set = true;
    } else if (qual == "loss.weight_pair") {
      cfg.loss_config.weight_pair = parse_double(value, qual);
    } else if (qual == "loss.softmax_scale") {
      cfg.loss_config.softmax_scale = parse_double(value, qual);
    } else if (qual == "loss.cosface_scale") {
      cfg.loss_config.cosface_scale = parse_double(value, qual);
    } else if (qual == "loss.cosface_margin") {
      cfg.loss_config.cosface_margin = parse_double(value, qual);
    } else if (qual == "loss.circle_gamma") {
      cfg.loss_config.circle_gamma = parse_double(value, qual);
    } else if (qual == "loss.circle_margin") {
      cfg.loss_config.circle_margin = parse_double(value, qual);
    } else if (qual == "loss.triplet_margin") {
      cfg.loss_config.triplet_margin = parse_double(value, qual);
    } else if (qual == "loss.ms_alpha") {
      cfg.loss_config.ms_alpha = parse_double(value, qual);
    } else if (qual == "loss.ms_beta") {
      cfg.loss_config.ms_beta = parse_double(value, qual);
    } else if (qual == "loss.ms_lambda") {
      cfg.loss_config.ms_lambda = parse_double(value, qual);
    } else if (qual == "loss.ms_epsilon") {
      cfg.loss_config.ms_epsilon = parse_double(value, qual);
    } else if (qual == "loss.npair_reg") {
      cfg.loss_config.npair_reg = parse_double(value, qual);
    } else if (qual == "sampler.coarse_per_batch") {
      cfg.sampler.coarse_per_batch = static_cast<int>(parse_int(value, qual));
    } else if (qual == "sampler.middle_per_coarse") {
      cfg.sampler.middle_per_coarse = static_cast<int>(parse_int(value, qual));
    } else if (qual == "sampler.fine_per_middle") {
      cfg.sampler.fine_per_middle = static_cast<int>(parse_int(value, qual));
    } else if (qual == "sampler.instances_per_fine") {
      cfg.sampler.instances_per_fine = static_cast<int>(parse_int(value, qual));
    } else if (qual == "trainer.epochs") {
      cfg.epochs = static_cast<int>(parse_int(value, qual));
    } else if (qual == "trainer.lr_model") {
      cfg.lr_model = parse_double(value, qual);
    } else if (qual == "trainer.lr_proxies") {
      cfg.lr_proxies = parse_double(value, qual);
    } else if (qual == "trainer.momentum") {
      cfg.momentum = parse_double(value, qual);
    } else if (qual == "trainer.cosine_decay") {
      cfg.cosine_decay = parse_bool(value, qual);
    } else if (qual == "trainer.embed_dim") {
      cfg.embed_dim = static_cast<int>(parse_int(value, qual));
    } else if (qual == "trainer.two_layer") {
      cfg.two_layer = parse_bool(value, qual);
    } else if (qual == "trainer.hidden_dim") {
      cfg.hidden_dim = static_cast<int>(parse_int(value, qual));
    } else if (qual == "trainer.use_bias") {
      cfg.use_bias = parse_bool(value, qual);
    } else if (qual == "run.seeds") {
      cfg.seeds.clear();
      for (const auto& tok : split_ws(value))
        cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(tok, qual)));
      seeds_set = true;
    } else if (qual == "run.out") {
      cfg.out = value;
    } else {
      throw ConfigParseError("unknown key '" + qual + "' at line " + std::to_string(line_no));
    }
  }
  if (!sigma_set) cfg.dataset.sigma.assign({0.5, 0.1});
  if (margins_set && cfg.loss_config.margins.values.empty())
    throw ConfigParseError("loss.margins is empty");
  if (seeds_set && cfg.seeds.empty()) throw ConfigParseError("run.seeds is empty");
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream o;
  o << "[dataset]\n";
  o << "branching =";
  for (int b : dataset.branching) o << " " << b;
  o << "\n";
  o << "samples_per_fine_class = " << dataset.samples_per_fine_class << "\n";
  o << "d_in = " << dataset.d_in << "\n";
  o << "sigma =";
  for (double s : dataset.sigma) o << " " << fmt_double(s);
  o << "\n";
  o << "sigma_sample = " << fmt_double(dataset.sigma_sample) << "\n";
  o << "seed = " << dataset.seed << "\n";
  if (!train_file.empty()) o << "train_file = " << train_file << "\n";
  if (!test_file.empty()) o << "test_file = " << test_file << "\n";
  o << "\n[loss]\n";
  o << "kind = " << loss_kind << "\n";
  o << "mode = " << loss_mode << "\n";
  o << "scale = " << loss_scale << "\n";
  o << "alpha = " << fmt_double(loss_config.alpha) << "\n";
  o << "margins =";
  for (double m : loss_config.margins.values) o << " " << fmt_double(m);
  o << "\n";
  o << "weight_pair = " << fmt_double(loss_config.weight_pair) << "\n";
  o << "softmax_scale = " << fmt_double(loss_config.softmax_scale) << "\n";
  o << "cosface_scale = " << fmt_double(loss_config.cosface_scale) << "\n";
  o << "cosface_margin = " << fmt_double(loss_config.cosface_margin) << "\n";
  o << "circle_gamma = " << fmt_double(loss_config.circle_gamma) << "\n";
  o << "circle_margin = " << fmt_double(loss_config.circle_margin) << "\n";
  o << "triplet_margin = " << fmt_double(loss_config.triplet_margin) << "\n";
  o << "ms_alpha = " << fmt_double(loss_config.ms_alpha) << "\n";
  o << "ms_beta = " << fmt_double(loss_config.ms_beta) << "\n";
  o << "ms_lambda = " << fmt_double(loss_config.ms_lambda) << "\n";
  o << "ms_epsilon = " << fmt_double(loss_config.ms_epsilon) << "\n";
  o << "npair_reg = " << fmt_double(loss_config.npair_reg) << "\n";
  o << "\n[sampler]\n";
  o << "coarse_per_batch = " << sampler.coarse_per_batch << "\n";
  o << "middle_per_coarse = " << sampler.middle_per_coarse << "\n";
  o << "fine_per_middle = " << sampler.fine_per_middle << "\n";
  o << "instances_per_fine = " << sampler.instances_per_fine << "\n";
  o << "\n[trainer]\n";
  o << "epochs = " << epochs << "\n";
  o << "lr_model = " << fmt_double(lr_model) << "\n";
  o << "lr_proxies = " << fmt_double(lr_proxies) << "\n";
  o << "momentum = " << fmt_double(momentum) << "\n";
  o << "cosine_decay = " << (cosine_decay ? "true" : "false") << "\n";
  o << "embed_dim = " << embed_dim << "\n";
  o << "two_layer = " << (two_layer ? "true" : "false") << "\n";
  o << "hidden_dim = " << hidden_dim << "\n";
  o << "use_bias = " << (use_bias ? "true" : "false") << "\n";
  o << "\n[run]\n";
  o << "seeds =";
  for (std::uint64_t s : seeds) o << " " << s;
  o << "\n";
  o << "out = " << out << "\n";
  return o.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(serialize()); }

TrainOptions ExperimentConfig::train_options(std::uint64_t run_seed) const {
  TrainOptions opt;
  opt.loss = LossSpec::parse(loss_kind, loss_mode, loss_scale);
  opt.loss_config = loss_config;
  opt.sampler = sampler;
  opt.epochs = epochs;
  opt.lr_model = lr_model;
  opt.lr_proxies = lr_proxies;
  opt.momentum = momentum;
  opt.cosine_decay = cosine_decay;
  opt.embed_dim = embed_dim;
  opt.two_layer = two_layer;
  opt.hidden_dim = hidden_dim;
  opt.use_bias = use_bias;
  opt.seed = run_seed;
  return opt;
}

SynthSpec ExperimentConfig::dataset_spec(std::uint64_t run_seed) const {
  SynthSpec spec = dataset;
  spec.seed = derive_seed(dataset.seed, run_seed);
  return spec;
}

std::pair<Dataset, Dataset> ExperimentConfig::load_or_generate(std::uint64_t run_seed) const {
  if (!train_file.empty() || !test_file.empty()) {
    if (train_file.empty() || test_file.empty())
      throw ConfigParseError("set both dataset.train_file and dataset.test_file or neither");
    return {read_dataset(train_file, Split::train), read_dataset(test_file, Split::test)};
  }
  return generate_synthetic(dataset_spec(run_seed));
}

}  // namespace dyml
