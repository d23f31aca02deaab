#include "dyml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace dyml {

namespace {

constexpr std::uint64_t kModelTag = 0x4d4f44454cULL;    // "MODEL"
constexpr std::uint64_t kProxyTag = 0x50524f5859ULL;    // "PROXY"
constexpr std::uint64_t kSamplerTag = 0x53414d504cULL;  // "SAMPL"

// class counts drawn per level, coarse first; see header
std::vector<int> level_counts(const SamplerSpec& s, int num_scales) {
  if (num_scales == 1) return {s.fine_per_middle};
  std::vector<int> counts;
  counts.push_back(s.coarse_per_batch);
  for (int i = 0; i < num_scales - 2; ++i) counts.push_back(s.middle_per_coarse);
  counts.push_back(s.fine_per_middle);
  return counts;
}

}  // namespace

int SamplerSpec::batch_size(int num_scales) const {
  int n = instances_per_fine;
  for (int c : level_counts(*this, num_scales)) n *= c;
  return n;
}

std::vector<int> sample_batch(const Dataset& dataset, const SamplerSpec& spec, Rng& rng) {
  const int m = dataset.taxonomy.num_scales;
  if (spec.coarse_per_batch < 1 || spec.middle_per_coarse < 1 || spec.fine_per_middle < 1 ||
      spec.instances_per_fine < 1)
    throw InvalidSpec("sampler counts must be positive");

  // observed hierarchy: children[s][class at s+1] and sample lists per fine id
  std::vector<std::map<int, std::vector<int>>> children(std::max(0, m - 1));
  std::map<int, std::vector<int>> samples_of_fine;
  std::vector<int> top_pool;
  {
    std::map<int, char> seen_top;
    std::vector<std::map<int, char>> seen_child(std::max(0, m - 1));
    for (std::size_t j = 0; j < dataset.samples.size(); ++j) {
      const auto& chain = dataset.samples[j].labels;
      samples_of_fine[chain[0]].push_back(static_cast<int>(j));
      seen_top.emplace(chain[m - 1], 0);
      for (int s = 0; s + 1 < m; ++s) {
        if (seen_child[s].emplace(chain[s], 0).second)
          children[s][chain[s + 1]].push_back(chain[s]);
      }
    }
    for (const auto& [c, _] : seen_top) top_pool.push_back(c);
  }
  for (auto& level : children)
    for (auto& [p, kids] : level) std::sort(kids.begin(), kids.end());

  const std::vector<int> counts = level_counts(spec, m);
  std::vector<int> current = std::move(top_pool);
  std::vector<int> chosen;
  for (std::size_t level = 0; level < counts.size(); ++level) {
    // `current` holds the candidate classes at this level (children of the
    // previous picks); first level draws from all observed top classes
    if (level == 0) {
      if (static_cast<int>(current.size()) < counts[0])
        throw InsufficientClasses("need " + std::to_string(counts[0]) + " classes at the top, " +
                                  std::to_string(current.size()) + " available");
      chosen = rng.sample_without_replacement(current, counts[0]);
    } else {
      const int scale_of_children = m - 1 - static_cast<int>(level);
      std::vector<int> next;
      for (int parent : chosen) {
        const auto it = children[scale_of_children].find(parent);
        const auto& pool = it->second;
        if (static_cast<int>(pool.size()) < counts[level])
          throw InsufficientClasses("class " + std::to_string(parent) + " has " +
                                    std::to_string(pool.size()) + " children, need " +
                                    std::to_string(counts[level]));
        const auto picks = rng.sample_without_replacement(pool, counts[level]);
        next.insert(next.end(), picks.begin(), picks.end());
      }
      chosen = std::move(next);
    }
  }

  std::vector<int> batch;
  for (int fine : chosen) {
    const auto& pool = samples_of_fine[fine];
    if (static_cast<int>(pool.size()) < spec.instances_per_fine)
      throw InsufficientClasses("fine class " + std::to_string(fine) + " has " +
                                std::to_string(pool.size()) + " samples, need " +
                                std::to_string(spec.instances_per_fine));
    const auto picks = rng.sample_without_replacement(pool, spec.instances_per_fine);
    batch.insert(batch.end(), picks.begin(), picks.end());
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Loss spec
// ---------------------------------------------------------------------------

std::string LossSpec::name() const {
  switch (family) {
    case LossFamily::csl_cls: return "csl_cls";
    case LossFamily::csl_pair: return "csl_pair";
    case LossFamily::csl_joint: return "csl_joint";
    case LossFamily::baseline_multi: return baseline_name(baseline);
    case LossFamily::baseline_single:
      return std::string(baseline_name(baseline)) + "@s" + std::to_string(single_scale);
  }
  return "?";
}

LossSpec LossSpec::parse(const std::string& kind, const std::string& mode, int scale) {
  LossSpec spec;
  if (kind == "csl_cls") {
    spec.family = LossFamily::csl_cls;
  } else if (kind == "csl_pair") {
    spec.family = LossFamily::csl_pair;
  } else if (kind == "csl_joint") {
    spec.family = LossFamily::csl_joint;
  } else {
    spec.baseline = baseline_from_name(kind);
    if (mode == "multi" || mode.empty()) {
      spec.family = LossFamily::baseline_multi;
    } else if (mode == "single") {
      spec.family = LossFamily::baseline_single;
      spec.single_scale = scale;
    } else {
      throw ConfigParseError("unknown loss mode: " + mode);
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// State setup and steps
// ---------------------------------------------------------------------------

TrainState init_train_state(const Dataset& dataset, const TrainOptions& options) {
  if (dataset.samples.empty()) throw EmptyDataset("cannot train on an empty dataset");
  TrainState st;
  st.options = options;
  st.model = init_model(dataset.d_in(), options.embed_dim, options.two_layer,
                        options.hidden_dim, options.use_bias,
                        derive_seed(options.seed, kModelTag));
  st.model_velocity = ModelGrads::zeros_like(st.model);

  const LossFamily fam = options.loss.family;
  if (fam == LossFamily::csl_cls || fam == LossFamily::csl_joint) {
    st.bank = init_proxies_subset(dataset.taxonomy, dataset.class_ids_at(0), options.embed_dim,
                                  derive_seed(options.seed, kProxyTag));
    st.bank_velocity = Matrix(st.bank->size(), st.bank->dim());
  } else if (fam == LossFamily::baseline_multi && baseline_uses_proxies(options.loss.baseline)) {
    const int m = dataset.taxonomy.num_scales;
    for (int s = 0; s < m; ++s) {
      st.scale_sets.push_back(init_proxy_set(s, dataset.class_ids_at(s), options.embed_dim,
                                             derive_seed(options.seed, kProxyTag + 1 + s)));
      st.set_velocity.emplace_back(st.scale_sets.back().size(), options.embed_dim);
    }
  } else if (fam == LossFamily::baseline_single && baseline_uses_proxies(options.loss.baseline)) {
    const int s = options.loss.single_scale;
    if (s < 0 || s >= dataset.taxonomy.num_scales)
      throw InvalidSpec("single-scale index out of range");
    st.scale_sets.push_back(init_proxy_set(s, dataset.class_ids_at(s), options.embed_dim,
                                           derive_seed(options.seed, kProxyTag + 1 + s)));
    st.set_velocity.emplace_back(st.scale_sets.back().size(), options.embed_dim);
  }
  return st;
}

BatchEval evaluate_batch(const TrainState& state, const Dataset& dataset,
                         const std::vector<int>& batch) {
  if (batch.empty()) throw EmptyBatch("empty batch");
  BatchEval eval;
  eval.indices = batch;
  eval.inputs.resize(batch.size());
  eval.embeddings = Matrix(batch.size(), state.model.d_out);
  eval.caches.resize(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& features = dataset.samples[batch[j]].features;
    if (static_cast<int>(features.size()) != state.model.d_in)
      throw DimensionMismatch("dataset d_in vs model d_in");
    eval.inputs[j] = widen(features);
    forward(state.model, eval.inputs[j].data(), eval.caches[j]);
    std::copy(eval.caches[j].embedding.begin(), eval.caches[j].embedding.end(),
              eval.embeddings.row(j));
  }
  for (double v : eval.embeddings.data())
    if (!std::isfinite(v)) throw NonFiniteLoss("non-finite embedding in batch forward");
  std::vector<std::vector<std::int32_t>> chains(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) chains[j] = dataset.samples[batch[j]].labels;

  const TrainOptions& opt = state.options;
  switch (opt.loss.family) {
    case LossFamily::csl_cls:
      eval.loss = csl_cls(eval.embeddings, chains, *state.bank, opt.loss_config);
      break;
    case LossFamily::csl_pair:
      eval.loss = csl_pair(eval.embeddings, chains, opt.loss_config);
      break;
    case LossFamily::csl_joint:
      eval.loss = csl_joint(eval.embeddings, chains, *state.bank, opt.loss_config);
      break;
    case LossFamily::baseline_multi: {
      auto* sets = state.scale_sets.empty()
                       ? nullptr
                       : const_cast<std::vector<ProxySet>*>(&state.scale_sets);
      eval.loss = multi_scale_sum(opt.loss.baseline, eval.embeddings, chains, sets,
                                  opt.loss_config);
      break;
    }
    case LossFamily::baseline_single: {
      std::vector<int> labels(batch.size());
      for (std::size_t j = 0; j < batch.size(); ++j)
        labels[j] = chains[j][opt.loss.single_scale];
      const ProxySet* set = state.scale_sets.empty() ? nullptr : &state.scale_sets[0];
      eval.loss = baseline_loss(opt.loss.baseline, eval.embeddings, labels, set,
                                opt.loss_config);
      break;
    }
  }
  return eval;
}

int steps_per_epoch(const Dataset& dataset, const TrainOptions& options) {
  const int batch = options.sampler.batch_size(dataset.taxonomy.num_scales);
  return std::max(1, static_cast<int>(dataset.samples.size()) / batch);
}

double lr_decay(const TrainState& state, const Dataset& dataset) {
  if (!state.options.cosine_decay) return 1.0;
  const long long total =
      static_cast<long long>(state.options.epochs) * steps_per_epoch(dataset, state.options);
  if (total <= 0) return 1.0;
  const double t = std::min(1.0, static_cast<double>(state.step) / static_cast<double>(total));
  return 0.5 * (1.0 + std::cos(M_PI * t));
}

void optimizer_step(TrainState& state, const Dataset& dataset, const BatchEval& eval) {
  const double decay = lr_decay(state, dataset);
  const double mu = state.options.momentum;

  // model
  ModelGrads grads = ModelGrads::zeros_like(state.model);
  for (std::size_t j = 0; j < eval.indices.size(); ++j)
    backward(state.model, eval.inputs[j].data(), eval.caches[j],
             eval.loss.grad_embeddings.row(j), grads);
  state.model_velocity.scale(mu);
  state.model_velocity.accumulate_scaled(grads, 1.0);
  const double lr_m = state.options.lr_model * decay;
  auto apply = [&](Matrix& w, const Matrix& v) {
    axpy(-lr_m, v.data().data(), w.data().data(), w.data().size());
  };
  apply(state.model.w1, state.model_velocity.w1);
  apply(state.model.w2, state.model_velocity.w2);
  axpy(-lr_m, state.model_velocity.b1.data(), state.model.b1.data(), state.model.b1.size());
  axpy(-lr_m, state.model_velocity.b2.data(), state.model.b2.data(), state.model.b2.size());

  // proxies: dense momentum over the bank / sets, renormalized rows
  const double lr_p = state.options.lr_proxies * decay;
  if (state.bank && !eval.loss.grad_proxies.empty()) {
    Matrix grad(state.bank->size(), state.bank->dim());
    for (const auto& [fine_id, g] : eval.loss.grad_proxies[0]) {
      const int row = state.bank->row_of(fine_id);
      if (row < 0) throw UnknownProxyId("gradient for fine class not in bank");
      std::copy(g.begin(), g.end(), grad.row(row));
    }
    scale_inplace(mu, state.bank_velocity.data().data(), state.bank_velocity.data().size());
    axpy(1.0, grad.data().data(), state.bank_velocity.data().data(), grad.data().size());
    axpy(-lr_p, state.bank_velocity.data().data(), state.bank->weights.data().data(),
         grad.data().size());
    for (int r = 0; r < state.bank->size(); ++r) {
      double* w = state.bank->weights.row(r);
      const double n = norm2(w, state.bank->dim());
      if (n < 1e-12) throw DegenerateEmbedding("proxy collapsed during training");
      scale_inplace(1.0 / n, w, state.bank->dim());
    }
  }
  for (std::size_t s = 0; s < state.scale_sets.size(); ++s) {
    if (eval.loss.grad_proxies.size() <= s) break;
    ProxySet& set = state.scale_sets[s];
    // single-scale training stores its one set at slot 0
    const auto& sparse = eval.loss.grad_proxies[state.options.loss.family ==
                                                        LossFamily::baseline_single
                                                    ? 0
                                                    : s];
    Matrix grad(set.size(), set.dim());
    for (const auto& [class_id, g] : sparse) {
      const int row = set.row_of(class_id);
      if (row < 0) throw UnknownProxyId("gradient for class not in set");
      std::copy(g.begin(), g.end(), grad.row(row));
    }
    Matrix& vel = state.set_velocity[s];
    scale_inplace(mu, vel.data().data(), vel.data().size());
    axpy(1.0, grad.data().data(), vel.data().data(), grad.data().size());
    axpy(-lr_p, vel.data().data(), set.weights.data().data(), grad.data().size());
    for (int r = 0; r < set.size(); ++r) {
      double* w = set.weights.row(r);
      const double n = norm2(w, set.dim());
      if (n < 1e-12) throw DegenerateEmbedding("proxy collapsed during training");
      scale_inplace(1.0 / n, w, set.dim());
    }
  }
  ++state.step;
}

// ---------------------------------------------------------------------------
// Diagnostics helpers
// ---------------------------------------------------------------------------

namespace {

// predicted class at each scale: proxy argmax where a proxy structure
// exists, in-batch nearest neighbor otherwise
void accumulate_accuracy(const TrainState& state, const BatchEval& eval,
                         const std::vector<std::vector<std::int32_t>>& chains,
                         std::vector<long long>& correct, std::vector<long long>& total) {
  const int m = static_cast<int>(chains[0].size());
  const std::size_t batch = eval.embeddings.rows();
  const std::size_t d = eval.embeddings.cols();

  Matrix sims;
  const LossFamily fam = state.options.loss.family;
  const bool csl = (fam == LossFamily::csl_cls || fam == LossFamily::csl_joint) &&
                   state.bank.has_value();

  for (int s = 0; s < m; ++s) {
    const ProxySet* set = nullptr;
    if (fam == LossFamily::baseline_multi && s < static_cast<int>(state.scale_sets.size()))
      set = &state.scale_sets[s];
    if (fam == LossFamily::baseline_single && !state.scale_sets.empty() &&
        state.scale_sets[0].scale == s)
      set = &state.scale_sets[0];

    for (std::size_t a = 0; a < batch; ++a) {
      int predicted = -1;
      if (csl) {
        double best = -2.0;
        const auto& class_ids = state.bank->scale_class_ids[s];
        for (std::size_t k = 0; k < class_ids.size(); ++k) {
          for (int row : state.bank->scale_members[s][k]) {
            const double sim = dot(eval.embeddings.row(a), state.bank->weights.row(row), d);
            if (sim > best) {
              best = sim;
              predicted = class_ids[k];
            }
          }
        }
      } else if (set != nullptr) {
        double best = -2.0;
        for (int c = 0; c < set->size(); ++c) {
          const double sim = dot(eval.embeddings.row(a), set->weights.row(c), d);
          if (sim > best) {
            best = sim;
            predicted = set->class_ids[c];
          }
        }
      } else {
        if (sims.empty()) sims = similarity_matrix(eval.embeddings, eval.embeddings);
        double best = -2.0;
        int nn = -1;
        for (std::size_t b = 0; b < batch; ++b) {
          if (b == a) continue;
          if (sims(a, b) > best) {
            best = sims(a, b);
            nn = static_cast<int>(b);
          }
        }
        if (nn >= 0) predicted = chains[nn][s];
      }
      ++total[s];
      if (predicted == chains[a][s]) ++correct[s];
    }
  }
}

void accumulate_tiers(const Matrix& embeddings,
                      const std::vector<std::vector<std::int32_t>>& chains,
                      std::vector<double>& sum, std::vector<long long>& count) {
  const int m = static_cast<int>(chains[0].size());
  const std::size_t n = embeddings.rows();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      int tier = m;
      for (int s = 0; s < m; ++s)
        if (chains[a][s] == chains[b][s]) {
          tier = s;
          break;
        }
      sum[tier] += dot(embeddings.row(a), embeddings.row(b), embeddings.cols());
      ++count[tier];
    }
}

}  // namespace

std::vector<EpochDiagnostics> train_continue(TrainState& state, const Dataset& dataset,
                                             int stop_after_epoch) {
  const TrainOptions& opt = state.options;
  const int m = dataset.taxonomy.num_scales;
  const int steps = steps_per_epoch(dataset, opt);
  const int last = stop_after_epoch < 0 ? opt.epochs : std::min(opt.epochs, stop_after_epoch);
  std::vector<EpochDiagnostics> diags;

  for (int epoch = state.epoch; epoch < last; ++epoch) {
    Rng rng(derive_seed(opt.seed, kSamplerTag));  // same schedule every epoch
    double loss_sum = 0.0;
    std::vector<long long> correct(m, 0), total(m, 0);
    std::vector<double> tier_sum(m + 1, 0.0);
    std::vector<long long> tier_count(m + 1, 0);

    for (int s = 0; s < steps; ++s) {
      const std::vector<int> batch = sample_batch(dataset, opt.sampler, rng);
      const BatchEval eval = evaluate_batch(state, dataset, batch);
      if (!std::isfinite(eval.loss.value))
        throw NonFiniteLoss("loss diverged at epoch " + std::to_string(epoch + 1) + " step " +
                            std::to_string(s + 1));
      loss_sum += eval.loss.value;

      std::vector<std::vector<std::int32_t>> chains(batch.size());
      for (std::size_t j = 0; j < batch.size(); ++j)
        chains[j] = dataset.samples[batch[j]].labels;
      accumulate_accuracy(state, eval, chains, correct, total);
      accumulate_tiers(eval.embeddings, chains, tier_sum, tier_count);

      optimizer_step(state, dataset, eval);
    }
    ++state.epoch;

    EpochDiagnostics d;
    d.epoch = state.epoch;
    d.loss = loss_sum / steps;
    d.accuracy.resize(m);
    d.within_sim.assign(m, 0.0);
    for (int s = 0; s < m; ++s) {
      d.accuracy[s] = total[s] ? 100.0 * correct[s] / total[s] : 0.0;
      d.within_sim[s] = tier_count[s] ? tier_sum[s] / tier_count[s] : 0.0;
    }
    d.between_sim = tier_count[m] ? tier_sum[m] / tier_count[m] : 0.0;
    diags.push_back(std::move(d));
  }
  return diags;
}

std::pair<TrainState, std::vector<EpochDiagnostics>> train(const Dataset& dataset,
                                                           const TrainOptions& options) {
  TrainState state = init_train_state(dataset, options);
  std::vector<EpochDiagnostics> diags = train_continue(state, dataset);
  return {std::move(state), std::move(diags)};
}

Matrix embed_all(const EmbeddingModel& model, const Dataset& dataset) {
  Matrix out(dataset.samples.size(), model.d_out);
  ForwardCache cache;
  for (std::size_t j = 0; j < dataset.samples.size(); ++j) {
    const auto& features = dataset.samples[j].features;
    if (static_cast<int>(features.size()) != model.d_in)
      throw DimensionMismatch("dataset d_in vs model d_in");
    forward(model, widen(features).data(), cache);
    std::copy(cache.embedding.begin(), cache.embedding.end(), out.row(j));
  }
  return out;
}

std::vector<std::vector<std::int32_t>> chains_of(const Dataset& dataset) {
  std::vector<std::vector<std::int32_t>> chains(dataset.samples.size());
  for (std::size_t j = 0; j < dataset.samples.size(); ++j) chains[j] = dataset.samples[j].labels;
  return chains;
}

EpochDiagnostics record_similarity_distributions(const TrainState& state, const Dataset& dataset,
                                                 int sample_count, std::uint64_t seed) {
  if (sample_count < 1) throw InsufficientPairs("sample_count must be positive");
  const int m = dataset.taxonomy.num_scales;
  const Matrix embeddings = embed_all(state.model, dataset);
  const auto chains = chains_of(dataset);
  const std::size_t n = dataset.samples.size();

  std::vector<std::vector<std::pair<int, int>>> tiers(m + 1);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      int tier = m;
      for (int s = 0; s < m; ++s)
        if (chains[a][s] == chains[b][s]) {
          tier = s;
          break;
        }
      tiers[tier].emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
  for (int t = 0; t <= m; ++t)
    if (tiers[t].empty())
      throw InsufficientPairs("no pairs in similarity tier " + std::to_string(t));

  Rng rng(seed);
  EpochDiagnostics d;
  d.epoch = state.epoch;
  d.within_sim.assign(m, 0.0);
  for (int t = 0; t <= m; ++t) {
    double sum = 0.0;
    for (int k = 0; k < sample_count; ++k) {
      const auto& [a, b] = tiers[t][rng.uniform_u64(tiers[t].size())];
      sum += dot(embeddings.row(a), embeddings.row(b), embeddings.cols());
    }
    const double mean = sum / sample_count;
    if (t < m)
      d.within_sim[t] = mean;
    else
      d.between_sim = mean;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoints and diagnostics files
// ---------------------------------------------------------------------------

namespace {

void write_matrix(BinWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.f64_array(m.data().data(), m.data().size());
}

Matrix read_matrix(BinReader& r) {
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  Matrix m(rows, cols);
  r.f64_array(m.data().data(), m.data().size());
  return m;
}

void write_vec(BinWriter& w, const Vec& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  w.f64_array(v.data(), v.size());
}

Vec read_vec(BinReader& r) {
  Vec v(r.u32());
  r.f64_array(v.data(), v.size());
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const TrainState& state,
                      std::uint64_t config_hash) {
  BinWriter w(path);
  w.magic("DYMC1");
  w.u64(config_hash);
  const TrainOptions& o = state.options;
  w.u64(o.seed);
  w.u32(static_cast<std::uint32_t>(o.loss.family));
  w.u32(static_cast<std::uint32_t>(o.loss.baseline));
  w.i32(o.loss.single_scale);
  const LossConfig& c = o.loss_config;
  w.f64(c.alpha);
  write_vec(w, c.margins.values);
  w.f64(c.weight_pair);
  w.f64(c.softmax_scale);
  w.f64(c.cosface_scale);
  w.f64(c.cosface_margin);
  w.f64(c.circle_gamma);
  w.f64(c.circle_margin);
  w.f64(c.triplet_margin);
  w.f64(c.ms_alpha);
  w.f64(c.ms_beta);
  w.f64(c.ms_lambda);
  w.f64(c.ms_epsilon);
  w.f64(c.npair_reg);
  w.i32(o.sampler.coarse_per_batch);
  w.i32(o.sampler.middle_per_coarse);
  w.i32(o.sampler.fine_per_middle);
  w.i32(o.sampler.instances_per_fine);
  w.i32(o.epochs);
  w.f64(o.lr_model);
  w.f64(o.lr_proxies);
  w.f64(o.momentum);
  w.u32(o.cosine_decay ? 1 : 0);
  w.i32(o.embed_dim);
  w.u32(o.two_layer ? 1 : 0);
  w.i32(o.hidden_dim);
  w.u32(o.use_bias ? 1 : 0);

  const EmbeddingModel& mdl = state.model;
  w.i32(mdl.d_in);
  w.i32(mdl.d_out);
  w.u32(mdl.two_layer ? 1 : 0);
  w.i32(mdl.hidden);
  w.u32(mdl.use_bias ? 1 : 0);
  write_matrix(w, mdl.w1);
  write_vec(w, mdl.b1);
  write_matrix(w, mdl.w2);
  write_vec(w, mdl.b2);
  write_matrix(w, state.model_velocity.w1);
  write_vec(w, state.model_velocity.b1);
  write_matrix(w, state.model_velocity.w2);
  write_vec(w, state.model_velocity.b2);

  w.u32(state.bank ? 1 : 0);
  if (state.bank) {
    const Taxonomy& tax = state.bank->taxonomy;
    w.u32(static_cast<std::uint32_t>(tax.num_scales));
    for (int s = 0; s < tax.num_scales; ++s)
      w.u32(static_cast<std::uint32_t>(tax.classes_per_scale[s]));
    w.u32(static_cast<std::uint32_t>(state.bank->fine_ids.size()));
    for (int id : state.bank->fine_ids)
      for (int s = 0; s < tax.num_scales; ++s) w.i32(tax.ancestor(id, s));
    write_matrix(w, state.bank->weights);
    write_matrix(w, state.bank_velocity);
  }
  w.u32(static_cast<std::uint32_t>(state.scale_sets.size()));
  for (std::size_t s = 0; s < state.scale_sets.size(); ++s) {
    const ProxySet& set = state.scale_sets[s];
    w.i32(set.scale);
    w.u32(static_cast<std::uint32_t>(set.class_ids.size()));
    for (int id : set.class_ids) w.i32(id);
    write_matrix(w, set.weights);
    write_matrix(w, state.set_velocity[s]);
  }
  w.u32(static_cast<std::uint32_t>(state.epoch));
  w.u64(static_cast<std::uint64_t>(state.step));
  w.close();
}

TrainState read_checkpoint(const std::string& path, std::uint64_t* config_hash) {
  BinReader r(path);
  r.expect_magic("DYMC1");
  const std::uint64_t hash = r.u64();
  if (config_hash) *config_hash = hash;
  TrainState st;
  TrainOptions& o = st.options;
  o.seed = r.u64();
  o.loss.family = static_cast<LossFamily>(r.u32());
  o.loss.baseline = static_cast<BaselineKind>(r.u32());
  o.loss.single_scale = r.i32();
  LossConfig& c = o.loss_config;
  c.alpha = r.f64();
  c.margins.values = read_vec(r);
  c.weight_pair = r.f64();
  c.softmax_scale = r.f64();
  c.cosface_scale = r.f64();
  c.cosface_margin = r.f64();
  c.circle_gamma = r.f64();
  c.circle_margin = r.f64();
  c.triplet_margin = r.f64();
  c.ms_alpha = r.f64();
  c.ms_beta = r.f64();
  c.ms_lambda = r.f64();
  c.ms_epsilon = r.f64();
  c.npair_reg = r.f64();
  o.sampler.coarse_per_batch = r.i32();
  o.sampler.middle_per_coarse = r.i32();
  o.sampler.fine_per_middle = r.i32();
  o.sampler.instances_per_fine = r.i32();
  o.epochs = r.i32();
  o.lr_model = r.f64();
  o.lr_proxies = r.f64();
  o.momentum = r.f64();
  o.cosine_decay = r.u32() != 0;
  o.embed_dim = r.i32();
  o.two_layer = r.u32() != 0;
  o.hidden_dim = r.i32();
  o.use_bias = r.u32() != 0;

  EmbeddingModel& mdl = st.model;
  mdl.d_in = r.i32();
  mdl.d_out = r.i32();
  mdl.two_layer = r.u32() != 0;
  mdl.hidden = r.i32();
  mdl.use_bias = r.u32() != 0;
  mdl.w1 = read_matrix(r);
  mdl.b1 = read_vec(r);
  mdl.w2 = read_matrix(r);
  mdl.b2 = read_vec(r);
  st.model_velocity.w1 = read_matrix(r);
  st.model_velocity.b1 = read_vec(r);
  st.model_velocity.w2 = read_matrix(r);
  st.model_velocity.b2 = read_vec(r);

  if (r.u32() != 0) {
    const int m = static_cast<int>(r.u32());
    std::vector<int> counts(m);
    for (int s = 0; s < m; ++s) counts[s] = static_cast<int>(r.u32());
    const std::uint32_t n = r.u32();
    std::vector<std::vector<std::int32_t>> chains(n, std::vector<std::int32_t>(m));
    std::vector<int> fine_ids(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (int s = 0; s < m; ++s) chains[i][s] = r.i32();
      fine_ids[i] = chains[i][0];
    }
    Matrix weights = read_matrix(r);
    const Taxonomy tax = taxonomy_from_observations(counts, chains);
    st.bank = init_proxies_subset(tax, fine_ids, static_cast<int>(weights.cols()), 0);
    st.bank->weights = std::move(weights);
    st.bank_velocity = read_matrix(r);
  }
  const std::uint32_t n_sets = r.u32();
  for (std::uint32_t s = 0; s < n_sets; ++s) {
    ProxySet set;
    set.scale = r.i32();
    const std::uint32_t n = r.u32();
    set.class_ids.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) set.class_ids[i] = r.i32();
    set.weights = read_matrix(r);
    st.scale_sets.push_back(std::move(set));
    st.set_velocity.push_back(read_matrix(r));
  }
  st.epoch = static_cast<int>(r.u32());
  st.step = static_cast<long long>(r.u64());
  return st;
}

void write_diagnostics_csv(const std::string& path, const std::vector<EpochDiagnostics>& diags,
                           std::uint64_t config_hash, std::uint64_t seed) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for write: " + path);
  std::fprintf(f, "# schema=dyml-diagnostics/1 config_hash=%016llx seed=%llu\n",
               static_cast<unsigned long long>(config_hash),
               static_cast<unsigned long long>(seed));
  const int m = diags.empty() ? 0 : static_cast<int>(diags[0].accuracy.size());
  std::fprintf(f, "epoch,loss");
  for (int s = 0; s < m; ++s) std::fprintf(f, ",acc_scale%d", s);
  for (int s = 0; s < m; ++s) std::fprintf(f, ",within_scale%d", s);
  std::fprintf(f, ",between\n");
  for (const auto& d : diags) {
    std::fprintf(f, "%d,%.10g", d.epoch, d.loss);
    for (int s = 0; s < m; ++s) std::fprintf(f, ",%.10g", d.accuracy[s]);
    for (int s = 0; s < m; ++s) std::fprintf(f, ",%.10g", d.within_sim[s]);
    std::fprintf(f, ",%.10g\n", d.between_sim);
  }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace dyml
