#include "dyml/losses.hpp"

#include "dyml/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dyml {

namespace {

double softplus(double u) {
  return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double sigmoid(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// L = log(1 + sum_k exp(z_k)); p_k = dL/dz_k, all in shifted form.
struct SoftplusLse {
  double loss = 0.0;
  std::vector<double> p;
};

SoftplusLse softplus_lse(const std::vector<double>& z) {
  SoftplusLse out;
  out.p.assign(z.size(), 0.0);
  if (z.empty()) return out;
  double zmax = 0.0;
  for (double v : z) zmax = std::max(zmax, v);
  double denom = std::exp(-zmax);
  for (std::size_t k = 0; k < z.size(); ++k) {
    out.p[k] = std::exp(z[k] - zmax);
    denom += out.p[k];
  }
  for (double& v : out.p) v /= denom;
  out.loss = zmax + std::log(denom);
  return out;
}

// value = log sum_k exp(z_k); p = softmax(z). Requires nonempty z.
struct Lse {
  double value = 0.0;
  std::vector<double> p;
};

Lse log_sum_exp(const std::vector<double>& z) {
  Lse out;
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  out.p.resize(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out.p[k] = std::exp(z[k] - zmax);
    sum += out.p[k];
  }
  for (double& v : out.p) v /= sum;
  out.value = zmax + std::log(sum);
  return out;
}

int batch_scales(const std::vector<std::vector<std::int32_t>>& chains) {
  if (chains.empty()) throw EmptyBatch("no label chains");
  return static_cast<int>(chains[0].size());
}

void check_batch(const Matrix& embeddings,
                 const std::vector<std::vector<std::int32_t>>& chains) {
  if (embeddings.rows() == 0) throw EmptyBatch("no embeddings");
  if (embeddings.rows() != chains.size())
    throw DimensionMismatch("batch size vs label chain count");
}

}  // namespace

void validate_margins(const Margins& m, int num_scales) {
  if (static_cast<int>(m.values.size()) != num_scales)
    throw MarginOrderViolation("need " + std::to_string(num_scales) + " margins, got " +
                               std::to_string(m.values.size()));
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (m.values[i] < 0.0) throw MarginOrderViolation("negative margin");
    if (i > 0 && !(m.values[i] > m.values[i - 1]))
      throw MarginOrderViolation("margins must strictly increase with scale");
  }
}

const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::softmax: return "softmax";
    case BaselineKind::cosface: return "cosface";
    case BaselineKind::circle: return "circle";
    case BaselineKind::triplet: return "triplet";
    case BaselineKind::npair: return "npair";
    case BaselineKind::multisim: return "multisim";
  }
  return "?";
}

BaselineKind baseline_from_name(const std::string& name) {
  for (BaselineKind k : {BaselineKind::softmax, BaselineKind::cosface, BaselineKind::circle,
                         BaselineKind::triplet, BaselineKind::npair, BaselineKind::multisim})
    if (name == baseline_name(k)) return k;
  throw ConfigParseError("unknown baseline loss: " + name);
}

bool baseline_uses_proxies(BaselineKind kind) {
  return kind == BaselineKind::softmax || kind == BaselineKind::cosface ||
         kind == BaselineKind::circle;
}

CslScalar csl_scalar(const std::vector<std::vector<double>>& sn_per_scale, double s_p,
                     double alpha, const Margins& margins) {
  if (!(alpha > 0.0)) throw InvalidSpec("alpha must be positive");
  validate_margins(margins, static_cast<int>(sn_per_scale.size()));
  CslScalar out;
  out.dloss_dsn.resize(sn_per_scale.size());
  for (std::size_t i = 0; i < sn_per_scale.size(); ++i) {
    std::vector<double> z(sn_per_scale[i].size());
    for (std::size_t k = 0; k < z.size(); ++k)
      z[k] = alpha * (sn_per_scale[i][k] - s_p + margins.values[i]);
    const SoftplusLse term = softplus_lse(z);
    out.loss += term.loss;
    out.dloss_dsn[i].resize(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      out.dloss_dsn[i][k] = alpha * term.p[k];
      out.dloss_dsp -= alpha * term.p[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-scale learning
// ---------------------------------------------------------------------------

LossOutput csl_cls(const Matrix& embeddings,
                   const std::vector<std::vector<std::int32_t>>& label_chains,
                   const ProxyBank& bank, const LossConfig& config) {
  check_batch(embeddings, label_chains);
  const int m = bank.taxonomy.num_scales;
  if (batch_scales(label_chains) != m)
    throw DimensionMismatch("label chain length vs bank scales");
  validate_margins(config.margins, m);
  if (embeddings.cols() != static_cast<std::size_t>(bank.dim()))
    throw DimensionMismatch("embedding dim vs proxy dim");

  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);
  out.grad_proxies.resize(1);
  auto& proxy_grad = out.grad_proxies[0];
  auto grad_of = [&](int fine_id) -> Vec& {
    auto it = proxy_grad.find(fine_id);
    if (it == proxy_grad.end()) it = proxy_grad.emplace(fine_id, Vec(d, 0.0)).first;
    return it->second;
  };

  double total = 0.0;
  for (std::size_t j = 0; j < batch; ++j) {
    const double* x = embeddings.row(j);
    const auto& chain = label_chains[j];
    const int pos_row = bank.row_of(chain[0]);
    if (pos_row < 0)
      throw MissingProxy("no proxy for fine class " + std::to_string(chain[0]));
    const double s_p = dot(x, bank.weights.row(pos_row), d);

    // hardest negative per non-ancestor class, per scale
    std::vector<std::vector<double>> sn(m);
    std::vector<std::vector<int>> sel_rows(m);
    for (int s = 0; s < m; ++s) {
      const auto& class_ids = bank.scale_class_ids[s];
      for (std::size_t k = 0; k < class_ids.size(); ++k) {
        if (class_ids[k] == chain[s]) continue;
        double best = -2.0;
        int best_row = -1;
        for (int row : bank.scale_members[s][k]) {
          const double sim = dot(x, bank.weights.row(row), d);
          if (sim > best) {
            best = sim;
            best_row = row;
          }
        }
        sn[s].push_back(best);
        sel_rows[s].push_back(best_row);
      }
    }

    const CslScalar scalar = csl_scalar(sn, s_p, config.alpha, config.margins);
    total += scalar.loss;

    double* gx = out.grad_embeddings.row(j);
    for (int s = 0; s < m; ++s) {
      for (std::size_t k = 0; k < sn[s].size(); ++k) {
        const double w = scalar.dloss_dsn[s][k];
        const int row = sel_rows[s][k];
        axpy(w, bank.weights.row(row), gx, d);
        axpy(w, x, grad_of(bank.fine_ids[row]).data(), d);
      }
    }
    axpy(scalar.dloss_dsp, bank.weights.row(pos_row), gx, d);
    axpy(scalar.dloss_dsp, x, grad_of(bank.fine_ids[pos_row]).data(), d);
  }

  const double inv = 1.0 / static_cast<double>(batch);
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());
  for (auto& [id, g] : proxy_grad) scale_inplace(inv, g.data(), g.size());
  return out;
}

LossOutput csl_pair(const Matrix& embeddings,
                    const std::vector<std::vector<std::int32_t>>& label_chains,
                    const LossConfig& config) {
  check_batch(embeddings, label_chains);
  const int m = batch_scales(label_chains);
  validate_margins(config.margins, m);

  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  const Matrix sims = similarity_matrix(embeddings, embeddings);

  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);
  double total = 0.0;
  int contributing = 0;

  for (std::size_t a = 0; a < batch; ++a) {
    // hardest in-batch fine positive; skip anchors that have none
    double s_p = 2.0;
    int pos_idx = -1;
    for (std::size_t b = 0; b < batch; ++b) {
      if (b == a || label_chains[b][0] != label_chains[a][0]) continue;
      if (sims(a, b) < s_p) {
        s_p = sims(a, b);
        pos_idx = static_cast<int>(b);
      }
    }
    if (pos_idx < 0) {
      ++out.skipped_anchors;
      continue;
    }
    ++contributing;

    std::vector<std::vector<double>> sn(m);
    std::vector<std::vector<int>> neg_idx(m);
    for (int s = 0; s < m; ++s) {
      for (std::size_t b = 0; b < batch; ++b) {
        if (label_chains[b][s] != label_chains[a][s]) {
          sn[s].push_back(sims(a, b));
          neg_idx[s].push_back(static_cast<int>(b));
        }
      }
    }

    const CslScalar scalar = csl_scalar(sn, s_p, config.alpha, config.margins);
    total += scalar.loss;

    const double* xa = embeddings.row(a);
    double* ga = out.grad_embeddings.row(a);
    for (int s = 0; s < m; ++s) {
      for (std::size_t k = 0; k < sn[s].size(); ++k) {
        const double w = scalar.dloss_dsn[s][k];
        const int b = neg_idx[s][k];
        axpy(w, embeddings.row(b), ga, d);
        axpy(w, xa, out.grad_embeddings.row(b), d);
      }
    }
    axpy(scalar.dloss_dsp, embeddings.row(pos_idx), ga, d);
    axpy(scalar.dloss_dsp, xa, out.grad_embeddings.row(pos_idx), d);
  }

  const double inv = contributing > 0 ? 1.0 / contributing : 0.0;
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());
  return out;
}

LossOutput csl_joint(const Matrix& embeddings,
                     const std::vector<std::vector<std::int32_t>>& label_chains,
                     const ProxyBank& bank, const LossConfig& config) {
  LossOutput cls = csl_cls(embeddings, label_chains, bank, config);
  if (config.weight_pair == 0.0) return cls;
  const LossOutput pair = csl_pair(embeddings, label_chains, config);
  cls.value += config.weight_pair * pair.value;
  axpy(config.weight_pair, pair.grad_embeddings.data().data(),
       cls.grad_embeddings.data().data(), cls.grad_embeddings.data().size());
  cls.skipped_anchors += pair.skipped_anchors;
  return cls;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

namespace {

// softmax and cosface share the scaled-cosine cross-entropy core.
LossOutput scaled_ce(const Matrix& embeddings, const std::vector<int>& labels,
                     const ProxySet& proxies, double scale, double margin) {
  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);
  out.grad_proxies.resize(1);
  auto& proxy_grad = out.grad_proxies[0];
  auto grad_of = [&](int class_id) -> Vec& {
    auto it = proxy_grad.find(class_id);
    if (it == proxy_grad.end()) it = proxy_grad.emplace(class_id, Vec(d, 0.0)).first;
    return it->second;
  };

  double total = 0.0;
  const int n_classes = proxies.size();
  for (std::size_t j = 0; j < batch; ++j) {
    const double* x = embeddings.row(j);
    const int y_row = proxies.row_of(labels[j]);
    if (y_row < 0) throw MissingProxy("no proxy for class " + std::to_string(labels[j]));
    std::vector<double> z(n_classes);
    for (int c = 0; c < n_classes; ++c) {
      z[c] = scale * dot(x, proxies.weights.row(c), d);
      if (c == y_row) z[c] -= scale * margin;
    }
    const Lse lse = log_sum_exp(z);
    total += lse.value - z[y_row];
    double* gx = out.grad_embeddings.row(j);
    for (int c = 0; c < n_classes; ++c) {
      const double w = scale * (lse.p[c] - (c == y_row ? 1.0 : 0.0));
      axpy(w, proxies.weights.row(c), gx, d);
      axpy(w, x, grad_of(proxies.class_ids[c]).data(), d);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch);
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());
  for (auto& [id, g] : proxy_grad) scale_inplace(inv, g.data(), g.size());
  return out;
}

LossOutput circle_cls(const Matrix& embeddings, const std::vector<int>& labels,
                      const ProxySet& proxies, double gamma, double margin) {
  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);
  out.grad_proxies.resize(1);
  auto& proxy_grad = out.grad_proxies[0];
  auto grad_of = [&](int class_id) -> Vec& {
    auto it = proxy_grad.find(class_id);
    if (it == proxy_grad.end()) it = proxy_grad.emplace(class_id, Vec(d, 0.0)).first;
    return it->second;
  };

  const double delta_p = 1.0 - margin;
  const double delta_n = margin;
  double total = 0.0;
  const int n_classes = proxies.size();
  for (std::size_t j = 0; j < batch; ++j) {
    const double* x = embeddings.row(j);
    const int y_row = proxies.row_of(labels[j]);
    if (y_row < 0) throw MissingProxy("no proxy for class " + std::to_string(labels[j]));
    if (n_classes < 2) continue;  // no negatives, zero term

    const double s_p = dot(x, proxies.weights.row(y_row), d);
    const double alpha_p = std::max(0.0, 1.0 + margin - s_p);
    const double z_p = -gamma * alpha_p * (s_p - delta_p);

    std::vector<double> z_n;
    std::vector<double> s_n;
    std::vector<int> rows;
    z_n.reserve(n_classes - 1);
    for (int c = 0; c < n_classes; ++c) {
      if (c == y_row) continue;
      const double s = dot(x, proxies.weights.row(c), d);
      const double alpha_n = std::max(0.0, s + margin);
      s_n.push_back(s);
      rows.push_back(c);
      z_n.push_back(gamma * alpha_n * (s - delta_n));
    }
    const Lse lse = log_sum_exp(z_n);
    const double u = lse.value + z_p;
    total += softplus(u);
    const double su = sigmoid(u);

    double* gx = out.grad_embeddings.row(j);
    for (std::size_t k = 0; k < z_n.size(); ++k) {
      // dz/ds through the clipped weight: gamma*2*s while active, else 0
      const double dz = (s_n[k] + margin > 0.0) ? gamma * 2.0 * s_n[k] : 0.0;
      const double w = su * lse.p[k] * dz;
      axpy(w, proxies.weights.row(rows[k]), gx, d);
      axpy(w, x, grad_of(proxies.class_ids[rows[k]]).data(), d);
    }
    const double dzp = (alpha_p > 0.0) ? -gamma * 2.0 * (1.0 - s_p) : 0.0;
    const double wp = su * dzp;
    axpy(wp, proxies.weights.row(y_row), gx, d);
    axpy(wp, x, grad_of(proxies.class_ids[y_row]).data(), d);
  }
  const double inv = 1.0 / static_cast<double>(batch);
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());
  for (auto& [id, g] : proxy_grad) scale_inplace(inv, g.data(), g.size());
  return out;
}

LossOutput triplet_batch_hard(const Matrix& embeddings, const std::vector<int>& labels,
                              double margin) {
  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  const Matrix sims = similarity_matrix(embeddings, embeddings);
  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);

  double total = 0.0;
  int contributing = 0;
  int anchors_with_pos = 0;
  for (std::size_t a = 0; a < batch; ++a) {
    double s_ap = 2.0, s_an = -2.0;
    int p_idx = -1, n_idx = -1;
    for (std::size_t b = 0; b < batch; ++b) {
      if (b == a) continue;
      if (labels[b] == labels[a]) {
        if (sims(a, b) < s_ap) {
          s_ap = sims(a, b);
          p_idx = static_cast<int>(b);
        }
      } else if (sims(a, b) > s_an) {
        s_an = sims(a, b);
        n_idx = static_cast<int>(b);
      }
    }
    if (p_idx >= 0) ++anchors_with_pos;
    if (p_idx < 0 || n_idx < 0) {
      ++out.skipped_anchors;
      continue;
    }
    ++contributing;
    const double hinge = margin + s_an - s_ap;
    if (hinge <= 0.0) continue;
    total += hinge;
    const double* xa = embeddings.row(a);
    double* ga = out.grad_embeddings.row(a);
    axpy(1.0, embeddings.row(n_idx), ga, d);
    axpy(1.0, xa, out.grad_embeddings.row(n_idx), d);
    axpy(-1.0, embeddings.row(p_idx), ga, d);
    axpy(-1.0, xa, out.grad_embeddings.row(p_idx), d);
  }
  // positives are the sampler's contract; a scale where nobody has a
  // negative (single observed class) legitimately contributes zero
  if (anchors_with_pos == 0) throw InsufficientPairs("no anchor with an in-batch positive");
  const double inv = contributing > 0 ? 1.0 / contributing : 0.0;
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());
  return out;
}

LossOutput npair(const Matrix& embeddings, const std::vector<int>& labels, double reg) {
  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  const Matrix sims = similarity_matrix(embeddings, embeddings);
  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);

  double total = 0.0;
  int contributing = 0;
  for (std::size_t a = 0; a < batch; ++a) {
    // designated positive: next same-class sample in batch order, cyclic
    int p_idx = -1;
    for (std::size_t off = 1; off < batch; ++off) {
      const std::size_t b = (a + off) % batch;
      if (labels[b] == labels[a]) {
        p_idx = static_cast<int>(b);
        break;
      }
    }
    if (p_idx < 0) {
      ++out.skipped_anchors;
      continue;
    }
    ++contributing;
    const double s_ap = sims(a, p_idx);
    std::vector<double> z;
    std::vector<int> neg;
    for (std::size_t b = 0; b < batch; ++b) {
      if (labels[b] == labels[a]) continue;
      z.push_back(sims(a, b) - s_ap);
      neg.push_back(static_cast<int>(b));
    }
    const SoftplusLse term = softplus_lse(z);
    total += term.loss;

    const double* xa = embeddings.row(a);
    double* ga = out.grad_embeddings.row(a);
    double p_sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      p_sum += term.p[k];
      axpy(term.p[k], embeddings.row(neg[k]), ga, d);
      axpy(term.p[k], xa, out.grad_embeddings.row(neg[k]), d);
    }
    axpy(-p_sum, embeddings.row(p_idx), ga, d);
    axpy(-p_sum, xa, out.grad_embeddings.row(p_idx), d);
  }
  if (contributing == 0) throw InsufficientPairs("no anchor with an in-batch positive");
  const double inv = 1.0 / contributing;
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());

  // embedding-norm regularizer, averaged over the batch
  if (reg != 0.0) {
    const double binv = 1.0 / static_cast<double>(batch);
    for (std::size_t j = 0; j < batch; ++j) {
      out.value += reg * binv * dot(embeddings.row(j), embeddings.row(j), d);
      axpy(2.0 * reg * binv, embeddings.row(j), out.grad_embeddings.row(j), d);
    }
  }
  return out;
}

LossOutput multisim(const Matrix& embeddings, const std::vector<int>& labels,
                    const LossConfig& cfg) {
  const std::size_t batch = embeddings.rows();
  const std::size_t d = embeddings.cols();
  const Matrix sims = similarity_matrix(embeddings, embeddings);
  LossOutput out;
  out.grad_embeddings = Matrix(batch, d);

  double total = 0.0;
  int contributing = 0;
  int anchors_with_pos = 0;
  for (std::size_t a = 0; a < batch; ++a) {
    std::vector<int> pos, neg;
    for (std::size_t b = 0; b < batch; ++b) {
      if (b == a) continue;
      (labels[b] == labels[a] ? pos : neg).push_back(static_cast<int>(b));
    }
    if (pos.empty()) {
      ++out.skipped_anchors;
      continue;
    }
    ++anchors_with_pos;
    if (neg.empty()) {
      ++out.skipped_anchors;
      continue;
    }
    double min_pos = 2.0, max_neg = -2.0;
    for (int b : pos) min_pos = std::min(min_pos, sims(a, b));
    for (int b : neg) max_neg = std::max(max_neg, sims(a, b));

    std::vector<int> mined_pos, mined_neg;
    for (int b : pos)
      if (sims(a, b) < max_neg + cfg.ms_epsilon) mined_pos.push_back(b);
    for (int b : neg)
      if (sims(a, b) > min_pos - cfg.ms_epsilon) mined_neg.push_back(b);
    if (mined_pos.empty() || mined_neg.empty()) {
      ++out.skipped_anchors;
      continue;
    }
    ++contributing;

    std::vector<double> zp(mined_pos.size()), zn(mined_neg.size());
    for (std::size_t k = 0; k < mined_pos.size(); ++k)
      zp[k] = -cfg.ms_alpha * (sims(a, mined_pos[k]) - cfg.ms_lambda);
    for (std::size_t k = 0; k < mined_neg.size(); ++k)
      zn[k] = cfg.ms_beta * (sims(a, mined_neg[k]) - cfg.ms_lambda);
    const SoftplusLse pos_term = softplus_lse(zp);
    const SoftplusLse neg_term = softplus_lse(zn);
    total += pos_term.loss / cfg.ms_alpha + neg_term.loss / cfg.ms_beta;

    const double* xa = embeddings.row(a);
    double* ga = out.grad_embeddings.row(a);
    for (std::size_t k = 0; k < mined_pos.size(); ++k) {
      const double w = -pos_term.p[k];  // (1/a) * p * (-a)
      axpy(w, embeddings.row(mined_pos[k]), ga, d);
      axpy(w, xa, out.grad_embeddings.row(mined_pos[k]), d);
    }
    for (std::size_t k = 0; k < mined_neg.size(); ++k) {
      const double w = neg_term.p[k];
      axpy(w, embeddings.row(mined_neg[k]), ga, d);
      axpy(w, xa, out.grad_embeddings.row(mined_neg[k]), d);
    }
  }
  if (anchors_with_pos == 0) throw InsufficientPairs("no anchor with an in-batch positive");
  const double inv = contributing > 0 ? 1.0 / contributing : 0.0;
  out.value = total * inv;
  scale_inplace(inv, out.grad_embeddings.data().data(), out.grad_embeddings.data().size());
  return out;
}

}  // namespace

LossOutput baseline_loss(BaselineKind kind, const Matrix& embeddings,
                         const std::vector<int>& labels, const ProxySet* proxies,
                         const LossConfig& config) {
  if (embeddings.rows() == 0) throw EmptyBatch("no embeddings");
  if (embeddings.rows() != labels.size()) throw DimensionMismatch("batch size vs labels");
  if (baseline_uses_proxies(kind)) {
    if (proxies == nullptr) throw MissingProxy("classification baseline needs a proxy set");
    if (proxies->dim() != static_cast<int>(embeddings.cols()))
      throw DimensionMismatch("embedding dim vs proxy dim");
  }
  switch (kind) {
    case BaselineKind::softmax:
      return scaled_ce(embeddings, labels, *proxies, config.softmax_scale, 0.0);
    case BaselineKind::cosface:
      return scaled_ce(embeddings, labels, *proxies, config.cosface_scale,
                       config.cosface_margin);
    case BaselineKind::circle:
      return circle_cls(embeddings, labels, *proxies, config.circle_gamma, config.circle_margin);
    case BaselineKind::triplet:
      return triplet_batch_hard(embeddings, labels, config.triplet_margin);
    case BaselineKind::npair:
      return npair(embeddings, labels, config.npair_reg);
    case BaselineKind::multisim:
      return multisim(embeddings, labels, config);
  }
  throw InvalidSpec("unreachable baseline kind");
}

LossOutput multi_scale_sum(BaselineKind kind, const Matrix& embeddings,
                           const std::vector<std::vector<std::int32_t>>& label_chains,
                           std::vector<ProxySet>* per_scale_proxies, const LossConfig& config) {
  check_batch(embeddings, label_chains);
  const int m = batch_scales(label_chains);
  if (baseline_uses_proxies(kind)) {
    if (per_scale_proxies == nullptr || static_cast<int>(per_scale_proxies->size()) != m)
      throw MissingProxy("need one proxy set per scale");
  }
  LossOutput out;
  out.grad_embeddings = Matrix(embeddings.rows(), embeddings.cols());
  if (baseline_uses_proxies(kind)) out.grad_proxies.resize(m);

  std::vector<int> labels(embeddings.rows());
  for (int s = 0; s < m; ++s) {
    for (std::size_t j = 0; j < embeddings.rows(); ++j) labels[j] = label_chains[j][s];
    const ProxySet* set = baseline_uses_proxies(kind) ? &(*per_scale_proxies)[s] : nullptr;
    LossOutput term = baseline_loss(kind, embeddings, labels, set, config);
    out.value += term.value;
    axpy(1.0, term.grad_embeddings.data().data(), out.grad_embeddings.data().data(),
         out.grad_embeddings.data().size());
    out.skipped_anchors += term.skipped_anchors;
    if (!term.grad_proxies.empty()) out.grad_proxies[s] = std::move(term.grad_proxies[0]);
  }
  return out;
}

}  // namespace dyml
