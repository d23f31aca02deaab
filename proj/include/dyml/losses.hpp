#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyml/common.hpp"
#include "dyml/proxies.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Loss functions with analytic gradients. Inputs are unit-norm embeddings
// (rows of a B x d matrix) and unit-norm proxies; similarities are plain dot
// products. Gradients are taken with respect to the raw input coordinates,
// so a central-difference probe of any loss value must reproduce them.
//
// Cross-scale form, shared by the classification and pair variants:
//
//   L = sum_i log(1 + sum_k exp(alpha * (s_n[i][k] - s_p + m[i])))
//
// where s_p is the within-class similarity under the finest scale only, i
// runs over scales, k over the between-class similarities at scale i, and
// the per-scale margins m[0] < m[1] < ... grow with the scale's scope.
// Log-sum-exp is evaluated in shifted form.
// ---------------------------------------------------------------------------

struct Margins {
  std::vector<double> values;
};

// Strictly increasing, nonnegative, exactly num_scales entries.
void validate_margins(const Margins& m, int num_scales);

enum class BaselineKind { softmax, cosface, circle, triplet, npair, multisim };

const char* baseline_name(BaselineKind k);
BaselineKind baseline_from_name(const std::string& name);

struct LossConfig {
  double alpha = 32.0;                  // cross-scale scaling factor
  Margins margins{{0.1, 0.2, 0.3}};
  double weight_pair = 0.1;             // joint = cls + weight_pair * pair

  double softmax_scale = 30.0;          // cosine-softmax logit scale
  double cosface_scale = 64.0;          // original-paper values
  double cosface_margin = 0.35;
  double circle_gamma = 80.0;
  double circle_margin = 0.4;
  double triplet_margin = 0.2;          // batch-hard, cosine similarities
  double ms_alpha = 2.0;                // multi-similarity, original values
  double ms_beta = 50.0;
  double ms_lambda = 1.0;
  double ms_epsilon = 0.1;
  double npair_reg = 0.002;             // weight on mean squared embedding norm
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_embeddings;                        // B x d
  // One sparse map per proxy structure involved: csl/cls banks use a single
  // slot keyed by fine id; multi_scale_sum keys slot s by class id at scale s.
  std::vector<std::map<int, Vec>> grad_proxies;
  int skipped_anchors = 0;
};

// Scalar cross-scale form over raw similarities, with partials. Exposed so
// algebraic properties (translation invariance, monotonicity) can be checked
// without constructing geometric configurations.
struct CslScalar {
  double loss = 0.0;
  std::vector<std::vector<double>> dloss_dsn;  // per scale, per k
  double dloss_dsp = 0.0;
};

CslScalar csl_scalar(const std::vector<std::vector<double>>& sn_per_scale, double s_p,
                     double alpha, const Margins& margins);

// Classification variant: s_p is the cosine to the sample's own fine proxy;
// at every scale each non-ancestor class contributes the max cosine over its
// subtree proxies (hardest negative, subgradient routed to the argmax, ties
// to the lowest fine id). Mean over the batch.
LossOutput csl_cls(const Matrix& embeddings,
                   const std::vector<std::vector<std::int32_t>>& label_chains,
                   const ProxyBank& bank, const LossConfig& config);

// Pair variant: s_p is the minimum cosine to the anchor's in-batch fine
// positives; the negatives at scale i are every in-batch sample with a
// different label there. Anchors without a fine positive are skipped and
// counted. Mean over contributing anchors.
LossOutput csl_pair(const Matrix& embeddings,
                    const std::vector<std::vector<std::int32_t>>& label_chains,
                    const LossConfig& config);

LossOutput csl_joint(const Matrix& embeddings,
                     const std::vector<std::vector<std::int32_t>>& label_chains,
                     const ProxyBank& bank, const LossConfig& config);

// ---------------------------------------------------------------------------
// Baselines at a single scale. labels[j] is sample j's class at that scale.
// Classification kinds (softmax, cosface, circle) need `proxies`; pair kinds
// (triplet, npair, multisim) ignore it and need in-batch positives.
//
// Formulations (s = cosine, y = target class):
//   softmax   L = -log softmax_c(scale * s_c)[y]
//   cosface   L = -log softmax_c(scale * (s_c - margin*[c=y]))[y]
//   circle    L = softplus( lse_k(g*a_k*(s_k - m)) - g*a_p*(s_p - (1-m)) )
//             a_p = [1+m-s_p]_+, a_k = [s_k+m]_+, clip points enter the
//             gradient as subgradients
//   triplet   batch-hard: [margin + max_n s_an - min_p s_ap]_+ per anchor
//   npair     log(1 + sum_n exp(s_an - s_ap)), designated positive = next
//             same-class sample in batch order (cyclic), plus
//             npair_reg * mean_j |x_j|^2
//   multisim  mined P' = {p : s_ap < max_n s_an + eps},
//             N' = {n : s_an > min_p s_ap - eps}; skip anchor unless both
//             nonempty; (1/a) log(1 + sum_{P'} e^{-a(s-l)}) +
//             (1/b) log(1 + sum_{N'} e^{b(s-l)})
// ---------------------------------------------------------------------------

LossOutput baseline_loss(BaselineKind kind, const Matrix& embeddings,
                         const std::vector<int>& labels, const ProxySet* proxies,
                         const LossConfig& config);

// Unweighted sum of baseline_loss over all scales; classification kinds take
// one independent proxy set per scale.
LossOutput multi_scale_sum(BaselineKind kind, const Matrix& embeddings,
                           const std::vector<std::vector<std::int32_t>>& label_chains,
                           std::vector<ProxySet>* per_scale_proxies, const LossConfig& config);

bool baseline_uses_proxies(BaselineKind kind);

}  // namespace dyml
