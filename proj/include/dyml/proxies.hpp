#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyml/common.hpp"
#include "dyml/taxonomy.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Proxy bank: one learnable unit vector per fine class. Higher-scale classes
// own no vector of their own; they are represented by the set of fine
// proxies in their subtree (proxy sharing), compared against an embedding by
// taking the hardest (most similar) member.
//
// A bank may cover a subset of the taxonomy's fine classes (training covers
// only the train split's classes); rows are ordered by ascending fine id.
// ---------------------------------------------------------------------------

struct ProxyBank {
  Taxonomy taxonomy;
  std::vector<int> fine_ids;                 // ascending, row i <-> fine_ids[i]
  Matrix weights;                            // n x d, unit rows

  // Per scale: class ids present in the bank (ascending) and, aligned with
  // them, the bank rows in each class's subtree. At every scale the member
  // lists partition {0, .., n-1}.
  std::vector<std::vector<int>> scale_class_ids;
  std::vector<std::vector<std::vector<int>>> scale_members;

  int dim() const { return static_cast<int>(weights.cols()); }
  int size() const { return static_cast<int>(weights.rows()); }
  int row_of(int fine_id) const;  // -1 if absent
};

// Isotropic Gaussian init, rows normalized; deterministic under seed.
ProxyBank init_proxies(const Taxonomy& taxonomy, int d, std::uint64_t seed);
ProxyBank init_proxies_subset(const Taxonomy& taxonomy, const std::vector<int>& fine_ids, int d,
                              std::uint64_t seed);

struct HardestNegative {
  int class_id;    // negative class at the queried scale
  int fine_id;     // subtree member realizing the max
  double similarity;
};

// For each class at `scale` other than the embedding's own ancestor there:
// max cosine over the class's subtree proxies, with the argmax fine id.
// Ties break toward the lowest fine id. Ordered by ascending class id.
// Throws DegenerateScale when the bank has fewer than two classes at `scale`.
std::vector<HardestNegative> hardest_negatives(const Vec& embedding, int scale,
                                               const std::vector<std::int32_t>& label_chain,
                                               const ProxyBank& bank);

// w <- normalize(w - lr * g) for every keyed proxy; untouched rows keep
// their exact bytes. Throws UnknownProxyId for keys outside the bank.
void apply_proxy_gradients(ProxyBank& bank, const std::map<int, Vec>& grads_by_fine_id,
                           double learning_rate);

// Checkpoint format: magic "DYMP1", u32 count, u32 d, then count*d
// little-endian f64 values in bank row order.
void write_proxies(const std::string& path, const ProxyBank& bank);
Matrix read_proxy_weights(const std::string& path);

// ---------------------------------------------------------------------------
// Flat per-scale proxy set for the classification baselines, which get an
// independent prototype per class at every supervised scale.
// ---------------------------------------------------------------------------

struct ProxySet {
  int scale = 0;
  std::vector<int> class_ids;  // ascending
  Matrix weights;              // class count x d, unit rows

  int dim() const { return static_cast<int>(weights.cols()); }
  int size() const { return static_cast<int>(weights.rows()); }
  int row_of(int class_id) const;
};

ProxySet init_proxy_set(int scale, const std::vector<int>& class_ids, int d, std::uint64_t seed);
void apply_proxy_set_gradients(ProxySet& set, const std::map<int, Vec>& grads_by_class_id,
                               double learning_rate);

}  // namespace dyml
