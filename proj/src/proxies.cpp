#include "dyml/proxies.hpp"

#include <algorithm>

namespace dyml {

namespace {

Matrix random_unit_rows(std::size_t n, int d, Rng& rng) {
  Matrix w(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    double norm = 0.0;
    do {
      for (int c = 0; c < d; ++c) w(r, c) = rng.normal();
      norm = norm2(w.row(r), d);
    } while (norm < 1e-12);
    scale_inplace(1.0 / norm, w.row(r), d);
  }
  return w;
}

void build_subtree_index(ProxyBank& bank) {
  const Taxonomy& t = bank.taxonomy;
  bank.scale_class_ids.assign(t.num_scales, {});
  bank.scale_members.assign(t.num_scales, {});
  for (int s = 0; s < t.num_scales; ++s) {
    std::map<int, std::vector<int>> members;
    for (std::size_t row = 0; row < bank.fine_ids.size(); ++row)
      members[t.ancestor(bank.fine_ids[row], s)].push_back(static_cast<int>(row));
    for (auto& [class_id, rows] : members) {
      bank.scale_class_ids[s].push_back(class_id);
      bank.scale_members[s].push_back(std::move(rows));
    }
  }
}

}  // namespace

int ProxyBank::row_of(int fine_id) const {
  const auto it = std::lower_bound(fine_ids.begin(), fine_ids.end(), fine_id);
  if (it == fine_ids.end() || *it != fine_id) return -1;
  return static_cast<int>(it - fine_ids.begin());
}

ProxyBank init_proxies(const Taxonomy& taxonomy, int d, std::uint64_t seed) {
  return init_proxies_subset(taxonomy, taxonomy.present_classes(0), d, seed);
}

ProxyBank init_proxies_subset(const Taxonomy& taxonomy, const std::vector<int>& fine_ids, int d,
                              std::uint64_t seed) {
  if (d < 2) throw InvalidDimension("proxy dimension must be >= 2");
  if (fine_ids.empty()) throw InvalidDimension("proxy bank needs at least one fine class");
  ProxyBank bank;
  bank.taxonomy = taxonomy;
  bank.fine_ids = fine_ids;
  std::sort(bank.fine_ids.begin(), bank.fine_ids.end());
  for (int f : bank.fine_ids)
    if (f < 0 || f >= taxonomy.classes_per_scale[0] || !taxonomy.present[0][f])
      throw UnknownProxyId("fine class " + std::to_string(f) + " not in taxonomy");
  Rng rng(seed);
  bank.weights = random_unit_rows(bank.fine_ids.size(), d, rng);
  build_subtree_index(bank);
  return bank;
}

std::vector<HardestNegative> hardest_negatives(const Vec& embedding, int scale,
                                               const std::vector<std::int32_t>& label_chain,
                                               const ProxyBank& bank) {
  if (scale < 0 || scale >= bank.taxonomy.num_scales)
    throw DegenerateScale("scale " + std::to_string(scale) + " out of range");
  const auto& class_ids = bank.scale_class_ids[scale];
  if (class_ids.size() < 2)
    throw DegenerateScale("scale " + std::to_string(scale) + " has a single class in the bank");
  if (static_cast<int>(embedding.size()) != bank.dim())
    throw DimensionMismatch("embedding dim vs proxy dim");

  const int own = label_chain[scale];
  std::vector<HardestNegative> out;
  out.reserve(class_ids.size() - 1);
  for (std::size_t k = 0; k < class_ids.size(); ++k) {
    if (class_ids[k] == own) continue;
    double best = -2.0;
    int best_row = -1;
    for (int row : bank.scale_members[scale][k]) {
      const double s = dot(embedding.data(), bank.weights.row(row), embedding.size());
      if (s > best) {  // members are in ascending fine id order; strict > keeps the lowest on ties
        best = s;
        best_row = row;
      }
    }
    out.push_back({class_ids[k], bank.fine_ids[best_row], best});
  }
  return out;
}

namespace {

bool all_zero(const Vec& g) {
  for (double v : g)
    if (v != 0.0) return false;
  return true;
}

}  // namespace

void apply_proxy_gradients(ProxyBank& bank, const std::map<int, Vec>& grads_by_fine_id,
                           double learning_rate) {
  const int d = bank.dim();
  for (const auto& [fine_id, g] : grads_by_fine_id) {
    const int row = bank.row_of(fine_id);
    if (row < 0) throw UnknownProxyId("fine class " + std::to_string(fine_id) + " not in bank");
    if (static_cast<int>(g.size()) != d) throw DimensionMismatch("proxy gradient dim");
    if (all_zero(g)) continue;  // no step, keep exact bytes
    double* w = bank.weights.row(row);
    axpy(-learning_rate, g.data(), w, d);
    const double n = norm2(w, d);
    if (n < 1e-12) throw DegenerateEmbedding("proxy collapsed to zero during update");
    scale_inplace(1.0 / n, w, d);
  }
}

void write_proxies(const std::string& path, const ProxyBank& bank) {
  BinWriter w(path);
  w.magic("DYMP1");
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  w.f64_array(bank.weights.data().data(), bank.weights.data().size());
  w.close();
}

Matrix read_proxy_weights(const std::string& path) {
  BinReader r(path);
  r.expect_magic("DYMP1");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  Matrix w(n, d);
  r.f64_array(w.data().data(), w.data().size());
  return w;
}

int ProxySet::row_of(int class_id) const {
  const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), class_id);
  if (it == class_ids.end() || *it != class_id) return -1;
  return static_cast<int>(it - class_ids.begin());
}

ProxySet init_proxy_set(int scale, const std::vector<int>& class_ids, int d, std::uint64_t seed) {
  if (d < 2) throw InvalidDimension("proxy dimension must be >= 2");
  if (class_ids.empty()) throw InvalidDimension("proxy set needs at least one class");
  ProxySet set;
  set.scale = scale;
  set.class_ids = class_ids;
  std::sort(set.class_ids.begin(), set.class_ids.end());
  Rng rng(seed);
  set.weights = random_unit_rows(set.class_ids.size(), d, rng);
  return set;
}

void apply_proxy_set_gradients(ProxySet& set, const std::map<int, Vec>& grads_by_class_id,
                               double learning_rate) {
  const int d = set.dim();
  for (const auto& [class_id, g] : grads_by_class_id) {
    const int row = set.row_of(class_id);
    if (row < 0) throw UnknownProxyId("class " + std::to_string(class_id) + " not in proxy set");
    if (static_cast<int>(g.size()) != d) throw DimensionMismatch("proxy gradient dim");
    if (all_zero(g)) continue;
    double* w = set.weights.row(row);
    axpy(-learning_rate, g.data(), w, d);
    const double n = norm2(w, d);
    if (n < 1e-12) throw DegenerateEmbedding("proxy collapsed to zero during update");
    scale_inplace(1.0 / n, w, d);
  }
}

}  // namespace dyml
