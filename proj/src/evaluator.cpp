#include "dyml/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "dyml/geometry.hpp"
#include "json.hpp"

namespace dyml {

namespace {

std::vector<int> order_by_similarity(const double* sims, const std::vector<int>& ids) {
  std::vector<int> idx(ids.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return ids[a] < ids[b];
  });
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = ids[idx[i]];
  return out;
}

}  // namespace

RankingList rank(const Vec& query, const Matrix& gallery) {
  if (gallery.rows() == 0) throw EmptyGallery("rank: empty gallery");
  if (query.size() != gallery.cols()) throw DimensionMismatch("rank: query dim vs gallery dim");
  std::vector<double> sims(gallery.rows());
  std::vector<int> ids(gallery.rows());
  for (std::size_t g = 0; g < gallery.rows(); ++g) {
    sims[g] = dot(query.data(), gallery.row(g), query.size());
    ids[g] = static_cast<int>(g);
  }
  RankingList out;
  out.ordered = order_by_similarity(sims.data(), ids);
  return out;
}

CmcResult cmc(const std::vector<RankingList>& rankings, const std::vector<int>& query_labels,
              const std::vector<int>& gallery_labels, const std::vector<int>& ranks) {
  CmcResult out;
  out.values.assign(ranks.size(), 0.0);
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& list = rankings[q].ordered;
    bool has_positive = false;
    for (int id : list)
      if (gallery_labels[id] == query_labels[q]) {
        has_positive = true;
        break;
      }
    if (!has_positive) {
      ++out.skipped;
      continue;
    }
    ++out.evaluated;
    // first position (1-based) holding a positive
    int first = 0;
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      if (gallery_labels[list[pos]] == query_labels[q]) {
        first = static_cast<int>(pos) + 1;
        break;
      }
    }
    for (std::size_t r = 0; r < ranks.size(); ++r)
      if (first <= ranks[r]) out.values[r] += 1.0;
  }
  if (out.evaluated > 0)
    for (double& v : out.values) v /= out.evaluated;
  return out;
}

MeanApResult mean_ap(const std::vector<RankingList>& rankings,
                     const std::vector<int>& query_labels,
                     const std::vector<int>& gallery_labels) {
  MeanApResult out;
  double total = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& list = rankings[q].ordered;
    int positives = 0;
    double ap = 0.0;
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      if (gallery_labels[list[pos]] == query_labels[q]) {
        ++positives;
        ap += static_cast<double>(positives) / static_cast<double>(pos + 1);
      }
    }
    if (positives == 0) {
      ++out.skipped;
      continue;
    }
    ++out.evaluated;
    total += ap / positives;
  }
  if (out.evaluated > 0) out.value = total / out.evaluated;
  return out;
}

double set_intersection(const std::vector<int>& a, const std::vector<int>& b, int k) {
  if (a.size() != b.size()) throw NotPermutations("lists have different lengths");
  if (k < 1 || k > static_cast<int>(a.size()))
    throw DepthOutOfRange("depth " + std::to_string(k) + " for lists of length " +
                          std::to_string(a.size()));
  const std::set<int> sa(a.begin(), a.end());
  const std::set<int> sb(b.begin(), b.end());
  if (sa.size() != a.size() || sa != sb)
    throw NotPermutations("lists are not permutations of one id set");
  std::set<int> head(a.begin(), a.begin() + k);
  int count = 0;
  for (int i = 0; i < k; ++i)
    if (head.count(b[i])) ++count;
  return static_cast<double>(count) / k;
}

double asi(const std::vector<int>& predicted, const std::vector<int>& ground_truth) {
  if (predicted.size() != ground_truth.size())
    throw NotPermutations("lists have different lengths");
  if (predicted.empty()) throw DepthOutOfRange("empty ranking");
  // single pass: SI(k) for all k via running intersection counts
  const int n = static_cast<int>(predicted.size());
  std::set<int> sa(predicted.begin(), predicted.end());
  std::set<int> sb(ground_truth.begin(), ground_truth.end());
  if (static_cast<int>(sa.size()) != n || sa != sb)
    throw NotPermutations("lists are not permutations of one id set");
  std::set<int> in_a, in_b;
  int inter = 0;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const int x = predicted[k], y = ground_truth[k];
    if (x == y) {
      ++inter;
    } else {
      if (in_b.count(x)) ++inter;
      if (in_a.count(y)) ++inter;
    }
    in_a.insert(x);
    in_b.insert(y);
    total += static_cast<double>(inter) / (k + 1);
  }
  return total / n;
}

std::vector<int> ground_truth_ranking(const std::vector<std::vector<std::int32_t>>& chains,
                                      int query, const std::vector<int>& gallery_ids) {
  const int m = static_cast<int>(chains[query].size());
  auto tier = [&](int g) {
    for (int s = 0; s < m; ++s)
      if (chains[g][s] == chains[query][s]) return s;
    return m;
  };
  std::vector<int> out = gallery_ids;
  std::stable_sort(out.begin(), out.end(), [&](int a, int b) { return tier(a) < tier(b); });
  return out;
}

OverallReport evaluate(const Matrix& embeddings,
                       const std::vector<std::vector<std::int32_t>>& label_chains,
                       const Taxonomy& taxonomy) {
  const std::size_t n = embeddings.rows();
  if (n < 2) throw EmptyDataset("evaluation needs at least two samples");
  if (label_chains.size() != n) throw DimensionMismatch("embeddings vs label chains");
  const int m = taxonomy.num_scales;

  const Matrix sims = similarity_matrix(embeddings, embeddings);

  // one level-blind ranking per query over all other samples
  std::vector<RankingList> rankings(n);
  std::vector<int> gallery_ids;
  std::vector<double> row;
  for (std::size_t q = 0; q < n; ++q) {
    gallery_ids.clear();
    row.clear();
    for (std::size_t g = 0; g < n; ++g) {
      if (g == q) continue;
      gallery_ids.push_back(static_cast<int>(g));
      row.push_back(sims(q, g));
    }
    rankings[q].query_id = static_cast<int>(q);
    rankings[q].ordered = order_by_similarity(row.data(), gallery_ids);
  }

  OverallReport report;
  report.num_samples = static_cast<int>(n);
  const std::vector<int> ranks = {1, 10, 20};
  std::vector<int> q_labels(n), g_labels(n);
  for (int s = 0; s < m; ++s) {
    for (std::size_t j = 0; j < n; ++j) q_labels[j] = g_labels[j] = label_chains[j][s];
    const CmcResult c = cmc(rankings, q_labels, g_labels, ranks);
    const MeanApResult a = mean_ap(rankings, q_labels, g_labels);
    ScaleReport sr;
    sr.scale = s;
    sr.cmc1 = c.values[0];
    sr.cmc10 = c.values[1];
    sr.cmc20 = c.values[2];
    sr.map = a.value;
    sr.queries = c.evaluated;
    sr.skipped = c.skipped;
    report.scales.push_back(sr);
    report.overall_cmc1 += sr.cmc1 / m;
    report.overall_cmc10 += sr.cmc10 / m;
    report.overall_cmc20 += sr.cmc20 / m;
    report.overall_map += sr.map / m;
  }

  double asi_total = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::vector<int> truth = ground_truth_ranking(label_chains, static_cast<int>(q),
                                                        rankings[q].ordered);
    asi_total += asi(rankings[q].ordered, truth);
  }
  report.asi = asi_total / static_cast<double>(n);
  return report;
}

std::vector<SweepRow> threshold_sweep(const Matrix& embeddings,
                                      const std::vector<std::vector<std::int32_t>>& label_chains,
                                      int scale, const std::vector<double>& thresholds) {
  const std::size_t n = embeddings.rows();
  if (label_chains.size() != n) throw DimensionMismatch("embeddings vs label chains");
  long long positives = 0, negatives = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      (label_chains[i][scale] == label_chains[j][scale] ? positives : negatives)++;
  if (positives == 0 || negatives == 0)
    throw DegenerateScale("threshold sweep needs both positive and negative pairs at scale " +
                          std::to_string(scale));

  const Matrix sims = similarity_matrix(embeddings, embeddings);
  std::vector<SweepRow> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (sims(i, j) >= t)
          (label_chains[i][scale] == label_chains[j][scale] ? tp : fp)++;
      }
    SweepRow row;
    row.threshold = t;
    row.recall = static_cast<double>(tp) / static_cast<double>(positives);
    row.precision = (tp + fp) > 0
                        ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                        : std::nan("");
    out.push_back(row);
  }
  return out;
}

std::string report_to_json(const OverallReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "dyml-report/1";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(r.config_hash));
  j["config_hash"] = hash;
  j["seed"] = r.seed;
  j["config"] = r.config_echo;
  j["num_samples"] = r.num_samples;
  j["scales"] = nlohmann::ordered_json::array();
  for (const auto& s : r.scales) {
    nlohmann::ordered_json js;
    js["scale"] = s.scale;
    js["cmc1"] = s.cmc1;
    js["cmc10"] = s.cmc10;
    js["cmc20"] = s.cmc20;
    js["map"] = s.map;
    js["queries"] = s.queries;
    js["skipped"] = s.skipped;
    j["scales"].push_back(js);
  }
  j["overall"]["cmc1"] = r.overall_cmc1;
  j["overall"]["cmc10"] = r.overall_cmc10;
  j["overall"]["cmc20"] = r.overall_cmc20;
  j["overall"]["map"] = r.overall_map;
  j["asi"] = r.asi;
  return j.dump(2) + "\n";
}

void write_report_json(const std::string& path, const OverallReport& r) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for write: " + path);
  const std::string s = report_to_json(r);
  std::fwrite(s.data(), 1, s.size(), f);
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

void write_report_csv(const std::string& path, const OverallReport& r) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for write: " + path);
  std::fprintf(f, "# schema=dyml-report/1 config_hash=%016llx seed=%llu\n",
               static_cast<unsigned long long>(r.config_hash),
               static_cast<unsigned long long>(r.seed));
  std::fprintf(f, "scale,cmc1,cmc10,cmc20,map,queries,skipped,asi\n");
  for (const auto& s : r.scales)
    std::fprintf(f, "%d,%.10g,%.10g,%.10g,%.10g,%d,%d,\n", s.scale, s.cmc1, s.cmc10, s.cmc20,
                 s.map, s.queries, s.skipped);
  std::fprintf(f, "overall,%.10g,%.10g,%.10g,%.10g,%d,,%.10g\n", r.overall_cmc1, r.overall_cmc10,
               r.overall_cmc20, r.overall_map, r.num_samples, r.asi);
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace dyml
