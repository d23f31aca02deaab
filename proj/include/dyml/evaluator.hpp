#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyml/common.hpp"
#include "dyml/taxonomy.hpp"

namespace dyml {

// ---------------------------------------------------------------------------
// Retrieval evaluation. Each test sample queries the rest of the split; the
// single, level-blind ranking it produces is then scored against every
// scale's relevance separately, and the overall numbers are the arithmetic
// mean across scales. Ties in similarity break toward the lower gallery id.
// ---------------------------------------------------------------------------

struct RankingList {
  int query_id = -1;
  std::vector<int> ordered;  // gallery ids, descending similarity
};

// Stable descending sort of the gallery by cosine to the query.
RankingList rank(const Vec& query, const Matrix& gallery);

struct CmcResult {
  std::vector<double> values;  // aligned with the requested ranks
  int evaluated = 0;
  int skipped = 0;  // queries with no positive at this scale
};

// gallery_labels is indexed by gallery id as it appears in the rankings.
CmcResult cmc(const std::vector<RankingList>& rankings, const std::vector<int>& query_labels,
              const std::vector<int>& gallery_labels, const std::vector<int>& ranks);

struct MeanApResult {
  double value = 0.0;
  int evaluated = 0;
  int skipped = 0;
};

// AP = mean over each positive's rank r of (positives at ranks <= r) / r.
MeanApResult mean_ap(const std::vector<RankingList>& rankings,
                     const std::vector<int>& query_labels,
                     const std::vector<int>& gallery_labels);

// |head_k(a) & head_k(b)| / k. Lists must be equal-length permutations of
// one id set. Throws DepthOutOfRange / NotPermutations.
double set_intersection(const std::vector<int>& a, const std::vector<int>& b, int k);

// (1/N) sum_k set_intersection(a, b, k).
double asi(const std::vector<int>& predicted, const std::vector<int>& ground_truth);

// Ground-truth ranking for ASI: the gallery list stably sorted by relevance
// tier (0 shares the fine label, 1 shares scale 1 but not 0, .., M = shares
// nothing). Within a tier the labels determine no order, so the input order
// is kept; a ranking that only permutes items inside tiers therefore scores
// ASI = 1 against its own ground truth.
std::vector<int> ground_truth_ranking(const std::vector<std::vector<std::int32_t>>& chains,
                                      int query, const std::vector<int>& gallery_ids);

struct ScaleReport {
  int scale = 0;
  double cmc1 = 0.0, cmc10 = 0.0, cmc20 = 0.0;
  double map = 0.0;
  int queries = 0;
  int skipped = 0;
};

struct OverallReport {
  std::vector<ScaleReport> scales;
  double overall_cmc1 = 0.0, overall_cmc10 = 0.0, overall_cmc20 = 0.0;
  double overall_map = 0.0;
  double asi = 0.0;        // mean per-query ASI
  int num_samples = 0;
  std::string config_echo;  // filled by the CLI layer
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

OverallReport evaluate(const Matrix& embeddings,
                       const std::vector<std::vector<std::int32_t>>& label_chains,
                       const Taxonomy& taxonomy);

struct SweepRow {
  double threshold = 0.0;
  double precision = 0.0;  // NaN when no pair is predicted similar
  double recall = 0.0;
};

// Pairwise decision "similar iff cosine >= threshold" at one scale.
std::vector<SweepRow> threshold_sweep(const Matrix& embeddings,
                                      const std::vector<std::vector<std::int32_t>>& label_chains,
                                      int scale, const std::vector<double>& thresholds);

// Report files, schema "dyml-report/1": structured JSON plus a flat CSV with
// one row per scale and an overall row.
std::string report_to_json(const OverallReport& r);
void write_report_json(const std::string& path, const OverallReport& r);
void write_report_csv(const std::string& path, const OverallReport& r);

}  // namespace dyml
