#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dyml/evaluator.hpp"
#include "dyml/geometry.hpp"
#include "oracles.hpp"

using namespace dyml;

namespace {

Taxonomy tax421() { return build_taxonomy({4, 2, 1}, {{0, 0, 1, 1}, {0, 0}}); }

Matrix random_embeddings(Rng& rng, std::size_t n, int d) {
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const Vec v = oracle::random_unit_vec(rng, d);
    std::copy(v.begin(), v.end(), m.row(r));
  }
  return m;
}

std::vector<std::vector<std::int32_t>> random_chains(Rng& rng, const Taxonomy& t,
                                                     std::size_t n) {
  std::vector<std::vector<std::int32_t>> chains(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int fine = rng.uniform_int(t.classes_per_scale[0]);
    chains[j].resize(t.num_scales);
    for (int s = 0; s < t.num_scales; ++s) chains[j][s] = t.ancestor(fine, s);
  }
  return chains;
}

RankingList make_ranking(std::vector<int> order) {
  RankingList r;
  r.ordered = std::move(order);
  return r;
}

}  // namespace

TEST_CASE("rank: basics and forced tie-break") {
  Matrix g1(1, 2);
  g1(0, 0) = 1.0;
  CHECK(rank({1.0, 0.0}, g1).ordered == std::vector<int>{0});

  // gallery at cosines (0.2, 0.9, 0.9): ties break toward the lower id
  Matrix g(3, 2);
  auto place = [&](int row, double c, double sign) {
    g(row, 0) = c;
    g(row, 1) = sign * std::sqrt(1 - c * c);
  };
  place(0, 0.2, 1.0);
  place(1, 0.9, 1.0);
  place(2, 0.9, -1.0);
  CHECK(rank({1.0, 0.0}, g).ordered == std::vector<int>{1, 2, 0});
  CHECK_THROWS_AS(rank({1.0, 0.0}, Matrix()), EmptyGallery);
}

TEST_CASE("rank matches brute-force sort on random galleries") {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix gallery = random_embeddings(rng, 50, 6);
    const Vec q = oracle::random_unit_vec(rng, 6);
    const RankingList fast = rank(q, gallery);
    std::vector<double> sims(50);
    std::vector<int> ids(50);
    for (int i = 0; i < 50; ++i) {
      sims[i] = dot(q.data(), gallery.row(i), 6);
      ids[i] = i;
    }
    CHECK(fast.ordered == oracle::brute_rank(sims, ids));
  }
}

TEST_CASE("cmc: hand cases") {
  // every query's first hit positive
  std::vector<RankingList> rankings = {make_ranking({1, 2, 3}), make_ranking({0, 3, 2})};
  const CmcResult all = cmc(rankings, {7, 7}, {7, 7, 0, 0}, {1, 10, 20});
  CHECK(all.values[0] == 1.0);

  // single query, positive at position 5
  std::vector<RankingList> one = {make_ranking({1, 2, 3, 4, 5, 6})};
  std::vector<int> gallery_labels = {0, 1, 1, 1, 1, 9, 1};  // id 5 is positive
  const CmcResult r = cmc(one, {9}, gallery_labels, {1, 10, 20});
  CHECK(r.values[0] == 0.0);
  CHECK(r.values[1] == 1.0);
  CHECK(r.values[2] == 1.0);

  // queries without positives are skipped and counted
  const CmcResult skip = cmc(one, {42}, gallery_labels, {1});
  CHECK(skip.skipped == 1);
  CHECK(skip.evaluated == 0);
}

TEST_CASE("mean_ap: hand cases") {
  // ranking [pos, neg, pos]
  std::vector<RankingList> one = {make_ranking({0, 1, 2})};
  const MeanApResult r = mean_ap(one, {1}, {1, 0, 1});
  CHECK(r.value == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(std::abs(r.value - 0.833333) < 5e-7);

  const MeanApResult perfect = mean_ap(one, {1}, {1, 1, 0});
  CHECK(perfect.value == 1.0);
}

TEST_CASE("set intersection and asi: hand cases") {
  CHECK(set_intersection({1, 2, 3}, {1, 2, 3}, 1) == 1.0);
  CHECK(set_intersection({1, 2, 3}, {1, 2, 3}, 3) == 1.0);
  CHECK(set_intersection({1, 2, 3}, {3, 2, 1}, 1) == 0.0);
  CHECK(set_intersection({1, 2, 3}, {3, 2, 1}, 2) == 0.5);
  CHECK(set_intersection({1, 2, 3}, {3, 2, 1}, 3) == 1.0);
  CHECK_THROWS_AS(set_intersection({1, 2}, {2, 1}, 3), DepthOutOfRange);
  CHECK_THROWS_AS(set_intersection({1, 2}, {2, 1}, 0), DepthOutOfRange);
  CHECK_THROWS_AS(set_intersection({1, 2}, {3, 1}, 1), NotPermutations);
  CHECK_THROWS_AS(set_intersection({1, 2}, {1, 2, 3}, 1), NotPermutations);

  CHECK(asi({1, 2}, {1, 2}) == 1.0);
  CHECK(asi({1, 2}, {2, 1}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("si and asi match brute force on random permutations") {
  Rng rng(66);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + rng.uniform_int(30);
    std::vector<int> a(n), b(n);
    for (int i = 0; i < n; ++i) a[i] = b[i] = i * 3 + 1;
    a = rng.sample_without_replacement(a, n);
    b = rng.sample_without_replacement(b, n);
    for (int k = 1; k <= n; ++k)
      CHECK(std::abs(set_intersection(a, b, k) - oracle::brute_si(a, b, k)) <= 1e-12);
    CHECK(std::abs(asi(a, b) - oracle::brute_asi(a, b)) <= 1e-12);
  }
}

TEST_CASE("evaluate: degenerate single-class dataset is perfect everywhere") {
  const Taxonomy flat = build_taxonomy({1}, {});
  Rng rng(5);
  const Matrix emb = random_embeddings(rng, 8, 4);
  const std::vector<std::vector<std::int32_t>> chains(8, {0});
  const OverallReport r = evaluate(emb, chains, flat);
  CHECK(r.scales[0].cmc1 == 1.0);
  CHECK(r.scales[0].map == 1.0);
  CHECK(r.asi == 1.0);
  CHECK(r.overall_cmc1 == 1.0);
}

TEST_CASE("evaluate: perfectly separated coarse pair is perfect at both scales") {
  const Taxonomy t = build_taxonomy({2, 2}, {{0, 1}});
  Matrix emb(6, 3);
  for (int j = 0; j < 3; ++j) emb(j, 0) = 1.0;
  for (int j = 3; j < 6; ++j) emb(j, 1) = 1.0;
  std::vector<std::vector<std::int32_t>> chains(6);
  for (int j = 0; j < 6; ++j) chains[j] = {j < 3 ? 0 : 1, j < 3 ? 0 : 1};
  const OverallReport r = evaluate(emb, chains, t);
  CHECK(r.scales[0].cmc1 == 1.0);
  CHECK(r.scales[1].cmc1 == 1.0);
  CHECK(r.scales[0].map == 1.0);
  CHECK(r.scales[1].map == 1.0);
}

TEST_CASE("evaluate matches the brute-force evaluator on random instances") {
  Rng rng(77);
  const Taxonomy t = tax421();
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + rng.uniform_int(36);
    const Matrix emb = random_embeddings(rng, n, 8);
    const auto chains = random_chains(rng, t, n);
    const OverallReport fast = evaluate(emb, chains, t);
    const oracle::BruteReport brute = oracle::brute_evaluate(emb, chains, 3);
    for (int s = 0; s < 3; ++s) {
      CHECK(std::abs(fast.scales[s].cmc1 - brute.scales[s].cmc1) <= 1e-12);
      CHECK(std::abs(fast.scales[s].cmc10 - brute.scales[s].cmc10) <= 1e-12);
      CHECK(std::abs(fast.scales[s].cmc20 - brute.scales[s].cmc20) <= 1e-12);
      CHECK(std::abs(fast.scales[s].map - brute.scales[s].map) <= 1e-12);
      CHECK(fast.scales[s].queries == brute.scales[s].evaluated);
      CHECK(fast.scales[s].skipped == brute.scales[s].skipped);
    }
    CHECK(std::abs(fast.overall_cmc1 - brute.overall_cmc1) <= 1e-12);
    CHECK(std::abs(fast.overall_map - brute.overall_map) <= 1e-12);
    CHECK(std::abs(fast.asi - brute.asi) <= 1e-12);

    for (const auto& s : fast.scales) {
      CHECK(s.cmc1 <= s.cmc10);
      CHECK(s.cmc10 <= s.cmc20);
      CHECK(s.map >= 0.0);
      CHECK(s.map <= 1.0);
    }
    CHECK(fast.asi > 0.0);
    CHECK(fast.asi <= 1.0);

    // the overall block is the arithmetic mean across scales
    double mean_c1 = 0.0, mean_map = 0.0;
    for (const auto& s : fast.scales) {
      mean_c1 += s.cmc1 / 3;
      mean_map += s.map / 3;
    }
    CHECK(std::abs(fast.overall_cmc1 - mean_c1) <= 1e-12);
    CHECK(std::abs(fast.overall_map - mean_map) <= 1e-12);

    // relevance sets grow with the scale (nesting)
    for (std::size_t q = 0; q < chains.size(); ++q)
      for (int s = 0; s + 1 < 3; ++s)
        for (std::size_t g = 0; g < chains.size(); ++g)
          if (g != q && chains[g][s] == chains[q][s]) CHECK(chains[g][s + 1] == chains[q][s + 1]);
  }
}

TEST_CASE("threshold sweep: boundary thresholds and brute-force equality") {
  Rng rng(88);
  const Taxonomy t = tax421();
  const int n = 20;
  const Matrix emb = random_embeddings(rng, n, 6);
  const auto chains = random_chains(rng, t, n);

  const auto rows = threshold_sweep(emb, chains, 1, {-1.0, 0.0, 1.5});
  CHECK(rows[0].recall == 1.0);
  CHECK(rows[2].recall == 0.0);
  CHECK(std::isnan(rows[2].precision));

  // brute pair enumeration at the middle threshold
  long long tp = 0, fp = 0, pos = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const bool same = chains[i][1] == chains[j][1];
      const double sim = dot(emb.row(i), emb.row(j), 6);
      if (same) ++pos;
      if (sim >= 0.0) (same ? tp : fp)++;
    }
  CHECK(rows[1].recall == doctest::Approx(double(tp) / pos).epsilon(1e-15));
  CHECK(rows[1].precision == doctest::Approx(double(tp) / (tp + fp)).epsilon(1e-15));

  // all samples in one class at the coarse scale: no negative pairs
  CHECK_THROWS_AS(threshold_sweep(emb, chains, 2, {0.0}), DegenerateScale);
}

TEST_CASE("report files embed schema and hash") {
  Rng rng(99);
  const Taxonomy t = tax421();
  const Matrix emb = random_embeddings(rng, 10, 4);
  const auto chains = random_chains(rng, t, 10);
  OverallReport r = evaluate(emb, chains, t);
  r.config_hash = 0xabc123;
  r.seed = 7;
  const std::string json = report_to_json(r);
  CHECK(json.find("dyml-report/1") != std::string::npos);
  CHECK(json.find("0000000000abc123") != std::string::npos);
  write_report_csv("eval_report.csv", r);
  std::ifstream f("eval_report.csv");
  std::string first;
  std::getline(f, first);
  CHECK(first.find("dyml-report/1") != std::string::npos);
}
