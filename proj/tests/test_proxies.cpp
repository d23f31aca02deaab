#include <cmath>

#include "doctest.h"
#include "dyml/proxies.hpp"
#include "oracles.hpp"

using namespace dyml;

namespace {

Taxonomy tax421() { return build_taxonomy({4, 2, 1}, {{0, 0, 1, 1}, {0, 0}}); }

}  // namespace

TEST_CASE("init structure on [4,2,1]") {
  const ProxyBank bank = init_proxies(tax421(), 8, 5);
  CHECK(bank.size() == 4);
  CHECK(bank.dim() == 8);
  for (int r = 0; r < bank.size(); ++r)
    CHECK(std::abs(norm2(bank.weights.row(r), 8) - 1.0) < 1e-9);

  // coarse scale holds everything, middle splits {0,1} / {2,3}
  REQUIRE(bank.scale_class_ids[2] == std::vector<int>{0});
  CHECK(bank.scale_members[2][0] == std::vector<int>{0, 1, 2, 3});
  REQUIRE(bank.scale_class_ids[1] == std::vector<int>{0, 1});
  CHECK(bank.scale_members[1][0] == std::vector<int>{0, 1});
  CHECK(bank.scale_members[1][1] == std::vector<int>{2, 3});
}

TEST_CASE("subtree lists partition the bank at every scale") {
  const Taxonomy t = nested_taxonomy({3, 2, 4});
  const ProxyBank bank = init_proxies(t, 6, 9);
  for (int s = 0; s < t.num_scales; ++s) {
    std::vector<char> hit(bank.size(), 0);
    for (const auto& members : bank.scale_members[s])
      for (int row : members) {
        CHECK(!hit[row]);
        hit[row] = 1;
      }
    for (char h : hit) CHECK(h == 1);
  }
}

TEST_CASE("same seed, same bank") {
  const ProxyBank a = init_proxies(tax421(), 16, 77);
  const ProxyBank b = init_proxies(tax421(), 16, 77);
  CHECK(a.weights == b.weights);
  const ProxyBank c = init_proxies(tax421(), 16, 78);
  CHECK(!(c.weights == a.weights));
}

TEST_CASE("random init cosines concentrate near zero at d=128") {
  double sum = 0.0;
  long long count = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ProxyBank bank = init_proxies(tax421(), 128, 1000 + trial);
    for (int a = 0; a < bank.size(); ++a)
      for (int b = a + 1; b < bank.size(); ++b) {
        sum += dot(bank.weights.row(a), bank.weights.row(b), 128);
        ++count;
      }
  }
  CHECK(std::abs(sum / count) < 0.05);
}

TEST_CASE("hardest negatives: singleton subtrees reduce to per-class cosine") {
  const Taxonomy flat = build_taxonomy({3}, {});
  const ProxyBank bank = init_proxies(flat, 8, 2);
  Rng rng(4);
  const Vec x = oracle::random_unit_vec(rng, 8);
  const auto out = hardest_negatives(x, 0, {0}, bank);
  REQUIRE(out.size() == 2);
  CHECK(out[0].class_id == 1);
  CHECK(out[0].fine_id == 1);
  CHECK(out[0].similarity == doctest::Approx(dot(x.data(), bank.weights.row(1), 8)));
  CHECK(out[1].class_id == 2);
}

TEST_CASE("hardest negatives: forced maximum inside a subtree") {
  ProxyBank bank = init_proxies(tax421(), 3, 6);
  const Vec x = {1.0, 0.0, 0.0};
  // subtree of middle class 1 = fine {2,3}; make fine 2 at cos 0.9, fine 3 at 0.1
  auto place = [&](int row, double c) {
    bank.weights(row, 0) = c;
    bank.weights(row, 1) = std::sqrt(1 - c * c);
    bank.weights(row, 2) = 0.0;
  };
  place(2, 0.9);
  place(3, 0.1);
  const auto out = hardest_negatives(x, 1, {0, 0, 0}, bank);
  REQUIRE(out.size() == 1);
  CHECK(out[0].class_id == 1);
  CHECK(out[0].fine_id == 2);
  CHECK(out[0].similarity == doctest::Approx(0.9));
}

TEST_CASE("hardest negatives match exhaustive enumeration") {
  const Taxonomy t = nested_taxonomy({2, 3, 2});
  Rng rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    const ProxyBank bank = init_proxies(t, 12, 500 + trial);
    const Vec x = oracle::random_unit_vec(rng, 12);
    const int fine = rng.uniform_int(t.classes_per_scale[0]);
    std::vector<std::int32_t> chain = {static_cast<std::int32_t>(fine),
                                       static_cast<std::int32_t>(t.ancestor(fine, 1)),
                                       static_cast<std::int32_t>(t.ancestor(fine, 2))};
    for (int s = 0; s < 2; ++s) {
      const auto out = hardest_negatives(x, s, chain, bank);
      for (const auto& hn : out) {
        CHECK(hn.class_id != chain[s]);
        // brute force over every fine class under hn.class_id
        double best = -2.0;
        int best_fine = -1;
        for (int f = 0; f < t.classes_per_scale[0]; ++f) {
          if (t.ancestor(f, s) != hn.class_id) continue;
          const double sim = dot(x.data(), bank.weights.row(bank.row_of(f)), 12);
          if (sim > best) {
            best = sim;
            best_fine = f;
          }
        }
        CHECK(std::abs(hn.similarity - best) <= 1e-12);
        CHECK(hn.fine_id == best_fine);
        // no other member of the subtree exceeds the selected one
        for (int f = 0; f < t.classes_per_scale[0]; ++f)
          if (t.ancestor(f, s) == hn.class_id)
            CHECK(dot(x.data(), bank.weights.row(bank.row_of(f)), 12) <= hn.similarity);
      }
    }
  }
}

TEST_CASE("hardest negatives: degenerate scale") {
  const ProxyBank bank = init_proxies(tax421(), 4, 3);
  const Vec x = {1, 0, 0, 0};
  CHECK_THROWS_AS(hardest_negatives(x, 2, {0, 0, 0}, bank), DegenerateScale);
}

TEST_CASE("proxy gradient application") {
  ProxyBank bank = init_proxies(tax421(), 6, 10);
  const Matrix before = bank.weights;

  apply_proxy_gradients(bank, {}, 0.1);
  CHECK(bank.weights == before);

  std::map<int, Vec> zero{{1, Vec(6, 0.0)}};
  apply_proxy_gradients(bank, zero, 0.1);
  CHECK(bank.weights == before);

  Rng rng(2);
  std::map<int, Vec> g{{2, Vec(6)}};
  for (double& v : g.at(2)) v = rng.normal();
  apply_proxy_gradients(bank, g, 0.5);
  for (int r : {0, 1, 3})
    for (int c = 0; c < 6; ++c) CHECK(bank.weights(r, c) == before(r, c));
  for (int r = 0; r < 4; ++r)
    CHECK(std::abs(norm2(bank.weights.row(r), 6) - 1.0) < 1e-9);

  CHECK_THROWS_AS(apply_proxy_gradients(bank, {{9, Vec(6, 0.0)}}, 0.1), UnknownProxyId);
  CHECK_THROWS_AS(apply_proxy_gradients(bank, {{1, Vec(3, 0.0)}}, 0.1), DimensionMismatch);
}

TEST_CASE("proxy checkpoint round trip") {
  const ProxyBank bank = init_proxies(tax421(), 5, 21);
  write_proxies("prox_rt.dymp", bank);
  const Matrix back = read_proxy_weights("prox_rt.dymp");
  CHECK(back == bank.weights);
}

TEST_CASE("proxy sets for per-scale baselines") {
  const ProxySet set = init_proxy_set(1, {0, 1}, 8, 3);
  CHECK(set.size() == 2);
  CHECK(set.row_of(1) == 1);
  CHECK(set.row_of(5) == -1);
  ProxySet mut = set;
  std::map<int, Vec> g{{0, Vec(8, 0.25)}};
  apply_proxy_set_gradients(mut, g, 0.3);
  for (int c = 0; c < 8; ++c) CHECK(mut.weights(1, c) == set.weights(1, c));
  CHECK(std::abs(norm2(mut.weights.row(0), 8) - 1.0) < 1e-9);
}
