#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "olla/stratify.hpp"

using namespace olla;

namespace {

EmbeddingVector vec2(double x, double y) {
  EmbeddingVector v(2);
  v << x, y;
  return v;
}

EmbeddingMatrix matrix_of(const std::vector<std::pair<double, double>>& pts) {
  EmbeddingMatrix::Matrix m(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) << pts[i].first, pts[i].second;
  return EmbeddingMatrix(m);
}

// Sum_k p_k (1 - p_k) computed from scratch.
double brute_heterogeneity(const std::vector<std::size_t>& counts) {
  double m = 0;
  for (auto c : counts) m += static_cast<double>(c);
  if (m == 0) return 0;
  double v = 0;
  for (auto c : counts) v += (c / m) * (1 - c / m);
  return v;
}

std::set<std::vector<RecordId>> member_sets(const Stratification& s) {
  std::set<std::vector<RecordId>> out;
  for (const auto& st : s.strata()) out.insert(st.members);
  return out;
}

}  // namespace

TEST_CASE("initial strata count") {
  auto c = initial_strata_count(1000, 3);
  CHECK(c.h0 == 21);
  CHECK(c.hmax == 42);
  c = initial_strata_count(2, 1);
  CHECK(c.h0 == 1);
  CHECK(c.hmax == 2);
  c = initial_strata_count(15000, 5);
  CHECK(c.h0 == 49);
  CHECK(c.hmax == 98);
  c = initial_strata_count(10, 5);
  CHECK(c.h0 == 10);
  CHECK(c.hmax == 10);
}

TEST_CASE("record_label statistics") {
  Stratification s({"a", "b", "c"}, 10, 1, 2);
  std::vector<RecordId> all(10);
  std::iota(all.begin(), all.end(), 0);
  const auto id = s.add_stratum(all, vec2(1, 0));

  auto st = s.record_label(id, 0, "a");
  CHECK(st.m == 1);
  CHECK(st.counts == std::vector<std::size_t>{1, 0, 0});
  CHECK(st.dominant == s.category("a"));
  CHECK(st.heterogeneity == 0.0);

  s.record_label(id, 1, "a");
  s.record_label(id, 2, "a");
  st = s.record_label(id, 3, "b");
  CHECK(st.heterogeneity == doctest::Approx(0.375));
  CHECK(normalized_variance(st, 3) == doctest::Approx(0.5625));

  CHECK_THROWS_AS(s.record_label(id, 3, "c"), Error);
  try {
    s.record_label(id, 0, "b");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
  s.check_invariants();
}

TEST_CASE("dominant ties go to the lexicographically smaller category") {
  Stratification s({"zeta", "alpha"}, 4, 1, 1);
  const auto id = s.add_stratum({0, 1, 2, 3}, vec2(1, 0));
  s.record_label(id, 0, "zeta");
  s.record_label(id, 1, "alpha");
  CHECK(s.categories()[*s.stratum(id).stats.dominant] == "alpha");
}

TEST_CASE("normalized variance bounds") {
  auto pure = StratumStats::empty(4);
  pure.add(2);
  pure.add(2);
  CHECK(normalized_variance(pure, 4) == 0.0);
  auto uniform = StratumStats::empty(4);
  for (Category k = 0; k < 4; ++k) uniform.add(k);
  CHECK(normalized_variance(uniform, 4) == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalized_variance(pure, 1), Error);
}

TEST_CASE("heterogeneity matches a from-scratch oracle and is order free") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    const std::size_t m = 1 + rng() % 40;
    std::vector<Category> labels(m);
    for (auto& l : labels) l = rng() % k;

    auto forward = StratumStats::empty(k);
    for (auto l : labels) forward.add(l);
    std::shuffle(labels.begin(), labels.end(), rng);
    auto shuffled = StratumStats::empty(k);
    for (auto l : labels) shuffled.add(l);

    CHECK(forward.counts == shuffled.counts);
    CHECK(forward.heterogeneity == shuffled.heterogeneity);
    const double oracle = brute_heterogeneity(forward.counts);
    CHECK(forward.heterogeneity == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(forward.heterogeneity <= 1.0 - 1.0 / k + 1e-15);
    CHECK(normalized_variance(forward, k) == doctest::Approx(oracle / (1.0 - 1.0 / k)).epsilon(1e-12));
  }
}

TEST_CASE("kmeans partition") {
  const auto m = matrix_of({{0, 0}, {0, 0.1}, {10, 0}, {10, 0.1}});
  auto two = kmeans_partition(m, 2, 1);
  CHECK(member_sets(two) == std::set<std::vector<RecordId>>{{0, 1}, {2, 3}});
  two.check_invariants();

  auto one = kmeans_partition(m, 1, 1);
  CHECK(one.H() == 1);
  CHECK(one.strata()[0].members == std::vector<RecordId>{0, 1, 2, 3});

  auto four = kmeans_partition(m, 4, 1);
  CHECK(four.H() == 4);
  for (const auto& s : four.strata()) CHECK(s.size() == 1);

  CHECK_THROWS_AS(kmeans_partition(m, 5, 1), Error);
  CHECK(member_sets(kmeans_partition(m, 2, 77)) == member_sets(kmeans_partition(m, 2, 77)));
}

TEST_CASE("kmeans repairs empty clusters") {
  // Many duplicates make empty clusters likely; the count must stay exact.
  std::vector<std::pair<double, double>> pts(20, {1, 1});
  pts.push_back({5, 5});
  pts.push_back({-5, 5});
  const auto m = matrix_of(pts);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = kmeans_partition(m, 5, seed);
    CHECK(s.H() == 5);
    s.check_invariants();
  }
}

TEST_CASE("split plan moves the separable records") {
  // Stratum of 10: records 0..6 near (1,0) labelled a, records 7..9 near (0,1) labelled b.
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 7; ++i) pts.push_back({1, 0.01 * i});
  for (int i = 0; i < 3; ++i) pts.push_back({0.01 * i, 1});
  const auto m = matrix_of(pts);
  Stratification s({"a", "b"}, 10, 1, 2);
  std::vector<RecordId> all(10);
  std::iota(all.begin(), all.end(), 0);
  const auto id = s.add_stratum(all, vec2(0.7, 0.3));
  s.record_label(id, 0, "a");
  s.record_label(id, 1, "a");
  s.record_label(id, 7, "b");

  auto pure_plan = plan_adjustment(s, id, 1.0, 0.8, m);
  CHECK(pure_plan.kind == AdjustmentPlan::Kind::none);

  auto plan = plan_adjustment(s, id, 0.3, 0.8, m);
  REQUIRE(plan.kind == AdjustmentPlan::Kind::split);
  CHECK(plan.non_dominant == std::vector<RecordId>{7});
  CHECK(plan.similar == std::vector<RecordId>{8, 9});
  CHECK(plan.records == std::vector<RecordId>{7, 8, 9});

  apply_adjustment(s, plan, m);
  s.check_invariants();
  CHECK(s.H() == 2);
  CHECK(s.stratum(id).size() == 7);
  const auto& fresh = s.strata().back();
  CHECK(fresh.members == std::vector<RecordId>{7, 8, 9});
  CHECK(fresh.stats.counts == std::vector<std::size_t>{0, 1});
  CHECK(s.stratum(id).stats.counts == std::vector<std::size_t>{2, 0});

  // The plan was built against an older version.
  CHECK_THROWS_AS(apply_adjustment(s, plan, m), Error);
}

TEST_CASE("pure stratum gives no plan") {
  const auto m = matrix_of({{1, 0}, {1, 0.1}, {1, 0.2}});
  Stratification s({"a", "b"}, 3, 1, 2);
  const auto id = s.add_stratum({0, 1, 2}, vec2(1, 0));
  s.record_label(id, 0, "a");
  s.record_label(id, 1, "a");
  CHECK(plan_adjustment(s, id, 0.0, 0.8, m).kind == AdjustmentPlan::Kind::none);
}

TEST_CASE("merge at Hmax goes to the most similar stratum with a matching dominant label") {
  // Source stratum 0 holds a-records plus b-records near (0,1).
  // Stratum 1: dominant b, centroid at cosine 0.9 to (0,1). Stratum 2: dominant b, cosine 0.4.
  const double s9 = std::sqrt(1 - 0.81), s4 = std::sqrt(1 - 0.16);
  const auto m = matrix_of({{1, 0}, {1, 0.05}, {0, 1}, {0.02, 1},  // source
                            {s9, 0.9}, {s9, 0.9},                  // target one
                            {s4, 0.4}, {s4, 0.4}});                // target two
  Stratification s({"a", "b"}, 8, 3, 3);
  const auto src = s.add_stratum({0, 1, 2, 3}, vec2(0.5, 0.5));
  const auto one = s.add_stratum({4, 5}, vec2(s9, 0.9));
  const auto two = s.add_stratum({6, 7}, vec2(s4, 0.4));
  s.record_label(src, 0, "a");
  s.record_label(src, 1, "a");
  s.record_label(src, 2, "b");
  s.record_label(one, 4, "b");
  s.record_label(two, 6, "b");

  auto plan = plan_adjustment(s, src, 0.3, 0.95, m);
  REQUIRE(plan.kind == AdjustmentPlan::Kind::merge);
  CHECK(plan.target == one);
  CHECK_FALSE(plan.fallback);
  CHECK(plan.records == std::vector<RecordId>{2, 3});

  apply_adjustment(s, plan, m);
  s.check_invariants();
  CHECK(s.H() == 3);
  CHECK(s.stratum(one).members == std::vector<RecordId>{2, 3, 4, 5});
  CHECK(s.stratum(one).stats.counts == std::vector<std::size_t>{0, 2});
}

TEST_CASE("merge falls back to the most similar stratum when no dominant label matches") {
  const auto m = matrix_of({{1, 0}, {1, 0.05}, {0, 1}, {0.1, 1}, {0.9, 0.1}});
  Stratification s({"a", "b"}, 5, 2, 2);
  const auto src = s.add_stratum({0, 1, 2}, vec2(0.7, 0.3));
  const auto other = s.add_stratum({3, 4}, vec2(0.5, 0.5));
  s.record_label(src, 0, "a");
  s.record_label(src, 1, "a");
  s.record_label(src, 2, "b");
  s.record_label(other, 4, "a");
  auto plan = plan_adjustment(s, src, 0.3, 0.99, m);
  REQUIRE(plan.kind == AdjustmentPlan::Kind::merge);
  CHECK(plan.fallback);
  CHECK(plan.target == other);
}

TEST_CASE("a source emptied by its own plan is deleted") {
  const auto m = matrix_of({{0, 1}, {0, 1}, {1, 0}});
  Stratification s({"a", "b"}, 3, 2, 2);
  const auto src = s.add_stratum({0, 1}, vec2(0, 1));
  const auto dst = s.add_stratum({2}, vec2(1, 0));
  s.record_label(src, 0, "a");
  s.record_label(src, 1, "b");
  s.record_label(dst, 2, "a");
  // Dominant of src is a (tie to the smaller name), so record 1 moves; record 0 stays.
  auto plan = plan_adjustment(s, src, 0.3, 0.8, m);
  REQUIRE(plan.kind == AdjustmentPlan::Kind::merge);
  apply_adjustment(s, plan, m);
  s.check_invariants();
  CHECK(s.H() == 2);

  AdjustmentPlan all;
  all.kind = AdjustmentPlan::Kind::merge;
  all.source = src;
  all.target = dst;
  all.records = s.stratum(src).members;
  all.version = s.version();
  apply_adjustment(s, all, m);
  s.check_invariants();
  CHECK(s.H() == 1);
  CHECK_FALSE(s.contains(src));
}

TEST_CASE("fuzzed adjustment sequences keep every invariant") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  const std::size_t n = 120;
  EmbeddingMatrix::Matrix raw(n, 4);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = g(rng);
  const auto m = normalize_rows(EmbeddingMatrix(raw));
  auto s = kmeans_partition(m, 4, 3, PartitionSetup{{"a", "b", "c"}, 9});

  std::size_t ops = 0;
  while (ops < 1000) {
    const auto& strata = s.strata();
    const auto& pick = strata[rng() % strata.size()];
    const auto open = s.unsampled(pick.id);
    if (!open.empty() && rng() % 2 == 0) {
      s.record_label(pick.id, open[rng() % open.size()], static_cast<Category>(rng() % 3));
    } else {
      const double theta = (rng() % 100) / 100.0;
      const double gamma = (rng() % 100) / 100.0;
      auto plan = plan_adjustment(s, pick.id, theta, gamma, m);
      if (plan.kind != AdjustmentPlan::Kind::none) apply_adjustment(s, plan, m);
    }
    ++ops;
    s.check_invariants();
    REQUIRE(s.H() <= s.hmax());
    for (const auto& st : s.strata()) {
      REQUIRE(st.stats.heterogeneity >= 0.0);
      REQUIRE(st.stats.heterogeneity <= 1.0 - 1.0 / 3 + 1e-12);
    }
    if (s.total_remaining() == 0) break;
  }
  CHECK(ops >= 200);
}

TEST_CASE("snapshot json lists every stratum") {
  const auto m = matrix_of({{0, 0.1}, {0, 0.2}, {10, 0}, {10, 0.1}});
  auto s = kmeans_partition(m, 2, 1, PartitionSetup{{"a", "b"}, 0});
  auto j = snapshot_json(s);
  REQUIRE(j.contains("strata"));
  CHECK(j["strata"].size() == 2);
}
