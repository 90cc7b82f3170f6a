#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "olla/sample.hpp"

using namespace olla;

namespace {

EmbeddingVector origin() { return EmbeddingVector::Zero(2); }

// Strata of the given sizes over consecutive ids.
Stratification strata_of(const std::vector<std::size_t>& sizes, std::vector<std::string> cats = {"a", "b", "c"}) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  Stratification s(std::move(cats), n, sizes.size(), sizes.size());
  RecordId next = 0;
  for (auto size : sizes) {
    std::vector<RecordId> members(size);
    std::iota(members.begin(), members.end(), next);
    next += size;
    s.add_stratum(members, origin());
  }
  return s;
}

void label_first(Stratification& s, StratumId id, const std::vector<std::string>& labels) {
  const auto open = s.unsampled(id);
  for (std::size_t i = 0; i < labels.size(); ++i) s.record_label(id, open[i], labels[i]);
}

// Textbook largest remainder without caps: floors, then the largest fractional
// parts, ties to the lower index.
std::vector<std::size_t> hamilton(const std::vector<double>& w, std::size_t n) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::size_t> out(w.size());
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t used = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double q = n * w[i] / total;
    out[i] = static_cast<std::size_t>(q);
    used += out[i];
    frac.push_back({q - out[i], i});
  }
  std::sort(frac.begin(), frac.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t j = 0; used < n; ++j, ++used) ++out[frac[j].second];
  return out;
}

}  // namespace

TEST_CASE("proportional allocation examples") {
  auto s = strata_of({100, 100});
  CHECK(proportional_allocation(s, 30).counts == std::vector<std::size_t>{15, 15});
  s = strata_of({100, 200});
  CHECK(proportional_allocation(s, 30).counts == std::vector<std::size_t>{10, 20});
  s = strata_of({1, 999});
  const auto a = proportional_allocation(s, 10);
  CHECK(a.total() == 10);
  CHECK(a.counts[0] <= 1);
  CHECK_THROWS_AS(proportional_allocation(s, 0), Error);
}

TEST_CASE("proportional allocation matches largest remainder when nothing is capped") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::size_t> sizes(1 + rng() % 8);
    std::vector<double> w;
    std::size_t total = 0;
    for (auto& z : sizes) {
      z = 1 + rng() % 60;
      total += z;
      w.push_back(static_cast<double>(z));
    }
    const std::size_t n = 1 + rng() % total;
    const auto expect = hamilton(w, n);
    bool capped = false;
    for (std::size_t i = 0; i < sizes.size(); ++i) capped = capped || expect[i] > sizes[i];
    if (capped) continue;
    CHECK(proportional_allocation(strata_of(sizes), n).counts == expect);
  }
}

TEST_CASE("allocations fill n exactly whenever capacity allows and respect caps") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::size_t> sizes(1 + rng() % 6);
    for (auto& z : sizes) z = 1 + rng() % 30;
    auto s = strata_of(sizes);
    for (const auto& st : s.strata()) {
      const std::size_t take = rng() % (st.size() + 1);
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < take; ++i) labels.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
      label_first(s, st.id, labels);
    }
    if (s.total_remaining() == 0) continue;
    const std::size_t n = 1 + rng() % (2 * s.total_remaining());
    for (const auto& a : {proportional_allocation(s, n), neyman_allocation(s, n)}) {
      CHECK(a.total() == std::min(n, s.total_remaining()));
      for (std::size_t i = 0; i < a.strata.size(); ++i) CHECK(a.counts[i] <= s.remaining(a.strata[i]));
    }
  }
}

TEST_CASE("neyman allocation examples") {
  // Heterogeneities 11/72 and 44/72: square roots in ratio 1:2, so weights (100, 400).
  auto s = strata_of({100, 200});
  label_first(s, 0, {"b", "c", "c", "c", "c", "c", "c", "c", "c", "c", "c", "c"});
  label_first(s, 1, {"a", "b", "b", "c", "c", "c"});
  CHECK(s.stratum(1).stats.heterogeneity == doctest::Approx(4 * s.stratum(0).stats.heterogeneity));
  CHECK(neyman_allocation(s, 30).counts == std::vector<std::size_t>{6, 24});

  // Weights (30, 120) from the same rule.
  const std::vector<double> w{100 * 0.3, 200 * 0.6};
  const std::vector<std::size_t> caps{100, 200};
  CHECK(apportion(w, 30, caps) == std::vector<std::size_t>{6, 24});

  // A zero-variance stratum keeps a one-sample floor.
  s = strata_of({50, 50});
  label_first(s, 0, {"a", "a"});
  label_first(s, 1, {"a", "b"});
  CHECK(neyman_allocation(s, 10).counts == std::vector<std::size_t>{1, 9});

  // Equal sizes and variances split evenly.
  s = strata_of({40, 40});
  label_first(s, 0, {"a", "b"});
  label_first(s, 1, {"b", "c"});
  CHECK(neyman_allocation(s, 10).counts == std::vector<std::size_t>{5, 5});

  // All pure: falls back to proportional.
  s = strata_of({30, 60});
  label_first(s, 0, {"a"});
  label_first(s, 1, {"b"});
  CHECK(neyman_allocation(s, 9).counts == proportional_allocation(s, 9).counts);
}

TEST_CASE("neyman matches the weighted oracle on random instances") {
  std::mt19937_64 rng(3);
  std::size_t checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<std::size_t> sizes(2 + rng() % 5);
    for (auto& z : sizes) z = 40 + rng() % 100;
    auto s = strata_of(sizes);
    std::vector<double> w;
    bool any_zero = false;
    for (const auto& st : s.strata()) {
      std::vector<std::string> labels;
      const std::size_t m = 2 + rng() % 8;
      for (std::size_t i = 0; i < m; ++i) labels.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
      label_first(s, st.id, labels);
      const auto& c = s.stratum(st.id).stats.counts;
      double v = 0;
      for (auto x : c) v += (double(x) / m) * (1 - double(x) / m);
      any_zero = any_zero || v == 0;
      w.push_back(st.size() * std::sqrt(v));
    }
    if (any_zero) continue;
    const std::size_t n = 1 + rng() % 30;
    CHECK(neyman_allocation(s, n).counts == hamilton(w, n));
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("draw") {
  auto s = strata_of({1, 10});
  Allocation a{{0, 1}, {1, 4}, 0};
  const auto d = draw(s, a, 5);
  REQUIRE(d.size() == 5);
  CHECK(d[0] == Draw{0, 0});
  std::set<RecordId> ids;
  for (const auto& x : d) {
    ids.insert(x.record);
    CHECK(s.owner(x.record) == x.stratum);
  }
  CHECK(ids.size() == 5);
  CHECK(draw(s, a, 5) == d);
  CHECK(draw(s, a, 6) != d);

  Allocation too_many{{0, 1}, {2, 0}, 0};
  try {
    draw(s, too_many, 1);
    FAIL("expected exhaustion");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::exhaustion);
    CHECK(std::string(e.what()).find("stratum 0") != std::string::npos);
  }
}

TEST_CASE("repeated draws never revisit a record") {
  auto s = strata_of({25, 40, 35});
  std::set<RecordId> seen;
  std::uint64_t t = 0;
  while (s.total_remaining() > 0) {
    const auto a = t == 0 ? proportional_allocation(s, 7) : neyman_allocation(s, 7, t);
    for (const auto& d : draw(s, a, 100 + t)) {
      CHECK(seen.insert(d.record).second);
      s.record_label(d.stratum, d.record, std::string(1, static_cast<char>('a' + d.record % 3)));
    }
    ++t;
  }
  CHECK(seen.size() == 100);
  CHECK_THROWS_AS(proportional_allocation(s, 1), Error);
}

TEST_CASE("probe valid rates") {
  auto s = strata_of({20, 20, 20}, {"false", "true"});
  // Stratum 0: ids 0..19 all match; stratum 1: none; stratum 2: ids 40..42 match.
  auto truth = [](RecordId r) { return r < 20 || (r >= 40 && r < 43); };
  FilterLabelFn label = [&](const std::vector<Draw>& ds) {
    std::vector<std::optional<bool>> out;
    for (const auto& d : ds) out.push_back(truth(d.record));
    return out;
  };
  auto p = probe_valid_rates(s, 30, label, 9);
  CHECK(p.probe_size == std::vector<std::size_t>{10, 10, 10});
  CHECK(p.valid_rate[0] == 1.0);
  CHECK(p.valid_rate[1] == 0.0);
  std::size_t hits = 0;
  for (const auto& d : p.probed) hits += d.stratum == 2 && truth(d.record);
  CHECK(p.valid_rate[2] == doctest::Approx(hits / 10.0));
  CHECK(p.order().front() == 0);
  CHECK(p.order().back() == 1);
  CHECK(s.total_consumed() == 30);
  s.check_invariants();
}

TEST_CASE("probe allocation gives every stratum one probe first") {
  auto s = strata_of({2, 50, 48}, {"false", "true"});
  FilterLabelFn none = [](const std::vector<Draw>& ds) { return std::vector<std::optional<bool>>(ds.size(), false); };
  auto p = probe_valid_rates(s, 10, none, 1);
  CHECK(std::accumulate(p.probe_size.begin(), p.probe_size.end(), std::size_t{0}) == 10);
  for (auto m : p.probe_size) CHECK(m >= 1);
  // Ties in the valid rate rank by stratum id.
  CHECK(p.rank == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("invalid probe replies are consumed but not labelled") {
  auto s = strata_of({5, 5}, {"false", "true"});
  FilterLabelFn flaky = [](const std::vector<Draw>& ds) {
    std::vector<std::optional<bool>> out;
    for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(i % 2 ? std::optional<bool>{} : true);
    return out;
  };
  auto p = probe_valid_rates(s, 4, flaky, 2);
  CHECK(s.total_consumed() == 4);
  std::size_t labelled = 0;
  for (const auto& st : s.strata()) labelled += st.stats.m;
  CHECK(labelled == 2);
}

TEST_CASE("priority draw is strict") {
  auto s = strata_of({5, 10}, {"false", "true"});
  FilterPriorities p;
  p.strata = {0, 1};
  p.rank = {1, 2};
  auto d = priority_draw(p, s, 3, 1);
  REQUIRE(d.size() == 3);
  for (const auto& x : d) CHECK(x.stratum == 0);

  // Two left in the top stratum: spill the rest to the next one.
  for (RecordId r = 0; r < 3; ++r) s.record_label(0, r, "true");
  d = priority_draw(p, s, 5, 1);
  REQUIRE(d.size() == 5);
  CHECK(std::count_if(d.begin(), d.end(), [](const Draw& x) { return x.stratum == 0; }) == 2);
  CHECK(std::count_if(d.begin(), d.end(), [](const Draw& x) { return x.stratum == 1; }) == 3);
  CHECK(priority_draw(p, s, 5, 1) == d);

  p.rank = {2, 1};
  d = priority_draw(p, s, 4, 1);
  for (const auto& x : d) CHECK(x.stratum == 1);

  for (RecordId r = 3; r < 15; ++r) s.record_label(r < 5 ? 0 : 1, r, "false");
  CHECK_THROWS_AS(priority_draw(p, s, 1, 1), Error);
}
