#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "olla/corpus.hpp"
#include "olla/error.hpp"
#include "olla/query.hpp"

using namespace olla;

namespace {

std::filesystem::path scratch(const std::string& name, const std::string& body) {
  auto dir = std::filesystem::temp_directory_path() / "olla_test_corpus";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::ofstream(path) << body;
  return path;
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::state;
}

Corpus four_rows() {
  Corpus c;
  c.schema = {{"views", ColumnType::numeric}};
  const char* labels[] = {"a", "a", "b", "b"};
  const double views[] = {1, 3, 10, 20};
  for (std::size_t i = 0; i < 4; ++i) {
    Record r;
    r.id = i;
    r.text = "row " + std::to_string(i);
    r.structured["views"] = views[i];
    r.truth_label = labels[i];
    c.records.push_back(r);
  }
  return c;
}

}  // namespace

TEST_CASE("csv with one structured column") {
  auto path = scratch("three.csv", "text,views\nhello,1\n\"quoted, with comma\",2\n\"say \"\"hi\"\"\",3\n");
  auto c = load_corpus(path, CorpusFormat::csv, {});
  CHECK(c.n_rows() == 3);
  REQUIRE(c.schema.size() == 1);
  CHECK(c.schema[0].name == "views");
  CHECK(c.schema[0].type == ColumnType::numeric);
  CHECK(c.records[1].text == "quoted, with comma");
  CHECK(c.records[2].text == "say \"hi\"");
  CHECK(c.records[2].id == 2);
  CHECK(c.records[0].numeric("views") == 1.0);
}

TEST_CASE("empty file and missing text column are schema errors") {
  CHECK(kind_of([] { load_corpus(scratch("empty.csv", ""), CorpusFormat::csv, {}); }) == ErrorKind::schema);
  CHECK(kind_of([] { load_corpus(scratch("notext.csv", "body,x\nhi,1\n"), CorpusFormat::csv, {}); }) ==
        ErrorKind::schema);
}

TEST_CASE("jsonl row missing the text column names its line") {
  auto path = scratch("bad.jsonl", "{\"text\":\"fine\",\"n\":1}\n{\"n\":2}\n");
  try {
    load_corpus(path, CorpusFormat::jsonl, {});
    FAIL("expected a row error");
  } catch (const RowError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("malformed csv row") {
  auto path = scratch("ragged.csv", "text,views\nok,1\nextra,2,3\n");
  try {
    load_corpus(path, CorpusFormat::csv, {});
    FAIL("expected a row error");
  } catch (const RowError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("save then load round-trips") {
  SyntheticSpec spec{200, 3, {0.2, 0.3, 0.5}, {1, 2, 3}, 0.5, 11, 0.1};
  const Corpus c = generate_synthetic(spec);
  LoadOptions opts;
  opts.truth_label_column = kTruthLabelColumn;
  opts.truth_value_column = kTruthValueColumn;
  for (auto format : {CorpusFormat::csv, CorpusFormat::jsonl}) {
    auto path = std::filesystem::temp_directory_path() / "olla_test_corpus" /
                (format == CorpusFormat::csv ? "rt.csv" : "rt.jsonl");
    save_corpus(c, path, format);
    CHECK(load_corpus(path, format, opts) == c);
  }
}

TEST_CASE("synthetic generator") {
  SUBCASE("label proportions follow the weights") {
    const Corpus c = generate_synthetic(1000, 2, {0.5, 0.5}, {0, 1}, 1.0, 7);
    std::size_t first = 0;
    for (const auto& r : c.records) first += *r.truth_label == synthetic_category_name(0);
    CHECK(std::abs(first / 1000.0 - 0.5) <= 0.05);
  }
  SUBCASE("single category") {
    const Corpus c = generate_synthetic(10, 1, {1.0}, {5}, 1.0, 3);
    for (const auto& r : c.records) CHECK(r.truth_label == c.records[0].truth_label);
  }
  SUBCASE("deterministic under seed") {
    CHECK(generate_synthetic(300, 3, {0.2, 0.3, 0.5}, {1, 2, 3}, 1.0, 9) ==
          generate_synthetic(300, 3, {0.2, 0.3, 0.5}, {1, 2, 3}, 1.0, 9));
  }
  SUBCASE("bad weights") {
    CHECK(kind_of([] { generate_synthetic(10, 2, {0.5, 0.6}, {0, 1}, 1.0, 1); }) == ErrorKind::parameter);
    CHECK(kind_of([] { generate_synthetic(10, 2, {1.0}, {0, 1}, 1.0, 1); }) == ErrorKind::parameter);
  }
  SUBCASE("text names the label") {
    const Corpus c = generate_synthetic(50, 4, {0.25, 0.25, 0.25, 0.25}, {0, 1, 2, 3}, 1.0, 5);
    for (const auto& r : c.records) CHECK(r.text.find("#" + *r.truth_label) != std::string::npos);
  }
}

TEST_CASE("ground truth on a hand fixture") {
  const Corpus c = four_rows();
  QuerySpec q;

  q.type = QueryType::groupby;
  q.task.kind = TaskKind::classify;
  q.task.categories = {"a", "b"};
  auto g = ground_truth_aggregate(q, c);
  CHECK(g.values.at("a") == doctest::Approx(0.5));

  q.type = QueryType::where;
  q.aggregate = AggregateKind::avg;
  q.task = {};
  q.task.kind = TaskKind::filter;
  q.task.target = "b";
  q.value_column = "views";
  CHECK(*ground_truth_aggregate(q, c).scalar() == doctest::Approx(15.0));
  q.task.target = "a";
  CHECK(*ground_truth_aggregate(q, c).scalar() == doctest::Approx(2.0));

  Corpus bare = c;
  for (auto& r : bare.records) r.truth_label.reset();
  CHECK(kind_of([&] { ground_truth_aggregate(q, bare); }) == ErrorKind::capability);
}

TEST_CASE("ground truth matches a brute-force reference") {
  const Corpus c = generate_synthetic(SyntheticSpec{500, 4, {0.1, 0.2, 0.3, 0.4}, {1, 2, 3, 4}, 1.0, 21, 0.2});
  std::map<std::string, double> counts;
  double match_sum = 0.0;
  std::size_t match_n = 0;
  double all_sum = 0.0;
  for (const auto& r : c.records) {
    counts[*r.truth_label] += 1;
    all_sum += *r.truth_value;
    if (*r.truth_label == synthetic_category_name(2)) {
      match_sum += *r.numeric("value");
      ++match_n;
    }
  }

  QuerySpec g;
  g.task.kind = TaskKind::classify;
  for (std::size_t k = 0; k < 4; ++k) g.task.categories.push_back(synthetic_category_name(k));
  const auto truth = ground_truth_aggregate(g, c);
  for (const auto& [k, v] : counts) CHECK(truth.values.at(k) == doctest::Approx(v / 500.0).epsilon(1e-12));

  QuerySpec w;
  w.type = QueryType::where;
  w.aggregate = AggregateKind::avg;
  w.task.kind = TaskKind::filter;
  w.task.target = synthetic_category_name(2);
  w.value_column = "value";
  CHECK(*ground_truth_aggregate(w, c).scalar() == doctest::Approx(match_sum / match_n).epsilon(1e-12));

  QuerySpec s;
  s.type = QueryType::select;
  s.aggregate = AggregateKind::avg;
  s.task.kind = TaskKind::extract;
  CHECK(*ground_truth_aggregate(s, c).scalar() == doctest::Approx(all_sum / 500.0).epsilon(1e-12));
}
