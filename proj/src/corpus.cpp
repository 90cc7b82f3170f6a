#include "olla/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "olla/error.hpp"

namespace olla {

namespace {

using ordered_json = nlohmann::ordered_json;

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

// RFC-4180 reader. Returns false at end of input. `line` tracks the physical
// line on which the returned row started.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields, std::size_t& row_line) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    row_line = line_;
    std::string field;
    bool quoted = false;
    bool at_field_start = true;
    for (;; c = in_.get()) {
      if (quoted) {
        if (c == EOF) throw RowError(row_line, "unterminated quoted field");
        if (c == '"') {
          if (in_.peek() == '"') {
            field.push_back('"');
            in_.get();
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == EOF || c == '\n' || c == '\r') {
        if (c == '\r' && in_.peek() == '\n') in_.get();
        if (c != EOF) ++line_;
        fields.push_back(std::move(field));
        return true;
      }
      if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        at_field_start = true;
        continue;
      }
      if (c == '"' && at_field_start) {
        quoted = true;
        at_field_start = false;
        continue;
      }
      if (c == '"') throw RowError(row_line, "stray quote in unquoted field");
      at_field_start = false;
      field.push_back(static_cast<char>(c));
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

ColumnType infer_csv_type(const std::vector<std::vector<std::string>>& rows, std::size_t col) {
  bool any = false;
  bool all_numeric = true;
  bool all_boolean = true;
  for (const auto& row : rows) {
    const auto& cell = row[col];
    if (cell.empty()) continue;
    any = true;
    if (!parse_number(cell)) all_numeric = false;
    if (cell != "true" && cell != "false") all_boolean = false;
  }
  if (!any) return ColumnType::category;
  if (all_numeric) return ColumnType::numeric;
  if (all_boolean) return ColumnType::boolean;
  return ColumnType::category;
}

Scalar csv_cell(const std::string& cell, ColumnType type) {
  if (cell.empty()) return std::monostate{};
  switch (type) {
    case ColumnType::numeric: return *parse_number(cell);
    case ColumnType::boolean: return cell == "true";
    case ColumnType::category: return cell;
  }
  return cell;
}

Corpus load_csv(std::istream& in, const LoadOptions& options) {
  CsvReader reader(in);
  std::vector<std::string> header;
  std::size_t line = 0;
  if (!reader.next(header, line) || (header.size() == 1 && header[0].empty())) {
    throw Error(ErrorKind::schema, "empty file");
  }
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto text_col = find(options.text_column);
  if (!text_col) throw Error(ErrorKind::schema, "missing text column '" + options.text_column + "'");
  std::optional<std::size_t> label_col, value_col;
  if (options.truth_label_column) {
    label_col = find(*options.truth_label_column);
    if (!label_col) throw Error(ErrorKind::schema, "missing truth column '" + *options.truth_label_column + "'");
  }
  if (options.truth_value_column) {
    value_col = find(*options.truth_value_column);
    if (!value_col) throw Error(ErrorKind::schema, "missing truth column '" + *options.truth_value_column + "'");
  }
  {
    std::set<std::string> seen;
    for (const auto& h : header) {
      if (!seen.insert(h).second) throw Error(ErrorKind::schema, "duplicate column '" + h + "'");
    }
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;
  std::vector<std::string> fields;
  while (reader.next(fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != header.size()) {
      throw RowError(line, "expected " + std::to_string(header.size()) + " fields, found " +
                               std::to_string(fields.size()));
    }
    if (fields[*text_col].empty()) throw RowError(line, "empty text");
    rows.push_back(fields);
    lines.push_back(line);
  }
  if (rows.empty()) throw Error(ErrorKind::schema, "no data rows");

  Corpus corpus;
  std::vector<std::size_t> structured_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == *text_col || c == label_col || c == value_col) continue;
    structured_cols.push_back(c);
    corpus.schema.push_back({header[c], infer_csv_type(rows, c)});
  }
  corpus.records.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Record rec;
    rec.id = r;
    rec.text = rows[r][*text_col];
    for (std::size_t i = 0; i < structured_cols.size(); ++i) {
      rec.structured[corpus.schema[i].name] = csv_cell(rows[r][structured_cols[i]], corpus.schema[i].type);
    }
    if (label_col && !rows[r][*label_col].empty()) rec.truth_label = rows[r][*label_col];
    if (value_col && !rows[r][*value_col].empty()) {
      auto v = parse_number(rows[r][*value_col]);
      if (!v) throw RowError(lines[r], "truth value is not a number");
      rec.truth_value = *v;
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

std::optional<ColumnType> json_type(const ordered_json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_boolean()) return ColumnType::boolean;
  if (v.is_number()) return ColumnType::numeric;
  return ColumnType::category;
}

Corpus load_jsonl(std::istream& in, const LoadOptions& options) {
  Corpus corpus;
  std::map<std::string, std::optional<ColumnType>> types;
  std::vector<std::string> order;
  std::string text;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json row;
    try {
      row = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw RowError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!row.is_object()) throw RowError(line_no, "row is not a JSON object");
    if (first) {
      if (!row.contains(options.text_column)) {
        throw Error(ErrorKind::schema, "missing text column '" + options.text_column + "'");
      }
      for (auto it = row.begin(); it != row.end(); ++it) {
        if (it.key() == options.text_column || it.key() == options.truth_label_column ||
            it.key() == options.truth_value_column) {
          continue;
        }
        order.push_back(it.key());
        types[it.key()] = std::nullopt;
      }
      first = false;
    }
    auto text_it = row.find(options.text_column);
    if (text_it == row.end()) throw RowError(line_no, "missing text column '" + options.text_column + "'");
    if (!text_it->is_string() || text_it->get<std::string>().empty()) {
      throw RowError(line_no, "text must be a non-empty string");
    }
    Record rec;
    rec.id = corpus.records.size();
    rec.text = text_it->get<std::string>();
    for (auto it = row.begin(); it != row.end(); ++it) {
      const auto& key = it.key();
      const auto& v = it.value();
      if (key == options.text_column) continue;
      if (key == options.truth_label_column) {
        if (v.is_null()) continue;
        if (!v.is_string()) throw RowError(line_no, "truth label must be a string");
        rec.truth_label = v.get<std::string>();
        continue;
      }
      if (key == options.truth_value_column) {
        if (v.is_null()) continue;
        if (!v.is_number()) throw RowError(line_no, "truth value must be a number");
        rec.truth_value = v.get<double>();
        continue;
      }
      auto t = types.find(key);
      if (t == types.end()) throw RowError(line_no, "unexpected column '" + key + "'");
      if (v.is_object() || v.is_array()) throw RowError(line_no, "column '" + key + "' is not a scalar");
      auto vt = json_type(v);
      if (vt) {
        if (t->second && *t->second != *vt) throw RowError(line_no, "column '" + key + "' changes type");
        t->second = vt;
      }
      Scalar cell;
      if (v.is_boolean()) cell = v.get<bool>();
      else if (v.is_number()) cell = v.get<double>();
      else if (v.is_string()) cell = v.get<std::string>();
      rec.structured[key] = std::move(cell);
    }
    for (const auto& key : order) rec.structured.try_emplace(key, std::monostate{});
    corpus.records.push_back(std::move(rec));
  }
  if (first) throw Error(ErrorKind::schema, "empty file");
  if (options.truth_label_column || options.truth_value_column) {
    // truth columns must exist somewhere in the file
    bool label_seen = !options.truth_label_column;
    bool value_seen = !options.truth_value_column;
    for (const auto& r : corpus.records) {
      label_seen = label_seen || r.truth_label.has_value();
      value_seen = value_seen || r.truth_value.has_value();
    }
    if (!label_seen) throw Error(ErrorKind::schema, "missing truth column '" + *options.truth_label_column + "'");
    if (!value_seen) throw Error(ErrorKind::schema, "missing truth column '" + *options.truth_value_column + "'");
  }
  for (const auto& key : order) {
    corpus.schema.push_back({key, types[key].value_or(ColumnType::category)});
  }
  return corpus;
}

std::string cell_text(const Scalar& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return "";
        else if constexpr (std::is_same_v<T, double>) return format_number(v);
        else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
        else return v;
      },
      s);
}

ordered_json cell_json(const Scalar& s) {
  return std::visit(
      [](const auto& v) -> ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return nullptr;
        else return v;
      },
      s);
}

void check_weights(const std::vector<double>& weights, std::size_t k) {
  if (weights.size() != k) throw Error(ErrorKind::parameter, "category_weights length must equal k_categories");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorKind::parameter, "category weight outside [0, 1]");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::parameter, "category weights must sum to 1");
}

std::size_t pick(const std::vector<double>& cumulative, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * cumulative.back());
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

constexpr std::array<const char*, 24> kFiller = {
    "report", "update", "brief",  "summary", "story",  "review", "notes",  "digest",
    "item",   "memo",   "column", "feature", "letter", "entry",  "record", "bulletin",
    "daily",  "weekly", "recent", "local",   "short",  "long",   "early",  "late"};

std::string synthetic_text(std::size_t id, const std::string& topic, const std::string* slant,
                           std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nwords(3, 6);
  std::uniform_int_distribution<std::size_t> word(0, kFiller.size() - 1);
  std::ostringstream out;
  out << "Record " << id << " is a note about #" << topic << ":";
  const std::size_t count = nwords(rng);
  for (std::size_t i = 0; i < count; ++i) out << ' ' << kFiller[word(rng)];
  out << '.';
  if (slant) out << " It has a #" << *slant << "-slant.";
  return out.str();
}

}  // namespace

std::optional<double> Record::numeric(const std::string& column) const {
  auto it = structured.find(column);
  if (it == structured.end()) return std::nullopt;
  if (const double* d = std::get_if<double>(&it->second)) return *d;
  return std::nullopt;
}

bool Corpus::has_column(const std::string& name) const { return column(name) != nullptr; }

const ColumnDescriptor* Corpus::column(const std::string& name) const {
  for (const auto& c : schema) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

CorpusFormat parse_format(const std::string& name) {
  if (name == "csv") return CorpusFormat::csv;
  if (name == "jsonl") return CorpusFormat::jsonl;
  throw Error(ErrorKind::parameter, "unknown corpus format '" + name + "'");
}

CorpusFormat format_from_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson") return CorpusFormat::jsonl;
  return CorpusFormat::csv;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::schema, "cannot open corpus file " + path.string());
  Corpus corpus = format == CorpusFormat::csv ? load_csv(in, options) : load_jsonl(in, options);
  validate_corpus(corpus);
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::parameter, "cannot write " + path.string());
  bool has_label = false, has_value = false;
  for (const auto& r : corpus.records) {
    has_label = has_label || r.truth_label.has_value();
    has_value = has_value || r.truth_value.has_value();
  }
  if (format == CorpusFormat::csv) {
    out << "text";
    for (const auto& c : corpus.schema) out << ',' << csv_escape(c.name);
    if (has_label) out << ',' << kTruthLabelColumn;
    if (has_value) out << ',' << kTruthValueColumn;
    out << '\n';
    for (const auto& r : corpus.records) {
      out << csv_escape(r.text);
      for (const auto& c : corpus.schema) {
        auto it = r.structured.find(c.name);
        out << ',' << (it == r.structured.end() ? std::string() : csv_escape(cell_text(it->second)));
      }
      if (has_label) out << ',' << (r.truth_label ? csv_escape(*r.truth_label) : std::string());
      if (has_value) out << ',' << (r.truth_value ? format_number(*r.truth_value) : std::string());
      out << '\n';
    }
    return;
  }
  for (const auto& r : corpus.records) {
    ordered_json row;
    row["text"] = r.text;
    for (const auto& c : corpus.schema) {
      auto it = r.structured.find(c.name);
      row[c.name] = it == r.structured.end() ? ordered_json(nullptr) : cell_json(it->second);
    }
    if (has_label) row[kTruthLabelColumn] = r.truth_label ? ordered_json(*r.truth_label) : ordered_json(nullptr);
    if (has_value) row[kTruthValueColumn] = r.truth_value ? ordered_json(*r.truth_value) : ordered_json(nullptr);
    out << row.dump() << '\n';
  }
}

void validate_corpus(const Corpus& corpus) {
  if (corpus.records.empty()) throw Error(ErrorKind::schema, "corpus has no rows");
  std::set<RecordId> ids;
  for (const auto& r : corpus.records) {
    if (!ids.insert(r.id).second) throw Error(ErrorKind::schema, "duplicate record id " + std::to_string(r.id));
    if (r.text.empty()) throw Error(ErrorKind::schema, "record " + std::to_string(r.id) + " has empty text");
    if (r.structured.size() != corpus.schema.size()) {
      throw Error(ErrorKind::schema, "record " + std::to_string(r.id) + " has a different column set");
    }
    for (const auto& c : corpus.schema) {
      if (!r.structured.contains(c.name)) {
        throw Error(ErrorKind::schema, "record " + std::to_string(r.id) + " lacks column '" + c.name + "'");
      }
    }
  }
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (corpus.records[i].id != i) throw Error(ErrorKind::schema, "record ids must be dense and ordered");
  }
}

std::string synthetic_category_name(std::size_t k) {
  static constexpr std::array<const char*, 10> names = {"business", "sports", "tech",   "politics", "health",
                                                        "science",  "travel", "food",   "music",    "film"};
  if (k < names.size()) return names[k];
  return "cat" + std::to_string(k);
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0) throw Error(ErrorKind::parameter, "n must be positive");
  if (spec.k_categories == 0) throw Error(ErrorKind::parameter, "k_categories must be positive");
  check_weights(spec.category_weights, spec.k_categories);
  if (spec.value_means.size() != spec.k_categories) {
    throw Error(ErrorKind::parameter, "value_means length must equal k_categories");
  }
  if (!(spec.value_stddev >= 0.0)) throw Error(ErrorKind::parameter, "value_stddev must be non-negative");
  if (!(spec.contamination >= 0.0 && spec.contamination <= 1.0)) {
    throw Error(ErrorKind::parameter, "contamination outside [0, 1]");
  }
  if (spec.contamination > 0.0 && spec.k_categories < 2) {
    throw Error(ErrorKind::parameter, "contamination needs at least two categories");
  }

  std::vector<double> cumulative(spec.k_categories);
  double acc = 0.0;
  for (std::size_t k = 0; k < spec.k_categories; ++k) cumulative[k] = (acc += spec.category_weights[k]);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Corpus corpus;
  corpus.schema.push_back({"value", ColumnType::numeric});
  corpus.records.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t label = pick(cumulative, unit(rng));
    std::size_t topic = label;
    if (spec.contamination > 0.0 && unit(rng) < spec.contamination) {
      std::uniform_int_distribution<std::size_t> other(0, spec.k_categories - 2);
      topic = other(rng);
      if (topic >= label) ++topic;
    }
    const std::string label_name = synthetic_category_name(label);
    Record rec;
    rec.id = i;
    rec.text = synthetic_text(i, synthetic_category_name(topic), topic != label ? &label_name : nullptr, rng);
    const double value = spec.value_means[label] + spec.value_stddev * noise(rng);
    rec.structured["value"] = value;
    rec.truth_label = label_name;
    rec.truth_value = value;
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

Corpus generate_synthetic(std::size_t n, std::size_t k_categories, const std::vector<double>& category_weights,
                          const std::vector<double>& value_means, double value_stddev, std::uint64_t seed) {
  return generate_synthetic(SyntheticSpec{n, k_categories, category_weights, value_means, value_stddev, seed, 0.0});
}

Corpus generate_topic_mixture(const MixtureSpec& spec) {
  if (spec.n == 0) throw Error(ErrorKind::parameter, "n must be positive");
  if (spec.topics.empty()) throw Error(ErrorKind::parameter, "at least one topic required");
  std::vector<double> topic_cum;
  std::vector<std::vector<std::string>> labels(spec.topics.size());
  std::vector<std::vector<double>> label_cum(spec.topics.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < spec.topics.size(); ++t) {
    const auto& topic = spec.topics[t];
    if (!(topic.weight > 0.0)) throw Error(ErrorKind::parameter, "topic weights must be positive");
    topic_cum.push_back(acc += topic.weight);
    double lacc = 0.0;
    for (const auto& [label, w] : topic.label_weights) {
      if (!(w >= 0.0)) throw Error(ErrorKind::parameter, "label weights must be non-negative");
      if (!spec.value_means.contains(label)) throw Error(ErrorKind::parameter, "no value mean for label '" + label + "'");
      labels[t].push_back(label);
      label_cum[t].push_back(lacc += w);
    }
    if (!(lacc > 0.0)) throw Error(ErrorKind::parameter, "topic '" + topic.name + "' has no label mass");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Corpus corpus;
  corpus.schema.push_back({"value", ColumnType::numeric});
  corpus.records.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t t = pick(topic_cum, unit(rng));
    const std::string& label = labels[t][pick(label_cum[t], unit(rng))];
    const auto& topic = spec.topics[t];
    const bool slanted = topic.slant && label != topic.name;
    Record rec;
    rec.id = i;
    rec.text = synthetic_text(i, topic.name, slanted ? &label : nullptr, rng);
    const double value = spec.value_means.at(label) + spec.value_stddev * noise(rng);
    rec.structured["value"] = value;
    rec.truth_label = label;
    rec.truth_value = value;
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace olla
