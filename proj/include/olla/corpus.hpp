#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace olla {

using RecordId = std::size_t;

/// Structured cell: null, numeric, category (string) or boolean.
using Scalar = std::variant<std::monostate, double, std::string, bool>;

enum class ColumnType { numeric, category, boolean };

struct ColumnDescriptor {
  std::string name;
  ColumnType type = ColumnType::category;

  bool operator==(const ColumnDescriptor&) const = default;
};

struct Record {
  RecordId id = 0;
  std::string text;
  std::map<std::string, Scalar> structured;
  std::optional<std::string> truth_label;
  std::optional<double> truth_value;

  bool operator==(const Record&) const = default;

  /// Numeric view of a structured column; nullopt for null, missing or non-numeric cells.
  std::optional<double> numeric(const std::string& column) const;
};

struct Corpus {
  std::vector<Record> records;
  std::vector<ColumnDescriptor> schema;  // structured columns only

  std::size_t n_rows() const { return records.size(); }
  bool has_column(const std::string& name) const;
  const ColumnDescriptor* column(const std::string& name) const;

  bool operator==(const Corpus&) const = default;
};

enum class CorpusFormat { csv, jsonl };

CorpusFormat parse_format(const std::string& name);
CorpusFormat format_from_extension(const std::filesystem::path& path);

struct LoadOptions {
  std::string text_column = "text";
  std::optional<std::string> truth_label_column;
  std::optional<std::string> truth_value_column;
};

/// Reads a CSV (RFC-4180, header row) or JSONL (flat objects) corpus.
/// Record ids are assigned densely in file order. Fails fast on the first bad row.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const LoadOptions& options);

/// Writes the corpus so that `load_corpus` with `truth_label`/`truth_value`
/// truth columns reproduces it exactly.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

inline constexpr const char* kTruthLabelColumn = "truth_label";
inline constexpr const char* kTruthValueColumn = "truth_value";

/// Checks the record invariants (unique ids, non-empty text, uniform column set).
void validate_corpus(const Corpus& corpus);

/// Category names used by the synthetic generators.
std::string synthetic_category_name(std::size_t k);

/// Label-first synthetic corpus: each record draws its label from
/// `category_weights` and a structured numeric column "value" from
/// Normal(value_means[label], value_stddev), also kept as `truth_value`. The text carries a `#topic`
/// marker equal to the label, except with probability `contamination` where the
/// topic is another category and the text carries a `#<label>-slant` marker.
struct SyntheticSpec {
  std::size_t n = 0;
  std::size_t k_categories = 0;
  std::vector<double> category_weights;
  std::vector<double> value_means;
  double value_stddev = 1.0;
  std::uint64_t seed = 0;
  double contamination = 0.0;
};

Corpus generate_synthetic(const SyntheticSpec& spec);

Corpus generate_synthetic(std::size_t n, std::size_t k_categories,
                          const std::vector<double>& category_weights,
                          const std::vector<double>& value_means, double value_stddev,
                          std::uint64_t seed);

/// Topic-first synthetic corpus: each record draws an embedding topic, then a
/// label from that topic's label mix. Used to build corpora where a label is
/// concentrated in a few embedding clusters.
struct TopicSpec {
  std::string name;
  double weight = 1.0;
  std::map<std::string, double> label_weights;
  bool slant = false;  // add a `#<label>-slant` marker when the label differs from the topic name
};

struct MixtureSpec {
  std::size_t n = 0;
  std::vector<TopicSpec> topics;
  std::map<std::string, double> value_means;  // per label
  double value_stddev = 1.0;
  std::uint64_t seed = 0;
};

Corpus generate_topic_mixture(const MixtureSpec& spec);

}  // namespace olla
