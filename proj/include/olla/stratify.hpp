#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "olla/embedding.hpp"

namespace olla {

using StratumId = std::size_t;
/// Index into `Stratification::categories()`, which is kept in lexicographic order.
using Category = std::size_t;

/// Per-stratum label tallies and the statistics derived from them.
struct StratumStats {
  std::size_t m = 0;
  std::vector<std::size_t> counts;  // one slot per category
  std::optional<Category> dominant;
  double heterogeneity = 0.0;

  static StratumStats empty(std::size_t k);

  double proportion(Category k) const;
  void add(Category k);
  void remove(Category k);

  bool operator==(const StratumStats&) const = default;

 private:
  void refresh();
};

/// Sum over categories of p(1 - p) for the tallies in `counts`.
double heterogeneity_of(const std::vector<std::size_t>& counts);

/// Heterogeneity scaled by its maximum 1 - 1/K; in [0, 1].
double normalized_variance(const StratumStats& stats, std::size_t k);

struct Stratum {
  StratumId id = 0;
  std::vector<RecordId> members;  // sorted
  std::vector<RecordId> sampled;  // sorted; members with a recorded label
  StratumStats stats;
  EmbeddingVector centroid;

  std::size_t size() const { return members.size(); }
};

struct StrataCount {
  std::size_t h0 = 1;
  std::size_t hmax = 1;
};

/// H0 = max(K, ceil(K ln N)), Hmax = 2 H0, both clamped to at most N.
StrataCount initial_strata_count(std::size_t n, std::size_t k);

struct KMeansResult {
  std::vector<std::size_t> assignment;  // cluster per point, clusters ordered by smallest member
  Eigen::MatrixXd centroids;            // one row per cluster
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding and a few restarts. Empty clusters
/// are reseeded from the point farthest from its centroid, so exactly
/// `clusters` non-empty clusters come back.
KMeansResult kmeans(const EmbeddingMatrix::Matrix& points, std::size_t clusters, std::uint64_t seed,
                    int restarts = 3, int max_iterations = 100);

/// Copy of `matrix` with every non-zero row scaled to unit length.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& matrix);

class Stratification;

struct AdjustmentPlan {
  enum class Kind { none, split, merge };

  Kind kind = Kind::none;
  StratumId source = 0;
  std::optional<StratumId> target;        // merge destination
  std::vector<RecordId> non_dominant;     // sampled members labeled off the dominant category
  std::vector<RecordId> similar;          // unsampled members close to one of them
  std::vector<RecordId> records;          // union of the two, sorted
  std::optional<Category> records_dominant;
  bool fallback = false;                  // merge target chosen without the dominant-category match
  std::uint64_t version = 0;
};

const char* to_string(AdjustmentPlan::Kind kind);

/// Partition of the corpus into strata plus the label history of every record.
/// Owned and mutated by one engine loop; copy to snapshot.
class Stratification {
 public:
  Stratification(std::vector<std::string> categories, std::size_t n_records, std::size_t h0, std::size_t hmax);

  /// Appends a stratum holding `members`; they must not belong to another stratum.
  StratumId add_stratum(std::vector<RecordId> members, EmbeddingVector centroid);

  const std::vector<Stratum>& strata() const { return strata_; }
  const Stratum& stratum(StratumId id) const;
  std::size_t index_of(StratumId id) const;
  bool contains(StratumId id) const;

  std::size_t H() const { return strata_.size(); }
  std::size_t h0() const { return h0_; }
  std::size_t hmax() const { return hmax_; }
  std::size_t K() const { return categories_.size(); }
  std::size_t n_records() const { return owner_.size(); }
  const std::vector<std::string>& categories() const { return categories_; }
  Category category(const std::string& name) const;
  std::uint64_t version() const { return version_; }

  std::optional<StratumId> owner(RecordId id) const;
  std::optional<Category> label(RecordId id) const;
  bool consumed(RecordId id) const;

  /// Members not yet consumed (neither labeled nor rejected), sorted.
  std::vector<RecordId> unsampled(StratumId id) const;
  std::size_t remaining(StratumId id) const;
  std::size_t total_remaining() const;
  std::size_t total_consumed() const { return consumed_count_; }

  const StratumStats& record_label(StratumId id, RecordId record, Category label);
  const StratumStats& record_label(StratumId id, RecordId record, const std::string& label);
  /// Marks a record consumed without a usable label (invalid labeler output).
  void record_invalid(StratumId id, RecordId record);

  /// Throws a state error unless the partition and statistics invariants hold.
  void check_invariants() const;

  friend void apply_adjustment(Stratification& strat, const AdjustmentPlan& plan, const EmbeddingMatrix& matrix);

 private:
  Stratum& mutable_stratum(StratumId id);
  void move_records(Stratum& from, Stratum& to, const std::vector<RecordId>& records);

  std::vector<std::string> categories_;
  std::vector<Stratum> strata_;
  std::vector<std::optional<StratumId>> owner_;
  std::vector<std::optional<Category>> label_;
  std::vector<bool> consumed_;
  std::size_t consumed_count_ = 0;
  std::size_t h0_;
  std::size_t hmax_;
  StratumId next_id_ = 0;
  std::uint64_t version_ = 0;
};

struct PartitionSetup {
  std::vector<std::string> categories;
  std::size_t hmax = 0;  // 0 means equal to the initial count
};

/// K-means over the rows of `matrix` into `h` strata (h0 = h).
Stratification kmeans_partition(const EmbeddingMatrix& matrix, std::size_t h, std::uint64_t seed,
                                const PartitionSetup& setup = {});

/// One stratum holding every record (the simple-random-sampling baseline).
Stratification single_stratum(const EmbeddingMatrix& matrix, const PartitionSetup& setup);

/// Split-or-merge plan for a stratum whose normalized variance exceeds `theta`;
/// a `none` plan otherwise or when there is nothing to move.
AdjustmentPlan plan_adjustment(const Stratification& strat, StratumId id, double theta, double gamma,
                               const EmbeddingMatrix& matrix);

/// Applies a plan produced against the current version of `strat`.
void apply_adjustment(Stratification& strat, const AdjustmentPlan& plan, const EmbeddingMatrix& matrix);

/// Debug/fixture snapshot: strata with member and sampled ids plus statistics.
nlohmann::ordered_json snapshot_json(const Stratification& strat);
nlohmann::ordered_json plan_json(const AdjustmentPlan& plan);

}  // namespace olla
