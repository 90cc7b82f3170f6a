#include "olla/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "olla/rng.hpp"

namespace olla {

StratumStats StratumStats::empty(std::size_t k) {
  StratumStats s;
  s.counts.assign(k, 0);
  return s;
}

double StratumStats::proportion(Category k) const {
  if (m == 0) throw Error(ErrorKind::parameter, "proportion of an unsampled stratum");
  return static_cast<double>(counts.at(k)) / static_cast<double>(m);
}

void StratumStats::add(Category k) {
  ++counts.at(k);
  refresh();
}

void StratumStats::remove(Category k) {
  if (counts.at(k) == 0) throw Error(ErrorKind::state, "removing a label the stratum does not hold");
  --counts[k];
  refresh();
}

void StratumStats::refresh() {
  m = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  dominant.reset();
  for (Category k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0 && (!dominant || counts[k] > counts[*dominant])) dominant = k;
  }
  heterogeneity = heterogeneity_of(counts);
}

double heterogeneity_of(const std::vector<std::size_t>& counts) {
  const auto m = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (m == 0) return 0.0;
  double v = 0.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(m);
    v += p * (1.0 - p);
  }
  const double bound = 1.0 - 1.0 / static_cast<double>(counts.size());
  return std::clamp(v, 0.0, bound);
}

double normalized_variance(const StratumStats& stats, std::size_t k) {
  if (k < 2) throw Error(ErrorKind::parameter, "normalized variance needs at least two categories");
  if (stats.m == 0) throw Error(ErrorKind::parameter, "normalized variance of an unsampled stratum");
  return std::clamp(stats.heterogeneity / (1.0 - 1.0 / static_cast<double>(k)), 0.0, 1.0);
}

StrataCount initial_strata_count(std::size_t n, std::size_t k) {
  if (n < 2) throw Error(ErrorKind::parameter, "initial strata count needs N >= 2");
  if (k < 1) throw Error(ErrorKind::parameter, "initial strata count needs K >= 1");
  const double raw = std::ceil(static_cast<double>(k) * std::log(static_cast<double>(n)));
  std::size_t h0 = std::max(k, static_cast<std::size_t>(raw));
  h0 = std::min(h0, n);
  return {h0, std::min(2 * h0, n)};
}

namespace {

using RowMatrix = EmbeddingMatrix::Matrix;

// Squared distance of every point to every center (n x h).
Eigen::MatrixXd squared_distances(const RowMatrix& x, const Eigen::MatrixXd& centers) {
  Eigen::MatrixXd d = -2.0 * (x * centers.transpose());
  d.colwise() += x.rowwise().squaredNorm();
  d.rowwise() += centers.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

Eigen::MatrixXd plus_plus_init(const RowMatrix& x, std::size_t h, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(h), x.cols());
  std::vector<bool> chosen(n, false);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  chosen[pick] = true;
  centers.row(0) = x.row(static_cast<Eigen::Index>(pick));
  Eigen::VectorXd best = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < h; ++c) {
    const double total = best.sum();
    if (total > 0.0) {
      double target = unit(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= best[static_cast<Eigen::Index>(i)];
        if (target < 0.0 && best[static_cast<Eigen::Index>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // every remaining point coincides with a center; take an unchosen one
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> any(0, free.size() - 1);
      pick = free[any(rng)];
    }
    chosen[pick] = true;
    centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    best = best.cwiseMin((x.rowwise() - centers.row(static_cast<Eigen::Index>(c))).rowwise().squaredNorm());
  }
  return centers;
}

struct LloydState {
  std::vector<std::size_t> assignment;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
};

void assign(const RowMatrix& x, LloydState& s, Eigen::VectorXd& dist) {
  const Eigen::MatrixXd d = squared_distances(x, s.centers);
  const auto n = static_cast<std::size_t>(x.rows());
  s.assignment.resize(n);
  dist.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    d.row(static_cast<Eigen::Index>(i)).minCoeff(&best);
    s.assignment[i] = static_cast<std::size_t>(best);
    dist[static_cast<Eigen::Index>(i)] = d(static_cast<Eigen::Index>(i), best);
  }
}

void repair_empty(const RowMatrix& x, LloydState& s, Eigen::VectorXd& dist) {
  const auto h = static_cast<std::size_t>(s.centers.rows());
  std::vector<std::size_t> counts(h, 0);
  for (auto a : s.assignment) ++counts[a];
  for (std::size_t c = 0; c < h; ++c) {
    if (counts[c] > 0) continue;
    std::optional<std::size_t> far;
    for (std::size_t i = 0; i < s.assignment.size(); ++i) {
      if (counts[s.assignment[i]] < 2) continue;
      if (!far || dist[static_cast<Eigen::Index>(i)] > dist[static_cast<Eigen::Index>(*far)]) far = i;
    }
    if (!far) throw Error(ErrorKind::state, "cannot repair empty cluster");
    --counts[s.assignment[*far]];
    s.assignment[*far] = c;
    counts[c] = 1;
    dist[static_cast<Eigen::Index>(*far)] = 0.0;
    s.centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(*far));
  }
}

void update_centers(const RowMatrix& x, LloydState& s) {
  s.centers.setZero();
  std::vector<std::size_t> counts(static_cast<std::size_t>(s.centers.rows()), 0);
  for (std::size_t i = 0; i < s.assignment.size(); ++i) {
    s.centers.row(static_cast<Eigen::Index>(s.assignment[i])) += x.row(static_cast<Eigen::Index>(i));
    ++counts[s.assignment[i]];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    s.centers.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  }
}

double safe_cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.norm() == 0.0 || b.norm() == 0.0) return -2.0;
  return cosine_similarity(a, b);
}

void insert_sorted(std::vector<RecordId>& v, RecordId id) { v.insert(std::lower_bound(v.begin(), v.end(), id), id); }

}  // namespace

KMeansResult kmeans(const EmbeddingMatrix::Matrix& points, std::size_t clusters, std::uint64_t seed, int restarts,
                    int max_iterations) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (clusters == 0) throw Error(ErrorKind::parameter, "k-means needs at least one cluster");
  if (clusters > n) {
    throw Error(ErrorKind::parameter, "cannot form " + std::to_string(clusters) + " strata from " +
                                          std::to_string(n) + " records");
  }
  std::optional<LloydState> best;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    LloydState s;
    s.centers = plus_plus_init(points, clusters, rng);
    Eigen::VectorXd dist;
    std::vector<std::size_t> previous;
    for (int it = 0; it < max_iterations; ++it) {
      assign(points, s, dist);
      repair_empty(points, s, dist);
      update_centers(points, s);
      if (s.assignment == previous) break;
      previous = s.assignment;
    }
    s.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s.inertia += (points.row(static_cast<Eigen::Index>(i)) - s.centers.row(static_cast<Eigen::Index>(s.assignment[i])))
                       .squaredNorm();
    }
    if (!best || s.inertia < best->inertia) best = std::move(s);
  }

  // Canonical cluster order: by smallest member index.
  std::vector<std::size_t> order(clusters, n);
  for (std::size_t i = 0; i < n; ++i) order[best->assignment[i]] = std::min(order[best->assignment[i]], i);
  std::vector<std::size_t> rank(clusters);
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return order[a] < order[b]; });
  std::vector<std::size_t> relabel(clusters);
  for (std::size_t r = 0; r < clusters; ++r) relabel[rank[r]] = r;

  KMeansResult out;
  out.inertia = best->inertia;
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.assignment[i] = relabel[best->assignment[i]];
  out.centroids.resize(static_cast<Eigen::Index>(clusters), points.cols());
  for (std::size_t c = 0; c < clusters; ++c) {
    out.centroids.row(static_cast<Eigen::Index>(relabel[c])) = best->centers.row(static_cast<Eigen::Index>(c));
  }
  return out;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& matrix) {
  EmbeddingMatrix::Matrix rows = matrix.data();
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm > 0.0) rows.row(i) /= norm;
  }
  return EmbeddingMatrix(std::move(rows));
}

const char* to_string(AdjustmentPlan::Kind kind) {
  switch (kind) {
    case AdjustmentPlan::Kind::none: return "none";
    case AdjustmentPlan::Kind::split: return "split";
    case AdjustmentPlan::Kind::merge: return "merge";
  }
  return "none";
}

Stratification::Stratification(std::vector<std::string> categories, std::size_t n_records, std::size_t h0,
                               std::size_t hmax)
    : categories_(std::move(categories)),
      owner_(n_records),
      label_(n_records),
      consumed_(n_records, false),
      h0_(h0),
      hmax_(hmax) {
  std::sort(categories_.begin(), categories_.end());
  if (std::adjacent_find(categories_.begin(), categories_.end()) != categories_.end()) {
    throw Error(ErrorKind::parameter, "duplicate category name");
  }
  if (h0 > hmax) throw Error(ErrorKind::parameter, "H0 must not exceed Hmax");
}

StratumId Stratification::add_stratum(std::vector<RecordId> members, EmbeddingVector centroid) {
  if (members.empty()) throw Error(ErrorKind::parameter, "a stratum needs at least one member");
  if (strata_.size() >= hmax_) throw Error(ErrorKind::state, "stratum count would exceed Hmax");
  std::sort(members.begin(), members.end());
  if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
    throw Error(ErrorKind::parameter, "duplicate stratum member");
  }
  Stratum s;
  s.id = next_id_++;
  for (RecordId r : members) {
    if (r >= owner_.size()) throw Error(ErrorKind::parameter, "member id out of range");
    if (owner_[r]) throw Error(ErrorKind::state, "record " + std::to_string(r) + " already belongs to a stratum");
    owner_[r] = s.id;
    if (label_[r]) {
      s.sampled.push_back(r);
    }
  }
  s.stats = StratumStats::empty(K());
  for (RecordId r : s.sampled) s.stats.add(*label_[r]);
  s.members = std::move(members);
  s.centroid = std::move(centroid);
  strata_.push_back(std::move(s));
  ++version_;
  return strata_.back().id;
}

std::size_t Stratification::index_of(StratumId id) const {
  for (std::size_t i = 0; i < strata_.size(); ++i) {
    if (strata_[i].id == id) return i;
  }
  throw Error(ErrorKind::state, "unknown stratum " + std::to_string(id));
}

bool Stratification::contains(StratumId id) const {
  return std::any_of(strata_.begin(), strata_.end(), [&](const Stratum& s) { return s.id == id; });
}

const Stratum& Stratification::stratum(StratumId id) const { return strata_[index_of(id)]; }
Stratum& Stratification::mutable_stratum(StratumId id) { return strata_[index_of(id)]; }

Category Stratification::category(const std::string& name) const {
  auto it = std::lower_bound(categories_.begin(), categories_.end(), name);
  if (it == categories_.end() || *it != name) throw Error(ErrorKind::parameter, "unknown category '" + name + "'");
  return static_cast<Category>(it - categories_.begin());
}

std::optional<StratumId> Stratification::owner(RecordId id) const { return owner_.at(id); }
std::optional<Category> Stratification::label(RecordId id) const { return label_.at(id); }
bool Stratification::consumed(RecordId id) const { return consumed_.at(id); }

std::vector<RecordId> Stratification::unsampled(StratumId id) const {
  const auto& s = stratum(id);
  std::vector<RecordId> out;
  out.reserve(s.members.size() - s.sampled.size());
  for (RecordId r : s.members) {
    if (!consumed_[r]) out.push_back(r);
  }
  return out;
}

std::size_t Stratification::remaining(StratumId id) const {
  const auto& s = stratum(id);
  return static_cast<std::size_t>(
      std::count_if(s.members.begin(), s.members.end(), [&](RecordId r) { return !consumed_[r]; }));
}

std::size_t Stratification::total_remaining() const {
  std::size_t owned = 0;
  for (const auto& s : strata_) owned += s.members.size();
  std::size_t consumed_owned = 0;
  for (const auto& s : strata_) {
    for (RecordId r : s.members) consumed_owned += consumed_[r] ? 1 : 0;
  }
  return owned - consumed_owned;
}

const StratumStats& Stratification::record_label(StratumId id, RecordId record, Category label) {
  auto& s = mutable_stratum(id);
  if (record >= owner_.size() || owner_[record] != id) {
    throw Error(ErrorKind::state, "record " + std::to_string(record) + " is not a member of stratum " +
                                      std::to_string(id));
  }
  if (consumed_[record]) throw Error(ErrorKind::state, "record " + std::to_string(record) + " already recorded");
  if (label >= K()) throw Error(ErrorKind::parameter, "category index out of range");
  consumed_[record] = true;
  ++consumed_count_;
  label_[record] = label;
  insert_sorted(s.sampled, record);
  s.stats.add(label);
  ++version_;
  return s.stats;
}

const StratumStats& Stratification::record_label(StratumId id, RecordId record, const std::string& label) {
  return record_label(id, record, category(label));
}

void Stratification::record_invalid(StratumId id, RecordId record) {
  stratum(id);
  if (record >= owner_.size() || owner_[record] != id) {
    throw Error(ErrorKind::state, "record " + std::to_string(record) + " is not a member of stratum " +
                                      std::to_string(id));
  }
  if (consumed_[record]) throw Error(ErrorKind::state, "record " + std::to_string(record) + " already recorded");
  consumed_[record] = true;
  ++consumed_count_;
  ++version_;
}

void Stratification::move_records(Stratum& from, Stratum& to, const std::vector<RecordId>& records) {
  std::vector<RecordId> kept;
  kept.reserve(from.members.size());
  std::set_difference(from.members.begin(), from.members.end(), records.begin(), records.end(),
                      std::back_inserter(kept));
  if (kept.size() + records.size() != from.members.size()) {
    throw Error(ErrorKind::state, "plan moves records outside the source stratum");
  }
  from.members = std::move(kept);
  for (RecordId r : records) {
    owner_[r] = to.id;
    if (label_[r]) {
      from.stats.remove(*label_[r]);
      to.stats.add(*label_[r]);
      from.sampled.erase(std::lower_bound(from.sampled.begin(), from.sampled.end(), r));
      insert_sorted(to.sampled, r);
    }
  }
  std::vector<RecordId> merged;
  merged.reserve(to.members.size() + records.size());
  std::merge(to.members.begin(), to.members.end(), records.begin(), records.end(), std::back_inserter(merged));
  to.members = std::move(merged);
}

void Stratification::check_invariants() const {
  std::vector<int> seen(owner_.size(), 0);
  if (strata_.size() > hmax_) throw Error(ErrorKind::state, "H exceeds Hmax");
  for (const auto& s : strata_) {
    if (s.members.empty()) throw Error(ErrorKind::state, "empty stratum " + std::to_string(s.id));
    if (!std::is_sorted(s.members.begin(), s.members.end())) throw Error(ErrorKind::state, "unsorted members");
    auto expected = StratumStats::empty(K());
    std::vector<RecordId> sampled;
    for (RecordId r : s.members) {
      if (++seen[r] > 1) throw Error(ErrorKind::state, "record " + std::to_string(r) + " in two strata");
      if (owner_[r] != s.id) throw Error(ErrorKind::state, "owner table out of sync");
      if (label_[r]) {
        expected.add(*label_[r]);
        sampled.push_back(r);
      }
    }
    if (sampled != s.sampled) throw Error(ErrorKind::state, "sampled set out of sync");
    if (!(expected == s.stats)) throw Error(ErrorKind::state, "stratum statistics out of sync");
    const double bound = K() > 0 ? 1.0 - 1.0 / static_cast<double>(K()) : 0.0;
    if (s.stats.heterogeneity < 0.0 || s.stats.heterogeneity > bound) {
      throw Error(ErrorKind::state, "heterogeneity out of bounds");
    }
  }
  for (std::size_t r = 0; r < seen.size(); ++r) {
    if (seen[r] != 1) throw Error(ErrorKind::state, "record " + std::to_string(r) + " not covered");
  }
}

Stratification kmeans_partition(const EmbeddingMatrix& matrix, std::size_t h, std::uint64_t seed,
                                const PartitionSetup& setup) {
  const auto result = kmeans(matrix.data(), h, seed);
  Stratification strat(setup.categories, matrix.rows(), h, setup.hmax == 0 ? h : setup.hmax);
  std::vector<std::vector<RecordId>> members(h);
  for (std::size_t i = 0; i < result.assignment.size(); ++i) members[result.assignment[i]].push_back(i);
  for (std::size_t c = 0; c < h; ++c) {
    EmbeddingVector centroid = mean_rows(matrix, std::span<const RecordId>(members[c]));
    strat.add_stratum(std::move(members[c]), std::move(centroid));
  }
  return strat;
}

Stratification single_stratum(const EmbeddingMatrix& matrix, const PartitionSetup& setup) {
  if (matrix.rows() == 0) throw Error(ErrorKind::parameter, "empty embedding matrix");
  Stratification strat(setup.categories, matrix.rows(), 1, std::max<std::size_t>(1, setup.hmax));
  std::vector<RecordId> all(matrix.rows());
  std::iota(all.begin(), all.end(), 0);
  EmbeddingVector centroid = mean_rows(matrix, std::span<const RecordId>(all));
  strat.add_stratum(std::move(all), std::move(centroid));
  return strat;
}

AdjustmentPlan plan_adjustment(const Stratification& strat, StratumId id, double theta, double gamma,
                               const EmbeddingMatrix& matrix) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorKind::parameter, "theta must lie in [0, 1]");
  AdjustmentPlan plan;
  plan.source = id;
  plan.version = strat.version();
  const auto& s = strat.stratum(id);
  if (strat.K() < 2 || s.stats.m == 0) return plan;
  if (normalized_variance(s.stats, strat.K()) <= theta) return plan;

  const Category dominant = *s.stats.dominant;
  std::vector<std::size_t> counts(strat.K(), 0);
  std::vector<EmbeddingVector> anchors;
  for (RecordId r : s.sampled) {
    const Category label = *strat.label(r);
    if (label == dominant) continue;
    plan.non_dominant.push_back(r);
    anchors.emplace_back(matrix.row(r).transpose());
    ++counts[label];
  }
  if (plan.non_dominant.empty()) return plan;

  const auto candidates = strat.unsampled(id);
  plan.similar = neighbors_above(matrix, candidates, anchors, gamma);
  std::set_union(plan.non_dominant.begin(), plan.non_dominant.end(), plan.similar.begin(), plan.similar.end(),
                 std::back_inserter(plan.records));
  plan.records_dominant = static_cast<Category>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  if (strat.H() < strat.hmax()) {
    plan.kind = AdjustmentPlan::Kind::split;
    return plan;
  }

  const EmbeddingVector sep_mean = mean_rows(matrix, std::span<const RecordId>(plan.records));
  auto best_target = [&](bool match_dominant) -> std::optional<StratumId> {
    std::optional<StratumId> best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const auto& other : strat.strata()) {
      if (other.id == id) continue;
      if (match_dominant && other.stats.dominant != plan.records_dominant) continue;
      const double sim = safe_cosine(sep_mean, other.centroid);
      if (sim > best_sim) {
        best_sim = sim;
        best = other.id;
      }
    }
    return best;
  };
  plan.target = best_target(true);
  if (!plan.target) {
    plan.target = best_target(false);
    plan.fallback = true;
  }
  if (!plan.target) {
    plan.records.clear();
    plan.fallback = false;
    return plan;  // nowhere to merge
  }
  plan.kind = AdjustmentPlan::Kind::merge;
  return plan;
}

void apply_adjustment(Stratification& strat, const AdjustmentPlan& plan, const EmbeddingMatrix& matrix) {
  if (plan.version != strat.version()) throw Error(ErrorKind::state, "stale adjustment plan");
  if (plan.kind == AdjustmentPlan::Kind::none) return;
  if (plan.records.empty()) throw Error(ErrorKind::state, "adjustment plan moves no records");
  if (!std::is_sorted(plan.records.begin(), plan.records.end())) {
    throw Error(ErrorKind::state, "adjustment plan records must be sorted");
  }

  const std::size_t source_index = strat.index_of(plan.source);
  std::size_t target_index = 0;
  if (plan.kind == AdjustmentPlan::Kind::split) {
    if (strat.H() >= strat.hmax()) throw Error(ErrorKind::state, "split would exceed Hmax");
    Stratum fresh;
    fresh.id = strat.next_id_++;
    fresh.stats = StratumStats::empty(strat.K());
    strat.strata_.push_back(std::move(fresh));
    target_index = strat.strata_.size() - 1;
  } else {
    if (!plan.target || *plan.target == plan.source) throw Error(ErrorKind::state, "merge plan lacks a target");
    target_index = strat.index_of(*plan.target);
  }

  auto& from = strat.strata_[source_index];
  auto& to = strat.strata_[target_index];
  strat.move_records(from, to, plan.records);
  to.centroid = mean_rows(matrix, std::span<const RecordId>(to.members));
  if (from.members.empty()) {
    strat.strata_.erase(strat.strata_.begin() + static_cast<std::ptrdiff_t>(source_index));
  } else {
    from.centroid = mean_rows(matrix, std::span<const RecordId>(from.members));
  }
  ++strat.version_;
}

nlohmann::ordered_json snapshot_json(const Stratification& strat) {
  nlohmann::ordered_json j;
  j["H"] = strat.H();
  j["H0"] = strat.h0();
  j["Hmax"] = strat.hmax();
  j["K"] = strat.K();
  j["categories"] = strat.categories();
  auto strata = nlohmann::ordered_json::array();
  for (const auto& s : strat.strata()) {
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (Category k = 0; k < strat.K(); ++k) counts[strat.categories()[k]] = s.stats.counts[k];
    nlohmann::ordered_json stats;
    stats["m"] = s.stats.m;
    stats["counts"] = counts;
    stats["dominant"] = s.stats.dominant ? nlohmann::ordered_json(strat.categories()[*s.stats.dominant])
                                         : nlohmann::ordered_json(nullptr);
    stats["heterogeneity"] = s.stats.heterogeneity;
    strata.push_back({{"id", s.id}, {"members", s.members}, {"sampled", s.sampled}, {"stats", stats}});
  }
  j["strata"] = std::move(strata);
  return j;
}

nlohmann::ordered_json plan_json(const AdjustmentPlan& plan) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(plan.kind);
  j["source"] = plan.source;
  j["target"] = plan.target ? nlohmann::ordered_json(*plan.target) : nlohmann::ordered_json(nullptr);
  j["non_dominant"] = plan.non_dominant.size();
  j["similar"] = plan.similar.size();
  j["records"] = plan.records;
  j["fallback"] = plan.fallback;
  return j;
}

}  // namespace olla
