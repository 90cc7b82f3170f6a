#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "olla/corpus.hpp"
#include "olla/error.hpp"

namespace olla {

template <typename Scalar>
using EmbeddingVectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using EmbeddingVector = EmbeddingVectorT<double>;

/// Row-per-record embedding table aligned with corpus ordering.
template <typename Scalar>
class EmbeddingMatrixT {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  EmbeddingMatrixT() = default;
  explicit EmbeddingMatrixT(Matrix rows) : rows_(std::move(rows)) {
    if (!rows_.allFinite()) throw Error(ErrorKind::consistency, "embedding contains non-finite values");
  }

  std::size_t rows() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }

  auto row(RecordId id) const { return rows_.row(static_cast<Eigen::Index>(id)); }
  const Matrix& data() const { return rows_; }

 private:
  Matrix rows_;
};

using EmbeddingMatrix = EmbeddingMatrixT<double>;

/// Cosine of the angle between `u` and `v`. Throws on zero vectors.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& u,
                                            const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  if (u.size() != v.size()) throw Error(ErrorKind::consistency, "dimension mismatch");
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) {
    throw Error(ErrorKind::undefined_similarity, "cosine similarity of a zero vector");
  }
  const Scalar c = u.derived().cwiseProduct(v.derived()).sum() / (nu * nv);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
EmbeddingVectorT<Scalar> mean_embedding(std::span<const EmbeddingVectorT<Scalar>> vectors) {
  if (vectors.empty()) throw Error(ErrorKind::parameter, "mean of an empty set");
  EmbeddingVectorT<Scalar> sum = EmbeddingVectorT<Scalar>::Zero(vectors.front().size());
  for (const auto& v : vectors) {
    if (v.size() != sum.size()) throw Error(ErrorKind::consistency, "dimension mismatch");
    sum += v;
  }
  return sum / static_cast<Scalar>(vectors.size());
}

inline EmbeddingVector mean_embedding(const std::vector<EmbeddingVector>& vectors) {
  return mean_embedding<double>(std::span<const EmbeddingVector>(vectors));
}

/// Mean of the matrix rows listed in `ids`.
template <typename Scalar>
EmbeddingVectorT<Scalar> mean_rows(const EmbeddingMatrixT<Scalar>& matrix, std::span<const RecordId> ids) {
  if (ids.empty()) throw Error(ErrorKind::parameter, "mean of an empty set");
  EmbeddingVectorT<Scalar> sum = EmbeddingVectorT<Scalar>::Zero(static_cast<Eigen::Index>(matrix.dim()));
  for (RecordId id : ids) sum += matrix.row(id).transpose();
  return sum / static_cast<Scalar>(ids.size());
}

/// Exact threshold search: every candidate whose cosine similarity to at least
/// one anchor is strictly greater than `gamma`. Result is sorted by id.
std::vector<RecordId> neighbors_above(const EmbeddingMatrix& matrix, std::span<const RecordId> candidate_ids,
                                      std::span<const EmbeddingVector> anchors, double gamma);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  /// Number of texts per request that `embed_corpus` should hand over at once.
  virtual std::size_t batch_size() const { return 1024; }
  /// Must be safe to call concurrently.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// Deterministic stand-in for a sentence-embedding model. Texts carrying
/// `#marker` tokens embed near the sum of the markers' seeded directions, so
/// synthetic categories separate; other texts fall back to a hashed
/// bag-of-words. A per-text seeded perturbation of norm `noise_scale` is added
/// and the result is unit-normalized.
class SyntheticEmbedder final : public Embedder {
 public:
  SyntheticEmbedder(std::size_t dim, std::uint64_t seed, double noise_scale = 0.1);

  std::size_t dim() const override { return dim_; }
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

  EmbeddingVector embed_one(const std::string& text) const;
  EmbeddingVector direction(const std::string& token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  double noise_scale_;
};

struct RemoteEmbedderConfig {
  std::string url;  // full endpoint, e.g. http://localhost:8080/v1/embeddings
  std::string model;
  std::string api_key;
  std::size_t batch_size = 64;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds timeout{30000};

  /// Reads OLLA_EMBED_URL, OLLA_EMBED_MODEL and OLLA_EMBED_KEY.
  static RemoteEmbedderConfig from_env();
};

/// Client for the `{"input": [...], "model": ...}` embeddings wire shape.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);

  std::size_t dim() const override { return dim_; }
  std::size_t batch_size() const override { return config_.batch_size; }
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  RemoteEmbedderConfig config_;
  std::atomic<std::size_t> dim_{0};  // learned from the first response
};

/// One vector per record. Fails without producing a partial matrix.
EmbeddingMatrix embed_corpus(const Corpus& corpus, Embedder& embedder);

}  // namespace olla
