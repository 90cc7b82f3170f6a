#include "olla/embedding.hpp"

#include <cctype>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "olla/http.hpp"
#include "olla/rng.hpp"

namespace olla {

std::vector<RecordId> neighbors_above(const EmbeddingMatrix& matrix, std::span<const RecordId> candidate_ids,
                                      std::span<const EmbeddingVector> anchors, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorKind::parameter, "gamma must lie in [0, 1]");
  std::vector<RecordId> out;
  if (anchors.empty()) return out;
  const auto d = static_cast<Eigen::Index>(matrix.dim());
  Eigen::MatrixXd unit_anchors(d, static_cast<Eigen::Index>(anchors.size()));
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (anchors[a].size() != d) throw Error(ErrorKind::consistency, "anchor dimension mismatch");
    const double norm = anchors[a].norm();
    if (norm == 0.0) throw Error(ErrorKind::undefined_similarity, "zero anchor vector");
    unit_anchors.col(static_cast<Eigen::Index>(a)) = anchors[a] / norm;
  }
  for (RecordId id : candidate_ids) {
    if (id >= matrix.rows()) throw Error(ErrorKind::parameter, "candidate id out of range");
    const auto row = matrix.row(id);
    const double norm = row.norm();
    if (norm == 0.0) throw Error(ErrorKind::undefined_similarity, "zero embedding for record " + std::to_string(id));
    const double best = (row * unit_anchors).maxCoeff() / norm;
    if (best > gamma) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SyntheticEmbedder::SyntheticEmbedder(std::size_t dim, std::uint64_t seed, double noise_scale)
    : dim_(dim), seed_(seed), noise_scale_(noise_scale) {
  if (dim < 2) throw Error(ErrorKind::parameter, "embedding dimension must be at least 2");
  if (!(noise_scale >= 0.0)) throw Error(ErrorKind::parameter, "noise scale must be non-negative");
}

EmbeddingVector SyntheticEmbedder::direction(const std::string& token) const {
  std::mt19937_64 rng(derive_seed(seed_, hash_string(token)));
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingVector v(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v.normalized();
}

namespace {

std::string strip_token(const std::string& raw) {
  std::size_t b = 0, e = raw.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(raw[b])) && raw[b] != '#') ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string out = raw.substr(b, e - b);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

EmbeddingVector SyntheticEmbedder::embed_one(const std::string& text) const {
  EmbeddingVector base = EmbeddingVector::Zero(static_cast<Eigen::Index>(dim_));
  EmbeddingVector words = EmbeddingVector::Zero(static_cast<Eigen::Index>(dim_));
  bool marked = false;
  std::istringstream in(text);
  std::string raw;
  while (in >> raw) {
    const std::string token = strip_token(raw);
    if (token.size() > 1 && token.front() == '#') {
      base += direction(token.substr(1));
      marked = true;
    } else if (!token.empty() && !marked) {
      words += direction(token);
    }
  }
  if (!marked) base = words;
  if (base.norm() == 0.0) base = direction("");
  base.normalize();

  std::mt19937_64 rng(derive_seed(seed_ ^ 0x5eedULL, hash_string(text)));
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingVector noise(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = normal(rng);
  EmbeddingVector out = base + noise_scale_ * noise.normalized();
  return out.normalized();
}

std::vector<EmbeddingVector> SyntheticEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

RemoteEmbedderConfig RemoteEmbedderConfig::from_env() {
  RemoteEmbedderConfig c;
  if (const char* v = std::getenv("OLLA_EMBED_URL")) c.url = v;
  if (const char* v = std::getenv("OLLA_EMBED_MODEL")) c.model = v;
  if (const char* v = std::getenv("OLLA_EMBED_KEY")) c.api_key = v;
  return c;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
  http::parse_endpoint(config_.url);
  if (config_.batch_size == 0) throw Error(ErrorKind::parameter, "embedding batch size must be positive");
}

std::vector<EmbeddingVector> RemoteEmbedder::embed(std::span<const std::string> texts) {
  const auto endpoint = http::parse_endpoint(config_.url);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += config_.batch_size) {
    const auto chunk = texts.subspan(start, std::min(config_.batch_size, texts.size() - start));
    nlohmann::json request = {{"input", std::vector<std::string>(chunk.begin(), chunk.end())},
                              {"model", config_.model}};
    const std::string body = request.dump();
    http::Response response;
    auto backoff = config_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
      response = http::post_json(endpoint, body, config_.api_key, config_.timeout);
      if (response.ok() || !response.transient() || attempt >= config_.max_retries) break;
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    if (!response.ok()) {
      throw Error(ErrorKind::transport, "embedding request for texts " + std::to_string(start) + ".." +
                                            std::to_string(start + chunk.size() - 1) + " failed: status " +
                                            std::to_string(response.status) + " " + response.error);
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(response.body);
      const auto& data = parsed.at("data");
      if (!data.is_array() || data.size() != chunk.size()) {
        throw Error(ErrorKind::consistency, "embedding response has " + std::to_string(data.size()) +
                                                " vectors for " + std::to_string(chunk.size()) + " texts");
      }
      for (const auto& item : data) {
        const auto values = item.at("embedding").get<std::vector<double>>();
        std::size_t expected = dim_.load();
        if (expected == 0) {
          dim_.compare_exchange_strong(expected, values.size());
          expected = dim_.load();
        }
        if (values.size() != expected || values.empty()) {
          throw Error(ErrorKind::consistency, "embedding dimension changed from " + std::to_string(expected) +
                                                  " to " + std::to_string(values.size()));
        }
        out.push_back(Eigen::Map<const EmbeddingVector>(values.data(), static_cast<Eigen::Index>(values.size())));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::transport, std::string("malformed embedding response: ") + e.what());
    }
  }
  return out;
}

EmbeddingMatrix embed_corpus(const Corpus& corpus, Embedder& embedder) {
  const std::size_t n = corpus.n_rows();
  const std::size_t batch = std::max<std::size_t>(1, embedder.batch_size());
  EmbeddingMatrix::Matrix rows;
  std::vector<std::string> texts;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    texts.clear();
    for (std::size_t i = start; i < end; ++i) texts.push_back(corpus.records[i].text);
    std::vector<EmbeddingVector> vectors;
    try {
      vectors = embedder.embed(texts);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::transport) {
        throw Error(ErrorKind::transport, "while embedding record " + std::to_string(corpus.records[start].id) +
                                              ": " + e.what());
      }
      throw;
    }
    if (vectors.size() != end - start) throw Error(ErrorKind::consistency, "embedder returned wrong vector count");
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (rows.size() == 0) rows.resize(static_cast<Eigen::Index>(n), vectors[i].size());
      if (vectors[i].size() != rows.cols()) {
        throw Error(ErrorKind::consistency, "dimension mismatch at record " + std::to_string(start + i));
      }
      rows.row(static_cast<Eigen::Index>(start + i)) = vectors[i].transpose();
    }
  }
  return EmbeddingMatrix(std::move(rows));
}

}  // namespace olla
