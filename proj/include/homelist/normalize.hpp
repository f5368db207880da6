#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "homelist/error.hpp"
#include "homelist/levels.hpp"
#include "homelist/listing_model.hpp"

namespace homelist {

inline constexpr double kEarthRadiusM = 6371008.8;

/// Great-circle (haversine) distance in meters.
inline double geo_distance_m(const GeoPoint& p, const GeoPoint& q) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (q.lat - p.lat) * rad;
  const double dlon = (q.lon - p.lon) * rad;
  const double s1 = std::sin(dlat / 2);
  const double s2 = std::sin(dlon / 2);
  const double h = s1 * s1 + std::cos(p.lat * rad) * std::cos(q.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Edit distance divided by the longer length; 0 when both strings are empty.
inline double levenshtein_norm(std::string_view s, std::string_view t) {
  const std::size_t n = s.size(), m = t.size();
  if (n == 0 && m == 0) return 0.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

struct EmbeddingVector {
  std::vector<double> values;
  std::string provider;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// 1 - cos(a, b), in [0, 2]. A zero vector on either side gives 1.
inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw ValidationError("embedding dimension mismatch: " + std::to_string(a.dimension()) +
                          " vs " + std::to_string(b.dimension()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

/// Lowercase word tokens: maximal runs of ASCII alphanumerics or non-ASCII
/// bytes (so UTF-8 accented words stay whole).
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  // `ad_id` lets providers backed by precomputed vectors look the ad up.
  virtual EmbeddingVector embed(std::string_view ad_id, std::string_view text) const = 0;
};

/// Default provider: hashed bag of lowercase word tokens, each bucket
/// weighted 1 + log(count). Deterministic for a given (dimension, seed).
class HashedTokenEmbedding final : public EmbeddingProvider {
public:
  explicit HashedTokenEmbedding(std::size_t dimension = 256, std::uint64_t seed = 17)
      : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
  }

  std::string name() const override { return "hashed-tokens"; }
  std::size_t dimension() const override { return dimension_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t bucket(std::string_view token) const {
    return static_cast<std::size_t>(fnv1a64(token, seed_) % dimension_);
  }

  EmbeddingVector embed(std::string_view, std::string_view text) const override {
    std::map<std::string, int> counts;
    for (auto& tok : word_tokens(text)) ++counts[tok];
    EmbeddingVector v{std::vector<double>(dimension_, 0.0), name()};
    for (const auto& [tok, n] : counts) {
      v.values[bucket(tok)] += 1.0 + std::log(static_cast<double>(n));
    }
    return v;
  }

private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// Vectors computed elsewhere (e.g. a paragraph-embedding model), keyed by
/// ad id. Ads without a stored vector fall back to `fallback` when given,
/// otherwise to the zero vector.
class ExternalEmbeddings final : public EmbeddingProvider {
public:
  explicit ExternalEmbeddings(std::size_t dimension,
                              std::shared_ptr<const EmbeddingProvider> fallback = nullptr)
      : dimension_(dimension), fallback_(std::move(fallback)) {
    if (fallback_ && fallback_->dimension() != dimension_) {
      throw ValidationError("fallback embedding dimension differs from external vectors");
    }
  }

  // Rows "id,v1,...,vN"; a header row starting with "id" is skipped.
  static ExternalEmbeddings load(const std::string& path,
                                 std::shared_ptr<const EmbeddingProvider> fallback = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embedding file " + path);
    std::unordered_map<std::string, std::vector<double>> rows;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line.rfind("id,", 0) == 0) continue;
      std::stringstream ss(line);
      std::string cell, id;
      std::getline(ss, id, ',');
      std::vector<double> v;
      while (std::getline(ss, cell, ',')) {
        auto x = detail::to_double(cell);
        if (!x) throw ParseError(path + ":" + std::to_string(line_no) + ": malformed value");
        v.push_back(*x);
      }
      if (dim == 0) dim = v.size();
      if (v.size() != dim || dim == 0) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": inconsistent dimension");
      }
      rows[id] = std::move(v);
    }
    ExternalEmbeddings e(dim, std::move(fallback));
    e.vectors_ = std::move(rows);
    return e;
  }

  void add(std::string id, std::vector<double> v) {
    if (v.size() != dimension_) throw ValidationError("embedding dimension mismatch for " + id);
    vectors_[std::move(id)] = std::move(v);
  }

  std::string name() const override { return "external"; }
  std::size_t dimension() const override { return dimension_; }

  EmbeddingVector embed(std::string_view ad_id, std::string_view text) const override {
    if (auto it = vectors_.find(std::string(ad_id)); it != vectors_.end()) {
      return {it->second, name()};
    }
    if (fallback_) return fallback_->embed(ad_id, text);
    return {std::vector<double>(dimension_, 0.0), name()};
  }

private:
  std::size_t dimension_;
  std::shared_ptr<const EmbeddingProvider> fallback_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

inline EmbeddingVector embed_description(std::string_view text, const EmbeddingProvider& provider,
                                         std::string_view ad_id = {}) {
  return provider.embed(ad_id, text);
}

}  // namespace homelist
