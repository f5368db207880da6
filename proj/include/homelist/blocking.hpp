#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "homelist/listing_model.hpp"
#include "homelist/normalize.hpp"
#include "homelist/parallel.hpp"

namespace homelist {

struct BlockingParams {
  double radius_m = 400.0;
  double max_rel_price_gap = 0.25;       // |p1 - p2| / min(p1, p2)
  double max_abs_price_gap = 50'000.0;   // euro
  bool same_city_only = true;
};

/// What blocking needs to know about a record (an ad or a housing unit seen
/// as a pseudo-ad). Views must outlive the call that consumes them.
struct BlockRecord {
  std::string_view id;
  std::string_view agency_id;
  std::string city;
  GeoPoint location;
  double price = 0.0;
  // Pairs are only formed when at least one side is a probe.
  bool probe = true;
};

struct CandidatePair {
  std::size_t a = 0;  // index of the record with the smaller id
  std::size_t b = 0;
  bool same_agency = false;
  double distance_m = 0.0;
  double rel_price_gap = 0.0;
  double abs_price_gap = 0.0;

  bool operator==(const CandidatePair&) const = default;
};

inline bool same_agency(std::string_view a, std::string_view b) {
  return !a.empty() && a == b;
}

/// The price clause of the candidate rule, with strict inequalities.
inline bool price_gap_admissible(double p1, double p2, const BlockingParams& params) {
  const double gap = std::fabs(p1 - p2);
  const double rel = gap / std::min(p1, p2);
  return rel < params.max_rel_price_gap || gap < params.max_abs_price_gap;
}

/// Uniform lat/lon grid whose cells are at least `radius_m` across, so every
/// point within the radius of a query lies in the 3x3 block of cells around
/// the query's cell. The longitude width is sized for the most poleward
/// latitude in the indexed set (plus one row of margin).
class SpatialGrid {
public:
  SpatialGrid(std::span<const GeoPoint> points, double radius_m = 400.0) : radius_m_(radius_m) {
    constexpr double deg = 180.0 / std::numbers::pi;
    dlat_deg_ = radius_m / kEarthRadiusM * deg;
    double max_abs_lat = 0.0;
    for (const auto& p : points) max_abs_lat = std::max(max_abs_lat, std::fabs(p.lat));
    covered_lat_ = std::min(90.0, max_abs_lat + dlat_deg_);
    const double c = std::cos(covered_lat_ / deg);
    const double s = std::sin(radius_m / (2.0 * kEarthRadiusM));
    ncols_ = 1;
    if (c > 1e-9 && s / c < 1.0) {
      const double min_width = 2.0 * std::asin(s / c);
      const auto cols = static_cast<std::int64_t>(std::floor(2.0 * std::numbers::pi / min_width));
      if (cols >= 3) ncols_ = cols;
    }
    dlon_deg_ = 360.0 / static_cast<double>(ncols_);
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(row(points[i]), col(points[i]))].push_back(i);
  }

  double radius_m() const { return radius_m_; }
  std::size_t occupied_cells() const { return cells_.size(); }
  std::int64_t columns() const { return ncols_; }

  std::int64_t row(const GeoPoint& p) const {
    return static_cast<std::int64_t>(std::floor((p.lat + 90.0) / dlat_deg_));
  }
  std::int64_t col(const GeoPoint& p) const {
    auto c = static_cast<std::int64_t>(std::floor((p.lon + 180.0) / dlon_deg_));
    return ((c % ncols_) + ncols_) % ncols_;
  }

  /// Indices of indexed points in the query's neighborhood: a superset of
  /// those within the radius. Results are in ascending index order.
  std::vector<std::size_t> lookup(const GeoPoint& p) const {
    std::vector<std::size_t> out;
    const std::int64_t r0 = row(p);
    const bool outside_band = std::fabs(p.lat) > covered_lat_ - dlat_deg_;
    for (std::int64_t r = r0 - 1; r <= r0 + 1; ++r) {
      if (outside_band || ncols_ < 3) {
        for (std::int64_t c = 0; c < ncols_; ++c) append(out, r, c);
      } else {
        const std::int64_t c0 = col(p);
        for (std::int64_t dc = -1; dc <= 1; ++dc) append(out, r, ((c0 + dc) % ncols_ + ncols_) % ncols_);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

private:
  static std::int64_t key(std::int64_t r, std::int64_t c) { return r * 4'000'000'000LL + c; }

  void append(std::vector<std::size_t>& out, std::int64_t r, std::int64_t c) const {
    if (auto it = cells_.find(key(r, c)); it != cells_.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }

  double radius_m_;
  double dlat_deg_ = 0.0;
  double dlon_deg_ = 360.0;
  double covered_lat_ = 90.0;
  std::int64_t ncols_ = 1;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

inline SpatialGrid build_grid(std::span<const BlockRecord> records, double radius_m = 400.0) {
  std::vector<GeoPoint> pts;
  pts.reserve(records.size());
  for (const auto& r : records) pts.push_back(r.location);
  return SpatialGrid(pts, radius_m);
}

/// Evaluates the candidate rule for one pair; nullopt when excluded.
inline std::optional<CandidatePair> make_candidate(std::span<const BlockRecord> records,
                                                   std::size_t i, std::size_t j,
                                                   const BlockingParams& params) {
  const BlockRecord& x = records[i];
  const BlockRecord& y = records[j];
  if (!x.probe && !y.probe) return std::nullopt;
  if (params.same_city_only && x.city != y.city) return std::nullopt;
  if (!price_gap_admissible(x.price, y.price, params)) return std::nullopt;
  const double d = geo_distance_m(x.location, y.location);
  if (!(d < params.radius_m)) return std::nullopt;
  CandidatePair p;
  const bool swap = y.id < x.id;
  p.a = swap ? j : i;
  p.b = swap ? i : j;
  p.same_agency = same_agency(x.agency_id, y.agency_id);
  p.distance_m = d;
  p.abs_price_gap = std::fabs(x.price - y.price);
  p.rel_price_gap = p.abs_price_gap / std::min(x.price, y.price);
  return p;
}

/// All record pairs within the radius whose prices pass the gap rule, each
/// unordered pair once, sorted by (a, b).
inline std::vector<CandidatePair> candidate_pairs(std::span<const BlockRecord> records,
                                                  const BlockingParams& params = {},
                                                  unsigned workers = 1) {
  const SpatialGrid grid = build_grid(records, params.radius_m);
  std::vector<std::vector<CandidatePair>> per_record(records.size());
  // Pairs are generated from their probe side; a probe-probe pair is kept
  // only from its lower index.
  parallel_for(records.size(), workers, [&](std::size_t i) {
    if (!records[i].probe) return;
    for (std::size_t j : grid.lookup(records[i].location)) {
      if (j == i || (records[j].probe && j < i)) continue;
      if (auto p = make_candidate(records, i, j, params)) per_record[i].push_back(*p);
    }
  });
  std::vector<CandidatePair> out;
  for (auto& v : per_record) out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end(), [](const CandidatePair& l, const CandidatePair& r) {
    return std::tie(l.a, l.b) < std::tie(r.a, r.b);
  });
  return out;
}

inline std::vector<BlockRecord> block_records(std::span<const Ad> ads) {
  std::vector<BlockRecord> out;
  out.reserve(ads.size());
  for (const Ad& ad : ads) {
    out.push_back({ad.id, ad.agency_id, city_of(ad.zone_id), ad.location, ad.asking_price, true});
  }
  return out;
}

}  // namespace homelist
