#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homelist/error.hpp"
#include "homelist/levels.hpp"
#include "homelist/listing_model.hpp"

namespace homelist {

using json = nlohmann::json;

struct Snapshot {
  Week week;
  std::vector<Ad> ads;  // ids unique
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct ParsedSnapshot {
  Snapshot snapshot;
  std::vector<RowError> errors;
};

struct WeekDelta {
  Week week;
  std::vector<Ad> new_ads;
  std::vector<Ad> updated_ads;  // price or a characteristic changed
  std::vector<std::string> removed_ad_ids;
  std::vector<std::pair<std::string, int>> click_updates;  // every ad present in `week`
};

// ---------------------------------------------------------------------------
// Ad <-> JSON record

inline json characteristics_to_json(const Characteristics& t, const LevelSchemes& schemes) {
  json j = json::object();
  if (t.floor_area) j["floor_area"] = *t.floor_area;
  if (t.floor) j["floor"] = *t.floor;
  if (t.rooms) j["rooms"] = *t.rooms;
  if (t.bathrooms) j["bathrooms"] = *t.bathrooms;
  for (std::size_t k = 0; k < kOrderedTraitCount; ++k) {
    if (t.ordered[k]) {
      j[std::string(kOrderedTraitNames[k])] =
          schemes[static_cast<OrderedTrait>(k)].label(*t.ordered[k]);
    }
  }
  for (std::size_t k = 0; k < kBinaryTraitCount; ++k) {
    if (t.binary[k] != Tri::missing) {
      j[std::string(kBinaryTraitNames[k])] = t.binary[k] == Tri::yes ? "yes" : "no";
    }
  }
  if (t.heating) j["heating"] = *t.heating;
  if (t.property_type) j["property_type"] = *t.property_type;
  return j;
}

/// Full record. When `snapshot_week` is given, "clicks" is written as that
/// week's count (the snapshot file layout); otherwise as a week->count map.
inline json ad_to_json(const Ad& ad, const LevelSchemes& schemes = LevelSchemes::defaults(),
                       std::optional<Week> snapshot_week = std::nullopt) {
  json j = characteristics_to_json(ad.traits, schemes);
  j["id"] = ad.id;
  if (!ad.agency_id.empty()) j["agency_id"] = ad.agency_id;
  if (!ad.zone_id.empty()) j["zone_id"] = ad.zone_id;
  j["lat"] = ad.location.lat;
  j["lon"] = ad.location.lon;
  j["price"] = ad.asking_price;
  if (!ad.description.empty()) j["description"] = ad.description;
  j["created_on"] = format_date(ad.created_on);
  if (ad.removed_on) j["removed_on"] = format_date(*ad.removed_on);
  if (snapshot_week) {
    auto it = ad.clicks_by_week.find(*snapshot_week);
    j["clicks"] = it == ad.clicks_by_week.end() ? 0 : it->second;
  } else {
    json clicks = json::object();
    for (const auto& [w, c] : ad.clicks_by_week) clicks[w.label()] = c;
    j["clicks"] = clicks;
    if (!ad.price_by_week.empty()) {
      json prices = json::object();
      for (const auto& [w, p] : ad.price_by_week) prices[w.label()] = p;
      j["prices"] = prices;
    }
  }
  return j;
}

inline FieldMap json_to_fields(const json& j) {
  FieldMap raw;
  for (const auto& [key, value] : j.items()) {
    if (key == "clicks" || key == "prices" || value.is_null()) continue;
    if (value.is_string()) raw[key] = value.get<std::string>();
    else if (value.is_boolean()) raw[key] = value.get<bool>() ? "yes" : "no";
    else if (value.is_number()) raw[key] = value.dump();
    else throw ParseError("field '" + key + "' has unsupported type");
  }
  return raw;
}

/// Parses one record. Errors are thrown as a single ValidationError whose
/// message joins every problem found.
inline Ad ad_from_json(const json& j, const LevelSchemes& schemes = LevelSchemes::defaults(),
                       std::optional<Week> snapshot_week = std::nullopt) {
  if (!j.is_object()) throw ParseError("record is not an object");
  auto validated = validate_ad(json_to_fields(j), schemes);
  if (!validated.ok()) {
    std::string msg;
    for (const auto& e : validated.errors) msg += (msg.empty() ? "" : "; ") + e;
    throw ValidationError(msg);
  }
  Ad ad = std::move(*validated.ad);
  if (auto it = j.find("clicks"); it != j.end() && !it->is_null()) {
    if (it->is_number_integer()) {
      if (!snapshot_week) throw ParseError("scalar clicks outside a snapshot");
      if (it->get<long long>() < 0) throw ValidationError("negative clicks");
      ad.clicks_by_week[*snapshot_week] = it->get<int>();
    } else if (it->is_object()) {
      for (const auto& [label, c] : it->items()) {
        auto w = Week::parse(label);
        if (!w || !c.is_number_integer() || c.get<long long>() < 0) {
          throw ValidationError("malformed clicks entry '" + label + "'");
        }
        ad.clicks_by_week[*w] = c.get<int>();
      }
    } else {
      throw ValidationError("malformed clicks");
    }
  }
  if (auto it = j.find("prices"); it != j.end() && it->is_object()) {
    for (const auto& [label, p] : it->items()) {
      auto w = Week::parse(label);
      if (!w || !p.is_number() || p.get<double>() <= 0) {
        throw ValidationError("malformed prices entry '" + label + "'");
      }
      ad.price_by_week[*w] = p.get<double>();
    }
  }
  if (snapshot_week) ad.price_by_week[*snapshot_week] = ad.asking_price;
  return ad;
}

// ---------------------------------------------------------------------------
// Snapshot files: JSON Lines, one ad per line, named "<YYYY-Www>.jsonl".

inline std::optional<Week> week_from_path(const std::filesystem::path& path) {
  return Week::parse(path.stem().string());
}

inline ParsedSnapshot parse_snapshot_stream(std::istream& in, Week week,
                                            const LevelSchemes& schemes = LevelSchemes::defaults()) {
  ParsedSnapshot out;
  out.snapshot.week = week;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Ad ad = ad_from_json(json::parse(line), schemes, week);
      if (!seen.insert(ad.id).second) {
        out.errors.push_back({line_no, "duplicate id '" + ad.id + "'"});
        continue;
      }
      out.snapshot.ads.push_back(std::move(ad));
    } catch (const json::exception& e) {
      out.errors.push_back({line_no, std::string("malformed row: ") + e.what()});
    } catch (const Error& e) {
      out.errors.push_back({line_no, e.what()});
    }
  }
  return out;
}

inline ParsedSnapshot parse_snapshot(const std::filesystem::path& path,
                                     const LevelSchemes& schemes = LevelSchemes::defaults()) {
  auto week = week_from_path(path);
  if (!week) throw ParseError("snapshot file name must be an ISO week (YYYY-Www): " + path.string());
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open snapshot " + path.string());
  return parse_snapshot_stream(in, *week, schemes);
}

inline void write_snapshot(const std::filesystem::path& path, const Snapshot& snap,
                           const LevelSchemes& schemes = LevelSchemes::defaults()) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write snapshot " + path.string());
  for (const Ad& ad : snap.ads) out << ad_to_json(ad, schemes, snap.week).dump() << '\n';
}

/// Snapshot files in a directory, ordered by week.
inline std::vector<std::filesystem::path> list_snapshots(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("not a directory: " + dir.string());
  std::vector<std::pair<Week, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    if (auto w = week_from_path(entry.path())) found.emplace_back(*w, entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

// ---------------------------------------------------------------------------
// Week-over-week deltas

/// True when the two versions differ in price or any listed content;
/// click counts are not content.
inline bool content_changed(const Ad& before, const Ad& after) {
  return before.asking_price != after.asking_price || !(before.traits == after.traits) ||
         !(before.location == after.location) || before.description != after.description ||
         before.zone_id != after.zone_id || before.agency_id != after.agency_id;
}

inline WeekDelta diff_snapshots(const Snapshot& prev, const Snapshot& next) {
  if (!(prev.week < next.week)) {
    throw ValidationError("snapshots out of order: " + prev.week.label() + " >= " +
                          next.week.label());
  }
  std::map<std::string_view, const Ad*> before;
  for (const Ad& ad : prev.ads) before.emplace(ad.id, &ad);
  std::set<std::string_view> present;

  WeekDelta delta;
  delta.week = next.week;
  for (const Ad& ad : next.ads) {
    present.insert(ad.id);
    auto it = before.find(ad.id);
    if (it == before.end()) delta.new_ads.push_back(ad);
    else if (content_changed(*it->second, ad)) delta.updated_ads.push_back(ad);
    auto c = ad.clicks_by_week.find(next.week);
    delta.click_updates.emplace_back(ad.id, c == ad.clicks_by_week.end() ? 0 : c->second);
  }
  for (const auto& [id, ad] : before) {
    if (!present.count(id)) delta.removed_ad_ids.emplace_back(id);
  }
  return delta;
}

// ---------------------------------------------------------------------------
// External reference series

enum class SeriesKind { zone_price_bounds, city_sales, survey_discount, survey_tom };

inline std::string to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::zone_price_bounds: return "zone_price_bounds";
    case SeriesKind::city_sales: return "city_sales";
    case SeriesKind::survey_discount: return "survey_discount";
    case SeriesKind::survey_tom: return "survey_tom";
  }
  return "?";
}

inline std::optional<SeriesKind> series_kind_from(std::string_view s) {
  for (auto k : {SeriesKind::zone_price_bounds, SeriesKind::city_sales,
                 SeriesKind::survey_discount, SeriesKind::survey_tom}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct ExternalObservation {
  SeriesKind kind;
  std::string period;  // e.g. "2016-Q1", "2016-H1"
  std::string zone_or_city;
  double value1 = 0.0;  // P_l, sales count, discount, TOM days
  double value2 = 0.0;  // P_h for price bounds
};

/// Average zone value from OMI-style bounds: (P_l + P_h) / 2.
inline double mean_zone_price(double p_low, double p_high) {
  if (!(p_low > 0) || !(p_low <= p_high)) {
    throw ValidationError("price bounds must satisfy 0 < P_l <= P_h");
  }
  return (p_low + p_high) / 2.0;
}

inline void validate_series(const ExternalObservation& o) {
  if (o.kind == SeriesKind::zone_price_bounds) mean_zone_price(o.value1, o.value2);
  if (o.kind == SeriesKind::city_sales && o.value1 < 0) {
    throw ValidationError("negative sales count");
  }
}

inline std::vector<ExternalObservation> parse_external_series(std::istream& in) {
  std::vector<ExternalObservation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("kind", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = "external series line " + std::to_string(line_no);
    if (cells.size() < 4) throw ParseError(where + ": expected kind,period,zone_or_city,value1,value2");
    auto kind = series_kind_from(cells[0]);
    if (!kind) throw ParseError(where + ": unknown kind '" + cells[0] + "'");
    auto v1 = detail::to_double(cells[3]);
    auto v2 = cells.size() > 4 && !cells[4].empty() ? detail::to_double(cells[4])
                                                    : std::optional<double>(0.0);
    if (!v1 || !v2) throw ParseError(where + ": malformed value");
    ExternalObservation o{*kind, cells[1], cells[2], *v1, *v2};
    try {
      validate_series(o);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<ExternalObservation> load_external_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open external series " + path.string());
  return parse_external_series(in);
}

inline void write_external_series(std::ostream& out, const std::vector<ExternalObservation>& rows) {
  out << "kind,period,zone_or_city,value1,value2\n";
  for (const auto& r : rows) {
    out << to_string(r.kind) << ',' << r.period << ',' << r.zone_or_city << ','
        << json(r.value1).dump() << ',' << json(r.value2).dump() << '\n';
  }
}

}  // namespace homelist
