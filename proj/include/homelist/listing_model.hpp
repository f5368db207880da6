#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "homelist/error.hpp"
#include "homelist/levels.hpp"

namespace homelist {

using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
  return std::chrono::sys_days{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

inline std::optional<Date> parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return ec == std::errc{} && p == s.data() + pos + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

inline std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline int days_between(Date from, Date to) { return static_cast<int>((to - from).count()); }

/// ISO week, stored as the number of weeks since the Monday 1970-01-05.
struct Week {
  int index = 0;

  static Week of(Date d) {
    const int days = static_cast<int>(d.time_since_epoch().count()) - 4;
    return Week{days >= 0 ? days / 7 : -((-days + 6) / 7)};
  }

  Date monday() const { return Date{std::chrono::days{4 + 7 * index}}; }

  Week operator+(int n) const { return Week{index + n}; }
  Week operator-(int n) const { return Week{index - n}; }
  int operator-(Week o) const { return index - o.index; }
  Week& operator++() {
    ++index;
    return *this;
  }

  auto operator<=>(const Week&) const = default;

  // "YYYY-Www" with the ISO week-numbering year.
  std::string label() const {
    const Date thursday = monday() + std::chrono::days{3};
    const std::chrono::year_month_day ymd{thursday};
    const Date jan1 = std::chrono::sys_days{ymd.year() / std::chrono::January / 1};
    const int week_no = days_between(jan1, thursday) / 7 + 1;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-W%02d", static_cast<int>(ymd.year()), week_no);
    return buf;
  }

  static std::optional<Week> parse(std::string_view s) {
    if (s.size() != 8 || s[4] != '-' || s[5] != 'W') return std::nullopt;
    int y = 0, w = 0;
    auto [p1, e1] = std::from_chars(s.data(), s.data() + 4, y);
    auto [p2, e2] = std::from_chars(s.data() + 6, s.data() + 8, w);
    if (e1 != std::errc{} || e2 != std::errc{} || p1 != s.data() + 4 || p2 != s.data() + 8) {
      return std::nullopt;
    }
    if (w < 1 || w > 53) return std::nullopt;
    // January 4th always falls in ISO week 1.
    const Week first = Week::of(make_date(y, 1, 4));
    const Week result = first + (w - 1);
    if (result.label() != s) return std::nullopt;
    return result;
  }
};

inline std::string quarter_label(Date d) {
  const std::chrono::year_month_day ymd{d};
  const unsigned q = (static_cast<unsigned>(ymd.month()) - 1) / 3 + 1;
  return std::to_string(static_cast<int>(ymd.year())) + "-Q" + std::to_string(q);
}

inline std::string half_label(Date d) {
  const std::chrono::year_month_day ymd{d};
  const unsigned h = static_cast<unsigned>(ymd.month()) <= 6 ? 1 : 2;
  return std::to_string(static_cast<int>(ymd.year())) + "-H" + std::to_string(h);
}

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool valid() const {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
           lon >= -180.0 && lon <= 180.0;
  }
  bool operator==(const GeoPoint&) const = default;
};

/// yes / no / missing. Missingness is kept distinct from "no" because the
/// classifier treats "both missing" differently from "both no".
enum class Tri : std::int8_t { missing = -1, no = 0, yes = 1 };

enum class BinaryTrait : std::size_t {
  elevator, balcony, terrace, janitor, utility_room, air_conditioning, basement
};
inline constexpr std::size_t kBinaryTraitCount = 7;
inline constexpr std::array<std::string_view, kBinaryTraitCount> kBinaryTraitNames{
    "elevator", "balcony", "terrace", "janitor", "utility_room", "air_conditioning", "basement"};

/// Physical characteristics shared by ads and housing units.
struct Characteristics {
  std::optional<double> floor_area;  // m²
  std::optional<int> floor;
  std::optional<int> rooms;
  std::optional<int> bathrooms;
  std::array<std::optional<int>, kOrderedTraitCount> ordered{};
  std::array<Tri, kBinaryTraitCount> binary{Tri::missing, Tri::missing, Tri::missing,
                                            Tri::missing, Tri::missing, Tri::missing,
                                            Tri::missing};
  std::optional<std::string> heating;
  std::optional<std::string> property_type;

  std::optional<int>& level(OrderedTrait t) { return ordered[static_cast<std::size_t>(t)]; }
  const std::optional<int>& level(OrderedTrait t) const {
    return ordered[static_cast<std::size_t>(t)];
  }
  Tri& flag(BinaryTrait t) { return binary[static_cast<std::size_t>(t)]; }
  Tri flag(BinaryTrait t) const { return binary[static_cast<std::size_t>(t)]; }

  bool operator==(const Characteristics&) const = default;
};

struct Ad {
  std::string id;
  std::string agency_id;  // empty for private sellers
  std::string zone_id;
  GeoPoint location;
  double asking_price = 0.0;
  Characteristics traits;
  std::string description;
  Date created_on{};
  std::optional<Date> removed_on;
  std::map<Week, int> clicks_by_week;
  std::map<Week, double> price_by_week;

  bool operator==(const Ad&) const = default;
};

struct HousingUnit {
  std::string id;
  std::vector<std::string> member_ad_ids;  // sorted, non-empty
  std::string zone_id;
  GeoPoint location;
  double asking_price = 0.0;
  Characteristics traits;
  Date entry_date{};
  std::optional<Date> exit_date;

  bool active() const { return !exit_date.has_value(); }
  bool operator==(const HousingUnit&) const = default;
};

/// Zone ids are written "city/zone"; ads without a slash belong to a single
/// implicit city.
inline std::string city_of(std::string_view zone_id) {
  const auto slash = zone_id.find('/');
  return slash == std::string_view::npos ? std::string{} : std::string(zone_id.substr(0, slash));
}

using FieldMap = std::map<std::string, std::string, std::less<>>;

struct ValidatedAd {
  std::optional<Ad> ad;
  std::vector<std::string> errors;
  bool ok() const { return ad.has_value(); }
};

namespace detail {

inline std::optional<std::string> field(const FieldMap& raw, std::string_view key) {
  auto it = raw.find(key);
  if (it == raw.end()) return std::nullopt;
  const std::string trimmed = lowercase_trimmed(it->second);
  if (trimmed.empty() || trimmed == "na" || trimmed == "null") return std::nullopt;
  return it->second;
}

inline std::optional<double> to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<int> to_int(const std::string& s) {
  auto v = to_double(s);
  if (!v || std::floor(*v) != *v || std::fabs(*v) > 1e9) return std::nullopt;
  return static_cast<int>(*v);
}

inline std::optional<Tri> to_tri(const std::string& s) {
  const std::string v = lowercase_trimmed(s);
  if (v == "yes" || v == "true" || v == "1" || v == "y") return Tri::yes;
  if (v == "no" || v == "false" || v == "0" || v == "n") return Tri::no;
  return std::nullopt;
}

}  // namespace detail

/// Builds a typed Ad from raw text fields. Optional fields that are absent
/// (or empty / "NA") are marked missing; nothing is defaulted.
inline ValidatedAd validate_ad(const FieldMap& raw,
                               const LevelSchemes& schemes = LevelSchemes::defaults()) {
  using detail::field;
  ValidatedAd out;
  auto& errors = out.errors;
  Ad ad;

  auto id = field(raw, "id");
  if (!id) errors.push_back("missing mandatory field 'id'");
  else ad.id = *id;

  ad.agency_id = field(raw, "agency_id").value_or("");
  ad.zone_id = field(raw, "zone_id").value_or("");
  ad.description = field(raw, "description").value_or("");

  auto lat = field(raw, "lat");
  auto lon = field(raw, "lon");
  if (!lat || !lon) {
    errors.push_back("missing mandatory field 'lat'/'lon'");
  } else {
    auto la = detail::to_double(*lat);
    auto lo = detail::to_double(*lon);
    if (!la || !lo) errors.push_back("malformed coordinate");
    else {
      ad.location = {*la, *lo};
      if (!ad.location.valid()) errors.push_back("coordinate out of range");
    }
  }

  auto price = field(raw, "price");
  if (!price) errors.push_back("missing mandatory field 'price'");
  else if (auto p = detail::to_double(*price); !p) errors.push_back("malformed price");
  else if (*p <= 0) errors.push_back("non-positive price");
  else ad.asking_price = *p;

  auto created = field(raw, "created_on");
  if (!created) errors.push_back("missing mandatory field 'created_on'");
  else if (auto d = parse_date(*created); !d) errors.push_back("malformed date 'created_on'");
  else ad.created_on = *d;

  if (auto removed = field(raw, "removed_on")) {
    if (auto d = parse_date(*removed); !d) errors.push_back("malformed date 'removed_on'");
    else ad.removed_on = *d;
  }
  if (ad.removed_on && created && *ad.removed_on < ad.created_on) {
    errors.push_back("removed_on precedes created_on");
  }

  auto& t = ad.traits;
  if (auto area = field(raw, "floor_area")) {
    if (auto a = detail::to_double(*area); !a) errors.push_back("malformed floor_area");
    else if (*a <= 0) errors.push_back("non-positive floor_area");
    else t.floor_area = *a;
  }
  auto integer = [&](std::string_view key, std::optional<int>& dst, bool nonneg) {
    if (auto v = field(raw, key)) {
      auto i = detail::to_int(*v);
      if (!i || (nonneg && *i < 0)) errors.push_back("malformed " + std::string(key));
      else dst = *i;
    }
  };
  integer("floor", t.floor, false);
  integer("rooms", t.rooms, true);
  integer("bathrooms", t.bathrooms, true);

  for (std::size_t k = 0; k < kOrderedTraitCount; ++k) {
    const auto trait = static_cast<OrderedTrait>(k);
    try {
      t.ordered[k] = encode_ordered(field(raw, kOrderedTraitNames[k]), schemes[trait]);
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    }
  }
  for (std::size_t k = 0; k < kBinaryTraitCount; ++k) {
    if (auto v = field(raw, kBinaryTraitNames[k])) {
      auto tri = detail::to_tri(*v);
      if (!tri) errors.push_back("malformed " + std::string(kBinaryTraitNames[k]));
      else t.binary[k] = *tri;
    }
  }
  if (auto h = field(raw, "heating")) t.heating = lowercase_trimmed(*h);
  if (auto p = field(raw, "property_type")) t.property_type = lowercase_trimmed(*p);

  if (errors.empty()) out.ad = std::move(ad);
  return out;
}

}  // namespace homelist
