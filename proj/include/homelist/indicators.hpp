#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homelist/error.hpp"
#include "homelist/ingest.hpp"
#include "homelist/listing_model.hpp"
#include "homelist/parallel.hpp"
#include "homelist/regression.hpp"
#include "homelist/time_machine.hpp"

namespace homelist {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Periods

enum class Granularity { week, month, quarter };

inline Granularity granularity_from(std::string_view s) {
  if (s == "week") return Granularity::week;
  if (s == "month") return Granularity::month;
  if (s == "quarter") return Granularity::quarter;
  throw ValidationError("unknown period granularity '" + std::string(s) + "'");
}

/// Consecutive integer index of the period containing the week's Monday.
inline int period_index(Week w, Granularity g) {
  if (g == Granularity::week) return w.index;
  const std::chrono::year_month_day ymd{w.monday()};
  const int y = static_cast<int>(ymd.year());
  const int m = static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
  return g == Granularity::month ? y * 12 + m : y * 4 + m / 3;
}

inline std::string period_label(int index, Granularity g) {
  char buf[16];
  switch (g) {
    case Granularity::week: return Week{index}.label();
    case Granularity::month: std::snprintf(buf, sizeof buf, "%04d-%02d", index / 12, index % 12 + 1); return buf;
    case Granularity::quarter: std::snprintf(buf, sizeof buf, "%04d-Q%d", index / 4, index % 4 + 1); return buf;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Panel

/// Control characteristics used in every model, in column order.
inline const std::vector<std::string>& control_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v{"log_floor_area", "rooms", "bathrooms", "floor"};
    for (auto n : kOrderedTraitNames) v.emplace_back(n);
    for (auto n : kBinaryTraitNames) v.emplace_back(n);
    return v;
  }();
  return names;
}

/// Raw control values; NaN where the unit lacks the characteristic.
inline std::vector<double> raw_controls(const Characteristics& t) {
  std::vector<double> x;
  x.push_back(t.floor_area && *t.floor_area > 0 ? std::log(*t.floor_area) : kNaN);
  x.push_back(t.rooms ? double(*t.rooms) : kNaN);
  x.push_back(t.bathrooms ? double(*t.bathrooms) : kNaN);
  x.push_back(t.floor ? double(*t.floor) : kNaN);
  for (const auto& o : t.ordered) x.push_back(o ? double(*o) : kNaN);
  for (Tri b : t.binary) x.push_back(b == Tri::missing ? kNaN : (b == Tri::yes ? 1.0 : 0.0));
  return x;
}

/// One row per live unit and week.
struct PanelObservation {
  std::string unit_id;
  std::string zone_id;
  Week week;
  int ads = 0;
  bool dupl = false;      // more than one live ad
  bool newdupl = false;   // live ad count increased since the previous week
  double clicks = 0.0;    // mean over live member ads of average daily clicks
  double price = kNaN;    // asking price per m2
  int z = 0;              // days listed so far
};

/// Unit-level outcomes.
struct UnitSummary {
  std::string unit_id;
  std::string zone_id;
  Date entry_date{};
  std::optional<Date> exit_date;
  Week first_listed;
  Week last_listed;
  int listed_weeks = 0;
  int member_ads = 0;
  bool entered_in_window = false;  // first listed after the first observed week
  double tom_days = kNaN;          // exited units only
  bool priceref = false;           // some member ad cut its price
  double onlint = kNaN;
  double onlint2 = kNaN;
  double price_m2 = kNaN;          // at the first listed week
  double relprice = kNaN;          // price_m2 over the zone mean while listed
  Characteristics traits;
  std::vector<double> x;           // controls, missing values imputed

  bool single_ad() const { return member_ads == 1; }
};

struct Panel {
  Week first_week;
  Week last_week;
  std::vector<PanelObservation> rows;  // ordered by (zone, unit, week)
  std::vector<UnitSummary> units;      // ordered by (zone, unit)
  std::map<std::string, std::map<Week, double>> zone_clicks;  // mean weekly clicks per live ad
  std::map<std::string, std::map<Week, double>> zone_price;   // mean asking price per m2
  std::vector<std::string> x_names = control_names();

  const UnitSummary& unit(const std::string& id) const {
    auto it = std::lower_bound(unit_order.begin(), unit_order.end(), id,
                               [&](std::size_t i, const std::string& v) { return units[i].unit_id < v; });
    if (it == unit_order.end() || units[*it].unit_id != id) throw ValidationError("unknown unit " + id);
    return units[*it];
  }

  std::vector<std::size_t> unit_order;  // indexes into units sorted by id
};

namespace indicators_detail {

struct AdSeries {
  std::map<Week, std::pair<int, double>> weeks;  // clicks, price
};

struct ZoneWork {
  std::vector<const HousingUnit*> units;
  std::vector<PanelObservation> rows;
  std::vector<UnitSummary> summaries;
  std::map<Week, double> clicks;
  std::map<Week, double> price;
};

inline void build_zone(ZoneWork& w, const std::map<std::string, AdSeries>& series, Week first_week) {
  // Zone means per week: clicks per live ad, price per m2 per live unit.
  std::map<Week, std::pair<double, int>> clicks;
  std::map<Week, std::pair<double, int>> price;
  for (const HousingUnit* u : w.units) {
    const double area = u->traits.floor_area.value_or(0.0);
    std::map<Week, std::pair<double, int>> unit_price;
    for (const auto& id : u->member_ad_ids) {
      auto s = series.find(id);
      if (s == series.end()) continue;
      for (const auto& [wk, cp] : s->second.weeks) {
        auto& c = clicks[wk];
        c.first += cp.first;
        ++c.second;
        auto& p = unit_price[wk];
        p.first += cp.second;
        ++p.second;
      }
    }
    if (area > 0) {
      for (const auto& [wk, p] : unit_price) {
        auto& z = price[wk];
        z.first += p.first / p.second / area;
        ++z.second;
      }
    }
  }
  for (const auto& [wk, c] : clicks) w.clicks[wk] = c.first / c.second;
  for (const auto& [wk, p] : price) w.price[wk] = p.first / p.second;

  for (const HousingUnit* u : w.units) {
    struct WeekAgg {
      int ads = 0;
      double daily_clicks = 0.0;
      double total_clicks = 0.0;
      double price = 0.0;
    };
    std::map<Week, WeekAgg> by_week;
    bool cut = false;
    for (const auto& id : u->member_ad_ids) {
      auto s = series.find(id);
      if (s == series.end()) continue;
      std::optional<double> prev;
      for (const auto& [wk, cp] : s->second.weeks) {
        auto& a = by_week[wk];
        ++a.ads;
        a.daily_clicks += cp.first / 7.0;
        a.total_clicks += cp.first;
        a.price += cp.second;
        if (prev && cp.second < *prev) cut = true;
        prev = cp.second;
      }
    }
    if (by_week.empty()) continue;
    const double area = u->traits.floor_area.value_or(0.0);
    UnitSummary s;
    s.unit_id = u->id;
    s.zone_id = u->zone_id;
    s.entry_date = u->entry_date;
    s.exit_date = u->exit_date;
    s.first_listed = by_week.begin()->first;
    s.last_listed = by_week.rbegin()->first;
    s.listed_weeks = static_cast<int>(by_week.size());
    s.member_ads = static_cast<int>(u->member_ad_ids.size());
    s.entered_in_window = s.first_listed > first_week && Week::of(u->entry_date) == s.first_listed;
    if (u->exit_date) s.tom_days = days_between(u->entry_date, *u->exit_date);
    s.priceref = cut;
    s.traits = u->traits;

    double total = 0.0, norm = 0.0, total2 = 0.0, norm2 = 0.0, zone_price = 0.0;
    int zone_price_weeks = 0;
    std::optional<int> prev_ads;
    Week prev_week;
    for (const auto& [wk, a] : by_week) {
      PanelObservation o;
      o.unit_id = u->id;
      o.zone_id = u->zone_id;
      o.week = wk;
      o.ads = a.ads;
      o.dupl = a.ads > 1;
      o.newdupl = prev_ads && prev_week + 1 == wk && a.ads > *prev_ads;
      o.clicks = a.daily_clicks / a.ads;
      if (area > 0) o.price = a.price / a.ads / area;
      o.z = std::max(0, days_between(u->entry_date, wk.monday()));
      w.rows.push_back(o);
      prev_ads = a.ads;
      prev_week = wk;

      const double zc = w.clicks.at(wk);
      total += a.total_clicks;
      norm += zc;
      if (days_between(u->entry_date, wk.monday()) < 14) {
        total2 += a.total_clicks;
        norm2 += zc;
      }
      auto zp = w.price.find(wk);
      if (zp != w.price.end()) {
        zone_price += zp->second;
        ++zone_price_weeks;
      }
    }
    s.onlint = norm > 0 ? total / norm : kNaN;
    if (s.entered_in_window && norm2 > 0) s.onlint2 = total2 / norm2;
    if (area > 0) {
      const auto& a = by_week.begin()->second;
      s.price_m2 = a.price / a.ads / area;
      if (zone_price_weeks > 0) s.relprice = s.price_m2 / (zone_price / zone_price_weeks);
    }
    w.summaries.push_back(std::move(s));
  }
}

}  // namespace indicators_detail

/// Weekly unit panel and unit-level outcomes from deduplicated units and
/// per-ad click histories. Ads absent from every unit are ignored.
inline Panel build_panel(std::span<const HousingUnit> units, std::span<const AdWeek> history,
                         unsigned workers = 1) {
  if (history.empty()) throw InsufficientDataError("empty click history");
  using namespace indicators_detail;
  std::map<std::string, AdSeries> series;
  Panel panel;
  panel.first_week = history.front().week;
  panel.last_week = history.front().week;
  for (const AdWeek& h : history) {
    series[h.ad_id].weeks[h.week] = {h.clicks, h.price};
    panel.first_week = std::min(panel.first_week, h.week);
    panel.last_week = std::max(panel.last_week, h.week);
  }
  std::map<std::string, ZoneWork> zones;
  for (const HousingUnit& u : units) zones[u.zone_id].units.push_back(&u);
  for (auto& [z, w] : zones) {
    std::sort(w.units.begin(), w.units.end(), [](auto* a, auto* b) { return a->id < b->id; });
  }
  std::vector<ZoneWork*> work;
  for (auto& [z, w] : zones) work.push_back(&w);
  parallel_for(work.size(), workers, [&](std::size_t i) { build_zone(*work[i], series, panel.first_week); });

  for (auto& [z, w] : zones) {
    panel.rows.insert(panel.rows.end(), w.rows.begin(), w.rows.end());
    panel.units.insert(panel.units.end(), w.summaries.begin(), w.summaries.end());
    panel.zone_clicks[z] = std::move(w.clicks);
    panel.zone_price[z] = std::move(w.price);
  }

  // Controls: missing values imputed with the sample mean.
  const std::size_t k = panel.x_names.size();
  std::vector<double> sum(k, 0.0);
  std::vector<int> count(k, 0);
  for (auto& u : panel.units) {
    u.x = raw_controls(u.traits);
    for (std::size_t j = 0; j < k; ++j) {
      if (std::isfinite(u.x[j])) {
        sum[j] += u.x[j];
        ++count[j];
      }
    }
  }
  for (auto& u : panel.units) {
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(u.x[j])) u.x[j] = count[j] ? sum[j] / count[j] : 0.0;
    }
  }
  panel.unit_order.resize(panel.units.size());
  std::iota(panel.unit_order.begin(), panel.unit_order.end(), std::size_t{0});
  std::sort(panel.unit_order.begin(), panel.unit_order.end(),
            [&](std::size_t a, std::size_t b) { return panel.units[a].unit_id < panel.units[b].unit_id; });
  return panel;
}

/// Panel history rows from in-memory ads.
inline std::vector<AdWeek> history_of(const std::map<std::string, Ad>& ads) {
  std::vector<AdWeek> out;
  for (const auto& [id, ad] : ads) {
    for (const auto& [w, c] : ad.clicks_by_week) {
      auto p = ad.price_by_week.find(w);
      out.push_back({id, w, c, p == ad.price_by_week.end() ? ad.asking_price : p->second});
    }
  }
  return out;
}

inline std::vector<AdWeek> history_of(std::span<const Ad> ads) {
  std::map<std::string, Ad> m;
  for (const Ad& a : ads) m.emplace(a.id, a);
  return history_of(m);
}

/// Units implied by an ad -> unit assignment, aggregated from the ads.
inline std::vector<HousingUnit> units_from_assignment(std::span<const Ad> ads,
                                                      const std::map<std::string, std::string>& unit_of) {
  std::map<std::string, std::vector<Ad>> members;
  for (const Ad& a : ads) {
    auto it = unit_of.find(a.id);
    if (it == unit_of.end()) throw ValidationError("ad " + a.id + " has no unit");
    members[it->second].push_back(a);
  }
  std::vector<HousingUnit> out;
  for (auto& [id, m] : members) out.push_back(aggregate_unit(m, id));
  return out;
}

// ---------------------------------------------------------------------------
// Models

namespace indicators_detail {

struct Design {
  std::vector<double> y;
  std::vector<std::vector<double>> x;  // rows
  std::vector<std::string> names;
  std::vector<FixedEffect> effects;

  void add(double yv, std::vector<double> xv, std::vector<std::string> groups) {
    y.push_back(yv);
    x.push_back(std::move(xv));
    for (std::size_t d = 0; d < groups.size(); ++d) effects[d].groups.push_back(std::move(groups[d]));
  }
};

// Drops trailing control columns (from `first_control` on) that are constant
// across the sample; the key regressors are never dropped.
inline RegressionInput to_input(Design d, std::size_t first_control) {
  const std::size_t n = d.y.size();
  const std::size_t k = d.names.size();
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < k; ++j) {
    bool flat = j >= first_control && n > 0;
    for (std::size_t i = 1; flat && i < n; ++i) flat = d.x[i][j] == d.x[0][j];
    if (!flat) keep.push_back(j);
  }
  RegressionInput in;
  in.y = Eigen::Map<const Eigen::VectorXd>(d.y.data(), static_cast<Eigen::Index>(n));
  in.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < keep.size(); ++c) {
      in.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = d.x[i][keep[c]];
    }
  }
  for (std::size_t j : keep) in.names.push_back(d.names[j]);
  in.effects = std::move(d.effects);
  return in;
}

inline std::string offset_name(const char* var, int k) {
  if (k == 0) return std::string(var) + "_t";
  return std::string(var) + (k > 0 ? "_t+" : "_t-") + std::to_string(std::abs(k));
}

// Row lookup by (unit, week) over the panel's ordered rows.
class RowIndex {
public:
  explicit RowIndex(const Panel& p) : p_(p) {}

  const PanelObservation* at(std::size_t i, int offset) const {
    const auto& r = p_.rows[i];
    const auto j = static_cast<std::ptrdiff_t>(i) + offset;
    // Rows of a unit are consecutive and ordered by week, so the target row
    // lies at most |offset| positions away.
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, std::min<std::ptrdiff_t>(j, static_cast<std::ptrdiff_t>(i)));
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(p_.rows.size()) - 1,
                                                       std::max<std::ptrdiff_t>(j, static_cast<std::ptrdiff_t>(i)));
    for (std::ptrdiff_t q = lo; q <= hi; ++q) {
      const auto& c = p_.rows[static_cast<std::size_t>(q)];
      if (c.unit_id == r.unit_id && c.week == r.week + offset) return &c;
    }
    return nullptr;
  }

private:
  const Panel& p_;
};

}  // namespace indicators_detail

/// DUPL_t on CLICKS_t, PRICE_t and controls; zone x week effects absorbed.
inline RegressionResult model_eq1(const Panel& p) {
  indicators_detail::Design d;
  d.names = {"CLICKS", "PRICE"};
  d.names.insert(d.names.end(), p.x_names.begin(), p.x_names.end());
  d.effects = {{"zone_week", {}}};
  for (const auto& r : p.rows) {
    if (!std::isfinite(r.price)) continue;
    std::vector<double> x{r.clicks, r.price};
    const auto& u = p.unit(r.unit_id).x;
    x.insert(x.end(), u.begin(), u.end());
    d.add(r.dupl ? 1.0 : 0.0, std::move(x), {r.zone_id + "|" + r.week.label()});
  }
  return fit_ols_fe(indicators_detail::to_input(std::move(d), 2));
}

/// NEWDUPL_t on CLICKS_{t-1}, PRICE_{t-1}, controls and days listed;
/// zone x week effects absorbed. Needs the unit listed in the previous week.
inline RegressionResult model_eq2(const Panel& p) {
  indicators_detail::Design d;
  d.names = {"CLICKS_t-1", "PRICE_t-1", "z"};
  d.names.insert(d.names.end(), p.x_names.begin(), p.x_names.end());
  d.effects = {{"zone_week", {}}};
  indicators_detail::RowIndex idx(p);
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& r = p.rows[i];
    const auto* prev = idx.at(i, -1);
    if (!prev || !std::isfinite(prev->price)) continue;
    std::vector<double> x{prev->clicks, prev->price, double(r.z)};
    const auto& u = p.unit(r.unit_id).x;
    x.insert(x.end(), u.begin(), u.end());
    d.add(r.newdupl ? 1.0 : 0.0, std::move(x), {r.zone_id + "|" + r.week.label()});
  }
  return fit_ols_fe(indicators_detail::to_input(std::move(d), 3));
}

/// NEWDUPL_t on CLICKS_{t+k} for k = -leads..+leads, PRICE_{t-1}, controls
/// and days listed. Only rows whose unit is listed over the whole window.
inline RegressionResult model_eq3(const Panel& p, int leads = 4) {
  if (leads < 1) throw ValidationError("eq3 needs at least one lead and lag");
  indicators_detail::Design d;
  for (int k = -leads; k <= leads; ++k) d.names.push_back(indicators_detail::offset_name("CLICKS", k));
  d.names.push_back("PRICE_t-1");
  d.names.push_back("z");
  const std::size_t first_control = d.names.size();
  d.names.insert(d.names.end(), p.x_names.begin(), p.x_names.end());
  d.effects = {{"zone_week", {}}};
  indicators_detail::RowIndex idx(p);
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& r = p.rows[i];
    std::vector<double> x;
    bool ok = true;
    for (int k = -leads; k <= leads && ok; ++k) {
      const auto* o = k == 0 ? &r : idx.at(i, k);
      if (!o) ok = false;
      else x.push_back(o->clicks);
    }
    if (!ok) continue;
    const auto* prev = idx.at(i, -1);
    if (!std::isfinite(prev->price)) continue;
    x.push_back(prev->price);
    x.push_back(double(r.z));
    const auto& u = p.unit(r.unit_id).x;
    x.insert(x.end(), u.begin(), u.end());
    d.add(r.newdupl ? 1.0 : 0.0, std::move(x), {r.zone_id + "|" + r.week.label()});
  }
  return fit_ols_fe(indicators_detail::to_input(std::move(d), first_control));
}

struct TomOptions {
  // Units must enter at least this many weeks before the last observed week,
  // so that slow sellers are not cut off by the end of the data.
  int followup_weeks = 16;
};

/// log TOM on log ONLINT, relative price and controls, with zone and entry
/// quarter effects; exited single-ad units first listed inside the window.
inline RegressionResult model_tom(const Panel& p, const TomOptions& opt = {}) {
  indicators_detail::Design d;
  d.names = {"log_ONLINT", "relprice"};
  d.names.insert(d.names.end(), p.x_names.begin(), p.x_names.end());
  d.effects = {{"zone", {}}, {"quarter", {}}};
  for (const auto& u : p.units) {
    if (!u.single_ad() || !u.exit_date || !u.entered_in_window) continue;
    if (u.first_listed > p.last_week - opt.followup_weeks) continue;
    if (!(u.onlint > 0) || !std::isfinite(u.relprice) || !(u.tom_days > 0)) continue;
    std::vector<double> x{std::log(u.onlint), u.relprice};
    x.insert(x.end(), u.x.begin(), u.x.end());
    d.add(std::log(u.tom_days), std::move(x), {u.zone_id, quarter_label(u.entry_date)});
  }
  return fit_ols_fe(indicators_detail::to_input(std::move(d), 2));
}

struct PricerefOptions {
  int min_listed_weeks = 3;
  LogitOptions logit;
};

/// Logit of a downward price revision on ONLINT2 (first 14 days), relative
/// price and controls, with zone and entry quarter dummies; single-ad units
/// first listed inside the window. exp(coefficient) is the odds ratio per
/// unit of ONLINT2.
inline RegressionResult model_priceref(const Panel& p, const PricerefOptions& opt = {}) {
  indicators_detail::Design d;
  d.names = {"ONLINT2", "relprice"};
  d.names.insert(d.names.end(), p.x_names.begin(), p.x_names.end());
  d.effects = {{"zone", {}}, {"quarter", {}}};
  for (const auto& u : p.units) {
    if (!u.single_ad() || !u.entered_in_window || u.listed_weeks < opt.min_listed_weeks) continue;
    if (!std::isfinite(u.onlint2) || !std::isfinite(u.relprice)) continue;
    std::vector<double> x{u.onlint2, u.relprice};
    x.insert(x.end(), u.x.begin(), u.x.end());
    d.add(u.priceref ? 1.0 : 0.0, std::move(x), {u.zone_id, quarter_label(u.entry_date)});
  }
  return fit_logit(indicators_detail::to_input(std::move(d), 2), opt.logit);
}

// ---------------------------------------------------------------------------
// Hedonic index

struct HedonicRow {
  std::string zone_id;
  int period = 0;
  double price_m2 = 0.0;
  std::vector<double> x;
};

struct PriceIndex {
  std::vector<int> periods;
  std::vector<double> values;
  int base = 0;

  double at(int period) const {
    auto it = std::find(periods.begin(), periods.end(), period);
    if (it == periods.end()) throw ValidationError("no index value for period " + std::to_string(period));
    return values[static_cast<std::size_t>(it - periods.begin())];
  }
};

/// Time-dummy index: log price per m2 on characteristics, zone effects and
/// period dummies; index_t = 100 exp(delta_t - delta_base).
inline PriceIndex hedonic_index(std::span<const HedonicRow> rows, std::optional<int> base = std::nullopt,
                                std::size_t min_per_period = 1) {
  if (rows.empty()) throw InsufficientDataError("no observations for the hedonic index");
  std::map<int, std::size_t> per_period;
  for (const auto& r : rows) {
    if (!(r.price_m2 > 0)) throw ValidationError("hedonic prices must be positive");
    if (r.x.size() != rows.front().x.size()) throw ValidationError("hedonic rows differ in characteristics");
    ++per_period[r.period];
  }
  for (const auto& [t, n] : per_period) {
    if (n < min_per_period) {
      throw InsufficientDataError("period " + std::to_string(t) + " has " + std::to_string(n) + " observations");
    }
  }
  PriceIndex out;
  out.base = base.value_or(per_period.begin()->first);
  if (!per_period.count(out.base)) throw ValidationError("base period has no observations");

  const std::size_t kx = rows.front().x.size();
  // Characteristics constant within every zone carry no information here.
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < kx; ++j) {
    std::map<std::string, double> first;
    bool varies = false;
    for (const auto& r : rows) {
      auto [it, fresh] = first.emplace(r.zone_id, r.x[j]);
      if (!fresh && it->second != r.x[j]) {
        varies = true;
        break;
      }
    }
    if (varies) keep.push_back(j);
  }
  std::vector<int> dummies;
  for (const auto& [t, n] : per_period) {
    if (t != out.base) dummies.push_back(t);
  }
  RegressionInput in;
  const auto n = static_cast<Eigen::Index>(rows.size());
  in.y.resize(n);
  in.X.resize(n, static_cast<Eigen::Index>(dummies.size() + keep.size()));
  in.effects = {{"zone", {}}};
  for (int t : dummies) in.names.push_back("period:" + std::to_string(t));
  for (std::size_t j : keep) in.names.push_back("x" + std::to_string(j));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    in.y[i] = std::log(r.price_m2);
    for (std::size_t c = 0; c < dummies.size(); ++c) in.X(i, static_cast<Eigen::Index>(c)) = r.period == dummies[c] ? 1.0 : 0.0;
    for (std::size_t c = 0; c < keep.size(); ++c) {
      in.X(i, static_cast<Eigen::Index>(dummies.size() + c)) = r.x[keep[c]];
    }
    in.effects[0].groups.push_back(r.zone_id);
  }
  Eigen::VectorXd coef;
  if (in.X.cols() == 0) {
    coef.resize(0);
  } else {
    coef = fit_ols_fe(in).coef;
  }
  for (const auto& [t, cnt] : per_period) {
    out.periods.push_back(t);
    if (t == out.base) {
      out.values.push_back(100.0);
    } else {
      const auto c = std::find(dummies.begin(), dummies.end(), t) - dummies.begin();
      out.values.push_back(100.0 * std::exp(coef[c]));
    }
  }
  return out;
}

/// One hedonic row per unit and period listed, optionally for a single city.
inline std::vector<HedonicRow> hedonic_rows(const Panel& p, Granularity g,
                                            const std::optional<std::string>& city = std::nullopt) {
  std::map<std::pair<std::string, int>, std::pair<double, int>> acc;
  for (const auto& r : p.rows) {
    if (!std::isfinite(r.price) || !(r.price > 0)) continue;
    if (city && city_of(r.zone_id) != *city) continue;
    auto& a = acc[{r.unit_id, period_index(r.week, g)}];
    a.first += r.price;
    ++a.second;
  }
  std::vector<HedonicRow> out;
  for (const auto& [key, a] : acc) {
    const auto& u = p.unit(key.first);
    out.push_back({u.zone_id, key.second, a.first / a.second, u.x});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Zone aggregates

struct ZoneAggregate {
  std::string zone_id;
  int period = 0;
  double demand = 0.0;     // mean weekly clicks per live ad
  double avprice = kNaN;   // mean asking price per m2
  double liquidity = 0.0;  // delistings / units listed
  int delistings = 0;
  int listings = 0;
  double floorarea = kNaN;  // log mean floor area
  double bath = kNaN;       // share with at least two bathrooms
  double garden = kNaN;     // share with a garden
  double terrace = kNaN;    // share with a terrace
  double hedon = kNaN;      // log city hedonic index
};

inline std::vector<ZoneAggregate> zone_aggregates(const Panel& p, Granularity g, bool with_hedonic = true) {
  struct Acc {
    double clicks = 0.0;
    int ad_weeks = 0;
    double price = 0.0;
    int price_rows = 0;
    std::set<std::string> units;
    int delistings = 0;
  };
  std::map<std::pair<std::string, int>, Acc> acc;
  for (const auto& r : p.rows) {
    auto& a = acc[{r.zone_id, period_index(r.week, g)}];
    a.clicks += r.clicks * 7.0 * r.ads;
    a.ad_weeks += r.ads;
    if (std::isfinite(r.price)) {
      a.price += r.price;
      ++a.price_rows;
    }
    a.units.insert(r.unit_id);
  }
  for (const auto& u : p.units) {
    if (!u.exit_date) continue;
    auto it = acc.find({u.zone_id, period_index(Week::of(*u.exit_date) - 1, g)});
    // Delisting dated to the last listed week's period.
    if (it != acc.end()) ++it->second.delistings;
  }
  std::map<std::pair<std::string, int>, double> hedon;
  if (with_hedonic) {
    std::set<std::string> cities;
    for (const auto& u : p.units) cities.insert(city_of(u.zone_id));
    for (const auto& c : cities) {
      try {
        const auto rows = hedonic_rows(p, g, c);
        const PriceIndex idx = hedonic_index(rows);
        for (std::size_t k = 0; k < idx.periods.size(); ++k) hedon[{c, idx.periods[k]}] = std::log(idx.values[k]);
      } catch (const Error&) {
        // Cities without enough data keep HEDON missing.
      }
    }
  }
  std::vector<ZoneAggregate> out;
  for (const auto& [key, a] : acc) {
    ZoneAggregate z;
    z.zone_id = key.first;
    z.period = key.second;
    z.demand = a.ad_weeks ? a.clicks / a.ad_weeks : 0.0;
    if (a.price_rows) z.avprice = a.price / a.price_rows;
    z.listings = static_cast<int>(a.units.size());
    z.delistings = a.delistings;
    z.liquidity = z.listings ? double(z.delistings) / z.listings : 0.0;
    double area = 0.0;
    int n_area = 0, n_bath = 0, bath2 = 0, n_garden = 0, gardens = 0, n_terrace = 0, terraces = 0;
    for (const auto& id : a.units) {
      const auto& t = p.unit(id).traits;
      if (t.floor_area) {
        area += *t.floor_area;
        ++n_area;
      }
      if (t.bathrooms) {
        ++n_bath;
        bath2 += *t.bathrooms >= 2;
      }
      if (auto gl = t.level(OrderedTrait::garden)) {
        ++n_garden;
        gardens += *gl > 1;
      }
      if (t.flag(BinaryTrait::terrace) != Tri::missing) {
        ++n_terrace;
        terraces += t.flag(BinaryTrait::terrace) == Tri::yes;
      }
    }
    if (n_area) z.floorarea = std::log(area / n_area);
    if (n_bath) z.bath = double(bath2) / n_bath;
    if (n_garden) z.garden = double(gardens) / n_garden;
    if (n_terrace) z.terrace = double(terraces) / n_terrace;
    auto h = hedon.find({city_of(z.zone_id), z.period});
    if (h != hedon.end()) z.hedon = h->second;
    out.push_back(z);
  }
  return out;
}

/// log AVPRICE_t on log AVPRICE_{t-1} and DEMAND at lags one and two, with
/// zone and period effects. Lags must be consecutive periods.
inline RegressionResult model_demand_lead(std::span<const ZoneAggregate> aggs) {
  std::map<std::pair<std::string, int>, const ZoneAggregate*> at;
  for (const auto& z : aggs) at[{z.zone_id, z.period}] = &z;
  indicators_detail::Design d;
  d.names = {"log_AVPRICE_t-1", "DEMAND_t-1", "DEMAND_t-2"};
  d.effects = {{"zone", {}}, {"period", {}}};
  for (const auto& z : aggs) {
    auto l1 = at.find({z.zone_id, z.period - 1});
    auto l2 = at.find({z.zone_id, z.period - 2});
    if (l1 == at.end() || l2 == at.end()) continue;
    if (!(z.avprice > 0) || !(l1->second->avprice > 0)) continue;
    d.add(std::log(z.avprice), {std::log(l1->second->avprice), l1->second->demand, l2->second->demand},
          {z.zone_id, std::to_string(z.period)});
  }
  return fit_ols_fe(indicators_detail::to_input(std::move(d), 3));
}

inline const std::vector<std::string>& supply_responses() {
  static const std::vector<std::string> v{"LIQUIDITY", "FLOORAREA", "BATH", "GARDEN", "TERRACE"};
  return v;
}

/// Supply response on HEDON with zone and period effects, over zones with at
/// least `min_listings` listings in every period.
inline RegressionResult model_supply(std::span<const ZoneAggregate> aggs, const std::string& response,
                                     int min_listings = 50) {
  auto value = [&](const ZoneAggregate& z) {
    if (response == "LIQUIDITY") return z.liquidity;
    if (response == "FLOORAREA") return z.floorarea;
    if (response == "BATH") return z.bath;
    if (response == "GARDEN") return z.garden;
    if (response == "TERRACE") return z.terrace;
    throw ValidationError("unknown supply response '" + response + "'");
  };
  std::set<std::string> thin;
  for (const auto& z : aggs) {
    if (z.listings < min_listings) thin.insert(z.zone_id);
  }
  indicators_detail::Design d;
  d.names = {"HEDON"};
  d.effects = {{"zone", {}}, {"period", {}}};
  for (const auto& z : aggs) {
    if (thin.count(z.zone_id)) continue;
    const double y = value(z);
    if (!std::isfinite(y) || !std::isfinite(z.hedon)) continue;
    d.add(y, {z.hedon}, {z.zone_id, std::to_string(z.period)});
  }
  return fit_ols_fe(indicators_detail::to_input(std::move(d), 1));
}

// ---------------------------------------------------------------------------
// Discounts

enum class DiscountConvention {
  buyer,    // sale = (1 - d) * asking
  literal,  // asking = (1 - d) * sale
};

/// Discount path implied by asking and sale index paths and the initial
/// discount d0. Index values must be positive.
inline std::vector<double> implied_discount(std::span<const double> asking, std::span<const double> sale, double d0,
                                            DiscountConvention c = DiscountConvention::buyer) {
  if (asking.size() != sale.size() || asking.empty()) throw ValidationError("index paths must be non-empty and aligned");
  if (!(d0 >= 0.0 && d0 < 1.0)) throw ValidationError("initial discount must lie in [0, 1)");
  for (std::size_t t = 0; t < asking.size(); ++t) {
    if (!(asking[t] > 0) || !(sale[t] > 0)) throw ValidationError("index values must be positive");
  }
  std::vector<double> d(asking.size());
  for (std::size_t t = 0; t < asking.size(); ++t) {
    const double a = asking[t] / asking[0];
    const double s = sale[t] / sale[0];
    d[t] = c == DiscountConvention::buyer ? 1.0 - (1.0 - d0) * s / a : 1.0 - (1.0 - d0) * a / s;
  }
  return d;
}

/// Sale index path consistent with an asking path and a discount path,
/// starting from `sale0`. Inverse of implied_discount.
inline std::vector<double> implied_sale(std::span<const double> asking, std::span<const double> discount, double sale0,
                                        DiscountConvention c = DiscountConvention::buyer) {
  if (asking.size() != discount.size() || asking.empty()) throw ValidationError("paths must be non-empty and aligned");
  if (!(sale0 > 0)) throw ValidationError("index values must be positive");
  std::vector<double> s(asking.size());
  const double d0 = discount[0];
  for (std::size_t t = 0; t < asking.size(); ++t) {
    if (!(asking[t] > 0) || !(discount[t] < 1.0)) throw ValidationError("index values must be positive");
    const double a = asking[t] / asking[0];
    s[t] = c == DiscountConvention::buyer ? sale0 * a * (1.0 - discount[t]) / (1.0 - d0)
                                          : sale0 * a * (1.0 - d0) / (1.0 - discount[t]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Validation against external series

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InsufficientDataError("need at least two paired values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw InsufficientDataError("correlation undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

struct TomSummary {
  std::size_t count = 0;
  double mean = kNaN;
  double p25 = kNaN;
  double median = kNaN;
  double p75 = kNaN;
};

struct ValidationReport {
  std::optional<double> delisting_sales_corr;
  std::size_t delisting_points = 0;
  std::optional<double> price_corr;
  std::optional<double> mean_discount;
  std::size_t price_points = 0;
  TomSummary tom;
};

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Quarterly city delistings vs sales, zone asking prices per m2 vs the mean
/// of the official price bounds, the implied mean discount, and the TOM
/// distribution of exited units.
inline ValidationReport validation_stats(std::span<const HousingUnit> units,
                                         std::span<const ExternalObservation> external,
                                         std::size_t min_points = 3) {
  ValidationReport rep;
  std::map<std::pair<std::string, std::string>, double> sales, bounds;
  for (const auto& e : external) {
    if (e.kind == SeriesKind::city_sales) sales[{e.zone_or_city, e.period}] = e.value1;
    if (e.kind == SeriesKind::zone_price_bounds) bounds[{e.zone_or_city, e.period}] = mean_zone_price(e.value1, e.value2);
  }
  if (sales.empty() && bounds.empty()) throw InsufficientDataError("no sales or price-bound series to compare");

  if (!sales.empty()) {
    std::map<std::pair<std::string, std::string>, double> delist;
    for (const auto& u : units) {
      if (u.exit_date) delist[{city_of(u.zone_id), quarter_label(*u.exit_date)}] += 1.0;
    }
    std::vector<double> x, y;
    for (const auto& [key, s] : sales) {
      auto it = delist.find(key);
      x.push_back(it == delist.end() ? 0.0 : it->second);
      y.push_back(s);
    }
    if (x.size() < min_points) throw InsufficientDataError("too few city-quarters overlap the sales series");
    rep.delisting_points = x.size();
    rep.delisting_sales_corr = pearson(x, y);
  }

  if (!bounds.empty()) {
    // Units count in every half-year their listing spell overlaps.
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> asking;
    std::set<std::string> halves;
    for (const auto& [key, v] : bounds) halves.insert(key.second);
    for (const auto& u : units) {
      if (!u.traits.floor_area || !(*u.traits.floor_area > 0)) continue;
      const std::string from = half_label(u.entry_date);
      const std::string to = u.exit_date ? half_label(*u.exit_date - std::chrono::days{1}) : std::string("9999-H9");
      for (const auto& h : halves) {
        if (h < from || h > to) continue;
        auto& a = asking[{u.zone_id, h}];
        a.first += u.asking_price / *u.traits.floor_area;
        ++a.second;
      }
    }
    std::vector<double> x, y;
    double disc = 0.0;
    for (const auto& [key, pbar] : bounds) {
      auto it = asking.find(key);
      if (it == asking.end()) continue;
      const double m = it->second.first / it->second.second;
      x.push_back(m);
      y.push_back(pbar);
      disc += 1.0 - pbar / m;
    }
    if (x.empty()) throw InsufficientDataError("no zone-period overlaps the price-bound series");
    rep.price_points = x.size();
    rep.mean_discount = disc / static_cast<double>(x.size());
    if (x.size() >= min_points) {
      try {
        rep.price_corr = pearson(x, y);
      } catch (const InsufficientDataError&) {
      }
    }
  }

  std::vector<double> tom;
  for (const auto& u : units) {
    if (u.exit_date) tom.push_back(days_between(u.entry_date, *u.exit_date));
  }
  std::sort(tom.begin(), tom.end());
  rep.tom.count = tom.size();
  if (!tom.empty()) {
    rep.tom.mean = std::accumulate(tom.begin(), tom.end(), 0.0) / static_cast<double>(tom.size());
    rep.tom.p25 = quantile_sorted(tom, 0.25);
    rep.tom.median = quantile_sorted(tom, 0.5);
    rep.tom.p75 = quantile_sorted(tom, 0.75);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Tables

inline void write_result_csv(const std::filesystem::path& path, const RegressionResult& r) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out.precision(10);
  out << "term,estimate,std_error,t_stat\n";
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    out << r.names[j] << ',' << r.coef[k] << ',' << r.se[k] << ',' << r.coef[k] / r.se[k] << '\n';
  }
  out << "#observations," << r.observations << ",,\n";
  out << "#absorbed_groups," << r.absorbed_groups << ",,\n";
}

inline void write_panel_csv(const std::filesystem::path& path, const Panel& p) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out.precision(10);
  out << "unit_id,zone_id,week,ads,DUPL,NEWDUPL,CLICKS,PRICE,z\n";
  for (const auto& r : p.rows) {
    out << r.unit_id << ',' << r.zone_id << ',' << r.week.label() << ',' << r.ads << ',' << r.dupl << ','
        << r.newdupl << ',' << r.clicks << ',';
    if (std::isfinite(r.price)) out << r.price;
    out << ',' << r.z << '\n';
  }
}

inline void write_unit_summary_csv(const std::filesystem::path& path, const Panel& p) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out.precision(10);
  auto num = [&](double v) {
    if (std::isfinite(v)) out << v;
  };
  out << "unit_id,zone_id,entry_date,exit_date,member_ads,TOM,PRICEREF,ONLINT,ONLINT2,price_m2,relprice\n";
  for (const auto& u : p.units) {
    out << u.unit_id << ',' << u.zone_id << ',' << format_date(u.entry_date) << ','
        << (u.exit_date ? format_date(*u.exit_date) : std::string()) << ',' << u.member_ads << ',';
    num(u.tom_days);
    out << ',' << u.priceref << ',';
    num(u.onlint);
    out << ',';
    num(u.onlint2);
    out << ',';
    num(u.price_m2);
    out << ',';
    num(u.relprice);
    out << '\n';
  }
}

inline void write_zone_aggregates_csv(const std::filesystem::path& path, std::span<const ZoneAggregate> aggs,
                                      Granularity g) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out.precision(10);
  auto num = [&](double v) {
    if (std::isfinite(v)) out << v;
  };
  out << "zone_id,period,DEMAND,AVPRICE,LIQUIDITY,delistings,listings,FLOORAREA,BATH,GARDEN,TERRACE,HEDON\n";
  for (const auto& z : aggs) {
    out << z.zone_id << ',' << period_label(z.period, g) << ',' << z.demand << ',';
    num(z.avprice);
    out << ',' << z.liquidity << ',' << z.delistings << ',' << z.listings << ',';
    for (double v : {z.floorarea, z.bath, z.garden, z.terrace}) {
      num(v);
      out << ',';
    }
    num(z.hedon);
    out << '\n';
  }
}

}  // namespace homelist
