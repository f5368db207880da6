#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homelist/blocking.hpp"
#include "homelist/cluster.hpp"
#include "homelist/error.hpp"
#include "homelist/ingest.hpp"
#include "homelist/listing_model.hpp"
#include "homelist/normalize.hpp"
#include "homelist/pair_classifier.hpp"
#include "homelist/regression.hpp"

namespace homelist {

struct PipelineConfig {
  BlockingParams blocking;
  // Units that exited at most this many weeks ago still take part in
  // matching, so an ad re-posted after a short gap rejoins its dwelling.
  int lookback_weeks = 8;
  SimilarityRatio similarity;
  unsigned workers = 1;
};

/// What the pipeline needs besides its state.
struct PipelineContext {
  const TrainedModelPair& model;
  const EmbeddingProvider& embeddings;
  PipelineConfig config;
};

struct AuditEvent {
  enum class Kind { cluster, detach, delete_unit, exit, edge_removed };
  Week week;
  Kind kind = Kind::cluster;
  std::string unit_id;
  std::vector<std::string> ad_ids;              // ads placed into / detached from the unit
  std::vector<std::string> pre_existing_units;  // cluster events: units the cluster contained
  std::optional<RemovedEdge> edge;              // edge_removed events
};

inline const char* to_string(AuditEvent::Kind k) {
  switch (k) {
    case AuditEvent::Kind::cluster: return "cluster";
    case AuditEvent::Kind::detach: return "detach";
    case AuditEvent::Kind::delete_unit: return "delete_unit";
    case AuditEvent::Kind::exit: return "exit";
    case AuditEvent::Kind::edge_removed: return "edge_removed";
  }
  return "?";
}

struct PipelineState {
  std::optional<Week> week;                    // last processed week
  std::map<std::string, Ad> ads;               // every ad seen, with accumulated history
  std::map<std::string, std::string> unit_of;  // ad id -> unit id
  std::map<std::string, HousingUnit> units;
  std::vector<AuditEvent> audit;
  std::uint64_t next_unit = 1;

  std::string new_unit_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "U%07llu", static_cast<unsigned long long>(next_unit++));
    return buf;
  }

  std::size_t live_ads() const {
    return static_cast<std::size_t>(
        std::count_if(ads.begin(), ads.end(), [](const auto& kv) { return !kv.second.removed_on; }));
  }

  /// Ad id -> unit id for every ad.
  std::map<std::string, std::string> partition() const { return unit_of; }
};

namespace detail {

inline const std::string kAdPrefix = "a:";
inline const std::string kUnitPrefix = "u:";

inline void reaggregate(PipelineState& s, const std::string& unit_id) {
  HousingUnit& u = s.units.at(unit_id);
  std::vector<Ad> members;
  members.reserve(u.member_ad_ids.size());
  for (const auto& id : u.member_ad_ids) members.push_back(s.ads.at(id));
  u = aggregate_unit(members, unit_id);
}

/// A unit seen as an ad: aggregated traits and location, the description of
/// its earliest member, and an agency only when every member shares it.
inline Ad unit_as_ad(const PipelineState& s, const HousingUnit& u) {
  Ad ad;
  ad.id = u.id;
  ad.zone_id = u.zone_id;
  ad.location = u.location;
  ad.asking_price = u.asking_price;
  ad.traits = u.traits;
  ad.created_on = u.entry_date;
  const Ad* earliest = nullptr;
  std::optional<std::string> agency;
  bool shared = true;
  for (const auto& id : u.member_ad_ids) {
    const Ad& m = s.ads.at(id);
    if (!earliest || std::tie(m.created_on, m.id) < std::tie(earliest->created_on, earliest->id)) {
      earliest = &m;
    }
    if (!agency) agency = m.agency_id;
    else if (*agency != m.agency_id) shared = false;
  }
  ad.description = earliest->description;
  if (shared && agency) ad.agency_id = *agency;
  return ad;
}

/// Matches `probes` (ads in no unit) against each other and against
/// `candidate_units`, clusters, and commits the result to the state.
using PairFilter = std::function<bool(const Ad&, const Ad&)>;

inline void match_and_commit(PipelineState& s, const std::vector<std::string>& probe_ids,
                             const std::vector<std::string>& candidate_units, Week week,
                             const PipelineContext& ctx, const PairFilter& admissible = {}) {
  if (probe_ids.empty()) return;
  std::vector<Ad> pseudo;
  pseudo.reserve(candidate_units.size());
  for (const auto& uid : candidate_units) pseudo.push_back(unit_as_ad(s, s.units.at(uid)));

  std::vector<const Ad*> recs;
  std::vector<BlockRecord> blocks;
  std::vector<std::string> node_ids;
  for (const auto& id : probe_ids) {
    const Ad& ad = s.ads.at(id);
    recs.push_back(&ad);
    blocks.push_back({ad.id, ad.agency_id, city_of(ad.zone_id), ad.location, ad.asking_price, true});
    node_ids.push_back(kAdPrefix + ad.id);
  }
  for (const Ad& ad : pseudo) {
    recs.push_back(&ad);
    blocks.push_back({ad.id, ad.agency_id, city_of(ad.zone_id), ad.location, ad.asking_price, false});
    node_ids.push_back(kUnitPrefix + ad.id);
  }

  auto pairs = candidate_pairs(blocks, ctx.config.blocking, ctx.config.workers);
  if (admissible) {
    std::erase_if(pairs, [&](const CandidatePair& p) { return !admissible(*recs[p.a], *recs[p.b]); });
  }

  // Embeddings only for records that take part in a cross-agency pair.
  std::vector<char> needs(recs.size(), 0);
  for (const auto& p : pairs) {
    if (!p.same_agency) needs[p.a] = needs[p.b] = 1;
  }
  std::vector<std::optional<EmbeddingVector>> emb(recs.size());
  parallel_for(recs.size(), ctx.config.workers, [&](std::size_t i) {
    if (needs[i] && !recs[i]->description.empty()) {
      emb[i] = ctx.embeddings.embed(recs[i]->id, recs[i]->description);
    }
  });
  std::vector<PairFeatures> features(pairs.size());
  parallel_for(pairs.size(), ctx.config.workers, [&](std::size_t k) {
    const auto& p = pairs[k];
    features[k] = extract_features(*recs[p.a], *recs[p.b], ctx.embeddings,
                                   emb[p.a] ? &*emb[p.a] : nullptr, emb[p.b] ? &*emb[p.b] : nullptr);
  });
  const auto edges = classify(ctx.model, pairs, features, ctx.config.workers);

  DuplicateGraph g;
  for (std::size_t i = 0; i < probe_ids.size(); ++i) g.add_node(node_ids[i]);
  for (const auto& e : edges) {
    const bool ua = e.a >= probe_ids.size(), ub = e.b >= probe_ids.size();
    g.add_node(node_ids[e.a], ua);
    g.add_node(node_ids[e.b], ub);
    g.add_edge(node_ids[e.a], node_ids[e.b], e.probability);
  }
  const ClusterResult result = resolve_clusters(g, ctx.config.workers, ctx.config.similarity);
  for (const auto& r : result.removed) {
    AuditEvent ev;
    ev.week = week;
    ev.kind = AuditEvent::Kind::edge_removed;
    ev.edge = r;
    s.audit.push_back(std::move(ev));
  }

  for (const auto& cluster : result.clusters) {
    std::vector<std::string> ads, units;
    for (const auto& node : cluster) {
      if (node.rfind(kAdPrefix, 0) == 0) ads.push_back(node.substr(kAdPrefix.size()));
      else units.push_back(node.substr(kUnitPrefix.size()));
    }
    if (ads.empty()) continue;  // a lone unit that lost all its probe edges
    AuditEvent ev;
    ev.week = week;
    ev.kind = AuditEvent::Kind::cluster;
    ev.ad_ids = ads;
    ev.pre_existing_units = units;
    if (units.size() > 1) throw Error("internal", "cluster holds more than one pre-existing unit");
    std::string uid;
    if (units.empty()) {
      uid = s.new_unit_id();
      HousingUnit u;
      u.id = uid;
      s.units.emplace(uid, u);
    } else {
      uid = units.front();
    }
    auto& members = s.units.at(uid).member_ad_ids;
    for (const auto& a : ads) {
      members.push_back(a);
      s.unit_of[a] = uid;
    }
    std::sort(members.begin(), members.end());
    reaggregate(s, uid);
    ev.unit_id = uid;
    s.audit.push_back(std::move(ev));
  }
}

}  // namespace detail

/// Advances the state by one week: records removals and clicks, detaches
/// updated ads, then matches new and updated ads against each other and
/// against current (and recently exited) units.
inline void process_week(PipelineState& s, const WeekDelta& delta, const PipelineContext& ctx) {
  if (!ctx.model.trained()) throw ModelError("model pair is not trained");
  if (s.week && !(*s.week < delta.week)) {
    throw ValidationError("week " + delta.week.label() + " is not after " + s.week->label());
  }
  const Week week = delta.week;
  const Date monday = week.monday();

  // Removals: the ad disappears from the first snapshot it is absent from.
  std::set<std::string> touched_units;
  for (const auto& id : delta.removed_ad_ids) {
    auto it = s.ads.find(id);
    if (it == s.ads.end() || it->second.removed_on) continue;
    it->second.removed_on = std::max(monday, it->second.created_on);
    touched_units.insert(s.unit_of.at(id));
  }

  // Clicks and current prices of every visible ad.
  for (const auto& [id, clicks] : delta.click_updates) {
    auto it = s.ads.find(id);
    if (it != s.ads.end()) {
      it->second.clicks_by_week[week] = clicks;
      it->second.price_by_week[week] = it->second.asking_price;
    }
  }

  // Ads that come back after having been removed are handled like updates.
  std::vector<const Ad*> updates;
  std::vector<const Ad*> fresh_ads;
  for (const Ad& ad : delta.updated_ads) updates.push_back(&ad);
  for (const Ad& ad : delta.new_ads) (s.ads.count(ad.id) ? updates : fresh_ads).push_back(&ad);

  std::vector<std::string> probes;
  for (const Ad* up : updates) {
    const Ad& updated = *up;
    auto it = s.ads.find(updated.id);
    if (it == s.ads.end()) continue;
    Ad merged = updated;
    merged.clicks_by_week = it->second.clicks_by_week;
    merged.price_by_week = it->second.price_by_week;
    for (const auto& [w, c] : updated.clicks_by_week) merged.clicks_by_week[w] = c;
    merged.price_by_week[week] = updated.asking_price;
    merged.removed_on.reset();
    it->second = std::move(merged);

    const std::string uid = s.unit_of.at(updated.id);
    auto& members = s.units.at(uid).member_ad_ids;
    members.erase(std::remove(members.begin(), members.end(), updated.id), members.end());
    s.unit_of.erase(updated.id);
    s.audit.push_back({week, AuditEvent::Kind::detach, uid, {updated.id}, {}, std::nullopt});
    if (members.empty()) {
      s.units.erase(uid);
      touched_units.erase(uid);
      s.audit.push_back({week, AuditEvent::Kind::delete_unit, uid, {}, {}, std::nullopt});
    } else {
      touched_units.insert(uid);
    }
    probes.push_back(updated.id);
  }
  for (const Ad* fresh : fresh_ads) {
    Ad ad = *fresh;
    ad.removed_on.reset();
    ad.price_by_week[week] = ad.asking_price;
    probes.push_back(ad.id);
    s.ads.emplace(ad.id, std::move(ad));
  }

  for (const auto& uid : touched_units) {
    const bool was_active = s.units.at(uid).active();
    detail::reaggregate(s, uid);
    if (was_active && !s.units.at(uid).active()) {
      s.audit.push_back({week, AuditEvent::Kind::exit, uid, {}, {}, std::nullopt});
    }
  }

  std::vector<std::string> candidates;
  const Date horizon = monday - std::chrono::days{7 * ctx.config.lookback_weeks};
  for (const auto& [uid, u] : s.units) {
    if (u.active() || *u.exit_date >= horizon) candidates.push_back(uid);
  }
  std::sort(probes.begin(), probes.end());
  detail::match_and_commit(s, probes, candidates, week, ctx);
  s.week = week;
}

/// True when two listing spells come within `lookback_weeks` of each other,
/// the same reach the incremental run gives exited units.
inline bool spells_within_lookback(const Ad& a, const Ad& b, int lookback_weeks) {
  const Ad& first = a.created_on <= b.created_on ? a : b;
  const Ad& second = &first == &a ? b : a;
  if (!first.removed_on) return true;
  return days_between(*first.removed_on, second.created_on) <= 7 * lookback_weeks;
}

/// One-shot deduplication of a set of ads (with their final removal dates).
/// Ads whose listing spells lie more than the lookback apart are never
/// compared, as in the incremental run.
inline PipelineState batch_dedup(std::span<const Ad> ads, const PipelineContext& ctx) {
  if (!ctx.model.trained()) throw ModelError("model pair is not trained");
  PipelineState s;
  std::vector<std::string> ids;
  Week last{std::numeric_limits<int>::min()};
  for (const Ad& ad : ads) {
    if (!s.ads.emplace(ad.id, ad).second) throw ValidationError("duplicate ad id " + ad.id);
    ids.push_back(ad.id);
    last = std::max(last, Week::of(ad.removed_on.value_or(ad.created_on)));
  }
  std::sort(ids.begin(), ids.end());
  const int lookback = ctx.config.lookback_weeks;
  detail::match_and_commit(s, ids, {}, last, ctx, [lookback](const Ad& a, const Ad& b) {
    return spells_within_lookback(a, b, lookback);
  });
  if (!ads.empty()) s.week = last;
  return s;
}

// ---------------------------------------------------------------------------
// Post-filters

inline bool passes_min_duration(const HousingUnit& u, int min_days = 14) {
  return u.active() || days_between(u.entry_date, *u.exit_date) >= min_days;
}

inline std::vector<HousingUnit> filter_min_duration(std::span<const HousingUnit> units, int min_days = 14) {
  std::vector<HousingUnit> out;
  for (const auto& u : units) {
    if (passes_min_duration(u, min_days)) out.push_back(u);
  }
  return out;
}

struct HedonicFilterParams {
  double low = 0.5;
  double high = 1.5;
  std::size_t min_units_per_city = 30;
  // Cities with too few units are passed through instead of raising.
  bool skip_small_cities = false;
};

struct HedonicFilterReport {
  std::map<std::string, double> ratio;  // unit id -> asking / predicted
  std::vector<std::string> skipped_cities;
  std::size_t dropped = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mode_value(const std::vector<double>& v) {
  std::map<double, int> c;
  for (double x : v) ++c[x];
  return std::max_element(c.begin(), c.end(), [](const auto& a, const auto& b) {
           return a.second < b.second;
         })->first;
}

}  // namespace detail

/// Ratio of each unit's asking price per m² to the hedonic prediction, per
/// city: log(price/m²) on log floor area, bathrooms, maintenance level,
/// elevator and floor plus zone intercepts. Missing regressors are imputed
/// with the zone median (mode for the elevator dummy), falling back to the
/// city value; a regressor missing everywhere in a city is left out. Units
/// without a floor area have no ratio and are kept.
inline std::vector<HousingUnit> filter_hedonic_ratio(std::span<const HousingUnit> units,
                                                     const HedonicFilterParams& params = {},
                                                     HedonicFilterReport* report = nullptr) {
  HedonicFilterReport local;
  HedonicFilterReport& rep = report ? *report : local;
  std::map<std::string, std::vector<std::size_t>> by_city;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].traits.floor_area) by_city[city_of(units[i].zone_id)].push_back(i);
  }

  using Getter = std::function<std::optional<double>(const HousingUnit&)>;
  struct Reg {
    std::string name;
    Getter get;
    bool categorical;
  };
  const std::vector<Reg> regs{
      {"log_floor_area", [](const HousingUnit& u) { return std::optional(std::log(*u.traits.floor_area)); }, false},
      {"bathrooms", [](const HousingUnit& u) {
         return u.traits.bathrooms ? std::optional<double>(*u.traits.bathrooms) : std::nullopt; }, false},
      {"maintenance", [](const HousingUnit& u) {
         const auto& m = u.traits.level(OrderedTrait::maintenance);
         return m ? std::optional<double>(*m) : std::nullopt; }, false},
      {"elevator", [](const HousingUnit& u) {
         const Tri e = u.traits.flag(BinaryTrait::elevator);
         return e == Tri::missing ? std::nullopt : std::optional<double>(e == Tri::yes ? 1.0 : 0.0); }, true},
      {"floor", [](const HousingUnit& u) {
         return u.traits.floor ? std::optional<double>(*u.traits.floor) : std::nullopt; }, false},
  };

  std::set<std::size_t> dropped;
  for (const auto& [city, idx] : by_city) {
    if (idx.size() < params.min_units_per_city) {
      if (params.skip_small_cities) {
        rep.skipped_cities.push_back(city);
        continue;
      }
      throw InsufficientDataError("city '" + city + "' has " + std::to_string(idx.size()) +
                                  " units with floor area; need " +
                                  std::to_string(params.min_units_per_city));
    }
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    std::vector<std::vector<double>> cols;
    std::vector<std::string> names;
    FixedEffect zone{"zone", {}};
    for (const auto i : idx) zone.groups.push_back(units[i].zone_id);
    for (const auto& reg : regs) {
      std::map<std::string, std::vector<double>> per_zone;
      std::vector<double> all;
      std::vector<std::optional<double>> raw;
      for (const auto i : idx) {
        auto v = reg.get(units[i]);
        raw.push_back(v);
        if (v) {
          per_zone[units[i].zone_id].push_back(*v);
          all.push_back(*v);
        }
      }
      if (all.empty()) continue;
      auto fill = [&](const std::vector<double>& v) {
        return reg.categorical ? detail::mode_value(v) : detail::median(v);
      };
      const double city_fill = fill(all);
      std::map<std::string, double> zone_fill;
      for (const auto& [z, v] : per_zone) zone_fill[z] = fill(v);
      std::vector<double> col;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (raw[r]) col.push_back(*raw[r]);
        else if (auto it = zone_fill.find(units[idx[r]].zone_id); it != zone_fill.end()) col.push_back(it->second);
        else col.push_back(city_fill);
      }
      cols.push_back(std::move(col));
      names.push_back(reg.name);
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& u = units[idx[r]];
      y[static_cast<Eigen::Index>(r)] = std::log(u.asking_price / *u.traits.floor_area);
    }
    // Drop regressors that do not vary within zones in this city.
    RegressionInput in;
    in.y = y;
    in.effects = {zone};
    std::vector<std::vector<double>> kept_cols;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      std::map<std::string, std::pair<double, double>> range;
      bool varies = false;
      for (std::size_t r = 0; r < idx.size() && !varies; ++r) {
        auto [it, fresh] = range.emplace(zone.groups[r], std::pair{cols[c][r], cols[c][r]});
        if (!fresh && it->second.first != cols[c][r]) varies = true;
      }
      if (varies) {
        kept_cols.push_back(cols[c]);
        in.names.push_back(names[c]);
      }
    }
    in.X.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(kept_cols.size()));
    for (std::size_t c = 0; c < kept_cols.size(); ++c) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        in.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = kept_cols[c][r];
      }
    }
    Eigen::VectorXd resid;
    if (in.X.cols() == 0) {
      // Zone means only.
      std::map<std::string, std::pair<double, int>> mean;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        auto& m = mean[zone.groups[r]];
        m.first += y[static_cast<Eigen::Index>(r)];
        ++m.second;
      }
      resid.resize(y.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& m = mean[zone.groups[r]];
        resid[static_cast<Eigen::Index>(r)] = y[static_cast<Eigen::Index>(r)] - m.first / m.second;
      }
    } else {
      resid = fit_ols_fe(in).residuals;
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double ratio = std::exp(resid[static_cast<Eigen::Index>(r)]);
      rep.ratio[units[idx[r]].id] = ratio;
      if (ratio < params.low || ratio > params.high) dropped.insert(idx[r]);
    }
  }
  std::vector<HousingUnit> out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!dropped.count(i)) out.push_back(units[i]);
  }
  rep.dropped = dropped.size();
  return out;
}

struct FilterConfig {
  bool min_duration = true;
  int min_duration_days = 14;
  bool hedonic_ratio = true;
  HedonicFilterParams hedonic{0.5, 1.5, 30, true};
};

inline std::vector<HousingUnit> apply_filters(std::span<const HousingUnit> units, const FilterConfig& cfg,
                                              HedonicFilterReport* report = nullptr) {
  std::vector<HousingUnit> out(units.begin(), units.end());
  if (cfg.min_duration) out = filter_min_duration(out, cfg.min_duration_days);
  if (cfg.hedonic_ratio) out = filter_hedonic_ratio(out, cfg.hedonic, report);
  return out;
}

// ---------------------------------------------------------------------------
// Streams

struct StreamResult {
  PipelineState state;
  std::vector<HousingUnit> filtered_units;
  HedonicFilterReport hedonic;
};

using SnapshotLoader = std::function<Snapshot(std::size_t)>;

/// Processes `count` snapshots in order: the first as a batch (nothing to
/// match against yet), the rest incrementally; filters run at the end.
inline StreamResult run_stream(std::size_t count, const SnapshotLoader& load, const PipelineContext& ctx,
                               const FilterConfig& filters = {},
                               const std::function<void(const PipelineState&)>& on_week = {}) {
  if (count == 0) throw ValidationError("no snapshots to process");
  StreamResult r;
  Snapshot prev;
  for (std::size_t k = 0; k < count; ++k) {
    Snapshot next = load(k);
    if (k == 0) prev.week = next.week - 1;
    const WeekDelta delta = diff_snapshots(prev, next);
    process_week(r.state, delta, ctx);
    if (on_week) on_week(r.state);
    prev = std::move(next);
  }
  std::vector<HousingUnit> all;
  for (const auto& [id, u] : r.state.units) all.push_back(u);
  r.filtered_units = apply_filters(all, filters, &r.hedonic);
  return r;
}

inline StreamResult run_stream(std::span<const Snapshot> snapshots, const PipelineContext& ctx,
                               const FilterConfig& filters = {}) {
  return run_stream(snapshots.size(), [&](std::size_t k) { return snapshots[k]; }, ctx, filters);
}

// ---------------------------------------------------------------------------
// Output files

inline nlohmann::json unit_to_json(const HousingUnit& u, const LevelSchemes& schemes = LevelSchemes::defaults()) {
  nlohmann::json j = characteristics_to_json(u.traits, schemes);
  j["id"] = u.id;
  j["zone_id"] = u.zone_id;
  j["lat"] = u.location.lat;
  j["lon"] = u.location.lon;
  j["price"] = u.asking_price;
  j["entry_date"] = format_date(u.entry_date);
  if (u.exit_date) j["exit_date"] = format_date(*u.exit_date);
  j["members"] = u.member_ad_ids;
  return j;
}

inline HousingUnit unit_from_json(const nlohmann::json& j, const LevelSchemes& schemes = LevelSchemes::defaults()) {
  try {
    nlohmann::json fields = j;
    for (const char* key : {"members", "entry_date", "exit_date"}) fields.erase(key);
    FieldMap raw = json_to_fields(fields);
    raw["created_on"] = j.at("entry_date").get<std::string>();
    auto v = validate_ad(raw, schemes);
    if (!v.ok()) {
      std::string msg;
      for (const auto& e : v.errors) msg += (msg.empty() ? "" : "; ") + e;
      throw ValidationError("unit record: " + msg);
    }
    HousingUnit u;
    u.id = v.ad->id;
    u.zone_id = v.ad->zone_id;
    u.location = v.ad->location;
    u.asking_price = v.ad->asking_price;
    u.traits = v.ad->traits;
    u.entry_date = v.ad->created_on;
    if (j.contains("exit_date")) {
      auto d = parse_date(j.at("exit_date").get<std::string>());
      if (!d) throw ValidationError("malformed exit_date");
      u.exit_date = *d;
    }
    u.member_ad_ids = j.at("members").get<std::vector<std::string>>();
    if (u.member_ad_ids.empty()) throw ValidationError("unit " + u.id + " has no members");
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed unit record: ") + e.what());
  }
}

inline void write_units(const std::filesystem::path& path, std::span<const HousingUnit> units) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& u : units) out << unit_to_json(u).dump() << '\n';
}

inline std::vector<HousingUnit> read_units(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<HousingUnit> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(unit_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json audit_to_json(const AuditEvent& e) {
  nlohmann::json j{{"week", e.week.label()}, {"event", to_string(e.kind)}};
  if (!e.unit_id.empty()) j["unit"] = e.unit_id;
  if (!e.ad_ids.empty()) j["ads"] = e.ad_ids;
  if (e.kind == AuditEvent::Kind::cluster) j["pre_existing_units"] = e.pre_existing_units;
  if (e.edge) {
    j["edge"] = {e.edge->u, e.edge->v};
    j["probability"] = e.edge->weight;
    j["reason"] = to_string(e.edge->reason);
  }
  return j;
}

inline void write_audit(const std::filesystem::path& path, std::span<const AuditEvent> events) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& e : events) out << audit_to_json(e).dump() << '\n';
}

/// "ad_id,unit_id" rows.
inline void write_assignment(const std::filesystem::path& path, const std::map<std::string, std::string>& unit_of) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "ad_id,unit_id\n";
  for (const auto& [ad, unit] : unit_of) out << ad << ',' << unit << '\n';
}

inline std::map<std::string, std::string> read_assignment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("ad_id", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected ad_id,unit_id");
    std::string unit = line.substr(comma + 1);
    if (!unit.empty() && unit.back() == '\r') unit.pop_back();
    if (!out.emplace(line.substr(0, comma), unit).second) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": repeated ad id");
    }
  }
  return out;
}

/// Weekly ad history ("ad_id,week,clicks,price"): one row per ad and week in
/// which the ad was visible.
struct AdWeek {
  std::string ad_id;
  Week week;
  int clicks = 0;
  double price = 0.0;
};

inline void write_history(const std::filesystem::path& path, const std::map<std::string, Ad>& ads) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "ad_id,week,clicks,price\n";
  out.precision(12);
  for (const auto& [id, ad] : ads) {
    for (const auto& [w, c] : ad.clicks_by_week) {
      auto p = ad.price_by_week.find(w);
      out << id << ',' << w.label() << ',' << c << ',' << (p == ad.price_by_week.end() ? ad.asking_price : p->second) << '\n';
    }
  }
}

inline std::vector<AdWeek> read_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<AdWeek> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("ad_id", 0) == 0)) continue;
    std::stringstream ss(line);
    std::string id, wk, clicks, price;
    std::getline(ss, id, ',');
    std::getline(ss, wk, ',');
    std::getline(ss, clicks, ',');
    std::getline(ss, price, ',');
    auto w = Week::parse(wk);
    auto c = detail::to_int(clicks);
    auto p = detail::to_double(price);
    if (!w || !c || !p || *c < 0 || *p <= 0) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed history row");
    }
    out.push_back({id, *w, *c, *p});
  }
  return out;
}

}  // namespace homelist
