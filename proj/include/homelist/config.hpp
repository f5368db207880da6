#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "homelist/blocking.hpp"
#include "homelist/cluster.hpp"
#include "homelist/decision_tree.hpp"
#include "homelist/error.hpp"
#include "homelist/indicators.hpp"
#include "homelist/synth.hpp"
#include "homelist/time_machine.hpp"

namespace homelist {

/// Everything a command-line run can be configured with. Every field has a
/// default; a JSON file overrides any subset, and flags override the file.
struct RunConfig {
  std::uint64_t seed = 1;
  unsigned workers = 1;

  struct Paths {
    std::string snapshots;
    std::string model;
    std::string out;
  } paths;

  BlockingParams blocking;
  TreeParams tree;
  double threshold = 0.5;
  int repetitions = 100;
  double train_fraction = 0.9;
  SimilarityRatio similarity;
  int lookback_weeks = 8;
  FilterConfig filters;
  TrainingSampleOptions training;
  GeneratorConfig generator;
  Granularity period = Granularity::quarter;
  TomOptions tom;
  PricerefOptions priceref;
  int supply_min_listings = 50;

  void validate() const {
    if (!(blocking.radius_m > 0) || !(blocking.max_rel_price_gap > 0) || !(blocking.max_abs_price_gap > 0)) {
      throw ValidationError("blocking thresholds must be positive");
    }
    if (!(threshold > 0 && threshold < 1)) throw ValidationError("classification threshold must lie in (0, 1)");
    if (tree.min_leaf <= 0 || tree.max_depth <= 0 || tree.boosting_trials <= 0) {
      throw ValidationError("tree parameters must be positive");
    }
    if (!(tree.prune_confidence > 0 && tree.prune_confidence < 1)) {
      throw ValidationError("pruning confidence must lie in (0, 1)");
    }
    if (repetitions <= 0 || !(train_fraction > 0 && train_fraction < 1)) {
      throw ValidationError("evaluation needs positive repetitions and a train fraction in (0, 1)");
    }
    similarity.validate();
    if (lookback_weeks < 0 || filters.min_duration_days < 0) throw ValidationError("week and day counts must be nonnegative");
    if (!(filters.hedonic.low > 0 && filters.hedonic.low < filters.hedonic.high)) {
      throw ValidationError("hedonic ratio bounds must satisfy 0 < low < high");
    }
    if (tom.followup_weeks < 0 || priceref.min_listed_weeks < 1 || supply_min_listings < 0) {
      throw ValidationError("indicator sample rules must be nonnegative");
    }
    generator.validate();
  }

  PipelineConfig pipeline() const {
    PipelineConfig p;
    p.blocking = blocking;
    p.lookback_weeks = lookback_weeks;
    p.similarity = similarity;
    p.workers = workers;
    return p;
  }

  MonteCarloParams monte_carlo() const {
    MonteCarloParams m;
    m.repetitions = repetitions;
    m.train_fraction = train_fraction;
    m.seed = seed;
    m.tree = tree;
    m.threshold = threshold;
    m.workers = workers;
    return m;
  }
};

namespace config_detail {

using json = nlohmann::json;

// Reads the listed keys of an object and rejects any other key.
class Reader {
public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParseError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ParseError(where_ + ": unknown key '" + k + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ParseError("");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw ParseError("");
        if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer()) throw ParseError("");
          if constexpr (std::is_unsigned_v<T>) {
            if (it->is_number_integer() && it->get<std::int64_t>() < 0) throw ParseError("");
          }
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ParseError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ParseError(where_ + "." + key + ": wrong type");
    }
  }

  const json* object(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& where() const { return where_; }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void read_generator(const json& j, GeneratorConfig& g) {
  Reader r(j, "generator");
  r.get("cities", g.cities);
  r.get("city_size", g.city_size);
  r.get("stock_per_city", g.stock_per_city);
  r.get("zone_extent_m", g.zone_extent_m);
  r.get("weeks", g.weeks);
  std::string start;
  r.get("start", start);
  if (!start.empty()) {
    auto d = parse_date(start);
    if (!d) throw ParseError("generator.start: expected YYYY-MM-DD");
    g.start = *d;
  }
  r.get("burn_in_weeks", g.burn_in_weeks);
  r.get("base_price_m2", g.base_price_m2);
  r.get("overpricing_sd", g.overpricing_sd);
  r.get("outlier_share", g.outlier_share);
  r.get("tom_median_days", g.tom_median_days);
  r.get("tom_elasticity", g.tom_elasticity);
  r.get("tom_noise_sd", g.tom_noise_sd);
  r.get("revision_base_prob", g.revision_base_prob);
  r.get("revision_odds_ratio", g.revision_odds_ratio);
  r.get("revision_cut", g.revision_cut);
  r.get("sales_fraction", g.sales_fraction);
  r.get("discount", g.discount);
  if (const json* c = r.object("clicks")) {
    Reader cr(*c, "generator.clicks");
    cr.get("base_weekly", g.clicks.base_weekly);
    cr.get("overpricing_elasticity", g.clicks.overpricing_elasticity);
    cr.get("attractiveness_sd", g.clicks.attractiveness_sd);
    cr.get("shock_sd", g.clicks.shock_sd);
    cr.get("shock_rho", g.clicks.shock_rho);
    cr.get("exposure_sd", g.clicks.exposure_sd);
    cr.get("new_ad_boost", g.clicks.new_ad_boost);
  }
  if (const json* d = r.object("duplicates")) {
    Reader dr(*d, "generator.duplicates");
    std::vector<double> shares;
    dr.get("ads_per_unit", shares);
    if (!shares.empty()) {
      if (shares.size() != g.duplicates.ads_per_unit.size()) {
        throw ParseError("generator.duplicates.ads_per_unit: expected 5 shares");
      }
      std::copy(shares.begin(), shares.end(), g.duplicates.ads_per_unit.begin());
    }
    dr.get("p_open", g.duplicates.p_open);
    dr.get("p_addition", g.duplicates.p_addition);
    dr.get("p_same_agency", g.duplicates.p_same_agency);
    dr.get("p_private", g.duplicates.p_private);
    dr.get("hazard_base", g.duplicates.hazard_base);
    dr.get("hazard_click_elasticity", g.duplicates.hazard_click_elasticity);
    dr.get("hazard_overpricing_loading", g.duplicates.hazard_overpricing_loading);
    dr.get("allow_overlap", g.duplicates.allow_overlap);
  }
  if (const json* n = r.object("noise")) {
    Reader nr(*n, "generator.noise");
    nr.get("same_agency_jitter_m", g.noise.same_agency_jitter_m);
    nr.get("cross_agency_jitter_m", g.noise.cross_agency_jitter_m);
    nr.get("area_rel", g.noise.area_rel);
    nr.get("price_rel", g.noise.price_rel);
    nr.get("ordered_flip", g.noise.ordered_flip);
    nr.get("binary_flip", g.noise.binary_flip);
    nr.get("missing", g.noise.missing);
    nr.get("paraphrase", g.noise.paraphrase);
  }
}

}  // namespace config_detail

/// Parses a run configuration; unknown keys and mistyped values are errors.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  using config_detail::Reader;
  RunConfig c;
  {
    Reader r(j, "config");
    r.get("seed", c.seed);
    r.get("workers", c.workers);
    if (const auto* p = r.object("paths")) {
      Reader pr(*p, "paths");
      pr.get("snapshots", c.paths.snapshots);
      pr.get("model", c.paths.model);
      pr.get("out", c.paths.out);
    }
    if (const auto* b = r.object("blocking")) {
      Reader br(*b, "blocking");
      br.get("radius_m", c.blocking.radius_m);
      br.get("max_rel_price_gap", c.blocking.max_rel_price_gap);
      br.get("max_abs_price_gap", c.blocking.max_abs_price_gap);
      br.get("same_city_only", c.blocking.same_city_only);
    }
    if (const auto* k = r.object("classifier")) {
      Reader kr(*k, "classifier");
      kr.get("threshold", c.threshold);
      kr.get("min_leaf", c.tree.min_leaf);
      kr.get("max_depth", c.tree.max_depth);
      kr.get("prune", c.tree.prune);
      kr.get("prune_confidence", c.tree.prune_confidence);
      kr.get("boosting_trials", c.tree.boosting_trials);
      kr.get("repetitions", c.repetitions);
      kr.get("train_fraction", c.train_fraction);
    }
    if (const auto* cl = r.object("cluster")) {
      Reader cr(*cl, "cluster");
      cr.get("similarity_num", c.similarity.num);
      cr.get("similarity_den", c.similarity.den);
      cr.get("lookback_weeks", c.lookback_weeks);
    }
    if (const auto* f = r.object("filters")) {
      Reader fr(*f, "filters");
      fr.get("min_duration", c.filters.min_duration);
      fr.get("min_duration_days", c.filters.min_duration_days);
      fr.get("hedonic_ratio", c.filters.hedonic_ratio);
      fr.get("hedonic_low", c.filters.hedonic.low);
      fr.get("hedonic_high", c.filters.hedonic.high);
      fr.get("hedonic_min_units_per_city", c.filters.hedonic.min_units_per_city);
      fr.get("hedonic_skip_small_cities", c.filters.hedonic.skip_small_cities);
    }
    if (const auto* t = r.object("training")) {
      Reader tr(*t, "training");
      tr.get("same_agency_duplicate_share", c.training.same_agency_duplicate_share);
      tr.get("cross_agency_duplicate_share", c.training.cross_agency_duplicate_share);
    }
    if (const auto* g = r.object("generator")) config_detail::read_generator(*g, c.generator);
    if (const auto* ind = r.object("indicators")) {
      Reader ir(*ind, "indicators");
      std::string period;
      ir.get("period", period);
      if (!period.empty()) c.period = granularity_from(period);
      ir.get("tom_followup_weeks", c.tom.followup_weeks);
      ir.get("priceref_min_listed_weeks", c.priceref.min_listed_weeks);
      ir.get("supply_min_listings", c.supply_min_listings);
    }
  }
  c.training.blocking = c.blocking;
  c.training.seed = c.seed;
  c.training.workers = c.workers;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace homelist
