#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "homelist/error.hpp"
#include "homelist/ingest.hpp"
#include "homelist/levels.hpp"
#include "homelist/listing_model.hpp"
#include "homelist/normalize.hpp"
#include "homelist/blocking.hpp"
#include "homelist/pair_classifier.hpp"
#include "homelist/parallel.hpp"

namespace homelist {

/// Weekly clicks of an ad: Poisson with mean
///   base * attractiveness * exp(shock_t) * exposure (first two weeks of the
///   unit) * boost (first week of an ad added to a listed unit).
/// log attractiveness = -overpricing_elasticity * overpricing + N(0, attractiveness_sd).
struct ClickParams {
  double base_weekly = 35.0;
  double overpricing_elasticity = 2.0;
  double attractiveness_sd = 0.45;
  double shock_sd = 0.3;
  double shock_rho = 0.3;
  double exposure_sd = 1.1;  // log sd of the first-two-weeks exposure factor (mean 1)
  double new_ad_boost = 3.0;
};

/// How many ads a unit gets and when.
struct DuplicateParams {
  // Share of units with 1, 2, 3, 4, 5 ads.
  std::array<double, 5> ads_per_unit{0.795, 0.125, 0.05, 0.02, 0.01};
  // Loadings of the latent ad-count index on standardized overpricing and
  // standardized log attractiveness (the latter enters with a minus sign).
  double count_overpricing_loading = 0.8;
  double count_attractiveness_loading = 0.8;
  // Each extra ad is posted at entry (open mandate), added later, or replaces
  // the current ad (mandate turnover); turnover takes the remaining share.
  double p_open = 0.30;
  double p_addition = 0.50;
  double p_same_agency = 0.25;  // an open/added ad re-posted by the same agency
  double p_private = 0.08;      // first ad posted by the owner
  // Weekly hazard of posting a pending added ad:
  //   base * exp(-click_elasticity * log(relative clicks last week)
  //              + overpricing_loading * standardized overpricing)
  double hazard_base = 0.10;
  double hazard_click_elasticity = 1.2;
  double hazard_overpricing_loading = 0.6;
  // When false every extra ad is a turnover, so ads of a unit never co-exist.
  bool allow_overlap = true;
};

/// Differences between ads of the same dwelling.
struct NoiseParams {
  double same_agency_jitter_m = 10.0;
  double cross_agency_jitter_m = 60.0;
  double area_rel = 0.03;
  double price_rel = 0.02;
  double ordered_flip = 0.10;  // prob. of a +-1 level change per ordered trait
  double binary_flip = 0.05;
  double missing = 0.10;       // prob. a field is left out of an ad
  bool paraphrase = true;      // other agencies rewrite the description
};

struct GeneratorConfig {
  int cities = 5;
  std::vector<double> city_size{0.6, 0.8, 1.0, 1.2, 1.4};
  double stock_per_city = 1000.0;  // live units at steady state for size 1
  double zone_extent_m = 3000.0;   // side of a size-1 city's square
  int weeks = 26;
  Date start = make_date(2016, 1, 4);
  int burn_in_weeks = 20;

  double base_price_m2 = 2500.0;
  double overpricing_sd = 0.10;
  double outlier_share = 0.01;
  double outlier_factor = 0.35;

  double tom_median_days = 42.0;
  double tom_elasticity = -0.6;  // of time on market to expected relative clicks
  double tom_noise_sd = 0.2;

  int revision_week = 2;  // unit age (weeks) at which the revision is applied
  double revision_base_prob = 0.45;
  double revision_odds_ratio = 0.88;  // per unit of first-two-weeks relative clicks
  double revision_cut = 0.08;

  double sales_fraction = 0.6;
  double discount = 0.12;

  ClickParams clicks;
  DuplicateParams duplicates;
  NoiseParams noise;

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(what) + " must lie in [0, 1]");
    };
    if (cities < 1) throw ValidationError("need at least one city");
    if (static_cast<int>(city_size.size()) != cities) throw ValidationError("city_size must list one multiplier per city");
    for (double s : city_size) {
      if (!(s > 0)) throw ValidationError("city sizes must be positive");
    }
    if (weeks < 1 || burn_in_weeks < 0) throw ValidationError("weeks must be positive");
    if (!(stock_per_city > 0) || !(zone_extent_m > 0) || !(base_price_m2 > 0)) {
      throw ValidationError("stock, extent and base price must be positive");
    }
    if (!(tom_median_days > 0) || tom_noise_sd < 0 || overpricing_sd < 0) {
      throw ValidationError("time-on-market and price dispersion parameters must be nonnegative");
    }
    double total = 0.0;
    for (double p : duplicates.ads_per_unit) {
      prob(p, "ads_per_unit share");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("ads_per_unit shares must sum to 1");
    if (duplicates.ads_per_unit[0] <= 0.0) throw ValidationError("share of single-ad units must be positive");
    prob(duplicates.p_open, "p_open");
    prob(duplicates.p_addition, "p_addition");
    if (duplicates.p_open + duplicates.p_addition > 1.0 + 1e-12) {
      throw ValidationError("p_open + p_addition must not exceed 1");
    }
    prob(duplicates.p_same_agency, "p_same_agency");
    prob(duplicates.p_private, "p_private");
    prob(outlier_share, "outlier_share");
    prob(noise.ordered_flip, "ordered_flip");
    prob(noise.binary_flip, "binary_flip");
    prob(noise.missing, "missing");
    prob(revision_base_prob, "revision_base_prob");
    prob(revision_cut, "revision_cut");
    prob(sales_fraction, "sales_fraction");
    prob(discount, "discount");
    if (duplicates.hazard_base < 0 || clicks.base_weekly <= 0 || clicks.new_ad_boost <= 0 ||
        clicks.shock_sd < 0 || clicks.attractiveness_sd < 0 || clicks.exposure_sd < 0 ||
        noise.same_agency_jitter_m < 0 || noise.cross_agency_jitter_m < 0 || noise.area_rel < 0 ||
        noise.price_rel < 0 || !(revision_odds_ratio > 0) || !(outlier_factor > 0)) {
      throw ValidationError("rates and scales must be nonnegative");
    }
    if (!(std::fabs(clicks.shock_rho) < 1.0)) throw ValidationError("shock_rho must lie in (-1, 1)");
  }

  /// Every extra ad of a unit is posted in the unit's first week with no
  /// content differences, and prices never change.
  static GeneratorConfig coexisting() {
    GeneratorConfig c;
    c.duplicates.p_open = 1.0;
    c.duplicates.p_addition = 0.0;
    c.noise = NoiseParams{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, false};
    c.revision_base_prob = 0.0;
    c.revision_odds_ratio = 1.0;
    c.outlier_share = 0.0;
    return c;
  }

  /// Duplicate posting unrelated to clicks and prices.
  static GeneratorConfig null_mechanisms() {
    GeneratorConfig c;
    c.duplicates.count_overpricing_loading = 0.0;
    c.duplicates.count_attractiveness_loading = 0.0;
    c.duplicates.hazard_click_elasticity = 0.0;
    c.duplicates.hazard_overpricing_loading = 0.0;
    c.clicks.new_ad_boost = 1.0;
    return c;
  }
};

struct TrueUnitInfo {
  std::string id;
  std::string zone_id;
  int entry_t = 0;  // weeks relative to the first snapshot (negative: before it)
  int exit_t = 0;   // first week without ads; may lie beyond the last snapshot
  int ads_posted = 0;
  double overpricing = 0.0;
  double log_attractiveness = 0.0;
  double expected_onlint = 0.0;
  bool revised = false;
  bool outlier = false;
};

struct GeneratorOutput {
  Week first_week;
  int weeks = 0;
  std::vector<Ad> ads;  // every ad visible in some snapshot, with its in-window history
  std::map<std::string, std::string> truth;  // ad id -> true unit id
  std::vector<TrueUnitInfo> units;            // units with at least one visible ad
  std::vector<ExternalObservation> external;

  Week week(int k) const { return first_week + k; }

  Snapshot snapshot(int k) const {
    if (k < 0 || k >= weeks) throw ValidationError("snapshot index out of range");
    Snapshot s;
    s.week = week(k);
    for (const Ad& ad : ads) {
      auto p = ad.price_by_week.find(s.week);
      if (p == ad.price_by_week.end()) continue;
      Ad v = ad;
      v.asking_price = p->second;
      v.removed_on.reset();
      v.clicks_by_week.clear();
      v.price_by_week.clear();
      v.clicks_by_week[s.week] = ad.clicks_by_week.at(s.week);
      v.price_by_week[s.week] = p->second;
      s.ads.push_back(std::move(v));
    }
    return s;
  }

  std::vector<Snapshot> snapshots() const {
    std::vector<Snapshot> out;
    for (int k = 0; k < weeks; ++k) out.push_back(snapshot(k));
    return out;
  }
};

namespace synth_detail {

inline const std::vector<std::string>& street_names() {
  static const std::vector<std::string> v{
      "via roma", "via garibaldi", "via mazzini", "corso italia", "via verdi", "via dante",
      "via manzoni", "viale europa", "via cavour", "via marconi", "via matteotti", "via milano",
      "via torino", "via venezia", "via leopardi", "via carducci", "via pascoli", "via volta",
      "via galilei", "piazza duomo", "via colombo", "via oberdan", "via solferino", "via trieste",
      "via trento", "viale lombardia", "via monti", "via bixio", "via pellico", "via tasso"};
  return v;
}

inline const std::vector<std::string>& heating_kinds() {
  static const std::vector<std::string> v{"autonomous", "centralized", "none"};
  return v;
}

inline const std::vector<std::string>& property_kinds() {
  static const std::vector<std::string> v{"apartment", "penthouse", "loft", "detached"};
  return v;
}

struct TrueUnit {
  std::string id;
  int zone = 0;
  GeoPoint location;
  Characteristics traits;  // complete, noise-free
  std::string street;
  int civic = 1;
  double price = 0.0;  // current true asking price
  double overpricing = 0.0;
  double log_lambda = 0.0;
  double exposure = 1.0;
  std::vector<double> shock;
  int entry_t = 0;
  int listed = 1;  // weeks
  int k_target = 1;
  int pending = 0;
  std::vector<int> turnover_ages;
  std::vector<std::size_t> live;  // sim-ad indices, oldest first
  std::vector<std::size_t> all;
  std::set<std::string> agencies;
  std::string first_agency;
  bool revised = false;
  bool outlier = false;
  double expected_onlint = 0.0;
  double last_unit_clicks = 0.0;  // mean weekly clicks per live ad, previous week
};

struct SimAd {
  Ad ad;  // content; histories hold in-window weeks only
  std::size_t unit = 0;
  int posted_t = 0;
  std::optional<int> removed_t;
  bool addition = false;
  double price_factor = 1.0;
};

class Generator {
public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

  GeneratorOutput run() {
    cfg_.validate();
    GeneratorOutput out;
    out.first_week = Week::of(cfg_.start);
    out.weeks = cfg_.weeks;
    first_week_ = out.first_week;
    for (int z = 0; z < cfg_.cities; ++z) simulate_zone(z);
    assemble(out);
    return out;
  }

private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  bool bernoulli(double p) { return uniform() < p; }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))]; }

  std::string zone_id(int z) const { return "C" + std::to_string(z) + "/Z0"; }

  GeoPoint city_origin(int z) const { return {44.0 + 0.5 * z, 8.0 + 0.7 * z}; }

  double extent(int z) const { return cfg_.zone_extent_m * std::sqrt(cfg_.city_size[static_cast<std::size_t>(z)]); }

  static GeoPoint offset(const GeoPoint& p, double north_m, double east_m) {
    constexpr double deg = 180.0 / std::numbers::pi;
    const double dlat = north_m / kEarthRadiusM * deg;
    const double dlon = east_m / (kEarthRadiusM * std::cos(p.lat / deg)) * deg;
    return {p.lat + dlat, p.lon + dlon};
  }

  GeoPoint jitter(const GeoPoint& p, double max_m) {
    if (max_m <= 0) return p;
    const double r = max_m * std::sqrt(uniform());
    const double a = 2.0 * std::numbers::pi * uniform();
    return offset(p, r * std::cos(a), r * std::sin(a));
  }

  double var_log_lambda() const {
    const double e = cfg_.clicks.overpricing_elasticity * cfg_.overpricing_sd;
    return e * e + cfg_.clicks.attractiveness_sd * cfg_.clicks.attractiveness_sd;
  }
  double shock_var() const {
    const double rho = cfg_.clicks.shock_rho;
    return cfg_.clicks.shock_sd * cfg_.clicks.shock_sd / (1.0 - rho * rho);
  }

  // Expected clicks relative to an average ad over the unit's listed weeks.
  double expected_onlint(const TrueUnit& u, int weeks) const {
    const double norm = std::exp(var_log_lambda() / 2.0 + shock_var() / 2.0);
    double s = 0.0;
    for (int a = 0; a < weeks; ++a) {
      s += (a < 2 ? u.exposure : 1.0) * std::exp(u.shock[static_cast<std::size_t>(a)]);
    }
    return std::exp(u.log_lambda) * s / (static_cast<double>(weeks) * norm);
  }

  void draw_traits(TrueUnit& u) {
    auto& t = u.traits;
    const double area = std::clamp(std::round(85.0 * std::exp(normal(0.35))), 25.0, 400.0);
    t.floor_area = area;
    t.rooms = std::clamp(static_cast<int>(std::lround(area / 25.0 + normal(0.5))), 1, 10);
    t.bathrooms = std::clamp(1 + (area > 90 ? 1 : 0) + (area > 160 ? 1 : 0) + (bernoulli(0.15) ? 1 : -0), 1, 4);
    t.floor = uniform_int(0, 8);
    t.level(OrderedTrait::maintenance) = std::discrete_distribution<int>({0.1, 0.25, 0.5, 0.15})(rng_) + 1;
    t.level(OrderedTrait::energy_class) = std::discrete_distribution<int>({0.3, 0.2, 0.15, 0.1, 0.1, 0.08, 0.05, 0.02})(rng_) + 1;
    t.level(OrderedTrait::garage) = std::discrete_distribution<int>({0.5, 0.2, 0.3})(rng_) + 1;
    t.level(OrderedTrait::garden) = std::discrete_distribution<int>({0.6, 0.25, 0.15})(rng_) + 1;
    t.level(OrderedTrait::kitchen) = std::discrete_distribution<int>({0.2, 0.4, 0.4})(rng_) + 1;
    const std::array<double, kBinaryTraitCount> p_yes{0.6, 0.55, 0.25, 0.2, 0.15, 0.3, 0.45};
    for (std::size_t k = 0; k < kBinaryTraitCount; ++k) t.binary[k] = bernoulli(p_yes[k]) ? Tri::yes : Tri::no;
    t.heating = heating_kinds()[static_cast<std::size_t>(std::discrete_distribution<int>({0.5, 0.4, 0.1})(rng_))];
    t.property_type = property_kinds()[static_cast<std::size_t>(std::discrete_distribution<int>({0.8, 0.08, 0.07, 0.05})(rng_))];
  }

  double hedonic_log_price_m2(int z, const Characteristics& t) const {
    const double city = 0.12 * (z - (cfg_.cities - 1) / 2.0);
    double v = std::log(cfg_.base_price_m2) + city;
    v += -0.12 * std::log(*t.floor_area / 85.0);
    v += 0.10 * (*t.level(OrderedTrait::maintenance) - 3);
    v += 0.05 * (t.flag(BinaryTrait::elevator) == Tri::yes ? 1 : 0);
    v += 0.01 * *t.floor;
    v += 0.04 * (*t.bathrooms - 1);
    v += 0.02 * (*t.level(OrderedTrait::energy_class) - 1);
    return v;
  }

  static double round_price(double p) { return std::max(1000.0, std::round(p / 1000.0) * 1000.0); }

  // --- ad content --------------------------------------------------------

  std::string describe(const TrueUnit& u, const Characteristics& t, const std::string& agency,
                       bool rewrite) {
    static const std::array<const char*, 4> maint{"to renovate", "partially renovated", "in good condition", "brand new"};
    std::vector<std::string> parts;
    const std::string kind = t.property_type.value_or(*u.traits.property_type);
    const int rooms = t.rooms.value_or(*u.traits.rooms);
    const int area = static_cast<int>(t.floor_area.value_or(*u.traits.floor_area));
    const int baths = t.bathrooms.value_or(*u.traits.bathrooms);
    const int floor = t.floor.value_or(*u.traits.floor);
    const int m = t.level(OrderedTrait::maintenance).value_or(*u.traits.level(OrderedTrait::maintenance));
    if (!rewrite) {
      parts.push_back(kind + " with " + std::to_string(rooms) + " rooms in " + u.street + " " + std::to_string(u.civic));
      parts.push_back(std::to_string(area) + " sqm, " + std::to_string(baths) + " bathrooms, floor " + std::to_string(floor));
      parts.push_back(std::string(maint[static_cast<std::size_t>(m - 1)]));
    } else {
      static const std::array<const char*, 4> maint2{"needs work", "some renovation done", "well kept", "newly built"};
      const std::string kind2 = kind == "apartment" ? "flat" : kind;
      parts.push_back(u.street + " " + std::to_string(u.civic) + ": " + kind2 + " of " + std::to_string(area) + " square meters");
      parts.push_back(std::to_string(rooms) + " rooms and " + std::to_string(baths) + " baths on floor " + std::to_string(floor));
      parts.push_back(std::string(maint2[static_cast<std::size_t>(m - 1)]));
    }
    std::vector<std::string> extras;
    static const std::array<const char*, kBinaryTraitCount> names{"elevator", "balcony", "terrace", "janitor", "utility room", "air conditioning", "cellar"};
    for (std::size_t k = 0; k < kBinaryTraitCount; ++k) {
      if (t.binary[k] == Tri::yes) extras.push_back(names[k]);
    }
    if (!extras.empty()) {
      std::string s = rewrite ? "features " : "with ";
      for (std::size_t k = 0; k < extras.size(); ++k) s += (k ? ", " : "") + extras[k];
      parts.push_back(s);
    }
    static const std::vector<std::string> fillers{"bright and quiet", "close to shops and transport",
                                                  "excellent location", "ideal for families",
                                                  "great investment", "must see"};
    parts.push_back(pick(fillers));
    if (rewrite) {
      std::shuffle(parts.begin(), parts.end(), rng_);
      parts.push_back(agency.empty() ? "private sale" : "contact agency " + agency + " for a visit");
    }
    std::string text;
    for (std::size_t k = 0; k < parts.size(); ++k) text += (k ? ". " : "") + parts[k];
    return text + ".";
  }

  // Traits as a different agency would list them.
  Characteristics noisy_traits(const TrueUnit& u) {
    const auto& nz = cfg_.noise;
    Characteristics t = u.traits;
    if (nz.area_rel > 0) {
      t.floor_area = std::round(*t.floor_area * (1.0 + nz.area_rel * (2.0 * uniform() - 1.0)));
    }
    for (std::size_t k = 0; k < kOrderedTraitCount; ++k) {
      if (bernoulli(nz.ordered_flip)) {
        const int levels = LevelSchemes::defaults().schemes[k].levels();
        const int v = *t.ordered[k] + (bernoulli(0.5) ? 1 : -1);
        t.ordered[k] = std::clamp(v, 1, levels);
      }
    }
    for (std::size_t k = 0; k < kBinaryTraitCount; ++k) {
      if (bernoulli(nz.binary_flip)) t.binary[k] = t.binary[k] == Tri::yes ? Tri::no : Tri::yes;
    }
    return t;
  }

  void drop_fields(Characteristics& t) {
    const double p = cfg_.noise.missing;
    if (p <= 0) return;
    if (bernoulli(p)) t.floor_area.reset();
    if (bernoulli(p)) t.floor.reset();
    if (bernoulli(p)) t.rooms.reset();
    if (bernoulli(p)) t.bathrooms.reset();
    for (auto& o : t.ordered) {
      if (bernoulli(p)) o.reset();
    }
    for (auto& b : t.binary) {
      if (bernoulli(p)) b = Tri::missing;
    }
    if (bernoulli(p)) t.heating.reset();
    if (bernoulli(p)) t.property_type.reset();
  }

  std::size_t post_ad(std::size_t unit_index, int t, const std::string& agency, bool addition) {
    TrueUnit& u = units_[unit_index];
    SimAd s;
    s.unit = unit_index;
    s.posted_t = t;
    s.addition = addition;
    char id[32];
    std::snprintf(id, sizeof id, "A%07zu", ads_.size() + 1);
    s.ad.id = id;
    s.ad.agency_id = agency;
    s.ad.zone_id = zone_id(u.zone);
    s.ad.created_on = (first_week_ + t).monday();

    // Re-posts by an agency that already lists the unit copy its ad.
    const SimAd* copy = nullptr;
    for (std::size_t i : u.all) {
      if (!agency.empty() && ads_[i].ad.agency_id == agency) copy = &ads_[i];
    }
    const bool first = u.all.empty();
    if (copy) {
      s.ad.traits = copy->ad.traits;
      s.ad.description = copy->ad.description;
      s.ad.location = jitter(u.location, cfg_.noise.same_agency_jitter_m);
      s.price_factor = copy->price_factor;
    } else if (first) {
      s.ad.traits = u.traits;
      drop_fields(s.ad.traits);
      s.ad.description = describe(u, s.ad.traits, agency, false);
      s.ad.location = u.location;
    } else {
      s.ad.traits = noisy_traits(u);
      drop_fields(s.ad.traits);
      s.ad.description = describe(u, s.ad.traits, agency, cfg_.noise.paraphrase);
      s.ad.location = jitter(u.location, cfg_.noise.cross_agency_jitter_m);
      s.price_factor = 1.0 + cfg_.noise.price_rel * (2.0 * uniform() - 1.0);
    }
    s.ad.asking_price = round_price(u.price * s.price_factor);
    ads_.push_back(std::move(s));
    const std::size_t idx = ads_.size() - 1;
    u.live.push_back(idx);
    u.all.push_back(idx);
    if (!agency.empty()) u.agencies.insert(agency);
    return idx;
  }

  std::string new_agency(TrueUnit& u, int zone) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const std::string a = "AG" + std::to_string(zone) + "-" + std::to_string(uniform_int(1, 40));
      if (!u.agencies.count(a)) return a;
    }
    return "AG" + std::to_string(zone) + "-X" + std::to_string(u.agencies.size());
  }

  std::string extra_agency(TrueUnit& u, int zone) {
    if (!u.first_agency.empty() && bernoulli(cfg_.duplicates.p_same_agency)) return u.first_agency;
    return new_agency(u, zone);
  }

  void remove_ad(std::size_t idx, int t) {
    ads_[idx].removed_t = t;
    auto& live = units_[ads_[idx].unit].live;
    live.erase(std::remove(live.begin(), live.end(), idx), live.end());
  }

  void enter_unit(int z, int t, double lo_lat_m, double lo_lon_m) {
    TrueUnit u;
    char id[32];
    std::snprintf(id, sizeof id, "T%07zu", units_.size() + 1);
    u.id = id;
    u.zone = z;
    u.entry_t = t;
    const double ext = extent(z);
    u.location = offset(city_origin(z), lo_lat_m + ext * uniform(), lo_lon_m + ext * uniform());
    u.street = pick(street_names());
    u.civic = uniform_int(1, 150);
    draw_traits(u);
    u.overpricing = normal(cfg_.overpricing_sd);
    u.outlier = bernoulli(cfg_.outlier_share);
    const double hedonic = std::exp(hedonic_log_price_m2(z, u.traits) + u.overpricing);
    u.price = round_price(hedonic * *u.traits.floor_area * (u.outlier ? cfg_.outlier_factor : 1.0));
    const auto& cp = cfg_.clicks;
    u.log_lambda = -cp.overpricing_elasticity * u.overpricing + normal(cp.attractiveness_sd);
    const double sv = cp.exposure_sd;
    u.exposure = std::exp(normal(sv) - sv * sv / 2.0);
    u.shock.resize(64);
    double s = normal(std::sqrt(shock_var()));
    for (auto& x : u.shock) {
      x = s;
      s = cp.shock_rho * s + normal(cp.shock_sd);
    }

    // Weeks on the market: log TOM = log median + elasticity * log E[ONLINT] + noise,
    // solved jointly with the expected relative clicks over those weeks.
    const double eps = normal(cfg_.tom_noise_sd);
    const double u_round = uniform();
    auto weeks_for = [&](double onlint) {
      const double days = cfg_.tom_median_days * std::exp(eps + cfg_.tom_elasticity * std::log(onlint));
      const double w = days / 7.0;
      const double fl = std::floor(w);
      return std::clamp(static_cast<int>(fl) + (u_round < w - fl ? 1 : 0), 1, 60);
    };
    int listed = weeks_for(expected_onlint(u, 6));
    for (int it = 0; it < 12; ++it) {
      const int next = weeks_for(expected_onlint(u, listed));
      if (next == listed) break;
      listed = next;
    }
    u.listed = listed;
    u.expected_onlint = expected_onlint(u, listed);

    // Number of ads from a latent index; thresholds give the target shares.
    const auto& dp = cfg_.duplicates;
    const double sd_ll = std::sqrt(var_log_lambda());
    const double zo = cfg_.overpricing_sd > 0 ? u.overpricing / cfg_.overpricing_sd : 0.0;
    const double zl = sd_ll > 0 ? u.log_lambda / sd_ll : 0.0;
    const double a = dp.count_overpricing_loading, c = dp.count_attractiveness_loading;
    const double latent = (a * zo - c * zl + normal()) / std::sqrt(a * a + c * c + 1.0);
    boost::math::normal_distribution<double> std_normal;
    double cum = 0.0;
    u.k_target = 1;
    for (std::size_t k = 0; k + 1 < dp.ads_per_unit.size(); ++k) {
      cum += dp.ads_per_unit[k];
      if (cum >= 1.0) break;
      if (latent > boost::math::quantile(std_normal, std::min(cum, 1.0 - 1e-12))) u.k_target = static_cast<int>(k) + 2;
    }

    units_.push_back(std::move(u));
    const std::size_t ui = units_.size() - 1;
    TrueUnit& ref = units_[ui];
    ref.first_agency = bernoulli(dp.p_private) ? std::string() : new_agency(ref, z);
    post_ad(ui, t, ref.first_agency, false);
    for (int j = 1; j < ref.k_target; ++j) {
      const double r = uniform();
      enum { open, addition, turnover } kind;
      if (!dp.allow_overlap) kind = turnover;
      else if (r < dp.p_open) kind = open;
      else if (r < dp.p_open + dp.p_addition) kind = addition;
      else kind = turnover;
      if (kind != open && ref.listed < 2) {
        if (!dp.allow_overlap) continue;
        kind = open;
      }
      if (kind == open) post_ad(ui, t, extra_agency(ref, z), false);
      else if (kind == addition) ++ref.pending;
      else ref.turnover_ages.push_back(uniform_int(1, ref.listed - 1));
    }
    std::sort(ref.turnover_ages.begin(), ref.turnover_ages.end());
  }

  void simulate_zone(int z) {
    const double size = cfg_.city_size[static_cast<std::size_t>(z)];
    const double mean_weeks = cfg_.tom_median_days / 7.0 * std::exp(cfg_.tom_noise_sd * cfg_.tom_noise_sd / 2.0) * 1.1;
    const double entry_rate = cfg_.stock_per_city * size / mean_weeks;
    const double base = cfg_.clicks.base_weekly * (0.8 + 0.4 * uniform());
    const std::size_t first_unit = units_.size();
    std::vector<std::size_t> active;
    double zone_mean_prev = base;

    const auto& dp = cfg_.duplicates;
    const double sd_o = cfg_.overpricing_sd > 0 ? cfg_.overpricing_sd : 1.0;
    const double rev_alpha = std::log(cfg_.revision_base_prob / (1.0 - cfg_.revision_base_prob + 1e-300)) -
                             std::log(cfg_.revision_odds_ratio);
    std::vector<double> zone_mean;  // realized clicks per live ad, by t + burn_in

    for (int t = -cfg_.burn_in_weeks; t < cfg_.weeks; ++t) {
      // Exits, turnovers, additions and price revisions of listed units.
      std::vector<std::size_t> still;
      for (std::size_t ui : active) {
        TrueUnit& u = units_[ui];
        const int age = t - u.entry_t;
        if (age >= u.listed) {
          for (std::size_t idx : std::vector<std::size_t>(u.live)) remove_ad(idx, t);
          continue;
        }
        still.push_back(ui);
        for (int a : u.turnover_ages) {
          if (a != age) continue;
          if (!u.live.empty()) remove_ad(u.live.front(), t);
          post_ad(ui, t, new_agency(u, z), false);
        }
        if (u.pending > 0) {
          if (age == u.listed - 1) {
            while (u.pending > 0) {
              --u.pending;
              post_ad(ui, t, extra_agency(u, z), true);
            }
          } else {
            const double rel = std::max(u.last_unit_clicks, 0.05 * zone_mean_prev) / zone_mean_prev;
            const double h = std::min(0.95, dp.hazard_base * std::exp(-dp.hazard_click_elasticity * std::log(rel) +
                                                                        dp.hazard_overpricing_loading * u.overpricing / sd_o));
            if (bernoulli(h)) {
              --u.pending;
              post_ad(ui, t, extra_agency(u, z), true);
            }
          }
        }
        if (age == cfg_.revision_week && cfg_.revision_base_prob > 0) {
          double clicks = 0.0;
          for (std::size_t idx : u.all) {
            for (int w = u.entry_t; w < u.entry_t + cfg_.revision_week; ++w) clicks += click_at(idx, w);
          }
          double norm = 0.0;
          for (int w = u.entry_t; w < u.entry_t + cfg_.revision_week; ++w) {
            norm += zone_mean[static_cast<std::size_t>(w + cfg_.burn_in_weeks)];
          }
          const double onlint2 = norm > 0 ? clicks / norm : 0.0;
          const double eta = rev_alpha + std::log(cfg_.revision_odds_ratio) * onlint2;
          if (bernoulli(1.0 / (1.0 + std::exp(-eta)))) {
            u.revised = true;
            u.price = round_price(u.price * (1.0 - cfg_.revision_cut));
            for (std::size_t idx : u.live) ads_[idx].ad.asking_price = round_price(u.price * ads_[idx].price_factor);
          }
        }
      }
      active = std::move(still);

      // New units.
      const int n_new = std::poisson_distribution<int>(entry_rate)(rng_);
      const double ext = extent(z);
      for (int k = 0; k < n_new; ++k) {
        enter_unit(z, t, 0.0, 0.0);
        active.push_back(units_.size() - 1);
      }
      (void)ext;

      // Clicks for every live ad.
      double total = 0.0;
      std::size_t live_ads = 0;
      for (std::size_t ui : active) {
        TrueUnit& u = units_[ui];
        const int age = t - u.entry_t;
        double unit_total = 0.0;
        for (std::size_t idx : u.live) {
          SimAd& s = ads_[idx];
          double mean = base * std::exp(u.log_lambda + u.shock[static_cast<std::size_t>(std::min(age, 63))]);
          if (age < 2) mean *= u.exposure;
          if (s.addition && s.posted_t == t) mean *= cfg_.clicks.new_ad_boost;
          const int c = std::poisson_distribution<int>(mean)(rng_);
          record(idx, t, c);
          unit_total += c;
          total += c;
          ++live_ads;
        }
        u.last_unit_clicks = u.live.empty() ? 0.0 : unit_total / static_cast<double>(u.live.size());
      }
      const double m = live_ads ? total / static_cast<double>(live_ads) : base;
      zone_mean.push_back(m);
      zone_mean_prev = m;
    }
    (void)first_unit;
  }

  void record(std::size_t idx, int t, int clicks) {
    SimAd& s = ads_[idx];
    clicks_[idx][t] = clicks;
    if (t >= 0) {
      const Week w = first_week_ + t;
      s.ad.clicks_by_week[w] = clicks;
      s.ad.price_by_week[w] = s.ad.asking_price;
    }
  }

  double click_at(std::size_t idx, int t) const {
    auto it = clicks_.find(idx);
    if (it == clicks_.end()) return 0.0;
    auto c = it->second.find(t);
    return c == it->second.end() ? 0.0 : c->second;
  }

  void assemble(GeneratorOutput& out) {
    std::vector<char> unit_seen(units_.size(), 0);
    for (auto& s : ads_) {
      if (s.ad.clicks_by_week.empty()) continue;  // never visible in the window
      if (s.removed_t && *s.removed_t < cfg_.weeks) s.ad.removed_on = (first_week_ + *s.removed_t).monday();
      out.truth[s.ad.id] = units_[s.unit].id;
      unit_seen[s.unit] = 1;
      out.ads.push_back(std::move(s.ad));
    }
    std::map<std::string, std::size_t> ads_per_unit;
    for (const auto& [ad, unit] : out.truth) ++ads_per_unit[unit];
    for (std::size_t i = 0; i < units_.size(); ++i) {
      if (!unit_seen[i]) continue;
      const TrueUnit& u = units_[i];
      TrueUnitInfo info;
      info.id = u.id;
      info.zone_id = zone_id(u.zone);
      info.entry_t = u.entry_t;
      info.exit_t = u.entry_t + u.listed;
      info.ads_posted = static_cast<int>(u.all.size());
      info.overpricing = u.overpricing;
      info.log_attractiveness = u.log_lambda;
      info.expected_onlint = u.expected_onlint;
      info.revised = u.revised;
      info.outlier = u.outlier;
      out.units.push_back(info);
    }
    external_series(out);
  }

  void external_series(GeneratorOutput& out) {
    // Sales: a binomial share of true exits per city and quarter.
    std::map<std::pair<std::string, std::string>, int> exits;
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> tom;
    for (const auto& u : units_) {
      const int exit_t = u.entry_t + u.listed;
      if (exit_t < 1 || exit_t >= cfg_.weeks) continue;
      const Date d = (first_week_ + exit_t).monday();
      const auto key = std::pair{city_of(zone_id(u.zone)), quarter_label(d)};
      ++exits[key];
      auto& tm = tom[key];
      tm.first += 7.0 * u.listed;
      ++tm.second;
    }
    for (const auto& [key, n] : exits) {
      const int sales = std::binomial_distribution<int>(n, cfg_.sales_fraction)(rng_);
      out.external.push_back({SeriesKind::city_sales, key.second, key.first, double(sales), 0.0});
      out.external.push_back({SeriesKind::survey_discount, key.second, key.first, cfg_.discount, 0.0});
      const auto& tm = tom.at(key);
      out.external.push_back({SeriesKind::survey_tom, key.second, key.first, tm.first / tm.second, 0.0});
    }
    // Zone price bounds from the mean true asking price per m2 of listed units.
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> price;
    for (const auto& u : units_) {
      if (u.outlier) continue;
      const int from = std::max(0, u.entry_t), to = std::min(cfg_.weeks, u.entry_t + u.listed);
      if (from >= to) continue;
      const Date d = (first_week_ + from).monday();
      auto& p = price[{zone_id(u.zone), half_label(d)}];
      p.first += u.price / *u.traits.floor_area;
      ++p.second;
    }
    for (const auto& [key, p] : price) {
      const double mean = p.first / p.second * (1.0 - cfg_.discount);
      out.external.push_back({SeriesKind::zone_price_bounds, key.second, key.first, 0.8 * mean, 1.2 * mean});
    }
  }

  GeneratorConfig cfg_;
  std::mt19937_64 rng_;
  Week first_week_;
  std::vector<TrueUnit> units_;
  std::vector<SimAd> ads_;
  std::map<std::size_t, std::map<int, int>> clicks_;
};

}  // namespace synth_detail

/// Synthetic weekly listing stream with known duplicate structure.
/// Deterministic for a given (config, seed).
inline GeneratorOutput generate(const GeneratorConfig& cfg, std::uint64_t seed) {
  return synth_detail::Generator(cfg, seed).run();
}

/// Writes snapshots/<YYYY-Www>.jsonl, truth.csv and external.csv under `dir`.
inline void write_generator_output(const std::filesystem::path& dir, const GeneratorOutput& out) {
  std::filesystem::create_directories(dir / "snapshots");
  for (int k = 0; k < out.weeks; ++k) {
    const Snapshot s = out.snapshot(k);
    write_snapshot(dir / "snapshots" / (s.week.label() + ".jsonl"), s);
  }
  std::ofstream truth(dir / "truth.csv");
  if (!truth) throw ParseError("cannot write " + (dir / "truth.csv").string());
  truth << "ad_id,unit_id\n";
  for (const auto& [ad, unit] : out.truth) truth << ad << ',' << unit << '\n';
  std::ofstream ext(dir / "external.csv");
  if (!ext) throw ParseError("cannot write " + (dir / "external.csv").string());
  write_external_series(ext, out.external);
}

// ---------------------------------------------------------------------------
// Labeled training pairs

struct TrainingSampleOptions {
  BlockingParams blocking;
  // Target share of duplicates among the kept pairs of each kind; negatives
  // are subsampled to reach it (all positives are kept).
  double same_agency_duplicate_share = 0.45;
  double cross_agency_duplicate_share = 0.19;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

/// Candidate pairs among all generated ads, labeled from the truth.
inline std::vector<LabeledPair> training_pairs(const GeneratorOutput& out, const EmbeddingProvider& provider,
                                               const TrainingSampleOptions& opt = {}) {
  for (double share : {opt.same_agency_duplicate_share, opt.cross_agency_duplicate_share}) {
    if (!(share > 0.0 && share <= 1.0)) throw ValidationError("duplicate shares must lie in (0, 1]");
  }
  const auto records = block_records(out.ads);
  const auto pairs = candidate_pairs(records, opt.blocking, opt.workers);
  std::array<std::vector<std::size_t>, 2> pos, neg;  // by same_agency
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const bool dup = out.truth.at(out.ads[p.a].id) == out.truth.at(out.ads[p.b].id);
    (dup ? pos : neg)[p.same_agency ? 1 : 0].push_back(k);
  }
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> keep;
  for (int s = 0; s < 2; ++s) {
    const double share = s ? opt.same_agency_duplicate_share : opt.cross_agency_duplicate_share;
    const auto want = static_cast<std::size_t>(std::llround(double(pos[s].size()) * (1.0 - share) / share));
    auto& n = neg[static_cast<std::size_t>(s)];
    std::shuffle(n.begin(), n.end(), rng);
    if (n.size() > want) n.resize(want);
    keep.insert(keep.end(), pos[static_cast<std::size_t>(s)].begin(), pos[static_cast<std::size_t>(s)].end());
    keep.insert(keep.end(), n.begin(), n.end());
  }
  std::sort(keep.begin(), keep.end());
  std::vector<LabeledPair> samples(keep.size());
  parallel_for(keep.size(), opt.workers, [&](std::size_t i) {
    const auto& p = pairs[keep[i]];
    const Ad& a = out.ads[p.a];
    const Ad& b = out.ads[p.b];
    samples[i].features = extract_features(a, b, provider);
    samples[i].duplicate = out.truth.at(a.id) == out.truth.at(b.id);
  });
  return samples;
}

// ---------------------------------------------------------------------------
// Scoring a predicted partition against the truth

struct PartitionScore {
  double precision = 1.0;
  double recall = 1.0;
  double f_measure = 1.0;
  std::uint64_t predicted_pairs = 0;
  std::uint64_t true_pairs = 0;
  std::uint64_t correct_pairs = 0;
  bool no_predicted_pairs = false;
  std::size_t ads = 0;
  std::size_t predicted_units = 0;
  std::size_t true_units = 0;
  double unit_ratio = 0.0;       // predicted units / ads
  double true_unit_ratio = 0.0;  // true units / ads
};

/// Pairwise precision and recall over same-cluster ad pairs. Both maps go
/// from ad id to a cluster label and must cover the same ads.
inline PartitionScore score(const std::map<std::string, std::string>& predicted,
                            const std::map<std::string, std::string>& truth) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("predicted partition covers " + std::to_string(predicted.size()) +
                          " ads, truth covers " + std::to_string(truth.size()));
  }
  auto choose2 = [](std::uint64_t n) { return n * (n - 1) / 2; };
  std::map<std::string, std::uint64_t> pred_size, true_size;
  std::map<std::pair<std::string, std::string>, std::uint64_t> joint;
  auto t = truth.begin();
  for (const auto& [ad, label] : predicted) {
    if (t->first != ad) throw ValidationError("ad id mismatch: " + ad + " vs " + t->first);
    ++pred_size[label];
    ++true_size[t->second];
    ++joint[{label, t->second}];
    ++t;
  }
  PartitionScore s;
  for (const auto& [l, n] : pred_size) s.predicted_pairs += choose2(n);
  for (const auto& [l, n] : true_size) s.true_pairs += choose2(n);
  for (const auto& [l, n] : joint) s.correct_pairs += choose2(n);
  s.no_predicted_pairs = s.predicted_pairs == 0;
  s.precision = s.no_predicted_pairs ? 1.0 : double(s.correct_pairs) / double(s.predicted_pairs);
  s.recall = s.true_pairs == 0 ? 1.0 : double(s.correct_pairs) / double(s.true_pairs);
  s.f_measure = s.precision + s.recall == 0 ? 0.0 : 2 * s.precision * s.recall / (s.precision + s.recall);
  s.ads = predicted.size();
  s.predicted_units = pred_size.size();
  s.true_units = true_size.size();
  if (s.ads) {
    s.unit_ratio = double(s.predicted_units) / double(s.ads);
    s.true_unit_ratio = double(s.true_units) / double(s.ads);
  }
  return s;
}

}  // namespace homelist
