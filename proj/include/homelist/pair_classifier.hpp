#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "homelist/blocking.hpp"
#include "homelist/decision_tree.hpp"
#include "homelist/error.hpp"
#include "homelist/listing_model.hpp"
#include "homelist/normalize.hpp"
#include "homelist/parallel.hpp"

namespace homelist {

enum class Feature : std::size_t {
  price_rel, price_abs, area_rel, area_abs, floor_diff, geo_m,
  maintenance_diff, energy_class_diff, garage_diff, garden_diff, kitchen_diff,
  elevator_match, balcony_match, terrace_match, janitor_match, utility_room_match,
  air_conditioning_match, basement_match,
  heating_match, property_type_match,
  bathrooms_diff, rooms_diff,
  text_dist, same_agency,
};
inline constexpr std::size_t kFeatureCount = 24;

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{
      "price_rel", "price_abs", "area_rel", "area_abs", "floor_diff", "geo_m",
      "maintenance_diff", "energy_class_diff", "garage_diff", "garden_diff", "kitchen_diff",
      "elevator_match", "balcony_match", "terrace_match", "janitor_match", "utility_room_match",
      "air_conditioning_match", "basement_match",
      "heating_match", "property_type_match",
      "bathrooms_diff", "rooms_diff",
      "text_dist", "same_agency"};
  return names;
}

/// Pairwise comparison features; NaN marks a component that is missing
/// because the underlying field is missing on either side.
struct PairFeatures {
  std::array<double, kFeatureCount> values;

  PairFeatures() { values.fill(std::numeric_limits<double>::quiet_NaN()); }

  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  std::span<const double> span() const { return values; }
  bool same_agency() const { return (*this)[Feature::same_agency] == 1.0; }
};

struct LabeledPair {
  PairFeatures features;
  bool duplicate = false;
};

namespace detail {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double rel_diff(double x, double y) {
  return std::fabs(x - y) / std::min(x, y);
}

template <typename T>
double abs_diff(const std::optional<T>& x, const std::optional<T>& y) {
  if (!x || !y) return kNaN;
  return std::fabs(static_cast<double>(*x) - static_cast<double>(*y));
}

template <typename T>
double match(const std::optional<T>& x, const std::optional<T>& y) {
  if (!x || !y) return kNaN;
  return *x == *y ? 1.0 : 0.0;
}

}  // namespace detail

/// Description distance: normalized edit distance when both ads come from the
/// same agency (the text is usually copied), cosine distance between
/// embeddings otherwise. Missing when either description is empty.
inline double text_distance(const Ad& a, const Ad& b, bool same_agency_pair,
                            const EmbeddingProvider& provider, const EmbeddingVector* ea = nullptr,
                            const EmbeddingVector* eb = nullptr) {
  if (a.description.empty() || b.description.empty()) return detail::kNaN;
  if (same_agency_pair) {
    return levenshtein_norm(lowercase_trimmed(a.description), lowercase_trimmed(b.description));
  }
  const EmbeddingVector va = ea ? *ea : provider.embed(a.id, a.description);
  const EmbeddingVector vb = eb ? *eb : provider.embed(b.id, b.description);
  return cosine_distance(va, vb);
}

/// Symmetric in (a, b). Embeddings may be supplied precomputed.
inline PairFeatures extract_features(const Ad& a, const Ad& b, const EmbeddingProvider& provider,
                                     const EmbeddingVector* ea = nullptr,
                                     const EmbeddingVector* eb = nullptr) {
  using detail::abs_diff;
  using detail::match;
  PairFeatures f;
  const auto& ta = a.traits;
  const auto& tb = b.traits;
  f[Feature::price_rel] = detail::rel_diff(a.asking_price, b.asking_price);
  f[Feature::price_abs] = std::fabs(a.asking_price - b.asking_price);
  if (ta.floor_area && tb.floor_area) {
    f[Feature::area_rel] = detail::rel_diff(*ta.floor_area, *tb.floor_area);
    f[Feature::area_abs] = std::fabs(*ta.floor_area - *tb.floor_area);
  }
  f[Feature::floor_diff] = abs_diff(ta.floor, tb.floor);
  f[Feature::geo_m] = geo_distance_m(a.location, b.location);
  for (std::size_t k = 0; k < kOrderedTraitCount; ++k) {
    f.values[static_cast<std::size_t>(Feature::maintenance_diff) + k] =
        abs_diff(ta.ordered[k], tb.ordered[k]);
  }
  for (std::size_t k = 0; k < kBinaryTraitCount; ++k) {
    const Tri x = ta.binary[k], y = tb.binary[k];
    f.values[static_cast<std::size_t>(Feature::elevator_match) + k] =
        (x == Tri::missing || y == Tri::missing) ? detail::kNaN : (x == y ? 1.0 : 0.0);
  }
  f[Feature::heating_match] = match(ta.heating, tb.heating);
  f[Feature::property_type_match] = match(ta.property_type, tb.property_type);
  f[Feature::bathrooms_diff] = abs_diff(ta.bathrooms, tb.bathrooms);
  f[Feature::rooms_diff] = abs_diff(ta.rooms, tb.rooms);
  const bool same = same_agency(a.agency_id, b.agency_id);
  // Keep argument order out of the text distance as well.
  const bool swap = b.id < a.id;
  f[Feature::text_dist] = swap ? text_distance(b, a, same, provider, eb, ea)
                               : text_distance(a, b, same, provider, ea, eb);
  f[Feature::same_agency] = same ? 1.0 : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// Models

struct TrainedModelPair {
  DecisionTree model_same_agency;
  DecisionTree model_cross_agency;
  double threshold = 0.5;

  bool trained() const { return model_same_agency.trained() && model_cross_agency.trained(); }

  nlohmann::json to_json() const {
    return {{"format", "homelist-model-pair/1"},
            {"threshold", threshold},
            {"same_agency", model_same_agency.to_json()},
            {"cross_agency", model_cross_agency.to_json()}};
  }

  static TrainedModelPair from_json(const nlohmann::json& j) {
    TrainedModelPair m;
    try {
      m.threshold = j.at("threshold").get<double>();
      m.model_same_agency = DecisionTree::from_json(j.at("same_agency"));
      m.model_cross_agency = DecisionTree::from_json(j.at("cross_agency"));
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("malformed model file: ") + e.what());
    }
    if (!(m.threshold > 0.0 && m.threshold < 1.0)) throw ModelError("threshold outside (0, 1)");
    for (const auto* t : {&m.model_same_agency, &m.model_cross_agency}) {
      if (t->feature_names != feature_names()) throw ModelError("model feature set does not match");
    }
    return m;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write model file " + path.string());
    out << to_json().dump(1) << '\n';
  }

  static TrainedModelPair load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("model file " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }
};

namespace detail {

inline DecisionTree train_on(std::span<const LabeledPair* const> rows, const TreeParams& params,
                             std::string_view which) {
  std::vector<double> data;
  std::vector<std::uint8_t> labels;
  data.reserve(rows.size() * kFeatureCount);
  for (const LabeledPair* r : rows) {
    data.insert(data.end(), r->features.values.begin(), r->features.values.end());
    labels.push_back(r->duplicate ? 1 : 0);
  }
  try {
    return train_tree(data, labels, feature_names(), params);
  } catch (const InsufficientDataError& e) {
    throw InsufficientDataError(std::string(which) + " model: " + e.what());
  }
}

}  // namespace detail

inline DecisionTree train_tree(std::span<const LabeledPair> samples, const TreeParams& params = {}) {
  std::vector<const LabeledPair*> rows;
  for (const auto& s : samples) rows.push_back(&s);
  return detail::train_on(rows, params, "pair");
}

/// Trains the same-agency model on same-agency pairs and the cross-agency
/// model on the rest.
inline TrainedModelPair train_model_pair(std::span<const LabeledPair> samples,
                                         const TreeParams& params = {}, double threshold = 0.5) {
  std::vector<const LabeledPair*> same, cross;
  for (const auto& s : samples) (s.features.same_agency() ? same : cross).push_back(&s);
  TrainedModelPair m;
  m.model_same_agency = detail::train_on(same, params, "same-agency");
  m.model_cross_agency = detail::train_on(cross, params, "cross-agency");
  m.threshold = threshold;
  return m;
}

inline double predict_proba(const TrainedModelPair& model, const PairFeatures& f) {
  if (!model.trained()) throw ModelError("model pair is not trained");
  return (f.same_agency() ? model.model_same_agency : model.model_cross_agency).probability(f.span());
}

struct ScoredPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double probability = 0.0;

  bool operator==(const ScoredPair&) const = default;
};

/// Keeps the pairs whose probability is strictly above the model threshold.
inline std::vector<ScoredPair> classify(const TrainedModelPair& model,
                                        std::span<const CandidatePair> pairs,
                                        std::span<const PairFeatures> features, unsigned workers = 1) {
  if (pairs.size() != features.size()) throw ValidationError("pairs and features differ in length");
  std::vector<double> p(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) { p[i] = predict_proba(model, features[i]); });
  std::vector<ScoredPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (p[i] > model.threshold) out.push_back({pairs[i].a, pairs[i].b, p[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training-sample files: one row per pair, feature columns then "duplicate".

inline void write_samples(std::ostream& out, std::span<const LabeledPair> samples) {
  for (const auto& n : feature_names()) out << n << ',';
  out << "duplicate\n";
  out.precision(17);
  for (const auto& s : samples) {
    for (double v : s.features.values) {
      if (std::isnan(v)) out << "NA";
      else out << v;
      out << ',';
    }
    out << (s.duplicate ? 1 : 0) << '\n';
  }
}

inline std::vector<LabeledPair> read_samples(std::istream& in) {
  std::vector<LabeledPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind(feature_names()[0], 0) == 0) continue;
    std::stringstream ss(line);
    std::string cell;
    LabeledPair s;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k < kFeatureCount) {
        if (cell == "NA" || cell.empty()) s.features.values[k] = detail::kNaN;
        else if (auto v = detail::to_double(cell)) s.features.values[k] = *v;
        else throw ParseError("sample line " + std::to_string(line_no) + ": malformed value");
      } else if (k == kFeatureCount) {
        if (cell != "0" && cell != "1") throw ParseError("sample line " + std::to_string(line_no) + ": bad label");
        s.duplicate = cell == "1";
      }
      ++k;
    }
    if (k != kFeatureCount + 1) {
      throw ParseError("sample line " + std::to_string(line_no) + ": expected " +
                       std::to_string(kFeatureCount + 1) + " columns");
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  // With no predicted positives precision is reported as 1 (and flagged by
  // `no_predicted_positives`), so a silent classifier is penalized via recall.
  bool no_predicted_positives() const { return tp + fp == 0; }
  double precision() const { return no_predicted_positives() ? 1.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn); }
  double f_measure() const { return harmonic(precision(), recall()); }

  static double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }
};

struct RepetitionResult {
  Confusion confusion;
  double precision = 0, recall = 0, f_measure = 0;
};

struct EvalReport {
  double precision = 0.0;  // mean over repetitions
  double recall = 0.0;
  double f_measure = 0.0;  // harmonic mean of the two means above
  std::vector<RepetitionResult> per_repetition;
  int repetitions = 0;
  double train_fraction = 0.9;
  std::size_t repetitions_without_predicted_positives = 0;
};

struct MonteCarloParams {
  int repetitions = 100;
  double train_fraction = 0.9;
  std::uint64_t seed = 1;
  TreeParams tree;
  double threshold = 0.5;
  unsigned workers = 1;
};

inline EvalReport summarize(std::vector<RepetitionResult> reps, double train_fraction) {
  EvalReport r;
  r.repetitions = static_cast<int>(reps.size());
  r.train_fraction = train_fraction;
  for (const auto& x : reps) {
    r.precision += x.precision;
    r.recall += x.recall;
    if (x.confusion.no_predicted_positives()) ++r.repetitions_without_predicted_positives;
  }
  if (!reps.empty()) {
    r.precision /= static_cast<double>(reps.size());
    r.recall /= static_cast<double>(reps.size());
  }
  r.f_measure = Confusion::harmonic(r.precision, r.recall);
  r.per_repetition = std::move(reps);
  return r;
}

inline RepetitionResult repetition_result(const Confusion& c) {
  return {c, c.precision(), c.recall(), c.f_measure()};
}

/// Repeated stratified train/test splits of the labeled sample; each
/// repetition trains the two-model pair on the training share and scores the
/// held-out pairs. Strata are (same agency, label) so both models see both
/// classes. Deterministic for a seed and independent of the worker count.
inline EvalReport evaluate_monte_carlo(std::span<const LabeledPair> samples,
                                       const MonteCarloParams& params = {}) {
  if (params.repetitions < 1) throw ValidationError("repetitions must be positive");
  if (!(params.train_fraction > 0.0 && params.train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie in (0, 1)");
  }
  std::array<std::vector<std::size_t>, 4> strata;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    strata[(s.features.same_agency() ? 2 : 0) + (s.duplicate ? 1 : 0)].push_back(i);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const auto n = strata[k].size();
    const auto n_train = static_cast<std::size_t>(std::llround(params.train_fraction * double(n)));
    if (n_train == 0 || n_train == n) {
      throw InsufficientDataError("degenerate split: a (agency, label) stratum has " +
                                  std::to_string(n) + " samples");
    }
  }

  std::vector<RepetitionResult> reps(static_cast<std::size_t>(params.repetitions));
  parallel_for(reps.size(), params.workers, [&](std::size_t rep) {
    std::seed_seq seq{params.seed, static_cast<std::uint64_t>(rep)};
    std::mt19937_64 rng(seq);
    std::vector<LabeledPair> train;
    std::vector<const LabeledPair*> test;
    for (const auto& stratum : strata) {
      std::vector<std::size_t> idx = stratum;
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n_train =
          static_cast<std::size_t>(std::llround(params.train_fraction * double(idx.size())));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (k < n_train) train.push_back(samples[idx[k]]);
        else test.push_back(&samples[idx[k]]);
      }
    }
    TreeParams tp = params.tree;
    tp.seed = params.tree.seed + rep;
    const TrainedModelPair model = train_model_pair(train, tp, params.threshold);
    Confusion c;
    for (const LabeledPair* s : test) {
      const bool predicted = predict_proba(model, s->features) > model.threshold;
      if (predicted && s->duplicate) ++c.tp;
      else if (predicted) ++c.fp;
      else if (s->duplicate) ++c.fn;
      else ++c.tn;
    }
    reps[rep] = repetition_result(c);
  });
  return summarize(std::move(reps), params.train_fraction);
}

}  // namespace homelist
