#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"

using namespace homelist;
using testutil::make_ad;

namespace {

struct Data {
  std::vector<double> x;
  std::vector<std::uint8_t> y;
};

// Label is 1 when the first feature exceeds 0.6; the second feature is noise.
Data threshold_data(std::size_t n, std::uint64_t seed, double missing = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    d.x.push_back(u(rng) < missing ? std::numeric_limits<double>::quiet_NaN() : a);
    d.x.push_back(b);
    d.y.push_back(a > 0.6 ? 1 : 0);
  }
  return d;
}

}  // namespace

TEST(DecisionTree, LearnsAThresholdOnTheInformativeFeature) {
  const Data d = threshold_data(600, 1);
  const auto tree = train_tree(d.x, d.y, {"a", "b"});
  ASSERT_TRUE(tree.trained());
  const auto& root = tree.stages[0].nodes[0];
  EXPECT_EQ(root.feature, 0);
  EXPECT_NEAR(root.threshold, 0.6, 0.02);
  EXPECT_GT(tree.probability(std::vector<double>{0.9, 0.5}), 0.9);
  EXPECT_LT(tree.probability(std::vector<double>{0.3, 0.5}), 0.1);
}

TEST(DecisionTree, LeafProbabilitiesAreLaplaceSmoothed) {
  // Two pure groups of ten: leaves give (0 + 1) / (10 + 2) and (10 + 1) / (10 + 2).
  std::vector<double> x;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i < 10 ? 0.0 : 1.0);
    y.push_back(i < 10 ? 0 : 1);
  }
  const auto tree = train_tree(x, y, {"a"});
  EXPECT_DOUBLE_EQ(tree.probability(std::vector<double>{0.0}), 1.0 / 12.0);
  EXPECT_DOUBLE_EQ(tree.probability(std::vector<double>{1.0}), 11.0 / 12.0);
  // A missing value is sent down both branches weighted by training mass.
  EXPECT_DOUBLE_EQ(tree.probability(std::vector<double>{std::numeric_limits<double>::quiet_NaN()}), 0.5);
}

TEST(DecisionTree, HandlesMissingValuesInTraining) {
  const Data d = threshold_data(800, 2, 0.3);
  const auto tree = train_tree(d.x, d.y, {"a", "b"});
  EXPECT_GT(tree.probability(std::vector<double>{0.95, 0.5}), 0.8);
  EXPECT_LT(tree.probability(std::vector<double>{0.1, 0.5}), 0.2);
  const double p = tree.probability(std::vector<double>{std::numeric_limits<double>::quiet_NaN(), 0.5});
  EXPECT_GT(p, 0.2);
  EXPECT_LT(p, 0.7);
}

TEST(DecisionTree, RespectsMinimumLeafWeightAndDepth) {
  const Data d = threshold_data(400, 3);
  TreeParams p;
  p.prune = false;
  p.min_leaf = 40;
  const auto tree = train_tree(d.x, d.y, {"a", "b"}, p);
  for (const auto& n : tree.stages[0].nodes) {
    if (n.leaf()) EXPECT_GE(n.counts[0] + n.counts[1], 40.0 - 1e-9);
  }
  p.min_leaf = 1;
  p.max_depth = 2;
  EXPECT_LE(train_tree(d.x, d.y, {"a", "b"}, p).stages[0].depth(), 2);
}

TEST(DecisionTree, PruningNeverGrowsTheTree) {
  const Data d = threshold_data(500, 4);
  Data noisy = d;
  std::mt19937_64 rng(9);
  for (auto& y : noisy.y) if (rng() % 5 == 0) y = 1 - y;
  TreeParams grow;
  grow.prune = false;
  grow.min_leaf = 2;
  TreeParams pruned = grow;
  pruned.prune = true;
  EXPECT_LE(train_tree(noisy.x, noisy.y, {"a", "b"}, pruned).stages[0].leaf_count(),
            train_tree(noisy.x, noisy.y, {"a", "b"}, grow).stages[0].leaf_count());
}

TEST(DecisionTree, JsonRoundTripGivesIdenticalPredictions) {
  const Data d = threshold_data(500, 5, 0.1);
  TreeParams p;
  p.boosting_trials = 5;
  const auto tree = train_tree(d.x, d.y, {"a", "b"}, p);
  const auto back = DecisionTree::from_json(nlohmann::json::parse(tree.to_json().dump()));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{i % 7 == 0 ? std::numeric_limits<double>::quiet_NaN() : u(rng), u(rng)};
    ASSERT_EQ(tree.probability(x), back.probability(x));
  }
  EXPECT_EQ(train_tree(d.x, d.y, {"a", "b"}, p).to_json(), tree.to_json());
}

TEST(DecisionTree, RejectsDegenerateInput) {
  std::vector<double> x{1, 2, 3};
  std::vector<std::uint8_t> y{1, 1, 1};
  EXPECT_THROW(train_tree(x, y, {"a"}), InsufficientDataError);
  std::vector<std::uint8_t> y2{0, 1};
  EXPECT_THROW(train_tree(x, y2, {"a"}), ValidationError);
  EXPECT_THROW(DecisionTree{}.probability(std::vector<double>{1}), ModelError);
  const Data d = threshold_data(50, 7);
  EXPECT_THROW(train_tree(d.x, d.y, {"a", "b"}).probability(std::vector<double>{1}), ModelError);
}

TEST(Features, SymmetricAndMissingAware) {
  HashedTokenEmbedding emb;
  Ad a = make_ad("A1", "X", 45.0, 9.0, 200000);
  Ad b = make_ad("A2", "Y", 45.001, 9.0, 220000);
  b.traits.floor_area.reset();
  b.traits.level(OrderedTrait::garage) = 2;
  a.traits.level(OrderedTrait::garage) = 3;
  b.description = "Bright apartment, close to the station";
  const auto f = extract_features(a, b, emb);
  const auto g = extract_features(b, a, emb);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (std::isnan(f.values[i])) ASSERT_TRUE(std::isnan(g.values[i]));
    else ASSERT_EQ(f.values[i], g.values[i]) << feature_names()[i];
  }
  EXPECT_DOUBLE_EQ(f[Feature::price_rel], 0.1);
  EXPECT_DOUBLE_EQ(f[Feature::price_abs], 20000);
  EXPECT_TRUE(std::isnan(f[Feature::area_rel]));
  EXPECT_EQ(f[Feature::garage_diff], 1.0);
  EXPECT_TRUE(std::isnan(f[Feature::maintenance_diff]));
  EXPECT_TRUE(std::isnan(f[Feature::elevator_match]));
  EXPECT_NEAR(f[Feature::geo_m], 111.2, 0.1);
  EXPECT_EQ(f[Feature::same_agency], 0.0);
  // Cross-agency text uses embeddings: punctuation and case do not matter.
  EXPECT_NEAR(f[Feature::text_dist], 0.0, 1e-12);
}

TEST(Features, SameAgencyTextUsesEditDistance) {
  HashedTokenEmbedding emb;
  Ad a = make_ad("A1", "X", 45, 9, 1e5), b = make_ad("A2", "X", 45, 9, 1e5);
  a.description = "abcd";
  b.description = "abxd";
  const auto f = extract_features(a, b, emb);
  EXPECT_EQ(f[Feature::same_agency], 1.0);
  EXPECT_DOUBLE_EQ(f[Feature::text_dist], 0.25);
  b.description.clear();
  EXPECT_TRUE(std::isnan(extract_features(a, b, emb)[Feature::text_dist]));
}

TEST(Confusion, MetricsFromCounts) {
  const Confusion c{9, 1, 1, 0};
  EXPECT_EQ(c.precision(), 0.9);
  EXPECT_EQ(c.recall(), 0.9);
  EXPECT_EQ(c.f_measure(), 0.9);
  const Confusion silent{0, 0, 4, 6};
  EXPECT_TRUE(silent.no_predicted_positives());
  EXPECT_EQ(silent.precision(), 1.0);
  EXPECT_EQ(silent.f_measure(), 0.0);
  EXPECT_DOUBLE_EQ((Confusion{2, 2, 6, 0}).f_measure(), 2 * 0.5 * 0.25 / 0.75);
}

namespace {

const std::vector<LabeledPair>& small_samples() {
  static const std::vector<LabeledPair> s = [] {
    HashedTokenEmbedding emb;
    return training_pairs(generate(testutil::small_config(), 5), emb);
  }();
  return s;
}

}  // namespace

TEST(PairModels, SamplesRoundTripThroughCsv) {
  const auto& s = small_samples();
  std::stringstream ss;
  write_samples(ss, s);
  const auto back = read_samples(ss);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    ASSERT_EQ(back[i].duplicate, s[i].duplicate);
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (std::isnan(s[i].features.values[k])) ASSERT_TRUE(std::isnan(back[i].features.values[k]));
      else ASSERT_EQ(back[i].features.values[k], s[i].features.values[k]);
    }
  }
  std::istringstream bad("header\n1,2,3\n");
  EXPECT_THROW(read_samples(bad), ParseError);
}

TEST(PairModels, TwoModelsSaveLoadAndClassifyStrictly) {
  const auto& s = small_samples();
  const auto m = train_model_pair(s);
  EXPECT_TRUE(m.trained());
  testutil::TempDir dir;
  m.save(dir.path / "model.json");
  const auto back = TrainedModelPair::load(dir.path / "model.json");
  for (const auto& x : s) ASSERT_EQ(predict_proba(m, x.features), predict_proba(back, x.features));

  // Routing: the same-agency flag picks the model.
  const auto& f = s.front().features;
  const auto& expect = f.same_agency() ? m.model_same_agency : m.model_cross_agency;
  EXPECT_EQ(predict_proba(m, f), expect.probability(f.span()));

  // Threshold at a probability value: equal is not enough.
  std::vector<CandidatePair> pairs(1);
  std::vector<PairFeatures> feats{f};
  TrainedModelPair at = m;
  at.threshold = predict_proba(m, f);
  if (at.threshold > 0 && at.threshold < 1) EXPECT_TRUE(classify(at, pairs, feats).empty());

  std::ofstream(dir.path / "bad.json") << "{\"threshold\": 0.5}";
  EXPECT_THROW(TrainedModelPair::load(dir.path / "bad.json"), ModelError);
  EXPECT_THROW(TrainedModelPair::load(dir.path / "missing.json"), ParseError);
}

TEST(PairModels, MonteCarloIsDeterministicAndStratified) {
  const auto& s = small_samples();
  MonteCarloParams p;
  p.repetitions = 12;
  p.seed = 3;
  const auto a = evaluate_monte_carlo(s, p);
  p.workers = 3;
  const auto b = evaluate_monte_carlo(s, p);
  ASSERT_EQ(a.per_repetition.size(), 12u);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_EQ(a.per_repetition[k].confusion.tp, b.per_repetition[k].confusion.tp);
    EXPECT_EQ(a.per_repetition[k].confusion.fp, b.per_repetition[k].confusion.fp);
  }
  double mean_p = 0;
  for (const auto& r : a.per_repetition) mean_p += r.precision;
  EXPECT_DOUBLE_EQ(a.precision, mean_p / 12);
  EXPECT_DOUBLE_EQ(a.f_measure, Confusion::harmonic(a.precision, a.recall));
  p.seed = 4;
  const auto c = evaluate_monte_carlo(s, p);
  bool differs = false;
  for (std::size_t k = 0; k < 12; ++k) differs |= c.per_repetition[k].confusion.tp != a.per_repetition[k].confusion.tp;
  EXPECT_TRUE(differs);

  std::vector<LabeledPair> tiny(s.begin(), s.begin() + 3);
  EXPECT_THROW(evaluate_monte_carlo(tiny, p), InsufficientDataError);
}
