#include <gtest/gtest.h>

#include <random>

#include "../oracles.hpp"
#include "helpers.hpp"

using namespace homelist;
using testutil::small_config;

TEST(Synth, SameSeedReproducesTheStream) {
  const auto a = generate(small_config(), 9);
  const auto b = generate(small_config(), 9);
  ASSERT_EQ(a.ads.size(), b.ads.size());
  EXPECT_EQ(a.truth, b.truth);
  for (std::size_t i = 0; i < a.ads.size(); ++i) {
    ASSERT_EQ(ad_to_json(a.ads[i]).dump(), ad_to_json(b.ads[i]).dump());
  }
  const auto c = generate(small_config(), 10);
  EXPECT_NE(a.truth, c.truth);
}

TEST(Synth, SnapshotsOnlyHoldLiveAdsWithOneWeek) {
  const auto out = generate(small_config(), 4);
  ASSERT_EQ(out.weeks, 8);
  for (int k = 0; k < out.weeks; ++k) {
    const Snapshot s = out.snapshot(k);
    EXPECT_EQ(s.week, out.week(k));
    EXPECT_FALSE(s.ads.empty());
    for (const Ad& ad : s.ads) {
      ASSERT_EQ(ad.clicks_by_week.size(), 1u);
      ASSERT_TRUE(out.truth.count(ad.id));
    }
  }
  EXPECT_THROW(out.snapshot(8), ValidationError);
}

TEST(Synth, AdsPerUnitSharesAreRealistic) {
  const auto out = generate(GeneratorConfig{}, 2);
  std::map<std::string, int> ads_of;
  for (const auto& [ad, unit] : out.truth) ++ads_of[unit];
  std::array<double, 3> share{};
  for (const auto& [unit, n] : ads_of) share[std::min(n, 3) - 1] += 1.0 / double(ads_of.size());
  EXPECT_NEAR(share[0], 0.77, 0.03);
  EXPECT_NEAR(share[1], 0.13, 0.03);
  EXPECT_NEAR(share[2], 0.10, 0.03);
}

TEST(Synth, ConfigValidation) {
  EXPECT_NO_THROW(GeneratorConfig{}.validate());
  EXPECT_NO_THROW(GeneratorConfig::coexisting().validate());
  EXPECT_NO_THROW(GeneratorConfig::null_mechanisms().validate());
  auto bad = [](auto mutate) {
    GeneratorConfig g;
    mutate(g);
    return g;
  };
  EXPECT_THROW(bad([](GeneratorConfig& g) { g.cities = 0; }).validate(), ValidationError);
  EXPECT_THROW(bad([](GeneratorConfig& g) { g.city_size = {1.0}; }).validate(), ValidationError);
  EXPECT_THROW(bad([](GeneratorConfig& g) { g.duplicates.ads_per_unit[0] = 0.5; }).validate(), ValidationError);
  EXPECT_THROW(bad([](GeneratorConfig& g) { g.duplicates.p_open = 0.7; }).validate(), ValidationError);
  EXPECT_THROW(bad([](GeneratorConfig& g) { g.discount = 1.5; }).validate(), ValidationError);
  EXPECT_THROW(bad([](GeneratorConfig& g) { g.clicks.shock_rho = 1.0; }).validate(), ValidationError);
}

TEST(Synth, WritesSnapshotsTruthAndExternalSeries) {
  testutil::TempDir dir;
  const auto out = generate(small_config(), 5);
  write_generator_output(dir.path, out);
  const auto files = list_snapshots(dir.path / "snapshots");
  ASSERT_EQ(files.size(), 8u);
  EXPECT_EQ(parse_snapshot(files[0]).snapshot.ads.size(), out.snapshot(0).ads.size());
  EXPECT_EQ(read_assignment(dir.path / "truth.csv"), out.truth);
  EXPECT_EQ(load_external_series(dir.path / "external.csv").size(), out.external.size());
}

TEST(Synth, TrainingPairsHitTargetShares) {
  HashedTokenEmbedding emb;
  const auto samples = training_pairs(generate(small_config(), 6), emb);
  ASSERT_FALSE(samples.empty());
  double pos[2] = {0, 0}, all[2] = {0, 0};
  for (const auto& s : samples) {
    const int k = s.features.same_agency() ? 1 : 0;
    all[k] += 1;
    pos[k] += s.duplicate;
  }
  if (all[1] > 50) EXPECT_NEAR(pos[1] / all[1], 0.45, 0.05);
  if (all[0] > 50) EXPECT_NEAR(pos[0] / all[0], 0.19, 0.05);
  TrainingSampleOptions bad;
  bad.same_agency_duplicate_share = 0;
  EXPECT_THROW(training_pairs(generate(small_config(), 6), emb, bad), ValidationError);
}

TEST(Score, HandExample) {
  const std::map<std::string, std::string> pred{{"A", "1"}, {"B", "1"}, {"C", "2"}};
  const std::map<std::string, std::string> truth{{"A", "u"}, {"B", "u"}, {"C", "u"}};
  const auto s = score(pred, truth);
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 1.0 / 3.0);
  EXPECT_EQ(s.predicted_units, 2u);
  EXPECT_EQ(s.true_units, 1u);
  const auto r = score(truth, pred);
  EXPECT_DOUBLE_EQ(r.precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
}

TEST(Score, NoPredictedPairsConvention) {
  const std::map<std::string, std::string> pred{{"A", "1"}, {"B", "2"}};
  const std::map<std::string, std::string> truth{{"A", "u"}, {"B", "u"}};
  const auto s = score(pred, truth);
  EXPECT_TRUE(s.no_predicted_pairs);
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 0.0);
  EXPECT_DOUBLE_EQ(s.f_measure, 0.0);
}

TEST(Score, MatchesPairEnumerationOnRandomPartitions) {
  std::mt19937_64 rng(8);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng() % 40;
    std::map<std::string, std::string> pred, truth;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "a" + std::to_string(i);
      pred[id] = "p" + std::to_string(rng() % (1 + n / 3));
      truth[id] = "t" + std::to_string(rng() % (1 + n / 4));
    }
    const auto s = score(pred, truth);
    const auto c = oracle::enumerate_pairs(pred, truth);
    ASSERT_EQ(s.predicted_pairs, c.predicted);
    ASSERT_EQ(s.true_pairs, c.truth);
    ASSERT_EQ(s.correct_pairs, c.both);
  }
}

TEST(Score, RejectsMismatchedPartitions) {
  const std::map<std::string, std::string> a{{"A", "1"}, {"B", "1"}};
  EXPECT_THROW(score(a, {{"A", "1"}}), ValidationError);
  EXPECT_THROW(score(a, {{"A", "1"}, {"C", "1"}}), ValidationError);
}
