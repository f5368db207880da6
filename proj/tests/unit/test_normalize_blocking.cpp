#include <gtest/gtest.h>

#include <random>

#include "../oracles.hpp"
#include "helpers.hpp"

using namespace homelist;

TEST(GeoDistance, AgreesWithVectorFormulaOnRandomPoints) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180), step(-0.02, 0.02);
  for (int i = 0; i < 2000; ++i) {
    const GeoPoint p{lat(rng), lon(rng)};
    const GeoPoint q = i % 2 ? GeoPoint{lat(rng), lon(rng)} : GeoPoint{p.lat + step(rng), p.lon + step(rng)};
    const double d = geo_distance_m(p, q);
    ASSERT_NEAR(d, oracle::sphere_distance_m(p, q), 1e-6 * std::max(1.0, d));
    ASSERT_DOUBLE_EQ(d, geo_distance_m(q, p));
  }
  // One degree of latitude on the mean-radius sphere.
  EXPECT_NEAR(geo_distance_m({45, 9}, {46, 9}), 6371008.8 * 3.14159265358979323846 / 180, 1e-6);
  EXPECT_EQ(geo_distance_m({45, 9}, {45, 9}), 0.0);
}

TEST(Levenshtein, MatchesFullMatrixOracle) {
  std::mt19937_64 rng(2);
  const std::string alphabet = "abcde ";
  for (int i = 0; i < 500; ++i) {
    std::string s(rng() % 15, ' '), t(rng() % 15, ' ');
    for (auto& c : s) c = alphabet[rng() % alphabet.size()];
    for (auto& c : t) c = alphabet[rng() % alphabet.size()];
    const double expect =
        s.empty() && t.empty() ? 0.0 : double(oracle::edit_distance(s, t)) / double(std::max(s.size(), t.size()));
    ASSERT_DOUBLE_EQ(levenshtein_norm(s, t), expect) << s << "|" << t;
    ASSERT_DOUBLE_EQ(levenshtein_norm(s, t), levenshtein_norm(t, s));
  }
  EXPECT_EQ(levenshtein_norm("kitten", "sitting"), 3.0 / 7.0);
  EXPECT_EQ(levenshtein_norm("", "abc"), 1.0);
}

TEST(Embeddings, CosineDistanceProperties) {
  EmbeddingVector a{{1, 0, 0}, "t"}, b{{0, 1, 0}, "t"}, c{{2, 0, 0}, "t"}, z{{0, 0, 0}, "t"}, n{{-1, 0, 0}, "t"};
  EXPECT_DOUBLE_EQ(cosine_distance(a, b), 1.0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, c), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, n), 2.0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, z), 1.0);
  EXPECT_THROW(cosine_distance(a, EmbeddingVector{{1, 2}, "t"}), ValidationError);
}

TEST(Embeddings, HashedTokensAreDeterministicAndCaseInsensitive) {
  HashedTokenEmbedding e;
  const auto v1 = e.embed("x", "Sunny flat, near Duomo");
  const auto v2 = HashedTokenEmbedding().embed("y", "sunny FLAT near duomo!");
  EXPECT_EQ(v1.values, v2.values);
  EXPECT_EQ(v1.dimension(), 256u);
  EXPECT_EQ(word_tokens("Città, 3 locali"), (std::vector<std::string>{"città", "3", "locali"}));
  EXPECT_GT(cosine_distance(v1, e.embed("z", "large villa with pool")), 0.5);
}

TEST(Embeddings, ExternalVectorsFallBack) {
  auto fallback = std::make_shared<HashedTokenEmbedding>(4);
  ExternalEmbeddings ext(4, fallback);
  ext.add("A1", {1, 2, 3, 4});
  EXPECT_EQ(ext.embed("A1", "whatever").values, (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(ext.embed("A2", "text").values, fallback->embed("A2", "text").values);
  EXPECT_THROW(ext.add("A3", {1}), ValidationError);
  EXPECT_THROW(ExternalEmbeddings(3, fallback), ValidationError);
}

namespace {

std::vector<BlockRecord> two(double price_a, double price_b, double meters_apart, bool same_city = true) {
  static const std::string ids[2] = {"A", "B"};
  BlockRecord a{ids[0], "", "c1", {45.0, 9.0}, price_a, true};
  // Offset along a meridian: latitude degrees per meter on the sphere.
  const double deg = meters_apart / (kEarthRadiusM * 3.14159265358979323846 / 180.0);
  BlockRecord b{ids[1], "", same_city ? "c1" : "c2", {45.0 + deg, 9.0}, price_b, true};
  return {a, b};
}

}  // namespace

TEST(Blocking, PriceRuleUsesStrictInequalities) {
  BlockingParams p;
  EXPECT_EQ(candidate_pairs(two(100000, 124999, 10), p).size(), 1u);
  EXPECT_EQ(candidate_pairs(two(400000, 500000, 10), p).size(), 0u);  // 25% and 100k
  EXPECT_EQ(candidate_pairs(two(400000, 449999, 10), p).size(), 1u);  // 12.5%
  EXPECT_EQ(candidate_pairs(two(40000, 90000, 10), p).size(), 0u);    // 125% and exactly 50k
  EXPECT_EQ(candidate_pairs(two(40000, 89999, 10), p).size(), 1u);    // absolute gap below 50k
  EXPECT_TRUE(price_gap_admissible(100, 100, p));
}

TEST(Blocking, RadiusCityAndProbeRules) {
  BlockingParams p;
  EXPECT_EQ(candidate_pairs(two(1e5, 1e5, 399), p).size(), 1u);
  EXPECT_EQ(candidate_pairs(two(1e5, 1e5, 401), p).size(), 0u);
  EXPECT_EQ(candidate_pairs(two(1e5, 1e5, 10, false), p).size(), 0u);
  p.same_city_only = false;
  EXPECT_EQ(candidate_pairs(two(1e5, 1e5, 10, false), p).size(), 1u);
  auto recs = two(1e5, 1e5, 10);
  recs[0].probe = recs[1].probe = false;
  EXPECT_TRUE(candidate_pairs(recs, p).empty());
  recs[1].probe = true;
  EXPECT_EQ(candidate_pairs(recs, p).size(), 1u);
}

TEST(Blocking, PairsCarryGapsAndAgencyFlag) {
  auto recs = two(100000, 110000, 100);
  recs[0].agency_id = recs[1].agency_id = "AG1";
  const auto pairs = candidate_pairs(recs, {});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].a, 0u);
  EXPECT_EQ(pairs[0].b, 1u);
  EXPECT_TRUE(pairs[0].same_agency);
  EXPECT_NEAR(pairs[0].distance_m, 100.0, 1e-6);
  EXPECT_DOUBLE_EQ(pairs[0].rel_price_gap, 0.1);
  EXPECT_DOUBLE_EQ(pairs[0].abs_price_gap, 10000);
  EXPECT_FALSE(same_agency("", ""));
  EXPECT_TRUE(same_agency("X", "X"));
}

TEST(Blocking, GridMatchesBruteForceAcrossLatitudesAndWorkers) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int inst = 0; inst < 12; ++inst) {
    const double lat0 = -80.0 + 14.0 * inst;
    const std::size_t n = 300;
    std::vector<std::string> ids(n);
    std::vector<BlockRecord> recs(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = "r" + std::to_string(1000 + (i * 37) % n);
    for (std::size_t i = 0; i < n; ++i) {
      recs[i] = {ids[i], "", "c" + std::to_string(rng() % 2), {lat0 + 0.01 * u(rng), 179.995 - 0.01 * u(rng)},
                 1e5 + 2e5 * u(rng), u(rng) < 0.8};
    }
    const auto expected = oracle::brute_force_pairs(recs, {});
    for (unsigned workers : {1u, 3u}) {
      std::set<std::pair<std::string, std::string>> got;
      for (const auto& p : candidate_pairs(recs, {}, workers)) {
        ASSERT_LT(recs[p.a].id, recs[p.b].id);
        got.insert({std::string(recs[p.a].id), std::string(recs[p.b].id)});
      }
      ASSERT_EQ(got, expected) << "latitude " << lat0;
    }
  }
}

TEST(Blocking, OutputIsIndependentOfWorkerCount) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::string> ids(1500);
  std::vector<BlockRecord> recs(1500);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    ids[i] = "x" + std::to_string(i);
    recs[i] = {ids[i], "", "c", {45 + 0.02 * u(rng), 9 + 0.02 * u(rng)}, 1e5 + 1e5 * u(rng), true};
  }
  EXPECT_EQ(candidate_pairs(recs, {}, 1), candidate_pairs(recs, {}, 4));
}
