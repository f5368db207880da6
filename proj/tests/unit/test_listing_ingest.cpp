#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"

using namespace homelist;
using testutil::make_ad;

TEST(Dates, ParseAndFormatRoundTrip) {
  auto d = parse_date("2016-02-29");
  ASSERT_TRUE(d);
  EXPECT_EQ(format_date(*d), "2016-02-29");
  EXPECT_FALSE(parse_date("2015-02-29"));
  EXPECT_FALSE(parse_date("2016-2-29"));
  EXPECT_FALSE(parse_date("2016-13-01"));
  EXPECT_EQ(days_between(make_date(2016, 1, 1), make_date(2016, 3, 1)), 60);
}

TEST(Week, DatesMapToTheirMonday) {
  // 2016-01-04 is a Monday.
  const Week w = Week::of(make_date(2016, 1, 4));
  for (int d = 0; d < 7; ++d) EXPECT_EQ(Week::of(make_date(2016, 1, 4) + std::chrono::days{d}), w);
  EXPECT_EQ(Week::of(make_date(2016, 1, 3)), w - 1);
  EXPECT_EQ(w.monday(), make_date(2016, 1, 4));
  EXPECT_EQ(w.label(), "2016-W01");
  EXPECT_EQ(Week::of(make_date(1969, 12, 29)).monday(), make_date(1969, 12, 29));
}

TEST(Week, LabelParseRoundTripOverManyYears) {
  Week w = Week::of(make_date(1990, 1, 1));
  const Week end = Week::of(make_date(2040, 12, 31));
  for (; w <= end; ++w) {
    auto back = Week::parse(w.label());
    ASSERT_TRUE(back) << w.label();
    ASSERT_EQ(*back, w);
    ASSERT_EQ(std::chrono::weekday{w.monday()}, std::chrono::Monday);
  }
  EXPECT_FALSE(Week::parse("2015-W54"));
  EXPECT_FALSE(Week::parse("2016-W53"));  // 2016 has 52 ISO weeks
  EXPECT_TRUE(Week::parse("2015-W53"));
  EXPECT_FALSE(Week::parse("2016W01"));
}

TEST(Periods, QuarterAndHalfLabels) {
  EXPECT_EQ(quarter_label(make_date(2016, 3, 31)), "2016-Q1");
  EXPECT_EQ(quarter_label(make_date(2016, 4, 1)), "2016-Q2");
  EXPECT_EQ(half_label(make_date(2016, 6, 30)), "2016-H1");
  EXPECT_EQ(half_label(make_date(2016, 7, 1)), "2016-H2");
}

TEST(Zones, CityIsThePrefixBeforeTheSlash) {
  EXPECT_EQ(city_of("milano/B12"), "milano");
  EXPECT_EQ(city_of("nozone"), "");
}

TEST(Levels, LabelsEncodeOneBased) {
  const auto& s = LevelSchemes::defaults()[OrderedTrait::maintenance];
  EXPECT_EQ(s.levels(), 4);
  EXPECT_EQ(s.find("To Be Fully Renovated"), 1);
  EXPECT_EQ(s.find("new"), 4);
  EXPECT_EQ(s.find("3"), 3);
  EXPECT_FALSE(s.find("0"));
  EXPECT_FALSE(s.find("5"));
  EXPECT_EQ(s.label(2), "to be partially renovated");
  EXPECT_THROW(s.label(0), ValidationError);
  EXPECT_FALSE(encode_ordered(std::nullopt, s));
  EXPECT_THROW(encode_ordered(std::string("palatial"), s), ValidationError);
  EXPECT_THROW(OrderedLevelScheme("x", {"a", "A"}), ValidationError);
  EXPECT_THROW(OrderedLevelScheme("x", {"a"}), ValidationError);
}

FieldMap valid_fields() {
  return {{"id", "A1"},       {"lat", "45.1"},         {"lon", "9.2"},
          {"price", "210000"}, {"created_on", "2016-01-05"}, {"zone_id", "C0/Z1"}};
}

TEST(ValidateAd, MandatoryFieldsAndMissingMarkers) {
  auto v = validate_ad(valid_fields());
  ASSERT_TRUE(v.ok());
  EXPECT_FALSE(v.ad->traits.floor_area);
  EXPECT_EQ(v.ad->traits.flag(BinaryTrait::elevator), Tri::missing);

  for (const char* key : {"id", "lat", "price", "created_on"}) {
    auto f = valid_fields();
    f.erase(f.find(key));
    EXPECT_FALSE(validate_ad(f).ok()) << key;
  }
  auto f = valid_fields();
  f["floor_area"] = "NA";
  f["rooms"] = "";
  f["elevator"] = "yes";
  f["energy_class"] = "A+";
  v = validate_ad(f);
  ASSERT_TRUE(v.ok());
  EXPECT_FALSE(v.ad->traits.floor_area);
  EXPECT_FALSE(v.ad->traits.rooms);
  EXPECT_EQ(v.ad->traits.flag(BinaryTrait::elevator), Tri::yes);
  EXPECT_EQ(v.ad->traits.level(OrderedTrait::energy_class), 8);
}

TEST(ValidateAd, RejectsMalformedValues) {
  const std::vector<std::pair<std::string, std::string>> bad{
      {"price", "-5"},        {"price", "abc"},       {"lat", "95"},       {"floor_area", "0"},
      {"rooms", "2.5"},       {"rooms", "-1"},        {"garage", "triple"}, {"elevator", "maybe"},
      {"removed_on", "2015-12-31"}, {"created_on", "2016-02-30"}};
  for (const auto& [k, val] : bad) {
    auto f = valid_fields();
    f[k] = val;
    auto v = validate_ad(f);
    EXPECT_FALSE(v.ok()) << k << "=" << val;
    EXPECT_FALSE(v.errors.empty());
  }
}

Ad random_ad(std::mt19937_64& rng, int i) {
  std::uniform_real_distribution<double> u(0, 1);
  Ad a = make_ad("A" + std::to_string(i), u(rng) < 0.2 ? "" : "AG" + std::to_string(rng() % 5),
                 44 + u(rng), 8 + u(rng), std::round(50000 + 400000 * u(rng)));
  auto& t = a.traits;
  if (u(rng) < 0.3) t.floor_area.reset();
  else t.floor_area = std::round(300 * u(rng)) / 4 + 20;
  if (u(rng) < 0.3) t.floor.reset();
  for (std::size_t k = 0; k < kOrderedTraitCount; ++k) {
    const int levels = LevelSchemes::defaults().schemes[k].levels();
    if (u(rng) < 0.7) t.ordered[k] = 1 + static_cast<int>(rng() % levels);
  }
  for (auto& b : t.binary) b = static_cast<Tri>(static_cast<int>(rng() % 3) - 1);
  if (u(rng) < 0.5) t.heating = "autonomous";
  if (u(rng) < 0.5) t.property_type = "loft";
  a.description = u(rng) < 0.2 ? "" : "casa con giardino n." + std::to_string(i);
  if (u(rng) < 0.3) a.removed_on = a.created_on + std::chrono::days{rng() % 90};
  return a;
}

TEST(AdJson, RoundTripPreservesEveryField) {
  std::mt19937_64 rng(4);
  const Week w = Week::of(make_date(2016, 3, 7));
  for (int i = 0; i < 300; ++i) {
    Ad a = random_ad(rng, i);
    a.clicks_by_week[w] = static_cast<int>(rng() % 50);
    a.clicks_by_week[w + 1] = static_cast<int>(rng() % 50);
    a.price_by_week[w] = a.asking_price;
    const Ad back = ad_from_json(json::parse(ad_to_json(a).dump()));
    ASSERT_EQ(back, a) << ad_to_json(a).dump();
  }
}

TEST(Snapshot, ParsingCollectsRowErrorsWithLineNumbers) {
  std::istringstream in(
      R"({"id":"A1","lat":45,"lon":9,"price":100000,"created_on":"2016-01-04","clicks":3})"
      "\n\n"
      R"({"id":"A2","lat":45,"lon":9,"price":-1,"created_on":"2016-01-04"})"
      "\n"
      "not json\n"
      R"({"id":"A1","lat":45,"lon":9,"price":1,"created_on":"2016-01-04"})"
      "\n"
      R"({"id":"A3","lat":45,"lon":9,"price":5,"created_on":"2016-01-04","clicks":-2})"
      "\n");
  const Week w = Week::of(make_date(2016, 1, 4));
  const auto parsed = parse_snapshot_stream(in, w);
  ASSERT_EQ(parsed.snapshot.ads.size(), 1u);
  EXPECT_EQ(parsed.snapshot.ads[0].clicks_by_week.at(w), 3);
  EXPECT_EQ(parsed.snapshot.ads[0].price_by_week.at(w), 100000.0);
  ASSERT_EQ(parsed.errors.size(), 4u);
  EXPECT_EQ(parsed.errors[0].line, 3u);
  EXPECT_EQ(parsed.errors[1].line, 4u);
  EXPECT_EQ(parsed.errors[2].line, 5u);
  EXPECT_NE(parsed.errors[2].message.find("duplicate"), std::string::npos);
  EXPECT_EQ(parsed.errors[3].line, 6u);
}

TEST(Snapshot, FilesRoundTripAndListInWeekOrder) {
  testutil::TempDir dir;
  std::mt19937_64 rng(2);
  std::vector<Snapshot> snaps;
  for (int k : {2, 0, 1}) {
    Snapshot s;
    s.week = Week::of(make_date(2016, 1, 4)) + k;
    for (int i = 0; i < 20; ++i) {
      Ad a = random_ad(rng, i);
      a.removed_on.reset();
      a.clicks_by_week[s.week] = i;
      a.price_by_week[s.week] = a.asking_price;
      s.ads.push_back(a);
    }
    write_snapshot(dir.path / (s.week.label() + ".jsonl"), s);
    snaps.push_back(s);
  }
  std::ofstream(dir.path / "notes.txt") << "ignored";
  const auto files = list_snapshots(dir.path);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename(), "2016-W01.jsonl");
  EXPECT_EQ(files[2].filename(), "2016-W03.jsonl");
  const auto p = parse_snapshot(files[2]);
  EXPECT_TRUE(p.errors.empty());
  EXPECT_EQ(p.snapshot.ads, snaps[0].ads);
  EXPECT_THROW(parse_snapshot(dir.path / "notes.txt"), ParseError);
}

TEST(Snapshot, DiffClassifiesNewUpdatedRemovedAndClickOnlyChanges) {
  const Week w0 = Week::of(make_date(2016, 1, 4));
  Snapshot a{w0, {make_ad("A1", "X", 45, 9, 100), make_ad("A2", "X", 45, 9, 200), make_ad("A3", "X", 45, 9, 300)}};
  Snapshot b{w0 + 1, {a.ads[0], a.ads[1], make_ad("A4", "Y", 45, 9, 400)}};
  b.ads[0].clicks_by_week[w0 + 1] = 17;  // clicks only
  b.ads[1].asking_price = 190;           // price cut
  const WeekDelta d = diff_snapshots(a, b);
  ASSERT_EQ(d.new_ads.size(), 1u);
  EXPECT_EQ(d.new_ads[0].id, "A4");
  ASSERT_EQ(d.updated_ads.size(), 1u);
  EXPECT_EQ(d.updated_ads[0].id, "A2");
  EXPECT_EQ(d.removed_ad_ids, std::vector<std::string>{"A3"});
  ASSERT_EQ(d.click_updates.size(), 3u);
  EXPECT_EQ(d.click_updates[0], (std::pair<std::string, int>{"A1", 17}));
  EXPECT_THROW(diff_snapshots(b, a), ValidationError);
}

TEST(ExternalSeries, ParseWriteRoundTripAndBoundsValidation) {
  std::vector<ExternalObservation> rows{{SeriesKind::zone_price_bounds, "2016-H1", "C0/Z1", 1800, 2400},
                                        {SeriesKind::city_sales, "2016-Q1", "C0", 123, 0},
                                        {SeriesKind::survey_discount, "2016-Q1", "national", 0.125, 0}};
  std::stringstream ss;
  write_external_series(ss, rows);
  const auto back = parse_external_series(ss);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].value2, 2400);
  EXPECT_EQ(back[2].value1, 0.125);
  EXPECT_EQ(mean_zone_price(1800, 2400), 2100);
  EXPECT_THROW(mean_zone_price(2400, 1800), ValidationError);
  EXPECT_THROW(mean_zone_price(0, 1800), ValidationError);
  std::istringstream bad("zone_price_bounds,2016-H1,Z,3000,2000\n");
  EXPECT_THROW(parse_external_series(bad), ValidationError);
  std::istringstream unknown("rents,2016-H1,Z,3000,2000\n");
  EXPECT_THROW(parse_external_series(unknown), ParseError);
}
