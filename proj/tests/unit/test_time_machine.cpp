#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace homelist;
using testutil::make_ad;

namespace {

// Deterministic model: two ads are duplicates exactly when they lie within
// 50 m of each other.
TrainedModelPair distance_model() {
  Tree t;
  TreeNode root;
  root.feature = static_cast<int>(Feature::geo_m);
  root.threshold = 50.0;
  root.left = 1;
  root.right = 2;
  TreeNode near, far;
  near.counts = {0, 100};
  far.counts = {100, 0};
  t.nodes = {root, near, far};
  DecisionTree d;
  d.feature_names = feature_names();
  d.stages = {t};
  d.stage_weights = {1.0};
  return {d, d, 0.5};
}

const Week kW0 = Week::of(make_date(2016, 1, 4));

// Meters north of (45, 9).
Ad at(std::string id, std::string agency, double meters, double price, int week) {
  const double deg = meters / (kEarthRadiusM * 3.14159265358979323846 / 180.0);
  Ad a = make_ad(std::move(id), std::move(agency), 45.0 + deg, 9.0, price, (kW0 + week).monday());
  a.clicks_by_week[kW0 + week] = 10;
  return a;
}

struct Harness {
  TrainedModelPair model = distance_model();
  HashedTokenEmbedding emb;
  PipelineState state;
  std::optional<Snapshot> prev;

  PipelineContext ctx() const { return {model, emb, {}}; }

  void week(int k, std::vector<Ad> ads) {
    Snapshot s{kW0 + k, std::move(ads)};
    for (auto& a : s.ads) a.clicks_by_week = {{s.week, 10}};
    Snapshot p = prev.value_or(Snapshot{s.week - 1, {}});
    process_week(state, diff_snapshots(p, s), ctx());
    prev = s;
  }

  const std::string& unit(const std::string& ad) const { return state.unit_of.at(ad); }
  const HousingUnit& unit_of(const std::string& ad) const { return state.units.at(unit(ad)); }
};

void expect_consistent(const PipelineState& s) {
  std::size_t members = 0;
  for (const auto& [uid, u] : s.units) {
    ASSERT_FALSE(u.member_ad_ids.empty());
    for (const auto& ad : u.member_ad_ids) ASSERT_EQ(s.unit_of.at(ad), uid);
    members += u.member_ad_ids.size();
  }
  ASSERT_EQ(members, s.unit_of.size());
  ASSERT_EQ(members, s.ads.size());
  for (const auto& e : s.audit) {
    if (e.kind == AuditEvent::Kind::cluster) ASSERT_LE(e.pre_existing_units.size(), 1u);
  }
}

}  // namespace

TEST(TimeMachine, NewAdsJoinExistingUnitsAndKeepTheirId) {
  Harness h;
  h.week(0, {at("A1", "X", 0, 200000, 0), at("A2", "Y", 10, 205000, 0), at("A3", "Z", 300, 200000, 0)});
  EXPECT_EQ(h.unit("A1"), h.unit("A2"));
  EXPECT_NE(h.unit("A1"), h.unit("A3"));
  const std::string u = h.unit("A1");

  h.week(1, {*h.prev->ads.data(), h.prev->ads[1], h.prev->ads[2], at("A4", "W", 20, 199000, 1)});
  EXPECT_EQ(h.unit("A4"), u);
  EXPECT_EQ(h.unit_of("A4").member_ad_ids, (std::vector<std::string>{"A1", "A2", "A4"}));
  const auto& last = h.state.audit.back();
  EXPECT_EQ(last.kind, AuditEvent::Kind::cluster);
  EXPECT_EQ(last.pre_existing_units, std::vector<std::string>{u});
  expect_consistent(h.state);
}

TEST(TimeMachine, ExitDatesAndLookbackMatching) {
  Harness h;
  h.week(0, {at("A1", "X", 0, 200000, 0), at("A2", "Y", 10, 200000, 0)});
  const std::string u = h.unit("A1");
  h.week(1, {});
  EXPECT_EQ(h.state.units.at(u).exit_date, (kW0 + 1).monday());
  EXPECT_EQ(h.state.ads.at("A1").removed_on, (kW0 + 1).monday());

  // Re-listed three weeks later: matched to the exited unit, which comes back.
  h.week(4, {at("A5", "Z", 5, 198000, 4)});
  EXPECT_EQ(h.unit("A5"), u);
  EXPECT_TRUE(h.state.units.at(u).active());

  // Gone again, then a listing long after the lookback window: a new unit.
  h.week(5, {});
  h.week(5 + 9, {at("A6", "Z", 5, 198000, 14)});
  EXPECT_NE(h.unit("A6"), u);
  expect_consistent(h.state);
}

TEST(TimeMachine, UpdatedAdsAreDetachedAndRematched) {
  Harness h;
  h.week(0, {at("A1", "X", 0, 200000, 0), at("A2", "Y", 10, 200000, 0), at("A3", "Z", 1000, 300000, 0)});
  const std::string u = h.unit("A1");
  // A2 moves next to A3: it leaves its unit and joins A3's.
  Ad moved = at("A2", "Y", 1005, 300000, 0);
  h.week(1, {h.prev->ads[0], moved, h.prev->ads[2]});
  EXPECT_EQ(h.unit("A2"), h.unit("A3"));
  EXPECT_EQ(h.state.units.at(u).member_ad_ids, std::vector<std::string>{"A1"});
  bool detached = false;
  for (const auto& e : h.state.audit) detached |= e.kind == AuditEvent::Kind::detach && e.ad_ids[0] == "A2";
  EXPECT_TRUE(detached);
  // Price history accumulates across the update.
  EXPECT_EQ(h.state.ads.at("A2").price_by_week.size(), 2u);
  expect_consistent(h.state);
}

TEST(TimeMachine, ClickOnlyChangesDoNotTriggerMatching) {
  Harness h;
  h.week(0, {at("A1", "X", 0, 200000, 0), at("A2", "Y", 300, 200000, 0)});
  const auto audit = h.state.audit.size();
  h.week(1, h.prev->ads);
  EXPECT_EQ(h.state.audit.size(), audit);
  EXPECT_EQ(h.state.ads.at("A1").clicks_by_week.size(), 2u);
}

TEST(TimeMachine, RevivedAdsAreHandledAsUpdates) {
  Harness h;
  h.week(0, {at("A1", "X", 0, 200000, 0), at("A2", "Y", 10, 200000, 0)});
  h.week(1, {h.prev->ads[1]});
  EXPECT_TRUE(h.state.ads.at("A1").removed_on);
  h.week(2, {at("A1", "X", 0, 200000, 0), at("A2", "Y", 10, 200000, 0)});
  EXPECT_FALSE(h.state.ads.at("A1").removed_on);
  EXPECT_EQ(h.unit("A1"), h.unit("A2"));
  EXPECT_EQ(h.state.ads.at("A1").clicks_by_week.size(), 2u);
  expect_consistent(h.state);
}

TEST(TimeMachine, RejectsOutOfOrderWeeksAndUntrainedModels) {
  Harness h;
  h.week(0, {at("A1", "X", 0, 200000, 0)});
  EXPECT_THROW(process_week(h.state, WeekDelta{kW0}, h.ctx()), ValidationError);
  TrainedModelPair empty;
  HashedTokenEmbedding emb;
  PipelineState s;
  EXPECT_THROW(process_week(s, WeekDelta{kW0}, PipelineContext{empty, emb, {}}), ModelError);
}

TEST(TimeMachine, StreamAndBatchAgreeWhenDuplicatesCoexist) {
  GeneratorConfig cfg = GeneratorConfig::coexisting();
  cfg.cities = 2;
  cfg.city_size = {1.0, 1.0};
  cfg.stock_per_city = 200;
  cfg.weeks = 10;
  const auto data = generate(cfg, 3);
  const auto& model = testutil::small_model();
  HashedTokenEmbedding emb;
  const PipelineContext ctx{model, emb, {}};
  const auto stream = run_stream(data.snapshots(), ctx);
  const auto batch = batch_dedup(data.ads, ctx);
  expect_consistent(stream.state);
  expect_consistent(batch);
  std::set<std::vector<std::string>> a, b;
  for (const auto& [id, u] : stream.state.units) a.insert(u.member_ad_ids);
  for (const auto& [id, u] : batch.units) b.insert(u.member_ad_ids);
  EXPECT_EQ(a, b);
}

TEST(TimeMachine, WorkerCountDoesNotChangeTheResult) {
  const auto data = generate(testutil::small_config(), 4);
  HashedTokenEmbedding emb;
  PipelineConfig one, four;
  four.workers = 4;
  const auto a = run_stream(data.snapshots(), {testutil::small_model(), emb, one});
  const auto b = run_stream(data.snapshots(), {testutil::small_model(), emb, four});
  EXPECT_EQ(a.state.unit_of, b.state.unit_of);
  EXPECT_EQ(a.filtered_units, b.filtered_units);
}

TEST(Filters, MinimumDurationAndHedonicRatio) {
  std::vector<HousingUnit> units;
  for (int i = 0; i < 40; ++i) {
    HousingUnit u;
    u.id = "U" + std::to_string(i);
    u.member_ad_ids = {"A" + std::to_string(i)};
    u.zone_id = "C0/Z" + std::to_string(i % 2);
    u.traits.floor_area = 60.0 + i;
    u.traits.rooms = 2 + i % 3;
    u.traits.bathrooms = 1 + i % 2;
    u.asking_price = 2500.0 * *u.traits.floor_area * (1.0 + 0.02 * ((i * 7) % 5));
    u.entry_date = make_date(2016, 1, 4);
    if (i % 5 == 0) u.exit_date = make_date(2016, 1, 10);  // 6 days
    units.push_back(u);
  }
  units[7].asking_price *= 4.0;  // implausible price
  const auto kept = filter_min_duration(units, 14);
  EXPECT_EQ(kept.size(), 32u);
  EXPECT_TRUE(passes_min_duration(units[1]));

  HedonicFilterReport rep;
  const auto filtered = filter_hedonic_ratio(units, {0.5, 1.5, 30, false}, &rep);
  EXPECT_EQ(rep.dropped, 1u);
  EXPECT_EQ(filtered.size(), 39u);
  for (const auto& u : filtered) EXPECT_NE(u.id, "U7");
  EXPECT_GT(rep.ratio.at("U7"), 1.5);

  std::vector<HousingUnit> few(units.begin(), units.begin() + 10);
  EXPECT_THROW(filter_hedonic_ratio(few, {0.5, 1.5, 30, false}), InsufficientDataError);
  HedonicFilterReport skip;
  EXPECT_EQ(filter_hedonic_ratio(few, {0.5, 1.5, 30, true}, &skip).size(), 10u);
  EXPECT_EQ(skip.skipped_cities, std::vector<std::string>{"C0"});
}

TEST(OutputFiles, UnitsAssignmentAndHistoryRoundTrip) {
  const auto data = generate(testutil::small_config(), 6);
  HashedTokenEmbedding emb;
  const auto r = run_stream(data.snapshots(), {testutil::small_model(), emb, {}});
  testutil::TempDir dir;
  std::vector<HousingUnit> all;
  for (const auto& [id, u] : r.state.units) all.push_back(u);
  write_units(dir.path / "units.jsonl", all);
  EXPECT_EQ(read_units(dir.path / "units.jsonl"), all);
  write_assignment(dir.path / "a.csv", r.state.unit_of);
  EXPECT_EQ(read_assignment(dir.path / "a.csv"), r.state.unit_of);
  write_history(dir.path / "h.csv", r.state.ads);
  const auto h = read_history(dir.path / "h.csv");
  const auto expect = history_of(r.state.ads);
  ASSERT_EQ(h.size(), expect.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(h[i].ad_id, expect[i].ad_id);
    EXPECT_EQ(h[i].week, expect[i].week);
    EXPECT_EQ(h[i].clicks, expect[i].clicks);
    EXPECT_EQ(h[i].price, expect[i].price);
  }
  write_audit(dir.path / "audit.jsonl", r.state.audit);
  std::ifstream in(dir.path / "audit.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    EXPECT_TRUE(nlohmann::json::parse(line).contains("event"));
    ++n;
  }
  EXPECT_EQ(n, r.state.audit.size());
}
