// Command-line entry point: synth, train, dedup, evaluate, indicators, validate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "homelist/homelist.hpp"

namespace fs = std::filesystem;
using namespace homelist;

namespace {

void log_info(const std::string& msg) { std::cerr << "[homelist] " << msg << '\n'; }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed");
    app->add_option("--workers", workers, "worker threads");
  }

  RunConfig load() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    if (seed) {
      c.seed = *seed;
      c.training.seed = *seed;
    }
    if (workers) {
      c.workers = *workers;
      c.training.workers = *workers;
    }
    c.training.blocking = c.blocking;
    c.validate();
    return c;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ParseError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<Snapshot> load_snapshot_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("snapshot directory " + dir.string() + " does not exist");
  std::vector<Snapshot> out;
  for (const auto& path : list_snapshots(dir)) {
    ParsedSnapshot p = parse_snapshot(path);
    for (const auto& e : p.errors) {
      log_info("skipped " + path.filename().string() + ":" + std::to_string(e.line) + ": " + e.message);
    }
    out.push_back(std::move(p.snapshot));
  }
  if (out.empty()) throw InsufficientDataError("no snapshots in " + dir.string());
  return out;
}

// --- synth -----------------------------------------------------------------

struct SynthCmd {
  Common common;
  std::string out;
  std::string preset = "default";
  bool no_pairs = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("synth", "generate a synthetic listing stream with ground truth");
    common.add(app);
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--preset", preset, "default | coexisting | null")
        ->check(CLI::IsMember({"default", "coexisting", "null"}));
    app->add_flag("--no-pairs", no_pairs, "skip writing labeled training pairs");
    app->callback([this] { run(); });
  }

  void run() const {
    RunConfig c = common.load();
    GeneratorConfig g = c.generator;
    if (preset == "coexisting") g = GeneratorConfig::coexisting();
    if (preset == "null") g = GeneratorConfig::null_mechanisms();
    const GeneratorOutput data = generate(g, c.seed);
    write_generator_output(out, data);
    log_info("wrote " + std::to_string(data.weeks) + " snapshots, " + std::to_string(data.ads.size()) + " ads");
    if (!no_pairs) {
      HashedTokenEmbedding emb;
      const auto samples = training_pairs(data, emb, c.training);
      std::ofstream f(fs::path(out) / "pairs.csv");
      if (!f) throw ParseError("cannot write pairs.csv");
      write_samples(f, samples);
      log_info("wrote " + std::to_string(samples.size()) + " labeled pairs");
    }
  }
};

// --- train -----------------------------------------------------------------

void print_report(const EvalReport& r) {
  std::printf("precision=%.6f recall=%.6f F=%.6f repetitions=%d train_fraction=%.3f no_predicted_positives=%zu\n",
              r.precision, r.recall, r.f_measure, r.repetitions, r.train_fraction,
              r.repetitions_without_predicted_positives);
}

std::vector<LabeledPair> load_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open samples " + path.string());
  auto s = read_samples(in);
  if (s.empty()) throw InsufficientDataError("no labeled pairs in " + path.string());
  return s;
}

struct TrainCmd {
  Common common;
  std::string samples;
  std::string out;
  bool evaluate = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "train the same-agency and cross-agency classifiers");
    common.add(app);
    app->add_option("--samples", samples, "labeled pairs CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "model file to write")->required();
    app->add_flag("--evaluate", evaluate, "also run the Monte Carlo evaluation");
    app->callback([this] { run(); });
  }

  void run() const {
    const RunConfig c = common.load();
    const auto data = load_samples(samples);
    TreeParams tree = c.tree;
    tree.seed = c.seed;
    const TrainedModelPair model = train_model_pair(data, tree, c.threshold);
    model.save(out);
    log_info("trained on " + std::to_string(data.size()) + " pairs");
    if (evaluate) print_report(evaluate_monte_carlo(data, c.monte_carlo()));
  }
};

// --- dedup -----------------------------------------------------------------

struct DedupCmd {
  Common common;
  std::string model;
  std::string snapshots;
  std::string out;
  bool no_filters = false;
  bool batch = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("dedup", "run the week-by-week deduplication");
    common.add(app);
    app->add_option("--model", model, "trained model file")->required()->check(CLI::ExistingFile);
    app->add_option("--snapshots", snapshots, "directory of weekly snapshots")->required();
    app->add_option("--out", out, "output directory")->required();
    app->add_flag("--no-filters", no_filters, "keep every unit in units.jsonl");
    app->add_flag("--batch", batch, "deduplicate the union of all snapshots at once");
    app->callback([this] { run(); });
  }

  void run() const {
    RunConfig c = common.load();
    if (no_filters) {
      c.filters.min_duration = false;
      c.filters.hedonic_ratio = false;
    }
    const TrainedModelPair m = TrainedModelPair::load(model);
    const HashedTokenEmbedding emb;
    const PipelineContext ctx{m, emb, c.pipeline()};
    const auto snaps = load_snapshot_dir(snapshots);
    ensure_dir(out);
    const fs::path dir(out);
    PipelineState state;
    std::vector<HousingUnit> kept;
    if (batch) {
      // Removal dates follow from the first snapshot an ad is missing from.
      std::map<std::string, Ad> ads;
      Snapshot prev;
      prev.week = snaps.front().week - 1;
      for (const auto& s : snaps) {
        const WeekDelta d = diff_snapshots(prev, s);
        for (const auto& id : d.removed_ad_ids) ads.at(id).removed_on = s.week.monday();
        for (const Ad& a : s.ads) {
          auto [it, fresh] = ads.try_emplace(a.id, a);
          if (!fresh) {
            Ad& cur = it->second;
            const auto history = cur.clicks_by_week;
            const auto prices = cur.price_by_week;
            cur = a;
            cur.clicks_by_week.insert(history.begin(), history.end());
            cur.price_by_week.insert(prices.begin(), prices.end());
          }
        }
        prev = s;
      }
      std::vector<Ad> all;
      for (auto& [id, a] : ads) all.push_back(a);
      state = batch_dedup(all, ctx);
      std::vector<HousingUnit> units;
      for (const auto& [id, u] : state.units) units.push_back(u);
      kept = apply_filters(units, c.filters);
    } else {
      StreamResult r = run_stream(snaps, ctx, c.filters);
      state = std::move(r.state);
      kept = std::move(r.filtered_units);
    }
    std::vector<HousingUnit> all_units;
    for (const auto& [id, u] : state.units) all_units.push_back(u);
    write_units(dir / "units.jsonl", kept);
    write_units(dir / "all_units.jsonl", all_units);
    write_assignment(dir / "assignment.csv", std::map<std::string, std::string>(state.unit_of.begin(), state.unit_of.end()));
    write_audit(dir / "audit.jsonl", state.audit);
    write_history(dir / "history.csv", std::map<std::string, Ad>(state.ads.begin(), state.ads.end()));
    log_info(std::to_string(state.ads.size()) + " ads -> " + std::to_string(all_units.size()) + " units, " +
             std::to_string(kept.size()) + " after filters");
  }
};

// --- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  Common common;
  std::string truth;
  std::string pred;
  std::string samples;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("evaluate", "score a partition against the truth, or cross-validate pairs");
    common.add(app);
    auto* t = app->add_option("--truth", truth, "truth assignment CSV (ad_id,unit_id)")->check(CLI::ExistingFile);
    auto* p = app->add_option("--pred", pred, "predicted assignment CSV")->check(CLI::ExistingFile);
    auto* s = app->add_option("--samples", samples, "labeled pairs CSV for the Monte Carlo protocol")
                  ->check(CLI::ExistingFile);
    t->needs(p);
    p->needs(t);
    s->excludes(t)->excludes(p);
    app->callback([this, app] {
      if (samples.empty() && truth.empty()) throw CLI::RequiredError("--truth and --pred, or --samples");
      (void)app;
      run();
    });
  }

  void run() const {
    const RunConfig c = common.load();
    if (!samples.empty()) {
      print_report(evaluate_monte_carlo(load_samples(samples), c.monte_carlo()));
      return;
    }
    const auto s = score(read_assignment(pred), read_assignment(truth));
    std::printf("precision=%.6f recall=%.6f F=%.6f predicted_pairs=%llu true_pairs=%llu no_predicted_pairs=%d "
                "unit_ratio=%.6f true_unit_ratio=%.6f\n",
                s.precision, s.recall, s.f_measure, static_cast<unsigned long long>(s.predicted_pairs),
                static_cast<unsigned long long>(s.true_pairs), s.no_predicted_pairs ? 1 : 0, s.unit_ratio,
                s.true_unit_ratio);
  }
};

// --- indicators ------------------------------------------------------------

struct IndicatorsCmd {
  Common common;
  std::string units;
  std::string clicks;
  std::string out;
  std::string period;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("indicators", "build the unit panel and fit the models");
    common.add(app);
    app->add_option("--units", units, "units JSONL")->required()->check(CLI::ExistingFile);
    app->add_option("--clicks", clicks, "per-ad weekly history CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--period", period, "zone aggregate period: week | month | quarter")
        ->check(CLI::IsMember({"week", "month", "quarter"}));
    app->callback([this] { run(); });
  }

  template <typename F>
  static void try_model(const char* name, const fs::path& path, F&& fit) {
    try {
      write_result_csv(path, fit());
    } catch (const Error& e) {
      log_info(std::string("skipped ") + name + ": " + e.kind() + ": " + e.what());
    }
  }

  void run() const {
    RunConfig c = common.load();
    if (!period.empty()) c.period = granularity_from(period);
    const auto u = read_units(units);
    const auto h = read_history(clicks);
    const Panel panel = build_panel(u, h, c.workers);
    ensure_dir(out);
    const fs::path dir(out);
    write_panel_csv(dir / "panel.csv", panel);
    write_unit_summary_csv(dir / "unit_summary.csv", panel);
    const auto aggs = zone_aggregates(panel, c.period);
    write_zone_aggregates_csv(dir / "zone_aggregates.csv", aggs, c.period);
    try_model("eq1", dir / "eq1.csv", [&] { return model_eq1(panel); });
    try_model("eq2", dir / "eq2.csv", [&] { return model_eq2(panel); });
    try_model("eq3", dir / "eq3.csv", [&] { return model_eq3(panel); });
    try_model("tom", dir / "tom.csv", [&] { return model_tom(panel, c.tom); });
    try_model("priceref", dir / "priceref.csv", [&] { return model_priceref(panel, c.priceref); });
    try_model("demand_lead", dir / "demand_lead.csv", [&] { return model_demand_lead(aggs); });
    for (const auto& y : supply_responses()) {
      std::string file = "supply_" + y + ".csv";
      std::transform(file.begin(), file.end(), file.begin(), [](unsigned char ch) { return std::tolower(ch); });
      try_model(file.c_str(), dir / file, [&] { return model_supply(aggs, y, c.supply_min_listings); });
    }
    std::ofstream idx(dir / "hedonic_index.csv");
    idx << "city,period,index\n";
    std::set<std::string> cities;
    for (const auto& s : panel.units) cities.insert(city_of(s.zone_id));
    for (const auto& city : cities) {
      try {
        const auto rows = hedonic_rows(panel, c.period, city);
        const PriceIndex pi = hedonic_index(rows);
        for (std::size_t k = 0; k < pi.periods.size(); ++k) {
          idx << city << ',' << period_label(pi.periods[k], c.period) << ',' << pi.values[k] << '\n';
        }
      } catch (const Error& e) {
        log_info("no hedonic index for " + city + ": " + e.what());
      }
    }
    log_info("panel: " + std::to_string(panel.rows.size()) + " unit-weeks, " + std::to_string(panel.units.size()) + " units");
  }
};

// --- validate --------------------------------------------------------------

struct ValidateCmd {
  Common common;
  std::string units;
  std::string external;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("validate", "compare units with external sales and price series");
    common.add(app);
    app->add_option("--units", units, "units JSONL")->required()->check(CLI::ExistingFile);
    app->add_option("--external", external, "external series CSV")->required()->check(CLI::ExistingFile);
    app->callback([this] { run(); });
  }

  void run() const {
    common.load();
    const auto u = read_units(units);
    const auto ext = load_external_series(external);
    const ValidationReport r = validation_stats(u, ext);
    auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("NA"); };
    std::printf("delisting_sales_corr=%s delisting_points=%zu price_corr=%s mean_discount=%s price_points=%zu "
                "tom_count=%zu tom_mean=%.2f tom_p25=%.2f tom_median=%.2f tom_p75=%.2f\n",
                opt(r.delisting_sales_corr).c_str(), r.delisting_points, opt(r.price_corr).c_str(),
                opt(r.mean_discount).c_str(), r.price_points, r.tom.count, r.tom.mean, r.tom.p25, r.tom.median,
                r.tom.p75);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homelist: deduplication of housing listings and market indicators"};
  app.require_subcommand(1);
  SynthCmd synth;
  TrainCmd train;
  DedupCmd dedup;
  EvaluateCmd evaluate;
  IndicatorsCmd indicators;
  ValidateCmd validate;
  synth.add(app);
  train.add(app);
  dedup.add(app);
  evaluate.add(app);
  indicators.add(app);
  validate.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    std::cerr << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
