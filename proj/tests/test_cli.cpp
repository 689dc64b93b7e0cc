#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "balpol/bench.hpp"
#include "balpol/cli.hpp"
#include "balpol/config.hpp"
#include "balpol/dataset.hpp"
#include "balpol/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace balpol;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "balpol");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("balpol_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

std::size_t data_rows(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::size_t n = 0;
  std::getline(f, line);
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

json small_bench(const fs::path& out) {
  return {{"dgp", {{"family", "dgp_a"}, {"n", 300}, {"table", "mixed_effects"}}},
          {"missing_ratios", {0.1}},
          {"lambdas", {0.5}},
          {"methods", {"proposed"}},
          {"strategies", {"balanced"}},
          {"replications", 2},
          {"folds", 2},
          {"optimizer", {{"iterations", 200}}},
          {"seed", 5},
          {"out", out.string()}};
}

BenchResultRow agg_key(const std::string& strategy, double reward_short, double reward_balanced) {
  BenchResultRow r;
  r.method = "proposed";
  r.strategy = strategy;
  r.eval_lambda = 0.5;
  r.metrics.reward_short = reward_short;
  r.metrics.reward_balanced = reward_balanced;
  return r;
}

}  // namespace

TEST(Simulate, WritesDatasetAndTruth) {
  auto dir = fresh_dir("sim");
  auto r = cli({"simulate", "--family", "dgp_a", "--n", "100", "--seed", "3", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data_rows(dir / "data.csv"), 100u);
  EXPECT_EQ(data_rows(dir / "truth.csv"), 100u);
  EXPECT_TRUE(fs::exists(dir / "dgp.json"));
}

TEST(Simulate, MissingRatioHidesOutcomes) {
  auto dir = fresh_dir("sim_gamma");
  auto r = cli({"simulate", "--family", "jobs_like", "--n", "100", "--gamma", "0.3", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto d = load_csv(dir / "data.csv");
  std::size_t empty = 0;
  for (const auto& u : d.units) empty += !u.y.has_value();
  EXPECT_EQ(empty, 30u);
}

TEST(Simulate, Deterministic) {
  auto a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
  for (const auto& dir : {a, b}) {
    ASSERT_EQ(cli({"simulate", "--family", "ihdp_like", "--n", "80", "--seed", "9", "--out", dir.string()}).code, 0);
  }
  EXPECT_EQ(slurp(a / "data.csv"), slurp(b / "data.csv"));
  EXPECT_EQ(slurp(a / "truth.csv"), slurp(b / "truth.csv"));
}

TEST(Simulate, ConfigFileAndErrors) {
  auto dir = fresh_dir("sim_cfg");
  write_json(dir / "cfg.json", {{"dgp", {{"family", "jobs_like"}, {"n", 40}, {"p", 3}}}, {"missing_ratio", 0.5}});
  auto r = cli({"simulate", "--config", (dir / "cfg.json").string(), "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_csv(dir / "o" / "data.csv").missing_count(), 20u);
  write_json(dir / "bad.json", {{"dgp", {{"family", "jobs_like"}, {"bogus", 1}}}});
  EXPECT_EQ(cli({"simulate", "--config", (dir / "bad.json").string(), "--out", dir.string()}).code, kExitUsage);
  EXPECT_EQ(cli({"simulate", "--family", "nope", "--out", dir.string()}).code, kExitUsage);
  EXPECT_EQ(cli({"simulate", "--family", "dgp_a", "--uncorrelated", "--out", dir.string()}).code, kExitUsage);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"fit"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, MissingDataIsDataError) {
  auto dir = fresh_dir("missing");
  EXPECT_EQ(cli({"fit", "--data", (dir / "nope.csv").string(), "--out", dir.string()}).code, kExitData);
}

TEST(Pipeline, FitEvaluateLearn) {
  auto dir = fresh_dir("pipeline");
  ASSERT_EQ(cli({"simulate", "--family", "dgp_a", "--n", "600", "--seed", "1", "--out", dir.string()}).code, 0);
  auto data = (dir / "data.csv").string();
  auto r = cli({"fit", "--data", data, "--folds", "3", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data_rows(dir / "nuisances.csv"), 600u);

  auto oracle_dir = dir / "oracle";
  r = cli({"fit", "--data", data, "--oracle", "--dgp", (dir / "dgp.json").string(), "--out", oracle_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;

  r = cli({"evaluate", "--data", data, "--nuisances", (dir / "nuisances.csv").string(), "--treat", "all",
           "--truth", (dir / "truth.csv").string(), "--lambda", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  for (const char* key : {"short", "long", "balanced", "efficiency_gap", "truth_metrics"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_NEAR(j["balanced"]["value"].get<double>(),
              0.5 * j["short"]["value"].get<double>() + 0.5 * j["long"]["value"].get<double>(), 1e-12);

  for (const char* method : {"proposed", "ipw", "or", "dm"}) {
    auto out = dir / method;
    r = cli({"learn", "--data", data, "--nuisances", (dir / "nuisances.csv").string(), "--method", method,
             "--lambda", "0.5", "--iterations", "100", "--out", out.string()});
    ASSERT_EQ(r.code, 0) << method << ": " << r.err;
    r = cli({"evaluate", "--data", data, "--nuisances", (dir / "nuisances.csv").string(), "--policy",
             (out / "policy.json").string(), "--method", "ipw"});
    ASSERT_EQ(r.code, 0) << method << ": " << r.err;
  }

  r = cli({"evaluate", "--data", data, "--nuisances", (dir / "nuisances.csv").string(), "--treat", "all",
           "--lambda", "2"});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST(Pipeline, DegenerateNuisancesAreNumericalErrors) {
  auto dir = fresh_dir("numerical");
  ASSERT_EQ(cli({"simulate", "--family", "dgp_a", "--n", "50", "--out", dir.string()}).code, 0);
  ASSERT_EQ(cli({"fit", "--data", (dir / "data.csv").string(), "--folds", "2", "--out", dir.string()}).code, 0);
  std::string text = slurp(dir / "nuisances.csv");
  std::istringstream in(text);
  std::string header, line, rebuilt;
  std::getline(in, header);
  rebuilt = header + "\n";
  while (std::getline(in, line)) {
    auto comma = line.find(',');
    auto next = line.find(',', comma + 1);
    rebuilt += line.substr(0, comma + 1) + "nan" + line.substr(next) + "\n";
  }
  std::ofstream(dir / "bad.csv") << rebuilt;
  auto r = cli({"evaluate", "--data", (dir / "data.csv").string(), "--nuisances", (dir / "bad.csv").string(),
                "--treat", "all"});
  EXPECT_EQ(r.code, kExitNumerical) << r.err;
}

TEST(Bench, Cardinality) {
  auto dir = fresh_dir("bench_card");
  BenchConfig config = bench_config_from_json(small_bench(dir));
  auto rows = run_bench(config);
  EXPECT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.status, "ok");
  EXPECT_EQ(aggregate(rows).size(), 1u);
  EXPECT_EQ(data_rows(dir / "rows.csv"), 2u);
  EXPECT_EQ(data_rows(dir / "aggregate.csv"), 1u);
  EXPECT_TRUE(fs::exists(dir / "config.json"));
}

TEST(Bench, NaiveShortLearnsWithZeroLambda) {
  auto dir = fresh_dir("bench_naive");
  auto j = small_bench(dir);
  j["strategies"] = {"naive_s"};
  j["lambdas"] = {0.5, 1.0};
  j["replications"] = 1;
  auto rows = run_bench(bench_config_from_json(j));
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.lambda, 0.0);
}

TEST(Bench, RowsReproducibleAndResumable) {
  auto a = fresh_dir("bench_a"), b = fresh_dir("bench_b");
  auto ja = small_bench(a), jb = small_bench(b);
  ja["methods"] = jb["methods"] = {"proposed", "dm"};
  jb["jobs"] = 2;
  auto rows_a = run_bench(bench_config_from_json(ja));
  auto rows_b = run_bench(bench_config_from_json(jb));
  ASSERT_EQ(rows_a.size(), rows_b.size());
  for (std::size_t i = 0; i < rows_a.size(); ++i) {
    EXPECT_EQ(rows_a[i].method, rows_b[i].method);
    EXPECT_EQ(rows_a[i].metrics.reward_balanced, rows_b[i].metrics.reward_balanced);
    EXPECT_EQ(rows_a[i].metrics.policy_error, rows_b[i].metrics.policy_error);
  }
  // A second run over the same directory reuses the per-cell files.
  const auto cell_files = std::distance(fs::directory_iterator(a / "cells"), fs::directory_iterator{});
  auto again = run_bench(bench_config_from_json(ja));
  EXPECT_EQ(std::distance(fs::directory_iterator(a / "cells"), fs::directory_iterator{}), cell_files);
  ASSERT_EQ(again.size(), rows_a.size());
  for (std::size_t i = 0; i < again.size(); ++i)
    EXPECT_EQ(again[i].metrics.reward_balanced, rows_a[i].metrics.reward_balanced);
}

TEST(Bench, AggregateMeansMatchRows) {
  auto dir = fresh_dir("bench_agg");
  auto j = small_bench(dir);
  j["replications"] = 3;
  j["strategies"] = {"naive_s", "balanced"};
  auto rows = run_bench(bench_config_from_json(j));
  for (const auto& a : aggregate(rows)) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.strategy == a.key.strategy && r.method == a.key.method && r.status == "ok") {
        sum += r.metrics.reward_balanced;
        ++n;
      }
    }
    ASSERT_EQ(n, a.count);
    EXPECT_NEAR(a.key.metrics.reward_balanced, sum / double(n), 1e-12);
  }
}

TEST(Bench, ConfigValidation) {
  auto dir = fresh_dir("bench_cfg");
  auto j = small_bench(dir);
  j["replications"] = 0;
  EXPECT_THROW((void)bench_config_from_json(j), UsageError);
  j = small_bench(dir);
  j["lambdas"] = json::array();
  EXPECT_THROW((void)bench_config_from_json(j), UsageError);
  j = small_bench(dir);
  j["methods"] = {"tmle"};
  EXPECT_THROW((void)bench_config_from_json(j), UsageError);
  j = small_bench(dir);
  j["unknown"] = 1;
  EXPECT_THROW((void)bench_config_from_json(j), UsageError);
}

TEST(Bench, DgpASmokeWithinBudget) {
  auto dir = fresh_dir("bench_smoke");
  json j = {{"dgp", {{"family", "dgp_a"}, {"n", 2000}, {"table", "mixed_effects"}}},
            {"replications", 5},
            {"seed", 1},
            {"out", dir.string()}};
  const auto start = std::chrono::steady_clock::now();
  auto rows = run_bench(bench_config_from_json(j));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
  for (const auto& r : rows) EXPECT_EQ(r.status, "ok");
}

TEST(Bench, CliRunAndReport) {
  auto dir = fresh_dir("bench_cli");
  write_json(dir / "cfg.json", small_bench(dir / "ignored"));
  auto r = cli({"bench", "--config", (dir / "cfg.json").string(), "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  r = cli({"report", "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "report.csv"));
  EXPECT_FALSE(fs::exists(dir / "ignored"));
}

TEST(Report, OneStrategyOneBodyRow) {
  AggregateRow a;
  a.key = agg_key("balanced", 1.0, 2.0);
  a.count = 3;
  auto rep = render_report(std::vector<AggregateRow>{a});
  std::istringstream in(rep.text);
  std::string line;
  std::size_t body = 0;
  while (std::getline(in, line)) body += line.rfind("proposed", 0) == 0;
  EXPECT_EQ(body, 1u);
  EXPECT_EQ(std::count(rep.csv.begin(), rep.csv.end(), '\n'), 2);
}

TEST(Report, MarksBestShortTermStrategy) {
  AggregateRow s, b;
  s.key = agg_key("naive_s", 5.0, 1.0);
  b.key = agg_key("balanced", 4.0, 2.0);
  auto rep = render_report(std::vector<AggregateRow>{s, b});
  std::istringstream in(rep.csv);
  std::string header, line;
  std::getline(in, header);
  // columns: ..., lambda, reward_short, reward_short_best, ...
  const auto col = [&](const std::string& name) {
    std::istringstream h(header);
    std::string cell;
    int i = 0;
    while (std::getline(h, cell, ',')) {
      if (cell == name) return i;
      ++i;
    }
    return -1;
  };
  const int short_best = col("reward_short_best"), bal_best = col("reward_balanced_best");
  ASSERT_GE(short_best, 0);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream l(line);
    std::string cell;
    while (std::getline(l, cell, ',')) cells.push_back(cell);
    const bool naive = cells[6] == "naive_s";
    EXPECT_EQ(cells[short_best], naive ? "1" : "0");
    EXPECT_EQ(cells[bal_best], naive ? "0" : "1");
  }
  EXPECT_NE(rep.text.find("5.000*"), std::string::npos);
}

TEST(Report, MissingAggregate) {
  auto dir = fresh_dir("report_empty");
  try {
    (void)render_report(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no aggregate found"), std::string::npos);
  }
  auto r = cli({"report", "--out", dir.string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("no aggregate found"), std::string::npos);
}

TEST(Config, RoundTrips) {
  auto spec = DgpSpec::jobs_like(123, 4);
  spec.time_steps = 3;
  auto back = dgp_spec_from_json(to_json(spec));
  EXPECT_EQ(back.family, Family::jobs_like);
  EXPECT_EQ(back.n, 123u);
  EXPECT_EQ(back.time_steps, 3u);
  EXPECT_EQ(back.short_mean, spec.short_mean);
  auto table = dgp_table_from_json(to_json(DgpATable::mixed_effects()));
  EXPECT_EQ(table.p_long, DgpATable::mixed_effects().p_long);
  LearnOptions opt;
  opt.step = 0.2;
  EXPECT_EQ(learn_options_from_json(to_json(opt)).step, 0.2);
  EXPECT_THROW((void)learn_options_from_json({{"stepsize", 1}}), UsageError);
}
