#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "balpol/crossfit.hpp"
#include "balpol/policy.hpp"
#include "balpol/simgen.hpp"

namespace balpol {

/// Policy-construction methods of the benchmark: the three value estimators
/// ("proposed", "ipw", "or") used inside learn_policy, and "dm", the plug-in
/// rule on regression contrasts.
struct BenchConfig {
  DgpSpec dgp;
  std::vector<double> missing_ratios{0.1};
  /// Evaluation lambdas. The balanced strategy also learns with them; naive_s
  /// learns with 0 and naive_y with 1.
  std::vector<double> lambdas{0.0, 0.5, 1.0};
  std::vector<std::size_t> time_steps{10};
  std::vector<double> costs{0.0};
  std::vector<bool> correlated{true};
  std::vector<std::string> methods{"proposed", "ipw", "or", "dm"};
  std::vector<std::string> strategies{"naive_s", "naive_y", "balanced"};
  std::size_t replications = 5;
  CrossFitOptions crossfit;
  NuisanceSpecs learners;
  LearnOptions optimizer;
  Objective objective = Objective::convex;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "bench_out";
  std::size_t jobs = 1;

  /// Throws UsageError.
  void validate() const;
};

[[nodiscard]] BenchConfig bench_config_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const BenchConfig& config);

/// One data draw of the grid.
struct BenchCell {
  double gamma = 0.0;
  std::size_t time_steps = 10;
  double cost = 0.0;
  bool correlated = true;
  std::size_t replication = 0;

  [[nodiscard]] std::string id() const;
};

struct BenchResultRow {
  std::string method;
  std::string strategy;
  double lambda = 0.0;       // lambda the policy was learned with
  double eval_lambda = 0.0;  // lambda of the balanced metrics
  double gamma = 0.0;
  std::size_t time_steps = 0;
  double cost = 0.0;
  bool correlated = true;
  std::size_t replication = 0;
  PolicyMetrics metrics;
  double runtime_ms = 0.0;
  std::string status = "ok";
};

struct AggregateRow {
  BenchResultRow key;  // metrics hold the means; replication unused
  PolicyMetrics sd;
  std::size_t count = 0;
  std::size_t failures = 0;
};

[[nodiscard]] std::vector<BenchCell> bench_cells(const BenchConfig& config);

/// Runs every (method, strategy, lambda) combination on one cell. Errors
/// become rows with a non-"ok" status. Deterministic given (config, cell).
[[nodiscard]] std::vector<BenchResultRow> run_cell(const BenchConfig& config, const BenchCell& cell);

/// Means and sample standard deviations over the successful replications of
/// each (method, strategy, lambda, eval_lambda, gamma, T, cost, correlated).
[[nodiscard]] std::vector<AggregateRow> aggregate(const std::vector<BenchResultRow>& rows);

/// Runs the grid with per-cell result files under out_dir/cells, skipping
/// cells whose file exists, then writes rows.{csv,json} and
/// aggregate.{csv,json}. Returns all rows.
std::vector<BenchResultRow> run_bench(const BenchConfig& config);

void write_rows_csv(const std::vector<BenchResultRow>& rows, const std::filesystem::path& path);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);
[[nodiscard]] nlohmann::json to_json(const BenchResultRow& row);
[[nodiscard]] BenchResultRow bench_row_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json to_json(const AggregateRow& row);
[[nodiscard]] AggregateRow aggregate_row_from_json(const nlohmann::json& j);

/// Text table with short-term, balanced and long-term blocks per method and
/// strategy; within each method the best strategy per metric is starred.
/// Reads results_dir/aggregate.json; throws DataError "no aggregate found"
/// when it is missing.
struct Report {
  std::string text;
  std::string csv;
};
[[nodiscard]] Report render_report(const std::filesystem::path& results_dir);
[[nodiscard]] Report render_report(const std::vector<AggregateRow>& rows);

}  // namespace balpol
