#include "balpol/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "balpol/bench.hpp"
#include "balpol/config.hpp"
#include "balpol/crossfit.hpp"
#include "balpol/errors.hpp"
#include "balpol/estimators.hpp"
#include "balpol/policy.hpp"
#include "balpol/simgen.hpp"

namespace balpol {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON configuration file");
  app->add_option("--seed", c.seed, "Master seed (overrides the config)");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--jobs", c.jobs, "Parallel workers")->check(CLI::PositiveNumber);
}

json load_config(const Common& c) { return c.config.empty() ? json::object() : read_json_file(c.config); }

fs::path out_dir(const Common& c, const char* fallback) {
  fs::path dir = c.out.empty() ? fs::path(fallback) : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::string family;
  std::optional<std::size_t> n;
  std::optional<double> gamma;
  bool uncorrelated = false;
};

int simulate(const SimulateArgs& args, std::ostream& out) {
  const json cfg = load_config(args.common);
  json dgp = cfg.contains("dgp") ? cfg["dgp"] : json::object();
  if (!args.family.empty()) dgp["family"] = args.family;
  DgpSpec spec = dgp_spec_from_json(dgp);
  if (args.n) spec.n = *args.n;
  if (args.common.seed) spec.seed = *args.common.seed;
  if (args.uncorrelated) spec.correlated = false;
  spec.validate();

  std::optional<double> gamma = args.gamma;
  if (!gamma && cfg.contains("missing_ratio")) gamma = cfg["missing_ratio"].get<double>();

  auto data = spec.correlated ? generate(spec) : generate_uncorrelated(spec);
  if (gamma) data = apply_missingness(std::move(data), *gamma);

  const auto dir = out_dir(args.common, "sim_out");
  save_csv(data, dir / "data.csv");
  save_truth_csv(*data.truth, dir / "truth.csv");
  write_text(dir / "dgp.json", to_json(spec).dump(2) + "\n");
  out << "wrote " << data.size() << " units (" << data.missing_count() << " with y missing) to "
      << dir.string() << "\n";
  return kExitOk;
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
  Common common;
  std::string data;
  std::optional<std::size_t> folds;
  std::string long_mean;
  bool oracle = false;
  std::string dgp;
};

LongMeanMode long_mean_mode(const std::string& s) {
  if (s == "integrated") return LongMeanMode::integrated;
  if (s == "observed_only") return LongMeanMode::observed_only;
  throw UsageError("--long-mean must be integrated or observed_only");
}

int fit(const FitArgs& args, std::ostream& out) {
  const json cfg = load_config(args.common);
  auto data = load_csv(args.data);
  NuisanceEstimates nu;
  if (args.oracle) {
    if (args.dgp.empty()) throw UsageError("--oracle needs --dgp pointing at a dgp_a spec");
    const auto spec = dgp_spec_from_json(read_json_file(args.dgp));
    if (spec.family != Family::dgp_a) throw UsageError("--oracle needs a dgp_a spec");
    data.analytic_dgp = spec.table ? *spec.table : DgpATable::canonical();
    nu = oracle_nuisances(data, args.long_mean.empty() ? LongMeanMode::integrated
                                                       : long_mean_mode(args.long_mean));
  } else {
    CrossFitOptions opt;
    if (cfg.contains("folds")) opt.folds = cfg["folds"].get<std::size_t>();
    if (cfg.contains("seed")) opt.seed = cfg["seed"].get<std::uint64_t>();
    if (cfg.contains("long_mean")) opt.long_mean = long_mean_mode(cfg["long_mean"].get<std::string>());
    if (cfg.contains("pooled_selection")) opt.pooled_selection = cfg["pooled_selection"].get<bool>();
    if (args.folds) opt.folds = *args.folds;
    if (args.common.seed) opt.seed = *args.common.seed;
    if (!args.long_mean.empty()) opt.long_mean = long_mean_mode(args.long_mean);
    opt.jobs = args.common.jobs;
    const NuisanceSpecs specs =
        cfg.contains("learners") ? nuisance_specs_from_json(cfg["learners"]) : NuisanceSpecs{};
    nu = fit_nuisances(data, specs, opt);
  }
  const auto dir = out_dir(args.common, "fit_out");
  save_nuisances_csv(nu, dir / "nuisances.csv");
  out << "wrote nuisances for " << nu.rows.size() << " units to " << (dir / "nuisances.csv").string()
      << "\n";
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  Common common;
  std::string data;
  std::string nuisances;
  std::string policy;
  std::string treat;
  std::string truth;
  std::string method = "proposed";
  double lambda = 0.5;
  double cost = 0.0;
  std::string objective = "convex";
  bool hajek = false;
};

int evaluate(const EvaluateArgs& args, std::ostream& out) {
  auto data = load_csv(args.data);
  const auto nu = load_nuisances_csv(args.nuisances);
  if (nu.rows.size() != data.size())
    throw DataError("nuisance file has " + std::to_string(nu.rows.size()) + " rows, data has " +
                    std::to_string(data.size()));
  const auto objective = objective_from_string(args.objective);
  const auto method = method_from_string(args.method);

  std::optional<Policy> policy;
  std::vector<double> pi(data.size());
  if (!args.policy.empty() == !args.treat.empty())
    throw UsageError("give exactly one of --policy or --treat");
  if (!args.policy.empty()) {
    std::ifstream in(args.policy);
    if (!in) throw DataError("cannot open " + args.policy);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    policy = policy_from_json(text);
    pi = policy->values(data);
  } else if (args.treat == "all" || args.treat == "none") {
    std::fill(pi.begin(), pi.end(), args.treat == "all" ? 1.0 : 0.0);
  } else {
    throw UsageError("--treat must be all or none");
  }

  EstimatorOptions opts;
  opts.hajek = args.hajek;
  const PolicyEvalInput input{data, nu, pi, args.cost};
  json result;
  result["short"] = to_json(estimate_reward(input, Horizon::short_term, method, opts));
  result["long"] = to_json(estimate_reward(input, Horizon::long_term, method, opts));
  result["balanced"] = to_json(estimate_balanced(input, args.lambda, method, objective, opts));
  const auto gap = efficiency_gap(input);
  result["efficiency_gap"] = {{"value", gap.value}, {"std_error", gap.std_error()}};
  if (!args.truth.empty()) {
    data.truth = load_truth_csv(args.truth);
    if (data.truth->units.size() != data.size()) throw DataError("truth length mismatch");
    std::vector<double> hard(pi);
    for (double& v : hard) v = v >= 0.5 ? 1.0 : 0.0;
    result["truth_metrics"] = to_json(evaluate_decisions(hard, *data.truth, args.lambda, args.cost, objective));
  }
  const std::string text = result.dump(2) + "\n";
  out << text;
  if (!args.common.out.empty()) write_text(out_dir(args.common, "") / "evaluation.json", text);
  return kExitOk;
}

// ---- learn ----------------------------------------------------------------

struct LearnArgs {
  Common common;
  std::string data;
  std::string nuisances;
  std::string method = "proposed";
  double lambda = 0.5;
  double cost = 0.0;
  std::string objective = "convex";
  std::optional<double> step;
  std::optional<std::size_t> iterations;
};

int learn(const LearnArgs& args, std::ostream& out) {
  const json cfg = load_config(args.common);
  const auto data = load_csv(args.data);
  const auto nu = load_nuisances_csv(args.nuisances);
  if (nu.rows.size() != data.size()) throw DataError("nuisance and data lengths differ");
  const auto objective = objective_from_string(args.objective);
  Policy policy;
  if (args.method == "dm") {
    policy = dm_policy(nu, args.lambda, args.cost, objective);
  } else {
    LearnOptions opt = cfg.contains("optimizer") ? learn_options_from_json(cfg["optimizer"]) : LearnOptions{};
    if (args.step) opt.step = *args.step;
    if (args.iterations) opt.iterations = *args.iterations;
    if (args.common.seed) opt.seed = *args.common.seed;
    policy = learn_policy(data, nu, args.lambda, method_from_string(args.method), opt, args.cost, objective);
  }
  const auto dir = out_dir(args.common, "learn_out");
  write_text(dir / "policy.json", policy_to_json(policy) + "\n");
  const auto d = policy.decisions(data);
  double treated = 0.0;
  for (double v : d) treated += v;
  out << "policy treats " << treated << " of " << d.size() << " units; wrote "
      << (dir / "policy.json").string() << "\n";
  return kExitOk;
}

// ---- bench / report -------------------------------------------------------

int bench(const Common& common, std::ostream& out) {
  json cfg = load_config(common);
  if (common.seed) cfg["seed"] = *common.seed;
  if (!common.out.empty()) cfg["out"] = common.out;
  cfg["jobs"] = common.jobs;
  const auto config = bench_config_from_json(cfg);
  const auto rows = run_bench(config);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status == "ok" ? 0 : 1;
  out << rows.size() << " rows (" << failed << " failed) written to " << config.out_dir.string() << "\n";
  const auto report = render_report(aggregate(rows));
  out << report.text;
  return kExitOk;
}

int report(const Common& common, std::ostream& out) {
  const fs::path dir = common.out.empty() ? fs::path("bench_out") : fs::path(common.out);
  const auto rep = render_report(dir);
  write_text(dir / "report.txt", rep.text);
  write_text(dir / "report.csv", rep.csv);
  out << rep.text;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Policy evaluation and learning with short- and long-term rewards", "balpol"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic dataset with potential truth");
  add_common(c_sim, sim.common);
  c_sim->add_option("--family", sim.family, "ihdp_like | jobs_like | dgp_a");
  c_sim->add_option("--n", sim.n, "Number of units");
  c_sim->add_option("--gamma", sim.gamma, "Missing ratio for the score rule")->check(CLI::Range(0.0, 1.0));
  c_sim->add_flag("--uncorrelated", sim.uncorrelated, "Break the S-Y link given X");

  FitArgs fa;
  auto* c_fit = app.add_subcommand("fit", "Cross-fit nuisance models");
  add_common(c_fit, fa.common);
  c_fit->add_option("--data", fa.data, "Dataset CSV")->required();
  c_fit->add_option("--folds", fa.folds, "Number of folds");
  c_fit->add_option("--long-mean", fa.long_mean, "integrated | observed_only");
  c_fit->add_flag("--oracle", fa.oracle, "Exact nuisances of a dgp_a table");
  c_fit->add_option("--dgp", fa.dgp, "dgp.json written by simulate (with --oracle)");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Estimate rewards of a policy");
  add_common(c_eval, ev.common);
  c_eval->add_option("--data", ev.data, "Dataset CSV")->required();
  c_eval->add_option("--nuisances", ev.nuisances, "Nuisance CSV from fit")->required();
  c_eval->add_option("--policy", ev.policy, "Policy JSON from learn");
  c_eval->add_option("--treat", ev.treat, "all | none");
  c_eval->add_option("--truth", ev.truth, "Truth CSV for realized metrics");
  c_eval->add_option("--method", ev.method, "proposed | ipw | or");
  c_eval->add_option("--lambda", ev.lambda, "Balance factor");
  c_eval->add_option("--cost", ev.cost, "Treatment cost");
  c_eval->add_option("--objective", ev.objective, "convex | additive");
  c_eval->add_flag("--hajek", ev.hajek, "Self-normalized ipw");

  LearnArgs le;
  auto* c_learn = app.add_subcommand("learn", "Learn a policy");
  add_common(c_learn, le.common);
  c_learn->add_option("--data", le.data, "Dataset CSV")->required();
  c_learn->add_option("--nuisances", le.nuisances, "Nuisance CSV from fit")->required();
  c_learn->add_option("--method", le.method, "proposed | ipw | or | dm");
  c_learn->add_option("--lambda", le.lambda, "Balance factor");
  c_learn->add_option("--cost", le.cost, "Treatment cost");
  c_learn->add_option("--objective", le.objective, "convex | additive");
  c_learn->add_option("--step", le.step, "Adam step size");
  c_learn->add_option("--iterations", le.iterations, "Adam iterations");

  Common bc;
  auto* c_bench = app.add_subcommand("bench", "Run the benchmark grid");
  add_common(c_bench, bc);

  Common rc;
  auto* c_report = app.add_subcommand("report", "Render the comparison table of a bench run");
  add_common(c_report, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_sim) return simulate(sim, out);
    if (*c_fit) return fit(fa, out);
    if (*c_eval) return evaluate(ev, out);
    if (*c_learn) return learn(le, out);
    if (*c_bench) return bench(bc, out);
    if (*c_report) return report(rc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const json::exception& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace balpol
