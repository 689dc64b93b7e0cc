#include "balpol/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "balpol/config.hpp"
#include "balpol/errors.hpp"

namespace balpol {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 9> kMetricNames{
    "reward_short", "dW_short",    "policy_error_short", "reward_balanced", "dW_balanced",
    "policy_error", "reward_long", "dW_long",            "policy_error_long"};

double& metric(PolicyMetrics& m, std::size_t k) {
  double* fields[] = {&m.reward_short,    &m.dW_short,    &m.policy_error_short,
                      &m.reward_balanced, &m.dW_balanced, &m.policy_error,
                      &m.reward_long,     &m.dW_long,     &m.policy_error_long};
  return *fields[k];
}

double metric(const PolicyMetrics& m, std::size_t k) {
  return metric(const_cast<PolicyMetrics&>(m), k);
}

bool is_error_metric(std::size_t k) { return k % 3 == 2; }

std::uint64_t bits(double v) {
  std::uint64_t out = 0;
  static_assert(sizeof(out) == sizeof(v));
  std::memcpy(&out, &v, sizeof(v));
  return out;
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

double learning_lambda(const std::string& strategy, double lambda) {
  if (strategy == "naive_s") return 0.0;
  if (strategy == "naive_y") return 1.0;
  return lambda;
}

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

void BenchConfig::validate() const {
  dgp.validate();
  if (missing_ratios.empty() || lambdas.empty() || time_steps.empty() || costs.empty() ||
      correlated.empty() || methods.empty() || strategies.empty())
    throw UsageError("bench grids must be non-empty");
  if (replications == 0) throw UsageError("replications must be at least 1");
  for (double g : missing_ratios)
    if (!(g >= 0.0 && g <= 1.0)) throw UsageError("missing ratios must lie in [0,1]");
  for (double l : lambdas) (void)objective_weights(l, objective);
  for (std::size_t t : time_steps)
    if (t == 0) throw UsageError("time steps must be at least 1");
  for (const auto& m : methods)
    if (m != "dm") (void)method_from_string(m);
  for (const auto& s : strategies)
    if (s != "naive_s" && s != "naive_y" && s != "balanced")
      throw UsageError("unknown strategy '" + s + "' (expected naive_s, naive_y or balanced)");
  if (dgp.family == Family::dgp_a &&
      std::find(correlated.begin(), correlated.end(), false) != correlated.end())
    throw UsageError("the uncorrelated variant is not available for dgp_a");
  if (crossfit.folds < 2) throw UsageError("folds must be at least 2");
  optimizer.validate();
}

BenchConfig bench_config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("bench config must be a JSON object");
  static const std::set<std::string> keys{
      "dgp",      "missing_ratios", "lambdas",   "time_steps", "costs",     "correlated",
      "methods",  "strategies",     "replications", "folds",   "long_mean", "pooled_selection",
      "learners", "optimizer",      "objective", "seed",       "out",       "jobs"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw UsageError("bench config: unknown key '" + k + "'");
  BenchConfig c;
  try {
    if (j.contains("dgp")) c.dgp = dgp_spec_from_json(j["dgp"]);
    if (j.contains("missing_ratios")) c.missing_ratios = j["missing_ratios"].get<std::vector<double>>();
    if (j.contains("lambdas")) c.lambdas = j["lambdas"].get<std::vector<double>>();
    if (j.contains("time_steps")) c.time_steps = j["time_steps"].get<std::vector<std::size_t>>();
    if (j.contains("costs")) c.costs = j["costs"].get<std::vector<double>>();
    if (j.contains("correlated")) c.correlated = j["correlated"].get<std::vector<bool>>();
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("strategies")) c.strategies = j["strategies"].get<std::vector<std::string>>();
    if (j.contains("replications")) c.replications = j["replications"].get<std::size_t>();
    if (j.contains("folds")) c.crossfit.folds = j["folds"].get<std::size_t>();
    if (j.contains("pooled_selection")) c.crossfit.pooled_selection = j["pooled_selection"].get<bool>();
    if (j.contains("long_mean")) {
      const auto mode = j["long_mean"].get<std::string>();
      if (mode == "integrated") {
        c.crossfit.long_mean = LongMeanMode::integrated;
      } else if (mode == "observed_only") {
        c.crossfit.long_mean = LongMeanMode::observed_only;
      } else {
        throw UsageError("long_mean must be integrated or observed_only");
      }
    }
    if (j.contains("learners")) c.learners = nuisance_specs_from_json(j["learners"]);
    if (j.contains("optimizer")) c.optimizer = learn_options_from_json(j["optimizer"]);
    if (j.contains("objective")) c.objective = objective_from_string(j["objective"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("bench config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const BenchConfig& c) {
  return {{"dgp", to_json(c.dgp)},
          {"missing_ratios", c.missing_ratios},
          {"lambdas", c.lambdas},
          {"time_steps", c.time_steps},
          {"costs", c.costs},
          {"correlated", c.correlated},
          {"methods", c.methods},
          {"strategies", c.strategies},
          {"replications", c.replications},
          {"folds", c.crossfit.folds},
          {"pooled_selection", c.crossfit.pooled_selection},
          {"long_mean", c.crossfit.long_mean == LongMeanMode::integrated ? "integrated" : "observed_only"},
          {"learners", to_json(c.learners)},
          {"optimizer", to_json(c.optimizer)},
          {"objective", to_string(c.objective)},
          {"seed", c.seed},
          {"out", c.out_dir.string()},
          {"jobs", c.jobs}};
}

std::string BenchCell::id() const {
  return "g" + format_double(gamma) + "_T" + std::to_string(time_steps) + "_c" +
         format_double(cost) + "_corr" + (correlated ? "1" : "0") + "_rep" +
         std::to_string(replication);
}

std::vector<BenchCell> bench_cells(const BenchConfig& config) {
  std::vector<BenchCell> out;
  for (double g : config.missing_ratios)
    for (std::size_t t : config.time_steps)
      for (double c : config.costs)
        for (bool corr : config.correlated)
          for (std::size_t r = 0; r < config.replications; ++r) out.push_back({g, t, c, corr, r});
  return out;
}

std::vector<BenchResultRow> run_cell(const BenchConfig& config, const BenchCell& cell) {
  const std::uint64_t cell_seed =
      derive_seed(config.seed, {bits(cell.gamma), cell.time_steps, bits(cell.cost),
                                cell.correlated ? 1u : 0u, cell.replication});

  auto make_row = [&](const std::string& method, const std::string& strategy, double eval_lambda) {
    BenchResultRow row;
    row.method = method;
    row.strategy = strategy;
    row.lambda = learning_lambda(strategy, eval_lambda);
    row.eval_lambda = eval_lambda;
    row.gamma = cell.gamma;
    row.time_steps = cell.time_steps;
    row.cost = cell.cost;
    row.correlated = cell.correlated;
    row.replication = cell.replication;
    return row;
  };

  std::vector<BenchResultRow> rows;
  ObservationalDataset data;
  NuisanceEstimates nuisances;
  const auto setup_start = Clock::now();
  try {
    DgpSpec spec = config.dgp;
    spec.time_steps = cell.time_steps;
    spec.cost = cell.cost;
    spec.correlated = cell.correlated;
    // Shared by every gamma, cost and correlation setting of a replication so
    // those comparisons are paired.
    spec.seed = derive_seed(config.seed, {0xda7a, cell.replication, cell.time_steps});
    data = cell.correlated ? generate(spec) : generate_uncorrelated(spec);
    data = apply_missingness(std::move(data), cell.gamma);
    CrossFitOptions cf = config.crossfit;
    cf.seed = derive_seed(cell_seed, {0xc0f});
    cf.jobs = 1;
    nuisances = fit_nuisances(data, config.learners, cf);
  } catch (const std::exception& e) {
    for (const auto& m : config.methods)
      for (double l : config.lambdas)
        for (const auto& s : config.strategies) {
          auto row = make_row(m, s, l);
          row.status = std::string("error: ") + e.what();
          rows.push_back(std::move(row));
        }
    return rows;
  }
  const double setup_ms = elapsed_ms(setup_start);

  struct Learned {
    Policy policy;
    double ms = 0.0;
    std::string error;
  };
  std::map<std::pair<std::string, double>, Learned> cache;
  for (const auto& m : config.methods) {
    for (double l : config.lambdas) {
      for (const auto& s : config.strategies) {
        auto row = make_row(m, s, l);
        const auto key = std::make_pair(m, row.lambda);
        auto it = cache.find(key);
        if (it == cache.end()) {
          Learned learned;
          const auto start = Clock::now();
          try {
            if (m == "dm") {
              learned.policy = dm_policy(nuisances, row.lambda, cell.cost, config.objective);
            } else {
              LearnOptions opt = config.optimizer;
              opt.seed = derive_seed(cell_seed, {0x1ea2, static_cast<std::uint64_t>(method_from_string(m)), bits(row.lambda)});
              learned.policy = learn_policy(data, nuisances, row.lambda, method_from_string(m), opt,
                                            cell.cost, config.objective);
            }
          } catch (const std::exception& e) {
            learned.error = std::string("error: ") + e.what();
          }
          learned.ms = elapsed_ms(start);
          it = cache.emplace(key, std::move(learned)).first;
        }
        const auto start = Clock::now();
        if (!it->second.error.empty()) {
          row.status = it->second.error;
        } else {
          try {
            row.metrics = evaluate_policy(it->second.policy, data, l, cell.cost, config.objective);
          } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
          }
        }
        row.runtime_ms = setup_ms + it->second.ms + elapsed_ms(start);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

json to_json(const BenchResultRow& r) {
  json j{{"method", r.method},
         {"strategy", r.strategy},
         {"lambda", r.lambda},
         {"eval_lambda", r.eval_lambda},
         {"gamma", r.gamma},
         {"time_steps", r.time_steps},
         {"cost", r.cost},
         {"correlated", r.correlated},
         {"replication", r.replication},
         {"runtime_ms", r.runtime_ms},
         {"status", r.status}};
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) j[kMetricNames[k]] = metric(r.metrics, k);
  return j;
}

BenchResultRow bench_row_from_json(const json& j) {
  try {
    BenchResultRow r;
    r.method = j.at("method").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.lambda = j.at("lambda").get<double>();
    r.eval_lambda = j.at("eval_lambda").get<double>();
    r.gamma = j.at("gamma").get<double>();
    r.time_steps = j.at("time_steps").get<std::size_t>();
    r.cost = j.at("cost").get<double>();
    r.correlated = j.at("correlated").get<bool>();
    r.replication = j.value("replication", std::size_t{0});
    r.runtime_ms = j.value("runtime_ms", 0.0);
    r.status = j.value("status", std::string("ok"));
    for (std::size_t k = 0; k < kMetricNames.size(); ++k)
      metric(r.metrics, k) = j.at(kMetricNames[k]).get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt result row: ") + e.what());
  }
}

json to_json(const AggregateRow& a) {
  json j = to_json(a.key);
  j.erase("replication");
  j.erase("runtime_ms");
  j.erase("status");
  j["count"] = a.count;
  j["failures"] = a.failures;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k)
    j[std::string(kMetricNames[k]) + "_sd"] = metric(a.sd, k);
  return j;
}

AggregateRow aggregate_row_from_json(const json& j) {
  AggregateRow a;
  a.key = bench_row_from_json(j);
  try {
    a.count = j.at("count").get<std::size_t>();
    a.failures = j.value("failures", std::size_t{0});
    for (std::size_t k = 0; k < kMetricNames.size(); ++k)
      metric(a.sd, k) = j.at(std::string(kMetricNames[k]) + "_sd").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt aggregate row: ") + e.what());
  }
  return a;
}

std::vector<AggregateRow> aggregate(const std::vector<BenchResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, double, double, double, std::size_t, double, bool>;
  std::map<Key, std::vector<const BenchResultRow*>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key key{r.method, r.strategy, r.lambda, r.eval_lambda, r.gamma, r.time_steps, r.cost, r.correlated};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& members = groups[key];
    AggregateRow a;
    a.key = *members.front();
    a.key.replication = 0;
    a.key.runtime_ms = 0.0;
    a.key.status = "ok";
    std::vector<const BenchResultRow*> ok;
    for (const auto* r : members) {
      if (r->status == "ok") {
        ok.push_back(r);
      } else {
        ++a.failures;
      }
    }
    a.count = ok.size();
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      std::vector<double> v;
      for (const auto* r : ok) v.push_back(metric(r->metrics, k));
      double mean = std::nan("");
      double sd = std::nan("");
      if (!v.empty()) {
        const auto s = sample_mean(v);
        mean = s.value;
        sd = v.size() > 1 ? std::sqrt(s.variance_of_phi) : 0.0;
      }
      metric(a.key.metrics, k) = mean;
      metric(a.sd, k) = sd;
    }
    double runtime = 0.0;
    for (const auto* r : members) runtime += r->runtime_ms;
    a.key.runtime_ms = runtime / static_cast<double>(members.size());
    out.push_back(std::move(a));
  }
  return out;
}

void write_rows_csv(const std::vector<BenchResultRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "method,strategy,lambda,eval_lambda,gamma,time_steps,cost,correlated,replication";
  for (const char* name : kMetricNames) out << ',' << name;
  out << ",runtime_ms,status\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.strategy << ',' << format_double(r.lambda) << ','
        << format_double(r.eval_lambda) << ',' << format_double(r.gamma) << ',' << r.time_steps
        << ',' << format_double(r.cost) << ',' << (r.correlated ? 1 : 0) << ',' << r.replication;
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) out << ',' << format_double(metric(r.metrics, k));
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << ',' << format_double(r.runtime_ms) << ',' << status << '\n';
  }
  write_atomically(path, out.str());
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "method,strategy,lambda,eval_lambda,gamma,time_steps,cost,correlated,count,failures";
  for (const char* name : kMetricNames) out << ',' << name << ',' << name << "_sd";
  out << ",runtime_ms\n";
  for (const auto& a : rows) {
    const auto& r = a.key;
    out << r.method << ',' << r.strategy << ',' << format_double(r.lambda) << ','
        << format_double(r.eval_lambda) << ',' << format_double(r.gamma) << ',' << r.time_steps
        << ',' << format_double(r.cost) << ',' << (r.correlated ? 1 : 0) << ',' << a.count << ','
        << a.failures;
    for (std::size_t k = 0; k < kMetricNames.size(); ++k)
      out << ',' << format_double(metric(r.metrics, k)) << ',' << format_double(metric(a.sd, k));
    out << ',' << format_double(r.runtime_ms) << '\n';
  }
  write_atomically(path, out.str());
}

std::vector<BenchResultRow> run_bench(const BenchConfig& config) {
  config.validate();
  const auto cells_dir = config.out_dir / "cells";
  std::filesystem::create_directories(cells_dir);
  write_atomically(config.out_dir / "config.json", to_json(config).dump(2) + "\n");

  const auto cells = bench_cells(config);
  std::vector<std::vector<BenchResultRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        const auto file = cells_dir / (cells[i].id() + ".json");
        if (std::filesystem::exists(file)) {
          std::ifstream in(file);
          const auto j = json::parse(in);
          for (const auto& r : j) results[i].push_back(bench_row_from_json(r));
          continue;
        }
        results[i] = run_cell(config, cells[i]);
        json j = json::array();
        for (const auto& r : results[i]) j.push_back(to_json(r));
        write_atomically(file, j.dump(1) + "\n");
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(config.jobs, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<BenchResultRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  const auto agg = aggregate(rows);

  json jr = json::array();
  for (const auto& r : rows) jr.push_back(to_json(r));
  json ja = json::array();
  for (const auto& a : agg) ja.push_back(to_json(a));
  write_rows_csv(rows, config.out_dir / "rows.csv");
  write_atomically(config.out_dir / "rows.json", jr.dump(1) + "\n");
  write_aggregate_csv(agg, config.out_dir / "aggregate.csv");
  write_atomically(config.out_dir / "aggregate.json", ja.dump(1) + "\n");
  return rows;
}

Report render_report(const std::filesystem::path& results_dir) {
  const auto path = results_dir / "aggregate.json";
  if (!std::filesystem::exists(path))
    throw DataError("no aggregate found in " + results_dir.string());
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("corrupt aggregate " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw DataError("corrupt aggregate " + path.string() + ": expected an array");
  std::vector<AggregateRow> rows;
  for (const auto& r : j) rows.push_back(aggregate_row_from_json(r));
  if (rows.empty()) throw DataError("aggregate " + path.string() + " has no rows");
  return render_report(rows);
}

Report render_report(const std::vector<AggregateRow>& rows) {
  using Section = std::tuple<double, std::size_t, double, bool, double>;
  std::map<Section, std::vector<const AggregateRow*>> sections;
  for (const auto& a : rows) {
    const auto& k = a.key;
    sections[{k.gamma, k.time_steps, k.cost, k.correlated, k.eval_lambda}].push_back(&a);
  }

  std::ostringstream text;
  std::ostringstream csv;
  csv << "gamma,time_steps,cost,correlated,eval_lambda,method,strategy,lambda";
  for (const char* name : kMetricNames) csv << ',' << name << ',' << name << "_best";
  csv << '\n';

  char buf[64];
  for (const auto& [sec, members] : sections) {
    const auto& [gamma, steps, cost, corr, eval_lambda] = sec;
    text << "gamma=" << format_double(gamma) << " T=" << steps << " cost=" << format_double(cost)
         << " correlated=" << (corr ? "yes" : "no") << " eval_lambda=" << format_double(eval_lambda)
         << '\n';
    text << std::string(24, ' ') << "| Short-term                    | Balanced                      "
         << "| Long-term\n";
    std::snprintf(buf, sizeof buf, "%-10s %-13s", "method", "strategy");
    text << buf;
    for (int b = 0; b < 3; ++b) {
      std::snprintf(buf, sizeof buf, "| %9s %9s %9s ", "reward", "dW", "error");
      text << buf;
    }
    text << '\n';

    // Best strategy per method and metric.
    std::map<std::string, std::array<double, 9>> best;
    for (const auto* a : members) {
      auto [it, fresh] = best.try_emplace(a->key.method);
      for (std::size_t k = 0; k < 9; ++k) {
        const double v = metric(a->key.metrics, k);
        if (fresh) {
          it->second[k] = v;
        } else if (is_error_metric(k) ? v < it->second[k] : v > it->second[k]) {
          it->second[k] = v;
        }
      }
    }
    for (const auto* a : members) {
      const auto& r = a->key;
      std::snprintf(buf, sizeof buf, "%-10s %-13s", r.method.c_str(), r.strategy.c_str());
      text << buf;
      csv << format_double(gamma) << ',' << steps << ',' << format_double(cost) << ','
          << (corr ? 1 : 0) << ',' << format_double(eval_lambda) << ',' << r.method << ','
          << r.strategy << ',' << format_double(r.lambda);
      for (std::size_t k = 0; k < 9; ++k) {
        const double v = metric(r.metrics, k);
        const bool is_best = v == best[r.method][k];
        if (k % 3 == 0) text << "| ";
        std::snprintf(buf, sizeof buf, "%8.3f%c ", v, is_best ? '*' : ' ');
        text << buf;
        csv << ',' << format_double(v) << ',' << (is_best ? 1 : 0);
      }
      text << '\n';
      csv << '\n';
    }
    text << '\n';
  }
  text << "* best strategy within each method\n";
  return {text.str(), csv.str()};
}

}  // namespace balpol
