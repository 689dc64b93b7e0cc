#include "balpol/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "balpol/errors.hpp"
#include "balpol/learners.hpp"
#include "csv.hpp"

namespace balpol {

namespace {

constexpr std::array<double, 2> kJobsLongSd{1.0, 0.5};
constexpr std::array<double, 2> kIhdpLongSd{1.0, 0.5};
constexpr double kIhdpTreatedShift = 2.0;

// Independent streams, so the correlated and uncorrelated variants share
// everything except the long-term draws.
enum Stream : std::uint64_t { kWeights = 1, kCovariates, kUnits, kLong };

double truncated_normal(Rng& rng, double lo, double hi) {
  while (true) {
    const double z = standard_normal(rng);
    if (z >= lo && z <= hi) return z;
  }
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double dot(const std::vector<double>& w, const std::vector<double>& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * x[j];
  return acc;
}

std::vector<std::vector<double>> load_covariates(const DgpSpec& spec) {
  std::vector<std::vector<double>> pool;
  if (!spec.covariates.empty()) {
    pool = spec.covariates;
  } else if (!spec.covariate_csv.empty()) {
    const auto t = csv::read(spec.covariate_csv);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      std::vector<double> row(t.header.size());
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = csv::number(t, i, j, spec.covariate_csv);
      pool.push_back(std::move(row));
    }
  } else {
    Rng rng(derive_seed(spec.seed, {kCovariates}));
    std::vector<std::vector<double>> out(spec.n, std::vector<double>(spec.p));
    for (auto& row : out)
      for (double& v : row) v = standard_normal(rng);
    return out;
  }

  if (pool.empty()) throw DataError("covariate source has no rows");
  for (const auto& row : pool) {
    if (row.size() != pool.front().size()) throw DataError("covariate rows differ in length");
  }
  if (pool.size() >= spec.n) {
    pool.resize(spec.n);
    return pool;
  }
  if (!spec.resample_covariates) {
    throw DataError("covariate source has " + std::to_string(pool.size()) + " rows but n = " +
                    std::to_string(spec.n) + " (enable resampling to draw with replacement)");
  }
  Rng rng(derive_seed(spec.seed, {kCovariates}));
  std::vector<std::vector<double>> out(spec.n);
  for (auto& row : out) row = pool[uniform_index(rng, pool.size())];
  return out;
}

ObservationalDataset generate_table(const DgpSpec& spec) {
  const DgpATable table = spec.table ? *spec.table : DgpATable::canonical();
  table.validate();
  std::vector<double> cumulative(table.strata());
  std::partial_sum(table.p_x.begin(), table.p_x.end(), cumulative.begin());

  Rng rng(derive_seed(spec.seed, {kUnits, 0xa}));
  ObservationalDataset d;
  d.dim = table.dim;
  d.analytic_dgp = table;
  d.truth = PotentialTruth{};
  d.units.reserve(spec.n);
  d.truth->units.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double u = uniform01(rng) * cumulative.back();
    const auto x = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                     cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(table.strata() - 1)));
    const int a = bernoulli(rng, table.propensity[x]);
    std::array<int, 2> s{}, y{};
    for (int arm = 0; arm < 2; ++arm) s[arm] = bernoulli(rng, table.p_short[x][arm]);
    for (int arm = 0; arm < 2; ++arm) y[arm] = bernoulli(rng, table.p_long[x][arm][s[arm]]);
    const int r = bernoulli(rng, table.p_observe[x][a][s[a]]);

    UnitRecord unit;
    unit.x = table.covariates_of(x);
    unit.a = a;
    unit.s = s[a];
    unit.r = r;
    if (r == 1) unit.y = y[a];
    d.units.push_back(std::move(unit));
    d.truth->units.push_back({double(s[0]), double(s[1]), double(y[0]), double(y[1])});
  }
  return d;
}

ObservationalDataset generate_semi(const DgpSpec& spec, bool correlated) {
  auto xs = load_covariates(spec);
  const std::size_t p = xs.front().size();

  Rng wrng(derive_seed(spec.seed, {kWeights}));
  std::array<std::vector<double>, 2> w{std::vector<double>(p), std::vector<double>(p)};
  std::array<std::vector<double>, 2> beta{std::vector<double>(p), std::vector<double>(p)};
  std::vector<double> we(p);
  const double we_bound = 1.0 / std::sqrt(static_cast<double>(p));
  for (std::size_t j = 0; j < p; ++j) {
    w[0][j] = truncated_normal(wrng, -1.0, 1.0);
    w[1][j] = uniform(wrng, -1.0, 1.0);
    we[j] = uniform(wrng, -we_bound, we_bound);
    // jobs_like reuses these coefficient laws; its text gives no others.
    static constexpr double kBeta0Probs[5] = {0.5, 0.2, 0.15, 0.1, 0.05};
    double u = uniform01(wrng);
    int level = 0;
    while (level < 4 && u >= kBeta0Probs[level]) u -= kBeta0Probs[level++];
    beta[0][j] = level;
    beta[1][j] = 4.0 * truncated_normal(wrng, 0.0, 4.0);
  }
  if (spec.zero_short_weights) {
    std::fill(w[0].begin(), w[0].end(), 0.0);
    std::fill(w[1].begin(), w[1].end(), 0.0);
  }

  Rng urng(derive_seed(spec.seed, {kUnits}));
  Rng yrng(derive_seed(spec.seed, {kLong, correlated ? 1u : 0u}));
  ObservationalDataset d;
  d.dim = p;
  d.truth = PotentialTruth{};
  d.units.reserve(spec.n);
  d.truth->units.reserve(spec.n);
  const std::size_t steps = spec.time_steps;

  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto& x = xs[i];
    std::array<double, 2> s{};
    for (int a = 0; a < 2; ++a) {
      const double eps = spec.short_mean[a] + spec.short_sd[a] * standard_normal(urng);
      s[a] = bernoulli(urng, learners::sigmoid(dot(w[a], x) + eps));
    }
    const int a_obs = bernoulli(urng, learners::sigmoid(dot(we, x)));

    std::array<double, 2> y{};
    for (int a = 0; a < 2; ++a) {
      double start = s[a];
      if (!correlated && spec.family == Family::ihdp_like) {
        const double eps = spec.short_mean[a] + spec.short_sd[a] * standard_normal(yrng);
        start = bernoulli(yrng, learners::sigmoid(dot(w[a], x) + eps));
      }
      const double base = dot(beta[a], x);
      if (spec.family == Family::ihdp_like) {
        double history = start;
        double yt = start;
        for (std::size_t t = 1; t <= steps; ++t) {
          const double mean = a == 1 ? base + kIhdpTreatedShift : base;
          yt = mean + kIhdpLongSd[a] * standard_normal(yrng) + spec.scale * history;
          history += yt;
        }
        y[a] = yt;
      } else if (correlated) {
        double history = start;
        double yt = start;
        for (std::size_t t = 1; t <= steps; ++t) {
          const double c_t = spec.scale / static_cast<double>(t);
          const double prob = std::clamp(learners::sigmoid(base) + c_t * history, 0.0, 1.0);
          yt = bernoulli(yrng, prob) + kJobsLongSd[a] * standard_normal(yrng);
          history += yt;
        }
        y[a] = yt;
      } else {
        y[a] = bernoulli(yrng, learners::sigmoid(base)) + kJobsLongSd[a] * standard_normal(yrng);
      }
    }

    UnitRecord unit;
    unit.x = x;
    unit.a = a_obs;
    unit.s = s[a_obs];
    unit.y = y[a_obs];
    unit.r = 1;
    d.units.push_back(std::move(unit));
    d.truth->units.push_back({s[0], s[1], y[0], y[1]});
  }
  return d;
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::ihdp_like: return "ihdp_like";
    case Family::jobs_like: return "jobs_like";
    case Family::dgp_a: return "dgp_a";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  if (s == "ihdp_like") return Family::ihdp_like;
  if (s == "jobs_like") return Family::jobs_like;
  if (s == "dgp_a") return Family::dgp_a;
  throw UsageError("unknown family '" + s + "' (expected ihdp_like, jobs_like or dgp_a)");
}

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

DgpSpec DgpSpec::ihdp_like(std::size_t n, std::uint64_t seed) {
  DgpSpec s;
  s.family = Family::ihdp_like;
  s.n = n;
  s.seed = seed;
  s.short_mean = {1.0, 3.0};
  return s;
}

DgpSpec DgpSpec::jobs_like(std::size_t n, std::uint64_t seed) {
  DgpSpec s;
  s.family = Family::jobs_like;
  s.n = n;
  s.seed = seed;
  s.short_mean = {0.0, 2.0};
  return s;
}

DgpSpec DgpSpec::dgp_a(const DgpATable& table, std::size_t n, std::uint64_t seed) {
  DgpSpec s;
  s.family = Family::dgp_a;
  s.n = n;
  s.seed = seed;
  s.table = table;
  return s;
}

void DgpSpec::validate() const {
  if (n == 0) throw UsageError("n must be at least 1");
  if (time_steps == 0) throw UsageError("time_steps must be at least 1");
  if (!(short_sd[0] > 0.0 && short_sd[1] > 0.0))
    throw UsageError("short-term noise standard deviations must be positive");
  if (!std::isfinite(short_mean[0]) || !std::isfinite(short_mean[1]) || !std::isfinite(scale) ||
      !std::isfinite(cost))
    throw UsageError("spec contains a non-finite parameter");
  if (family != Family::dgp_a && covariates.empty() && covariate_csv.empty() && p == 0)
    throw UsageError("covariate dimension p must be at least 1");
  if (table) table->validate();
}

ObservationalDataset generate(const DgpSpec& spec) {
  spec.validate();
  if (spec.family == Family::dgp_a) return generate_table(spec);
  return generate_semi(spec, spec.correlated);
}

ObservationalDataset generate_uncorrelated(const DgpSpec& spec) {
  spec.validate();
  if (spec.family == Family::dgp_a)
    throw UsageError("the uncorrelated variant applies to ihdp_like and jobs_like only");
  return generate_semi(spec, false);
}

ObservationalDataset apply_missingness(ObservationalDataset dataset, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("missing ratio must lie in [0,1]");
  const std::size_t n = dataset.size();
  const auto hidden = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n) + 1e-9));
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = dataset.units[i];
    score[i] = u.s;
    for (double v : u.x) score[i] += v;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  for (std::size_t k = 0; k < n; ++k) {
    auto& u = dataset.units[order[k]];
    if (k < hidden) {
      u.r = 0;
      u.y.reset();
    } else {
      if (!u.y) {
        if (!dataset.truth)
          throw DataError("cannot restore a hidden outcome without potential truth");
        const auto& t = dataset.truth->units[order[k]];
        u.y = u.a == 1 ? t.y1 : t.y0;
      }
      u.r = 1;
    }
  }
  return dataset;
}

TruthSummary enumerate_truth(const DgpATable& table, std::span<const double> policy,
                             double lambda, double cost, Objective objective) {
  table.validate();
  const std::size_t k = table.strata();
  if (policy.size() != k)
    throw UsageError("policy needs one value per stratum (" + std::to_string(k) + ")");
  for (double v : policy)
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("policy values must lie in [0,1]");
  const auto w = objective_weights(lambda, objective);
  const auto nu = derive_nuisances(table);

  TruthSummary out;
  out.tau_s.resize(k);
  out.tau_y.resize(k);
  out.optimal.resize(k);
  for (std::size_t x = 0; x < k; ++x) {
    std::array<double, 2> py{};
    for (int a = 0; a < 2; ++a) {
      const double ps = table.p_short[x][a];
      py[a] = (1.0 - ps) * table.p_long[x][a][0] + ps * table.p_long[x][a][1];
    }
    out.tau_s[x] = table.p_short[x][1] - table.p_short[x][0];
    out.tau_y[x] = py[1] - py[0];
    double combo = 0.0;
    if (w.short_term != 0.0) combo += w.short_term * out.tau_s[x];
    if (w.long_term != 0.0) combo += w.long_term * out.tau_y[x];
    out.optimal[x] = combo >= cost ? 1.0 : 0.0;

    const double pi = policy[x];
    const double px = table.p_x[x];
    out.value_short += px * (pi * (nu.short_mean[x][1] - cost) + (1.0 - pi) * nu.short_mean[x][0]);
    out.value_long += px * (pi * (nu.long_mean[x][1] - cost) + (1.0 - pi) * nu.long_mean[x][0]);
    out.value_short_joint +=
        px * (pi * (table.p_short[x][1] - cost) + (1.0 - pi) * table.p_short[x][0]);
    out.value_long_joint += px * (pi * (py[1] - cost) + (1.0 - pi) * py[0]);
    const double opt = out.optimal[x];
    out.optimal_value +=
        px * (w.short_term * (opt * (table.p_short[x][1] - cost) + (1.0 - opt) * table.p_short[x][0]) +
              w.long_term * (opt * (py[1] - cost) + (1.0 - opt) * py[0]));
  }
  out.value_balanced = w.short_term * out.value_short + w.long_term * out.value_long;

  // Moments of the influence functions under the exact nuisances, summed over
  // the observed-data law of (X, A, S, R, Y).
  double m1s = 0.0, m2s = 0.0, m1y = 0.0, m2y = 0.0, m1p = 0.0, m2p = 0.0;
  for (std::size_t x = 0; x < k; ++x) {
    const double pi = policy[x];
    for (int a = 0; a < 2; ++a) {
      const double pa = a == 1 ? nu.propensity[x] : 1.0 - nu.propensity[x];
      for (int s = 0; s < 2; ++s) {
        const double ps = s == 1 ? nu.short_mean[x][a] : 1.0 - nu.short_mean[x][a];
        NuisanceRow row;
        row.e = nu.propensity[x];
        for (int b = 0; b < 2; ++b) {
          row.r[b] = nu.observe[x][b][s];
          row.mu[b] = nu.short_mean[x][b];
          row.m[b] = nu.long_mean[x][b];
          row.mtilde[b] = nu.long_given_short[x][b][s];
        }
        NuisanceRow plain = row;
        plain.mtilde = plain.m;
        for (int r = 0; r < 2; ++r) {
          const double pr = r == 1 ? nu.observe[x][a][s] : 1.0 - nu.observe[x][a][s];
          for (int y = 0; y < 2; ++y) {
            double pyv = 1.0;
            if (r == 1) {
              pyv = y == 1 ? nu.long_given_short[x][a][s] : 1.0 - nu.long_given_short[x][a][s];
            } else if (y == 1) {
              continue;  // y is not observed; the r = 0 cell is counted once
            }
            const double prob = table.p_x[x] * pa * ps * pr * pyv;
            UnitRecord u;
            u.a = a;
            u.s = s;
            u.r = r;
            if (r == 1) u.y = y;
            const double fs = arm_values(u, row, Horizon::short_term, Method::proposed, cost).at(pi);
            const double fy = arm_values(u, row, Horizon::long_term, Method::proposed, cost).at(pi);
            const double fp =
                arm_values(u, plain, Horizon::long_term, Method::proposed, cost).at(pi);
            m1s += prob * fs;
            m2s += prob * fs * fs;
            m1y += prob * fy;
            m2y += prob * fy * fy;
            m1p += prob * fp;
            m2p += prob * fp * fp;
          }
        }
      }
    }

    for (int a = 0; a < 2; ++a) {
      const double weight = a == 1 ? pi * pi / nu.propensity[x]
                                   : (1.0 - pi) * (1.0 - pi) / (1.0 - nu.propensity[x]);
      double inner = 0.0;
      for (int s = 0; s < 2; ++s) {
        const double ps = s == 1 ? nu.short_mean[x][a] : 1.0 - nu.short_mean[x][a];
        const double r = nu.observe[x][a][s];
        const double d = nu.long_given_short[x][a][s] - nu.long_mean[x][a];
        inner += ps * (1.0 - r) * d * d / r;
      }
      out.efficiency_gap += table.p_x[x] * weight * inner;
    }
  }
  out.variance_phi_s = m2s - m1s * m1s;
  out.variance_phi_y = m2y - m1y * m1y;
  out.efficiency_gap_by_variance = (m2p - m1p * m1p) - out.variance_phi_y;
  return out;
}

}  // namespace balpol
