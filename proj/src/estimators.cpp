#include "balpol/estimators.hpp"

#include "balpol/errors.hpp"

namespace balpol {

std::string to_string(Horizon h) { return h == Horizon::short_term ? "short" : "long"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::proposed: return "proposed";
    case Method::ipw: return "ipw";
    case Method::outcome_regression: return "or";
  }
  return "?";
}

std::string to_string(Objective o) { return o == Objective::convex ? "convex" : "additive"; }

Horizon horizon_from_string(const std::string& s) {
  if (s == "short") return Horizon::short_term;
  if (s == "long") return Horizon::long_term;
  throw UsageError("unknown reward horizon '" + s + "' (expected short or long)");
}

Method method_from_string(const std::string& s) {
  if (s == "proposed") return Method::proposed;
  if (s == "ipw") return Method::ipw;
  if (s == "or") return Method::outcome_regression;
  throw UsageError("unknown estimator '" + s + "' (expected proposed, ipw or or)");
}

Objective objective_from_string(const std::string& s) {
  if (s == "convex") return Objective::convex;
  if (s == "additive") return Objective::additive;
  throw UsageError("unknown objective '" + s + "' (expected convex or additive)");
}

ObjectiveWeights objective_weights(double lambda, Objective objective) {
  if (objective == Objective::convex) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw UsageError("lambda must lie in [0,1] for the convex objective");
    return {1.0 - lambda, lambda};
  }
  if (!(lambda >= 0.0 && std::isfinite(lambda)))
    throw UsageError("lambda must be >= 0 for the additive objective");
  return {1.0, lambda};
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

SampleMean sample_mean(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot estimate a mean from an empty sample");
  SampleMean out;
  out.n = values.size();
  out.value = pairwise_sum(values) / static_cast<double>(out.n);
  if (out.n > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - out.value;
      sq[i] = d * d;
    }
    out.variance_of_phi = pairwise_sum(sq) / static_cast<double>(out.n - 1);
  }
  return out;
}

namespace {

void check_row(const NuisanceRow& nu, std::size_t i) {
  const bool finite = std::isfinite(nu.e) && std::isfinite(nu.r[0]) && std::isfinite(nu.r[1]) &&
                      std::isfinite(nu.mu[0]) && std::isfinite(nu.mu[1]) &&
                      std::isfinite(nu.m[0]) && std::isfinite(nu.m[1]) &&
                      std::isfinite(nu.mtilde[0]) && std::isfinite(nu.mtilde[1]);
  if (!finite) throw NumericalError("non-finite nuisance value at unit " + std::to_string(i));
  if (!(nu.e > 0.0 && nu.e < 1.0))
    throw NumericalError("propensity outside (0,1) at unit " + std::to_string(i));
  if (!(nu.r[0] > 0.0 && nu.r[0] <= 1.0 && nu.r[1] > 0.0 && nu.r[1] <= 1.0))
    throw NumericalError("selection score outside (0,1] at unit " + std::to_string(i));
}

double observed_y(const UnitRecord& u) {
  if (!u.y) throw DataError("y absent while r=1");
  return *u.y;
}

void check_input(const PolicyEvalInput& in) {
  const std::size_t n = in.dataset.size();
  if (n == 0) throw DataError("empty dataset");
  if (in.nuisances.rows.size() != n || in.policy.size() != n) {
    throw DataError("dataset, nuisances and policy lengths disagree");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in.policy[i] >= 0.0 && in.policy[i] <= 1.0))
      throw DataError("policy value outside [0,1] at unit " + std::to_string(i));
  }
}

}  // namespace

ArmValues arm_values(const UnitRecord& u, const NuisanceRow& nu, Horizon horizon, Method method,
                     double cost) {
  const double a = u.a;
  const double e = nu.e;
  ArmValues out;
  if (horizon == Horizon::short_term) {
    switch (method) {
      case Method::proposed:
        out.treat = (nu.mu[1] - cost) + a * (u.s - nu.mu[1]) / e;
        out.control = nu.mu[0] + (1.0 - a) * (u.s - nu.mu[0]) / (1.0 - e);
        break;
      case Method::ipw:
        out.treat = a * (u.s - cost) / e;
        out.control = (1.0 - a) * u.s / (1.0 - e);
        break;
      case Method::outcome_regression:
        out.treat = nu.mu[1] - cost;
        out.control = nu.mu[0];
        break;
    }
    return out;
  }

  // Residual terms carry a factor r and are skipped when r = 0.
  const bool seen = u.r == 1;
  switch (method) {
    case Method::proposed: {
      out.treat = (nu.m[1] - cost) + a * (nu.mtilde[1] - nu.m[1]) / e;
      out.control = nu.m[0] + (1.0 - a) * (nu.mtilde[0] - nu.m[0]) / (1.0 - e);
      if (seen) {
        const double y = observed_y(u);
        out.treat += a * (y - nu.mtilde[1]) / (e * nu.r[1]);
        out.control += (1.0 - a) * (y - nu.mtilde[0]) / ((1.0 - e) * nu.r[0]);
      }
      break;
    }
    case Method::ipw:
      if (seen) {
        const double y = observed_y(u);
        out.treat = a * (y - cost) / (e * nu.r[1]);
        out.control = (1.0 - a) * y / ((1.0 - e) * nu.r[0]);
      }
      break;
    case Method::outcome_regression:
      out.treat = nu.mtilde[1] - cost;
      out.control = nu.mtilde[0];
      break;
  }
  return out;
}

double phi_s(const UnitRecord& unit, const NuisanceRow& nu, double pi, double cost) {
  check_row(nu, 0);
  return arm_values(unit, nu, Horizon::short_term, Method::proposed, cost).at(pi);
}

double phi_y(const UnitRecord& unit, const NuisanceRow& nu, double pi, double cost) {
  check_row(nu, 0);
  return arm_values(unit, nu, Horizon::long_term, Method::proposed, cost).at(pi);
}

std::vector<ArmValues> dataset_arm_values(const ObservationalDataset& dataset,
                                          const NuisanceEstimates& nuisances, Horizon horizon,
                                          Method method, double cost) {
  if (dataset.size() == 0) throw DataError("empty dataset");
  if (nuisances.rows.size() != dataset.size())
    throw DataError("dataset and nuisance lengths disagree");
  std::vector<ArmValues> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    check_row(nuisances.rows[i], i);
    out[i] = arm_values(dataset.units[i], nuisances.rows[i], horizon, method, cost);
  }
  return out;
}

namespace {

std::vector<double> summands(const PolicyEvalInput& in, Horizon horizon, Method method,
                             const EstimatorOptions& options) {
  const auto arms = dataset_arm_values(in.dataset, in.nuisances, horizon, method, in.cost);
  const std::size_t n = arms.size();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = arms[i].at(in.policy[i]);
  if (options.hajek && method == Method::ipw) {
    // Self-normalization, linearized so the variance stays a per-unit one.
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& u = in.dataset.units[i];
      const auto& nu = in.nuisances.rows[i];
      const double pi = in.policy[i];
      double wi = pi * u.a / nu.e + (1.0 - pi) * (1 - u.a) / (1.0 - nu.e);
      if (horizon == Horizon::long_term) {
        wi = u.r == 1 ? pi * u.a / (nu.e * nu.r[1]) + (1.0 - pi) * (1 - u.a) / ((1.0 - nu.e) * nu.r[0])
                      : 0.0;
      }
      w[i] = wi;
    }
    const double w_mean = pairwise_sum(w) / static_cast<double>(n);
    if (!(w_mean > 0.0)) throw NumericalError("Hajek normalization with zero total weight");
    const double value = pairwise_sum(v) / static_cast<double>(n) / w_mean;
    for (std::size_t i = 0; i < n; ++i) v[i] = value + (v[i] - value * w[i]) / w_mean;
  }
  return v;
}

}  // namespace

RewardEstimate estimate_reward(const PolicyEvalInput& input, Horizon horizon, Method method,
                               const EstimatorOptions& options) {
  check_input(input);
  const auto v = summands(input, horizon, method, options);
  RewardEstimate out;
  static_cast<SampleMean&>(out) = sample_mean(v);
  out.method = method;
  out.which = to_string(horizon);
  out.lambda = horizon == Horizon::short_term ? 0.0 : 1.0;
  return out;
}

RewardEstimate estimate_balanced(const PolicyEvalInput& input, double lambda, Method method,
                                 Objective objective, const EstimatorOptions& options) {
  const auto w = objective_weights(lambda, objective);
  check_input(input);
  const auto vs = summands(input, Horizon::short_term, method, options);
  const auto vy = summands(input, Horizon::long_term, method, options);
  std::vector<double> combined(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) combined[i] = w.short_term * vs[i] + w.long_term * vy[i];
  const auto s = sample_mean(vs);
  const auto y = sample_mean(vy);
  RewardEstimate out;
  static_cast<SampleMean&>(out) = sample_mean(combined);
  out.value = w.short_term * s.value + w.long_term * y.value;
  out.method = method;
  out.which = "balanced";
  out.lambda = lambda;
  return out;
}

SampleMean efficiency_gap(const PolicyEvalInput& input) {
  check_input(input);
  const std::size_t n = input.dataset.size();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nu = input.nuisances.rows[i];
    check_row(nu, i);
    const double a = input.dataset.units[i].a;
    const double pi = input.policy[i];
    const double d1 = nu.mtilde[1] - nu.m[1];
    const double d0 = nu.mtilde[0] - nu.m[0];
    v[i] = pi * pi * a * (1.0 - nu.r[1]) * d1 * d1 / (nu.e * nu.e * nu.r[1]) +
           (1.0 - pi) * (1.0 - pi) * (1.0 - a) * (1.0 - nu.r[0]) * d0 * d0 /
               ((1.0 - nu.e) * (1.0 - nu.e) * nu.r[0]);
  }
  return sample_mean(v);
}

}  // namespace balpol
