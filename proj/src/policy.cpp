#include "balpol/policy.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "balpol/errors.hpp"
#include "balpol/learners.hpp"
#include "balpol/rng.hpp"

namespace balpol {

namespace {

double score(const std::vector<double>& theta, std::span<const double> x) {
  double z = theta[0];
  for (std::size_t j = 0; j < x.size(); ++j) z += theta[j + 1] * x[j];
  return z;
}

int plugin_decision(double ts, double ty, const ObjectiveWeights& w, double cost) {
  // A zero weight drops its term so that an arbitrary effect cannot leak in.
  double combo = 0.0;
  if (w.short_term != 0.0) combo += w.short_term * ts;
  if (w.long_term != 0.0) combo += w.long_term * ty;
  return combo >= cost ? 1 : 0;
}

}  // namespace

double Policy::probability(std::span<const double> x) const {
  if (variant != PolicyVariant::smooth) throw UsageError("probability() needs a smooth policy");
  if (theta.size() != x.size() + 1)
    throw DataError("policy expects " + std::to_string(theta.size() - 1) + " covariates, got " +
                    std::to_string(x.size()));
  return learners::sigmoid(score(theta, x));
}

std::vector<double> Policy::values(const ObservationalDataset& dataset) const {
  std::vector<double> out(dataset.size());
  if (variant == PolicyVariant::smooth) {
    for (std::size_t i = 0; i < dataset.size(); ++i) out[i] = probability(dataset.units[i].x);
    return out;
  }
  if (tau_s.size() != dataset.size())
    throw DataError("threshold policy built for " + std::to_string(tau_s.size()) +
                    " units applied to " + std::to_string(dataset.size()));
  const auto w = objective_weights(lambda, objective);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = plugin_decision(tau_s[i], tau_y[i], w, cost);
  return out;
}

std::vector<double> Policy::decisions(const ObservationalDataset& dataset) const {
  auto v = values(dataset);
  for (double& p : v) p = p >= 0.5 ? 1.0 : 0.0;
  return v;
}

Policy optimal_plugin_policy(std::span<const double> tau_s, std::span<const double> tau_y,
                             double lambda, double cost, Objective objective) {
  if (tau_s.size() != tau_y.size())
    throw UsageError("tau_s and tau_y lengths differ (" + std::to_string(tau_s.size()) + " vs " +
                     std::to_string(tau_y.size()) + ")");
  (void)objective_weights(lambda, objective);
  Policy p;
  p.variant = PolicyVariant::threshold;
  p.lambda = lambda;
  p.cost = cost;
  p.objective = objective;
  p.tau_s.assign(tau_s.begin(), tau_s.end());
  p.tau_y.assign(tau_y.begin(), tau_y.end());
  return p;
}

Policy dm_policy(const NuisanceEstimates& nuisances, double lambda, double cost,
                 Objective objective) {
  if (nuisances.rows.empty()) throw DataError("dm policy needs nuisance estimates");
  std::vector<double> ts(nuisances.rows.size());
  std::vector<double> ty(nuisances.rows.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& nu = nuisances.rows[i];
    ts[i] = nu.mu[1] - nu.mu[0];
    ty[i] = nu.m[1] - nu.m[0];
  }
  return optimal_plugin_policy(ts, ty, lambda, cost, objective);
}

void LearnOptions::validate() const {
  if (!(step > 0.0)) throw UsageError("optimizer step must be positive");
  if (iterations == 0) throw UsageError("optimizer iterations must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw UsageError("moment decay constants must lie in [0,1)");
  if (!(epsilon > 0.0)) throw UsageError("optimizer epsilon must be positive");
  if (!(init_scale >= 0.0)) throw UsageError("init_scale must be non-negative");
}

double PolicySlopes::objective(std::span<const double> pi) const {
  std::vector<double> v(slope.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = slope[i] * pi[i];
  return baseline + pairwise_sum(v) / static_cast<double>(v.size());
}

PolicySlopes policy_slopes(const ObservationalDataset& dataset, const NuisanceEstimates& nuisances,
                           double lambda, Method method, double cost, Objective objective) {
  const auto w = objective_weights(lambda, objective);
  const auto arms_s = dataset_arm_values(dataset, nuisances, Horizon::short_term, method, cost);
  const auto arms_y = dataset_arm_values(dataset, nuisances, Horizon::long_term, method, cost);
  PolicySlopes out;
  out.slope.resize(dataset.size());
  std::vector<double> base(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.slope[i] = w.short_term * arms_s[i].slope() + w.long_term * arms_y[i].slope();
    base[i] = w.short_term * arms_s[i].control + w.long_term * arms_y[i].control;
    if (!std::isfinite(out.slope[i]) || !std::isfinite(base[i])) {
      const auto& nu = nuisances.rows[i];
      std::ostringstream msg;
      msg << "non-finite objective at unit " << i << " (e=" << nu.e << ", r0=" << nu.r[0]
          << ", r1=" << nu.r[1] << ")";
      throw NumericalError(msg.str());
    }
  }
  out.baseline = pairwise_sum(base) / static_cast<double>(base.size());
  return out;
}

Policy learn_policy(const ObservationalDataset& dataset, const NuisanceEstimates& nuisances,
                    double lambda, Method method, const LearnOptions& options, double cost,
                    Objective objective) {
  options.validate();
  const auto slopes = policy_slopes(dataset, nuisances, lambda, method, cost, objective);
  const std::size_t n = dataset.size();
  const std::size_t p = dataset.dim;

  std::vector<double> mean(p, 0.0), scale(p, 1.0);
  if (options.standardize) {
    for (std::size_t j = 0; j < p; ++j) {
      double m = 0.0;
      for (const auto& u : dataset.units) m += u.x[j];
      m /= static_cast<double>(n);
      double v = 0.0;
      for (const auto& u : dataset.units) v += (u.x[j] - m) * (u.x[j] - m);
      v /= static_cast<double>(n);
      mean[j] = m;
      scale[j] = v > 0.0 ? std::sqrt(v) : 1.0;
    }
  }
  Eigen::MatrixXd z(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    z(i, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) z(i, j + 1) = (dataset.units[i].x[j] - mean[j]) / scale[j];
  }
  const Eigen::Map<const Eigen::VectorXd> b(slopes.slope.data(), static_cast<Eigen::Index>(n));

  Rng rng(derive_seed(options.seed, {0x9011c7}));
  Eigen::VectorXd theta(p + 1);
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    theta(j) = options.init_scale * (2.0 * uniform01(rng) - 1.0);

  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  double decay1 = 1.0, decay2 = 1.0;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const Eigen::VectorXd s = (z * theta).unaryExpr([](double v) { return learners::sigmoid(v); });
    const Eigen::VectorXd weight = b.array() * s.array() * (1.0 - s.array());
    // Ascent direction.
    const Eigen::VectorXd g = z.transpose() * weight / static_cast<double>(n);
    if (!g.allFinite()) throw NumericalError("policy gradient became non-finite");
    m1 = options.beta1 * m1 + (1.0 - options.beta1) * g;
    m2 = options.beta2 * m2 + (1.0 - options.beta2) * g.cwiseProduct(g);
    decay1 *= options.beta1;
    decay2 *= options.beta2;
    const Eigen::ArrayXd mhat = m1.array() / (1.0 - decay1);
    const Eigen::ArrayXd vhat = m2.array() / (1.0 - decay2);
    theta.array() += options.step * mhat / (vhat.sqrt() + options.epsilon);
  }

  Policy out;
  out.variant = PolicyVariant::smooth;
  out.lambda = lambda;
  out.cost = cost;
  out.objective = objective;
  out.theta.assign(p + 1, 0.0);
  out.theta[0] = theta(0);
  for (std::size_t j = 0; j < p; ++j) {
    out.theta[j + 1] = theta(static_cast<Eigen::Index>(j + 1)) / scale[j];
    out.theta[0] -= out.theta[j + 1] * mean[j];
  }
  return out;
}

PolicyMetrics evaluate_decisions(std::span<const double> pi, const PotentialTruth& truth,
                                 double lambda, double cost, Objective objective) {
  const std::size_t n = truth.units.size();
  if (pi.size() != n)
    throw DataError("policy and truth lengths differ (" + std::to_string(pi.size()) + " vs " +
                    std::to_string(n) + ")");
  const auto w = objective_weights(lambda, objective);
  std::vector<double> ts(n), ty(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = truth.units[i].s1 - truth.units[i].s0;
    ty[i] = truth.units[i].y1 - truth.units[i].y0;
  }
  const auto weights_short = objective_weights(0.0, Objective::convex);
  const auto weights_long = objective_weights(1.0, Objective::convex);

  std::vector<double> rs(n), ry(n), ws(n), wy(n), err(n), err_s(n), err_y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = truth.units[i];
    const double p = pi[i];
    rs[i] = p * (t.s1 - cost) + (1.0 - p) * t.s0;
    ry[i] = p * (t.y1 - cost) + (1.0 - p) * t.y0;
    ws[i] = ts[i] * p;
    wy[i] = ty[i] * p;
    const auto sq = [p](int best) { return (best - p) * (best - p); };
    err[i] = sq(plugin_decision(ts[i], ty[i], w, cost));
    err_s[i] = sq(plugin_decision(ts[i], ty[i], weights_short, cost));
    err_y[i] = sq(plugin_decision(ts[i], ty[i], weights_long, cost));
  }
  PolicyMetrics m;
  m.reward_short = pairwise_sum(rs);
  m.reward_long = pairwise_sum(ry);
  m.reward_balanced = w.short_term * m.reward_short + w.long_term * m.reward_long;
  m.dW_short = pairwise_sum(ws);
  m.dW_long = pairwise_sum(wy);
  m.dW_balanced = w.short_term * m.dW_short + w.long_term * m.dW_long;
  const double nn = n == 0 ? 1.0 : static_cast<double>(n);
  m.policy_error = pairwise_sum(err) / nn;
  m.policy_error_short = pairwise_sum(err_s) / nn;
  m.policy_error_long = pairwise_sum(err_y) / nn;
  return m;
}

PolicyMetrics evaluate_policy(const Policy& policy, const ObservationalDataset& dataset,
                              double lambda, double cost, Objective objective) {
  if (!dataset.truth) throw DataError("policy evaluation needs potential-outcome truth");
  const auto d = policy.decisions(dataset);
  return evaluate_decisions(d, *dataset.truth, lambda, cost, objective);
}

std::string policy_to_json(const Policy& policy) {
  nlohmann::json j;
  j["variant"] = policy.variant == PolicyVariant::smooth ? "smooth" : "threshold";
  j["lambda"] = policy.lambda;
  j["cost"] = policy.cost;
  j["objective"] = to_string(policy.objective);
  if (policy.variant == PolicyVariant::smooth) {
    j["theta"] = policy.theta;
  } else {
    j["tau_s"] = policy.tau_s;
    j["tau_y"] = policy.tau_y;
  }
  return j.dump(2);
}

Policy policy_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Policy p;
    const auto variant = j.at("variant").get<std::string>();
    if (variant == "smooth") {
      p.variant = PolicyVariant::smooth;
      p.theta = j.at("theta").get<std::vector<double>>();
      if (p.theta.empty()) throw DataError("smooth policy without parameters");
    } else if (variant == "threshold") {
      p.variant = PolicyVariant::threshold;
      p.tau_s = j.at("tau_s").get<std::vector<double>>();
      p.tau_y = j.at("tau_y").get<std::vector<double>>();
      if (p.tau_s.size() != p.tau_y.size()) throw DataError("tau_s and tau_y lengths differ");
    } else {
      throw DataError("unknown policy variant '" + variant + "'");
    }
    p.lambda = j.value("lambda", 0.0);
    p.cost = j.value("cost", 0.0);
    p.objective = objective_from_string(j.value("objective", std::string("convex")));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed policy JSON: ") + e.what());
  }
}

}  // namespace balpol
