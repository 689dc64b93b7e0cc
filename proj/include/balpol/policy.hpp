#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "balpol/crossfit.hpp"
#include "balpol/dataset.hpp"
#include "balpol/estimators.hpp"

namespace balpol {

enum class PolicyVariant { threshold, smooth };

/// Either a deterministic plug-in rule I(w_s tau_s + w_y tau_y >= c) over
/// per-unit effect estimates, or pi(x; theta) = sigmoid(theta_0 + theta_1..p x)
/// on raw covariates.
struct Policy {
  PolicyVariant variant = PolicyVariant::threshold;
  double lambda = 0.0;
  double cost = 0.0;
  Objective objective = Objective::convex;

  std::vector<double> tau_s;  // threshold only
  std::vector<double> tau_y;  // threshold only
  std::vector<double> theta;  // smooth only: intercept first

  /// pi(x_i) for every unit. A threshold policy is tied to the units it was
  /// built from and throws DataError for a dataset of different length.
  [[nodiscard]] std::vector<double> values(const ObservationalDataset& dataset) const;
  /// values() hardened at 0.5 (ties at exactly 0.5 treat).
  [[nodiscard]] std::vector<double> decisions(const ObservationalDataset& dataset) const;
  /// Smooth policies only.
  [[nodiscard]] double probability(std::span<const double> x) const;
};

/// Decision I(w_s tau_s + w_y tau_y >= cost); equality treats. Throws
/// UsageError on a length mismatch or a lambda outside the objective's range.
[[nodiscard]] Policy optimal_plugin_policy(std::span<const double> tau_s,
                                           std::span<const double> tau_y, double lambda,
                                           double cost = 0.0,
                                           Objective objective = Objective::convex);

/// Plug-in rule with tau_s = mu1 - mu0 and tau_y = m1 - m0.
[[nodiscard]] Policy dm_policy(const NuisanceEstimates& nuisances, double lambda, double cost = 0.0,
                               Objective objective = Objective::convex);

struct LearnOptions {
  double step = 0.05;
  std::size_t iterations = 2000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Initial parameters are uniform in [-init_scale, init_scale].
  double init_scale = 0.01;
  std::uint64_t seed = 0;
  /// Optimize on standardized covariates; theta is mapped back to raw x.
  bool standardize = true;

  void validate() const;
};

/// Maximizes the estimated objective w_s V_s(theta) + w_y V_y(theta) with
/// Adam. Each unit contributes slope_i * sigmoid(theta . [1, x_i]) plus a
/// policy-independent term, so the gradient is exact.
[[nodiscard]] Policy learn_policy(const ObservationalDataset& dataset,
                                  const NuisanceEstimates& nuisances, double lambda, Method method,
                                  const LearnOptions& options = {}, double cost = 0.0,
                                  Objective objective = Objective::convex);

/// Value of the learned objective at the given policy values, up to the
/// policy-independent constant: mean_i slope_i * pi_i.
struct PolicySlopes {
  std::vector<double> slope;
  double baseline = 0.0;  // mean control-arm value

  [[nodiscard]] double objective(std::span<const double> pi) const;
};
[[nodiscard]] PolicySlopes policy_slopes(const ObservationalDataset& dataset,
                                         const NuisanceEstimates& nuisances, double lambda,
                                         Method method, double cost = 0.0,
                                         Objective objective = Objective::convex);

struct PolicyMetrics {
  double reward_short = 0.0;
  double reward_long = 0.0;
  double reward_balanced = 0.0;
  double dW_short = 0.0;
  double dW_long = 0.0;
  double dW_balanced = 0.0;
  /// Mean squared difference to the optimal rule at the evaluation lambda.
  double policy_error = 0.0;
  /// The same against the lambda = 0 and lambda = 1 optimal rules.
  double policy_error_short = 0.0;
  double policy_error_long = 0.0;
};

/// Rewards and welfare changes are sums over units of the dataset's potential
/// truth. Smooth policies are hardened at 0.5. Throws DataError without truth.
[[nodiscard]] PolicyMetrics evaluate_policy(const Policy& policy,
                                            const ObservationalDataset& dataset, double lambda,
                                            double cost = 0.0,
                                            Objective objective = Objective::convex);

/// Same metrics for explicit per-unit decisions in [0,1].
[[nodiscard]] PolicyMetrics evaluate_decisions(std::span<const double> decisions,
                                               const PotentialTruth& truth, double lambda,
                                               double cost = 0.0,
                                               Objective objective = Objective::convex);

/// {"variant", "lambda", "cost", "objective", "theta" | "tau_s" + "tau_y"}.
[[nodiscard]] std::string policy_to_json(const Policy& policy);
/// Throws DataError on malformed input.
[[nodiscard]] Policy policy_from_json(const std::string& text);

}  // namespace balpol
