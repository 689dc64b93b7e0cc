#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "balpol/crossfit.hpp"
#include "balpol/dataset.hpp"

namespace balpol {

enum class Horizon { short_term, long_term };
enum class Method { proposed, ipw, outcome_regression };

/// How the short- and long-term values are combined.
///   convex:   (1 - lambda) V_s + lambda V_y, lambda in [0, 1]
///   additive: V_s + lambda V_y, lambda >= 0
enum class Objective { convex, additive };

[[nodiscard]] std::string to_string(Horizon h);
[[nodiscard]] std::string to_string(Method m);
[[nodiscard]] std::string to_string(Objective o);
[[nodiscard]] Horizon horizon_from_string(const std::string& s);
[[nodiscard]] Method method_from_string(const std::string& s);
[[nodiscard]] Objective objective_from_string(const std::string& s);

struct ObjectiveWeights {
  double short_term;
  double long_term;
};
/// Throws UsageError when lambda is out of range for the objective.
[[nodiscard]] ObjectiveWeights objective_weights(double lambda, Objective objective);

/// Mean of per-unit values with the plug-in variance of those values.
struct SampleMean {
  double value = 0.0;
  double variance_of_phi = 0.0;
  std::size_t n = 0;

  [[nodiscard]] double std_error() const {
    return n == 0 ? 0.0 : std::sqrt(variance_of_phi / static_cast<double>(n));
  }
  [[nodiscard]] double ci_low() const { return value - 1.96 * std_error(); }
  [[nodiscard]] double ci_high() const { return value + 1.96 * std_error(); }
};

struct RewardEstimate : SampleMean {
  Method method = Method::proposed;
  std::string which;  // "short", "long" or "balanced"
  double lambda = 0.0;
};

/// Everything needed to evaluate one policy; `policy` holds pi(x_i) in [0,1].
struct PolicyEvalInput {
  const ObservationalDataset& dataset;
  const NuisanceEstimates& nuisances;
  std::span<const double> policy;
  double cost = 0.0;
};

struct EstimatorOptions {
  /// Self-normalized inverse weights for the ipw method. Not part of the
  /// estimators' standard definitions; off by default.
  bool hajek = false;
};

/// Per-unit value under treatment and under control; every estimator's
/// per-unit summand is pi * treat + (1 - pi) * control.
struct ArmValues {
  double treat = 0.0;
  double control = 0.0;

  [[nodiscard]] double at(double pi) const { return pi * treat + (1.0 - pi) * control; }
  [[nodiscard]] double slope() const { return treat - control; }
};

[[nodiscard]] ArmValues arm_values(const UnitRecord& unit, const NuisanceRow& nu, Horizon horizon,
                                   Method method, double cost = 0.0);

/// Efficient influence value for the short-term reward:
/// pi mu1 + (1-pi) mu0 + pi a (s - mu1)/e + (1-pi)(1-a)(s - mu0)/(1-e),
/// with s and mu1 shifted by -cost in the treated terms.
[[nodiscard]] double phi_s(const UnitRecord& unit, const NuisanceRow& nu, double pi,
                           double cost = 0.0);

/// Efficient influence value for the long-term reward. When r = 0 the
/// residual terms r (y - mtilde_a)/(.) are exactly zero and y is not read.
[[nodiscard]] double phi_y(const UnitRecord& unit, const NuisanceRow& nu, double pi,
                           double cost = 0.0);

/// Per-unit arm values for the whole dataset, after validating the inputs.
[[nodiscard]] std::vector<ArmValues> dataset_arm_values(const ObservationalDataset& dataset,
                                                        const NuisanceEstimates& nuisances,
                                                        Horizon horizon, Method method,
                                                        double cost = 0.0);

[[nodiscard]] RewardEstimate estimate_reward(const PolicyEvalInput& input, Horizon horizon,
                                             Method method, const EstimatorOptions& options = {});

/// Value is the weighted combination of the two reward estimates; the
/// variance is that of the combined per-unit values.
[[nodiscard]] RewardEstimate estimate_balanced(const PolicyEvalInput& input, double lambda,
                                               Method method,
                                               Objective objective = Objective::convex,
                                               const EstimatorOptions& options = {});

/// Sample estimate of the reduction in the long-term efficiency bound that
/// comes from S carrying information about Y:
///   E[pi^2 (1 - r1)(mtilde1 - m1)^2 / (e r1) | A = 1 arm]
/// + E[(1-pi)^2 (1 - r0)(mtilde0 - m0)^2 / ((1-e) r0) | A = 0 arm],
/// each arm term averaged over that arm's S distribution through the
/// weights a/e and (1-a)/(1-e). Always >= 0.
[[nodiscard]] SampleMean efficiency_gap(const PolicyEvalInput& input);

/// Sum in a fixed pairwise order.
[[nodiscard]] double pairwise_sum(std::span<const double> values);
[[nodiscard]] SampleMean sample_mean(std::span<const double> values);

}  // namespace balpol
