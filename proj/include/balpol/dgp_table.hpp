#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace balpol {

/// Fully discrete data-generating process over binary covariates, binary
/// short-term outcome S and binary long-term outcome Y.
///
/// A stratum is the integer code of a covariate vector x in {0,1}^dim, with
/// bit j of the code holding x_j. All conditional probabilities are stored
/// per stratum:
///   p_x[x]              P(X = x)
///   propensity[x]       e(x) = P(A = 1 | X = x)
///   p_short[x][a]       P(S(a) = 1 | X = x)
///   p_observe[x][a][s]  r(a, x, s) = P(R = 1 | X = x, A = a, S = s)
///   p_long[x][a][s]     P(Y(a) = 1 | X = x, S(a) = s)
///
/// Potential outcomes S(0) and S(1) are conditionally independent given X and
/// Y(a) depends on S(a) only. Missingness R depends on (A, X, S) only, so the
/// missing-at-random and ignorability conditions hold by construction.
struct DgpATable {
  using ArmPair = std::array<double, 2>;
  using ArmByShort = std::array<std::array<double, 2>, 2>;

  std::size_t dim = 1;
  std::vector<double> p_x;
  std::vector<double> propensity;
  std::vector<ArmPair> p_short;
  std::vector<ArmByShort> p_observe;
  std::vector<ArmByShort> p_long;

  [[nodiscard]] std::size_t strata() const { return std::size_t{1} << dim; }

  /// The reference table: P(X=1)=0.5, e(x)=0.3+0.4x,
  /// P(S=1|x,a)=0.2+0.3a+0.2x, r(a,x,s)=0.6+0.2s, P(Y=1|x,s,a)=0.1+0.4s+0.2a.
  static DgpATable canonical();

  /// Three independent covariate bits (P = 0.5, 0.4, 0.6) whose short- and
  /// long-term effects disagree in sign on some strata. The balanced effect
  /// (tau_s + tau_y) / 2 = 0.08 - 0.4 x0 - 0.16 x1 + 0.24 x2 is affine in x
  /// and at least 0.08 away from zero on every stratum.
  static DgpATable mixed_effects();

  /// Throws UsageError when sizes disagree, a probability lies outside the
  /// open interval (0,1) or p_x does not sum to one.
  void validate() const;

  [[nodiscard]] std::vector<double> covariates_of(std::size_t stratum) const;
  /// Throws DataError for non-binary entries or a wrong length.
  [[nodiscard]] std::size_t stratum_of(std::span<const double> x) const;
};

/// Observed-data functionals of a DgpATable, each computed by conditioning
/// the enumerated joint law of (X, A, S, R, Y).
struct DgpANuisances {
  std::vector<double> propensity;                      // e(x)
  std::vector<DgpATable::ArmPair> short_mean;          // mu_a(x)
  std::vector<DgpATable::ArmByShort> observe;          // r(a,x,s)
  std::vector<DgpATable::ArmByShort> long_given_short; // mtilde_a(x,s)
  /// m_a(x) = E[mtilde_a(X,S) | X=x, A=a]; the regression that makes the
  /// long-term influence function mean-zero.
  std::vector<DgpATable::ArmPair> long_mean;
  /// E[Y | X=x, A=a, R=1]; differs from long_mean whenever R depends on S.
  std::vector<DgpATable::ArmPair> long_mean_observed;
};

[[nodiscard]] DgpANuisances derive_nuisances(const DgpATable& table);

}  // namespace balpol
