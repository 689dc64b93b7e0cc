#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "balpol/dataset.hpp"
#include "balpol/dgp_table.hpp"
#include "balpol/estimators.hpp"
#include "balpol/rng.hpp"

namespace balpol {

enum class Family { ihdp_like, jobs_like, dgp_a };

[[nodiscard]] std::string to_string(Family f);
[[nodiscard]] Family family_from_string(const std::string& s);

/// Data-generating specification.
///
/// Short-term outcomes for ihdp_like and jobs_like:
///   S(a) ~ Bern(sigmoid(w_a . x + eps_a)), eps_a ~ N(short_mean[a], short_sd[a]),
/// with w_0 entries from a standard normal truncated to [-1,1] and w_1 entries
/// uniform on (-1,1). Long-term outcomes start at Y_0(a) = S(a) and follow
///   ihdp_like: Y_t(0) = N(beta_0 . x, 1)       + C sum_{j<t} Y_j(0)
///              Y_t(1) = N(beta_1 . x + 2, 0.5) + C sum_{j<t} Y_j(1)
///   jobs_like: Y_t(a) = Bern(clamp(sigmoid(beta_a . x) + (C/t) sum_{j<t} Y_j(a)))
///                       + N(0, sd_a), sd = (1, 0.5)
/// and Y(a) = Y_T(a). All weight vectors are drawn once per dataset.
/// Treatment is A ~ Bern(sigmoid(w_e . x)) with w_e uniform on
/// (-1/sqrt(p), 1/sqrt(p)) per entry.
struct DgpSpec {
  Family family = Family::dgp_a;
  std::size_t n = 1000;

  /// Covariate source, in priority order: in-memory rows, a CSV whose columns
  /// are all covariates, or standard Gaussian covariates of dimension p.
  std::vector<std::vector<double>> covariates;
  std::filesystem::path covariate_csv;
  /// Draw CSV rows with replacement when the file has fewer than n rows.
  bool resample_covariates = false;
  std::size_t p = 10;

  std::array<double, 2> short_mean{1.0, 3.0};
  std::array<double, 2> short_sd{1.0, 1.0};
  std::size_t time_steps = 10;
  double scale = 0.02;
  bool correlated = true;
  double cost = 0.0;
  std::uint64_t seed = 0;

  /// dgp_a only; the canonical table when unset.
  std::optional<DgpATable> table;

  /// Test hook: force w_0 = w_1 = 0 in the short-term model.
  bool zero_short_weights = false;

  /// Family defaults: ihdp_like eps means (1, 3), jobs_like (0, 2); sd 1.
  static DgpSpec ihdp_like(std::size_t n, std::uint64_t seed = 0);
  static DgpSpec jobs_like(std::size_t n, std::uint64_t seed = 0);
  static DgpSpec dgp_a(const DgpATable& table, std::size_t n, std::uint64_t seed = 0);

  /// Throws UsageError.
  void validate() const;
};

/// Draws one dataset with potential truth. ihdp_like and jobs_like data come
/// fully observed (r = 1); dgp_a data carries R ~ Bern(r(a, x, s)) and the
/// table itself. Deterministic given the spec.
[[nodiscard]] ObservationalDataset generate(const DgpSpec& spec);

/// generate() with the S-Y link removed: ihdp_like starts the recursion from
/// fresh draws of the short-term model, jobs_like drops the cumulative term.
/// Throws UsageError for dgp_a.
[[nodiscard]] ObservationalDataset generate_uncorrelated(const DgpSpec& spec);

/// score_i = s_i + sum_j x_ij; the floor(gamma n) highest scores lose y
/// (r = 0), ties going to the lower unit index. Other units are observed, with
/// y restored from the truth when it was hidden before.
[[nodiscard]] ObservationalDataset apply_missingness(ObservationalDataset dataset, double gamma);

/// Exact population quantities of a DGP-A table under a per-stratum policy.
struct TruthSummary {
  double value_short = 0.0;  // from mu_a(x), m_a(x) of the observed-data law
  double value_long = 0.0;
  double value_balanced = 0.0;
  double value_short_joint = 0.0;  // from the potential-outcome law
  double value_long_joint = 0.0;
  std::vector<double> tau_s;    // per stratum
  std::vector<double> tau_y;    // per stratum
  std::vector<double> optimal;  // per stratum, plug-in rule at (lambda, cost)
  double optimal_value = 0.0;   // balanced value of `optimal`
  /// Reduction in the long-term efficiency bound from using S:
  /// sum_x P(x) [pi^2 E_{S|x,A=1}((1-r)(mtilde-m)^2) / (e r) + (1-pi)^2 (...)].
  double efficiency_gap = 0.0;
  /// Var(phi_y with mtilde replaced by m) - Var(phi_y); equals efficiency_gap.
  double efficiency_gap_by_variance = 0.0;
  double variance_phi_s = 0.0;
  double variance_phi_y = 0.0;
};

/// `policy` holds pi(x) in [0,1] per stratum code. Throws UsageError for an
/// invalid table or a policy of the wrong length.
[[nodiscard]] TruthSummary enumerate_truth(const DgpATable& table, std::span<const double> policy,
                                           double lambda, double cost = 0.0,
                                           Objective objective = Objective::convex);

/// Standard normal via Box-Muller on the library generator.
[[nodiscard]] double standard_normal(Rng& rng);

}  // namespace balpol
