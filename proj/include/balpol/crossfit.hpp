#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "balpol/dataset.hpp"
#include "balpol/learners.hpp"

namespace balpol {

/// Per-unit nuisance predictions; arm-indexed arrays hold a = 0 at [0] and
/// a = 1 at [1].
struct NuisanceRow {
  double e = 0.5;                  // propensity e(x)
  std::array<double, 2> r{};       // selection score r(a, x, s)
  std::array<double, 2> mu{};      // mu_a(x) = E[S | x, A = a]
  std::array<double, 2> m{};       // m_a(x), long-term regression on x
  std::array<double, 2> mtilde{};  // mtilde_a(x, s) = E[Y | x, s, A = a, R = 1]
};

struct NuisanceEstimates {
  std::vector<NuisanceRow> rows;
  /// Fold each unit was predicted in; -1 for exact (oracle) values.
  std::vector<int> fold;
};

struct NuisanceSpecs {
  learners::LearnerSpec propensity = learners::LearnerSpec::logistic();
  learners::LearnerSpec selection = learners::LearnerSpec::logistic();
  learners::LearnerSpec short_outcome = learners::LearnerSpec::ridge();
  learners::LearnerSpec long_outcome = learners::LearnerSpec::ridge();
  learners::LearnerSpec long_given_short = learners::LearnerSpec::ridge();
};

enum class LongMeanMode {
  /// Regress out-of-sample mtilde_a(x, s) predictions on x over all A = a
  /// training units, i.e. E[mtilde_a(X, S) | X, A = a].
  integrated,
  /// Regress observed y on x over A = a, R = 1 training units.
  observed_only,
};

struct CrossFitOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  /// One selection model with a as an extra feature instead of one per arm.
  bool pooled_selection = false;
  LongMeanMode long_mean = LongMeanMode::integrated;
  std::size_t jobs = 1;
};

/// K-fold cross-fitting: every nuisance is trained on the complement of a
/// fold and evaluated on the fold. Throws DataError naming the nuisances that
/// lack training units (missing arm, or no R = 1 units within an arm) and
/// UsageError for an invalid fold count.
[[nodiscard]] NuisanceEstimates fit_nuisances(const ObservationalDataset& dataset,
                                              const NuisanceSpecs& specs,
                                              const CrossFitOptions& options = {});

/// Exact nuisances of the dataset's attached DGP-A table. Throws UsageError
/// when the dataset has no analytic DGP.
[[nodiscard]] NuisanceEstimates oracle_nuisances(const ObservationalDataset& dataset,
                                                 LongMeanMode long_mean = LongMeanMode::integrated);

enum class NuisanceTarget { propensity, selection, short_mean, long_mean, long_given_short };
enum class CorruptionMode {
  constant,  // every value (both arms) replaced by `value`
  flip,      // probabilities p -> 1 - p (negated logit); regressions v -> -v
  shift,     // probabilities: logit + value; regressions: v + value
};

[[nodiscard]] NuisanceTarget nuisance_target_from_string(const std::string& name);
[[nodiscard]] CorruptionMode corruption_mode_from_string(const std::string& name);

/// Replaces one nuisance by a deliberately wrong function; all other fields
/// are copied unchanged.
[[nodiscard]] NuisanceEstimates corrupt_nuisance(NuisanceEstimates nu, NuisanceTarget target,
                                                 CorruptionMode mode, double value = 0.0);

/// Columns fold,e,r0,r1,mu0,mu1,m0,m1,mt0,mt1.
void save_nuisances_csv(const NuisanceEstimates& nu, const std::filesystem::path& path);
[[nodiscard]] NuisanceEstimates load_nuisances_csv(const std::filesystem::path& path);

}  // namespace balpol
