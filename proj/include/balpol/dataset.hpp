#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "balpol/dgp_table.hpp"

namespace balpol {

/// One observed unit: covariates x, binary treatment a, short-term outcome s,
/// optional long-term outcome y and the observation indicator r.
struct UnitRecord {
  std::vector<double> x;
  int a = 0;
  double s = 0.0;
  std::optional<double> y;
  int r = 0;
};

/// Potential outcomes (S(0), S(1), Y(0), Y(1)) of a single unit.
struct PotentialOutcomes {
  double s0 = 0.0;
  double s1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
};

struct PotentialTruth {
  std::vector<PotentialOutcomes> units;
};

/// Units in input order. Only synthetic data carries `truth`; datasets drawn
/// from a DgpATable also carry the table so exact nuisances can be evaluated.
struct ObservationalDataset {
  std::vector<UnitRecord> units;
  std::size_t dim = 0;
  std::optional<PotentialTruth> truth;
  std::optional<DgpATable> analytic_dgp;

  [[nodiscard]] std::size_t size() const { return units.size(); }
  [[nodiscard]] std::size_t observed_count() const;  // n1 = #{r = 1}
  [[nodiscard]] std::size_t missing_count() const;   // n0 = #{r = 0}
};

struct Violation {
  std::size_t unit;
  std::string rule;
};

/// Checks every record invariant and returns one entry per violation. Rules:
/// "y present while r=0", "y absent while r=1", "non-binary a", "non-binary r",
/// "inconsistent covariate dimension", "non-finite value",
/// "potential outcomes inconsistent with observed data", "truth length mismatch".
[[nodiscard]] std::vector<Violation> validate(const ObservationalDataset& dataset);

/// Column mapping for CSV ingestion. Covariates are either listed explicitly
/// or selected as all header columns starting with `covariate_prefix`, in
/// header order.
struct CsvSchema {
  std::vector<std::string> covariates;
  std::string covariate_prefix = "x";
  std::string treatment = "a";
  std::string short_outcome = "s";
  std::string long_outcome = "y";
  std::string observed = "r";  // empty: infer r from the y cell
};

/// Throws DataError carrying the 1-based file line and column name on any
/// parse failure, schema mismatch or non-binary a / r value.
[[nodiscard]] ObservationalDataset load_csv(const std::filesystem::path& path,
                                            const CsvSchema& schema = {});

/// Writes x0..x{p-1},a,s,y,r with shortest round-trip formatting; an absent y
/// is an empty cell.
void save_csv(const ObservationalDataset& dataset, const std::filesystem::path& path);

/// Sidecar truth file with columns s0,s1,y0,y1, one row per unit.
void save_truth_csv(const PotentialTruth& truth, const std::filesystem::path& path);
[[nodiscard]] PotentialTruth load_truth_csv(const std::filesystem::path& path);

/// Random partition of {0..n-1} into K folds whose sizes differ by at most
/// one. Deterministic given the seed. Throws UsageError unless 2 <= K <= n.
[[nodiscard]] std::vector<std::vector<std::size_t>> split_folds(std::size_t n, std::size_t folds,
                                                                std::uint64_t seed);

/// Shortest decimal text that parses back to exactly `v`.
[[nodiscard]] std::string format_double(double v);

}  // namespace balpol
