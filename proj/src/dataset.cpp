#include "balpol/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "balpol/errors.hpp"
#include "balpol/rng.hpp"
#include "csv.hpp"

namespace balpol {

std::size_t ObservationalDataset::observed_count() const {
  return static_cast<std::size_t>(
      std::count_if(units.begin(), units.end(), [](const UnitRecord& u) { return u.r == 1; }));
}

std::size_t ObservationalDataset::missing_count() const { return size() - observed_count(); }

std::vector<Violation> validate(const ObservationalDataset& dataset) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < dataset.units.size(); ++i) {
    const auto& u = dataset.units[i];
    if (u.x.size() != dataset.dim) out.push_back({i, "inconsistent covariate dimension"});
    if (u.a != 0 && u.a != 1) out.push_back({i, "non-binary a"});
    if (u.r != 0 && u.r != 1) out.push_back({i, "non-binary r"});
    if (u.r == 0 && u.y) out.push_back({i, "y present while r=0"});
    if (u.r == 1 && !u.y) out.push_back({i, "y absent while r=1"});
    const bool finite = std::all_of(u.x.begin(), u.x.end(), [](double v) { return std::isfinite(v); }) &&
                        std::isfinite(u.s) && (!u.y || std::isfinite(*u.y));
    if (!finite) out.push_back({i, "non-finite value"});
  }
  if (dataset.truth) {
    const auto& t = dataset.truth->units;
    if (t.size() != dataset.units.size()) {
      out.push_back({0, "truth length mismatch"});
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) {
        const auto& u = dataset.units[i];
        const double s_expected = u.a == 1 ? t[i].s1 : t[i].s0;
        const double y_expected = u.a == 1 ? t[i].y1 : t[i].y0;
        if (u.s != s_expected || (u.y && *u.y != y_expected)) {
          out.push_back({i, "potential outcomes inconsistent with observed data"});
        }
      }
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

int parse_binary(const csv::Table& t, std::size_t row, std::size_t col,
                 const std::filesystem::path& path) {
  const double v = csv::number(t, row, col, path);
  if (v != 0.0 && v != 1.0) {
    throw DataError(path.string() + ":" + std::to_string(t.line_numbers[row]) + ": column '" +
                    t.header[col] + "': value " + t.rows[row][col] + " is not 0 or 1");
  }
  return static_cast<int>(v);
}

std::size_t require_column(const csv::Table& t, const std::string& name,
                           const std::filesystem::path& path) {
  const auto c = csv::column(t, name);
  if (!c) throw DataError(path.string() + ": schema column '" + name + "' not found in header");
  return *c;
}

}  // namespace

ObservationalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const auto table = csv::read(path);
  const std::size_t a_col = require_column(table, schema.treatment, path);
  const std::size_t s_col = require_column(table, schema.short_outcome, path);
  const auto y_col = csv::column(table, schema.long_outcome);
  std::optional<std::size_t> r_col;
  if (!schema.observed.empty()) r_col = csv::column(table, schema.observed);
  if (!y_col && r_col) throw DataError(path.string() + ": r column present but y column missing");

  std::vector<std::size_t> x_cols;
  if (!schema.covariates.empty()) {
    for (const auto& name : schema.covariates) x_cols.push_back(require_column(table, name, path));
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const auto& h = table.header[c];
      if (!schema.covariate_prefix.empty() && h.rfind(schema.covariate_prefix, 0) == 0 &&
          c != a_col && c != s_col && (!y_col || c != *y_col) && (!r_col || c != *r_col)) {
        x_cols.push_back(c);
      }
    }
  }
  if (x_cols.empty()) throw DataError(path.string() + ": no covariate columns matched the schema");

  ObservationalDataset ds;
  ds.dim = x_cols.size();
  ds.units.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    UnitRecord u;
    u.x.reserve(x_cols.size());
    for (auto c : x_cols) u.x.push_back(csv::number(table, i, c, path));
    u.a = parse_binary(table, i, a_col, path);
    u.s = csv::number(table, i, s_col, path);
    if (y_col && !csv::trim(table.rows[i][*y_col]).empty()) {
      u.y = csv::number(table, i, *y_col, path);
    }
    u.r = r_col ? parse_binary(table, i, *r_col, path) : (u.y ? 1 : 0);
    ds.units.push_back(std::move(u));
  }
  return ds;
}

void save_csv(const ObservationalDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t j = 0; j < dataset.dim; ++j) out << 'x' << j << ',';
  out << "a,s,y,r\n";
  for (const auto& u : dataset.units) {
    for (double v : u.x) out << format_double(v) << ',';
    out << u.a << ',' << format_double(u.s) << ',';
    if (u.y) out << format_double(*u.y);
    out << ',' << u.r << '\n';
  }
}

void save_truth_csv(const PotentialTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "s0,s1,y0,y1\n";
  for (const auto& t : truth.units) {
    out << format_double(t.s0) << ',' << format_double(t.s1) << ',' << format_double(t.y0) << ','
        << format_double(t.y1) << '\n';
  }
}

PotentialTruth load_truth_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::size_t c[4] = {require_column(table, "s0", path), require_column(table, "s1", path),
                            require_column(table, "y0", path), require_column(table, "y1", path)};
  PotentialTruth truth;
  truth.units.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    truth.units.push_back({csv::number(table, i, c[0], path), csv::number(table, i, c[1], path),
                           csv::number(table, i, c[2], path), csv::number(table, i, c[3], path)});
  }
  return truth;
}

std::vector<std::vector<std::size_t>> split_folds(std::size_t n, std::size_t folds,
                                                  std::uint64_t seed) {
  if (folds < 2 || folds > n) {
    throw UsageError("fold count K=" + std::to_string(folds) + " must satisfy 2 <= K <= n=" +
                     std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  }
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(perm[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

}  // namespace balpol
