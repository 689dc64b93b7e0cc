#include "balpol/crossfit.hpp"

#include <cmath>
#include <fstream>
#include <future>

#include "balpol/errors.hpp"
#include "balpol/rng.hpp"
#include "csv.hpp"

namespace balpol {

namespace {

using learners::LearnerSpec;
using learners::Task;
using Index = std::vector<Eigen::Index>;

struct FeatureSet {
  Eigen::MatrixXd x;           // covariates
  Eigen::MatrixXd xs;          // covariates + s
  Eigen::MatrixXd xsa;         // covariates + s + a (pooled selection)
  Eigen::VectorXd a, s, y, r;  // y is 0 where absent
};

FeatureSet build_features(const ObservationalDataset& ds, bool with_arm) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto p = static_cast<Eigen::Index>(ds.dim);
  FeatureSet f;
  f.x.resize(n, p);
  f.xs.resize(n, p + 1);
  if (with_arm) f.xsa.resize(n, p + 2);
  f.a.resize(n);
  f.s.resize(n);
  f.y.resize(n);
  f.r.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = ds.units[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) f.x(i, j) = u.x[static_cast<std::size_t>(j)];
    f.xs.row(i).head(p) = f.x.row(i);
    f.xs(i, p) = u.s;
    if (with_arm) {
      f.xsa.row(i).head(p + 1) = f.xs.row(i);
      f.xsa(i, p + 1) = u.a;
    }
    f.a(i) = u.a;
    f.s(i) = u.s;
    f.y(i) = u.y.value_or(0.0);
    f.r(i) = u.r;
  }
  return f;
}

LearnerSpec seeded(LearnerSpec spec, std::uint64_t master, std::uint64_t fold, std::uint64_t role) {
  spec.seed = derive_seed(master ^ spec.seed, {fold, role});
  return spec;
}

Eigen::MatrixXd with_arm_column(const Eigen::MatrixXd& xsa_rows, double arm) {
  Eigen::MatrixXd out = xsa_rows;
  out.col(out.cols() - 1).setConstant(arm);
  return out;
}

void fit_fold(const FeatureSet& f, const NuisanceSpecs& specs, const CrossFitOptions& opt,
              std::size_t k, const Index& train, const Index& test, NuisanceEstimates& out) {
  const auto seed = opt.seed;
  auto fit_predict = [&](const LearnerSpec& spec, std::uint64_t role, const Eigen::MatrixXd& feats,
                         const Index& rows, const Eigen::VectorXd& target, Task task,
                         const Eigen::MatrixXd& eval) {
    const auto model = learners::fit(seeded(spec, seed, k, role), feats(rows, Eigen::all),
                                     target(rows), task);
    return learners::predict(model, eval);
  };

  const Eigen::MatrixXd x_test = f.x(test, Eigen::all);
  const Eigen::MatrixXd xs_test = f.xs(test, Eigen::all);

  const Eigen::VectorXd e_hat =
      fit_predict(specs.propensity, 1, f.x, train, f.a, Task::probability, x_test);

  std::array<Index, 2> arm;
  std::array<Index, 2> arm_obs;
  for (auto i : train) {
    const int a = static_cast<int>(f.a(i));
    arm[a].push_back(i);
    if (f.r(i) == 1.0) arm_obs[a].push_back(i);
  }

  std::array<Eigen::VectorXd, 2> r_hat, mu_hat, m_hat, mt_hat;
  if (opt.pooled_selection) {
    const Eigen::MatrixXd xsa_test = f.xsa(test, Eigen::all);
    const auto model = learners::fit(seeded(specs.selection, seed, k, 2), f.xsa(train, Eigen::all),
                                     f.r(train), Task::probability);
    for (int a = 0; a < 2; ++a) r_hat[a] = learners::predict(model, with_arm_column(xsa_test, a));
  }
  for (int a = 0; a < 2; ++a) {
    const std::uint64_t base = 10 + 10 * static_cast<std::uint64_t>(a);
    if (!opt.pooled_selection) {
      r_hat[a] = fit_predict(specs.selection, base + 1, f.xs, arm[a], f.r, Task::probability, xs_test);
    }
    mu_hat[a] = fit_predict(specs.short_outcome, base + 2, f.x, arm[a], f.s, Task::regression, x_test);

    const auto mt_model = learners::fit(seeded(specs.long_given_short, seed, k, base + 3),
                                        f.xs(arm_obs[a], Eigen::all), f.y(arm_obs[a]),
                                        Task::regression);
    mt_hat[a] = learners::predict(mt_model, xs_test);
    if (opt.long_mean == LongMeanMode::integrated) {
      const Eigen::VectorXd pseudo = learners::predict(mt_model, f.xs(arm[a], Eigen::all));
      const auto m_model = learners::fit(seeded(specs.long_outcome, seed, k, base + 4),
                                         f.x(arm[a], Eigen::all), pseudo, Task::regression);
      m_hat[a] = learners::predict(m_model, x_test);
    } else {
      m_hat[a] = fit_predict(specs.long_outcome, base + 4, f.x, arm_obs[a], f.y, Task::regression,
                             x_test);
    }
  }

  for (std::size_t t = 0; t < test.size(); ++t) {
    const auto i = static_cast<std::size_t>(test[t]);
    const auto ti = static_cast<Eigen::Index>(t);
    auto& row = out.rows[i];
    row.e = e_hat(ti);
    for (int a = 0; a < 2; ++a) {
      row.r[a] = r_hat[a](ti);
      row.mu[a] = mu_hat[a](ti);
      row.m[a] = m_hat[a](ti);
      row.mtilde[a] = mt_hat[a](ti);
    }
    out.fold[i] = static_cast<int>(k);
  }
}

void check_fold_support(const FeatureSet& f, std::size_t k, const Index& train) {
  std::array<std::size_t, 2> arm{0, 0}, arm_obs{0, 0};
  for (auto i : train) {
    const int a = static_cast<int>(f.a(i));
    ++arm[a];
    if (f.r(i) == 1.0) ++arm_obs[a];
  }
  for (int a = 0; a < 2; ++a) {
    const auto sa = std::to_string(a);
    if (arm[a] == 0) {
      throw DataError("fold " + std::to_string(k) + ": no training units with A=" + sa +
                      " for mu_" + sa + ", mtilde_" + sa + ", m_" + sa + ", r(" + sa + ",.)");
    }
    if (arm_obs[a] == 0) {
      throw DataError("fold " + std::to_string(k) + ": no training units with A=" + sa +
                      ", R=1 for mtilde_" + sa + ", m_" + sa);
    }
  }
}

}  // namespace

NuisanceEstimates fit_nuisances(const ObservationalDataset& dataset, const NuisanceSpecs& specs,
                                const CrossFitOptions& options) {
  const std::size_t n = dataset.size();
  if (options.folds < 2 || options.folds > n) {
    throw UsageError("fold count K=" + std::to_string(options.folds) + " must satisfy 2 <= K <= n=" +
                     std::to_string(n));
  }
  const auto folds = split_folds(n, options.folds, derive_seed(options.seed, {0xf01d}));
  const auto features = build_features(dataset, options.pooled_selection);

  std::vector<Index> train(folds.size()), test(folds.size());
  std::vector<int> fold_of(n);
  for (std::size_t k = 0; k < folds.size(); ++k)
    for (auto i : folds[k]) fold_of[i] = static_cast<int>(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < folds.size(); ++k) {
      (static_cast<std::size_t>(fold_of[i]) == k ? test[k] : train[k])
          .push_back(static_cast<Eigen::Index>(i));
    }
  }
  for (std::size_t k = 0; k < folds.size(); ++k) check_fold_support(features, k, train[k]);

  NuisanceEstimates out;
  out.rows.resize(n);
  out.fold.assign(n, -1);
  if (options.jobs <= 1) {
    for (std::size_t k = 0; k < folds.size(); ++k)
      fit_fold(features, specs, options, k, train[k], test[k], out);
  } else {
    // Folds write disjoint rows, so they can run concurrently.
    std::vector<std::future<void>> pending;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      pending.push_back(std::async(std::launch::async, [&, k] {
        fit_fold(features, specs, options, k, train[k], test[k], out);
      }));
      if (pending.size() >= options.jobs) {
        pending.front().get();
        pending.erase(pending.begin());
      }
    }
    for (auto& p : pending) p.get();
  }
  return out;
}

NuisanceEstimates oracle_nuisances(const ObservationalDataset& dataset, LongMeanMode long_mean) {
  if (!dataset.analytic_dgp) {
    throw UsageError("oracle nuisances need a dataset generated from an analytic DGP-A table");
  }
  const auto& table = *dataset.analytic_dgp;
  const auto exact = derive_nuisances(table);
  NuisanceEstimates out;
  out.rows.reserve(dataset.size());
  out.fold.assign(dataset.size(), -1);
  for (const auto& u : dataset.units) {
    const auto x = table.stratum_of(u.x);
    const int s = u.s == 1.0 ? 1 : 0;
    if (u.s != 0.0 && u.s != 1.0) throw DataError("DGP-A short-term outcomes must be binary");
    NuisanceRow row;
    row.e = exact.propensity[x];
    for (int a = 0; a < 2; ++a) {
      row.r[a] = exact.observe[x][a][s];
      row.mu[a] = exact.short_mean[x][a];
      row.mtilde[a] = exact.long_given_short[x][a][s];
      row.m[a] = long_mean == LongMeanMode::integrated ? exact.long_mean[x][a]
                                                       : exact.long_mean_observed[x][a];
    }
    out.rows.push_back(row);
  }
  return out;
}

NuisanceTarget nuisance_target_from_string(const std::string& name) {
  if (name == "e") return NuisanceTarget::propensity;
  if (name == "r") return NuisanceTarget::selection;
  if (name == "mu") return NuisanceTarget::short_mean;
  if (name == "m") return NuisanceTarget::long_mean;
  if (name == "mtilde") return NuisanceTarget::long_given_short;
  throw UsageError("unknown nuisance target '" + name + "' (expected e, r, mu, m, mtilde)");
}

CorruptionMode corruption_mode_from_string(const std::string& name) {
  if (name == "constant") return CorruptionMode::constant;
  if (name == "flip") return CorruptionMode::flip;
  if (name == "shift") return CorruptionMode::shift;
  throw UsageError("unknown corruption mode '" + name + "' (expected constant, flip, shift)");
}

NuisanceEstimates corrupt_nuisance(NuisanceEstimates nu, NuisanceTarget target, CorruptionMode mode,
                                   double value) {
  const bool probability =
      target == NuisanceTarget::propensity || target == NuisanceTarget::selection;
  if (probability && mode == CorruptionMode::constant && !(value > 0.0 && value < 1.0)) {
    throw UsageError("constant corruption of a probability needs a value in (0,1)");
  }
  auto apply = [&](double v) {
    switch (mode) {
      case CorruptionMode::constant: return value;
      case CorruptionMode::flip: return probability ? 1.0 - v : -v;
      case CorruptionMode::shift:
        return probability ? learners::sigmoid(std::log(v / (1.0 - v)) + value) : v + value;
    }
    return v;
  };
  for (auto& row : nu.rows) {
    switch (target) {
      case NuisanceTarget::propensity: row.e = apply(row.e); break;
      case NuisanceTarget::selection: for (auto& v : row.r) v = apply(v); break;
      case NuisanceTarget::short_mean: for (auto& v : row.mu) v = apply(v); break;
      case NuisanceTarget::long_mean: for (auto& v : row.m) v = apply(v); break;
      case NuisanceTarget::long_given_short: for (auto& v : row.mtilde) v = apply(v); break;
    }
  }
  return nu;
}

void save_nuisances_csv(const NuisanceEstimates& nu, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "fold,e,r0,r1,mu0,mu1,m0,m1,mt0,mt1\n";
  for (std::size_t i = 0; i < nu.rows.size(); ++i) {
    const auto& r = nu.rows[i];
    out << (i < nu.fold.size() ? nu.fold[i] : -1);
    for (double v : {r.e, r.r[0], r.r[1], r.mu[0], r.mu[1], r.m[0], r.m[1], r.mtilde[0], r.mtilde[1]})
      out << ',' << format_double(v);
    out << '\n';
  }
}

NuisanceEstimates load_nuisances_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const char* names[] = {"fold", "e", "r0", "r1", "mu0", "mu1", "m0", "m1", "mt0", "mt1"};
  std::size_t col[10];
  for (int c = 0; c < 10; ++c) {
    const auto found = csv::column(t, names[c]);
    if (!found) throw DataError(path.string() + ": missing column '" + names[c] + "'");
    col[c] = *found;
  }
  NuisanceEstimates nu;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    double v[10];
    for (int c = 0; c < 10; ++c) v[c] = csv::number(t, i, col[c], path);
    nu.fold.push_back(static_cast<int>(v[0]));
    nu.rows.push_back({v[1], {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}, {v[8], v[9]}});
  }
  return nu;
}

}  // namespace balpol
