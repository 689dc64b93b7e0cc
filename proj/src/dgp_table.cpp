#include "balpol/dgp_table.hpp"

#include <cmath>
#include <string>

#include "balpol/errors.hpp"

namespace balpol {

namespace {

void check_open_unit(double p, const std::string& what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw UsageError("invalid DGP-A table: " + what + " = " + std::to_string(p) +
                     " is not in (0,1)");
  }
}

}  // namespace

DgpATable DgpATable::canonical() {
  DgpATable t;
  t.dim = 1;
  t.p_x = {0.5, 0.5};
  for (int x = 0; x < 2; ++x) {
    t.propensity.push_back(0.3 + 0.4 * x);
    t.p_short.push_back({0.2 + 0.2 * x, 0.5 + 0.2 * x});
    t.p_observe.push_back({ArmPair{0.6, 0.8}, ArmPair{0.6, 0.8}});
    t.p_long.push_back({ArmPair{0.1, 0.5}, ArmPair{0.3, 0.7}});
  }
  return t;
}

DgpATable DgpATable::mixed_effects() {
  DgpATable t;
  t.dim = 3;
  const double bit_p[3] = {0.5, 0.4, 0.6};
  for (std::size_t code = 0; code < t.strata(); ++code) {
    const auto x = t.covariates_of(code);
    double px = 1.0;
    for (int j = 0; j < 3; ++j) px *= x[j] == 1.0 ? bit_p[j] : 1.0 - bit_p[j];
    t.p_x.push_back(px);
    t.propensity.push_back(0.4 + 0.2 * x[0] + 0.2 * x[1] - 0.1 * x[2]);

    const double tau_s = 0.3 - 0.55 * x[0] - 0.15 * x[1] + 0.1 * x[2];
    const double combo = 0.08 - 0.4 * x[0] - 0.16 * x[1] + 0.24 * x[2];
    const double tau_y = 2.0 * combo - tau_s;
    // P(Y(a)=1 | x, s) = q_a(x) + 0.3 s, so tau_y = q_1 - q_0 + 0.3 tau_s.
    const double h = tau_y - 0.3 * tau_s;
    const double q0 = 0.35 - h / 2.0;
    const double q1 = 0.35 + h / 2.0;
    t.p_short.push_back({0.45, 0.45 + tau_s});
    t.p_observe.push_back({ArmPair{0.5, 0.8}, ArmPair{0.6, 0.9}});
    t.p_long.push_back({ArmPair{q0, q0 + 0.3}, ArmPair{q1, q1 + 0.3}});
  }
  return t;
}

void DgpATable::validate() const {
  if (dim == 0 || dim > 16) throw UsageError("invalid DGP-A table: dim must be in [1,16]");
  const std::size_t k = strata();
  if (p_x.size() != k || propensity.size() != k || p_short.size() != k ||
      p_observe.size() != k || p_long.size() != k) {
    throw UsageError("invalid DGP-A table: every per-stratum array needs 2^dim entries");
  }
  double total = 0.0;
  for (std::size_t x = 0; x < k; ++x) {
    const auto sx = std::to_string(x);
    check_open_unit(p_x[x], "P(X=" + sx + ")");
    total += p_x[x];
    check_open_unit(propensity[x], "e(" + sx + ")");
    for (int a = 0; a < 2; ++a) {
      const auto sa = std::to_string(a);
      check_open_unit(p_short[x][a], "P(S=1|x=" + sx + ",a=" + sa + ")");
      for (int s = 0; s < 2; ++s) {
        const auto ss = std::to_string(s);
        check_open_unit(p_observe[x][a][s], "r(" + sa + "," + sx + "," + ss + ")");
        check_open_unit(p_long[x][a][s], "P(Y=1|x=" + sx + ",s=" + ss + ",a=" + sa + ")");
      }
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("invalid DGP-A table: P(X) does not sum to 1");
}

std::vector<double> DgpATable::covariates_of(std::size_t stratum) const {
  std::vector<double> x(dim);
  for (std::size_t j = 0; j < dim; ++j) x[j] = static_cast<double>((stratum >> j) & 1U);
  return x;
}

std::size_t DgpATable::stratum_of(std::span<const double> x) const {
  if (x.size() != dim) throw DataError("covariate length does not match DGP-A dimension");
  std::size_t code = 0;
  for (std::size_t j = 0; j < dim; ++j) {
    if (x[j] == 1.0) {
      code |= std::size_t{1} << j;
    } else if (x[j] != 0.0) {
      throw DataError("DGP-A covariates must be binary");
    }
  }
  return code;
}

DgpANuisances derive_nuisances(const DgpATable& table) {
  table.validate();
  const std::size_t k = table.strata();
  DgpANuisances nu;
  nu.propensity.resize(k);
  nu.short_mean.resize(k);
  nu.observe.resize(k);
  nu.long_given_short.resize(k);
  nu.long_mean.resize(k);
  nu.long_mean_observed.resize(k);

  for (std::size_t x = 0; x < k; ++x) {
    // joint[a][s][r][y] = P(A=a, S=s, R=r, Y=y | X=x)
    double joint[2][2][2][2];
    for (int a = 0; a < 2; ++a) {
      const double pa = a == 1 ? table.propensity[x] : 1.0 - table.propensity[x];
      for (int s = 0; s < 2; ++s) {
        const double ps = s == 1 ? table.p_short[x][a] : 1.0 - table.p_short[x][a];
        for (int r = 0; r < 2; ++r) {
          const double pr = r == 1 ? table.p_observe[x][a][s] : 1.0 - table.p_observe[x][a][s];
          for (int y = 0; y < 2; ++y) {
            const double py = y == 1 ? table.p_long[x][a][s] : 1.0 - table.p_long[x][a][s];
            joint[a][s][r][y] = pa * ps * pr * py;
          }
        }
      }
    }
    auto sum = [&](auto&& pred) {
      double acc = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int s = 0; s < 2; ++s)
          for (int r = 0; r < 2; ++r)
            for (int y = 0; y < 2; ++y)
              if (pred(a, s, r, y)) acc += joint[a][s][r][y];
      return acc;
    };

    nu.propensity[x] = sum([](int a, int, int, int) { return a == 1; });
    for (int a = 0; a < 2; ++a) {
      const double p_arm = sum([a](int aa, int, int, int) { return aa == a; });
      const double p_arm_s1 = sum([a](int aa, int s, int, int) { return aa == a && s == 1; });
      nu.short_mean[x][a] = p_arm_s1 / p_arm;

      double integrated = 0.0;
      for (int s = 0; s < 2; ++s) {
        const double p_as = sum([a, s](int aa, int ss, int, int) { return aa == a && ss == s; });
        const double p_as_obs =
            sum([a, s](int aa, int ss, int r, int) { return aa == a && ss == s && r == 1; });
        const double p_as_obs_y1 = sum([a, s](int aa, int ss, int r, int y) {
          return aa == a && ss == s && r == 1 && y == 1;
        });
        nu.observe[x][a][s] = p_as_obs / p_as;
        nu.long_given_short[x][a][s] = p_as_obs_y1 / p_as_obs;
        integrated += (p_as / p_arm) * nu.long_given_short[x][a][s];
      }
      nu.long_mean[x][a] = integrated;
      const double p_a_obs = sum([a](int aa, int, int r, int) { return aa == a && r == 1; });
      const double p_a_obs_y1 =
          sum([a](int aa, int, int r, int y) { return aa == a && r == 1 && y == 1; });
      nu.long_mean_observed[x][a] = p_a_obs_y1 / p_a_obs;
    }
  }
  return nu;
}

}  // namespace balpol
