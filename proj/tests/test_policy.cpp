#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "balpol/errors.hpp"
#include "balpol/policy.hpp"
#include "balpol/rng.hpp"
#include "balpol/simgen.hpp"

using namespace balpol;

namespace {

std::vector<double> decide(double ts, double ty, double lambda, double cost, Objective obj) {
  std::vector<double> s{ts}, y{ty};
  ObservationalDataset d;
  d.dim = 1;
  d.units.push_back({{0.0}, 0, 0.0, 0.0, 1});
  return optimal_plugin_policy(s, y, lambda, cost, obj).values(d);
}

ObservationalDataset line_dataset(std::size_t n) {
  ObservationalDataset d;
  d.dim = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -2.0 + 4.0 * double(i) / double(n - 1);
    d.units.push_back({{x}, int(i % 2), 0.0, 0.0, 1});
  }
  return d;
}

NuisanceEstimates constant_nuisances(std::size_t n, double mu0, double mu1) {
  NuisanceEstimates nu;
  for (std::size_t i = 0; i < n; ++i) {
    NuisanceRow r;
    r.e = 0.5;
    r.r = {0.9, 0.9};
    r.mu = {mu0, mu1};
    r.m = {mu0, mu1};
    r.mtilde = {mu0, mu1};
    nu.rows.push_back(r);
    nu.fold.push_back(-1);
  }
  return nu;
}

PotentialTruth random_truth(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PotentialTruth t;
  for (std::size_t i = 0; i < n; ++i)
    t.units.push_back({double(bernoulli(rng, 0.4)), double(bernoulli(rng, 0.6)), standard_normal(rng),
                       standard_normal(rng) + 0.3});
  return t;
}

}  // namespace

TEST(Plugin, AdditiveFormExamples) {
  EXPECT_EQ(decide(1.0, -0.4, 1.0, 0.0, Objective::additive)[0], 1.0);
  EXPECT_EQ(decide(-1.0, 0.4, 1.0, 0.0, Objective::additive)[0], 0.0);
}

TEST(Plugin, TieTreats) {
  EXPECT_EQ(decide(0.6, 123.0, 0.0, 0.6, Objective::convex)[0], 1.0);
  EXPECT_EQ(decide(0.6, -5.0, 0.0, 0.6, Objective::additive)[0], 1.0);
  EXPECT_EQ(decide(0.0, 0.0, 0.5, 0.0, Objective::convex)[0], 1.0);
}

TEST(Plugin, Errors) {
  std::vector<double> a{1, 2}, b{1};
  EXPECT_THROW((void)optimal_plugin_policy(a, b, 0.5), UsageError);
  EXPECT_THROW((void)optimal_plugin_policy(b, b, 1.5), UsageError);
  auto p = optimal_plugin_policy(a, a, 0.5);
  EXPECT_THROW((void)p.values(line_dataset(3)), DataError);
}

TEST(Plugin, ScalingInvariance) {
  Rng rng(5);
  std::vector<double> ts(200), ty(200);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ts[i] = standard_normal(rng);
    ty[i] = standard_normal(rng);
  }
  auto d = line_dataset(200);
  for (double lam : {0.0, 0.3, 1.0}) {
    auto base = optimal_plugin_policy(ts, ty, lam).values(d);
    for (double k : {0.01, 2.0, 1e3}) {
      std::vector<double> ks(ts), ky(ty);
      for (auto& v : ks) v *= k;
      for (auto& v : ky) v *= k;
      EXPECT_EQ(optimal_plugin_policy(ks, ky, lam).values(d), base);
    }
  }
}

TEST(Plugin, MonotoneInLambdaAcrossSwitchPoint) {
  // Additive form: tau_s < 0 < tau_y switches at lambda = -tau_s / tau_y.
  const std::vector<std::pair<double, double>> units{{-0.5, 1.0}, {-1.2, 0.4}, {-0.1, 2.0}};
  for (auto [ts, ty] : units) {
    const double switch_at = -ts / ty;
    double prev = 0.0;
    for (double lam = 0.0; lam <= 5.0; lam += 0.05) {
      const double d = decide(ts, ty, lam, 0.0, Objective::additive)[0];
      EXPECT_GE(d, prev);
      EXPECT_EQ(d, lam >= switch_at + 1e-12 ? 1.0 : (lam < switch_at - 1e-12 ? 0.0 : d));
      prev = d;
    }
  }
}

TEST(Dm, ConvexHalfWeights) {
  auto nu = constant_nuisances(1, 1.0, 2.0);
  nu.rows[0].m = {0.0, 0.0};
  auto p = dm_policy(nu, 0.5);
  EXPECT_EQ(p.tau_s[0], 1.0);
  EXPECT_EQ(p.tau_y[0], 0.0);
  ObservationalDataset one;
  one.dim = 1;
  one.units.push_back({{0.0}, 0, 0.0, 0.0, 1});
  EXPECT_EQ(p.values(one)[0], 1.0);
}

TEST(Dm, EqualArmsTreat) {
  auto nu = constant_nuisances(4, 0.7, 0.7);
  auto d = line_dataset(4);
  for (double v : dm_policy(nu, 0.5).values(d)) EXPECT_EQ(v, 1.0);
}

TEST(Dm, ShortTermRuleFollowsTrueEffectSign) {
  const auto table = DgpATable::mixed_effects();
  auto data = generate(DgpSpec::dgp_a(table, 2000, 3));
  auto nu = oracle_nuisances(data);
  auto decisions = dm_policy(nu, 0.0).values(data);
  const std::vector<double> any(table.strata(), 0.0);
  auto truth = enumerate_truth(table, any, 0.0);
  bool saw_zero = false, saw_one = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double ts = truth.tau_s[table.stratum_of(data.units[i].x)];
    EXPECT_EQ(decisions[i], ts >= 0.0 ? 1.0 : 0.0);
    (decisions[i] == 1.0 ? saw_one : saw_zero) = true;
  }
  EXPECT_TRUE(saw_zero && saw_one);
}

TEST(Learn, PositiveSlopesPushTowardTreatment) {
  auto d = line_dataset(200);
  auto nu = constant_nuisances(200, 0.0, 1.0);
  for (std::size_t i = 0; i < d.size(); ++i) nu.rows[i].mu[1] = 0.2 + 0.1 * std::abs(d.units[i].x[0]);
  auto p = learn_policy(d, nu, 0.0, Method::outcome_regression);
  EXPECT_EQ(p.variant, PolicyVariant::smooth);
  for (double v : p.values(d)) EXPECT_GT(v, 0.9);
}

TEST(Learn, NegativeSlopesPushTowardControl) {
  auto d = line_dataset(200);
  auto nu = constant_nuisances(200, 1.0, 0.0);
  auto p = learn_policy(d, nu, 1.0, Method::outcome_regression);
  for (double v : p.values(d)) EXPECT_LT(v, 0.1);
}

TEST(Learn, DeterministicAndSeedDependent) {
  auto d = line_dataset(50);
  auto nu = constant_nuisances(50, 0.0, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) nu.rows[i].mu[1] = d.units[i].x[0];
  LearnOptions opt;
  opt.iterations = 100;
  auto a = learn_policy(d, nu, 0.0, Method::outcome_regression, opt);
  auto b = learn_policy(d, nu, 0.0, Method::outcome_regression, opt);
  EXPECT_EQ(a.theta, b.theta);
  opt.seed = 1;
  auto c = learn_policy(d, nu, 0.0, Method::outcome_regression, opt);
  EXPECT_NE(a.theta, c.theta);
  // The rule treats x > 0.
  auto v = a.values(d);
  EXPECT_LT(v.front(), 0.5);
  EXPECT_GT(v.back(), 0.5);
}

TEST(Learn, NonFiniteSlopeNamesUnit) {
  auto d = line_dataset(10);
  auto nu = constant_nuisances(10, 0.0, 1.0);
  nu.rows[5].e = 1e-320;  // positive, but 1/e overflows
  try {
    (void)learn_policy(d, nu, 1.0, Method::proposed);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("unit 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("e="), std::string::npos) << msg;
  }
}

TEST(Learn, SlopesMatchEstimator) {
  auto data = generate(DgpSpec::dgp_a(DgpATable::canonical(), 500, 4));
  auto nu = oracle_nuisances(data);
  auto slopes = policy_slopes(data, nu, 0.3, Method::proposed, 0.05);
  Rng rng(2);
  std::vector<double> pi(data.size());
  for (auto& p : pi) p = uniform01(rng);
  PolicyEvalInput in{data, nu, pi, 0.05};
  EXPECT_NEAR(slopes.objective(pi), estimate_balanced(in, 0.3, Method::proposed).value, 1e-12);
}

TEST(Learn, OptionValidation) {
  LearnOptions opt;
  opt.step = 0.0;
  EXPECT_THROW(opt.validate(), UsageError);
  opt = {};
  opt.iterations = 0;
  EXPECT_THROW(opt.validate(), UsageError);
}

TEST(Smooth, OutputsInOpenInterval) {
  Policy p;
  p.variant = PolicyVariant::smooth;
  p.theta = {0.5, -3.0};
  std::vector<double> x{1.0};
  EXPECT_NEAR(p.probability(x), 1.0 / (1.0 + std::exp(2.5)), 1e-15);
  auto d = line_dataset(20);
  for (double v : p.values(d)) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : p.decisions(d)) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Evaluate, NoTreatment) {
  auto t = random_truth(30, 1);
  std::vector<double> zero(30, 0.0);
  auto m = evaluate_decisions(zero, t, 0.5, 0.2);
  double s0 = 0;
  for (auto& u : t.units) s0 += u.s0;
  EXPECT_NEAR(m.reward_short, s0, 1e-12);
  EXPECT_EQ(m.dW_short, 0.0);
  EXPECT_EQ(m.dW_long, 0.0);
}

TEST(Evaluate, FullTreatment) {
  auto t = random_truth(30, 2);
  std::vector<double> one(30, 1.0);
  auto m = evaluate_decisions(one, t, 0.5);
  double dw = 0, s1 = 0, y1 = 0;
  for (auto& u : t.units) {
    dw += u.s1 - u.s0;
    s1 += u.s1;
    y1 += u.y1;
  }
  EXPECT_NEAR(m.dW_short, dw, 1e-12);
  EXPECT_NEAR(m.reward_short, s1, 1e-12);
  EXPECT_NEAR(m.reward_balanced, 0.5 * s1 + 0.5 * y1, 1e-12);
}

TEST(Evaluate, OptimalRuleHasZeroError) {
  auto t = random_truth(100, 3);
  for (double lam : {0.0, 0.5, 1.0}) {
    for (double c : {0.0, 0.3}) {
      std::vector<double> ts, ty;
      for (auto& u : t.units) {
        ts.push_back(u.s1 - u.s0);
        ty.push_back(u.y1 - u.y0);
      }
      ObservationalDataset d = line_dataset(100);
      auto opt = optimal_plugin_policy(ts, ty, lam, c).values(d);
      auto m = evaluate_decisions(opt, t, lam, c);
      EXPECT_EQ(m.policy_error, 0.0);
      EXPECT_GE(m.reward_balanced, evaluate_decisions(std::vector<double>(100, 1.0), t, lam, c).reward_balanced - 1e-9);
    }
  }
}

TEST(Evaluate, ErrorIsMeanSquaredDifference) {
  PotentialTruth t{{{0, 1, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}}};
  std::vector<double> d{0.0, 0.0, 1.0, 1.0};
  auto m = evaluate_decisions(d, t, 0.0);
  // optimal at lambda 0: {1, 0, 1, 1 (tie)}
  EXPECT_DOUBLE_EQ(m.policy_error, 0.25);
  EXPECT_DOUBLE_EQ(m.policy_error_short, 0.25);
}

TEST(Evaluate, ShortOnlyMetricsIgnoreLongTruth) {
  auto t = random_truth(60, 4);
  Rng rng(9);
  std::vector<double> pi(60);
  for (auto& p : pi) p = double(bernoulli(rng, 0.5));
  auto base = evaluate_decisions(pi, t, 0.0, 0.1);
  auto shuffled = t;
  std::vector<std::pair<double, double>> ys;
  for (auto& u : shuffled.units) ys.push_back({u.y0, u.y1});
  std::reverse(ys.begin(), ys.end());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    shuffled.units[i].y0 = ys[i].second;
    shuffled.units[i].y1 = ys[i].first;
  }
  auto other = evaluate_decisions(pi, shuffled, 0.0, 0.1);
  EXPECT_EQ(base.reward_balanced, other.reward_balanced);
  EXPECT_EQ(base.reward_short, other.reward_short);
  EXPECT_EQ(base.dW_balanced, other.dW_balanced);
  EXPECT_EQ(base.policy_error, other.policy_error);
}

TEST(Evaluate, SmoothPoliciesAreHardened) {
  auto data = generate(DgpSpec::dgp_a(DgpATable::canonical(), 100, 5));
  Policy p;
  p.variant = PolicyVariant::smooth;
  p.theta = {-0.1, 0.3};
  auto via_policy = evaluate_policy(p, data, 0.5);
  auto via_decisions = evaluate_decisions(p.decisions(data), *data.truth, 0.5);
  EXPECT_EQ(via_policy.reward_balanced, via_decisions.reward_balanced);
  data.truth.reset();
  EXPECT_THROW((void)evaluate_policy(p, data, 0.5), DataError);
}

TEST(Json, RoundTrip) {
  Policy p;
  p.variant = PolicyVariant::smooth;
  p.lambda = 0.25;
  p.cost = 0.1;
  p.objective = Objective::additive;
  p.theta = {0.1, -0.2, 1.0 / 3.0};
  auto back = policy_from_json(policy_to_json(p));
  EXPECT_EQ(back.variant, p.variant);
  EXPECT_EQ(back.theta, p.theta);
  EXPECT_EQ(back.lambda, p.lambda);
  EXPECT_EQ(back.cost, p.cost);
  EXPECT_EQ(back.objective, p.objective);
  std::vector<double> ts{0.1, -1}, ty{2, 3};
  auto q = policy_from_json(policy_to_json(optimal_plugin_policy(ts, ty, 0.5)));
  EXPECT_EQ(q.tau_s, ts);
  EXPECT_EQ(q.tau_y, ty);
  EXPECT_THROW((void)policy_from_json("{\"variant\": 3}"), DataError);
  EXPECT_THROW((void)policy_from_json("not json"), DataError);
}
