#include <cmath>

#include <gtest/gtest.h>

#include "balpol/errors.hpp"
#include "balpol/learners.hpp"
#include "balpol/rng.hpp"

using namespace balpol;
using namespace balpol::learners;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 2.0 * uniform01(rng) - 1.0;
  return m;
}

// Reference solver for the clipped 1-D logistic problem without standardization:
// projected gradient descent on (w, b) until the projected gradient vanishes.
double reference_logistic_probability(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                      double max_weight, double at) {
  double w = 0.0, b = 0.0;
  for (int it = 0; it < 2000000; ++it) {
    double gw = 0.0, gb = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-(w * x(i) + b)));
      gw += (p - y(i)) * x(i);
      gb += p - y(i);
    }
    gw /= double(x.size());
    gb /= double(x.size());
    const double nw = std::clamp(w - 0.5 * gw, -max_weight, max_weight);
    const double nb = b - 0.5 * gb;
    const double pg = std::hypot(nw - w, nb - b);
    w = nw;
    b = nb;
    if (pg < 1e-8) break;
  }
  return 1.0 / (1.0 + std::exp(-(w * at + b)));
}

}  // namespace

TEST(Ridge, RecoversExactLinearModel) {
  Rng rng(3);
  Eigen::MatrixXd x = random_matrix(50, 2, rng);
  Eigen::VectorXd y = 2.0 * x.col(0) - x.col(1);
  y.array() += 0.5;
  auto model = fit(LearnerSpec::ridge(0.0), x, y, Task::regression);
  Eigen::MatrixXd probe(3, 2);
  probe << 0, 0, 1, 0, 0, 1;
  auto p = predict(model, probe);
  EXPECT_NEAR(p(0), 0.5, 1e-6);
  EXPECT_NEAR(p(1) - p(0), 2.0, 1e-6);
  EXPECT_NEAR(p(2) - p(0), -1.0, 1e-6);
}

TEST(Ridge, RecoversWithoutStandardization) {
  Rng rng(4);
  Eigen::MatrixXd x = random_matrix(30, 3, rng) * 10.0;
  Eigen::VectorXd y = 0.3 * x.col(0) + 4.0 * x.col(1) - 2.0 * x.col(2);
  y.array() -= 7.0;
  auto spec = LearnerSpec::ridge(0.0);
  spec.standardize = false;
  auto model = fit(spec, x, y, Task::regression);
  EXPECT_NEAR(model.weights(0), 0.3, 1e-6);
  EXPECT_NEAR(model.weights(1), 4.0, 1e-6);
  EXPECT_NEAR(model.weights(2), -2.0, 1e-6);
  EXPECT_NEAR(model.intercept, -7.0, 1e-6);
}

TEST(Ridge, PredictArithmetic) {
  FittedModel m;
  m.kind = Kind::ridge;
  m.task = Task::regression;
  m.feature_mean = Eigen::VectorXd::Zero(2);
  m.feature_scale = Eigen::VectorXd::Ones(2);
  m.weights = Eigen::Vector2d(2.0, -1.0);
  m.intercept = 0.5;
  Eigen::MatrixXd x(1, 2);
  x << 1, 1;
  EXPECT_DOUBLE_EQ(predict(m, x)(0), 1.5);
}

TEST(Logistic, ZeroParametersGiveHalf) {
  FittedModel m;
  m.kind = Kind::logistic;
  m.task = Task::probability;
  m.feature_mean = Eigen::VectorXd::Zero(3);
  m.feature_scale = Eigen::VectorXd::Ones(3);
  m.weights = Eigen::VectorXd::Zero(3);
  Rng rng(1);
  auto p = predict(m, random_matrix(5, 3, rng) * 100.0);
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(p(i), 0.5);
}

TEST(Logistic, ClipsSaturatedProbabilities) {
  FittedModel m;
  m.kind = Kind::logistic;
  m.task = Task::probability;
  m.clip = 1e-3;
  m.feature_mean = Eigen::VectorXd::Zero(1);
  m.feature_scale = Eigen::VectorXd::Ones(1);
  m.weights = Eigen::VectorXd::Constant(1, 1000.0);
  Eigen::MatrixXd x(2, 1);
  x << 1, -1;
  auto p = predict(m, x);
  EXPECT_DOUBLE_EQ(p(0), 1.0 - 1e-3);
  EXPECT_DOUBLE_EQ(p(1), 1e-3);
}

TEST(Logistic, SeparableDataWithWeightClipping) {
  Eigen::VectorXd xs(6);
  xs << -1.0, -0.6, -0.2, 0.2, 0.6, 1.0;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  auto spec = LearnerSpec::logistic(0.0);
  spec.standardize = false;
  spec.max_weight = 5.0;
  spec.iterations = 20000;
  auto model = fit(spec, xs, y, Task::probability);
  Eigen::MatrixXd at(1, 1);
  at << 1.0;
  const double p = predict(model, at)(0);
  const double ref = reference_logistic_probability(xs, y, 5.0, 1.0);
  EXPECT_GE(p, 0.9);
  EXPECT_NEAR(p, ref, 1e-4);
}

TEST(Logistic, RejectsNonBinaryTargets) {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  Eigen::VectorXd y(2);
  y << 0, 0.5;
  EXPECT_THROW((void)fit(LearnerSpec::logistic(), x, y, Task::probability), DataError);
}

TEST(Fit, InputErrors) {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 2;
  Eigen::VectorXd y(2);
  y << 0, 1;
  EXPECT_THROW((void)fit(LearnerSpec::ridge(), x, y, Task::regression), DataError);
  Eigen::VectorXd y3(3);
  y3 << 0, NAN, 1;
  EXPECT_THROW((void)fit(LearnerSpec::ridge(), x, y3, Task::regression), DataError);
  auto model = fit(LearnerSpec::ridge(), x, Eigen::Vector3d(0, 1, 2), Task::regression);
  EXPECT_THROW((void)predict(model, Eigen::MatrixXd::Zero(1, 2)), DataError);
}

TEST(Spec, Validation) {
  auto s = LearnerSpec::mlp(4);
  s.hidden = 0;
  EXPECT_THROW(s.validate(), UsageError);
  s = LearnerSpec::logistic();
  s.step = 0.0;
  EXPECT_THROW(s.validate(), UsageError);
  s = LearnerSpec::logistic();
  s.iterations = 0;
  EXPECT_THROW(s.validate(), UsageError);
}

TEST(Mlp, LearnsXorForSomeSeed) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  Eigen::VectorXd y(4);
  y << 0, 1, 1, 0;
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = LearnerSpec::mlp(4);
    spec.seed = seed;
    spec.iterations = 3000;
    spec.step = 0.05;
    auto p = predict(fit(spec, x, y, Task::probability), x);
    int correct = 0;
    for (int i = 0; i < 4; ++i) correct += ((p(i) >= 0.5) == (y(i) == 1.0));
    if (correct == 4) ++solved;
  }
  EXPECT_GE(solved, 1);
}

TEST(Mlp, DeterministicGivenSeed) {
  Rng rng(8);
  Eigen::MatrixXd x = random_matrix(40, 3, rng);
  Eigen::VectorXd y = x.col(0).array().sin();
  auto spec = LearnerSpec::mlp(5);
  spec.seed = 11;
  auto a = predict(fit(spec, x, y, Task::regression), x);
  auto b = predict(fit(spec, x, y, Task::regression), x);
  EXPECT_EQ(a, b);
}

TEST(Gradients, LogisticMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x = random_matrix(12, 3, rng);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) y(i) = bernoulli(rng, 0.5);
    Eigen::VectorXd params = random_matrix(4, 1, rng);
    Eigen::VectorXd grad;
    detail::logistic_objective(params, x, y, 0.3, &grad);
    for (Eigen::Index k = 0; k < params.size(); ++k) {
      const double h = 1e-6;
      Eigen::VectorXd p1 = params, p0 = params;
      p1(k) += h;
      p0(k) -= h;
      const double fd = (detail::logistic_objective(p1, x, y, 0.3, nullptr) -
                         detail::logistic_objective(p0, x, y, 0.3, nullptr)) / (2 * h);
      EXPECT_NEAR(grad(k), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Gradients, MlpMatchesFiniteDifferences) {
  Rng rng(22);
  const std::size_t hidden = 3;
  for (Task task : {Task::regression, Task::probability}) {
    Eigen::MatrixXd x = random_matrix(10, 2, rng);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) y(i) = task == Task::probability ? bernoulli(rng, 0.5) : uniform01(rng);
    const Eigen::Index np = hidden * 2 + hidden + hidden + 1;
    Eigen::VectorXd params = random_matrix(np, 1, rng);
    Eigen::VectorXd grad;
    detail::mlp_objective(params, hidden, x, y, 0.1, task, &grad);
    for (Eigen::Index k = 0; k < np; ++k) {
      const double h = 1e-6;
      Eigen::VectorXd p1 = params, p0 = params;
      p1(k) += h;
      p0(k) -= h;
      const double fd = (detail::mlp_objective(p1, hidden, x, y, 0.1, task, nullptr) -
                         detail::mlp_objective(p0, hidden, x, y, 0.1, task, nullptr)) / (2 * h);
      EXPECT_NEAR(grad(k), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}
