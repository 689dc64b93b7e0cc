#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace balpol::learners {

enum class Kind { ridge, logistic, mlp };
enum class Task { regression, probability };

[[nodiscard]] std::string to_string(Kind kind);
[[nodiscard]] Kind kind_from_string(const std::string& name);

/// Hyperparameters of one nuisance learner.
///
/// `l2` is the Tikhonov weight. Ridge minimizes ||Xw + b - y||^2 + l2 ||w||^2
/// (sum of squares); logistic and mlp minimize the mean loss plus
/// (l2 / 2) ||weights||^2. Intercepts are never penalized.
struct LearnerSpec {
  Kind kind = Kind::ridge;
  double l2 = 0.0;
  std::size_t hidden = 8;
  double step = 1.0;
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
  bool standardize = true;
  double clip = 1e-3;
  /// Logistic only: coefficients are clipped to [-max_weight, max_weight]
  /// after every step.
  double max_weight = std::numeric_limits<double>::infinity();

  static LearnerSpec ridge(double l2 = 0.0);
  static LearnerSpec logistic(double l2 = 0.0);
  static LearnerSpec mlp(std::size_t hidden = 8);

  /// Throws UsageError.
  void validate() const;
};

struct FittedModel {
  Kind kind = Kind::ridge;
  Task task = Task::regression;
  double clip = 1e-3;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  double target_mean = 0.0;
  double target_scale = 1.0;

  // ridge / logistic: linear score on standardized features
  Eigen::VectorXd weights;
  double intercept = 0.0;

  // mlp: tanh hidden layer, linear or sigmoid output
  Eigen::MatrixXd hidden_weights;  // hidden x p
  Eigen::VectorXd hidden_bias;
  Eigen::VectorXd output_weights;
  double output_bias = 0.0;

  [[nodiscard]] Eigen::Index input_dim() const { return feature_mean.size(); }
};

/// Throws DataError on dimension mismatch, non-finite inputs or non-binary
/// targets for a probability task.
[[nodiscard]] FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& features,
                              const Eigen::VectorXd& targets, Task task);

/// Probability outputs are clipped into [clip, 1 - clip].
[[nodiscard]] Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& features);

[[nodiscard]] inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

namespace detail {

/// Mean cross-entropy of sigmoid(Xw + b) plus (l2/2)||w||^2.
/// params = [w_1..w_p, b]; writes the gradient when `grad` is non-null.
double logistic_objective(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& y, double l2, Eigen::VectorXd* grad);

/// Mean loss of a tanh network with `hidden` units: squared error / 2 for
/// regression, cross-entropy through a sigmoid output for probability.
/// params = [W (hidden x p, row-major), b_hidden, v, c].
double mlp_objective(const Eigen::VectorXd& params, std::size_t hidden, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, double l2, Task task, Eigen::VectorXd* grad);

}  // namespace detail

}  // namespace balpol::learners
