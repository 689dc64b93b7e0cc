#include "balpol/learners.hpp"

#include <algorithm>
#include <cmath>

#include "balpol/errors.hpp"
#include "balpol/rng.hpp"

namespace balpol::learners {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::ridge: return "ridge";
    case Kind::logistic: return "logistic";
    case Kind::mlp: return "mlp";
  }
  return "?";
}

Kind kind_from_string(const std::string& name) {
  if (name == "ridge") return Kind::ridge;
  if (name == "logistic") return Kind::logistic;
  if (name == "mlp") return Kind::mlp;
  throw UsageError("unknown learner kind '" + name + "'");
}

LearnerSpec LearnerSpec::ridge(double l2) {
  LearnerSpec s;
  s.kind = Kind::ridge;
  s.l2 = l2;
  return s;
}

LearnerSpec LearnerSpec::logistic(double l2) {
  LearnerSpec s;
  s.kind = Kind::logistic;
  s.l2 = l2;
  s.step = 1.0;
  s.iterations = 300;
  return s;
}

LearnerSpec LearnerSpec::mlp(std::size_t hidden) {
  LearnerSpec s;
  s.kind = Kind::mlp;
  s.hidden = hidden;
  s.step = 0.01;
  s.iterations = 500;
  return s;
}

void LearnerSpec::validate() const {
  if (!(step > 0.0)) throw UsageError("learner step size must be > 0");
  if (iterations < 1) throw UsageError("learner iterations must be >= 1");
  if (kind == Kind::mlp && hidden < 1) throw UsageError("mlp hidden width must be >= 1");
  if (!(l2 >= 0.0)) throw UsageError("learner regularization must be >= 0");
  if (!(clip > 0.0 && clip < 0.5)) throw UsageError("probability clip must lie in (0, 0.5)");
  if (!(max_weight > 0.0)) throw UsageError("max_weight must be > 0");
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Eigen::MatrixXd standardized(const FittedModel& m, const Eigen::MatrixXd& x) {
  return (x.rowwise() - m.feature_mean.transpose()).array().rowwise() /
         m.feature_scale.transpose().array();
}

FittedModel fit_ridge(const LearnerSpec& spec, FittedModel model, const Eigen::MatrixXd& z,
                      const Eigen::VectorXd& y) {
  // Centering removes the unpenalized intercept from the normal equations.
  const Eigen::VectorXd col_mean = z.colwise().mean();
  const Eigen::MatrixXd zc = z.rowwise() - col_mean.transpose();
  const double y_mean = y.mean();
  Eigen::MatrixXd gram = zc.transpose() * zc;
  gram.diagonal().array() += spec.l2;
  const Eigen::VectorXd rhs = zc.transpose() * (y.array() - y_mean).matrix();
  Eigen::VectorXd w = gram.ldlt().solve(rhs);
  if (!w.allFinite() || (gram * w - rhs).norm() > 1e-6 * (1.0 + rhs.norm())) {
    // Rank deficient without regularization: fall back to the minimum-norm solution.
    w = zc.completeOrthogonalDecomposition().solve((y.array() - y_mean).matrix());
  }
  model.weights = w;
  model.intercept = y_mean - col_mean.dot(w);
  return model;
}

FittedModel fit_logistic(const LearnerSpec& spec, FittedModel model, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& y) {
  const Eigen::Index p = z.cols();
  Eigen::VectorXd params = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd grad(p + 1);
  for (std::size_t it = 0; it < spec.iterations; ++it) {
    detail::logistic_objective(params, z, y, spec.l2, &grad);
    params -= spec.step * grad;
    if (std::isfinite(spec.max_weight)) {
      params.head(p) = params.head(p).cwiseMax(-spec.max_weight).cwiseMin(spec.max_weight);
    }
  }
  if (!params.allFinite()) throw NumericalError("logistic regression diverged");
  model.weights = params.head(p);
  model.intercept = params(p);
  return model;
}

FittedModel fit_mlp(const LearnerSpec& spec, FittedModel model, const Eigen::MatrixXd& z,
                    const Eigen::VectorXd& y, Task task) {
  const auto p = static_cast<std::size_t>(z.cols());
  const std::size_t h = spec.hidden;
  const std::size_t n_params = h * p + h + h + 1;
  Rng rng(spec.seed);
  Eigen::VectorXd params(static_cast<Eigen::Index>(n_params));
  const double in_bound = std::sqrt(6.0 / static_cast<double>(p + h));
  const double out_bound = std::sqrt(6.0 / static_cast<double>(h + 1));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < h * p; ++i) params(k++) = (2.0 * uniform01(rng) - 1.0) * in_bound;
  for (std::size_t i = 0; i < h; ++i) params(k++) = (2.0 * uniform01(rng) - 1.0) * 0.1;
  for (std::size_t i = 0; i < h; ++i) params(k++) = (2.0 * uniform01(rng) - 1.0) * out_bound;
  params(k++) = 0.0;

  // Full-batch adaptive-moment descent.
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad(params.size());
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t it = 0; it < spec.iterations; ++it) {
    detail::mlp_objective(params, h, z, y, spec.l2, task, &grad);
    m1 = beta1 * m1 + (1.0 - beta1) * grad;
    m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
    b1t *= beta1;
    b2t *= beta2;
    params.array() -= spec.step * (m1.array() / (1.0 - b1t)) /
                      ((m2.array() / (1.0 - b2t)).sqrt() + eps);
  }
  if (!params.allFinite()) throw NumericalError("mlp training diverged");

  const auto hp = static_cast<Eigen::Index>(h * p);
  const auto hi = static_cast<Eigen::Index>(h);
  model.hidden_weights =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          params.data(), hi, static_cast<Eigen::Index>(p));
  model.hidden_bias = params.segment(hp, hi);
  model.output_weights = params.segment(hp + hi, hi);
  model.output_bias = params(hp + 2 * hi);
  return model;
}

}  // namespace

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& features,
                const Eigen::VectorXd& targets, Task task) {
  spec.validate();
  if (features.rows() != targets.size()) {
    throw DataError("feature rows (" + std::to_string(features.rows()) + ") != target length (" +
                    std::to_string(targets.size()) + ")");
  }
  if (features.rows() < 1) throw DataError("cannot fit a learner on zero rows");
  if (!features.allFinite() || !targets.allFinite()) throw DataError("non-finite learner input");
  if (task == Task::probability) {
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      if (targets(i) != 0.0 && targets(i) != 1.0) {
        throw DataError("probability targets must be 0 or 1");
      }
    }
  }

  FittedModel model;
  model.kind = spec.kind;
  model.task = task;
  model.clip = spec.clip;
  const Eigen::Index p = features.cols();
  model.feature_mean = Eigen::VectorXd::Zero(p);
  model.feature_scale = Eigen::VectorXd::Ones(p);
  if (spec.standardize) {
    model.feature_mean = features.colwise().mean();
    for (Eigen::Index j = 0; j < p; ++j) {
      const double var =
          (features.col(j).array() - model.feature_mean(j)).square().sum() /
          static_cast<double>(features.rows());
      model.feature_scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }
  const Eigen::MatrixXd z = standardized(model, features);

  switch (spec.kind) {
    case Kind::ridge:
      return fit_ridge(spec, model, z, targets);
    case Kind::logistic:
      if (task != Task::probability) throw UsageError("logistic learner requires a probability task");
      return fit_logistic(spec, model, z, targets);
    case Kind::mlp: {
      Eigen::VectorXd y = targets;
      if (task == Task::regression && spec.standardize) {
        model.target_mean = targets.mean();
        const double var = (targets.array() - model.target_mean).square().mean();
        model.target_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
        y = (targets.array() - model.target_mean) / model.target_scale;
      }
      return fit_mlp(spec, model, z, y, task);
    }
  }
  throw UsageError("unknown learner kind");
}

Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.input_dim()) {
    throw DataError("predict: feature dimension " + std::to_string(features.cols()) +
                    " != trained dimension " + std::to_string(model.input_dim()));
  }
  const Eigen::MatrixXd z = standardized(model, features);
  Eigen::VectorXd score;
  if (model.kind == Kind::mlp) {
    const Eigen::MatrixXd act =
        ((z * model.hidden_weights.transpose()).rowwise() + model.hidden_bias.transpose())
            .array()
            .tanh()
            .matrix();
    score = (act * model.output_weights).array() + model.output_bias;
    if (model.task == Task::regression) {
      score = score.array() * model.target_scale + model.target_mean;
    }
  } else {
    score = (z * model.weights).array() + model.intercept;
  }
  if (model.task == Task::probability) {
    const bool linear_probability = model.kind == Kind::ridge;
    for (Eigen::Index i = 0; i < score.size(); ++i) {
      const double p = linear_probability ? score(i) : sigmoid(score(i));
      score(i) = std::clamp(p, model.clip, 1.0 - model.clip);
    }
  }
  if (!score.allFinite()) throw NumericalError("predict produced non-finite output");
  return score;
}

namespace detail {

double logistic_objective(const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                          const Eigen::VectorXd& y, double l2, Eigen::VectorXd* grad) {
  const Eigen::Index p = x.cols();
  const auto n = static_cast<double>(x.rows());
  const Eigen::VectorXd w = params.head(p);
  const Eigen::VectorXd logits = (x * w).array() + params(p);
  double loss = 0.0;
  Eigen::VectorXd resid(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    loss += softplus(logits(i)) - y(i) * logits(i);
    resid(i) = sigmoid(logits(i)) - y(i);
  }
  loss = loss / n + 0.5 * l2 * w.squaredNorm();
  if (grad) {
    grad->resize(p + 1);
    grad->head(p) = x.transpose() * resid / n + l2 * w;
    (*grad)(p) = resid.sum() / n;
  }
  return loss;
}

double mlp_objective(const Eigen::VectorXd& params, std::size_t hidden, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, double l2, Task task, Eigen::VectorXd* grad) {
  const Eigen::Index p = x.cols();
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto n = static_cast<double>(x.rows());
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> w_in(params.data(), h, p);
  const auto b_in = params.segment(h * p, h);
  const auto v = params.segment(h * p + h, h);
  const double c = params(h * p + 2 * h);

  const Eigen::MatrixXd act =
      ((x * w_in.transpose()).rowwise() + b_in.transpose()).array().tanh().matrix();
  const Eigen::VectorXd out = (act * v).array() + c;

  double loss = 0.0;
  Eigen::VectorXd d_out(out.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (task == Task::regression) {
      const double r = out(i) - y(i);
      loss += 0.5 * r * r;
      d_out(i) = r / n;
    } else {
      loss += softplus(out(i)) - y(i) * out(i);
      d_out(i) = (sigmoid(out(i)) - y(i)) / n;
    }
  }
  loss = loss / n + 0.5 * l2 * (w_in.squaredNorm() + v.squaredNorm());

  if (grad) {
    grad->resize(params.size());
    const Eigen::MatrixXd d_act =
        ((d_out * v.transpose()).array() * (1.0 - act.array().square())).matrix();
    RowMat g_w = d_act.transpose() * x + l2 * RowMat(w_in);
    grad->head(h * p) = Eigen::Map<const Eigen::VectorXd>(g_w.data(), h * p);
    grad->segment(h * p, h) = d_act.colwise().sum().transpose();
    grad->segment(h * p + h, h) = act.transpose() * d_out + l2 * v;
    (*grad)(h * p + 2 * h) = d_out.sum();
  }
  return loss;
}

}  // namespace detail

}  // namespace balpol::learners
