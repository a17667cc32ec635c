#include "lcnet/lme.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void lme_error(const std::string& what) {
  throw std::invalid_argument("lcnet::lme: " + what);
}

// Design matrix [x; 1] per observation, one row per observation.
Matrix design(const MultiTaskDataset& data) {
  Matrix d(data.size(), data.dim() + 1);
  d.leftCols(data.dim()) = data.x.transpose();
  d.col(data.dim()).setOnes();
  return d;
}

// OLS of `target` on [x; 1]. Throws on a rank-deficient design.
Vector ols(const Matrix& d, const Vector& target) {
  Eigen::ColPivHouseholderQR<Matrix> qr(d);
  if (qr.rank() < d.cols()) lme_error("singular design");
  const Vector coef = qr.solve(target);
  if (!coef.allFinite()) lme_error("singular design");
  return coef;
}

}  // namespace

double lme_marginal_loglik(const MultiTaskDataset& data, const Vector& slope, double intercept,
                           double sigma_eps2, double sigma_beta2) {
  const auto counts = data.task_counts();
  const Vector resid = data.y - data.x.transpose() * slope - Vector::Constant(data.size(), intercept);

  std::vector<double> sum(static_cast<std::size_t>(data.num_tasks), 0.0);
  std::vector<double> sumsq(static_cast<std::size_t>(data.num_tasks), 0.0);
  for (long i = 0; i < data.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)] - 1);
    sum[j] += resid(i);
    sumsq[j] += resid(i) * resid(i);
  }

  double ll = 0.0;
  for (int j = 0; j < data.num_tasks; ++j) {
    const double n_j = static_cast<double>(counts[static_cast<std::size_t>(j)]);
    const double mean_j = sum[static_cast<std::size_t>(j)] / n_j;
    const double ss_within = sumsq[static_cast<std::size_t>(j)] - n_j * mean_j * mean_j;
    const double tau = sigma_eps2 + n_j * sigma_beta2;
    ll += -0.5 * (n_j * std::log(2.0 * std::numbers::pi) + (n_j - 1.0) * std::log(sigma_eps2) +
                  std::log(tau) + ss_within / sigma_eps2 + n_j * mean_j * mean_j / tau);
  }
  return ll;
}

LMEModel lme_fit(const MultiTaskDataset& data, const LMEFitOptions& options) {
  data.validate();
  const long n = data.size();
  const int d_x = data.dim();
  if (n < d_x + 2) lme_error("need at least d_x + 2 observations");

  const Matrix d = design(data);
  LMEModel model;
  model.task_intercepts.assign(static_cast<std::size_t>(data.num_tasks), 0.0);

  // Single task: intercept and task effect are confounded; force the
  // variance component to zero and return plain OLS.
  if (data.num_tasks == 1) {
    const Vector coef = ols(d, data.y);
    model.slope = coef.head(d_x);
    model.intercept = coef(d_x);
    const Vector resid = data.y - d * coef;
    model.sigma_eps2 = resid.squaredNorm() / static_cast<double>(n);
    model.sigma_beta2 = 0.0;
    model.converged = true;
    model.iterations = 0;
    model.loglik = lme_marginal_loglik(data, model.slope, model.intercept, model.sigma_eps2, 0.0);
    return model;
  }

  const auto counts = data.task_counts();
  const int m = data.num_tasks;

  // Start from OLS.
  Vector coef = ols(d, data.y);
  Vector resid = data.y - d * coef;
  double sigma_eps2 = resid.squaredNorm() / static_cast<double>(n);
  if (sigma_eps2 <= 0) sigma_eps2 = 1e-12;
  double sigma_beta2 = sigma_eps2;

  std::vector<double> post_mean(static_cast<std::size_t>(m), 0.0);
  model.converged = false;

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Vector prev_coef = coef;
    const double prev_se2 = sigma_eps2;
    const double prev_sb2 = sigma_beta2;
    // E-step: posterior of each task intercept given current parameters.
    std::vector<double> mean_resid(static_cast<std::size_t>(m), 0.0);
    for (long i = 0; i < n; ++i)
      mean_resid[static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)] - 1)] += resid(i);
    for (int j = 0; j < m; ++j) {
      const double n_j = static_cast<double>(counts[static_cast<std::size_t>(j)]);
      mean_resid[static_cast<std::size_t>(j)] /= n_j;
      const double shrink = n_j * sigma_beta2 / (n_j * sigma_beta2 + sigma_eps2);
      post_mean[static_cast<std::size_t>(j)] = shrink * mean_resid[static_cast<std::size_t>(j)];
    }

    // M-step: fixed effects on the intercept-adjusted response.
    Vector adjusted = data.y;
    for (long i = 0; i < n; ++i)
      adjusted(i) -= post_mean[static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)] - 1)];
    coef = ols(d, adjusted);
    resid = data.y - d * coef;

    double beta_sq = 0.0;
    double eps_sq = 0.0;
    double per_obs_var = 0.0;
    for (int j = 0; j < m; ++j) {
      const double n_j = static_cast<double>(counts[static_cast<std::size_t>(j)]);
      const double post_var = sigma_beta2 * sigma_eps2 / (n_j * sigma_beta2 + sigma_eps2);
      beta_sq += post_mean[static_cast<std::size_t>(j)] * post_mean[static_cast<std::size_t>(j)] + post_var;
      per_obs_var += n_j * post_var;
    }
    for (long i = 0; i < n; ++i) {
      const double r = resid(i) - post_mean[static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)] - 1)];
      eps_sq += r * r;
    }
    sigma_beta2 = beta_sq / static_cast<double>(m);
    sigma_eps2 = (eps_sq + per_obs_var) / static_cast<double>(n);
    if (sigma_eps2 < 1e-300) sigma_eps2 = 1e-300;
    if (sigma_beta2 < 0) sigma_beta2 = 0;

    double change = std::abs(sigma_eps2 - prev_se2) / (1.0 + sigma_eps2);
    change = std::max(change, std::abs(sigma_beta2 - prev_sb2) / (1.0 + sigma_beta2));
    for (int c = 0; c <= d_x; ++c)
      change = std::max(change, std::abs(coef(c) - prev_coef(c)) / (1.0 + std::abs(coef(c))));
    if (change <= options.rel_tolerance) {
      model.converged = true;
      ++it;
      break;
    }
  }

  model.slope = coef.head(d_x);
  model.intercept = coef(d_x);
  model.sigma_eps2 = sigma_eps2;
  model.sigma_beta2 = sigma_beta2;
  model.iterations = it;
  model.loglik = lme_marginal_loglik(data, model.slope, model.intercept, sigma_eps2, sigma_beta2);

  // Final posterior means at the converged parameters.
  std::vector<double> mean_resid(static_cast<std::size_t>(m), 0.0);
  for (long i = 0; i < n; ++i)
    mean_resid[static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)] - 1)] += resid(i);
  for (int j = 0; j < m; ++j) {
    const double n_j = static_cast<double>(counts[static_cast<std::size_t>(j)]);
    mean_resid[static_cast<std::size_t>(j)] /= n_j;
    const double shrink = n_j * sigma_beta2 / (n_j * sigma_beta2 + sigma_eps2);
    model.task_intercepts[static_cast<std::size_t>(j)] = shrink * mean_resid[static_cast<std::size_t>(j)];
  }
  return model;
}

double lme_predict(const LMEModel& model, const Vector& x, int task_id) {
  if (x.size() != model.slope.size()) lme_error("dimension mismatch");
  double beta = 0.0;
  if (task_id >= 1 && task_id <= static_cast<int>(model.task_intercepts.size()))
    beta = model.task_intercepts[static_cast<std::size_t>(task_id - 1)];
  return model.slope.dot(x) + model.intercept + beta;
}

Vector lme_predict_dataset(const LMEModel& model, const MultiTaskDataset& data) {
  Vector out(data.size());
  for (long i = 0; i < data.size(); ++i)
    out(i) = lme_predict(model, data.x.col(i), data.task[static_cast<std::size_t>(i)]);
  return out;
}

double lme_rmse(const LMEModel& model, const MultiTaskDataset& data) {
  if (data.size() == 0) lme_error("empty dataset");
  const Vector pred = lme_predict_dataset(model, data);
  return std::sqrt((pred - data.y).squaredNorm() / static_cast<double>(data.size()));
}

}  // namespace lcnet
