#pragma once

#include "lcnet/data.hpp"

#include <vector>

namespace lcnet {

/// Linear varying-intercept mixed model: y_ij = a.x_ij + b + beta_j + eps_ij
/// with beta_j ~ N(0, sigma_beta2) and eps ~ N(0, sigma_eps2).
struct LMEModel {
  Vector slope;                  // a, length d_x
  double intercept = 0.0;        // b
  std::vector<double> task_intercepts;  // posterior-mean beta_j, length m
  double sigma_eps2 = 1.0;
  double sigma_beta2 = 0.0;

  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
};

struct LMEFitOptions {
  int max_iterations = 20000;
  double rel_tolerance = 1e-8;
};

/// Maximum-likelihood fit by EM over the variance components, with the task
/// intercepts as the missing data. A single-task dataset degenerates to OLS
/// with sigma_beta2 forced to zero. Throws on a singular fixed-effect design;
/// non-convergence is reported through the `converged` flag.
LMEModel lme_fit(const MultiTaskDataset& data, const LMEFitOptions& options = {});

/// a.x + b + beta_j; task_id outside 1..m predicts with the prior mean 0.
double lme_predict(const LMEModel& model, const Vector& x, int task_id);

Vector lme_predict_dataset(const LMEModel& model, const MultiTaskDataset& data);

double lme_rmse(const LMEModel& model, const MultiTaskDataset& data);

/// Exact marginal log-likelihood of the varying-intercept model, used for
/// convergence monitoring and in fit diagnostics.
double lme_marginal_loglik(const MultiTaskDataset& data, const Vector& slope, double intercept,
                           double sigma_eps2, double sigma_beta2);

}  // namespace lcnet
