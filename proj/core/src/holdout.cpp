#include "lcnet/holdout.hpp"

#include "lcnet/lipo.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void holdout_error(const std::string& what) {
  throw std::invalid_argument("lcnet::holdout: " + what);
}

Eigen::LDLT<Matrix> prior_solver(const HoldoutPrior& prior) {
  Eigen::LDLT<Matrix> solver(prior.d_cov);
  if (solver.info() != Eigen::Success) holdout_error("prior covariance is not positive definite");
  return solver;
}

void check_adaptable(const MultiTaskModel& model) {
  if (model.kind == ModelKind::ContextSensitive)
    holdout_error("context-sensitive models have no task parameters to adapt");
}

}  // namespace

HoldoutPrior estimate_prior(const Matrix& base_betas, const Vector& base_residuals,
                            double jitter) {
  if (base_betas.cols() < 2) holdout_error("need at least two base tasks");
  if (base_residuals.size() == 0) holdout_error("need base residuals for the likelihood scale");
  const long m = base_betas.cols();
  const Vector mean = base_betas.rowwise().mean();
  const Matrix centered = base_betas.colwise() - mean;
  HoldoutPrior prior;
  prior.d_cov = centered * centered.transpose() / static_cast<double>(m - 1);
  prior.d_cov += jitter * Matrix::Identity(base_betas.rows(), base_betas.rows());
  prior.s2 = base_residuals.squaredNorm() / static_cast<double>(base_residuals.size());
  if (prior.s2 <= 0.0) prior.s2 = jitter;
  return prior;
}

double holdout_objective(const MultiTaskModel& frozen_model, const Matrix& task_x,
                         const Vector& task_y, const Vector& beta, const HoldoutPrior& prior) {
  check_adaptable(frozen_model);
  if (beta.size() != frozen_model.tasks.dim) holdout_error("beta dimension mismatch");
  double data_term = 0.0;
  if (task_y.size() > 0) {
    const Vector pred = predict_with_beta(frozen_model, task_x, beta);
    data_term = (pred - task_y).squaredNorm() / prior.s2;
  }
  const Vector solved = prior_solver(prior).solve(beta);
  return data_term + beta.dot(solved);
}

HoldoutFit fit_holdout_task(const MultiTaskModel& frozen_model, const Matrix& task_x,
                            const Vector& task_y, const HoldoutPrior& prior,
                            const Matrix& base_betas, int budget_per_dim, std::uint64_t seed) {
  check_adaptable(frozen_model);
  const int d = frozen_model.tasks.dim;
  if (base_betas.rows() != d) holdout_error("base beta dimension mismatch");

  HoldoutFit fit;
  fit.beta_hat = Vector::Zero(d);

  // Prior mode without data; likewise when the base group gives no spread
  // to build a search box from.
  const Vector lo_base = base_betas.rowwise().minCoeff();
  const Vector hi_base = base_betas.rowwise().maxCoeff();
  const double max_range = (hi_base - lo_base).maxCoeff();
  if (task_y.size() == 0 || max_range <= 0.0) {
    fit.objective = holdout_objective(frozen_model, task_x, task_y, fit.beta_hat, prior);
    return fit;
  }

  HyperBox box;
  for (int i = 0; i < d; ++i) {
    const double range = hi_base(i) - lo_base(i);
    const double pad = 0.5 * (range > 0.0 ? range : max_range);
    box.dims.push_back({"beta" + std::to_string(i + 1), lo_base(i) - pad, hi_base(i) + pad});
  }

  int evaluations = 0;
  auto objective = [&](const Vector& beta) {
    ++evaluations;
    return holdout_objective(frozen_model, task_x, task_y, beta, prior);
  };

  LipoResult lipo = lipo_minimize(objective, box, budget_per_dim * d, seed);
  Vector best = lipo.best_point;
  double best_value = lipo.best_value;

  // Compass-search polish: deterministic, no gradients needed.
  Vector widths(d);
  for (int i = 0; i < d; ++i) widths(i) = box.dims[static_cast<std::size_t>(i)].hi -
                                          box.dims[static_cast<std::size_t>(i)].lo;
  double step = 0.05;
  const double min_step = 1e-9;
  while (step > min_step) {
    bool improved = false;
    for (int i = 0; i < d; ++i) {
      for (double sign : {1.0, -1.0}) {
        Vector cand = best;
        cand(i) += sign * step * widths(i);
        const double v = objective(cand);
        if (v < best_value) {
          best_value = v;
          best = cand;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }

  fit.beta_hat = best;
  fit.objective = best_value;
  fit.evaluations = evaluations;
  return fit;
}

std::vector<ScanPoint> likelihood_scan(const MultiTaskModel& frozen_model, const Matrix& task_x,
                                       const Vector& task_y, const HoldoutPrior& prior,
                                       const std::vector<Vector>& grid, bool include_prior) {
  check_adaptable(frozen_model);
  if (grid.empty()) holdout_error("empty scan grid");
  auto solver = prior_solver(prior);

  std::vector<ScanPoint> scan;
  scan.reserve(grid.size());
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(grid.size());
  for (const auto& beta : grid) {
    double obj = 0.0;
    if (task_y.size() > 0) {
      const Vector pred = predict_with_beta(frozen_model, task_x, beta);
      obj += (pred - task_y).squaredNorm() / prior.s2;
    }
    if (include_prior) obj += beta.dot(solver.solve(beta));
    const double log_density = -0.5 * obj;
    logs.push_back(log_density);
    best = std::max(best, log_density);
  }
  for (std::size_t i = 0; i < grid.size(); ++i)
    scan.push_back({grid[i], std::exp(logs[i] - best)});
  return scan;
}

std::vector<Vector> scan_grid_1d(double lo, double hi, int points) {
  if (points < 2) holdout_error("grid needs at least two points");
  std::vector<Vector> grid;
  grid.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    Vector b(1);
    b(0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(b);
  }
  return grid;
}

std::vector<int> scan_local_modes(const std::vector<ScanPoint>& scan, double floor) {
  std::vector<int> modes;
  const int n = static_cast<int>(scan.size());
  for (int i = 0; i < n; ++i) {
    const double v = scan[static_cast<std::size_t>(i)].density;
    if (v < floor) continue;
    const double left = i > 0 ? scan[static_cast<std::size_t>(i - 1)].density : -1.0;
    const double right = i + 1 < n ? scan[static_cast<std::size_t>(i + 1)].density : -1.0;
    if (v > left && v > right) modes.push_back(i);
  }
  return modes;
}

std::vector<std::vector<int>> rotate_task_groups(int num_tasks, int groups, std::uint64_t seed) {
  if (groups < 1 || groups > num_tasks) holdout_error("invalid group count");
  std::vector<int> ids(static_cast<std::size_t>(num_tasks));
  std::iota(ids.begin(), ids.end(), 1);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(groups));
  for (int i = 0; i < num_tasks; ++i)
    out[static_cast<std::size_t>(i % groups)].push_back(ids[static_cast<std::size_t>(i)]);
  for (auto& g : out) std::sort(g.begin(), g.end());
  return out;
}

void save_scan_csv(const std::vector<ScanPoint>& scan, const std::string& path) {
  std::ofstream out(path);
  if (!out) holdout_error("cannot write " + path);
  if (scan.empty()) holdout_error("empty scan");
  const int d = static_cast<int>(scan.front().beta.size());
  for (int i = 0; i < d; ++i) out << "beta" << (i + 1) << ",";
  out << "density\n";
  char buf[64];
  for (const auto& p : scan) {
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g,", p.beta(i));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g\n", p.density);
    out << buf;
  }
}

}  // namespace lcnet
