#include "lcnet/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void train_error(const std::string& what) {
  throw std::invalid_argument("lcnet::train: " + what);
}

double chi2_cdf_1(double t) { return std::erf(std::sqrt(std::max(0.0, t) / 2.0)); }

}  // namespace

void TrainConfig::validate() const {
  if (!(peak_lr > lr_floor)) train_error("peak_lr must exceed lr_floor");
  if (momentum < 0.0 || momentum >= 1.0) train_error("momentum must be in [0, 1)");
  if (lambda_alpha < 0.0 || lambda_beta < 0.0) train_error("regularization must be non-negative");
  if (max_epochs < 0 || batches_per_epoch < 1) train_error("invalid epoch/batch counts");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) train_error("warmup_fraction in (0,1)");
  if (!(window_fraction > 0.0 && window_fraction < 1.0)) train_error("window_fraction in (0,1)");
}

double convergence_p_value(std::span<const double> window) {
  const long n = static_cast<long>(window.size());
  if (n < 3) train_error("convergence window needs at least 3 losses");

  double mean_y = 0.0;
  for (double v : window) mean_y += v;
  mean_y /= static_cast<double>(n);

  const double mean_x = (static_cast<double>(n) - 1.0) / 2.0;
  double sxx = 0.0, sxy = 0.0, ss0 = 0.0;
  for (long i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    const double dy = window[static_cast<std::size_t>(i)] - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    ss0 += dy * dy;
  }
  const double slope = sxy / sxx;
  double ss1 = ss0 - slope * sxy;
  if (ss1 < 0.0) ss1 = 0.0;

  // Degenerate windows: a constant window converges by convention, an
  // exactly linear one does not.
  const double scale = static_cast<double>(n) * std::pow(1e-12 * (1.0 + std::abs(mean_y)), 2);
  if (ss0 <= scale) return 1.0;
  if (ss1 <= 1e-20 * ss0) return 0.0;

  const double lr_stat = static_cast<double>(n) * std::log(ss0 / ss1);
  return 1.0 - chi2_cdf_1(lr_stat);
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Running: return "running";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::LearningRateFloor: return "lr_floor";
    case StopReason::LossFloor: return "loss_floor";
    case StopReason::Diverged: return "diverged";
    case StopReason::ZeroBudget: return "zero_budget";
  }
  return "unknown";
}

ScheduleState make_schedule(const TrainConfig& config) {
  config.validate();
  ScheduleState s;
  s.max_epochs = config.max_epochs;
  s.warmup_epochs = std::max(1, static_cast<int>(std::lround(config.warmup_fraction * config.max_epochs)));
  s.window_size = std::max(3, static_cast<int>(std::lround(config.window_fraction * config.max_epochs)));
  s.peak_lr = config.peak_lr;
  s.lr_floor = config.lr_floor;
  s.p_threshold = config.convergence_p_threshold;
  s.loss_stop = config.loss_stop;
  s.current_lr = config.lr_floor;
  s.phase = SchedulePhase::Warmup;
  return s;
}

ScheduleDecision lr_schedule_step(ScheduleState& state, double epoch_loss) {
  ScheduleDecision d;
  state.window.push_back(epoch_loss);
  if (static_cast<int>(state.window.size()) > state.window_size)
    state.window.erase(state.window.begin());
  state.epoch += 1;

  if (std::isfinite(epoch_loss) && epoch_loss <= state.loss_stop) {
    d.stop = true;
    d.reason = StopReason::LossFloor;
    d.lr = state.current_lr;
    return d;
  }
  if (state.epoch >= state.max_epochs) {
    d.stop = true;
    d.reason = StopReason::MaxEpochs;
    d.lr = state.current_lr;
    return d;
  }

  if (state.phase == SchedulePhase::Warmup) {
    if (state.epoch < state.warmup_epochs) {
      state.current_lr = state.lr_floor +
                         (state.peak_lr - state.lr_floor) *
                             (static_cast<double>(state.epoch) / static_cast<double>(state.warmup_epochs));
    } else {
      state.phase = SchedulePhase::PlateauHalving;
      state.current_lr = state.peak_lr;
      state.epochs_since_change = 0;
    }
    d.lr = state.current_lr;
    return d;
  }

  state.epochs_since_change += 1;
  if (static_cast<int>(state.window.size()) >= state.window_size &&
      state.epochs_since_change >= state.window_size) {
    const double p = convergence_p_value(state.window);
    if (p > state.p_threshold) {
      d.converged_flag = true;
      state.current_lr /= 2.0;
      state.epochs_since_change = 0;
      if (state.current_lr < state.lr_floor) {
        d.stop = true;
        d.reason = StopReason::LearningRateFloor;
      }
    }
  }
  d.lr = state.current_lr;
  return d;
}

MomentumState make_momentum_state(const MultiTaskModel& model) {
  MomentumState s;
  for (const auto& w : model.net.weights) s.w_velocity.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : model.net.biases) s.b_velocity.push_back(Vector::Zero(b.size()));
  s.beta_velocity = Matrix::Zero(model.tasks.beta.rows(), model.tasks.beta.cols());
  return s;
}

void sgd_step(MultiTaskModel& model, const GradientSet& net_grads, const Matrix& beta_grads,
              MomentumState& state, double lr, double momentum) {
  const std::size_t layers = model.net.weights.size();
  if (net_grads.dweights.size() != layers || state.w_velocity.size() != layers)
    train_error("gradient/velocity layer count mismatch");
  for (std::size_t k = 0; k < layers; ++k) {
    if (net_grads.dweights[k].rows() != model.net.weights[k].rows() ||
        net_grads.dweights[k].cols() != model.net.weights[k].cols())
      train_error("gradient shape mismatch");
    state.w_velocity[k] = momentum * state.w_velocity[k] + net_grads.dweights[k];
    model.net.weights[k] -= lr * state.w_velocity[k];
    state.b_velocity[k] = momentum * state.b_velocity[k] + net_grads.dbiases[k];
    model.net.biases[k] -= lr * state.b_velocity[k];
  }
  if (model.tasks.beta.size() > 0) {
    if (beta_grads.rows() != model.tasks.beta.rows() || beta_grads.cols() != model.tasks.beta.cols())
      train_error("task gradient shape mismatch");
    state.beta_velocity = momentum * state.beta_velocity + beta_grads;
    model.tasks.beta -= lr * state.beta_velocity;
  }
}

double mtl_loss(const MultiTaskModel& model, const MultiTaskDataset& data, double lambda_alpha,
                double lambda_beta) {
  if (data.size() == 0) train_error("empty dataset");
  const Vector pred = predict_dataset(model, data);
  double loss = (pred - data.y).squaredNorm() / static_cast<double>(data.size());
  loss += lambda_alpha * l2_penalty(model.net);
  if (model.kind != ModelKind::ContextSensitive && model.tasks.beta.size() > 0)
    loss += lambda_beta * model.tasks.beta.squaredNorm();
  return loss;
}

namespace {

struct BatchGradients {
  GradientSet net;
  Matrix beta;
  double loss = 0.0;
};

// Batch-mean squared error plus the full regularization terms, and the
// matching gradients for every trainable.
BatchGradients batch_step(const MultiTaskModel& model, const Matrix& x, const Vector& y,
                          const std::vector<int>& task, double lambda_alpha, double lambda_beta) {
  const long bs = x.cols();
  BatchGradients out;

  const Matrix z = assemble_inputs(model, x, task.data(), bs);
  ForwardTrace trace;
  const Matrix net_out = forward(model.net, z, &trace);

  Vector pred(bs);
  if (model.kind == ModelKind::LastLayer) {
    for (long i = 0; i < bs; ++i)
      pred(i) = model.tasks.beta.col(task[static_cast<std::size_t>(i)] - 1).dot(net_out.col(i));
  } else {
    pred = net_out.row(0).transpose();
  }
  const Vector err = pred - y;
  out.loss = err.squaredNorm() / static_cast<double>(bs);
  out.loss += lambda_alpha * l2_penalty(model.net);
  if (model.kind != ModelKind::ContextSensitive && model.tasks.beta.size() > 0)
    out.loss += lambda_beta * model.tasks.beta.squaredNorm();

  Matrix upstream;
  const double scale = 2.0 / static_cast<double>(bs);
  if (model.kind == ModelKind::LastLayer) {
    upstream.resize(model.net.shape.output_dim, bs);
    for (long i = 0; i < bs; ++i)
      upstream.col(i) = (scale * err(i)) * model.tasks.beta.col(task[static_cast<std::size_t>(i)] - 1);
  } else {
    upstream = (scale * err).transpose();
  }
  out.net = backward(model.net, trace, upstream);

  // L2 terms (weights and biases both enter the penalty).
  for (std::size_t k = 0; k < model.net.weights.size(); ++k) {
    out.net.dweights[k] += (2.0 * lambda_alpha) * model.net.weights[k];
    out.net.dbiases[k] += (2.0 * lambda_alpha) * model.net.biases[k];
  }

  out.beta = Matrix::Zero(model.tasks.beta.rows(), model.tasks.beta.cols());
  if (model.kind == ModelKind::LearnedContext) {
    for (long i = 0; i < bs; ++i)
      out.beta.col(task[static_cast<std::size_t>(i)] - 1) +=
          out.net.dinput.col(i).tail(model.tasks.dim);
  } else if (model.kind == ModelKind::LastLayer) {
    for (long i = 0; i < bs; ++i)
      out.beta.col(task[static_cast<std::size_t>(i)] - 1) += (scale * err(i)) * net_out.col(i);
  }
  if (model.kind != ModelKind::ContextSensitive && model.tasks.beta.size() > 0)
    out.beta += (2.0 * lambda_beta) * model.tasks.beta;

  return out;
}

}  // namespace

TrainResult train(MultiTaskModel model, const MultiTaskDataset& data, const TrainConfig& config) {
  config.validate();
  model.validate();
  data.validate();
  if (data.num_tasks > model.num_tasks()) train_error("dataset has unknown tasks");
  if (data.dim() != model.x_dim) train_error("feature dimension mismatch");

  const auto t_start = std::chrono::steady_clock::now();
  TrainResult result;

  if (config.max_epochs == 0) {
    result.model = std::move(model);
    result.stop = StopReason::ZeroBudget;
    return result;
  }

  const long n = data.size();
  const int batches = static_cast<int>(std::min<long>(config.batches_per_epoch, n));

  std::mt19937_64 rng(config.seed);
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  MomentumState momentum = make_momentum_state(model);
  ScheduleState schedule = make_schedule(config);

  double post_warmup_loss = std::numeric_limits<double>::quiet_NaN();
  Matrix batch_x;
  Vector batch_y;
  std::vector<int> batch_task;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = schedule.current_lr;
    double loss_sum = 0.0;

    for (int b = 0; b < batches; ++b) {
      const long start = n * b / batches;
      const long end = n * (b + 1) / batches;
      const long bs = end - start;
      batch_x.resize(data.dim(), bs);
      batch_y.resize(bs);
      batch_task.assign(static_cast<std::size_t>(bs), 0);
      for (long i = 0; i < bs; ++i) {
        const long r = order[static_cast<std::size_t>(start + i)];
        batch_x.col(i) = data.x.col(r);
        batch_y(i) = data.y(r);
        batch_task[static_cast<std::size_t>(i)] = data.task[static_cast<std::size_t>(r)];
      }
      BatchGradients g =
          batch_step(model, batch_x, batch_y, batch_task, config.lambda_alpha, config.lambda_beta);
      sgd_step(model, g.net, g.beta, momentum, lr, config.momentum);
      loss_sum += g.loss;
    }

    const double epoch_loss = loss_sum / static_cast<double>(batches);
    const bool past_warmup = schedule.phase == SchedulePhase::PlateauHalving;

    bool diverged = !std::isfinite(epoch_loss);
    if (past_warmup) {
      if (std::isnan(post_warmup_loss)) post_warmup_loss = epoch_loss;
      if (!diverged && epoch_loss > config.divergence_factor * post_warmup_loss) diverged = true;
    }

    ScheduleDecision decision = lr_schedule_step(schedule, epoch_loss);
    result.history.push_back({epoch, lr, epoch_loss, decision.converged_flag});
    result.epochs_run = epoch + 1;

    if (diverged) {
      result.diverged = true;
      result.stop = StopReason::Diverged;
      break;
    }
    if (decision.stop) {
      result.stop = decision.reason;
      break;
    }
  }
  if (result.stop == StopReason::Running) result.stop = StopReason::MaxEpochs;

  result.model = std::move(model);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

TrainResult train_with_retry(const std::function<MultiTaskModel(std::uint64_t)>& factory,
                             const MultiTaskDataset& data, TrainConfig config, int max_retries) {
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    TrainResult result = train(factory(static_cast<std::uint64_t>(attempt)), data, config);
    result.retries = attempt;
    if (!result.diverged) return result;
    config.peak_lr *= 0.9;
  }
  throw std::runtime_error("lcnet::train: training diverged after " +
                           std::to_string(max_retries) + " retries");
}

void save_loss_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) train_error("cannot write " + path);
  out << "epoch,lr,train_loss,converged_flag\n";
  char buf[64];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d\n", r.epoch, r.lr, r.train_loss,
                  r.converged ? 1 : 0);
    out << buf;
  }
}

void save_train_diagnostics_json(const TrainResult& result, const std::string& path) {
  nlohmann::json j{{"retries", result.retries},
                   {"stop_reason", to_string(result.stop)},
                   {"diverged", result.diverged},
                   {"epochs_run", result.epochs_run},
                   {"wall_seconds", result.wall_seconds}};
  if (!result.history.empty()) j["final_loss"] = result.history.back().train_loss;
  std::ofstream out(path);
  if (!out) train_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace lcnet
