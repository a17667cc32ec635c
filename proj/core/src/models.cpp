#include "lcnet/models.hpp"

#include <cmath>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void model_error(const std::string& what) {
  throw std::invalid_argument("lcnet::models: " + what);
}

void check_task(const MultiTaskModel& model, int task_id) {
  if (task_id < 1 || task_id > model.num_tasks()) model_error("unknown task id");
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LearnedContext: return "lc";
    case ModelKind::ContextSensitive: return "cs";
    case ModelKind::LastLayer: return "ll";
  }
  model_error("invalid kind");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "lc" || name == "learned-context") return ModelKind::LearnedContext;
  if (name == "cs" || name == "context-sensitive") return ModelKind::ContextSensitive;
  if (name == "ll" || name == "last-layer") return ModelKind::LastLayer;
  model_error("unknown model kind '" + name + "'");
}

Vector TaskParameterTable::get(int task_id) const {
  if (task_id < 1 || task_id > num_tasks) model_error("unknown task id");
  return beta.col(task_id - 1);
}

void TaskParameterTable::validate() const {
  if (num_tasks < 0 || dim < 0) model_error("negative table size");
  if (beta.rows() != dim || beta.cols() != num_tasks) model_error("task table shape mismatch");
}

TaskParameterTable zero_task_table(int num_tasks, int dim) {
  TaskParameterTable t;
  t.num_tasks = num_tasks;
  t.dim = dim;
  t.beta = Matrix::Zero(dim, num_tasks);
  return t;
}

void MultiTaskModel::validate() const {
  net.validate();
  tasks.validate();
  if (x_dim <= 0) model_error("x_dim must be positive");
  switch (kind) {
    case ModelKind::LearnedContext:
      if (tasks.dim < 1) model_error("learned-context models need d_beta >= 1");
      if (net.shape.input_dim != x_dim + tasks.dim)
        model_error("learned-context input width must be d_x + d_beta");
      break;
    case ModelKind::ContextSensitive:
      if (tasks.dim != 0) model_error("context-sensitive models have no task parameters");
      if (net.shape.input_dim != x_dim + tasks.num_tasks)
        model_error("context-sensitive input width must be d_x + m");
      break;
    case ModelKind::LastLayer:
      if (tasks.dim < 1) model_error("last-layer models need d_beta >= 1");
      if (net.shape.input_dim != x_dim) model_error("last-layer input width must be d_x");
      if (net.shape.output_dim != tasks.dim)
        model_error("last-layer output width must be d_beta");
      break;
  }
}

MultiTaskModel make_model(ModelKind kind, int x_dim, int num_tasks, int d_beta, int hidden_dim,
                          int residual_blocks, std::uint64_t seed, bool residual_skips) {
  if (num_tasks < 1) model_error("need at least one task");
  MultiTaskModel m;
  m.kind = kind;
  m.x_dim = x_dim;
  NetShape shape;
  shape.hidden_dim = hidden_dim;
  shape.residual_blocks = residual_blocks;
  shape.residual_skips = residual_skips;
  switch (kind) {
    case ModelKind::LearnedContext:
      shape.input_dim = x_dim + d_beta;
      shape.output_dim = 1;
      m.tasks = zero_task_table(num_tasks, d_beta);
      break;
    case ModelKind::ContextSensitive:
      shape.input_dim = x_dim + num_tasks;
      shape.output_dim = 1;
      m.tasks = zero_task_table(num_tasks, 0);
      break;
    case ModelKind::LastLayer:
      shape.input_dim = x_dim;
      shape.output_dim = d_beta;
      m.tasks = zero_task_table(num_tasks, d_beta);
      break;
  }
  m.net = init_he(shape, seed);
  m.validate();
  return m;
}

std::size_t trainable_count(const MultiTaskModel& model) {
  return model.net.scalar_count() +
         static_cast<std::size_t>(model.tasks.beta.size());
}

Vector augment_input(const MultiTaskModel& model, const Vector& x, int task_id) {
  check_task(model, task_id);
  if (x.size() != model.x_dim) model_error("input dimension mismatch");
  switch (model.kind) {
    case ModelKind::LearnedContext: {
      Vector z(model.x_dim + model.tasks.dim);
      z.head(model.x_dim) = x;
      z.tail(model.tasks.dim) = model.tasks.beta.col(task_id - 1);
      return z;
    }
    case ModelKind::ContextSensitive: {
      Vector z = Vector::Zero(model.x_dim + model.num_tasks());
      z.head(model.x_dim) = x;
      z(model.x_dim + task_id - 1) = 1.0;
      return z;
    }
    case ModelKind::LastLayer:
      return x;
  }
  model_error("invalid kind");
}

double predict(const MultiTaskModel& model, const Vector& x, int task_id) {
  check_task(model, task_id);
  const Vector z = augment_input(model, x, task_id);
  if (model.kind == ModelKind::LastLayer) {
    const Matrix h = forward(model.net, z);
    return model.tasks.beta.col(task_id - 1).dot(h.col(0));
  }
  return forward_scalar(model.net, z);
}

double predict_with_beta(const MultiTaskModel& model, const Vector& x, const Vector& beta) {
  Matrix xs(x.size(), 1);
  xs.col(0) = x;
  return predict_with_beta(model, xs, beta)(0);
}

Vector predict_with_beta(const MultiTaskModel& model, const Matrix& x, const Vector& beta) {
  if (x.rows() != model.x_dim) model_error("input dimension mismatch");
  if (beta.size() != model.tasks.dim) model_error("beta dimension mismatch");
  switch (model.kind) {
    case ModelKind::LearnedContext: {
      Matrix z(model.net.shape.input_dim, x.cols());
      z.topRows(model.x_dim) = x;
      z.bottomRows(model.tasks.dim).colwise() = beta;
      return forward(model.net, z).row(0).transpose();
    }
    case ModelKind::LastLayer: {
      const Matrix h = forward(model.net, x);
      return h.transpose() * beta;
    }
    case ModelKind::ContextSensitive:
      model_error("context-sensitive models have no task parameters");
  }
  model_error("invalid kind");
}

Matrix assemble_inputs(const MultiTaskModel& model, const Matrix& x, const int* task, long count) {
  if (x.rows() != model.x_dim || x.cols() != count) model_error("input dimension mismatch");
  switch (model.kind) {
    case ModelKind::LearnedContext: {
      Matrix z(model.x_dim + model.tasks.dim, count);
      z.topRows(model.x_dim) = x;
      for (long i = 0; i < count; ++i) {
        const int j = task[i];
        if (j < 1 || j > model.num_tasks()) model_error("unknown task id");
        z.block(model.x_dim, i, model.tasks.dim, 1) = model.tasks.beta.col(j - 1);
      }
      return z;
    }
    case ModelKind::ContextSensitive: {
      Matrix z = Matrix::Zero(model.x_dim + model.num_tasks(), count);
      z.topRows(model.x_dim) = x;
      for (long i = 0; i < count; ++i) {
        const int j = task[i];
        if (j < 1 || j > model.num_tasks()) model_error("unknown task id");
        z(model.x_dim + j - 1, i) = 1.0;
      }
      return z;
    }
    case ModelKind::LastLayer:
      return x;
  }
  model_error("invalid kind");
}

Vector predict_batch(const MultiTaskModel& model, const Matrix& x, const std::vector<int>& task) {
  if (static_cast<long>(task.size()) != x.cols()) model_error("task list length mismatch");
  const Matrix z = assemble_inputs(model, x, task.data(), x.cols());
  const Matrix out = forward(model.net, z);
  if (model.kind == ModelKind::LastLayer) {
    Vector y(x.cols());
    for (long i = 0; i < x.cols(); ++i)
      y(i) = model.tasks.beta.col(task[static_cast<std::size_t>(i)] - 1).dot(out.col(i));
    return y;
  }
  return out.row(0).transpose();
}

Vector predict_dataset(const MultiTaskModel& model, const MultiTaskDataset& data) {
  return predict_batch(model, data.x, data.task);
}

double rmse(const MultiTaskModel& model, const MultiTaskDataset& data) {
  if (data.size() == 0) model_error("empty dataset");
  const Vector pred = predict_dataset(model, data);
  return std::sqrt((pred - data.y).squaredNorm() / static_cast<double>(data.size()));
}

double rmse_original_units(const MultiTaskModel& model, const Scaler& scaler,
                           const MultiTaskDataset& unscaled_data) {
  if (unscaled_data.size() == 0) model_error("empty dataset");
  const Matrix xs = scale_features(scaler, unscaled_data.x);
  const Vector pred_scaled = predict_batch(model, xs, unscaled_data.task);
  const Vector pred = invert_targets(scaler, pred_scaled);
  return std::sqrt((pred - unscaled_data.y).squaredNorm() /
                   static_cast<double>(unscaled_data.size()));
}

ModelGradients model_gradients(const MultiTaskModel& model, const Vector& x, int task_id,
                               double upstream) {
  check_task(model, task_id);
  ModelGradients g;
  g.task_id = task_id;
  const Vector z = augment_input(model, x, task_id);
  ForwardTrace trace;
  const Matrix out = forward(model.net, z, &trace);

  if (model.kind == ModelKind::LastLayer) {
    // y = beta_j . h(x): gradient splits into dbeta = u h(x) and dh = u beta_j.
    const Vector beta = model.tasks.beta.col(task_id - 1);
    g.task = upstream * out.col(0);
    Matrix up = upstream * beta;
    g.net = backward(model.net, trace, up);
    return g;
  }

  g.net = backward_scalar(model.net, trace, upstream);
  if (model.kind == ModelKind::LearnedContext)
    g.task = g.net.dinput.col(0).tail(model.tasks.dim);
  return g;
}

}  // namespace lcnet
