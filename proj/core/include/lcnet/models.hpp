#pragma once

#include "lcnet/data.hpp"
#include "lcnet/net.hpp"

#include <cstdint>
#include <string>

namespace lcnet {

enum class ModelKind { LearnedContext, ContextSensitive, LastLayer };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Trainable task parameter vectors, one column per task.
struct TaskParameterTable {
  int num_tasks = 0;
  int dim = 0;          // d_beta
  Matrix beta;          // dim x num_tasks, column j-1 holds beta_j

  Vector get(int task_id) const;
  void validate() const;
};

TaskParameterTable zero_task_table(int num_tasks, int dim);

/// A multi-task network: a fully shared residual net plus the task mechanism
/// of its kind.
///
///  - learned-context: net input is [x; beta_j], tasks.dim >= 1.
///  - context-sensitive: net input is [x; c_j] with c_j one-hot; no trainable
///    task parameters (tasks.dim == 0).
///  - last-layer: net maps x to d_beta outputs, prediction is beta_j . h(x).
struct MultiTaskModel {
  ModelKind kind = ModelKind::LearnedContext;
  int x_dim = 0;
  ParamSet net;
  TaskParameterTable tasks;

  int num_tasks() const { return tasks.num_tasks; }
  void validate() const;
};

/// Builds a model with He-initialized shared weights and zero task
/// parameters. `d_beta` is ignored for context-sensitive models.
MultiTaskModel make_model(ModelKind kind, int x_dim, int num_tasks, int d_beta, int hidden_dim,
                          int residual_blocks, std::uint64_t seed, bool residual_skips = true);

/// Number of trainable scalars (shared weights plus task parameters).
std::size_t trainable_count(const MultiTaskModel& model);

/// The network input for one observation of `task_id`: [x; beta_j] for
/// learned-context, [x; c_j] for context-sensitive, x itself for last-layer.
Vector augment_input(const MultiTaskModel& model, const Vector& x, int task_id);

double predict(const MultiTaskModel& model, const Vector& x, int task_id);

/// Learned-context / last-layer prediction with an explicit task parameter
/// instead of a table entry (used for hold-out task adaptation).
double predict_with_beta(const MultiTaskModel& model, const Vector& x, const Vector& beta);
Vector predict_with_beta(const MultiTaskModel& model, const Matrix& x, const Vector& beta);

/// Predictions for every observation of a dataset (columns of `x`, 1-based
/// task ids). Uses the batched forward path.
Vector predict_batch(const MultiTaskModel& model, const Matrix& x, const std::vector<int>& task);
Vector predict_dataset(const MultiTaskModel& model, const MultiTaskDataset& data);

double rmse(const MultiTaskModel& model, const MultiTaskDataset& data);

/// Root mean squared error in original units when the model was trained on
/// `scaler`-standardized data.
double rmse_original_units(const MultiTaskModel& model, const Scaler& scaler,
                           const MultiTaskDataset& unscaled_data);

/// Gradients of one observation's output with respect to the shared
/// parameters and the active task's parameter vector. `task` is empty for
/// context-sensitive models.
struct ModelGradients {
  GradientSet net;
  Vector task;
  int task_id = 0;
};

ModelGradients model_gradients(const MultiTaskModel& model, const Vector& x, int task_id,
                               double upstream);

/// Builds the batched network input for a span of observations.
Matrix assemble_inputs(const MultiTaskModel& model, const Matrix& x, const int* task, long count);

}  // namespace lcnet
