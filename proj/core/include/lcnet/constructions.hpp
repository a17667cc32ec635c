#pragma once

#include "lcnet/net.hpp"

#include <vector>

namespace lcnet {

/// Choice of the task-parameter column L in the hand-built triangle-wave
/// network. With L = A the task parameter translates the base shape; with
/// L = b1 it dilates both axes by (1 + beta); zero leaves it untouched.
enum class PyramidContext { Zero, Translation, Dilation };

struct PyramidSpec {
  PyramidContext context = PyramidContext::Zero;
};

/// A three-weight-layer network on input (x, beta) that interpolates
/// (0,0), (0.5,1), (1,0), (1.5,1), (2,0) at beta = 0. Realized in the
/// canonical shape as one skip-free residual block with zero-padded rows and
/// a pass-through output layer, which leaves its input-output map exact.
ParamSet build_pyramid(const PyramidSpec& spec);

/// Base-shape value: linear interpolation of the five anchor points.
double pyramid_truth(double x);

/// Two-layer encoder mapping (x, beta) to (x, c_hat) where c_hat is a
/// triangle-function one-hot estimate of the task index: exactly e_j at
/// beta = j, zero outside [j - delta, j + delta). The x channels pass
/// through as paired positive/negative ReLU rails so the copy is exact for
/// all real inputs.
struct SelectorSpec {
  int num_tasks = 1;
  double delta = 0.25;  // in (0, 0.5)
  int x_dim = 0;
};

struct SelectorEncoder {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  int num_tasks = 0;
  int x_dim = 0;
  double delta = 0.25;
};

SelectorEncoder build_selector(const SelectorSpec& spec);

/// Applies the encoder to one input; returns the recombined (x, c_hat).
Vector selector_encode(const SelectorEncoder& enc, const Vector& x, double beta);

/// Just the triangle outputs c_hat for a task parameter value.
Vector selector_triangles(const SelectorEncoder& enc, double beta);

/// Prepends the encoder to a skip-free context-sensitive network, producing
/// a learned-context network with a scalar task parameter (task j encoded
/// as beta = j). The CS first layer is rewired onto the paired x rails and
/// every hidden layer is zero-padded to a common width.
ParamSet compose_selector_cs(const SelectorEncoder& enc, const ParamSet& cs_net);

/// Max |composed(x, j) - cs(x, c_j)| over all columns of `xs` and all tasks.
double verify_selector_composition(const SelectorEncoder& enc, const ParamSet& cs_net,
                                   const Matrix& xs);

/// Same comparison against an explicitly supplied composed network, for
/// integrity checks on emitted artifacts.
double composed_vs_direct_deviation(const SelectorEncoder& enc, const ParamSet& cs_net,
                                    const ParamSet& composed, const Matrix& xs);

}  // namespace lcnet
