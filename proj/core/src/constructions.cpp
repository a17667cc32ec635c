#include "lcnet/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void construction_error(const std::string& what) {
  throw std::invalid_argument("lcnet::constructions: " + what);
}

}  // namespace

double pyramid_truth(double x) {
  if (x <= 0.0 || x >= 2.0) return 0.0;
  if (x < 0.5) return 2.0 * x;
  if (x < 1.0) return 2.0 - 2.0 * x;
  if (x < 1.5) return 2.0 * x - 2.0;
  return 4.0 - 2.0 * x;
}

ParamSet build_pyramid(const PyramidSpec& spec) {
  NetShape shape;
  shape.input_dim = 2;  // (x, beta)
  shape.hidden_dim = 4;
  shape.residual_blocks = 1;
  shape.output_dim = 1;
  shape.residual_skips = false;

  ParamSet p = zero_params(shape);

  Vector a(4), b1(4);
  a << 1.0, 1.0, 1.0, 1.0;
  b1 << 0.0, -0.5, -1.0, -1.5;

  Vector context = Vector::Zero(4);
  switch (spec.context) {
    case PyramidContext::Zero: break;
    case PyramidContext::Translation: context = a; break;
    case PyramidContext::Dilation: context = b1; break;
  }

  p.weights[0].col(0) = a;
  p.weights[0].col(1) = context;
  p.biases[0] = b1;

  // Pairs of unit slopes combine into two triangles.
  p.weights[1](0, 0) = 2.0;
  p.weights[1](0, 1) = -4.0;
  p.weights[1](1, 2) = 2.0;
  p.weights[1](1, 3) = -4.0;

  // Triangles summed, then passed through to the scalar output.
  p.weights[2](0, 0) = 1.0;
  p.weights[2](0, 1) = 1.0;
  p.weights[3](0, 0) = 1.0;

  return p;
}

SelectorEncoder build_selector(const SelectorSpec& spec) {
  if (spec.num_tasks < 1) construction_error("need at least one task");
  if (!(spec.delta > 0.0 && spec.delta < 0.5)) construction_error("delta must lie in (0, 0.5)");
  if (spec.x_dim < 0) construction_error("x_dim must be non-negative");

  const int m = spec.num_tasks;
  const int dx = spec.x_dim;
  SelectorEncoder enc;
  enc.num_tasks = m;
  enc.x_dim = dx;
  enc.delta = spec.delta;

  // Layer 1: paired +/- rails for x, then the shifted copies of beta.
  enc.w1 = Matrix::Zero(2 * dx + 2 * m, dx + 1);
  enc.b1 = Vector::Zero(2 * dx + 2 * m);
  for (int i = 0; i < dx; ++i) {
    enc.w1(i, i) = 1.0;
    enc.w1(dx + i, i) = -1.0;
  }
  for (int j = 0; j < m; ++j) {
    enc.w1(2 * dx + 2 * j, dx) = 1.0;
    enc.w1(2 * dx + 2 * j + 1, dx) = 1.0;
    enc.b1(2 * dx + 2 * j) = -(static_cast<double>(j + 1) - spec.delta);
    enc.b1(2 * dx + 2 * j + 1) = -static_cast<double>(j + 1);
  }

  // Layer 2: rails pass through, shifted pairs fold into triangles.
  enc.w2 = Matrix::Zero(2 * dx + m, 2 * dx + 2 * m);
  enc.b2 = Vector::Zero(2 * dx + m);
  for (int i = 0; i < 2 * dx; ++i) enc.w2(i, i) = 1.0;
  const double inv_delta = 1.0 / spec.delta;
  for (int j = 0; j < m; ++j) {
    enc.w2(2 * dx + j, 2 * dx + 2 * j) = inv_delta;
    enc.w2(2 * dx + j, 2 * dx + 2 * j + 1) = -2.0 * inv_delta;
  }
  return enc;
}

Vector selector_encode(const SelectorEncoder& enc, const Vector& x, double beta) {
  if (x.size() != enc.x_dim) construction_error("input dimension mismatch");
  Vector input(enc.x_dim + 1);
  input.head(enc.x_dim) = x;
  input(enc.x_dim) = beta;

  const Vector h1 = (enc.w1 * input + enc.b1).cwiseMax(0.0);
  const Vector h2 = (enc.w2 * h1 + enc.b2).cwiseMax(0.0);

  Vector out(enc.x_dim + enc.num_tasks);
  for (int i = 0; i < enc.x_dim; ++i) out(i) = h2(i) - h2(enc.x_dim + i);
  out.tail(enc.num_tasks) = h2.tail(enc.num_tasks);
  return out;
}

Vector selector_triangles(const SelectorEncoder& enc, double beta) {
  Vector input(enc.x_dim + 1);
  input.setZero();
  input(enc.x_dim) = beta;
  const Vector h1 = (enc.w1 * input + enc.b1).cwiseMax(0.0);
  const Vector h2 = (enc.w2 * h1 + enc.b2).cwiseMax(0.0);
  return h2.tail(enc.num_tasks);
}

ParamSet compose_selector_cs(const SelectorEncoder& enc, const ParamSet& cs_net) {
  cs_net.validate();
  const int m = enc.num_tasks;
  const int dx = enc.x_dim;
  if (cs_net.shape.input_dim != dx + m)
    construction_error("context-sensitive net input width must be x_dim + m");
  if (cs_net.shape.residual_skips)
    construction_error("composition requires a skip-free context-sensitive net");

  const int h = cs_net.shape.hidden_dim;
  const int width = std::max({2 * dx + 2 * m, 2 * dx + m, h});
  const int cs_layers = cs_net.shape.layer_count();

  NetShape shape;
  shape.input_dim = dx + 1;
  shape.hidden_dim = width;
  shape.residual_blocks = cs_net.shape.residual_blocks + 1;
  shape.output_dim = cs_net.shape.output_dim;
  shape.residual_skips = false;

  ParamSet p = zero_params(shape);

  // Encoder layers, zero-padded to the common width.
  p.weights[0].topLeftCorner(enc.w1.rows(), enc.w1.cols()) = enc.w1;
  p.biases[0].head(enc.b1.size()) = enc.b1;
  p.weights[1].topLeftCorner(enc.w2.rows(), enc.w2.cols()) = enc.w2;

  // CS first layer rewired onto the rails: [A, -A, B].
  const Matrix a_cols = cs_net.weights[0].leftCols(dx);
  const Matrix b_cols = cs_net.weights[0].rightCols(m);
  p.weights[2].block(0, 0, h, dx) = a_cols;
  p.weights[2].block(0, dx, h, dx) = -a_cols;
  p.weights[2].block(0, 2 * dx, h, m) = b_cols;
  p.biases[2].head(h) = cs_net.biases[0];

  // Remaining CS layers keep their wiring, padded in place.
  for (int k = 1; k < cs_layers; ++k) {
    const Matrix& w = cs_net.weights[static_cast<std::size_t>(k)];
    p.weights[static_cast<std::size_t>(k) + 2].topLeftCorner(w.rows(), w.cols()) = w;
    p.biases[static_cast<std::size_t>(k) + 2].head(w.rows()) = cs_net.biases[static_cast<std::size_t>(k)];
  }
  return p;
}

double verify_selector_composition(const SelectorEncoder& enc, const ParamSet& cs_net,
                                   const Matrix& xs) {
  return composed_vs_direct_deviation(enc, cs_net, compose_selector_cs(enc, cs_net), xs);
}

double composed_vs_direct_deviation(const SelectorEncoder& enc, const ParamSet& cs_net,
                                    const ParamSet& composed, const Matrix& xs) {
  if (xs.rows() != enc.x_dim) construction_error("input dimension mismatch");
  const int m = enc.num_tasks;

  double worst = 0.0;
  for (long c = 0; c < xs.cols(); ++c) {
    for (int j = 1; j <= m; ++j) {
      Vector direct_in = Vector::Zero(enc.x_dim + m);
      direct_in.head(enc.x_dim) = xs.col(c);
      direct_in(enc.x_dim + j - 1) = 1.0;
      Vector composed_in(enc.x_dim + 1);
      composed_in.head(enc.x_dim) = xs.col(c);
      composed_in(enc.x_dim) = static_cast<double>(j);
      const Matrix direct = forward(cs_net, direct_in);
      const Matrix routed = forward(composed, composed_in);
      worst = std::max(worst, (direct - routed).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace lcnet
