#include "lcnet/net.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lcnet {

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// ReLU derivative; exactly zero at z == 0.
Matrix relu_mask(const Matrix& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

[[noreturn]] void shape_error(const std::string& what) {
  throw std::invalid_argument("lcnet::net: " + what);
}

}  // namespace

int NetShape::layer_rows(int layer) const {
  const int last = layer_count() - 1;
  if (layer < 0 || layer > last) shape_error("layer index out of range");
  return layer == last ? output_dim : hidden_dim;
}

int NetShape::layer_cols(int layer) const {
  const int last = layer_count() - 1;
  if (layer < 0 || layer > last) shape_error("layer index out of range");
  return layer == 0 ? input_dim : hidden_dim;
}

void NetShape::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0)
    shape_error("dimensions must be positive");
  if (residual_blocks < 0) shape_error("residual_blocks must be non-negative");
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

void ParamSet::validate() const {
  shape.validate();
  const int layers = shape.layer_count();
  if (static_cast<int>(weights.size()) != layers || static_cast<int>(biases.size()) != layers)
    shape_error("layer count mismatch");
  for (int k = 0; k < layers; ++k) {
    if (weights[k].rows() != shape.layer_rows(k) || weights[k].cols() != shape.layer_cols(k))
      shape_error("weight shape mismatch at layer " + std::to_string(k));
    if (biases[k].size() != shape.layer_rows(k))
      shape_error("bias shape mismatch at layer " + std::to_string(k));
  }
}

ParamSet zero_params(const NetShape& shape) {
  shape.validate();
  ParamSet p;
  p.shape = shape;
  const int layers = shape.layer_count();
  p.weights.reserve(layers);
  p.biases.reserve(layers);
  for (int k = 0; k < layers; ++k) {
    p.weights.push_back(Matrix::Zero(shape.layer_rows(k), shape.layer_cols(k)));
    p.biases.push_back(Vector::Zero(shape.layer_rows(k)));
  }
  return p;
}

ParamSet init_he(const NetShape& shape, std::uint64_t seed) {
  ParamSet p = zero_params(shape);
  std::mt19937_64 rng(seed);
  for (auto& w : p.weights) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(w.cols()));
    std::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
  }
  return p;
}

Matrix forward(const ParamSet& params, const Matrix& input, ForwardTrace* trace) {
  const NetShape& s = params.shape;
  params.validate();
  if (input.rows() != s.input_dim) shape_error("input dimension mismatch");

  if (trace) {
    trace->input = input;
    trace->pre.clear();
    trace->pre.reserve(static_cast<std::size_t>(s.layer_count() - 1));
  }

  Matrix z = (params.weights[0] * input).colwise() + params.biases[0];
  if (trace) trace->pre.push_back(z);

  for (int block = 0; block < s.residual_blocks; ++block) {
    const int k = 1 + 2 * block;
    Matrix mid = (params.weights[k] * relu(z)).colwise() + params.biases[k];
    Matrix out = (params.weights[k + 1] * relu(mid)).colwise() + params.biases[k + 1];
    if (s.residual_skips) out += z;
    if (trace) {
      trace->pre.push_back(mid);
      trace->pre.push_back(out);
    }
    z = std::move(out);
  }

  Matrix y = (params.weights[s.layer_count() - 1] * z).colwise() + params.biases[s.layer_count() - 1];
  if (trace) trace->output = y;
  return y;
}

double forward_scalar(const ParamSet& params, const Vector& input, ForwardTrace* trace) {
  if (params.shape.output_dim != 1) shape_error("forward_scalar requires output_dim == 1");
  return forward(params, input, trace)(0, 0);
}

GradientSet backward(const ParamSet& params, const ForwardTrace& trace, const Matrix& upstream) {
  const NetShape& s = params.shape;
  const int layers = s.layer_count();
  if (static_cast<int>(trace.pre.size()) != layers - 1) shape_error("trace does not match shape");
  if (trace.input.rows() != s.input_dim) shape_error("trace input mismatch");
  if (upstream.rows() != s.output_dim || upstream.cols() != trace.input.cols())
    shape_error("upstream shape mismatch");

  GradientSet g;
  g.dweights.resize(layers);
  g.dbiases.resize(layers);

  const Matrix& z_last = trace.pre.back();
  g.dweights[layers - 1].noalias() = upstream * z_last.transpose();
  g.dbiases[layers - 1] = upstream.rowwise().sum();

  // Gradient with respect to the running pre-activation z^(k).
  Matrix gz = params.weights[layers - 1].transpose() * upstream;

  for (int block = s.residual_blocks - 1; block >= 0; --block) {
    const int k = 1 + 2 * block;
    const Matrix& mid = trace.pre[static_cast<std::size_t>(k)];
    const Matrix& in = trace.pre[static_cast<std::size_t>(k) - 1];

    g.dweights[k + 1].noalias() = gz * relu(mid).transpose();
    g.dbiases[k + 1] = gz.rowwise().sum();

    Matrix gmid = (params.weights[k + 1].transpose() * gz).cwiseProduct(relu_mask(mid));
    g.dweights[k].noalias() = gmid * relu(in).transpose();
    g.dbiases[k] = gmid.rowwise().sum();

    Matrix gin = (params.weights[k].transpose() * gmid).cwiseProduct(relu_mask(in));
    if (s.residual_skips) gin += gz;
    gz = std::move(gin);
  }

  g.dweights[0].noalias() = gz * trace.input.transpose();
  g.dbiases[0] = gz.rowwise().sum();
  g.dinput.noalias() = params.weights[0].transpose() * gz;
  return g;
}

GradientSet backward_scalar(const ParamSet& params, const ForwardTrace& trace, double upstream) {
  Matrix u(1, 1);
  u(0, 0) = upstream;
  return backward(params, trace, u);
}

double l2_penalty(const ParamSet& params) {
  // Sequential fused accumulation in storage order: a fixed IEEE operation
  // sequence, reproducible across optimization levels.
  double sum = 0.0;
  for (const auto& w : params.weights) {
    const double* p = w.data();
    for (Eigen::Index i = 0; i < w.size(); ++i) sum = std::fma(p[i], p[i], sum);
  }
  for (const auto& b : params.biases) {
    const double* p = b.data();
    for (Eigen::Index i = 0; i < b.size(); ++i) sum = std::fma(p[i], p[i], sum);
  }
  return sum;
}

}  // namespace lcnet
