#include "lcnet/constructions.hpp"

#include "lcnet/net.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace lcnet;

namespace {

double eval_pyramid(const ParamSet& p, double x, double beta) {
  Vector z(2);
  z << x, beta;
  return forward_scalar(p, z);
}

}  // namespace

TEST_CASE("pyramid: exact interpolation of the anchor points") {
  const ParamSet p = build_pyramid({PyramidContext::Zero});
  const double xs[] = {0.0, 0.5, 1.0, 1.5, 2.0};
  const double ys[] = {0.0, 1.0, 0.0, 1.0, 0.0};
  for (int i = 0; i < 5; ++i) CHECK(std::abs(eval_pyramid(p, xs[i], 0.0) - ys[i]) <= 1e-12);
  // Context column is ignored at beta = 0 for every variant.
  for (auto ctx : {PyramidContext::Translation, PyramidContext::Dilation}) {
    const ParamSet q = build_pyramid({ctx});
    for (int i = 0; i < 5; ++i) CHECK(std::abs(eval_pyramid(q, xs[i], 0.0) - ys[i]) <= 1e-12);
  }
}

TEST_CASE("pyramid: base shape matches the interpolant everywhere") {
  const ParamSet p = build_pyramid({PyramidContext::Zero});
  for (int i = 0; i <= 200; ++i) {
    const double x = -0.5 + 3.0 * i / 200.0;
    CHECK(std::abs(eval_pyramid(p, x, 0.0) - pyramid_truth(x)) <= 1e-12);
  }
}

TEST_CASE("pyramid: translation identity f(x; b) = f(x + b; 0)") {
  const ParamSet p = build_pyramid({PyramidContext::Translation});
  for (double beta : {-0.5, -0.25, 0.125, 0.5}) {
    for (int i = 0; i <= 100; ++i) {
      const double x = -1.0 + 4.0 * i / 100.0;
      CHECK(std::abs(eval_pyramid(p, x, beta) - eval_pyramid(p, x + beta, 0.0)) <= 1e-12);
    }
  }
}

TEST_CASE("pyramid: dilation identity f((1+b)x; b) = (1+b) f(x; 0)") {
  const ParamSet p = build_pyramid({PyramidContext::Dilation});
  for (double beta : {-0.75, -0.5, 0.25, 0.5, 0.875}) {
    for (int i = 0; i <= 100; ++i) {
      const double x = -0.5 + 3.0 * i / 100.0;
      const double lhs = eval_pyramid(p, (1.0 + beta) * x, beta);
      const double rhs = (1.0 + beta) * eval_pyramid(p, x, 0.0);
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("pyramid: slope magnitude 2 almost everywhere on (0, 2)") {
  const ParamSet p = build_pyramid({PyramidContext::Zero});
  const double h = 1e-6;
  for (int i = 0; i < 40; ++i) {
    const double x = 0.013 + i * 0.0493;  // stays away from the kinks at k/2
    const double fd = (eval_pyramid(p, x + h, 0.0) - eval_pyramid(p, x - h, 0.0)) / (2 * h);
    CHECK(std::abs(std::abs(fd) - 2.0) <= 1e-6);
  }
}

TEST_CASE("selector: one-hot at integer task parameters") {
  for (double delta : {0.25, 0.125, 0.0625}) {
    const SelectorEncoder enc = build_selector({.num_tasks = 5, .delta = delta, .x_dim = 0});
    for (int j = 1; j <= 5; ++j) {
      const Vector c = selector_triangles(enc, double(j));
      for (int k = 1; k <= 5; ++k) CHECK(c(k - 1) == (k == j ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("selector: half-slope response between the grid points") {
  const SelectorEncoder enc = build_selector({.num_tasks = 3, .delta = 0.25, .x_dim = 0});
  const Vector c = selector_triangles(enc, 2.125);
  CHECK(c(0) == 0.0);
  CHECK(c(1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c(2) == 0.0);
}

TEST_CASE("selector: zero outside every triangle") {
  const SelectorEncoder enc = build_selector({.num_tasks = 3, .delta = 0.25, .x_dim = 0});
  CHECK(selector_triangles(enc, 0.0).isZero(0.0));
  CHECK(selector_triangles(enc, 0.6).isZero(0.0));
  CHECK(selector_triangles(enc, 3.5).isZero(0.0));
}

TEST_CASE("selector: at most one active coordinate for any beta") {
  for (double delta : {0.1, 0.25, 0.49}) {
    const SelectorEncoder enc = build_selector({.num_tasks = 6, .delta = delta, .x_dim = 0});
    for (int i = 0; i <= 600; ++i) {
      const double beta = -1.0 + 8.5 * i / 600.0;
      const Vector c = selector_triangles(enc, beta);
      int active = 0;
      for (long k = 0; k < c.size(); ++k) active += c(k) > 0.0 ? 1 : 0;
      CHECK(active <= 1);
    }
  }
}

TEST_CASE("selector: x channels pass through exactly, both signs") {
  const SelectorEncoder enc = build_selector({.num_tasks = 4, .delta = 0.25, .x_dim = 3});
  std::mt19937_64 rng(77);
  for (int round = 0; round < 20; ++round) {
    const Vector x = testutil::random_vector(3, rng, 2.0);
    const Vector out = selector_encode(enc, x, 2.0);
    CHECK(out.head(3) == x);
    CHECK(out(3 + 1) == 1.0);  // c_hat = e_2
  }
}

TEST_CASE("composition: integer beta reproduces the CS net exactly") {
  std::mt19937_64 rng(101);
  NetShape cs_shape{.input_dim = 2 + 4, .hidden_dim = 10, .residual_blocks = 1, .output_dim = 1,
                    .residual_skips = false};
  const ParamSet cs = testutil::random_params(cs_shape, rng);
  const SelectorEncoder enc = build_selector({.num_tasks = 4, .delta = 0.25, .x_dim = 2});
  // Non-negative inputs: the rail sums then reassociate identically.
  Matrix xs(2, 20);
  for (long c = 0; c < xs.cols(); ++c)
    for (long r = 0; r < 2; ++r) xs(r, c) = 0.1 + 2.0 * std::abs(testutil::random_vector(1, rng)(0));
  CHECK(verify_selector_composition(enc, cs, xs) == 0.0);
}

TEST_CASE("composition: random nets and mixed-sign inputs stay within 1e-12") {
  std::mt19937_64 rng(103);
  NetShape cs_shape{.input_dim = 3 + 4, .hidden_dim = 16, .residual_blocks = 2, .output_dim = 1,
                    .residual_skips = false};
  const ParamSet cs = testutil::random_params(cs_shape, rng);
  const SelectorEncoder enc = build_selector({.num_tasks = 4, .delta = 0.25, .x_dim = 3});
  const Matrix xs = testutil::random_matrix(3, 100, rng, 1.5);
  CHECK(verify_selector_composition(enc, cs, xs) <= 1e-12);
}

TEST_CASE("composition: perturbed beta deviates within the Lipschitz bound") {
  std::mt19937_64 rng(107);
  NetShape cs_shape{.input_dim = 1 + 3, .hidden_dim = 8, .residual_blocks = 1, .output_dim = 1,
                    .residual_skips = false};
  const ParamSet cs = testutil::random_params(cs_shape, rng);
  const double delta = 0.25;
  const SelectorEncoder enc = build_selector({.num_tasks = 3, .delta = delta, .x_dim = 1});
  const ParamSet composed = compose_selector_cs(enc, cs);

  double net_lip = 1.0;
  for (const auto& w : cs.weights) {
    Eigen::JacobiSVD<Matrix> svd(w);
    net_lip *= svd.singularValues()(0);
  }

  for (int j = 1; j <= 3; ++j) {
    for (double eps : {delta / 2, -delta / 2}) {
      Vector zc(2), z0(2);
      zc << 0.4, double(j) + eps;
      z0 << 0.4, double(j);
      const double deviation = std::abs(forward_scalar(composed, zc) - forward_scalar(composed, z0));
      // The encoder moves c_hat by at most |eps|/delta in two coordinates.
      const double bound = net_lip * 2.0 * std::abs(eps) / delta;
      CHECK(deviation <= bound + 1e-12);
      CHECK(deviation > 0.0);  // the triangles really moved
    }
  }
}

TEST_CASE("composition requires a skip-free context-sensitive net") {
  std::mt19937_64 rng(109);
  NetShape with_skips{.input_dim = 1 + 2, .hidden_dim = 4, .residual_blocks = 1, .output_dim = 1,
                      .residual_skips = true};
  const ParamSet cs = testutil::random_params(with_skips, rng);
  const SelectorEncoder enc = build_selector({.num_tasks = 2, .delta = 0.25, .x_dim = 1});
  CHECK_THROWS_AS(compose_selector_cs(enc, cs), std::invalid_argument);
}

TEST_CASE("selector spec validation") {
  CHECK_THROWS_AS(build_selector({.num_tasks = 3, .delta = 0.5, .x_dim = 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_selector({.num_tasks = 3, .delta = 0.0, .x_dim = 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_selector({.num_tasks = 0, .delta = 0.25, .x_dim = 1}),
                  std::invalid_argument);
}
