#include "lcnet/lipo.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void lipo_error(const std::string& what) {
  throw std::invalid_argument("lcnet::lipo: " + what);
}

constexpr double kDuplicateDist = 1e-12;

struct Seen {
  Vector unit;
  double effective = 0.0;  // penalized value for diverged trials
};

double distance(const Vector& a, const Vector& b) { return (a - b).norm(); }

// Lipschitz lower bound at `u`: the largest value any k-Lipschitz function
// through the seen points could still avoid.
double lower_bound(const std::vector<Seen>& seen, double k_hat, const Vector& u) {
  double lb = -std::numeric_limits<double>::infinity();
  for (const auto& s : seen) lb = std::max(lb, s.effective - k_hat * distance(s.unit, u));
  return lb;
}

bool is_duplicate(const std::vector<Seen>& seen, const Vector& u) {
  for (const auto& s : seen)
    if (distance(s.unit, u) < kDuplicateDist) return true;
  return false;
}

}  // namespace

void HyperBox::validate() const {
  if (dims.empty()) lipo_error("box needs at least one dimension");
  for (const auto& d : dims) {
    if (!(d.lo <= d.hi)) lipo_error("dimension '" + d.name + "' has inverted bounds");
    if (d.log10 && d.lo <= 0.0) lipo_error("log dimension '" + d.name + "' needs positive bounds");
    if (d.integer && (d.lo != std::floor(d.lo) || d.hi != std::floor(d.hi)))
      lipo_error("integer dimension '" + d.name + "' needs integer bounds");
  }
}

int HyperBox::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (dims[static_cast<std::size_t>(i)].name == name) return i;
  return -1;
}

Vector HyperBox::to_unit(const Vector& point) const {
  if (point.size() != size()) lipo_error("point dimension mismatch");
  Vector u(size());
  for (int i = 0; i < size(); ++i) {
    const auto& d = dims[static_cast<std::size_t>(i)];
    const double lo = d.log10 ? std::log10(d.lo) : d.lo;
    const double hi = d.log10 ? std::log10(d.hi) : d.hi;
    const double v = d.log10 ? std::log10(point(i)) : point(i);
    u(i) = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  }
  return u;
}

Vector HyperBox::from_unit(const Vector& unit) const {
  if (unit.size() != size()) lipo_error("point dimension mismatch");
  Vector p(size());
  for (int i = 0; i < size(); ++i) {
    const auto& d = dims[static_cast<std::size_t>(i)];
    const double t = std::clamp(unit(i), 0.0, 1.0);
    const double lo = d.log10 ? std::log10(d.lo) : d.lo;
    const double hi = d.log10 ? std::log10(d.hi) : d.hi;
    double v = lo + t * (hi - lo);
    if (d.log10) v = std::pow(10.0, v);
    if (d.integer) v = std::round(v);
    p(i) = std::clamp(v, d.lo, d.hi);
  }
  return p;
}

Vector HyperBox::canonicalize(const Vector& point) const {
  if (point.size() != size()) lipo_error("point dimension mismatch");
  Vector p(size());
  for (int i = 0; i < size(); ++i) {
    const auto& d = dims[static_cast<std::size_t>(i)];
    double v = std::clamp(point(i), d.lo, d.hi);
    if (d.integer) v = std::clamp(std::round(v), d.lo, d.hi);
    p(i) = v;
  }
  return p;
}

bool HyperBox::contains(const Vector& point) const {
  if (point.size() != size()) return false;
  for (int i = 0; i < size(); ++i) {
    const auto& d = dims[static_cast<std::size_t>(i)];
    if (point(i) < d.lo || point(i) > d.hi) return false;
    if (d.integer && point(i) != std::round(point(i))) return false;
  }
  return true;
}

LipoResult lipo_minimize(const std::function<double(const Vector&)>& objective,
                         const HyperBox& box, int num_iterations, std::uint64_t seed) {
  box.validate();
  if (num_iterations < 1) lipo_error("num_iterations must be >= 1");
  const int d = box.size();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto draw_uniform = [&]() {
    Vector u(d);
    for (int i = 0; i < d; ++i) u(i) = unif(rng);
    // Snap through original coordinates so integer dims land on the grid.
    return box.to_unit(box.from_unit(u));
  };

  LipoResult result;
  std::vector<Seen> seen;
  double k_hat = 0.0;
  double best_effective = std::numeric_limits<double>::infinity();
  int best_index = -1;
  int refinements = 0;

  auto divergence_penalty = [&]() {
    double worst = 0.0;
    bool any = false;
    for (const auto& t : result.trials)
      if (!t.diverged) {
        worst = any ? std::max(worst, t.value) : t.value;
        any = true;
      }
    if (!any) return 1e100;
    return worst > 0.0 ? 10.0 * worst : worst + 9.0 * std::max(1.0, std::abs(worst));
  };

  auto evaluate = [&](const Vector& unit) {
    const Vector point = box.from_unit(unit);
    double value = objective(point);
    TrialRecord trial;
    trial.point = point;
    trial.index = static_cast<int>(result.trials.size());
    trial.diverged = !std::isfinite(value);
    trial.value = value;
    result.trials.push_back(trial);

    Seen s;
    s.unit = unit;
    s.effective = trial.diverged ? divergence_penalty() : value;
    for (const auto& other : seen) {
      const double dist = distance(other.unit, s.unit);
      if (dist > kDuplicateDist)
        k_hat = std::max(k_hat, std::abs(other.effective - s.effective) / dist);
    }
    seen.push_back(s);
    if (!trial.diverged && s.effective < best_effective) {
      best_effective = s.effective;
      best_index = trial.index;
    }
  };

  // Local step: quadratic model through the points nearest the incumbent
  // when there are enough of them, otherwise a shrinking perturbation.
  auto propose_refinement = [&]() -> Vector {
    const Vector& incumbent =
        best_index >= 0 ? seen[static_cast<std::size_t>(best_index)].unit : seen.back().unit;
    const int needed = (d + 1) * (d + 2) / 2;
    if (static_cast<int>(seen.size()) >= needed) {
      std::vector<std::size_t> order(seen.size());
      for (std::size_t i = 0; i < seen.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return distance(seen[a].unit, incumbent) < distance(seen[b].unit, incumbent);
      });
      const int use = std::min<int>(static_cast<int>(seen.size()), std::max(needed * 2, needed));
      Matrix design(use, needed);
      Vector target(use);
      for (int r = 0; r < use; ++r) {
        const Vector delta = seen[order[static_cast<std::size_t>(r)]].unit - incumbent;
        int c = 0;
        design(r, c++) = 1.0;
        for (int i = 0; i < d; ++i) design(r, c++) = delta(i);
        for (int i = 0; i < d; ++i)
          for (int j = i; j < d; ++j) design(r, c++) = delta(i) * delta(j);
        target(r) = seen[order[static_cast<std::size_t>(r)]].effective;
      }
      Vector coef = design.colPivHouseholderQr().solve(target);
      Vector grad(d);
      Matrix hess(d, d);
      int c = 1;
      for (int i = 0; i < d; ++i) grad(i) = coef(c++);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          const double q = coef(c++);
          hess(i, j) = i == j ? 2.0 * q : q;
          hess(j, i) = hess(i, j);
        }
      Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
      if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 1e-10) {
        Vector step = -eig.eigenvectors() *
                      (eig.eigenvectors().transpose() * grad).cwiseQuotient(eig.eigenvalues());
        Vector u = incumbent + step;
        for (int i = 0; i < d; ++i) u(i) = std::clamp(u(i), 0.0, 1.0);
        u = box.to_unit(box.from_unit(u));
        if (!is_duplicate(seen, u)) return u;
      }
    }
    const double radius = 0.2 * std::pow(0.85, refinements);
    for (int attempt = 0; attempt < 64; ++attempt) {
      Vector u(d);
      for (int i = 0; i < d; ++i) u(i) = std::clamp(incumbent(i) + radius * gauss(rng), 0.0, 1.0);
      u = box.to_unit(box.from_unit(u));
      if (!is_duplicate(seen, u)) return u;
    }
    return Vector();  // box appears exhausted near the incumbent
  };

  auto propose_exploration = [&]() -> Vector {
    Vector fallback;
    double fallback_lb = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 512; ++attempt) {
      Vector u = draw_uniform();
      if (is_duplicate(seen, u)) continue;
      if (k_hat == 0.0) return u;
      const double lb = lower_bound(seen, k_hat, u);
      if (lb < best_effective) return u;
      if (lb < fallback_lb) {
        fallback_lb = lb;
        fallback = u;
      }
    }
    return fallback;  // empty when every draw duplicated a seen point
  };

  for (int it = 0; it < num_iterations; ++it) {
    Vector u;
    if (it == 0) {
      u = box.to_unit(box.from_unit(Vector::Constant(d, 0.5)));
      if (is_duplicate(seen, u)) u = Vector();
    } else if (it % 2 == 0 && best_index >= 0) {
      ++refinements;
      u = propose_refinement();
    } else {
      u = propose_exploration();
    }
    if (u.size() == 0) u = propose_exploration();
    if (u.size() == 0) break;  // search space exhausted (degenerate box)
    evaluate(u);
  }

  if (best_index >= 0) {
    result.best_point = result.trials[static_cast<std::size_t>(best_index)].point;
    result.best_value = result.trials[static_cast<std::size_t>(best_index)].value;
  } else if (!result.trials.empty()) {
    result.best_point = result.trials.back().point;
    result.best_value = std::numeric_limits<double>::infinity();
  }
  result.k_hat = k_hat;
  return result;
}

}  // namespace lcnet
