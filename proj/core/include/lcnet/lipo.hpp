#pragma once

#include "lcnet/net.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lcnet {

/// One search dimension: bounds, an optional log10 metric, and an integer
/// flag. Distances are always measured in box-normalized coordinates, with
/// log dimensions normalized in log space.
struct HyperDim {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  bool log10 = false;
  bool integer = false;
};

struct HyperBox {
  std::vector<HyperDim> dims;

  int size() const { return static_cast<int>(dims.size()); }
  void validate() const;
  int index_of(const std::string& name) const;  // -1 when absent

  /// Maps a point in original units to [0,1]^d (log dims via log10).
  Vector to_unit(const Vector& point) const;
  Vector from_unit(const Vector& unit) const;

  /// Snaps integer dimensions and clips to the bounds.
  Vector canonicalize(const Vector& point) const;
  bool contains(const Vector& point) const;
};

struct TrialRecord {
  Vector point;
  double value = 0.0;
  int index = 0;
  bool diverged = false;
};

struct LipoResult {
  Vector best_point;
  double best_value = 0.0;
  std::vector<TrialRecord> trials;
  double k_hat = 0.0;  // final Lipschitz constant estimate in unit coordinates
};

/// Global minimization over a bounded box with an adaptive Lipschitz upper
/// bound, alternating exploration against the bound with local quadratic
/// refinement around the incumbent. One objective evaluation per iteration;
/// deterministic for a fixed seed. Non-finite objective values are recorded
/// as diverged trials and penalized.
LipoResult lipo_minimize(const std::function<double(const Vector&)>& objective,
                         const HyperBox& box, int num_iterations, std::uint64_t seed);

}  // namespace lcnet
