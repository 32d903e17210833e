#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "gprinv/executor.hpp"
#include "gprinv/gp.hpp"
#include "gprinv/scene.hpp"

namespace gprinv {

struct BOEvaluation {
  ParameterVector theta;
  double value = 0.0;      ///< value used by the optimizer (penalized if raw was not finite)
  bool penalized = false;
};

struct BOResult {
  ParameterVector best_theta;
  double best_value = 0.0;
  std::vector<BOEvaluation> history;
  std::size_t evaluations_used = 0;
};

struct BOOptions {
  std::size_t budget = 40;
  std::size_t n_init = 8;
  std::uint64_t seed = 0;
  std::size_t n_candidates = 2048;
  int gp_restarts = 8;
};

using Objective = std::function<double(const ParameterVector&)>;

/// Latin-hypercube initialization followed by GP/expected-improvement rounds.
/// Initial points are evaluated on `pool` when given; results do not depend on it.
BOResult minimize(const Objective& objective, const std::vector<double>& lower, const std::vector<double>& upper,
                  const BOOptions& opts, WorkerPool* pool = nullptr);

BOResult minimize(const Objective& objective, const ParameterSpace& space, const BOOptions& opts,
                  WorkerPool* pool = nullptr);

/// n points, one per stratum in every dimension, in [lower, upper].
std::vector<ParameterVector> latin_hypercube(std::size_t n, const std::vector<double>& lower,
                                             const std::vector<double>& upper, std::uint64_t seed);

}  // namespace gprinv
