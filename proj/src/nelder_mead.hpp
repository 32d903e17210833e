#pragma once

#include <functional>
#include <vector>

namespace gprinv::detail {

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
};

/// Derivative-free local minimization (GSL nmsimplex2). Non-finite objective
/// values are treated as a large penalty.
SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                          const std::vector<double>& step, int max_iter, double size_tol);

}  // namespace gprinv::detail
