#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>

#include "gprinv/fdtd.hpp"
#include "gprinv/objective.hpp"
#include "gprinv/oracle.hpp"
#include "gprinv/signal.hpp"

namespace testing {

/// Sub-sample time of the largest envelope value in [t_lo, t_hi].
inline double peak_time(const gprinv::AScan& env, double t_lo, double t_hi) {
  const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil((t_lo - env.t0) / env.dt)));
  const auto hi = std::min(env.size() - 1, static_cast<std::size_t>(std::floor((t_hi - env.t0) / env.dt)));
  std::size_t best = lo;
  for (std::size_t i = lo; i <= hi; ++i) {
    if (env.samples[i] > env.samples[best]) best = i;
  }
  return env.t0 + gprinv::refine_peak(env.samples, best) * env.dt;
}

inline double peak_value(const gprinv::AScan& env, double t_lo, double t_hi) {
  const auto lo = static_cast<std::size_t>(std::max(0.0, std::ceil((t_lo - env.t0) / env.dt)));
  const auto hi = std::min(env.size() - 1, static_cast<std::size_t>(std::floor((t_hi - env.t0) / env.dt)));
  return *std::max_element(env.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                           env.samples.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p *= 2;
  return p;
}

struct OracleComparison {
  double error_percent = 0.0;
  double seconds = 0.0;
  gprinv::AScan fdtd;
  gprinv::AScan oracle;
};

/// Envelope-domain relative error of the FDTD trace against the analytic
/// response of the snapped geometry, over the whole record.
inline OracleComparison compare_with_oracle(const gprinv::LayerStack& stack, const gprinv::SourcePulse& pulse,
                                            const gprinv::GridOptions& opts = {}) {
  OracleComparison out;
  const gprinv::GridSpec grid = gprinv::discretize(stack, pulse, opts);
  const auto t0 = std::chrono::steady_clock::now();
  out.fdtd = gprinv::simulate(stack, pulse, grid);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.oracle = gprinv::oracle::reflectivity_response(grid.snapped, pulse, grid.dt, next_pow2(2 * out.fdtd.size()));
  out.oracle.samples.resize(out.fdtd.size());
  const gprinv::ComparisonConfig env{gprinv::CompareDomain::Envelope, std::nullopt, gprinv::Alignment::None};
  out.error_percent = gprinv::relative_error(out.oracle, out.fdtd, env);
  return out;
}

}  // namespace testing
