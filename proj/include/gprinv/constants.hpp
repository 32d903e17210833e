#pragma once

#include <numbers>

namespace gprinv::constants {

// The travel-time relation and the solvers share one value of c so that
// analytic delays and simulated delays are directly comparable.
inline constexpr double kSpeedOfLight = 3.0e8;                                   // m/s
inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;                        // H/m
inline constexpr double kEps0 = 1.0 / (kMu0 * kSpeedOfLight * kSpeedOfLight);    // F/m
inline constexpr double kEta0 = kMu0 * kSpeedOfLight;                            // ohm

}  // namespace gprinv::constants
