#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gprinv/scene.hpp"
#include "gprinv/signal.hpp"

namespace gprinv {

enum class CompareDomain { Raw, Envelope };
enum class Alignment { None, Peak };

struct TimeWindow {
  double t_start = 0.0;
  double t_end = 0.0;
};

/// How a measured and a simulated trace are brought onto a common footing
/// before they are compared sample by sample.
struct ComparisonConfig {
  CompareDomain domain = CompareDomain::Raw;
  std::optional<TimeWindow> window;
  Alignment alignment = Alignment::None;
};

struct NoiseModel {
  double sigma_noise = 1.0;
};

/// The two sample sequences that actually enter the misfit.
struct ComparedPair {
  std::vector<double> y;
  std::vector<double> y_sim;
  int shift = 0;  ///< delay removed from the simulated trace, in samples
};

/// Shift y_sim onto y (peak alignment), take envelopes if requested, then
/// cut both to the window. Traces must share dt, t0 and length.
ComparedPair prepare_comparison(const AScan& y, const AScan& y_sim, const ComparisonConfig& cfg);

/// sqrt(sum (y - y_sim)^2 / sum y^2) * 100.
double relative_error(const AScan& y, const AScan& y_sim, const ComparisonConfig& cfg);
double relative_error(std::span<const double> y, std::span<const double> y_sim);

/// Independent Gaussian errors with constant sigma.
double log_likelihood(const AScan& y, const AScan& y_sim, const NoiseModel& noise, const ComparisonConfig& cfg);
double log_likelihood(std::span<const double> y, std::span<const double> y_sim, double sigma);

/// 2% of the peak envelope of `y` inside the configured window.
NoiseModel default_noise(const AScan& y, const ComparisonConfig& cfg, double fraction = 0.02);

using ForwardModel = std::function<AScan(const ParameterVector&)>;

struct PosteriorValue {
  double value = 0.0;
  bool out_of_bounds = false;
  bool forward_failed = false;
};

/// Uniform prior over the space, Gaussian likelihood. Out-of-bounds theta and
/// forward failures give -infinity; the forward model is not called for the former.
PosteriorValue evaluate_log_posterior(const ParameterVector& theta, const AScan& y, const ForwardModel& forward,
                                      const ParameterSpace& space, const NoiseModel& noise,
                                      const ComparisonConfig& cfg);

double log_posterior(const ParameterVector& theta, const AScan& y, const ForwardModel& forward,
                     const ParameterSpace& space, const NoiseModel& noise, const ComparisonConfig& cfg);

}  // namespace gprinv
