#include "gprinv/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gprinv/error.hpp"
#include "gprinv/objective.hpp"

namespace gprinv {

namespace {

AScan conform(const AScan& measured, double dt, std::size_t n) {
  AScan a = std::abs(measured.dt - dt) > 1e-9 * dt ? resample(measured, dt) : measured;
  a.t0 = 0.0;
  a.samples.resize(n, 0.0);
  return a;
}

double peak(const AScan& a) { return *std::max_element(a.samples.begin(), a.samples.end()); }

}  // namespace

GridSpec calibration_grid(const LayerStack& stack, PulseFamily family, const CalibrationOptions& opts) {
  SourcePulse fine{family, opts.f_high, 1.0, std::nullopt};
  SourcePulse coarse{family, opts.f_low, 1.0, std::nullopt};
  GridSpec g = discretize(stack, fine, opts.grid);
  g.n_steps = std::max(g.n_steps, discretize(stack, coarse, opts.grid).n_steps);
  return g;
}

CalibrationComparison compare_for_calibration(const CalibrationMeasurement& m, const SourcePulse& pulse,
                                              const GridSpec& grid) {
  const AScan sim = simulate(m.stack, pulse, grid);
  const AScan meas = conform(m.trace, sim.dt, sim.size());

  CalibrationComparison c;
  c.measured_envelope = envelope(meas);
  c.simulated_envelope = envelope(sim);
  const double pm = peak(c.measured_envelope);
  const double ps = peak(c.simulated_envelope);
  if (!(pm > 0.0)) throw InputError(fmt::format("calibration trace '{}' is all zero", m.trace.label));
  if (!(ps > 0.0)) throw NumericalError("simulated calibration trace is all zero");
  for (double& v : c.simulated_envelope.samples) v *= pm / ps;
  const int k = align(c.measured_envelope, c.simulated_envelope).shift;
  c.simulated_envelope = shift(c.simulated_envelope, -k);
  c.relative_error = relative_error(c.measured_envelope.samples, c.simulated_envelope.samples);
  return c;
}

double calibration_misfit(const std::vector<CalibrationMeasurement>& ms, PulseFamily family, double f_c,
                          const CalibrationOptions& opts) {
  double total = 0.0;
  const SourcePulse pulse{family, f_c, 1.0, std::nullopt};
  for (const auto& m : ms) total += compare_for_calibration(m, pulse, calibration_grid(m.stack, family, opts)).relative_error;
  return total;
}

CalibrationResult calibrate_pulse(const std::vector<CalibrationMeasurement>& measurements,
                                  const CalibrationOptions& opts, WorkerPool* pool) {
  if (measurements.empty()) throw InputError("calibration needs at least one measurement");
  if (!(opts.f_low > 0.0) || !(opts.f_high > opts.f_low)) {
    throw InputError(fmt::format("invalid frequency band [{:.4g}, {:.4g}] Hz", opts.f_low, opts.f_high));
  }
  if (opts.families.empty()) throw InputError("calibration needs at least one pulse family");
  for (const auto& m : measurements) {
    validate(m.trace);
    if (const auto problems = validate(m.stack); !problems.empty()) {
      throw InputError(fmt::format("calibration geometry: {}", problems.front()));
    }
  }

  CalibrationResult out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t fi = 0; fi < opts.families.size(); ++fi) {
    const PulseFamily family = opts.families[fi];
    std::vector<GridSpec> grids;
    for (const auto& m : measurements) grids.push_back(calibration_grid(m.stack, family, opts));

    const Objective objective = [&](const ParameterVector& x) {
      const SourcePulse pulse{family, x[0], 1.0, std::nullopt};
      double total = 0.0;
      for (std::size_t i = 0; i < measurements.size(); ++i) {
        total += compare_for_calibration(measurements[i], pulse, grids[i]).relative_error;
      }
      return total;
    };
    BOOptions bo = opts.bo;
    bo.seed = opts.bo.seed + 1000003ULL * fi;
    FamilyCalibration fc{family, minimize(objective, {opts.f_low}, {opts.f_high}, bo, pool)};
    spdlog::info("calibration: {} best f_c = {:.6g} Hz, misfit {:.4f}%", to_string(family),
                 fc.result.best_theta[0], fc.result.best_value);
    if (fc.result.best_value < best) {
      best = fc.result.best_value;
      out.pulse = SourcePulse{family, fc.result.best_theta[0], 1.0, std::nullopt};
      out.misfit = best;
    }
    out.per_family.push_back(std::move(fc));
  }
  return out;
}

}  // namespace gprinv
