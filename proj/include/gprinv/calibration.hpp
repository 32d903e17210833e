#pragma once

#include <cstdint>
#include <vector>

#include "gprinv/bayesopt.hpp"
#include "gprinv/fdtd.hpp"

namespace gprinv {

/// A recorded trace over a known geometry (typically a metal plate in air).
struct CalibrationMeasurement {
  AScan trace;
  LayerStack stack;
};

struct CalibrationOptions {
  double f_low = 0.5e9;
  double f_high = 5.0e9;
  std::vector<PulseFamily> families{std::begin(kAllPulseFamilies), std::end(kAllPulseFamilies)};
  BOOptions bo{30, 6, 0, 2048, 8};
  GridOptions grid;
};

struct FamilyCalibration {
  PulseFamily family = PulseFamily::Gaussian;
  BOResult result;
};

struct CalibrationResult {
  SourcePulse pulse;   ///< chosen family and f_c, unit amplitude, default delay
  double misfit = 0.0; ///< summed envelope relative error (%) at the optimum
  std::vector<FamilyCalibration> per_family;
};

/// Compares one measurement with a simulation for the given pulse: both on
/// the simulation time grid, envelopes scaled to equal peak, peaks aligned.
struct CalibrationComparison {
  AScan measured_envelope;
  AScan simulated_envelope;
  double relative_error = 0.0;  ///< %
};

/// Simulation grid that stays fixed while f_c moves through [f_low, f_high].
GridSpec calibration_grid(const LayerStack& stack, PulseFamily family, const CalibrationOptions& opts);

CalibrationComparison compare_for_calibration(const CalibrationMeasurement& m, const SourcePulse& pulse,
                                              const GridSpec& grid);

/// Summed envelope misfit over all measurements for one family and f_c.
double calibration_misfit(const std::vector<CalibrationMeasurement>& ms, PulseFamily family, double f_c,
                          const CalibrationOptions& opts);

/// One Bayesian optimization over f_c per family; the lowest misfit wins,
/// with ties going to the family listed first.
CalibrationResult calibrate_pulse(const std::vector<CalibrationMeasurement>& measurements,
                                  const CalibrationOptions& opts, WorkerPool* pool = nullptr);

}  // namespace gprinv
