#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "gprinv/bayesopt.hpp"
#include "gprinv/calibration.hpp"
#include "gprinv/fdtd.hpp"
#include "gprinv/mcmc.hpp"
#include "gprinv/objective.hpp"
#include "gprinv/scene.hpp"

namespace gprinv {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitNumerical = 3, kExitNotConverged = 4 };

/// Pulse file: {"family", "f_c_hz", "amplitude"?, "delay_s"?}.
SourcePulse parse_pulse(const nlohmann::json& j);
SourcePulse load_pulse(const std::filesystem::path& path);
nlohmann::json to_json(const SourcePulse& p);

nlohmann::json read_json_file(const std::filesystem::path& path);

struct McmcSettings {
  std::size_t walkers = 17;
  std::size_t steps = 2000;
  double burn_in = 0.5;
  /// "prior": uniform over the bounds. "bo": a small ball around a Bayesian
  /// optimization estimate.
  std::string init = "prior";
  double init_spread = 0.01;  ///< ball half-width as a fraction of each range
  /// Simplex iterations spent refining the optimization estimate before the
  /// ball is drawn; 0 uses the estimate as is.
  std::size_t polish = 200;
  double r_hat_threshold = 1.05;
};

struct InversionConfig {
  std::filesystem::path base_dir;
  SceneConfig scene;
  std::filesystem::path measurement;
  SourcePulse pulse;
  ComparisonConfig comparison{CompareDomain::Raw, std::nullopt, Alignment::Peak};
  std::optional<double> noise_sigma;
  double noise_fraction = 0.02;
  GridOptions grid;
  BOOptions bo;
  McmcSettings mcmc;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  nlohmann::json echo;
};

/// Relative paths inside the document are taken relative to base_dir.
InversionConfig parse_inversion_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
InversionConfig load_inversion_config(const std::filesystem::path& path);

/// One grid for the whole parameter box: dx from the densest admissible
/// medium, record length from the slowest and deepest admissible stack.
GridSpec inversion_grid(const LayerStack& stack, const ParameterSpace& space, const SourcePulse& pulse,
                        const GridOptions& opts);

/// Resample to dt, restart the time axis at 0 and pad or cut to n samples.
AScan conform_trace(const AScan& a, double dt, std::size_t n);

/// Forward model, data and likelihood settings for one inversion. Safe to
/// evaluate from several threads at once.
class InversionProblem {
 public:
  /// Without an explicit noise model, sigma is noise_fraction of the peak
  /// measured envelope.
  InversionProblem(LayerStack stack, ParameterSpace space, SourcePulse pulse, const GridOptions& grid,
                   const AScan& measured, ComparisonConfig comparison, std::optional<NoiseModel> noise,
                   double noise_fraction = 0.02);

  const LayerStack& stack() const { return stack_; }
  const ParameterSpace& space() const { return space_; }
  const SourcePulse& pulse() const { return pulse_; }
  const GridSpec& grid() const { return grid_; }
  const AScan& measured() const { return measured_; }
  const ComparisonConfig& comparison() const { return comparison_; }
  const NoiseModel& noise() const { return noise_; }

  AScan forward(const ParameterVector& theta) const;
  /// Relative error (%) against the measurement; NaN when the forward model fails.
  double misfit(const ParameterVector& theta) const;
  double log_posterior(const ParameterVector& theta) const;

  std::size_t forward_calls() const { return calls_.load(); }
  std::size_t forward_failures() const { return failures_.load(); }

 private:
  LayerStack stack_;
  ParameterSpace space_;
  SourcePulse pulse_;
  GridSpec grid_;
  AScan measured_;
  ComparisonConfig comparison_;
  NoiseModel noise_;
  mutable std::atomic<std::size_t> calls_{0};
  mutable std::atomic<std::size_t> failures_{0};
};

InversionProblem make_problem(const InversionConfig& cfg);

/// Adds zero-mean Gaussian noise with sd = fraction * peak |envelope|.
AScan add_noise(const AScan& a, double fraction, std::uint64_t seed);

struct RunOptions {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
};

/// Runs the inversion, writes every artifact and returns an exit code.
int run_bo_inversion(const InversionConfig& cfg, const RunOptions& run, WorkerPool* pool);
int run_mcmc_inversion(const InversionConfig& cfg, const RunOptions& run, WorkerPool* pool);

/// Moisture reporting for a permittivity estimate: vwc with its source eps_r
/// and guard status ("ok", "clamped" or "outside-validity-range").
struct ToppReport {
  double eps_r = 0.0;
  std::optional<double> vwc;
  std::string guard;
};
ToppReport topp_report(double eps_r);

struct CalibrationManifest {
  std::vector<CalibrationMeasurement> measurements;
  std::optional<double> f_low, f_high;
  std::optional<std::size_t> budget;
  std::vector<PulseFamily> families;
};

/// {"measurements": [{"trace": csv, "scene": json}], "band_hz"?: [lo, hi],
///  "budget"?: n, "families"?: [...]}
CalibrationManifest load_calibration_manifest(const std::filesystem::path& path);

int run_calibration(const CalibrationManifest& manifest, const CalibrationOptions& opts, const RunOptions& run,
                    WorkerPool* pool);

}  // namespace gprinv
