#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gprinv/executor.hpp"
#include "gprinv/scene.hpp"

namespace gprinv {

using LogDensity = std::function<double(const ParameterVector&)>;

/// Ensemble positions after every step. Position (s, w) is the state of
/// walker w once step s has been applied.
struct Chain {
  std::size_t n_walkers = 0;
  std::size_t n_steps = 0;
  std::size_t dim = 0;
  std::vector<std::string> names;
  std::vector<double> samples;   ///< [step][walker][dim]
  std::vector<double> log_post;  ///< [step][walker]
  std::vector<std::size_t> accepted;  ///< per walker
  std::uint64_t seed = 0;
  std::size_t evaluations = 0;   ///< log-density calls (out-of-bounds proposals are not evaluated)
  std::size_t rejected_out_of_bounds = 0;

  double value(std::size_t step, std::size_t walker, std::size_t k) const {
    return samples[(step * n_walkers + walker) * dim + k];
  }
  std::span<const double> position(std::size_t step, std::size_t walker) const {
    return {samples.data() + (step * n_walkers + walker) * dim, dim};
  }
  double lp(std::size_t step, std::size_t walker) const { return log_post[step * n_walkers + walker]; }
};

struct SamplerOptions {
  std::size_t n_walkers = 17;
  std::size_t n_steps = 1000;
  std::uint64_t seed = 0;
  double stretch = 2.0;
  /// Starting positions, one per walker; uniform draws over the box when empty.
  std::vector<ParameterVector> initial;
};

/// Affine-invariant stretch-move ensemble sampler. Results depend only on the
/// seed, never on the pool or its size.
Chain sample(const LogDensity& log_post, const std::vector<double>& lower, const std::vector<double>& upper,
             std::vector<std::string> names, const SamplerOptions& opts, WorkerPool* pool = nullptr);

Chain sample(const LogDensity& log_post, const ParameterSpace& space, const SamplerOptions& opts,
             WorkerPool* pool = nullptr);

struct Diagnostics {
  std::vector<double> r_hat;  ///< NaN when a parameter never varies
  std::vector<double> ess;
  double acceptance = 0.0;
  std::size_t burn_in_steps = 0;
};

Diagnostics diagnostics(const Chain& c, double burn_in_fraction = 0.5);

/// Split-R-hat over a set of equally long traces, each split into halves.
double split_r_hat(const std::vector<std::vector<double>>& traces);

/// Integrated autocorrelation time (Geyer initial positive sequence).
double autocorrelation_time(std::span<const double> x);

struct Histogram {
  std::vector<double> edges;  ///< bins + 1 entries
  std::vector<std::size_t> counts;
};

struct Histogram2D {
  std::size_t i = 0, j = 0;  ///< parameter indices
  std::vector<double> x_edges, y_edges;
  std::vector<std::size_t> counts;  ///< row-major, x bins outer
};

struct MarginalSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double map = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Histogram histogram;
};

struct PosteriorSummary {
  std::vector<MarginalSummary> marginals;
  ParameterVector joint_map;
  double joint_map_log_post = 0.0;
  std::vector<Histogram2D> pairs;
  std::size_t n_samples = 0;
};

/// Freedman-Diaconis histogram; a single bin when the data have no spread.
Histogram fd_histogram(std::span<const double> x);

/// Linear-interpolation sample quantile, q in [0, 1].
double quantile(std::vector<double> x, double q);

PosteriorSummary summarize(const Chain& c, double burn_in_fraction = 0.5);

/// Columns: step, walker, one per parameter, log_posterior.
void write_chain_csv(const std::filesystem::path& path, const Chain& c);
/// Reads the CSV written above. Acceptance counts are reconstructed from
/// position changes between consecutive steps.
Chain read_chain_csv(const std::filesystem::path& path);

nlohmann::json to_json(const Diagnostics& d, const std::vector<std::string>& names);
nlohmann::json to_json(const PosteriorSummary& s);

}  // namespace gprinv
