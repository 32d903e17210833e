#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gprinv {

/// One received radar waveform, uniformly sampled in time.
struct AScan {
  double dt = 0.0;                ///< time step (s)
  double t0 = 0.0;                ///< time of the first sample (s)
  std::vector<double> samples;    ///< field amplitude per sample
  std::string label;              ///< free-form provenance

  std::size_t size() const { return samples.size(); }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  double end_time() const { return time(samples.empty() ? 0 : samples.size() - 1); }
};

/// Throws InputError unless dt > 0, at least two samples and all samples finite.
void validate(const AScan& a);

/// Magnitude of the discrete analytic signal (frequency-domain Hilbert transform).
AScan envelope(const AScan& a);

/// Linear interpolation onto t0 + k*dt_new over the original span.
AScan resample(const AScan& a, double dt_new);

/// Sub-trace covering [t_start, t_end].
AScan window(const AScan& a, double t_start, double t_end);

/// Delays a trace by k samples (k < 0 advances), zero-filling the vacated end.
AScan shift(const AScan& a, int k);

struct AlignResult {
  int shift = 0;           ///< delay of `other` relative to `reference`, in samples
  bool ambiguous = false;  ///< a second, equally strong dominant peak exists
};

/// Sample delay between the first dominant envelope peaks of two traces
/// sharing the same dt. align(x, shift(x, k)).shift == k.
AlignResult align(const AScan& reference, const AScan& other);

/// Highest sample of the earliest excursion reaching `fraction` of the global
/// maximum; an excursion lasts until the envelope drops below `fraction - 0.1`
/// of the maximum. Throws InputError for a flat sequence.
std::size_t first_dominant_peak(std::span<const double> values, double fraction = 0.9);

/// Fractional index of a local maximum refined with a three-point parabola.
double refine_peak(std::span<const double> values, std::size_t index);

/// CSV with header `time_s,amplitude`. The reader checks time uniformity to
/// one part in 1e6.
AScan read_ascan_csv(const std::filesystem::path& path);
void write_ascan_csv(const std::filesystem::path& path, const AScan& a);

}  // namespace gprinv
