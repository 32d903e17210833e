#include "gprinv/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "gprinv/error.hpp"

namespace gprinv {

namespace {

std::vector<std::size_t> dominant_peaks(std::span<const double> v, double fraction) {
  if (v.empty()) throw InputError("peak search on an empty trace");
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double hi = *hi_it;
  if (!(hi > 0.0) || hi - *lo_it <= 1e-12 * std::max(1.0, std::abs(hi))) {
    throw InputError("flat trace: no envelope peak to align on");
  }
  // One peak per excursion above the threshold. An excursion ends only once
  // the envelope falls below a lower release level, so noise ripples that
  // cross the threshold on a single hump do not split it.
  const double threshold = fraction * hi;
  const double release = std::max(0.0, fraction - 0.1) * hi;
  const std::size_t n = v.size();
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < n;) {
    if (v[i] < threshold) {
      ++i;
      continue;
    }
    std::size_t best = i;
    for (; i < n && v[i] >= release; ++i) {
      if (v[i] > v[best]) best = i;
    }
    peaks.push_back(best);
  }
  return peaks;
}

bool has_equal_rival(std::span<const double> v, const std::vector<std::size_t>& peaks) {
  const double first = v[peaks.front()];
  const double hi = *std::max_element(v.begin(), v.end());
  for (std::size_t k = 1; k < peaks.size(); ++k) {
    if (std::abs(v[peaks[k]] - first) <= 1e-6 * hi) return true;
  }
  return false;
}

}  // namespace

void validate(const AScan& a) {
  if (!(a.dt > 0.0) || !std::isfinite(a.dt)) throw InputError("A-scan dt must be positive");
  if (!std::isfinite(a.t0)) throw InputError("A-scan t0 must be finite");
  if (a.samples.size() < 2) throw InputError("A-scan needs at least two samples");
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (!std::isfinite(a.samples[i])) {
      throw InputError(fmt::format("A-scan sample {} is not finite", i));
    }
  }
}

AScan envelope(const AScan& a) {
  validate(a);
  const std::size_t n = a.size();
  if (n < 4) throw InputError("envelope needs at least four samples");

  std::vector<std::complex<double>> time(n), freq;
  for (std::size_t i = 0; i < n; ++i) time[i] = a.samples[i];
  Eigen::FFT<double> fft;
  fft.fwd(freq, time);

  // Analytic signal: keep DC (and Nyquist for even n), double positive
  // frequencies, drop negative ones.
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < n; ++k) {
    if (k < (n + 1) / 2) {
      freq[k] *= 2.0;
    } else if (!(n % 2 == 0 && k == half)) {
      freq[k] = 0.0;
    }
  }
  fft.inv(time, freq);

  AScan out{a.dt, a.t0, std::vector<double>(n), a.label};
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = std::abs(time[i]);
  return out;
}

AScan resample(const AScan& a, double dt_new) {
  validate(a);
  if (!(dt_new > 0.0)) throw InputError("resample: dt_new must be positive");
  if (dt_new < a.dt / 100.0 || dt_new > a.dt * 100.0) {
    throw InputError("resample: dt_new must lie within [dt/100, 100*dt]");
  }
  const double span = static_cast<double>(a.size() - 1) * a.dt;
  const auto count = static_cast<std::size_t>(std::floor(span / dt_new + 1e-9)) + 1;
  AScan out{dt_new, a.t0, std::vector<double>(count), a.label};
  const std::size_t last = a.size() - 1;
  for (std::size_t k = 0; k < count; ++k) {
    const double x = static_cast<double>(k) * dt_new / a.dt;
    auto i = static_cast<std::size_t>(std::floor(x));
    if (i >= last) {
      out.samples[k] = a.samples[last];
      continue;
    }
    const double frac = x - static_cast<double>(i);
    out.samples[k] = a.samples[i] + frac * (a.samples[i + 1] - a.samples[i]);
  }
  return out;
}

AScan window(const AScan& a, double t_start, double t_end) {
  validate(a);
  if (!(t_start < t_end)) throw InputError("window: t_start must precede t_end");
  const double tol = 1e-9 * a.dt;
  if (t_start < a.t0 - tol || t_end > a.end_time() + tol) {
    throw InputError("window: bounds outside the trace");
  }
  const double eps = 1e-9;
  auto i0 = static_cast<std::size_t>(std::max(0.0, std::ceil((t_start - a.t0) / a.dt - eps)));
  auto i1 = static_cast<std::size_t>(std::floor((t_end - a.t0) / a.dt + eps));
  i1 = std::min(i1, a.size() - 1);
  if (i1 <= i0) throw InputError("window: fewer than two samples selected");
  AScan out{a.dt, a.time(i0), {}, a.label};
  out.samples.assign(a.samples.begin() + static_cast<std::ptrdiff_t>(i0),
                     a.samples.begin() + static_cast<std::ptrdiff_t>(i1) + 1);
  return out;
}

AScan shift(const AScan& a, int k) {
  AScan out{a.dt, a.t0, std::vector<double>(a.size(), 0.0), a.label};
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t src = i - k;
    if (src >= 0 && src < n) out.samples[static_cast<std::size_t>(i)] = a.samples[static_cast<std::size_t>(src)];
  }
  return out;
}

std::size_t first_dominant_peak(std::span<const double> values, double fraction) {
  return dominant_peaks(values, fraction).front();
}

double refine_peak(std::span<const double> v, std::size_t i) {
  if (i == 0 || i + 1 >= v.size()) return static_cast<double>(i);
  const double ym = v[i - 1], y0 = v[i], yp = v[i + 1];
  const double denom = ym - 2.0 * y0 + yp;
  if (denom >= 0.0) return static_cast<double>(i);
  const double offset = 0.5 * (ym - yp) / denom;
  return static_cast<double>(i) + std::clamp(offset, -0.5, 0.5);
}

AlignResult align(const AScan& reference, const AScan& other) {
  if (std::abs(reference.dt - other.dt) > 1e-9 * reference.dt) {
    throw InputError("align: traces must share dt (resample first)");
  }
  const AScan env_ref = envelope(reference);
  const AScan env_other = envelope(other);
  const auto peaks_ref = dominant_peaks(env_ref.samples, 0.9);
  const auto peaks_other = dominant_peaks(env_other.samples, 0.9);
  AlignResult r;
  r.shift = static_cast<int>(peaks_other.front()) - static_cast<int>(peaks_ref.front());
  r.ambiguous = has_equal_rival(env_ref.samples, peaks_ref) ||
                has_equal_rival(env_other.samples, peaks_other);
  return r;
}

AScan read_ascan_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open A-scan file '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw InputError(fmt::format("'{}' is empty", path.string()));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time_s,amplitude") {
    throw InputError(fmt::format("'{}': expected header 'time_s,amplitude'", path.string()));
  }
  std::vector<double> times, values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw InputError(fmt::format("'{}' row {}: expected two columns", path.string(), row));
    }
    try {
      std::size_t used = 0;
      const std::string ts = line.substr(0, comma), vs = line.substr(comma + 1);
      times.push_back(std::stod(ts, &used));
      if (used != ts.size()) throw std::invalid_argument(ts);
      values.push_back(std::stod(vs, &used));
      if (used != vs.size()) throw std::invalid_argument(vs);
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("'{}' row {}: not a number", path.string(), row));
    }
  }
  if (times.size() < 2) throw InputError(fmt::format("'{}': fewer than two samples", path.string()));

  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0.0)) throw InputError(fmt::format("'{}': time must increase", path.string()));
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = times[i] - times[i - 1];
    if (std::abs(step - dt) > 1e-6 * dt) {
      throw InputError(fmt::format("'{}': non-uniform time step at row {}", path.string(), i + 2));
    }
  }
  AScan a{dt, times.front(), std::move(values), path.filename().string()};
  validate(a);
  return a;
}

void write_ascan_csv(const std::filesystem::path& path, const AScan& a) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << "time_s,amplitude\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    out << fmt::format("{:.17g},{:.17g}\n", a.time(i), a.samples[i]);
  }
}

}  // namespace gprinv
