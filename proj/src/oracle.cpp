#include "gprinv/oracle.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"

namespace gprinv::oracle {

namespace {

using cplx = std::complex<double>;
using constants::kEps0;
using constants::kMu0;
using constants::kSpeedOfLight;

// Complex refractive index sqrt(eps_r - j sigma / (omega eps0)), Im <= 0.
cplx refractive_index(double eps_r, double sigma, double omega) {
  return std::sqrt(cplx(eps_r, -sigma / (omega * kEps0)));
}

cplx interface_reflection(cplx n_above, cplx n_below) { return (n_above - n_below) / (n_above + n_below); }

}  // namespace

double fresnel(double eps_a, double eps_b) {
  if (eps_a < 1.0 || eps_b < 1.0) throw InputError("fresnel: permittivities must be >= 1");
  const double a = std::sqrt(eps_a), b = std::sqrt(eps_b);
  return (a - b) / (a + b);
}

double attenuation_constant_exact(double eps_r, double sigma, double f) {
  if (eps_r < 1.0 || sigma < 0.0 || !(f > 0.0)) throw InputError("attenuation_constant: bad arguments");
  const double omega = 2.0 * std::numbers::pi * f;
  const double eps = kEps0 * eps_r;
  const double tan_delta = sigma / (omega * eps);
  return omega * std::sqrt(kMu0 * eps / 2.0) * std::sqrt(std::sqrt(1.0 + tan_delta * tan_delta) - 1.0);
}

double attenuation_constant(double eps_r, double sigma, double f) {
  if (eps_r < 1.0 || sigma < 0.0 || !(f > 0.0)) throw InputError("attenuation_constant: bad arguments");
  const double tan_delta = sigma / (2.0 * std::numbers::pi * f * kEps0 * eps_r);
  if (tan_delta >= 0.3) {
    throw InputError(fmt::format("loss tangent {:.3g} is outside the low-loss regime; use attenuation_constant_exact",
                                 tan_delta));
  }
  return attenuation_constant_exact(eps_r, sigma, f);
}

cplx reflection_coefficient(const LayerStack& stack, double omega) {
  if (!(omega > 0.0)) throw InputError("reflection_coefficient: omega must be positive");
  const cplx n_air(1.0, 0.0);
  const auto& layers = stack.layers;

  cplx gamma;
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination)) {
    const cplx n_last = layers.empty() ? n_air : refractive_index(layers.back().eps_r, layers.back().sigma, omega);
    gamma = interface_reflection(n_last, refractive_index(hs->eps_r, hs->sigma, omega));
  } else {
    gamma = -1.0;
  }
  // Walk up: propagate through each layer, then cross the interface above it.
  for (std::size_t k = layers.size(); k-- > 0;) {
    const cplx n_k = refractive_index(layers[k].eps_r, layers[k].sigma, omega);
    const cplx kz = omega * n_k / kSpeedOfLight;
    const cplx g_in = gamma * std::exp(cplx(0.0, -2.0) * kz * layers[k].thickness);
    const cplx n_above = k == 0 ? n_air : refractive_index(layers[k - 1].eps_r, layers[k - 1].sigma, omega);
    const cplx r = interface_reflection(n_above, n_k);
    gamma = (r + g_in) / (1.0 + r * g_in);
  }
  return gamma;
}

ComplexSpectrum transfer_function(const LayerStack& stack, double dt, std::size_t n) {
  if (n < 2 || (n & (n - 1)) != 0) throw InputError(fmt::format("oracle: n = {} is not a power of two", n));
  if (!(dt > 0.0)) throw InputError("oracle: dt must be positive");
  ComplexSpectrum h;
  h.df = 1.0 / (static_cast<double>(n) * dt);
  const double tau = 2.0 * stack.air_gap / kSpeedOfLight;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    // DC takes the omega -> 0+ limit.
    const double f = k == 0 ? 1e-6 * h.df : static_cast<double>(k) * h.df;
    const double omega = 2.0 * std::numbers::pi * f;
    const cplx gamma = reflection_coefficient(stack, omega);
    h.values.push_back(1.0 + gamma * std::exp(cplx(0.0, -omega * tau)));
  }
  return h;
}

AScan reflectivity_response(const LayerStack& stack, const SourcePulse& pulse, double dt, std::size_t n) {
  if (const auto problems = validate(stack); !problems.empty()) {
    throw InputError(fmt::format("invalid stack: {}", problems.front()));
  }
  validate(pulse);
  if (dt > 1.0 / (8.0 * 2.0 * pulse.f_c)) {
    throw InputError("oracle: dt too coarse for the pulse bandwidth (need 8 samples per period at 2 f_c)");
  }
  const ComplexSpectrum h = transfer_function(stack, dt, n);

  std::vector<cplx> time(n), freq;
  for (std::size_t i = 0; i < n; ++i) time[i] = pulse_value(pulse, static_cast<double>(i) * dt);
  Eigen::FFT<double> fft;
  fft.fwd(freq, time);
  for (std::size_t k = 0; k < n; ++k) {
    // Negative-frequency bins take the conjugate so the result stays real.
    freq[k] *= k <= n / 2 ? h.values[k] : std::conj(h.values[n - k]);
  }
  fft.inv(time, freq);

  AScan out{dt, 0.0, std::vector<double>(n), "oracle"};
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = time[i].real();
  return out;
}

}  // namespace gprinv::oracle
