#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "gprinv/fdtd.hpp"
#include "gprinv/scene.hpp"
#include "gprinv/signal.hpp"

/// Closed-form plane-wave electromagnetics for normal incidence on flat
/// layers. Independent of the FDTD kernel and used to check it.
namespace gprinv::oracle {

struct ComplexSpectrum {
  double df = 0.0;
  std::vector<std::complex<double>> values;
};

/// Lossless normal-incidence reflection coefficient going from a into b.
double fresnel(double eps_a, double eps_b);

/// Plane-wave attenuation constant (Np/m). Requires a loss tangent below 0.3;
/// use attenuation_constant_exact() outside that regime.
double attenuation_constant(double eps_r, double sigma, double f);
double attenuation_constant_exact(double eps_r, double sigma, double f);

/// Reflection coefficient seen from air at the top of the first layer, for
/// angular frequency omega > 0 (e^{+j omega t} convention).
std::complex<double> reflection_coefficient(const LayerStack& stack, double omega);

/// Transfer function 1 + Gamma(omega) exp(-j omega 2 air_gap / c) on the
/// non-negative FFT bins of an n-point grid with step dt.
ComplexSpectrum transfer_function(const LayerStack& stack, double dt, std::size_t n);

/// Received trace: the pulse plus its layered-media reflection, synthesized
/// in the frequency domain. n must be a power of two.
AScan reflectivity_response(const LayerStack& stack, const SourcePulse& pulse, double dt, std::size_t n);

}  // namespace gprinv::oracle
