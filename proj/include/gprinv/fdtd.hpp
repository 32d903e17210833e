#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "gprinv/scene.hpp"
#include "gprinv/signal.hpp"

namespace gprinv {

enum class PulseFamily { Gaussian, GaussianDerivative, GaussianDerivativeNormalized, Ricker };

inline constexpr PulseFamily kAllPulseFamilies[] = {PulseFamily::Gaussian, PulseFamily::GaussianDerivative,
                                                   PulseFamily::GaussianDerivativeNormalized, PulseFamily::Ricker};

std::string_view to_string(PulseFamily f);
PulseFamily parse_pulse_family(std::string_view s);

/// Transmitted pulse. With zeta = 2 pi^2 f_c^2 and tau = t - delay:
///   gaussian                        A exp(-zeta tau^2)
///   gaussian-derivative             d/dt of the gaussian
///   gaussian-derivative-normalized  the derivative scaled to peak magnitude A
///   ricker                          A (1 - 2 zeta tau^2) exp(-zeta tau^2)
struct SourcePulse {
  PulseFamily family = PulseFamily::Gaussian;
  double f_c = 1.579e9;   ///< Hz
  double amplitude = 1.0;
  std::optional<double> delay;  ///< s, defaults to 1/f_c

  double effective_delay() const { return delay.value_or(1.0 / f_c); }
};

void validate(const SourcePulse& p);
double pulse_value(const SourcePulse& p, double t);

struct GridOptions {
  int points_per_wavelength = 20;
  double courant = 0.99;
  int min_cells_per_layer = 4;
  /// Frequency, as a multiple of f_c, at which the E-update coefficients are
  /// tuned so the discrete phase velocity is exact in every medium. 0 keeps
  /// the plain Yee coefficients.
  double dispersion_match = 1.5;
  /// Keep dielectric interfaces where they are: the cell they cut gets the
  /// thickness-weighted eps and sigma of its two media. The reflector still
  /// sits on a node. Off by default, where every interface is snapped.
  bool subcell = false;
};

/// Uniform 1-D Yee grid. Node 0 is the absorbing top boundary; the antenna
/// sits at source_index and interfaces are snapped to the nearest node.
struct GridSpec {
  double dx = 0.0;
  double dt = 0.0;
  std::size_t n_cells = 0;         ///< number of E nodes
  std::size_t source_index = 0;
  std::size_t receiver_index = 0;
  std::size_t n_steps = 0;         ///< samples in the recorded trace
  double dispersion_match = 0.0;   ///< match frequency over the pulse's f_c; 0 disables
  bool subcell = false;            ///< see GridOptions::subcell
  LayerStack snapped;              ///< discretized geometry of the stack passed to discretize()
};

/// Air cells kept between the top boundary and the antenna.
inline constexpr std::size_t kTopPadding = 10;

/// Stack with every interface moved to the nearest multiple of dx below the
/// antenna. With `subcell` only a conductor's depth moves (through the last
/// layer, or the air gap when there are no layers).
LayerStack snap(const LayerStack& stack, double dx, bool subcell = false);

/// dx = lambda_min / ppw with lambda_min taken at 2 f_c in the densest medium,
/// dt = courant dx / c, and enough steps for 1.5 two-way times plus four pulse delays.
GridSpec discretize(const LayerStack& stack, const SourcePulse& pulse, const GridOptions& opts = {});

/// Leapfrog E/H time stepping with conductive loss, soft source, Mur top
/// boundary and PEC or absorbing half-space at the bottom. Returns E at the
/// receiver node, sampled every dt from t = 0.
AScan simulate(const LayerStack& stack, const SourcePulse& pulse, const GridSpec& grid);

}  // namespace gprinv
