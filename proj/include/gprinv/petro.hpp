#pragma once

#include <string_view>

namespace gprinv {

enum class MoistureSource { Topp, Gravimetric, External };

std::string_view to_string(MoistureSource s);

struct MoistureValue {
  double vwc = 0.0;  ///< m^3/m^3
  MoistureSource source = MoistureSource::External;
  /// Topp: the cubic left [0, 1] and was clamped. Gravimetric: vwc exceeds 1.
  bool out_of_model = false;
};

/// Range of relative permittivity over which Topp's cubic is applied.
inline constexpr double kToppEpsMin = 1.5;
inline constexpr double kToppEpsMax = 40.0;

/// The raw cubic -0.053 + 0.0292 e - 5.5e-4 e^2 + 4.3e-6 e^3, no guard.
double topp_polynomial(double eps_r);

/// Volumetric water content from Topp's equation, clamped to [0, 1].
MoistureValue topp_vwc(double eps_r);

/// Inverse of the cubic on [1.5, 40] by bisection.
double topp_permittivity(double vwc);

/// (c dt / 2d)^2 with c = 3e8 m/s.
double traveltime_permittivity(double delta_t, double depth);

/// mwc * bulk density (g/cm^3) / water density (1 g/cm^3).
MoistureValue gravimetric_vwc(double mwc, double bulk_density);

}  // namespace gprinv
