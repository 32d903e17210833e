#include "gprinv/petro.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"

namespace gprinv {

std::string_view to_string(MoistureSource s) {
  switch (s) {
    case MoistureSource::Topp: return "topp";
    case MoistureSource::Gravimetric: return "gravimetric";
    case MoistureSource::External: return "external";
  }
  return "unknown";
}

double topp_polynomial(double e) { return -0.053 + e * (0.0292 + e * (-5.5e-4 + e * 4.3e-6)); }

MoistureValue topp_vwc(double eps_r) {
  if (!(eps_r >= kToppEpsMin && eps_r <= kToppEpsMax)) {
    throw InputError(fmt::format("eps_r = {:.6g} is outside the Topp validity range [{}, {}]", eps_r, kToppEpsMin,
                                 kToppEpsMax));
  }
  const double raw = topp_polynomial(eps_r);
  const double v = std::clamp(raw, 0.0, 1.0);
  return {v, MoistureSource::Topp, v != raw};
}

double topp_permittivity(double vwc) {
  const double lo_v = topp_polynomial(kToppEpsMin);
  const double hi_v = topp_polynomial(kToppEpsMax);
  if (!(vwc >= lo_v && vwc <= hi_v)) {
    throw InputError(fmt::format("vwc = {:.6g} is not attainable by Topp's equation on [{}, {}] (range {:.4f} to {:.4f})",
                                 vwc, kToppEpsMin, kToppEpsMax, lo_v, hi_v));
  }
  double lo = kToppEpsMin, hi = kToppEpsMax;
  while (hi - lo > 1e-11) {
    const double mid = 0.5 * (lo + hi);
    (topp_polynomial(mid) < vwc ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double traveltime_permittivity(double delta_t, double depth) {
  if (!(delta_t > 0.0)) throw InputError("travel time must be positive");
  if (!(depth > 0.0)) throw InputError("depth must be positive");
  const double r = constants::kSpeedOfLight * delta_t / (2.0 * depth);
  return r * r;
}

MoistureValue gravimetric_vwc(double mwc, double bulk_density) {
  if (!(mwc >= 0.0)) throw InputError("mass water content must be non-negative");
  if (!(bulk_density > 0.0)) throw InputError("bulk density must be positive");
  const double v = mwc * bulk_density / 1.0;
  return {v, MoistureSource::Gravimetric, v > 1.0};
}

}  // namespace gprinv
