#include <doctest.h>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"
#include "gprinv/petro.hpp"
#include "gprinv/scene.hpp"

using namespace gprinv;

namespace {

// Evaluated term by term, independently of the library's Horner form.
double cubic(double e) { return -0.053 + 0.0292 * e - 5.5e-4 * e * e + 4.3e-6 * e * e * e; }

}  // namespace

TEST_CASE("topp_vwc reference values") {
  CHECK(std::abs(topp_vwc(10.2).vwc - cubic(10.2)) < 1e-12);
  CHECK(std::abs(topp_vwc(10.2).vwc - 0.1922) < 1e-4);
  CHECK(std::abs(topp_vwc(5.47).vwc - 0.0910) < 1e-4);
  CHECK(topp_vwc(5.47).source == MoistureSource::Topp);
  CHECK_FALSE(topp_vwc(5.47).out_of_model);
}

TEST_CASE("topp_vwc guard and clamp") {
  CHECK_THROWS_AS(topp_vwc(1.4), InputError);
  CHECK_THROWS_AS(topp_vwc(40.5), InputError);
  const MoistureValue dry = topp_vwc(1.5);
  CHECK(cubic(1.5) < 0.0);
  CHECK(dry.vwc == 0.0);
  CHECK(dry.out_of_model);
}

TEST_CASE("topp_vwc is strictly increasing on the validity range") {
  double prev = topp_polynomial(kToppEpsMin);
  for (int i = 1; i <= 10000; ++i) {
    const double e = kToppEpsMin + (kToppEpsMax - kToppEpsMin) * i / 10000.0;
    const double v = topp_polynomial(e);
    REQUIRE(v > prev);
    prev = v;
  }
}

TEST_CASE("topp_permittivity inverts the cubic") {
  CHECK(std::abs(topp_permittivity(topp_vwc(9.0).vwc) - 9.0) < 1e-6);
  CHECK(std::abs(topp_permittivity(0.1922) - 10.2) < 1e-3);
  CHECK_THROWS_AS(topp_permittivity(0.9), InputError);
  CHECK(cubic(40.0) < 0.9);
  for (int i = 0; i <= 380; ++i) {
    const double e = 2.0 + 0.1 * i;
    CHECK(std::abs(topp_permittivity(cubic(e)) - e) < 1e-6);
  }
}

TEST_CASE("traveltime_permittivity") {
  CHECK(traveltime_permittivity(3.0e-9, 0.15) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(traveltime_permittivity(1.0e-9, 0.15) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(traveltime_permittivity(1.0e-9, 0.0), InputError);
  CHECK_THROWS_AS(traveltime_permittivity(0.0, 0.1), InputError);
  CHECK_THROWS_AS(traveltime_permittivity(-1e-9, 0.1), InputError);
}

TEST_CASE("traveltime_permittivity agrees with two_way_time") {
  for (double eps : {1.0, 2.5, 9.0, 27.3}) {
    LayerStack s;
    s.layers.push_back({"slab", 0.137, eps, 0.0});
    CHECK(std::abs(traveltime_permittivity(two_way_time(s), 0.137) - eps) < 1e-9);
  }
}

TEST_CASE("gravimetric_vwc") {
  CHECK(gravimetric_vwc(0.10, 1.5).vwc == doctest::Approx(0.15));
  CHECK(gravimetric_vwc(0.10, 1.5).source == MoistureSource::Gravimetric);
  CHECK(gravimetric_vwc(0.0, 1.5).vwc == 0.0);
  CHECK_THROWS_AS(gravimetric_vwc(0.1, 0.0), InputError);
  CHECK_THROWS_AS(gravimetric_vwc(-0.1, 1.5), InputError);
  CHECK(gravimetric_vwc(0.8, 1.6).out_of_model);
  CHECK_FALSE(gravimetric_vwc(0.2, 1.6).out_of_model);
}
