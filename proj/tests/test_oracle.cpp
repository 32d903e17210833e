#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"
#include "gprinv/oracle.hpp"

using namespace gprinv;
using constants::kSpeedOfLight;

namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Direct pulse plus one echo of strength r delayed by tau, built in the time domain.
std::vector<double> echo_trace(const SourcePulse& p, double r, double tau, double dt, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    v[i] = pulse_value(p, t) + r * pulse_value(p, t - tau);
  }
  return v;
}

}  // namespace

TEST_CASE("fresnel") {
  CHECK(oracle::fresnel(1.0, 1.0) == 0.0);
  CHECK(oracle::fresnel(1.0, 9.0) == doctest::Approx(-0.5));
  CHECK(oracle::fresnel(9.0, 1.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(oracle::fresnel(0.5, 1.0), InputError);
}

TEST_CASE("attenuation_constant") {
  CHECK(oracle::attenuation_constant(9.0, 0.0, 1.579e9) == 0.0);
  const double eta0 = std::sqrt(constants::kMu0 / constants::kEps0);
  const double low_loss = 0.5 * 0.01 * eta0 / 3.0;
  const double a = oracle::attenuation_constant(9.0, 0.01, 1.579e9);
  CHECK(a == doctest::Approx(low_loss).epsilon(1e-3));
  CHECK(a == doctest::Approx(0.628).epsilon(1e-3));
  const double a2 = oracle::attenuation_constant(9.0, 0.02, 1.579e9);
  CHECK(a2 / a == doctest::Approx(2.0).epsilon(0.01));
  CHECK_THROWS_AS(oracle::attenuation_constant(1.0, 1.0, 1e8), InputError);
  CHECK(oracle::attenuation_constant_exact(1.0, 1.0, 1e8) > 0.0);
}

TEST_CASE("single interface response is a scaled, delayed copy") {
  SourcePulse p;
  LayerStack s;
  s.air_gap = 0.12;
  s.termination = HalfSpace{9.0, 0.0};
  const double dt = 1e-12;
  const std::size_t n = 8192;
  const AScan r = oracle::reflectivity_response(s, p, dt, n);
  const auto expected = echo_trace(p, -0.5, 2.0 * 0.12 / kSpeedOfLight, dt, n);
  REQUIRE(r.size() == n);
  CHECK(r.dt == dt);
  CHECK(r.t0 == 0.0);
  for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(r.samples[i] - expected[i]) < 1e-3);
}

TEST_CASE("metal plate in air inverts the pulse at the two-way time") {
  SourcePulse p;
  LayerStack s;
  s.air_gap = 0.24;
  const double dt = 1e-12;
  const std::size_t n = 8192;
  const AScan r = oracle::reflectivity_response(s, p, dt, n);
  const double tau = 2.0 * 0.24 / kSpeedOfLight;
  CHECK(tau == doctest::Approx(1.6e-9));
  const auto expected = echo_trace(p, -1.0, tau, dt, n);
  for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(r.samples[i] - expected[i]) < 1e-3);
}

TEST_CASE("an index-matched layer is invisible") {
  SourcePulse p;
  LayerStack plain;
  plain.air_gap = 0.1;
  plain.layers.push_back({"soil", 0.2, 6.0, 0.0});
  LayerStack matched = plain;
  matched.layers[0].thickness = 0.05;
  matched.layers.push_back({"same", 0.15, 6.0, 0.0});
  const AScan a = oracle::reflectivity_response(plain, p, 2e-12, 4096);
  const AScan b = oracle::reflectivity_response(matched, p, 2e-12, 4096);
  const double scale = max_abs(a.samples);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.samples[i] - b.samples[i]) <= 1e-10 * scale);
}

TEST_CASE("passive stacks never reflect more than they receive") {
  LayerStack s;
  s.air_gap = 0.05;
  s.layers.push_back({"organic", 0.04, 3.0, 0.003});
  s.layers.push_back({"soil", 0.11, 12.0, 0.02});
  s.termination = HalfSpace{25.0, 0.05};
  LayerStack pec = s;
  pec.termination = PerfectConductor{};
  for (int k = 1; k <= 2000; ++k) {
    const double w = 2.0 * std::numbers::pi * 5e6 * k;
    REQUIRE(std::abs(oracle::reflection_coefficient(s, w)) <= 1.0 + 1e-12);
    REQUIRE(std::abs(oracle::reflection_coefficient(pec, w)) <= 1.0 + 1e-12);
  }
  const double w = 2.0 * std::numbers::pi * 1e9;
  LayerStack lossless;
  lossless.layers.push_back({"slab", 0.1, 4.0, 0.0});
  CHECK(std::abs(oracle::reflection_coefficient(lossless, w)) == doctest::Approx(1.0));
}

TEST_CASE("the response is continuous in the parameters") {
  SourcePulse p;
  LayerStack s;
  s.air_gap = 0.1;
  s.layers.push_back({"soil", 0.15, 9.0, 0.01});
  const AScan base = oracle::reflectivity_response(s, p, 2e-12, 4096);
  const double norm = max_abs(base.samples);
  for (int which = 0; which < 3; ++which) {
    LayerStack q = s;
    if (which == 0) q.layers[0].eps_r *= 1.0 + 1e-6;
    if (which == 1) q.layers[0].thickness *= 1.0 + 1e-6;
    if (which == 2) q.layers[0].sigma *= 1.0 + 1e-6;
    const AScan b = oracle::reflectivity_response(q, p, 2e-12, 4096);
    double diff = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) diff = std::max(diff, std::abs(b.samples[i] - base.samples[i]));
    CHECK(diff < 1e-4 * norm);
  }
}

TEST_CASE("reflectivity_response argument checks") {
  SourcePulse p;
  LayerStack s;
  s.air_gap = 0.1;
  CHECK_THROWS_AS(oracle::reflectivity_response(s, p, 1e-12, 1000), InputError);
  CHECK_THROWS_AS(oracle::reflectivity_response(s, p, 1e-10, 1024), InputError);
  LayerStack bad = s;
  bad.layers.push_back({"x", -0.1, 4.0, 0.0});
  CHECK_THROWS_AS(oracle::reflectivity_response(bad, p, 1e-12, 1024), InputError);
}
