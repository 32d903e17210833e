#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"
#include "gprinv/fdtd.hpp"
#include "gprinv/oracle.hpp"
#include "gprinv/signal.hpp"
#include "support.hpp"

using namespace gprinv;
using constants::kSpeedOfLight;

namespace {

LayerStack air_plate(double d) {
  LayerStack s;
  s.air_gap = d;
  return s;
}

LayerStack soil_over_plate(double gap, double d, double eps, double sigma) {
  LayerStack s;
  s.air_gap = gap;
  s.layers.push_back({"soil", d, eps, sigma});
  return s;
}

struct Echo {
  double direct_time;
  double echo_time;
  double direct_amp;
  double echo_amp;
};

// Direct arrival and the strongest envelope peak near the expected echo time.
Echo measure(const LayerStack& s, const SourcePulse& p, const GridOptions& o, double expected_delay) {
  const GridSpec g = discretize(s, p, o);
  const AScan env = envelope(simulate(s, p, g));
  const double chi = p.effective_delay();
  const double half = 0.5 / p.f_c;
  Echo e{};
  e.direct_time = testing::peak_time(env, chi - half, chi + half);
  e.direct_amp = testing::peak_value(env, chi - half, chi + half);
  e.echo_time = testing::peak_time(env, chi + expected_delay - half, chi + expected_delay + half);
  e.echo_amp = testing::peak_value(env, chi + expected_delay - half, chi + expected_delay + half);
  return e;
}

// Same, timed on |raw| so that neighbouring echoes do not drag the peaks.
Echo measure_raw(const LayerStack& s, const SourcePulse& p, const GridOptions& o, double expected_delay) {
  const GridSpec g = discretize(s, p, o);
  AScan mag = simulate(s, p, g);
  for (double& v : mag.samples) v = std::abs(v);
  const double chi = p.effective_delay();
  const double half = 0.5 / p.f_c;
  Echo e{};
  e.direct_time = testing::peak_time(mag, chi - half, chi + half);
  e.direct_amp = testing::peak_value(mag, chi - half, chi + half);
  e.echo_time = testing::peak_time(mag, chi + expected_delay - half, chi + expected_delay + half);
  e.echo_amp = testing::peak_value(mag, chi + expected_delay - half, chi + expected_delay + half);
  return e;
}

}  // namespace

TEST_CASE("pulse_value at the delay") {
  SourcePulse p;
  CHECK(pulse_value(p, p.effective_delay()) == doctest::Approx(1.0));
  p.family = PulseFamily::Ricker;
  CHECK(pulse_value(p, p.effective_delay()) == doctest::Approx(1.0));
  p.family = PulseFamily::GaussianDerivative;
  CHECK(pulse_value(p, p.effective_delay()) == 0.0);
  p.family = PulseFamily::GaussianDerivativeNormalized;
  CHECK(pulse_value(p, p.effective_delay()) == 0.0);
}

TEST_CASE("pulse families match their formulas") {
  const double fc = 1.2e9;
  const double zeta = 2.0 * M_PI * M_PI * fc * fc;
  const double chi = 1.0 / fc;
  double dmax = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double t = 2.0 * chi * i / 4000.0;
    const double g = std::exp(-zeta * (t - chi) * (t - chi));
    SourcePulse p{PulseFamily::Gaussian, fc, 2.0, std::nullopt};
    CHECK(pulse_value(p, t) == doctest::Approx(2.0 * g));
    // Central difference of the gaussian as the derivative oracle.
    const double h = 1e-15;
    const double gp = std::exp(-zeta * (t + h - chi) * (t + h - chi));
    const double gm = std::exp(-zeta * (t - h - chi) * (t - h - chi));
    p.family = PulseFamily::GaussianDerivative;
    p.amplitude = 1.0;
    CHECK(pulse_value(p, t) == doctest::Approx((gp - gm) / (2 * h)).epsilon(1e-4).scale(1e9));
    p.family = PulseFamily::GaussianDerivativeNormalized;
    dmax = std::max(dmax, std::abs(pulse_value(p, t)));
    p.family = PulseFamily::Ricker;
    CHECK(pulse_value(p, t) == doctest::Approx((1.0 - 2.0 * zeta * (t - chi) * (t - chi)) * g));
  }
  CHECK(dmax == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("pulses start from rest") {
  // With the delay at 1/f_c the exponent at t = 0 is -2 pi^2, so the gaussian
  // is down by e^{-2 pi^2} and the other shapes by that times their prefactor.
  const double floor = std::exp(-2.0 * M_PI * M_PI);
  for (PulseFamily f : kAllPulseFamilies) {
    const SourcePulse p{f, 1.579e9, 1.0, std::nullopt};
    double peak = 0.0;
    for (int i = 0; i <= 20000; ++i) peak = std::max(peak, std::abs(pulse_value(p, 2.0 * i / 20000.0 / p.f_c)));
    const double ratio = std::abs(pulse_value(p, 0.0)) / peak;
    CAPTURE(to_string(f));
    CHECK(ratio <= (4.0 * M_PI * M_PI - 1.0) * floor);
  }
  CHECK(std::abs(pulse_value(SourcePulse{}, 0.0)) < 1e-8);
}

TEST_CASE("pulse validation") {
  CHECK_THROWS_AS(validate(SourcePulse{PulseFamily::Gaussian, 0.0, 1.0, std::nullopt}), InputError);
  CHECK_THROWS_AS(validate(SourcePulse{PulseFamily::Gaussian, 1e9, -1.0, std::nullopt}), InputError);
  CHECK_THROWS_AS(validate(SourcePulse{PulseFamily::Gaussian, 1e9, 1.0, -1e-9}), InputError);
  CHECK(parse_pulse_family("ricker") == PulseFamily::Ricker);
  CHECK_THROWS_AS(parse_pulse_family("sinc"), InputError);
}

TEST_CASE("discretize") {
  const SourcePulse p;
  const GridSpec air = discretize(air_plate(0.24), p);
  CHECK(air.dx == doctest::Approx(kSpeedOfLight / (2.0 * 1.579e9 * 20.0)));
  CHECK(air.dx == doctest::Approx(4.75e-3).epsilon(1e-3));
  CHECK(air.dt == doctest::Approx(0.99 * air.dx / kSpeedOfLight));
  const double duration = 1.5 * 1.6e-9 + 4.0 / 1.579e9;
  CHECK(static_cast<double>(air.n_steps - 1) * air.dt >= duration);

  const GridSpec soil = discretize(soil_over_plate(0.24, 0.15, 9.0, 0.0), p);
  CHECK(air.dx / soil.dx == doctest::Approx(3.0));

  try {
    discretize(soil_over_plate(0.24, 0.002, 1.0, 0.0), p);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("soil") != std::string::npos);
  }
  GridOptions bad;
  bad.courant = 1.5;
  CHECK_THROWS_AS(discretize(air_plate(0.24), p, bad), InputError);
}

TEST_CASE("snapped geometry lies on cell edges") {
  const SourcePulse p;
  const LayerStack s = soil_over_plate(0.1013, 0.1497, 9.0, 0.0);
  const GridSpec g = discretize(s, p);
  const double a = g.snapped.air_gap / g.dx;
  const double b = g.snapped.layers[0].thickness / g.dx;
  CHECK(std::abs(a - std::round(a)) < 1e-9);
  CHECK(std::abs(b - std::round(b)) < 1e-9);
  CHECK(std::abs(g.snapped.air_gap - s.air_gap) <= 0.5 * g.dx + 1e-12);
}

TEST_CASE("simulate refuses a Courant violation") {
  const SourcePulse p;
  const LayerStack s = air_plate(0.24);
  GridSpec g = discretize(s, p);
  g.dt = 1.01 * g.dx / kSpeedOfLight;
  CHECK_THROWS_AS(simulate(s, p, g), InputError);
}

TEST_CASE("simulate output layout") {
  const SourcePulse p;
  const LayerStack s = air_plate(0.24);
  const GridSpec g = discretize(s, p);
  const AScan a = simulate(s, p, g);
  CHECK(a.dt == g.dt);
  CHECK(a.t0 == 0.0);
  CHECK(a.size() == g.n_steps);
}

TEST_CASE("metal plate at 0.24 m: echo 1.600 ns after the direct arrival") {
  const SourcePulse p;
  const LayerStack s = air_plate(0.24);
  const GridSpec g = discretize(s, p);
  const Echo e = measure(s, p, {}, 1.6e-9);
  CHECK(std::abs((e.echo_time - e.direct_time) - two_way_time(g.snapped)) <= 2.0 * g.dt);
  CHECK(e.echo_amp == doctest::Approx(e.direct_amp).epsilon(0.02));
}

TEST_CASE("half-space of eps 9 reflects half the amplitude, inverted") {
  const SourcePulse p;
  LayerStack s;
  s.air_gap = 0.2;
  s.termination = HalfSpace{9.0, 0.0};
  const GridSpec g = discretize(s, p);
  const AScan raw = simulate(s, p, g);
  const AScan env = envelope(raw);
  const double tau = two_way_time(g.snapped);
  const double chi = p.effective_delay();
  const double direct = testing::peak_value(env, chi - 0.5e-9, chi + 0.5e-9);
  const double echo = testing::peak_value(env, chi + tau - 0.5e-9, chi + tau + 0.5e-9);
  CHECK(echo / direct == doctest::Approx(0.5).epsilon(0.03));
  const auto k = static_cast<std::size_t>(std::lround((chi + tau) / g.dt));
  CHECK(raw.samples[k] < 0.0);
  CHECK(raw.samples[k] == doctest::Approx(-0.5 * raw.samples[static_cast<std::size_t>(std::lround(chi / g.dt))]).epsilon(0.03));
}

TEST_CASE("lossless open system rings down") {
  const SourcePulse p;
  const LayerStack s = soil_over_plate(0.1, 0.05, 4.0, 0.0);
  GridSpec g = discretize(s, p);
  g.n_steps *= 6;
  const AScan a = simulate(s, p, g);
  double peak = 0.0, energy = 0.0;
  for (double v : a.samples) {
    peak = std::max(peak, std::abs(v));
    energy += v * v;
  }
  CHECK(std::isfinite(energy));
  double tail = 0.0;
  for (std::size_t i = a.size() - a.size() / 10; i < a.size(); ++i) tail = std::max(tail, std::abs(a.samples[i]));
  CHECK(tail < 1e-4 * peak);
}

TEST_CASE("doubling a layer doubles its share of the echo delay") {
  const SourcePulse p;
  const double gap = 0.1;
  // Whole cells, so that doubling survives snapping.
  const double dx = discretize(soil_over_plate(gap, 0.06, 4.0, 0.0), p).dx;
  for (double d : {25 * dx, 34 * dx}) {
    const LayerStack one = soil_over_plate(gap, d, 4.0, 0.0);
    const LayerStack two = soil_over_plate(gap, 2 * d, 4.0, 0.0);
    const GridSpec g1 = discretize(one, p);
    const GridSpec g2 = discretize(two, p);
    REQUIRE(g1.dt == g2.dt);
    const double air = 2.0 * g1.snapped.air_gap / kSpeedOfLight;
    const Echo e1 = measure_raw(one, p, {}, two_way_time(g1.snapped));
    const Echo e2 = measure_raw(two, p, {}, two_way_time(g2.snapped));
    const double share1 = e1.echo_time - e1.direct_time - air;
    const double share2 = e2.echo_time - e2.direct_time - air;
    CAPTURE(d);
    CHECK(std::abs(share2 - 2.0 * share1) <= 2.0 * g1.dt);
  }
}

TEST_CASE("more conductivity means a weaker bottom echo") {
  const SourcePulse p;
  double prev = INFINITY;
  for (double sigma : {0.0, 0.005, 0.01, 0.02, 0.04}) {
    const LayerStack s = soil_over_plate(0.1, 0.12, 9.0, sigma);
    const GridSpec g = discretize(s, p);
    const Echo e = measure(s, p, {}, two_way_time(g.snapped));
    CAPTURE(sigma);
    CHECK(e.echo_amp < prev);
    prev = e.echo_amp;
  }
}

TEST_CASE("more permittivity means a later bottom echo") {
  const SourcePulse p;
  double prev = 0.0;
  for (double eps : {3.0, 5.0, 7.0, 9.0, 12.0}) {
    const LayerStack s = soil_over_plate(0.1, 0.12, eps, 0.0);
    const GridSpec g = discretize(s, p);
    const Echo e = measure(s, p, {}, two_way_time(g.snapped));
    CAPTURE(eps);
    CHECK(e.echo_time > prev);
    prev = e.echo_time;
  }
}

TEST_CASE("fdtd agrees with the analytic response") {
  const SourcePulse p;
  LayerStack organic;
  organic.air_gap = 0.1;
  organic.layers.push_back({"organic", 0.05, 3.0, 0.002});
  organic.layers.push_back({"soil", 0.10, 9.0, 0.01});
  LayerStack halfspace;
  halfspace.air_gap = 0.15;
  halfspace.termination = HalfSpace{9.0, 0.005};
  for (const LayerStack& s : {air_plate(0.24), soil_over_plate(0.1, 0.15, 9.0, 0.0), organic, halfspace}) {
    const auto c = testing::compare_with_oracle(s, p);
    CHECK(c.error_percent < 2.0);
  }
}

TEST_CASE("slab attenuation follows the plane-wave constant") {
  const SourcePulse p;
  const double d = 0.15;
  const LayerStack lossy = soil_over_plate(0.1, d, 9.0, 0.01);
  const LayerStack clear = soil_over_plate(0.1, d, 9.0, 0.0);
  const GridSpec g = discretize(lossy, p);
  const Echo a = measure(lossy, p, {}, two_way_time(g.snapped));
  const Echo b = measure(clear, p, {}, two_way_time(g.snapped));
  const double expected = std::exp(-2.0 * oracle::attenuation_constant(9.0, 0.01, p.f_c) * g.snapped.layers[0].thickness);
  CHECK((a.echo_amp / b.echo_amp) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("halving dx barely moves the echo") {
  const SourcePulse p;
  const double dx = discretize(soil_over_plate(0.1, 0.12, 6.0, 0.005), p).dx;
  const LayerStack s = soil_over_plate(24 * dx, 30 * dx, 6.0, 0.005);
  GridOptions coarse;
  coarse.points_per_wavelength = 20;
  GridOptions fine;
  fine.points_per_wavelength = 40;
  const GridSpec gc = discretize(s, p, coarse);
  const GridSpec gf = discretize(s, p, fine);
  REQUIRE(two_way_time(gc.snapped) == doctest::Approx(two_way_time(gf.snapped)).epsilon(1e-9));
  const Echo c = measure(s, p, coarse, two_way_time(gc.snapped));
  const Echo f = measure(s, p, fine, two_way_time(gf.snapped));
  CHECK(std::abs(c.echo_time - f.echo_time) < gc.dt);
  CHECK(c.echo_amp == doctest::Approx(f.echo_amp).epsilon(0.01));
}

TEST_CASE("sub-cell media change nothing when interfaces sit on nodes") {
  const SourcePulse p;
  const double dx = discretize(soil_over_plate(0.1, 0.15, 9.0, 0.0), p).dx;
  LayerStack s = soil_over_plate(40 * dx, 50 * dx, 9.0, 0.01);
  s.layers.insert(s.layers.begin(), Layer{"organic", 20 * dx, 3.0, 0.002});
  GridOptions sub;
  sub.subcell = true;
  const GridSpec a = discretize(s, p);
  const GridSpec b = discretize(s, p, sub);
  REQUIRE(a.dx == b.dx);
  CHECK(simulate(s, p, a).samples == simulate(s, p, b).samples);
}

TEST_CASE("sub-cell media keep off-grid interfaces and still match the oracle") {
  const SourcePulse p;
  GridOptions sub;
  sub.subcell = true;
  LayerStack organic;
  organic.air_gap = 0.1013;
  organic.layers.push_back({"organic", 0.0517, 3.0, 0.002});
  organic.layers.push_back({"soil", 0.1234, 9.0, 0.01});
  LayerStack halfspace;
  halfspace.air_gap = 0.1337;
  halfspace.termination = HalfSpace{9.0, 0.005};
  for (const LayerStack& s : {organic, halfspace}) {
    const GridSpec g = discretize(s, p, sub);
    CHECK(g.snapped.air_gap == s.air_gap);
    CHECK(two_way_time(g.snapped) == doctest::Approx(two_way_time(s)).epsilon(0.01));
    const auto c = testing::compare_with_oracle(s, p, sub);
    CHECK(c.error_percent < 2.0);
  }
}

TEST_CASE("with sub-cell media the trace moves continuously with a thickness") {
  const SourcePulse p;
  GridOptions sub;
  sub.subcell = true;
  LayerStack s;
  s.air_gap = 0.1;
  s.layers = {{"organic", 0.10, 2.5, 0.002}, {"soil", 0.15, 5.47, 0.01}};
  const GridSpec g = discretize(s, p, sub);
  const AScan base = simulate(s, p, g);
  const ComparisonConfig raw{CompareDomain::Raw, std::nullopt, Alignment::None};
  // Ten steps of a tenth of a cell, organic gaining what the soil loses.
  double previous = 0.0;
  double largest_step = 0.0;
  for (int k = 1; k <= 10; ++k) {
    LayerStack t = s;
    t.layers[0].thickness += 0.1 * k * g.dx;
    t.layers[1].thickness -= 0.1 * k * g.dx;
    const double e = relative_error(base, simulate(t, p, g), raw);
    CHECK(e > previous);
    largest_step = std::max(largest_step, e - previous);
    previous = e;
  }
  // Snapped interfaces jump the whole way in a single step instead.
  LayerStack t = s;
  t.layers[0].thickness += g.dx;
  t.layers[1].thickness -= g.dx;
  const GridSpec snapped = discretize(s, p);
  const double jump = relative_error(simulate(s, p, snapped), simulate(t, p, snapped), raw);
  CHECK(largest_step < 0.3 * jump);
}

TEST_CASE("sub-cell snapping still puts the reflector on a node") {
  const SourcePulse p;
  GridOptions sub;
  sub.subcell = true;
  const LayerStack s = soil_over_plate(0.1013, 0.1497, 9.0, 0.0);
  const GridSpec g = discretize(s, p, sub);
  CHECK(g.snapped.air_gap == s.air_gap);
  const double bottom = (g.snapped.air_gap + g.snapped.layers[0].thickness) / g.dx;
  CHECK(std::abs(bottom - std::round(bottom)) < 1e-9);
  const GridSpec plate = discretize(air_plate(0.2431), p, sub);
  CHECK(std::abs(plate.snapped.air_gap / plate.dx - std::round(plate.snapped.air_gap / plate.dx)) < 1e-9);
}
