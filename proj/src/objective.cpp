#include "gprinv/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "gprinv/error.hpp"

namespace gprinv {

namespace {

void check_compatible(const AScan& y, const AScan& y_sim) {
  if (std::abs(y.dt - y_sim.dt) > 1e-9 * y.dt) {
    throw InputError(fmt::format("traces differ in dt ({:.6g} s vs {:.6g} s); resample first", y.dt, y_sim.dt));
  }
  if (y.size() != y_sim.size()) {
    throw InputError(fmt::format("trace length mismatch: {} vs {} samples", y.size(), y_sim.size()));
  }
  if (std::abs(y.t0 - y_sim.t0) > 1e-6 * y.dt) throw InputError("traces start at different times");
}

}  // namespace

ComparedPair prepare_comparison(const AScan& y, const AScan& y_sim, const ComparisonConfig& cfg) {
  check_compatible(y, y_sim);
  ComparedPair out;
  AScan a = y;
  AScan b = y_sim;
  if (cfg.alignment == Alignment::Peak) {
    out.shift = align(a, b).shift;
    b = shift(b, -out.shift);
  }
  if (cfg.domain == CompareDomain::Envelope) {
    a = envelope(a);
    b = envelope(b);
  }
  if (cfg.window) {
    a = window(a, cfg.window->t_start, cfg.window->t_end);
    b = window(b, cfg.window->t_start, cfg.window->t_end);
  }
  out.y = std::move(a.samples);
  out.y_sim = std::move(b.samples);
  return out;
}

double relative_error(std::span<const double> y, std::span<const double> y_sim) {
  if (y.size() != y_sim.size()) {
    throw InputError(fmt::format("trace length mismatch: {} vs {} samples", y.size(), y_sim.size()));
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_sim[i];
    num += r * r;
    den += y[i] * y[i];
  }
  if (!(den > 0.0)) throw InputError("reference trace is zero over the comparison window");
  return std::sqrt(num / den) * 100.0;
}

double relative_error(const AScan& y, const AScan& y_sim, const ComparisonConfig& cfg) {
  const auto p = prepare_comparison(y, y_sim, cfg);
  return relative_error(p.y, p.y_sim);
}

double log_likelihood(std::span<const double> y, std::span<const double> y_sim, double sigma) {
  if (y.size() != y_sim.size()) {
    throw InputError(fmt::format("trace length mismatch: {} vs {} samples", y.size(), y_sim.size()));
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("noise sigma must be positive");
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = (y_sim[i] - y[i]) / sigma;
    ss += r * r;
  }
  const double norm = std::log(std::sqrt(2.0 * std::numbers::pi) * sigma);
  return -0.5 * ss - static_cast<double>(y.size()) * norm;
}

double log_likelihood(const AScan& y, const AScan& y_sim, const NoiseModel& noise, const ComparisonConfig& cfg) {
  const auto p = prepare_comparison(y, y_sim, cfg);
  return log_likelihood(p.y, p.y_sim, noise.sigma_noise);
}

NoiseModel default_noise(const AScan& y, const ComparisonConfig& cfg, double fraction) {
  AScan env = envelope(y);
  if (cfg.window) env = window(env, cfg.window->t_start, cfg.window->t_end);
  const double peak = *std::max_element(env.samples.begin(), env.samples.end());
  if (!(peak > 0.0)) throw InputError("measured trace is zero; cannot derive a noise level");
  return {fraction * peak};
}

PosteriorValue evaluate_log_posterior(const ParameterVector& theta, const AScan& y, const ForwardModel& forward,
                                      const ParameterSpace& space, const NoiseModel& noise,
                                      const ComparisonConfig& cfg) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (theta.size() != space.dim()) {
    throw InputError(fmt::format("parameter vector has {} entries, space has {}", theta.size(), space.dim()));
  }
  if (!space.contains(theta)) return {kNegInf, true, false};
  AScan sim;
  try {
    sim = forward(theta);
  } catch (const NumericalError& e) {
    spdlog::warn("forward model failed at theta = [{}]: {}", fmt::join(theta, ", "), e.what());
    return {kNegInf, false, true};
  } catch (const InputError& e) {
    spdlog::warn("forward model rejected theta = [{}]: {}", fmt::join(theta, ", "), e.what());
    return {kNegInf, false, true};
  }
  const double ll = log_likelihood(y, sim, noise, cfg);
  if (!std::isfinite(ll)) return {kNegInf, false, true};
  return {ll, false, false};
}

double log_posterior(const ParameterVector& theta, const AScan& y, const ForwardModel& forward,
                     const ParameterSpace& space, const NoiseModel& noise, const ComparisonConfig& cfg) {
  return evaluate_log_posterior(theta, y, forward, space, noise, cfg).value;
}

}  // namespace gprinv
