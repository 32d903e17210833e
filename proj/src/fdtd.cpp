#include "gprinv/fdtd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <fmt/format.h>

#include "gprinv/constants.hpp"
#include "gprinv/error.hpp"

namespace gprinv {

namespace {

using constants::kEps0;
using constants::kSpeedOfLight;

struct Medium {
  double eps_r = 1.0;
  double sigma = 0.0;
};

// Interface node offsets below the antenna: [air/first layer, ..., last interface].
std::vector<long> interface_offsets(const LayerStack& stack, double dx) {
  std::vector<long> z;
  double depth = stack.air_gap;
  z.push_back(std::lround(depth / dx));
  for (const auto& l : stack.layers) {
    depth += l.thickness;
    z.push_back(std::lround(depth / dx));
  }
  return z;
}

// Scales the E update so that sin^2(w dt/2) = (S^2 / eps) sin^2(k dx/2) holds
// with the exact wavenumber k = w sqrt(eps) / c at the match frequency.
double dispersion_factor(double eps, double courant, const GridSpec& grid, double f_c) {
  if (!(grid.dispersion_match > 0.0)) return 1.0;
  const double w = 2.0 * std::numbers::pi * grid.dispersion_match * f_c;
  const double a = std::sin(0.5 * w * grid.dt);
  const double kdx = 0.5 * w * std::sqrt(eps) * grid.dx / kSpeedOfLight;
  // Past a quarter wavelength per cell the match is meaningless; keep Yee.
  if (kdx >= 0.5 * std::numbers::pi) return 1.0;
  const double b = std::sin(kdx);
  return std::min(eps * a * a / (courant * courant * b * b), eps / (courant * courant));
}

}  // namespace

std::string_view to_string(PulseFamily f) {
  switch (f) {
    case PulseFamily::Gaussian: return "gaussian";
    case PulseFamily::GaussianDerivative: return "gaussian-derivative";
    case PulseFamily::GaussianDerivativeNormalized: return "gaussian-derivative-normalized";
    case PulseFamily::Ricker: return "ricker";
  }
  return "unknown";
}

PulseFamily parse_pulse_family(std::string_view s) {
  for (PulseFamily f : kAllPulseFamilies) {
    if (s == to_string(f)) return f;
  }
  throw InputError(fmt::format("unknown pulse family '{}'", s));
}

void validate(const SourcePulse& p) {
  if (!(p.f_c > 0.0) || !std::isfinite(p.f_c)) throw InputError("pulse center frequency must be positive");
  if (!(p.amplitude > 0.0) || !std::isfinite(p.amplitude)) throw InputError("pulse amplitude must be positive");
  if (p.delay && (!(*p.delay >= 0.0) || !std::isfinite(*p.delay))) {
    throw InputError("pulse delay must be non-negative");
  }
}

double pulse_value(const SourcePulse& p, double t) {
  const double zeta = 2.0 * std::numbers::pi * std::numbers::pi * p.f_c * p.f_c;
  const double tau = t - p.effective_delay();
  const double g = std::exp(-zeta * tau * tau);
  switch (p.family) {
    case PulseFamily::Gaussian: return p.amplitude * g;
    case PulseFamily::GaussianDerivative: return -2.0 * zeta * tau * p.amplitude * g;
    case PulseFamily::GaussianDerivativeNormalized: {
      // |d/dt g| peaks at tau = 1/sqrt(2 zeta) with value sqrt(2 zeta) e^{-1/2}.
      const double peak = std::sqrt(2.0 * zeta) * std::exp(-0.5);
      return -2.0 * zeta * tau * g / peak * p.amplitude;
    }
    case PulseFamily::Ricker: return p.amplitude * (1.0 - 2.0 * zeta * tau * tau) * g;
  }
  return 0.0;
}

LayerStack snap(const LayerStack& stack, double dx, bool subcell) {
  const auto z = interface_offsets(stack, dx);
  LayerStack out = stack;
  if (subcell) {
    if (!stack.ends_in_conductor()) return out;
    double above = 0.0;  // depth of the top of the last layer
    if (!out.layers.empty()) {
      above = out.air_gap;
      for (std::size_t i = 0; i + 1 < out.layers.size(); ++i) above += out.layers[i].thickness;
    }
    const double bottom = static_cast<double>(z.back()) * dx;
    (out.layers.empty() ? out.air_gap : out.layers.back().thickness) = bottom - above;
    return out;
  }
  out.air_gap = static_cast<double>(z[0]) * dx;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    out.layers[i].thickness = static_cast<double>(z[i + 1] - z[i]) * dx;
  }
  return out;
}

GridSpec discretize(const LayerStack& stack, const SourcePulse& pulse, const GridOptions& opts) {
  if (const auto problems = validate(stack); !problems.empty()) {
    throw InputError(fmt::format("invalid stack: {}", problems.front()));
  }
  validate(pulse);
  if (opts.points_per_wavelength < 4) throw InputError("points_per_wavelength must be at least 4");
  if (!(opts.courant > 0.0 && opts.courant <= 1.0)) throw InputError("courant factor must lie in (0, 1]");
  if (!(opts.dispersion_match >= 0.0 && opts.dispersion_match <= 4.0)) {
    throw InputError("dispersion_match must lie in [0, 4]");
  }

  GridSpec g;
  const double lambda_min = kSpeedOfLight / (2.0 * pulse.f_c * std::sqrt(stack.max_eps_r()));
  g.dx = lambda_min / opts.points_per_wavelength;
  g.dt = opts.courant * g.dx / kSpeedOfLight;
  g.dispersion_match = opts.dispersion_match;
  g.subcell = opts.subcell;

  const auto z = interface_offsets(stack, g.dx);
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const long cells = z[i + 1] - z[i];
    if (cells < opts.min_cells_per_layer) {
      const auto& l = stack.layers[i];
      throw InputError(fmt::format("layer {}{} is {:.4g} m thick: {} cells at dx = {:.4g} m, need {}", i,
                                   l.name.empty() ? "" : " (" + l.name + ")", l.thickness, cells, g.dx,
                                   opts.min_cells_per_layer));
    }
  }
  g.snapped = snap(stack, g.dx, opts.subcell);

  const double duration = 1.5 * two_way_time(stack) + 4.0 * pulse.effective_delay();
  g.n_steps = static_cast<std::size_t>(std::ceil(duration / g.dt)) + 1;
  g.source_index = kTopPadding;
  g.receiver_index = kTopPadding;

  const auto last = static_cast<std::size_t>(z.back()) + kTopPadding;
  if (const auto* hs = std::get_if<HalfSpace>(&stack.termination)) {
    // Long enough that nothing returns from the bottom boundary within the record.
    const double travel = static_cast<double>(g.n_steps) * g.dt * kSpeedOfLight / std::sqrt(hs->eps_r);
    g.n_cells = last + static_cast<std::size_t>(std::ceil(0.5 * travel / g.dx)) + kTopPadding;
  } else {
    g.n_cells = last + 1;
  }
  return g;
}

AScan simulate(const LayerStack& stack, const SourcePulse& pulse, const GridSpec& grid) {
  if (const auto problems = validate(stack); !problems.empty()) {
    throw InputError(fmt::format("invalid stack: {}", problems.front()));
  }
  validate(pulse);
  if (!(grid.dx > 0.0) || !(grid.dt > 0.0) || grid.n_steps < 2) throw InputError("malformed grid");
  const double courant = kSpeedOfLight * grid.dt / grid.dx;
  if (courant > 1.0 + 1e-12) {
    throw InputError(fmt::format("Courant condition violated (c dt / dx = {:.6f} > 1)", courant));
  }

  const auto z = interface_offsets(stack, grid.dx);
  std::vector<std::size_t> nodes;
  for (long off : z) nodes.push_back(grid.source_index + static_cast<std::size_t>(off));
  if (grid.source_index < 1 || grid.source_index > nodes.front() || grid.receiver_index > nodes.front()) {
    throw InputError("source and receiver must lie above the first interface");
  }
  const bool pec = stack.ends_in_conductor();
  if (nodes.back() + (pec ? 1 : 3) > grid.n_cells) {
    throw InputError("grid too short for this stack");
  }
  const std::size_t n = pec ? nodes.back() + 1 : grid.n_cells;

  // Interface positions in node units; only a reflector is pinned to a node
  // when sub-cell media are on.
  std::vector<double> edges;
  {
    double depth = stack.air_gap;
    edges.push_back(grid.subcell ? static_cast<double>(grid.source_index) + depth / grid.dx
                                 : static_cast<double>(nodes[0]));
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
      depth += stack.layers[i].thickness;
      edges.push_back(grid.subcell ? static_cast<double>(grid.source_index) + depth / grid.dx
                                   : static_cast<double>(nodes[i + 1]));
    }
    if (pec) edges.back() = static_cast<double>(nodes.back());
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      if (!(edges[i + 1] > edges[i])) throw InputError(fmt::format("layer {} vanishes at dx = {:.4g} m", i, grid.dx));
    }
  }
  const auto region = [&](std::size_t r) -> Medium {
    if (r == 0) return {};
    if (r <= stack.layers.size()) return {stack.layers[r - 1].eps_r, stack.layers[r - 1].sigma};
    if (pec) return {stack.layers.empty() ? 1.0 : stack.layers.back().eps_r, 0.0};  // never overlapped
    const auto& hs = std::get<HalfSpace>(stack.termination);
    return {hs.eps_r, hs.sigma};
  };

  // Per-cell media; cell i spans nodes i and i + 1 and takes the
  // overlap-weighted average of the regions it meets.
  std::vector<Medium> cells(n - 1, Medium{0.0, 0.0});
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double lo = static_cast<double>(i), hi = lo + 1.0;
    for (std::size_t r = 0; r <= edges.size(); ++r) {
      const double a = r == 0 ? -1.0 : edges[r - 1];
      const double b = r == edges.size() ? static_cast<double>(n) + 1.0 : edges[r];
      const double w = std::min(hi, b) - std::max(lo, a);
      if (w <= 0.0) continue;
      const Medium m = region(r);
      cells[i].eps_r += w * m.eps_r;
      cells[i].sigma += w * m.sigma;
    }
  }

  // Semi-implicit lossy update coefficients at E nodes, media averaged across
  // the two neighbouring cells.
  std::vector<double> ca(n, 1.0), cb(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double eps = 0.5 * (cells[i - 1].eps_r + cells[i].eps_r);
    const double sig = 0.5 * (cells[i - 1].sigma + cells[i].sigma);
    const double loss = sig * grid.dt / (2.0 * kEps0 * eps);
    ca[i] = (1.0 - loss) / (1.0 + loss);
    cb[i] = courant / eps / (1.0 + loss) * dispersion_factor(eps, courant, grid, pulse.f_c);
  }

  const double mur_top = (courant - 1.0) / (courant + 1.0);
  double mur_bottom = 0.0;
  if (!pec) {
    const double local = courant / std::sqrt(cells.back().eps_r);
    mur_bottom = (local - 1.0) / (local + 1.0);
  }

  // E in V/m, H scaled by the free-space impedance so both share units.
  std::vector<double> e(n, 0.0), h(n - 1, 0.0);
  AScan out{grid.dt, 0.0, std::vector<double>(grid.n_steps, 0.0), "fdtd"};
  const std::size_t src = grid.source_index;
  const std::size_t rcv = grid.receiver_index;

  for (std::size_t step = 0; step + 1 < grid.n_steps; ++step) {
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] += courant * (e[i + 1] - e[i]);

    const double e0_old = e[0], e1_old = e[1];
    const double eb_old = e[n - 1], eb1_old = e[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) e[i] = ca[i] * e[i] + cb[i] * (h[i] - h[i - 1]);

    // A current sheet radiating pulse_value(t) in each direction.
    const double t_half = (static_cast<double>(step) + 0.5) * grid.dt;
    e[src] += 2.0 * cb[src] * pulse_value(pulse, t_half);

    e[0] = e1_old + mur_top * (e[1] - e0_old);
    e[n - 1] = pec ? 0.0 : eb1_old + mur_bottom * (e[n - 2] - eb_old);

    const double v = e[rcv];
    if (!std::isfinite(v) ||
        ((step & 255U) == 255U && !std::all_of(e.begin(), e.end(), [](double x) { return std::isfinite(x); }))) {
      throw NumericalError(fmt::format("FDTD field became non-finite at step {}", step + 1));
    }
    out.samples[step + 1] = v;
  }
  return out;
}

}  // namespace gprinv
