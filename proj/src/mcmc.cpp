#include "gprinv/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unsupported/Eigen/FFT>

#include "gprinv/error.hpp"

namespace gprinv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kInitTries = 100;

enum Stream : std::uint64_t { kInit = 1, kStep = 2 };

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{seed, stream, a, b};
  return std::mt19937_64(seq);
}

bool in_box(std::span<const double> x, const std::vector<double>& lo, const std::vector<double>& hi) {
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] >= lo[k] && x[k] <= hi[k])) return false;
  }
  return true;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double var_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

std::size_t burn_steps(const Chain& c, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InputError("burn-in fraction must lie in [0, 1)");
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(c.n_steps)));
}

std::vector<double> walker_trace(const Chain& c, std::size_t w, std::size_t k, std::size_t from) {
  std::vector<double> t;
  t.reserve(c.n_steps - from);
  for (std::size_t s = from; s < c.n_steps; ++s) t.push_back(c.value(s, w, k));
  return t;
}

std::size_t bin_of(double v, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  if (bins == 1) return 0;
  const double w = (edges.back() - edges.front()) / static_cast<double>(bins);
  auto b = static_cast<std::size_t>(std::floor((v - edges.front()) / w));
  return std::min(b, bins - 1);
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  e.back() = hi;
  return e;
}

}  // namespace

Chain sample(const LogDensity& log_post, const std::vector<double>& lower, const std::vector<double>& upper,
             std::vector<std::string> names, const SamplerOptions& opts, WorkerPool* pool) {
  const std::size_t dim = lower.size();
  if (dim == 0) throw InputError("mcmc: parameter space is empty");
  if (upper.size() != dim) throw InputError("mcmc: bounds differ in length");
  if (opts.n_walkers < 2 * dim + 2) {
    throw InputError(fmt::format("mcmc: need at least {} walkers for {} parameters, got {}", 2 * dim + 2, dim,
                                 opts.n_walkers));
  }
  if (opts.n_steps < 1) throw InputError("mcmc: n_steps must be at least 1");
  if (!(opts.stretch > 1.0)) throw InputError("mcmc: stretch parameter must exceed 1");
  if (names.empty()) {
    for (std::size_t k = 0; k < dim; ++k) names.push_back(fmt::format("x{}", k));
  }

  const std::size_t nw = opts.n_walkers;
  Chain c;
  c.n_walkers = nw;
  c.n_steps = opts.n_steps;
  c.dim = dim;
  c.names = std::move(names);
  c.seed = opts.seed;
  c.samples.resize(opts.n_steps * nw * dim);
  c.log_post.resize(opts.n_steps * nw);
  c.accepted.assign(nw, 0);

  std::vector<double> pos(nw * dim), lp(nw, kNegInf);
  std::vector<std::size_t> calls(nw, 0);

  if (!opts.initial.empty()) {
    if (opts.initial.size() != nw) throw InputError("mcmc: one initial position per walker required");
    for (std::size_t w = 0; w < nw; ++w) {
      if (opts.initial[w].size() != dim || !in_box(opts.initial[w], lower, upper)) {
        throw InputError(fmt::format("mcmc: initial position of walker {} is outside the bounds", w));
      }
      std::copy(opts.initial[w].begin(), opts.initial[w].end(), pos.begin() + static_cast<std::ptrdiff_t>(w * dim));
    }
    for_each_index(pool, nw, [&](std::size_t w) {
      lp[w] = log_post(ParameterVector(pos.begin() + static_cast<std::ptrdiff_t>(w * dim),
                                       pos.begin() + static_cast<std::ptrdiff_t>((w + 1) * dim)));
      calls[w] = 1;
    });
    for (std::size_t w = 0; w < nw; ++w) {
      if (!std::isfinite(lp[w])) throw InputError(fmt::format("mcmc: posterior is -inf at the initial position of walker {}", w));
    }
  } else {
    for_each_index(pool, nw, [&](std::size_t w) {
      auto rng = make_rng(opts.seed, kInit, w, 0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      ParameterVector x(dim);
      for (int t = 0; t < kInitTries; ++t) {
        for (std::size_t k = 0; k < dim; ++k) x[k] = lower[k] + u(rng) * (upper[k] - lower[k]);
        const double v = log_post(x);
        ++calls[w];
        if (std::isfinite(v)) {
          lp[w] = v;
          std::copy(x.begin(), x.end(), pos.begin() + static_cast<std::ptrdiff_t>(w * dim));
          return;
        }
      }
    });
    for (std::size_t w = 0; w < nw; ++w) {
      if (!std::isfinite(lp[w])) {
        throw InputError(fmt::format(
            "posterior is -inf everywhere sampled ({} prior draws for walker {}); check bounds/data", kInitTries, w));
      }
    }
  }

  const std::size_t half = nw / 2;
  const double a = opts.stretch;
  std::vector<double> prop(nw * dim), prop_lp(nw), log_z(nw), log_u(nw);
  std::vector<char> inside(nw);

  for (std::size_t step = 0; step < opts.n_steps; ++step) {
    for (int h = 0; h < 2; ++h) {
      const std::size_t first = h == 0 ? 0 : half;
      const std::size_t last = h == 0 ? half : nw;
      const std::size_t other_first = h == 0 ? half : 0;
      const std::size_t other_size = h == 0 ? nw - half : half;

      for (std::size_t w = first; w < last; ++w) {
        auto rng = make_rng(opts.seed, kStep, step, w);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick(0, other_size - 1);
        const std::size_t j = other_first + pick(rng);
        const double r = (a - 1.0) * u(rng) + 1.0;
        const double z = r * r / a;
        log_z[w] = std::log(z);
        log_u[w] = std::log(u(rng));
        for (std::size_t k = 0; k < dim; ++k) {
          const double xj = pos[j * dim + k];
          prop[w * dim + k] = xj + z * (pos[w * dim + k] - xj);
        }
        inside[w] = in_box(std::span<const double>(prop.data() + w * dim, dim), lower, upper);
      }

      for_each_index(pool, last - first, [&](std::size_t i) {
        const std::size_t w = first + i;
        if (!inside[w]) {
          prop_lp[w] = kNegInf;
          return;
        }
        prop_lp[w] = log_post(ParameterVector(prop.begin() + static_cast<std::ptrdiff_t>(w * dim),
                                              prop.begin() + static_cast<std::ptrdiff_t>((w + 1) * dim)));
        ++calls[w];
      });

      for (std::size_t w = first; w < last; ++w) {
        if (!inside[w]) {
          ++c.rejected_out_of_bounds;
          continue;
        }
        const double cand = prop_lp[w];
        if (std::isnan(cand) || cand == kNegInf) continue;
        const double log_ratio = static_cast<double>(dim - 1) * log_z[w] + cand - lp[w];
        if (log_u[w] < log_ratio) {
          std::copy_n(prop.begin() + static_cast<std::ptrdiff_t>(w * dim), dim,
                      pos.begin() + static_cast<std::ptrdiff_t>(w * dim));
          lp[w] = cand;
          ++c.accepted[w];
        }
      }
    }
    std::copy(pos.begin(), pos.end(), c.samples.begin() + static_cast<std::ptrdiff_t>(step * nw * dim));
    std::copy(lp.begin(), lp.end(), c.log_post.begin() + static_cast<std::ptrdiff_t>(step * nw));
    if ((step + 1) % 100 == 0) spdlog::debug("mcmc: step {}/{}", step + 1, opts.n_steps);
  }
  c.evaluations = std::accumulate(calls.begin(), calls.end(), std::size_t{0});
  return c;
}

Chain sample(const LogDensity& log_post, const ParameterSpace& space, const SamplerOptions& opts, WorkerPool* pool) {
  return sample(log_post, space.lower(), space.upper(), space.names(), opts, pool);
}

double split_r_hat(const std::vector<std::vector<double>>& traces) {
  if (traces.empty()) throw InputError("split R-hat needs at least one trace");
  const std::size_t n = traces.front().size();
  if (n < 4) throw InputError("split R-hat needs at least four samples per trace");
  const std::size_t m = n / 2;
  std::vector<double> means, vars;
  for (const auto& t : traces) {
    if (t.size() != n) throw InputError("split R-hat traces must be equally long");
    const std::span<const double> first(t.data(), m), second(t.data() + (n - m), m);
    means.push_back(mean_of(first));
    means.push_back(mean_of(second));
    vars.push_back(var_of(first));
    vars.push_back(var_of(second));
  }
  const double W = mean_of(vars);
  const double B = static_cast<double>(m) * var_of(means);
  const double md = static_cast<double>(m);
  if (!(W > 0.0)) return B > 0.0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  const double var_plus = (md - 1.0) / md * W + B / md;
  return std::sqrt(var_plus / W);
}

double autocorrelation_time(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) throw InputError("autocorrelation time needs at least four samples");
  const double m = mean_of(x);
  std::size_t nfft = 1;
  while (nfft < 2 * n) nfft *= 2;
  std::vector<std::complex<double>> buf(nfft, 0.0), spec;
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i] - m;
  Eigen::FFT<double> fft;
  fft.fwd(spec, buf);
  for (auto& s : spec) s = std::norm(s);
  fft.inv(buf, spec);
  const double c0 = buf[0].real();
  if (!(c0 > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  // Geyer: sum consecutive pairs of autocorrelations while the pair sums stay positive.
  double tau = -1.0;
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    const double pair = (buf[k].real() + buf[k + 1].real()) / c0;
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  return std::max(tau, 1.0 / static_cast<double>(n));
}

Diagnostics diagnostics(const Chain& c, double burn_in_fraction) {
  Diagnostics d;
  d.burn_in_steps = burn_steps(c, burn_in_fraction);
  const std::size_t kept = c.n_steps - d.burn_in_steps;
  if (kept < 4) throw InputError(fmt::format("diagnostics need at least 4 post-burn-in steps, have {}", kept));
  const double total = static_cast<double>(kept * c.n_walkers);
  for (std::size_t k = 0; k < c.dim; ++k) {
    std::vector<std::vector<double>> traces;
    double ess = 0.0;
    for (std::size_t w = 0; w < c.n_walkers; ++w) {
      traces.push_back(walker_trace(c, w, k, d.burn_in_steps));
      const double tau = autocorrelation_time(traces.back());
      ess += std::isfinite(tau) ? static_cast<double>(kept) / std::max(tau, 1.0) : 1.0;
    }
    const double r = split_r_hat(traces);
    if (!std::isfinite(r)) {
      spdlog::warn("diagnostics: '{}' has zero within-walker variance; R-hat is {}", c.names[k],
                   std::isnan(r) ? "undefined" : "infinite");
    }
    d.r_hat.push_back(r);
    d.ess.push_back(std::clamp(ess, 1.0, total));
  }
  const std::size_t acc = std::accumulate(c.accepted.begin(), c.accepted.end(), std::size_t{0});
  d.acceptance = c.n_steps == 0 ? 0.0 : static_cast<double>(acc) / static_cast<double>(c.n_steps * c.n_walkers);
  return d;
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw InputError("quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= x.size()) return x.back();
  const double f = pos - static_cast<double>(i);
  return x[i] + f * (x[i + 1] - x[i]);
}

Histogram fd_histogram(std::span<const double> x) {
  if (x.empty()) throw InputError("histogram of an empty sample");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  Histogram h;
  std::size_t bins = 1;
  if (hi > lo) {
    std::vector<double> v(x.begin(), x.end());
    const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
    const double width = 2.0 * iqr * std::cbrt(1.0 / static_cast<double>(x.size()));
    if (width > 0.0) {
      bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
    } else {
      bins = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(x.size())))) + 1;
    }
    bins = std::clamp<std::size_t>(bins, 1, 1000);
  }
  h.edges = uniform_edges(lo, hi, bins);
  h.counts.assign(bins, 0);
  for (double v : x) ++h.counts[bin_of(v, h.edges)];
  return h;
}

PosteriorSummary summarize(const Chain& c, double burn_in_fraction) {
  const std::size_t burn = burn_steps(c, burn_in_fraction);
  const std::size_t n = (c.n_steps - burn) * c.n_walkers;
  if (n < 100) throw InputError(fmt::format("summary needs at least 100 post-burn-in samples, have {}", n));

  PosteriorSummary s;
  s.n_samples = n;
  std::vector<std::vector<double>> cols(c.dim);
  for (auto& col : cols) col.reserve(n);
  s.joint_map_log_post = kNegInf;
  for (std::size_t st = burn; st < c.n_steps; ++st) {
    for (std::size_t w = 0; w < c.n_walkers; ++w) {
      for (std::size_t k = 0; k < c.dim; ++k) cols[k].push_back(c.value(st, w, k));
      if (c.lp(st, w) > s.joint_map_log_post || s.joint_map.empty()) {
        s.joint_map_log_post = c.lp(st, w);
        const auto p = c.position(st, w);
        s.joint_map.assign(p.begin(), p.end());
      }
    }
  }

  for (std::size_t k = 0; k < c.dim; ++k) {
    const auto& col = cols[k];
    MarginalSummary m;
    m.name = k < c.names.size() ? c.names[k] : fmt::format("x{}", k);
    m.mean = mean_of(col);
    m.sd = std::sqrt(var_of(col));
    m.ci_low = quantile(col, 0.025);
    m.ci_high = quantile(col, 0.975);
    m.histogram = fd_histogram(col);
    const auto& counts = m.histogram.counts;
    const auto best = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    m.map = 0.5 * (m.histogram.edges[best] + m.histogram.edges[best + 1]);
    s.marginals.push_back(std::move(m));
  }

  for (std::size_t i = 0; i < c.dim; ++i) {
    for (std::size_t j = i + 1; j < c.dim; ++j) {
      Histogram2D p;
      p.i = i;
      p.j = j;
      const auto& hi = s.marginals[i].histogram;
      const auto& hj = s.marginals[j].histogram;
      p.x_edges = uniform_edges(hi.edges.front(), hi.edges.back(), std::min<std::size_t>(hi.counts.size(), 40));
      p.y_edges = uniform_edges(hj.edges.front(), hj.edges.back(), std::min<std::size_t>(hj.counts.size(), 40));
      const std::size_t ny = p.y_edges.size() - 1;
      p.counts.assign((p.x_edges.size() - 1) * ny, 0);
      for (std::size_t r = 0; r < n; ++r) ++p.counts[bin_of(cols[i][r], p.x_edges) * ny + bin_of(cols[j][r], p.y_edges)];
      s.pairs.push_back(std::move(p));
    }
  }
  return s;
}

void write_chain_csv(const std::filesystem::path& path, const Chain& c) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << "step,walker";
  for (const auto& n : c.names) out << ',' << n;
  out << ",log_posterior\n";
  for (std::size_t s = 0; s < c.n_steps; ++s) {
    for (std::size_t w = 0; w < c.n_walkers; ++w) {
      out << s << ',' << w;
      for (std::size_t k = 0; k < c.dim; ++k) out << fmt::format(",{:.17g}", c.value(s, w, k));
      out << fmt::format(",{:.17g}\n", c.lp(s, w));
    }
  }
}

Chain read_chain_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open chain file '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw InputError(fmt::format("'{}' is empty", path.string()));
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 4 || header[0] != "step" || header[1] != "walker" || header.back() != "log_posterior") {
    throw InputError(fmt::format("'{}': expected columns step,walker,<parameters>,log_posterior", path.string()));
  }
  Chain c;
  c.names.assign(header.begin() + 2, header.end() - 1);
  c.dim = c.names.size();

  struct Row {
    std::size_t step, walker;
    std::vector<double> x;
    double lp;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw InputError(fmt::format("'{}' line {}: wrong column count", path.string(), lineno));
    try {
      Row r{std::stoul(cells[0]), std::stoul(cells[1]), {}, 0.0};
      for (std::size_t k = 0; k < c.dim; ++k) r.x.push_back(std::stod(cells[2 + k]));
      r.lp = std::stod(cells.back());
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("'{}' line {}: not a number", path.string(), lineno));
    }
  }
  if (rows.empty()) throw InputError(fmt::format("'{}' has no samples", path.string()));
  for (const auto& r : rows) {
    c.n_steps = std::max(c.n_steps, r.step + 1);
    c.n_walkers = std::max(c.n_walkers, r.walker + 1);
  }
  if (rows.size() != c.n_steps * c.n_walkers) {
    throw InputError(fmt::format("'{}': expected {} x {} rows, found {}", path.string(), c.n_steps, c.n_walkers, rows.size()));
  }
  c.samples.assign(c.n_steps * c.n_walkers * c.dim, 0.0);
  c.log_post.assign(c.n_steps * c.n_walkers, 0.0);
  std::vector<char> seen(c.n_steps * c.n_walkers, 0);
  for (const auto& r : rows) {
    const std::size_t idx = r.step * c.n_walkers + r.walker;
    if (seen[idx]) throw InputError(fmt::format("'{}': duplicate row for step {} walker {}", path.string(), r.step, r.walker));
    seen[idx] = 1;
    std::copy(r.x.begin(), r.x.end(), c.samples.begin() + static_cast<std::ptrdiff_t>(idx * c.dim));
    c.log_post[idx] = r.lp;
  }
  c.accepted.assign(c.n_walkers, 0);
  for (std::size_t s = 1; s < c.n_steps; ++s) {
    for (std::size_t w = 0; w < c.n_walkers; ++w) {
      const auto a = c.position(s - 1, w), b = c.position(s, w);
      if (!std::equal(a.begin(), a.end(), b.begin())) ++c.accepted[w];
    }
  }
  return c;
}

nlohmann::json to_json(const Diagnostics& d, const std::vector<std::string>& names) {
  nlohmann::json j;
  j["acceptance"] = d.acceptance;
  j["burn_in_steps"] = d.burn_in_steps;
  auto& params = j["parameters"] = nlohmann::json::array();
  for (std::size_t k = 0; k < d.r_hat.size(); ++k) {
    nlohmann::json p;
    p["name"] = k < names.size() ? names[k] : fmt::format("x{}", k);
    if (std::isnan(d.r_hat[k])) {
      p["r_hat"] = "undefined";
    } else if (std::isinf(d.r_hat[k])) {
      p["r_hat"] = "inf";
    } else {
      p["r_hat"] = d.r_hat[k];
    }
    p["ess"] = d.ess[k];
    params.push_back(std::move(p));
  }
  return j;
}

nlohmann::json to_json(const PosteriorSummary& s) {
  nlohmann::json j;
  j["n_samples"] = s.n_samples;
  j["joint_map"] = s.joint_map;
  j["joint_map_log_posterior"] = s.joint_map_log_post;
  auto& ms = j["marginals"] = nlohmann::json::array();
  for (const auto& m : s.marginals) {
    ms.push_back({{"name", m.name},
                  {"mean", m.mean},
                  {"sd", m.sd},
                  {"map", m.map},
                  {"ci95", {m.ci_low, m.ci_high}},
                  {"histogram", {{"edges", m.histogram.edges}, {"counts", m.histogram.counts}}}});
  }
  auto& ps = j["pairs"] = nlohmann::json::array();
  for (const auto& p : s.pairs) {
    ps.push_back({{"x", s.marginals[p.i].name},
                  {"y", s.marginals[p.j].name},
                  {"x_edges", p.x_edges},
                  {"y_edges", p.y_edges},
                  {"counts", p.counts}});
  }
  return j;
}

}  // namespace gprinv
