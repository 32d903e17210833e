#include "gprinv/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gprinv/error.hpp"
#include "nelder_mead.hpp"

namespace gprinv {

namespace {

// Stream identifiers so that every random draw has its own seed.
enum Stream : std::uint64_t { kLatin = 1, kCandidates = 2, kGP = 3 };

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{seed, stream, index};
  return std::mt19937_64(seq);
}

double penalty_for(const std::vector<BOEvaluation>& history) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& e : history) {
    if (!e.penalized) worst = std::max(worst, e.value);
  }
  if (!std::isfinite(worst)) return 1e3;
  return 1e3 * std::max(std::abs(worst), 1e-12);
}

bool near_existing(const ParameterVector& x, const std::vector<BOEvaluation>& history,
                   const std::vector<double>& lower, const std::vector<double>& upper) {
  for (const auto& e : history) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double u = (x[k] - e.theta[k]) / (upper[k] - lower[k]);
      d2 += u * u;
    }
    if (d2 < 1e-16) return true;
  }
  return false;
}

}  // namespace

std::vector<ParameterVector> latin_hypercube(std::size_t n, const std::vector<double>& lower,
                                             const std::vector<double>& upper, std::uint64_t seed) {
  const std::size_t d = lower.size();
  auto rng = make_rng(seed, kLatin, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ParameterVector> pts(n, ParameterVector(d));
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(perm[i - 1], perm[pick(rng)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double frac = (static_cast<double>(perm[i]) + u(rng)) / static_cast<double>(n);
      pts[i][k] = lower[k] + frac * (upper[k] - lower[k]);
    }
  }
  return pts;
}

BOResult minimize(const Objective& objective, const std::vector<double>& lower, const std::vector<double>& upper,
                  const BOOptions& opts, WorkerPool* pool) {
  const std::size_t d = lower.size();
  if (d == 0) throw InputError("bayesopt: nothing to optimize (empty parameter space)");
  if (upper.size() != d) throw InputError("bayesopt: bounds differ in length");
  if (opts.n_init < 2) throw InputError("bayesopt: n_init must be at least 2");
  if (opts.budget <= opts.n_init) throw InputError("bayesopt: budget must exceed n_init");
  if (opts.n_candidates < 1) throw InputError("bayesopt: need at least one acquisition candidate");

  BOResult res;
  const auto init = latin_hypercube(opts.n_init, lower, upper, opts.seed);
  std::vector<double> raw(init.size());
  for_each_index(pool, init.size(), [&](std::size_t i) { raw[i] = objective(init[i]); });
  for (std::size_t i = 0; i < init.size(); ++i) res.history.push_back({init[i], raw[i], false});
  const double init_penalty = penalty_for(res.history);
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      spdlog::warn("bayesopt: objective not finite at initial point {}; recorded with penalty {:.4g}", i,
                   init_penalty);
      res.history[i] = {init[i], init_penalty, true};
    }
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> step(d);
  for (std::size_t k = 0; k < d; ++k) step[k] = 0.05 * (upper[k] - lower[k]);

  for (std::size_t round = 0; res.history.size() < opts.budget; ++round) {
    std::vector<std::vector<double>> X;
    std::vector<double> Y;
    for (const auto& e : res.history) {
      X.push_back(e.theta);
      Y.push_back(e.value);
    }
    const double best = *std::min_element(Y.begin(), Y.end());
    const GPModel gp = gp_fit(X, Y, lower, upper, {opts.seed ^ (kGP << 32) ^ round, opts.gp_restarts});

    auto rng = make_rng(opts.seed, kCandidates, round);
    std::vector<ParameterVector> cand(opts.n_candidates, ParameterVector(d));
    for (auto& c : cand) {
      for (std::size_t k = 0; k < d; ++k) c[k] = lower[k] + u(rng) * (upper[k] - lower[k]);
    }
    std::size_t top = 0;
    double top_ei = -1.0;
    std::size_t widest = 0;
    double widest_sd = -1.0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      const auto p = gp_predict(gp, cand[i]);
      const double ei = expected_improvement(p.mean, p.sd, best);
      if (ei > top_ei) {
        top_ei = ei;
        top = i;
      }
      if (p.sd > widest_sd) {
        widest_sd = p.sd;
        widest = i;
      }
    }

    const auto neg_ei = [&](const std::vector<double>& x) {
      for (std::size_t k = 0; k < d; ++k) {
        if (x[k] < lower[k] || x[k] > upper[k]) return std::numeric_limits<double>::infinity();
      }
      const auto p = gp_predict(gp, x);
      return -expected_improvement(p.mean, p.sd, best);
    };
    ParameterVector next = cand[top];
    const auto polished = detail::nelder_mead(neg_ei, next, step, 200, 1e-6);
    if (std::isfinite(polished.value) && -polished.value > top_ei) next = polished.x;
    if (!(top_ei > 0.0) || near_existing(next, res.history, lower, upper)) next = cand[widest];

    const double v = objective(next);
    if (std::isfinite(v)) {
      res.history.push_back({next, v, false});
    } else {
      const double pen = penalty_for(res.history);
      spdlog::warn("bayesopt: objective not finite in round {}; recorded with penalty {:.4g}", round, pen);
      res.history.push_back({next, pen, true});
    }
    spdlog::debug("bayesopt: round {} value {:.6g} (best so far {:.6g})", round, res.history.back().value,
                  std::min(best, res.history.back().value));
  }

  std::size_t ib = 0;
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    if (res.history[i].value < res.history[ib].value) ib = i;
  }
  res.best_theta = res.history[ib].theta;
  res.best_value = res.history[ib].value;
  res.evaluations_used = res.history.size();
  return res;
}

BOResult minimize(const Objective& objective, const ParameterSpace& space, const BOOptions& opts,
                  WorkerPool* pool) {
  return minimize(objective, space.lower(), space.upper(), opts, pool);
}

}  // namespace gprinv
