#include "gprinv/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gprinv/error.hpp"
#include "nelder_mead.hpp"

namespace gprinv {

namespace {

constexpr double kLogLengthMin = -4.6;   // 0.01 of the box
constexpr double kLogLengthMax = 3.0;    // 20 boxes
constexpr double kLogSignalMin = -9.2;
constexpr double kLogSignalMax = 4.6;
constexpr double kLogNoiseMin = -23.0;   // 1e-10
constexpr double kLogNoiseMax = -2.3;    // 0.1

double matern52(double r2, double signal) {
  const double r = std::sqrt(5.0 * r2);
  return signal * (1.0 + r + r * r / 3.0) * std::exp(-r);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x, const GPHyperparameters& h, double jitter) {
  const auto n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double r2 = 0.0;
      for (Eigen::Index d = 0; d < x.cols(); ++d) {
        const double u = (x(i, d) - x(j, d)) / h.length_scales[static_cast<std::size_t>(d)];
        r2 += u * u;
      }
      k(i, j) = k(j, i) = matern52(r2, h.signal_variance);
    }
    k(i, i) += jitter;
  }
  return k;
}

struct Data {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;  // standardized
  double mean = 0.0;
  double scale = 1.0;
};

Data prepare(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
             const std::vector<double>& lower, const std::vector<double>& upper) {
  if (X.size() != y.size()) throw InputError("gp: inputs and outputs differ in count");
  if (X.size() < 2) throw InputError("gp: need at least two training points");
  const std::size_t d = lower.size();
  if (upper.size() != d || d == 0) throw InputError("gp: bounds must be non-empty and consistent");
  for (std::size_t k = 0; k < d; ++k) {
    if (!(upper[k] > lower[k])) throw InputError("gp: every upper bound must exceed its lower bound");
  }

  // Merge exact duplicates, keeping first-seen order.
  std::map<std::vector<double>, std::size_t> seen;
  std::vector<std::vector<double>> ux;
  std::vector<double> sum;
  std::vector<int> count;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != d) throw InputError("gp: input dimension does not match bounds");
    if (!std::isfinite(y[i])) throw InputError("gp: outputs must be finite");
    auto [it, fresh] = seen.try_emplace(X[i], ux.size());
    if (fresh) {
      ux.push_back(X[i]);
      sum.push_back(y[i]);
      count.push_back(1);
    } else {
      sum[it->second] += y[i];
      ++count[it->second];
    }
  }
  if (ux.size() < X.size()) {
    spdlog::warn("gp: {} duplicate input rows merged (outputs averaged)", X.size() - ux.size());
  }

  Data out;
  const auto n = static_cast<Eigen::Index>(ux.size());
  out.x.resize(n, static_cast<Eigen::Index>(d));
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = ux[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < d; ++k) {
      out.x(i, static_cast<Eigen::Index>(k)) = (row[k] - lower[k]) / (upper[k] - lower[k]);
    }
    out.y(i) = sum[static_cast<std::size_t>(i)] / count[static_cast<std::size_t>(i)];
  }
  out.mean = out.y.mean();
  const double var = (out.y.array() - out.mean).square().mean();
  out.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  out.y = (out.y.array() - out.mean) / out.scale;
  return out;
}

// Negative log marginal likelihood; infinity when the factorization fails.
double neg_log_ml(const Data& data, const GPHyperparameters& h) {
  const Eigen::MatrixXd k = kernel_matrix(data.x, h, h.noise_variance);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(data.y);
  const Eigen::MatrixXd l = llt.matrixL();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return std::numeric_limits<double>::infinity();
    logdet += std::log(l(i, i));
  }
  const double n = static_cast<double>(data.y.size());
  return 0.5 * data.y.dot(alpha) + logdet + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

GPHyperparameters unpack(const std::vector<double>& p, std::size_t d) {
  GPHyperparameters h;
  h.length_scales.resize(d);
  for (std::size_t k = 0; k < d; ++k) h.length_scales[k] = std::exp(p[k]);
  h.signal_variance = std::exp(p[d]);
  h.noise_variance = std::exp(p[d + 1]);
  return h;
}

bool inside(const std::vector<double>& p, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    if (p[k] < kLogLengthMin || p[k] > kLogLengthMax) return false;
  }
  return p[d] >= kLogSignalMin && p[d] <= kLogSignalMax && p[d + 1] >= kLogNoiseMin && p[d + 1] <= kLogNoiseMax;
}

GPModel condition(Data data, const std::vector<double>& lower, const std::vector<double>& upper,
                  GPHyperparameters h) {
  if (h.length_scales.size() != static_cast<std::size_t>(data.x.cols())) {
    throw InputError("gp: one length scale per input dimension required");
  }
  for (double l : h.length_scales) {
    if (!(l > 0.0)) throw InputError("gp: length scales must be positive");
  }
  if (!(h.signal_variance > 0.0) || !(h.noise_variance > 0.0)) {
    throw InputError("gp: signal variance and jitter must be positive");
  }
  GPModel m;
  double jitter = h.noise_variance;
  for (int attempt = 0;; ++attempt) {
    m.chol.compute(kernel_matrix(data.x, h, jitter));
    if (m.chol.info() == Eigen::Success) break;
    if (attempt >= 10) throw NumericalError("gp: kernel matrix is singular even after jitter escalation");
    jitter = std::max(jitter * 10.0, 1e-10 * h.signal_variance);
  }
  if (jitter != h.noise_variance) spdlog::debug("gp: jitter raised to {:.3g}", jitter);
  h.noise_variance = jitter;
  m.alpha = m.chol.solve(data.y);
  m.hyper = std::move(h);
  m.lower = lower;
  m.upper = upper;
  m.y_mean = data.mean;
  m.y_scale = data.scale;
  m.log_marginal_likelihood = -neg_log_ml(data, m.hyper);
  m.x = std::move(data.x);
  return m;
}

}  // namespace

GPModel gp_condition(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                     const std::vector<double>& lower, const std::vector<double>& upper,
                     const GPHyperparameters& hyper) {
  return condition(prepare(X, y, lower, upper), lower, upper, hyper);
}

GPModel gp_fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
               const std::vector<double>& lower, const std::vector<double>& upper, const GPFitOptions& opts) {
  Data data = prepare(X, y, lower, upper);
  const std::size_t d = lower.size();

  const auto objective = [&](const std::vector<double>& p) {
    if (!inside(p, d)) return std::numeric_limits<double>::infinity();
    return neg_log_ml(data, unpack(p, d));
  };

  std::vector<double> step(d + 2, 1.0);
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    std::vector<double> start(d + 2);
    if (r == 0) {
      std::fill(start.begin(), start.begin() + static_cast<std::ptrdiff_t>(d), std::log(0.3));
      start[d] = 0.0;
      start[d + 1] = std::log(1e-6);
    } else {
      std::seed_seq seq{opts.seed, static_cast<std::uint64_t>(r)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t k = 0; k < d; ++k) start[k] = kLogLengthMin + (kLogLengthMax - 1.0 - kLogLengthMin) * u(rng);
      start[d] = -2.0 + 4.0 * u(rng);
      start[d + 1] = -18.0 + 10.0 * u(rng);
    }
    const auto res = detail::nelder_mead(objective, start, step, 400, 1e-4);
    if (res.value < best_value) {
      best_value = res.value;
      best = res.x;
    }
  }
  GPHyperparameters h;
  if (best.empty() || !std::isfinite(best_value)) {
    spdlog::warn("gp: marginal likelihood search failed; using default hyperparameters");
    h.length_scales.assign(d, 0.3);
  } else {
    h = unpack(best, d);
  }
  return condition(std::move(data), lower, upper, std::move(h));
}

GPPrediction gp_predict(const GPModel& m, const std::vector<double>& x) {
  const auto n = m.x.rows();
  const auto d = m.x.cols();
  if (static_cast<Eigen::Index>(x.size()) != d) throw InputError("gp_predict: dimension mismatch");
  std::vector<double> u(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) u[k] = (x[k] - m.lower[k]) / (m.upper[k] - m.lower[k]);
  Eigen::VectorXd ks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double r2 = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double v = (u[static_cast<std::size_t>(k)] - m.x(i, k)) / m.hyper.length_scales[static_cast<std::size_t>(k)];
      r2 += v * v;
    }
    ks(i) = matern52(r2, m.hyper.signal_variance);
  }
  const double mean = ks.dot(m.alpha);
  const Eigen::VectorXd v = m.chol.matrixL().solve(ks);
  const double var = std::max(0.0, m.hyper.signal_variance - v.squaredNorm());
  return {m.y_mean + m.y_scale * mean, m.y_scale * std::sqrt(var)};
}

double expected_improvement(double mean, double sd, double best) {
  const double gain = best - mean;
  if (!(sd > 0.0)) return std::max(gain, 0.0);
  const double z = gain / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, gain * cdf + sd * pdf);
}

}  // namespace gprinv
