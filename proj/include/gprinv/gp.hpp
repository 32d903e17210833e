#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace gprinv {

/// Matern-5/2 ARD hyperparameters, in the normalized unit box and for
/// standardized outputs.
struct GPHyperparameters {
  std::vector<double> length_scales;
  double signal_variance = 1.0;
  double noise_variance = 1e-8;  ///< jitter added to the diagonal
};

struct GPModel {
  GPHyperparameters hyper;
  std::vector<double> lower, upper;  ///< box used to normalize inputs
  Eigen::MatrixXd x;                 ///< normalized training inputs, one row each
  double y_mean = 0.0;
  double y_scale = 1.0;
  Eigen::VectorXd alpha;             ///< K^{-1} y (standardized)
  Eigen::LLT<Eigen::MatrixXd> chol;
  double log_marginal_likelihood = 0.0;
};

struct GPPrediction {
  double mean = 0.0;
  double sd = 0.0;
};

struct GPFitOptions {
  std::uint64_t seed = 0;
  int restarts = 8;
};

/// Maximizes the marginal likelihood over log-scale hyperparameter bounds by
/// multi-start Nelder-Mead. Duplicate inputs are merged with averaged outputs.
GPModel gp_fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
               const std::vector<double>& lower, const std::vector<double>& upper, const GPFitOptions& opts = {});

/// Conditions on the data with the hyperparameters held fixed.
GPModel gp_condition(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                     const std::vector<double>& lower, const std::vector<double>& upper,
                     const GPHyperparameters& hyper);

/// Posterior mean and standard deviation of the latent function, in the
/// units of the training outputs.
GPPrediction gp_predict(const GPModel& m, const std::vector<double>& x);

/// Expected improvement below `best` for minimization.
double expected_improvement(double mean, double sd, double best);

}  // namespace gprinv
