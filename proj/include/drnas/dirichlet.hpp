#pragma once

#include <vector>

#include "drnas/rng.hpp"

namespace drnas::dirichlet {

// Samples are clamped this far from the simplex boundary before any Beta
// CDF/PDF evaluation; keeps the density away from underflow and the
// 1/(1 - theta_j) factor bounded.
inline constexpr double kThetaClamp = 1e-6;

// Unconstrained per-edge architecture parameters. The positive
// concentration is the shifted-ELU image beta = ELU(eta) + 1.
struct Concentration {
  std::vector<double> eta;

  std::vector<double> beta() const;
};

// One draw on the probability simplex; the operation mixing weight.
struct SimplexSample {
  std::vector<double> theta;
};

// Mean and diagonal covariance of the softmax-Gaussian (Laplace)
// approximation to Dir(beta).
struct LaplaceParams {
  std::vector<double> mu;
  std::vector<double> sigma_diag;
};

// Square row-major matrix, entry (i,j) = d theta_i / d beta_j.
struct Jacobian {
  int n = 0;
  std::vector<double> data;

  double at(int i, int j) const { return data[static_cast<size_t>(i) * n + j]; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * n + j]; }
};

struct Penalty {
  double value = 0.0;
  std::vector<double> grad;
};

// beta_o = eta_o + 1 for eta_o >= 0, exp(eta_o) otherwise. Strictly
// positive for any finite eta. Throws std::domain_error on non-finite input.
std::vector<double> beta_from_eta(const std::vector<double>& eta);

// d beta / d eta for the shifted-ELU map: 1 for eta >= 0, exp(eta) below.
double elu_shift_derivative(double eta);

// theta_o = gamma_o / sum gamma with gamma_o ~ Gamma(beta_o, 1), clamped to
// [kThetaClamp, 1 - kThetaClamp] and renormalized.
SimplexSample sample(const std::vector<double>& beta, Rng& rng);

// Dirichlet mean beta / sum(beta).
std::vector<double> mean(const std::vector<double>& beta);

// Pathwise derivative estimator of the sample w.r.t. the concentration:
//   d theta_i / d beta_j
//     = -[dF/d beta_j](theta_j | beta_j, beta_tot - beta_j)
//       / f(theta_j | beta_j, beta_tot - beta_j)
//       * (delta_ij - theta_i) / (1 - theta_j).
// The second Beta parameter is held fixed in dF/d beta_j since
// beta_tot - beta_j does not depend on beta_j. Throws std::runtime_error
// if an intermediate turns non-finite.
Jacobian pathwise_jacobian(const SimplexSample& theta,
                           const std::vector<double>& beta);

// Chain rule from a loss gradient in theta to the eta parameters:
// J^T * grad_theta, then elementwise ELU' factors.
std::vector<double> grad_eta_from_grad_theta(
    const std::vector<double>& grad_theta, const SimplexSample& theta,
    const std::vector<double>& beta, const std::vector<double>& eta);

// Quadratic anchor distance to eta_hat = 0: value = lambda/2 * ||eta||^2,
// grad = lambda * eta. Smooth at the anchor, same minimizer as the plain
// norm.
Penalty anchor_penalty(const std::vector<double>& eta, double lambda);

// Plain-norm variant lambda * ||eta||_2 (grad taken as 0 at eta = 0).
Penalty anchor_penalty_norm(const std::vector<double>& eta, double lambda);

// KL(Dir(beta) || Dir(1)), the symmetric-Dirichlet distance alternative.
double kl_to_symmetric(const std::vector<double>& beta);

// d/d beta_j of kl_to_symmetric:
// (beta_j - 1) psi'(beta_j) - (sum beta - n) psi'(sum beta).
std::vector<double> kl_to_symmetric_grad(const std::vector<double>& beta);

// Softmax-Gaussian parameters of Dir(beta):
//   mu_o    = ln beta_o - mean_o' ln beta_o'
//   Sigma_o = (1/beta_o)(1 - 2/n) + (1/n^2) sum_o' 1/beta_o'.
LaplaceParams laplace_params(const std::vector<double>& beta);

// One draw h ~ N(mu, diag(Sigma)) from the Laplace approximation.
std::vector<double> laplace_sample(const LaplaceParams& params, Rng& rng);

// Scalar lower bound on every Sigma_o when ||beta - 1|| <= delta:
// (1/(1+delta))(1 - 2/n) + (1/n)(1/(1+delta)). Requires n_ops >= 2.
double sigma_lower_bound(double delta, int n_ops);

}  // namespace drnas::dirichlet
