#include "drnas/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "drnas/special_functions.hpp"

namespace drnas::dirichlet {

namespace {

void require_positive_all(const std::vector<double>& beta) {
  for (double b : beta) {
    if (!std::isfinite(b) || b <= 0.0) {
      throw std::domain_error("dirichlet: concentration entries must be "
                              "positive and finite");
    }
  }
  if (beta.empty()) {
    throw std::domain_error("dirichlet: empty concentration vector");
  }
}

double clamp_theta(double t) {
  return std::clamp(t, kThetaClamp, 1.0 - kThetaClamp);
}

}  // namespace

std::vector<double> Concentration::beta() const { return beta_from_eta(eta); }

std::vector<double> beta_from_eta(const std::vector<double>& eta) {
  std::vector<double> beta(eta.size());
  for (size_t i = 0; i < eta.size(); ++i) {
    if (!std::isfinite(eta[i])) {
      throw std::domain_error("beta_from_eta: non-finite eta entry");
    }
    beta[i] = eta[i] >= 0.0 ? eta[i] + 1.0 : std::exp(eta[i]);
  }
  return beta;
}

double elu_shift_derivative(double eta) {
  return eta >= 0.0 ? 1.0 : std::exp(eta);
}

SimplexSample sample(const std::vector<double>& beta, Rng& rng) {
  require_positive_all(beta);
  const size_t n = beta.size();
  if (n == 1) return SimplexSample{{1.0}};

  std::vector<double> theta(n);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    theta[i] = special::gamma_sample(beta[i], rng);
    total += theta[i];
  }
  double clamped_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    theta[i] = clamp_theta(theta[i] / total);
    clamped_sum += theta[i];
  }
  for (size_t i = 0; i < n; ++i) theta[i] /= clamped_sum;
  return SimplexSample{std::move(theta)};
}

std::vector<double> mean(const std::vector<double>& beta) {
  require_positive_all(beta);
  const double total = std::accumulate(beta.begin(), beta.end(), 0.0);
  std::vector<double> m(beta.size());
  for (size_t i = 0; i < beta.size(); ++i) m[i] = beta[i] / total;
  return m;
}

Jacobian pathwise_jacobian(const SimplexSample& theta,
                           const std::vector<double>& beta) {
  require_positive_all(beta);
  const int n = static_cast<int>(beta.size());
  if (theta.theta.size() != beta.size()) {
    throw std::invalid_argument("pathwise_jacobian: theta/beta size mismatch");
  }
  Jacobian jac;
  jac.n = n;
  jac.data.assign(static_cast<size_t>(n) * n, 0.0);
  if (n == 1) return jac;  // degenerate simplex, theta is pinned at 1

  const double beta_tot = std::accumulate(beta.begin(), beta.end(), 0.0);
  for (int j = 0; j < n; ++j) {
    const double tj = clamp_theta(theta.theta[j]);
    const double a = beta[j];
    const double b = beta_tot - beta[j];
    const double df_da = special::d_reg_inc_beta_da(tj, a, b);
    const double pdf = std::exp(special::beta_log_pdf(tj, a, b));
    const double scale = -df_da / pdf;
    if (!std::isfinite(scale)) {
      throw std::runtime_error("pathwise_jacobian: non-finite CDF/PDF ratio");
    }
    const double denom = 1.0 - tj;
    for (int i = 0; i < n; ++i) {
      const double delta = i == j ? 1.0 : 0.0;
      jac.at(i, j) = scale * (delta - theta.theta[i]) / denom;
    }
  }
  return jac;
}

std::vector<double> grad_eta_from_grad_theta(
    const std::vector<double>& grad_theta, const SimplexSample& theta,
    const std::vector<double>& beta, const std::vector<double>& eta) {
  const size_t n = beta.size();
  if (grad_theta.size() != n || theta.theta.size() != n || eta.size() != n) {
    throw std::invalid_argument("grad_eta_from_grad_theta: size mismatch");
  }
  const Jacobian jac = pathwise_jacobian(theta, beta);
  std::vector<double> grad_eta(n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    double g_beta = 0.0;
    for (size_t i = 0; i < n; ++i) {
      g_beta += jac.at(static_cast<int>(i), static_cast<int>(j)) *
                grad_theta[i];
    }
    grad_eta[j] = g_beta * elu_shift_derivative(eta[j]);
  }
  return grad_eta;
}

Penalty anchor_penalty(const std::vector<double>& eta, double lambda) {
  Penalty p;
  p.grad.resize(eta.size());
  double sq = 0.0;
  for (size_t i = 0; i < eta.size(); ++i) {
    sq += eta[i] * eta[i];
    p.grad[i] = lambda * eta[i];
  }
  p.value = 0.5 * lambda * sq;
  return p;
}

Penalty anchor_penalty_norm(const std::vector<double>& eta, double lambda) {
  Penalty p;
  p.grad.assign(eta.size(), 0.0);
  double sq = 0.0;
  for (double e : eta) sq += e * e;
  const double norm = std::sqrt(sq);
  p.value = lambda * norm;
  if (norm > 0.0) {
    for (size_t i = 0; i < eta.size(); ++i) p.grad[i] = lambda * eta[i] / norm;
  }
  return p;
}

double kl_to_symmetric(const std::vector<double>& beta) {
  require_positive_all(beta);
  const double total = std::accumulate(beta.begin(), beta.end(), 0.0);
  const double n = static_cast<double>(beta.size());
  double kl = special::log_gamma(total) - special::log_gamma(n);
  const double psi_total = special::digamma(total);
  for (double b : beta) {
    kl -= special::log_gamma(b);
    kl += (b - 1.0) * (special::digamma(b) - psi_total);
  }
  return kl;
}

std::vector<double> kl_to_symmetric_grad(const std::vector<double>& beta) {
  require_positive_all(beta);
  const double total = std::accumulate(beta.begin(), beta.end(), 0.0);
  const double n = static_cast<double>(beta.size());
  const double tail = (total - n) * special::trigamma(total);
  std::vector<double> grad(beta.size());
  for (size_t j = 0; j < beta.size(); ++j) {
    grad[j] = (beta[j] - 1.0) * special::trigamma(beta[j]) - tail;
  }
  return grad;
}

LaplaceParams laplace_params(const std::vector<double>& beta) {
  require_positive_all(beta);
  const size_t n = beta.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  LaplaceParams p;
  p.mu.resize(n);
  p.sigma_diag.resize(n);
  double log_mean = 0.0;
  double inv_sum = 0.0;
  for (double b : beta) {
    log_mean += std::log(b) * inv_n;
    inv_sum += 1.0 / b;
  }
  for (size_t o = 0; o < n; ++o) {
    p.mu[o] = std::log(beta[o]) - log_mean;
    p.sigma_diag[o] = (1.0 / beta[o]) * (1.0 - 2.0 * inv_n) +
                      inv_n * inv_n * inv_sum;
  }
  return p;
}

std::vector<double> laplace_sample(const LaplaceParams& params, Rng& rng) {
  std::vector<double> h(params.mu.size());
  for (size_t i = 0; i < h.size(); ++i) {
    h[i] = params.mu[i] + std::sqrt(params.sigma_diag[i]) * rng.normal();
  }
  return h;
}

double sigma_lower_bound(double delta, int n_ops) {
  if (n_ops < 2) {
    throw std::domain_error("sigma_lower_bound: n_ops must be >= 2");
  }
  if (delta < 0.0) {
    throw std::domain_error("sigma_lower_bound: delta must be >= 0");
  }
  const double n = static_cast<double>(n_ops);
  const double shrink = 1.0 / (1.0 + delta);
  return shrink * (1.0 - 2.0 / n) + shrink / n;
}

}  // namespace drnas::dirichlet
