#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drnas/dirichlet.hpp"
#include "drnas/rng.hpp"
#include "drnas/search_space.hpp"

namespace drnas::diagnostics {

// Scalar loss over an unconstrained logit vector with its exact gradient.
// All curvature probes run against this interface, never against live
// training state.
struct LossOverLogits {
  int dim = 0;
  std::function<double(const std::vector<double>&)> value;
  std::function<std::vector<double>(const std::vector<double>&)> grad;
};

// Hessian-vector product by central difference of exact gradients, step
// 1e-3 * (1 + ||x||) along the normalized direction.
std::vector<double> hvp(const LossOverLogits& f, const std::vector<double>& x,
                        const std::vector<double>& v);

struct PowerIterResult {
  double magnitude = 0.0;  // |lambda_max|, the reported eigenvalue
  double rayleigh = 0.0;   // signed value of the converged direction
  bool converged = false;
  int iterations = 0;
};

// Power iteration on the HVP operator.  The result follows the magnitude
// convention: the eigenvalue largest in absolute value, reported as a
// non-negative number with its sign available in `rayleigh`.
PowerIterResult dominant_eigenvalue(const LossOverLogits& f,
                                    const std::vector<double>& x, Rng& rng,
                                    int max_iters = 100, double tol = 1e-6);

// Hutchinson estimate tr(H) = E[z^T H z] with Rademacher probes.
double hessian_trace(const LossOverLogits& f, const std::vector<double>& x,
                     int probes, Rng& rng);

struct BoundCheck {
  double lhs = 0.0;     // Monte-Carlo E[f] under the softmax-Gaussian
  double lhs_se = 0.0;  // standard error of lhs
  double rhs = 0.0;     // f(mu) + 0.5 * sigma_bound * trace
  double f_mu = 0.0;
  double trace = 0.0;
  double sigma_bound = 0.0;
  double delta = 0.0;      // ||beta - 1||
  double psd_proxy = 0.0;  // min Rayleigh quotient over random probes
  bool holds = false;      // lhs >= rhs - 3 * lhs_se
};

// Checks the expected-loss lower bound of the Laplace approximation to
// Dir(beta) against a convex loss.  A negative psd_proxy flags that the
// convexity precondition did not hold at mu.
BoundCheck laplace_bound_check(const std::vector<double>& beta,
                               const LossOverLogits& f, int mc_samples,
                               int trace_probes, Rng& rng);

struct BandStats {
  std::vector<double> sample_scores;
  double min_score = 0.0;
  double max_score = 0.0;
  double mean_score = 0.0;
  double width = 0.0;       // max - min
  double mean_arch_score = 0.0;
};

// Scores n_samples architectures drawn from the current concentrations plus
// the mean architecture.  The score function is caller-supplied (oracle
// accuracy in the harness).
BandStats exploration_band(
    const SuperNetState& net,
    const std::vector<dirichlet::Concentration>& arch, int n_samples,
    const std::function<double(const Genotype&)>& score, Rng& rng);

// Loss restricted to per-edge mixing logits: theta_e = softmax(mu_e) with a
// frozen batch, subset plan and weights.  dim = sum of surviving op counts.
LossOverLogits supernet_loss_surface(const SuperNetState& net,
                                     const Batch& batch,
                                     const SubsetPlan& plan);

// One exporter row; NaN fields print as empty cells.
struct PlotRow {
  int epoch = 0;
  double eigenvalue = 0.0;
  double trace = 0.0;
  double band_min = 0.0;
  double band_max = 0.0;
  double band_mean = 0.0;
};

// CSV with header "epoch,eigenvalue,trace,band_min,band_max,band_mean".
std::string plot_csv(const std::vector<PlotRow>& rows);

}  // namespace drnas::diagnostics
