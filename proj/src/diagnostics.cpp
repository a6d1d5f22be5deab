#include "drnas/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace drnas::diagnostics {

namespace {

double l2_norm(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_dim(const LossOverLogits& f, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != f.dim) {
    throw std::invalid_argument("diagnostics: point dimension mismatch");
  }
}

std::vector<double> random_unit(int dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = rng.normal();
    norm = l2_norm(v);
  }
  for (double& x : v) x /= norm;
  return v;
}

std::string format_cell(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::vector<double> hvp(const LossOverLogits& f, const std::vector<double>& x,
                        const std::vector<double>& v) {
  check_dim(f, x);
  if (v.size() != x.size()) {
    throw std::invalid_argument("hvp: direction dimension mismatch");
  }
  const double v_norm = l2_norm(v);
  if (v_norm == 0.0) return std::vector<double>(x.size(), 0.0);
  const double eps = 1e-3 * (1.0 + l2_norm(x));
  std::vector<double> xp = x;
  std::vector<double> xm = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const double step = eps * v[i] / v_norm;
    xp[i] += step;
    xm[i] -= step;
  }
  const std::vector<double> gp = f.grad(xp);
  const std::vector<double> gm = f.grad(xm);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = (gp[i] - gm[i]) / (2.0 * eps) * v_norm;
  }
  return out;
}

PowerIterResult dominant_eigenvalue(const LossOverLogits& f,
                                    const std::vector<double>& x, Rng& rng,
                                    int max_iters, double tol) {
  check_dim(f, x);
  PowerIterResult result;
  std::vector<double> v = random_unit(f.dim, rng);
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    std::vector<double> w = hvp(f, x, v);
    const double mag = l2_norm(w);
    result.iterations = it;
    result.rayleigh = dot(v, w);
    result.magnitude = mag;
    if (mag < 1e-300) {
      // Zero operator; the dominant eigenvalue is zero.
      result.converged = true;
      return result;
    }
    for (size_t i = 0; i < w.size(); ++i) w[i] /= mag;
    v = std::move(w);
    if (it > 1 && std::abs(mag - prev) <= tol * std::max(1.0, mag)) {
      result.converged = true;
      return result;
    }
    prev = mag;
  }
  return result;
}

double hessian_trace(const LossOverLogits& f, const std::vector<double>& x,
                     int probes, Rng& rng) {
  check_dim(f, x);
  if (probes < 1) {
    throw std::invalid_argument("hessian_trace: need at least one probe");
  }
  double total = 0.0;
  std::vector<double> z(f.dim);
  for (int p = 0; p < probes; ++p) {
    for (double& zi : z) zi = rng.uniform_int(2) == 0 ? -1.0 : 1.0;
    total += dot(z, hvp(f, x, z));
  }
  return total / probes;
}

BoundCheck laplace_bound_check(const std::vector<double>& beta,
                               const LossOverLogits& f, int mc_samples,
                               int trace_probes, Rng& rng) {
  if (static_cast<int>(beta.size()) != f.dim) {
    throw std::invalid_argument("laplace_bound_check: dimension mismatch");
  }
  if (mc_samples < 2) {
    throw std::invalid_argument("laplace_bound_check: need at least 2 samples");
  }
  BoundCheck check;
  std::vector<double> shifted = beta;
  for (double& b : shifted) b -= 1.0;
  check.delta = l2_norm(shifted);

  const dirichlet::LaplaceParams params = dirichlet::laplace_params(beta);
  check.f_mu = f.value(params.mu);

  check.psd_proxy = std::numeric_limits<double>::infinity();
  for (int p = 0; p < 16; ++p) {
    const std::vector<double> v = random_unit(f.dim, rng);
    check.psd_proxy = std::min(check.psd_proxy, dot(v, hvp(f, params.mu, v)));
  }
  check.trace = hessian_trace(f, params.mu, trace_probes, rng);
  check.sigma_bound =
      dirichlet::sigma_lower_bound(check.delta, static_cast<int>(beta.size()));

  double sum = 0.0;
  double sum_sq = 0.0;
  for (int s = 0; s < mc_samples; ++s) {
    const double val = f.value(dirichlet::laplace_sample(params, rng));
    sum += val;
    sum_sq += val * val;
  }
  check.lhs = sum / mc_samples;
  const double var =
      std::max(0.0, (sum_sq - sum * sum / mc_samples) / (mc_samples - 1));
  check.lhs_se = std::sqrt(var / mc_samples);

  check.rhs = check.f_mu + 0.5 * check.sigma_bound * check.trace;
  check.holds = check.lhs >= check.rhs - 3.0 * check.lhs_se;
  return check;
}

BandStats exploration_band(
    const SuperNetState& net,
    const std::vector<dirichlet::Concentration>& arch, int n_samples,
    const std::function<double(const Genotype&)>& score, Rng& rng) {
  if (n_samples < 1) {
    throw std::invalid_argument("exploration_band: need at least one sample");
  }
  std::vector<std::vector<double>> betas;
  betas.reserve(arch.size());
  for (const auto& conc : arch) {
    betas.push_back(dirichlet::beta_from_eta(conc.eta));
  }
  BandStats stats;
  stats.sample_scores.reserve(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    std::vector<dirichlet::SimplexSample> theta;
    theta.reserve(betas.size());
    for (const auto& beta : betas) {
      theta.push_back(dirichlet::sample(beta, rng));
    }
    stats.sample_scores.push_back(score(discretize_sample(net, theta)));
  }
  stats.min_score = *std::min_element(stats.sample_scores.begin(),
                                      stats.sample_scores.end());
  stats.max_score = *std::max_element(stats.sample_scores.begin(),
                                      stats.sample_scores.end());
  double sum = 0.0;
  for (double v : stats.sample_scores) sum += v;
  stats.mean_score = sum / n_samples;
  stats.width = stats.max_score - stats.min_score;
  stats.mean_arch_score = score(select_genotype(net, arch));
  return stats;
}

LossOverLogits supernet_loss_surface(const SuperNetState& net,
                                     const Batch& batch,
                                     const SubsetPlan& plan) {
  auto frozen = std::make_shared<SuperNetState>(net);
  auto frozen_batch = std::make_shared<Batch>(batch);
  auto frozen_plan = std::make_shared<SubsetPlan>(plan);

  std::vector<size_t> sizes;
  int dim = 0;
  for (const auto& ops : net.edge_ops) {
    sizes.push_back(ops.size());
    dim += static_cast<int>(ops.size());
  }

  auto unpack = [sizes](const std::vector<double>& mu) {
    std::vector<dirichlet::SimplexSample> theta;
    size_t at = 0;
    for (size_t size : sizes) {
      dirichlet::SimplexSample s;
      s.theta.resize(size);
      double mx = mu[at];
      for (size_t i = 1; i < size; ++i) mx = std::max(mx, mu[at + i]);
      double z = 0.0;
      for (size_t i = 0; i < size; ++i) {
        s.theta[i] = std::exp(mu[at + i] - mx);
        z += s.theta[i];
      }
      for (size_t i = 0; i < size; ++i) s.theta[i] /= z;
      at += size;
      theta.push_back(std::move(s));
    }
    return theta;
  };

  LossOverLogits f;
  f.dim = dim;
  f.value = [frozen, frozen_batch, frozen_plan,
             unpack](const std::vector<double>& mu) {
    return supernet_eval(*frozen, *frozen_batch, unpack(mu), *frozen_plan).loss;
  };
  f.grad = [frozen, frozen_batch, frozen_plan, unpack,
            sizes](const std::vector<double>& mu) {
    const std::vector<dirichlet::SimplexSample> theta = unpack(mu);
    SupernetCache cache;
    supernet_forward(*frozen, *frozen_batch, theta, *frozen_plan, &cache);
    frozen->params.zero_grads();
    std::vector<std::vector<double>> theta_grads;
    supernet_backward(*frozen, cache, &theta_grads);
    std::vector<double> g;
    for (size_t e = 0; e < sizes.size(); ++e) {
      const std::vector<double>& th = theta[e].theta;
      const std::vector<double>& gt = theta_grads[e];
      double inner = 0.0;
      for (size_t i = 0; i < th.size(); ++i) inner += th[i] * gt[i];
      for (size_t i = 0; i < th.size(); ++i) {
        g.push_back(th[i] * (gt[i] - inner));
      }
    }
    return g;
  };
  return f;
}

std::string plot_csv(const std::vector<PlotRow>& rows) {
  std::ostringstream os;
  os << "epoch,eigenvalue,trace,band_min,band_max,band_mean\n";
  for (const PlotRow& row : rows) {
    os << row.epoch << ',' << format_cell(row.eigenvalue) << ','
       << format_cell(row.trace) << ',' << format_cell(row.band_min) << ','
       << format_cell(row.band_max) << ',' << format_cell(row.band_mean)
       << '\n';
  }
  return os.str();
}

}  // namespace drnas::diagnostics
