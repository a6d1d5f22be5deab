#include "drnas/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace drnas {

void ParamStore::add(const std::string& name, Tensor2 init) {
  if (values.count(name) > 0) {
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  }
  grads[name] = Tensor2(init.rows, init.cols);
  momentum[name] = Tensor2(init.rows, init.cols);
  values[name] = std::move(init);
}

void ParamStore::remove(const std::string& name) {
  values.erase(name);
  grads.erase(name);
  momentum.erase(name);
}

void ParamStore::replace(const std::string& name, Tensor2 value) {
  if (values.count(name) == 0) {
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  }
  grads[name] = Tensor2(value.rows, value.cols);
  momentum[name] = Tensor2(value.rows, value.cols);
  values[name] = std::move(value);
}

bool ParamStore::has(const std::string& name) const {
  return values.count(name) > 0;
}

Tensor2& ParamStore::value(const std::string& name) {
  auto it = values.find(name);
  if (it == values.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  }
  return it->second;
}

const Tensor2& ParamStore::value(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  }
  return it->second;
}

Tensor2& ParamStore::grad(const std::string& name) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    throw std::invalid_argument("ParamStore: unknown gradient " + name);
  }
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, g] : grads) {
    std::fill(g.data.begin(), g.data.end(), 0.0);
  }
}

std::int64_t ParamStore::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : values) n += static_cast<std::int64_t>(v.size());
  return n;
}

void sgd_momentum_step(ParamStore& params, double lr, double mu,
                       double weight_decay) {
  for (auto& [name, value] : params.values) {
    Tensor2& g = params.grads.at(name);
    Tensor2& buf = params.momentum.at(name);
    for (size_t i = 0; i < value.data.size(); ++i) {
      const double d = g.data[i] + weight_decay * value.data[i];
      buf.data[i] = mu * buf.data[i] + d;
      value.data[i] -= lr * buf.data[i];
    }
  }
}

void adam_step(std::vector<double>& x, const std::vector<double>& g,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (x.size() != g.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  }
  if (state.m.size() != x.size()) {
    state.m.assign(x.size(), 0.0);
    state.v.assign(x.size(), 0.0);
    state.t = 0;
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < x.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double cosine_lr(int t, int total, double lr_max) {
  if (total <= 0) return lr_max;
  const double frac = std::clamp(static_cast<double>(t) / total, 0.0, 1.0);
  return 0.5 * lr_max * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace drnas
