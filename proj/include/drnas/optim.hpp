#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drnas/tensor.hpp"

namespace drnas {

// Named parameter set with per-tensor gradient and optimizer slots.
// std::map keeps iteration order stable by name, which makes optimizer
// sweeps and serialization deterministic.
struct ParamStore {
  std::map<std::string, Tensor2> values;
  std::map<std::string, Tensor2> grads;
  std::map<std::string, Tensor2> momentum;

  void add(const std::string& name, Tensor2 init);
  void remove(const std::string& name);
  // Swaps in a new tensor and zeroes the grad and momentum slots.
  void replace(const std::string& name, Tensor2 value);
  bool has(const std::string& name) const;
  Tensor2& value(const std::string& name);
  const Tensor2& value(const std::string& name) const;
  Tensor2& grad(const std::string& name);

  void zero_grads();
  std::int64_t param_count() const;
};

// buf = mu * buf + grad + wd * value;  value -= lr * buf.
// A zero gradient with zero buffer and zero decay leaves values unchanged.
void sgd_momentum_step(ParamStore& params, double lr, double mu,
                       double weight_decay);

// Adam state for a flat vector of parameters (used for the concentration
// parameters, which live outside any ParamStore).
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

void adam_step(std::vector<double>& x, const std::vector<double>& g,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Cosine annealing from lr_max at t=0 to 0 at t=total.  t is clamped.
double cosine_lr(int t, int total, double lr_max);

}  // namespace drnas
