#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drnas/dirichlet.hpp"
#include "drnas/optim.hpp"
#include "drnas/rng.hpp"
#include "drnas/search_space.hpp"

namespace drnas::progressive {

// One stage of the search: how long to train, how many channels each edge
// routes through its ops (channels / partial_k), and how many candidate
// ops survive on every edge while the stage runs.
struct StageSpec {
  int epochs = 0;
  int partial_k = 1;
  int registry_size = 0;
};

// Index map from q new positions into n old ones: identity on the first
// min(n, q) slots, uniformly random old indices for the rest.
struct WidenMapping {
  int n = 0;
  int q = 0;
  std::vector<int> table;

  int operator()(int i) const { return table[i]; }
};

WidenMapping widen_mapping(int n, int q, Rng& rng);
WidenMapping identity_mapping(int n);

// U[o, i] = W[g_out(o), g_in(i)].  Pure remapping; replicated rows and
// columns keep the source values unscaled.
Tensor2 widen_weights(const Tensor2& W, const WidenMapping& g_out,
                      const WidenMapping& g_in);

// Resizes every per-edge op tensor from width channels/partial_k to
// channels/new_partial_k.  Each tensor gets fresh output and input mappings
// drawn in parameter-name order; its bias follows the output mapping.
// Optimizer slots of touched tensors reset to zero.
void widen_supernet(SuperNetState& net, int new_partial_k, Rng& rng);

// Keeps the `keep` ops with the largest Dirichlet mean on each edge (ties
// to the lower registry index).  Surviving eta entries and their Adam
// moments carry over untouched; dropped op weights are deleted.
void prune_ops(SuperNetState& net, std::vector<dirichlet::Concentration>& arch,
               std::vector<AdamState>& arch_opt, int keep);

struct TransitionReport {
  int partial_k_before = 0;
  int partial_k_after = 0;
  int ops_per_edge_before = 0;
  int ops_per_edge_after = 0;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::vector<std::vector<std::string>> surviving_ops;
};

// Prune first, then widen, so dropped ops never get new weights.
TransitionReport stage_transition(SuperNetState& net,
                                  std::vector<dirichlet::Concentration>& arch,
                                  std::vector<AdamState>& arch_opt,
                                  const StageSpec& next, Rng& rng);

}  // namespace drnas::progressive
