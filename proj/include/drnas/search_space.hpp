#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drnas/dirichlet.hpp"
#include "drnas/nn_ops.hpp"
#include "drnas/optim.hpp"
#include "drnas/rng.hpp"
#include "drnas/tensor.hpp"

namespace drnas {

enum class OpKind { kZero, kSkip, kAffine, kAffineRelu, kScaleHalf };

OpKind op_kind_from_name(const std::string& name);
const std::string& op_name(OpKind kind);
bool op_has_params(OpKind kind);

// Cell topology: a DAG over n_nodes values.  Node 0 is the cell input;
// every edge (i, j) with i < j carries one candidate operation set and
// node j sums its incoming edge outputs.  The cell output is the last node.
struct CellSpec {
  std::string name;
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::string> op_registry;

  int n_edges() const { return static_cast<int>(edges.size()); }
  int n_ops() const { return static_cast<int>(op_registry.size()); }
  int op_index(const std::string& name) const;

  static CellSpec micro();
  static CellSpec nb201_like();
  static CellSpec by_name(const std::string& name);
};

// One concrete architecture: a registry index per edge.  `ops` carries the
// full registry so the file is readable without the spec that produced it.
struct Genotype {
  std::string space;
  std::vector<std::string> ops;
  std::vector<int> choices;

  // Compact identity used as the oracle-table key, e.g. "2-0-3".
  std::string key() const;
  nlohmann::ordered_json to_json() const;
  static Genotype from_json(const nlohmann::json& j);
};

// Enumerates choices in lexicographic order (last edge varies fastest).
// Throws if the space holds more than `cap` genotypes.
std::vector<Genotype> enumerate_space(const CellSpec& spec, int cap = 4096);

// Throws std::invalid_argument when the genotype does not fit the spec
// (wrong space name, choice count, or out-of-registry choice).
void check_genotype(const CellSpec& spec, const Genotype& g);

enum class SubsetPolicy { kRandomPerStep, kFixedSlice };

std::string subset_policy_name(SubsetPolicy policy);
SubsetPolicy subset_policy_from_name(const std::string& name);

// Weight-sharing network: `n_cells` copies of the cell between a linear
// stem (input_dim -> channels) and a linear head (channels -> n_classes).
// Candidate ops act on a channels/partial_k feature subset; the rest of the
// features bypass the edge unchanged.
//
// edge_ops holds the surviving registry indices per edge, ascending.  All
// cells share the same survivors and the same per-edge concentrations, but
// have distinct weights.
struct SuperNetState {
  CellSpec spec;
  int channels = 0;
  int n_cells = 0;
  int partial_k = 1;
  int input_dim = 0;
  int n_classes = 0;
  SubsetPolicy policy = SubsetPolicy::kRandomPerStep;
  std::vector<std::vector<int>> edge_ops;
  ParamStore params;

  int subset_width() const { return channels / partial_k; }
};

// Parameter names follow "c{cell}.e{edge}.o{registry_index}.W" / ".b" for
// ops, plus "stem.W", "stem.b", "head.W", "head.b".
std::string edge_param_name(int cell, int edge, int op_index, char which);

SuperNetState build_supernet(const CellSpec& spec, int channels, int n_cells,
                             int partial_k, int input_dim, int n_classes,
                             SubsetPolicy policy, Rng& init_rng);

// Feature indices routed through the candidate ops, one sorted list per
// (cell, edge).  kFixedSlice always picks the leading channels.
struct SubsetPlan {
  std::vector<std::vector<std::vector<int>>> subsets;
};

SubsetPlan draw_subset_plan(const SuperNetState& net, Rng& rng);

// Mixture over one edge: out[:, subset] = sum_o theta[o] * op_o(x[:, subset]),
// all other columns pass through unchanged.  `weights` supplies (W, b) for
// parametric ops, indexed like `kinds`; non-parametric slots are ignored.
Tensor2 mixed_op_forward(const Tensor2& x, const std::vector<double>& theta,
                         const std::vector<OpKind>& kinds,
                         const std::vector<const Tensor2*>& weights,
                         const std::vector<const Tensor2*>& biases,
                         const std::vector<int>& subset);

struct Batch {
  Tensor2 x;
  std::vector<int> y;
};

// Everything the backward pass needs; produced by supernet_forward.
struct SupernetCache;

struct ForwardResult {
  double loss = 0.0;
  Tensor2 logits;
};

// theta holds one simplex per edge, aligned with edge_ops.  When cache is
// non-null the caller may run supernet_backward afterwards.
ForwardResult supernet_forward(const SuperNetState& net, const Batch& batch,
                               const std::vector<dirichlet::SimplexSample>& theta,
                               const SubsetPlan& plan, SupernetCache* cache);

// Accumulates parameter gradients into net.params.grads (caller zeroes them)
// and, when theta_grads is non-null, writes dLoss/dtheta per edge with
// contributions summed over cells.
void supernet_backward(SuperNetState& net, const SupernetCache& cache,
                       std::vector<std::vector<double>>* theta_grads);

ForwardResult supernet_eval(const SuperNetState& net, const Batch& batch,
                            const std::vector<dirichlet::SimplexSample>& theta,
                            const SubsetPlan& plan);

// Argmax of the Dirichlet mean per edge; ties resolve to the lowest
// surviving registry index.
Genotype select_genotype(const SuperNetState& net,
                         const std::vector<dirichlet::Concentration>& arch);

// Same selection rule applied to a concrete simplex draw per edge.
Genotype discretize_sample(const SuperNetState& net,
                           const std::vector<dirichlet::SimplexSample>& theta);

// Stand-alone network for one genotype at full width (no subsets, no
// mixing).  Reads weights by the supernet naming scheme, so it can run
// against either its own store or a supernet's.
ForwardResult discrete_forward(const CellSpec& spec, const Genotype& genotype,
                               const ParamStore& params, int channels,
                               int n_cells, const Batch& batch);

struct DiscreteGradCache;

ForwardResult discrete_forward_cached(const CellSpec& spec,
                                      const Genotype& genotype,
                                      const ParamStore& params, int channels,
                                      int n_cells, const Batch& batch,
                                      DiscreteGradCache& cache);

void discrete_backward(const CellSpec& spec, const Genotype& genotype,
                       ParamStore& params, const DiscreteGradCache& cache);

// Fresh parameters for just the tensors `genotype` touches.
ParamStore build_discrete_params(const CellSpec& spec, const Genotype& genotype,
                                 int channels, int n_cells, int input_dim,
                                 int n_classes, Rng& init_rng);

struct SupernetCache {
  Batch batch;
  SubsetPlan plan;
  std::vector<dirichlet::SimplexSample> theta;
  // Node values per cell, plus per (cell, edge, local op) intermediates.
  std::vector<std::vector<Tensor2>> node_values;
  struct EdgeOpTrace {
    Tensor2 input_subset;
    Tensor2 pre_activation;  // affine output before relu; empty otherwise
    Tensor2 output;          // op output on the subset columns
  };
  std::vector<std::vector<std::vector<EdgeOpTrace>>> traces;
  Tensor2 stem_out;
  Tensor2 features;  // final cell output fed to the head
  nn::XentResult xent;
};

struct DiscreteGradCache {
  Batch batch;
  std::vector<std::vector<Tensor2>> node_values;
  std::vector<std::vector<Tensor2>> pre_activations;
  Tensor2 stem_out;
  Tensor2 features;
  nn::XentResult xent;
};

}  // namespace drnas
