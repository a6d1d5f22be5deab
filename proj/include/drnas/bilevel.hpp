#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drnas/bench.hpp"
#include "drnas/dirichlet.hpp"
#include "drnas/optim.hpp"
#include "drnas/progressive.hpp"
#include "drnas/rng.hpp"
#include "drnas/search_space.hpp"

namespace drnas::bilevel {

// Distance term added to the architecture objective.  The quadratic anchor
// is the default; the plain norm and the KL to the flat Dirichlet are the
// config-switch alternatives.
enum class DistanceKind { kEtaQuadratic, kEtaNorm, kKlSymmetric };

std::string distance_name(DistanceKind kind);
DistanceKind distance_from_name(const std::string& name);

struct SearchConfig {
  int channels = 8;
  int n_cells = 1;
  int batch_size = 16;
  double lambda_anchor = 1e-3;
  double eta_init_scale = 1e-3;
  double w_lr = 0.1;
  double w_momentum = 0.9;
  double w_weight_decay = 3e-4;
  double arch_lr = 0.01;
  double arch_beta1 = 0.9;
  double arch_beta2 = 0.999;
  std::uint64_t seed = 1;
  DistanceKind distance = DistanceKind::kEtaQuadratic;
  SubsetPolicy subset_policy = SubsetPolicy::kRandomPerStep;
  std::vector<progressive::StageSpec> schedule;
};

nlohmann::ordered_json search_config_to_json(const SearchConfig& config);
SearchConfig search_config_from_json(const nlohmann::json& j);

// Throws std::invalid_argument when the schedule cannot run against the
// given cell spec (empty stages, growing registries, K not dividing C, ...).
void validate_config(const SearchConfig& config, const CellSpec& spec);

struct TrainState {
  SuperNetState net;
  std::vector<dirichlet::Concentration> arch;
  std::vector<AdamState> arch_opt;
  int epoch = 0;  // completed epochs across all stages
  int stage = 0;  // stage currently being trained
  Rng data_rng{0};
  Rng subset_rng{0};
  Rng sample_rng{0};
};

TrainState init_state(const SearchConfig& config, const CellSpec& spec,
                      int input_dim, int n_classes);

// One minibatch update of the shared weights at the given learning rate;
// concentrations are read (sampled through) but never written.  Returns the
// training loss.
double step_weights(TrainState& state, const SearchConfig& config,
                    const Batch& batch, double lr);

// One Adam update of the concentration parameters from the pathwise
// gradient plus the distance term; weights are read but never written.
// Returns data loss + distance value.
double step_architecture(TrainState& state, const SearchConfig& config,
                         const Batch& batch);

struct TrajectoryLog {
  std::vector<nlohmann::ordered_json> records;
};

struct RunHooks {
  // Called after each epoch's record is assembled; may append fields.
  std::function<void(const TrainState&, nlohmann::ordered_json&)> per_epoch;
  // Called when a stage finishes (state.stage == finished stage index).
  std::function<void(const TrainState&)> per_stage;
};

struct SearchResult {
  Genotype genotype;
  TrainState state;
  TrajectoryLog log;
};

SearchResult run_search(const SearchConfig& config, const CellSpec& spec,
                        const bench::Dataset& data, const RunHooks& hooks = {});

// Continues a checkpointed run.  Stage transitions happen when the first
// epoch of a stage begins, so a state saved at a stage boundary has not yet
// been pruned or widened for the next stage.
SearchResult resume_search(TrainState state, const SearchConfig& config,
                           const CellSpec& spec, const bench::Dataset& data,
                           TrajectoryLog log, const RunHooks& hooks = {});

// Binary checkpoint (MessagePack).  Doubles round-trip bit-exactly, so a
// save/load/save cycle reproduces the same bytes.
std::vector<std::uint8_t> checkpoint_bytes(const TrainState& state,
                                           const SearchConfig& config,
                                           std::uint64_t data_hash);

struct Checkpoint {
  TrainState state;
  SearchConfig config;
  std::uint64_t data_hash = 0;
};

Checkpoint checkpoint_restore(const std::vector<std::uint8_t>& bytes);

}  // namespace drnas::bilevel
