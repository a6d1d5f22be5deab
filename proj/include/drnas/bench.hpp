#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "drnas/rng.hpp"
#include "drnas/search_space.hpp"
#include "drnas/tensor.hpp"

namespace drnas::bench {

// Two-dimensional classification set with fixed row order and disjoint,
// class-stratified splits: 40% weight rows, 40% architecture rows, the
// remainder held out for test accuracy.
struct Dataset {
  std::string kind;
  int n = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  int n_classes = 0;
  Tensor2 x;
  std::vector<int> y;
  std::vector<int> weight_idx;
  std::vector<int> arch_idx;
  std::vector<int> test_idx;

  int input_dim() const { return x.cols; }
};

// kind is one of "moons", "blobs", "spirals".  Class counts differ by at
// most one.  The same arguments always produce the same bytes.
Dataset gen_dataset(const std::string& kind, int n, double noise,
                    std::uint64_t seed);

// FNV-1a over the generation arguments, raw feature/label bits and split
// indices; identifies a dataset in oracle tables and checkpoints.
std::uint64_t dataset_hash(const Dataset& data);

// Copies `count` rows starting at `start` of the index list into a batch.
Batch make_batch(const Dataset& data, const std::vector<int>& idx,
                 size_t start, size_t count);

Batch make_batch(const Dataset& data, const std::vector<int>& idx);

struct EvalSettings {
  int channels = 16;
  int n_cells = 1;
  int batch_size = 32;
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 3e-4;
};

// Trains the genotype from scratch on the weight and architecture rows for
// `budget_steps` minibatch steps (cosine learning rate) and returns test
// accuracy.  Fully determined by (genotype, data, budget, seed, settings).
double train_discrete_genotype(const CellSpec& spec, const Genotype& genotype,
                               const Dataset& data, int budget_steps,
                               std::uint64_t seed,
                               const EvalSettings& settings = {});

// Mean test accuracy per genotype over r_seeds independent trainings,
// exhaustively over the space.  Ranks read 0 for the best architecture.
struct OracleTable {
  std::string space;
  std::uint64_t data_hash = 0;
  int budget_steps = 0;
  int r_seeds = 0;
  std::uint64_t base_seed = 0;
  EvalSettings settings;
  std::map<std::string, double> accuracy;

  // Fraction of genotypes with strictly higher mean accuracy.
  double rank_of(const Genotype& genotype) const;
  double accuracy_of(const Genotype& genotype) const;

  nlohmann::ordered_json to_json() const;
  static OracleTable from_json(const nlohmann::json& j);
};

// Seed used for one (genotype index, repetition) training inside
// build_oracle; exported so a single table entry can be reproduced without
// rebuilding the table.
std::uint64_t oracle_rep_seed(std::uint64_t base_seed, size_t genotype_index,
                              int rep);

// Training runs are keyed by (genotype index, repetition) only, so worker
// count never changes the result.
OracleTable build_oracle(const CellSpec& spec, const Dataset& data,
                         int budget_steps, int r_seeds,
                         std::uint64_t base_seed, int workers,
                         const EvalSettings& settings = {},
                         int enumeration_cap = 4096);

// Refuses tables built against different data.
void check_oracle_matches(const OracleTable& table, const Dataset& data);

}  // namespace drnas::bench
