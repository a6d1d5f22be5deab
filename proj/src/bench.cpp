#include "drnas/bench.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "drnas/nn_ops.hpp"
#include "drnas/optim.hpp"

namespace drnas::bench {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void hash_bytes(std::uint64_t& h, const void* p, size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(p);
  for (size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
}

void hash_u64(std::uint64_t& h, std::uint64_t v) { hash_bytes(h, &v, 8); }

void hash_double(std::uint64_t& h, double v) {
  hash_u64(h, std::bit_cast<std::uint64_t>(v));
}

// Class sizes n/k rounded so the first n mod k classes get one extra row.
std::vector<int> class_counts(int n, int k) {
  std::vector<int> counts(k, n / k);
  for (int c = 0; c < n % k; ++c) counts[c] += 1;
  return counts;
}

void emit_point(Dataset& data, int row, double px, double py, int label,
                double noise, Rng& noise_rng) {
  data.x.at(row, 0) = px + noise * noise_rng.normal();
  data.x.at(row, 1) = py + noise * noise_rng.normal();
  data.y[row] = label;
}

void fill_moons(Dataset& data, Rng& noise_rng) {
  const std::vector<int> counts = class_counts(data.n, 2);
  int row = 0;
  for (int i = 0; i < counts[0]; ++i, ++row) {
    const double t = std::numbers::pi * (i + 0.5) / counts[0];
    emit_point(data, row, std::cos(t), std::sin(t), 0, data.noise, noise_rng);
  }
  for (int i = 0; i < counts[1]; ++i, ++row) {
    const double t = std::numbers::pi * (i + 0.5) / counts[1];
    emit_point(data, row, 1.0 - std::cos(t), 0.5 - std::sin(t), 1, data.noise,
               noise_rng);
  }
  data.n_classes = 2;
}

void fill_blobs(Dataset& data, Rng& noise_rng) {
  // Centers on a radius-2 circle at 90, 210 and 330 degrees.
  const double r3 = std::sqrt(3.0);
  const double cx[3] = {0.0, -r3, r3};
  const double cy[3] = {2.0, -1.0, -1.0};
  const std::vector<int> counts = class_counts(data.n, 3);
  int row = 0;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < counts[c]; ++i, ++row) {
      emit_point(data, row, cx[c], cy[c], c, data.noise, noise_rng);
    }
  }
  data.n_classes = 3;
}

void fill_spirals(Dataset& data, Rng& noise_rng) {
  const std::vector<int> counts = class_counts(data.n, 2);
  int row = 0;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < counts[c]; ++i, ++row) {
      const double s = (i + 0.5) / counts[c];
      const double angle = 3.0 * std::numbers::pi * s + std::numbers::pi * c;
      const double radius = 0.2 + 0.8 * s;
      emit_point(data, row, radius * std::cos(angle), radius * std::sin(angle),
                 c, data.noise, noise_rng);
    }
  }
  data.n_classes = 2;
}

// 40% weight rows, 40% architecture rows, rest test, stratified per class.
void fill_splits(Dataset& data, Rng& split_rng) {
  for (int c = 0; c < data.n_classes; ++c) {
    std::vector<int> rows;
    for (int i = 0; i < data.n; ++i) {
      if (data.y[i] == c) rows.push_back(i);
    }
    shuffle(rows, split_rng);
    const int m = static_cast<int>(rows.size());
    const int n_w = (4 * m) / 10;
    const int n_a = (4 * m) / 10;
    for (int i = 0; i < m; ++i) {
      if (i < n_w) {
        data.weight_idx.push_back(rows[i]);
      } else if (i < n_w + n_a) {
        data.arch_idx.push_back(rows[i]);
      } else {
        data.test_idx.push_back(rows[i]);
      }
    }
  }
  std::sort(data.weight_idx.begin(), data.weight_idx.end());
  std::sort(data.arch_idx.begin(), data.arch_idx.end());
  std::sort(data.test_idx.begin(), data.test_idx.end());
}

nlohmann::ordered_json settings_to_json(const EvalSettings& s) {
  nlohmann::ordered_json j;
  j["channels"] = s.channels;
  j["n_cells"] = s.n_cells;
  j["batch_size"] = s.batch_size;
  j["lr"] = s.lr;
  j["momentum"] = s.momentum;
  j["weight_decay"] = s.weight_decay;
  return j;
}

EvalSettings settings_from_json(const nlohmann::json& j) {
  EvalSettings s;
  s.channels = j.at("channels").get<int>();
  s.n_cells = j.at("n_cells").get<int>();
  s.batch_size = j.at("batch_size").get<int>();
  s.lr = j.at("lr").get<double>();
  s.momentum = j.at("momentum").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  return s;
}

}  // namespace

Dataset gen_dataset(const std::string& kind, int n, double noise,
                    std::uint64_t seed) {
  if (n < 10) {
    throw std::invalid_argument("gen_dataset: need at least 10 rows");
  }
  if (noise < 0.0) {
    throw std::invalid_argument("gen_dataset: noise must be non-negative");
  }
  Dataset data;
  data.kind = kind;
  data.n = n;
  data.noise = noise;
  data.seed = seed;
  data.x = Tensor2(n, 2);
  data.y.assign(n, 0);

  Rng root = Rng(seed).split(kind);
  Rng noise_rng = root.split("noise");
  if (kind == "moons") {
    fill_moons(data, noise_rng);
  } else if (kind == "blobs") {
    fill_blobs(data, noise_rng);
  } else if (kind == "spirals") {
    fill_spirals(data, noise_rng);
  } else {
    throw std::invalid_argument("gen_dataset: unknown kind " + kind);
  }
  Rng split_rng = root.split("split");
  fill_splits(data, split_rng);
  return data;
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = kFnvOffset;
  hash_bytes(h, data.kind.data(), data.kind.size());
  hash_u64(h, static_cast<std::uint64_t>(data.n));
  hash_double(h, data.noise);
  hash_u64(h, data.seed);
  for (double v : data.x.data) hash_double(h, v);
  for (int v : data.y) hash_u64(h, static_cast<std::uint64_t>(v));
  for (int v : data.weight_idx) hash_u64(h, static_cast<std::uint64_t>(v));
  for (int v : data.arch_idx) hash_u64(h, static_cast<std::uint64_t>(v));
  for (int v : data.test_idx) hash_u64(h, static_cast<std::uint64_t>(v));
  return h;
}

Batch make_batch(const Dataset& data, const std::vector<int>& idx,
                 size_t start, size_t count) {
  if (start + count > idx.size()) {
    throw std::out_of_range("make_batch: index range past the list end");
  }
  Batch b;
  b.x = Tensor2(static_cast<int>(count), data.x.cols);
  b.y.resize(count);
  for (size_t r = 0; r < count; ++r) {
    const int row = idx[start + r];
    for (int ccol = 0; ccol < data.x.cols; ++ccol) {
      b.x.at(static_cast<int>(r), ccol) = data.x.at(row, ccol);
    }
    b.y[r] = data.y[row];
  }
  return b;
}

Batch make_batch(const Dataset& data, const std::vector<int>& idx) {
  return make_batch(data, idx, 0, idx.size());
}

double train_discrete_genotype(const CellSpec& spec, const Genotype& genotype,
                               const Dataset& data, int budget_steps,
                               std::uint64_t seed,
                               const EvalSettings& settings) {
  if (budget_steps < 1) {
    throw std::invalid_argument("train_discrete_genotype: empty budget");
  }
  Rng root(seed);
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  ParamStore params =
      build_discrete_params(spec, genotype, settings.channels,
                            settings.n_cells, data.input_dim(), data.n_classes,
                            init_rng);

  std::vector<int> rows = data.weight_idx;
  rows.insert(rows.end(), data.arch_idx.begin(), data.arch_idx.end());
  if (rows.empty()) {
    throw std::invalid_argument("train_discrete_genotype: no training rows");
  }
  const size_t batch =
      std::min<size_t>(static_cast<size_t>(settings.batch_size), rows.size());

  size_t pos = rows.size();
  for (int step = 0; step < budget_steps; ++step) {
    if (pos + batch > rows.size()) {
      shuffle(rows, batch_rng);
      pos = 0;
    }
    Batch b = make_batch(data, rows, pos, batch);
    pos += batch;
    DiscreteGradCache cache;
    discrete_forward_cached(spec, genotype, params, settings.channels,
                            settings.n_cells, b, cache);
    params.zero_grads();
    discrete_backward(spec, genotype, params, cache);
    sgd_momentum_step(params, cosine_lr(step, budget_steps, settings.lr),
                      settings.momentum, settings.weight_decay);
  }

  Batch test = make_batch(data, data.test_idx);
  ForwardResult res = discrete_forward(spec, genotype, params,
                                       settings.channels, settings.n_cells,
                                       test);
  return nn::accuracy(res.logits, test.y);
}

double OracleTable::rank_of(const Genotype& genotype) const {
  const double mine = accuracy_of(genotype);
  int better = 0;
  for (const auto& [key, acc] : accuracy) {
    if (acc > mine) ++better;
  }
  return static_cast<double>(better) / accuracy.size();
}

double OracleTable::accuracy_of(const Genotype& genotype) const {
  auto it = accuracy.find(genotype.key());
  if (it == accuracy.end()) {
    throw std::out_of_range("oracle table holds no entry for genotype " +
                            genotype.key());
  }
  return it->second;
}

nlohmann::ordered_json OracleTable::to_json() const {
  nlohmann::ordered_json j;
  j["space"] = space;
  j["data_hash"] = data_hash;
  j["budget_steps"] = budget_steps;
  j["r_seeds"] = r_seeds;
  j["base_seed"] = base_seed;
  j["settings"] = settings_to_json(settings);
  j["accuracy"] = accuracy;
  return j;
}

OracleTable OracleTable::from_json(const nlohmann::json& j) {
  OracleTable t;
  try {
    t.space = j.at("space").get<std::string>();
    t.data_hash = j.at("data_hash").get<std::uint64_t>();
    t.budget_steps = j.at("budget_steps").get<int>();
    t.r_seeds = j.at("r_seeds").get<int>();
    t.base_seed = j.at("base_seed").get<std::uint64_t>();
    t.settings = settings_from_json(j.at("settings"));
    t.accuracy = j.at("accuracy").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("oracle table JSON malformed: ") +
                                e.what());
  }
  return t;
}

std::uint64_t oracle_rep_seed(std::uint64_t base_seed, size_t genotype_index,
                              int rep) {
  return Rng(base_seed)
      .split("oracle")
      .split(genotype_index)
      .split(static_cast<std::uint64_t>(rep))
      .state();
}

OracleTable build_oracle(const CellSpec& spec, const Dataset& data,
                         int budget_steps, int r_seeds,
                         std::uint64_t base_seed, int workers,
                         const EvalSettings& settings, int enumeration_cap) {
  if (r_seeds < 1) {
    throw std::invalid_argument("build_oracle: need at least one repetition");
  }
  const std::vector<Genotype> genotypes =
      enumerate_space(spec, enumeration_cap);
  std::vector<double> acc(genotypes.size(), 0.0);

  auto run_one = [&](size_t g) {
    double sum = 0.0;
    for (int r = 0; r < r_seeds; ++r) {
      sum += train_discrete_genotype(spec, genotypes[g], data, budget_steps,
                                     oracle_rep_seed(base_seed, g, r),
                                     settings);
    }
    acc[g] = sum / r_seeds;
  };

  const int n_workers = std::max(
      1, std::min(workers, static_cast<int>(genotypes.size())));
  if (n_workers == 1) {
    for (size_t g = 0; g < genotypes.size(); ++g) run_one(g);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        for (size_t g = static_cast<size_t>(w); g < genotypes.size();
             g += n_workers) {
          run_one(g);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  OracleTable table;
  table.space = spec.name;
  table.data_hash = dataset_hash(data);
  table.budget_steps = budget_steps;
  table.r_seeds = r_seeds;
  table.base_seed = base_seed;
  table.settings = settings;
  for (size_t g = 0; g < genotypes.size(); ++g) {
    table.accuracy[genotypes[g].key()] = acc[g];
  }
  return table;
}

void check_oracle_matches(const OracleTable& table, const Dataset& data) {
  if (table.data_hash != dataset_hash(data)) {
    throw std::runtime_error(
        "oracle table was built against different data (hash mismatch)");
  }
}

}  // namespace drnas::bench
