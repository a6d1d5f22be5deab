// Command-line surface: search | oracle | band | diagnose | eval.
//
// Every output embeds the resolved run configuration and the version
// string, except genotype.json, which keeps the minimal canonical schema
// so files compare byte-for-byte across tools.  All randomness flows from
// seeds in the configuration; nothing reads the clock or OS entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "drnas/bench.hpp"
#include "drnas/bilevel.hpp"
#include "drnas/diagnostics.hpp"
#include "drnas/dirichlet.hpp"
#include "drnas/nn_ops.hpp"
#include "drnas/rng.hpp"
#include "drnas/search_space.hpp"
#include "drnas/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace drnas;

namespace {

struct DatasetSpec {
  std::string kind = "blobs";
  int n = 512;
  double noise = 0.15;
  std::uint64_t seed = 7;
};

struct DiagnosticsSpec {
  bool hessian = false;
  bool band = false;
  int band_samples = 100;
  int trace_probes = 8;
  int eval_rows = 256;
};

struct OracleSpec {
  int budget_steps = 300;
  int r_seeds = 3;
  std::uint64_t base_seed = 1234;
  int workers = 4;
};

struct RunConfig {
  std::string space = "micro";
  DatasetSpec data;
  bilevel::SearchConfig search;
  DiagnosticsSpec diag;
  OracleSpec oracle;
};

std::vector<progressive::StageSpec> default_schedule(const CellSpec& spec) {
  const int n_ops = static_cast<int>(spec.op_registry.size());
  return {{25, 2, n_ops}, {25, 1, std::min(n_ops, 2)}};
}

ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["space"] = c.space;
  j["dataset"] = {{"kind", c.data.kind},
                  {"n", c.data.n},
                  {"noise", c.data.noise},
                  {"seed", c.data.seed}};
  j["search"] = bilevel::search_config_to_json(c.search);
  j["diagnostics"] = {{"hessian", c.diag.hessian},
                      {"band", c.diag.band},
                      {"band_samples", c.diag.band_samples},
                      {"trace_probes", c.diag.trace_probes},
                      {"eval_rows", c.diag.eval_rows}};
  j["oracle"] = {{"budget_steps", c.oracle.budget_steps},
                 {"r_seeds", c.oracle.r_seeds},
                 {"base_seed", c.oracle.base_seed},
                 {"workers", c.oracle.workers}};
  return j;
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + it.key() +
                                  "' in " + where);
    }
  }
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, {"space", "dataset", "search", "diagnostics", "oracle"},
                 "top level");
  read_key(j, "space", c.space);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, {"kind", "n", "noise", "seed"}, "dataset");
    read_key(d, "kind", c.data.kind);
    read_key(d, "n", c.data.n);
    read_key(d, "noise", c.data.noise);
    read_key(d, "seed", c.data.seed);
  }
  if (j.contains("search")) {
    c.search = bilevel::search_config_from_json(j.at("search"));
  }
  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    reject_unknown(d,
                   {"hessian", "band", "band_samples", "trace_probes",
                    "eval_rows"},
                   "diagnostics");
    read_key(d, "hessian", c.diag.hessian);
    read_key(d, "band", c.diag.band);
    read_key(d, "band_samples", c.diag.band_samples);
    read_key(d, "trace_probes", c.diag.trace_probes);
    read_key(d, "eval_rows", c.diag.eval_rows);
  }
  if (j.contains("oracle")) {
    const json& d = j.at("oracle");
    reject_unknown(d, {"budget_steps", "r_seeds", "base_seed", "workers"},
                   "oracle");
    read_key(d, "budget_steps", c.oracle.budget_steps);
    read_key(d, "r_seeds", c.oracle.r_seeds);
    read_key(d, "base_seed", c.oracle.base_seed);
    read_key(d, "workers", c.oracle.workers);
  }
  return c;
}

std::vector<progressive::StageSpec> parse_schedule(const std::string& text) {
  std::vector<progressive::StageSpec> out;
  std::stringstream ss(text);
  std::string stage;
  while (std::getline(ss, stage, ',')) {
    progressive::StageSpec s;
    if (std::sscanf(stage.c_str(), "%d:%d:%d", &s.epochs, &s.partial_k,
                    &s.registry_size) != 3) {
      throw std::invalid_argument(
          "stage schedule: expected EPOCHS:K:REGISTRY, got '" + stage + "'");
    }
    out.push_back(s);
  }
  if (out.empty()) {
    throw std::invalid_argument("stage schedule: no stages in '" + text + "'");
  }
  return out;
}

// Flag values gathered by CLI11; empty string / negative sentinel means the
// flag was not given and the config file (or default) wins.
struct FlagOverrides {
  std::string config_path;
  std::string out_dir = "drnas_out";
  std::string schedule;
  std::string distance;
  std::string space;
  std::string data_kind;
  std::string oracle_table;
  std::int64_t seed = -1;
  int workers = -1;
  double lambda = -1.0;
  int data_n = -1;
  double data_noise = -1.0;
  std::int64_t data_seed = -1;
  bool diagnostics = false;
  int band_samples = -1;
  int budget = -1;
  int reps = -1;
  std::int64_t base_seed = -1;
  std::string genotype_path;
  std::string checkpoint_path;
};

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::string text = read_text_file(path);
  return std::vector<std::uint8_t>(text.begin(), text.end());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

void write_binary_file(const fs::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

RunConfig resolve_config(const FlagOverrides& f) {
  RunConfig c;
  if (!f.config_path.empty()) {
    c = run_config_from_json(json::parse(read_text_file(f.config_path)));
  }
  if (!f.space.empty()) c.space = f.space;
  if (!f.data_kind.empty()) c.data.kind = f.data_kind;
  if (f.data_n >= 0) c.data.n = f.data_n;
  if (f.data_noise >= 0.0) c.data.noise = f.data_noise;
  if (f.data_seed >= 0) c.data.seed = static_cast<std::uint64_t>(f.data_seed);
  if (f.seed >= 0) c.search.seed = static_cast<std::uint64_t>(f.seed);
  if (f.lambda >= 0.0) c.search.lambda_anchor = f.lambda;
  if (!f.distance.empty())
    c.search.distance = bilevel::distance_from_name(f.distance);
  if (!f.schedule.empty()) c.search.schedule = parse_schedule(f.schedule);
  if (f.workers >= 1) c.oracle.workers = f.workers;
  if (f.budget >= 1) c.oracle.budget_steps = f.budget;
  if (f.reps >= 1) c.oracle.r_seeds = f.reps;
  if (f.base_seed >= 0)
    c.oracle.base_seed = static_cast<std::uint64_t>(f.base_seed);
  if (f.diagnostics) {
    c.diag.hessian = true;
    c.diag.band = true;
  }
  if (f.band_samples >= 1) c.diag.band_samples = f.band_samples;
  const CellSpec spec = CellSpec::by_name(c.space);
  if (c.search.schedule.empty()) c.search.schedule = default_schedule(spec);
  return c;
}

std::string config_comment(const RunConfig& c) {
  return std::string("# drnas ") + kVersion +
         " config=" + run_config_to_json(c).dump() + "\n";
}

// Leading-channels subset plan; consumes no randomness, so diagnostics can
// probe a network without disturbing the search streams.
SubsetPlan leading_plan(const SuperNetState& net) {
  const int m = net.subset_width();
  std::vector<int> slice(m);
  std::iota(slice.begin(), slice.end(), 0);
  SubsetPlan plan;
  plan.subsets.assign(
      static_cast<size_t>(net.n_cells),
      std::vector<std::vector<int>>(net.spec.edges.size(), slice));
  return plan;
}

std::vector<dirichlet::SimplexSample> one_hot_theta(const SuperNetState& net,
                                                    const Genotype& g) {
  std::vector<dirichlet::SimplexSample> theta(net.edge_ops.size());
  for (size_t e = 0; e < net.edge_ops.size(); ++e) {
    const auto& ops = net.edge_ops[e];
    auto it = std::find(ops.begin(), ops.end(), g.choices[e]);
    if (it == ops.end()) {
      throw std::invalid_argument("genotype picks a pruned op on edge " +
                                  std::to_string(e));
    }
    theta[e].theta.assign(ops.size(), 0.0);
    theta[e].theta[static_cast<size_t>(it - ops.begin())] = 1.0;
  }
  return theta;
}

// Weight-sharing proxy score: accuracy of the one-hot genotype through the
// shared supernet weights on a fixed evaluation batch.
double proxy_score(const SuperNetState& net, const Genotype& g,
                   const Batch& eval_batch) {
  SubsetPlan plan = leading_plan(net);
  ForwardResult r = supernet_eval(net, eval_batch, one_hot_theta(net, g), plan);
  return nn::accuracy(r.logits, eval_batch.y);
}

std::function<double(const Genotype&)> make_scorer(
    const SuperNetState& net, const Batch& eval_batch,
    const bench::OracleTable* table) {
  if (table != nullptr) {
    return [table](const Genotype& g) { return table->accuracy_of(g); };
  }
  // The net and batch are copied so the scorer outlives the caller's state.
  auto net_copy = std::make_shared<SuperNetState>(net);
  auto batch_copy = std::make_shared<Batch>(eval_batch);
  return [net_copy, batch_copy](const Genotype& g) {
    return proxy_score(*net_copy, g, *batch_copy);
  };
}

bench::OracleTable load_oracle_table(const std::string& path,
                                     const bench::Dataset& data) {
  json j = json::parse(read_text_file(path));
  bench::OracleTable table = bench::OracleTable::from_json(
      j.contains("table") ? j.at("table") : j);
  bench::check_oracle_matches(table, data);
  return table;
}

// Logit vector at the Laplace mean of every edge, concatenated in edge
// order; the natural probe point for curvature diagnostics.
std::vector<double> laplace_mean_logits(
    const std::vector<dirichlet::Concentration>& arch) {
  std::vector<double> x;
  for (const auto& c : arch) {
    dirichlet::LaplaceParams lp = dirichlet::laplace_params(c.beta());
    x.insert(x.end(), lp.mu.begin(), lp.mu.end());
  }
  return x;
}

int cmd_search(const FlagOverrides& flags) {
  const RunConfig config = resolve_config(flags);
  const CellSpec spec = CellSpec::by_name(config.space);
  bilevel::validate_config(config.search, spec);
  const bench::Dataset data = bench::gen_dataset(
      config.data.kind, config.data.n, config.data.noise, config.data.seed);
  const std::uint64_t data_hash = bench::dataset_hash(data);

  const bench::OracleTable* table_ptr = nullptr;
  bench::OracleTable table;
  if (!flags.oracle_table.empty()) {
    table = load_oracle_table(flags.oracle_table, data);
    table_ptr = &table;
  }

  fs::create_directories(flags.out_dir);
  const fs::path out(flags.out_dir);

  const Batch eval_batch = bench::make_batch(
      data, data.arch_idx, 0,
      std::min(static_cast<size_t>(config.diag.eval_rows),
               data.arch_idx.size()));

  std::vector<diagnostics::PlotRow> plot_rows;
  bilevel::RunHooks hooks;
  hooks.per_epoch = [&](const bilevel::TrainState& state, ordered_json& rec) {
    if (!config.diag.hessian && !config.diag.band) return;
    const int epoch = rec.at("epoch").get<int>();
    Rng diag_rng = Rng(config.search.seed)
                       .split("diagnostics")
                       .split(static_cast<std::uint64_t>(epoch));
    diagnostics::PlotRow row;
    row.epoch = epoch;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.eigenvalue = row.trace = row.band_min = row.band_max =
        row.band_mean = nan;
    if (config.diag.hessian) {
      diagnostics::LossOverLogits f = diagnostics::supernet_loss_surface(
          state.net, eval_batch, leading_plan(state.net));
      std::vector<double> x0 = laplace_mean_logits(state.arch);
      diagnostics::PowerIterResult eig =
          diagnostics::dominant_eigenvalue(f, x0, diag_rng);
      row.eigenvalue = eig.magnitude;
      row.trace = diagnostics::hessian_trace(f, x0, config.diag.trace_probes,
                                             diag_rng);
      rec["eigenvalue"] = row.eigenvalue;
      rec["trace"] = row.trace;
    }
    if (config.diag.band) {
      diagnostics::BandStats band = diagnostics::exploration_band(
          state.net, state.arch, config.diag.band_samples,
          make_scorer(state.net, eval_batch, table_ptr), diag_rng);
      row.band_min = band.min_score;
      row.band_max = band.max_score;
      row.band_mean = band.mean_score;
      rec["band_min"] = band.min_score;
      rec["band_max"] = band.max_score;
      rec["band_mean"] = band.mean_score;
      rec["band_mean_arch"] = band.mean_arch_score;
    }
    plot_rows.push_back(row);
  };
  hooks.per_stage = [&](const bilevel::TrainState& state) {
    write_binary_file(
        out / ("checkpoint_stage" + std::to_string(state.stage) + ".ckpt"),
        bilevel::checkpoint_bytes(state, config.search, data_hash));
  };

  bilevel::SearchResult result =
      bilevel::run_search(config.search, spec, data, hooks);

  // Trajectory: one header line with full provenance, then epoch records.
  std::ostringstream traj;
  ordered_json header;
  header["type"] = "header";
  header["version"] = kVersion;
  header["config"] = run_config_to_json(config);
  header["data_hash"] = data_hash;
  traj << header.dump() << "\n";
  for (const auto& rec : result.log.records) traj << rec.dump() << "\n";
  write_text_file(out / "trajectory.jsonl", traj.str());

  write_text_file(out / "genotype.json",
                  result.genotype.to_json().dump(2) + "\n");
  write_binary_file(
      out / "checkpoint.ckpt",
      bilevel::checkpoint_bytes(result.state, config.search, data_hash));
  if (config.diag.hessian || config.diag.band) {
    write_text_file(out / "diagnostics.csv",
                    config_comment(config) + diagnostics::plot_csv(plot_rows));
  }

  std::vector<double> eta_all;
  ordered_json beta_json = ordered_json::array();
  for (const auto& c : result.state.arch) {
    eta_all.insert(eta_all.end(), c.eta.begin(), c.eta.end());
    beta_json.push_back(c.beta());
  }
  double eta_norm = std::sqrt(std::inner_product(
      eta_all.begin(), eta_all.end(), eta_all.begin(), 0.0));

  ordered_json summary;
  summary["version"] = kVersion;
  summary["config"] = run_config_to_json(config);
  summary["data_hash"] = data_hash;
  summary["epochs"] = result.state.epoch;
  summary["genotype"] = result.genotype.to_json();
  summary["genotype_key"] = result.genotype.key();
  summary["eta_norm"] = eta_norm;
  summary["beta"] = beta_json;
  if (table_ptr != nullptr) {
    summary["oracle_rank"] = table.rank_of(result.genotype);
    summary["oracle_accuracy"] = table.accuracy_of(result.genotype);
  }
  write_text_file(out / "summary.json", summary.dump(2) + "\n");

  std::cout << "search: genotype " << result.genotype.key() << " written to "
            << (out / "genotype.json").string() << "\n";
  return 0;
}

int cmd_oracle(const FlagOverrides& flags) {
  const RunConfig config = resolve_config(flags);
  const CellSpec spec = CellSpec::by_name(config.space);
  const bench::Dataset data = bench::gen_dataset(
      config.data.kind, config.data.n, config.data.noise, config.data.seed);

  bench::EvalSettings settings;
  settings.channels = config.search.channels;
  settings.n_cells = config.search.n_cells;

  fs::create_directories(flags.out_dir);
  bench::OracleTable table = bench::build_oracle(
      spec, data, config.oracle.budget_steps, config.oracle.r_seeds,
      config.oracle.base_seed, config.oracle.workers, settings);

  ordered_json j;
  j["version"] = kVersion;
  j["config"] = run_config_to_json(config);
  j["table"] = table.to_json();
  write_text_file(fs::path(flags.out_dir) / "oracle.json", j.dump(2) + "\n");
  std::cout << "oracle: " << table.accuracy.size() << " genotypes written to "
            << (fs::path(flags.out_dir) / "oracle.json").string() << "\n";
  return 0;
}

int cmd_band(const FlagOverrides& flags) {
  const RunConfig config = resolve_config(flags);
  const bench::Dataset data = bench::gen_dataset(
      config.data.kind, config.data.n, config.data.noise, config.data.seed);
  bilevel::Checkpoint ckpt =
      bilevel::checkpoint_restore(read_binary_file(flags.checkpoint_path));
  if (bench::dataset_hash(data) != ckpt.data_hash) {
    throw std::runtime_error(
        "band: checkpoint was trained on a different dataset");
  }

  const bench::OracleTable* table_ptr = nullptr;
  bench::OracleTable table;
  if (!flags.oracle_table.empty()) {
    table = load_oracle_table(flags.oracle_table, data);
    table_ptr = &table;
  }

  const int n_samples = flags.band_samples >= 1 ? flags.band_samples
                                                : config.diag.band_samples;
  const Batch eval_batch = bench::make_batch(
      data, data.arch_idx, 0,
      std::min(static_cast<size_t>(config.diag.eval_rows),
               data.arch_idx.size()));
  Rng band_rng = Rng(config.search.seed).split("band-cli");
  diagnostics::BandStats band = diagnostics::exploration_band(
      ckpt.state.net, ckpt.state.arch, n_samples,
      make_scorer(ckpt.state.net, eval_batch, table_ptr), band_rng);

  // One row per sample plus the mean-architecture row.
  Rng replay_rng = Rng(config.search.seed).split("band-cli");
  std::vector<std::vector<double>> beta_all;
  for (const auto& c : ckpt.state.arch) beta_all.push_back(c.beta());
  std::ostringstream csv;
  csv << config_comment(config);
  csv << "row,genotype,score\n";
  for (size_t i = 0; i < band.sample_scores.size(); ++i) {
    std::vector<dirichlet::SimplexSample> theta;
    theta.reserve(beta_all.size());
    for (const auto& b : beta_all)
      theta.push_back(dirichlet::sample(b, replay_rng));
    Genotype g = discretize_sample(ckpt.state.net, theta);
    csv << "s" << i << "," << g.key() << "," << band.sample_scores[i] << "\n";
  }
  Genotype mean_g = select_genotype(ckpt.state.net, ckpt.state.arch);
  csv << "mean," << mean_g.key() << "," << band.mean_arch_score << "\n";

  fs::create_directories(flags.out_dir);
  write_text_file(fs::path(flags.out_dir) / "band.csv", csv.str());
  std::cout << "band: width " << band.width << " ["
            << band.min_score << ", " << band.max_score << "] over "
            << band.sample_scores.size() << " samples\n";
  return 0;
}

int cmd_diagnose(const FlagOverrides& flags) {
  const RunConfig config = resolve_config(flags);
  const bench::Dataset data = bench::gen_dataset(
      config.data.kind, config.data.n, config.data.noise, config.data.seed);
  bilevel::Checkpoint ckpt =
      bilevel::checkpoint_restore(read_binary_file(flags.checkpoint_path));
  if (bench::dataset_hash(data) != ckpt.data_hash) {
    throw std::runtime_error(
        "diagnose: checkpoint was trained on a different dataset");
  }

  const Batch eval_batch = bench::make_batch(
      data, data.arch_idx, 0,
      std::min(static_cast<size_t>(config.diag.eval_rows),
               data.arch_idx.size()));
  const SuperNetState& net = ckpt.state.net;
  diagnostics::LossOverLogits full =
      diagnostics::supernet_loss_surface(net, eval_batch, leading_plan(net));
  const std::vector<double> x0 = laplace_mean_logits(ckpt.state.arch);

  Rng diag_rng = Rng(config.search.seed).split("diagnose-cli");
  std::ostringstream csv;
  csv << config_comment(config);
  csv << "edge,eigenvalue,rayleigh,iterations,trace,bound_lhs,bound_se,"
         "bound_rhs,psd_proxy,holds\n";

  diagnostics::PowerIterResult full_eig =
      diagnostics::dominant_eigenvalue(full, x0, diag_rng);
  double full_trace = diagnostics::hessian_trace(
      full, x0, config.diag.trace_probes, diag_rng);
  csv << "all," << full_eig.magnitude << "," << full_eig.rayleigh << ","
      << full_eig.iterations << "," << full_trace << ",,,,,\n";

  // Per-edge restriction: the loss over one edge's logits with every other
  // edge frozen at its Laplace mean.
  size_t offset = 0;
  for (size_t e = 0; e < ckpt.state.arch.size(); ++e) {
    const std::vector<double> beta_e = ckpt.state.arch[e].beta();
    const size_t dim_e = beta_e.size();
    diagnostics::LossOverLogits fe;
    fe.dim = static_cast<int>(dim_e);
    auto embed = [x0, offset, dim_e](const std::vector<double>& z) {
      std::vector<double> full_x = x0;
      std::copy(z.begin(), z.end(),
                full_x.begin() + static_cast<std::ptrdiff_t>(offset));
      return full_x;
    };
    fe.value = [full, embed](const std::vector<double>& z) {
      return full.value(embed(z));
    };
    fe.grad = [full, embed, offset, dim_e](const std::vector<double>& z) {
      std::vector<double> g = full.grad(embed(z));
      return std::vector<double>(
          g.begin() + static_cast<std::ptrdiff_t>(offset),
          g.begin() + static_cast<std::ptrdiff_t>(offset + dim_e));
    };
    diagnostics::BoundCheck bound = diagnostics::laplace_bound_check(
        beta_e, fe, 2000, config.diag.trace_probes, diag_rng);
    std::vector<double> xe(
        x0.begin() + static_cast<std::ptrdiff_t>(offset),
        x0.begin() + static_cast<std::ptrdiff_t>(offset + dim_e));
    diagnostics::PowerIterResult eig =
        diagnostics::dominant_eigenvalue(fe, xe, diag_rng);
    csv << e << "," << eig.magnitude << "," << eig.rayleigh << ","
        << eig.iterations << "," << bound.trace << "," << bound.lhs << ","
        << bound.lhs_se << "," << bound.rhs << "," << bound.psd_proxy << ","
        << (bound.holds ? 1 : 0) << "\n";
    offset += dim_e;
  }

  fs::create_directories(flags.out_dir);
  write_text_file(fs::path(flags.out_dir) / "diagnose.csv", csv.str());
  std::cout << "diagnose: dominant eigenvalue " << full_eig.magnitude
            << ", trace " << full_trace << "\n";
  return 0;
}

int cmd_eval(const FlagOverrides& flags) {
  const RunConfig config = resolve_config(flags);
  const CellSpec spec = CellSpec::by_name(config.space);
  const bench::Dataset data = bench::gen_dataset(
      config.data.kind, config.data.n, config.data.noise, config.data.seed);
  Genotype g =
      Genotype::from_json(json::parse(read_text_file(flags.genotype_path)));
  check_genotype(spec, g);

  ordered_json result;
  result["version"] = kVersion;
  result["config"] = run_config_to_json(config);
  result["genotype"] = g.to_json();

  if (!flags.oracle_table.empty()) {
    // Reproduce the table entry exactly: same per-repetition seeds, same
    // settings, same budget.
    bench::OracleTable table = load_oracle_table(flags.oracle_table, data);
    const std::vector<Genotype> all = enumerate_space(spec);
    size_t index = all.size();
    for (size_t i = 0; i < all.size(); ++i) {
      if (all[i].key() == g.key()) {
        index = i;
        break;
      }
    }
    if (index == all.size()) {
      throw std::invalid_argument("eval: genotype not in space enumeration");
    }
    double sum = 0.0;
    for (int r = 0; r < table.r_seeds; ++r) {
      sum += bench::train_discrete_genotype(
          spec, g, data, table.budget_steps,
          bench::oracle_rep_seed(table.base_seed, index, r), table.settings);
    }
    result["accuracy"] = sum / table.r_seeds;
    result["oracle_accuracy"] = table.accuracy_of(g);
    result["oracle_rank"] = table.rank_of(g);
  } else {
    bench::EvalSettings settings;
    settings.channels = config.search.channels;
    settings.n_cells = config.search.n_cells;
    const int reps = flags.reps >= 1 ? flags.reps : 1;
    const int budget =
        flags.budget >= 1 ? flags.budget : config.oracle.budget_steps;
    const std::uint64_t base =
        flags.base_seed >= 0 ? static_cast<std::uint64_t>(flags.base_seed)
                             : config.oracle.base_seed;
    double sum = 0.0;
    for (int r = 0; r < reps; ++r) {
      sum += bench::train_discrete_genotype(
          spec, g, data, budget,
          Rng(base).split("eval").split(static_cast<std::uint64_t>(r)).state(),
          settings);
    }
    result["accuracy"] = sum / reps;
  }
  std::cout << result.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dirichlet-distribution architecture search over dense cell "
               "spaces"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  FlagOverrides flags;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_path, "JSON run configuration");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "search seed override");
    cmd->add_option("--space", flags.space, "cell space name");
    cmd->add_option("--data-kind", flags.data_kind,
                    "dataset kind (moons|blobs|spirals)");
    cmd->add_option("--data-n", flags.data_n, "dataset size");
    cmd->add_option("--data-noise", flags.data_noise, "dataset noise");
    cmd->add_option("--data-seed", flags.data_seed, "dataset seed");
  };

  CLI::App* search = app.add_subcommand("search", "run the bilevel search");
  add_common(search);
  search->add_option("--stage-schedule", flags.schedule,
                     "stages as EPOCHS:K:REGISTRY, comma separated");
  search->add_option("--lambda", flags.lambda, "anchor penalty weight");
  search->add_option("--distance", flags.distance,
                     "distance kind (eta-l2|eta-norm|kl)");
  search->add_option("--oracle-table", flags.oracle_table,
                     "oracle JSON for summary rank and band scores");
  search->add_flag("--diagnostics", flags.diagnostics,
                   "per-epoch curvature and band instrumentation");
  search->add_option("--band-samples", flags.band_samples,
                     "architectures sampled per band");

  CLI::App* oracle =
      app.add_subcommand("oracle", "exhaustive genotype accuracy table");
  add_common(oracle);
  oracle->add_option("--workers", flags.workers, "builder threads");
  oracle->add_option("--budget", flags.budget, "training steps per genotype");
  oracle->add_option("--reps", flags.reps, "repetitions per genotype");
  oracle->add_option("--base-seed", flags.base_seed, "table base seed");

  CLI::App* band =
      app.add_subcommand("band", "exploration band of a checkpoint");
  add_common(band);
  band->add_option("checkpoint", flags.checkpoint_path, "checkpoint file")
      ->required();
  band->add_option("--samples", flags.band_samples, "architectures to draw");
  band->add_option("--oracle-table", flags.oracle_table,
                   "score samples against this oracle table");

  CLI::App* diagnose =
      app.add_subcommand("diagnose", "curvature and bound diagnostics");
  add_common(diagnose);
  diagnose->add_option("checkpoint", flags.checkpoint_path, "checkpoint file")
      ->required();

  CLI::App* eval =
      app.add_subcommand("eval", "train one genotype from scratch");
  add_common(eval);
  eval->add_option("genotype", flags.genotype_path, "genotype JSON file")
      ->required();
  eval->add_option("--oracle-table", flags.oracle_table,
                   "reproduce this table's entry for the genotype");
  eval->add_option("--budget", flags.budget, "training steps");
  eval->add_option("--reps", flags.reps, "repetitions to average");
  eval->add_option("--base-seed", flags.base_seed, "evaluation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (search->parsed()) return cmd_search(flags);
    if (oracle->parsed()) return cmd_oracle(flags);
    if (band->parsed()) return cmd_band(flags);
    if (diagnose->parsed()) return cmd_diagnose(flags);
    if (eval->parsed()) return cmd_eval(flags);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
