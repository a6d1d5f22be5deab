#include "drnas/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace drnas::bilevel {

namespace {

std::vector<dirichlet::SimplexSample> sample_all_edges(TrainState& state) {
  std::vector<dirichlet::SimplexSample> theta;
  theta.reserve(state.arch.size());
  for (const auto& conc : state.arch) {
    theta.push_back(
        dirichlet::sample(dirichlet::beta_from_eta(conc.eta), state.sample_rng));
  }
  return theta;
}

// Distance value and eta-space gradient for one edge.
dirichlet::Penalty distance_term(const SearchConfig& config,
                                 const std::vector<double>& eta,
                                 const std::vector<double>& beta) {
  switch (config.distance) {
    case DistanceKind::kEtaQuadratic:
      return dirichlet::anchor_penalty(eta, config.lambda_anchor);
    case DistanceKind::kEtaNorm:
      return dirichlet::anchor_penalty_norm(eta, config.lambda_anchor);
    case DistanceKind::kKlSymmetric: {
      dirichlet::Penalty p;
      p.value = config.lambda_anchor * dirichlet::kl_to_symmetric(beta);
      const std::vector<double> g_beta = dirichlet::kl_to_symmetric_grad(beta);
      p.grad.resize(eta.size());
      for (size_t i = 0; i < eta.size(); ++i) {
        p.grad[i] = config.lambda_anchor * g_beta[i] *
                    dirichlet::elu_shift_derivative(eta[i]);
      }
      return p;
    }
  }
  throw std::logic_error("distance_term: unknown distance kind");
}

double total_distance_value(const SearchConfig& config,
                            const std::vector<dirichlet::Concentration>& arch) {
  double total = 0.0;
  for (const auto& conc : arch) {
    total +=
        distance_term(config, conc.eta, dirichlet::beta_from_eta(conc.eta))
            .value;
  }
  return total;
}

double eta_norm(const std::vector<dirichlet::Concentration>& arch) {
  double sq = 0.0;
  for (const auto& conc : arch) {
    for (double e : conc.eta) sq += e * e;
  }
  return std::sqrt(sq);
}

std::vector<int> stage_ends(const SearchConfig& config) {
  std::vector<int> ends;
  int total = 0;
  for (const auto& stage : config.schedule) {
    total += stage.epochs;
    ends.push_back(total);
  }
  return ends;
}

nlohmann::ordered_json transition_record(
    const progressive::TransitionReport& report, int stage) {
  nlohmann::ordered_json rec;
  rec["type"] = "transition";
  rec["stage"] = stage;
  rec["partial_k"] = {report.partial_k_before, report.partial_k_after};
  rec["ops_per_edge"] = {report.ops_per_edge_before, report.ops_per_edge_after};
  rec["params"] = {report.params_before, report.params_after};
  rec["surviving_ops"] = report.surviving_ops;
  return rec;
}

nlohmann::json tensor_to_json(const Tensor2& t) {
  nlohmann::json j;
  j["rows"] = t.rows;
  j["cols"] = t.cols;
  j["data"] = t.data;
  return j;
}

Tensor2 tensor_from_json(const nlohmann::json& j) {
  Tensor2 t(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != t.data.size()) {
    throw std::invalid_argument("checkpoint tensor size mismatch");
  }
  t.data = data;
  return t;
}

}  // namespace

std::string distance_name(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kEtaQuadratic:
      return "eta-l2";
    case DistanceKind::kEtaNorm:
      return "eta-norm";
    case DistanceKind::kKlSymmetric:
      return "kl";
  }
  throw std::logic_error("distance_name: unknown distance kind");
}

DistanceKind distance_from_name(const std::string& name) {
  if (name == "eta-l2") return DistanceKind::kEtaQuadratic;
  if (name == "eta-norm") return DistanceKind::kEtaNorm;
  if (name == "kl") return DistanceKind::kKlSymmetric;
  throw std::invalid_argument(
      "unknown distance kind \"" + name + "\" (want eta-l2, eta-norm or kl)");
}

nlohmann::ordered_json search_config_to_json(const SearchConfig& config) {
  nlohmann::ordered_json j;
  j["channels"] = config.channels;
  j["n_cells"] = config.n_cells;
  j["batch_size"] = config.batch_size;
  j["lambda_anchor"] = config.lambda_anchor;
  j["eta_init_scale"] = config.eta_init_scale;
  j["w_lr"] = config.w_lr;
  j["w_momentum"] = config.w_momentum;
  j["w_weight_decay"] = config.w_weight_decay;
  j["arch_lr"] = config.arch_lr;
  j["arch_beta1"] = config.arch_beta1;
  j["arch_beta2"] = config.arch_beta2;
  j["seed"] = config.seed;
  j["distance"] = distance_name(config.distance);
  j["subset_policy"] = subset_policy_name(config.subset_policy);
  j["schedule"] = nlohmann::ordered_json::array();
  for (const auto& stage : config.schedule) {
    nlohmann::ordered_json s;
    s["epochs"] = stage.epochs;
    s["partial_k"] = stage.partial_k;
    s["registry_size"] = stage.registry_size;
    j["schedule"].push_back(s);
  }
  return j;
}

SearchConfig search_config_from_json(const nlohmann::json& j) {
  SearchConfig config;
  config.schedule.clear();
  for (const auto& [key, value] : j.items()) {
    if (key == "channels") {
      config.channels = value.get<int>();
    } else if (key == "n_cells") {
      config.n_cells = value.get<int>();
    } else if (key == "batch_size") {
      config.batch_size = value.get<int>();
    } else if (key == "lambda_anchor") {
      config.lambda_anchor = value.get<double>();
    } else if (key == "eta_init_scale") {
      config.eta_init_scale = value.get<double>();
    } else if (key == "w_lr") {
      config.w_lr = value.get<double>();
    } else if (key == "w_momentum") {
      config.w_momentum = value.get<double>();
    } else if (key == "w_weight_decay") {
      config.w_weight_decay = value.get<double>();
    } else if (key == "arch_lr") {
      config.arch_lr = value.get<double>();
    } else if (key == "arch_beta1") {
      config.arch_beta1 = value.get<double>();
    } else if (key == "arch_beta2") {
      config.arch_beta2 = value.get<double>();
    } else if (key == "seed") {
      config.seed = value.get<std::uint64_t>();
    } else if (key == "distance") {
      config.distance = distance_from_name(value.get<std::string>());
    } else if (key == "subset_policy") {
      config.subset_policy = subset_policy_from_name(value.get<std::string>());
    } else if (key == "schedule") {
      for (const auto& s : value) {
        progressive::StageSpec stage;
        stage.epochs = s.at("epochs").get<int>();
        stage.partial_k = s.at("partial_k").get<int>();
        stage.registry_size = s.at("registry_size").get<int>();
        config.schedule.push_back(stage);
      }
    } else {
      throw std::invalid_argument("unknown search config key \"" + key + "\"");
    }
  }
  return config;
}

void validate_config(const SearchConfig& config, const CellSpec& spec) {
  if (config.channels < 1 || config.n_cells < 1 || config.batch_size < 1) {
    throw std::invalid_argument("search config: sizes must be positive");
  }
  if (config.lambda_anchor < 0.0 || config.eta_init_scale < 0.0) {
    throw std::invalid_argument(
        "search config: lambda and eta_init_scale must be non-negative");
  }
  if (config.w_lr <= 0.0 || config.arch_lr <= 0.0) {
    throw std::invalid_argument("search config: learning rates must be positive");
  }
  if (config.schedule.empty()) {
    throw std::invalid_argument("search config: schedule must have a stage");
  }
  if (config.schedule.front().registry_size != spec.n_ops()) {
    throw std::invalid_argument(
        "search config: first stage must keep the full registry of " +
        std::to_string(spec.n_ops()) + " ops");
  }
  int prev_k = config.schedule.front().partial_k;
  int prev_ops = config.schedule.front().registry_size;
  for (const auto& stage : config.schedule) {
    if (stage.epochs < 1) {
      throw std::invalid_argument("search config: every stage needs epochs");
    }
    if (stage.registry_size < 1 || stage.registry_size > prev_ops) {
      throw std::invalid_argument(
          "search config: registry sizes must be positive and non-increasing");
    }
    if (stage.partial_k < 1 || config.channels % stage.partial_k != 0) {
      throw std::invalid_argument(
          "search config: partial_k must divide the channel count");
    }
    if (stage.partial_k > prev_k) {
      throw std::invalid_argument(
          "search config: partial_k must be non-increasing across stages");
    }
    prev_k = stage.partial_k;
    prev_ops = stage.registry_size;
  }
}

TrainState init_state(const SearchConfig& config, const CellSpec& spec,
                      int input_dim, int n_classes) {
  validate_config(config, spec);
  Rng root(config.seed);
  Rng init_rng = root.split("init");
  Rng eta_rng = root.split("arch-init");

  TrainState state;
  state.net = build_supernet(spec, config.channels, config.n_cells,
                             config.schedule.front().partial_k, input_dim,
                             n_classes, config.subset_policy, init_rng);
  state.arch.resize(spec.n_edges());
  state.arch_opt.resize(spec.n_edges());
  for (auto& conc : state.arch) {
    conc.eta.resize(spec.n_ops());
    for (double& e : conc.eta) e = config.eta_init_scale * eta_rng.normal();
  }
  state.data_rng = root.split("data");
  state.subset_rng = root.split("subsets");
  state.sample_rng = root.split("theta");
  return state;
}

double step_weights(TrainState& state, const SearchConfig& config,
                    const Batch& batch, double lr) {
  const std::vector<dirichlet::SimplexSample> theta = sample_all_edges(state);
  const SubsetPlan plan = draw_subset_plan(state.net, state.subset_rng);
  SupernetCache cache;
  const ForwardResult res =
      supernet_forward(state.net, batch, theta, plan, &cache);
  state.net.params.zero_grads();
  supernet_backward(state.net, cache, nullptr);
  sgd_momentum_step(state.net.params, lr, config.w_momentum,
                    config.w_weight_decay);
  return res.loss;
}

double step_architecture(TrainState& state, const SearchConfig& config,
                         const Batch& batch) {
  const std::vector<dirichlet::SimplexSample> theta = sample_all_edges(state);
  const SubsetPlan plan = draw_subset_plan(state.net, state.subset_rng);
  SupernetCache cache;
  const ForwardResult res =
      supernet_forward(state.net, batch, theta, plan, &cache);
  state.net.params.zero_grads();
  std::vector<std::vector<double>> theta_grads;
  supernet_backward(state.net, cache, &theta_grads);

  double distance_value = 0.0;
  for (size_t e = 0; e < state.arch.size(); ++e) {
    std::vector<double>& eta = state.arch[e].eta;
    const std::vector<double> beta = dirichlet::beta_from_eta(eta);
    std::vector<double> g_eta = dirichlet::grad_eta_from_grad_theta(
        theta_grads[e], theta[e], beta, eta);
    const dirichlet::Penalty penalty = distance_term(config, eta, beta);
    for (size_t i = 0; i < g_eta.size(); ++i) g_eta[i] += penalty.grad[i];
    distance_value += penalty.value;
    adam_step(eta, g_eta, state.arch_opt[e], config.arch_lr, config.arch_beta1,
              config.arch_beta2);
  }
  return res.loss + distance_value;
}

namespace {

nlohmann::ordered_json run_epoch(TrainState& state, const SearchConfig& config,
                                 const bench::Dataset& data, int total_epochs) {
  const double lr = cosine_lr(state.epoch, total_epochs, config.w_lr);
  std::vector<int> weight_order = data.weight_idx;
  shuffle(weight_order, state.data_rng);
  std::vector<int> arch_order = data.arch_idx;
  shuffle(arch_order, state.data_rng);

  const size_t batch = static_cast<size_t>(config.batch_size);
  const size_t n_steps =
      std::min(weight_order.size(), arch_order.size()) / batch;
  double weight_loss = 0.0;
  double arch_loss = 0.0;
  for (size_t s = 0; s < n_steps; ++s) {
    const Batch wb = bench::make_batch(data, weight_order, s * batch, batch);
    weight_loss += step_weights(state, config, wb, lr);
    const Batch ab = bench::make_batch(data, arch_order, s * batch, batch);
    arch_loss += step_architecture(state, config, ab);
  }

  nlohmann::ordered_json rec;
  rec["type"] = "epoch";
  rec["epoch"] = state.epoch;
  rec["stage"] = state.stage;
  rec["lr"] = lr;
  rec["steps"] = n_steps;
  rec["weight_loss"] = weight_loss / n_steps;
  rec["arch_loss"] = arch_loss / n_steps;
  rec["distance"] = total_distance_value(config, state.arch);
  rec["eta_norm"] = eta_norm(state.arch);
  nlohmann::ordered_json betas = nlohmann::ordered_json::array();
  for (const auto& conc : state.arch) {
    betas.push_back(dirichlet::beta_from_eta(conc.eta));
  }
  rec["beta"] = betas;
  rec["genotype"] = select_genotype(state.net, state.arch).key();
  return rec;
}

}  // namespace

SearchResult run_search(const SearchConfig& config, const CellSpec& spec,
                        const bench::Dataset& data, const RunHooks& hooks) {
  validate_config(config, spec);
  TrainState state = init_state(config, spec, data.input_dim(), data.n_classes);
  return resume_search(std::move(state), config, spec, data, {}, hooks);
}

SearchResult resume_search(TrainState state, const SearchConfig& config,
                           const CellSpec& spec, const bench::Dataset& data,
                           TrajectoryLog log, const RunHooks& hooks) {
  validate_config(config, spec);
  const size_t batch = static_cast<size_t>(config.batch_size);
  if (data.weight_idx.size() < batch || data.arch_idx.size() < batch) {
    throw std::invalid_argument(
        "search: batch size exceeds the weight or architecture split");
  }
  const std::vector<int> ends = stage_ends(config);
  const int total_epochs = ends.back();
  if (state.epoch > total_epochs) {
    throw std::invalid_argument("search: state is past the schedule end");
  }

  for (size_t s = 0; s < config.schedule.size(); ++s) {
    if (state.epoch >= ends[s]) continue;
    if (static_cast<int>(s) > state.stage) {
      Rng transition_rng =
          Rng(config.seed).split("transition").split(static_cast<uint64_t>(s));
      const progressive::TransitionReport report = progressive::stage_transition(
          state.net, state.arch, state.arch_opt, config.schedule[s],
          transition_rng);
      state.stage = static_cast<int>(s);
      log.records.push_back(transition_record(report, state.stage));
    }
    while (state.epoch < ends[s]) {
      nlohmann::ordered_json rec = run_epoch(state, config, data, total_epochs);
      state.epoch += 1;
      if (hooks.per_epoch) hooks.per_epoch(state, rec);
      log.records.push_back(std::move(rec));
    }
    if (hooks.per_stage) hooks.per_stage(state);
  }

  SearchResult result;
  result.genotype = select_genotype(state.net, state.arch);
  result.state = std::move(state);
  result.log = std::move(log);
  return result;
}

std::vector<std::uint8_t> checkpoint_bytes(const TrainState& state,
                                           const SearchConfig& config,
                                           std::uint64_t data_hash) {
  nlohmann::json doc;
  doc["format"] = "drnas-checkpoint";
  doc["version"] = 1;
  doc["config"] = search_config_to_json(config);
  doc["data_hash"] = data_hash;

  nlohmann::json st;
  st["epoch"] = state.epoch;
  st["stage"] = state.stage;
  st["rng"] = {{"data", state.data_rng.state()},
               {"subset", state.subset_rng.state()},
               {"sample", state.sample_rng.state()}};
  st["arch"] = nlohmann::json::array();
  for (size_t e = 0; e < state.arch.size(); ++e) {
    nlohmann::json edge;
    edge["eta"] = state.arch[e].eta;
    edge["m"] = state.arch_opt[e].m;
    edge["v"] = state.arch_opt[e].v;
    edge["t"] = state.arch_opt[e].t;
    st["arch"].push_back(edge);
  }

  const SuperNetState& net = state.net;
  nlohmann::json nj;
  nj["space"] = net.spec.name;
  nj["channels"] = net.channels;
  nj["n_cells"] = net.n_cells;
  nj["partial_k"] = net.partial_k;
  nj["input_dim"] = net.input_dim;
  nj["n_classes"] = net.n_classes;
  nj["policy"] = subset_policy_name(net.policy);
  nj["edge_ops"] = net.edge_ops;
  nj["params"] = nlohmann::json::object();
  nj["momentum"] = nlohmann::json::object();
  for (const auto& [name, value] : net.params.values) {
    nj["params"][name] = tensor_to_json(value);
    nj["momentum"][name] = net.params.momentum.at(name).data;
  }
  st["net"] = std::move(nj);
  doc["state"] = std::move(st);
  return nlohmann::json::to_msgpack(doc);
}

Checkpoint checkpoint_restore(const std::vector<std::uint8_t>& bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::from_msgpack(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint is not valid: ") +
                                e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "drnas-checkpoint") {
    throw std::invalid_argument("checkpoint missing the format tag");
  }
  if (doc.value("version", 0) != 1) {
    throw std::invalid_argument("checkpoint version unsupported");
  }
  try {
    Checkpoint cp;
    cp.config = search_config_from_json(doc.at("config"));
    cp.data_hash = doc.at("data_hash").get<std::uint64_t>();

    const nlohmann::json& st = doc.at("state");
    cp.state.epoch = st.at("epoch").get<int>();
    cp.state.stage = st.at("stage").get<int>();
    cp.state.data_rng.set_state(st.at("rng").at("data").get<std::uint64_t>());
    cp.state.subset_rng.set_state(
        st.at("rng").at("subset").get<std::uint64_t>());
    cp.state.sample_rng.set_state(
        st.at("rng").at("sample").get<std::uint64_t>());
    for (const auto& edge : st.at("arch")) {
      dirichlet::Concentration conc;
      conc.eta = edge.at("eta").get<std::vector<double>>();
      AdamState opt;
      opt.m = edge.at("m").get<std::vector<double>>();
      opt.v = edge.at("v").get<std::vector<double>>();
      opt.t = edge.at("t").get<std::int64_t>();
      cp.state.arch.push_back(std::move(conc));
      cp.state.arch_opt.push_back(std::move(opt));
    }

    const nlohmann::json& nj = st.at("net");
    SuperNetState& net = cp.state.net;
    net.spec = CellSpec::by_name(nj.at("space").get<std::string>());
    net.channels = nj.at("channels").get<int>();
    net.n_cells = nj.at("n_cells").get<int>();
    net.partial_k = nj.at("partial_k").get<int>();
    net.input_dim = nj.at("input_dim").get<int>();
    net.n_classes = nj.at("n_classes").get<int>();
    net.policy = subset_policy_from_name(nj.at("policy").get<std::string>());
    net.edge_ops = nj.at("edge_ops").get<std::vector<std::vector<int>>>();
    for (const auto& [name, tj] : nj.at("params").items()) {
      net.params.add(name, tensor_from_json(tj));
      const auto buf = nj.at("momentum").at(name).get<std::vector<double>>();
      if (buf.size() != net.params.momentum.at(name).data.size()) {
        throw std::invalid_argument("checkpoint momentum size mismatch");
      }
      net.params.momentum.at(name).data = buf;
    }
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint field missing: ") +
                                e.what());
  }
}

}  // namespace drnas::bilevel
