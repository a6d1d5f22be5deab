#include "drnas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace drnas {

namespace {

constexpr double kScaleFactor = 0.5;

const std::vector<std::string> kOpNames = {"zero", "skip", "affine",
                                           "affine_relu", "scale"};

std::vector<std::pair<int, int>> all_pairs(int n_nodes) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n_nodes; ++i) {
    for (int j = i + 1; j < n_nodes; ++j) edges.emplace_back(i, j);
  }
  return edges;
}

Tensor2 gather_cols(const Tensor2& x, const std::vector<int>& idx) {
  Tensor2 out(x.rows, static_cast<int>(idx.size()));
  for (int r = 0; r < x.rows; ++r) {
    for (size_t k = 0; k < idx.size(); ++k) {
      out.at(r, static_cast<int>(k)) = x.at(r, idx[k]);
    }
  }
  return out;
}

void scatter_cols_add(Tensor2& dst, const Tensor2& src,
                      const std::vector<int>& idx) {
  for (int r = 0; r < src.rows; ++r) {
    for (size_t k = 0; k < idx.size(); ++k) {
      dst.at(r, idx[k]) += src.at(r, static_cast<int>(k));
    }
  }
}

Tensor2 gaussian_init(int rows, int cols, double stddev, Rng rng) {
  Tensor2 t(rows, cols);
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

// Weight scale 1/sqrt(fan_in) keeps signal magnitude stable through
// stacked ops; biases start at zero.
void add_affine_params(ParamStore& params, const std::string& w_name,
                       const std::string& b_name, int out_dim, int in_dim,
                       Rng& init_rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in_dim));
  params.add(w_name, gaussian_init(out_dim, in_dim, stddev,
                                   init_rng.split(w_name)));
  params.add(b_name, Tensor2(1, out_dim));
}

struct EdgeOpRefs {
  std::vector<OpKind> kinds;
  std::vector<const Tensor2*> weights;
  std::vector<const Tensor2*> biases;
};

EdgeOpRefs edge_refs(const SuperNetState& net, int cell, int edge) {
  EdgeOpRefs refs;
  for (int op : net.edge_ops[edge]) {
    const OpKind kind = op_kind_from_name(net.spec.op_registry[op]);
    refs.kinds.push_back(kind);
    if (op_has_params(kind)) {
      refs.weights.push_back(&net.params.value(edge_param_name(cell, edge, op, 'W')));
      refs.biases.push_back(&net.params.value(edge_param_name(cell, edge, op, 'b')));
    } else {
      refs.weights.push_back(nullptr);
      refs.biases.push_back(nullptr);
    }
  }
  return refs;
}

Tensor2 apply_op(OpKind kind, const Tensor2& x_sub, const Tensor2* W,
                 const Tensor2* b, Tensor2* pre_activation) {
  switch (kind) {
    case OpKind::kZero:
      return Tensor2(x_sub.rows, x_sub.cols);
    case OpKind::kSkip:
      return x_sub;
    case OpKind::kScaleHalf:
      return nn::scale_forward(x_sub, kScaleFactor);
    case OpKind::kAffine:
      return nn::affine_forward(x_sub, *W, *b);
    case OpKind::kAffineRelu: {
      Tensor2 pre = nn::affine_forward(x_sub, *W, *b);
      Tensor2 out = nn::relu_forward(pre);
      if (pre_activation != nullptr) *pre_activation = std::move(pre);
      return out;
    }
  }
  throw std::logic_error("apply_op: unknown op kind");
}

Tensor2 mixed_edge_core(const Tensor2& x, const std::vector<double>& theta,
                        const EdgeOpRefs& refs, const std::vector<int>& subset,
                        std::vector<SupernetCache::EdgeOpTrace>* traces) {
  if (theta.size() != refs.kinds.size()) {
    throw std::invalid_argument("mixed op: theta size does not match op count");
  }
  Tensor2 x_sub = gather_cols(x, subset);
  Tensor2 acc(x_sub.rows, x_sub.cols);
  for (size_t l = 0; l < refs.kinds.size(); ++l) {
    SupernetCache::EdgeOpTrace trace;
    Tensor2 y = apply_op(refs.kinds[l], x_sub, refs.weights[l], refs.biases[l],
                         traces != nullptr ? &trace.pre_activation : nullptr);
    for (size_t i = 0; i < acc.data.size(); ++i) {
      acc.data[i] += theta[l] * y.data[i];
    }
    if (traces != nullptr) {
      trace.output = std::move(y);
      traces->push_back(std::move(trace));
    }
  }
  if (traces != nullptr && !traces->empty()) {
    // All ops on this edge read the same subset input; store it once.
    (*traces)[0].input_subset = std::move(x_sub);
  }
  Tensor2 out = x;
  for (int r = 0; r < out.rows; ++r) {
    for (size_t k = 0; k < subset.size(); ++k) {
      out.at(r, subset[k]) = acc.at(r, static_cast<int>(k));
    }
  }
  return out;
}

void check_theta_shape(const SuperNetState& net,
                       const std::vector<dirichlet::SimplexSample>& theta) {
  if (theta.size() != net.edge_ops.size()) {
    throw std::invalid_argument("supernet: one simplex per edge required");
  }
  for (size_t e = 0; e < theta.size(); ++e) {
    if (theta[e].theta.size() != net.edge_ops[e].size()) {
      throw std::invalid_argument(
          "supernet: simplex size does not match surviving ops on edge " +
          std::to_string(e));
    }
  }
}

void check_plan_shape(const SuperNetState& net, const SubsetPlan& plan) {
  if (static_cast<int>(plan.subsets.size()) != net.n_cells) {
    throw std::invalid_argument("supernet: subset plan cell count mismatch");
  }
  const size_t m = static_cast<size_t>(net.subset_width());
  for (const auto& cell : plan.subsets) {
    if (cell.size() != net.edge_ops.size()) {
      throw std::invalid_argument("supernet: subset plan edge count mismatch");
    }
    for (const auto& s : cell) {
      if (s.size() != m) {
        throw std::invalid_argument("supernet: subset width mismatch");
      }
    }
  }
}

int checked_choice(const Genotype& g, const CellSpec& spec, int edge) {
  const int choice = g.choices[edge];
  if (choice < 0 || choice >= spec.n_ops()) {
    throw std::invalid_argument("genotype: choice out of registry range");
  }
  return choice;
}

}  // namespace

void check_genotype(const CellSpec& spec, const Genotype& g) {
  if (static_cast<int>(g.choices.size()) != spec.n_edges()) {
    throw std::invalid_argument("genotype: one choice per edge required");
  }
  if (!g.space.empty() && g.space != spec.name) {
    throw std::invalid_argument("genotype: space \"" + g.space +
                                "\" does not match \"" + spec.name + "\"");
  }
  if (!g.ops.empty() && g.ops != spec.op_registry) {
    throw std::invalid_argument("genotype: op registry does not match space");
  }
}

OpKind op_kind_from_name(const std::string& name) {
  if (name == "zero") return OpKind::kZero;
  if (name == "skip") return OpKind::kSkip;
  if (name == "affine") return OpKind::kAffine;
  if (name == "affine_relu") return OpKind::kAffineRelu;
  if (name == "scale") return OpKind::kScaleHalf;
  throw std::invalid_argument("unknown operation name: " + name);
}

const std::string& op_name(OpKind kind) {
  return kOpNames[static_cast<int>(kind)];
}

bool op_has_params(OpKind kind) {
  return kind == OpKind::kAffine || kind == OpKind::kAffineRelu;
}

int CellSpec::op_index(const std::string& name) const {
  for (int i = 0; i < n_ops(); ++i) {
    if (op_registry[i] == name) return i;
  }
  throw std::invalid_argument("operation not in registry: " + name);
}

CellSpec CellSpec::micro() {
  CellSpec spec;
  spec.name = "micro";
  spec.n_nodes = 3;
  spec.edges = all_pairs(3);
  spec.op_registry = {"zero", "skip", "affine", "affine_relu"};
  return spec;
}

CellSpec CellSpec::nb201_like() {
  CellSpec spec;
  spec.name = "nb201-like";
  spec.n_nodes = 4;
  spec.edges = all_pairs(4);
  spec.op_registry = {"zero", "skip", "affine", "affine_relu", "scale"};
  return spec;
}

CellSpec CellSpec::by_name(const std::string& name) {
  if (name == "micro") return micro();
  if (name == "nb201-like") return nb201_like();
  throw std::invalid_argument("unknown search space: " + name);
}

std::string subset_policy_name(SubsetPolicy policy) {
  return policy == SubsetPolicy::kFixedSlice ? "fixed-slice" : "random-per-step";
}

SubsetPolicy subset_policy_from_name(const std::string& name) {
  if (name == "random-per-step") return SubsetPolicy::kRandomPerStep;
  if (name == "fixed-slice") return SubsetPolicy::kFixedSlice;
  throw std::invalid_argument("unknown subset policy \"" + name +
                              "\" (want random-per-step or fixed-slice)");
}

std::string Genotype::key() const {
  std::ostringstream os;
  for (size_t i = 0; i < choices.size(); ++i) {
    if (i > 0) os << '-';
    os << choices[i];
  }
  return os.str();
}

nlohmann::ordered_json Genotype::to_json() const {
  nlohmann::ordered_json j;
  j["space"] = space;
  j["ops"] = ops;
  j["choices"] = choices;
  return j;
}

Genotype Genotype::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("space") || !j.contains("ops") ||
      !j.contains("choices")) {
    throw std::invalid_argument(
        "genotype JSON must carry \"space\", \"ops\" and \"choices\"");
  }
  Genotype g;
  if (!j["space"].is_string() || !j["ops"].is_array() ||
      !j["choices"].is_array()) {
    throw std::invalid_argument("genotype JSON field has the wrong type");
  }
  g.space = j["space"].get<std::string>();
  for (const auto& op : j["ops"]) {
    if (!op.is_string()) {
      throw std::invalid_argument("genotype JSON ops must be strings");
    }
    g.ops.push_back(op.get<std::string>());
  }
  for (const auto& c : j["choices"]) {
    if (!c.is_number_integer()) {
      throw std::invalid_argument("genotype JSON choices must be integers");
    }
    const int v = c.get<int>();
    if (v < 0 || v >= static_cast<int>(g.ops.size())) {
      throw std::invalid_argument("genotype JSON choice outside ops range");
    }
    g.choices.push_back(v);
  }
  return g;
}

std::vector<Genotype> enumerate_space(const CellSpec& spec, int cap) {
  std::int64_t total = 1;
  for (int e = 0; e < spec.n_edges(); ++e) {
    total *= spec.n_ops();
    if (total > cap) {
      throw std::length_error("search space holds more than " +
                              std::to_string(cap) + " genotypes");
    }
  }
  std::vector<Genotype> out;
  out.reserve(static_cast<size_t>(total));
  for (std::int64_t idx = 0; idx < total; ++idx) {
    Genotype g;
    g.space = spec.name;
    g.ops = spec.op_registry;
    g.choices.assign(spec.n_edges(), 0);
    std::int64_t rest = idx;
    for (int e = spec.n_edges() - 1; e >= 0; --e) {
      g.choices[e] = static_cast<int>(rest % spec.n_ops());
      rest /= spec.n_ops();
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::string edge_param_name(int cell, int edge, int op_index, char which) {
  std::ostringstream os;
  os << 'c' << cell << ".e" << edge << ".o" << op_index << '.' << which;
  return os.str();
}

SuperNetState build_supernet(const CellSpec& spec, int channels, int n_cells,
                             int partial_k, int input_dim, int n_classes,
                             SubsetPolicy policy, Rng& init_rng) {
  if (channels < 1 || n_cells < 1 || input_dim < 1 || n_classes < 2) {
    throw std::invalid_argument("supernet: dimensions out of range");
  }
  if (partial_k < 1 || channels % partial_k != 0) {
    throw std::invalid_argument(
        "supernet: partial_k must divide the channel count");
  }
  for (const auto& [i, j] : spec.edges) {
    if (i < 0 || j <= i || j >= spec.n_nodes) {
      throw std::invalid_argument("supernet: malformed cell edge");
    }
  }
  SuperNetState net;
  net.spec = spec;
  net.channels = channels;
  net.n_cells = n_cells;
  net.partial_k = partial_k;
  net.input_dim = input_dim;
  net.n_classes = n_classes;
  net.policy = policy;
  net.edge_ops.assign(spec.n_edges(), {});
  for (int e = 0; e < spec.n_edges(); ++e) {
    for (int o = 0; o < spec.n_ops(); ++o) net.edge_ops[e].push_back(o);
  }
  add_affine_params(net.params, "stem.W", "stem.b", channels, input_dim,
                    init_rng);
  const int m = net.subset_width();
  for (int c = 0; c < n_cells; ++c) {
    for (int e = 0; e < spec.n_edges(); ++e) {
      for (int o = 0; o < spec.n_ops(); ++o) {
        if (!op_has_params(op_kind_from_name(spec.op_registry[o]))) continue;
        add_affine_params(net.params, edge_param_name(c, e, o, 'W'),
                          edge_param_name(c, e, o, 'b'), m, m, init_rng);
      }
    }
  }
  add_affine_params(net.params, "head.W", "head.b", n_classes, channels,
                    init_rng);
  return net;
}

SubsetPlan draw_subset_plan(const SuperNetState& net, Rng& rng) {
  SubsetPlan plan;
  const int m = net.subset_width();
  plan.subsets.resize(net.n_cells);
  for (int c = 0; c < net.n_cells; ++c) {
    plan.subsets[c].resize(net.edge_ops.size());
    for (size_t e = 0; e < net.edge_ops.size(); ++e) {
      std::vector<int>& s = plan.subsets[c][e];
      if (m == net.channels || net.policy == SubsetPolicy::kFixedSlice) {
        s.resize(m);
        for (int k = 0; k < m; ++k) s[k] = k;
        continue;
      }
      // Partial Fisher-Yates: the first m entries are a uniform sample
      // without replacement; sorted so gather/scatter order is canonical.
      std::vector<int> all(net.channels);
      for (int k = 0; k < net.channels; ++k) all[k] = k;
      for (int k = 0; k < m; ++k) {
        const int j =
            k + static_cast<int>(rng.uniform_int(net.channels - k));
        std::swap(all[k], all[j]);
      }
      s.assign(all.begin(), all.begin() + m);
      std::sort(s.begin(), s.end());
    }
  }
  return plan;
}

Tensor2 mixed_op_forward(const Tensor2& x, const std::vector<double>& theta,
                         const std::vector<OpKind>& kinds,
                         const std::vector<const Tensor2*>& weights,
                         const std::vector<const Tensor2*>& biases,
                         const std::vector<int>& subset) {
  EdgeOpRefs refs{kinds, weights, biases};
  return mixed_edge_core(x, theta, refs, subset, nullptr);
}

ForwardResult supernet_forward(const SuperNetState& net, const Batch& batch,
                               const std::vector<dirichlet::SimplexSample>& theta,
                               const SubsetPlan& plan, SupernetCache* cache) {
  check_theta_shape(net, theta);
  check_plan_shape(net, plan);
  if (batch.x.cols != net.input_dim) {
    throw std::invalid_argument("supernet: batch feature width mismatch");
  }
  if (batch.x.rows == 0) {
    throw std::invalid_argument("supernet: empty batch");
  }

  Tensor2 stem_out = nn::affine_forward(batch.x, net.params.value("stem.W"),
                                        net.params.value("stem.b"));
  if (cache != nullptr) {
    cache->batch = batch;
    cache->plan = plan;
    cache->theta = theta;
    cache->stem_out = stem_out;
    cache->node_values.assign(net.n_cells, {});
    cache->traces.assign(net.n_cells, {});
  }

  Tensor2 cell_in = stem_out;
  for (int c = 0; c < net.n_cells; ++c) {
    std::vector<Tensor2> nodes(net.spec.n_nodes);
    nodes[0] = cell_in;
    for (int j = 1; j < net.spec.n_nodes; ++j) {
      nodes[j] = Tensor2(batch.x.rows, net.channels);
    }
    if (cache != nullptr) {
      cache->traces[c].resize(net.spec.n_edges());
    }
    for (int e = 0; e < net.spec.n_edges(); ++e) {
      const auto [i, j] = net.spec.edges[e];
      EdgeOpRefs refs = edge_refs(net, c, e);
      Tensor2 edge_out = mixed_edge_core(
          nodes[i], theta[e].theta, refs, plan.subsets[c][e],
          cache != nullptr ? &cache->traces[c][e] : nullptr);
      for (size_t k = 0; k < edge_out.data.size(); ++k) {
        nodes[j].data[k] += edge_out.data[k];
      }
    }
    cell_in = nodes[net.spec.n_nodes - 1];
    if (cache != nullptr) cache->node_values[c] = std::move(nodes);
  }

  ForwardResult out;
  out.logits = nn::affine_forward(cell_in, net.params.value("head.W"),
                                  net.params.value("head.b"));
  nn::XentResult xent = nn::softmax_xent_forward(out.logits, batch.y);
  out.loss = xent.loss;
  if (!std::isfinite(out.loss)) {
    double max_logit = 0.0;
    for (double v : out.logits.data) max_logit = std::max(max_logit, std::abs(v));
    throw std::runtime_error(
        "supernet: non-finite loss (max |logit| = " +
        std::to_string(max_logit) + ", batch = " +
        std::to_string(batch.x.rows) + ")");
  }
  if (cache != nullptr) {
    cache->features = cell_in;
    cache->xent = std::move(xent);
  }
  return out;
}

void supernet_backward(SuperNetState& net, const SupernetCache& cache,
                       std::vector<std::vector<double>>* theta_grads) {
  if (theta_grads != nullptr) {
    theta_grads->assign(net.edge_ops.size(), {});
    for (size_t e = 0; e < net.edge_ops.size(); ++e) {
      (*theta_grads)[e].assign(net.edge_ops[e].size(), 0.0);
    }
  }

  Tensor2 grad_logits = nn::softmax_xent_backward(cache.xent, cache.batch.y);
  nn::AffineGrads head = nn::affine_backward(grad_logits, cache.features,
                                             net.params.value("head.W"));
  for (size_t i = 0; i < head.grad_W.data.size(); ++i) {
    net.params.grad("head.W").data[i] += head.grad_W.data[i];
  }
  for (size_t i = 0; i < head.grad_b.data.size(); ++i) {
    net.params.grad("head.b").data[i] += head.grad_b.data[i];
  }

  // grad w.r.t. the running cell output, walked back through the cells.
  Tensor2 grad_cell_out = std::move(head.grad_x);
  for (int c = net.n_cells - 1; c >= 0; --c) {
    std::vector<Tensor2> node_grads(net.spec.n_nodes);
    for (int j = 0; j < net.spec.n_nodes; ++j) {
      node_grads[j] = Tensor2(grad_cell_out.rows, net.channels);
    }
    node_grads[net.spec.n_nodes - 1] = grad_cell_out;

    for (int j = net.spec.n_nodes - 1; j >= 1; --j) {
      for (int e = net.spec.n_edges() - 1; e >= 0; --e) {
        if (net.spec.edges[e].second != j) continue;
        const int i = net.spec.edges[e].first;
        const std::vector<int>& subset = cache.plan.subsets[c][e];
        const Tensor2& g_out = node_grads[j];
        // Complement columns bypass the edge unchanged.
        std::vector<char> in_subset(net.channels, 0);
        for (int col : subset) in_subset[col] = 1;
        for (int r = 0; r < g_out.rows; ++r) {
          for (int col = 0; col < net.channels; ++col) {
            if (!in_subset[col]) node_grads[i].at(r, col) += g_out.at(r, col);
          }
        }
        Tensor2 g_acc = gather_cols(g_out, subset);
        const auto& traces = cache.traces[c][e];
        const Tensor2& x_sub = traces[0].input_subset;
        Tensor2 g_xsub(x_sub.rows, x_sub.cols);
        for (size_t l = 0; l < net.edge_ops[e].size(); ++l) {
          const int op = net.edge_ops[e][l];
          const OpKind kind = op_kind_from_name(net.spec.op_registry[op]);
          const double th = cache.theta[e].theta[l];
          if (theta_grads != nullptr) {
            double dot = 0.0;
            for (size_t k = 0; k < g_acc.data.size(); ++k) {
              dot += g_acc.data[k] * traces[l].output.data[k];
            }
            (*theta_grads)[e][l] += dot;
          }
          switch (kind) {
            case OpKind::kZero:
              break;
            case OpKind::kSkip:
              for (size_t k = 0; k < g_xsub.data.size(); ++k) {
                g_xsub.data[k] += th * g_acc.data[k];
              }
              break;
            case OpKind::kScaleHalf:
              for (size_t k = 0; k < g_xsub.data.size(); ++k) {
                g_xsub.data[k] += th * kScaleFactor * g_acc.data[k];
              }
              break;
            case OpKind::kAffine:
            case OpKind::kAffineRelu: {
              Tensor2 g_y(g_acc.rows, g_acc.cols);
              for (size_t k = 0; k < g_y.data.size(); ++k) {
                g_y.data[k] = th * g_acc.data[k];
              }
              if (kind == OpKind::kAffineRelu) {
                g_y = nn::relu_backward(g_y, traces[l].pre_activation);
              }
              const std::string w_name = edge_param_name(c, e, op, 'W');
              const std::string b_name = edge_param_name(c, e, op, 'b');
              nn::AffineGrads g =
                  nn::affine_backward(g_y, x_sub, net.params.value(w_name));
              Tensor2& gw = net.params.grad(w_name);
              Tensor2& gb = net.params.grad(b_name);
              for (size_t k = 0; k < gw.data.size(); ++k) {
                gw.data[k] += g.grad_W.data[k];
              }
              for (size_t k = 0; k < gb.data.size(); ++k) {
                gb.data[k] += g.grad_b.data[k];
              }
              for (size_t k = 0; k < g_xsub.data.size(); ++k) {
                g_xsub.data[k] += g.grad_x.data[k];
              }
              break;
            }
          }
        }
        scatter_cols_add(node_grads[i], g_xsub, subset);
      }
    }
    grad_cell_out = std::move(node_grads[0]);
  }

  nn::AffineGrads stem = nn::affine_backward(grad_cell_out, cache.batch.x,
                                             net.params.value("stem.W"));
  for (size_t i = 0; i < stem.grad_W.data.size(); ++i) {
    net.params.grad("stem.W").data[i] += stem.grad_W.data[i];
  }
  for (size_t i = 0; i < stem.grad_b.data.size(); ++i) {
    net.params.grad("stem.b").data[i] += stem.grad_b.data[i];
  }
}

ForwardResult supernet_eval(const SuperNetState& net, const Batch& batch,
                            const std::vector<dirichlet::SimplexSample>& theta,
                            const SubsetPlan& plan) {
  return supernet_forward(net, batch, theta, plan, nullptr);
}

namespace {

Genotype pick_by_weight(const SuperNetState& net,
                        const std::vector<std::vector<double>>& weight) {
  Genotype g;
  g.space = net.spec.name;
  g.ops = net.spec.op_registry;
  for (size_t e = 0; e < net.edge_ops.size(); ++e) {
    size_t best = 0;
    for (size_t l = 1; l < weight[e].size(); ++l) {
      if (weight[e][l] > weight[e][best]) best = l;
    }
    g.choices.push_back(net.edge_ops[e][best]);
  }
  return g;
}

}  // namespace

Genotype select_genotype(const SuperNetState& net,
                         const std::vector<dirichlet::Concentration>& arch) {
  if (arch.size() != net.edge_ops.size()) {
    throw std::invalid_argument("select_genotype: one concentration per edge");
  }
  std::vector<std::vector<double>> weight(arch.size());
  for (size_t e = 0; e < arch.size(); ++e) {
    if (arch[e].eta.size() != net.edge_ops[e].size()) {
      throw std::invalid_argument(
          "select_genotype: concentration size mismatch on edge " +
          std::to_string(e));
    }
    weight[e] = dirichlet::mean(dirichlet::beta_from_eta(arch[e].eta));
  }
  return pick_by_weight(net, weight);
}

Genotype discretize_sample(const SuperNetState& net,
                           const std::vector<dirichlet::SimplexSample>& theta) {
  check_theta_shape(net, theta);
  std::vector<std::vector<double>> weight(theta.size());
  for (size_t e = 0; e < theta.size(); ++e) weight[e] = theta[e].theta;
  return pick_by_weight(net, weight);
}

namespace {

ForwardResult discrete_forward_impl(const CellSpec& spec,
                                    const Genotype& genotype,
                                    const ParamStore& params, int channels,
                                    int n_cells, const Batch& batch,
                                    DiscreteGradCache* cache) {
  check_genotype(spec, genotype);
  Tensor2 stem_out = nn::affine_forward(batch.x, params.value("stem.W"),
                                        params.value("stem.b"));
  if (cache != nullptr) {
    cache->batch = batch;
    cache->stem_out = stem_out;
    cache->node_values.assign(n_cells, {});
    cache->pre_activations.assign(
        n_cells, std::vector<Tensor2>(spec.n_edges()));
  }
  Tensor2 cell_in = stem_out;
  for (int c = 0; c < n_cells; ++c) {
    std::vector<Tensor2> nodes(spec.n_nodes);
    nodes[0] = cell_in;
    for (int j = 1; j < spec.n_nodes; ++j) {
      nodes[j] = Tensor2(batch.x.rows, channels);
    }
    for (int e = 0; e < spec.n_edges(); ++e) {
      const auto [i, j] = spec.edges[e];
      const int op = checked_choice(genotype, spec, e);
      const OpKind kind = op_kind_from_name(spec.op_registry[op]);
      const Tensor2* W = nullptr;
      const Tensor2* b = nullptr;
      if (op_has_params(kind)) {
        W = &params.value(edge_param_name(c, e, op, 'W'));
        b = &params.value(edge_param_name(c, e, op, 'b'));
      }
      Tensor2 pre;
      Tensor2 y = apply_op(kind, nodes[i], W, b,
                           cache != nullptr ? &pre : nullptr);
      if (cache != nullptr && kind == OpKind::kAffineRelu) {
        cache->pre_activations[c][e] = std::move(pre);
      }
      for (size_t k = 0; k < y.data.size(); ++k) nodes[j].data[k] += y.data[k];
    }
    cell_in = nodes[spec.n_nodes - 1];
    if (cache != nullptr) cache->node_values[c] = std::move(nodes);
  }
  ForwardResult out;
  out.logits = nn::affine_forward(cell_in, params.value("head.W"),
                                  params.value("head.b"));
  nn::XentResult xent = nn::softmax_xent_forward(out.logits, batch.y);
  out.loss = xent.loss;
  if (!std::isfinite(out.loss)) {
    throw std::runtime_error("discrete network: non-finite loss");
  }
  if (cache != nullptr) {
    cache->features = cell_in;
    cache->xent = std::move(xent);
  }
  return out;
}

}  // namespace

ForwardResult discrete_forward(const CellSpec& spec, const Genotype& genotype,
                               const ParamStore& params, int channels,
                               int n_cells, const Batch& batch) {
  return discrete_forward_impl(spec, genotype, params, channels, n_cells,
                               batch, nullptr);
}

ForwardResult discrete_forward_cached(const CellSpec& spec,
                                      const Genotype& genotype,
                                      const ParamStore& params, int channels,
                                      int n_cells, const Batch& batch,
                                      DiscreteGradCache& cache) {
  return discrete_forward_impl(spec, genotype, params, channels, n_cells,
                               batch, &cache);
}

void discrete_backward(const CellSpec& spec, const Genotype& genotype,
                       ParamStore& params, const DiscreteGradCache& cache) {
  const int n_cells = static_cast<int>(cache.node_values.size());
  const int channels = cache.features.cols;
  Tensor2 grad_logits = nn::softmax_xent_backward(cache.xent, cache.batch.y);
  nn::AffineGrads head = nn::affine_backward(grad_logits, cache.features,
                                             params.value("head.W"));
  for (size_t i = 0; i < head.grad_W.data.size(); ++i) {
    params.grad("head.W").data[i] += head.grad_W.data[i];
  }
  for (size_t i = 0; i < head.grad_b.data.size(); ++i) {
    params.grad("head.b").data[i] += head.grad_b.data[i];
  }

  Tensor2 grad_cell_out = std::move(head.grad_x);
  for (int c = n_cells - 1; c >= 0; --c) {
    const std::vector<Tensor2>& nodes = cache.node_values[c];
    std::vector<Tensor2> node_grads(spec.n_nodes);
    for (int j = 0; j < spec.n_nodes; ++j) {
      node_grads[j] = Tensor2(grad_cell_out.rows, channels);
    }
    node_grads[spec.n_nodes - 1] = grad_cell_out;
    for (int j = spec.n_nodes - 1; j >= 1; --j) {
      for (int e = spec.n_edges() - 1; e >= 0; --e) {
        if (spec.edges[e].second != j) continue;
        const int i = spec.edges[e].first;
        const int op = checked_choice(genotype, spec, e);
        const OpKind kind = op_kind_from_name(spec.op_registry[op]);
        const Tensor2& g_out = node_grads[j];
        switch (kind) {
          case OpKind::kZero:
            break;
          case OpKind::kSkip:
            for (size_t k = 0; k < g_out.data.size(); ++k) {
              node_grads[i].data[k] += g_out.data[k];
            }
            break;
          case OpKind::kScaleHalf:
            for (size_t k = 0; k < g_out.data.size(); ++k) {
              node_grads[i].data[k] += kScaleFactor * g_out.data[k];
            }
            break;
          case OpKind::kAffine:
          case OpKind::kAffineRelu: {
            Tensor2 g_y = g_out;
            if (kind == OpKind::kAffineRelu) {
              g_y = nn::relu_backward(g_y, cache.pre_activations[c][e]);
            }
            const std::string w_name = edge_param_name(c, e, op, 'W');
            const std::string b_name = edge_param_name(c, e, op, 'b');
            nn::AffineGrads g =
                nn::affine_backward(g_y, nodes[i], params.value(w_name));
            Tensor2& gw = params.grad(w_name);
            Tensor2& gb = params.grad(b_name);
            for (size_t k = 0; k < gw.data.size(); ++k) {
              gw.data[k] += g.grad_W.data[k];
            }
            for (size_t k = 0; k < gb.data.size(); ++k) {
              gb.data[k] += g.grad_b.data[k];
            }
            for (size_t k = 0; k < g.grad_x.data.size(); ++k) {
              node_grads[i].data[k] += g.grad_x.data[k];
            }
            break;
          }
        }
      }
    }
    grad_cell_out = std::move(node_grads[0]);
  }

  nn::AffineGrads stem = nn::affine_backward(grad_cell_out, cache.batch.x,
                                             params.value("stem.W"));
  for (size_t i = 0; i < stem.grad_W.data.size(); ++i) {
    params.grad("stem.W").data[i] += stem.grad_W.data[i];
  }
  for (size_t i = 0; i < stem.grad_b.data.size(); ++i) {
    params.grad("stem.b").data[i] += stem.grad_b.data[i];
  }
}

ParamStore build_discrete_params(const CellSpec& spec, const Genotype& genotype,
                                 int channels, int n_cells, int input_dim,
                                 int n_classes, Rng& init_rng) {
  check_genotype(spec, genotype);
  ParamStore params;
  add_affine_params(params, "stem.W", "stem.b", channels, input_dim, init_rng);
  for (int c = 0; c < n_cells; ++c) {
    for (int e = 0; e < spec.n_edges(); ++e) {
      const int op = checked_choice(genotype, spec, e);
      if (!op_has_params(op_kind_from_name(spec.op_registry[op]))) continue;
      add_affine_params(params, edge_param_name(c, e, op, 'W'),
                        edge_param_name(c, e, op, 'b'), channels, channels,
                        init_rng);
    }
  }
  add_affine_params(params, "head.W", "head.b", n_classes, channels, init_rng);
  return params;
}

}  // namespace drnas
