#include "drnas/progressive.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace drnas::progressive {

WidenMapping widen_mapping(int n, int q, Rng& rng) {
  if (n < 1 || q < 1) {
    throw std::invalid_argument("widen_mapping: sizes must be positive");
  }
  WidenMapping g;
  g.n = n;
  g.q = q;
  g.table.resize(q);
  const int keep = std::min(n, q);
  for (int i = 0; i < keep; ++i) g.table[i] = i;
  for (int i = keep; i < q; ++i) {
    g.table[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
  }
  return g;
}

WidenMapping identity_mapping(int n) {
  WidenMapping g;
  g.n = n;
  g.q = n;
  g.table.resize(n);
  std::iota(g.table.begin(), g.table.end(), 0);
  return g;
}

Tensor2 widen_weights(const Tensor2& W, const WidenMapping& g_out,
                      const WidenMapping& g_in) {
  if (g_out.n != W.rows || g_in.n != W.cols) {
    throw std::invalid_argument("widen_weights: mapping domain mismatch");
  }
  Tensor2 U(g_out.q, g_in.q);
  for (int o = 0; o < g_out.q; ++o) {
    for (int i = 0; i < g_in.q; ++i) {
      U.at(o, i) = W.at(g_out.table[o], g_in.table[i]);
    }
  }
  return U;
}

void widen_supernet(SuperNetState& net, int new_partial_k, Rng& rng) {
  if (new_partial_k < 1 || net.channels % new_partial_k != 0) {
    throw std::invalid_argument(
        "widen_supernet: partial_k must divide the channel count");
  }
  const int m_old = net.subset_width();
  const int m_new = net.channels / new_partial_k;
  if (m_new < m_old) {
    throw std::invalid_argument(
        "widen_supernet: new width must not shrink the subset");
  }
  if (m_new == m_old) {
    net.partial_k = new_partial_k;
    return;
  }
  for (int c = 0; c < net.n_cells; ++c) {
    for (size_t e = 0; e < net.edge_ops.size(); ++e) {
      for (int op : net.edge_ops[e]) {
        const OpKind kind = op_kind_from_name(net.spec.op_registry[op]);
        if (!op_has_params(kind)) continue;
        const std::string w_name =
            edge_param_name(c, static_cast<int>(e), op, 'W');
        const std::string b_name =
            edge_param_name(c, static_cast<int>(e), op, 'b');
        WidenMapping g_out = widen_mapping(m_old, m_new, rng);
        WidenMapping g_in = widen_mapping(m_old, m_new, rng);
        net.params.replace(w_name,
                           widen_weights(net.params.value(w_name), g_out, g_in));
        net.params.replace(
            b_name, widen_weights(net.params.value(b_name),
                                  identity_mapping(1), g_out));
      }
    }
  }
  net.partial_k = new_partial_k;
}

void prune_ops(SuperNetState& net, std::vector<dirichlet::Concentration>& arch,
               std::vector<AdamState>& arch_opt, int keep) {
  if (arch.size() != net.edge_ops.size() ||
      arch_opt.size() != net.edge_ops.size()) {
    throw std::invalid_argument("prune_ops: per-edge state size mismatch");
  }
  if (keep < 1) {
    throw std::invalid_argument("prune_ops: must keep at least one op");
  }
  for (size_t e = 0; e < net.edge_ops.size(); ++e) {
    const int n_ops = static_cast<int>(net.edge_ops[e].size());
    if (keep > n_ops) {
      throw std::invalid_argument(
          "prune_ops: keep exceeds surviving ops on edge " + std::to_string(e));
    }
    if (keep == n_ops) continue;
    const std::vector<double> means =
        dirichlet::mean(dirichlet::beta_from_eta(arch[e].eta));
    std::vector<int> order(n_ops);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (means[a] != means[b]) return means[a] > means[b];
      return a < b;
    });
    std::vector<int> kept(order.begin(), order.begin() + keep);
    std::sort(kept.begin(), kept.end());

    std::vector<char> survives(n_ops, 0);
    for (int l : kept) survives[l] = 1;
    for (int c = 0; c < net.n_cells; ++c) {
      for (int l = 0; l < n_ops; ++l) {
        if (survives[l]) continue;
        const int op = net.edge_ops[e][l];
        if (!op_has_params(op_kind_from_name(net.spec.op_registry[op]))) {
          continue;
        }
        net.params.remove(edge_param_name(c, static_cast<int>(e), op, 'W'));
        net.params.remove(edge_param_name(c, static_cast<int>(e), op, 'b'));
      }
    }

    std::vector<int> new_ops;
    std::vector<double> new_eta;
    std::vector<double> new_m, new_v;
    const bool has_moments = arch_opt[e].m.size() == arch[e].eta.size();
    for (int l : kept) {
      new_ops.push_back(net.edge_ops[e][l]);
      new_eta.push_back(arch[e].eta[l]);
      if (has_moments) {
        new_m.push_back(arch_opt[e].m[l]);
        new_v.push_back(arch_opt[e].v[l]);
      }
    }
    net.edge_ops[e] = std::move(new_ops);
    arch[e].eta = std::move(new_eta);
    if (has_moments) {
      arch_opt[e].m = std::move(new_m);
      arch_opt[e].v = std::move(new_v);
    }
  }
}

TransitionReport stage_transition(SuperNetState& net,
                                  std::vector<dirichlet::Concentration>& arch,
                                  std::vector<AdamState>& arch_opt,
                                  const StageSpec& next, Rng& rng) {
  TransitionReport report;
  report.partial_k_before = net.partial_k;
  report.ops_per_edge_before = static_cast<int>(net.edge_ops.empty()
                                                    ? 0
                                                    : net.edge_ops[0].size());
  report.params_before = net.params.param_count();

  prune_ops(net, arch, arch_opt, next.registry_size);
  widen_supernet(net, next.partial_k, rng);

  report.partial_k_after = net.partial_k;
  report.ops_per_edge_after = next.registry_size;
  report.params_after = net.params.param_count();
  report.surviving_ops.resize(net.edge_ops.size());
  for (size_t e = 0; e < net.edge_ops.size(); ++e) {
    for (int op : net.edge_ops[e]) {
      report.surviving_ops[e].push_back(net.spec.op_registry[op]);
    }
  }
  return report;
}

}  // namespace drnas::progressive
