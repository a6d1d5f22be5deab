#include "drnas/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace drnas::nn {

namespace {

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("shape mismatch: " + what);
}

}  // namespace

Tensor2 affine_forward(const Tensor2& x, const Tensor2& W, const Tensor2& b) {
  require_shape(x.cols == W.cols, "affine expects x.cols == W.cols");
  require_shape(b.rows == 1 && b.cols == W.rows,
                "affine expects b shaped [1, W.rows]");
  Tensor2 y(x.rows, W.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int o = 0; o < W.rows; ++o) {
      double acc = b.at(0, o);
      for (int k = 0; k < x.cols; ++k) acc += x.at(i, k) * W.at(o, k);
      y.at(i, o) = acc;
    }
  }
  return y;
}

AffineGrads affine_backward(const Tensor2& grad_out, const Tensor2& x,
                            const Tensor2& W) {
  require_shape(grad_out.rows == x.rows && grad_out.cols == W.rows,
                "affine backward expects grad_out shaped [x.rows, W.rows]");
  AffineGrads g;
  g.grad_x = Tensor2(x.rows, x.cols);
  g.grad_W = Tensor2(W.rows, W.cols);
  g.grad_b = Tensor2(1, W.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int o = 0; o < W.rows; ++o) {
      const double go = grad_out.at(i, o);
      g.grad_b.at(0, o) += go;
      for (int k = 0; k < x.cols; ++k) {
        g.grad_x.at(i, k) += go * W.at(o, k);
        g.grad_W.at(o, k) += go * x.at(i, k);
      }
    }
  }
  return g;
}

Tensor2 relu_forward(const Tensor2& x) {
  Tensor2 y = x;
  for (double& v : y.data) v = std::max(v, 0.0);
  return y;
}

Tensor2 relu_backward(const Tensor2& grad_out, const Tensor2& pre_activation) {
  require_shape(grad_out.same_shape(pre_activation),
                "relu backward expects matching shapes");
  Tensor2 g = grad_out;
  for (size_t i = 0; i < g.data.size(); ++i) {
    if (pre_activation.data[i] <= 0.0) g.data[i] = 0.0;
  }
  return g;
}

Tensor2 scale_forward(const Tensor2& x, double factor) {
  Tensor2 y = x;
  for (double& v : y.data) v *= factor;
  return y;
}

Tensor2 scale_backward(const Tensor2& grad_out, double factor) {
  return scale_forward(grad_out, factor);
}

XentResult softmax_xent_forward(const Tensor2& logits,
                                const std::vector<int>& labels) {
  require_shape(static_cast<int>(labels.size()) == logits.rows,
                "softmax_xent expects one label per row");
  XentResult out;
  out.probs = Tensor2(logits.rows, logits.cols);
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols) {
      throw std::invalid_argument("softmax_xent: label " + std::to_string(y) +
                                  " outside [0, " +
                                  std::to_string(logits.cols) + ")");
    }
    double mx = logits.at(i, 0);
    for (int k = 1; k < logits.cols; ++k) mx = std::max(mx, logits.at(i, k));
    double z = 0.0;
    for (int k = 0; k < logits.cols; ++k) {
      const double e = std::exp(logits.at(i, k) - mx);
      out.probs.at(i, k) = e;
      z += e;
    }
    for (int k = 0; k < logits.cols; ++k) out.probs.at(i, k) /= z;
    total += -(logits.at(i, y) - mx - std::log(z));
  }
  out.loss = total / logits.rows;
  return out;
}

Tensor2 softmax_xent_backward(const XentResult& fwd,
                              const std::vector<int>& labels) {
  const Tensor2& p = fwd.probs;
  Tensor2 g = p;
  const double inv_b = 1.0 / p.rows;
  for (int i = 0; i < p.rows; ++i) {
    g.at(i, labels[i]) -= 1.0;
    for (int k = 0; k < p.cols; ++k) g.at(i, k) *= inv_b;
  }
  return g;
}

double accuracy(const Tensor2& logits, const std::vector<int>& labels) {
  require_shape(static_cast<int>(labels.size()) == logits.rows,
                "accuracy expects one label per row");
  if (logits.rows == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < logits.rows; ++i) {
    int best = 0;
    for (int k = 1; k < logits.cols; ++k) {
      if (logits.at(i, k) > logits.at(i, best)) best = k;
    }
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / logits.rows;
}

}  // namespace drnas::nn
