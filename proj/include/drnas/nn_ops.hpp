#pragma once

#include <vector>

#include "drnas/tensor.hpp"

namespace drnas::nn {

// y = x * W^T + b.  Shapes: x [B, in], W [out, in], b [1, out], y [B, out].
Tensor2 affine_forward(const Tensor2& x, const Tensor2& W, const Tensor2& b);

struct AffineGrads {
  Tensor2 grad_x;
  Tensor2 grad_W;
  Tensor2 grad_b;
};

// grad_out is dLoss/dy.  Needs the forward inputs, not the output.
AffineGrads affine_backward(const Tensor2& grad_out, const Tensor2& x,
                            const Tensor2& W);

Tensor2 relu_forward(const Tensor2& x);

// Uses the pre-activation input to decide which units were active.
// Ties at exactly zero propagate no gradient.
Tensor2 relu_backward(const Tensor2& grad_out, const Tensor2& pre_activation);

Tensor2 scale_forward(const Tensor2& x, double factor);
Tensor2 scale_backward(const Tensor2& grad_out, double factor);

struct XentResult {
  double loss = 0.0;
  Tensor2 probs;  // softmax rows, kept for the backward pass
};

// Mean cross-entropy over the batch with a max-shifted softmax.
// labels[i] must lie in [0, logits.cols); anything else is an input error.
XentResult softmax_xent_forward(const Tensor2& logits,
                                const std::vector<int>& labels);

// dLoss/dlogits = (probs - onehot(labels)) / B.
Tensor2 softmax_xent_backward(const XentResult& fwd,
                              const std::vector<int>& labels);

// Row-wise argmax vs labels.  Ties resolve to the lowest column index.
double accuracy(const Tensor2& logits, const std::vector<int>& labels);

}  // namespace drnas::nn
