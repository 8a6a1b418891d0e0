#pragma once

#include <vector>

#include "asymfusion/graph.hpp"

namespace asymfusion {

/// softmax over the S entries of a 1 x S x 1 x 1 logit tensor.
Tensor softmax_weights(const Tensor& logits);

/// sum_s alpha_s * probs_s.
Tensor mix_probs(const Tensor& alpha, const std::vector<Tensor>& probs);

/// Mean over counted pixels of KL(target || softmax(logits)). The target is a
/// constant; the gradient w.r.t. the logits is softmax(logits) - target.
Var kl_to_target(Graph& g, Var logits, const Tensor& target, const LabelMap& labels,
                 int ignore_index = -1);

/// Mean over counted pixels of -log(sum_s softmax(w)_s * probs_s[label]).
/// Only `w` (1 x S x 1 x 1) receives a gradient.
Var ensemble_nll(Graph& g, Var w, const std::vector<Tensor>& probs, const LabelMap& labels,
                 int ignore_index = -1);

/// Plain per-pixel KL(p || q) averaged over pixels, for checks.
double mean_kl(const Tensor& p, const Tensor& q);

}  // namespace asymfusion
