#pragma once

#include <vector>

#include "sffn/layer.hpp"
#include "sffn/matrix.hpp"

namespace sffn {

// Mean token-level cross entropy over logits (N x vocab) against integer
// targets; writes dlogits (same shape, already divided by N) when non-null.
double cross_entropy_loss(const Matrix& logits, const std::vector<int>& targets,
                          Matrix* dlogits);

// Load-balance penalty for a one-block router: B * sum_i f_i * P_i, where
// f_i is the fraction of tokens dispatched to block i and P_i the mean
// router probability of block i over the batch. Equals 1 under perfectly
// uniform routing. `dispatch` holds the chosen block per token.
double switch_balance_loss(const Matrix& probs, const std::vector<int>& dispatch);

// Gradient of switch_balance_loss with respect to probs. Dispatch counts are
// treated as constants; only the P_i term carries gradient.
Matrix switch_balance_loss_grad(const Matrix& probs,
                                const std::vector<int>& dispatch);

// Scales the gradients of expert-flagged parameters by 1/sqrt(num_experts);
// matches the convention of shrinking per-expert updates as experts multiply.
void scale_expert_grads(std::vector<ParamRef>& params, int num_experts);

}  // namespace sffn
