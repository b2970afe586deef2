// Training objectives: overlap (Dice), hard-example weighting (Focal), their
// blend for the main and auxiliary heads, mask smoothness, the complexity
// regression, the group-diversity reward, and the weighted total.
#pragma once

#include "core/config.hpp"
#include "core/tensor.hpp"

namespace tauflow {

template <typename T>
struct LossBreakdownT {
  TensorT<T> main, aux, complexity, diversity, flow, stdp;  // rank-0 scalars
  TensorT<T> total;                                         // on tape during training
};

// 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), batch and pixels pooled
template <typename T>
TensorT<T> dice_loss(const TensorT<T>& p, const TensorT<T>& t);

// mean of -[alpha*t*(1-p)^gamma*log(p) + (1-alpha)*(1-t)*p^gamma*log(1-p)]
// with p clipped away from {0,1} before the logs
template <typename T>
TensorT<T> focal_loss(const TensorT<T>& p, const TensorT<T>& t, double alpha, double gamma);

// half Dice + half Focal on sigmoid(logits)
template <typename T>
TensorT<T> dice_focal_loss(const TensorT<T>& logits, const TensorT<T>& target, double alpha,
                           double gamma);

// mean over every (b,g,i,j) of |forward dx| + |forward dy|; the last column
// and row contribute zero difference
template <typename T>
TensorT<T> flow_smooth_loss(const TensorT<T>& masks);

// fraction of groups carrying at least 5% of the total mask mass, averaged
// over the batch; plain value, never on tape
template <typename T>
double diversity_reward(const TensorT<T>& masks, int max_groups);

// per-image min(1, boundary_pixels / (0.05*H*W)) of a binary mask
template <typename T>
TensorT<T> complexity_target(const TensorT<T>& target);

template <typename T>
struct LossPartsT {
  TensorT<T> main;           // scalar
  TensorT<T> aux;            // scalar
  TensorT<T> score;          // [B] predicted complexity
  TensorT<T> target_score;   // [B] plain
  TensorT<T> masks;          // [B,Gmax,h,w]
  TensorT<T> stdp;           // scalar; empty tensor means disabled
  int max_groups = 5;
};

template <typename T>
LossBreakdownT<T> total_loss(const LossPartsT<T>& parts, const LossWeights& w);

}  // namespace tauflow
