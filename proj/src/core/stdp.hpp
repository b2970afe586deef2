// Differentiable spike-event surrogate and the causal-consistency loss.
// Training-only: the forward pass never depends on this module, so disabling
// it changes nothing at inference.
//
// Events are soft threshold crossings of standardized activations. The loss
// rewards pre-then-post co-activation across one time step and penalizes the
// reverse order at strength beta; weights come from the normalized per-group
// time constants, so slow regions (large tau) carry more of the penalty.
#pragma once

#include <vector>

#include "core/cell.hpp"
#include "core/config.hpp"

namespace tauflow {

template <typename T>
struct EventMapsT {
  TensorT<T> e_pre;   // [B,G,T,h,w], strictly inside (0,1)
  TensorT<T> e_post;  // same shape; entry t is the state after step t
};

template <typename T>
struct StdpRegularizerT {
  StdpSettings cfg;

  explicit StdpRegularizerT(const StdpSettings& c) : cfg(c) {}

  // sigma(kappa * (x_hat - theta)) where x_hat is the channel mean of the
  // spatially standardized map; [B,C,h,w] -> [B,1,h,w]
  TensorT<T> pixel_events(const TensorT<T>& x, double theta) const;

  EventMapsT<T> event_approx(const CellTraceT<T>& trace) const;

  // tau-weighted causal-consistency loss over active groups; scalar output
  TensorT<T> loss(const EventMapsT<T>& events, const std::vector<TensorT<T>>& taus) const;

  // teacher-forced variant: e_post blended with the target mask before scoring
  TensorT<T> supervised_loss(const EventMapsT<T>& events, const std::vector<TensorT<T>>& taus,
                             const TensorT<T>& target_feat) const;

private:
  TensorT<T> combine(const TensorT<T>& e_pre, const TensorT<T>& e_post,
                     const std::vector<TensorT<T>>& taus) const;
};

}  // namespace tauflow
