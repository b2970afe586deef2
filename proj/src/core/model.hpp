// Full network assembly: encoder pyramid -> temporal bridge -> adaptive
// grouping -> group gating -> per-group LTC evolution -> decoder heads,
// plus the loss wiring used by the trainer.
#pragma once

#include <utility>
#include <vector>

#include "core/attention.hpp"
#include "core/backbone.hpp"
#include "core/cell.hpp"
#include "core/config.hpp"
#include "core/data.hpp"
#include "core/grouping.hpp"
#include "core/interface.hpp"
#include "core/losses.hpp"
#include "core/stdp.hpp"

namespace tauflow {

template <typename T>
struct ForwardResultT {
  TensorT<T> seg_logits;  // [B,1,S,S]
  TensorT<T> aux_logits;  // [B,1,S/2,S/2]
  TensorT<T> masks;       // [B,Gmax,S/4,S/4]; inactive groups exactly zero
  TensorT<T> tau;         // [B,hidden,S/4,S/4]
  TensorT<T> score;       // [B] complexity estimate
  TensorT<T> attn;        // [B,Gmax]
  TensorT<T> ltc;         // [B,Cb+emb,S/4,S/4] cell input before grouping
  GroupPlanT<T> plan;
  std::vector<double> rewards;  // refinement controller trajectory
  CellTraceT<T> trace;
};

template <typename T>
struct TauFlowModelT {
  ModelConfig cfg;
  ParamStoreT<T> params;
  BackboneT<T> backbone;
  FlowInterfaceT<T> bridge;
  GroupingT<T> grouping;
  TauAttentionT<T> attention;
  ConvLtcCellT<T> cell;

  static TauFlowModelT build(const ModelConfig& cfg, uint64_t seed);

  // image: plain [B,3,S,S]. The optional target steers mask refinement and is
  // only consulted during training.
  ForwardResultT<T> forward(CtxT<T>& ctx, const TensorT<T>& image,
                            const TensorT<T>* target = nullptr) const;

  // target: plain [B,1,S,S] binary. Builds every objective term, including the
  // event-timing regularizer when it is enabled and a tape is active.
  LossBreakdownT<T> compute_loss(CtxT<T>& ctx, const ForwardResultT<T>& fr,
                                 const TensorT<T>& target) const;

  // target mask resized to the grouping grid and re-binarized; plain tensor
  TensorT<T> target_at_feat(const TensorT<T>& target) const;
};

using TauFlowModel = TauFlowModelT<float>;

// Stacks the selected samples into plain [B,3,S,S] / [B,1,S,S] tensors.
std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples,
                                     const std::vector<int>& indices);

}  // namespace tauflow
