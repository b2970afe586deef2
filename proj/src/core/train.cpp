#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/checkpoint.hpp"
#include "core/metrics.hpp"

namespace tauflow {

EvalReport evaluate(const TauFlowModel& model, const std::vector<Sample>& data) {
  if (data.empty()) fail(ErrorCode::InvalidArgument, "evaluate: no samples");
  EvalReport rep;
  int s = model.cfg.input_size;
  for (size_t i = 0; i < data.size(); ++i) {
    auto [img, tgt] = make_batch(data, {static_cast<int>(i)});
    CtxT<float> ctx;
    auto fr = model.forward(ctx, img);
    // sigmoid(logit) >= 0.5 exactly when the logit is nonnegative
    auto pred = BinaryMask::from_plane(fr.seg_logits.data->data(), s, s, 0.0);
    auto gt = BinaryMask::from_plane(tgt.data->data(), s, s, 0.5);
    auto [dice, iou] = dice_iou(pred, gt);
    auto hd = hd95(pred, gt);
    SampleScore score{data[i].id, dice, iou, hd.value, hd.empty_mask};
    rep.dice += dice;
    rep.iou += iou;
    rep.hd95 += hd.value;
    rep.per_sample.push_back(std::move(score));
  }
  double n = static_cast<double>(data.size());
  rep.dice /= n;
  rep.iou /= n;
  rep.hd95 /= n;
  return rep;
}

namespace {

struct TermSums {
  double main = 0, aux = 0, complexity = 0, diversity = 0, flow = 0, stdp = 0, total = 0;
  int steps = 0;

  void add(const LossBreakdownT<float>& lb) {
    main += lb.main.scalar();
    aux += lb.aux.scalar();
    complexity += lb.complexity.scalar();
    diversity += lb.diversity.scalar();
    flow += lb.flow.scalar();
    stdp += lb.stdp.scalar();
    total += lb.total.scalar();
    ++steps;
  }
};

}  // namespace

void ensure_finite_terms(const LossBreakdownT<float>& lb, int epoch, int step) {
  const std::pair<const char*, const TensorT<float>*> terms[] = {
      {"main", &lb.main},     {"aux", &lb.aux},   {"complexity", &lb.complexity},
      {"diversity", &lb.diversity}, {"flow", &lb.flow}, {"stdp", &lb.stdp},
      {"total", &lb.total},
  };
  for (auto& [name, t] : terms)
    if (!std::isfinite(t->scalar()))
      fail(ErrorCode::Numeric, std::string("loss term '") + name +
                                   "' became non-finite at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step));
}

TrainOutcome train_model(TauFlowModel& model, const std::vector<Sample>& data,
                         const std::string& ckpt_path, std::ostream* echo) {
  const auto& tc = model.cfg.train;
  if (data.empty()) fail(ErrorCode::InvalidArgument, "train: no samples");

  // deterministic holdout
  int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(tc.seed, 100);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[split_rng.next_below(static_cast<uint64_t>(i) + 1)]);
  int val_n = static_cast<int>(n * tc.val_fraction);
  std::vector<Sample> val_set, train_set;
  for (int i = 0; i < n; ++i)
    (i < val_n ? val_set : train_set).push_back(data[order[i]]);
  if (train_set.empty()) fail(ErrorCode::InvalidArgument, "train: holdout consumed every sample");
  const std::vector<Sample>& score_set = val_set.empty() ? train_set : val_set;

  Rng shuffle_rng(tc.seed, 101);
  Rng aug_rng(tc.seed, 102);
  AdamW opt;
  opt.lr = tc.lr;
  opt.weight_decay = tc.weight_decay;

  // gradient accumulation buffers, one per parameter
  std::vector<std::vector<float>> accum(model.params.size());
  int micro = 0;
  auto flush_step = [&]() {
    if (micro == 0) return;
    for (size_t i = 0; i < model.params.size(); ++i) {
      auto& p = model.params.at(i);
      if (!p.grad.defined()) p.grad = Tensor::zeros(p.value.shape);
      float* g = p.grad.data->data();
      for (size_t j = 0; j < accum[i].size(); ++j)
        g[j] = accum[i][j] / static_cast<float>(micro);
      accum[i].clear();
    }
    opt.step(model.params);
    micro = 0;
  };

  TrainOutcome out;
  double best = -1.0;
  int stale = 0;
  std::vector<int> train_order(train_set.size());
  std::iota(train_order.begin(), train_order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    opt.lr = lr_at(epoch - 1, tc.lr, tc.t0, tc.tmult);
    for (int i = static_cast<int>(train_order.size()) - 1; i > 0; --i)
      std::swap(train_order[i],
                train_order[shuffle_rng.next_below(static_cast<uint64_t>(i) + 1)]);

    TermSums sums;
    int step = 0;
    for (size_t start = 0; start < train_order.size(); start += tc.batch) {
      size_t stop = std::min(train_order.size(), start + tc.batch);
      std::vector<Sample> batch_samples;
      std::vector<int> batch_idx;
      for (size_t k = start; k < stop; ++k) {
        const Sample& s = train_set[train_order[k]];
        bool flip_h = aug_rng.next_double() < tc.flip_prob;
        bool flip_v = aug_rng.next_double() < tc.flip_prob;
        batch_samples.push_back(flip_h || flip_v ? flip_sample(s, flip_h, flip_v) : s);
        batch_idx.push_back(static_cast<int>(batch_idx.size()));
      }
      auto [img, tgt] = make_batch(batch_samples, batch_idx);

      TapeT<float> tape;
      CtxT<float> ctx;
      ctx.tape = &tape;
      ctx.training = true;
      auto fr = model.forward(ctx, img, &tgt);
      auto lb = model.compute_loss(ctx, fr, tgt);
      ensure_finite_terms(lb, epoch, step);
      sums.add(lb);
      if (out.first_step_losses.size() < 5)
        out.first_step_losses.push_back(lb.total.scalar());

      auto grads = tape.backward(lb.total);
      ctx.collect_grads(grads);
      for (size_t i = 0; i < model.params.size(); ++i) {
        auto& p = model.params.at(i);
        if (accum[i].empty()) accum[i].assign(p.value.numel(), 0.0f);
        if (p.grad.defined()) {
          const float* g = p.grad.data->data();
          for (size_t j = 0; j < accum[i].size(); ++j) accum[i][j] += g[j];
        }
      }
      ++micro;
      ++step;
      if (micro == tc.accum_steps) flush_step();
    }
    flush_step();  // leftover micro-batches still count

    auto val = evaluate(model, score_set);
    double inv = sums.steps > 0 ? 1.0 / sums.steps : 0.0;
    out.final_main_loss = sums.main * inv;

    std::string line = std::to_string(epoch);
    for (double v : {sums.total * inv, sums.main * inv, sums.aux * inv, sums.complexity * inv,
                     sums.diversity * inv, sums.flow * inv, sums.stdp * inv, sums.total * inv,
                     val.dice, val.iou, val.hd95, opt.lr})
      line += "\t" + format_double(v, 6);
    line += "\n";
    out.log += line;
    if (echo) (*echo) << line << std::flush;
    out.epochs_run = epoch;

    if (val.dice > best) {
      best = val.dice;
      out.best_val_dice = best;
      out.best_epoch = epoch;
      stale = 0;
      if (!ckpt_path.empty()) save_checkpoint(ckpt_path, model.params, model.cfg);
    } else {
      ++stale;
    }

    if (tc.target_train_dice > 0.0) {
      double train_dice = val_set.empty() ? val.dice : evaluate(model, train_set).dice;
      out.final_train_dice = train_dice;
      if (train_dice >= tc.target_train_dice) break;
    }
    if (stale >= tc.patience) break;
  }
  return out;
}

}  // namespace tauflow
