// Training and evaluation drivers: seeded shuffling/augmentation, gradient
// accumulation, the AdamW/cosine schedule loop, patience-based stopping,
// best-checkpoint tracking, and the per-epoch metric log.
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/model.hpp"

namespace tauflow {

struct SampleScore {
  std::string id;
  double dice = 0.0;
  double iou = 0.0;
  double hd95 = 0.0;
  bool hd95_empty = false;
};

struct EvalReport {
  double dice = 0.0;  // means over samples
  double iou = 0.0;
  double hd95 = 0.0;
  std::vector<SampleScore> per_sample;
};

// Inference pass over every sample: sigmoid(seg logits) thresholded at 0.5,
// scored against the ground truth with the full metric pipeline.
EvalReport evaluate(const TauFlowModel& model, const std::vector<Sample>& data);

struct TrainOutcome {
  double best_val_dice = 0.0;
  int best_epoch = 0;   // 1-based, matches the log
  int epochs_run = 0;
  double final_train_dice = 0.0;  // filled when target_train_dice > 0
  double final_main_loss = 0.0;   // epoch mean of the main term, last epoch
  std::vector<double> first_step_losses;  // first five optimizer steps
  std::string log;  // tab-separated, one line per epoch
};

// Guard run at every step boundary: throws a Numeric error naming the first
// non-finite term, scanning in the order main, aux, complexity, diversity,
// flow, stdp, total.
void ensure_finite_terms(const LossBreakdownT<float>& lb, int epoch, int step);

// Runs model.cfg.train. Holds out val_fraction of the samples (the training
// set itself is scored when the holdout is empty), saves the best-validation
// parameters to ckpt_path (empty path skips saving), and stops on patience,
// epoch budget, or the target_train_dice shortcut. Live log lines go to
// `echo` when given. A non-finite loss aborts, naming the first bad term.
TrainOutcome train_model(TauFlowModel& model, const std::vector<Sample>& data,
                         const std::string& ckpt_path, std::ostream* echo = nullptr);

}  // namespace tauflow
