// Evaluation metrics over binary masks: Dice, IoU, and the 95th-percentile
// boundary distance computed in a resolution-normalized 224x224 domain with
// small-component denoising.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace tauflow {

struct BinaryMask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> fg;  // row-major, one byte per pixel, values 0/1

  static BinaryMask from_plane(const float* p, int h, int w, double threshold = 0.5);
  static BinaryMask from_plane(const double* p, int h, int w, double threshold = 0.5);
  int64_t area() const;
};

// dice = 2|P&G| / (|P|+|G|), iou = |P&G| / |P|G|; both empty -> (1,1)
std::pair<double, double> dice_iou(const BinaryMask& pred, const BinaryMask& gt);

struct Hd95Result {
  double value = 0.0;
  bool empty_mask = false;  // a side vanished after denoising; value is the sentinel
};

inline const double kHd95Sentinel = 224.0 * 1.4142135623730951;  // 224 * sqrt(2)

// Steps: scale coordinates into the 224 domain, drop 4-connected components
// under 3 pixels from both masks, extract 4-neighbor boundaries (the image
// border counts as background), then pool both directed nearest-distance sets
// and take the nearest-rank 95th percentile. keep_small skips the denoising
// (used by tests that need tiny fixtures).
Hd95Result hd95(const BinaryMask& pred, const BinaryMask& gt, bool keep_small = false);

// exposed for reuse: remove 4-connected components with area < min_area
void remove_small_components(BinaryMask& mask, int min_area);

// boundary pixels as (row, col) pairs
std::vector<std::pair<int, int>> boundary_points(const BinaryMask& mask);

}  // namespace tauflow
