#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/common.hpp"

namespace tauflow {

BinaryMask BinaryMask::from_plane(const float* p, int h, int w, double threshold) {
  BinaryMask m;
  m.h = h;
  m.w = w;
  m.fg.resize(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < m.fg.size(); ++i) m.fg[i] = p[i] >= threshold ? 1 : 0;
  return m;
}

BinaryMask BinaryMask::from_plane(const double* p, int h, int w, double threshold) {
  BinaryMask m;
  m.h = h;
  m.w = w;
  m.fg.resize(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < m.fg.size(); ++i) m.fg[i] = p[i] >= threshold ? 1 : 0;
  return m;
}

int64_t BinaryMask::area() const {
  int64_t n = 0;
  for (uint8_t v : fg) n += v;
  return n;
}

std::pair<double, double> dice_iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    fail(ErrorCode::Shape, "dice_iou: mask resolutions differ (" + std::to_string(pred.h) + "x" +
                               std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                               std::to_string(gt.w) + ")");
  int64_t inter = 0, pa = 0, ga = 0;
  for (size_t i = 0; i < pred.fg.size(); ++i) {
    pa += pred.fg[i];
    ga += gt.fg[i];
    inter += pred.fg[i] & gt.fg[i];
  }
  if (pa + ga == 0) return {1.0, 1.0};
  double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(pa + ga);
  int64_t uni = pa + ga - inter;
  double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return {dice, iou};
}

void remove_small_components(BinaryMask& mask, int min_area) {
  const int h = mask.h, w = mask.w;
  std::vector<uint8_t> seen(mask.fg.size(), 0);
  std::vector<int> stack, comp;
  for (int start = 0; start < h * w; ++start) {
    if (!mask.fg[start] || seen[start]) continue;
    stack.assign(1, start);
    seen[start] = 1;
    comp.clear();
    while (!stack.empty()) {
      int p = stack.back();
      stack.pop_back();
      comp.push_back(p);
      int r = p / w, c = p % w;
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
        int q = nr[k] * w + nc[k];
        if (mask.fg[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
    if (static_cast<int>(comp.size()) < min_area)
      for (int p : comp) mask.fg[p] = 0;
  }
}

std::vector<std::pair<int, int>> boundary_points(const BinaryMask& mask) {
  std::vector<std::pair<int, int>> pts;
  const int h = mask.h, w = mask.w;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask.fg[r * w + c]) continue;
      bool edge = r == 0 || r == h - 1 || c == 0 || c == w - 1;
      if (!edge) {
        edge = !mask.fg[(r - 1) * w + c] || !mask.fg[(r + 1) * w + c] ||
               !mask.fg[r * w + c - 1] || !mask.fg[r * w + c + 1];
      }
      if (edge) pts.emplace_back(r, c);
    }
  return pts;
}

namespace {

// directed nearest distances from each point of a to the set b, in scaled coordinates
void directed_distances(const std::vector<std::pair<int, int>>& a,
                        const std::vector<std::pair<int, int>>& b, double sy, double sx,
                        std::vector<double>& out) {
  for (const auto& p : a) {
    double py = p.first * sy, px = p.second * sx;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      double dy = py - q.first * sy;
      double dx = px - q.second * sx;
      double d2 = dy * dy + dx * dx;
      if (d2 < best) best = d2;
    }
    out.push_back(std::sqrt(best));
  }
}

}  // namespace

Hd95Result hd95(const BinaryMask& pred, const BinaryMask& gt, bool keep_small) {
  if (pred.h != gt.h || pred.w != gt.w)
    fail(ErrorCode::Shape, "hd95: mask resolutions differ (" + std::to_string(pred.h) + "x" +
                               std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                               std::to_string(gt.w) + ")");
  BinaryMask p = pred, g = gt;
  if (!keep_small) {
    remove_small_components(p, 3);
    remove_small_components(g, 3);
  }
  if (p.area() == 0 || g.area() == 0) return {kHd95Sentinel, true};

  auto bp = boundary_points(p);
  auto bg = boundary_points(g);
  double sy = 224.0 / p.h, sx = 224.0 / p.w;
  std::vector<double> d;
  d.reserve(bp.size() + bg.size());
  directed_distances(bp, bg, sy, sx, d);
  directed_distances(bg, bp, sy, sx, d);
  // nearest-rank percentile: 1-based index ceil(0.95 * n) of the sorted multiset
  size_t n = d.size();
  size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(n)));
  if (rank == 0) rank = 1;
  std::nth_element(d.begin(), d.begin() + (rank - 1), d.end());
  return {d[rank - 1], false};
}

}  // namespace tauflow
