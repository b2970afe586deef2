// Dataset plumbing: synthetic blob corpus, PPM/PGM ingestion, flip
// augmentation, the AdamW update, and the cosine warm-restart schedule.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/nn.hpp"
#include "core/tensor.hpp"

namespace tauflow {

struct Sample {
  Tensor image;  // [3,H,W] in [0,1]
  Tensor mask;   // [1,H,W] strictly 0/1
  std::string id;
};

// Number of blobs drawn for sample `index` of a corpus seeded with `seed`.
// Exposed so the corpus statistics can be inspected without rendering.
int synthetic_blob_count(uint64_t seed, int index);

// Soft-edged elliptical/lobed blobs on a textured background. Every sample is
// a pure function of (seed, index); rerunning with the same arguments gives
// bit-identical tensors.
std::vector<Sample> generate_synthetic(int n, uint64_t seed, int h, int w);

// --- PPM/PGM (binary, maxval 255) ---
void write_ppm(const std::string& path, const Tensor& image);
void write_pgm(const std::string& path, const Tensor& plane);

// Reads a P6 image and a P5 mask, scales the image to [0,1], binarizes the
// mask at 128, bilinear-resizes both to the target and re-thresholds the mask
// at 0.5. A dimension mismatch between the pair names both files.
Sample load_sample(const std::string& image_path, const std::string& mask_path,
                   int target_h = 224, int target_w = 224);

// Reads a P6 image alone (no mask), scaled to [0,1] and resized to the
// target. Used by single-image inference.
Tensor load_image(const std::string& path, int target_h = 224, int target_w = 224);

// --- augmentation ---
Sample flip_sample(const Sample& s, bool horizontal, bool vertical);

// Independent 0.5-probability horizontal and vertical flips, image and mask
// transformed together.
Sample augment(const Sample& s, Rng& rng);

// --- optimization ---
template <typename T>
struct AdamWT {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t steps = 0;
  std::vector<std::vector<double>> m, v;

  // Bias-corrected moment update plus decoupled decay p <- p - lr*wd*p.
  // Parameters with an empty grad are treated as zero-gradient.
  void step(ParamStoreT<T>& params) {
    if (m.empty()) {
      m.resize(params.size());
      v.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params.at(i).value.numel(), 0.0);
        v[i].assign(params.at(i).value.numel(), 0.0);
      }
    }
    if (m.size() != params.size())
      fail(ErrorCode::Shape, "optimizer state tracks a different parameter set");
    ++steps;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params.at(i);
      int64_t n = p.value.numel();
      if (static_cast<int64_t>(m[i].size()) != n)
        fail(ErrorCode::Shape, "optimizer moments do not match parameter " + p.name);
      bool has_grad = p.grad.defined();
      if (has_grad && p.grad.numel() != n)
        fail(ErrorCode::Shape, "gradient shape does not match parameter " + p.name);
      T* pv = p.value.data->data();
      const T* gv = has_grad ? p.grad.data->data() : nullptr;
      for (int64_t j = 0; j < n; ++j) {
        double g = gv ? static_cast<double>(gv[j]) : 0.0;
        m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
        v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
        double mhat = m[i][j] / bc1;
        double vhat = v[i][j] / bc2;
        double x = static_cast<double>(pv[j]);
        x -= lr * mhat / (std::sqrt(vhat) + eps);
        x -= lr * weight_decay * x;
        pv[j] = static_cast<T>(x);
      }
    }
  }
};

using AdamW = AdamWT<float>;

// Cosine annealing with warm restarts, floor at zero: cycles of length
// t0, t0*tmult, t0*tmult^2, ... and lr = 0.5*base*(1 + cos(pi*t_cur/t_len)).
double lr_at(double epoch, double base_lr, int t0, int tmult);

// Deterministic shuffled partition into five near-equal folds.
std::array<std::vector<int>, 5> five_fold_split(int n, uint64_t seed);

}  // namespace tauflow
