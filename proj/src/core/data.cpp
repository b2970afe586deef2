#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace tauflow {

namespace {

constexpr double kTwoPi = 6.283185307179586;

int blob_count_draw(Rng& rng) {
  return 2 + static_cast<int>(rng.next_below(5));
}

// hash-based value noise so texture does not consume sequential draws
float hash01(uint64_t seed, uint64_t index, uint64_t key) {
  uint64_t x = splitmix64(seed ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + key));
  return static_cast<float>((x >> 40) * 0x1.0p-24);
}

struct Blob {
  float cy, cx, ry, rx, cosa, sina;
  bool lobed;
  float lobes, amp, phase;
  float color[3];
};

}  // namespace

int synthetic_blob_count(uint64_t seed, int index) {
  Rng rng(seed, static_cast<uint64_t>(index));
  return blob_count_draw(rng);
}

std::vector<Sample> generate_synthetic(int n, uint64_t seed, int h, int w) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "generate_synthetic: n must be >= 1");
  if (h < 8 || w < 8) fail(ErrorCode::InvalidArgument, "generate_synthetic: size too small");
  std::vector<Sample> out;
  out.reserve(n);
  const float mindim = static_cast<float>(std::min(h, w));
  for (int index = 0; index < n; ++index) {
    Rng rng(seed, static_cast<uint64_t>(index));
    int nb = blob_count_draw(rng);
    std::vector<Blob> blobs(nb);
    for (auto& b : blobs) {
      b.cy = static_cast<float>(rng.uniform(0.18, 0.82)) * h;
      b.cx = static_cast<float>(rng.uniform(0.18, 0.82)) * w;
      b.ry = static_cast<float>(rng.uniform(0.07, 0.20)) * mindim;
      b.rx = static_cast<float>(rng.uniform(0.07, 0.20)) * mindim;
      double ang = rng.uniform(0.0, kTwoPi / 2.0);
      b.cosa = static_cast<float>(std::cos(ang));
      b.sina = static_cast<float>(std::sin(ang));
      b.lobed = rng.next_below(2) == 1;
      b.lobes = static_cast<float>(3 + rng.next_below(3));
      b.amp = static_cast<float>(rng.uniform(0.08, 0.22));
      b.phase = static_cast<float>(rng.uniform(0.0, kTwoPi));
      for (float& c : b.color) c = static_cast<float>(rng.uniform(0.55, 0.95));
    }
    float bg_phase_y = static_cast<float>(rng.uniform(0.0, kTwoPi));
    float bg_phase_x = static_cast<float>(rng.uniform(0.0, kTwoPi));
    float bg_freq = static_cast<float>(rng.uniform(4.0, 9.0));

    Sample s;
    s.image = Tensor::zeros({3, h, w});
    s.mask = Tensor::zeros({1, h, w});
    s.id = "synth-" + std::to_string(seed) + "-" + std::to_string(index);
    float* img = s.image.data->data();
    float* msk = s.mask.data->data();
    const float edge = 0.12f;  // soft rim width in normalized radius units
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float fy = (y + 0.5f) / h, fx = (x + 0.5f) / w;
        float wave = std::sin(bg_freq * fy * 6.2831853f + bg_phase_y) *
                     std::sin(bg_freq * fx * 6.2831853f + bg_phase_x);
        float grain = hash01(seed, static_cast<uint64_t>(index),
                             static_cast<uint64_t>(y) * 131071ULL + x) -
                      0.5f;
        bool inside_any = false;
        float px[3];
        for (int c = 0; c < 3; ++c)
          px[c] = 0.30f + 0.06f * wave + 0.05f * grain + 0.015f * c;
        for (const auto& b : blobs) {
          float dy = y + 0.5f - b.cy, dx = x + 0.5f - b.cx;
          float u = b.cosa * dx + b.sina * dy;
          float v = -b.sina * dx + b.cosa * dy;
          float un = u / b.rx, vn = v / b.ry;
          float d = std::sqrt(un * un + vn * vn);
          float boundary = 1.0f;
          if (b.lobed)
            boundary += b.amp * std::cos(b.lobes * std::atan2(vn, un) + b.phase);
          float dn = d / boundary;
          if (dn <= 1.0f) inside_any = true;
          float t = std::clamp((1.0f - dn) / edge + 0.5f, 0.0f, 1.0f);
          float soft = t * t * (3.0f - 2.0f * t);
          if (soft > 0.0f)
            for (int c = 0; c < 3; ++c) px[c] = px[c] * (1.0f - soft) + b.color[c] * soft;
        }
        for (int c = 0; c < 3; ++c)
          img[(static_cast<int64_t>(c) * h + y) * w + x] = std::clamp(px[c], 0.0f, 1.0f);
        msk[static_cast<int64_t>(y) * w + x] = inside_any ? 1.0f : 0.0f;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void check_rank3(const Tensor& t, int channels, const char* what) {
  if (t.shape.size() != 3 || t.shape[0] != channels)
    fail(ErrorCode::Shape, std::string(what) + ": expected [" + std::to_string(channels) +
                               ",H,W], got " + shape_str(t.shape));
}

uint8_t to_byte(float v) {
  float s = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return static_cast<uint8_t>(std::lround(s));
}

void write_pnm(const std::string& path, const char* magic, const Tensor& t, int channels) {
  int h = static_cast<int>(t.shape[1]), w = static_cast<int>(t.shape[2]);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open for writing: " + path);
  f << magic << "\n" << w << " " << h << "\n255\n";
  const float* d = t.data->data();
  std::vector<uint8_t> row(static_cast<size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        row[static_cast<size_t>(x) * channels + c] =
            to_byte(d[(static_cast<int64_t>(c) * h + y) * w + x]);
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!f) fail(ErrorCode::Io, "short write: " + path);
}

struct PnmImage {
  int w = 0, h = 0, channels = 0;
  std::vector<uint8_t> bytes;  // interleaved
};

PnmImage read_pnm(const std::string& path, const char* expect_magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open: " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = f.get()) != EOF) {
      if (ch == '#') {  // comment to end of line
        while ((ch = f.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) fail(ErrorCode::Format, "truncated header: " + path);
    return tok;
  };
  std::string magic = next_token();
  if (magic != expect_magic)
    fail(ErrorCode::Format, path + ": expected " + expect_magic + " magic, got \"" + magic + "\"");
  PnmImage img;
  img.channels = magic == "P6" ? 3 : 1;
  try {
    img.w = std::stoi(next_token());
    img.h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (maxval != 255) fail(ErrorCode::Format, path + ": only maxval 255 is supported");
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::Format, "malformed header field: " + path);
  }
  if (img.w <= 0 || img.h <= 0) fail(ErrorCode::Format, "non-positive dimensions: " + path);
  size_t need = static_cast<size_t>(img.w) * img.h * img.channels;
  img.bytes.resize(need);
  f.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(need));
  if (static_cast<size_t>(f.gcount()) != need)
    fail(ErrorCode::Format, "truncated pixel data: " + path);
  return img;
}

Tensor resize_chw(const Tensor& t, int th, int tw) {
  int c = static_cast<int>(t.shape[0]);
  int h = static_cast<int>(t.shape[1]), w = static_cast<int>(t.shape[2]);
  if (h == th && w == tw) return t;
  Tensor four = reshape(t, {1, c, h, w});
  return reshape(bilinear_resize(four, th, tw), {c, th, tw});
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  check_rank3(image, 3, "write_ppm");
  write_pnm(path, "P6", image, 3);
}

void write_pgm(const std::string& path, const Tensor& plane) {
  check_rank3(plane, 1, "write_pgm");
  write_pnm(path, "P5", plane, 1);
}

Sample load_sample(const std::string& image_path, const std::string& mask_path, int target_h,
                   int target_w) {
  PnmImage im = read_pnm(image_path, "P6");
  PnmImage mk = read_pnm(mask_path, "P5");
  if (im.w != mk.w || im.h != mk.h)
    fail(ErrorCode::Shape, "image/mask dimensions differ: " + image_path + " is " +
                               std::to_string(im.w) + "x" + std::to_string(im.h) + ", " +
                               mask_path + " is " + std::to_string(mk.w) + "x" +
                               std::to_string(mk.h));
  Sample s;
  s.image = Tensor::zeros({3, im.h, im.w});
  s.mask = Tensor::zeros({1, mk.h, mk.w});
  float* iv = s.image.data->data();
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x)
      for (int c = 0; c < 3; ++c)
        iv[(static_cast<int64_t>(c) * im.h + y) * im.w + x] =
            im.bytes[(static_cast<size_t>(y) * im.w + x) * 3 + c] / 255.0f;
  float* mv = s.mask.data->data();
  for (size_t i = 0; i < mk.bytes.size(); ++i) mv[i] = mk.bytes[i] >= 128 ? 1.0f : 0.0f;

  s.image = resize_chw(s.image, target_h, target_w);
  Tensor mr = resize_chw(s.mask, target_h, target_w);
  float* mrd = mr.data->data();
  for (int64_t i = 0; i < mr.numel(); ++i) mrd[i] = mrd[i] >= 0.5f ? 1.0f : 0.0f;
  s.mask = mr;
  s.id = image_path;
  return s;
}

Tensor load_image(const std::string& path, int target_h, int target_w) {
  PnmImage im = read_pnm(path, "P6");
  Tensor image = Tensor::zeros({3, im.h, im.w});
  float* iv = image.data->data();
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x)
      for (int c = 0; c < 3; ++c)
        iv[(static_cast<int64_t>(c) * im.h + y) * im.w + x] =
            im.bytes[(static_cast<size_t>(y) * im.w + x) * 3 + c] / 255.0f;
  return resize_chw(image, target_h, target_w);
}

namespace {

Tensor flip_chw(const Tensor& t, bool horizontal, bool vertical) {
  int c = static_cast<int>(t.shape[0]);
  int h = static_cast<int>(t.shape[1]), w = static_cast<int>(t.shape[2]);
  Tensor out = Tensor::zeros(t.shape);
  const float* src = t.data->data();
  float* dst = out.data->data();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y) {
      int sy = vertical ? h - 1 - y : y;
      for (int x = 0; x < w; ++x) {
        int sx = horizontal ? w - 1 - x : x;
        dst[(static_cast<int64_t>(ci) * h + y) * w + x] =
            src[(static_cast<int64_t>(ci) * h + sy) * w + sx];
      }
    }
  return out;
}

}  // namespace

Sample flip_sample(const Sample& s, bool horizontal, bool vertical) {
  Sample out;
  out.image = flip_chw(s.image, horizontal, vertical);
  out.mask = flip_chw(s.mask, horizontal, vertical);
  out.id = s.id;
  return out;
}

Sample augment(const Sample& s, Rng& rng) {
  bool horizontal = rng.next_double() < 0.5;
  bool vertical = rng.next_double() < 0.5;
  if (!horizontal && !vertical) return s;
  return flip_sample(s, horizontal, vertical);
}

double lr_at(double epoch, double base_lr, int t0, int tmult) {
  if (t0 < 1 || tmult < 1) fail(ErrorCode::Config, "lr_at: t0 and tmult must be >= 1");
  if (epoch < 0) epoch = 0;
  double start = 0.0, len = t0;
  while (epoch >= start + len) {
    start += len;
    len *= tmult;
  }
  double tcur = epoch - start;
  return 0.5 * base_lr * (1.0 + std::cos(3.141592653589793 * tcur / len));
}

std::array<std::vector<int>, 5> five_fold_split(int n, uint64_t seed) {
  if (n < 5) fail(ErrorCode::InvalidArgument, "five_fold_split: need at least 5 samples");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0xf01d);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.next_below(static_cast<uint64_t>(i) + 1)]);
  std::array<std::vector<int>, 5> folds;
  for (int i = 0; i < n; ++i) folds[i % 5].push_back(order[i]);
  return folds;
}

}  // namespace tauflow
