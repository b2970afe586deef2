// C ABI surface: thin translation layer over the core library. All exceptions
// stop here and become status codes plus a thread-local message.
#include "tauflow/tauflow.h"

#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "core/accounting.hpp"
#include "core/checkpoint.hpp"
#include "core/data.hpp"
#include "core/gradcheck.hpp"
#include "core/model.hpp"
#include "core/train.hpp"
#include "json.hpp"

using nlohmann::json;

struct tauflow_model {
  tauflow::TauFlowModel impl;
};

struct tauflow_dataset {
  std::vector<tauflow::Sample> samples;
};

namespace {

thread_local std::string g_last_error;

tauflow_status status_of(tauflow::ErrorCode c) {
  using EC = tauflow::ErrorCode;
  switch (c) {
    case EC::InvalidArgument: return TAUFLOW_INVALID_ARGUMENT;
    case EC::Shape: return TAUFLOW_SHAPE;
    case EC::Numeric: return TAUFLOW_NUMERIC;
    case EC::Io: return TAUFLOW_IO;
    case EC::Format: return TAUFLOW_FORMAT;
    case EC::Config: return TAUFLOW_CONFIG;
    case EC::Internal: return TAUFLOW_INTERNAL;
  }
  return TAUFLOW_INTERNAL;
}

template <typename Fn>
tauflow_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TAUFLOW_OK;
  } catch (const tauflow::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TAUFLOW_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return TAUFLOW_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) tauflow::fail(tauflow::ErrorCode::InvalidArgument, what);
}

}  // namespace

extern "C" {

const char* tauflow_version(void) { return "1.0.0"; }

const char* tauflow_last_error(void) { return g_last_error.c_str(); }

void tauflow_string_free(char* s) { std::free(s); }

tauflow_status tauflow_model_create(const char* config_json, uint64_t seed,
                                    tauflow_model** out) {
  return guarded([&] {
    require(out != nullptr, "model_create: out handle is null");
    tauflow::ModelConfig cfg =
        config_json && *config_json ? tauflow::config_from_json_text(config_json)
                                    : tauflow::ModelConfig{};
    cfg.validate();
    auto m = std::make_unique<tauflow_model>();
    m->impl = tauflow::TauFlowModel::build(cfg, seed);
    *out = m.release();
  });
}

tauflow_status tauflow_model_open(const char* ckpt_path, tauflow_model** out) {
  return guarded([&] {
    require(out != nullptr, "model_open: out handle is null");
    require(ckpt_path != nullptr, "model_open: path is null");
    auto cfg = tauflow::peek_checkpoint_config(ckpt_path);
    auto m = std::make_unique<tauflow_model>();
    m->impl = tauflow::TauFlowModel::build(cfg, 0);
    tauflow::load_checkpoint(ckpt_path, m->impl.params);
    *out = m.release();
  });
}

tauflow_status tauflow_model_save(tauflow_model* m, const char* ckpt_path) {
  return guarded([&] {
    require(m != nullptr, "model_save: model handle is null");
    require(ckpt_path != nullptr, "model_save: path is null");
    tauflow::save_checkpoint(ckpt_path, m->impl.params, m->impl.cfg);
  });
}

tauflow_status tauflow_model_config(tauflow_model* m, char** json_out) {
  return guarded([&] {
    require(m != nullptr, "model_config: model handle is null");
    require(json_out != nullptr, "model_config: out pointer is null");
    *json_out = dup_string(tauflow::config_to_json_text(m->impl.cfg));
  });
}

void tauflow_model_free(tauflow_model* m) { delete m; }

tauflow_status tauflow_dataset_synth(int n, uint64_t seed, int height, int width,
                                     tauflow_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "dataset_synth: out handle is null");
    auto d = std::make_unique<tauflow_dataset>();
    d->samples = tauflow::generate_synthetic(n, seed, height, width);
    *out = d.release();
  });
}

tauflow_status tauflow_dataset_open_dir(const char* dir, int target_size,
                                        tauflow_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "dataset_open_dir: out handle is null");
    require(dir != nullptr, "dataset_open_dir: directory is null");
    require(target_size > 0, "dataset_open_dir: target size must be positive");
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
      tauflow::fail(tauflow::ErrorCode::Io, std::string("not a directory: ") + dir);
    std::map<std::string, fs::path> images;  // sorted by stem for determinism
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".ppm") images[entry.path().stem().string()] = entry.path();
    }
    if (images.empty())
      tauflow::fail(tauflow::ErrorCode::Io, std::string("no .ppm images in ") + dir);
    auto d = std::make_unique<tauflow_dataset>();
    for (const auto& [stem, ppm] : images) {
      fs::path pgm = ppm;
      pgm.replace_extension(".pgm");
      if (!fs::exists(pgm))
        tauflow::fail(tauflow::ErrorCode::Io, "missing mask " + pgm.string() + " for " +
                                                  ppm.string());
      auto s = tauflow::load_sample(ppm.string(), pgm.string(), target_size, target_size);
      s.id = stem;
      d->samples.push_back(std::move(s));
    }
    *out = d.release();
  });
}

tauflow_status tauflow_dataset_write_dir(const tauflow_dataset* d, const char* dir) {
  return guarded([&] {
    require(d != nullptr, "dataset_write_dir: dataset handle is null");
    require(dir != nullptr, "dataset_write_dir: directory is null");
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (const auto& s : d->samples) {
      fs::path base = fs::path(dir) / s.id;
      tauflow::write_ppm(base.string() + ".ppm", s.image);
      tauflow::write_pgm(base.string() + ".pgm", s.mask);
    }
  });
}

int tauflow_dataset_size(const tauflow_dataset* d) {
  return d ? static_cast<int>(d->samples.size()) : -1;
}

void tauflow_dataset_free(tauflow_dataset* d) { delete d; }

tauflow_status tauflow_train(tauflow_model* m, const tauflow_dataset* d,
                             const char* ckpt_out, int echo_log, char** summary_json_out) {
  return guarded([&] {
    require(m != nullptr, "train: model handle is null");
    require(d != nullptr, "train: dataset handle is null");
    auto outcome = tauflow::train_model(m->impl, d->samples, ckpt_out ? ckpt_out : "",
                                        echo_log ? &std::cout : nullptr);
    if (summary_json_out) {
      json j{{"best_val_dice", outcome.best_val_dice},
             {"best_epoch", outcome.best_epoch},
             {"epochs_run", outcome.epochs_run},
             {"final_train_dice", outcome.final_train_dice},
             {"final_main_loss", outcome.final_main_loss},
             {"first_step_losses", outcome.first_step_losses},
             {"log", outcome.log}};
      *summary_json_out = dup_string(j.dump(2));
    }
  });
}

tauflow_status tauflow_evaluate(tauflow_model* m, const tauflow_dataset* d,
                                char** report_json_out) {
  return guarded([&] {
    require(m != nullptr, "evaluate: model handle is null");
    require(d != nullptr, "evaluate: dataset handle is null");
    require(report_json_out != nullptr, "evaluate: out pointer is null");
    auto rep = tauflow::evaluate(m->impl, d->samples);
    json per = json::array();
    for (const auto& s : rep.per_sample) {
      per.push_back({{"id", s.id},
                     {"dice", s.dice},
                     {"iou", s.iou},
                     {"hd95", s.hd95},
                     {"hd95_empty", s.hd95_empty}});
    }
    json j{{"dice", rep.dice}, {"iou", rep.iou}, {"hd95", rep.hd95}, {"per_sample", per}};
    *report_json_out = dup_string(j.dump(2));
  });
}

tauflow_status tauflow_infer_file(tauflow_model* m, const char* image_path,
                                  const char* mask_out_path, char** report_json_out) {
  return guarded([&] {
    require(m != nullptr, "infer: model handle is null");
    require(image_path != nullptr, "infer: image path is null");
    require(mask_out_path != nullptr, "infer: output path is null");
    const int s = m->impl.cfg.input_size;
    tauflow::Tensor image = tauflow::load_image(image_path, s, s);
    tauflow::Tensor batch = tauflow::Tensor::zeros({1, 3, s, s});
    std::copy(image.data->begin(), image.data->end(), batch.data->begin());
    tauflow::CtxT<float> ctx;
    auto fr = m->impl.forward(ctx, batch);
    tauflow::Tensor mask = tauflow::Tensor::zeros({1, s, s});
    const float* lp = fr.seg_logits.ptr();
    float* mp = mask.data->data();
    for (int64_t i = 0; i < mask.numel(); ++i) mp[i] = lp[i] >= 0.0f ? 1.0f : 0.0f;
    tauflow::write_pgm(mask_out_path, mask);
    if (report_json_out) {
      json attn = json::array();
      const float* ap = fr.attn.ptr();
      for (int g = 0; g < fr.attn.dim(1); ++g) attn.push_back(ap[g]);
      json j{{"groups", fr.plan.per_image.at(0)},
             {"score", (*fr.score.data)[0]},
             {"attention", attn}};
      *report_json_out = dup_string(j.dump(2));
    }
  });
}

tauflow_status tauflow_cost_table(const char* config_json, int groups, char** table_out) {
  return guarded([&] {
    require(table_out != nullptr, "cost_table: out pointer is null");
    tauflow::ModelConfig cfg =
        config_json && *config_json ? tauflow::config_from_json_text(config_json)
                                    : tauflow::ModelConfig{};
    cfg.validate();
    if (groups < 0 || groups > cfg.max_groups)
      tauflow::fail(tauflow::ErrorCode::InvalidArgument,
                    "cost_table: groups must be in 1.." + std::to_string(cfg.max_groups));
    *table_out = dup_string(tauflow::cost_table(cfg, groups));
  });
}

tauflow_status tauflow_gradcheck(const char* module, double eps, char** report_out,
                                 double* max_err_out) {
  return guarded([&] {
    auto reports = tauflow::run_gradcheck(module ? module : "", eps);
    double worst = 0.0;
    std::string text;
    for (const auto& r : reports) {
      worst = std::max(worst, r.max_rel_err);
      char line[64];
      std::snprintf(line, sizeof line, " max_rel_err=%.3e\n", r.max_rel_err);
      text += r.module + line;
    }
    if (report_out) *report_out = dup_string(text);
    if (max_err_out) *max_err_out = worst;
  });
}

}  // extern "C"
