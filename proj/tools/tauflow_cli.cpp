// Command-line front end. Everything goes through the public C ABI; this
// translation unit never touches the core headers.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tauflow/tauflow.h"

using nlohmann::json;

namespace {

const char* status_name(tauflow_status s) {
  switch (s) {
    case TAUFLOW_OK: return "ok";
    case TAUFLOW_INVALID_ARGUMENT: return "invalid_argument";
    case TAUFLOW_SHAPE: return "shape";
    case TAUFLOW_NUMERIC: return "numeric";
    case TAUFLOW_IO: return "io";
    case TAUFLOW_FORMAT: return "format";
    case TAUFLOW_CONFIG: return "config";
    case TAUFLOW_INTERNAL: return "internal";
  }
  return "internal";
}

// Single-line diagnostic on stderr; the exit code mirrors the status.
int report_failure(tauflow_status s) {
  std::string msg = tauflow_last_error();
  for (auto& c : msg)
    if (c == '\n') c = ' ';
  std::cerr << "error[" << status_name(s) << "]: " << msg << "\n";
  return static_cast<int>(s);
}

int fail_usage(const std::string& msg) {
  std::cerr << "error[usage]: " << msg << "\n";
  return static_cast<int>(TAUFLOW_INVALID_ARGUMENT);
}

// "default" (or empty) means the built-in configuration; anything else is a
// JSON file to read.
bool read_config_arg(const std::string& arg, std::string& text, std::string& err) {
  if (arg.empty() || arg == "default") {
    text.clear();
    return true;
  }
  std::ifstream in(arg);
  if (!in) {
    err = "cannot open config file: " + arg;
    return false;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  text = ss.str();
  return true;
}

struct StringOut {
  char* s = nullptr;
  ~StringOut() { tauflow_string_free(s); }
};

int input_size_of(tauflow_model* model) {
  StringOut cfg;
  if (tauflow_model_config(model, &cfg.s) != TAUFLOW_OK) return 224;
  return json::parse(cfg.s).at("model").value("input_size", 224);
}

int cmd_train(const std::string& config_arg, const std::string& data_dir, int synth_n,
              const std::string& out_ckpt) {
  std::string cfg_text, err;
  if (!read_config_arg(config_arg, cfg_text, err)) return fail_usage(err);

  tauflow_model* model = nullptr;
  // seed comes from the train config itself (default 42)
  std::string cfg_for_seed = cfg_text.empty() ? "{}" : cfg_text;
  uint64_t seed = json::parse(cfg_for_seed, nullptr, false)
                      .value("train", json::object())
                      .value("seed", 42ULL);
  auto s = tauflow_model_create(cfg_text.empty() ? nullptr : cfg_text.c_str(), seed, &model);
  if (s != TAUFLOW_OK) return report_failure(s);

  tauflow_dataset* data = nullptr;
  if (!data_dir.empty()) {
    s = tauflow_dataset_open_dir(data_dir.c_str(), input_size_of(model), &data);
  } else {
    int size = input_size_of(model);
    s = tauflow_dataset_synth(synth_n, seed, size, size, &data);
  }
  if (s != TAUFLOW_OK) {
    tauflow_model_free(model);
    return report_failure(s);
  }

  StringOut summary;
  s = tauflow_train(model, data, out_ckpt.c_str(), 1, &summary.s);
  tauflow_dataset_free(data);
  tauflow_model_free(model);
  if (s != TAUFLOW_OK) return report_failure(s);

  json j = json::parse(summary.s);
  std::cout << "best_val_dice\t" << j["best_val_dice"].get<double>() << "\tepoch\t"
            << j["best_epoch"].get<int>() << "\n"
            << "epochs_run\t" << j["epochs_run"].get<int>() << "\n"
            << "checkpoint\t" << out_ckpt << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir) {
  tauflow_model* model = nullptr;
  auto s = tauflow_model_open(ckpt.c_str(), &model);
  if (s != TAUFLOW_OK) return report_failure(s);

  tauflow_dataset* data = nullptr;
  s = tauflow_dataset_open_dir(data_dir.c_str(), input_size_of(model), &data);
  if (s != TAUFLOW_OK) {
    tauflow_model_free(model);
    return report_failure(s);
  }

  StringOut report;
  s = tauflow_evaluate(model, data, &report.s);
  tauflow_dataset_free(data);
  tauflow_model_free(model);
  if (s != TAUFLOW_OK) return report_failure(s);

  json j = json::parse(report.s);
  std::cout << "sample\tdice\tiou\thd95\n";
  for (const auto& row : j["per_sample"]) {
    std::cout << row["id"].get<std::string>() << "\t" << row["dice"].get<double>() << "\t"
              << row["iou"].get<double>() << "\t" << row["hd95"].get<double>()
              << (row["hd95_empty"].get<bool>() ? "\t(empty mask)" : "") << "\n";
  }
  std::cout << "mean\t" << j["dice"].get<double>() << "\t" << j["iou"].get<double>() << "\t"
            << j["hd95"].get<double>() << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& module, double eps) {
  StringOut report;
  double worst = 0.0;
  auto s = tauflow_gradcheck(module.empty() ? nullptr : module.c_str(), eps, &report.s, &worst);
  if (s != TAUFLOW_OK) return report_failure(s);
  std::cout << report.s;
  if (worst > 1e-4) {
    std::cerr << "error[numeric]: max relative error " << worst << " exceeds 1e-4\n";
    return static_cast<int>(TAUFLOW_NUMERIC);
  }
  return 0;
}

int cmd_cost(const std::string& config_arg, int groups) {
  std::string cfg_text, err;
  if (!read_config_arg(config_arg, cfg_text, err)) return fail_usage(err);
  StringOut table;
  auto s = tauflow_cost_table(cfg_text.empty() ? nullptr : cfg_text.c_str(), groups, &table.s);
  if (s != TAUFLOW_OK) return report_failure(s);
  std::cout << table.s;
  return 0;
}

int cmd_synth(int n, uint64_t seed, int size, const std::string& out_dir) {
  tauflow_dataset* data = nullptr;
  auto s = tauflow_dataset_synth(n, seed, size, size, &data);
  if (s != TAUFLOW_OK) return report_failure(s);
  s = tauflow_dataset_write_dir(data, out_dir.c_str());
  int count = tauflow_dataset_size(data);
  tauflow_dataset_free(data);
  if (s != TAUFLOW_OK) return report_failure(s);
  std::cout << "wrote " << count << " image/mask pairs to " << out_dir << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image, const std::string& out_pgm) {
  tauflow_model* model = nullptr;
  auto s = tauflow_model_open(ckpt.c_str(), &model);
  if (s != TAUFLOW_OK) return report_failure(s);
  StringOut report;
  s = tauflow_infer_file(model, image.c_str(), out_pgm.c_str(), &report.s);
  tauflow_model_free(model);
  if (s != TAUFLOW_OK) return report_failure(s);
  json j = json::parse(report.s);
  std::cout << image << "\tactive_groups\t" << j["groups"].get<int>() << "\tscore\t"
            << j["score"].get<double>() << "\tattention";
  for (const auto& a : j["attention"]) std::cout << "\t" << a.get<double>();
  std::cout << "\nmask\t" << out_pgm << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tauflow: complexity-adaptive segmentation"};
  app.require_subcommand(1);

  std::string config_arg = "default", data_dir, out_path, ckpt, image, module;
  int synth_n = 0, groups = 0, size = 224;
  uint64_t seed = 42;
  double eps = 1e-4;

  auto* train = app.add_subcommand("train", "fit a model and save the best checkpoint");
  train->add_option("--config", config_arg, "config JSON path, or 'default'");
  auto* dd = train->add_option("--data", data_dir, "directory of .ppm/.pgm pairs");
  auto* sn = train->add_option("--synth", synth_n, "train on N synthetic samples");
  train->add_option("--out", out_path, "checkpoint output path")->required();
  dd->excludes(sn);
  sn->excludes(dd);

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
  eval->add_option("--data", data_dir, "directory of .ppm/.pgm pairs")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference oracle suite");
  gc->add_option("--module", module, "one of: interface, grouping, attention, cell, losses, stdp");
  gc->add_option("--eps", eps, "central-difference half-step");

  auto* cost = app.add_subcommand("cost", "analytic parameter/FLOPs accounting");
  cost->add_option("--config", config_arg, "config JSON path, or 'default'");
  cost->add_option("--groups", groups, "restrict the FLOPs sweep to one group count");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--n", synth_n, "sample count")->required();
  synth->add_option("--seed", seed, "corpus seed");
  synth->add_option("--size", size, "square image size");
  synth->add_option("--out", out_path, "output directory")->required();

  auto* infer = app.add_subcommand("infer", "segment one image");
  infer->add_option("--ckpt", ckpt, "checkpoint path")->required();
  infer->add_option("--image", image, "P6 input image")->required();
  infer->add_option("--out", out_path, "P5 mask output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error[usage]: " << msg << "\n";
    return static_cast<int>(TAUFLOW_INVALID_ARGUMENT);
  }

  if (train->parsed()) {
    if (data_dir.empty() && synth_n <= 0)
      return fail_usage("train needs --data DIR or --synth N");
    return cmd_train(config_arg, data_dir, synth_n, out_path);
  }
  if (eval->parsed()) return cmd_eval(ckpt, data_dir);
  if (gc->parsed()) return cmd_gradcheck(module, eps);
  if (cost->parsed()) return cmd_cost(config_arg, groups);
  if (synth->parsed()) return cmd_synth(synth_n, seed, size, out_path);
  if (infer->parsed()) return cmd_infer(ckpt, image, out_path);
  return fail_usage("no subcommand");
}
