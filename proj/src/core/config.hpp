// Model/training configuration with JSON load/save and strict validation.
#pragma once

#include <cstdint>
#include <string>

#include "core/common.hpp"

namespace tauflow {

struct StdpSettings {
  bool enabled = true;
  double kappa = 10.0;
  double theta_u = 0.0;
  double theta_s = 0.0;
  double beta = 0.5;
  double rho = 0.5;
};

struct LossWeights {
  double aux = 0.4;
  double complexity = 0.1;
  double diversity = 0.05;
  double flow = 0.1;
  double stdp = 0.01;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

struct TrainSettings {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int batch = 8;
  int epochs = 300;
  int t0 = 10;
  int tmult = 2;
  int patience = 200;
  uint64_t seed = 42;
  int accum_steps = 1;
  double val_fraction = 0.2;
  double flip_prob = 0.5;
  // stop once training Dice reaches this value; 0 disables the shortcut
  double target_train_dice = 0.0;
};

struct ModelConfig {
  int input_size = 224;
  int base_channel = 32;
  int hidden_channels = 64;
  int max_groups = 5;
  int group_embed_dim = 16;
  int pos_kernel = 3;
  int max_flow_steps = 3;
  double reward_scale = 0.1;
  int qk_dim = 7;
  double dt = 1.0;
  double tau_min = 1e-2;
  double tau_max = 1e3;
  int time_steps = 2;
  StdpSettings stdp;
  LossWeights loss;
  TrainSettings train;

  int ltc_channels() const { return base_channel + group_embed_dim; }
  int feat_size() const { return input_size / 4; }

  void validate() const;
};

ModelConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ModelConfig& cfg);
ModelConfig load_config_file(const std::string& path);

}  // namespace tauflow
