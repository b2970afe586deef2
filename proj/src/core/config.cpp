#include "core/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tauflow {

using nlohmann::json;

void ModelConfig::validate() const {
  auto req = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCode::Config, "config: " + msg);
  };
  req(input_size >= 16 && input_size % 4 == 0, "input_size must be >= 16 and divisible by 4");
  req(base_channel >= 8 && base_channel % 8 == 0, "base_channel must be a positive multiple of 8");
  req(hidden_channels >= 8 && hidden_channels % 8 == 0, "hidden_channels must be a positive multiple of 8");
  req(max_groups >= 1 && max_groups <= 16, "max_groups must be in 1..16");
  req(group_embed_dim >= 1, "group_embed_dim must be positive");
  req(ltc_channels() % 8 == 0, "base_channel + group_embed_dim must be a multiple of 8");
  req(pos_kernel >= 1 && pos_kernel % 2 == 1, "pos_kernel must be odd");
  req(max_flow_steps >= 0, "max_flow_steps must be nonnegative");
  req(reward_scale >= 0.0, "reward_scale must be nonnegative");
  req(qk_dim >= 1, "qk_dim must be positive");
  req(dt > 0.0, "dt must be positive");
  req(tau_min > 0.0 && tau_min < tau_max, "need 0 < tau_min < tau_max");
  req(time_steps >= 1, "time_steps must be >= 1");
  req(!stdp.enabled || time_steps >= 2, "stdp requires time_steps >= 2");
  req(stdp.kappa > 0.0, "stdp.kappa must be positive");
  req(stdp.beta > 0.0 && stdp.beta <= 1.0, "stdp.beta must be in (0,1]");
  req(stdp.rho >= 0.0 && stdp.rho <= 1.0, "stdp.rho must be in [0,1]");
  req(train.lr > 0.0, "train.lr must be positive");
  req(train.weight_decay >= 0.0, "train.weight_decay must be nonnegative");
  req(train.batch >= 1, "train.batch must be positive");
  req(train.epochs >= 1, "train.epochs must be positive");
  req(train.t0 >= 1 && train.tmult >= 1, "train.t0 and train.tmult must be >= 1");
  req(train.patience >= 1, "train.patience must be positive");
  req(train.accum_steps >= 1, "train.accum_steps must be >= 1");
  req(train.val_fraction >= 0.0 && train.val_fraction < 1.0, "train.val_fraction must be in [0,1)");
  req(train.flip_prob >= 0.0 && train.flip_prob <= 1.0, "train.flip_prob must be in [0,1]");
  req(train.target_train_dice >= 0.0 && train.target_train_dice <= 1.0,
      "train.target_train_dice must be in [0,1]");
}

namespace {

// Pulls a field if present and removes it so leftovers can be rejected.
template <typename T>
void take(json& obj, const char* key, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    dst = it->get<T>();
  } catch (const std::exception& e) {
    fail(ErrorCode::Config, std::string("config: bad value for '") + key + "': " + e.what());
  }
  obj.erase(it);
}

void reject_leftovers(const json& obj, const char* section) {
  if (obj.empty()) return;
  std::string keys;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!keys.empty()) keys += ", ";
    keys += it.key();
  }
  fail(ErrorCode::Config, std::string("config: unknown key(s) in ") + section + ": " + keys);
}

}  // namespace

ModelConfig config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorCode::Config, std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) fail(ErrorCode::Config, "config: top level must be an object");

  ModelConfig cfg;
  json model = root.value("model", json::object());
  json stdp = root.value("stdp", json::object());
  json loss = root.value("loss", json::object());
  json train = root.value("train", json::object());
  root.erase("model");
  root.erase("stdp");
  root.erase("loss");
  root.erase("train");
  reject_leftovers(root, "top level");

  take(model, "input_size", cfg.input_size);
  take(model, "base_channel", cfg.base_channel);
  take(model, "hidden_channels", cfg.hidden_channels);
  take(model, "max_groups", cfg.max_groups);
  take(model, "group_embed_dim", cfg.group_embed_dim);
  take(model, "pos_kernel", cfg.pos_kernel);
  take(model, "max_flow_steps", cfg.max_flow_steps);
  take(model, "reward_scale", cfg.reward_scale);
  take(model, "qk_dim", cfg.qk_dim);
  take(model, "dt", cfg.dt);
  take(model, "tau_min", cfg.tau_min);
  take(model, "tau_max", cfg.tau_max);
  take(model, "time_steps", cfg.time_steps);
  reject_leftovers(model, "model");

  take(stdp, "enabled", cfg.stdp.enabled);
  take(stdp, "kappa", cfg.stdp.kappa);
  take(stdp, "theta_u", cfg.stdp.theta_u);
  take(stdp, "theta_s", cfg.stdp.theta_s);
  take(stdp, "beta", cfg.stdp.beta);
  take(stdp, "rho", cfg.stdp.rho);
  reject_leftovers(stdp, "stdp");

  take(loss, "aux", cfg.loss.aux);
  take(loss, "complexity", cfg.loss.complexity);
  take(loss, "diversity", cfg.loss.diversity);
  take(loss, "flow", cfg.loss.flow);
  take(loss, "stdp", cfg.loss.stdp);
  take(loss, "focal_alpha", cfg.loss.focal_alpha);
  take(loss, "focal_gamma", cfg.loss.focal_gamma);
  reject_leftovers(loss, "loss");

  take(train, "lr", cfg.train.lr);
  take(train, "weight_decay", cfg.train.weight_decay);
  take(train, "batch", cfg.train.batch);
  take(train, "epochs", cfg.train.epochs);
  take(train, "t0", cfg.train.t0);
  take(train, "tmult", cfg.train.tmult);
  take(train, "patience", cfg.train.patience);
  take(train, "seed", cfg.train.seed);
  take(train, "accum_steps", cfg.train.accum_steps);
  take(train, "val_fraction", cfg.train.val_fraction);
  take(train, "flip_prob", cfg.train.flip_prob);
  take(train, "target_train_dice", cfg.train.target_train_dice);
  reject_leftovers(train, "train");

  cfg.validate();
  return cfg;
}

std::string config_to_json_text(const ModelConfig& cfg) {
  json root;
  root["model"] = {
      {"input_size", cfg.input_size},
      {"base_channel", cfg.base_channel},
      {"hidden_channels", cfg.hidden_channels},
      {"max_groups", cfg.max_groups},
      {"group_embed_dim", cfg.group_embed_dim},
      {"pos_kernel", cfg.pos_kernel},
      {"max_flow_steps", cfg.max_flow_steps},
      {"reward_scale", cfg.reward_scale},
      {"qk_dim", cfg.qk_dim},
      {"dt", cfg.dt},
      {"tau_min", cfg.tau_min},
      {"tau_max", cfg.tau_max},
      {"time_steps", cfg.time_steps},
  };
  root["stdp"] = {
      {"enabled", cfg.stdp.enabled}, {"kappa", cfg.stdp.kappa},   {"theta_u", cfg.stdp.theta_u},
      {"theta_s", cfg.stdp.theta_s}, {"beta", cfg.stdp.beta},     {"rho", cfg.stdp.rho},
  };
  root["loss"] = {
      {"aux", cfg.loss.aux},
      {"complexity", cfg.loss.complexity},
      {"diversity", cfg.loss.diversity},
      {"flow", cfg.loss.flow},
      {"stdp", cfg.loss.stdp},
      {"focal_alpha", cfg.loss.focal_alpha},
      {"focal_gamma", cfg.loss.focal_gamma},
  };
  root["train"] = {
      {"lr", cfg.train.lr},
      {"weight_decay", cfg.train.weight_decay},
      {"batch", cfg.train.batch},
      {"epochs", cfg.train.epochs},
      {"t0", cfg.train.t0},
      {"tmult", cfg.train.tmult},
      {"patience", cfg.train.patience},
      {"seed", cfg.train.seed},
      {"accum_steps", cfg.train.accum_steps},
      {"val_fraction", cfg.train.val_fraction},
      {"flip_prob", cfg.train.flip_prob},
      {"target_train_dice", cfg.train.target_train_dice},
  };
  return root.dump(2) + "\n";
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

}  // namespace tauflow
