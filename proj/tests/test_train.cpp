#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "core/accounting.hpp"
#include "core/checkpoint.hpp"
#include "core/train.hpp"
#include "doctest.h"

using namespace tauflow;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.input_size = 16;
  cfg.base_channel = 8;
  cfg.hidden_channels = 8;
  cfg.group_embed_dim = 8;
  cfg.max_groups = 5;
  cfg.qk_dim = 4;
  cfg.time_steps = 2;
  cfg.max_flow_steps = 2;
  cfg.train.batch = 2;
  cfg.train.epochs = 3;
  cfg.train.val_fraction = 0.0;
  return cfg;
}

std::string tmp(const std::string& name) { return "/tmp/tauflow_train_" + name; }

int64_t enumerate_params(const TauFlowModel& model, const std::string& prefix) {
  int64_t n = 0;
  for (size_t i = 0; i < model.params.size(); ++i) {
    const auto& p = model.params.at(i);
    if (prefix.empty() || p.name.rfind(prefix + ".", 0) == 0) n += p.value.numel();
  }
  return n;
}

}  // namespace

TEST_CASE("checkpoints round trip bit-exactly") {
  auto cfg = tiny_cfg();
  auto model = TauFlowModel::build(cfg, 3);
  auto path = tmp("rt.ckpt");
  save_checkpoint(path, model.params, cfg);

  auto clone = TauFlowModel::build(cfg, 999);  // different init
  auto stored_cfg = load_checkpoint(path, clone.params);
  CHECK(stored_cfg.base_channel == cfg.base_channel);
  CHECK(stored_cfg.max_groups == cfg.max_groups);
  for (size_t i = 0; i < model.params.size(); ++i) {
    const auto& a = model.params.at(i).value;
    const auto& b = clone.params.at(i).value;
    REQUIRE(a.shape == b.shape);
    CHECK(std::memcmp(a.data->data(), b.data->data(), a.numel() * sizeof(float)) == 0);
  }
  auto peeked = peek_checkpoint_config(path);
  CHECK(peeked.input_size == cfg.input_size);
}

TEST_CASE("corruption and format violations are rejected") {
  auto cfg = tiny_cfg();
  auto model = TauFlowModel::build(cfg, 4);
  auto path = tmp("bad.ckpt");
  save_checkpoint(path, model.params, cfg);

  // flip one byte near the end of the payload
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    auto size = static_cast<long>(f.tellg());
    f.seekp(size - 7);
    char b;
    f.seekg(size - 7);
    f.get(b);
    f.seekp(size - 7);
    f.put(static_cast<char>(b ^ 0x40));
  }
  auto victim = TauFlowModel::build(cfg, 4);
  try {
    load_checkpoint(path, victim.params);
    FAIL("corrupt payload must not load");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }

  // bad magic
  auto path2 = tmp("magic.ckpt");
  {
    std::ofstream f(path2, std::ios::binary);
    f << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_AS(load_checkpoint(path2, victim.params), Error);

  // future version
  save_checkpoint(path, model.params, cfg);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(static_cast<char>(kCheckpointVersion + 1));
  }
  try {
    load_checkpoint(path, victim.params);
    FAIL("version mismatch must not load");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  // truncated file
  save_checkpoint(path, model.params, cfg);
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out(tmp("short.ckpt"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(tmp("short.ckpt"), victim.params), Error);
}

TEST_CASE("checkpoints refuse a model with a different group budget") {
  auto cfg = tiny_cfg();
  auto model = TauFlowModel::build(cfg, 5);
  auto path = tmp("groups.ckpt");
  save_checkpoint(path, model.params, cfg);

  auto other_cfg = cfg;
  other_cfg.max_groups = 3;
  auto other = TauFlowModel::build(other_cfg, 5);
  try {
    load_checkpoint(path, other.params);
    FAIL("group-count conflict must not load");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("shape conflict") != std::string::npos);
  }
}

TEST_CASE("analytic parameter count equals the allocated tensors") {
  for (auto make_cfg : {+[] {
         ModelConfig c;
         return c;  // full-scale defaults
       },
                        +[] {
                          ModelConfig c;
                          c.input_size = 16;
                          c.base_channel = 8;
                          c.hidden_channels = 8;
                          c.group_embed_dim = 8;
                          c.qk_dim = 4;
                          return c;
                        },
                        +[] {
                          ModelConfig c;
                          c.max_groups = 7;
                          return c;
                        }}) {
    ModelConfig cfg = make_cfg();
    auto report = cost_report(cfg);
    auto model = TauFlowModel::build(cfg, 1);
    CHECK(report.params_total == model.params.total_elements());
    for (const auto& [module, count] : report.params_by_module)
      CHECK(count == enumerate_params(model, module));
  }
}

TEST_CASE("cost model closed forms") {
  LayerSpec conv{"x", "probe", LayerKind::Conv, 48, 64, 1, 1, 56, 56};
  CHECK(layer_params(conv) == 3136);
  CHECK(layer_flops(conv) == 19267584);

  LayerSpec bad = conv;
  bad.kind = static_cast<LayerKind>(99);
  CHECK_THROWS_AS(layer_params(bad), Error);
  CHECK_THROWS_AS(layer_flops(bad), Error);
}

TEST_CASE("budget and monotonicity of the cost report") {
  ModelConfig cfg;  // base 32, Gmax 5, T 2, 224
  auto r = cost_report(cfg);
  CHECK(r.params_total <= 500000);
  CHECK(r.flops_total(1) < r.flops_total(5));
  CHECK(r.flops_total(5) >= 1000000000LL);
  CHECK(r.flops_total(5) <= 10000000000LL);

  ModelConfig g7 = cfg;
  g7.max_groups = 7;
  CHECK(cost_report(g7).params_total > r.params_total);

  ModelConfig slim = cfg;
  slim.base_channel = 16;
  CHECK(cost_report(slim).params_total < r.params_total);

  ModelConfig t4 = cfg;
  t4.time_steps = 4;
  CHECK(cost_report(t4).flops_total(5) > r.flops_total(5));

  auto table = cost_table(cfg);
  CHECK(table.find("params_total") != std::string::npos);
  CHECK(table.find("G=5") != std::string::npos);
}

TEST_CASE("training runs, logs, and checkpoints deterministically") {
  auto cfg = tiny_cfg();
  auto data = generate_synthetic(6, 17, 16, 16);
  auto path = tmp("fit.ckpt");

  auto model_a = TauFlowModel::build(cfg, cfg.train.seed);
  auto out_a = train_model(model_a, data, path);
  CHECK(out_a.epochs_run == 3);
  CHECK(out_a.first_step_losses.size() == 5);
  CHECK(out_a.best_val_dice >= 0.0);
  CHECK(out_a.best_val_dice <= 1.0);

  // 13 tab-separated fields per line: epoch, train_loss, 7 terms, 3 metrics, lr
  std::istringstream log(out_a.log);
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    int tabs = 0;
    for (char c : line) tabs += c == '\t';
    CHECK(tabs == 12);
  }
  CHECK(lines == 3);

  auto model_b = TauFlowModel::build(cfg, cfg.train.seed);
  auto out_b = train_model(model_b, data, "");
  REQUIRE(out_b.first_step_losses.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(out_a.first_step_losses[i] == out_b.first_step_losses[i]);
  CHECK(out_a.log == out_b.log);
}

TEST_CASE("the saved checkpoint reproduces the best validation dice") {
  auto cfg = tiny_cfg();
  cfg.train.epochs = 4;
  auto data = generate_synthetic(5, 23, 16, 16);
  auto path = tmp("best.ckpt");
  auto model = TauFlowModel::build(cfg, 7);
  auto out = train_model(model, data, path);

  auto fresh = TauFlowModel::build(cfg, 1234);
  load_checkpoint(path, fresh.params);
  auto rep = evaluate(fresh, data);
  CHECK(rep.dice == doctest::Approx(out.best_val_dice).epsilon(1e-6));
  CHECK(rep.per_sample.size() == data.size());
}

TEST_CASE("patience stops a frozen run after patience stale epochs") {
  auto cfg = tiny_cfg();
  cfg.train.lr = 1e-30;  // updates vanish below float resolution
  cfg.train.epochs = 50;
  cfg.train.patience = 3;
  cfg.train.flip_prob = 0.0;  // identical batches every epoch
  auto data = generate_synthetic(4, 31, 16, 16);
  auto model = TauFlowModel::build(cfg, 8);
  auto out = train_model(model, data, "");
  CHECK(out.epochs_run == 4);
  CHECK(out.best_epoch == 1);
}

TEST_CASE("the step guard names the first non-finite term in order") {
  auto nan = [] {
    auto t = Tensor::zeros({1});
    (*t.data)[0] = std::numeric_limits<float>::quiet_NaN();
    return t;
  };
  auto fin = [] { return Tensor::zeros({1}); };

  LossBreakdownT<float> lb;
  lb.main = fin();
  lb.aux = fin();
  lb.complexity = fin();
  lb.diversity = fin();
  lb.flow = fin();
  lb.stdp = fin();
  lb.total = fin();
  CHECK_NOTHROW(ensure_finite_terms(lb, 1, 0));

  lb.stdp = nan();
  lb.total = nan();
  try {
    ensure_finite_terms(lb, 3, 7);
    FAIL("non-finite terms must abort");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("'stdp'") != std::string::npos);  // earlier in order than total
    CHECK(msg.find("non-finite") != std::string::npos);
    CHECK(msg.find("epoch 3") != std::string::npos);
    CHECK(msg.find("step 7") != std::string::npos);
  }

  lb.main = nan();
  try {
    ensure_finite_terms(lb, 1, 0);
    FAIL("non-finite terms must abort");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'main'") != std::string::npos);
  }
}

TEST_CASE("poisoned weights cannot train silently") {
  auto cfg = tiny_cfg();
  auto data = generate_synthetic(2, 37, 16, 16);
  auto model = TauFlowModel::build(cfg, 9);
  for (auto& v : *model.params.find("backbone.seg_head.w")->value.data)
    v = std::numeric_limits<float>::quiet_NaN();
  try {
    train_model(model, data, "");
    FAIL("non-finite weights must abort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Numeric);
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("gradient accumulation preserves determinism") {
  auto cfg = tiny_cfg();
  cfg.train.accum_steps = 2;
  cfg.train.batch = 1;
  auto data = generate_synthetic(4, 41, 16, 16);
  auto a = TauFlowModel::build(cfg, 10);
  auto b = TauFlowModel::build(cfg, 10);
  auto out_a = train_model(a, data, "");
  auto out_b = train_model(b, data, "");
  CHECK(out_a.log == out_b.log);
  CHECK(out_a.epochs_run == 3);
}

TEST_CASE("target dice shortcut ends the loop early") {
  auto cfg = tiny_cfg();
  cfg.train.epochs = 50;
  cfg.train.lr = 1e-30;  // keep the biased head in place
  cfg.train.target_train_dice = 1e-9;  // any positive dice satisfies it
  auto data = generate_synthetic(4, 43, 16, 16);
  auto model = TauFlowModel::build(cfg, 11);
  // an all-foreground prediction overlaps every nonempty ground truth
  for (auto& v : *model.params.find("backbone.seg_head.b")->value.data) v = 5.0f;
  auto out = train_model(model, data, "");
  CHECK(out.epochs_run == 1);
  CHECK(out.final_train_dice > 0.0);
}
