#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "core/attention.hpp"
#include "core/cell.hpp"
#include "core/grouping.hpp"
#include "core/interface.hpp"
#include "core/losses.hpp"
#include "core/stdp.hpp"

namespace tauflow {

namespace {

using D = double;
using Dt = TensorT<D>;

ModelConfig reduced_cfg() {
  ModelConfig cfg;
  cfg.input_size = 16;  // feature grid 4x4
  cfg.base_channel = 8;
  cfg.hidden_channels = 8;
  cfg.group_embed_dim = 8;
  cfg.max_groups = 5;
  cfg.qk_dim = 4;
  cfg.time_steps = 2;
  cfg.validate();
  return cfg;
}

Dt rand_const(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Dt t = Dt::zeros(shape);
  for (auto& v : *t.data) v = rng.uniform(lo, hi);
  return t;
}

// Scalar projection with frozen random weights so the loss surface is fixed
// across the finite-difference re-evaluations.
struct Proj {
  Dt w;
  explicit Proj(const Shape& shape, Rng& rng) : w(rand_const(shape, rng)) {}
  Dt operator()(const Dt& x) const {
    std::vector<int> axes(static_cast<size_t>(x.rank()));
    for (int i = 0; i < x.rank(); ++i) axes[static_cast<size_t>(i)] = i;
    return reduce_sum(mul(x, w), axes, false);
  }
};

// AD once, then central differences over every coordinate of every parameter.
GradCheckReport probe(const std::string& name, ParamStoreT<D>& store,
                      const std::function<Dt(CtxT<D>&)>& make_loss, double eps) {
  TapeT<D> tape;
  CtxT<D> ctx;
  ctx.tape = &tape;
  ctx.training = true;
  Dt loss = make_loss(ctx);
  auto grads = tape.backward(loss);
  ctx.collect_grads(grads);

  auto value = [&]() {
    CtxT<D> plain;
    plain.training = true;
    return static_cast<double>(make_loss(plain).scalar());
  };

  GradCheckReport rep;
  rep.module = name;
  for (size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    const D* g = p.grad.defined() ? p.grad.ptr() : nullptr;
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      D& x = (*p.value.data)[static_cast<size_t>(j)];
      const D saved = x;
      x = saved + eps;
      const double up = value();
      x = saved - eps;
      const double down = value();
      x = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = g ? static_cast<double>(g[j]) : 0.0;
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-2});
      rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - ad) / denom);
      ++rep.coords;
    }
  }
  return rep;
}

GradCheckReport check_interface(double eps) {
  auto cfg = reduced_cfg();
  Rng rng(11, 0);
  ParamStoreT<D> store;
  auto mod = FlowInterfaceT<D>::build(store, cfg, rng);
  auto& f3 = store.add_full("in.f3", {2, cfg.base_channel, 4, 4}, D(0));
  for (auto& v : *f3.value.data) v = rng.uniform(-1.0, 1.0);
  Proj p_ltc({2, cfg.ltc_channels(), 4, 4}, rng);
  Proj p_s0({2, cfg.hidden_channels, 4, 4}, rng);
  auto make_loss = [&, mod](CtxT<D>& ctx) {
    auto out = mod.forward(ctx, ctx.use(f3));
    return add(p_ltc(out.ltc_input), p_s0(out.s0));
  };
  return probe("interface", store, make_loss, eps);
}

GradCheckReport check_grouping(double eps) {
  auto cfg = reduced_cfg();
  Rng rng(12, 0);
  ParamStoreT<D> store;
  auto mod = GroupingT<D>::build(store, cfg, rng);
  auto& ltc = store.add_full("in.ltc", {2, cfg.ltc_channels(), 4, 4}, D(0));
  for (auto& v : *ltc.value.data) v = rng.uniform(-1.0, 1.0);
  Dt image = rand_const({2, 3, cfg.input_size, cfg.input_size}, rng, 0.0, 1.0);
  Proj p_tau({2, cfg.hidden_channels, 4, 4}, rng);
  Proj p_mask({2, cfg.max_groups, 4, 4}, rng);
  Proj p_score({2}, rng);
  const int G = 3;  // fixed so the probe never crosses a group-count boundary
  auto make_loss = [&, mod](CtxT<D>& ctx) {
    Dt x = ctx.use(ltc);
    auto field = mod.compute_tau(ctx, x);
    auto plan = mod.assess_complexity(ctx, x, image);
    Dt logits = mod.mask_logits(ctx, x, field.tau);
    Dt masks = GroupingT<D>::restricted_softmax(logits, G, nullptr);
    return add(add(p_tau(field.tau), p_mask(masks)), p_score(plan.score));
  };
  return probe("grouping", store, make_loss, eps);
}

GradCheckReport check_attention(double eps) {
  auto cfg = reduced_cfg();
  Rng rng(13, 0);
  ParamStoreT<D> store;
  auto mod = TauAttentionT<D>::build(store, cfg, rng);
  const int C = cfg.ltc_channels(), Gmax = cfg.max_groups, G = 3;
  auto& u = store.add_full("in.u", {2, Gmax, C, 4, 4}, D(0));
  for (auto& v : *u.value.data) v = rng.uniform(-1.0, 1.0);
  auto& tau_raw = store.add_full("in.tau_raw", {2, cfg.hidden_channels, 4, 4}, D(0));
  for (auto& v : *tau_raw.value.data) v = rng.uniform(-1.0, 1.0);
  auto& mask_raw = store.add_full("in.mask_raw", {2, Gmax, 4, 4}, D(0));
  for (auto& v : *mask_raw.value.data) v = rng.uniform(-1.0, 1.0);
  Proj p_attn({2, Gmax}, rng);
  Proj p_u({2, Gmax, C, 4, 4}, rng);
  auto make_loss = [&, mod](CtxT<D>& ctx) {
    Dt masks = GroupingT<D>::restricted_softmax(ctx.use(mask_raw), G, nullptr);
    Dt tau = affine(softplus(ctx.use(tau_raw)), D(1), D(0.1));
    auto out = mod.forward(ctx, ctx.use(u), masks, tau, G);
    return add(p_attn(out.attn), p_u(out.u_weighted));
  };
  return probe("attention", store, make_loss, eps);
}

GradCheckReport check_cell(double eps) {
  auto cfg = reduced_cfg();
  Rng rng(14, 0);
  ParamStoreT<D> store;
  auto mod = ConvLtcCellT<D>::build(store, cfg, rng);
  const int C = cfg.ltc_channels(), Gmax = cfg.max_groups, G = 2;
  auto& u = store.add_full("in.u", {2, Gmax, C, 4, 4}, D(0));
  for (auto& v : *u.value.data) v = rng.uniform(-1.0, 1.0);
  auto& mask_raw = store.add_full("in.mask_raw", {2, Gmax, 4, 4}, D(0));
  for (auto& v : *mask_raw.value.data) v = rng.uniform(-1.0, 1.0);
  auto& s0_raw = store.add_full("in.s0_raw", {2, cfg.hidden_channels, 4, 4}, D(0));
  for (auto& v : *s0_raw.value.data) v = rng.uniform(-1.0, 1.0);
  Proj p_fused({2, cfg.base_channel, 4, 4}, rng);
  auto make_loss = [&, mod](CtxT<D>& ctx) {
    Dt masks = GroupingT<D>::restricted_softmax(ctx.use(mask_raw), G, nullptr);
    Dt s0 = tanh_op(ctx.use(s0_raw));
    auto out = mod.evolve_and_fuse(ctx, ctx.use(u), masks, s0, G);
    return p_fused(out.fused);
  };
  return probe("cell", store, make_loss, eps);
}

GradCheckReport check_losses(double eps) {
  Rng rng(15, 0);
  ParamStoreT<D> store;
  auto& logits = store.add_full("in.logits", {2, 1, 8, 8}, D(0));
  for (auto& v : *logits.value.data) v = rng.uniform(-2.0, 2.0);
  auto& masks = store.add_full("in.masks", {2, 5, 8, 8}, D(0));
  for (auto& v : *masks.value.data) v = rng.uniform(-1.0, 1.0);
  auto& score = store.add_full("in.score", {2}, D(0));
  for (auto& v : *score.value.data) v = rng.uniform(0.0, 1.0);
  Dt target = Dt::zeros({2, 1, 8, 8});
  for (auto& v : *target.data) v = rng.next_double() < 0.4 ? 1.0 : 0.0;
  Dt score_target = rand_const({2}, rng, 0.0, 1.0);
  auto make_loss = [&](CtxT<D>& ctx) {
    Dt main = dice_focal_loss(ctx.use(logits), target, 0.25, 2.0);
    Dt flow = flow_smooth_loss(ctx.use(masks));
    Dt err = sub(ctx.use(score), score_target);
    Dt cplx = reduce_mean(mul(err, err), {0}, false);
    return add(add(main, affine(flow, D(0.1), D(0))), affine(cplx, D(0.1), D(0)));
  };
  return probe("losses", store, make_loss, eps);
}

GradCheckReport check_stdp(double eps) {
  Rng rng(16, 0);
  StdpSettings settings;
  settings.beta = 0.5;
  settings.kappa = 10.0;
  StdpRegularizerT<D> reg(settings);
  const int B = 2, G = 2, steps = 2, h = 4, w = 4, C = 8;
  ParamStoreT<D> store;
  auto& pre_raw = store.add_full("in.pre_raw", {B, G, steps, h, w}, D(0));
  for (auto& v : *pre_raw.value.data) v = rng.uniform(-2.0, 2.0);
  auto& post_raw = store.add_full("in.post_raw", {B, G, steps, h, w}, D(0));
  for (auto& v : *post_raw.value.data) v = rng.uniform(-2.0, 2.0);
  auto& tau_raw_0 = store.add_full("in.tau0", {B, C, h, w}, D(0));
  for (auto& v : *tau_raw_0.value.data) v = rng.uniform(-1.0, 1.0);
  auto& tau_raw_1 = store.add_full("in.tau1", {B, C, h, w}, D(0));
  for (auto& v : *tau_raw_1.value.data) v = rng.uniform(-1.0, 1.0);
  Dt target = Dt::zeros({B, 1, h, w});
  for (auto& v : *target.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
  auto make_loss = [&, reg](CtxT<D>& ctx) {
    EventMapsT<D> ev;
    ev.e_pre = sigmoid(ctx.use(pre_raw));
    ev.e_post = sigmoid(ctx.use(post_raw));
    std::vector<Dt> taus = {affine(softplus(ctx.use(tau_raw_0)), D(1), D(0.1)),
                            affine(softplus(ctx.use(tau_raw_1)), D(1), D(0.1))};
    return add(reg.loss(ev, taus), reg.supervised_loss(ev, taus, target));
  };
  return probe("stdp", store, make_loss, eps);
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names = {"interface", "grouping", "attention",
                                                 "cell",      "losses",   "stdp"};
  return names;
}

std::vector<GradCheckReport> run_gradcheck(const std::string& module, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "gradcheck: eps must be positive");
  using Fn = GradCheckReport (*)(double);
  static const std::pair<const char*, Fn> table[] = {
      {"interface", check_interface}, {"grouping", check_grouping},
      {"attention", check_attention}, {"cell", check_cell},
      {"losses", check_losses},       {"stdp", check_stdp},
  };
  std::vector<GradCheckReport> out;
  for (const auto& [name, fn] : table) {
    if (module.empty() || module == name) out.push_back(fn(eps));
  }
  if (out.empty()) {
    std::string valid;
    for (const auto& n : gradcheck_modules()) valid += (valid.empty() ? "" : ", ") + n;
    fail(ErrorCode::InvalidArgument, "gradcheck: unknown module '" + module +
                                         "' (valid: " + valid + ")");
  }
  return out;
}

}  // namespace tauflow
