#include <doctest.h>
#include <torch/torch.h>

#include <cmath>

#include "gansr/schedule.hpp"
#include "support/helpers.hpp"

using namespace gansr;

namespace {

TrainConfig sched_cfg() {
  TrainConfig t;
  t.pretrain_g_only = true;
  t.g_pretrain_steps = 100;
  t.adversarial_steps = 400;
  t.adv_loss_ramp_steps = 200;
  t.adv_loss_beta = 0.01;
  t.g_warmup_steps = 50;
  t.d_holdback_steps = 0;
  t.d_holdback_epochs = 0;
  return t;
}

struct OneParamNet : torch::nn::Module {
  OneParamNet() {
    theta = register_parameter("theta",
                               torch::zeros({1}, torch::kFloat64));
  }
  torch::Tensor theta;
};

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("adv weight: zero through pretrain, linear ramp, then flat") {
  auto cfg = sched_cfg();
  CHECK(adv_weight(0, cfg) == 0.0);
  CHECK(adv_weight(99, cfg) == 0.0);
  CHECK(adv_weight(100, cfg) == 0.0);  // continuous at the boundary
  CHECK(adv_weight(100 + 100, cfg) == cfg.adv_loss_beta / 2);  // exact midpoint
  CHECK(adv_weight(100 + 200, cfg) == cfg.adv_loss_beta);
  CHECK(adv_weight(100 + 10000, cfg) == cfg.adv_loss_beta);

  SUBCASE("no ramp means full weight immediately after pretrain") {
    cfg.adv_loss_ramp_steps = 0;
    CHECK(adv_weight(99, cfg) == 0.0);
    CHECK(adv_weight(100, cfg) == cfg.adv_loss_beta);
  }
  SUBCASE("pretrain disabled starts the ramp at step 0") {
    cfg.pretrain_g_only = false;
    CHECK(adv_weight(0, cfg) == 0.0);
    CHECK(adv_weight(100, cfg) == cfg.adv_loss_beta / 2);
  }
}

TEST_CASE("ramp is monotone and continuous") {
  auto cfg = sched_cfg();
  double prev = -1.0;
  for (std::int64_t s = 0; s <= 350; ++s) {
    const double w = adv_weight(s, cfg);
    CHECK(w >= prev);
    if (prev >= 0.0) CHECK(w - prev <= cfg.adv_loss_beta / 200 + 1e-15);
    prev = w;
  }
}

TEST_CASE("warmup factors") {
  CHECK(warmup_factor(0, 100, WarmupKind::kLinear) == 0.0);
  CHECK(warmup_factor(50, 100, WarmupKind::kLinear) == 0.5);
  CHECK(warmup_factor(100, 100, WarmupKind::kLinear) == 1.0);
  CHECK(warmup_factor(500, 100, WarmupKind::kLinear) == 1.0);
  CHECK(warmup_factor(0, 0, WarmupKind::kLinear) == 1.0);  // disabled

  CHECK(warmup_factor(0, 100, WarmupKind::kCosine) == 0.0);
  CHECK(warmup_factor(50, 100, WarmupKind::kCosine) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(warmup_factor(100, 100, WarmupKind::kCosine) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // cosine starts slower than linear
  CHECK(warmup_factor(10, 100, WarmupKind::kCosine) <
        warmup_factor(10, 100, WarmupKind::kLinear));
}

TEST_CASE("critic gate: holdback in steps, epochs, and both") {
  auto cfg = sched_cfg();
  CHECK(d_enable_step(cfg) == 100);

  cfg.d_holdback_steps = 30;
  CHECK(d_enable_step(cfg) == 130);

  cfg.d_holdback_steps = 0;
  cfg.d_holdback_epochs = 2;
  CHECK(d_enable_step(cfg, /*steps_per_epoch=*/25) == 150);

  cfg.d_holdback_steps = 10;
  CHECK(d_enable_step(cfg, 25) == 160);

  SUBCASE("epoch spelling without steps_per_epoch is an error") {
    CHECK_THROWS_AS(d_enable_step(cfg, 0), std::invalid_argument);
  }
}

TEST_CASE("d_gate is monotone") {
  auto cfg = sched_cfg();
  cfg.d_holdback_steps = 17;
  bool seen_open = false;
  for (std::int64_t s = 0; s < 300; ++s) {
    const bool open = d_gate(s, cfg);
    if (seen_open) CHECK(open);  // once true, stays true
    if (open && !seen_open) {
      CHECK(s == 117);
      seen_open = true;
    }
  }
  CHECK(seen_open);
}

TEST_CASE("critic warmup clock starts when its gate opens") {
  auto cfg = sched_cfg();
  cfg.d_holdback_steps = 20;
  cfg.g_warmup_steps = 40;

  auto closed = compute_schedule(119, cfg);
  CHECK_FALSE(closed.d_updates_enabled);
  CHECK(closed.d_lr_factor == 0.0);

  auto at_open = compute_schedule(120, cfg);
  CHECK(at_open.d_updates_enabled);
  CHECK(at_open.d_lr_factor == 0.0);  // clock restarted: warmup step 0

  auto mid = compute_schedule(140, cfg);
  CHECK(mid.d_lr_factor == 0.5);
  auto done = compute_schedule(160, cfg);
  CHECK(done.d_lr_factor == 1.0);

  // generator's clock counts from 0 regardless
  CHECK(compute_schedule(20, cfg).g_lr_factor == 0.5);
  CHECK(compute_schedule(80, cfg).g_lr_factor == 1.0);
}

TEST_CASE("full schedule flags through the phases") {
  auto cfg = sched_cfg();
  auto pre = compute_schedule(50, cfg);
  CHECK(pre.pretrain_active);
  CHECK(pre.adv_weight == 0.0);
  CHECK_FALSE(pre.d_updates_enabled);

  auto adv = compute_schedule(250, cfg);
  CHECK_FALSE(adv.pretrain_active);
  CHECK(adv.adv_weight > 0.0);
  CHECK(adv.d_updates_enabled);
}

TEST_CASE("plateau controller reduces on the 3rd flat evaluation past patience") {
  PlateauController ctl(1.0, /*patience=*/2, /*factor=*/0.5, /*cooldown=*/0,
                        /*min_lr=*/1e-4);
  CHECK(ctl.observe(1.0) == 1.0);   // establishes best
  CHECK(ctl.observe(1.0) == 1.0);   // flat #1
  CHECK(ctl.observe(1.0) == 1.0);   // flat #2 (== patience)
  CHECK(ctl.observe(1.0) == 0.5);   // flat #3 -> reduce
}

TEST_CASE("plateau controller: improvement resets, cooldown pauses, floor holds") {
  PlateauController ctl(1.0, 1, 0.1, /*cooldown=*/2, /*min_lr=*/0.05);
  ctl.observe(5.0);
  ctl.observe(6.0);               // bad 1
  ctl.observe(4.0);               // improvement resets the count
  ctl.observe(6.0);               // bad 1
  CHECK(ctl.lr() == 1.0);
  ctl.observe(6.0);               // bad 2 -> reduce to 0.1, cooldown starts
  CHECK(ctl.lr() == doctest::Approx(0.1));
  ctl.observe(9.0);               // cooldown: not counted
  ctl.observe(9.0);               // cooldown: not counted
  CHECK(ctl.lr() == doctest::Approx(0.1));
  ctl.observe(9.0);               // bad 1
  ctl.observe(9.0);               // bad 2 -> reduce, clamped to the floor
  CHECK(ctl.lr() == doctest::Approx(0.05));
}

TEST_CASE("plateau replay helper agrees with the controller") {
  std::vector<double> history{3.0, 3.0, 3.0, 3.0, 2.0, 2.5, 2.5, 2.5, 2.5};
  PlateauController ctl(1.0, 2, 0.5, 0, 0.0);
  for (double m : history) ctl.observe(m);
  CHECK(plateau_step(1.0, history, 2, 0.5, 0, 0.0) == ctl.lr());
}

TEST_CASE("plateau state round-trips through json") {
  PlateauController a(1.0, 2, 0.5, 1, 1e-5);
  a.observe(3.0);
  a.observe(3.0);
  a.observe(3.0);
  PlateauController b;
  b.restore(a.state());
  // identical continuation
  for (double m : {3.0, 3.0, 3.0, 1.0, 5.0}) {
    CHECK(a.observe(m) == b.observe(m));
  }
}

TEST_CASE("ema follows the geometric recursion exactly") {
  OneParamNet net;
  auto ema = Ema::init(net, 0.999);  // shadow = theta = 0
  {
    torch::NoGradGuard ng;
    net.theta.fill_(1.0);
  }
  ema.update(net);
  ema.update(net);
  ema.update(net);
  const double shadow = ema.shadow().front().second.item<double>();
  // shadow_3 = 1 - 0.999^3
  CHECK(std::abs(shadow - 0.002997001) < 1e-9);
  CHECK(ema.updates_applied() == 3);
}

TEST_CASE("ema swap_in/swap_out round trip is bit identical") {
  torch::manual_seed(21);
  auto net = torch::nn::Linear(6, 3);
  auto ema = Ema::init(*net, 0.9);
  // diverge shadow from live weights
  {
    torch::NoGradGuard ng;
    net->weight += 0.5;
    net->bias -= 0.25;
  }
  ema.update(*net);
  auto live_w = net->weight.detach().clone();
  auto live_b = net->bias.detach().clone();

  ema.swap_in(*net);
  CHECK_FALSE(net->weight.equal(live_w));  // shadow differs
  ema.swap_out(*net);
  CHECK(net->weight.equal(live_w));  // bit-identical restoration
  CHECK(net->bias.equal(live_b));

  SUBCASE("double swap_in is rejected") {
    ema.swap_in(*net);
    CHECK_THROWS_AS(ema.swap_in(*net), std::logic_error);
    ema.swap_out(*net);
  }
}

TEST_CASE("ema export/restore continues the same trajectory") {
  torch::manual_seed(22);
  auto net = torch::nn::Linear(4, 4);
  auto ema = Ema::init(*net, 0.95);
  {
    torch::NoGradGuard ng;
    net->weight += 1.0;
  }
  ema.update(*net);

  auto restored = Ema::restore(0.95, ema.updates_applied(), ema.export_shadow());
  ema.update(*net);
  restored.update(*net);
  CHECK(ema.shadow().front().second.equal(restored.shadow().front().second));
  CHECK(ema.updates_applied() == restored.updates_applied());
}

}  // TEST_SUITE
