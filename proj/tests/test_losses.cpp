#include <doctest.h>
#include <torch/torch.h>

#include <cmath>

#include "gansr/losses.hpp"
#include "support/helpers.hpp"

using namespace gansr;
namespace ts = gansr::testsupport;

TEST_SUITE("losses") {

TEST_CASE("l1 matches the loop reference") {
  torch::manual_seed(0);
  auto a = torch::rand({2, 3, 7, 5});
  auto b = torch::rand({2, 3, 7, 5});
  CHECK(gansr::l1_loss(a, b).item<double>() ==
        doctest::Approx(ts::ref_l1(a, b)).epsilon(1e-6));
  CHECK(gansr::l1_loss(a, a).item<double>() == 0.0);
}

TEST_CASE("sam matches the loop reference") {
  torch::manual_seed(1);
  auto a = torch::rand({2, 4, 6, 6}) + 0.1;
  auto b = torch::rand({2, 4, 6, 6}) + 0.1;
  CHECK(sam_loss(a, b).item<double>() ==
        doctest::Approx(ts::ref_sam(a, b, kSamEps)).epsilon(1e-5));
}

TEST_CASE("sam is scale invariant") {
  torch::manual_seed(2);
  auto a = torch::rand({1, 4, 8, 8}) + 0.1;
  auto b = torch::rand({1, 4, 8, 8}) + 0.1;
  const double base = sam_loss(a, b).item<double>();
  for (double s : {0.25, 3.0, 40.0}) {
    CHECK(std::abs(sam_loss(a * s, b).item<double>() - base) < 1e-3);
    CHECK(std::abs(sam_loss(a, b * s).item<double>() - base) < 1e-3);
  }
}

TEST_CASE("sam of identical non-degenerate images is ~0 and finite on opposites") {
  auto a = torch::rand({1, 3, 4, 4}) + 0.5;
  CHECK(sam_loss(a, a).item<double>() < 1e-3);  // clamp keeps acos off 1.0
  auto opp = sam_loss(a, -a);
  CHECK(std::isfinite(opp.item<double>()));
  CHECK(opp.item<double>() == doctest::Approx(M_PI).epsilon(1e-3));
}

TEST_CASE("sam requires at least two bands") {
  CHECK_THROWS_AS(sam_loss(torch::rand({1, 1, 4, 4}), torch::rand({1, 1, 4, 4})),
                  std::invalid_argument);
}

TEST_CASE("tv matches the loop reference and is 0 on constants") {
  torch::manual_seed(3);
  auto x = torch::rand({2, 3, 5, 9});
  CHECK(tv_loss(x).item<double>() ==
        doctest::Approx(ts::ref_tv(x)).epsilon(1e-6));
  CHECK(tv_loss(torch::full({1, 3, 6, 6}, 0.7)).item<double>() == 0.0);
  CHECK_THROWS_AS(tv_loss(torch::rand({1, 3, 1, 1})), std::invalid_argument);
}

TEST_CASE("d-loss at zero logits and zero smoothing is ln 2") {
  auto z = torch::zeros({4, 1});
  CHECK(std::abs(adversarial_d_loss(z, z, 0.0).item<double>() -
                 std::log(2.0)) < 1e-6);
}

TEST_CASE("one-sided label smoothing uses targets 1-s and s") {
  torch::manual_seed(4);
  auto real = torch::randn({5, 1}, torch::kFloat64);
  auto fake = torch::randn({5, 1}, torch::kFloat64);
  const double s = 0.1;
  auto manual_real = torch::binary_cross_entropy_with_logits(
      real, torch::full_like(real, 1.0 - s));
  auto manual_fake = torch::binary_cross_entropy_with_logits(
      fake, torch::full_like(fake, s));
  const double expected =
      0.5 * (manual_real.item<double>() + manual_fake.item<double>());
  CHECK(adversarial_d_loss(real, fake, s).item<double>() ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  torch::manual_seed(5);
  auto target = (torch::rand({1, 3, 5, 5}, torch::kFloat64) * 0.8 + 0.1);
  auto x0 = torch::rand({1, 3, 5, 5}, torch::kFloat64) * 0.8 + 0.1;

  SUBCASE("l1") {
    // kink at pred == target: random draws keep a safe distance
    auto err = ts::fd_grad_rel_err(
        [&](const torch::Tensor& x) { return gansr::l1_loss(x, target); }, x0);
    CHECK(err < 1e-4);
  }
  SUBCASE("sam") {
    auto err = ts::fd_grad_rel_err(
        [&](const torch::Tensor& x) { return sam_loss(x, target); }, x0);
    CHECK(err < 1e-4);
  }
  SUBCASE("tv") {
    auto err = ts::fd_grad_rel_err(
        [&](const torch::Tensor& x) { return tv_loss(x); }, x0);
    CHECK(err < 1e-4);
  }
  SUBCASE("adversarial generator term") {
    auto logits = torch::randn({2, 1, 3, 3}, torch::kFloat64);
    auto err = ts::fd_grad_rel_err(
        [&](const torch::Tensor& x) { return adversarial_g_loss(x); }, logits);
    CHECK(err < 1e-4);
  }
  SUBCASE("adversarial critic term") {
    auto fake = torch::randn({3, 1}, torch::kFloat64);
    auto err = ts::fd_grad_rel_err(
        [&](const torch::Tensor& x) {
          return adversarial_d_loss(x, fake, 0.1);
        },
        torch::randn({3, 1}, torch::kFloat64));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("compose skips inactive terms and weights active ones") {
  torch::manual_seed(6);
  auto pred = torch::rand({1, 3, 6, 6}).set_requires_grad(true);
  auto target = torch::rand({1, 3, 6, 6});
  LossConfig w;
  w.w_l1 = 1.0;
  w.w_sam = 0.5;
  w.w_perceptual = 0.0;
  w.w_tv = 0.0;

  auto out = compose_g_objective(pred, target, std::nullopt, w, 0.0);
  CHECK(out.perceptual == 0.0);
  CHECK(out.tv == 0.0);
  CHECK(out.adversarial == 0.0);
  const double expect = 1.0 * out.l1 + 0.5 * out.sam;
  CHECK(out.total.item<double>() == doctest::Approx(expect).epsilon(1e-6));
  CHECK(out.content.item<double>() ==
        doctest::Approx(expect).epsilon(1e-6));
  CHECK_NOTHROW(out.total.backward());
}

TEST_CASE("compose adds the ramped adversarial term") {
  torch::manual_seed(7);
  auto pred = torch::rand({2, 3, 6, 6});
  auto target = torch::rand({2, 3, 6, 6});
  auto logits = torch::randn({2, 1});
  LossConfig w;
  w.w_l1 = 1.0;

  auto ramped = compose_g_objective(pred, target, logits, w, 0.004);
  CHECK(ramped.adv_weight == 0.004);
  CHECK(ramped.adversarial ==
        doctest::Approx(adversarial_g_loss(logits).item<double>()));
  CHECK(ramped.total.item<double>() ==
        doctest::Approx(ramped.content.item<double>() +
                        0.004 * ramped.adversarial)
            .epsilon(1e-6));

  // weight 0: logits ignored even when supplied
  auto off = compose_g_objective(pred, target, logits, w, 0.0);
  CHECK(off.adversarial == 0.0);
  CHECK(off.total.item<double>() ==
        doctest::Approx(off.content.item<double>()).epsilon(1e-7));
}

TEST_CASE("perceptual weight without a backend is an error") {
  LossConfig w;
  w.w_perceptual = 0.2;
  CHECK_THROWS_AS(compose_g_objective(torch::rand({1, 3, 4, 4}),
                                      torch::rand({1, 3, 4, 4}), std::nullopt,
                                      w, 0.0, nullptr),
                  std::runtime_error);
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(gansr::l1_loss(torch::rand({1, 3, 4, 4}), torch::rand({1, 3, 4, 5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      sam_loss(torch::rand({1, 3, 4, 4}), torch::rand({1, 4, 4, 4})),
      std::invalid_argument);
}

}  // TEST_SUITE
