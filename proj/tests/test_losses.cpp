#include <doctest.h>

#include <cmath>

#include "fd.hpp"
#include "spdgan/losses.hpp"

using namespace spdgan;
using T = Tensor4<double>;

namespace {

double loss_of(const std::function<Var<double>(Graph<double>&, Var<double>)>& build, const T& x) {
  Graph<double> g;
  return build(g, g.input(x)).item();
}

double grad_error(const std::function<Var<double>(Graph<double>&, Var<double>)>& build, const T& x, double h = 1e-5) {
  Graph<double> g;
  auto v = g.input(x, true);
  g.backward(build(g, v));
  return fd::rel_error(g.grad(v), fd::gradient([&](const T& in) { return loss_of(build, in); }, x, h));
}

}  // namespace

TEST_CASE("blur kernel constants") {
  const BlurKernel k = build_blur_kernel();
  CHECK(k.weights.rows() == 21);
  CHECK(k.at(0, 0) == 0.053);
  CHECK(std::abs(k.at(3, 0) / k.at(0, 0) - std::exp(-0.5)) < 1e-12);
  for (int x = -10; x <= 10; ++x)
    for (int y = -10; y <= 10; ++y) {
      CHECK(k.at(x, y) == k.at(-x, y));
      CHECK(k.at(x, y) == k.at(x, -y));
      CHECK(k.at(x, y) == k.at(y, x));
    }
  CHECK(k.weights.sum() != doctest::Approx(1.0));
  CHECK(build_blur_kernel(true).weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("adversarial losses") {
  Graph<double> g;
  auto half = g.input(T(Shape4{2, 1, 3, 3}, 0.5));
  CHECK(gan_loss_d(half, half).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(gan_loss_d(half, half).item() == doctest::Approx(1.3863).epsilon(1e-4));

  auto ones = g.input(T(Shape4{2, 1, 3, 3}, 1.0));
  auto zeros = g.input(T(Shape4{2, 1, 3, 3}, 0.0));
  CHECK(std::abs(gan_loss_d(ones, zeros).item()) < 1e-12);
  // saturated the wrong way: clamp floor keeps the loss finite
  const double worst = gan_loss_d(zeros, ones).item();
  CHECK(std::isfinite(worst));
  CHECK(worst == doctest::Approx(-2 * std::log(1e-12)));

  Rng rng(3);
  const T real = T::uniform(Shape4{2, 1, 4, 5}, rng, 0.01, 0.99);
  const T fake = T::uniform(Shape4{2, 1, 4, 5}, rng, 0.01, 0.99);
  double sr = 0, sf = 0, sg = 0, sl = 0;
  for (std::size_t i = 0; i < real.size(); ++i) {
    sr += std::log(real[i]);
    sf += std::log(1 - fake[i]);
    sg += std::log(fake[i]);
    sl += std::log(1 - fake[i]);
  }
  const double n = static_cast<double>(real.size());
  auto r = g.input(real), f = g.input(fake);
  LossOptions per_patch;
  per_patch.reduction = PatchReduction::log_then_mean;
  CHECK(std::abs(gan_loss_d(r, f, per_patch).item() - (-sr / n - sf / n)) < 1e-8);
  CHECK(std::abs(gan_loss_g(f, per_patch).item() - (-sg / n)) < 1e-8);
  LossOptions literal = per_patch;
  literal.literal_generator_loss = true;
  CHECK(std::abs(gan_loss_g(f, literal).item() - sl / n) < 1e-8);

  // default: maps averaged first
  double mr = 0, mf = 0;
  for (std::size_t i = 0; i < real.size(); ++i) mr += real[i] / n, mf += fake[i] / n;
  CHECK(std::abs(gan_loss_d(r, f).item() - (-std::log(mr) - std::log(1 - mf))) < 1e-12);
  CHECK(std::abs(gan_loss_g(f).item() + std::log(mf)) < 1e-12);
  LossOptions literal_pooled;
  literal_pooled.literal_generator_loss = true;
  CHECK(std::abs(gan_loss_g(f, literal_pooled).item() - std::log(1 - mf)) < 1e-12);

  CHECK(gan_loss_d(r, f).item() >= 0.0);
  CHECK(gan_loss_g(f).item() >= 0.0);
}

TEST_CASE("l1 loss") {
  Rng rng(4);
  const T a = T::randn(Shape4{2, 3, 4, 4}, rng), b = T::randn(Shape4{2, 3, 4, 4}, rng);
  Graph<double> g;
  CHECK(l1_loss(g.input(a), g.input(a)).item() == 0.0);
  CHECK(l1_loss(g.input(T(a.shape(), 0.25)), g.input(T(a.shape(), -0.5))).item() == doctest::Approx(0.75));
  CHECK(std::abs(l1_loss(g.input(a), g.input(b)).item() - (a.array() - b.array()).abs().mean()) < 1e-9);
}

TEST_CASE("weighted objectives") {
  LossWeights w;
  CHECK(multi_dis_loss(1.0, 2.0, w) == doctest::Approx(0.03).epsilon(1e-12));
  LossWeights no_spd = w;
  no_spd.lambda_spd = 0;
  CHECK(multi_dis_loss(1.0, 2.0, no_spd) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(multi_dis_loss(2.0, 2.0, w) - multi_dis_loss(1.0, 2.0, w) == doctest::Approx(0.01));
  CHECK(full_objective(1.0, 4.0, 0.03, w) == doctest::Approx(1.024).epsilon(1e-12));
  LossWeights no_color = w;
  no_color.lambda_color = 0;
  CHECK(full_objective(1.0, 4.0, 0.03, no_color) == doctest::Approx(0.03 + 0.99).epsilon(1e-12));

  Graph<double> g;
  auto pix = g.input(T(Shape4{1, 1, 1, 1}, 1.5)), spd = g.input(T(Shape4{1, 1, 1, 1}, 2.0));
  auto l1 = g.input(T(Shape4{1, 1, 1, 1}, 1.0)), col = g.input(T(Shape4{1, 1, 1, 1}, 4.0));
  CHECK(multi_dis_loss(pix, spd, w).item() == doctest::Approx(0.035));
  LossBreakdown bc, bb, ba;
  auto c = full_objective(pix, spd, l1, col, w, ObjectiveFlags{true, true}, &bc);
  auto b = full_objective(pix, spd, l1, Var<double>{}, w, ObjectiveFlags{true, false}, &bb);
  auto a = full_objective(pix, Var<double>{}, l1, Var<double>{}, w, ObjectiveFlags{false, false}, &ba);
  CHECK(c.item() == doctest::Approx(0.01 * 1.5 + 0.01 * 2.0 + 0.99 + 0.004).epsilon(1e-12));
  CHECK(b.item() == doctest::Approx(0.01 * 1.5 + 0.01 * 2.0 + 0.99).epsilon(1e-12));
  CHECK(a.item() == doctest::Approx(0.01 * 1.5 + 0.99).epsilon(1e-12));
  CHECK(c.item() - b.item() == doctest::Approx(w.lambda_color * 4.0).epsilon(1e-12));
  CHECK(bc.color_term);
  CHECK_FALSE(bb.color_term);
  CHECK_FALSE(ba.spd_term);
  CHECK(bc.multi_dis == doctest::Approx(0.035));
  CHECK_THROWS_AS(full_objective(pix, Var<double>{}, l1, col, w, ObjectiveFlags{true, true}), InternalError);
}

TEST_CASE("colour loss") {
  const BlurKernel k = build_blur_kernel();
  Rng rng(5);
  const T a = T::uniform(Shape4{1, 3, 16, 16}, rng, 0, 100), b = T::uniform(Shape4{1, 3, 16, 16}, rng, 0, 100);
  Graph<double> g;
  CHECK(color_loss(g.input(a), g.input(a), k).item() == 0.0);
  CHECK(color_loss(g.input(a), g.input(b), k).item() ==
        doctest::Approx(color_loss(g.input(b), g.input(a), k).item()).epsilon(1e-12));
  CHECK(color_loss(g.input(a), g.input(b), k).item() > 0.0);

  T checker(Shape4{1, 3, 32, 32}), inverse(Shape4{1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        checker(0, c, y, x) = ((x + y) % 2) ? 50.0 : -50.0;
        inverse(0, c, y, x) = -checker(0, c, y, x);
      }
  const double blurred = color_loss(g.input(checker), g.input(inverse), k).item();
  const double plain = (checker.array() - inverse.array()).square().mean();
  CHECK(blurred < 1e-3 * plain);

  // direct blur oracle with reflect padding
  const T x = T::uniform(Shape4{1, 1, 13, 12}, rng, -1, 1);
  const T bx = blur(g.input(x), k).value();
  auto refl = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  for (int y : {0, 6, 12})
    for (int xx : {0, 5, 11}) {
      double s = 0;
      for (int dy = -10; dy <= 10; ++dy)
        for (int dx = -10; dx <= 10; ++dx) s += k.at(dy, dx) * x(0, 0, refl(y + dy, 13), refl(xx + dx, 12));
      CHECK(bx(0, 0, y, xx) == doctest::Approx(s).epsilon(1e-12));
    }
  CHECK_THROWS_AS(blur(g.input(T(Shape4{1, 1, 8, 8})), k), DimensionError);
}

TEST_CASE("loss gradients match finite differences") {
  const BlurKernel k = build_blur_kernel();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const T s1 = T::uniform(Shape4{2, 1, 3, 3}, rng, 0.05, 0.95);
    const T s2 = T::uniform(Shape4{2, 1, 3, 3}, rng, 0.05, 0.95);
    CHECK(grad_error([&](Graph<double>& g, Var<double> v) { return gan_loss_d(v, g.input(s2)); }, s1) < 1e-3);
    CHECK(grad_error([&](Graph<double>& g, Var<double> v) { return gan_loss_d(g.input(s1), v); }, s2) < 1e-3);
    CHECK(grad_error([&](Graph<double>&, Var<double> v) { return gan_loss_g(v); }, s2) < 1e-3);
    LossOptions literal;
    literal.literal_generator_loss = true;
    CHECK(grad_error([&](Graph<double>&, Var<double> v) { return gan_loss_g(v, literal); }, s2) < 1e-3);

    const T a = T::randn(Shape4{1, 3, 12, 12}, rng), b = T::randn(Shape4{1, 3, 12, 12}, rng);
    CHECK(grad_error([&](Graph<double>& g, Var<double> v) { return l1_loss(g.input(b), v); }, a) < 1e-3);
    CHECK(grad_error([&](Graph<double>& g, Var<double> v) { return color_loss(g.input(b), v, k); }, a) < 1e-3);

    // full objective: gradient is the weighted sum of the component gradients
    LossWeights w;
    auto objective = [&](Graph<double>& g, Var<double> v) {
      auto pix = gan_loss_g(sigmoid(v));
      auto spd = gan_loss_g(sigmoid(scale(v, 0.5)));
      auto l1 = l1_loss(g.input(b), v);
      auto col = color_loss(g.input(b), v, k);
      return full_objective(pix, spd, l1, col, w, ObjectiveFlags{});
    };
    CHECK(grad_error(objective, a) < 1e-3);
    auto component_grad = [&](const std::function<Var<double>(Graph<double>&, Var<double>)>& f) {
      Graph<double> g;
      auto v = g.input(a, true);
      g.backward(f(g, v));
      return T(g.grad(v));
    };
    const T total = component_grad(objective);
    const T combo_pix = component_grad([](Graph<double>&, Var<double> v) { return gan_loss_g(sigmoid(v)); });
    const T combo_spd = component_grad([](Graph<double>&, Var<double> v) { return gan_loss_g(sigmoid(scale(v, 0.5))); });
    const T combo_l1 = component_grad([&](Graph<double>& g, Var<double> v) { return l1_loss(g.input(b), v); });
    const T combo_col = component_grad([&](Graph<double>& g, Var<double> v) { return color_loss(g.input(b), v, k); });
    const auto expect = w.lambda_i * combo_pix.array() + w.lambda_spd * combo_spd.array() +
                        w.lambda_l1 * combo_l1.array() + w.lambda_color * combo_col.array();
    CHECK((total.array() - expect).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("SPD adversarial loss") {
  Rng rng(6);
  SPDDiscConfig cfg;
  cfg.dims = {8, 4, 2};
  SPDDiscriminator d(cfg, rng);
  const T Fr = T::randn(Shape4{1, 8, 4, 4}, rng), Ff = T::randn(Shape4{1, 8, 4, 4}, rng);
  const GramDescriptor gr = gram_descriptor(Fr, 0, cfg.gram), gf = gram_descriptor(Ff, 0, cfg.gram);

  auto [same_d, same_g] = spd_gan_loss(gr, gr, d);
  CHECK(same_d >= 2 * std::log(2.0) * (1 - 1e-6));
  CHECK(same_g > 0.0);

  d.head_S().value.array().setZero();
  auto [dl, gl] = spd_gan_loss(gr, gf, d);
  CHECK(dl == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(gl == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  GramDescriptor small = gram_descriptor(T::randn(Shape4{1, 4, 2, 2}, rng), 0, cfg.gram);
  CHECK_THROWS_AS(spd_gan_loss(gr, small, d), DimensionError);
}

TEST_CASE("SPD generator loss gradient reaches the generator output") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 60);
    SPDDiscConfig cfg;
    cfg.dims = {32, 8, 4};
    cfg.head_init_sd = 0.5;
    SPDDiscriminator d(cfg, rng);
    SurrogateExtractor<double> ex;
    const T out = T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9);
    auto build = [&](Graph<double>&, Var<double> v) {
      return gan_loss_g(sigmoid(d.logits_from_features(ex.forward(v, LayerTag::stage3), false)));
    };
    CHECK(grad_error(build, out, 1e-5) < 1e-3);
  }
}
