#include "spdgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "spdgan/losses.hpp"
#include "spdgan/networks.hpp"

namespace spdgan {

namespace {

using T = Tensor4<double>;

std::vector<std::size_t> pick(std::size_t n, int max_coords, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords <= 0 || n <= static_cast<std::size_t>(max_coords)) return idx;
  for (std::size_t i = 0; i < static_cast<std::size_t>(max_coords); ++i)
    std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n - i - 1)))]);
  idx.resize(static_cast<std::size_t>(max_coords));
  return idx;
}

double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& n) {
  return (a - n).norm() / std::max({a.norm(), n.norm(), 1e-6});
}

}  // namespace

double GradChecker::eval(const Builder& f) {
  Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& in : inputs_) vars.push_back(g.input(in.value, false));
  return f(g, vars).item();
}

double GradChecker::run(const Builder& f) {
  for (auto* p : params_) p->zero_grad();
  std::vector<T> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& in : inputs_) vars.push_back(g.input(in.value, true));
    const Var<double> out = f(g, vars);
    if (out.value().size() != 1) throw DimensionError("gradcheck builder must return a scalar");
    g.backward(out);
    for (const auto& v : vars) analytic.push_back(g.has_grad(v) ? g.grad(v) : T(v.value().shape()));
  }
  for (auto* p : params_) {
    analytic.push_back(p->grad);
    p->zero_grad();
  }

  Rng rng(sample_seed_);
  double worst = 0;
  auto check_leaf = [&](T& value, const T& a) {
    const auto idx = pick(value.size(), max_coords_, rng);
    Eigen::VectorXd av(static_cast<Eigen::Index>(idx.size())), nv(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k];
      const double keep = value[i];
      value[i] = keep + h_;
      const double up = eval(f);
      value[i] = keep - h_;
      const double down = eval(f);
      value[i] = keep;
      nv[static_cast<Eigen::Index>(k)] = (up - down) / (2 * h_);
      av[static_cast<Eigen::Index>(k)] = a[i];
    }
    worst = std::max(worst, rel(av, nv));
  };
  std::size_t k = 0;
  for (auto& in : inputs_) check_leaf(in.value, analytic[k++]);
  for (auto* p : params_) check_leaf(p->value, analytic[k++]);
  return worst;
}

// ---------------------------------------------------------------------------

Var<double> bimap_corrupted(Var<double> X, Var<double> W) {
  const auto& xv = X.value();
  const Eigen::MatrixXd Wm = spd::detail::matrix_of(W.value(), 0);
  T out(Shape4{xv.n(), 1, static_cast<int>(Wm.rows()), static_cast<int>(Wm.rows())});
  for (int n = 0; n < xv.n(); ++n) spd::detail::set_matrix(out, n, spd::bimap_forward(spd::detail::matrix_of(xv, n), Wm));
  auto* graph = X.graph();
  return graph->record(std::move(out), {X, W}, [graph, X, W, Wm](const T& gout) {
    for (int n = 0; n < gout.n(); ++n) {
      const Eigen::MatrixXd G = spd::detail::matrix_of(gout, n);
      const Eigen::MatrixXd Xm = spd::detail::matrix_of(X.value(), n);
      if (X.requires_grad()) spd::detail::add_matrix(graph->grad_buffer(X), n, Wm.transpose() * G * Wm);
      if (W.requires_grad()) spd::detail::add_matrix(graph->grad_buffer(W), 0, G * Wm * Xm);
    }
  });
}

namespace {

T random_spd_batch(int n, int d, Rng& rng) {
  T t(Shape4{n, 1, d, d});
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd A(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) A(r, c) = rng.normal();
    spd::detail::set_matrix(t, i, A * A.transpose() / d + 0.5 * Eigen::MatrixXd::Identity(d, d));
  }
  return t;
}

// Symmetric matrices whose spectrum straddles eps, kept away from it.
T straddling_batch(int n, int d, double eps, Rng& rng) {
  T t(Shape4{n, 1, d, d});
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd Q = spd::random_semi_orthogonal(d, d, rng);
    Eigen::VectorXd l(d);
    for (int k = 0; k < d; ++k) l[k] = (k % 2 ? eps * rng.uniform(0.1, 0.5) : eps + rng.uniform(0.2, 1.5));
    spd::detail::set_matrix(t, i, linalg::symmetrize(Q.transpose() * l.asDiagonal() * Q));
  }
  return t;
}

// sum(y * R) with a fixed random R: a scalar that exercises every output entry
Var<double> project(Var<double> y, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdefULL);
  return sum(mul_const(y, T::randn(y.value().shape(), rng)));
}

T away_from_zero(const Shape4& s, Rng& rng) {
  T t = T::uniform(s, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (rng.uniform() < 0.5) t[i] = -t[i];
  return t;
}

using Suites = std::vector<GradcheckSuite>;

void add_layer_suites(Suites& s) {
  s.push_back({"conv2d", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{2, 3, 7, 6}, rng));
                 c.input("w", T::randn(Shape4{4, 3, 4, 4}, rng, 0.3));
                 return c.run([seed](Graph<double>&, const auto& v) { return project(conv2d(v[0], v[1], 2, 1), seed); });
               }});
  s.push_back({"deconv2d", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{2, 3, 4, 5}, rng));
                 c.input("w", T::randn(Shape4{3, 2, 4, 4}, rng, 0.3));
                 return c.run(
                     [seed](Graph<double>&, const auto& v) { return project(deconv2d(v[0], v[1], 2, 1), seed); });
               }});
  s.push_back({"channel_bias", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{2, 3, 3, 3}, rng));
                 c.input("b", T::randn(Shape4{1, 3, 1, 1}, rng));
                 return c.run(
                     [seed](Graph<double>&, const auto& v) { return project(add_channel_bias(v[0], v[1]), seed); });
               }});
  s.push_back({"batch_norm", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{3, 2, 3, 4}, rng));
                 c.input("gamma", T::uniform(Shape4{1, 2, 1, 1}, rng, 0.5, 1.5));
                 c.input("beta", T::randn(Shape4{1, 2, 1, 1}, rng));
                 return c.run([seed](Graph<double>&, const auto& v) {
                   return project(batch_norm(v[0], v[1], v[2], BatchStats<double>{}, NormMode::train), seed);
                 });
               }});
  s.push_back({"batch_norm_eval", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 ParamStore<double> store;
                 auto& m = store.add("m", T::randn(Shape4{1, 2, 1, 1}, rng), false);
                 auto& var = store.add("v", T::uniform(Shape4{1, 2, 1, 1}, rng, 0.5, 2.0), false);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{2, 2, 3, 3}, rng));
                 c.input("gamma", T::uniform(Shape4{1, 2, 1, 1}, rng, 0.5, 1.5));
                 c.input("beta", T::randn(Shape4{1, 2, 1, 1}, rng));
                 return c.run([&, seed](Graph<double>&, const auto& v) {
                   return project(batch_norm(v[0], v[1], v[2], BatchStats<double>{&m, &var}, NormMode::eval), seed);
                 });
               }});
  s.push_back({"instance_norm", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{2, 3, 3, 4}, rng));
                 c.input("gamma", T::uniform(Shape4{1, 3, 1, 1}, rng, 0.5, 1.5));
                 c.input("beta", T::randn(Shape4{1, 3, 1, 1}, rng));
                 return c.run([seed](Graph<double>&, const auto& v) {
                   return project(instance_norm(v[0], v[1], v[2]), seed);
                 });
               }});
  s.push_back({"spectral_norm", "layer", [](std::uint64_t seed) {
                 // sigma is a constant of the step, so it is frozen for both sides
                 Rng rng(seed);
                 const T w0 = T::randn(Shape4{4, 3, 3, 3}, rng, 0.3);
                 Eigen::VectorXd u = Eigen::VectorXd::Ones(4);
                 const double sigma = power_iteration(w0, u, 200).sigma;
                 GradChecker c;
                 c.input("x", T::randn(Shape4{1, 3, 5, 5}, rng));
                 c.input("w", w0);
                 return c.run([seed, sigma](Graph<double>&, const auto& v) {
                   return project(conv2d(v[0], SpectralNorm<double>::normalize_with(v[1], sigma), 1, 1), seed);
                 });
               }});
  auto act = [&s](const std::string& name, std::function<Var<double>(Var<double>)> f) {
    s.push_back({name, "layer", [f](std::uint64_t seed) {
                   Rng rng(seed);
                   GradChecker c;
                   c.input("x", away_from_zero(Shape4{2, 2, 3, 3}, rng));
                   return c.run([&f, seed](Graph<double>&, const auto& v) { return project(f(v[0]), seed); });
                 }});
  };
  act("relu", [](Var<double> x) { return relu(x); });
  act("leaky_relu", [](Var<double> x) { return leaky_relu(x, 0.2); });
  act("tanh", [](Var<double> x) { return tanh(x); });
  act("sigmoid", [](Var<double> x) { return sigmoid(x); });
  act("decode_lab", [](Var<double> x) { return decode_lab(reshape(x, Shape4{1, 3, 2, 6})); });
  act("replicate_channels", [](Var<double> x) { return replicate_channels(reshape(x, Shape4{4, 1, 3, 3}), 3); });
  act("reflect_pad", [](Var<double> x) { return reflect_pad(x, 2); });
  s.push_back({"concat_channels", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("a", T::randn(Shape4{2, 1, 3, 3}, rng));
                 c.input("b", T::randn(Shape4{2, 3, 3, 3}, rng));
                 return c.run(
                     [seed](Graph<double>&, const auto& v) { return project(concat_channels(v[0], v[1]), seed); });
               }});
  s.push_back({"blur", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", T::randn(Shape4{1, 2, 12, 11}, rng));
                 const BlurKernel k = build_blur_kernel();
                 return c.run([seed, &k](Graph<double>&, const auto& v) { return project(blur(v[0], k), seed); });
               }});
  s.push_back({"bimap", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", random_spd_batch(2, 6, rng));
                 c.input("w", spd::matrix_tensor<double>(spd::random_semi_orthogonal(3, 6, rng)));
                 return c.run([seed](Graph<double>&, const auto& v) { return project(spd::bimap(v[0], v[1]), seed); });
               }});
  s.push_back({"reeig", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c(1e-7);
                 c.input("x", straddling_batch(2, 5, 1e-4, rng));
                 return c.run([seed](Graph<double>&, const auto& v) {
                   // the layer reads sym(X), whose gradient is symmetric, so raw entries check directly
                   return project(spd::reeig(v[0], 1e-4), seed);
                 });
               }});
  s.push_back({"logeig", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("x", random_spd_batch(2, 5, rng));
                 return c.run([seed](Graph<double>&, const auto& v) {
                   return project(spd::logeig(v[0]), seed);
                 });
               }});
  s.push_back({"spd_score_head", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("L", T::randn(Shape4{3, 1, 4, 4}, rng));
                 c.input("S", T::randn(Shape4{1, 1, 4, 4}, rng));
                 c.input("b", T::randn(Shape4{1, 1, 1, 1}, rng));
                 return c.run([seed](Graph<double>&, const auto& v) {
                   return project(spd::frobenius_logit(v[0], v[1], v[2]), seed);
                 });
               }});
  s.push_back({"gram", "layer", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("F", T::randn(Shape4{2, 4, 3, 3}, rng));
                 return c.run([seed](Graph<double>&, const auto& v) { return project(gram(v[0], GramOptions{}), seed); });
               }});
}

void add_loss_suites(Suites& s) {
  auto scores = [](Rng& rng) { return T::uniform(Shape4{2, 1, 3, 3}, rng, 0.05, 0.95); };
  s.push_back({"gan_loss_d", "loss", [scores](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("real", scores(rng));
                 c.input("fake", scores(rng));
                 return c.run([](Graph<double>&, const auto& v) { return gan_loss_d(v[0], v[1]); });
               }});
  s.push_back({"gan_loss_g", "loss", [scores](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("fake", scores(rng));
                 return c.run([](Graph<double>&, const auto& v) { return gan_loss_g(v[0]); });
               }});
  s.push_back({"gan_loss_g_literal", "loss", [scores](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("fake", scores(rng));
                 LossOptions o;
                 o.literal_generator_loss = true;
                 return c.run([o](Graph<double>&, const auto& v) { return gan_loss_g(v[0], o); });
               }});
  s.push_back({"gan_loss_per_patch", "loss", [scores](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("real", scores(rng));
                 c.input("fake", scores(rng));
                 LossOptions o;
                 o.reduction = PatchReduction::log_then_mean;
                 return c.run([o](Graph<double>&, const auto& v) {
                   return add(gan_loss_d(v[0], v[1], o), gan_loss_g(v[1], o));
                 });
               }});
  s.push_back({"l1_loss", "loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("target", T::randn(Shape4{2, 3, 4, 4}, rng));
                 c.input("output", T::randn(Shape4{2, 3, 4, 4}, rng));
                 return c.run([](Graph<double>&, const auto& v) { return l1_loss(v[0], v[1]); });
               }});
  s.push_back({"color_loss", "loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("target", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 c.input("output", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 const BlurKernel k = build_blur_kernel();
                 return c.run([&k](Graph<double>&, const auto& v) {
                   return color_loss(decode_lab(v[0]), decode_lab(v[1]), k);
                 });
               }});
  s.push_back({"spd_adversarial_loss", "loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 SPDDiscConfig cfg;
                 cfg.head_init_sd = 0.5;
                 SPDDiscriminator d(cfg, rng);
                 SurrogateExtractor<double> ex;
                 GradChecker c;
                 c.input("real", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 c.input("fake", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 c.sample(40, seed);
                 return c.run([&](Graph<double>&, const auto& v) {
                   auto sr = sigmoid(d.logits_from_features(ex.forward(v[0], LayerTag::stage3), false));
                   auto sf = sigmoid(d.logits_from_features(ex.forward(v[1], LayerTag::stage3), false));
                   return add(gan_loss_d(sr, sf), gan_loss_g(sf));
                 });
               }});
  s.push_back({"full_objective", "loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 GradChecker c;
                 c.input("target", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 c.input("output", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 const BlurKernel k = build_blur_kernel();
                 return c.run([&k](Graph<double>&, const auto& v) {
                   auto pix = gan_loss_g(sigmoid(v[1]));
                   auto spd = gan_loss_g(sigmoid(scale(v[1], 0.5)));
                   return full_objective(pix, spd, l1_loss(v[0], v[1]), color_loss(decode_lab(v[0]), decode_lab(v[1]), k),
                                         LossWeights{}, ObjectiveFlags{});
                 });
               }});
}

void add_network_suites(Suites& s) {
  auto generator = [](NormKind kind) {
    return [kind](std::uint64_t seed) {
      Rng rng(seed);
      GeneratorConfig cfg;
      cfg.base_width = 2;
      cfg.residual_blocks = 1;
      cfg.norm = NormSpec{kind};
      Generator<double> gen(cfg, rng);
      GradChecker c;
      c.input("gray", T::uniform(Shape4{2, 1, 8, 8}, rng, -1, 1));
      for (auto& p : gen.params())
        if (p->trainable) c.param(*p);
      c.sample(24, seed);
      return c.run([&, seed](Graph<double>&, const auto& v) { return project(gen.forward(v[0], NetMode::train), seed); });
    };
  };
  s.push_back({"generator_instance_norm", "network", generator(NormKind::instance)});
  s.push_back({"generator_batch_norm", "network", generator(NormKind::batch)});
  auto patch = [](NormKind kind) {
    return [kind](std::uint64_t seed) {
      Rng rng(seed);
      PatchDiscConfig cfg;
      cfg.channels = {4, 4, 4, 4, 1};
      cfg.norm = NormSpec{kind};
      PatchDiscriminator<double> d(cfg, rng);
      GradChecker c;
      c.input("gray", T::uniform(Shape4{2, 1, 32, 32}, rng, -1, 1));
      c.input("color", T::uniform(Shape4{2, 3, 32, 32}, rng, -1, 1));
      for (auto& p : d.params())
        if (p->trainable) c.param(*p);
      c.sample(24, seed);
      return c.run([&](Graph<double>&, const auto& v) {
        return gan_loss_g(d.forward(v[0], v[1], NetMode::train, true, false));
      });
    };
  };
  s.push_back({"patch_disc_spectral", "network", patch(NormKind::spectral)});
  s.push_back({"patch_disc_instance", "network", patch(NormKind::instance)});
  s.push_back({"spd_discriminator", "network", [](std::uint64_t seed) {
                 Rng rng(seed);
                 SPDDiscConfig cfg;
                 cfg.dims = {8, 6, 4, 3};
                 cfg.head_init_sd = 0.5;
                 SPDDiscriminator d(cfg, rng);
                 GradChecker c;
                 c.input("features", T::randn(Shape4{2, 8, 5, 5}, rng));
                 for (auto& p : d.params()) c.param(*p);
                 return c.run([&](Graph<double>&, const auto& v) {
                   return gan_loss_g(sigmoid(d.logits_from_features(v[0], true)));
                 });
               }});
  s.push_back({"extractor_gram", "network", [](std::uint64_t seed) {
                 Rng rng(seed);
                 SurrogateExtractor<double> ex;
                 GradChecker c;
                 c.input("image", T::uniform(Shape4{1, 3, 12, 12}, rng, -0.9, 0.9));
                 c.sample(60, seed);
                 return c.run([&, seed](Graph<double>&, const auto& v) {
                   return project(gram(ex.forward(v[0], LayerTag::stage3), GramOptions{}), seed);
                 });
               }});
}

}  // namespace

const std::vector<GradcheckSuite>& gradcheck_registry() {
  static const Suites suites = [] {
    Suites s;
    add_layer_suites(s);
    add_loss_suites(s);
    add_network_suites(s);
    return s;
  }();
  return suites;
}

std::vector<GradcheckResult> run_gradcheck(const std::string& scope, int seeds, double tol) {
  if (scope != "all" && scope != "layer" && scope != "network" && scope != "loss")
    throw ConfigError("gradcheck scope must be layer, network, loss or all");
  std::vector<GradcheckResult> out;
  for (const auto& suite : gradcheck_registry()) {
    if (scope != "all" && suite.scope != scope) continue;
    GradcheckResult r{suite.name, suite.scope, 0.0, seeds, true};
    for (int s = 0; s < seeds; ++s) {
      const double e = suite.run(static_cast<std::uint64_t>(s));
      r.max_rel_error = std::isfinite(e) ? std::max(r.max_rel_error, e) : INFINITY;
    }
    r.passed = r.max_rel_error < tol;
    out.push_back(r);
  }
  return out;
}

std::string gradcheck_report(const std::vector<GradcheckResult>& results) {
  std::string s;
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-8s %-26s max_rel_err %.3e over %d seeds  %s\n", r.scope.c_str(), r.name.c_str(),
                  r.max_rel_error, r.seeds, r.passed ? "ok" : "FAIL");
    s += buf;
  }
  return s;
}

GradcheckSuite corrupted_bimap_suite() {
  return {"bimap_corrupted", "layer", [](std::uint64_t seed) {
            Rng rng(seed);
            GradChecker c;
            c.input("x", random_spd_batch(2, 6, rng));
            c.input("w", spd::matrix_tensor<double>(spd::random_semi_orthogonal(3, 6, rng)));
            return c.run([seed](Graph<double>&, const auto& v) { return project(bimap_corrupted(v[0], v[1]), seed); });
          }};
}

}  // namespace spdgan
