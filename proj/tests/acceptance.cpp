// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// usage: acceptance [--only 1,4,10] [--out DIR]

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spdgan/experiments.hpp"
#include "spdgan/gradcheck.hpp"
#include "spdgan/losses.hpp"
#include "spdgan/spdnet.hpp"
#include "spdgan/trainer.hpp"

using namespace spdgan;
namespace fs = std::filesystem;
using Eigen::MatrixXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool bitwise(const Tensor4<float>& a, const Tensor4<float>& b) {
  return a.shape() == b.shape() && std::equal(a.data(), a.data() + a.size(), b.data());
}

bool bitwise(const Tensor4<double>& a, const Tensor4<double>& b) {
  return a.shape() == b.shape() && std::equal(a.data(), a.data() + a.size(), b.data());
}

double max_asym(const MatrixXd& M) { return (M - M.transpose()).cwiseAbs().maxCoeff(); }

fs::path g_out;

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck("all", 5, 1e-3);
  const double secs = seconds_since(t0);
  std::printf("%s", gradcheck_report(results).c_str());
  int failed = 0;
  double worst = 0;
  for (const auto& r : results) {
    if (!r.passed) ++failed;
    worst = std::max(worst, r.max_rel_error);
  }
  // the checker has to notice a wrong gradient
  const auto bad = corrupted_bimap_suite();
  double bad_err = 0;
  for (std::uint64_t s = 0; s < 5; ++s) bad_err = std::max(bad_err, bad.run(s));
  const bool caught = bad_err > 1e-3;
  Outcome o;
  o.pass = failed == 0 && secs < 300 && !results.empty() && caught;
  o.detail = std::to_string(results.size()) + " suites x 5 seeds, " + std::to_string(failed) + " failed, max rel err " +
             fmt("%.3g", worst) + ", " + fmt("%.1f", secs) + " s, corrupted BiMap err " + fmt("%.3g", bad_err) +
             (caught ? " (caught)" : " (NOT caught)");
  return o;
}

Outcome spd_invariants() {
  Rng rng(2718);
  ParamStore<double> store;
  spd::SPDNetStack stack(store, "acc", {32, 16, 8, 4}, 1e-4, rng);
  const double eps = stack.eps();
  double asym = 0, min_eig = INFINITY;
  for (int k = 0; k < 1000; ++k) {
    MatrixXd A(32, 32);
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) A(i, j) = rng.normal();
    // spread of scales so ReEig clamps some of the inputs
    const double scale = std::pow(10.0, rng.uniform(-6, 1));
    MatrixXd X = scale * (A * A.transpose()) / 32.0 + 1e-9 * MatrixXd::Identity(32, 32);
    X = 0.5 * (X + X.transpose());
    std::vector<MatrixXd> trace;
    const MatrixXd Y = stack.forward(X, &trace);
    asym = std::max(asym, max_asym(Y));
    for (std::size_t t = 0; t < trace.size(); ++t) {
      asym = std::max(asym, max_asym(trace[t]));
      if (t % 2 == 1) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(trace[t], Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
      }
    }
    // one Riemannian update per input from a real backward pass
    Graph<double> g;
    Tensor4<double> xt(Shape4{1, 1, 32, 32});
    xt.matrix(0, 0) = X;
    Tensor4<double> R(Shape4{1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) R.data()[i] = rng.normal();
    g.backward(sum(mul_const(spd::logeig(stack.forward(g.input(xt), true)), R)));
    for (auto& b : stack.blocs()) b.step(1e-2);
  }
  double ortho = 0;
  for (const auto& b : stack.blocs()) ortho = std::max(ortho, spd::orthonormality_error(b.weight_matrix()));
  Outcome o;
  o.pass = asym <= 1e-8 && min_eig >= eps * (1 - 1e-6) && ortho <= 1e-6;
  o.detail = "max asymmetry " + fmt("%.3g", asym) + ", min post-ReEig eigenvalue " + fmt("%.6g", min_eig) +
             " (eps " + fmt("%g", eps) + "), orthonormality error after 1000 updates " + fmt("%.3g", ortho);
  return o;
}

Outcome spectral() {
  TrainConfig c;
  c.image_size = 32;
  c.dataset_train = 16;
  c.generator_width = 8;
  c.generator_blocks = 2;
  Trainer t(c);
  const auto& imgs = t.train_images();
  double lo = INFINITY, hi = -INFINITY;
  std::string per;
  int done = 0;
  for (int target : {0, 1, 10, 50, 100}) {
    for (; done < target; ++done) {
      const int s = (done * 4) % static_cast<int>(imgs.size());
      t.step(make_batch(imgs, {s, s + 1, s + 2, s + 3}));
    }
    auto& d = t.model().dimg;
    double a = INFINITY, b = -INFINITY;
    for (std::size_t i = 0; i < d.layer_count(); ++i) {
      const MatrixXd W = spdgan::detail::weight_matrix(d.effective_weight(i)).cast<double>();
      Eigen::JacobiSVD<MatrixXd> svd(W);
      const double s = svd.singularValues()[0];
      a = std::min(a, s);
      b = std::max(b, s);
    }
    lo = std::min(lo, a);
    hi = std::max(hi, b);
    per += " " + std::to_string(target) + ":[" + fmt("%.6f", a) + "," + fmt("%.6f", b) + "]";
  }
  Outcome o;
  o.pass = lo >= 0.999 && hi <= 1.001;
  o.detail = "sigma_max over all layers after N steps" + per;
  return o;
}

Outcome blur_kernel() {
  const BlurKernel k = build_blur_kernel();
  const double ratio = k.at(3, 0) / k.at(0, 0);
  const double err = std::abs(ratio - std::exp(-0.5));
  Outcome o;
  o.pass = k.at(0, 0) == 0.053 && err <= 1e-12 && k.weights.rows() == 21 && k.weights.cols() == 21;
  o.detail = "B(0,0) = " + fmt("%.17g", k.at(0, 0)) + ", |B(3,0)/B(0,0) - e^-0.5| = " + fmt("%.3g", err);
  return o;
}

Outcome metric_oracles() {
  std::vector<std::string> bad;
  std::ostringstream d;

  ImageRGB a(16, 12), b(16, 12);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = static_cast<std::uint8_t>(20 + (i * 7) % 200);
    b.pixels[i] = static_cast<std::uint8_t>(a.pixels[i] + 10);
  }
  const double p = psnr(a, b), p_ref = 10 * std::log10(255.0 * 255.0 / 100.0);
  if (!(std::abs(p - p_ref) <= 1e-6 && std::abs(p - 28.13) < 5e-3)) bad.push_back("psnr");
  d << "psnr " << fmt("%.6f", p);

  const double s = ssim(a, a);
  if (std::abs(s - 1.0) > 1e-12) bad.push_back("ssim");
  d << ", ssim(x,x) " << fmt("%.12g", s);

  Rng rng(11);
  MatrixXd E(40, 5);
  for (int i = 0; i < E.size(); ++i) E.data()[i] = rng.normal();
  const EmbedStats st = embed_stats(E, "acc");
  const double f0 = fid(st, st);
  if (!(std::abs(f0) <= 1e-8)) bad.push_back("fid identical");
  d << ", fid(same) " << fmt("%.3g", f0);

  // 1-D: (0-0)^2 + 4 + 1 - 2 sqrt(4) = 1
  const EmbedStats one{Eigen::VectorXd::Zero(1), MatrixXd::Constant(1, 1, 4.0), "e"};
  const EmbedStats two{Eigen::VectorXd::Zero(1), MatrixXd::Constant(1, 1, 1.0), "e"};
  const double f1 = fid(one, two);
  if (!(std::abs(f1 - 1.0) <= 1e-6)) bad.push_back("fid 1-d");
  d << ", fid 1-d " << fmt("%.12g", f1);

  ImageRGB gray(20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      for (int c = 0; c < 3; ++c) gray.at(x, y, c) = static_cast<std::uint8_t>(x * 12 + y);
  const double cf = colorfulness(gray);
  if (cf != 0.0) bad.push_back("colorfulness");
  d << ", colorfulness(gray) " << cf;

  const Tensor4<double> F = Tensor4<double>::randn(Shape4{2, 8, 6, 5}, rng);
  const GramOptions opt;
  double gerr = 0;
  for (int n = 0; n < 2; ++n) {
    const GramDescriptor gd = gram_descriptor(F, n, opt);
    MatrixXd brute(8, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        double acc = 0;
        for (int y = 0; y < 6; ++y)
          for (int x = 0; x < 5; ++x) acc += F(n, i, y, x) * F(n, j, y, x);
        brute(i, j) = acc / 30.0;
      }
    brute.diagonal().array() += opt.absolute_ridge + opt.relative_ridge * brute.trace() / 8.0;
    gerr = std::max(gerr, (gd.G.matrix() - brute).cwiseAbs().maxCoeff());
  }
  if (!(gerr <= 1e-8)) bad.push_back("gram");
  d << ", gram err " << fmt("%.3g", gerr);

  Outcome o;
  o.pass = bad.empty();
  o.detail = d.str();
  for (const auto& x : bad) o.detail += " [bad: " + x + "]";
  return o;
}

Outcome loss_identities() {
  const LossWeights w;
  const double total = full_objective(1.0, 4.0, 0.03, w);
  TrainConfig c;
  c.image_size = 32;
  c.dataset_train = 8;
  c.dataset_heldout = 4;
  c.generator_width = 8;
  c.generator_blocks = 2;
  const ObjectiveProbe p = probe_objectives(c);
  const double ea = std::abs(p.a.total - (w.lambda_i * p.a.gan_pixel + w.lambda_l1 * p.a.l1));
  const double eb = std::abs((p.b.total - p.a.total) - w.lambda_spd * p.b.gan_spd);
  const double ec = std::abs((p.c.total - p.b.total) - w.lambda_color * p.c.color);
  // float accumulation of the weighted sum
  const double tol = 1e-6 * std::max({1.0, std::abs(p.c.total)});
  const bool flags = !p.a.spd_term && !p.a.color_term && p.b.spd_term && !p.b.color_term && p.c.spd_term &&
                     p.c.color_term && p.grams_a == 0 && p.grams_b > 0 && p.grams_c > 0;
  const bool shared = p.b.gan_pixel == p.c.gan_pixel && p.b.gan_spd == p.c.gan_spd && p.a.l1 == p.b.l1 &&
                      p.b.l1 == p.c.l1 && p.a.gan_pixel == p.b.gan_pixel;
  Outcome o;
  o.pass = std::abs(total - 1.024) <= 1e-12 && ea <= tol && eb <= tol && ec <= tol && flags && shared;
  o.detail = "full_objective(1,4,0.03) = " + fmt("%.15g", total) + "; (a) " + fmt("%.6f", p.a.total) + " (b) " +
             fmt("%.6f", p.b.total) + " (c) " + fmt("%.6f", p.c.total) + "; residuals " + fmt("%.2g", ea) + "/" +
             fmt("%.2g", eb) + "/" + fmt("%.2g", ec) + "; grams " + std::to_string(p.grams_a) + "/" +
             std::to_string(p.grams_b) + "/" + std::to_string(p.grams_c);
  return o;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome training_trend() {
  const TrainConfig c;  // defaults
  const auto t0 = std::chrono::steady_clock::now();
  Trainer t(c);
  const RunRecord rec = t.run((g_out / "trend").string(), [](const EpochRecord& e) {
    if (e.epoch == 1 || e.epoch % 20 == 0)
      std::printf("  epoch %d l1 %.4f colour %.2f (%.1f s)\n", e.epoch, e.mean.l1, e.mean.color, e.seconds);
    std::fflush(stdout);
  });
  const double secs = seconds_since(t0);
  bool finite = true;
  for (const auto& s : rec.step_losses)
    for (double v : {s.d_image, s.d_spd, s.g_pixel, s.g_spd, s.l1, s.color, s.total}) finite = finite && std::isfinite(v);
  Outcome o;
  if (rec.halted || rec.epochs.size() != static_cast<std::size_t>(c.epochs)) {
    o.detail = "run halted: " + rec.halt_reason;
    return o;
  }
  const double l1_first = rec.epochs.front().mean.l1, l1_last = rec.epochs.back().mean.l1;

  const SyntheticDataset ds{static_cast<std::uint64_t>(c.dataset_seed), c.image_size};
  const auto held = ds.images(Split::heldout, c.dataset_heldout);
  const auto out = colorize(t.model(), held);
  double p_model = 0, p_gray = 0;
  std::vector<double> L, Y;
  for (std::size_t i = 0; i < held.size(); ++i) {
    p_model += psnr(held[i], out[i]) / static_cast<double>(held.size());
    p_gray += psnr(held[i], gray_replicated(held[i])) / static_cast<double>(held.size());
    const ImageLab lab = rgb_to_lab(out[i]);
    for (int y = 0; y < held[i].height; ++y)
      for (int x = 0; x < held[i].width; ++x) {
        L.push_back(lab.at(x, y, 0));
        Y.push_back(luma601(held[i].at(x, y, 0), held[i].at(x, y, 1), held[i].at(x, y, 2)));
      }
  }
  write_png((g_out / "trend" / "heldout_samples.png").string(),
            sample_sheet(std::vector<ImageRGB>(held.begin(), held.begin() + 6),
                         std::vector<ImageRGB>(out.begin(), out.begin() + 6)));
  o.pass = finite && l1_last <= 0.5 * l1_first && p_model - p_gray >= 2.0;
  o.detail = "L1 epoch 1 " + fmt("%.4f", l1_first) + " -> epoch " + std::to_string(c.epochs) + " " +
             fmt("%.4f", l1_last) + " (ratio " + fmt("%.3f", l1_last / l1_first) + "), finite " +
             (finite ? "yes" : "no") + ", held-out PSNR " + fmt("%.3f", p_model) + " dB vs gray " +
             fmt("%.3f", p_gray) + " dB (gain " + fmt("%.3f", p_model - p_gray) + "), L-vs-luma r " +
             fmt("%.4f", pearson(L, Y)) + ", " + fmt("%.0f", secs) + " s";
  return o;
}

Outcome ablation_trend() {
  TrainConfig base;
  base.image_size = 32;
  base.dataset_train = 96;
  base.dataset_heldout = 24;
  base.epochs = 40;
  base.log_steps = false;
  std::vector<double> ca, cc;
  std::ostringstream rows;
  rows << "seed,run,colorfulness,psnr,ssim,fid,halted\n";
  for (int seed : {42, 43, 44}) {
    base.seed = seed;
    const auto runs = run_ablation(base, (g_out / ("ablation_seed" + std::to_string(seed))).string());
    for (const auto& r : runs) {
      rows << seed << ',' << r.label << ',' << fmt_metric(r.metrics.colorfulness) << ',' << fmt_metric(r.metrics.psnr)
           << ',' << fmt_metric(r.metrics.ssim) << ',' << fmt_metric(r.metrics.fid) << ',' << r.halted << '\n';
      if (r.label == "a") ca.push_back(r.metrics.colorfulness);
      if (r.label == "c") cc.push_back(r.metrics.colorfulness);
    }
    std::printf("  seed %d: colourfulness a %.3f c %.3f\n", seed, ca.back(), cc.back());
    std::fflush(stdout);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double ma = median(ca), mc = median(cc);
  const bool pass = mc >= ma;
  rows << "median,a," << fmt_metric(ma) << ",,,,\nmedian,c," << fmt_metric(mc) << ",,,,\n"
       << "check,c>=a," << (pass ? "PASS" : "FAIL") << ",,,,\n";
  write_text((g_out / "ablation_trend.csv").string(), rows.str());
  Outcome o;
  o.pass = pass;
  o.detail = "median held-out colourfulness over seeds 42-44: (a) " + fmt("%.3f", ma) + ", (c) " + fmt("%.3f", mc) +
             "; report " + (g_out / "ablation_trend.csv").string();
  return o;
}

Outcome reproducibility() {
  TrainConfig c;
  c.image_size = 32;
  c.dataset_train = 12;
  c.dataset_heldout = 4;
  c.generator_width = 8;
  c.generator_blocks = 2;
  c.epochs = 2;
  const std::string a = (g_out / "repro_a").string(), b = (g_out / "repro_b").string();
  Trainer(c).run(a);
  Trainer(c).run(b);
  std::vector<std::string> diff;
  for (const char* f : {"steps.csv", "epochs.csv", "final.spdg"}) {
    const std::string x = slurp(a + "/" + f), y = slurp(b + "/" + f);
    if (x.empty() || x != y) diff.push_back(f);
  }

  // round trip: same forward outputs from the reloaded networks
  const auto loaded = Model::load(a + "/final.spdg");
  const auto again = Model::load(a + "/final.spdg");
  Trainer fresh(c);
  fresh.run("");
  Model& orig = fresh.model();
  const Batch batch = make_batch(fresh.train_images(), {0, 1, 2, 3});
  const Tensor4<float> go = orig.gen.infer(batch.gray), gl = loaded->gen.infer(batch.gray);
  Graph<float> g1, g2;
  const Tensor4<float> d1 = orig.dimg.forward(g1.input(batch.gray), g1.input(batch.color), NetMode::eval, false, false).value();
  const Tensor4<float> d2 =
      loaded->dimg.forward(g2.input(batch.gray), g2.input(batch.color), NetMode::eval, false, false).value();
  Tensor4<double> feats = orig.extractor.extract(batch.color.cast<double>(), orig.tag);
  Graph<double> h1, h2;
  const Tensor4<double> s1 = orig.dspd->logits_from_features(h1.input(feats), false).value();
  const Tensor4<double> s2 = loaded->dspd->logits_from_features(h2.input(feats), false).value();
  const bool gen_same = bitwise(go, gl) && bitwise(gl, again->gen.infer(batch.gray));
  const bool disc_same = bitwise(d1, d2) && bitwise(s1, s2);

  // re-saving the loaded model reproduces the file
  loaded->save((g_out / "repro_resaved.spdg").string());
  const bool resave = slurp(a + "/final.spdg") == slurp((g_out / "repro_resaved.spdg").string());

  Outcome o;
  o.pass = diff.empty() && gen_same && disc_same && resave;
  o.detail = std::string("steps.csv/epochs.csv/final.spdg ") + (diff.empty() ? "identical" : "DIFFER") +
             ", reloaded generator " + (gen_same ? "bitwise equal" : "DIFFERS") + ", discriminators " +
             (disc_same ? "bitwise equal" : "DIFFER") + ", re-save " + (resave ? "identical" : "DIFFERS");
  for (const auto& f : diff) o.detail += " [" + f + "]";
  return o;
}

Outcome patch_geometry() {
  const PatchDiscConfig pc = patch_disc_config(TrainConfig{});
  const int predicted = patch_map_size(256, pc);
  Rng rng(3);
  PatchDiscriminator<float> d(pc, rng);
  Graph<float> g;
  const auto gray = Tensor4<float>::uniform(Shape4{1, 1, 256, 256}, rng, -1, 1);
  const auto color = Tensor4<float>::uniform(Shape4{1, 3, 256, 256}, rng, -1, 1);
  const Shape4 s = d.forward(g.input(gray), g.input(color), NetMode::eval, false, false).value().shape();
  Outcome o;
  o.pass = predicted == 30 && s == Shape4{1, 1, 30, 30};
  o.detail = "patch_map_size(256) = " + std::to_string(predicted) + ", forward output " + s.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  g_out = fs::temp_directory_path() / "spdgan_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--only 1,2,...] [--out DIR]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradients},
      {"SPD chain invariants", spd_invariants},
      {"spectral normalisation", spectral},
      {"blur kernel constants", blur_kernel},
      {"metric oracles", metric_oracles},
      {"loss identities", loss_identities},
      {"desk-scale training trend", training_trend},
      {"ablation colourfulness trend", ablation_trend},
      {"reproducibility", reproducibility},
      {"patch discriminator geometry", patch_geometry},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
