#include "spdgan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "spdgan/checkpoint.hpp"

namespace spdgan {

namespace fs = std::filesystem;

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed * 0x9E37u + stream); }

std::string losses_csv(const StepLosses& l) {
  std::string s;
  for (double v : {l.d_image, l.d_spd, l.g_pixel, l.g_spd, l.l1, l.color, l.total}) s += "," + fmt_metric(v);
  return s;
}

constexpr const char* kLossHeader = "d_image,d_spd,g_pixel,g_spd,l1,color,total";

AdamOptions adam(const TrainConfig& c, double lr) { return {lr, c.adam_beta1, c.adam_beta2, 1e-8}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string fmt_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
}

GeneratorConfig generator_config(const TrainConfig& c) {
  GeneratorConfig g;
  g.base_width = c.generator_width;
  g.residual_blocks = c.generator_blocks;
  g.norm = NormSpec{c.generator_norm};
  return g;
}

PatchDiscConfig patch_disc_config(const TrainConfig& c) {
  PatchDiscConfig p;
  p.norm = NormSpec{c.disc_norm};
  return p;
}

SPDDiscConfig spd_disc_config(const TrainConfig& c) {
  SPDDiscConfig s;
  s.dims = c.spd_dims;
  s.reeig_eps = c.reeig_eps;
  s.gram = GramOptions{c.gram_relative_ridge, c.gram_absolute_ridge};
  return s;
}

namespace {

template <typename T>
T seeded(std::uint64_t seed, std::uint64_t stream, auto&& make) {
  Rng rng(stream_seed(seed, stream));
  return make(rng);
}

}  // namespace

Model::Model(const TrainConfig& cfg)
    : config((cfg.validate(), cfg)),
      gen(seeded<Generator<float>>(cfg.seed, 1, [&](Rng& r) { return Generator<float>(generator_config(cfg), r); })),
      dimg(seeded<PatchDiscriminator<float>>(
          cfg.seed, 2, [&](Rng& r) { return PatchDiscriminator<float>(patch_disc_config(cfg), r); })),
      tag(parse_layer_tag(cfg.extractor_layer_tag)) {
  if (cfg.enable_spd_disc) {
    Rng r(stream_seed(cfg.seed, 3));
    dspd.emplace(spd_disc_config(cfg), r);
  }
}

void Model::save(const std::string& path) const {
  CheckpointWriter w(to_text(config));
  w.add(gen.params());
  w.add(const_cast<PatchDiscriminator<float>&>(dimg).params());
  if (dspd) w.add(const_cast<SPDDiscriminator&>(*dspd).params());
  w.write(path);
}

std::unique_ptr<Model> Model::load(const std::string& path) {
  auto m = std::make_unique<Model>(parse_config(checkpoint_config(path)));
  CheckpointReader r;
  r.add(m->gen.params());
  r.add(m->dimg.params());
  if (m->dspd) r.add(m->dspd->params());
  r.read(path);
  return m;
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      model_(cfg),
      kernel_(build_blur_kernel(cfg.normalize_blur)),
      train_(SyntheticDataset{cfg.dataset_seed, cfg.image_size}.images(Split::train, cfg.dataset_train)) {}

void Trainer::d_image_step(const Batch& b, const Tensor4<float>& fake, StepLosses& out) {
  const LossOptions lo = cfg_.loss_options();
  Graph<float> g;
  const auto gray = g.input(b.gray);
  const auto real_s = model_.dimg.forward(gray, g.input(b.color), NetMode::train, true, true);
  const auto fake_s = model_.dimg.forward(gray, g.input(fake), NetMode::train, true, false);
  const auto loss = gan_loss_d(real_s, fake_s, lo);
  out.d_image = loss.item();
  g.backward(loss);
  for (auto& p : model_.dimg.params()) grad_fault_ = !adam_step(*p, adam(cfg_, cfg_.alpha_D_image)) || grad_fault_;
  if (!grad_fault_) model_.dimg.renormalize();
}

void Trainer::d_spd_step(const Batch& b, const Tensor4<float>& fake, StepLosses& out) {
  auto& d = *model_.dspd;
  Graph<double> g;
  const auto real_f = model_.extractor.forward(g.input(b.color.cast<double>()), model_.tag);
  const auto fake_f = model_.extractor.forward(g.input(fake.cast<double>()), model_.tag);
  const auto real_s = sigmoid(d.logits_from_features(real_f, true));
  const auto fake_s = sigmoid(d.logits_from_features(fake_f, true));
  const auto loss = gan_loss_d(real_s, fake_s, cfg_.loss_options());
  out.d_spd = loss.item();
  g.backward(loss);
  for (auto& p : d.params())
    if (!p->grad.all_finite()) grad_fault_ = true;
  if (grad_fault_) return;
  d.step(cfg_.alpha_D_SPD, adam(cfg_, cfg_.alpha_D_SPD));
}

Var<float> generator_objective(Model& m, const TrainConfig& cfg, const BlurKernel& kernel, Var<float> gray,
                               Var<float> fake, const Tensor4<float>& target_color, LossBreakdown* out) {
  auto& g = *fake.graph();
  const LossOptions lo = cfg.loss_options();
  const auto pixel_g = gan_loss_g(m.dimg.forward(gray, fake, NetMode::train, false, false), lo);
  Var<float> spd_g;
  if (cfg.enable_spd_disc) {
    if (!m.dspd) throw ConfigError("SPD term requested but the model has no SPD discriminator");
    spd_g = in_double(fake, [&](Var<double> x) {
      return gan_loss_g(sigmoid(m.dspd->logits_from_features(m.extractor.forward(x, m.tag), false)), lo);
    });
  }
  const auto target = g.input(target_color);
  const auto l1 = l1_loss(target, fake);
  Var<float> col;
  if (cfg.enable_color_loss) col = color_loss(decode_lab(target), decode_lab(fake), kernel);
  return full_objective(pixel_g, spd_g, l1, col, cfg.weights(), cfg.flags(), out);
}

StepLosses Trainer::step(const Batch& b) {
  StepLosses out;
  Graph<float> g;
  const auto gray = g.input(b.gray);
  const auto fake = model_.gen.forward(gray, NetMode::train);
  const Tensor4<float> fake_value = fake.value();

  auto generator_update = [&] {
    LossBreakdown br;
    const auto total = generator_objective(model_, cfg_, kernel_, gray, fake, b.color, &br);
    out.g_pixel = br.gan_pixel;
    out.g_spd = br.gan_spd;
    out.l1 = br.l1;
    out.color = br.color;
    out.total = br.total;
    g.backward(total);
    for (auto& p : model_.gen.params()) grad_fault_ = !adam_step(*p, adam(cfg_, cfg_.alpha_G)) || grad_fault_;
  };

  if (cfg_.update_order == UpdateOrder::g_first) generator_update();
  d_image_step(b, fake_value, out);
  if (cfg_.enable_spd_disc && !grad_fault_) d_spd_step(b, fake_value, out);
  if (cfg_.update_order == UpdateOrder::d_image_d_spd_g && !grad_fault_) generator_update();
  return out;
}

void Trainer::check_finite(const StepLosses& l) const {
  for (double v : {l.d_image, l.d_spd, l.g_pixel, l.g_spd, l.l1, l.color, l.total})
    if (!std::isfinite(v)) throw NumericError("non-finite loss value");
  if (grad_fault_) throw NumericError("non-finite gradient");
}

RunRecord Trainer::run(const std::string& out_dir, const std::function<void(const EpochRecord&)>& on_epoch) {
  RunRecord rec;
  rec.config = cfg_;
  rec.out_dir = out_dir;
  const bool write = !out_dir.empty();
  std::ofstream steps_csv, epochs_csv;
  if (write) {
    fs::create_directories(out_dir);
    save_config(out_dir + "/config.txt", cfg_);
    epochs_csv.open(out_dir + "/epochs.csv", std::ios::binary);
    epochs_csv << "epoch," << kLossHeader << "\n";
    if (cfg_.log_steps) {
      steps_csv.open(out_dir + "/steps.csv", std::ios::binary);
      steps_csv << "step,epoch," << kLossHeader << "\n";
    }
  }
  const auto t_run = std::chrono::steady_clock::now();
  const std::uint64_t grams_before = gram_constructions();
  std::vector<int> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  const int per_epoch = static_cast<int>(train_.size()) / cfg_.batch_size;

  for (int epoch = 1; epoch <= cfg_.epochs && !rec.halted; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    Rng shuffle(stream_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<int>(i)))]);
    StepLosses sum;
    int done = 0;
    for (int s = 0; s < per_epoch; ++s) {
      const std::vector<int> idx(order.begin() + s * cfg_.batch_size, order.begin() + (s + 1) * cfg_.batch_size);
      StepLosses l;
      try {
        l = step(make_batch(train_, idx));
        check_finite(l);
      } catch (const NumericError& e) {
        rec.halted = true;
        rec.halt_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                          std::to_string(rec.steps + 1);
        if (write) {
          model_.save(out_dir + "/halt.spdg");
          write_text(out_dir + "/halt.txt", rec.halt_reason + "\nlast losses:" + losses_csv(l) + "\n");
        }
        break;
      }
      ++rec.steps;
      ++done;
      rec.step_losses.push_back(l);
      if (steps_csv.is_open()) steps_csv << rec.steps << "," << epoch << losses_csv(l) << "\n";
      for (auto [acc, v] : {std::pair{&sum.d_image, l.d_image}, {&sum.d_spd, l.d_spd}, {&sum.g_pixel, l.g_pixel},
                            {&sum.g_spd, l.g_spd}, {&sum.l1, l.l1}, {&sum.color, l.color}, {&sum.total, l.total}})
        *acc += v;
    }
    if (rec.halted) break;
    EpochRecord er;
    er.epoch = epoch;
    for (auto [dst, v] : {std::pair{&er.mean.d_image, sum.d_image}, {&er.mean.d_spd, sum.d_spd},
                          {&er.mean.g_pixel, sum.g_pixel}, {&er.mean.g_spd, sum.g_spd}, {&er.mean.l1, sum.l1},
                          {&er.mean.color, sum.color}, {&er.mean.total, sum.total}})
      *dst = v / done;
    er.seconds = seconds_since(t_epoch);
    rec.epochs.push_back(er);
    if (epochs_csv.is_open()) {
      epochs_csv << epoch << losses_csv(er.mean) << "\n";
      epochs_csv.flush();
    }
    if (write && cfg_.checkpoint_every > 0 && epoch % cfg_.checkpoint_every == 0 && epoch != cfg_.epochs) {
      char name[64];
      std::snprintf(name, sizeof name, "/epoch%04d.spdg", epoch);
      model_.save(out_dir + name);
      rec.checkpoints.push_back(out_dir + name);
    }
    if (on_epoch) on_epoch(er);
  }
  rec.grams_built = gram_constructions() - grams_before;
  rec.seconds = seconds_since(t_run);
  if (write) {
    if (!rec.halted) {
      model_.save(out_dir + "/final.spdg");
      rec.checkpoints.push_back(out_dir + "/final.spdg");
    }
    std::string manifest = "config = config.txt\n";
    manifest += "epochs_completed = " + std::to_string(rec.epochs.size()) + "\n";
    manifest += "steps = " + std::to_string(rec.steps) + "\n";
    manifest += "gram_constructions = " + std::to_string(rec.grams_built) + "\n";
    manifest += std::string("halted = ") + (rec.halted ? "true" : "false") + "\n";
    if (rec.halted) manifest += "halt_reason = " + rec.halt_reason + "\n";
    for (const auto& c : rec.checkpoints) manifest += "checkpoint = " + fs::path(c).filename().string() + "\n";
    write_text(out_dir + "/manifest.txt", manifest);
  }
  return rec;
}

// ---------------------------------------------------------------------------

std::vector<ImageRGB> colorize(Model& m, const std::vector<ImageRGB>& images) {
  std::vector<ImageRGB> out;
  for (const auto& img : images) {
    const Tensor4<float> coded = m.gen.infer(gray_tensor(img));
    out.push_back(lab_to_rgb(lab_image(decode_lab(coded), 0)));
  }
  return out;
}

MetricRow evaluate_images(const std::vector<ImageRGB>& reference, const std::vector<ImageRGB>& candidates,
                          const SurrogateExtractor<double>& extractor, std::string run_id, int epoch) {
  if (reference.size() != candidates.size() || reference.empty())
    throw InvalidInput("evaluation needs equally many reference and candidate images");
  MetricRow r;
  r.run_id = std::move(run_id);
  r.epoch = epoch;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    r.psnr += psnr(reference[i], candidates[i]);
    r.ssim += ssim(reference[i], candidates[i]);
    r.colorfulness += colorfulness(candidates[i]);
  }
  const double n = static_cast<double>(reference.size());
  r.psnr /= n;
  r.ssim /= n;
  r.colorfulness /= n;
  r.fid = fid(embed_set(reference, extractor), embed_set(candidates, extractor));
  return r;
}

MetricRow evaluate(Model& m, std::string run_id, int epoch) {
  const auto held = SyntheticDataset{m.config.dataset_seed, m.config.image_size}.images(Split::heldout,
                                                                                         m.config.dataset_heldout);
  return evaluate_images(held, colorize(m, held), m.extractor, std::move(run_id), epoch);
}

std::string metric_csv_header() { return "run_id,epoch,psnr,ssim,fid,colorfulness\n"; }

std::string metric_csv_row(const MetricRow& r) {
  return r.run_id + "," + std::to_string(r.epoch) + "," + fmt_metric(r.psnr) + "," + fmt_metric(r.ssim) + "," +
         fmt_metric(r.fid) + "," + fmt_metric(r.colorfulness) + "\n";
}

std::string metric_table(const std::vector<MetricRow>& rows) {
  std::string s = "| Method | PSNR | SSIM | FID | Colorfulness |\n|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    char p[32] = "inf";
    if (!std::isinf(r.psnr)) std::snprintf(p, sizeof p, "%.3f", r.psnr);
    std::snprintf(buf, sizeof buf, "| %s | %s | %.4f | %.4f | %.3f |\n", r.run_id.c_str(), p, r.ssim, r.fid,
                  r.colorfulness);
    s += buf;
  }
  return s;
}

}  // namespace spdgan
