#include "spdgan/experiments.hpp"

#include <filesystem>

#include "spdgan/plot.hpp"

namespace spdgan {

namespace fs = std::filesystem;

ImageRGB sample_sheet(const std::vector<ImageRGB>& truth, const std::vector<ImageRGB>& output) {
  if (truth.empty() || truth.size() != output.size()) throw InvalidInput("sample sheet needs matching image lists");
  const int w = truth[0].width, h = truth[0].height, gap = 2;
  ImageRGB sheet(3 * w + 2 * gap, static_cast<int>(truth.size()) * (h + gap) - gap);
  std::fill(sheet.pixels.begin(), sheet.pixels.end(), std::uint8_t{255});
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const ImageRGB gray = gray_replicated(truth[r]);
    const ImageRGB* cols[3] = {&gray, &output[r], &truth[r]};
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int k = 0; k < 3; ++k)
            sheet.at(c * (w + gap) + x, static_cast<int>(r) * (h + gap) + y, k) = cols[c]->at(x, y, k);
  }
  return sheet;
}

std::vector<NormGridRow> run_norm_grid(const TrainConfig& base, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<NormGridRow> rows;
  std::vector<MetricRow> metrics;
  for (NormKind g : {NormKind::batch, NormKind::instance})
    for (NormKind d : {NormKind::batch, NormKind::instance, NormKind::spectral}) {
      TrainConfig cfg = base;
      cfg.generator_norm = g;
      cfg.disc_norm = d;
      const std::string id = "G-" + to_string(g) + "_D-" + to_string(d);
      Trainer t(cfg);
      const RunRecord rec = t.run(out_dir + "/" + id);
      NormGridRow row{g, d, evaluate(t.model(), id, static_cast<int>(rec.epochs.size())), rec.halted};
      rows.push_back(row);
      metrics.push_back(row.metrics);
    }
  std::string csv = "generator_norm,disc_norm,halted," + metric_csv_header();
  for (const auto& r : rows)
    csv += to_string(r.generator_norm) + "," + to_string(r.disc_norm) + "," + (r.halted ? "true" : "false") + "," +
           metric_csv_row(r.metrics);
  write_text(out_dir + "/norm_grid.csv", csv);
  write_text(out_dir + "/norm_grid.md", metric_table(metrics));
  return rows;
}

std::vector<BlocCurve> run_bloc_study(const TrainConfig& base, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<std::vector<int>> settings{{32, 16}, {32, 16, 8}, {32, 16, 8, 4}};
  std::vector<BlocCurve> curves;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    TrainConfig cfg = base;
    cfg.enable_spd_disc = true;
    cfg.spd_dims = settings[i];
    BlocCurve c{std::to_string(i + 1) + "-bloc", settings[i], {}, {}};
    Trainer t(cfg);
    const RunRecord rec = t.run(out_dir + "/" + c.label);
    for (const auto& s : rec.step_losses) c.d_spd_loss.push_back(s.d_spd);
    for (const auto& e : rec.epochs) c.d_spd_epoch.push_back(e.mean.d_spd);
    curves.push_back(std::move(c));
  }
  std::string csv = "step", ecsv = "epoch";
  for (const auto& c : curves) {
    csv += "," + c.label;
    ecsv += "," + c.label;
  }
  csv += "\n";
  ecsv += "\n";
  std::size_t n = 0, ne = 0;
  for (const auto& c : curves) {
    n = std::max(n, c.d_spd_loss.size());
    ne = std::max(ne, c.d_spd_epoch.size());
  }
  for (std::size_t i = 0; i < n; ++i) {
    csv += std::to_string(i + 1);
    for (const auto& c : curves) csv += "," + (i < c.d_spd_loss.size() ? fmt_metric(c.d_spd_loss[i]) : "");
    csv += "\n";
  }
  for (std::size_t i = 0; i < ne; ++i) {
    ecsv += std::to_string(i + 1);
    for (const auto& c : curves) ecsv += "," + (i < c.d_spd_epoch.size() ? fmt_metric(c.d_spd_epoch[i]) : "");
    ecsv += "\n";
  }
  write_text(out_dir + "/bloc_study.csv", csv);
  write_text(out_dir + "/bloc_study_epochs.csv", ecsv);
  const std::array<std::uint8_t, 3> colors[3] = {{200, 40, 40}, {40, 120, 200}, {40, 160, 60}};
  std::vector<Series> series;
  for (std::size_t i = 0; i < curves.size(); ++i) series.push_back({curves[i].label, curves[i].d_spd_loss, colors[i]});
  write_png(out_dir + "/bloc_study.png", render_line_plot(series));
  return curves;
}

ObjectiveProbe probe_objectives(const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  cfg.enable_spd_disc = true;
  cfg.enable_color_loss = true;
  Model m(cfg);
  const auto imgs = SyntheticDataset{cfg.dataset_seed, cfg.image_size}.images(Split::train, cfg.batch_size);
  std::vector<int> idx(imgs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  const Batch b = make_batch(imgs, idx);
  const BlurKernel k = build_blur_kernel(cfg.normalize_blur);
  ObjectiveProbe p;
  auto eval = [&](bool spd, bool color, LossBreakdown& out, std::uint64_t& grams) {
    TrainConfig c = cfg;
    c.enable_spd_disc = spd;
    c.enable_color_loss = color;
    const std::uint64_t before = gram_constructions();
    Graph<float> g;
    const auto gray = g.input(b.gray);
    // eval mode keeps batch statistics out of the comparison
    const auto fake = m.gen.forward(gray, NetMode::eval, false);
    generator_objective(m, c, k, gray, fake, b.color, &out);
    grams = gram_constructions() - before;
  };
  eval(false, false, p.a, p.grams_a);
  eval(true, false, p.b, p.grams_b);
  eval(true, true, p.c, p.grams_c);
  return p;
}

std::vector<AblationRun> run_ablation(const TrainConfig& base, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const struct {
    const char* label;
    bool spd, color;
  } settings[3] = {{"a", false, false}, {"b", true, false}, {"c", true, true}};
  const auto held = SyntheticDataset{base.dataset_seed, base.image_size}.images(Split::heldout, base.dataset_heldout);
  const std::vector<ImageRGB> shown(held.begin(), held.begin() + std::min<std::size_t>(4, held.size()));
  std::vector<AblationRun> runs;
  std::vector<MetricRow> metrics;
  for (const auto& s : settings) {
    TrainConfig cfg = base;
    cfg.enable_spd_disc = s.spd;
    cfg.enable_color_loss = s.color;
    Trainer t(cfg);
    const std::string dir = out_dir + "/" + s.label;
    const RunRecord rec = t.run(dir);
    AblationRun r{s.label, s.spd, s.color, evaluate(t.model(), s.label, static_cast<int>(rec.epochs.size())),
                  rec.grams_built, rec.halted};
    write_png(dir + "/samples.png", sample_sheet(shown, colorize(t.model(), shown)));
    runs.push_back(r);
    metrics.push_back(r.metrics);
  }
  std::string csv = "setting,enable_spd_disc,enable_color_loss,gram_constructions,halted," + metric_csv_header();
  for (const auto& r : runs)
    csv += r.label + "," + (r.enable_spd_disc ? "true" : "false") + "," + (r.enable_color_loss ? "true" : "false") +
           "," + std::to_string(r.grams_built) + "," + (r.halted ? "true" : "false") + "," + metric_csv_row(r.metrics);
  write_text(out_dir + "/ablation.csv", csv);
  write_text(out_dir + "/ablation.md", metric_table(metrics));
  return runs;
}

}  // namespace spdgan
