#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "spdgan/experiments.hpp"
#include "spdgan/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace spdgan;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* app, ConfigArgs& a) {
  app->add_option("--config", a.path, "flat key = value config file");
  app->add_option("--set", a.overrides, "override one key, e.g. --set epochs=5")->take_all();
}

TrainConfig build_config(const ConfigArgs& a) {
  TrainConfig c = a.path.empty() ? TrainConfig{} : load_config(a.path);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_key(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) c.seed = *a.seed;
  c.validate();
  return c;
}

std::vector<fs::path> png_inputs(const std::string& in) {
  std::vector<fs::path> out;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in))
      if (e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
  } else {
    out.emplace_back(in);
  }
  if (out.empty()) throw IoError("no PNG images found in " + in);
  return out;
}

void print_epoch(const EpochRecord& e) {
  std::printf("epoch %4d  d_image %.4f  d_spd %.4f  g_pixel %.4f  g_spd %.4f  l1 %.4f  color %.2f  (%.1fs)\n", e.epoch,
              e.mean.d_image, e.mean.d_spd, e.mean.g_pixel, e.mean.g_spd, e.mean.l1, e.mean.color, e.seconds);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPD-manifold GAN colourisation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "overrides the config seed");

  ConfigArgs train_args, grid_args, bloc_args, abl_args;
  std::string train_out = "runs/train", grid_out = "runs/norm_grid", bloc_out = "runs/bloc_study",
              abl_out = "runs/ablation";
  auto* train = app.add_subcommand("train", "train a model");
  add_config_options(train, train_args);
  train->add_option("--out", train_out, "run directory");

  std::string ckpt, in, out_dir = "colorized";
  auto* col = app.add_subcommand("colorize", "colourise grayscale images with a checkpoint");
  col->add_option("--ckpt", ckpt)->required();
  col->add_option("--in", in, "PNG file or directory")->required();
  col->add_option("--out", out_dir);

  std::string eval_ckpt, eval_data = "heldout", eval_csv;
  auto* ev = app.add_subcommand("eval", "score a checkpoint on the held-out split or a PNG directory");
  ev->add_option("--ckpt", eval_ckpt)->required();
  ev->add_option("--data", eval_data, "'heldout' or a directory of colour PNGs");
  ev->add_option("--csv", eval_csv, "append metric rows to this CSV");

  std::string scope = "all";
  int gc_seeds = 5;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc->add_option("--scope", scope)->check(CLI::IsMember({"all", "layer", "network", "loss"}));
  gc->add_option("--seeds", gc_seeds);

  auto* grid = app.add_subcommand("norm-grid", "normalisation combinations");
  add_config_options(grid, grid_args);
  grid->add_option("--out", grid_out);
  auto* bloc = app.add_subcommand("bloc-study", "SPD discriminator depth study");
  add_config_options(bloc, bloc_args);
  bloc->add_option("--out", bloc_out);
  auto* abl = app.add_subcommand("ablate", "ablation of the SPD discriminator and colour loss");
  add_config_options(abl, abl_args);
  abl->add_option("--out", abl_out);

  CLI11_PARSE(app, argc, argv);
  for (auto* a : {&train_args, &grid_args, &bloc_args, &abl_args}) a->seed = seed;

  try {
    if (*train) {
      Trainer t(build_config(train_args));
      const RunRecord rec = t.run(train_out, print_epoch);
      if (rec.halted) {
        std::fprintf(stderr, "halted: %s (snapshot in %s/halt.spdg)\n", rec.halt_reason.c_str(), train_out.c_str());
        return 3;
      }
      const MetricRow m = evaluate(t.model(), "train", static_cast<int>(rec.epochs.size()));
      write_text(train_out + "/metrics.csv", metric_csv_header() + metric_csv_row(m));
      std::printf("%s", metric_table({m}).c_str());
    } else if (*col) {
      auto model = Model::load(ckpt);
      fs::create_directories(out_dir);
      for (const auto& p : png_inputs(in)) {
        const ImageRGB img = read_png(p.string());
        write_png((fs::path(out_dir) / p.filename()).string(), colorize(*model, {img}).front());
      }
    } else if (*ev) {
      auto model = Model::load(eval_ckpt);
      MetricRow m;
      if (eval_data == "heldout") {
        m = evaluate(*model, fs::path(eval_ckpt).stem().string());
      } else {
        std::vector<ImageRGB> truth;
        for (const auto& p : png_inputs(eval_data)) truth.push_back(read_png(p.string()));
        m = evaluate_images(truth, colorize(*model, truth), model->extractor, fs::path(eval_ckpt).stem().string());
      }
      if (!eval_csv.empty()) {
        const bool fresh = !fs::exists(eval_csv);
        std::string text = fresh ? metric_csv_header() : "";
        std::FILE* f = std::fopen(eval_csv.c_str(), "a");
        if (!f) throw IoError("cannot append to " + eval_csv);
        text += metric_csv_row(m);
        std::fputs(text.c_str(), f);
        std::fclose(f);
      }
      std::printf("%s", metric_table({m}).c_str());
    } else if (*gc) {
      const auto results = run_gradcheck(scope, gc_seeds);
      std::printf("%s", gradcheck_report(results).c_str());
      const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
      std::printf("%zu suites, %s\n", results.size(), ok ? "all passed" : "FAILURES");
      return ok ? 0 : 1;
    } else if (*grid) {
      const auto rows = run_norm_grid(build_config(grid_args), grid_out);
      std::vector<MetricRow> m;
      for (const auto& r : rows) m.push_back(r.metrics);
      std::printf("%s", metric_table(m).c_str());
    } else if (*bloc) {
      const auto curves = run_bloc_study(build_config(bloc_args), bloc_out);
      for (const auto& c : curves)
        std::printf("%s: final D_SPD loss %.4f over %zu steps\n", c.label.c_str(),
                    c.d_spd_loss.empty() ? 0.0 : c.d_spd_loss.back(), c.d_spd_loss.size());
    } else if (*abl) {
      const auto runs = run_ablation(build_config(abl_args), abl_out);
      std::vector<MetricRow> m;
      for (const auto& r : runs) m.push_back(r.metrics);
      std::printf("%s", metric_table(m).c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
