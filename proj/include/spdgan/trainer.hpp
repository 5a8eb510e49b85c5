#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spdgan/color.hpp"
#include "spdgan/config.hpp"
#include "spdgan/dataset.hpp"
#include "spdgan/networks.hpp"

namespace spdgan {

GeneratorConfig generator_config(const TrainConfig& c);
PatchDiscConfig patch_disc_config(const TrainConfig& c);
SPDDiscConfig spd_disc_config(const TrainConfig& c);

/// The three networks of a run plus the frozen feature extractor. Each
/// network draws its initial weights from its own stream of the run seed,
/// so toggling the SPD branch leaves the others' initialisation unchanged.
struct Model {
  explicit Model(const TrainConfig& cfg);

  TrainConfig config;
  Generator<float> gen;
  PatchDiscriminator<float> dimg;
  std::optional<SPDDiscriminator> dspd;
  SurrogateExtractor<double> extractor;
  LayerTag tag;

  void save(const std::string& path) const;
  /// Rebuilds the model from the config stored in the checkpoint.
  static std::unique_ptr<Model> load(const std::string& path);
};

struct StepLosses {
  double d_image = 0, d_spd = 0;
  double g_pixel = 0, g_spd = 0, l1 = 0, color = 0, total = 0;
};

struct EpochRecord {
  int epoch = 0;
  StepLosses mean;
  double seconds = 0;
};

struct RunRecord {
  TrainConfig config;
  std::string out_dir;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> checkpoints;
  std::vector<StepLosses> step_losses;
  std::uint64_t steps = 0;
  std::uint64_t grams_built = 0;  // Gram constructions during the run
  bool halted = false;
  std::string halt_reason;
  double seconds = 0;
};

/// Generator objective for one batch under cfg's weights and ablation
/// flags; discriminators are frozen. Disabled terms are never computed (no
/// Gram matrix is built when the SPD branch is off).
Var<float> generator_objective(Model& m, const TrainConfig& cfg, const BlurKernel& kernel, Var<float> gray,
                               Var<float> fake, const Tensor4<float>& target_color, LossBreakdown* out = nullptr);

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  /// One alternating update on a batch (order per config).
  StepLosses step(const Batch& b);

  /// Trains for config.epochs. With a non-empty out_dir writes config.txt,
  /// epochs.csv, steps.csv (if log_steps), checkpoints and manifest.txt.
  /// A non-finite loss or gradient stops training with halted = true and a
  /// snapshot checkpoint halt.spdg.
  RunRecord run(const std::string& out_dir, const std::function<void(const EpochRecord&)>& on_epoch = {});

  Model& model() { return model_; }
  const std::vector<ImageRGB>& train_images() const { return train_; }

 private:
  void d_image_step(const Batch& b, const Tensor4<float>& fake, StepLosses& out);
  void d_spd_step(const Batch& b, const Tensor4<float>& fake, StepLosses& out);
  void check_finite(const StepLosses& l) const;

  TrainConfig cfg_;
  Model model_;
  BlurKernel kernel_;
  std::vector<ImageRGB> train_;
  bool grad_fault_ = false;
};

// ---------------------------------------------------------------------------
// Inference and evaluation

/// Colourises the luma of each image (any size divisible by 4).
std::vector<ImageRGB> colorize(Model& m, const std::vector<ImageRGB>& images);

struct MetricRow {
  std::string run_id;
  int epoch = 0;
  double psnr = 0, ssim = 0, fid = 0, colorfulness = 0;
};

/// Mean PSNR / SSIM / colourfulness of the candidates and FID of the two
/// sets. PSNR is +inf when every pair is identical.
MetricRow evaluate_images(const std::vector<ImageRGB>& reference, const std::vector<ImageRGB>& candidates,
                          const SurrogateExtractor<double>& extractor, std::string run_id = "", int epoch = 0);

/// Colourises the held-out split of the model's dataset and scores it.
MetricRow evaluate(Model& m, std::string run_id = "", int epoch = 0);

std::string metric_csv_header();
std::string metric_csv_row(const MetricRow& r);
/// Markdown table: Method | PSNR | SSIM | FID | Colorfulness.
std::string metric_table(const std::vector<MetricRow>& rows);

/// "%.10g" with inf spelled "inf".
std::string fmt_metric(double v);

void write_text(const std::string& path, const std::string& text);

}  // namespace spdgan
