#pragma once

#include <string>
#include <vector>

#include "spdgan/trainer.hpp"

namespace spdgan {

struct NormGridRow {
  NormKind generator_norm;
  NormKind disc_norm;
  MetricRow metrics;
  bool halted = false;
};

/// Trains {batch, instance} generators against {batch, instance, spectral}
/// image discriminators (spectral is discriminator-only). Writes one run
/// directory per cell plus norm_grid.csv and norm_grid.md under out_dir.
std::vector<NormGridRow> run_norm_grid(const TrainConfig& base, const std::string& out_dir);

struct BlocCurve {
  std::string label;  // "1-bloc" ...
  std::vector<int> dims;
  std::vector<double> d_spd_loss;  // per step
  std::vector<double> d_spd_epoch;  // per epoch mean
};

/// Trains 1, 2 and 3 BiMap/ReEig blocs (32-16, 32-16-8, 32-16-8-4) and
/// records the SPD discriminator loss. Writes bloc_study.csv (per step),
/// bloc_study_epochs.csv and bloc_study.png.
std::vector<BlocCurve> run_bloc_study(const TrainConfig& base, const std::string& out_dir);

struct AblationRun {
  std::string label;  // a, b, c
  bool enable_spd_disc = false;
  bool enable_color_loss = false;
  MetricRow metrics;
  std::uint64_t grams_built = 0;
  bool halted = false;
};

/// Generator objective of one fixed batch and weight state under the three
/// ablation flag settings, with the Gram counter delta of each evaluation.
struct ObjectiveProbe {
  LossBreakdown a, b, c;
  std::uint64_t grams_a = 0, grams_b = 0, grams_c = 0;
};
ObjectiveProbe probe_objectives(const TrainConfig& cfg);

/// (a) pixel discriminator only, (b) + SPD discriminator, (c) + colour loss.
/// Writes per-run directories with sample colourisations, ablation.csv and
/// ablation.md.
std::vector<AblationRun> run_ablation(const TrainConfig& base, const std::string& out_dir);

/// Side-by-side rows of (gray, colourised, ground truth).
ImageRGB sample_sheet(const std::vector<ImageRGB>& truth, const std::vector<ImageRGB>& output);

}  // namespace spdgan
