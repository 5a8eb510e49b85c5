#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spdgan/losses.hpp"
#include "spdgan/norm.hpp"

namespace spdgan {

enum class UpdateOrder { d_image_d_spd_g, g_first };

/// Everything a run depends on. Serialised as a flat key = value file whose
/// keys are the field names below.
struct TrainConfig {
  // learning rates
  double alpha_G = 3e-4;
  double alpha_D_image = 3e-5;
  double alpha_D_SPD = 1e-2;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;

  int batch_size = 4;
  int epochs = 200;

  double lambda_i = 0.01;
  double lambda_spd = 0.01;
  double lambda_l1 = 0.99;
  double lambda_color = 0.001;

  NormKind generator_norm = NormKind::instance;
  NormKind disc_norm = NormKind::spectral;
  int generator_width = 32;
  int generator_blocks = 9;

  std::vector<int> spd_dims{32, 16, 8, 4};
  double reeig_eps = 1e-4;
  double gram_relative_ridge = 1e-5;
  double gram_absolute_ridge = 1e-8;
  std::string extractor_kind = "surrogate";
  std::string extractor_layer_tag = "stage3";

  int image_size = 64;
  std::uint64_t seed = 42;
  std::uint64_t dataset_seed = 2024;
  int dataset_train = 200;
  int dataset_heldout = 20;

  bool enable_spd_disc = true;
  bool enable_color_loss = true;
  bool literal_generator_loss = false;
  bool mean_then_log = true;  // false: per-patch log terms
  bool normalize_blur = false;
  UpdateOrder update_order = UpdateOrder::d_image_d_spd_g;

  int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  bool log_steps = true;

  LossWeights weights() const { return {lambda_i, lambda_spd, lambda_l1, lambda_color}; }
  LossOptions loss_options() const;
  ObjectiveFlags flags() const { return {enable_spd_disc, enable_color_loss}; }

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

std::map<std::string, std::string> to_keyvalues(const TrainConfig& c);
std::string to_text(const TrainConfig& c);

/// Applies `key = value` lines ('#' starts a comment) over `base`. Unknown
/// keys and malformed values throw ConfigError.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
void set_key(TrainConfig& c, const std::string& key, const std::string& value);

TrainConfig load_config(const std::string& path);
void save_config(const std::string& path, const TrainConfig& c);

}  // namespace spdgan
