#include "spdgan/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace spdgan {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// round-trippable double text
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string order_name(UpdateOrder o) { return o == UpdateOrder::g_first ? "g_first" : "d_image_d_spd_g"; }

}  // namespace

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.literal_generator_loss = literal_generator_loss;
  o.reduction = mean_then_log ? PatchReduction::mean_then_log : PatchReduction::log_then_mean;
  o.normalize_blur = normalize_blur;
  return o;
}

void TrainConfig::validate() const {
  if (!(alpha_G > 0 && alpha_D_image > 0 && alpha_D_SPD > 0)) throw ConfigError("learning rates must be positive");
  if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be positive");
  const bool batch_stats = generator_norm == NormKind::batch || disc_norm == NormKind::batch;
  if (batch_stats && batch_size < 2) throw ConfigError("batch normalisation needs batch_size >= 2");
  if (generator_norm == NormKind::spectral)
    throw ConfigError("spectral normalisation is reserved for the discriminator");
  if (image_size < 32 || image_size % 4 != 0)
    throw ConfigError("image_size must be a multiple of 4 and at least 32");
  if (dataset_train < batch_size) throw ConfigError("dataset_train is smaller than one batch");
  if (dataset_heldout < 2) throw ConfigError("dataset_heldout must be at least 2");
  if (extractor_kind != "surrogate")
    throw ConfigError("training needs extractor_kind = surrogate; imported features serve evaluation only");
  const int c = surrogate_channels(parse_layer_tag(extractor_layer_tag));
  if (spd_dims.empty() || spd_dims.front() != c)
    throw ConfigError("spd_dims must start at the extractor's channel count (" + std::to_string(c) + ")");
  for (std::size_t i = 1; i < spd_dims.size(); ++i)
    if (spd_dims[i] >= spd_dims[i - 1] || spd_dims[i] < 1)
      throw ConfigError("spd_dims must be strictly decreasing");
  if (spd_dims.size() < 2) throw ConfigError("spd_dims needs at least one bloc");
  if (!(reeig_eps > 0)) throw ConfigError("reeig_eps must be positive");
  for (double l : {lambda_i, lambda_spd, lambda_l1, lambda_color})
    if (l < 0) throw ConfigError("loss weights must be non-negative");
}

std::map<std::string, std::string> to_keyvalues(const TrainConfig& c) {
  return {
      {"alpha_G", fmt(c.alpha_G)},
      {"alpha_D_image", fmt(c.alpha_D_image)},
      {"alpha_D_SPD", fmt(c.alpha_D_SPD)},
      {"adam_beta1", fmt(c.adam_beta1)},
      {"adam_beta2", fmt(c.adam_beta2)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"lambda_i", fmt(c.lambda_i)},
      {"lambda_spd", fmt(c.lambda_spd)},
      {"lambda_l1", fmt(c.lambda_l1)},
      {"lambda_color", fmt(c.lambda_color)},
      {"generator_norm", to_string(c.generator_norm)},
      {"disc_norm", to_string(c.disc_norm)},
      {"generator_width", std::to_string(c.generator_width)},
      {"generator_blocks", std::to_string(c.generator_blocks)},
      {"spd_dims", join(c.spd_dims)},
      {"reeig_eps", fmt(c.reeig_eps)},
      {"gram_relative_ridge", fmt(c.gram_relative_ridge)},
      {"gram_absolute_ridge", fmt(c.gram_absolute_ridge)},
      {"extractor_kind", c.extractor_kind},
      {"extractor_layer_tag", c.extractor_layer_tag},
      {"image_size", std::to_string(c.image_size)},
      {"seed", std::to_string(c.seed)},
      {"dataset_seed", std::to_string(c.dataset_seed)},
      {"dataset_train", std::to_string(c.dataset_train)},
      {"dataset_heldout", std::to_string(c.dataset_heldout)},
      {"enable_spd_disc", c.enable_spd_disc ? "true" : "false"},
      {"enable_color_loss", c.enable_color_loss ? "true" : "false"},
      {"literal_generator_loss", c.literal_generator_loss ? "true" : "false"},
      {"mean_then_log", c.mean_then_log ? "true" : "false"},
      {"normalize_blur", c.normalize_blur ? "true" : "false"},
      {"update_order", order_name(c.update_order)},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
      {"log_steps", c.log_steps ? "true" : "false"},
  };
}

std::string to_text(const TrainConfig& c) {
  std::string out;
  for (const auto& [k, v] : to_keyvalues(c)) out += k + " = " + v + "\n";
  return out;
}

void set_key(TrainConfig& c, const std::string& key, const std::string& v) {
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters{
      {"alpha_G", [&] { c.alpha_G = parse_number<double>(key, v); }},
      {"alpha_D_image", [&] { c.alpha_D_image = parse_number<double>(key, v); }},
      {"alpha_D_SPD", [&] { c.alpha_D_SPD = parse_number<double>(key, v); }},
      {"adam_beta1", [&] { c.adam_beta1 = parse_number<double>(key, v); }},
      {"adam_beta2", [&] { c.adam_beta2 = parse_number<double>(key, v); }},
      {"batch_size", [&] { c.batch_size = parse_number<int>(key, v); }},
      {"epochs", [&] { c.epochs = parse_number<int>(key, v); }},
      {"lambda_i", [&] { c.lambda_i = parse_number<double>(key, v); }},
      {"lambda_spd", [&] { c.lambda_spd = parse_number<double>(key, v); }},
      {"lambda_l1", [&] { c.lambda_l1 = parse_number<double>(key, v); }},
      {"lambda_color", [&] { c.lambda_color = parse_number<double>(key, v); }},
      {"generator_norm", [&] { c.generator_norm = parse_norm_kind(v); }},
      {"disc_norm", [&] { c.disc_norm = parse_norm_kind(v); }},
      {"generator_width", [&] { c.generator_width = parse_number<int>(key, v); }},
      {"generator_blocks", [&] { c.generator_blocks = parse_number<int>(key, v); }},
      {"spd_dims", [&] { c.spd_dims = parse_ints(key, v); }},
      {"reeig_eps", [&] { c.reeig_eps = parse_number<double>(key, v); }},
      {"gram_relative_ridge", [&] { c.gram_relative_ridge = parse_number<double>(key, v); }},
      {"gram_absolute_ridge", [&] { c.gram_absolute_ridge = parse_number<double>(key, v); }},
      {"extractor_kind", [&] { c.extractor_kind = v; }},
      {"extractor_layer_tag", [&] { c.extractor_layer_tag = v; }},
      {"image_size", [&] { c.image_size = parse_number<int>(key, v); }},
      {"seed", [&] { c.seed = parse_number<std::uint64_t>(key, v); }},
      {"dataset_seed", [&] { c.dataset_seed = parse_number<std::uint64_t>(key, v); }},
      {"dataset_train", [&] { c.dataset_train = parse_number<int>(key, v); }},
      {"dataset_heldout", [&] { c.dataset_heldout = parse_number<int>(key, v); }},
      {"enable_spd_disc", [&] { c.enable_spd_disc = parse_bool(key, v); }},
      {"enable_color_loss", [&] { c.enable_color_loss = parse_bool(key, v); }},
      {"literal_generator_loss", [&] { c.literal_generator_loss = parse_bool(key, v); }},
      {"mean_then_log", [&] { c.mean_then_log = parse_bool(key, v); }},
      {"normalize_blur", [&] { c.normalize_blur = parse_bool(key, v); }},
      {"update_order",
       [&] {
         if (v == "d_image_d_spd_g") c.update_order = UpdateOrder::d_image_d_spd_g;
         else if (v == "g_first") c.update_order = UpdateOrder::g_first;
         else throw ConfigError("update_order must be d_image_d_spd_g or g_first");
       }},
      {"checkpoint_every", [&] { c.checkpoint_every = parse_number<int>(key, v); }},
      {"log_steps", [&] { c.log_steps = parse_bool(key, v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second();
}

TrainConfig parse_config(const std::string& text, TrainConfig c) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::string& path, const TrainConfig& c) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write config " + path);
  f << to_text(c);
}

}  // namespace spdgan
