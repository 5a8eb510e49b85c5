#pragma once

#include <string>

#include "spdgan/param.hpp"

namespace spdgan {

// "SPDG" checkpoint, little endian:
//   magic "SPDG", u32 version (1), u64 length + config text,
//   u32 record count, then per record
//     u32 length + name, u8 dtype (1 = f32, 2 = f64), u8 trainable,
//     u32 n, c, h, w, values, u64 adam step, u8 has moments, [m values, v values]
// Records carry values, optimiser moments and buffers (running statistics,
// spectral-norm vectors), which is all a bitwise resume needs.

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointWriter {
 public:
  explicit CheckpointWriter(std::string config_text) : config_(std::move(config_text)) {}
  void add(const ParamStore<float>& s) { f32_.push_back(&s); }
  void add(const ParamStore<double>& s) { f64_.push_back(&s); }
  void write(const std::string& path) const;

 private:
  std::string config_;
  std::vector<const ParamStore<float>*> f32_;
  std::vector<const ParamStore<double>*> f64_;
};

/// Reads a checkpoint's config text only.
std::string checkpoint_config(const std::string& path);

/// Loads every record into the stores, matching by name. Each record must
/// land in exactly one parameter of identical shape and dtype, and every
/// parameter must be covered; otherwise ConfigError. Bad magic or version
/// throws IoError.
class CheckpointReader {
 public:
  void add(ParamStore<float>& s) { f32_.push_back(&s); }
  void add(ParamStore<double>& s) { f64_.push_back(&s); }
  void read(const std::string& path) const;

 private:
  std::vector<ParamStore<float>*> f32_;
  std::vector<ParamStore<double>*> f64_;
};

}  // namespace spdgan
