#include "spdgan/checkpoint.hpp"

#include <fstream>
#include <set>

#include "spdgan/binary_io.hpp"

namespace spdgan {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'D', 'G'};

void put_values(std::ostream& os, const Tensor4<float>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) binio::put_f32(os, t[i]);
}
void put_values(std::ostream& os, const Tensor4<double>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) binio::put_f64(os, t[i]);
}
void get_values(std::istream& is, Tensor4<float>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = binio::get_f32(is, "checkpoint values");
}
void get_values(std::istream& is, Tensor4<double>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = binio::get_f64(is, "checkpoint values");
}

template <typename Scalar>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<Scalar, float> ? 1 : 2;
}

template <typename Scalar>
void put_record(std::ostream& os, const Param<Scalar>& p) {
  binio::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
  os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
  binio::put_u8(os, dtype_code<Scalar>());
  binio::put_u8(os, p.trainable ? 1 : 0);
  const Shape4& s = p.value.shape();
  for (int d : {s.n, s.c, s.h, s.w}) binio::put_u32(os, static_cast<std::uint32_t>(d));
  put_values(os, p.value);
  binio::put_u64(os, static_cast<std::uint64_t>(p.adam_step));
  const bool moments = !p.adam_m.empty();
  binio::put_u8(os, moments ? 1 : 0);
  if (moments) {
    put_values(os, p.adam_m);
    put_values(os, p.adam_v);
  }
}

template <typename Scalar>
void get_record_body(std::istream& is, Param<Scalar>& p, const Shape4& s) {
  if (p.value.shape() != s)
    throw ConfigError("checkpoint record " + p.name + " has shape " + s.str() + ", model expects " +
                      p.value.shape().str());
  get_values(is, p.value);
  p.adam_step = static_cast<std::int64_t>(binio::get_u64(is, "adam step"));
  if (binio::get_u8(is, "moment flag")) {
    p.adam_m = Tensor4<Scalar>(s);
    p.adam_v = Tensor4<Scalar>(s);
    get_values(is, p.adam_m);
    get_values(is, p.adam_v);
  } else {
    p.adam_m = Tensor4<Scalar>();
    p.adam_v = Tensor4<Scalar>();
  }
  p.zero_grad();
}

std::string read_header(std::istream& is, const std::string& path) {
  char magic[4];
  binio::read_exact(is, magic, 4, "checkpoint magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw IoError(path + " is not a checkpoint (bad magic)");
  const std::uint32_t version = binio::get_u32(is, "checkpoint version");
  if (version != kCheckpointVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t len = binio::get_u64(is, "config length");
  if (len > (1u << 24)) throw IoError(path + ": implausible config length");
  std::string cfg(len, '\0');
  binio::read_exact(is, cfg.data(), len, "config text");
  return cfg;
}

template <typename Scalar>
Param<Scalar>* lookup(const std::vector<ParamStore<Scalar>*>& stores, const std::string& name) {
  for (auto* s : stores)
    if (auto* p = s->find(name)) return p;
  return nullptr;
}

}  // namespace

void CheckpointWriter::write(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path);
  os.write(kMagic, 4);
  binio::put_u32(os, kCheckpointVersion);
  binio::put_u64(os, config_.size());
  os.write(config_.data(), static_cast<std::streamsize>(config_.size()));
  std::size_t count = 0;
  for (auto* s : f32_) count += s->size();
  for (auto* s : f64_) count += s->size();
  binio::put_u32(os, static_cast<std::uint32_t>(count));
  for (auto* s : f32_)
    for (const auto& p : *s) put_record(os, *p);
  for (auto* s : f64_)
    for (const auto& p : *s) put_record(os, *p);
  if (!os) throw IoError("failed writing checkpoint " + path);
}

std::string checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  return read_header(is, path);
}

void CheckpointReader::read(const std::string& path) const {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  read_header(is, path);
  const std::uint32_t count = binio::get_u32(is, "record count");
  std::set<std::string> seen;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t len = binio::get_u32(is, "record name length");
    if (len > 4096) throw IoError(path + ": implausible record name length");
    std::string name(len, '\0');
    binio::read_exact(is, name.data(), len, "record name");
    const std::uint8_t dtype = binio::get_u8(is, "record dtype");
    binio::get_u8(is, "record flags");
    Shape4 s;
    s.n = static_cast<int>(binio::get_u32(is, "shape"));
    s.c = static_cast<int>(binio::get_u32(is, "shape"));
    s.h = static_cast<int>(binio::get_u32(is, "shape"));
    s.w = static_cast<int>(binio::get_u32(is, "shape"));
    if (!seen.insert(name).second) throw ConfigError("checkpoint repeats record " + name);
    if (dtype == 1) {
      auto* p = lookup(f32_, name);
      if (!p) throw ConfigError("checkpoint record " + name + " (f32) has no matching parameter");
      get_record_body(is, *p, s);
    } else if (dtype == 2) {
      auto* p = lookup(f64_, name);
      if (!p) throw ConfigError("checkpoint record " + name + " (f64) has no matching parameter");
      get_record_body(is, *p, s);
    } else {
      throw IoError(path + ": unknown dtype code " + std::to_string(dtype));
    }
  }
  auto require_all = [&](const auto& stores) {
    for (auto* s : stores)
      for (const auto& p : *s)
        if (!seen.count(p->name)) throw ConfigError("checkpoint lacks parameter " + p->name);
  };
  require_all(f32_);
  require_all(f64_);
}

}  // namespace spdgan
