#include "spdgan/features.hpp"

#include <fstream>

#include "spdgan/binary_io.hpp"

namespace spdgan {

namespace {
std::atomic<std::uint64_t> g_gram_count{0};
constexpr char kFmapMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint32_t kFmapVersion = 1;
}  // namespace

std::uint64_t gram_constructions() { return g_gram_count.load(); }
void count_gram_constructions(std::uint64_t n) { g_gram_count.fetch_add(n); }

LayerTag parse_layer_tag(const std::string& s) {
  if (s == "stage1" || s == "stage-1") return LayerTag::stage1;
  if (s == "stage2" || s == "stage-2") return LayerTag::stage2;
  if (s == "stage3" || s == "stage-3") return LayerTag::stage3;
  throw ConfigError("unknown extractor layer tag: " + s);
}

std::string to_string(LayerTag t) { return "stage" + std::to_string(static_cast<int>(t)); }

void write_fmap(const std::string& path, const Tensor4<float>& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kFmapMagic, 4);
  binio::put_u32(os, kFmapVersion);
  for (int d : {features.n(), features.c(), features.h(), features.w()}) binio::put_u32(os, static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < features.size(); ++i) binio::put_f32(os, features[i]);
  if (!os) throw IoError("failed writing " + path);
}

Tensor4<float> read_fmap(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file " + path);
  char magic[4];
  binio::read_exact(is, magic, 4, "FMAP magic");
  if (std::string(magic, 4) != "FMAP") throw IoError(path + " is not a feature-map file");
  const std::uint32_t version = binio::get_u32(is, "FMAP version");
  if (version != kFmapVersion) throw IoError(path + ": unsupported FMAP version " + std::to_string(version));
  int dims[4];
  for (int& d : dims) {
    const std::uint32_t v = binio::get_u32(is, "FMAP dims");
    if (v == 0 || v > (1u << 24)) throw IoError(path + ": implausible dimension " + std::to_string(v));
    d = static_cast<int>(v);
  }
  Tensor4<float> t(Shape4{dims[0], dims[1], dims[2], dims[3]});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = binio::get_f32(is, "FMAP data");
  return t;
}

Tensor4<float> ImportedFeatures::slice(int first, int n) const {
  if (first < 0 || n < 1 || first + n > maps_.n())
    throw DimensionError("imported features: requested images [" + std::to_string(first) + "," +
                         std::to_string(first + n) + ") of " + std::to_string(maps_.n()));
  Tensor4<float> out(Shape4{n, maps_.c(), maps_.h(), maps_.w()});
  const std::size_t per = static_cast<std::size_t>(maps_.c()) * maps_.shape().plane();
  std::copy_n(maps_.plane(first, 0), per * n, out.data());
  return out;
}

}  // namespace spdgan
