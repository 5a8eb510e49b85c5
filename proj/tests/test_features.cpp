#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "fd.hpp"
#include "spdgan/features.hpp"

using namespace spdgan;
using T = Tensor4<double>;

TEST_CASE("surrogate extractor") {
  SurrogateExtractor<double> ex;
  const T zero(Shape4{2, 3, 16, 16});
  for (auto tag : {LayerTag::stage1, LayerTag::stage2, LayerTag::stage3})
    CHECK((ex.extract(zero, tag).array() == 0.0).all());

  Rng rng(1);
  const T x = T::uniform(Shape4{2, 3, 64, 64}, rng, -1, 1);
  const T a = ex.extract(x, LayerTag::stage3);
  const T b = ex.extract(x, LayerTag::stage3);
  CHECK(a.shape() == Shape4{2, 32, 16, 16});
  CHECK((a.array() == b.array()).all());
  CHECK(ex.extract(x, LayerTag::stage1).shape() == Shape4{2, 8, 64, 64});
  CHECK(ex.extract(x, LayerTag::stage2).shape() == Shape4{2, 16, 32, 32});
  CHECK(surrogate_channels(LayerTag::stage3) == 32);

  // grayscale input is replicated to three channels
  T g = T::uniform(Shape4{1, 1, 16, 16}, rng, -1, 1);
  T g3(Shape4{1, 3, 16, 16});
  for (int c = 0; c < 3; ++c) g3.matrix(0, c) = g.matrix(0, 0);
  CHECK((ex.extract(g, LayerTag::stage2).array() == ex.extract(g3, LayerTag::stage2).array()).all());

  // a second instance with the same seed is identical
  SurrogateExtractor<double> ex2;
  CHECK((ex2.extract(x, LayerTag::stage3).array() == a.array()).all());

  CHECK(parse_layer_tag("stage2") == LayerTag::stage2);
  CHECK_THROWS_AS(parse_layer_tag("conv5"), ConfigError);
  CHECK_THROWS_AS(ex.extract(T(Shape4{1, 2, 8, 8}), LayerTag::stage1), DimensionError);
}

TEST_CASE("feature-map files round trip") {
  Rng rng(4);
  const Tensor4<float> f = Tensor4<float>::randn(Shape4{3, 5, 4, 6}, rng);
  const std::string path = "test_features_roundtrip.fmap";
  write_fmap(path, f);
  const Tensor4<float> back = read_fmap(path);
  CHECK(back.shape() == f.shape());
  CHECK(std::memcmp(back.data(), f.data(), f.size() * sizeof(float)) == 0);

  ImportedFeatures imp(path);
  CHECK(imp.count() == 3);
  const Tensor4<float> s = imp.slice(1, 2);
  CHECK(s(0, 2, 1, 3) == f(1, 2, 1, 3));
  CHECK_THROWS_AS(imp.slice(2, 2), DimensionError);

  {
    std::ofstream bad("test_features_bad.fmap", std::ios::binary);
    bad << "NOPE1234";
  }
  CHECK_THROWS_AS(read_fmap("test_features_bad.fmap"), IoError);
  CHECK_THROWS_AS(read_fmap("does_not_exist.fmap"), IoError);
  {
    // truncated payload
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out("test_features_short.fmap", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS_AS(read_fmap("test_features_short.fmap"), IoError);
  std::remove(path.c_str());
  std::remove("test_features_bad.fmap");
  std::remove("test_features_short.fmap");
}

TEST_CASE("gram matrix") {
  GramOptions none{0.0, 0.0};
  T f(Shape4{1, 2, 1, 2});
  f(0, 0, 0, 0) = 1;
  f(0, 1, 0, 1) = 2;
  GramDescriptor d = gram_descriptor(f, 0, none, "stage3");
  CHECK(d.G.matrix()(0, 0) == 0.5);
  CHECK(d.G.matrix()(1, 1) == 2.0);
  CHECK(d.G.matrix()(0, 1) == 0.0);
  CHECK(d.divisor == 2.0);
  CHECK(d.layer_tag == "stage3");

  Rng rng(29);
  const T F = T::randn(Shape4{2, 6, 5, 7}, rng);
  GramOptions opt;
  for (int n = 0; n < 2; ++n) {
    const GramDescriptor gd = gram_descriptor(F, n, opt);
    Eigen::MatrixXd brute(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        double s = 0;
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 7; ++x) s += F(n, i, y, x) * F(n, j, y, x);
        brute(i, j) = s / 35.0;
      }
    const double delta = opt.absolute_ridge + opt.relative_ridge * brute.trace() / 6.0;
    brute.diagonal().array() += delta;
    CHECK((gd.G.matrix() - brute).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(gd.ridge == doctest::Approx(delta).epsilon(1e-12));
    CHECK((gd.G.matrix() - gd.G.matrix().transpose()).norm() == 0.0);
    CHECK(gd.G.min_eigenvalue() >= delta * (1 - 1e-6));
  }

  // rank-deficient features still give a positive definite matrix
  T low(Shape4{1, 8, 1, 3});
  for (int c = 0; c < 8; ++c) low(0, c, 0, 0) = c;
  const GramDescriptor ld = gram_descriptor(low, 0, opt);
  CHECK(ld.G.min_eigenvalue() >= ld.ridge * (1 - 1e-6));
  CHECK(gram_descriptor(T(Shape4{1, 4, 2, 2}), 0, opt).G.positive_definite());

  // quadratic homogeneity of the un-ridged part
  T F3 = F;
  F3.array() *= 3.0;
  const GramDescriptor g1 = gram_descriptor(F, 0, opt), g3 = gram_descriptor(F3, 0, opt);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(6, 6);
  CHECK(((g3.G.matrix() - g3.ridge * I) - 9.0 * (g1.G.matrix() - g1.ridge * I)).cwiseAbs().maxCoeff() < 1e-10);

  // the graph op agrees with the descriptor path
  Graph<double> g;
  const T out = gram(g.input(F), opt).value();
  for (int n = 0; n < 2; ++n)
    CHECK((out.matrix(n, 0) - gram_descriptor(F, n, opt).G.matrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gram gradient including the ridge") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const T F = T::randn(Shape4{2, 4, 3, 3}, rng);
    const T R = T::randn(Shape4{2, 1, 4, 4}, rng);
    GramOptions opt{0.3, 1e-3};  // large relative ridge so its derivative matters
    Graph<double> g;
    auto x = g.input(F, true);
    g.backward(sum(mul_const(gram(x, opt), R)));
    auto f = [&](const T& in) {
      Graph<double> gg;
      return (gram(gg.input(in), opt).value().array() * R.array()).sum();
    };
    CHECK(fd::rel_error(g.grad(x), fd::gradient(f, F, 1e-5)) < 1e-6);
  }
}

TEST_CASE("gram construction counter") {
  const auto before = gram_constructions();
  Rng rng(0);
  const T F = T::randn(Shape4{3, 4, 2, 2}, rng);
  Graph<double> g;
  gram(g.input(F), GramOptions{});
  gram_descriptor(F, 0, GramOptions{});
  CHECK(gram_constructions() == before + 4);
}
