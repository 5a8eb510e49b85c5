#include "spdgan/networks.hpp"

namespace spdgan {

int patch_map_size(int input, const PatchDiscConfig& cfg) {
  int s = input;
  for (int stride : cfg.strides) {
    s = conv_out_size(s, cfg.kernel, stride, cfg.pad);
    if (s < 1) throw DimensionError("input of side " + std::to_string(input) + " is too small for the discriminator");
  }
  return s;
}

namespace {

Eigen::MatrixXd small_symmetric(int d, double sd, Rng& rng) {
  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = rng.normal() * sd;
  return linalg::symmetrize(A);
}

}  // namespace

SPDDiscriminator::SPDDiscriminator(const SPDDiscConfig& cfg, Rng& rng)
    : cfg_(cfg), stack_(store_, "spd", cfg.dims, cfg.reeig_eps, rng) {
  const int d = stack_.output_dim();
  S_ = &store_.add("spd.head.S", spd::matrix_tensor<double>(small_symmetric(d, cfg.head_init_sd, rng)));
  b_ = &store_.add("spd.head.b", Tensor4<double>(Shape4{1, 1, 1, 1}));
}

Var<double> SPDDiscriminator::logits_from_gram(Var<double> grams, bool trainable) {
  const auto& s = grams.value().shape();
  if (s.c != 1 || s.h != stack_.input_dim() || s.w != stack_.input_dim())
    throw DimensionError("SPD discriminator expects (N,1," + std::to_string(stack_.input_dim()) + "," +
                         std::to_string(stack_.input_dim()) + ") Gram matrices, got " + s.str());
  auto& g = *grams.graph();
  const Var<double> L = spd::logeig(stack_.forward(grams, trainable));
  return spd::frobenius_logit(L, trainable ? g.param(*S_) : g.frozen(*S_), trainable ? g.param(*b_) : g.frozen(*b_));
}

Var<double> SPDDiscriminator::logits_from_features(Var<double> features, bool trainable) {
  return logits_from_gram(gram(features, cfg_.gram), trainable);
}

double SPDDiscriminator::score(const GramDescriptor& gd) {
  Graph<double> g;
  const auto x = g.input(spd::matrix_tensor<double>(gd.G.matrix()));
  return sigmoid(logits_from_gram(x, false)).item();
}

bool SPDDiscriminator::step(double lr, const AdamOptions& head_opt) {
  bool reseeded = false;
  for (auto& b : stack_.blocs()) reseeded = b.step(lr).reseeded || reseeded;
  adam_step(*S_, head_opt);
  adam_step(*b_, head_opt);
  return reseeded;
}

}  // namespace spdgan
