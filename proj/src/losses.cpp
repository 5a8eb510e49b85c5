#include "spdgan/losses.hpp"

namespace spdgan {

BlurKernel build_blur_kernel(bool normalize) {
  const int r = kBlurSize / 2;
  const double two_s2 = 2.0 * kBlurSigma * kBlurSigma;
  BlurKernel k{Eigen::MatrixXd(kBlurSize, kBlurSize)};
  for (int x = -r; x <= r; ++x)
    for (int y = -r; y <= r; ++y)
      k.weights(x + r, y + r) = kBlurAmplitude * std::exp(-static_cast<double>(x * x) / two_s2 -
                                                          static_cast<double>(y * y) / two_s2);
  if (normalize) k.weights /= k.weights.sum();
  return k;
}

std::pair<double, double> spd_gan_loss(const GramDescriptor& real, const GramDescriptor& fake, SPDDiscriminator& disc,
                                       const LossOptions& opt) {
  if (real.G.dim() != fake.G.dim()) throw DimensionError("spd_gan_loss: Gram dimensions differ");
  Graph<double> g;
  auto r = sigmoid(disc.logits_from_gram(g.input(spd::matrix_tensor<double>(real.G.matrix())), false));
  auto f = sigmoid(disc.logits_from_gram(g.input(spd::matrix_tensor<double>(fake.G.matrix())), false));
  return {gan_loss_d(r, f, opt).item(), gan_loss_g(f, opt).item()};
}

}  // namespace spdgan
