#pragma once

// Small denoiser-like networks for layer tests. A network whose input-output
// map is close to a scaled symmetric blur behaves like a proximal operator,
// which is the regime where the equilibrium exists. Random He-initialized
// networks of this size have a tiny gain and act like the zero denoiser.

#include <random>

#include "mcnet/denoiser.hpp"

namespace fixture {

/// 2-layer network with `width` >= 2 hidden channels: channels 0 and 1 carry
/// +blur(x) and -blur(x) through the ReLU and are recombined by the last layer,
/// so the unperturbed map is gain * blur(x). Every tap then receives Gaussian
/// noise of standard deviation `perturb`, and the result is spectrally normalized.
inline mcnet::denoiser::DenoiserParams smoothing_denoiser(std::uint64_t seed, double perturb = 0.05,
                                                         int width = 4, double gain = 0.9,
                                                         int sn_size = 8) {
  using namespace mcnet::denoiser;
  const std::vector<int> ch = dncnn_channels(2, width);
  DenoiserParams p = make_zero(ch);
  p.sn_height = p.sn_width = sn_size;
  const double blur[3] = {0.25, 0.5, 0.25};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      p.layers[0](0, 0, a, b) = blur[a] * blur[b];
      p.layers[0](1, 0, a, b) = -blur[a] * blur[b];
    }
  p.layers[1](0, 0, 1, 1) = gain;
  p.layers[1](0, 1, 1, 1) = -gain;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, perturb);
  for (auto& k : p.layers)
    for (double& t : k.taps) t += n(rng);
  normalize_spectral(p, 30);
  return p;
}

}  // namespace fixture
