// Seeded synthetic dataset generation, noise corruption and the bearing-like
// surrogate signal.
#pragma once

#include "shinbo/signal.hpp"
#include "shinbo/types.hpp"

namespace shinbo {

struct SynthSpec {
  Index m = 100;
  Index n = 70;
  Index rank = 3;
  double density_w = 0.10;
  double density_h = 0.70;
  std::uint64_t seed = 0;
};

struct SynthData {
  Matrix w_true;  // exactly round(density_w * m * r) nonzeros
  Matrix h_true;  // exactly round(density_h * r * n) nonzeros
  Matrix x;       // w_true * h_true
};

// Nonzeros are placed uniformly at random with values in U(0,1]; placement is
// resampled until every column of W and every row of H has at least one
// nonzero.  Deterministic per seed.
SynthData synth_factors(const SynthSpec& spec);

// Y = max(X + epsilon * G, 0) with G i.i.d. standard normal.
Matrix add_noise(const Matrix& x, double epsilon, std::uint64_t seed);

// Unit-amplitude exponentially decaying carrier bursts repeating at rate f0,
// plus white Gaussian noise.  f0 <= 0 produces noise only.
SampledSignal impulsive_signal(double sample_rate, double duration, double f0,
                               double carrier_hz, double decay,
                               double noise_sigma, std::uint64_t seed);

}  // namespace shinbo
