#include "shinbo/datagen.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace shinbo {

namespace {

// Chooses `count` distinct cells of a rows x cols matrix and writes U(0,1]
// values there; retries the placement until no row-group (identified by
// cell % groups == g for the covering check below) is empty.
Matrix sparse_uniform(Index rows, Index cols, Index count, bool cover_columns,
                      std::mt19937_64& rng) {
  const Index total = rows * cols;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Index> cells(total);

  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (Index i = 0; i < total; ++i) cells[i] = i;
    // partial Fisher-Yates: the first `count` entries are the placement
    for (Index i = 0; i < count; ++i) {
      std::uniform_int_distribution<Index> pick(i, total - 1);
      std::swap(cells[i], cells[pick(rng)]);
    }
    // every column (cover_columns) or row must receive at least one nonzero
    std::vector<bool> covered(cover_columns ? cols : rows, false);
    for (Index i = 0; i < count; ++i) {
      const Index r = cells[i] % rows;
      const Index c = cells[i] / rows;
      covered[cover_columns ? c : r] = true;
    }
    bool ok = true;
    for (bool c : covered) ok = ok && c;
    if (!ok) continue;

    Matrix out = Matrix::Zero(rows, cols);
    for (Index i = 0; i < count; ++i) {
      const Index r = cells[i] % rows;
      const Index c = cells[i] / rows;
      out(r, c) = 1.0 - unit(rng);  // U(0,1]
    }
    return out;
  }
  throw NumericError("sparse_uniform: failed to cover all components");
}

}  // namespace

SynthData synth_factors(const SynthSpec& spec) {
  if (spec.m < 1 || spec.n < 1 || spec.rank < 1)
    throw ConfigError("synth_factors: nonpositive dimension");
  if (spec.rank > std::min(spec.m, spec.n))
    throw ConfigError("synth_factors: rank exceeds min(m, n)");
  if (!(spec.density_w > 0.0 && spec.density_w <= 1.0) ||
      !(spec.density_h > 0.0 && spec.density_h <= 1.0))
    throw ConfigError("synth_factors: densities must lie in (0, 1]");

  const Index count_w = static_cast<Index>(
      std::llround(spec.density_w * static_cast<double>(spec.m * spec.rank)));
  const Index count_h = static_cast<Index>(
      std::llround(spec.density_h * static_cast<double>(spec.rank * spec.n)));
  if (count_w < spec.rank)
    throw ConfigError(
        "synth_factors: density_w too low to give every column of W a "
        "nonzero");
  if (count_h < spec.rank)
    throw ConfigError(
        "synth_factors: density_h too low to give every row of H a nonzero");

  std::mt19937_64 rng(spec.seed);
  SynthData data;
  data.w_true = sparse_uniform(spec.m, spec.rank, count_w, true, rng);
  data.h_true = sparse_uniform(spec.rank, spec.n, count_h, false, rng);
  data.x = data.w_true * data.h_true;
  return data;
}

Matrix add_noise(const Matrix& x, double epsilon, std::uint64_t seed) {
  if (epsilon < 0.0) throw ConfigError("add_noise: epsilon must be >= 0");
  if (epsilon == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix y = x;
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i)
      y(i, j) = std::max(y(i, j) + epsilon * gauss(rng), 0.0);
  return y;
}

SampledSignal impulsive_signal(double sample_rate, double duration, double f0,
                               double carrier_hz, double decay,
                               double noise_sigma, std::uint64_t seed) {
  if (sample_rate <= 0.0 || duration <= 0.0)
    throw ConfigError("impulsive_signal: nonpositive sample rate or duration");
  if (f0 >= sample_rate / 2.0 || carrier_hz >= sample_rate / 2.0)
    throw ConfigError("impulsive_signal: rates must stay below Nyquist");
  if (carrier_hz <= 0.0)
    throw ConfigError("impulsive_signal: carrier must be positive");
  if (noise_sigma < 0.0)
    throw ConfigError("impulsive_signal: noise sigma must be >= 0");
  if (f0 > 0.0 && decay <= 0.0)
    throw ConfigError("impulsive_signal: decay must be positive");

  SampledSignal out;
  out.sample_rate = sample_rate;
  const Index n = static_cast<Index>(std::llround(sample_rate * duration));
  out.samples.assign(n, 0.0);

  if (f0 > 0.0) {
    const double period = 1.0 / f0;
    for (Index k = 0;; ++k) {
      const double t0 = static_cast<double>(k) * period;
      if (t0 >= duration) break;
      Index i = static_cast<Index>(std::ceil(t0 * sample_rate));
      for (; i < n; ++i) {
        const double tau = static_cast<double>(i) / sample_rate - t0;
        const double amp = std::exp(-decay * tau);
        if (amp < 1e-8) break;
        out.samples[i] +=
            amp * std::sin(2.0 * std::numbers::pi * carrier_hz * tau);
      }
    }
  }

  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Index i = 0; i < n; ++i) out.samples[i] += noise_sigma * gauss(rng);
  }
  return out;
}

}  // namespace shinbo
