#include "shinbo/signal.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace shinbo {

namespace {

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(length, 1.0);
  if (kind == WindowKind::kHann) {
    for (int i = 0; i < length; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

}  // namespace

Spectrogram stft_power_spectrogram(const SampledSignal& signal, int window_len,
                                   int overlap, int nfft, WindowKind window,
                                   SpectrogramScale scale) {
  if (signal.sample_rate <= 0.0)
    throw DomainError("stft: sample rate must be positive");
  if (!(0 <= overlap && overlap < window_len && window_len <= nfft))
    throw ConfigError("stft: need 0 <= overlap < window_len <= nfft");
  const Index len = static_cast<Index>(signal.samples.size());
  if (len < window_len)
    throw DomainError("stft: signal too short, need at least " +
                      std::to_string(window_len) + " samples");

  const int hop = window_len - overlap;
  const Index frames = (len - window_len) / hop + 1;
  const Index bins = nfft / 2 + 1;
  const std::vector<double> win = make_window(window, window_len);

  Spectrogram out;
  out.power.resize(bins, frames);
  out.freq_resolution = signal.sample_rate / nfft;
  out.frame_rate = signal.sample_rate / hop;

  Eigen::FFT<double> fft;
  std::vector<double> frame(nfft, 0.0);
  std::vector<std::complex<double>> spectrum;
  for (Index f = 0; f < frames; ++f) {
    const Index start = f * hop;
    for (int i = 0; i < window_len; ++i)
      frame[i] = signal.samples[start + i] * win[i];
    std::fill(frame.begin() + window_len, frame.end(), 0.0);
    fft.fwd(spectrum, frame);
    for (Index b = 0; b < bins; ++b) {
      const double mag = std::abs(spectrum[b]);
      out.power(b, f) = scale == SpectrogramScale::kPower ? mag * mag : mag;
    }
  }
  return out;
}

EnvelopeSpectrum envelope_spectrum(const Vector& activation,
                                   double frame_rate) {
  const Index n = activation.size();
  if (n < 8) throw DimensionError("envelope_spectrum: need >= 8 samples");
  if (frame_rate <= 0.0)
    throw DomainError("envelope_spectrum: frame rate must be positive");
  if ((activation.array() == 0.0).all())
    throw DomainError("envelope_spectrum: all-zero activation");

  const double mean = activation.mean();
  std::vector<double> centered(n);
  for (Index i = 0; i < n; ++i) centered[i] = activation[i] - mean;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, centered);

  EnvelopeSpectrum out;
  out.magnitudes.resize(n / 2 + 1);
  for (Index b = 0; b <= n / 2; ++b) out.magnitudes[b] = std::abs(spectrum[b]);
  out.bin_hz = frame_rate / static_cast<double>(n);
  return out;
}

double detect_fundamental(const EnvelopeSpectrum& spectrum, double f_lo,
                          double f_hi) {
  const Index bins = spectrum.magnitudes.size();
  Index lo = static_cast<Index>(std::ceil(f_lo / spectrum.bin_hz));
  lo = std::max<Index>(lo, 1);  // DC excluded
  Index hi = static_cast<Index>(std::floor(f_hi / spectrum.bin_hz));
  hi = std::min(hi, bins - 1);
  if (lo > hi)
    throw DomainError("detect_fundamental: empty search band");
  Index best = lo;
  for (Index b = lo + 1; b <= hi; ++b)
    if (spectrum.magnitudes[b] > spectrum.magnitudes[best]) best = b;
  return static_cast<double>(best) * spectrum.bin_hz;
}

double envsi(const EnvelopeSpectrum& spectrum, double f0,
             const EnvsiOptions& options) {
  const Index bins = spectrum.magnitudes.size();
  const Index last = bins - 1;
  if (options.harmonics < 1)
    throw ConfigError("envsi: need at least one harmonic");
  if (f0 <= 0.0 || f0 / spectrum.bin_hz < 0.5)
    throw DomainError("envsi: fundamental below spectral resolution");
  const Index energy_bins =
      options.energy_bins > 0 ? options.energy_bins : last;
  if (energy_bins > last)
    throw DimensionError("envsi: energy bin count exceeds spectrum");

  double numerator = 0.0;
  for (int i = 1; i <= options.harmonics; ++i) {
    const Index center =
        static_cast<Index>(std::llround(i * f0 / spectrum.bin_hz));
    if (center + options.tolerance_bins > last) {
      if (options.truncate_harmonics) break;
      throw DomainError("envsi: harmonic " + std::to_string(i) +
                        " beyond Nyquist");
    }
    const Index lo = std::max<Index>(center - options.tolerance_bins, 1);
    const Index hi = center + options.tolerance_bins;
    double peak = 0.0;
    for (Index b = lo; b <= hi; ++b)
      peak = std::max(peak, spectrum.magnitudes[b]);
    numerator += peak * peak;
  }

  double denominator = 0.0;
  for (Index k = 1; k <= energy_bins; ++k)
    denominator += spectrum.magnitudes[k] * spectrum.magnitudes[k];
  if (denominator == 0.0) return 0.0;
  return numerator / denominator;
}

}  // namespace shinbo
