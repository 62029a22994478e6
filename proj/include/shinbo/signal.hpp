// Spectrogram construction and envelope-spectrum scoring of temporal
// activations.
#pragma once

#include "shinbo/types.hpp"

#include <vector>

namespace shinbo {

struct SampledSignal {
  std::vector<double> samples;
  double sample_rate = 0.0;  // Hz
};

struct Spectrogram {
  Matrix power;             // freq_bins x frames, one-sided
  double freq_resolution = 0.0;  // Hz per bin
  double frame_rate = 0.0;       // frames per second
};

enum class WindowKind { kHann, kRect };
enum class SpectrogramScale { kPower, kMagnitude };

// Frames advance by window_len - overlap; each frame is windowed, zero-padded
// to nfft and transformed.  The one-sided output has nfft/2 + 1 bins.
Spectrogram stft_power_spectrogram(const SampledSignal& signal, int window_len,
                                   int overlap, int nfft,
                                   WindowKind window = WindowKind::kHann,
                                   SpectrogramScale scale =
                                       SpectrogramScale::kPower);

struct EnvelopeSpectrum {
  Vector magnitudes;   // one-sided, bin 0 is DC
  double bin_hz = 0.0;
};

// One-sided magnitude spectrum of the mean-removed activation.  Activations
// from the factorization are nonnegative energy envelopes already, so no
// analytic-signal step is applied.
EnvelopeSpectrum envelope_spectrum(const Vector& activation,
                                   double frame_rate);

// Frequency of the strongest bin inside [f_lo, f_hi], DC excluded.
double detect_fundamental(const EnvelopeSpectrum& spectrum, double f_lo,
                          double f_hi);

struct EnvsiOptions {
  int harmonics = 6;          // M1
  Index energy_bins = 0;      // M2; 0 means every non-DC bin
  Index tolerance_bins = 1;   // half-width of the harmonic search window
  bool truncate_harmonics = false;  // drop harmonics beyond Nyquist instead
                                    // of throwing
};

// Envelope-spectrum indicator: sum of squared harmonic magnitudes around
// i*f0 (i = 1..M1) over the total squared magnitude of the first M2 non-DC
// bins.  Zero for a flat zero spectrum.
double envsi(const EnvelopeSpectrum& spectrum, double f0,
             const EnvsiOptions& options = {});

}  // namespace shinbo
