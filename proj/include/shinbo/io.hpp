// File formats: headerless full-precision CSV matrices, run-trace CSV,
// WAV/CSV signals.
#pragma once

#include "shinbo/factors.hpp"
#include "shinbo/signal.hpp"
#include "shinbo/types.hpp"

#include <filesystem>

namespace shinbo {

// Headerless, row-major, 17 significant digits.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

// Header row, then one line per outer iteration:
// iter,fit,penalty,total,response,lambda_1..lambda_r,seconds
void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace);

// Mono WAV, 16-bit PCM or 32-bit IEEE float.
SampledSignal read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const SampledSignal& signal);

// One sample per line; the rate comes from the caller.
SampledSignal read_signal_csv(const std::filesystem::path& path,
                              double sample_rate);
void write_signal_csv(const std::filesystem::path& path,
                      const SampledSignal& signal);

// Shared formatting helper: shortest representation that still round-trips
// (17 significant digits).
std::string format_double(double value);

}  // namespace shinbo
