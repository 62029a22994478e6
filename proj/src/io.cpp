#include "shinbo/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace shinbo {

namespace {

[[noreturn]] void io_error(const std::filesystem::path& path,
                           const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) io_error(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) io_error(path, "cannot open for reading");
  return in;
}

template <typename T>
T read_le(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

template <typename T>
void write_le(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out = open_out(path, false);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) io_error(path, "write failed");
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, false);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      size_t pos = 0;
      const double v = std::stod(cell, &pos);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      io_error(path, "ragged CSV rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) io_error(path, "empty matrix file");
  Matrix m(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

void write_trace_csv(const std::filesystem::path& path,
                     const RunTrace& trace) {
  std::ofstream out = open_out(path, false);
  const Index rank = trace.empty() ? 0 : trace.front().lambda.size();
  out << "iter,fit,penalty,total,response";
  for (Index l = 0; l < rank; ++l) out << ",lambda_" << (l + 1);
  out << ",seconds\n";
  for (const TraceRow& row : trace) {
    out << row.iter << ',' << format_double(row.objective.fit) << ','
        << format_double(row.objective.penalty) << ','
        << format_double(row.objective.total) << ','
        << format_double(row.response);
    for (Index l = 0; l < row.lambda.size(); ++l)
      out << ',' << format_double(row.lambda[l]);
    out << ',' << format_double(row.seconds) << '\n';
  }
  if (!out) io_error(path, "write failed");
}

SampledSignal read_wav(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) io_error(path, "not a RIFF file");
  read_le<std::uint32_t>(in);  // total size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) io_error(path, "not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> data;
  while (in.read(tag, 4)) {
    const std::uint32_t size = read_le<std::uint32_t>(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      in.seekg(size - 16, std::ios::cur);
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (rate == 0 || data.empty()) io_error(path, "missing fmt or data chunk");
  if (channels != 1) io_error(path, "only mono WAV input is supported");

  SampledSignal signal;
  signal.sample_rate = rate;
  if (format == 1 && bits == 16) {
    const auto* pcm = reinterpret_cast<const std::int16_t*>(data.data());
    const size_t count = data.size() / 2;
    signal.samples.resize(count);
    for (size_t i = 0; i < count; ++i)
      signal.samples[i] = static_cast<double>(pcm[i]) / 32768.0;
  } else if (format == 3 && bits == 32) {
    const auto* f32 = reinterpret_cast<const float*>(data.data());
    const size_t count = data.size() / 4;
    signal.samples.resize(count);
    for (size_t i = 0; i < count; ++i)
      signal.samples[i] = static_cast<double>(f32[i]);
  } else {
    io_error(path, "unsupported WAV encoding (need PCM16 or float32)");
  }
  return signal;
}

void write_wav(const std::filesystem::path& path,
               const SampledSignal& signal) {
  if (signal.sample_rate <= 0.0)
    throw DomainError("write_wav: sample rate must be positive");
  std::ofstream out = open_out(path, true);
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(signal.samples.size() * 4);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, 3);  // IEEE float
  write_le<std::uint16_t>(out, 1);  // mono
  const auto rate = static_cast<std::uint32_t>(signal.sample_rate);
  write_le<std::uint32_t>(out, rate);
  write_le<std::uint32_t>(out, rate * 4);
  write_le<std::uint16_t>(out, 4);
  write_le<std::uint16_t>(out, 32);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double s : signal.samples)
    write_le<float>(out, static_cast<float>(s));
  if (!out) io_error(path, "write failed");
}

SampledSignal read_signal_csv(const std::filesystem::path& path,
                              double sample_rate) {
  if (sample_rate <= 0.0)
    throw DomainError("read_signal_csv: sample rate must be positive");
  std::ifstream in = open_in(path, false);
  SampledSignal signal;
  signal.sample_rate = sample_rate;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    signal.samples.push_back(std::stod(line));
  }
  if (signal.samples.empty()) io_error(path, "empty signal file");
  return signal;
}

void write_signal_csv(const std::filesystem::path& path,
                      const SampledSignal& signal) {
  std::ofstream out = open_out(path, false);
  for (double s : signal.samples) out << format_double(s) << '\n';
  if (!out) io_error(path, "write failed");
}

}  // namespace shinbo
