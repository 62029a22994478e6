// Monte-Carlo experiment driver: seeded batches over the compared solvers,
// metric aggregation and the statistical comparison matrix.
#pragma once

#include "shinbo/bilevel.hpp"
#include "shinbo/datagen.hpp"
#include "shinbo/factors.hpp"
#include "shinbo/metrics.hpp"
#include "shinbo/signal.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace shinbo {

struct AlgoSpec {
  std::string name;                      // "mu", "mu0.5", "shinbo", ...
  LambdaMode mode = LambdaMode::kFixed;
  double lambda = 0.0;                   // fixed-mode penalty
};

// The four methods compared throughout: unpenalized MU, MU with 0.1 and 0.5,
// and the adaptive solver.
std::vector<AlgoSpec> default_algos();

// "mu", "mu:<value>" or "shinbo".
AlgoSpec parse_algo(const std::string& token);

// Dispatches on the algorithm kind; both solvers share the init.
SolveResult run_algo(const Matrix& x, const AlgoSpec& algo,
                     SolverConfig config, const FactorPair& init);

struct SurrogateSpec {
  double sample_rate = 50000.0;
  double duration = 1.0;
  double f0 = 91.0;          // burst repetition rate; <= 0 means noise only
  double carrier_hz = 12000.0;
  double decay = 900.0;
  double noise_sigma = 0.4;
  int window_len = 128;
  int overlap = 100;
  int nfft = 512;
  int harmonics = 6;         // M1 for the envelope indicator
  double score_f0 = 0.0;     // frequency the indicator is scored at; 0 -> f0
  // Scale the spectrogram to unit mean before factorizing.  The IS fit is
  // scale-invariant but the penalties are not, so this keeps lambda in [0,1]
  // meaningful regardless of signal units.
  bool unit_mean_scale = true;
};

enum class DatasetKind { kSynthetic, kSurrogate };

struct McConfig {
  int runs = 30;
  DatasetKind dataset = DatasetKind::kSynthetic;
  SynthSpec synth;
  double noise_epsilon = 0.0;
  SurrogateSpec surrogate;
  SolverConfig solver;
  InitMethod init = InitMethod::kNndsvd;
  std::vector<AlgoSpec> algos = default_algos();
  std::uint64_t base_seed = 1;
  int workers = 0;  // 0 -> SHINBO_WORKERS env var, then hardware concurrency
  bool collect_traces = false;
};

struct RunMetrics {
  bool ok = false;
  std::string error;
  std::uint64_t seed = 0;
  double sir_w = 0.0, sir_h = 0.0;
  double sp_w = 0.0, sp_h = 0.0;
  double envsi_best = 0.0;
  std::vector<double> envsi_components;
  double fit = 0.0;
  double response_first = 0.0, response_last = 0.0;
  int iterations = 0;
  bool converged = false;
  Vector lambda;
  double seconds = 0.0;
  RunTrace trace;  // only kept when collect_traces is set
};

struct McResult {
  std::vector<std::string> algo_names;
  // metrics[a][r]: algorithm a on run r (runs share data and init)
  std::vector<std::vector<RunMetrics>> metrics;
};

McResult run_monte_carlo(const McConfig& config);

// Successful-run samples of one metric ("sir_w", "sir_h", "sp_w", "sp_h",
// "envsi") for one algorithm.
std::vector<double> metric_samples(const std::vector<RunMetrics>& runs,
                                   const std::string& metric);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};
MetricSummary summarize(const std::vector<double>& samples);

struct PairwiseTests {
  std::string metric;
  double kruskal_statistic = 0.0;
  double kruskal_p = 1.0;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<double> p_raw;
  std::vector<double> p_adjusted;  // Benjamini-Hochberg
};

// Kruskal-Wallis across algorithms plus the BH-corrected pairwise
// Mann-Whitney matrix for one metric.
PairwiseTests pairwise_tests(const McResult& result,
                             const std::string& metric);

int resolve_workers(int requested);

// Byte-stable report embedding the resolved configuration.
nlohmann::ordered_json mc_report_json(const McConfig& config,
                                      const McResult& result);
nlohmann::ordered_json mc_config_json(const McConfig& config);
nlohmann::ordered_json solver_config_json(const SolverConfig& config);

}  // namespace shinbo
