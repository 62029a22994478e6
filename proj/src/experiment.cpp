#include "shinbo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace shinbo {

namespace {

double final_or(const RunTrace& trace, double fallback,
                double TraceRow::*field) {
  return trace.empty() ? fallback : trace.back().*field;
}

}  // namespace

std::vector<AlgoSpec> default_algos() {
  return {
      {"mu", LambdaMode::kFixed, 0.0},
      {"mu0.1", LambdaMode::kFixed, 0.1},
      {"mu0.5", LambdaMode::kFixed, 0.5},
      {"shinbo", LambdaMode::kPerRowAdaptive, 0.0},
  };
}

AlgoSpec parse_algo(const std::string& token) {
  if (token == "shinbo") return {"shinbo", LambdaMode::kPerRowAdaptive, 0.0};
  if (token == "mu") return {"mu", LambdaMode::kFixed, 0.0};
  if (token.rfind("mu:", 0) == 0) {
    const std::string value = token.substr(3);
    try {
      const double lambda = std::stod(value);
      if (lambda < 0.0) throw ConfigError("negative penalty");
      return {"mu" + value, LambdaMode::kFixed, lambda};
    } catch (const std::exception&) {
      throw ConfigError("parse_algo: bad penalty in '" + token + "'");
    }
  }
  throw ConfigError("parse_algo: unknown algorithm '" + token +
                    "' (expected mu, mu:<lambda> or shinbo)");
}

SolveResult run_algo(const Matrix& x, const AlgoSpec& algo,
                     SolverConfig config, const FactorPair& init) {
  config.lambda_mode = algo.mode;
  if (algo.mode == LambdaMode::kFixed) {
    config.lambda_fixed = algo.lambda;
    return run_mu(x, config, init);
  }
  return run_shinbo(x, config, init);
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHINBO_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

struct RunInputs {
  Matrix x;
  FactorPair init;
  std::uint64_t data_seed = 0;
  std::uint64_t solver_seed = 0;
  // synthetic ground truth (empty in surrogate mode)
  Matrix w_true, h_true;
  double frame_rate = 0.0;  // surrogate mode
};

RunInputs prepare_run(const McConfig& config, int run) {
  RunInputs inputs;
  inputs.data_seed = mix_seed(config.base_seed, 4ULL * run);
  inputs.solver_seed = mix_seed(config.base_seed, 4ULL * run + 3);

  if (config.dataset == DatasetKind::kSynthetic) {
    SynthSpec spec = config.synth;
    spec.seed = inputs.data_seed;
    SynthData data = synth_factors(spec);
    inputs.w_true = std::move(data.w_true);
    inputs.h_true = std::move(data.h_true);
    inputs.x = config.noise_epsilon > 0.0
                   ? add_noise(data.x, config.noise_epsilon,
                               mix_seed(config.base_seed, 4ULL * run + 1))
                   : std::move(data.x);
  } else {
    const SurrogateSpec& s = config.surrogate;
    const SampledSignal sig =
        impulsive_signal(s.sample_rate, s.duration, s.f0, s.carrier_hz,
                         s.decay, s.noise_sigma, inputs.data_seed);
    const Spectrogram spect =
        stft_power_spectrogram(sig, s.window_len, s.overlap, s.nfft);
    inputs.x = spect.power;
    if (s.unit_mean_scale) {
      const double mean = inputs.x.mean();
      if (mean > 0.0) inputs.x /= mean;
    }
    inputs.frame_rate = spect.frame_rate;
  }

  inputs.init = make_init(inputs.x, config.solver.rank, config.init,
                          mix_seed(config.base_seed, 4ULL * run + 2),
                          config.solver.floor);
  return inputs;
}

RunMetrics score_run(const McConfig& config, const RunInputs& inputs,
                     const AlgoSpec& algo) {
  SolverConfig solver = config.solver;
  solver.seed = inputs.solver_seed;
  const SolveResult result = run_algo(inputs.x, algo, solver, inputs.init);

  RunMetrics metrics;
  metrics.ok = true;
  metrics.seed = inputs.data_seed;
  metrics.iterations = result.iterations;
  metrics.converged = result.converged;
  metrics.lambda = result.lambda;
  metrics.fit = result.trace.empty() ? 0.0
                                     : result.trace.back().objective.fit;
  metrics.response_first =
      result.trace.empty() ? 0.0 : result.trace.front().response;
  metrics.response_last = final_or(result.trace, 0.0, &TraceRow::response);
  metrics.seconds = final_or(result.trace, 0.0, &TraceRow::seconds);

  if (config.dataset == DatasetKind::kSynthetic) {
    metrics.sir_w = sir_columns(inputs.w_true, result.factors.w).mean_db;
    metrics.sir_h = sir_rows(inputs.h_true, result.factors.h).mean_db;
    metrics.sp_w = sparsity(result.factors.w);
    metrics.sp_h = sparsity(result.factors.h);
  } else {
    const SurrogateSpec& s = config.surrogate;
    const double score_f0 = s.score_f0 > 0.0 ? s.score_f0 : s.f0;
    EnvsiOptions options;
    options.harmonics = s.harmonics;
    for (Index l = 0; l < result.factors.h.rows(); ++l) {
      double value = 0.0;
      try {
        const EnvelopeSpectrum env = envelope_spectrum(
            result.factors.h.row(l).transpose(), inputs.frame_rate);
        value = envsi(env, score_f0, options);
      } catch (const DomainError&) {
        value = 0.0;  // dead activation carries no impulsive content
      }
      metrics.envsi_components.push_back(value);
      metrics.envsi_best = std::max(metrics.envsi_best, value);
    }
  }
  if (config.collect_traces) metrics.trace = result.trace;
  return metrics;
}

}  // namespace

McResult run_monte_carlo(const McConfig& config) {
  if (config.runs < 1) throw ConfigError("run_monte_carlo: runs must be >= 1");
  if (config.algos.empty())
    throw ConfigError("run_monte_carlo: no algorithms selected");

  McResult result;
  for (const AlgoSpec& algo : config.algos)
    result.algo_names.push_back(algo.name);
  result.metrics.assign(config.algos.size(),
                        std::vector<RunMetrics>(config.runs));

  const int workers =
      std::min(resolve_workers(config.workers), config.runs);
  std::atomic<int> next_run{0};

  const auto worker = [&] {
    for (;;) {
      const int run = next_run.fetch_add(1);
      if (run >= config.runs) return;
      RunInputs inputs;
      bool inputs_ok = true;
      std::string inputs_error;
      try {
        inputs = prepare_run(config, run);
      } catch (const std::exception& e) {
        inputs_ok = false;
        inputs_error = e.what();
      }
      for (size_t a = 0; a < config.algos.size(); ++a) {
        RunMetrics& slot = result.metrics[a][run];
        if (!inputs_ok) {
          slot.ok = false;
          slot.error = "data generation failed: " + inputs_error;
          continue;
        }
        try {
          slot = score_run(config, inputs, config.algos[a]);
        } catch (const std::exception& e) {
          slot = RunMetrics{};
          slot.seed = inputs.data_seed;
          slot.ok = false;
          slot.error = e.what();
        }
      }
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return result;
}

std::vector<double> metric_samples(const std::vector<RunMetrics>& runs,
                                   const std::string& metric) {
  std::vector<double> samples;
  for (const RunMetrics& run : runs) {
    if (!run.ok) continue;
    if (metric == "sir_w") samples.push_back(run.sir_w);
    else if (metric == "sir_h") samples.push_back(run.sir_h);
    else if (metric == "sp_w") samples.push_back(run.sp_w);
    else if (metric == "sp_h") samples.push_back(run.sp_h);
    else if (metric == "envsi") samples.push_back(run.envsi_best);
    else throw ConfigError("metric_samples: unknown metric '" + metric + "'");
  }
  return samples;
}

MetricSummary summarize(const std::vector<double>& samples) {
  MetricSummary summary;
  summary.count = static_cast<int>(samples.size());
  if (samples.empty()) return summary;
  double sum = 0.0;
  for (double s : samples) sum += s;
  summary.mean = sum / samples.size();
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - summary.mean) * (s - summary.mean);
    summary.stddev = std::sqrt(ss / (samples.size() - 1));
  }
  return summary;
}

PairwiseTests pairwise_tests(const McResult& result,
                             const std::string& metric) {
  PairwiseTests tests;
  tests.metric = metric;
  std::vector<std::vector<double>> groups;
  for (const auto& runs : result.metrics)
    groups.push_back(metric_samples(runs, metric));

  const TestResult kw = kruskal_wallis(groups);
  tests.kruskal_statistic = kw.statistic;
  tests.kruskal_p = kw.p_value;

  for (size_t i = 1; i < groups.size(); ++i) {
    for (size_t j = 0; j < i; ++j) {
      tests.pairs.emplace_back(result.algo_names[i], result.algo_names[j]);
      tests.p_raw.push_back(mann_whitney(groups[i], groups[j]).p_value);
    }
  }
  tests.p_adjusted = bh_adjust(tests.p_raw);
  return tests;
}

nlohmann::ordered_json solver_config_json(const SolverConfig& config) {
  nlohmann::ordered_json j;
  j["rank"] = config.rank;
  j["max_outer_iters"] = config.max_outer_iters;
  j["inner_iters"] = config.inner_iters;
  j["tol"] = config.tol;
  j["lambda_mode"] = config.lambda_mode == LambdaMode::kFixed
                         ? "fixed"
                         : "per_row_adaptive";
  j["lambda_fixed"] = config.lambda_fixed;
  j["step_alpha"] = config.step_alpha;
  j["seed"] = config.seed;
  j["w_update_rule"] = config.w_update_rule == WUpdateRule::kEuclidean
                           ? "euclidean"
                           : "is_divergence";
  j["floor"] = config.floor;
  j["lambda_batched"] = config.lambda_batched;
  j["lambda_max"] = config.lambda_max;
  j["lambda_step"] = config.lambda_step == LambdaStepRule::kConstant
                         ? "constant"
                         : "normalized";
  return j;
}

nlohmann::ordered_json mc_config_json(const McConfig& config) {
  nlohmann::ordered_json j;
  j["runs"] = config.runs;
  j["dataset"] =
      config.dataset == DatasetKind::kSynthetic ? "synthetic" : "surrogate";
  j["synth"] = {{"m", config.synth.m},
                {"n", config.synth.n},
                {"rank", config.synth.rank},
                {"density_w", config.synth.density_w},
                {"density_h", config.synth.density_h}};
  j["noise_epsilon"] = config.noise_epsilon;
  j["surrogate"] = {{"sample_rate", config.surrogate.sample_rate},
                    {"duration", config.surrogate.duration},
                    {"f0", config.surrogate.f0},
                    {"carrier_hz", config.surrogate.carrier_hz},
                    {"decay", config.surrogate.decay},
                    {"noise_sigma", config.surrogate.noise_sigma},
                    {"window_len", config.surrogate.window_len},
                    {"overlap", config.surrogate.overlap},
                    {"nfft", config.surrogate.nfft},
                    {"harmonics", config.surrogate.harmonics},
                    {"score_f0", config.surrogate.score_f0},
                    {"unit_mean_scale", config.surrogate.unit_mean_scale}};
  j["solver"] = solver_config_json(config.solver);
  j["init"] = config.init == InitMethod::kNndsvd ? "nndsvd" : "gaussian";
  nlohmann::ordered_json algos = nlohmann::ordered_json::array();
  for (const AlgoSpec& algo : config.algos)
    algos.push_back({{"name", algo.name},
                     {"mode", algo.mode == LambdaMode::kFixed
                                  ? "fixed"
                                  : "per_row_adaptive"},
                     {"lambda", algo.lambda}});
  j["algorithms"] = algos;
  j["base_seed"] = config.base_seed;
  return j;
}

nlohmann::ordered_json mc_report_json(const McConfig& config,
                                      const McResult& result) {
  nlohmann::ordered_json report;
  report["config"] = mc_config_json(config);

  const bool synthetic = config.dataset == DatasetKind::kSynthetic;
  const std::vector<std::string> metric_names =
      synthetic ? std::vector<std::string>{"sir_w", "sir_h", "sp_w", "sp_h"}
                : std::vector<std::string>{"envsi"};

  nlohmann::ordered_json per_run;
  for (size_t a = 0; a < result.algo_names.size(); ++a) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (size_t r = 0; r < result.metrics[a].size(); ++r) {
      const RunMetrics& m = result.metrics[a][r];
      nlohmann::ordered_json row;
      row["run"] = r;
      row["seed"] = m.seed;
      row["ok"] = m.ok;
      if (!m.ok) {
        row["error"] = m.error;
      } else {
        if (synthetic) {
          row["sir_w"] = m.sir_w;
          row["sir_h"] = m.sir_h;
          row["sp_w"] = m.sp_w;
          row["sp_h"] = m.sp_h;
        } else {
          row["envsi"] = m.envsi_best;
          row["envsi_components"] = m.envsi_components;
        }
        row["fit"] = m.fit;
        row["response_first"] = m.response_first;
        row["response_last"] = m.response_last;
        row["iterations"] = m.iterations;
        row["converged"] = m.converged;
        std::vector<double> lambda(m.lambda.data(),
                                   m.lambda.data() + m.lambda.size());
        row["lambda"] = lambda;
      }
      rows.push_back(row);
    }
    per_run[result.algo_names[a]] = rows;
  }
  report["runs"] = per_run;

  nlohmann::ordered_json aggregate;
  for (size_t a = 0; a < result.algo_names.size(); ++a) {
    nlohmann::ordered_json entry;
    for (const std::string& metric : metric_names) {
      const MetricSummary s =
          summarize(metric_samples(result.metrics[a], metric));
      entry[metric] = {{"mean", s.mean}, {"std", s.stddev},
                       {"count", s.count}};
    }
    aggregate[result.algo_names[a]] = entry;
  }
  report["aggregate"] = aggregate;

  nlohmann::ordered_json tests;
  for (const std::string& metric : metric_names) {
    try {
      const PairwiseTests t = pairwise_tests(result, metric);
      nlohmann::ordered_json entry;
      entry["kruskal"] = {{"statistic", t.kruskal_statistic},
                          {"p", t.kruskal_p}};
      nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
      for (size_t i = 0; i < t.pairs.size(); ++i)
        pairs.push_back({{"a", t.pairs[i].first},
                         {"b", t.pairs[i].second},
                         {"p", t.p_raw[i]},
                         {"p_adjusted", t.p_adjusted[i]}});
      entry["pairwise"] = pairs;
      tests[metric] = entry;
    } catch (const std::exception& e) {
      tests[metric] = {{"error", e.what()}};
    }
  }
  report["tests"] = tests;
  return report;
}

}  // namespace shinbo
