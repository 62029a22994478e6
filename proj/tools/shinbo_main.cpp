// Command-line front end: data generation, single runs, Monte-Carlo batches,
// metric evaluation and spectrogram extraction.

#include "shinbo/experiment.hpp"
#include "shinbo/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 2;
constexpr int kExitConfig = 3;

// Binds config-file keys to the same variables the CLI flags write, so a JSON
// config and flags stay congruent; flags given on the command line win.
class ConfigBinder {
 public:
  template <typename T>
  void bind(const std::string& key, T& target) {
    setters_[key] = [&target](const json& value) { target = value.get<T>(); };
  }

  void apply(const json& config) const {
    if (!config.is_object())
      throw shinbo::ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : config.items()) {
      const auto it = setters_.find(key);
      if (it == setters_.end())
        throw shinbo::ConfigError("unknown config key: " + key);
      try {
        it->second(value);
      } catch (const json::exception& e) {
        throw shinbo::ConfigError("config key '" + key + "': " + e.what());
      }
    }
  }

 private:
  std::map<std::string, std::function<void(const json&)>> setters_;
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw shinbo::ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw shinbo::ConfigError("config parse error: " + std::string(e.what()));
  }
}

void write_json_file(const fs::path& path, const ordered_json& value) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

// Shared solver/init option block.  echo() emits the same keys the config
// file accepts, so a written echo reproduces the run.
struct SolverOptions {
  shinbo::Index rank = 3;
  int max_iters = 500;
  int inner_iters = 4;
  double tol = 1e-6;
  double alpha = 5e-3;
  std::uint64_t seed = 0;
  std::string init = "nndsvd";
  std::string w_rule = "is_divergence";
  double floor = shinbo::kDefaultFloor;
  bool lambda_batched = false;
  double lambda_max = 1.0;
  std::string lambda_step = "normalized";

  void add_flags(CLI::App* cmd, ConfigBinder& binder) {
    cmd->add_option("--rank", rank, "Factorization rank");
    cmd->add_option("--max-iters", max_iters, "Outer iteration cap");
    cmd->add_option("--inner-iters", inner_iters,
                    "Inner iterations per row (T)");
    cmd->add_option("--tol", tol, "Relative fit-change tolerance");
    cmd->add_option("--alpha", alpha, "Penalty gradient stepsize");
    cmd->add_option("--seed", seed, "Base seed");
    cmd->add_option("--init", init, "Initialization: nndsvd | gaussian");
    cmd->add_option("--w-rule", w_rule,
                    "W update: euclidean | is_divergence");
    cmd->add_option("--floor", floor, "Positivity floor");
    cmd->add_flag("--lambda-batched", lambda_batched,
                  "Update the penalty vector after the row loop");
    cmd->add_option("--lambda-max", lambda_max,
                    "Penalty upper clamp (<= 0 disables)");
    cmd->add_option("--lambda-step", lambda_step,
                    "Penalty step scaling: normalized | constant");
    binder.bind("rank", rank);
    binder.bind("max_iters", max_iters);
    binder.bind("inner_iters", inner_iters);
    binder.bind("tol", tol);
    binder.bind("alpha", alpha);
    binder.bind("seed", seed);
    binder.bind("init", init);
    binder.bind("w_rule", w_rule);
    binder.bind("floor", floor);
    binder.bind("lambda_batched", lambda_batched);
    binder.bind("lambda_max", lambda_max);
    binder.bind("lambda_step", lambda_step);
  }

  shinbo::SolverConfig to_config() const {
    shinbo::SolverConfig config;
    config.rank = rank;
    config.max_outer_iters = max_iters;
    config.inner_iters = inner_iters;
    config.tol = tol;
    config.step_alpha = alpha;
    config.seed = seed;
    config.floor = floor;
    config.lambda_batched = lambda_batched;
    config.lambda_max = lambda_max;
    if (w_rule == "euclidean")
      config.w_update_rule = shinbo::WUpdateRule::kEuclidean;
    else if (w_rule == "is_divergence")
      config.w_update_rule = shinbo::WUpdateRule::kIsDivergence;
    else
      throw shinbo::ConfigError("unknown W update rule: " + w_rule);
    if (lambda_step == "normalized")
      config.lambda_step = shinbo::LambdaStepRule::kNormalized;
    else if (lambda_step == "constant")
      config.lambda_step = shinbo::LambdaStepRule::kConstant;
    else
      throw shinbo::ConfigError("unknown lambda step rule: " + lambda_step);
    return config;
  }

  shinbo::InitMethod init_method() const {
    if (init == "nndsvd") return shinbo::InitMethod::kNndsvd;
    if (init == "gaussian") return shinbo::InitMethod::kTruncatedGaussian;
    throw shinbo::ConfigError("unknown init method: " + init);
  }

  void echo(ordered_json& j) const {
    j["rank"] = rank;
    j["max_iters"] = max_iters;
    j["inner_iters"] = inner_iters;
    j["tol"] = tol;
    j["alpha"] = alpha;
    j["seed"] = seed;
    j["init"] = init;
    j["w_rule"] = w_rule;
    j["floor"] = floor;
    j["lambda_batched"] = lambda_batched;
    j["lambda_max"] = lambda_max;
    j["lambda_step"] = lambda_step;
  }
};

struct StftOptions {
  int window = 128;
  int overlap = 100;
  int nfft = 512;
  std::string window_fn = "hann";
  std::string scale = "power";

  void add_flags(CLI::App* cmd, ConfigBinder& binder) {
    cmd->add_option("--window", window, "STFT window length");
    cmd->add_option("--overlap", overlap, "STFT overlap in samples");
    cmd->add_option("--nfft", nfft, "FFT length");
    cmd->add_option("--window-fn", window_fn, "Window: hann | rect");
    cmd->add_option("--scale", scale, "Spectrogram scale: power | magnitude");
    binder.bind("window", window);
    binder.bind("overlap", overlap);
    binder.bind("nfft", nfft);
    binder.bind("window_fn", window_fn);
    binder.bind("scale", scale);
  }

  shinbo::WindowKind window_kind() const {
    if (window_fn == "hann") return shinbo::WindowKind::kHann;
    if (window_fn == "rect") return shinbo::WindowKind::kRect;
    throw shinbo::ConfigError("unknown window function: " + window_fn);
  }

  shinbo::SpectrogramScale scale_kind() const {
    if (scale == "power") return shinbo::SpectrogramScale::kPower;
    if (scale == "magnitude") return shinbo::SpectrogramScale::kMagnitude;
    throw shinbo::ConfigError("unknown spectrogram scale: " + scale);
  }

  void echo(ordered_json& j) const {
    j["window"] = window;
    j["overlap"] = overlap;
    j["nfft"] = nfft;
    j["window_fn"] = window_fn;
    j["scale"] = scale;
  }
};

shinbo::SampledSignal load_signal(const std::string& wav_path,
                                  const std::string& csv_path,
                                  double sample_rate) {
  if (!wav_path.empty() && !csv_path.empty())
    throw shinbo::ConfigError("give either --wav or --signal, not both");
  if (!wav_path.empty()) return shinbo::read_wav(wav_path);
  if (!csv_path.empty()) {
    if (sample_rate <= 0.0)
      throw shinbo::ConfigError("--sample-rate is required with --signal");
    return shinbo::read_signal_csv(csv_path, sample_rate);
  }
  throw shinbo::ConfigError("an input signal (--wav or --signal) is required");
}

std::vector<shinbo::AlgoSpec> parse_algo_list(const std::string& csv) {
  std::vector<shinbo::AlgoSpec> algos;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) algos.push_back(shinbo::parse_algo(token));
  if (algos.empty()) throw shinbo::ConfigError("empty algorithm list");
  return algos;
}

// ---------------------------------------------------------------- gen ----

struct GenOptions {
  shinbo::Index m = 100, n = 70, rank = 3;
  double density_w = 0.10, density_h = 0.70;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenOptions& opt) {
  shinbo::SynthSpec spec;
  spec.m = opt.m;
  spec.n = opt.n;
  spec.rank = opt.rank;
  spec.density_w = opt.density_w;
  spec.density_h = opt.density_h;
  spec.seed = opt.seed;
  const shinbo::SynthData data = shinbo::synth_factors(spec);

  const fs::path out(opt.out);
  fs::create_directories(out);
  shinbo::write_matrix_csv(out / "W_true.csv", data.w_true);
  shinbo::write_matrix_csv(out / "H_true.csv", data.h_true);
  shinbo::write_matrix_csv(out / "X.csv", data.x);

  ordered_json manifest;
  manifest["command"] = "gen";
  manifest["m"] = spec.m;
  manifest["n"] = spec.n;
  manifest["rank"] = spec.rank;
  manifest["density_w"] = spec.density_w;
  manifest["density_h"] = spec.density_h;
  manifest["seed"] = spec.seed;
  manifest["files"] = {"W_true.csv", "H_true.csv", "X.csv"};
  write_json_file(out / "manifest.json", manifest);

  ordered_json echo;
  echo["m"] = spec.m;
  echo["n"] = spec.n;
  echo["rank"] = spec.rank;
  echo["density_w"] = spec.density_w;
  echo["density_h"] = spec.density_h;
  echo["seed"] = spec.seed;
  write_json_file(out / "config_echo.json", echo);
  std::cout << "wrote " << (out / "X.csv").string() << " (" << spec.m << "x"
            << spec.n << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- run ----

struct RunOptions {
  std::string x_path, wav_path, signal_path;
  double sample_rate = 0.0;
  StftOptions stft;
  bool raw_scale = false;  // keep the spectrogram in its native units
  std::string algo = "shinbo";
  SolverOptions solver;
  std::string out;
};

int cmd_run(const RunOptions& opt) {
  shinbo::Matrix x;
  double frame_rate = 0.0;
  if (!opt.x_path.empty()) {
    x = shinbo::read_matrix_csv(opt.x_path);
  } else {
    const shinbo::SampledSignal signal =
        load_signal(opt.wav_path, opt.signal_path, opt.sample_rate);
    const shinbo::Spectrogram spect = shinbo::stft_power_spectrogram(
        signal, opt.stft.window, opt.stft.overlap, opt.stft.nfft,
        opt.stft.window_kind(), opt.stft.scale_kind());
    x = spect.power;
    if (!opt.raw_scale && x.mean() > 0.0) x /= x.mean();
    frame_rate = spect.frame_rate;
  }

  const shinbo::AlgoSpec algo = shinbo::parse_algo(opt.algo);
  const shinbo::SolverConfig config = opt.solver.to_config();
  const shinbo::FactorPair init = shinbo::make_init(
      x, config.rank, opt.solver.init_method(), config.seed, config.floor);
  const shinbo::SolveResult result = shinbo::run_algo(x, algo, config, init);

  const fs::path out(opt.out);
  fs::create_directories(out);
  shinbo::write_matrix_csv(out / "W.csv", result.factors.w);
  shinbo::write_matrix_csv(out / "H.csv", result.factors.h);
  shinbo::write_matrix_csv(out / "lambda.csv", result.lambda);
  shinbo::write_trace_csv(out / "trace.csv", result.trace);

  ordered_json summary;
  summary["command"] = "run";
  summary["algorithm"] = algo.name;
  summary["input"] = !opt.x_path.empty()
                         ? opt.x_path
                         : (!opt.wav_path.empty() ? opt.wav_path
                                                  : opt.signal_path);
  summary["solver"] = shinbo::solver_config_json(config);
  summary["init"] = opt.solver.init;
  if (frame_rate > 0.0) {
    summary["frame_rate"] = frame_rate;
    summary["stft"] = {{"window", opt.stft.window},
                       {"overlap", opt.stft.overlap},
                       {"nfft", opt.stft.nfft},
                       {"window_fn", opt.stft.window_fn},
                       {"scale", opt.stft.scale}};
  }
  summary["iterations"] = result.iterations;
  summary["converged"] = result.converged;
  if (!result.trace.empty()) {
    summary["final_fit"] = result.trace.back().objective.fit;
    summary["final_total"] = result.trace.back().objective.total;
    summary["final_response"] = result.trace.back().response;
  }
  write_json_file(out / "run.json", summary);

  ordered_json echo;
  echo["x"] = opt.x_path;
  echo["wav"] = opt.wav_path;
  echo["signal"] = opt.signal_path;
  echo["sample_rate"] = opt.sample_rate;
  opt.stft.echo(echo);
  echo["raw_scale"] = opt.raw_scale;
  echo["algo"] = opt.algo;
  opt.solver.echo(echo);
  write_json_file(out / "config_echo.json", echo);

  std::cout << algo.name << ": " << result.iterations << " iterations, "
            << (result.converged ? "converged" : "iteration cap") << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- mc ----

struct McOptions {
  int runs = 30;
  std::string mode = "synth";
  shinbo::Index m = 100, n = 70;
  double density_w = 0.10, density_h = 0.70;
  double noise = 0.0;
  double sur_sample_rate = 50000.0, sur_duration = 1.0, sur_f0 = 91.0;
  double sur_carrier = 12000.0, sur_decay = 900.0, sur_noise_sigma = 0.4;
  double sur_score_f0 = 0.0;
  int sur_harmonics = 6;
  bool raw_scale = false;
  StftOptions stft;
  std::string algos = "mu,mu:0.1,mu:0.5,shinbo";
  SolverOptions solver;
  int workers = 0;
  bool traces = false;
  std::string out;
};

shinbo::McConfig to_mc_config(const McOptions& opt) {
  shinbo::McConfig config;
  config.runs = opt.runs;
  if (opt.mode == "synth") {
    config.dataset = shinbo::DatasetKind::kSynthetic;
  } else if (opt.mode == "surrogate") {
    config.dataset = shinbo::DatasetKind::kSurrogate;
  } else {
    throw shinbo::ConfigError("unknown mc mode: " + opt.mode);
  }
  config.synth.m = opt.m;
  config.synth.n = opt.n;
  config.synth.rank = opt.solver.rank;
  config.synth.density_w = opt.density_w;
  config.synth.density_h = opt.density_h;
  config.noise_epsilon = opt.noise;
  config.surrogate.sample_rate = opt.sur_sample_rate;
  config.surrogate.duration = opt.sur_duration;
  config.surrogate.f0 = opt.sur_f0;
  config.surrogate.carrier_hz = opt.sur_carrier;
  config.surrogate.decay = opt.sur_decay;
  config.surrogate.noise_sigma = opt.sur_noise_sigma;
  config.surrogate.score_f0 = opt.sur_score_f0;
  config.surrogate.harmonics = opt.sur_harmonics;
  config.surrogate.unit_mean_scale = !opt.raw_scale;
  config.surrogate.window_len = opt.stft.window;
  config.surrogate.overlap = opt.stft.overlap;
  config.surrogate.nfft = opt.stft.nfft;
  config.solver = opt.solver.to_config();
  config.init = opt.solver.init_method();
  config.algos = parse_algo_list(opt.algos);
  config.base_seed = opt.solver.seed;
  config.workers = opt.workers;
  config.collect_traces = opt.traces;
  return config;
}

void write_mc_csv_tables(const fs::path& out, const shinbo::McConfig& config,
                         const shinbo::McResult& result) {
  const bool synthetic = config.dataset == shinbo::DatasetKind::kSynthetic;
  {
    std::ofstream per_run(out / "per_run.csv");
    per_run << "algo,run,seed,ok,error,sir_w,sir_h,sp_w,sp_h,envsi,fit,"
               "response_first,response_last,iterations,converged,seconds\n";
    for (size_t a = 0; a < result.algo_names.size(); ++a) {
      for (size_t r = 0; r < result.metrics[a].size(); ++r) {
        const shinbo::RunMetrics& m = result.metrics[a][r];
        per_run << result.algo_names[a] << ',' << r << ',' << m.seed << ','
                << (m.ok ? 1 : 0) << ',' << '"' << m.error << '"' << ','
                << shinbo::format_double(m.sir_w) << ','
                << shinbo::format_double(m.sir_h) << ','
                << shinbo::format_double(m.sp_w) << ','
                << shinbo::format_double(m.sp_h) << ','
                << shinbo::format_double(m.envsi_best) << ','
                << shinbo::format_double(m.fit) << ','
                << shinbo::format_double(m.response_first) << ','
                << shinbo::format_double(m.response_last) << ','
                << m.iterations << ',' << (m.converged ? 1 : 0) << ','
                << shinbo::format_double(m.seconds) << '\n';
      }
    }
  }
  {
    std::ofstream aggregate(out / "aggregate.csv");
    aggregate << "algo,metric,mean,std,count\n";
    const std::vector<std::string> metrics =
        synthetic ? std::vector<std::string>{"sir_w", "sir_h", "sp_w", "sp_h"}
                  : std::vector<std::string>{"envsi"};
    for (size_t a = 0; a < result.algo_names.size(); ++a) {
      for (const std::string& metric : metrics) {
        const shinbo::MetricSummary s = shinbo::summarize(
            shinbo::metric_samples(result.metrics[a], metric));
        aggregate << result.algo_names[a] << ',' << metric << ','
                  << shinbo::format_double(s.mean) << ','
                  << shinbo::format_double(s.stddev) << ',' << s.count << '\n';
      }
    }
  }
  {
    std::ofstream tests(out / "tests.csv");
    tests << "metric,comparison,a,b,statistic,p,p_adjusted\n";
    const std::vector<std::string> metrics =
        synthetic ? std::vector<std::string>{"sir_w", "sir_h", "sp_w", "sp_h"}
                  : std::vector<std::string>{"envsi"};
    for (const std::string& metric : metrics) {
      try {
        const shinbo::PairwiseTests t = shinbo::pairwise_tests(result, metric);
        tests << metric << ",kruskal,,,"
              << shinbo::format_double(t.kruskal_statistic) << ','
              << shinbo::format_double(t.kruskal_p) << ",\n";
        for (size_t i = 0; i < t.pairs.size(); ++i)
          tests << metric << ",mann_whitney," << t.pairs[i].first << ','
                << t.pairs[i].second << ",," << shinbo::format_double(t.p_raw[i])
                << ',' << shinbo::format_double(t.p_adjusted[i]) << '\n';
      } catch (const std::exception& e) {
        tests << metric << ",error,,,,\"" << e.what() << "\",\n";
      }
    }
  }
  if (config.collect_traces) {
    std::ofstream traces(out / "traces.csv");
    traces << "algo,run,iter,fit,penalty,total,response,seconds";
    for (shinbo::Index l = 0; l < config.solver.rank; ++l)
      traces << ",lambda_" << (l + 1);
    traces << '\n';
    for (size_t a = 0; a < result.algo_names.size(); ++a) {
      for (size_t r = 0; r < result.metrics[a].size(); ++r) {
        for (const shinbo::TraceRow& row : result.metrics[a][r].trace) {
          traces << result.algo_names[a] << ',' << r << ',' << row.iter << ','
                 << shinbo::format_double(row.objective.fit) << ','
                 << shinbo::format_double(row.objective.penalty) << ','
                 << shinbo::format_double(row.objective.total) << ','
                 << shinbo::format_double(row.response) << ','
                 << shinbo::format_double(row.seconds);
          for (shinbo::Index l = 0; l < row.lambda.size(); ++l)
            traces << ',' << shinbo::format_double(row.lambda[l]);
          traces << '\n';
        }
      }
    }
  }
}

int cmd_mc(const McOptions& opt) {
  const shinbo::McConfig config = to_mc_config(opt);
  const shinbo::McResult result = shinbo::run_monte_carlo(config);

  const fs::path out(opt.out);
  fs::create_directories(out);
  write_json_file(out / "report.json", shinbo::mc_report_json(config, result));
  write_mc_csv_tables(out, config, result);

  ordered_json echo;
  echo["runs"] = opt.runs;
  echo["mode"] = opt.mode;
  echo["m"] = opt.m;
  echo["n"] = opt.n;
  echo["density_w"] = opt.density_w;
  echo["density_h"] = opt.density_h;
  echo["noise"] = opt.noise;
  echo["duration"] = opt.sur_duration;
  echo["signal_rate"] = opt.sur_sample_rate;
  echo["f0"] = opt.sur_f0;
  echo["carrier"] = opt.sur_carrier;
  echo["decay"] = opt.sur_decay;
  echo["noise_sigma"] = opt.sur_noise_sigma;
  echo["score_f0"] = opt.sur_score_f0;
  echo["harmonics"] = opt.sur_harmonics;
  echo["raw_scale"] = opt.raw_scale;
  opt.stft.echo(echo);
  echo["algos"] = opt.algos;
  opt.solver.echo(echo);
  echo["workers"] = opt.workers;
  echo["traces"] = opt.traces;
  write_json_file(out / "config_echo.json", echo);

  const bool synthetic = config.dataset == shinbo::DatasetKind::kSynthetic;
  const std::string headline = synthetic ? "sir_h" : "envsi";
  for (size_t a = 0; a < result.algo_names.size(); ++a) {
    const shinbo::MetricSummary s = shinbo::summarize(
        shinbo::metric_samples(result.metrics[a], headline));
    std::cout << result.algo_names[a] << ": mean " << headline << " = "
              << s.mean << " +- " << s.stddev << " (" << s.count << "/"
              << config.runs << " runs)\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------- eval ----

struct EvalOptions {
  std::string est_w, est_h;
  std::string true_w, true_h;
  double frame_rate = 0.0;
  double f0 = 0.0;
  int harmonics = 6;
  std::string out;
};

int cmd_eval(const EvalOptions& opt) {
  if (opt.est_w.empty() || opt.est_h.empty())
    throw shinbo::ConfigError("eval needs --est-w and --est-h");
  const shinbo::Matrix est_w = shinbo::read_matrix_csv(opt.est_w);
  const shinbo::Matrix est_h = shinbo::read_matrix_csv(opt.est_h);

  ordered_json report;
  report["command"] = "eval";
  report["est_w"] = opt.est_w;
  report["est_h"] = opt.est_h;
  report["sp_w"] = shinbo::sparsity(est_w);
  report["sp_h"] = shinbo::sparsity(est_h);

  if (!opt.true_w.empty() || !opt.true_h.empty()) {
    if (opt.true_w.empty() || opt.true_h.empty())
      throw shinbo::ConfigError("eval needs both --true-w and --true-h");
    const shinbo::Matrix true_w = shinbo::read_matrix_csv(opt.true_w);
    const shinbo::Matrix true_h = shinbo::read_matrix_csv(opt.true_h);
    const shinbo::SirReport sw = shinbo::sir_columns(true_w, est_w);
    const shinbo::SirReport sh = shinbo::sir_rows(true_h, est_h);
    report["sir_w"] = sw.mean_db;
    report["sir_h"] = sh.mean_db;
    std::vector<double> sw_parts(sw.per_component_db.data(),
                                 sw.per_component_db.data() +
                                     sw.per_component_db.size());
    std::vector<double> sh_parts(sh.per_component_db.data(),
                                 sh.per_component_db.data() +
                                     sh.per_component_db.size());
    report["sir_w_components"] = sw_parts;
    report["sir_h_components"] = sh_parts;
  }

  if (opt.frame_rate > 0.0) {
    if (opt.f0 <= 0.0)
      throw shinbo::ConfigError("eval with --frame-rate needs --f0");
    shinbo::EnvsiOptions envsi_options;
    envsi_options.harmonics = opt.harmonics;
    std::vector<double> scores;
    for (shinbo::Index l = 0; l < est_h.rows(); ++l) {
      double value = 0.0;
      try {
        const shinbo::EnvelopeSpectrum env = shinbo::envelope_spectrum(
            est_h.row(l).transpose(), opt.frame_rate);
        value = shinbo::envsi(env, opt.f0, envsi_options);
      } catch (const shinbo::DomainError&) {
        value = 0.0;
      }
      scores.push_back(value);
    }
    report["envsi_components"] = scores;
    report["envsi_best"] = *std::max_element(scores.begin(), scores.end());
  }

  if (opt.out.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    write_json_file(opt.out, report);
  }
  return kExitOk;
}

// --------------------------------------------------------------- stft ----

struct StftCmdOptions {
  std::string wav_path, signal_path;
  double sample_rate = 0.0;
  StftOptions stft;
  std::string out;
};

int cmd_stft(const StftCmdOptions& opt) {
  const shinbo::SampledSignal signal =
      load_signal(opt.wav_path, opt.signal_path, opt.sample_rate);
  const shinbo::Spectrogram spect = shinbo::stft_power_spectrogram(
      signal, opt.stft.window, opt.stft.overlap, opt.stft.nfft,
      opt.stft.window_kind(), opt.stft.scale_kind());
  if (opt.out.empty()) throw shinbo::ConfigError("stft needs --out");
  shinbo::write_matrix_csv(opt.out, spect.power);
  std::cout << "bins=" << spect.power.rows() << " frames="
            << spect.power.cols() << " freq_resolution=" << spect.freq_resolution
            << " frame_rate=" << spect.frame_rate << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse IS-NMF with bi-level adaptive per-row penalties"};
  app.require_subcommand(1);

  GenOptions gen;
  McOptions mc;
  RunOptions run;
  EvalOptions eval;
  StftCmdOptions stft;
  std::string config_path;

  ConfigBinder gen_binder, run_binder, mc_binder, eval_binder, stft_binder;

  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate synthetic factors");
  gen_cmd->add_option("--m", gen.m, "Rows of X");
  gen_cmd->add_option("--n", gen.n, "Columns of X");
  gen_cmd->add_option("--rank", gen.rank, "Number of components");
  gen_cmd->add_option("--density-w", gen.density_w, "Nonzero fraction of W");
  gen_cmd->add_option("--density-h", gen.density_h, "Nonzero fraction of H");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--config", config_path, "JSON config file");
  gen_binder.bind("m", gen.m);
  gen_binder.bind("n", gen.n);
  gen_binder.bind("rank", gen.rank);
  gen_binder.bind("density_w", gen.density_w);
  gen_binder.bind("density_h", gen.density_h);
  gen_binder.bind("seed", gen.seed);
  gen_binder.bind("out", gen.out);

  CLI::App* run_cmd = app.add_subcommand("run", "Factorize one matrix");
  run_cmd->add_option("--x", run.x_path, "Input matrix CSV");
  run_cmd->add_option("--wav", run.wav_path, "Input WAV signal");
  run_cmd->add_option("--signal", run.signal_path, "Input one-column CSV signal");
  run_cmd->add_option("--sample-rate", run.sample_rate,
                      "Sample rate for --signal input");
  run.stft.add_flags(run_cmd, run_binder);
  run_cmd->add_flag("--raw-scale", run.raw_scale,
                    "Skip unit-mean scaling of the spectrogram");
  run_cmd->add_option("--algo", run.algo, "mu | mu:<lambda> | shinbo");
  run.solver.add_flags(run_cmd, run_binder);
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--config", config_path, "JSON config file");
  run_binder.bind("x", run.x_path);
  run_binder.bind("wav", run.wav_path);
  run_binder.bind("signal", run.signal_path);
  run_binder.bind("sample_rate", run.sample_rate);
  run_binder.bind("raw_scale", run.raw_scale);
  run_binder.bind("algo", run.algo);
  run_binder.bind("out", run.out);

  CLI::App* mc_cmd = app.add_subcommand("mc", "Monte-Carlo comparison batch");
  mc_cmd->add_option("--runs", mc.runs, "Number of seeded runs");
  mc_cmd->add_option("--mode", mc.mode, "synth | surrogate");
  mc_cmd->add_option("--m", mc.m, "Rows of X (synth)");
  mc_cmd->add_option("--n", mc.n, "Columns of X (synth)");
  mc_cmd->add_option("--density-w", mc.density_w, "Nonzero fraction of W");
  mc_cmd->add_option("--density-h", mc.density_h, "Nonzero fraction of H");
  mc_cmd->add_option("--noise", mc.noise, "Additive noise std (synth)");
  mc_cmd->add_option("--duration", mc.sur_duration, "Surrogate duration (s)");
  mc_cmd->add_option("--signal-rate", mc.sur_sample_rate,
                     "Surrogate sample rate (Hz)");
  mc_cmd->add_option("--f0", mc.sur_f0, "Burst repetition rate (Hz)");
  mc_cmd->add_option("--carrier", mc.sur_carrier, "Burst carrier (Hz)");
  mc_cmd->add_option("--decay", mc.sur_decay, "Burst decay constant (1/s)");
  mc_cmd->add_option("--noise-sigma", mc.sur_noise_sigma,
                     "Surrogate noise std");
  mc_cmd->add_option("--score-f0", mc.sur_score_f0,
                     "Frequency the envelope indicator is scored at");
  mc_cmd->add_option("--harmonics", mc.sur_harmonics,
                     "Harmonics in the envelope indicator");
  mc_cmd->add_flag("--raw-scale", mc.raw_scale,
                   "Skip unit-mean scaling of the spectrogram");
  mc.stft.add_flags(mc_cmd, mc_binder);
  mc_cmd->add_option("--algos", mc.algos, "Comma-separated algorithm list");
  mc.solver.add_flags(mc_cmd, mc_binder);
  mc_cmd->add_option("--workers", mc.workers,
                     "Parallel workers (default: SHINBO_WORKERS or cores)");
  mc_cmd->add_flag("--traces", mc.traces, "Keep per-iteration traces");
  mc_cmd->add_option("--out", mc.out, "Output directory")->required();
  mc_cmd->add_option("--config", config_path, "JSON config file");
  mc_binder.bind("runs", mc.runs);
  mc_binder.bind("mode", mc.mode);
  mc_binder.bind("m", mc.m);
  mc_binder.bind("n", mc.n);
  mc_binder.bind("density_w", mc.density_w);
  mc_binder.bind("density_h", mc.density_h);
  mc_binder.bind("noise", mc.noise);
  mc_binder.bind("duration", mc.sur_duration);
  mc_binder.bind("signal_rate", mc.sur_sample_rate);
  mc_binder.bind("f0", mc.sur_f0);
  mc_binder.bind("carrier", mc.sur_carrier);
  mc_binder.bind("decay", mc.sur_decay);
  mc_binder.bind("noise_sigma", mc.sur_noise_sigma);
  mc_binder.bind("score_f0", mc.sur_score_f0);
  mc_binder.bind("harmonics", mc.sur_harmonics);
  mc_binder.bind("raw_scale", mc.raw_scale);
  mc_binder.bind("algos", mc.algos);
  mc_binder.bind("workers", mc.workers);
  mc_binder.bind("traces", mc.traces);
  mc_binder.bind("out", mc.out);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Recompute metrics from saved factors");
  eval_cmd->add_option("--est-w", eval.est_w, "Estimated W CSV")->required();
  eval_cmd->add_option("--est-h", eval.est_h, "Estimated H CSV")->required();
  eval_cmd->add_option("--true-w", eval.true_w, "Ground-truth W CSV");
  eval_cmd->add_option("--true-h", eval.true_h, "Ground-truth H CSV");
  eval_cmd->add_option("--frame-rate", eval.frame_rate,
                       "Frame rate of H columns (envelope scoring)");
  eval_cmd->add_option("--f0", eval.f0, "Fundamental for envelope scoring");
  eval_cmd->add_option("--harmonics", eval.harmonics, "Envelope harmonics");
  eval_cmd->add_option("--out", eval.out, "Output JSON file (default stdout)");
  eval_cmd->add_option("--config", config_path, "JSON config file");
  eval_binder.bind("est_w", eval.est_w);
  eval_binder.bind("est_h", eval.est_h);
  eval_binder.bind("true_w", eval.true_w);
  eval_binder.bind("true_h", eval.true_h);
  eval_binder.bind("frame_rate", eval.frame_rate);
  eval_binder.bind("f0", eval.f0);
  eval_binder.bind("harmonics", eval.harmonics);
  eval_binder.bind("out", eval.out);

  CLI::App* stft_cmd =
      app.add_subcommand("stft", "Write the spectrogram of a signal");
  stft_cmd->add_option("--wav", stft.wav_path, "Input WAV signal");
  stft_cmd->add_option("--signal", stft.signal_path,
                       "Input one-column CSV signal");
  stft_cmd->add_option("--sample-rate", stft.sample_rate,
                       "Sample rate for --signal input");
  stft.stft.add_flags(stft_cmd, stft_binder);
  stft_cmd->add_option("--out", stft.out, "Output spectrogram CSV")->required();
  stft_cmd->add_option("--config", config_path, "JSON config file");
  stft_binder.bind("wav", stft.wav_path);
  stft_binder.bind("signal", stft.signal_path);
  stft_binder.bind("sample_rate", stft.sample_rate);
  stft_binder.bind("out", stft.out);

  // Config file first, then flags override.
  try {
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::string(argv[i]) == "--config") {
        const json config = load_config_file(argv[i + 1]);
        if (gen_cmd->parsed() || std::string(argv[1]) == "gen")
          gen_binder.apply(config);
        else if (std::string(argv[1]) == "run")
          run_binder.apply(config);
        else if (std::string(argv[1]) == "mc")
          mc_binder.apply(config);
        else if (std::string(argv[1]) == "eval")
          eval_binder.apply(config);
        else if (std::string(argv[1]) == "stft")
          stft_binder.apply(config);
      }
    }
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  } catch (const shinbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (run_cmd->parsed()) return cmd_run(run);
    if (mc_cmd->parsed()) return cmd_mc(mc);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (stft_cmd->parsed()) return cmd_stft(stft);
    return kExitConfig;
  } catch (const shinbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const shinbo::DimensionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const shinbo::DomainError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const shinbo::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
