#include "multirfm/cli.hpp"

#include "multirfm/align.hpp"
#include "multirfm/io.hpp"
#include "multirfm/metrics.hpp"
#include "multirfm/selection.hpp"
#include "multirfm/simulate.hpp"
#include "multirfm/types.hpp"
#include "multirfm/vem.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace multirfm {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- shared plumbing -------------------------------------------------------

struct FitFlags {
  double eps = 1e-6;
  int max_iter = 500;
  std::vector<double> nu_grid = default_nu_grid();
  std::optional<double> nu_fixed;
  double lambda_floor = 1e-8;
  std::uint64_t seed = 0;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--eps", f.eps, "relative ELBO convergence tolerance");
  cmd->add_option("--max-iter", f.max_iter, "iteration cap");
  cmd->add_option("--nu-grid", f.nu_grid, "increasing nu candidates, all > 2")->delimiter(',');
  cmd->add_option("--nu-fixed", f.nu_fixed, "fix nu and skip the grid search");
  cmd->add_option("--lambda-floor", f.lambda_floor, "lower bound for residual variances");
  cmd->add_option("--seed", f.seed, "random seed");
}

FitConfig make_config(const FitFlags& f) {
  FitConfig config;
  config.eps = f.eps;
  config.max_iter = f.max_iter;
  config.nu_grid = f.nu_grid;
  config.nu_fixed = f.nu_fixed;
  config.lambda_floor = f.lambda_floor;
  config.seed = f.seed;
  config.validate();
  return config;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create output directory: " + dir);
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << doc.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  json doc;
  in >> doc;
  return doc;
}

std::string study_file(const std::string& dir, const std::string& stem, int s) {
  return (fs::path(dir) / (stem + "_" + std::to_string(s + 1) + ".csv")).string();
}

// Accepts either explicit per-study CSV paths or one directory holding
// X_1.csv, X_2.csv, ...
MultiStudyDataset load_dataset(std::vector<std::string> paths) {
  if (paths.empty()) throw std::invalid_argument("no study files given");
  if (paths.size() == 1 && fs::is_directory(paths.front())) {
    const std::string dir = paths.front();
    paths.clear();
    for (int s = 0;; ++s) {
      const std::string candidate = study_file(dir, "X", s);
      if (!fs::exists(candidate)) break;
      paths.push_back(candidate);
    }
    if (paths.empty())
      throw std::invalid_argument("no study files (X_<s>.csv) in directory: " + dir);
  }
  MultiStudyDataset data;
  for (const std::string& path : paths) data.studies.push_back(io::read_csv_matrix(path));
  data.validate();
  return data;
}

std::vector<int> broadcast_counts(std::vector<int> values, int studies, const char* what) {
  if (values.size() == 1) values.assign(static_cast<std::size_t>(studies), values.front());
  if (static_cast<int>(values.size()) != studies)
    throw std::invalid_argument(std::string(what) + " needs one value or one per study");
  return values;
}

void write_metric_rows(const std::string& path,
                       const std::vector<std::pair<std::string, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "metric,value\n";
  for (const auto& [name, value] : rows) out << name << ',' << io::format_double(value) << '\n';
}

json identifiability_json(const ConditionReport& r) {
  return json{{"a1", r.a1},
              {"a1_max_offdiagonal", r.a1_max_offdiagonal},
              {"a1_decreasing", r.a1_decreasing},
              {"a1_signs", r.a1_signs},
              {"a2", r.a2},
              {"a2_slack", static_cast<long long>(r.a2_slack)},
              {"a3", r.a3},
              {"a3_min_gap", r.a3_min_gap},
              {"a4", r.a4},
              {"nu", r.nu}};
}

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
  std::string scenario;
  std::vector<Index> n;
  Index p = 500;
  int q = 3;
  std::vector<int> q_s;
  double rho_a = 5.0;
  double rho_b = 5.0;
  std::string law = "student_t";
  double nu = 3.0;
  double alpha = 2.0;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::string out;
};

SimulationSpec build_spec(const SimulateOptions& opt, const CLI::App* cmd) {
  SimulationSpec spec;
  if (!opt.scenario.empty()) {
    spec = scenario_preset(opt.scenario);
  } else {
    if (opt.n.empty()) throw std::invalid_argument("provide --scenario or --n");
    spec.n_s = opt.n;
    spec.S = static_cast<int>(opt.n.size());
    spec.p = opt.p;
    spec.q = opt.q;
    spec.q_s = broadcast_counts(opt.q_s.empty() ? std::vector<int>{2} : opt.q_s, spec.S, "--qs");
    spec.rho_A = opt.rho_a;
    spec.rho_B = opt.rho_b;
    spec.error_law = parse_error_law(opt.law, opt.nu, opt.alpha);
  }
  // Explicit flags override preset values.
  if (cmd->count("--rho-a")) spec.rho_A = opt.rho_a;
  if (cmd->count("--rho-b")) spec.rho_B = opt.rho_b;
  if (cmd->count("--law") || cmd->count("--nu") || cmd->count("--alpha")) {
    double nu = cmd->count("--nu") ? opt.nu : spec.error_law.nu;
    double alpha = cmd->count("--alpha") ? opt.alpha : spec.error_law.alpha;
    std::string law = cmd->count("--law") ? opt.law : spec.error_law.name();
    spec.error_law = parse_error_law(law, nu, alpha);
  }
  spec.seed = opt.seed;
  spec.validate();
  return spec;
}

int cmd_simulate(const SimulateOptions& opt, const CLI::App* cmd) {
  const SimulationSpec spec = build_spec(opt, cmd);
  auto [data, truth] = simulate_dataset(spec, opt.replicate);

  ensure_dir(opt.out);
  const std::string truth_dir = (fs::path(opt.out) / "truth").string();
  ensure_dir(truth_dir);
  for (int s = 0; s < data.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    io::write_csv_matrix(study_file(opt.out, "X", s), data.x(s));
    io::write_csv_vector(study_file(truth_dir, "mu", s), truth.params0.mu[su]);
    io::write_csv_matrix(study_file(truth_dir, "B", s), truth.params0.B[su]);
    io::write_csv_matrix(study_file(truth_dir, "F", s), truth.F0[su]);
    io::write_csv_matrix(study_file(truth_dir, "H", s), truth.H0[su]);
  }
  io::write_csv_matrix((fs::path(truth_dir) / "A.csv").string(), truth.params0.A);

  json manifest{{"S", spec.S},
                {"n_s", spec.n_s},
                {"p", spec.p},
                {"q", spec.q},
                {"q_s", spec.q_s},
                {"rho_A", spec.rho_A},
                {"rho_B", spec.rho_B},
                {"error_law",
                 {{"kind", spec.error_law.name()},
                  {"nu", spec.error_law.nu},
                  {"alpha", spec.error_law.alpha}}},
                {"seed", spec.seed},
                {"replicate", opt.replicate},
                {"covariance_defined", truth.covariance_defined}};
  if (!opt.scenario.empty()) manifest["scenario"] = opt.scenario;
  write_json((fs::path(opt.out) / "manifest").string(), manifest);

  std::cout << "simulated " << spec.S << " studies into " << opt.out << '\n';
  return 0;
}

// ---- fit -------------------------------------------------------------------

struct CountFlags {
  int q = -1;
  std::vector<int> q_s;
  std::string from_selection;
};

FactorCounts resolve_counts(const CountFlags& cf, int studies) {
  FactorCounts counts;
  if (!cf.from_selection.empty()) {
    const json sel = read_json(cf.from_selection);
    counts.q = sel.at("q_hat").get<int>();
    counts.q_s = sel.at("q_s_hat").get<std::vector<int>>();
  } else {
    if (cf.q < 0 || cf.q_s.empty())
      throw std::invalid_argument("provide --q and --qs, or --from-selection");
    counts.q = cf.q;
    counts.q_s = broadcast_counts(cf.q_s, studies, "--qs");
  }
  if (counts.num_studies() != studies)
    throw std::invalid_argument("factor counts do not match the number of studies");
  return counts;
}

struct FitOptions {
  std::vector<std::string> data;
  CountFlags counts;
  FitFlags flags;
  bool apply_align = false;
  std::string out;
};

void write_fit_outputs(const std::string& out, const FitResult& result, const FactorCounts& counts,
                       bool aligned) {
  ensure_dir(out);
  const int S = result.params.num_studies();
  io::write_csv_matrix((fs::path(out) / "A.csv").string(), result.params.A);
  for (int s = 0; s < S; ++s) {
    const auto su = static_cast<std::size_t>(s);
    io::write_csv_vector(study_file(out, "mu", s), result.params.mu[su]);
    io::write_csv_matrix(study_file(out, "B", s), result.params.B[su]);
    io::write_csv_vector(study_file(out, "Lambda", s), result.params.lambda[su]);
    io::write_csv_matrix(study_file(out, "F", s), result.factor_scores_shared[su]);
    io::write_csv_matrix(study_file(out, "H", s), result.factor_scores_specific[su]);
  }
  io::write_csv_vector((fs::path(out) / "elbo_trace.csv").string(),
                       Eigen::Map<const Vector>(result.elbo_trace.data(),
                                                static_cast<Index>(result.elbo_trace.size())));

  const ConditionReport report = check_identifiability(result.params, counts);
  json doc{{"nu", result.params.nu},
           {"iterations", result.iterations},
           {"converged", result.converged},
           {"monotonicity_warnings", result.monotonicity_warnings},
           {"elbo_initial", result.elbo_trace.front()},
           {"elbo_final", result.elbo_trace.back()},
           {"q", counts.q},
           {"q_s", counts.q_s},
           {"aligned", aligned},
           {"identifiability", identifiability_json(report)}};
  write_json((fs::path(out) / "result.json").string(), doc);
}

int cmd_fit(const FitOptions& opt) {
  const MultiStudyDataset data = load_dataset(opt.data);
  const FactorCounts counts = resolve_counts(opt.counts, data.num_studies());
  const FitConfig config = make_config(opt.flags);

  FitResult result = fit(data, counts, config);
  if (opt.apply_align) result = align(result);
  write_fit_outputs(opt.out, result, counts, opt.apply_align);

  std::cout << "fit " << (result.converged ? "converged" : "stopped") << " after "
            << result.iterations << " iterations (nu = " << result.params.nu << ") -> " << opt.out
            << '\n';
  return 0;
}

// ---- select-factors --------------------------------------------------------

struct SelectOptions {
  std::vector<std::string> data;
  int q_max = 10;
  std::vector<int> q_s_max{6};
  FitFlags flags;
  std::string out;
};

int cmd_select_factors(const SelectOptions& opt) {
  const MultiStudyDataset data = load_dataset(opt.data);
  const FitConfig config = make_config(opt.flags);
  const std::vector<int> bounds = broadcast_counts(opt.q_s_max, data.num_studies(), "--qs-max");

  const SelectionResult sel = select_factor_counts(data, opt.q_max, bounds, config);

  ensure_dir(opt.out);
  json doc{{"q_hat", sel.q_hat},
           {"q_s_hat", sel.q_s_hat},
           {"q_max", sel.q_max},
           {"q_s_max", sel.q_s_max},
           {"shared_singular_values", sel.shared_singular_values},
           {"specific_singular_values", sel.specific_singular_values}};
  write_json((fs::path(opt.out) / "selection.json").string(), doc);

  std::cout << "selected q = " << sel.q_hat << " -> " << opt.out << '\n';
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct FitArtifacts {
  ModelParameters params;
  std::vector<Matrix> f;
  std::vector<Matrix> h;
};

FitArtifacts read_fit_dir(const std::string& dir) {
  FitArtifacts art;
  art.params.A = io::read_csv_matrix((fs::path(dir) / "A.csv").string());
  for (int s = 0;; ++s) {
    const std::string mu_path = study_file(dir, "mu", s);
    if (!fs::exists(mu_path)) break;
    const auto su = static_cast<std::size_t>(s);
    art.params.mu.push_back(io::read_csv_vector(mu_path));
    art.params.B.push_back(io::read_csv_matrix(study_file(dir, "B", s)));
    art.params.lambda.push_back(io::read_csv_vector(study_file(dir, "Lambda", s)));
    art.f.push_back(io::read_csv_matrix(study_file(dir, "F", s)));
    art.h.push_back(io::read_csv_matrix(study_file(dir, "H", s)));
    (void)su;
  }
  if (art.params.mu.empty()) throw std::invalid_argument("no fit outputs in directory: " + dir);
  const std::string result_path = (fs::path(dir) / "result.json").string();
  art.params.nu = fs::exists(result_path) ? read_json(result_path).at("nu").get<double>() : 3.0;
  return art;
}

struct EvaluateOptions {
  std::string fit_dir;
  std::string truth_dir;
  std::vector<std::string> data;
  std::vector<std::string> test_data;
  std::string out;
};

int cmd_evaluate(const EvaluateOptions& opt) {
  if (opt.truth_dir.empty() && opt.data.empty() && opt.test_data.empty())
    throw std::invalid_argument("nothing to evaluate: provide --truth, --data, or --test-data");

  const FitArtifacts art = read_fit_dir(opt.fit_dir);
  const int S = art.params.num_studies();
  std::vector<std::pair<std::string, double>> rows;

  if (!opt.truth_dir.empty()) {
    const Matrix a0 = io::read_csv_matrix((fs::path(opt.truth_dir) / "A.csv").string());
    std::vector<Matrix> b0, f0, h0;
    for (int s = 0; s < S; ++s) {
      b0.push_back(io::read_csv_matrix(study_file(opt.truth_dir, "B", s)));
      f0.push_back(io::read_csv_matrix(study_file(opt.truth_dir, "F", s)));
      h0.push_back(io::read_csv_matrix(study_file(opt.truth_dir, "H", s)));
    }
    rows.emplace_back("Tr_A", trace_stat(art.params.A, a0));
    rows.emplace_back("MTr_F", mean_trace(art.f, f0));
    rows.emplace_back("MTr_B", mean_trace(art.params.B, b0));
    rows.emplace_back("MTr_H", mean_trace(art.h, h0));
  }

  if (!opt.data.empty()) {
    const MultiStudyDataset data = load_dataset(opt.data);
    FitResult shim;
    shim.params = art.params;
    shim.state.studies.resize(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
      shim.state.studies[static_cast<std::size_t>(s)].m_f = art.f[static_cast<std::size_t>(s)];
      shim.state.studies[static_cast<std::size_t>(s)].m_h = art.h[static_cast<std::size_t>(s)];
    }
    const ReconstructionReport re = reconstruction_error(shim, data);
    for (int s = 0; s < S; ++s)
      rows.emplace_back("RE_" + std::to_string(s + 1), re.re[static_cast<std::size_t>(s)]);
  }

  if (!opt.test_data.empty()) {
    const MultiStudyDataset test = load_dataset(opt.test_data);
    const PredictionReport pe = prediction_error(art.params, test);
    for (int s = 0; s < S; ++s)
      rows.emplace_back("PE_" + std::to_string(s + 1), pe.pe[static_cast<std::size_t>(s)]);
  }

  ensure_dir(opt.out);
  write_metric_rows((fs::path(opt.out) / "metrics.csv").string(), rows);
  std::cout << "wrote " << rows.size() << " metrics -> " << opt.out << '\n';
  return 0;
}

// ---- predict ---------------------------------------------------------------

struct PredictOptions {
  std::vector<std::string> data;
  std::vector<std::string> train;
  std::vector<std::string> test_data;
  double test_fraction = 0.2;
  CountFlags counts;
  FitFlags flags;
  std::string out;
};

int cmd_predict(const PredictOptions& opt) {
  MultiStudyDataset train, test;
  if (!opt.data.empty()) {
    if (!opt.train.empty() || !opt.test_data.empty())
      throw std::invalid_argument("use either --data with --test-fraction or --train/--test-data");
    const MultiStudyDataset all = load_dataset(opt.data);
    std::tie(train, test) = split_dataset(all, opt.test_fraction, opt.flags.seed);
  } else {
    if (opt.train.empty() || opt.test_data.empty())
      throw std::invalid_argument("use either --data with --test-fraction or --train/--test-data");
    train = load_dataset(opt.train);
    test = load_dataset(opt.test_data);
  }

  const FactorCounts counts = resolve_counts(opt.counts, train.num_studies());
  const FitConfig config = make_config(opt.flags);
  const FitResult result = fit(train, counts, config);
  const PredictionReport pe = prediction_error(result.params, test);

  ensure_dir(opt.out);
  std::vector<std::pair<std::string, double>> rows;
  for (int s = 0; s < test.num_studies(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    rows.emplace_back("PE_" + std::to_string(s + 1), pe.pe[su]);
    io::write_csv_vector(study_file(opt.out, "PE_variables", s), pe.per_variable[su]);
  }
  write_metric_rows((fs::path(opt.out) / "metrics.csv").string(), rows);

  json doc{{"nu", result.params.nu},
           {"iterations", result.iterations},
           {"converged", result.converged},
           {"n_train", json::array()},
           {"n_test", json::array()}};
  for (int s = 0; s < train.num_studies(); ++s) {
    doc["n_train"].push_back(train.rows(s));
    doc["n_test"].push_back(test.rows(s));
  }
  write_json((fs::path(opt.out) / "result.json").string(), doc);

  std::cout << "wrote prediction metrics -> " << opt.out << '\n';
  return 0;
}

// ---- benchmark -------------------------------------------------------------

struct BenchmarkOptions {
  std::string scenario;
  int reps = 20;
  int threads = 1;
  FitFlags flags;
  std::string out;
};

int cmd_benchmark(const BenchmarkOptions& opt) {
  if (opt.reps < 1) throw std::invalid_argument("--reps must be at least 1");
  SimulationSpec spec = scenario_preset(opt.scenario);
  spec.seed = opt.flags.seed;
  const FitConfig config = make_config(opt.flags);
  const FactorCounts counts = spec.counts();

  const auto reps = static_cast<std::size_t>(opt.reps);
  std::vector<std::array<double, 4>> stats(reps);
  std::vector<double> seconds(reps);
  std::atomic<std::size_t> cursor{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t r = cursor.fetch_add(1);
      if (r >= reps) return;
      try {
        const auto start = std::chrono::steady_clock::now();
        auto [data, truth] = simulate_dataset(spec, r);
        const FitResult result = fit(data, counts, config);
        stats[r] = {trace_stat(result.params.A, truth.params0.A),
                    mean_trace(result.factor_scores_shared, truth.F0),
                    mean_trace(result.params.B, truth.params0.B),
                    mean_trace(result.factor_scores_specific, truth.H0)};
        seconds[r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int thread_count = std::max(1, std::min<int>(opt.threads, opt.reps));
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const auto aggregate = [&](auto accessor) {
    double mean = 0.0;
    for (std::size_t r = 0; r < reps; ++r) mean += accessor(r);
    mean /= static_cast<double>(reps);
    double sd = 0.0;
    if (reps > 1) {
      for (std::size_t r = 0; r < reps; ++r) {
        const double d = accessor(r) - mean;
        sd += d * d;
      }
      sd = std::sqrt(sd / static_cast<double>(reps - 1));
    }
    return std::pair<double, double>{mean, sd};
  };

  ensure_dir(opt.out);
  {
    std::ofstream out((fs::path(opt.out) / "benchmark.csv").string());
    if (!out) throw std::runtime_error("cannot write file: benchmark.csv");
    out << "metric,mean,sd\n";
    const std::array<const char*, 4> names{"Tr_A", "MTr_F", "MTr_B", "MTr_H"};
    for (std::size_t m = 0; m < names.size(); ++m) {
      const auto [mean, sd] = aggregate([&](std::size_t r) { return stats[r][m]; });
      out << names[m] << ',' << io::format_double(mean) << ',' << io::format_double(sd) << '\n';
    }
  }
  {
    // Wall-clock lives in its own file; benchmark.csv stays byte-reproducible.
    std::ofstream out((fs::path(opt.out) / "timing.csv").string());
    if (!out) throw std::runtime_error("cannot write file: timing.csv");
    out << "replicate,seconds\n";
    for (std::size_t r = 0; r < reps; ++r)
      out << r << ',' << io::format_double(seconds[r]) << '\n';
    const auto [mean, sd] = aggregate([&](std::size_t r) { return seconds[r]; });
    out << "mean," << io::format_double(mean) << '\n';
    out << "sd," << io::format_double(sd) << '\n';
  }

  std::cout << "benchmarked " << opt.reps << " replicates of " << opt.scenario << " -> " << opt.out
            << '\n';
  return 0;
}

}  // namespace

// ---- dispatcher ------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"multi-study robust factor model toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read flags from a TOML-style key = value file");

  SimulateOptions sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a seeded synthetic dataset");
  c_sim->add_option("--scenario", sim.scenario, "named preset (s1-nu2 ... s4)");
  c_sim->add_option("--n", sim.n, "per-study sample sizes")->delimiter(',');
  c_sim->add_option("--p", sim.p, "number of variables");
  c_sim->add_option("--q", sim.q, "shared factor count");
  c_sim->add_option("--qs", sim.q_s, "specific factor counts")->delimiter(',');
  c_sim->add_option("--rho-a", sim.rho_a, "shared signal strength");
  c_sim->add_option("--rho-b", sim.rho_b, "specific signal strength");
  c_sim->add_option("--law", sim.law, "student_t | gaussian | exp | pareto");
  c_sim->add_option("--nu", sim.nu, "t degrees of freedom");
  c_sim->add_option("--alpha", sim.alpha, "pareto shape");
  c_sim->add_option("--seed", sim.seed, "master seed");
  c_sim->add_option("--replicate", sim.replicate, "replicate index");
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->callback([&] { cmd_simulate(sim, c_sim); });

  FitOptions fit_opt;
  CLI::App* c_fit = app.add_subcommand("fit", "fit the model to study CSVs");
  c_fit->add_option("--data", fit_opt.data, "study CSVs or a directory of X_<s>.csv")
      ->required()
      ->delimiter(',');
  c_fit->add_option("--q", fit_opt.counts.q, "shared factor count");
  c_fit->add_option("--qs", fit_opt.counts.q_s, "specific factor counts")->delimiter(',');
  c_fit->add_option("--from-selection", fit_opt.counts.from_selection,
                    "selection.json produced by select-factors");
  add_fit_flags(c_fit, fit_opt.flags);
  c_fit->add_flag("--align", fit_opt.apply_align, "rotate the fit into the normal form");
  c_fit->add_option("--out", fit_opt.out, "output directory")->required();
  c_fit->callback([&] { cmd_fit(fit_opt); });

  SelectOptions sel;
  CLI::App* c_sel = app.add_subcommand("select-factors", "choose q and q_s by SSVR");
  c_sel->add_option("--data", sel.data, "study CSVs or a directory")->required()->delimiter(',');
  c_sel->add_option("--q-max", sel.q_max, "shared factor bound (>= 2)");
  c_sel->add_option("--qs-max", sel.q_s_max, "specific factor bounds (>= 2)")->delimiter(',');
  add_fit_flags(c_sel, sel.flags);
  c_sel->add_option("--out", sel.out, "output directory")->required();
  c_sel->callback([&] { cmd_select_factors(sel); });

  EvaluateOptions ev;
  CLI::App* c_ev = app.add_subcommand("evaluate", "score a fit against truth or data");
  c_ev->add_option("--fit", ev.fit_dir, "fit output directory")->required();
  c_ev->add_option("--truth", ev.truth_dir, "ground-truth directory (trace statistics)");
  c_ev->add_option("--data", ev.data, "training data (reconstruction error)")->delimiter(',');
  c_ev->add_option("--test-data", ev.test_data, "held-out data (prediction error)")
      ->delimiter(',');
  c_ev->add_option("--out", ev.out, "output directory")->required();
  c_ev->callback([&] { cmd_evaluate(ev); });

  PredictOptions pred;
  CLI::App* c_pred = app.add_subcommand("predict", "train/test split prediction error");
  c_pred->add_option("--data", pred.data, "full dataset to split")->delimiter(',');
  c_pred->add_option("--train", pred.train, "training CSVs")->delimiter(',');
  c_pred->add_option("--test-data", pred.test_data, "test CSVs")->delimiter(',');
  c_pred->add_option("--test-fraction", pred.test_fraction, "held-out fraction per study");
  c_pred->add_option("--q", pred.counts.q, "shared factor count");
  c_pred->add_option("--qs", pred.counts.q_s, "specific factor counts")->delimiter(',');
  c_pred->add_option("--from-selection", pred.counts.from_selection, "selection.json");
  add_fit_flags(c_pred, pred.flags);
  c_pred->add_option("--out", pred.out, "output directory")->required();
  c_pred->callback([&] { cmd_predict(pred); });

  BenchmarkOptions bench;
  CLI::App* c_bench = app.add_subcommand("benchmark", "replicated scenario fits with summaries");
  c_bench->add_option("--scenario", bench.scenario, "named preset")->required();
  c_bench->add_option("--reps", bench.reps, "replicate count");
  c_bench->add_option("--threads", bench.threads, "worker threads")
      ->envname("MULTIRFM_THREADS");
  add_fit_flags(c_bench, bench.flags);
  c_bench->add_option("--out", bench.out, "output directory")->required();
  c_bench->callback([&] { cmd_benchmark(bench); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"multirfm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace multirfm
