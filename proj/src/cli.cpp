#include "rasgd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rasgd/analysis.hpp"
#include "rasgd/config.hpp"
#include "rasgd/experiments.hpp"

namespace rasgd {

namespace {

using json = nlohmann::json;

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

template <class T>
std::string list(const std::vector<T>& v) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s << ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s << num(v[i]);
    } else {
      s << v[i];
    }
  }
  s << ']';
  return s.str();
}

std::string list(const Vector& v) { return list(std::vector<double>(v.data(), v.data() + v.size())); }

struct ConfigArgs {
  std::string config;
  std::string gamma, alpha, horizon, seeds, seed, methods, timing, grid, output_dir;
  bool harmonize = false;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* sub, ConfigArgs& a, bool with_grid) {
  sub->add_option("config", a.config, "Preset name or YAML config path")->required();
  sub->add_option("--gamma", a.gamma, "Base stepsize gamma (replaces the stepsize entry)");
  sub->add_option("--alpha", a.alpha, "Cycle stepsize alpha (replaces the stepsize entry)");
  sub->add_option("--horizon", a.horizon, "Wall-clock horizon");
  sub->add_option("--seeds", a.seeds, "Comma-separated seed list");
  sub->add_option("--seed", a.seed, "Single seed");
  sub->add_option("--methods", a.methods, "Comma-separated method list");
  sub->add_option("--timing", a.timing, "fixed | exponential");
  sub->add_flag("--harmonize", a.harmonize, "Round computation times up to powers of two");
  sub->add_option("--output-dir", a.output_dir, "Parent directory for run directories");
  sub->add_option("--set", a.sets, "Override any config key: path.to.key=value (repeatable)");
  if (with_grid) sub->add_option("--grid", a.grid, "Comma-separated stepsize grid");
}

std::vector<Override> collect_overrides(const ConfigArgs& a) {
  std::vector<Override> o;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects path=value, got '" + s + "'");
    o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  const auto seq = [](const std::string& csv) { return "[" + csv + "]"; };
  if (!a.gamma.empty()) o.emplace_back("stepsize.gamma", a.gamma);
  if (!a.alpha.empty()) o.emplace_back("stepsize.alpha", a.alpha);
  if (!a.gamma.empty() && !a.alpha.empty()) throw ConfigError("give either --gamma or --alpha");
  if (!a.horizon.empty()) o.emplace_back("horizon", a.horizon);
  if (!a.seeds.empty()) o.emplace_back("seeds", seq(a.seeds));
  if (!a.seed.empty()) o.emplace_back("seeds", seq(a.seed));
  if (!a.methods.empty()) o.emplace_back("methods", seq(a.methods));
  if (!a.timing.empty()) o.emplace_back("timing.model", a.timing);
  if (a.harmonize) o.emplace_back("timing.harmonize", "true");
  if (!a.grid.empty()) o.emplace_back("sweep.grid", seq(a.grid));
  if (!a.output_dir.empty()) o.emplace_back("output.dir", a.output_dir);
  return o;
}

ExperimentConfig load(const ConfigArgs& a) { return resolve_config(a.config, collect_overrides(a)); }

int classify(const std::exception& e) {
  const std::string_view m = e.what();
  if (m.find("harmonic periods required") != std::string_view::npos) return kExitNotHarmonic;
  if (m.find("needs exact local gradients") != std::string_view::npos) return kExitNoExact;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return kExitConfig;
  return kExitFailure;
}

// run

int cmd_run(const ExperimentConfig& c, const std::string& run_dir, unsigned threads, std::ostream& out,
            std::ostream& err) {
  RunOptions opts;
  if (!run_dir.empty()) opts.run_dir = run_dir;
  opts.threads = threads;
  const ExperimentResult result = run_experiment(c, opts);

  std::optional<Problem> problem;
  if (std::holds_alternative<QuadraticProblem>(c.problem)) problem = build_problem(c, c.seeds.front());

  out << "experiment: " << c.name << " (" << config_hash(c) << ")\n";
  for (const auto& [k, v] : c.overrides) out << "override: " << k << " = " << v << '\n';
  std::size_t diverged = 0, runs = 0;
  for (const auto& m : result.methods) {
    out << method_name(m.method) << ": value " << num(m.value) << ", parameter " << num(m.parameter)
        << ", median loss " << num(m.median_initial_loss) << " -> " << num(m.median_final_loss) << ", diverged "
        << m.diverged << '/' << m.runs.size() << '\n';
    diverged += m.diverged;
    runs += m.runs.size();
    const RunResult& first = m.runs.front();
    if (problem && first.trace.final_model.size() <= 8) {
      const Vector& x = first.final_cycle_iterate ? *first.final_cycle_iterate : first.trace.final_model;
      const auto w = target_weights(method_name(m.method), c.effective_taus()).weights;
      const Vector target = quadratic_minimizer(*problem->suite, w);
      out << "  final " << (first.final_cycle_iterate ? "cycle iterate " : "iterate ") << list(x)
          << ", target minimizer " << list(target) << ", distance " << num((x - target).norm()) << '\n';
    }
  }
  out << "run directory: " << result.run_dir.string() << '\n';
  if (runs > 0 && diverged == runs) {
    err << "error: every run diverged\n";
    return kExitFailure;
  }
  return kExitOk;
}

// sweep

int cmd_sweep(const ExperimentConfig& c, const std::string& run_dir, unsigned threads, std::ostream& out) {
  RunOptions opts;
  if (!run_dir.empty()) opts.run_dir = run_dir;
  opts.threads = threads;
  const SweepResult result = sweep_stepsize(c, opts);
  const char* mode = c.stepsize_mode == StepsizeMode::Alpha ? "alpha" : "gamma";
  for (const auto& ms : result.methods) {
    out << method_name(ms.method) << ":\n";
    for (const auto& p : ms.points) {
      out << "  " << mode << ' ' << num(p.value) << ": median final loss " << num(p.median_final_loss)
          << (p.diverged ? " (diverged)" : "") << '\n';
    }
    out << "  best " << mode << ' ' << num(ms.best_value) << (ms.on_boundary ? " (on grid boundary)" : "") << '\n';
  }
  out << "run directory: " << result.run_dir.string() << '\n';
  return kExitOk;
}

// decompose

int cmd_decompose(const ExperimentConfig& c, std::size_t mc_cycles, std::size_t max_cycles, const std::string& csv,
                  std::ostream& out) {
  const auto it = std::find_if(c.methods.begin(), c.methods.end(), is_asgd);
  if (it == c.methods.end()) throw std::invalid_argument("methods: decompose needs an ASGD method");
  const Method method = *it;
  if (c.timing != TimingKind::Fixed) throw std::invalid_argument("timing.model: decompose needs fixed timing");
  const auto taus = c.effective_taus();
  const CyclePlan plan = build_cycle_plan(taus);
  const std::uint64_t seed = c.seeds.front();

  if (!std::holds_alternative<QuadraticProblem>(c.problem) && std::holds_alternative<MinibatchNoise>(c.noise)) {
    throw std::logic_error("decomposition needs exact local gradients");
  }
  const Problem p = build_problem(c, seed);
  const GradientOracle oracle(p.suite, c.noise, seed);
  const StepsizePolicy policy = make_policy(method, c.method_parameter(method, c.stepsize), taus);
  AsgdImmediate strategy(policy, std::string(method_name(method)));
  SimulationOptions opts;
  opts.horizon = c.horizon;
  opts.seed = seed;
  opts.record_gradients = true;
  opts.metric = p.metric;
  const Trace trace = simulate(strategy, oracle, TimingModel{c.timing, taus}, p.x0, opts);
  if (trace.diverged()) throw std::runtime_error("simulation diverged: " + trace.message);

  const PolicyConstants pc = policy.constants();
  const long long M = std::min<long long>(completed_cycles(trace), static_cast<long long>(max_cycles));
  out << "method " << method_name(method) << ", K " << plan.K << ", alpha " << num(pc.alpha) << ", A " << num(pc.A)
      << ", cycles " << M << '\n';
  std::ofstream csv_out;
  if (!csv.empty()) {
    csv_out.open(csv);
    if (!csv_out) throw std::runtime_error("cannot write '" + csv + "'");
    csv_out << "cycle,alpha,S_norm,ideal_norm,bias_norm_sq,noise_norm,relative_residual,step_mismatch\n";
  }
  out << "cycle  |S|  |ideal|  |b|^2  |nu|  residual\n";
  double max_residual = 0.0, max_noise = 0.0, max_mismatch = 0.0;
  for (long long m = 0; m < M; ++m) {
    const CycleDecomposition d = decompose_cycle(trace, m, *p.suite);
    max_residual = std::max(max_residual, d.relative_residual);
    max_noise = std::max(max_noise, d.noise.norm());
    max_mismatch = std::max(max_mismatch, d.step_mismatch);
    out << m << "  " << num(d.S.norm()) << "  " << num(d.ideal.norm()) << "  " << num(d.bias.squaredNorm()) << "  "
        << num(d.noise.norm()) << "  " << num(d.relative_residual) << '\n';
    if (csv_out.is_open()) {
      csv_out << m << ',' << format_double(d.alpha) << ',' << format_double(d.S.norm()) << ','
              << format_double(d.ideal.norm()) << ',' << format_double(d.bias.squaredNorm()) << ','
              << format_double(d.noise.norm()) << ',' << format_double(d.relative_residual) << ','
              << format_double(d.step_mismatch) << '\n';
    }
  }
  out << "max relative residual: " << num(max_residual) << '\n';
  out << "max step mismatch: " << num(max_mismatch) << '\n';

  const double sigma_sq = oracle.variance_bound().value_or(0.0);
  if (std::holds_alternative<GaussianNoise>(c.noise)) {
    const NoiseMonteCarlo mc = noise_monte_carlo(oracle, policy, p.x0, mc_cycles);
    out << "noise Monte Carlo: cycles " << mc.cycles << ", mean |nu|^2 " << num(mc.mean_sq_norm) << ", A sigma^2 "
        << num(mc.A * mc.sigma_sq) << ", ratio " << num(mc.ratio) << ", max |mean nu_j| " << num(mc.max_abs_mean)
        << " (band " << num(mc.coordinate_band) << ")\n";
  } else {
    out << "noise: exact gradients, max |nu| " << num(max_noise) << '\n';
  }

  if (p.quadratic && M > 0) {
    const auto w = target_weights(method_name(method), taus).weights;
    const HeterogeneityParams hp = quadratic_constants(*p.suite, w, p.x0);
    const BiasBoundCheck b = bias_bound_check(trace, *p.suite, pc, hp, sigma_sq, M, w);
    out << "bias: sum |b_m|^2 " << num(b.measured) << ", bound " << num(b.bound) << ", stepsize condition "
        << (b.stepsize_condition ? "met" : "violated") << ", " << (b.holds ? "holds" : "VIOLATED") << '\n';
  }
  return kExitOk;
}

// schedule and weights

std::vector<double> resolve_taus(std::vector<double> taus, bool harmonize_flag, std::ostream& out,
                                 std::ostream& err, bool& ok) {
  ok = true;
  make_profiles(taus);
  if (harmonize_flag) {
    taus = harmonize(taus);
    out << "harmonized: " << list(taus) << '\n';
  } else if (!check_harmonic(taus)) {
    err << "error: computation times " << list(taus) << " are not harmonic; rerun with --harmonize to use "
        << list(harmonize(taus)) << '\n';
    ok = false;
  }
  return taus;
}

int cmd_schedule(const std::vector<double>& input, bool harmonize_flag, std::ostream& out, std::ostream& err) {
  bool ok = false;
  const auto taus = resolve_taus(input, harmonize_flag, out, err, ok);
  if (!ok) return kExitNotHarmonic;
  const CyclePlan plan = build_cycle_plan(taus);
  const TimingStats s = timing_stats(taus);
  out << "taus: " << list(taus) << '\n';
  out << "K_i: " << list(plan.K_i) << '\n';
  out << "K: " << plan.K << '\n';
  out << "order: " << list(plan.order) << '\n';
  out << "delivery times: " << list(plan.delivery_times) << '\n';
  out << "tau_max: " << num(s.tau_max) << '\n';
  out << "tau_min: " << num(s.tau_min) << '\n';
  out << "tau_A: " << num(s.tau_A) << '\n';
  out << "tau_H: " << num(s.tau_H) << '\n';
  out << "tau_DA: " << num(s.tau_DA) << '\n';
  return kExitOk;
}

int cmd_weights(const std::vector<double>& input, bool harmonize_flag, const std::string& methods, double gamma,
                std::ostream& out, std::ostream& err) {
  bool ok = false;
  const auto taus = resolve_taus(input, harmonize_flag, out, err, ok);
  if (!ok) return kExitNotHarmonic;
  std::vector<Method> list_methods;
  if (methods.empty()) {
    list_methods = {Method::Vanilla, Method::Rescaled, Method::DelayAdaptive, Method::NaiveMinibatch,
                    Method::Malenia, Method::Ringleader};
  } else {
    std::stringstream ss(methods);
    std::string m;
    while (std::getline(ss, m, ',')) list_methods.push_back(parse_method(m));
  }
  for (const Method m : list_methods) {
    out << method_name(m) << ": target " << list(target_weights(method_name(m), taus).weights);
    if (is_asgd(m)) out << ", measured " << list(measured_target_weights(make_policy(m, gamma, taus)));
    out << '\n';
  }
  return kExitOk;
}

// report

void print_summary(const json& j, std::ostream& out) {
  out << "experiment: " << j.value("name", std::string("?")) << " (" << j.value("config_hash", std::string("?"))
      << ")\n";
  if (j.contains("overrides")) {
    for (const auto& [k, v] : j["overrides"].items()) out << "override: " << k << " = " << v.get<std::string>() << '\n';
  }
  if (j.contains("timing")) {
    const auto& t = j["timing"];
    out << "taus " << t["taus"].dump() << ", tau_A " << num(t.value("tau_A", 0.0)) << ", tau_H "
        << num(t.value("tau_H", 0.0)) << ", tau_DA " << num(t.value("tau_DA", 0.0)) << '\n';
  }
  const auto loss = [](const json& v) { return v.is_number() ? num(v.get<double>()) : std::string("nan"); };
  if (j.contains("methods")) {
    out << "method  value  median_initial_loss  median_final_loss  diverged\n";
    for (const auto& m : j["methods"]) {
      out << m["method"].get<std::string>() << "  " << num(m["stepsize_value"].get<double>()) << "  "
          << loss(m["median_initial_loss"]) << "  " << loss(m["median_final_loss"]) << "  "
          << m["diverged_runs"].get<std::size_t>() << '/' << m["runs"].size() << '\n';
    }
  }
  if (j.contains("best")) {
    for (const auto& b : j["best"]) {
      out << b["method"].get<std::string>() << ": best value " << num(b["best_value"].get<double>())
          << (b["on_boundary"].get<bool>() ? " (on grid boundary)" : "") << '\n';
    }
  }
}

int cmd_report(const std::string& source, const std::vector<double>& taus, const ProblemParams& params,
               double epsilon, std::ostream& out) {
  if (!source.empty()) {
    std::filesystem::path path(source);
    if (std::filesystem::is_directory(path)) {
      path = std::filesystem::exists(path / "summary.json") ? path / "summary.json" : path / "sweep.json";
    }
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    print_summary(j, out);
    return kExitOk;
  }
  if (taus.empty()) throw ConfigError("report needs a summary path or --taus");
  const TimingStats s = timing_stats(taus);
  out << "taus " << list(taus) << ", tau_max " << num(s.tau_max) << ", tau_A " << num(s.tau_A) << ", tau_H "
      << num(s.tau_H) << ", tau_DA " << num(s.tau_DA) << '\n';
  const double base = leading_term("rescaled", params, s, taus.size(), epsilon);
  out << "method  leading_term  relative_to_rescaled\n";
  for (const char* m : {"naive_minibatch", "malenia", "ringleader", "concurrent", "delay_adaptive", "vanilla",
                        "rescaled"}) {
    const double v = leading_term(m, params, s, taus.size(), epsilon);
    out << m << "  " << num(v) << "  " << num(v / base) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete-event simulator for asynchronous SGD", "rasgd"};
  app.require_subcommand(1);

  ConfigArgs run_args;
  std::string run_dir;
  unsigned threads = 0;
  auto* run = app.add_subcommand("run", "Run every method of a config for every seed");
  add_config_options(run, run_args, false);
  run->add_option("--run-dir", run_dir, "Write artifacts to this directory");
  run->add_option("--threads", threads, "Worker threads (0: all cores)");

  ConfigArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Select the stepsize minimizing the median final loss");
  add_config_options(sweep, sweep_args, true);
  sweep->add_option("--run-dir", run_dir, "Write artifacts to this directory");
  sweep->add_option("--threads", threads, "Worker threads (0: all cores)");

  ConfigArgs dec_args;
  std::size_t mc_cycles = 10000, max_cycles = 50;
  std::string csv;
  auto* decompose = app.add_subcommand("decompose", "Cycle step decomposition, noise and bias checks");
  add_config_options(decompose, dec_args, false);
  decompose->add_option("--cycles", mc_cycles, "Monte Carlo cycles for the noise check")->check(CLI::PositiveNumber);
  decompose->add_option("--max-cycles", max_cycles, "Cycles to decompose")->check(CLI::PositiveNumber);
  decompose->add_option("--csv", csv, "Write the per-cycle table as CSV");

  std::vector<double> taus;
  bool harmonize_flag = false;
  auto* schedule = app.add_subcommand("schedule", "Print the cycle schedule and timing statistics");
  schedule->add_option("--taus", taus, "Comma-separated computation times")->required()->delimiter(',');
  schedule->add_flag("--harmonize", harmonize_flag, "Round computation times up to powers of two");

  double x0 = 0.5, cx_gamma = 0.1, c = 10.0;
  auto* counter = app.add_subcommand("counterexample", "Replay one cycle of the two-worker counterexample");
  counter->add_option("--x0", x0, "Initial point");
  counter->add_option("--gamma", cx_gamma, "Stepsize of worker 1 (worker 2 uses twice this)");
  counter->add_option("--c", c, "Linear coefficient");

  std::string weight_methods;
  double weight_gamma = 1.0;
  auto* weights = app.add_subcommand("weights", "Target weights per method");
  weights->add_option("--taus", taus, "Comma-separated computation times")->required()->delimiter(',');
  weights->add_flag("--harmonize", harmonize_flag, "Round computation times up to powers of two");
  weights->add_option("--methods", weight_methods, "Comma-separated method list (default: all)");
  weights->add_option("--gamma", weight_gamma, "Base stepsize for measured weights")->check(CLI::PositiveNumber);

  std::string source;
  ProblemParams params;
  double epsilon = 0.1;
  auto* report = app.add_subcommand("report", "Summarize a run directory or print leading complexity terms");
  report->add_option("source", source, "Run directory, summary.json or sweep.json");
  report->add_option("--taus", taus, "Comma-separated computation times")->delimiter(',');
  report->add_option("--sigma-sq", params.sigma_sq, "Gradient noise variance");
  report->add_option("--zeta-sq", params.zeta_sq, "Heterogeneity bound");
  report->add_option("--L", params.L, "Smoothness constant");
  report->add_option("--L-prime", params.L_prime, "Smoothness constant of the table method (default: L)");
  report->add_option("--Delta", params.Delta, "Initial suboptimality");
  report->add_option("--epsilon", epsilon, "Target stationarity");

  std::string preset;
  auto* presets = app.add_subcommand("presets", "List presets or print one");
  presets->add_option("name", preset, "Preset to print");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(load(run_args), run_dir, threads, out, err);
    if (sweep->parsed()) return cmd_sweep(load(sweep_args), run_dir, threads, out);
    if (decompose->parsed()) return cmd_decompose(load(dec_args), mc_cycles, max_cycles, csv, out);
    if (schedule->parsed()) return cmd_schedule(taus, harmonize_flag, out, err);
    if (weights->parsed()) return cmd_weights(taus, harmonize_flag, weight_methods, weight_gamma, out, err);
    if (report->parsed()) return cmd_report(source, taus, params, epsilon, out);
    if (counter->parsed()) {
      const CounterexampleReplay r = replay_counterexample(x0, cx_gamma, c);
      out << "closed form: " << format_double(r.closed_form) << '\n';
      out << "simulated: " << format_double(r.simulated) << '\n';
      out << "relative difference: " << num(r.relative_difference) << '\n';
      out << (r.pass ? "PASS" : "FAIL") << '\n';
      return r.pass ? kExitOk : kExitFailure;
    }
    if (presets->parsed()) {
      if (preset.empty()) {
        for (const auto& n : preset_names()) out << n << '\n';
        return kExitOk;
      }
      const auto yaml = preset_yaml(preset);
      if (!yaml) throw ConfigError("unknown preset '" + preset + "'");
      out << *yaml;
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    const int code = classify(e);
    if (code == kExitNotHarmonic) err << "hint: pass --harmonize to round computation times to powers of two\n";
    return code;
  }
  return kExitConfig;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace rasgd
