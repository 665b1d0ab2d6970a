#include "rasgd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "rasgd/analysis.hpp"
#include "rasgd/timing.hpp"

namespace rasgd {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

void ExperimentConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("methods: at least one method required");
  if (taus.empty()) throw std::invalid_argument("timing.taus: at least one worker required");
  for (double t : taus) {
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("timing.taus: entries must be positive");
  }
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon: must be positive");
  if (seeds.empty()) throw std::invalid_argument("seeds: at least one seed required");
  if (grid.empty() && !(stepsize > 0.0)) throw std::invalid_argument("stepsize: must be positive");
  for (double g : grid) {
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("sweep.grid: values must be positive");
  }
  if (sample_interval < 0.0) throw std::invalid_argument("sampling.interval: must be nonnegative");
  if (grid_size < 2) throw std::invalid_argument("output.grid_size: must be at least 2");
  if (const auto* q = std::get_if<QuadraticProblem>(&problem)) {
    if (q->locals.size() != taus.size()) {
      throw std::invalid_argument("problem.locals: " + std::to_string(q->locals.size()) +
                                  " objectives for " + std::to_string(taus.size()) + " workers");
    }
    for (const auto& l : q->locals) {
      if (l.center.size() != q->x0.size()) throw std::invalid_argument("problem.x0: dimension mismatch");
    }
    if (std::holds_alternative<MinibatchNoise>(noise)) {
      throw std::invalid_argument("noise: minibatch noise needs an mlp problem");
    }
  } else {
    const auto& m = std::get<MlpProblem>(problem);
    if (m.hidden == 0) throw std::invalid_argument("problem.hidden: must be positive");
    if (const auto* s = std::get_if<SyntheticData>(&m.data)) {
      if (static_cast<std::size_t>(s->classes) != taus.size()) {
        throw std::invalid_argument("label/worker mismatch: " + std::to_string(s->classes) + " classes for " +
                                    std::to_string(taus.size()) + " workers");
      }
    }
    if (const auto* b = std::get_if<MinibatchNoise>(&noise); b && b->batch_size == 0) {
      throw std::invalid_argument("noise.batch_size: must be positive");
    }
  }
}

std::vector<double> ExperimentConfig::effective_taus() const { return harmonize ? rasgd::harmonize(taus) : taus; }

double ExperimentConfig::method_parameter(Method method, double value) const {
  if (stepsize_mode == StepsizeMode::Alpha) {
    const auto t = effective_taus();
    return gamma_for_alpha(method, value, t);
  }
  return value;
}

// Problem construction

namespace {

LabeledDataset load_data(const MlpProblem& m) {
  if (const auto* s = std::get_if<SyntheticData>(&m.data)) {
    return synth_classification(s->classes, s->dim, s->per_class, s->separation, s->seed);
  }
  const auto& idx = std::get<IdxData>(m.data);
  return load_idx_dataset(idx.images, idx.labels);
}

}  // namespace

Problem build_problem(const ExperimentConfig& config, std::uint64_t seed) {
  Problem p;
  if (const auto* q = std::get_if<QuadraticProblem>(&config.problem)) {
    p.suite = std::make_shared<ObjectiveSuite>(quadratic_suite(q->locals));
    p.x0 = q->x0;
    p.quadratic = true;
  } else {
    const auto& m = std::get<MlpProblem>(config.problem);
    LabeledDataset data = load_data(m);
    if (m.normalize) normalize(data, m.normalization);
    const auto shards = partition_by_label(data, config.taus.size(), m.partition_seed);
    const MlpModel model{data.dim(), m.hidden, static_cast<std::size_t>(data.classes)};
    p.suite = std::make_shared<ObjectiveSuite>(mlp_suite(model, data, shards));
    p.x0 = mlp_init(model, seed);
  }
  p.metric = metric_for(p.suite);
  return p;
}

// Series

double interpolate(const Series& s, double t) {
  if (s.time.empty()) throw std::invalid_argument("empty metric series");
  if (t <= s.time.front()) return s.value.front();
  if (t >= s.time.back()) return s.value.back();
  const auto it = std::upper_bound(s.time.begin(), s.time.end(), t);
  const auto hi = static_cast<std::size_t>(it - s.time.begin());
  const std::size_t lo = hi - 1;
  const double t0 = s.time[lo], t1 = s.time[hi];
  if (t1 == t0) return s.value[hi];
  const double w = (t - t0) / (t1 - t0);
  return s.value[lo] + w * (s.value[hi] - s.value[lo]);
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AggregatedSeries aggregate(const std::vector<Series>& series, double horizon, std::size_t grid_size) {
  if (series.empty()) throw std::invalid_argument("aggregate needs at least one series");
  if (grid_size < 2) throw std::invalid_argument("grid needs at least 2 points");
  for (const auto& s : series) {
    if (s.time.empty() || s.time.size() != s.value.size()) throw std::invalid_argument("empty metric series");
  }
  AggregatedSeries out;
  out.grid.resize(grid_size);
  for (std::size_t g = 0; g < grid_size; ++g) {
    out.grid[g] = horizon * static_cast<double>(g) / static_cast<double>(grid_size - 1);
  }
  std::vector<double> vals(series.size());
  for (double t : out.grid) {
    for (std::size_t s = 0; s < series.size(); ++s) vals[s] = interpolate(series[s], t);
    out.median.push_back(median(vals));
    out.min.push_back(*std::min_element(vals.begin(), vals.end()));
    out.max.push_back(*std::max_element(vals.begin(), vals.end()));
  }
  return out;
}

Series loss_series(const Trace& trace) {
  Series s;
  for (const auto& m : trace.samples) {
    s.time.push_back(m.time);
    s.value.push_back(m.loss);
  }
  return s;
}

// Runs

Vector initial_point(const Problem& problem, std::uint64_t seed) {
  if (problem.quadratic) return problem.x0;
  const auto* local = dynamic_cast<const MlpLocal*>(&problem.suite->local(1));
  if (!local) return problem.x0;
  return mlp_init(local->model(), seed);
}

RoundStats round_statistics(const Trace& t) {
  RoundStats s;
  s.rounds = t.round_ends.size();
  double prev = 0.0, total = 0.0;
  for (double e : t.round_ends) {
    total += e - prev;
    prev = e;
  }
  if (s.rounds) s.mean_round = total / static_cast<double>(s.rounds);
  // Gathering phase r starts when round r starts.
  double gsum = 0.0;
  std::size_t g = 0;
  for (; g < t.gather_ends.size(); ++g) {
    const double start = g == 0 ? 0.0 : t.round_ends.at(g - 1);
    gsum += t.gather_ends[g] - start;
  }
  if (g) s.mean_gather = gsum / static_cast<double>(g);
  return s;
}

RunResult run_single(const ExperimentConfig& config, Method method, double parameter, std::uint64_t seed,
                     const Problem& problem) {
  const auto taus = config.effective_taus();
  auto strategy = make_strategy(method, parameter, taus);
  GradientOracle oracle(problem.suite, config.noise, seed);
  const TimingModel timing{config.timing, taus};

  SimulationOptions opts;
  opts.horizon = config.horizon;
  opts.seed = seed;
  opts.sample_interval = config.sample_interval;
  opts.sample_every_event = config.sample_every_event;
  opts.metric = problem.metric;

  RunResult r;
  r.method = method;
  r.parameter = parameter;
  r.seed = seed;
  r.trace = simulate(*strategy, oracle, timing, problem.x0, opts);
  const auto& samples = r.trace.samples;
  r.initial_loss = samples.empty() ? kInf : samples.front().loss;
  r.final_loss = (r.trace.diverged() || samples.empty()) ? kInf : samples.back().loss;
  r.best_loss = kInf;
  for (const auto& s : samples) r.best_loss = std::min(r.best_loss, s.loss);
  if (r.trace.cyclic && is_asgd(method) && r.trace.cycle_K > 0) {
    const long long last = (r.trace.updates / r.trace.cycle_K) * r.trace.cycle_K;
    if (const auto it = r.trace.models.find(last); it != r.trace.models.end()) r.final_cycle_iterate = it->second;
  }
  return r;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task) {
  if (count == 0) return;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// Persistence

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("malformed number '" + std::string(s) + "'");
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

constexpr const char* kCsvHeader = "time,loss,grad_norm_sq,cumulative_stepsize,cycle_index";

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricSample>& samples) {
  auto out = open_out(path);
  out << kCsvHeader << '\n';
  for (const auto& s : samples) {
    out << format_double(s.time) << ',' << format_double(s.loss) << ',' << format_double(s.grad_norm_sq) << ','
        << format_double(s.cumulative_stepsize) << ',' << s.cycle_index << '\n';
  }
}

std::vector<MetricSample> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("unexpected CSV header in " + path.string());
  std::vector<MetricSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      fields.push_back(rest.substr(0, pos));
    }
    fields.push_back(rest);
    if (fields.size() != 5) throw std::runtime_error("CSV row with " + std::to_string(fields.size()) + " fields");
    MetricSample s;
    s.time = parse_double(fields[0]);
    s.loss = parse_double(fields[1]);
    s.grad_norm_sq = parse_double(fields[2]);
    s.cumulative_stepsize = parse_double(fields[3]);
    s.cycle_index = static_cast<long long>(parse_double(fields[4]));
    out.push_back(s);
  }
  return out;
}

void write_aggregate_csv(const std::filesystem::path& path, const AggregatedSeries& series) {
  auto out = open_out(path);
  out << "time,median,min,max\n";
  for (std::size_t i = 0; i < series.grid.size(); ++i) {
    out << format_double(series.grid[i]) << ',' << format_double(series.median[i]) << ','
        << format_double(series.min[i]) << ',' << format_double(series.max[i]) << '\n';
  }
}

namespace {

json vec_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json noise_json(const NoiseModel& n) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExactNoise>) return {{"kind", "exact"}};
        else if constexpr (std::is_same_v<T, GaussianNoise>) return {{"kind", "gaussian"}, {"sigma_sq", m.sigma_sq}};
        else return {{"kind", "minibatch"}, {"batch_size", m.batch_size}};
      },
      n);
}

json problem_json(const ExperimentConfig& c) {
  if (const auto* q = std::get_if<QuadraticProblem>(&c.problem)) {
    json locals = json::array();
    for (const auto& l : q->locals) {
      json rows = json::array();
      for (Eigen::Index r = 0; r < l.curvature.rows(); ++r) rows.push_back(vec_json(l.curvature.row(r).transpose()));
      locals.push_back({{"curvature", rows},
                        {"center", vec_json(l.center)},
                        {"linear", l.linear.size() ? vec_json(l.linear) : json::array()}});
    }
    return {{"kind", "quadratic"}, {"locals", locals}, {"x0", vec_json(q->x0)}};
  }
  const auto& m = std::get<MlpProblem>(c.problem);
  json data;
  if (const auto* s = std::get_if<SyntheticData>(&m.data)) {
    data = {{"source", "synthetic"}, {"classes", s->classes},       {"dim", s->dim},
            {"per_class", s->per_class}, {"separation", s->separation}, {"seed", s->seed}};
  } else {
    const auto& idx = std::get<IdxData>(m.data);
    data = {{"source", "idx"}, {"images", idx.images}, {"labels", idx.labels}};
  }
  json out = {{"kind", "mlp"}, {"hidden", m.hidden}, {"data", data}, {"normalize", m.normalize},
              {"partition_seed", m.partition_seed}};
  if (m.normalization) out["normalization"] = {{"mean", m.normalization->mean}, {"stddev", m.normalization->stddev}};
  return out;
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(method_name(m)));
  json j;
  j["name"] = c.name;
  j["methods"] = methods;
  j["problem"] = problem_json(c);
  j["noise"] = noise_json(c.noise);
  j["timing"] = {{"model", c.timing == TimingKind::Fixed ? "fixed" : "exponential"},
                 {"taus", c.taus},
                 {"harmonize", c.harmonize}};
  j["stepsize"] = {{c.stepsize_mode == StepsizeMode::Alpha ? "alpha" : "gamma", c.stepsize}};
  j["sweep"] = {{"grid", c.grid}};
  j["horizon"] = c.horizon;
  j["seeds"] = c.seeds;
  j["sampling"] = {{"interval", c.sample_interval}, {"every_event", c.sample_every_event}};
  j["output"] = {{"dir", c.output_dir}, {"grid_size", c.grid_size}};
  return j;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

double json_number(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

json run_json(const RunResult& r) {
  const auto rs = round_statistics(r.trace);
  json j = {{"seed", r.seed},
            {"status", r.trace.status},
            {"initial_loss", json_number(r.initial_loss)},
            {"final_loss", json_number(r.final_loss)},
            {"best_loss", json_number(r.best_loss)},
            {"events", r.trace.event_count},
            {"updates", r.trace.updates},
            {"cumulative_stepsize", r.trace.cumulative_stepsize},
            {"rounds", rs.rounds},
            {"mean_round_duration", rs.mean_round},
            {"mean_gather_duration", rs.mean_gather}};
  if (!r.trace.message.empty()) j["message"] = r.trace.message;
  if (r.trace.final_model.size() <= 64) j["final_iterate"] = vec_json(r.trace.final_model);
  if (r.final_cycle_iterate && r.final_cycle_iterate->size() <= 64) {
    j["final_cycle_iterate"] = vec_json(*r.final_cycle_iterate);
  }
  if (!r.trace.events.empty()) {
    json delays = json::array();
    for (const auto& d : measure_delays(r.trace, r.trace.cyclic ? r.trace.tau_max : 0.0)) {
      delays.push_back({{"worker", d.worker}, {"count", d.count}, {"min", d.min}, {"mean", d.mean}, {"max", d.max}});
    }
    j["steady_state_delays"] = delays;
  }
  // Rate over whole cycles: cumulative stepsize at the last sample on a cycle boundary.
  for (auto it = r.trace.samples.rbegin(); it != r.trace.samples.rend(); ++it) {
    const double cycles = it->time / r.trace.tau_max;
    if (it->time > 0.0 && std::abs(cycles - std::round(cycles)) < 1e-9) {
      j["cumulative_stepsize_rate"] = it->cumulative_stepsize / it->time;
      break;
    }
  }
  return j;
}

json method_json(const ExperimentConfig& c, const MethodResult& m) {
  const auto taus = c.effective_taus();
  json j = {{"method", std::string(method_name(m.method))},
            {"stepsize_value", m.value},
            {"parameter", m.parameter},
            {"median_initial_loss", json_number(m.median_initial_loss)},
            {"median_final_loss", json_number(m.median_final_loss)},
            {"median_best_loss", json_number(m.median_best_loss)},
            {"diverged_runs", m.diverged}};
  j["target_weights"] = target_weights(method_name(m.method), taus).weights;
  if (is_asgd(m.method) && check_harmonic(taus)) {
    const StepsizePolicy policy = make_policy(m.method, m.parameter, taus);
    const PolicyConstants pc = policy.constants();
    j["constants"] = {{"alpha", pc.alpha}, {"A", pc.A}, {"gamma_max", pc.gamma_max}, {"K", pc.K},
                      {"Gamma", pc.Gamma}};
    if (!policy.worker_stepsizes().empty()) j["constants"]["gamma_i"] = policy.worker_stepsizes();
    j["measured_weights"] = measured_target_weights(policy);
  } else if (!is_asgd(m.method)) {
    j["constants"] = {{"alpha", m.parameter}};
  }
  json runs = json::array();
  for (const auto& r : m.runs) runs.push_back(run_json(r));
  j["runs"] = runs;
  return j;
}

std::filesystem::path unique_dir(std::filesystem::path p) {
  if (!std::filesystem::exists(p)) return p;
  for (int i = 1;; ++i) {
    auto q = p;
    q += "-" + std::to_string(i);
    if (!std::filesystem::exists(q)) return q;
  }
}

}  // namespace

std::string config_json(const ExperimentConfig& config) { return config_to_json(config).dump(); }

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(config_json(config))));
  return std::string(buf, 8);
}

std::filesystem::path default_run_dir(const ExperimentConfig& config) {
  return unique_dir(std::filesystem::path(config.output_dir) /
                    (config.name + "-" + config_hash(config) + "-" + utc_timestamp()));
}

namespace {

json timing_json(const std::vector<double>& taus) {
  const TimingStats s = timing_stats(taus);
  json j = {{"taus", taus},   {"tau_max", s.tau_max}, {"tau_min", s.tau_min},
            {"tau_A", s.tau_A}, {"tau_H", s.tau_H},     {"tau_DA", s.tau_DA},
            {"harmonic", check_harmonic(taus)}};
  if (check_harmonic(taus)) {
    const CyclePlan plan = build_cycle_plan(taus);
    j["K"] = plan.K;
    j["K_i"] = plan.K_i;
  }
  return j;
}

json summary_header(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["config_hash"] = config_hash(c);
  j["config"] = config_to_json(c);
  j["overrides"] = c.overrides;
  j["timing"] = timing_json(c.effective_taus());
  return j;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const Problem base = build_problem(config, config.seeds.front());

  struct Task {
    std::size_t method;
    std::size_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    for (std::size_t s = 0; s < config.seeds.size(); ++s) tasks.push_back({m, s});
  }

  ExperimentResult result;
  result.methods.resize(config.methods.size());
  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    auto& mr = result.methods[m];
    mr.method = config.methods[m];
    const auto it = options.stepsize_by_method.find(mr.method);
    mr.value = it != options.stepsize_by_method.end() ? it->second : config.stepsize;
    mr.parameter = config.method_parameter(mr.method, mr.value);
    mr.runs.resize(config.seeds.size());
  }

  parallel_for(tasks.size(), options.threads, [&](std::size_t i) {
    const Task t = tasks[i];
    auto& mr = result.methods[t.method];
    Problem p = base;
    const std::uint64_t seed = config.seeds[t.seed];
    p.x0 = initial_point(p, seed);
    mr.runs[t.seed] = run_single(config, mr.method, mr.parameter, seed, p);
  });

  for (auto& mr : result.methods) {
    std::vector<Series> series;
    std::vector<double> initial, final_loss, best;
    for (const auto& r : mr.runs) {
      if (r.trace.diverged()) ++mr.diverged;
      if (!r.trace.samples.empty()) series.push_back(loss_series(r.trace));
      initial.push_back(r.initial_loss);
      final_loss.push_back(r.final_loss);
      best.push_back(r.best_loss);
    }
    if (!series.empty()) mr.loss = aggregate(series, config.horizon, config.grid_size);
    mr.median_initial_loss = median(initial);
    mr.median_final_loss = median(final_loss);
    mr.median_best_loss = median(best);
  }

  if (options.write) {
    result.run_dir = options.run_dir ? *options.run_dir : default_run_dir(config);
    std::filesystem::create_directories(result.run_dir);
    json summary = summary_header(config);
    json methods = json::array();
    for (const auto& mr : result.methods) {
      const auto dir = result.run_dir / std::string(method_name(mr.method));
      for (const auto& r : mr.runs) {
        write_metrics_csv(dir / ("seed-" + std::to_string(r.seed) + ".csv"), r.trace.samples);
      }
      if (!mr.loss.grid.empty()) write_aggregate_csv(dir / "loss_aggregate.csv", mr.loss);
      methods.push_back(method_json(config, mr));
    }
    summary["methods"] = methods;
    auto out = open_out(result.run_dir / "summary.json");
    out << summary.dump(2) << '\n';
  }
  return result;
}

SweepResult sweep_stepsize(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const std::vector<double> grid = config.grid.empty() ? std::vector<double>{config.stepsize} : config.grid;
  const Problem base = build_problem(config, config.seeds.front());

  const std::size_t M = config.methods.size(), G = grid.size(), S = config.seeds.size();
  std::vector<RunResult> runs(M * G * S);
  parallel_for(runs.size(), options.threads, [&](std::size_t i) {
    const std::size_t m = i / (G * S), g = (i / S) % G, s = i % S;
    const Method method = config.methods[m];
    Problem p = base;
    const std::uint64_t seed = config.seeds[s];
    p.x0 = initial_point(p, seed);
    RunResult r = run_single(config, method, config.method_parameter(method, grid[g]), seed, p);
    r.trace.events.clear();
    r.trace.events.shrink_to_fit();
    r.trace.models.clear();
    runs[i] = std::move(r);
  });

  SweepResult result;
  json points_json = json::array();
  for (std::size_t m = 0; m < M; ++m) {
    MethodSweep ms;
    ms.method = config.methods[m];
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < G; ++g) {
      SweepPoint pt;
      pt.value = grid[g];
      pt.parameter = config.method_parameter(ms.method, grid[g]);
      std::vector<double> finals, bests;
      for (std::size_t s = 0; s < S; ++s) {
        const auto& r = runs[(m * G + g) * S + s];
        pt.diverged = pt.diverged || r.trace.diverged() || !std::isfinite(r.final_loss);
        finals.push_back(r.final_loss);
        bests.push_back(r.best_loss);
      }
      pt.median_final_loss = median(finals);
      pt.median_best_loss = median(bests);
      if (!pt.diverged && (!best || pt.median_final_loss < ms.points[*best].median_final_loss)) best = g;
      ms.points.push_back(pt);
      points_json.push_back({{"method", std::string(method_name(ms.method))},
                             {"value", pt.value},
                             {"parameter", pt.parameter},
                             {"median_final_loss", json_number(pt.median_final_loss)},
                             {"median_best_loss", json_number(pt.median_best_loss)},
                             {"diverged", pt.diverged}});
    }
    if (!best) throw std::runtime_error("no stable stepsize for " + std::string(method_name(ms.method)));
    ms.best_value = grid[*best];
    ms.on_boundary = *best == 0 || *best + 1 == G;
    result.methods.push_back(std::move(ms));
  }

  if (options.write) {
    result.run_dir = options.run_dir ? *options.run_dir : default_run_dir(config);
    std::filesystem::create_directories(result.run_dir);
    json summary = summary_header(config);
    summary["grid"] = grid;
    summary["points"] = points_json;
    json best = json::array();
    for (const auto& ms : result.methods) {
      best.push_back({{"method", std::string(method_name(ms.method))},
                      {"best_value", ms.best_value},
                      {"on_boundary", ms.on_boundary}});
    }
    summary["best"] = best;
    auto out = open_out(result.run_dir / "sweep.json");
    out << summary.dump(2) << '\n';
    auto csv = open_out(result.run_dir / "sweep.csv");
    csv << "method,value,parameter,median_final_loss,median_best_loss,diverged\n";
    for (const auto& ms : result.methods) {
      for (const auto& p : ms.points) {
        csv << method_name(ms.method) << ',' << format_double(p.value) << ',' << format_double(p.parameter) << ','
            << format_double(p.median_final_loss) << ',' << format_double(p.median_best_loss) << ','
            << (p.diverged ? "true" : "false") << '\n';
      }
    }
  }
  return result;
}

}  // namespace rasgd
