#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rasgd/algorithms.hpp"
#include "rasgd/data.hpp"
#include "rasgd/engine.hpp"
#include "rasgd/mlp.hpp"
#include "rasgd/objectives.hpp"

namespace rasgd {

struct QuadraticProblem {
  std::vector<QuadraticSpec> locals;
  Vector x0;
};

struct SyntheticData {
  int classes = 10;
  std::size_t dim = 20;
  std::size_t per_class = 200;
  double separation = 4.0;
  std::uint64_t seed = 1;
};

struct IdxData {
  std::string images;
  std::string labels;
};

struct MlpProblem {
  std::size_t hidden = 32;
  std::variant<SyntheticData, IdxData> data = SyntheticData{};
  bool normalize = true;
  std::optional<Normalization> normalization;  // computed from the data when absent
  std::uint64_t partition_seed = 0;
};

enum class StepsizeMode { Gamma, Alpha };

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<Method> methods;
  std::variant<QuadraticProblem, MlpProblem> problem;
  NoiseModel noise = ExactNoise{};
  TimingKind timing = TimingKind::Fixed;
  std::vector<double> taus;
  bool harmonize = false;
  StepsizeMode stepsize_mode = StepsizeMode::Gamma;
  double stepsize = 0.0;
  std::vector<double> grid;  // sweep values, same mode as `stepsize`
  double horizon = 0.0;
  std::vector<std::uint64_t> seeds{0};
  double sample_interval = 0.0;  // 0: tau_max
  bool sample_every_event = false;
  std::string output_dir = "runs";
  std::size_t grid_size = 200;
  /// Command-line overrides applied on top of the file, echoed in summaries.
  std::map<std::string, std::string> overrides;

  /// Throws std::invalid_argument describing the first violated rule.
  void validate() const;
  /// Computation times actually simulated (harmonized when requested).
  std::vector<double> effective_taus() const;
  /// Method parameter (gamma for ASGD rules, alpha for baselines) for a stepsize value.
  double method_parameter(Method method, double value) const;
};

/// An objective suite with its starting point and loss metric for one seed.
struct Problem {
  std::shared_ptr<const ObjectiveSuite> suite;
  Vector x0;
  Metric metric;  // equal-weighted objective
  bool quadratic = false;
};

/// Builds the suite. MLP starting points depend on `seed`.
Problem build_problem(const ExperimentConfig& config, std::uint64_t seed);

/// Starting point for `seed`: fixed for quadratics, a fresh initialization for MLPs.
Vector initial_point(const Problem& problem, std::uint64_t seed);

struct Series {
  std::vector<double> time;
  std::vector<double> value;
};

struct AggregatedSeries {
  std::vector<double> grid;
  std::vector<double> median;
  std::vector<double> min;
  std::vector<double> max;
};

/// Linear interpolation; holds the end values outside the sampled range.
double interpolate(const Series& series, double t);

/// Interpolates every series onto `grid_size` evenly spaced points of
/// [0, horizon] and takes pointwise median (mean of the middle pair for even
/// counts), min and max.
AggregatedSeries aggregate(const std::vector<Series>& series, double horizon, std::size_t grid_size = 200);

double median(std::vector<double> values);

Series loss_series(const Trace& trace);

struct RoundStats {
  std::size_t rounds = 0;
  double mean_round = 0.0;
  /// Mean time from a round's start to the end of its gathering phase.
  double mean_gather = 0.0;
};

RoundStats round_statistics(const Trace& trace);

struct RunResult {
  Method method = Method::Rescaled;
  double parameter = 0.0;  // gamma or alpha, per method
  std::uint64_t seed = 0;
  Trace trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double best_loss = 0.0;
  std::optional<Vector> final_cycle_iterate;
};

/// One simulation of `method` with the given method parameter.
RunResult run_single(const ExperimentConfig& config, Method method, double parameter, std::uint64_t seed,
                     const Problem& problem);

struct MethodResult {
  Method method = Method::Rescaled;
  double value = 0.0;      // stepsize value in the config's mode
  double parameter = 0.0;  // method parameter
  std::vector<RunResult> runs;
  AggregatedSeries loss;
  double median_initial_loss = 0.0;
  double median_final_loss = 0.0;
  double median_best_loss = 0.0;
  std::size_t diverged = 0;
};

struct ExperimentResult {
  std::vector<MethodResult> methods;
  std::filesystem::path run_dir;  // empty when nothing was written
};

struct RunOptions {
  bool write = true;
  std::optional<std::filesystem::path> run_dir;
  unsigned threads = 0;  // 0: hardware concurrency
  /// Stepsize value per method, overriding the config (e.g. a sweep's choice).
  std::map<Method, double> stepsize_by_method;
};

/// Runs every method for every seed. Writes per-seed CSVs, aggregated CSVs
/// and summary.json unless `options.write` is false.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct SweepPoint {
  double value = 0.0;
  double parameter = 0.0;
  double median_final_loss = 0.0;
  double median_best_loss = 0.0;
  bool diverged = false;
};

struct MethodSweep {
  Method method = Method::Rescaled;
  std::vector<SweepPoint> points;
  double best_value = 0.0;
  bool on_boundary = false;
};

struct SweepResult {
  std::vector<MethodSweep> methods;
  std::filesystem::path run_dir;
};

/// Evaluates every grid value for every method and seed. A point counts as
/// diverged if any seed diverged. Throws "no stable stepsize" when every
/// point of a method diverged.
SweepResult sweep_stepsize(const ExperimentConfig& config, const RunOptions& options = {});

// Persistence

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricSample>& samples);
std::vector<MetricSample> read_metrics_csv(const std::filesystem::path& path);
void write_aggregate_csv(const std::filesystem::path& path, const AggregatedSeries& series);

/// 17 significant digits, so parsing recovers the exact double.
std::string format_double(double v);

/// Canonical JSON of a config, used for hashing and summaries.
std::string config_json(const ExperimentConfig& config);
/// First 8 hex digits of a 64-bit FNV-1a hash of config_json.
std::string config_hash(const ExperimentConfig& config);
/// <output_dir>/<name>-<hash8>-<UTC timestamp>
std::filesystem::path default_run_dir(const ExperimentConfig& config);

/// Runs `count` tasks on up to `threads` threads (0: hardware concurrency).
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task);

}  // namespace rasgd
