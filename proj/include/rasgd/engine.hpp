#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rasgd/objectives.hpp"
#include "rasgd/timing.hpp"

namespace rasgd {

enum class TimingKind { Fixed, Exponential };

/// Per-worker computation-time model. Fixed: every gradient takes exactly
/// tau_i. Exponential: each gradient takes an independent Exp(mean tau_i).
struct TimingModel {
  TimingKind kind = TimingKind::Fixed;
  std::vector<double> taus;

  static TimingModel fixed(std::vector<double> taus);
  static TimingModel exponential(std::vector<double> taus);

  std::size_t n() const { return taus.size(); }
  bool is_fixed() const { return kind == TimingKind::Fixed; }
  /// Fixed timing with harmonic periods: the schedule repeats every tau_max.
  bool is_cyclic() const;
};

/// A gradient delivered to the server.
struct Arrival {
  int worker;  // 1-based
  const Vector& gradient;
  long long delay;  // server updates since the worker read its model
  double time;
};

/// What the server did with an arrival.
struct Decision {
  double stepsize = 0.0;   // sum of stepsizes applied at this event
  long long updates = 0;   // model updates applied at this event
  bool worker_idles = false;  // arriving worker waits for the next broadcast
  bool broadcast = false;     // every worker restarts from the current model
  bool round_completed = false;
  bool gather_completed = false;
};

/// Server-side update rule driven by the event loop.
class ServerStrategy {
 public:
  virtual ~ServerStrategy() = default;
  virtual std::string name() const = 0;
  /// Called once before the first event.
  virtual void start(std::size_t n, const Vector& x0) = 0;
  /// May modify x in place.
  virtual Decision on_arrival(const Arrival& arrival, Vector& x) = 0;
};

struct TraceEvent {
  double time = 0.0;
  int worker = 0;
  long long delay = 0;
  double stepsize = 0.0;
  long long read_update = 0;  // server update count when the worker read its model
  long long updates_after = 0;
  Vector gradient;        // empty unless gradients are recorded
  Vector exact_gradient;  // grad F_i at the worker's snapshot, same condition
};

struct MetricSample {
  double time = 0.0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double cumulative_stepsize = 0.0;
  long long cycle_index = 0;  // floor(time / tau_max)
};

/// Value and gradient of the objective reported in metric samples.
struct Metric {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

Metric metric_for(std::shared_ptr<const ObjectiveSuite> suite, std::vector<double> weights = {});

struct SimulationOptions {
  double horizon = 0.0;
  std::uint64_t seed = 0;
  /// Wall-clock spacing of metric samples; 0 means tau_max.
  double sample_interval = 0.0;
  bool sample_every_event = false;
  /// Also store the model every `model_stride` updates (0: only x0 and cycle boundaries).
  long long model_stride = 0;
  bool record_gradients = false;
  bool record_events = true;
  /// Objective for metric samples; defaults to the equal-weighted suite objective.
  std::optional<Metric> metric;
  /// Stop after this many events (0: unlimited).
  std::size_t max_events = 0;
};

struct Trace {
  std::string strategy;
  std::string status = "ok";  // "ok" or "diverged"
  std::string message;
  std::size_t n = 0;
  double horizon = 0.0;
  double tau_max = 0.0;
  TimingKind timing = TimingKind::Fixed;
  bool cyclic = false;
  long long cycle_K = 0;  // updates per cycle when cyclic

  std::vector<TraceEvent> events;
  std::size_t event_count = 0;
  /// Event indices after which the update count reached a multiple of cycle_K.
  std::vector<std::size_t> cycle_boundaries;
  /// Thinned model history keyed by update count; always contains 0.
  std::map<long long, Vector> models;
  std::vector<MetricSample> samples;
  std::vector<double> round_ends;
  std::vector<double> gather_ends;

  long long updates = 0;
  double cumulative_stepsize = 0.0;
  Vector final_model;

  bool diverged() const { return status == "diverged"; }
};

/// Runs the event loop until the next delivery would occur after the horizon.
/// Ties in delivery time are processed in ascending worker order.
Trace simulate(ServerStrategy& strategy, const GradientOracle& oracle, const TimingModel& timing,
               const Vector& x0, const SimulationOptions& options);

struct DelayStats {
  int worker = 0;
  std::size_t count = 0;
  long long min = 0;
  double mean = 0.0;
  long long max = 0;
};

/// Per-worker delay statistics over events delivered strictly after `after_time`.
/// Workers without events report count 0.
std::vector<DelayStats> measure_delays(const Trace& trace, double after_time = 0.0);

/// Server model at every multiple of K updates, starting with x0. Throws
/// "cycles undefined" unless the trace came from fixed harmonic timing.
std::vector<Vector> cycle_iterates(const Trace& trace, const CyclePlan& plan);

}  // namespace rasgd
