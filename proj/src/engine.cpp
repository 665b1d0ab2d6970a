#include "rasgd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rasgd/rng.hpp"

namespace rasgd {

TimingModel TimingModel::fixed(std::vector<double> taus) {
  make_profiles(taus);
  return {TimingKind::Fixed, std::move(taus)};
}

TimingModel TimingModel::exponential(std::vector<double> taus) {
  make_profiles(taus);
  return {TimingKind::Exponential, std::move(taus)};
}

bool TimingModel::is_cyclic() const { return is_fixed() && !taus.empty() && check_harmonic(taus); }

Metric metric_for(std::shared_ptr<const ObjectiveSuite> suite, std::vector<double> weights) {
  if (weights.empty()) weights = uniform_weights(suite->n());
  auto objective = std::make_shared<WeightedObjective>(std::move(suite), std::move(weights));
  return {[objective](const Vector& x) { return objective->value(x); },
          [objective](const Vector& x) { return objective->gradient(x); }};
}

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

bool all_finite(const Vector& x) { return x.allFinite(); }

// Sample times k * interval; exact tick multiples under cyclic timing.
class SampleClock {
 public:
  SampleClock(double interval, double horizon, double tick) : interval_(interval), horizon_(horizon) {
    if (tick > 0.0) {
      const double ratio = interval / tick;
      const double rounded = std::round(ratio);
      if (rounded >= 1.0 && std::abs(ratio - rounded) <= 1e-9 * ratio) {
        tick_ = tick;
        ticks_per_sample_ = static_cast<long long>(rounded);
      }
    }
  }

  double time(long long k) const {
    const double t = ticks_per_sample_ > 0 ? static_cast<double>(k * ticks_per_sample_) * tick_
                                           : static_cast<double>(k) * interval_;
    return std::min(t, horizon_);
  }
  bool done(long long k) const {
    return k > 0 && time(k - 1) >= horizon_;
  }

 private:
  double interval_;
  double horizon_;
  double tick_ = 0.0;
  long long ticks_per_sample_ = 0;
};

}  // namespace

Trace simulate(ServerStrategy& strategy, const GradientOracle& oracle, const TimingModel& timing,
               const Vector& x0, const SimulationOptions& options) {
  const std::size_t n = timing.n();
  if (n == 0) throw std::invalid_argument("no workers");
  if (n != oracle.suite().n()) {
    throw std::invalid_argument("timing model has " + std::to_string(n) + " workers but the objective has " +
                                std::to_string(oracle.suite().n()));
  }
  if (!(options.horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (static_cast<std::size_t>(x0.size()) != oracle.suite().dim()) {
    throw std::invalid_argument("initial point has wrong dimension");
  }
  if (options.record_gradients && !oracle.has_exact_local_gradients()) {
    throw std::logic_error("decomposition needs exact local gradients");
  }
  make_profiles(timing.taus);

  const Metric metric = options.metric ? *options.metric : metric_for(oracle.suite_ptr());

  Trace trace;
  trace.strategy = strategy.name();
  trace.n = n;
  trace.horizon = options.horizon;
  trace.timing = timing.kind;
  trace.tau_max = *std::max_element(timing.taus.begin(), timing.taus.end());
  trace.cyclic = timing.is_cyclic();

  // Cyclic timing runs on an integer tick grid so simultaneous deliveries tie exactly.
  std::vector<long long> ticks;
  double tick = 0.0;
  if (trace.cyclic) {
    ticks = harmonic_ticks(timing.taus);
    tick = *std::min_element(timing.taus.begin(), timing.taus.end());
    trace.cycle_K = build_cycle_plan(timing.taus).K;
  }

  Vector x = x0;
  trace.models.emplace(0, x);
  strategy.start(n, x0);

  std::vector<Vector> snapshot(n, x0);
  std::vector<long long> read_update(n, 0);
  std::vector<std::uint64_t> jobs(n, 0);
  std::vector<double> due(n, kNever);
  std::vector<long long> due_tick(n, 0);

  auto start_job = [&](std::size_t w, double now, long long now_tick) {
    snapshot[w] = x;
    read_update[w] = trace.updates;
    const std::uint64_t job = jobs[w]++;
    if (trace.cyclic) {
      due_tick[w] = now_tick + ticks[w];
      due[w] = static_cast<double>(due_tick[w]) * tick;
    } else if (timing.is_fixed()) {
      due[w] = now + timing.taus[w];
    } else {
      RandomStream rng(options.seed, StreamPurpose::ComputeTime, static_cast<std::uint32_t>(w + 1), job);
      due[w] = now + rng.exponential(timing.taus[w]);
    }
  };
  for (std::size_t w = 0; w < n; ++w) start_job(w, 0.0, 0);

  const double interval = options.sample_interval > 0.0 ? options.sample_interval : trace.tau_max;
  SampleClock clock(interval, options.horizon, tick);
  long long next_sample = 0;

  auto cycle_of = [&](double t) { return static_cast<long long>(std::floor(t / trace.tau_max + 1e-9)); };
  auto diverge = [&](const std::string& why) {
    trace.status = "diverged";
    trace.message = why;
  };
  auto take_sample = [&](double t) {
    const double loss = metric.value(x);
    const double gsq = metric.gradient(x).squaredNorm();
    if (!std::isfinite(loss) || !std::isfinite(gsq)) {
      diverge("non-finite loss at t=" + std::to_string(t));
      return;
    }
    trace.samples.push_back({t, loss, gsq, trace.cumulative_stepsize, cycle_of(t)});
  };
  auto flush_samples = [&](double before, bool inclusive) {
    while (!trace.diverged() && !clock.done(next_sample)) {
      const double s = clock.time(next_sample);
      if (inclusive ? s > before : s >= before) break;
      take_sample(s);
      ++next_sample;
    }
  };

  while (!trace.diverged()) {
    if (options.max_events > 0 && trace.event_count >= options.max_events) break;
    std::size_t w = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (due[j] < kNever && (w == n || due[j] < due[w])) w = j;
    }
    if (w == n || due[w] > options.horizon) break;
    const double now = due[w];
    flush_samples(now, false);
    if (trace.diverged()) break;

    const int worker = static_cast<int>(w + 1);
    GradientSample g;
    try {
      if (options.record_gradients) {
        g = oracle.sample_with_exact(worker, snapshot[w], jobs[w] - 1);
      } else {
        g.stochastic = oracle.sample(worker, snapshot[w], jobs[w] - 1);
      }
    } catch (const std::domain_error& e) {
      diverge(e.what());
      break;
    }
    if (!all_finite(g.stochastic)) {
      diverge("non-finite gradient");
      break;
    }

    const long long delay = trace.updates - read_update[w];
    const Decision d = strategy.on_arrival(Arrival{worker, g.stochastic, delay, now}, x);
    trace.updates += d.updates;
    trace.cumulative_stepsize += d.stepsize;

    if (options.record_events) {
      TraceEvent ev;
      ev.time = now;
      ev.worker = worker;
      ev.delay = delay;
      ev.stepsize = d.stepsize;
      ev.read_update = read_update[w];
      ev.updates_after = trace.updates;
      if (options.record_gradients) {
        ev.gradient = std::move(g.stochastic);
        ev.exact_gradient = std::move(g.exact);
      }
      trace.events.push_back(std::move(ev));
    }
    const std::size_t event_index = trace.event_count++;
    if (d.round_completed) trace.round_ends.push_back(now);
    if (d.gather_completed) trace.gather_ends.push_back(now);

    if (!all_finite(x)) {
      diverge("non-finite model at t=" + std::to_string(now));
      break;
    }
    if (d.updates > 0) {
      const bool boundary = trace.cycle_K > 0 && trace.updates % trace.cycle_K == 0;
      const bool strided = options.model_stride > 0 && trace.updates % options.model_stride == 0;
      if (boundary) trace.cycle_boundaries.push_back(event_index);
      if (boundary || strided) trace.models.insert_or_assign(trace.updates, x);
    }

    const long long now_tick = trace.cyclic ? due_tick[w] : 0;
    if (d.broadcast) {
      for (std::size_t j = 0; j < n; ++j) start_job(j, now, now_tick);
    } else if (d.worker_idles) {
      due[w] = kNever;
    } else {
      start_job(w, now, now_tick);
    }
    if (options.sample_every_event) take_sample(now);
  }
  if (!trace.diverged()) flush_samples(options.horizon, true);
  trace.final_model = x;
  return trace;
}

std::vector<DelayStats> measure_delays(const Trace& trace, double after_time) {
  if (trace.events.empty()) throw std::invalid_argument("empty trace");
  std::vector<DelayStats> stats(trace.n);
  std::vector<double> sums(trace.n, 0.0);
  for (std::size_t i = 0; i < trace.n; ++i) stats[i].worker = static_cast<int>(i + 1);
  for (const auto& ev : trace.events) {
    if (ev.time <= after_time) continue;
    auto& s = stats[static_cast<std::size_t>(ev.worker - 1)];
    if (s.count == 0) {
      s.min = s.max = ev.delay;
    } else {
      s.min = std::min(s.min, ev.delay);
      s.max = std::max(s.max, ev.delay);
    }
    ++s.count;
    sums[static_cast<std::size_t>(ev.worker - 1)] += static_cast<double>(ev.delay);
  }
  for (std::size_t i = 0; i < trace.n; ++i) {
    if (stats[i].count > 0) stats[i].mean = sums[i] / static_cast<double>(stats[i].count);
  }
  return stats;
}

std::vector<Vector> cycle_iterates(const Trace& trace, const CyclePlan& plan) {
  if (!trace.cyclic || trace.timing != TimingKind::Fixed) throw std::invalid_argument("cycles undefined");
  if (plan.K <= 0) throw std::invalid_argument("cycle plan has no updates");
  std::vector<Vector> out;
  for (long long u = 0; u <= trace.updates; u += plan.K) {
    const auto it = trace.models.find(u);
    if (it == trace.models.end()) {
      throw std::invalid_argument("model after " + std::to_string(u) + " updates was not recorded");
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace rasgd
