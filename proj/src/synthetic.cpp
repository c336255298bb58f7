#include "icf/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "icf/rng.hpp"

namespace icf {

Family family_from_string(const std::string& s) {
  if (s == "linear-trend") return Family::kLinearTrend;
  if (s == "triangle-wave") return Family::kTriangleWave;
  if (s == "sinusoid") return Family::kSinusoid;
  if (s == "trend-seasonal") return Family::kTrendSeasonal;
  if (s == "piecewise") return Family::kPiecewise;
  if (s == "arma-noise") return Family::kArmaNoise;
  throw std::invalid_argument("unknown synthetic family '" + s + "'");
}

const char* family_to_string(Family f) {
  switch (f) {
    case Family::kLinearTrend: return "linear-trend";
    case Family::kTriangleWave: return "triangle-wave";
    case Family::kSinusoid: return "sinusoid";
    case Family::kTrendSeasonal: return "trend-seasonal";
    case Family::kPiecewise: return "piecewise";
    case Family::kArmaNoise: return "arma-noise";
  }
  return "linear-trend";
}

std::vector<Family> all_families() {
  return {Family::kLinearTrend, Family::kTriangleWave, Family::kSinusoid, Family::kTrendSeasonal,
          Family::kPiecewise,   Family::kArmaNoise};
}

void SyntheticSpec::validate() const {
  if (length == 0) throw std::invalid_argument("synthetic spec: zero length");
  if (noise_std < 0.0) throw std::invalid_argument("synthetic spec: negative noise std");
  const bool periodic = family == Family::kTriangleWave || family == Family::kSinusoid ||
                        family == Family::kTrendSeasonal || family == Family::kPiecewise;
  if (periodic && period < 2.0) {
    throw std::invalid_argument("synthetic spec: periodic family needs period >= 2");
  }
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Symmetric triangle: 0 at x=0, +amplitude at period/4, -amplitude at
// 3*period/4.
double triangle_at(double x, double period, double amplitude) {
  double u = std::fmod(x, period) / period;
  if (u < 0.0) u += 1.0;
  if (u < 0.25) return amplitude * 4.0 * u;
  if (u < 0.75) return amplitude * (2.0 - 4.0 * u);
  return amplitude * (4.0 * u - 4.0);
}

}  // namespace

TimeSeries generate(const SyntheticSpec& spec) {
  spec.validate();
  TimeSeries ts;
  ts.granularity = Granularity::kSynthetic;
  ts.values.resize(spec.length);

  Rng noise_rng = Rng::substream(spec.seed, "synthetic-noise");
  Rng shape_rng = Rng::substream(spec.seed, "synthetic-shape");

  switch (spec.family) {
    case Family::kLinearTrend: {
      for (std::size_t i = 0; i < spec.length; ++i) {
        ts.values[i] = spec.intercept + spec.slope * static_cast<double>(i + 1);
      }
      break;
    }
    case Family::kTriangleWave: {
      for (std::size_t i = 0; i < spec.length; ++i) {
        ts.values[i] =
            spec.intercept + triangle_at(static_cast<double>(i) + spec.phase, spec.period,
                                         spec.amplitude);
      }
      break;
    }
    case Family::kSinusoid: {
      for (std::size_t i = 0; i < spec.length; ++i) {
        double angle = kTwoPi * (static_cast<double>(i) + spec.phase) / spec.period;
        ts.values[i] = spec.intercept + spec.amplitude * std::sin(angle);
      }
      break;
    }
    case Family::kTrendSeasonal: {
      for (std::size_t i = 0; i < spec.length; ++i) {
        double angle = kTwoPi * (static_cast<double>(i) + spec.phase) / spec.period;
        ts.values[i] = spec.intercept + spec.slope * static_cast<double>(i + 1) +
                       spec.amplitude * std::sin(angle);
      }
      break;
    }
    case Family::kPiecewise: {
      // A cyclic pattern of 3..5 knots, linearly interpolated across one
      // period and tiled.
      std::size_t knots = 3 + shape_rng.uniform_index(3);
      std::vector<double> level(knots);
      for (double& v : level) v = shape_rng.uniform(-spec.amplitude, spec.amplitude);
      for (std::size_t i = 0; i < spec.length; ++i) {
        double u = std::fmod(static_cast<double>(i) + spec.phase, spec.period) / spec.period;
        if (u < 0.0) u += 1.0;
        double pos = u * static_cast<double>(knots);
        std::size_t k0 = static_cast<std::size_t>(pos) % knots;
        std::size_t k1 = (k0 + 1) % knots;
        double frac = pos - std::floor(pos);
        ts.values[i] = spec.intercept + level[k0] + (level[k1] - level[k0]) * frac;
      }
      break;
    }
    case Family::kArmaNoise: {
      double phi = shape_rng.uniform(0.5, 0.95);
      double theta = shape_rng.uniform(-0.5, 0.5);
      double prev_y = 0.0, prev_e = 0.0;
      for (std::size_t i = 0; i < spec.length; ++i) {
        double e = noise_rng.normal(0.0, spec.amplitude);
        double y = phi * prev_y + e + theta * prev_e;
        ts.values[i] = spec.intercept + y;
        prev_y = y;
        prev_e = e;
      }
      break;
    }
  }

  if (spec.noise_std > 0.0) {
    for (double& v : ts.values) v += noise_rng.normal(0.0, spec.noise_std);
  }
  return ts;
}

SyntheticSpec sample_spec(Family family, std::size_t length, const FamilyRanges& ranges,
                          std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "spec-sample");
  SyntheticSpec spec;
  spec.family = family;
  spec.length = length;
  spec.seed = rng.next_u64();
  spec.slope = rng.log_uniform(ranges.slope_min, ranges.slope_max);
  if (rng.bernoulli(0.5)) spec.slope = -spec.slope;
  spec.intercept = rng.uniform(-2.0, 2.0);
  spec.amplitude = rng.log_uniform(ranges.amp_min, ranges.amp_max);
  spec.period = rng.log_uniform(ranges.period_min, ranges.period_max);
  spec.phase = rng.uniform(0.0, spec.period);
  spec.noise_std = spec.amplitude * rng.uniform(ranges.noise_frac_min, ranges.noise_frac_max);
  return spec;
}

std::vector<TimeSeries> generate_family_pool(Family family, std::size_t count, std::size_t length,
                                             const FamilyRanges& ranges, std::uint64_t seed,
                                             double short_fraction) {
  std::vector<TimeSeries> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng pick = Rng::substream(seed, "pool-length", i);
    std::size_t len = length;
    if (pick.uniform01() < short_fraction) {
      len = 4 + pick.uniform_index(57);  // 4..60, exercises the padding path
    }
    SyntheticSpec spec = sample_spec(family, len, ranges, Rng::derive_seed(seed, "pool-spec", i));
    TimeSeries ts = generate(spec);
    ts.id = std::string(family_to_string(family)) + "-" + std::to_string(i);
    pool.push_back(std::move(ts));
  }
  return pool;
}

// ---- disambiguation tasks --------------------------------------------------

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "trend-vs-triangle") return TaskKind::kTrendVsTriangle;
  if (s == "trend-vs-seasonality") return TaskKind::kTrendVsSeasonality;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

const char* task_kind_to_string(TaskKind k) {
  return k == TaskKind::kTrendVsTriangle ? "trend-vs-triangle" : "trend-vs-seasonality";
}

std::vector<ExampleWindow> DisambiguationTask::example_prefix(std::size_t k) const {
  if (k > examples.size()) {
    throw std::invalid_argument("task holds only " + std::to_string(examples.size()) +
                                " examples, requested " + std::to_string(k));
  }
  return std::vector<ExampleWindow>(examples.begin(), examples.begin() + k);
}

DisambiguationTask make_disambiguation_task(TaskKind kind, std::size_t n_examples,
                                            std::uint64_t seed,
                                            const DisambiguationParams& p) {
  if (p.history_len < 2 || p.horizon == 0) {
    throw std::invalid_argument("disambiguation task: history_len >= 2 and horizon >= 1 required");
  }
  const double ell = static_cast<double>(p.history_len);
  const double period = 2.0 * ell;        // ascent spans exactly the history
  Rng rng = Rng::substream(seed, "task");
  const double a = rng.uniform(p.slope_min, p.slope_max);
  const double base = rng.uniform(-5.0, 5.0);
  const double amplitude = a * ell / 2.0;
  const bool truth_is_trend = rng.bernoulli(0.5);
  const double peak_value = base + a * ell;

  DisambiguationTask task;
  task.kind = kind;
  task.truth_is_trend = truth_is_trend;

  // History rises to a peak at its last point. For trend-vs-triangle the ramp
  // is exactly the triangle's ascending edge; for trend-vs-seasonality the
  // seasonal truth produces the sine's trough-to-peak sweep instead.
  const bool sine_history = (kind == TaskKind::kTrendVsSeasonality) && !truth_is_trend;
  task.history.resize(p.history_len);
  for (std::size_t t = 0; t < p.history_len; ++t) {
    if (sine_history) {
      double x = static_cast<double>(t) - (ell - 1.0);  // peak at x = 0
      double angle = 1.5707963267948966 + kTwoPi * x / period;
      task.history[t] = (peak_value - amplitude) + amplitude * std::sin(angle);
    } else {
      task.history[t] = base + a * static_cast<double>(t + 1);
    }
  }

  auto trend_cont = [&](std::size_t t) { return peak_value + a * static_cast<double>(t + 1); };
  auto triangle_cont = [&](std::size_t t) { return peak_value - a * static_cast<double>(t + 1); };
  auto sine_cont = [&](std::size_t t) {
    double angle = 1.5707963267948966 + kTwoPi * static_cast<double>(t + 1) / period;
    return (peak_value - amplitude) + amplitude * std::sin(angle);
  };

  task.continuation_true.resize(p.horizon);
  task.continuation_other.resize(p.horizon);
  for (std::size_t t = 0; t < p.horizon; ++t) {
    double down = kind == TaskKind::kTrendVsTriangle ? triangle_cont(t) : sine_cont(t);
    task.continuation_true[t] = truth_is_trend ? trend_cont(t) : down;
    task.continuation_other[t] = truth_is_trend ? down : trend_cont(t);
  }

  // Examples come from the true family with the same shape parameters and
  // random phases/levels, like windows cut from one long related series.
  for (std::size_t i = 0; i < n_examples; ++i) {
    Rng erng = Rng::substream(seed, "task-example", i);
    SyntheticSpec spec;
    spec.length = p.example_len;
    spec.seed = erng.next_u64();
    spec.noise_std = p.noise_std;
    spec.intercept = base + erng.uniform(-2.0 * amplitude, 2.0 * amplitude);
    if (truth_is_trend) {
      spec.family = Family::kLinearTrend;
      spec.slope = a;
    } else {
      spec.family = kind == TaskKind::kTrendVsTriangle ? Family::kTriangleWave : Family::kSinusoid;
      spec.amplitude = amplitude;
      spec.period = period;
      spec.phase = erng.uniform(0.0, period);
    }
    TimeSeries ts = generate(spec);
    task.examples.push_back(pad_example(ts.values, p.patch_len, p.example_len));
  }
  return task;
}

std::vector<DisambiguationTask> make_task_suite(TaskKind kind, std::size_t count,
                                                std::size_t n_examples, std::uint64_t seed,
                                                const DisambiguationParams& params) {
  std::vector<DisambiguationTask> suite;
  suite.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    suite.push_back(make_disambiguation_task(
        kind, n_examples, Rng::derive_seed(seed, task_kind_to_string(kind), i), params));
  }
  return suite;
}

std::vector<TimeSeries> task_to_series(const DisambiguationTask& task, const std::string& prefix) {
  std::vector<TimeSeries> out;
  auto push = [&](const std::string& suffix, std::vector<double> values) {
    TimeSeries ts;
    ts.id = prefix + "." + suffix;
    ts.granularity = Granularity::kSynthetic;
    ts.values = std::move(values);
    out.push_back(std::move(ts));
  };
  push("history", task.history);
  push(task.truth_is_trend ? "truth-trend" : "truth-periodic", task.continuation_true);
  push("other", task.continuation_other);
  for (std::size_t i = 0; i < task.examples.size(); ++i) {
    push("example" + std::to_string(i), task.examples[i].real_values());
  }
  return out;
}

}  // namespace icf
