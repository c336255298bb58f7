#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icf/series.hpp"
#include "icf/tokenize.hpp"

namespace icf {

enum class Family {
  kLinearTrend,
  kTriangleWave,
  kSinusoid,
  kTrendSeasonal,
  kPiecewise,   // repeating piecewise-linear pattern
  kArmaNoise,   // ARMA(1,1) driven noise
};

Family family_from_string(const std::string& s);
const char* family_to_string(Family f);
std::vector<Family> all_families();

// Concrete generator parameters. Everything is a pure function of the spec,
// including the noise, so the same spec always yields the same series.
struct SyntheticSpec {
  Family family = Family::kLinearTrend;
  std::size_t length = 400;
  std::uint64_t seed = 0;

  double slope = 0.1;      // per-step, trend families
  double intercept = 0.0;
  double amplitude = 1.0;  // periodic families and noise scale
  double period = 16.0;    // >= 2 for periodic families
  double phase = 0.0;      // offset in steps
  double noise_std = 0.0;  // additive Gaussian, absolute units

  void validate() const;
};

TimeSeries generate(const SyntheticSpec& spec);

// Parameter ranges for sampling training pools; the positive quantities are
// drawn log-uniform.
struct FamilyRanges {
  double slope_min = 0.02, slope_max = 0.5;
  double amp_min = 0.5, amp_max = 2.0;
  double period_min = 8.0, period_max = 72.0;
  double noise_frac_min = 0.0, noise_frac_max = 0.05;  // fraction of amplitude
};

SyntheticSpec sample_spec(Family family, std::size_t length, const FamilyRanges& ranges,
                          std::uint64_t seed);

// `count` series of one family; a short_fraction of them get lengths in
// [4, 60] so padded examples show up in training.
std::vector<TimeSeries> generate_family_pool(Family family, std::size_t count, std::size_t length,
                                             const FamilyRanges& ranges, std::uint64_t seed,
                                             double short_fraction = 0.1);

// ---- disambiguation tasks --------------------------------------------------
// A history that reads as a rising trend but is equally (trend-vs-triangle)
// or plausibly (trend-vs-seasonality) the ascent of a periodic pattern ending
// at its peak. The continuations of the two hypotheses then diverge hard, and
// only the in-context examples reveal which family generated the data.

enum class TaskKind { kTrendVsTriangle, kTrendVsSeasonality };

TaskKind task_kind_from_string(const std::string& s);
const char* task_kind_to_string(TaskKind k);

struct DisambiguationParams {
  std::size_t history_len = 32;
  std::size_t horizon = 16;
  std::size_t example_len = 80;  // full windows, no padding needed
  std::size_t patch_len = 8;
  double slope_min = 0.5, slope_max = 2.0;
  double noise_std = 0.0;  // applied to the examples only
};

struct DisambiguationTask {
  TaskKind kind = TaskKind::kTrendVsTriangle;
  bool truth_is_trend = false;
  std::vector<double> history;
  std::vector<double> continuation_true;   // ground truth horizon
  std::vector<double> continuation_other;  // the competing hypothesis
  std::vector<ExampleWindow> examples;     // drawn from the true family

  // Evaluating with a k-example prefix against the zero-example baseline uses
  // the same history and ground truth, which is the whole point.
  std::vector<ExampleWindow> example_prefix(std::size_t k) const;
};

DisambiguationTask make_disambiguation_task(TaskKind kind, std::size_t n_examples,
                                            std::uint64_t seed,
                                            const DisambiguationParams& params = {});

std::vector<DisambiguationTask> make_task_suite(TaskKind kind, std::size_t count,
                                                std::size_t n_examples, std::uint64_t seed,
                                                const DisambiguationParams& params = {});

// Flattens a task into inspectable series (history, both continuations, the
// examples) for the JSONL format.
std::vector<TimeSeries> task_to_series(const DisambiguationTask& task, const std::string& prefix);

}  // namespace icf
