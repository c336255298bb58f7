#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icf/series.hpp"
#include "icf/tokenize.hpp"

namespace icf {

struct Dataset {
  std::string name;
  Granularity granularity = Granularity::kSynthetic;
  bool eligible = true;  // excluded from context generation when false
  std::vector<TimeSeries> series;
};

struct DatasetRegistry {
  std::vector<Dataset> datasets;

  void add(Dataset d);
  const Dataset& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

// Start offsets (0-based) of all shift-1 windows of length window_len. A
// series shorter than the window yields one whole-series window that is
// padded downstream.
std::vector<std::size_t> enumerate_windows(const TimeSeries& series, std::size_t window_len);

std::size_t count_windows(const TimeSeries& series, std::size_t window_len);
std::size_t count_windows(const Dataset& dataset, std::size_t window_len);

enum class GroupingKind { kSeriesLevel, kDatasetLevel };

struct WindowRef {
  std::size_t series_index = 0;
  std::size_t start = 0;
  std::size_t length = 0;
};

// n resolvable window references within one dataset; the last reference is
// the forecast target. Series-level specs draw every window from one series,
// dataset-level specs from anywhere in the dataset.
struct ContextSpec {
  std::string dataset;
  GroupingKind kind = GroupingKind::kSeriesLevel;
  std::vector<WindowRef> windows;
};

// `count` == 0 requests the default of 20 * (total windows in the dataset).
// Windows are drawn uniformly with replacement; deterministic in seed.
std::vector<ContextSpec> sample_contexts(const DatasetRegistry& registry,
                                         const std::string& dataset, std::size_t n,
                                         std::size_t count, GroupingKind kind, std::uint64_t seed,
                                         std::size_t window_len);

struct MixtureWeights {
  double synthetic = 0.1;  // remaining mass splits equally over real groups
};

struct SamplerParams {
  std::size_t window_len = 80;
  std::size_t n_min = 1;
  std::size_t n_max = 8;
  MixtureWeights weights;
};

// Infinite deterministic stream of context specs. Draw i depends only on
// (seed, i), so the stream can be resumed or consumed out of order. Long-run
// frequencies: `synthetic` mass on the synthetic pool, the rest split equally
// across non-empty real granularity groups; within any group the two grouping
// kinds are 50/50 and datasets are uniform.
class MixtureSampler {
 public:
  MixtureSampler(const DatasetRegistry& registry, SamplerParams params, std::uint64_t seed);

  ContextSpec at(std::uint64_t index) const;
  ContextSpec next() { return at(cursor_++); }
  void seek(std::uint64_t index) { cursor_ = index; }

 private:
  const DatasetRegistry& registry_;
  SamplerParams params_;
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> real_groups_;  // dataset indices per non-empty group
  std::vector<std::size_t> synthetic_group_;
};

// Resolves a spec into example windows, pads them, and (by default)
// standardizes the context by its target's statistics.
Context materialize_context(const DatasetRegistry& registry, const ContextSpec& spec,
                            std::size_t patch_len, std::size_t capacity, bool standardize = true);

// ---- file formats -----------------------------------------------------------

// csv: one series per column, header row carries the ids, time runs down the
// rows; trailing empty cells mark shorter series. jsonl: one object per line
// with fields id, granularity, values.
std::vector<TimeSeries> load_series(const std::string& path, const std::string& format);
void save_series(const std::string& path, const std::string& format,
                 const std::vector<TimeSeries>& series);

// Registry manifest: '#' comments, one dataset per line,
//   <name> <path> <csv|jsonl> <granularity> <eligible>
// with paths resolved relative to the manifest file.
DatasetRegistry load_registry(const std::string& manifest_path);

}  // namespace icf
