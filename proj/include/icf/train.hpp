#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icf/graph.hpp"
#include "icf/model.hpp"
#include "icf/tensor.hpp"
#include "icf/tokenize.hpp"

namespace icf {

// Per-coordinate loss masking: drop squared-error terms whose target point is
// padded or lies past the end of the example window. kNone keeps every term
// (diagnostics only).
enum class LossMaskPolicy { kPadsAndOverrun, kNone };

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t total_steps = 5000;
  double peak_lr = 5e-4;
  std::size_t warmup_steps = 500;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  LossMaskPolicy mask_policy = LossMaskPolicy::kPadsAndOverrun;
  std::size_t checkpoint_interval = 1000;

  void validate() const;
};

// Linear warmup to the peak, then inverse square-root decay; continuous at
// step == warmup.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

// Adam accumulators, shapes mirroring the parameter enumeration exactly.
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static OptimizerState init(const ModelParams& params);
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-9;

// Per-context targets for every non-separator token, in token order. A
// prediction row for patch j of example i is scored against window points
// [p*(j+1), p*(j+1)+h); weights[r][c] == 0 marks coordinates excluded by the
// mask policy (their target value is stored as 0).
struct LossTargets {
  RowMapPtr prediction_rows;  // token indices of non-separator tokens
  Tensor targets;             // rows x h
  Tensor weights;             // rows x h
};

LossTargets build_loss_targets(const Context& ctx, const ContextLayout& layout,
                               const ModelConfig& cfg, LossMaskPolicy policy);

// Mean over prediction rows of the masked squared-error norms. The row count
// equals the total patch count of the context.
double context_loss(const Tensor& predictions, const Tensor& targets, const Tensor& weights);

// Same loss as a graph node on top of a forward pass.
NodeId build_loss(Graph& g, const ForwardResult& fwd, const LossTargets& targets);

struct StepStats {
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // pre-clip global norm
};

// One optimizer step over a batch of (already standardized) contexts:
// per-context forward/backward run in parallel, gradients are reduced in
// batch order, then clipped and applied with Adam at the scheduled rate.
// Deterministic given params, batch and optimizer state. Throws on a
// non-finite loss, naming the step and the offending context.
StepStats train_step(const std::vector<Context>& batch, ModelParams& params, OptimizerState& opt,
                     const TrainConfig& tcfg, const ModelConfig& mcfg,
                     LayoutMode mode = LayoutMode::kTrain);

// ---- checkpoints ----------------------------------------------------------
// One file: a text manifest (format tag, endianness, config fields, tensor
// name/shape/byte-offset records), a "---" line, then the raw blob of
// little-endian 8-byte floats in manifest order.

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::string& path,
                     bool include_separator = true);

struct LoadedCheckpoint {
  ModelParams params;
  ModelConfig config;
  bool had_separator = false;  // false: separator was freshly initialized
};

// Round trips are bit-exact. A checkpoint without a separator tensor (a base
// model) loads fine: the separator is initialized fresh from sigma_seed.
// Any other missing tensor or shape mismatch is an error.
LoadedCheckpoint load_checkpoint(const std::string& path, std::uint64_t sigma_seed = 0);

void save_train_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                           const OptimizerState& opt, std::size_t step, const std::string& path);

struct LoadedTrainCheckpoint {
  ModelParams params;
  ModelConfig config;
  OptimizerState opt;
  std::size_t step = 0;
};

LoadedTrainCheckpoint load_train_checkpoint(const std::string& path);

// ---- training loop --------------------------------------------------------

struct TrainLoopConfig {
  ModelConfig model;
  TrainConfig train;
  LayoutMode mode = LayoutMode::kTrain;
  std::size_t start_step = 0;   // resume point; data/metrics pick up after it
  std::string metrics_path;     // CSV (step, lr, loss); empty disables
  std::string checkpoint_path;  // rolling train checkpoint; empty disables
};

// Deterministic context supply: slot b of step s must depend only on (s, b).
using ContextSource = std::function<Context(std::size_t step, std::size_t slot)>;

// Runs steps start_step+1 .. total_steps; returns the per-step losses.
std::vector<double> run_training(ModelParams& params, OptimizerState& opt,
                                 const TrainLoopConfig& cfg, const ContextSource& source);

}  // namespace icf
