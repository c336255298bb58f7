#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icf/graph.hpp"
#include "icf/tensor.hpp"
#include "icf/tokenize.hpp"

namespace icf {

struct ModelConfig {
  std::size_t patch_len = 8;         // input patch length
  std::size_t output_patch_len = 16; // points predicted per token
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_ff = 64;             // hidden width of FFN and residual blocks
  std::size_t max_example_len = 80;  // capacity of one example window
  std::size_t max_examples = 16;     // examples per context, target included
  std::string activation = "relu";   // relu | gelu

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

// All learnable state. The separator embedding is a single shared vector
// used at every separator slot; there is no positional table of any kind.
struct ModelParams {
  Tensor in_w1, in_b1, in_w2, in_b2, in_skip;  // patch -> d_model residual block
  std::vector<LayerParams> layers;
  Tensor final_ln_gain, final_ln_bias;
  Tensor out_w1, out_b1, out_w2, out_b2, out_skip;  // d_model -> h residual block
  Tensor separator;  // 1 x d_model

  // Visits every tensor in a fixed order (separator last, so checkpoints of
  // separator-free base models are a prefix of this enumeration).
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t total_entries() const;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
Tensor init_separator(const ModelConfig& cfg, std::uint64_t seed);

// Expected shape of every named tensor under cfg, in enumeration order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> param_spec(const ModelConfig& cfg);

// Token k may be attended by token q iff k <= q and token k is
// attention-eligible. Eligibility never gates the query: masked tokens still
// produce outputs, they are just invisible to everyone else.
MaskPtr build_attention_mask(const ContextLayout& layout);

// Node handles for one set of parameters bound into a graph.
struct ParamNodes {
  NodeId in_w1, in_b1, in_w2, in_b2, in_skip;
  struct Layer {
    NodeId ln1_gain, ln1_bias;
    NodeId wq, bq, wk, bk, wv, bv, wo, bo;
    NodeId ln2_gain, ln2_bias;
    NodeId ff_w1, ff_b1, ff_w2, ff_b2;
  };
  std::vector<Layer> layers;
  NodeId final_ln_gain, final_ln_bias;
  NodeId out_w1, out_b1, out_w2, out_b2, out_skip;
  NodeId separator;
};

ParamNodes bind_params(Graph& g, const ModelParams& params, bool trainable);

// Collects grad(...) for every bound parameter into a flat list matching the
// for_each enumeration order.
std::vector<Tensor> collect_param_grads(const Graph& g, const ParamNodes& nodes,
                                        const ModelConfig& cfg);

struct ForwardResult {
  ContextLayout layout;
  NodeId predictions = -1;  // token_count x output_patch_len
};

// Builds the whole differentiable forward pass on g: patching, padding-aware
// embedding, separator insertion, the stacked pre-norm transformer with the
// causal eligibility mask, and the output head mapping every token to its
// next output_patch_len points.
ForwardResult build_forward(Graph& g, const Context& ctx, const ParamNodes& nodes,
                            const ModelConfig& cfg, LayoutMode mode);

// Convenience wrapper: runs the forward pass and returns the per-token
// prediction matrix.
Tensor forward(const Context& ctx, const ModelParams& params, const ModelConfig& cfg,
               LayoutMode mode, ContextLayout* layout_out = nullptr);

// Embedding stage alone (padding-zeroed patches through the input residual
// block, separator slots filled with the shared embedding).
Tensor embed_tokens(const std::vector<PatchGrid>& grids, const ContextLayout& layout,
                    const ModelParams& params, const ModelConfig& cfg);

struct Forecast {
  std::vector<double> values;
  std::vector<std::int32_t> round;  // which autoregressive pass produced each point
};

// Maps a history (and optional in-context example windows) to `horizon`
// future points. Inputs are standardized by the history's statistics, the
// model is applied autoregressively in output-patch steps with predictions
// fed back as real history, and the result is mapped back to the input
// scale.
Forecast forecast(const std::vector<double>& history, const std::vector<ExampleWindow>& examples,
                  std::size_t horizon, const ModelParams& params, const ModelConfig& cfg);

// Windows a raw series into an example: keeps the most recent
// cfg.max_example_len points and pads.
ExampleWindow make_example(const std::vector<double>& series, const ModelConfig& cfg);

}  // namespace icf
