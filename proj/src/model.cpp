#include "icf/model.hpp"

#include <cmath>
#include <stdexcept>

#include "icf/rng.hpp"

namespace icf {

void ModelConfig::validate() const {
  if (patch_len == 0) throw std::invalid_argument("model config: patch_len must be >= 1");
  if (output_patch_len == 0) {
    throw std::invalid_argument("model config: output_patch_len must be >= 1");
  }
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0) {
    throw std::invalid_argument("model config: zero-sized dimension");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (patch_len >= max_example_len) {
    throw std::invalid_argument("model config: patch_len must be smaller than max_example_len");
  }
  if (max_examples == 0) throw std::invalid_argument("model config: max_examples must be >= 1");
  if (activation != "relu" && activation != "gelu") {
    throw std::invalid_argument("model config: unknown activation '" + activation + "'");
  }
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> param_spec(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> spec;
  const std::size_t p = cfg.patch_len, h = cfg.output_patch_len, d = cfg.d_model, f = cfg.d_ff;
  spec.push_back({"in.w1", {p, f}});
  spec.push_back({"in.b1", {1, f}});
  spec.push_back({"in.w2", {f, d}});
  spec.push_back({"in.b2", {1, d}});
  spec.push_back({"in.skip", {p, d}});
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    std::string base = "layer" + std::to_string(l) + ".";
    spec.push_back({base + "ln1.gain", {1, d}});
    spec.push_back({base + "ln1.bias", {1, d}});
    spec.push_back({base + "wq", {d, d}});
    spec.push_back({base + "bq", {1, d}});
    spec.push_back({base + "wk", {d, d}});
    spec.push_back({base + "bk", {1, d}});
    spec.push_back({base + "wv", {d, d}});
    spec.push_back({base + "bv", {1, d}});
    spec.push_back({base + "wo", {d, d}});
    spec.push_back({base + "bo", {1, d}});
    spec.push_back({base + "ln2.gain", {1, d}});
    spec.push_back({base + "ln2.bias", {1, d}});
    spec.push_back({base + "ff.w1", {d, f}});
    spec.push_back({base + "ff.b1", {1, f}});
    spec.push_back({base + "ff.w2", {f, d}});
    spec.push_back({base + "ff.b2", {1, d}});
  }
  spec.push_back({"final_ln.gain", {1, d}});
  spec.push_back({"final_ln.bias", {1, d}});
  spec.push_back({"out.w1", {d, f}});
  spec.push_back({"out.b1", {1, f}});
  spec.push_back({"out.w2", {f, h}});
  spec.push_back({"out.b2", {1, h}});
  spec.push_back({"out.skip", {d, h}});
  spec.push_back({"separator", {1, d}});
  return spec;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("in.w1", in_w1);
  fn("in.b1", in_b1);
  fn("in.w2", in_w2);
  fn("in.b2", in_b2);
  fn("in.skip", in_skip);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::string base = "layer" + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    fn(base + "ln1.gain", lp.ln1_gain);
    fn(base + "ln1.bias", lp.ln1_bias);
    fn(base + "wq", lp.wq);
    fn(base + "bq", lp.bq);
    fn(base + "wk", lp.wk);
    fn(base + "bk", lp.bk);
    fn(base + "wv", lp.wv);
    fn(base + "bv", lp.bv);
    fn(base + "wo", lp.wo);
    fn(base + "bo", lp.bo);
    fn(base + "ln2.gain", lp.ln2_gain);
    fn(base + "ln2.bias", lp.ln2_bias);
    fn(base + "ff.w1", lp.ff_w1);
    fn(base + "ff.b1", lp.ff_b1);
    fn(base + "ff.w2", lp.ff_w2);
    fn(base + "ff.b2", lp.ff_b2);
  }
  fn("final_ln.gain", final_ln_gain);
  fn("final_ln.bias", final_ln_bias);
  fn("out.w1", out_w1);
  fn("out.b1", out_b1);
  fn("out.w2", out_w2);
  fn("out.b2", out_b2);
  fn("out.skip", out_skip);
  fn("separator", separator);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t ModelParams::total_entries() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

namespace {

Tensor init_weight(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.truncated_normal(0.02);
  return t;
}

bool is_weight_name(const std::string& name) {
  // gains start at one, every bias at zero, everything else is a projection
  if (name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0) return false;
  if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) return false;
  auto base = name.substr(name.rfind('.') + 1);
  return !(base.size() >= 1 && base[0] == 'b');
}

bool is_gain_name(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams params;
  params.layers.resize(cfg.n_layers);
  Rng rng = Rng::substream(seed, "param-init");
  std::size_t index = 0;
  auto spec = param_spec(cfg);
  params.for_each([&](const std::string& name, Tensor& t) {
    if (spec[index].first != name) throw std::logic_error("param enumeration out of sync");
    if (name == "separator") {
      t = init_separator(cfg, seed);
    } else if (is_gain_name(name)) {
      t = Tensor::full(spec[index].second, 1.0);
    } else if (is_weight_name(name)) {
      t = init_weight(spec[index].second, rng);
    } else {
      t = Tensor::zeros(spec[index].second);
    }
    ++index;
  });
  return params;
}

Tensor init_separator(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "separator-init");
  Tensor t({1, cfg.d_model});
  for (double& v : t.data) v = rng.truncated_normal(0.02);
  return t;
}

MaskPtr build_attention_mask(const ContextLayout& layout) {
  const std::size_t n = layout.token_count();
  auto mask = std::make_shared<std::vector<std::uint8_t>>(n * n, 0);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = 0; k <= q; ++k) {
      (*mask)[q * n + k] = layout.eligible[k];
    }
  }
  return mask;
}

ParamNodes bind_params(Graph& g, const ModelParams& params, bool trainable) {
  ParamNodes n;
  n.in_w1 = g.leaf(params.in_w1, trainable);
  n.in_b1 = g.leaf(params.in_b1, trainable);
  n.in_w2 = g.leaf(params.in_w2, trainable);
  n.in_b2 = g.leaf(params.in_b2, trainable);
  n.in_skip = g.leaf(params.in_skip, trainable);
  for (const LayerParams& lp : params.layers) {
    ParamNodes::Layer ln;
    ln.ln1_gain = g.leaf(lp.ln1_gain, trainable);
    ln.ln1_bias = g.leaf(lp.ln1_bias, trainable);
    ln.wq = g.leaf(lp.wq, trainable);
    ln.bq = g.leaf(lp.bq, trainable);
    ln.wk = g.leaf(lp.wk, trainable);
    ln.bk = g.leaf(lp.bk, trainable);
    ln.wv = g.leaf(lp.wv, trainable);
    ln.bv = g.leaf(lp.bv, trainable);
    ln.wo = g.leaf(lp.wo, trainable);
    ln.bo = g.leaf(lp.bo, trainable);
    ln.ln2_gain = g.leaf(lp.ln2_gain, trainable);
    ln.ln2_bias = g.leaf(lp.ln2_bias, trainable);
    ln.ff_w1 = g.leaf(lp.ff_w1, trainable);
    ln.ff_b1 = g.leaf(lp.ff_b1, trainable);
    ln.ff_w2 = g.leaf(lp.ff_w2, trainable);
    ln.ff_b2 = g.leaf(lp.ff_b2, trainable);
    n.layers.push_back(ln);
  }
  n.final_ln_gain = g.leaf(params.final_ln_gain, trainable);
  n.final_ln_bias = g.leaf(params.final_ln_bias, trainable);
  n.out_w1 = g.leaf(params.out_w1, trainable);
  n.out_b1 = g.leaf(params.out_b1, trainable);
  n.out_w2 = g.leaf(params.out_w2, trainable);
  n.out_b2 = g.leaf(params.out_b2, trainable);
  n.out_skip = g.leaf(params.out_skip, trainable);
  n.separator = g.leaf(params.separator, trainable);
  return n;
}

std::vector<Tensor> collect_param_grads(const Graph& g, const ParamNodes& nodes,
                                        const ModelConfig& cfg) {
  std::vector<Tensor> grads;
  std::vector<NodeId> ids = {nodes.in_w1, nodes.in_b1, nodes.in_w2, nodes.in_b2, nodes.in_skip};
  for (const ParamNodes::Layer& l : nodes.layers) {
    for (NodeId id : {l.ln1_gain, l.ln1_bias, l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo,
                      l.ln2_gain, l.ln2_bias, l.ff_w1, l.ff_b1, l.ff_w2, l.ff_b2}) {
      ids.push_back(id);
    }
  }
  for (NodeId id : {nodes.final_ln_gain, nodes.final_ln_bias, nodes.out_w1, nodes.out_b1,
                    nodes.out_w2, nodes.out_b2, nodes.out_skip, nodes.separator}) {
    ids.push_back(id);
  }
  (void)cfg;
  grads.reserve(ids.size());
  for (NodeId id : ids) grads.push_back(g.grad(id));
  return grads;
}

namespace {

NodeId apply_activation(Graph& g, NodeId x, const ModelConfig& cfg) {
  return cfg.activation == "gelu" ? g.gelu(x) : g.relu(x);
}

// hidden = act(x W1 + b1); out = hidden W2 + b2 + x Wskip
NodeId residual_block(Graph& g, NodeId x, NodeId w1, NodeId b1, NodeId w2, NodeId b2, NodeId skip,
                      const ModelConfig& cfg) {
  NodeId hidden = apply_activation(g, g.add_rowvec(g.matmul(x, w1), b1), cfg);
  NodeId main = g.add_rowvec(g.matmul(hidden, w2), b2);
  return g.add(main, g.matmul(x, skip));
}

struct StackedInputs {
  NodeId tokens;  // token_count x d_model
  MaskPtr attn_mask;
};

NodeId build_embedding(Graph& g, const std::vector<PatchGrid>& grids, const ContextLayout& layout,
                       const ParamNodes& nodes, const ModelConfig& cfg) {
  std::size_t total_patches = 0;
  for (const PatchGrid& grid : grids) total_patches += grid.num_patches;

  Tensor patch_values({total_patches, cfg.patch_len});
  auto padded = std::make_shared<std::vector<std::uint8_t>>();
  padded->reserve(total_patches * cfg.patch_len);
  std::size_t row = 0;
  for (const PatchGrid& grid : grids) {
    if (grid.patch_len != cfg.patch_len) {
      throw std::invalid_argument("embed_tokens: patch grid length does not match config");
    }
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
      patch_values.data[row * cfg.patch_len + i] = grid.values[i];
    }
    padded->insert(padded->end(), grid.masks.begin(), grid.masks.end());
    row += grid.num_patches;
  }

  // token t draws from patch row map[t], separators (-1) from the shared
  // embedding
  auto map = std::make_shared<std::vector<std::int64_t>>(layout.token_count(), -1);
  std::vector<std::size_t> first_row(grids.size(), 0);
  for (std::size_t i = 1; i < grids.size(); ++i) {
    first_row[i] = first_row[i - 1] + grids[i - 1].num_patches;
  }
  for (std::size_t t = 0; t < layout.token_count(); ++t) {
    const ContextLayout::Token& tok = layout.tokens[t];
    if (tok.patch < 0) continue;
    if (static_cast<std::size_t>(tok.example) >= grids.size() ||
        static_cast<std::size_t>(tok.patch) >= grids[tok.example].num_patches) {
      throw std::invalid_argument("embed_tokens: layout references a patch outside the grids");
    }
    (*map)[t] = static_cast<std::int64_t>(first_row[tok.example] +
                                          static_cast<std::size_t>(tok.patch));
  }

  NodeId raw = g.leaf(std::move(patch_values), false);
  NodeId zeroed = g.select_unpadded(raw, padded);
  NodeId embedded =
      residual_block(g, zeroed, nodes.in_w1, nodes.in_b1, nodes.in_w2, nodes.in_b2, nodes.in_skip,
                     cfg);
  return g.assemble_tokens(embedded, nodes.separator, map);
}

NodeId attention(Graph& g, NodeId x, const ParamNodes::Layer& l, const MaskPtr& mask,
                 const ModelConfig& cfg) {
  NodeId q = g.add_rowvec(g.matmul(x, l.wq), l.bq);
  NodeId k = g.add_rowvec(g.matmul(x, l.wk), l.bk);
  NodeId v = g.add_rowvec(g.matmul(x, l.wv), l.bv);
  const std::size_t hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<NodeId> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t hidx = 0; hidx < cfg.n_heads; ++hidx) {
    NodeId qh = g.slice_cols(q, hidx * hd, hd);
    NodeId kh = g.slice_cols(k, hidx * hd, hd);
    NodeId vh = g.slice_cols(v, hidx * hd, hd);
    NodeId scores = g.scale(g.matmul_nt(qh, kh), scale);
    NodeId weights = g.softmax_masked(scores, mask);
    heads.push_back(g.mix_masked(weights, vh, mask));
  }
  NodeId merged = cfg.n_heads == 1 ? heads[0] : g.concat_cols(heads);
  return g.add_rowvec(g.matmul(merged, l.wo), l.bo);
}

}  // namespace

ForwardResult build_forward(Graph& g, const Context& ctx, const ParamNodes& nodes,
                            const ModelConfig& cfg, LayoutMode mode) {
  cfg.validate();
  if (ctx.examples.empty()) throw std::invalid_argument("forward: empty context");
  if (ctx.examples.size() > cfg.max_examples) {
    throw std::invalid_argument("forward: context has " + std::to_string(ctx.examples.size()) +
                                " examples, capacity is " + std::to_string(cfg.max_examples));
  }
  const std::size_t cap =
      (cfg.max_example_len + cfg.patch_len - 1) / cfg.patch_len * cfg.patch_len;
  for (const ExampleWindow& w : ctx.examples) {
    if (w.length() > cap) {
      throw std::invalid_argument("forward: example window of length " +
                                  std::to_string(w.length()) + " exceeds capacity " +
                                  std::to_string(cap));
    }
  }

  ForwardResult result;
  result.layout = layout_context(ctx.examples, cfg.patch_len, mode);

  std::vector<PatchGrid> grids;
  grids.reserve(ctx.examples.size());
  for (const ExampleWindow& w : ctx.examples) grids.push_back(patchify(w, cfg.patch_len));

  NodeId x = build_embedding(g, grids, result.layout, nodes, cfg);
  MaskPtr mask = build_attention_mask(result.layout);

  for (const ParamNodes::Layer& l : nodes.layers) {
    NodeId normed = g.layer_norm(x, l.ln1_gain, l.ln1_bias);
    x = g.add(x, attention(g, normed, l, mask, cfg));
    NodeId normed2 = g.layer_norm(x, l.ln2_gain, l.ln2_bias);
    NodeId ff = g.add_rowvec(
        g.matmul(apply_activation(g, g.add_rowvec(g.matmul(normed2, l.ff_w1), l.ff_b1), cfg),
                 l.ff_w2),
        l.ff_b2);
    x = g.add(x, ff);
  }
  x = g.layer_norm(x, nodes.final_ln_gain, nodes.final_ln_bias);
  result.predictions = residual_block(g, x, nodes.out_w1, nodes.out_b1, nodes.out_w2, nodes.out_b2,
                                      nodes.out_skip, cfg);
  return result;
}

Tensor forward(const Context& ctx, const ModelParams& params, const ModelConfig& cfg,
               LayoutMode mode, ContextLayout* layout_out) {
  Graph g;
  ParamNodes nodes = bind_params(g, params, false);
  ForwardResult r = build_forward(g, ctx, nodes, cfg, mode);
  if (layout_out) *layout_out = r.layout;
  return g.value(r.predictions);
}

Tensor embed_tokens(const std::vector<PatchGrid>& grids, const ContextLayout& layout,
                    const ModelParams& params, const ModelConfig& cfg) {
  Graph g;
  ParamNodes nodes = bind_params(g, params, false);
  NodeId tokens = build_embedding(g, grids, layout, nodes, cfg);
  return g.value(tokens);
}

ExampleWindow make_example(const std::vector<double>& series, const ModelConfig& cfg) {
  if (series.empty()) throw std::invalid_argument("make_example: empty series");
  std::vector<double> tail = series;
  if (tail.size() > cfg.max_example_len) {
    tail.assign(series.end() - static_cast<std::ptrdiff_t>(cfg.max_example_len), series.end());
  }
  return pad_example(tail, cfg.patch_len, cfg.max_example_len);
}

Forecast forecast(const std::vector<double>& history, const std::vector<ExampleWindow>& examples,
                  std::size_t horizon, const ModelParams& params, const ModelConfig& cfg) {
  cfg.validate();
  if (horizon == 0) throw std::invalid_argument("forecast: horizon must be >= 1");
  if (history.empty()) throw std::invalid_argument("forecast: empty history");
  if (examples.size() + 1 > cfg.max_examples) {
    throw std::invalid_argument("forecast: " + std::to_string(examples.size()) +
                                " in-context examples exceed capacity " +
                                std::to_string(cfg.max_examples - 1));
  }

  Forecast out;
  std::vector<double> working = history;
  std::int32_t round = 0;
  while (out.values.size() < horizon) {
    std::vector<double> recent = working;
    if (recent.size() > cfg.max_example_len) {
      recent.assign(working.end() - static_cast<std::ptrdiff_t>(cfg.max_example_len),
                    working.end());
    }
    Context ctx;
    ctx.examples = examples;
    ctx.examples.push_back(pad_history(recent, cfg.patch_len, cfg.max_example_len));
    standardize_context(ctx);

    ContextLayout layout;
    Tensor preds = forward(ctx, params, cfg, LayoutMode::kInfer, &layout);

    const auto& span = layout.spans.back();
    std::ptrdiff_t readout = -1;
    for (std::size_t t = span.second; t-- > span.first;) {
      if (!layout.is_separator(t) && layout.eligible[t]) {
        readout = static_cast<std::ptrdiff_t>(t);
        break;
      }
    }
    if (readout < 0) {
      throw std::invalid_argument("forecast: target history produced no attention-eligible patch");
    }

    const std::size_t h = cfg.output_patch_len;
    std::vector<double> block(h);
    for (std::size_t c = 0; c < h; ++c) {
      block[c] = preds.at(static_cast<std::size_t>(readout), c) * ctx.sd + ctx.mu;
    }
    for (std::size_t c = 0; c < h && out.values.size() < horizon; ++c) {
      out.values.push_back(block[c]);
      out.round.push_back(round);
    }
    // Predicted points re-enter the history as real observations.
    working.insert(working.end(), block.begin(), block.end());
    ++round;
  }
  return out;
}

}  // namespace icf
