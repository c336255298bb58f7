#include "icf/train.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace icf {

void TrainConfig::validate() const {
  if (peak_lr <= 0.0) throw std::invalid_argument("train config: peak_lr must be positive");
  if (warmup_steps == 0) throw std::invalid_argument("train config: warmup_steps must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (total_steps == 0) throw std::invalid_argument("train config: total_steps must be >= 1");
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step == 0) throw std::invalid_argument("lr_schedule: steps are 1-based");
  double s = static_cast<double>(step);
  double w = static_cast<double>(cfg.warmup_steps);
  double factor = s < w ? s / w : std::sqrt(w / s);
  return cfg.peak_lr * factor;
}

OptimizerState OptimizerState::init(const ModelParams& params) {
  OptimizerState opt;
  params.for_each([&](const std::string&, const Tensor& t) {
    opt.m.push_back(Tensor(t.shape));
    opt.v.push_back(Tensor(t.shape));
  });
  return opt;
}

LossTargets build_loss_targets(const Context& ctx, const ContextLayout& layout,
                               const ModelConfig& cfg, LossMaskPolicy policy) {
  const std::size_t p = cfg.patch_len;
  const std::size_t h = cfg.output_patch_len;

  auto rows = std::make_shared<std::vector<std::int64_t>>();
  for (std::size_t t = 0; t < layout.token_count(); ++t) {
    if (!layout.is_separator(t)) rows->push_back(static_cast<std::int64_t>(t));
  }
  LossTargets lt;
  lt.targets = Tensor({rows->size(), h});
  lt.weights = Tensor({rows->size(), h});
  for (std::size_t r = 0; r < rows->size(); ++r) {
    const ContextLayout::Token& tok = layout.tokens[static_cast<std::size_t>((*rows)[r])];
    const ExampleWindow& w = ctx.examples[static_cast<std::size_t>(tok.example)];
    const std::size_t start = p * (static_cast<std::size_t>(tok.patch) + 1);
    for (std::size_t c = 0; c < h; ++c) {
      const std::size_t pos = start + c;
      bool counted = pos < w.length() && !w.mask[pos];
      if (policy == LossMaskPolicy::kNone) counted = pos < w.length();
      if (counted) {
        lt.targets.data[r * h + c] = w.values[pos];
        lt.weights.data[r * h + c] = 1.0;
      }
    }
  }
  lt.prediction_rows = std::move(rows);
  return lt;
}

double context_loss(const Tensor& predictions, const Tensor& targets, const Tensor& weights) {
  require_same_shape(predictions, targets, "context_loss");
  require_same_shape(predictions, weights, "context_loss");
  if (predictions.rows() == 0) throw std::invalid_argument("context_loss: no prediction rows");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.numel(); ++i) {
    double d = predictions.data[i] - targets.data[i];
    sum += weights.data[i] * d * d;
  }
  return sum / static_cast<double>(predictions.rows());
}

NodeId build_loss(Graph& g, const ForwardResult& fwd, const LossTargets& lt) {
  NodeId rows = g.gather_rows(fwd.predictions, lt.prediction_rows);
  NodeId diff = g.sub(rows, g.constant(lt.targets));
  NodeId sq = g.mul(diff, diff);
  NodeId weighted = g.mul(sq, g.constant(lt.weights));
  return g.scale(g.sum_all(weighted), 1.0 / static_cast<double>(lt.targets.rows()));
}

StepStats train_step(const std::vector<Context>& batch, ModelParams& params, OptimizerState& opt,
                     const TrainConfig& tcfg, const ModelConfig& mcfg, LayoutMode mode) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  if (opt.m.size() != opt.v.size()) throw std::invalid_argument("train_step: optimizer state");

  const std::size_t nb = batch.size();
  std::vector<std::vector<Tensor>> ctx_grads(nb);
  std::vector<double> ctx_losses(nb, 0.0);
  std::vector<std::string> errors(nb);

  const std::int64_t nbi = static_cast<std::int64_t>(nb);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t b = 0; b < nbi; ++b) {
    try {
      Graph g;
      ParamNodes nodes = bind_params(g, params, true);
      ForwardResult fwd = build_forward(g, batch[b], nodes, mcfg, mode);
      LossTargets lt = build_loss_targets(batch[b], fwd.layout, mcfg, tcfg.mask_policy);
      NodeId loss = build_loss(g, fwd, lt);
      ctx_losses[b] = g.value(loss).data[0];
      if (std::isfinite(ctx_losses[b])) {
        g.backward(loss);
        ctx_grads[b] = collect_param_grads(g, nodes, mcfg);
      }
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }

  for (std::size_t b = 0; b < nb; ++b) {
    if (!errors[b].empty()) {
      throw std::runtime_error("train_step: context " + std::to_string(b) + " at step " +
                               std::to_string(opt.step + 1) + ": " + errors[b]);
    }
    if (!std::isfinite(ctx_losses[b])) {
      throw std::runtime_error("train_step: non-finite loss at step " +
                               std::to_string(opt.step + 1) + ", context " + std::to_string(b));
    }
  }

  // Reduce in batch order so results do not depend on thread scheduling.
  const double inv_b = 1.0 / static_cast<double>(nb);
  std::vector<Tensor> grads = std::move(ctx_grads[0]);
  for (std::size_t b = 1; b < nb; ++b) {
    for (std::size_t t = 0; t < grads.size(); ++t) {
      for (std::size_t i = 0; i < grads[t].numel(); ++i) {
        grads[t].data[i] += ctx_grads[b][t].data[i];
      }
    }
  }
  double norm_sq = 0.0;
  for (Tensor& t : grads) {
    for (double& x : t.data) {
      x *= inv_b;
      norm_sq += x * x;
    }
  }
  StepStats stats;
  stats.grad_norm = std::sqrt(norm_sq);
  if (tcfg.clip_norm > 0.0 && stats.grad_norm > tcfg.clip_norm) {
    double s = tcfg.clip_norm / stats.grad_norm;
    for (Tensor& t : grads) {
      for (double& x : t.data) x *= s;
    }
  }

  opt.step += 1;
  stats.lr = lr_schedule(opt.step, tcfg);
  double loss_sum = 0.0;
  for (double l : ctx_losses) loss_sum += l;
  stats.loss = loss_sum * inv_b;

  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.step));
  std::size_t ti = 0;
  params.for_each([&](const std::string& name, Tensor& t) {
    if (!grads[ti].same_shape(t)) {
      throw std::runtime_error("train_step: gradient shape mismatch for " + name);
    }
    Tensor& m = opt.m[ti];
    Tensor& v = opt.v[ti];
    const std::size_t n = t.numel();
    for (std::size_t i = 0; i < n; ++i) {
      double gv = grads[ti].data[i];
      m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * gv;
      v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * gv * gv;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      t.data[i] -= stats.lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
    ++ti;
  });
  return stats;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

constexpr const char* kMagic = "icf-checkpoint v1";

struct TensorRecord {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;  // bytes into the blob
};

std::string shape_to_text(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<std::size_t> shape_from_text(const std::string& text) {
  std::vector<std::size_t> shape;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find('x', pos);
    if (next == std::string::npos) next = text.size();
    shape.push_back(static_cast<std::size_t>(std::stoull(text.substr(pos, next - pos))));
    pos = next + 1;
  }
  if (shape.empty()) throw std::runtime_error("checkpoint: bad shape '" + text + "'");
  return shape;
}

void append_blob(std::string& blob, const Tensor& t) {
  static_assert(sizeof(double) == 8);
  std::size_t old = blob.size();
  blob.resize(old + t.numel() * 8);
  std::memcpy(blob.data() + old, t.data.data(), t.numel() * 8);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
  }
}

std::string manifest_header(const ModelConfig& cfg) {
  std::ostringstream os;
  os << kMagic << "\n";
  os << "endian little\n";
  os << "config.patch_len " << cfg.patch_len << "\n";
  os << "config.output_patch_len " << cfg.output_patch_len << "\n";
  os << "config.d_model " << cfg.d_model << "\n";
  os << "config.n_layers " << cfg.n_layers << "\n";
  os << "config.n_heads " << cfg.n_heads << "\n";
  os << "config.d_ff " << cfg.d_ff << "\n";
  os << "config.max_example_len " << cfg.max_example_len << "\n";
  os << "config.max_examples " << cfg.max_examples << "\n";
  os << "config.activation " << cfg.activation << "\n";
  return os.str();
}

struct ParsedCheckpoint {
  ModelConfig config;
  std::size_t step = 0;
  bool has_step = false;
  std::vector<TensorRecord> records;
  std::string blob;

  const TensorRecord* find(const std::string& name) const {
    for (const TensorRecord& r : records) {
      if (r.name == name) return &r;
    }
    return nullptr;
  }

  Tensor read(const TensorRecord& rec) const {
    Tensor t(rec.shape);
    std::size_t bytes = t.numel() * 8;
    if (rec.offset + bytes > blob.size()) {
      throw std::runtime_error("checkpoint: tensor " + rec.name + " overruns the blob");
    }
    std::memcpy(t.data.data(), blob.data() + rec.offset, bytes);
    return t;
  }
};

ParsedCheckpoint parse_checkpoint(const std::string& path) {
  if (std::endian::native != std::endian::little) {
    throw std::runtime_error("checkpoint: only little-endian hosts are supported");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string delim = "\n---\n";
  std::size_t cut = all.find(delim);
  if (cut == std::string::npos) {
    throw std::runtime_error("checkpoint " + path + ": missing manifest/blob delimiter");
  }
  ParsedCheckpoint pc;
  pc.blob = all.substr(cut + delim.size());

  std::istringstream manifest(all.substr(0, cut));
  std::string line;
  if (!std::getline(manifest, line) || line != kMagic) {
    throw std::runtime_error("checkpoint " + path + ": bad magic line '" + line + "'");
  }
  bool saw_endian = false;
  std::map<std::string, std::string> cfg_kv;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "endian") {
      std::string v;
      ls >> v;
      if (v != "little") {
        throw std::runtime_error("checkpoint " + path + ": unsupported endianness '" + v + "'");
      }
      saw_endian = true;
    } else if (key.rfind("config.", 0) == 0) {
      std::string v;
      ls >> v;
      if (v.empty()) throw std::runtime_error("checkpoint: missing value for " + key);
      cfg_kv[key.substr(7)] = v;
    } else if (key == "train.step") {
      ls >> pc.step;
      pc.has_step = true;
    } else if (key == "tensor") {
      TensorRecord rec;
      std::string shape_text;
      if (!(ls >> rec.name >> shape_text >> rec.offset)) {
        throw std::runtime_error("checkpoint " + path + ": bad tensor record '" + line + "'");
      }
      rec.shape = shape_from_text(shape_text);
      pc.records.push_back(std::move(rec));
    } else {
      throw std::runtime_error("checkpoint " + path + ": unknown manifest key '" + key + "'");
    }
  }
  if (!saw_endian) throw std::runtime_error("checkpoint " + path + ": missing endianness tag");

  auto need = [&](const char* k) -> const std::string& {
    auto it = cfg_kv.find(k);
    if (it == cfg_kv.end()) {
      throw std::runtime_error("checkpoint " + path + ": missing config." + k);
    }
    return it->second;
  };
  pc.config.patch_len = std::stoull(need("patch_len"));
  pc.config.output_patch_len = std::stoull(need("output_patch_len"));
  pc.config.d_model = std::stoull(need("d_model"));
  pc.config.n_layers = std::stoull(need("n_layers"));
  pc.config.n_heads = std::stoull(need("n_heads"));
  pc.config.d_ff = std::stoull(need("d_ff"));
  pc.config.max_example_len = std::stoull(need("max_example_len"));
  pc.config.max_examples = std::stoull(need("max_examples"));
  pc.config.activation = need("activation");
  pc.config.validate();
  return pc;
}

ModelParams params_from_checkpoint(const ParsedCheckpoint& pc, std::uint64_t sigma_seed,
                                   bool* had_separator) {
  ModelParams params;
  params.layers.resize(pc.config.n_layers);
  bool saw_sep = false;
  auto spec = param_spec(pc.config);
  std::size_t index = 0;
  params.for_each([&](const std::string& name, Tensor& t) {
    const std::vector<std::size_t>& want = spec[index].second;
    ++index;
    const TensorRecord* rec = pc.find(name);
    if (!rec) {
      if (name == "separator") {
        t = init_separator(pc.config, sigma_seed);
        return;
      }
      throw std::runtime_error("checkpoint: missing tensor " + name);
    }
    if (rec->shape != want) {
      throw std::runtime_error("checkpoint: tensor " + name + " has shape " +
                               shape_to_text(rec->shape) + ", model config requires " +
                               shape_to_text(want));
    }
    t = pc.read(*rec);
    if (name == "separator") saw_sep = true;
  });
  if (had_separator) *had_separator = saw_sep;
  return params;
}

void save_checkpoint_impl(const ModelParams& params, const ModelConfig& cfg,
                          const OptimizerState* opt, std::size_t step, const std::string& path,
                          bool include_separator) {
  if (std::endian::native != std::endian::little) {
    throw std::runtime_error("checkpoint: only little-endian hosts are supported");
  }
  std::string manifest = manifest_header(cfg);
  if (opt) manifest += "train.step " + std::to_string(step) + "\n";
  std::string blob;
  auto emit = [&](const std::string& name, const Tensor& t) {
    manifest +=
        "tensor " + name + " " + shape_to_text(t.shape) + " " + std::to_string(blob.size()) + "\n";
    append_blob(blob, t);
  };
  params.for_each([&](const std::string& name, const Tensor& t) {
    if (name == "separator" && !include_separator) return;
    emit(name, t);
  });
  if (opt) {
    std::size_t ti = 0;
    params.for_each([&](const std::string& name, const Tensor&) {
      emit("opt.m." + name, opt->m[ti]);
      emit("opt.v." + name, opt->v[ti]);
      ++ti;
    });
  }
  write_file_atomic(path, manifest + "---\n" + blob);
}

}  // namespace

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::string& path,
                     bool include_separator) {
  save_checkpoint_impl(params, cfg, nullptr, 0, path, include_separator);
}

LoadedCheckpoint load_checkpoint(const std::string& path, std::uint64_t sigma_seed) {
  ParsedCheckpoint pc = parse_checkpoint(path);
  LoadedCheckpoint out;
  out.config = pc.config;
  out.params = params_from_checkpoint(pc, sigma_seed, &out.had_separator);
  return out;
}

void save_train_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                           const OptimizerState& opt, std::size_t step, const std::string& path) {
  save_checkpoint_impl(params, cfg, &opt, step, path, true);
}

LoadedTrainCheckpoint load_train_checkpoint(const std::string& path) {
  ParsedCheckpoint pc = parse_checkpoint(path);
  if (!pc.has_step) throw std::runtime_error("checkpoint " + path + ": not a training checkpoint");
  LoadedTrainCheckpoint out;
  out.config = pc.config;
  bool had_sep = false;
  out.params = params_from_checkpoint(pc, 0, &had_sep);
  if (!had_sep) {
    throw std::runtime_error("checkpoint " + path + ": training checkpoint lacks the separator");
  }
  out.step = pc.step;
  out.opt.step = pc.step;
  out.params.for_each([&](const std::string& name, Tensor& t) {
    const TensorRecord* mrec = pc.find("opt.m." + name);
    const TensorRecord* vrec = pc.find("opt.v." + name);
    if (!mrec || !vrec) {
      throw std::runtime_error("checkpoint " + path + ": missing optimizer state for " + name);
    }
    if (mrec->shape != t.shape || vrec->shape != t.shape) {
      throw std::runtime_error("checkpoint " + path + ": optimizer shape mismatch for " + name);
    }
    out.opt.m.push_back(pc.read(*mrec));
    out.opt.v.push_back(pc.read(*vrec));
  });
  return out;
}

std::vector<double> run_training(ModelParams& params, OptimizerState& opt,
                                 const TrainLoopConfig& cfg, const ContextSource& source) {
  cfg.train.validate();
  cfg.model.validate();
  if (opt.step != cfg.start_step) {
    throw std::invalid_argument("run_training: optimizer step " + std::to_string(opt.step) +
                                " does not match start_step " + std::to_string(cfg.start_step));
  }

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    bool fresh = cfg.start_step == 0;
    metrics.open(cfg.metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw std::runtime_error("cannot write metrics to " + cfg.metrics_path);
    if (fresh) metrics << "step,lr,loss\n";
    metrics.precision(17);
  }

  std::vector<double> losses;
  for (std::size_t step = cfg.start_step + 1; step <= cfg.train.total_steps; ++step) {
    std::vector<Context> batch;
    batch.reserve(cfg.train.batch_size);
    for (std::size_t b = 0; b < cfg.train.batch_size; ++b) batch.push_back(source(step, b));

    StepStats stats = train_step(batch, params, opt, cfg.train, cfg.model, cfg.mode);
    losses.push_back(stats.loss);
    if (metrics.is_open()) {
      metrics << step << "," << stats.lr << "," << stats.loss << "\n";
      metrics.flush();
    }
    if (!cfg.checkpoint_path.empty() &&
        (step % cfg.train.checkpoint_interval == 0 || step == cfg.train.total_steps)) {
      save_train_checkpoint(params, cfg.model, opt, step, cfg.checkpoint_path);
    }
  }
  return losses;
}

}  // namespace icf
