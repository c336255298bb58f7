#include "icf/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "icf/kernels.hpp"

namespace icf {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLayerNormEps = 1e-6;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_bwd(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

}  // namespace

std::size_t Graph::check_id(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::invalid_argument("Graph: node id " + std::to_string(id) + " out of range");
  }
  return static_cast<std::size_t>(id);
}

NodeId Graph::push(Node n) {
  for (NodeId i : n.in) {
    if (nodes_[check_id(i)].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + ta.shape_str() + " x " +
                                tb.shape_str());
  }
  Node n;
  n.op = Op::kMatMul;
  n.in = {a, b};
  n.val = Tensor({ta.rows(), tb.cols()});
  kernels::matmul_nn(ta.data.data(), tb.data.data(), n.val.data.data(), ta.rows(), ta.cols(),
                     tb.cols());
  return push(std::move(n));
}

NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.cols()) {
    throw std::invalid_argument("matmul_nt: shape mismatch " + ta.shape_str() + " x " +
                                tb.shape_str() + "^T");
  }
  Node n;
  n.op = Op::kMatMulNT;
  n.in = {a, b};
  n.val = Tensor({ta.rows(), tb.rows()});
  kernels::matmul_nt(ta.data.data(), tb.data.data(), n.val.data.data(), ta.rows(), ta.cols(),
                     tb.rows());
  return push(std::move(n));
}

NodeId Graph::mix_masked(NodeId w, NodeId v, MaskPtr allowed) {
  const Tensor& tw = value(w);
  const Tensor& tv = value(v);
  if (!tw.is_matrix() || !tv.is_matrix() || tw.cols() != tv.rows()) {
    throw std::invalid_argument("mix_masked: shape mismatch " + tw.shape_str() + " x " +
                                tv.shape_str());
  }
  if (!allowed || allowed->size() != tw.numel()) {
    throw std::invalid_argument("mix_masked: mask size does not match weights " + tw.shape_str());
  }
  Node n;
  n.op = Op::kMixMasked;
  n.in = {w, v};
  n.mask = std::move(allowed);
  n.val = Tensor({tw.rows(), tv.cols()});
  kernels::mix_masked(tw.data.data(), tv.data.data(), n.mask->data(), n.val.data.data(), tw.rows(),
                      tw.cols(), tv.cols());
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "add");
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  n.val = ta;
  for (std::size_t i = 0; i < tb.numel(); ++i) n.val.data[i] += tb.data[i];
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "sub");
  Node n;
  n.op = Op::kSub;
  n.in = {a, b};
  n.val = ta;
  for (std::size_t i = 0; i < tb.numel(); ++i) n.val.data[i] -= tb.data[i];
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_same_shape(ta, tb, "mul");
  Node n;
  n.op = Op::kMul;
  n.in = {a, b};
  n.val = ta;
  for (std::size_t i = 0; i < tb.numel(); ++i) n.val.data[i] *= tb.data[i];
  return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId a, NodeId v) {
  const Tensor& ta = value(a);
  const Tensor& tv = value(v);
  if (!ta.is_matrix() || !tv.is_matrix() || tv.rows() != 1 || tv.cols() != ta.cols()) {
    throw std::invalid_argument("add_rowvec: shape mismatch " + ta.shape_str() + " + " +
                                tv.shape_str());
  }
  Node n;
  n.op = Op::kAddRowVec;
  n.in = {a, v};
  n.val = ta;
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    for (std::size_t c = 0; c < ta.cols(); ++c) n.val.data[r * ta.cols() + c] += tv.data[c];
  }
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.in = {a};
  n.scalar = c;
  n.val = value(a);
  for (double& x : n.val.data) x *= c;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.in = {a};
  n.val = value(a);
  for (double& x : n.val.data) x = x > 0.0 ? x : 0.0;
  return push(std::move(n));
}

NodeId Graph::gelu(NodeId a) {
  Node n;
  n.op = Op::kGelu;
  n.in = {a};
  n.val = value(a);
  for (double& x : n.val.data) x = gelu_fwd(x);
  return push(std::move(n));
}

NodeId Graph::softmax_lastdim(NodeId a) {
  const Tensor& ta = value(a);
  std::size_t cols = ta.last_dim();
  Node n;
  n.op = Op::kSoftmaxLastDim;
  n.in = {a};
  n.val = Tensor(ta.shape);
  kernels::softmax_rows(ta.data.data(), n.val.data.data(), ta.numel() / cols, cols);
  return push(std::move(n));
}

NodeId Graph::softmax_masked(NodeId a, MaskPtr allowed) {
  const Tensor& ta = value(a);
  if (!allowed || allowed->size() != ta.numel()) {
    throw std::invalid_argument("softmax_masked: mask size does not match " + ta.shape_str());
  }
  std::size_t cols = ta.last_dim();
  Node n;
  n.op = Op::kSoftmaxMasked;
  n.in = {a};
  n.mask = std::move(allowed);
  n.val = Tensor(ta.shape);
  kernels::softmax_rows_masked(ta.data.data(), n.mask->data(), n.val.data.data(),
                               ta.numel() / cols, cols);
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  std::size_t cols = tx.last_dim();
  if (tg.numel() != cols || tb.numel() != cols) {
    throw std::invalid_argument("layer_norm: gain " + tg.shape_str() + " / bias " +
                                tb.shape_str() + " do not match last dim of " + tx.shape_str());
  }
  Node n;
  n.op = Op::kLayerNorm;
  n.in = {x, gain, bias};
  n.val = Tensor(tx.shape);
  kernels::layer_norm_rows(tx.data.data(), tg.data.data(), tb.data.data(), n.val.data.data(),
                           tx.numel() / cols, cols, kLayerNormEps);
  return push(std::move(n));
}

NodeId Graph::select_unpadded(NodeId a, MaskPtr padded) {
  const Tensor& ta = value(a);
  if (!padded || padded->size() != ta.numel()) {
    throw std::invalid_argument("select_unpadded: mask size does not match " + ta.shape_str());
  }
  Node n;
  n.op = Op::kSelectUnpadded;
  n.in = {a};
  n.mask = std::move(padded);
  n.val = Tensor(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    n.val.data[i] = (*n.mask)[i] ? 0.0 : ta.data[i];
  }
  return push(std::move(n));
}

NodeId Graph::assemble_tokens(NodeId x, NodeId sep, RowMapPtr map) {
  const Tensor& tx = value(x);
  const Tensor& ts = value(sep);
  if (!tx.is_matrix() || !ts.is_matrix() || ts.rows() != 1 || ts.cols() != tx.cols()) {
    throw std::invalid_argument("assemble_tokens: incompatible shapes " + tx.shape_str() + ", " +
                                ts.shape_str());
  }
  if (!map || map->empty()) throw std::invalid_argument("assemble_tokens: empty row map");
  std::size_t d = tx.cols();
  Node n;
  n.op = Op::kAssembleTokens;
  n.in = {x, sep};
  n.map = std::move(map);
  n.val = Tensor({n.map->size(), d});
  for (std::size_t t = 0; t < n.map->size(); ++t) {
    std::int64_t src = (*n.map)[t];
    const double* row;
    if (src < 0) {
      row = ts.data.data();
    } else {
      if (static_cast<std::size_t>(src) >= tx.rows()) {
        throw std::invalid_argument("assemble_tokens: row map entry out of range");
      }
      row = tx.data.data() + static_cast<std::size_t>(src) * d;
    }
    for (std::size_t c = 0; c < d; ++c) n.val.data[t * d + c] = row[c];
  }
  return push(std::move(n));
}

NodeId Graph::gather_rows(NodeId a, RowMapPtr rows) {
  const Tensor& ta = value(a);
  if (!ta.is_matrix()) throw std::invalid_argument("gather_rows: expected matrix");
  if (!rows || rows->empty()) throw std::invalid_argument("gather_rows: empty index list");
  std::size_t d = ta.cols();
  Node n;
  n.op = Op::kGatherRows;
  n.in = {a};
  n.map = std::move(rows);
  n.val = Tensor({n.map->size(), d});
  for (std::size_t r = 0; r < n.map->size(); ++r) {
    std::int64_t src = (*n.map)[r];
    if (src < 0 || static_cast<std::size_t>(src) >= ta.rows()) {
      throw std::invalid_argument("gather_rows: index out of range");
    }
    for (std::size_t c = 0; c < d; ++c) {
      n.val.data[r * d + c] = ta.data[static_cast<std::size_t>(src) * d + c];
    }
  }
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, std::size_t col0, std::size_t width) {
  const Tensor& ta = value(a);
  if (!ta.is_matrix() || col0 + width > ta.cols() || width == 0) {
    throw std::invalid_argument("slice_cols: invalid slice [" + std::to_string(col0) + ", " +
                                std::to_string(col0 + width) + ") of " + ta.shape_str());
  }
  Node n;
  n.op = Op::kSliceCols;
  n.in = {a};
  n.col0 = col0;
  n.width = width;
  n.val = Tensor({ta.rows(), width});
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      n.val.data[r * width + c] = ta.data[r * ta.cols() + col0 + c];
    }
  }
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  std::size_t rows = value(parts[0]).rows();
  std::size_t total = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    if (!t.is_matrix() || t.rows() != rows) {
      throw std::invalid_argument("concat_cols: row mismatch " + t.shape_str());
    }
    total += t.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.in = parts;
  n.val = Tensor({rows, total});
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        n.val.data[r * total + off + c] = t.data[r * t.cols() + c];
      }
    }
    off += t.cols();
  }
  return push(std::move(n));
}

NodeId Graph::sum_all(NodeId a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  Node n;
  n.op = Op::kSumAll;
  n.in = {a};
  n.val = Tensor::scalar(s);
  return push(std::move(n));
}

Tensor& Graph::grad_slot(NodeId id) {
  std::size_t i = check_id(id);
  if (grads_[i].numel() == 0) grads_[i] = Tensor(nodes_[i].val.shape);
  return grads_[i];
}

Tensor Graph::grad(NodeId id) const {
  std::size_t i = check_id(id);
  if (grads_.size() == nodes_.size() && grads_[i].numel() != 0) return grads_[i];
  return Tensor(nodes_[i].val.shape);
}

void Graph::backward(NodeId loss) {
  const Tensor& lt = value(loss);
  if (lt.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + lt.shape_str());
  }
  grads_.assign(nodes_.size(), Tensor());
  grad_slot(loss).data[0] = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    std::size_t i = static_cast<std::size_t>(id);
    const Node& n = nodes_[i];
    if (!n.needs_grad || n.op == Op::kLeaf) continue;
    if (grads_[i].numel() == 0) continue;  // nothing flowed into this node
    const Tensor& g = grads_[i];
    const Tensor& out = n.val;

    auto wants = [&](std::size_t slot) { return nodes_[check_id(n.in[slot])].needs_grad; };

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        if (wants(0)) {
          Tensor da({a.rows(), a.cols()});
          kernels::matmul_nt(g.data.data(), b.data.data(), da.data.data(), g.rows(), g.cols(),
                             b.rows());
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += da.data[j];
        }
        if (wants(1)) {
          Tensor db({b.rows(), b.cols()});
          kernels::matmul_tn(a.data.data(), g.data.data(), db.data.data(), a.rows(), a.cols(),
                             g.cols());
          Tensor& acc = grad_slot(n.in[1]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += db.data[j];
        }
        break;
      }
      case Op::kMatMulNT: {
        // out = a * b^T; d a = g * b, d b = g^T * a
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        if (wants(0)) {
          Tensor da({a.rows(), a.cols()});
          kernels::matmul_nn(g.data.data(), b.data.data(), da.data.data(), g.rows(), g.cols(),
                             b.cols());
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += da.data[j];
        }
        if (wants(1)) {
          Tensor db({b.rows(), b.cols()});
          kernels::matmul_tn(g.data.data(), a.data.data(), db.data.data(), g.rows(), g.cols(),
                             a.cols());
          Tensor& acc = grad_slot(n.in[1]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += db.data[j];
        }
        break;
      }
      case Op::kMixMasked: {
        const Tensor& w = value(n.in[0]);
        const Tensor& v = value(n.in[1]);
        const std::vector<std::uint8_t>& allowed = *n.mask;
        std::size_t q = w.rows(), kk = w.cols(), d = v.cols();
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t r = 0; r < q; ++r) {
            for (std::size_t p = 0; p < kk; ++p) {
              if (!allowed[r * kk + p]) continue;
              double s = 0.0;
              for (std::size_t c = 0; c < d; ++c) s += g.data[r * d + c] * v.data[p * d + c];
              acc.data[r * kk + p] += s;
            }
          }
        }
        if (wants(1)) {
          Tensor& acc = grad_slot(n.in[1]);
          for (std::size_t r = 0; r < q; ++r) {
            for (std::size_t p = 0; p < kk; ++p) {
              if (!allowed[r * kk + p]) continue;
              double wv = w.data[r * kk + p];
              for (std::size_t c = 0; c < d; ++c) {
                acc.data[p * d + c] += wv * g.data[r * d + c];
              }
            }
          }
        }
        break;
      }
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s) {
          if (!wants(s)) continue;
          Tensor& acc = grad_slot(n.in[s]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += g.data[j];
        }
        break;
      }
      case Op::kSub: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += g.data[j];
        }
        if (wants(1)) {
          Tensor& acc = grad_slot(n.in[1]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] -= g.data[j];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = value(n.in[0]);
        const Tensor& b = value(n.in[1]);
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += g.data[j] * b.data[j];
        }
        if (wants(1)) {
          Tensor& acc = grad_slot(n.in[1]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += g.data[j] * a.data[j];
        }
        break;
      }
      case Op::kAddRowVec: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += g.data[j];
        }
        if (wants(1)) {
          Tensor& acc = grad_slot(n.in[1]);
          std::size_t cols = out.cols();
          for (std::size_t r = 0; r < out.rows(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) acc.data[c] += g.data[r * cols + c];
          }
        }
        break;
      }
      case Op::kScale: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += n.scalar * g.data[j];
        }
        break;
      }
      case Op::kRelu: {
        if (wants(0)) {
          const Tensor& a = value(n.in[0]);
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) {
            if (a.data[j] > 0.0) acc.data[j] += g.data[j];
          }
        }
        break;
      }
      case Op::kGelu: {
        if (wants(0)) {
          const Tensor& a = value(n.in[0]);
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t j = 0; j < acc.numel(); ++j) {
            acc.data[j] += g.data[j] * gelu_bwd(a.data[j]);
          }
        }
        break;
      }
      case Op::kSoftmaxLastDim: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          std::size_t cols = out.last_dim();
          std::size_t rows = out.numel() / cols;
          for (std::size_t r = 0; r < rows; ++r) {
            const double* y = out.data.data() + r * cols;
            const double* gy = g.data.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) {
              acc.data[r * cols + c] += y[c] * (gy[c] - dot);
            }
          }
        }
        break;
      }
      case Op::kSoftmaxMasked: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          const std::vector<std::uint8_t>& allowed = *n.mask;
          std::size_t cols = out.last_dim();
          std::size_t rows = out.numel() / cols;
          for (std::size_t r = 0; r < rows; ++r) {
            const double* y = out.data.data() + r * cols;
            const double* gy = g.data.data() + r * cols;
            const std::uint8_t* ar = allowed.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              if (ar[c]) dot += gy[c] * y[c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
              if (ar[c]) acc.data[r * cols + c] += y[c] * (gy[c] - dot);
            }
          }
        }
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& x = value(n.in[0]);
        const Tensor& gn = value(n.in[1]);
        std::size_t cols = x.last_dim();
        std::size_t rows = x.numel() / cols;
        bool wx = wants(0), wg = wants(1), wb = wants(2);
        Tensor* accx = wx ? &grad_slot(n.in[0]) : nullptr;
        Tensor* accg = wg ? &grad_slot(n.in[1]) : nullptr;
        Tensor* accb = wb ? &grad_slot(n.in[2]) : nullptr;
        std::vector<double> xhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = x.data.data() + r * cols;
          const double* gy = g.data.data() + r * cols;
          double mean = 0.0;
          for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
          mean /= static_cast<double>(cols);
          double var = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            double d = xr[c] - mean;
            var += d * d;
          }
          var /= static_cast<double>(cols);
          double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          for (std::size_t c = 0; c < cols; ++c) xhat[c] = (xr[c] - mean) * inv;
          if (wx) {
            double mu = 0.0, muh = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              double u = gy[c] * gn.data[c];
              mu += u;
              muh += u * xhat[c];
            }
            mu /= static_cast<double>(cols);
            muh /= static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              double u = gy[c] * gn.data[c];
              accx->data[r * cols + c] += inv * (u - mu - xhat[c] * muh);
            }
          }
          if (wg) {
            for (std::size_t c = 0; c < cols; ++c) accg->data[c] += gy[c] * xhat[c];
          }
          if (wb) {
            for (std::size_t c = 0; c < cols; ++c) accb->data[c] += gy[c];
          }
        }
        break;
      }
      case Op::kSelectUnpadded: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          const std::vector<std::uint8_t>& padded = *n.mask;
          for (std::size_t j = 0; j < acc.numel(); ++j) {
            if (!padded[j]) acc.data[j] += g.data[j];
          }
        }
        break;
      }
      case Op::kAssembleTokens: {
        std::size_t d = out.cols();
        const std::vector<std::int64_t>& map = *n.map;
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          for (std::size_t t = 0; t < map.size(); ++t) {
            if (map[t] < 0) continue;
            double* dst = acc.data.data() + static_cast<std::size_t>(map[t]) * d;
            const double* src = g.data.data() + t * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
          }
        }
        if (wants(1)) {
          Tensor& acc = grad_slot(n.in[1]);
          for (std::size_t t = 0; t < map.size(); ++t) {
            if (map[t] >= 0) continue;
            const double* src = g.data.data() + t * d;
            for (std::size_t c = 0; c < d; ++c) acc.data[c] += src[c];
          }
        }
        break;
      }
      case Op::kGatherRows: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          std::size_t d = out.cols();
          const std::vector<std::int64_t>& map = *n.map;
          for (std::size_t r = 0; r < map.size(); ++r) {
            double* dst = acc.data.data() + static_cast<std::size_t>(map[r]) * d;
            const double* src = g.data.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
          }
        }
        break;
      }
      case Op::kSliceCols: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          std::size_t w = n.width, full = acc.cols();
          for (std::size_t r = 0; r < out.rows(); ++r) {
            for (std::size_t c = 0; c < w; ++c) {
              acc.data[r * full + n.col0 + c] += g.data[r * w + c];
            }
          }
        }
        break;
      }
      case Op::kConcatCols: {
        std::size_t off = 0;
        std::size_t total = out.cols();
        for (std::size_t s = 0; s < n.in.size(); ++s) {
          const Tensor& part = value(n.in[s]);
          if (nodes_[check_id(n.in[s])].needs_grad) {
            Tensor& acc = grad_slot(n.in[s]);
            for (std::size_t r = 0; r < part.rows(); ++r) {
              for (std::size_t c = 0; c < part.cols(); ++c) {
                acc.data[r * part.cols() + c] += g.data[r * total + off + c];
              }
            }
          }
          off += part.cols();
        }
        break;
      }
      case Op::kSumAll: {
        if (wants(0)) {
          Tensor& acc = grad_slot(n.in[0]);
          double gv = g.data[0];
          for (std::size_t j = 0; j < acc.numel(); ++j) acc.data[j] += gv;
        }
        break;
      }
    }
  }
}

double check_gradients(
    const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
    const std::vector<Tensor>& params, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("check_gradients: eps must be positive");

  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const Tensor& p : params) ids.push_back(g.leaf(p, true));
  NodeId loss = build(g, ids);
  if (g.value(loss).numel() != 1) {
    throw std::invalid_argument("check_gradients: computation must produce a scalar, got " +
                                g.value(loss).shape_str());
  }
  g.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (NodeId id : ids) analytic.push_back(g.grad(id));

  auto eval_at = [&](const std::vector<Tensor>& probe) {
    Graph pg;
    std::vector<NodeId> pids;
    pids.reserve(probe.size());
    for (const Tensor& p : probe) pids.push_back(pg.leaf(p, false));
    NodeId out = build(pg, pids);
    return pg.value(out).data[0];
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::size_t count = params[pi].numel();
    std::int64_t nn = static_cast<std::int64_t>(count);
    double local_max = 0.0;
#pragma omp parallel for schedule(dynamic, 8) reduction(max : local_max)
    for (std::int64_t e = 0; e < nn; ++e) {
      std::vector<Tensor> probe = params;
      double orig = probe[pi].data[static_cast<std::size_t>(e)];
      probe[pi].data[static_cast<std::size_t>(e)] = orig + eps;
      double fp = eval_at(probe);
      probe[pi].data[static_cast<std::size_t>(e)] = orig - eps;
      double fm = eval_at(probe);
      double fd = (fp - fm) / (2.0 * eps);
      double rel = std::fabs(analytic[pi].data[static_cast<std::size_t>(e)] - fd) /
                   (std::fabs(fd) + 1e-12);
      if (rel > local_max) local_max = rel;
    }
    if (local_max > max_rel) max_rel = local_max;
  }
  return max_rel;
}

}  // namespace icf
