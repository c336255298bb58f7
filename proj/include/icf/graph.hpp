#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "icf/tensor.hpp"

namespace icf {

using NodeId = std::int32_t;
using MaskPtr = std::shared_ptr<const std::vector<std::uint8_t>>;
using RowMapPtr = std::shared_ptr<const std::vector<std::int64_t>>;

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,          // a(m,k) * b(k,n)
  kMatMulNT,        // a(m,k) * b(n,k)^T
  kMixMasked,       // w(q,n) * v(n,d), masked
  kAdd,
  kSub,
  kMul,
  kAddRowVec,       // a(m,n) + v(1,n) broadcast over rows
  kScale,
  kRelu,
  kGelu,
  kSoftmaxLastDim,
  kSoftmaxMasked,
  kLayerNorm,       // x, gain(1,n), bias(1,n)
  kSelectUnpadded,  // entrywise: mask ? 0 : x
  kAssembleTokens,  // x(rows,d), sep(1,d); map[t] = source row or -1 for sep
  kGatherRows,
  kSliceCols,
  kConcatCols,
  kSumAll,
};

// Reverse-mode tape. Ops evaluate eagerly and append a record; records are
// topologically ordered by construction (every input id precedes its
// consumer) and the backward pass walks them in exact reverse order.
// A Graph is confined to one logical thread; independent graphs may run
// concurrently.
class Graph {
 public:
  struct Node {
    Op op;
    std::vector<NodeId> in;
    Tensor val;
    bool needs_grad = false;
    double scalar = 0.0;           // kScale factor
    std::size_t col0 = 0, width = 0;  // kSliceCols
    MaskPtr mask;                  // kMixMasked / kSoftmaxMasked / kSelectUnpadded
    RowMapPtr map;                 // kAssembleTokens / kGatherRows
  };

  NodeId leaf(Tensor value, bool requires_grad);
  NodeId constant(Tensor value) { return leaf(std::move(value), false); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId mix_masked(NodeId w, NodeId v, MaskPtr allowed);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId add_rowvec(NodeId a, NodeId v);
  NodeId scale(NodeId a, double c);
  NodeId relu(NodeId a);
  NodeId gelu(NodeId a);
  NodeId softmax_lastdim(NodeId a);
  NodeId softmax_masked(NodeId a, MaskPtr allowed);
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
  NodeId select_unpadded(NodeId a, MaskPtr padded);
  NodeId assemble_tokens(NodeId x, NodeId sep, RowMapPtr map);
  NodeId gather_rows(NodeId a, RowMapPtr rows);
  NodeId slice_cols(NodeId a, std::size_t col0, std::size_t width);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId sum_all(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_[check_id(id)].val; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every grad-requiring
  // node. loss must be a single-element tensor.
  void backward(NodeId loss);

  // Gradient of the last backward() target w.r.t. this node; zero tensor if
  // nothing flowed into it.
  Tensor grad(NodeId id) const;

 private:
  NodeId push(Node n);
  std::size_t check_id(NodeId id) const;
  Tensor& grad_slot(NodeId id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;  // parallel to nodes_, allocated on demand
};

// Max over all parameter entries of |analytic - central_difference| /
// (|central_difference| + 1e-12) for the scalar-valued computation that
// `build` constructs over leaf nodes holding `params`. build must be a pure
// function of the leaf values (it is re-invoked for every probe, possibly
// from several threads at once).
double check_gradients(
    const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
    const std::vector<Tensor>& params, double eps);

}  // namespace icf
