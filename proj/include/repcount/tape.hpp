#ifndef REPCOUNT_TAPE_HPP
#define REPCOUNT_TAPE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "repcount/tensor.hpp"

namespace repcount {

// Reverse-mode differentiation tape. Ops append nodes in execution order
// (which is a topological order by construction); backward() walks the
// record in reverse exactly once, accumulating gradients additively across
// fan-out. A tape lives for one forward/backward pass; tensors fed to
// input() are aliased, not copied, so parameters can be shared across the
// tapes of a batch without duplication.
class Tape {
 public:
  using NodeId = int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId input(const Tensor& v, bool requires_grad = false);

  // elementwise
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId affine(NodeId a, double mul, double shift);  // mul·x + shift
  NodeId exp(NodeId a);
  NodeId log(NodeId a);  // domain x > 0
  NodeId relu(NodeId a);

  // reductions
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);
  NodeId mean_rows(NodeId a, int row_begin, int row_end);  // [m×d] → [d], half-open range

  // linear algebra
  NodeId matmul(NodeId a, NodeId b);     // [m×k]·[k×n]
  // as matmul, but each inner product accumulates its partial products in
  // ascending value order, so simultaneously permuting a's columns and b's
  // rows cannot change the result (used by the input projection to make the
  // model invariant to feature-dimension ordering, bit for bit)
  NodeId matmul_sorted(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);  // [m×k]·[n×k]ᵀ
  NodeId bias_add_rows(NodeId x, NodeId b);
  NodeId softmax_rows(NodeId a);  // stabilized by row-max subtraction
  NodeId layer_norm_rows(NodeId x, NodeId gain, NodeId bias);
  NodeId cosine_sim(NodeId a, NodeId b);  // [d],[d] → scalar; zero norm rejected

  // structured
  NodeId conv1d_temporal(NodeId x, NodeId w, NodeId b);  // [L×Din],[k×Din×Dout],[Dout]; odd k; edge-replicated
  NodeId conv2d(NodeId x, NodeId w, NodeId b);           // [C×H×W],[Cout×C×3×3],[Cout]; edge-replicated
  NodeId sliding_mean_rows(NodeId x, int width);         // centered window, edge-replicated
  NodeId flatten_frames(NodeId x);                       // [C×L×L] → [L×(C·L)], channel-major columns
  NodeId concat_channels(const std::vector<NodeId>& parts);  // [L×L] or [c×L×L] parts → [Σc×L×L]
  NodeId concat_cols(const std::vector<NodeId>& parts);      // [m×c_i] parts → [m×Σc]
  NodeId stack_scalars(const std::vector<NodeId>& parts);    // n scalars → [n]
  NodeId logsumexp(NodeId v);  // [n] → scalar, max-stabilized

  void backward(NodeId root);  // root must be scalar

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].rg; }
  // gradient accumulated by the last backward(); zeros if the node was not
  // on any path to the root
  Tensor grad(NodeId id) const;
  const Tensor* grad_ptr(NodeId id) const;  // nullptr when untouched
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool rg = false;
    std::function<void()> back;  // empty for leaves and non-grad nodes
  };

  std::vector<Node> nodes_;

  NodeId push(Tensor value, bool rg, std::function<void()> back);
  Tensor& grad_acc(NodeId id);  // allocates zeros on first touch
  friend struct TapeOps;
};

// max over coordinates of |analytic − central difference| / max(1, |central|).
// build() must reconstruct the same scalar computation from the given leaf
// nodes each time it is called (the leaves are registered from theta in
// order). eps is the central-difference step.
double grad_check(const std::vector<Tensor>& theta,
                  const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
                  double eps);

}  // namespace repcount

#endif
