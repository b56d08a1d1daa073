#include "repcount/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "repcount/errors.hpp"
#include "repcount/kernels.hpp"

namespace repcount {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kMinNorm = 1e-150;  // below this a norm counts as degenerate

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw runtime_failure(std::string(op) + ": non-finite values");
}
}  // namespace

Tape::NodeId Tape::push(Tensor value, bool rg, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.rg = rg;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_acc(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad.store) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

Tensor Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.store) return n.grad;
  return Tensor::zeros(n.value.shape);
}

const Tensor* Tape::grad_ptr(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.grad.store ? &n.grad : nullptr;
}

Tape::NodeId Tape::input(const Tensor& v, bool requires_grad) {
  if (!v.store) throw shape_error("input: empty tensor");
  return push(v, requires_grad, {});
}

void Tape::backward(NodeId root) {
  Node& r = nodes_[static_cast<size_t>(root)];
  if (r.value.numel() != 1) throw shape_error("backward: root must be scalar");
  if (!r.rg) return;
  grad_acc(root).at(0) = 1.0;
  for (NodeId i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.rg && n.grad.store && n.back) n.back();
  }
}

// ---------------------------------------------------------------- elementwise

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "add");
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(static_cast<int>(i)) = va.data()[i] + vb.data()[i];
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, n] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      if (requires_grad(a)) {
        double* ga = grad_acc(a).data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        double* gb = grad_acc(b).data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    };
  return id;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "sub");
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = va.data()[i] - vb.data()[i];
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, n] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      if (requires_grad(a)) {
        double* ga = grad_acc(a).data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        double* gb = grad_acc(b).data();
        for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    };
  return id;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "mul");
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = va.data()[i] * vb.data()[i];
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, n] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      const double* pa = value(a).data();
      const double* pb = value(b).data();
      if (requires_grad(a)) {
        double* ga = grad_acc(a).data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
      }
      if (requires_grad(b)) {
        double* gb = grad_acc(b).data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
      }
    };
  return id;
}

Tape::NodeId Tape::affine(NodeId a, double mul, double shift) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = mul * va.data()[i] + shift;
  bool rg = requires_grad(a);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, mul, n] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      double* ga = grad_acc(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += mul * g[i];
    };
  return id;
}

Tape::NodeId Tape::exp(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = std::exp(va.data()[i]);
  check_finite(out, "exp");
  bool rg = requires_grad(a);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, n] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      const double* y = value(id).data();
      double* ga = grad_acc(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
    };
  return id;
}

Tape::NodeId Tape::log(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (va.data()[i] <= 0.0) throw runtime_failure("log: non-positive input");
    out.data()[i] = std::log(va.data()[i]);
  }
  bool rg = requires_grad(a);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, n] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      const double* x = value(a).data();
      double* ga = grad_acc(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] / x[i];
    };
  return id;
}

Tape::NodeId Tape::relu(NodeId a) {
  const Tensor& va = value(a);
  Tensor out = Tensor::zeros(va.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = va.data()[i] > 0.0 ? va.data()[i] : 0.0;
  bool rg = requires_grad(a);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, n] {
      // subgradient 0 at the kink
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      const double* x = value(a).data();
      double* ga = grad_acc(a).data();
      for (int64_t i = 0; i < n; ++i)
        if (x[i] > 0.0) ga[i] += g[i];
    };
  return id;
}

// ---------------------------------------------------------------- reductions

Tape::NodeId Tape::sum_all(NodeId a) {
  const Tensor& va = value(a);
  const int64_t n = va.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += va.data()[i];
  bool rg = requires_grad(a);
  NodeId id = push(Tensor::scalar(s), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, n] {
      const double g = nodes_[static_cast<size_t>(id)].grad.at(0);
      double* ga = grad_acc(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    };
  return id;
}

Tape::NodeId Tape::mean_all(NodeId a) {
  const Tensor& va = value(a);
  const int64_t n = va.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += va.data()[i];
  const double inv = 1.0 / static_cast<double>(n);
  bool rg = requires_grad(a);
  NodeId id = push(Tensor::scalar(s * inv), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, n, inv] {
      const double g = nodes_[static_cast<size_t>(id)].grad.at(0) * inv;
      double* ga = grad_acc(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    };
  return id;
}

Tape::NodeId Tape::mean_rows(NodeId a, int row_begin, int row_end) {
  const Tensor& va = value(a);
  if (va.rank() != 2) throw shape_error("mean_rows: rank-2 input required");
  const int m = va.dim(0), d = va.dim(1);
  if (row_begin < 0 || row_end > m || row_begin >= row_end)
    throw shape_error("mean_rows: bad row range");
  Tensor out = Tensor::zeros({d});
  const double inv = 1.0 / static_cast<double>(row_end - row_begin);
  for (int i = row_begin; i < row_end; ++i)
    for (int j = 0; j < d; ++j) out.at(j) += va.at(i, j);
  for (int j = 0; j < d; ++j) out.at(j) *= inv;
  bool rg = requires_grad(a);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, row_begin, row_end, d, inv] {
      const double* g = nodes_[static_cast<size_t>(id)].grad.data();
      Tensor& ga = grad_acc(a);
      for (int i = row_begin; i < row_end; ++i)
        for (int j = 0; j < d; ++j) ga.at(i, j) += inv * g[j];
    };
  return id;
}

// ------------------------------------------------------------- linear algebra

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
    throw shape_error("matmul: incompatible shapes " + va.shape_str() + " · " + vb.shape_str());
  const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul(va.data(), vb.data(), out.data(), m, k, n);
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, m, k, n] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      if (requires_grad(a)) {
        Tensor tmp = Tensor::zeros({m, k});  // dA = dC·Bᵀ
        kernels::matmul_nt(g.data(), value(b).data(), tmp.data(), m, n, k);
        double* ga = grad_acc(a).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) ga[i] += tmp.data()[i];
      }
      if (requires_grad(b)) {
        Tensor tmp = Tensor::zeros({k, n});  // dB = Aᵀ·dC
        kernels::matmul_tn(value(a).data(), g.data(), tmp.data(), k, m, n);
        double* gb = grad_acc(b).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) gb[i] += tmp.data()[i];
      }
    };
  return id;
}

Tape::NodeId Tape::matmul_sorted(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
    throw shape_error("matmul_sorted: incompatible shapes " + va.shape_str() + " · " +
                      vb.shape_str());
  const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_sorted(va.data(), vb.data(), out.data(), m, k, n);
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, m, k, n] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      if (requires_grad(a)) {
        Tensor tmp = Tensor::zeros({m, k});  // dA = dC·Bᵀ
        kernels::matmul_nt(g.data(), value(b).data(), tmp.data(), m, n, k);
        double* ga = grad_acc(a).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) ga[i] += tmp.data()[i];
      }
      if (requires_grad(b)) {
        Tensor tmp = Tensor::zeros({k, n});  // dB = Aᵀ·dC
        kernels::matmul_tn(value(a).data(), g.data(), tmp.data(), k, m, n);
        double* gb = grad_acc(b).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) gb[i] += tmp.data()[i];
      }
    };
  return id;
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
    throw shape_error("matmul_nt: incompatible shapes " + va.shape_str() + " · " + vb.shape_str() + "ᵀ");
  const int m = va.dim(0), k = va.dim(1), n = vb.dim(0);
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nt(va.data(), vb.data(), out.data(), m, k, n);
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, m, k, n] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      if (requires_grad(a)) {
        Tensor tmp = Tensor::zeros({m, k});  // dA = dC·B
        kernels::matmul(g.data(), value(b).data(), tmp.data(), m, n, k);
        double* ga = grad_acc(a).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) ga[i] += tmp.data()[i];
      }
      if (requires_grad(b)) {
        Tensor tmp = Tensor::zeros({n, k});  // dB = dCᵀ·A
        kernels::matmul_tn(g.data(), value(a).data(), tmp.data(), n, m, k);
        double* gb = grad_acc(b).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) gb[i] += tmp.data()[i];
      }
    };
  return id;
}

Tape::NodeId Tape::bias_add_rows(NodeId x, NodeId b) {
  const Tensor& vx = value(x);
  const Tensor& vb = value(b);
  if (vx.rank() != 2 || vb.rank() != 1 || vb.dim(0) != vx.dim(1))
    throw shape_error("bias_add_rows: need [m×n] and [n]");
  const int m = vx.dim(0), n = vx.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = vx.at(i, j) + vb.at(j);
  bool rg = requires_grad(x) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, x, b, id, m, n] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      if (requires_grad(x)) {
        double* gx = grad_acc(x).data();
        const double* gp = g.data();
        for (int64_t i = 0; i < static_cast<int64_t>(m) * n; ++i) gx[i] += gp[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb.at(j) += g.at(i, j);
      }
    };
  return id;
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& va = value(a);
  if (va.rank() != 2) throw shape_error("softmax_rows: rank-2 input required");
  check_finite(va, "softmax_rows");
  const int m = va.dim(0), n = va.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = va.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, va.at(i, j));
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(va.at(i, j) - mx);
      out.at(i, j) = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < n; ++j) out.at(i, j) *= inv;
  }
  bool rg = requires_grad(a);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, a, id, m, n] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& y = value(id);
      Tensor& ga = grad_acc(a);
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
        for (int j = 0; j < n; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
    };
  return id;
}

Tape::NodeId Tape::layer_norm_rows(NodeId x, NodeId gain, NodeId bias) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  if (vx.rank() != 2 || vg.rank() != 1 || vb.rank() != 1 || vg.dim(0) != vx.dim(1) ||
      vb.dim(0) != vx.dim(1))
    throw shape_error("layer_norm_rows: need [m×n], [n], [n]");
  const int m = vx.dim(0), n = vx.dim(1);
  Tensor out = Tensor::zeros({m, n});
  Tensor xhat = Tensor::zeros({m, n});
  Tensor inv_sd = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += vx.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = vx.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double isd = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_sd.at(i) = isd;
    for (int j = 0; j < n; ++j) {
      const double h = (vx.at(i, j) - mu) * isd;
      xhat.at(i, j) = h;
      out.at(i, j) = h * vg.at(j) + vb.at(j);
    }
  }
  bool rg = requires_grad(x) || requires_grad(gain) || requires_grad(bias);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, x, gain, bias, id, m, n, xhat, inv_sd] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      const Tensor& vg = value(gain);
      if (requires_grad(gain)) {
        Tensor& gg = grad_acc(gain);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gg.at(j) += g.at(i, j) * xhat.at(i, j);
      }
      if (requires_grad(bias)) {
        Tensor& gb = grad_acc(bias);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb.at(j) += g.at(i, j);
      }
      if (requires_grad(x)) {
        Tensor& gx = grad_acc(x);
        for (int i = 0; i < m; ++i) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (int j = 0; j < n; ++j) {
            const double dh = g.at(i, j) * vg.at(j);
            mean_dh += dh;
            mean_dh_h += dh * xhat.at(i, j);
          }
          mean_dh /= n;
          mean_dh_h /= n;
          for (int j = 0; j < n; ++j) {
            const double dh = g.at(i, j) * vg.at(j);
            gx.at(i, j) += inv_sd.at(i) * (dh - mean_dh - xhat.at(i, j) * mean_dh_h);
          }
        }
      }
    };
  return id;
}

Tape::NodeId Tape::cosine_sim(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.rank() != 1 || vb.rank() != 1 || va.dim(0) != vb.dim(0))
    throw shape_error("cosine_sim: need two vectors of equal length");
  const int d = va.dim(0);
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (int i = 0; i < d; ++i) {
    dot += va.at(i) * vb.at(i);
    na2 += va.at(i) * va.at(i);
    nb2 += vb.at(i) * vb.at(i);
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na < kMinNorm || nb < kMinNorm)
    throw degenerate_input_error("cosine_sim: zero-norm input");
  const double c = dot / (na * nb);
  bool rg = requires_grad(a) || requires_grad(b);
  NodeId id = push(Tensor::scalar(c), rg, {});
  if (rg)
    nodes_.back().back = [this, a, b, id, d, na, nb, c] {
      const double g = nodes_[static_cast<size_t>(id)].grad.at(0);
      const Tensor& va = value(a);
      const Tensor& vb = value(b);
      if (requires_grad(a)) {
        Tensor& ga = grad_acc(a);
        const double s1 = 1.0 / (na * nb), s2 = c / (na * na);
        for (int i = 0; i < d; ++i) ga.at(i) += g * (vb.at(i) * s1 - va.at(i) * s2);
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        const double s1 = 1.0 / (na * nb), s2 = c / (nb * nb);
        for (int i = 0; i < d; ++i) gb.at(i) += g * (va.at(i) * s1 - vb.at(i) * s2);
      }
    };
  return id;
}

// ------------------------------------------------------------------ structured

// Convolutions are lowered to matmul through an explicit im2row gather so
// the arithmetic goes through the tiled kernels; the gather/scatter steps
// are pure data movement with fixed loop order.

Tape::NodeId Tape::conv1d_temporal(NodeId x, NodeId w, NodeId b) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  if (vx.rank() != 2 || vw.rank() != 3 || vb.rank() != 1)
    throw shape_error("conv1d_temporal: need [L×Din], [k×Din×Dout], [Dout]");
  const int L = vx.dim(0), din = vx.dim(1);
  const int kw = vw.dim(0), dout = vw.dim(2);
  if (vw.dim(1) != din || vb.dim(0) != dout) throw shape_error("conv1d_temporal: shape mismatch");
  if (kw % 2 == 0) throw config_error("conv1d_temporal: kernel width must be odd");
  const int off = (kw - 1) / 2;

  // im2row: row i gathers frames i-off .. i+off (edge-replicated), so the
  // flattened [kw·Din] column order matches w's row-major layout
  Tensor cols = Tensor::zeros({L, kw * din});
  for (int i = 0; i < L; ++i)
    for (int t = 0; t < kw; ++t) {
      int src = std::clamp(i + t - off, 0, L - 1);
      std::memcpy(&cols.at(i, t * din), &vx.at(src, 0), sizeof(double) * static_cast<size_t>(din));
    }
  Tensor out = Tensor::zeros({L, dout});
  kernels::matmul(cols.data(), vw.data(), out.data(), L, kw * din, dout);
  for (int i = 0; i < L; ++i)
    for (int o = 0; o < dout; ++o) out.at(i, o) += vb.at(o);

  bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, x, w, b, id, L, din, kw, dout, off, cols] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (int i = 0; i < L; ++i)
          for (int o = 0; o < dout; ++o) gb.at(o) += g.at(i, o);
      }
      if (requires_grad(w)) {
        Tensor tmp = Tensor::zeros({kw * din, dout});
        kernels::matmul_tn(cols.data(), g.data(), tmp.data(), kw * din, L, dout);
        double* gw = grad_acc(w).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) gw[i] += tmp.data()[i];
      }
      if (requires_grad(x)) {
        Tensor dcols = Tensor::zeros({L, kw * din});
        kernels::matmul_nt(g.data(), value(w).data(), dcols.data(), L, dout, kw * din);
        Tensor& gx = grad_acc(x);
        for (int i = 0; i < L; ++i)
          for (int t = 0; t < kw; ++t) {
            int src = std::clamp(i + t - off, 0, L - 1);
            for (int c = 0; c < din; ++c) gx.at(src, c) += dcols.at(i, t * din + c);
          }
      }
    };
  return id;
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  if (vx.rank() != 3 || vw.rank() != 4 || vb.rank() != 1)
    throw shape_error("conv2d: need [C×H×W], [Cout×C×3×3], [Cout]");
  const int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  const int cout = vw.dim(0);
  if (vw.dim(1) != C || vw.dim(2) != 3 || vw.dim(3) != 3 || vb.dim(0) != cout)
    throw shape_error("conv2d: shape mismatch");
  const int hw = H * W, patch = C * 9;

  // im2col with edge replication; column order (c, ky, kx) matches the
  // flattening of w[cout][c][ky][kx]
  Tensor cols = Tensor::zeros({hw, patch});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double* row = &cols.at(i * W + j, 0);
      int idx = 0;
      for (int c = 0; c < C; ++c)
        for (int ky = -1; ky <= 1; ++ky)
          for (int kx = -1; kx <= 1; ++kx) {
            const int si = std::clamp(i + ky, 0, H - 1);
            const int sj = std::clamp(j + kx, 0, W - 1);
            row[idx++] = vx.at(c, si, sj);
          }
    }
  Tensor prod = Tensor::zeros({hw, cout});  // (H·W)×Cout
  kernels::matmul_nt(cols.data(), vw.data(), prod.data(), hw, patch, cout);
  Tensor out = Tensor::zeros({cout, H, W});
  for (int o = 0; o < cout; ++o)
    for (int p = 0; p < hw; ++p) out.data()[static_cast<size_t>(o) * hw + p] = prod.at(p, o) + vb.at(o);

  bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, x, w, b, id, C, H, W, cout, hw, patch, cols] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      Tensor gprod = Tensor::zeros({hw, cout});
      for (int o = 0; o < cout; ++o)
        for (int p = 0; p < hw; ++p) gprod.at(p, o) = g.data()[static_cast<size_t>(o) * hw + p];
      if (requires_grad(b)) {
        Tensor& gb = grad_acc(b);
        for (int o = 0; o < cout; ++o) {
          double s = 0.0;
          for (int p = 0; p < hw; ++p) s += gprod.at(p, o);
          gb.at(o) += s;
        }
      }
      if (requires_grad(w)) {
        Tensor tmp = Tensor::zeros({cout, patch});  // dW = dYᵀ·cols
        kernels::matmul_tn(gprod.data(), cols.data(), tmp.data(), cout, hw, patch);
        double* gw = grad_acc(w).data();
        const int64_t sz = tmp.numel();
        for (int64_t i = 0; i < sz; ++i) gw[i] += tmp.data()[i];
      }
      if (requires_grad(x)) {
        Tensor dcols = Tensor::zeros({hw, patch});  // dcols = dY·W
        kernels::matmul(gprod.data(), value(w).data(), dcols.data(), hw, cout, patch);
        Tensor& gx = grad_acc(x);
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            const double* row = &dcols.at(i * W + j, 0);
            int idx = 0;
            for (int c = 0; c < C; ++c)
              for (int ky = -1; ky <= 1; ++ky)
                for (int kx = -1; kx <= 1; ++kx) {
                  const int si = std::clamp(i + ky, 0, H - 1);
                  const int sj = std::clamp(j + kx, 0, W - 1);
                  gx.at(c, si, sj) += row[idx++];
                }
          }
      }
    };
  return id;
}

Tape::NodeId Tape::sliding_mean_rows(NodeId x, int width) {
  const Tensor& vx = value(x);
  if (vx.rank() != 2) throw shape_error("sliding_mean_rows: rank-2 input required");
  if (width < 1) throw config_error("sliding_mean_rows: width must be ≥ 1");
  const int L = vx.dim(0), d = vx.dim(1);
  const int off = (width - 1) / 2;  // window [i-off, i-off+width)
  Tensor out = Tensor::zeros({L, d});
  const double inv = 1.0 / width;
  for (int i = 0; i < L; ++i)
    for (int t = 0; t < width; ++t) {
      const int src = std::clamp(i - off + t, 0, L - 1);
      for (int j = 0; j < d; ++j) out.at(i, j) += vx.at(src, j);
    }
  for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] *= inv;
  bool rg = requires_grad(x);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, x, id, L, d, width, off, inv] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      Tensor& gx = grad_acc(x);
      for (int i = 0; i < L; ++i)
        for (int t = 0; t < width; ++t) {
          const int src = std::clamp(i - off + t, 0, L - 1);
          for (int j = 0; j < d; ++j) gx.at(src, j) += inv * g.at(i, j);
        }
    };
  return id;
}

Tape::NodeId Tape::flatten_frames(NodeId x) {
  const Tensor& vx = value(x);
  if (vx.rank() != 3 || vx.dim(1) != vx.dim(2))
    throw shape_error("flatten_frames: need [C×L×L]");
  const int C = vx.dim(0), L = vx.dim(1);
  Tensor out = Tensor::zeros({L, C * L});
  for (int i = 0; i < L; ++i)
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < L; ++j) out.at(i, c * L + j) = vx.at(c, i, j);
  bool rg = requires_grad(x);
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, x, id, C, L] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      Tensor& gx = grad_acc(x);
      for (int i = 0; i < L; ++i)
        for (int c = 0; c < C; ++c)
          for (int j = 0; j < L; ++j) gx.at(c, i, j) += g.at(i, c * L + j);
    };
  return id;
}

Tape::NodeId Tape::concat_channels(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw shape_error("concat_channels: no inputs");
  int L = -1, total = 0;
  std::vector<int> chans(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = value(parts[p]);
    int c, l;
    if (v.rank() == 2 && v.dim(0) == v.dim(1)) {
      c = 1;
      l = v.dim(0);
    } else if (v.rank() == 3 && v.dim(1) == v.dim(2)) {
      c = v.dim(0);
      l = v.dim(1);
    } else {
      throw shape_error("concat_channels: parts must be [L×L] or [c×L×L]");
    }
    if (L < 0) L = l;
    if (l != L) throw shape_error("concat_channels: plane size mismatch");
    chans[p] = c;
    total += c;
  }
  Tensor out = Tensor::zeros({total, L, L});
  const size_t plane = static_cast<size_t>(L) * L;
  size_t offset = 0;
  bool rg = false;
  for (size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = value(parts[p]);
    std::memcpy(out.data() + offset, v.data(), sizeof(double) * plane * chans[p]);
    offset += plane * chans[p];
    rg = rg || requires_grad(parts[p]);
  }
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, parts, chans, plane, id] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      size_t offset = 0;
      for (size_t p = 0; p < parts.size(); ++p) {
        const size_t sz = plane * chans[p];
        if (requires_grad(parts[p])) {
          double* gp = grad_acc(parts[p]).data();
          const double* src = g.data() + offset;
          for (size_t i = 0; i < sz; ++i) gp[i] += src[i];
        }
        offset += sz;
      }
    };
  return id;
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw shape_error("concat_cols: no inputs");
  const int m = value(parts[0]).dim(0);
  int total = 0;
  std::vector<int> widths(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = value(parts[p]);
    if (v.rank() != 2 || v.dim(0) != m) throw shape_error("concat_cols: row count mismatch");
    widths[p] = v.dim(1);
    total += v.dim(1);
  }
  Tensor out = Tensor::zeros({m, total});
  bool rg = false;
  int col = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = value(parts[p]);
    for (int i = 0; i < m; ++i)
      std::memcpy(&out.at(i, col), &v.at(i, 0), sizeof(double) * static_cast<size_t>(widths[p]));
    col += widths[p];
    rg = rg || requires_grad(parts[p]);
  }
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, parts, widths, m, id] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      int col = 0;
      for (size_t p = 0; p < parts.size(); ++p) {
        if (requires_grad(parts[p])) {
          Tensor& gp = grad_acc(parts[p]);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < widths[p]; ++j) gp.at(i, j) += g.at(i, col + j);
        }
        col += widths[p];
      }
    };
  return id;
}

Tape::NodeId Tape::stack_scalars(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw shape_error("stack_scalars: no inputs");
  const int n = static_cast<int>(parts.size());
  Tensor out = Tensor::zeros({n});
  bool rg = false;
  for (int i = 0; i < n; ++i) {
    const Tensor& v = value(parts[static_cast<size_t>(i)]);
    if (v.numel() != 1) throw shape_error("stack_scalars: parts must be scalars");
    out.at(i) = v.at(0);
    rg = rg || requires_grad(parts[static_cast<size_t>(i)]);
  }
  NodeId id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, parts, n, id] {
      const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
      for (int i = 0; i < n; ++i)
        if (requires_grad(parts[static_cast<size_t>(i)]))
          grad_acc(parts[static_cast<size_t>(i)]).at(0) += g.at(i);
    };
  return id;
}

Tape::NodeId Tape::logsumexp(NodeId v) {
  const Tensor& vv = value(v);
  if (vv.rank() != 1) throw shape_error("logsumexp: vector input required");
  check_finite(vv, "logsumexp");
  const int n = vv.dim(0);
  double mx = vv.at(0);
  for (int i = 1; i < n; ++i) mx = std::max(mx, vv.at(i));
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(vv.at(i) - mx);
  const double lse = mx + std::log(s);
  bool rg = requires_grad(v);
  NodeId id = push(Tensor::scalar(lse), rg, {});
  if (rg)
    nodes_.back().back = [this, v, id, n, lse] {
      const double g = nodes_[static_cast<size_t>(id)].grad.at(0);
      const Tensor& vv = value(v);
      Tensor& gv = grad_acc(v);
      for (int i = 0; i < n; ++i) gv.at(i) += g * std::exp(vv.at(i) - lse);
    };
  return id;
}

// ------------------------------------------------------------------ grad check

double grad_check(const std::vector<Tensor>& theta,
                  const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
                  double eps) {
  // private working copies: theta storage may be shared with the caller
  std::vector<Tensor> work;
  work.reserve(theta.size());
  for (const Tensor& t : theta) work.push_back(t.clone());

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Tape::NodeId> leaves;
    for (const Tensor& t : work) leaves.push_back(tape.input(t, true));
    Tape::NodeId root = build(tape, leaves);
    if (tape.value(root).numel() != 1) throw shape_error("grad_check: build must return a scalar");
    tape.backward(root);
    for (Tape::NodeId leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  auto eval = [&]() {
    Tape tape;
    std::vector<Tape::NodeId> leaves;
    for (const Tensor& t : work) leaves.push_back(tape.input(t, false));
    return tape.value(build(tape, leaves)).at(0);
  };

  double worst = 0.0;
  for (size_t t = 0; t < work.size(); ++t) {
    double* p = work[t].data();
    const int64_t n = work[t].numel();
    for (int64_t i = 0; i < n; ++i) {
      const double keep = p[i];
      p[i] = keep + eps;
      const double up = eval();
      p[i] = keep - eps;
      const double down = eval();
      p[i] = keep;
      const double central = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[t].data()[i] - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace repcount
