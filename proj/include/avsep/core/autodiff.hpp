// avsep/core/autodiff.hpp

// Copyright 2026  avsep contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "avsep/core/ndarray.hpp"
#include "avsep/core/rng.hpp"

namespace avsep {

// Reverse-mode tape over NDArray values. A forward pass builds a DAG of
// shared nodes; backward() runs the closures in reverse topological order.
// Parameter leaves accumulate gradients across backward() calls so a batch
// can sum per-sample gradients; intermediate nodes are fresh per forward.

namespace detail {

struct Node {
  NDArray value;
  NDArray grad;  // allocated on first use
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;
  std::string name;

  NDArray& ensure_grad() {
    if (grad.size() == 0) grad = NDArray(value.shape());
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph construction in scope (eval-mode forward passes).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Var {
 public:
  Var() = default;

  static Var constant(NDArray v) {
    Var out;
    out.node_ = std::make_shared<detail::Node>();
    out.node_->value = std::move(v);
    out.node_->is_leaf = true;
    return out;
  }

  static Var param(NDArray v, std::string name = "") {
    Var out;
    out.node_ = std::make_shared<detail::Node>();
    out.node_->value = std::move(v);
    out.node_->requires_grad = true;
    out.node_->is_leaf = true;
    out.node_->name = std::move(name);
    return out;
  }

  bool defined() const { return node_ != nullptr; }
  const NDArray& value() const { return node_->value; }
  NDArray& value_mut() { return node_->value; }
  const NDArray& grad() const { return node_->grad; }
  NDArray& grad_mut() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }

  void zero_grad() {
    if (node_ && node_->grad.size() > 0) node_->grad.fill(0.0);
  }

  std::shared_ptr<detail::Node>& node() { return node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Creates a result node; wires parents + closure only when grads are live.
inline Var make_op(NDArray value,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> make_backprop_for) {
  Var out = Var::constant(std::move(value));
  bool need = false;
  if (grad_mode()) {
    for (const auto& p : parents)
      if (p->requires_grad) need = true;
  }
  if (need) {
    Node& n = *out.node();
    n.is_leaf = false;
    n.requires_grad = true;
    n.parents = std::move(parents);
    Node* self = &n;
    auto fn = std::move(make_backprop_for);
    n.backprop = [self, fn]() { fn(*self); };
  }
  return out;
}

inline void accum_flat(Node& p, const Eigen::ArrayXd& contribution) {
  if (!p.requires_grad) return;
  p.ensure_grad().vec().array() += contribution;
}

}  // namespace detail

inline double scalar_value(const Var& v) {
  require(v.value().size() == 1, "scalar_value: not a scalar");
  return v.value()[0];
}

inline void backward(const Var& loss) {
  require(loss.defined() && loss.value().size() == 1,
          "backward: loss must be a defined scalar");
  // Topological order over the requires_grad subgraph.
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (loss.node()->requires_grad) stack.push_back({loss.node().get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent == 0) {
      if (visited.count(f.n)) {
        stack.pop_back();
        continue;
      }
      visited.insert(f.n);
    }
    if (f.next_parent < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) stack.push_back({p, 0});
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }
  // Intermediates start from zero each backward; leaves accumulate.
  for (detail::Node* n : topo) {
    if (!n->is_leaf) {
      n->ensure_grad();
      n->grad.fill(0.0);
    } else {
      n->ensure_grad();
    }
  }
  if (loss.node()->requires_grad) {
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop();
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops.
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "add: shape mismatch");
  NDArray v(a.value().shape());
  v.vec() = a.value().vec() + b.value().vec();
  auto pa = a.node(), pb = b.node();
  return detail::make_op(std::move(v), {pa, pb}, [pa, pb](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array());
    detail::accum_flat(*pb, self.grad.vec().array());
  });
}

inline Var sub(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "sub: shape mismatch");
  NDArray v(a.value().shape());
  v.vec() = a.value().vec() - b.value().vec();
  auto pa = a.node(), pb = b.node();
  return detail::make_op(std::move(v), {pa, pb}, [pa, pb](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array());
    detail::accum_flat(*pb, -self.grad.vec().array());
  });
}

inline Var mul(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "mul: shape mismatch");
  NDArray v(a.value().shape());
  v.vec().array() = a.value().vec().array() * b.value().vec().array();
  auto pa = a.node(), pb = b.node();
  return detail::make_op(std::move(v), {pa, pb}, [pa, pb](detail::Node& self) {
    detail::accum_flat(*pa,
                       self.grad.vec().array() * pb->value.vec().array());
    detail::accum_flat(*pb,
                       self.grad.vec().array() * pa->value.vec().array());
  });
}

inline Var scale(const Var& a, double c) {
  NDArray v(a.value().shape());
  v.vec() = a.value().vec() * c;
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa, c](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array() * c);
  });
}

/// y = a * s with s a {1,1} learnable scalar.
inline Var mul_scalar_var(const Var& a, const Var& s) {
  require(s.value().size() == 1, "mul_scalar_var: s not scalar");
  NDArray v(a.value().shape());
  v.vec() = a.value().vec() * s.value()[0];
  auto pa = a.node(), ps = s.node();
  return detail::make_op(std::move(v), {pa, ps}, [pa, ps](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array() * ps->value[0]);
    if (ps->requires_grad)
      ps->ensure_grad()[0] +=
          (self.grad.vec().array() * pa->value.vec().array()).sum();
  });
}

/// y = a + s broadcast, s a {1,1} learnable scalar.
inline Var add_scalar_var(const Var& a, const Var& s) {
  require(s.value().size() == 1, "add_scalar_var: s not scalar");
  NDArray v(a.value().shape());
  v.vec().array() = a.value().vec().array() + s.value()[0];
  auto pa = a.node(), ps = s.node();
  return detail::make_op(std::move(v), {pa, ps}, [pa, ps](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array());
    if (ps->requires_grad)
      ps->ensure_grad()[0] += self.grad.vec().sum();
  });
}

inline Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 &&
              a.value().cols() == b.value().rows(),
          "matmul: incompatible shapes");
  NDArray v({a.value().rows(), b.value().cols()});
  v.mat().noalias() = a.value().mat() * b.value().mat();
  auto pa = a.node(), pb = b.node();
  return detail::make_op(std::move(v), {pa, pb}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad)
      pa->ensure_grad().mat().noalias() +=
          self.grad.mat() * pb->value.mat().transpose();
    if (pb->requires_grad)
      pb->ensure_grad().mat().noalias() +=
          pa->value.mat().transpose() * self.grad.mat();
  });
}

/// y = x + b * ones(1,C), b of shape {R,1}.
inline Var add_bias_cols(const Var& x, const Var& b) {
  require(x.value().rank() == 2 && b.value().rank() == 2 &&
              b.value().cols() == 1 && b.value().rows() == x.value().rows(),
          "add_bias_cols: shape mismatch");
  NDArray v(x.value().shape());
  v.mat() = x.value().mat().colwise() +
            Eigen::VectorXd(b.value().mat().col(0));
  auto px = x.node(), pb = b.node();
  return detail::make_op(std::move(v), {px, pb}, [px, pb](detail::Node& self) {
    detail::accum_flat(*px, self.grad.vec().array());
    if (pb->requires_grad)
      pb->ensure_grad().mat().col(0) += self.grad.mat().rowwise().sum();
  });
}

/// W x + b. W {out,in}, x {in,J}, b {out,1} (b may be undefined for no bias).
inline Var linear(const Var& w, const Var& x, const Var& b) {
  Var y = matmul(w, x);
  if (b.defined()) y = add_bias_cols(y, b);
  return y;
}

inline Var tanh_v(const Var& a) {
  NDArray v(a.value().shape());
  v.vec().array() = a.value().vec().array().tanh();
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array() *
                                (1.0 - self.value.vec().array().square()));
  });
}

inline Var sigmoid_v(const Var& a) {
  NDArray v(a.value().shape());
  v.vec().array() = 1.0 / (1.0 + (-a.value().vec().array()).exp());
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa](detail::Node& self) {
    auto y = self.value.vec().array();
    detail::accum_flat(*pa, self.grad.vec().array() * y * (1.0 - y));
  });
}

inline Var relu_v(const Var& a) {
  NDArray v(a.value().shape());
  v.vec().array() = a.value().vec().array().max(0.0);
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa](detail::Node& self) {
    detail::accum_flat(
        *pa, self.grad.vec().array() *
                 (pa->value.vec().array() > 0.0).cast<double>());
  });
}

/// |a| with subgradient 0 at 0.
inline Var abs_v(const Var& a) {
  NDArray v(a.value().shape());
  v.vec().array() = a.value().vec().array().abs();
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array() *
                                pa->value.vec().array().sign());
  });
}

inline Var square_v(const Var& a) {
  NDArray v(a.value().shape());
  v.vec().array() = a.value().vec().array().square();
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa](detail::Node& self) {
    detail::accum_flat(*pa, self.grad.vec().array() * 2.0 *
                                pa->value.vec().array());
  });
}

inline Var sum_all(const Var& a) {
  NDArray v = make_scalar(a.value().vec().sum());
  auto pa = a.node();
  return detail::make_op(std::move(v), {pa}, [pa](detail::Node& self) {
    detail::accum_flat(*pa, Eigen::ArrayXd::Constant(
                                static_cast<Eigen::Index>(pa->value.size()),
                                self.grad[0]));
  });
}

inline Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

inline Var concat_rows(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 &&
              a.value().cols() == b.value().cols(),
          "concat_rows: shape mismatch");
  std::size_t ra = a.value().rows(), rb = b.value().rows(),
              c = a.value().cols();
  NDArray v({ra + rb, c});
  v.mat().topRows(static_cast<Eigen::Index>(ra)) = a.value().mat();
  v.mat().bottomRows(static_cast<Eigen::Index>(rb)) = b.value().mat();
  auto pa = a.node(), pb = b.node();
  return detail::make_op(
      std::move(v), {pa, pb}, [pa, pb, ra, rb](detail::Node& self) {
        if (pa->requires_grad)
          pa->ensure_grad().mat() +=
              self.grad.mat().topRows(static_cast<Eigen::Index>(ra));
        if (pb->requires_grad)
          pb->ensure_grad().mat() +=
              self.grad.mat().bottomRows(static_cast<Eigen::Index>(rb));
      });
}

inline Var slice_rows(const Var& x, std::size_t r0, std::size_t count) {
  require(x.value().rank() == 2 && r0 + count <= x.value().rows(),
          "slice_rows: out of range");
  NDArray v({count, x.value().cols()});
  v.mat() = x.value().mat().middleRows(static_cast<Eigen::Index>(r0),
                                       static_cast<Eigen::Index>(count));
  auto px = x.node();
  return detail::make_op(
      std::move(v), {px}, [px, r0, count](detail::Node& self) {
        if (px->requires_grad)
          px->ensure_grad().mat().middleRows(
              static_cast<Eigen::Index>(r0),
              static_cast<Eigen::Index>(count)) += self.grad.mat();
      });
}

/// y[:,j] = x[:,idx[j]]; scatter-adds on backward. Used for video/audio
/// frame alignment where several output frames may share a source column.
inline Var gather_cols(const Var& x, std::vector<std::size_t> idx) {
  require(x.value().rank() == 2, "gather_cols: rank");
  for (std::size_t i : idx)
    require(i < x.value().cols(), "gather_cols: index out of range");
  NDArray v({x.value().rows(), idx.size()});
  for (std::size_t j = 0; j < idx.size(); ++j)
    v.mat().col(static_cast<Eigen::Index>(j)) =
        x.value().mat().col(static_cast<Eigen::Index>(idx[j]));
  auto px = x.node();
  return detail::make_op(
      std::move(v), {px}, [px, idx = std::move(idx)](detail::Node& self) {
        if (!px->requires_grad) return;
        auto g = px->ensure_grad().mat();
        for (std::size_t j = 0; j < idx.size(); ++j)
          g.col(static_cast<Eigen::Index>(idx[j])) +=
              self.grad.mat().col(static_cast<Eigen::Index>(j));
      });
}

/// Inverted dropout: active only in train mode, identity otherwise.
inline Var dropout(const Var& x, double rate, Rng& rng, bool train) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate in [0,1)");
  if (!train || rate == 0.0) return x;
  double keep = 1.0 - rate;
  NDArray mask(x.value().shape());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  NDArray v(x.value().shape());
  v.vec().array() = x.value().vec().array() * mask.vec().array();
  auto px = x.node();
  return detail::make_op(
      std::move(v), {px}, [px, mask = std::move(mask)](detail::Node& self) {
        detail::accum_flat(*px, self.grad.vec().array() * mask.vec().array());
      });
}

/// Column-wise cosine similarity of two D x J matrices -> {1,J}.
/// Norms are guarded by max(||.||, eps); values clamped to [-1,1] against
/// round-off (the clamp is gradient-transparent).
inline Var colwise_cosine(const Var& a, const Var& b, double eps) {
  require(a.value().same_shape(b.value()) && a.value().rank() == 2,
          "colwise_cosine: shape mismatch");
  require(eps > 0.0, "colwise_cosine: eps must be positive");
  std::size_t cols = a.value().cols();
  NDArray v({1, cols});
  Eigen::VectorXd na(cols), nb(cols), dots(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    auto cj = static_cast<Eigen::Index>(j);
    na[cj] = a.value().mat().col(cj).norm();
    nb[cj] = b.value().mat().col(cj).norm();
    dots[cj] = a.value().mat().col(cj).dot(b.value().mat().col(cj));
    double d = dots[cj] / (std::max(na[cj], eps) * std::max(nb[cj], eps));
    v.at(0, j) = std::clamp(d, -1.0, 1.0);
  }
  auto pa = a.node(), pb = b.node();
  return detail::make_op(
      std::move(v), {pa, pb},
      [pa, pb, na = std::move(na), nb = std::move(nb), dots = std::move(dots),
       eps](detail::Node& self) {
        Eigen::Index cols = self.value.mat().cols();
        for (Eigen::Index j = 0; j < cols; ++j) {
          double g = self.grad.at(0, static_cast<std::size_t>(j));
          if (g == 0.0) continue;
          double ca = std::max(na[j], eps), cb = std::max(nb[j], eps);
          double inv = 1.0 / (ca * cb);
          double d_raw = dots[j] * inv;
          auto aj = pa->value.mat().col(j);
          auto bj = pb->value.mat().col(j);
          if (pa->requires_grad) {
            auto ga = pa->ensure_grad().mat().col(j);
            ga += g * inv * bj;
            if (na[j] > eps) ga -= g * d_raw / (na[j] * na[j]) * aj;
          }
          if (pb->requires_grad) {
            auto gb = pb->ensure_grad().mat().col(j);
            gb += g * inv * aj;
            if (nb[j] > eps) gb -= g * d_raw / (nb[j] * nb[j]) * bj;
          }
        }
      });
}

}  // namespace avsep
