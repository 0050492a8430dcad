#include "rnclab/autodiff.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "rnclab/errors.hpp"

namespace rnclab {

namespace {

thread_local bool g_grad_enabled = true;

void check_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": a is " + a.shape_str() +
                         ", b is " + b.shape_str());
  }
}

void check_defined(const char* op, const Var& v) {
  if (!v.defined()) throw ArgumentError(std::string(op) + ": empty Var");
}

}  // namespace

namespace detail {

bool grad_enabled() { return g_grad_enabled; }

Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs_grad = false;
    for (const Var& p : parents) needs_grad = needs_grad || p.requires_grad();
    if (needs_grad) {
      node->requires_grad = true;
      node->grad = Matrix(node->value.rows(), node->value.cols());
      node->parents.reserve(parents.size());
      for (Var& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var(std::move(node));
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var Var::leaf(Matrix value, bool trainable) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = trainable;
  if (trainable) node->grad = Matrix(node->value.rows(), node->value.cols());
  return Var(std::move(node));
}

const Matrix& Var::value() const {
  if (!node_) throw ArgumentError("Var::value: empty Var");
  return node_->value;
}

Matrix& Var::value() {
  if (!node_) throw ArgumentError("Var::value: empty Var");
  return node_->value;
}

const Matrix& Var::grad() const {
  if (!node_) throw ArgumentError("Var::grad: empty Var");
  if (!node_->requires_grad) {
    throw ArgumentError("Var::grad: node does not require gradients");
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (node_ && node_->requires_grad) node_->grad.fill(0.0);
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Var::set_trainable(bool trainable) {
  if (!node_) throw ArgumentError("Var::set_trainable: empty Var");
  if (!node_->is_leaf()) {
    throw ArgumentError("Var::set_trainable: only leaves can be toggled");
  }
  node_->requires_grad = trainable;
  if (trainable && node_->grad.size() != node_->value.size()) {
    node_->grad = Matrix(node_->value.rows(), node_->value.cols());
  }
}

void Var::backward() const {
  if (!node_) throw ArgumentError("backward: empty Var");
  if (node_->value.rows() != 1 || node_->value.cols() != 1) {
    throw ArgumentError("backward: loss must be 1x1, got " + node_->value.shape_str());
  }
  if (!node_->requires_grad) return;  // nothing trainable below

  // Iterative post-order: parents before the node itself.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* child = n->parents[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.fill(0.0);
  }
  node_->grad.at(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// --- ops --------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  check_defined("matmul", a);
  check_defined("matmul", b);
  if (a.value().cols() != b.value().rows()) {
    throw DimensionError("matmul: a is " + a.value().shape_str() + ", b is " +
                         b.value().shape_str());
  }
  Matrix out = mat_mul(a.value(), b.value());
  return detail::make_op(std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Matrix ga = mat_mul_nt(self.grad, pb.value);
      for (std::size_t i = 0; i < ga.size(); ++i) pa.grad.values()[i] += ga.values()[i];
    }
    if (pb.requires_grad) {
      Matrix gb = mat_mul_tn(pa.value, self.grad);
      for (std::size_t i = 0; i < gb.size(); ++i) pb.grad.values()[i] += gb.values()[i];
    }
  });
}

Var add(const Var& a, const Var& b) {
  check_defined("add", a);
  check_defined("add", b);
  check_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += b.value().values()[i];
  return detail::make_op(std::move(out), {a, b}, [](detail::Node& self) {
    for (int side = 0; side < 2; ++side) {
      detail::Node& p = *self.parents[side];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        p.grad.values()[i] += self.grad.values()[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_defined("sub", a);
  check_defined("sub", b);
  check_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] -= b.value().values()[i];
  return detail::make_op(std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pa.grad.values()[i] += self.grad.values()[i];
      }
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pb.grad.values()[i] -= self.grad.values()[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_defined("mul", a);
  check_defined("mul", b);
  check_same_shape("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= b.value().values()[i];
  return detail::make_op(std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pa.grad.values()[i] += self.grad.values()[i] * pb.value.values()[i];
      }
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        pb.grad.values()[i] += self.grad.values()[i] * pa.value.values()[i];
      }
    }
  });
}

Var scale(const Var& x, double c) {
  check_defined("scale", x);
  Matrix out = x.value();
  for (double& v : out.values()) v *= c;
  return detail::make_op(std::move(out), {x}, [c](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad.values()[i] += c * self.grad.values()[i];
    }
  });
}

Var relu(const Var& x) {
  check_defined("relu", x);
  Matrix out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return detail::make_op(std::move(out), {x}, [](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.value.values()[i] > 0.0) p.grad.values()[i] += self.grad.values()[i];
    }
  });
}

Var tanh(const Var& x) {
  check_defined("tanh", x);
  Matrix out = x.value();
  for (double& v : out.values()) v = std::tanh(v);
  return detail::make_op(std::move(out), {x}, [](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double t = self.value.values()[i];
      p.grad.values()[i] += (1.0 - t * t) * self.grad.values()[i];
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  check_defined("add_row", x);
  check_defined("add_row", row);
  const Matrix& xv = x.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("add_row: x is " + xv.shape_str() + ", row is " +
                         rv.shape_str());
  }
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += rv.at(0, j);
  }
  return detail::make_op(std::move(out), {x, row}, [](detail::Node& self) {
    detail::Node& px = *self.parents[0];
    detail::Node& pr = *self.parents[1];
    if (px.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        px.grad.values()[i] += self.grad.values()[i];
      }
    }
    if (pr.requires_grad) {
      for (std::size_t i = 0; i < self.grad.rows(); ++i) {
        for (std::size_t j = 0; j < self.grad.cols(); ++j) {
          pr.grad.at(0, j) += self.grad.at(i, j);
        }
      }
    }
  });
}

Var sum_all(const Var& x) {
  check_defined("sum_all", x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  Matrix out(1, 1);
  out.at(0, 0) = s;
  return detail::make_op(std::move(out), {x}, [](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double g = self.grad.at(0, 0);
    for (double& v : p.grad.values()) v += g;
  });
}

Var pairwise_sq_l2(const Var& x) {
  check_defined("pairwise_sq_l2", x);
  const Matrix& v = x.value();
  const std::size_t m = v.rows();
  const std::size_t d = v.cols();
  if (m < 2) {
    throw ArgumentError("pairwise_sq_l2: need at least 2 rows, got " + v.shape_str());
  }
  Matrix out(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ri = v.data() + i * d;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double* rj = v.data() + j * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        double diff = ri[c] - rj[c];
        s += diff * diff;
      }
      out.at(i, j) = s;
      out.at(j, i) = s;
    }
  }
  return detail::make_op(std::move(out), {x}, [](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const Matrix& vv = p.value;
    const std::size_t m = vv.rows();
    const std::size_t d = vv.cols();
    // dL/dV = 2 (diag(rowsum(H)) V - H V), H = G + G^T.
    Matrix h(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        h.at(i, j) = self.grad.at(i, j) + self.grad.at(j, i);
      }
    }
    Matrix hv = mat_mul(h, vv);
    for (std::size_t i = 0; i < m; ++i) {
      double rowsum = 0.0;
      for (std::size_t j = 0; j < m; ++j) rowsum += h.at(i, j);
      for (std::size_t c = 0; c < d; ++c) {
        p.grad.at(i, c) += 2.0 * (rowsum * vv.at(i, c) - hv.at(i, c));
      }
    }
  });
}

// --- ParameterSet -------------------------------------------------------

Var& ParameterSet::add(const std::string& name, Matrix init) {
  auto [it, inserted] = params_.emplace(name, Var());
  if (!inserted) throw ArgumentError("ParameterSet: duplicate name '" + name + "'");
  it->second = Var::leaf(std::move(init), /*trainable=*/true);
  return it->second;
}

void ParameterSet::adopt(const ParameterSet& other) {
  for (const auto& [name, var] : other.params_) {
    auto [it, inserted] = params_.emplace(name, var);
    (void)it;
    if (!inserted) throw ArgumentError("ParameterSet::adopt: duplicate name '" + name + "'");
  }
}

Var& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("ParameterSet: no entry '" + name + "'");
  return it->second;
}

const Var& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("ParameterSet: no entry '" + name + "'");
  return it->second;
}

void ParameterSet::zero_grads() {
  for (auto& [name, var] : params_) var.zero_grad();
}

void ParameterSet::set_trainable(bool trainable) {
  for (auto& [name, var] : params_) var.set_trainable(trainable);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, var] : params_) n += var.value().size();
  return n;
}

}  // namespace rnclab
