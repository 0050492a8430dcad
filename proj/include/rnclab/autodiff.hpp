#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rnclab/matrix.hpp"

namespace rnclab {

class Var;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // allocated only when requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // empty for leaves

  bool is_leaf() const { return parents.empty() && !backward_fn; }
};

// Builds an interior node. requires_grad is the OR of the parents'; under
// a NoGradGuard the parents and backward rule are dropped and the node is
// a plain constant.
Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn);

bool grad_enabled();

}  // namespace detail

// Disables graph construction in scope; ops built inside produce constants.
// Used for value-only evaluation (finite differences, metrics).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Handle to one node of a define-by-run graph. Interior nodes live until
// the last handle to the expression is dropped; parameter leaves outlive
// the graphs built on top of them.
class Var {
 public:
  Var() = default;

  static Var leaf(Matrix value, bool trainable = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  Matrix& value();  // in-place updates (optimizer steps, FD perturbation)
  const Matrix& grad() const;
  void zero_grad();
  bool requires_grad() const;

  // Leaves only. Affects graphs built afterwards; used to freeze the
  // encoder for stage-2 training.
  void set_trainable(bool trainable);

  // Reverse pass from a 1x1 node. Interior gradients are recomputed from
  // scratch on every call; leaf gradients accumulate until zero_grad().
  // Each reachable node is visited exactly once.
  void backward() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Var detail::make_op(Matrix, std::vector<Var>, std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// --- ops --------------------------------------------------------------

Var matmul(const Var& a, const Var& b);

// Elementwise family. Binary ops require equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var relu(const Var& x);  // backward passes zero at exactly 0
Var tanh(const Var& x);

// Broadcasts a 1xd row over an Mxd matrix; the bias add an MLP needs.
Var add_row(const Var& x, const Var& row);

Var sum_all(const Var& x);  // 1x1

// Mxd -> MxM, entry (i,j) = squared L2 distance of rows i and j.
// Output is exactly symmetric with an exactly zero diagonal.
Var pairwise_sq_l2(const Var& x);

// Named collection of trainable leaves; iteration is sorted by name.
class ParameterSet {
 public:
  using Map = std::map<std::string, Var>;

  // Creates a trainable leaf. Throws ArgumentError on duplicate names.
  Var& add(const std::string& name, Matrix init);
  // Shares handles from another set (same underlying leaves).
  void adopt(const ParameterSet& other);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Var& at(const std::string& name);
  const Var& at(const std::string& name) const;

  void zero_grads();
  void set_trainable(bool trainable);

  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

 private:
  Map params_;
};

}  // namespace rnclab
