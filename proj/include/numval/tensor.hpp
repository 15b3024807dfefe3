#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "numval/common.hpp"

namespace numval {

using Shape = std::vector<long>;

namespace detail {
// Tape identity. An address would be reused by the next stack-allocated
// tape, silently validating stale node ids, so tapes get generation numbers.
inline std::uint64_t next_tape_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// ---------------------------------------------------------------------------
// Tensor: a dense row-major buffer with a shape, optionally recorded on a
// Tape. Copies are shallow (shared buffer); ops never mutate their inputs.
// Scalars use an empty shape. Real is float for training, double for the
// finite-difference gradient checks.
// ---------------------------------------------------------------------------

template <class Real>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<Real>> data;
  int node = -1;            // id on the owning tape, -1 when untracked
  std::uint64_t tape = 0;   // generation id of the owning tape; node ids are meaningless across tapes

  Tensor() = default;

  static Tensor zeros(Shape s) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<Real>>(shape_numel(t.shape), Real(0));
    return t;
  }

  static Tensor full(Shape s, Real v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : *t.data) x = v;
    return t;
  }

  static Tensor scalar(Real v) {
    Tensor t;
    t.shape = {};
    t.data = std::make_shared<std::vector<Real>>(1, v);
    return t;
  }

  static Tensor from(Shape s, std::vector<Real> v) {
    if (shape_numel(s) != static_cast<long>(v.size()))
      throw DimensionError("Tensor::from: " + shape_str(s) + " does not hold " +
                           std::to_string(v.size()) + " elements");
    Tensor t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<Real>>(std::move(v));
    return t;
  }

  long size() const { return data ? static_cast<long>(data->size()) : 0; }
  long rows() const { return shape.size() == 2 ? shape[0] : 1; }
  long cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 1); }
  bool is_matrix() const { return shape.size() == 2; }
  bool is_scalar() const { return shape.empty(); }
  bool tracked() const { return node >= 0; }

  // Node id as seen by the tape with generation `tid`: -1 unless this tensor
  // was recorded there.
  int node_on(std::uint64_t tid) const { return (node >= 0 && tape == tid) ? node : -1; }

  Real* ptr() { return data->data(); }
  const Real* ptr() const { return data->data(); }
  Real& at(long i) { return (*data)[i]; }
  Real at(long i) const { return (*data)[i]; }
  Real& at(long r, long c) { return (*data)[r * cols() + c]; }
  Real at(long r, long c) const { return (*data)[r * cols() + c]; }

  Real item() const {
    if (size() != 1) throw ContractError("Tensor::item on non-scalar " + shape_str(shape));
    return (*data)[0];
  }

  // Same buffer, off the tape. Gradient stops here.
  Tensor detach() const {
    Tensor t = *this;
    t.node = -1;
    t.tape = 0;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<Real>>(*data);
    return t;
  }
};

// ---------------------------------------------------------------------------
// Tape: ordered operation records for reverse-mode differentiation. Node i's
// parents always have ids < i, so one reverse sweep is a valid topological
// traversal visiting each node exactly once. Gradients accumulate across
// backward() calls until reset_grads().
// ---------------------------------------------------------------------------

template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<Real>&)>;

  std::uint64_t id() const { return id_; }

  // Registers a leaf (no backward function). Idempotent per tensor and tape;
  // a node left over from another tape is simply replaced.
  int watch(Tensor<Real>& t) {
    if (t.node_on(id_) >= 0) return t.node;
    t.node = record(t.shape, {}, nullptr);
    t.tape = id_;
    return t.node;
  }

  int record(Shape out_shape, std::vector<int> parents, BackwardFn back) {
    nodes_.push_back(Node{std::move(out_shape), std::move(parents), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Records `out` as the result of an op and stamps its tape identity.
  int record(Tensor<Real>& out, std::vector<int> parents, BackwardFn back) {
    out.node = record(out.shape, std::move(parents), std::move(back));
    out.tape = id_;
    return out.node;
  }

  // Reverse sweep from a scalar root. Op-node gradients are consumed by the
  // sweep; leaf gradients persist, so repeated calls accumulate at leaves.
  void backward(const Tensor<Real>& root) {
    if (root.node_on(id_) < 0)
      throw ContractError("backward: root is not on this tape");
    if (root.size() != 1)
      throw ContractError("backward: root must be scalar, got " + shape_str(root.shape));
    grads_.resize(nodes_.size());
    grad_buf(root.node)[0] += Real(1);
    for (int i = root.node; i >= 0; --i) {
      if (grads_[i] && nodes_[i].back) {
        nodes_[i].back(*this, *grads_[i]);
        ++visits_;
        grads_[i].reset();
      }
    }
  }

  // Gradient of a tracked tensor; nullptr if backward never reached it.
  const std::vector<Real>* grad(const Tensor<Real>& t) const {
    if (t.node_on(id_) < 0 || static_cast<size_t>(t.node) >= grads_.size()) return nullptr;
    return grads_[t.node].get();
  }

  // Buffer for accumulation inside backward closures; allocated as zeros.
  std::vector<Real>& grad_buf(int node) {
    if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
    auto& slot = grads_[node];
    if (!slot) slot = std::make_unique<std::vector<Real>>(shape_numel(nodes_[node].shape), Real(0));
    return *slot;
  }

  void reset_grads() {
    grads_.clear();
    visits_ = 0;
  }

  size_t num_nodes() const { return nodes_.size(); }
  size_t backward_visits() const { return visits_; }
  const Shape& node_shape(int id) const { return nodes_[id].shape; }
  const std::vector<int>& node_parents(int id) const { return nodes_[id].parents; }

 private:
  struct Node {
    Shape shape;
    std::vector<int> parents;
    BackwardFn back;
  };

  std::uint64_t id_ = detail::next_tape_id();
  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<std::vector<Real>>> grads_;
  size_t visits_ = 0;
};

}  // namespace numval
