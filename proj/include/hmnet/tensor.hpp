// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copying it aliases the same storage, which is
// what lets a parameter appear in many graphs and accumulate gradients. Use
// clone() for a deep copy.
#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hmnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return s_->data.size(); }

  // Handle semantics: constness of the handle does not extend to the values.
  std::span<double> data() const { return s_->data; }
  double& operator[](std::size_t i) const { return s_->data[i]; }
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  Tensor clone() const;
  /// Identity comparison: true when both handles alias the same storage.
  bool same(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// A recorded computation. Nodes are appended in creation order, so every
/// node's inputs were created before it; backward() walks the nodes once in
/// reverse.
///
/// A graph and the tensors it produced belong to one thread at a time.
class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  /// A graph that does not record (inference mode).
  static Graph inference() {
    Graph g;
    g.recording_ = false;
    return g;
  }

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Whether an op over these inputs needs a tape entry.
  bool needs_record(std::initializer_list<const Tensor*> inputs) const;

  /// Record `out` as produced from `inputs`. The backward function receives
  /// the output gradient and must accumulate into the inputs' gradients.
  Tensor record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn);

  /// Reset the gradients of every tensor on this graph, seed d(loss)=1, and
  /// propagate. Leaves that requires_grad end up holding d(loss)/d(leaf);
  /// participating tensors with no path to the loss hold zeros.
  void backward(const Tensor& loss);

 private:
  struct Node {
    Tensor out;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

// Tensor files: little-endian. Header is the magic "HMT1", a uint32 rank,
// then rank uint64 dims; payload is numel float64 values in row-major order.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace hmnet
