#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dsanet/random.hpp"

namespace dsanet::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Dense row-major float64 array with an optional gradient accumulator.
//
// Tensor is a shared handle: copies alias the same storage, the way layer
// parameters are shared between a model and every graph that reads them.
// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  // Tensors are shared handles, so the element and gradient views are
  // writable through const copies too.
  std::span<double> values() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  // Empty span when requires_grad() is false.
  std::span<double> grad() const;
  void zero_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

enum class Mode { kTrain, kInfer };

// While alive, operations on the current thread produce plain values and
// record nothing on the tape.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

// Tape of the operations performed during one forward pass. Nodes are
// appended as operations execute, so the tape order is a topological order
// of the dataflow and backward() simply walks it in reverse.
class Graph {
 public:
  explicit Graph(std::uint64_t seed = 0) : rng_(seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Randomness for stochastic layers (dropout masks).
  Rng& rng() { return rng_; }

  void record(Tensor output, std::function<void()> backward);
  std::size_t node_count() const { return nodes_.size(); }

  // Populates grad on every requires_grad tensor reachable from loss.
  // Intermediate gradients are reset first, so repeated calls add one full
  // gradient to each leaf per call.
  void backward(const Tensor& loss);

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  Rng rng_;
};

}  // namespace dsanet::ad
