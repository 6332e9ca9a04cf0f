#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tsfm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value in the differentiation graph. Interior nodes keep their inputs
// and a backward closure until the graph is consumed by Tensor::backward().
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  bool backward_done = false;
  std::uint64_t seq = 0;
  std::uint64_t version = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::vector<std::uint64_t> input_versions;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode differentiation.
//
// Tensor is a shared handle: copies refer to the same storage, which is how
// parameters are shared between a model and its optimizer. Values produced by
// operations are immutable; only leaves may be written through
// mutable_data(), and writing a leaf that an un-run graph still references
// makes the next backward() throw.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Empty span when no gradient has been allocated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Same values, cut from the graph.
  Tensor detach() const;

  // Populates gradients of every requires_grad leaf reachable from this
  // scalar. The graph is released afterwards; a second call throws.
  void backward() const;

  const char* op_name() const;
  std::shared_ptr<detail::Node> node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

// Builds an op result. When recording is on and any input requires grad the
// result joins the graph with the given backward closure.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, const char* op,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace tsfm
