#include "tsfm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "tsfm/errors.hpp"

namespace tsfm {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  if (requires_grad) n->grad.assign(n->data.size(), 0.0);
  return n;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!node_->leaf) throw ContractError("mutable_data() on a non-leaf tensor produced by '" + std::string(node_->op) + "'");
  ++node_->version;
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->leaf; }

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

void Tensor::backward() const {
  if (!node_) throw ContractError("backward() on undefined tensor");
  if (numel() != 1) throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  if (node_->backward_done) throw ContractError("backward() called twice on the same loss without rebuilding the graph");
  if (!node_->requires_grad) throw ContractError("backward() on a loss that does not depend on any requires_grad tensor");

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (n->released) throw ContractError("backward() through a graph that was already consumed");
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (auto* n : order) {
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (n->inputs[i]->version != n->input_versions[i]) {
        throw ContractError(std::string("input of '") + n->op + "' was modified after it was used in the graph");
      }
    }
  }

  node_->grad_buffer()[0] = 1.0;
  for (auto* n : order) {
    if (n->backward) {
      n->grad_buffer();
      n->backward(*n);
    }
  }
  // Clearing inputs can drop the last reference to nodes still in `order`.
  std::vector<std::shared_ptr<detail::Node>> keep;
  keep.reserve(order.size());
  for (auto* n : order)
    for (auto& in : n->inputs) keep.push_back(in);
  for (auto* n : order) {
    if (n->leaf) continue;
    n->backward = nullptr;
    n->inputs.clear();
    n->input_versions.clear();
    if (n != node_.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
    n->released = true;
  }
  node_->released = false;
  node_->backward_done = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor detail::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, const char* op,
                           std::function<void(Node&)> backward) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  auto n = new_node(std::move(shape), std::move(data), false);
  n->op = op;
  if (needs) {
    n->requires_grad = true;
    n->leaf = false;
    n->backward = std::move(backward);
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) {
      n->input_versions.push_back(in.node()->version);
      n->inputs.push_back(in.node());
    }
  }
  return Tensor::from_node(std::move(n));
}

}  // namespace tsfm
