#include "vdls/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vdls {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

float* detail::Node::grad_data() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  return grad.data();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, float fill) : node_(std::make_shared<detail::Node>()) {
  const auto n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->value.assign(static_cast<size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : node_(std::make_shared<detail::Node>()) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::out_of_range("axis out of range for " + shape_str(shape()));
  return node_->shape[static_cast<size_t>(axis)];
}

int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }

std::span<const float> Tensor::values() const { return node_->value; }
std::span<float> Tensor::mutable_values() { return node_->value; }
const std::vector<float>& Tensor::vec() const { return node_->value; }

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

float Tensor::at(std::initializer_list<int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw std::invalid_argument("index rank mismatch");
  int64_t flat = 0;
  size_t i = 0;
  for (int64_t v : index) {
    if (v < 0 || v >= s[i]) throw std::out_of_range("index out of range");
    flat = flat * s[i] + v;
    ++i;
  }
  return node_->value[static_cast<size_t>(flat)];
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const float> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const { return Tensor(shape(), vec()); }

void Tensor::backward() const {
  if (numel() != 1) throw std::invalid_argument("backward() requires a scalar, got " + shape_str(shape()));
  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_data()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward && !(*it)->grad.empty()) (*it)->backward(**it);
  }
}

namespace detail {

bool needs_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

std::shared_ptr<Node> make_result(Shape shape, std::vector<float> values,
                                  std::initializer_list<Tensor> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (!grad_enabled()) return node;
  bool any = false;
  for (const auto& in : inputs) any = any || needs_grad(in);
  if (!any) return node;
  node->requires_grad = true;
  for (const auto& in : inputs) {
    if (in.defined()) node->inputs.push_back(in.node_ptr());
  }
  return node;
}

}  // namespace detail

}  // namespace vdls
