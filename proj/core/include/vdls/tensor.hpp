#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vdls {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the autodiff tape. Values are written once by the op that
// creates the node; `grad` is allocated on first accumulation.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  float* grad_data();
};

}  // namespace detail

/// Dense row-major float32 tensor with reverse-mode autodiff.
///
/// `Tensor` is a cheap handle; copies share storage. Ops in ops.hpp build a
/// tape while gradient recording is enabled (see `NoGradGuard`). Calling
/// `backward()` on a scalar walks the tape in reverse topological order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t numel() const;

  std::span<const float> values() const;
  std::span<float> mutable_values();
  const std::vector<float>& vec() const;
  float item() const;
  float at(std::initializer_list<int64_t> index) const;

  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  /// Seeds d(self)/d(self)=1 and propagates to every reachable leaf.
  void backward() const;

  /// A leaf sharing no tape with this tensor, holding a copy of its values.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// True while ops should record backward closures (thread-local).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Creates the output node of an op. Records `inputs` and leaves `backward`
// empty when no input needs a gradient or recording is off.
std::shared_ptr<Node> make_result(Shape shape, std::vector<float> values,
                                  std::initializer_list<Tensor> inputs);
bool needs_grad(const Tensor& t);

}  // namespace detail

}  // namespace vdls
