#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dropforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

// A recorded operation. `backward` reads the gradient of the output it
// produced and accumulates into the gradients of `inputs`.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
  const char* name = "";
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  void accumulate_grad(std::span<const double> g);
  std::vector<double>& ensure_grad();
};

// Graph recording switch. Recording is on by default for the thread;
// NoGradGuard turns it off for a scope (inference, metrics, optimizer).
class GradMode {
 public:
  static bool is_enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::is_enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major tensor of doubles. Copies are shallow handles onto the same
// storage and graph node; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view for initialization and optimizer updates. Mutating a tensor
  // that a live graph saved for backward invalidates that graph.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  // Gradient accumulated by backward(); zeros when nothing reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  // Reverse-mode sweep from this scalar. Each node runs once, in reverse
  // topological order; gradients accumulate additively.
  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  static Tensor from_impl(std::shared_ptr<TensorImpl> impl);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

namespace detail {

// Builds the output tensor of an op and, when recording and any input needs a
// gradient, attaches a node with the given backward closure.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   const char* name, std::function<void(const TensorImpl& out)> backward);
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   const char* name, std::function<void(const TensorImpl& out)> backward);

}  // namespace detail

}  // namespace dropforge
