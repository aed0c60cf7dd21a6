#include "dropforge/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "dropforge/errors.hpp"

namespace dropforge {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool GradMode::is_enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void TensorImpl::accumulate_grad(std::span<const double> g) {
  auto& dst = ensure_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(data.size()) + " values");
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_impl(std::shared_ptr<TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  shape();
  impl_->requires_grad = value;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

std::vector<double> Tensor::grad() const {
  shape();
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  shape();
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return from_impl(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) {
    throw UsageError("backward() on a tensor that does not require grad (was recording active?)");
  }

  // Iterative post-order DFS gives a topological order of the nodes reachable
  // from the loss; walking it backwards visits each node once after all of
  // its consumers.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->inputs.size()) {
      TensorImpl* child = t->node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->node || t->grad.empty()) continue;
    t->node->backward(*t);
  }
}

namespace detail {

namespace {
Tensor finish(Tensor out, bool any_grad, std::vector<std::shared_ptr<TensorImpl>> inputs,
              const char* name, std::function<void(const TensorImpl&)> backward) {
  if (any_grad && GradMode::is_enabled()) {
    auto node = std::make_shared<Node>();
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->name = name;
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
  }
  return out;
}
}  // namespace

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   const char* name, std::function<void(const TensorImpl& out)> backward) {
  Tensor out(std::move(shape), std::move(data));
  bool any_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> impls;
  impls.reserve(inputs.size());
  for (const auto& in : inputs) {
    any_grad = any_grad || in.requires_grad();
    impls.push_back(in.impl());
  }
  return finish(std::move(out), any_grad, std::move(impls), name, std::move(backward));
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   const char* name, std::function<void(const TensorImpl& out)> backward) {
  return make_result(std::move(shape), std::move(data), std::vector<Tensor>(inputs), name,
                     std::move(backward));
}

}  // namespace detail

}  // namespace dropforge
