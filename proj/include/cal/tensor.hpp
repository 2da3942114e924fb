#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cal {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Storage shared between Tensor handles. `grad` is empty until a gradient is
/// first accumulated into it.
struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

/// Dense row-major fp64 array with an optional gradient slot.
///
/// A Tensor is a cheap handle: copies alias the same storage. Operations on a
/// Tape read the values and, if any input requires a gradient, record a
/// backward rule that accumulates into the inputs' `grad` buffers.
/// All tape operations work on rank-2 tensors; a scalar is a 1x1 tensor.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->values.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values() { return impl_->values; }
    std::span<const double> values() const { return impl_->values; }
    double& at(std::size_t r, std::size_t c) { return impl_->values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }
    /// Value of a single-element tensor.
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<double> grad() { return impl_->grad; }
    std::span<const double> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    /// Fresh storage with the same values and no gradient.
    Tensor detach() const;

    TensorImpl* impl() const noexcept { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& shared() const noexcept { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

/// Keeps freed tensor buffers in the process heap instead of handing them
/// back to the kernel. Training reallocates the same large buffers every
/// batch, and fresh pages cost more than the arithmetic. Call once from main.
void retain_freed_memory();

}  // namespace cal
