#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "cal/tensor.hpp"

namespace cal {

/// Default guard added inside `log` so that log(0) stays finite.
inline constexpr double kLogEpsilon = 1e-12;

using Index = std::vector<std::uint32_t>;

/// Parameter-free operation kinds, dispatched through `forward_op`.
enum class OpKind {
    MatMul,       // (m x k)(k x n)
    Add,          // same shape
    Sub,          // same shape
    Mul,          // same shape, elementwise
    MulColumn,    // (m x n) * (m x 1), broadcast over columns
    AddRow,       // (m x n) + (1 x n), broadcast over rows
    Relu,
    RowSoftmax,
    Log,          // log(x + kLogEpsilon)
    ConcatCols,   // feature-axis concatenation
    RowSum,       // (m x n) -> (m x 1)
    RowMean,      // (m x n) -> (m x 1)
    ColMean,      // (m x n) -> (1 x n)
    Sum,          // -> (1 x 1)
    Mean,         // -> (1 x 1)
    OneMinus,     // 1 - x
};

std::string_view to_string(OpKind kind);
/// Number of tensor inputs the kind consumes.
std::size_t arity(OpKind kind);
std::span<const OpKind> all_op_kinds();

/// Records differentiable operations in execution order.
///
/// Every operation appends at most one node; since a node can only consume
/// tensors that already exist, the node list is topologically ordered and
/// `backward` is a single reverse sweep. A tape constructed with
/// `recording = false` evaluates forward values only.
///
/// A tape and the tensors it produced belong to one thread at a time.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Accumulates d(loss)/d(t) into every requires-grad tensor reachable from
    /// `loss`. Gradients add onto whatever is already stored, so fan-out and
    /// repeated calls accumulate.
    void backward(const Tensor& loss);

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor mul_column(const Tensor& a, const Tensor& column);
    Tensor add_row(const Tensor& a, const Tensor& row);
    Tensor scale(const Tensor& a, double factor);
    Tensor add_scalar(const Tensor& a, double offset);
    Tensor one_minus(const Tensor& a);
    Tensor relu(const Tensor& a);
    Tensor row_softmax(const Tensor& a);
    Tensor log(const Tensor& a, double epsilon = kLogEpsilon);
    /// a^(-1/2), defined for a > 0.
    Tensor rsqrt(const Tensor& a);

    Tensor concat_cols(const Tensor& a, const Tensor& b);
    Tensor concat_rows(std::span<const Tensor> parts);
    Tensor column(const Tensor& a, std::size_t col);

    Tensor row_sum(const Tensor& a);
    Tensor row_mean(const Tensor& a);
    Tensor col_mean(const Tensor& a);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);

    /// out[k] = a[index[k]]
    Tensor gather_rows(const Tensor& a, const Index& index);
    /// out[k] = a[index_a[k]] + b[index_b[k]]
    Tensor gather_add(const Tensor& a, const Index& index_a, const Tensor& b, const Index& index_b);
    /// out[index[k]] += a[k], with `out_rows` rows.
    Tensor scatter_add_rows(const Tensor& a, const Index& index, std::size_t out_rows);

    /// Edge-list message passing:
    ///   out[i] = self_weight[i] * h[i] + sum_{e : row[e] == i} edge_weight[e] * h[col[e]]
    /// `edge_weight` is (E x 1), `self_weight` is (n x 1), `h` is (n x d).
    Tensor propagate(const Index& row, const Index& col, const Tensor& edge_weight,
                     const Tensor& self_weight, const Tensor& h);

private:
    struct Node {
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        std::function<void()> backward;
    };

    bool needs_grad(std::initializer_list<const Tensor*> inputs) const;
    void record(const Tensor& out, std::initializer_list<const Tensor*> inputs,
                std::function<void()> backward);
    void record(const Tensor& out, std::span<const Tensor> inputs, std::function<void()> backward);

    bool recording_;
    std::vector<Node> nodes_;
};

/// Applies a parameter-free operation. `inputs.size()` must equal `arity(kind)`.
Tensor forward_op(Tape& tape, OpKind kind, std::span<const Tensor> inputs);

}  // namespace cal
