#include "cal/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "cal/errors.hpp"

namespace cal {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

MatMap as_matrix(std::vector<double>& v, std::size_t r, std::size_t c) {
    return MatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
ConstMatMap as_matrix(const std::vector<double>& v, std::size_t r, std::size_t c) {
    return ConstMatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_rank2(const Tensor& t, std::string_view op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

std::string dims(std::size_t r, std::size_t c) { return shape_string({r, c}); }

constexpr std::array kAllKinds = {
    OpKind::MatMul,     OpKind::Add,        OpKind::Sub,      OpKind::Mul,    OpKind::MulColumn, OpKind::AddRow,
    OpKind::Relu,       OpKind::RowSoftmax, OpKind::Log,      OpKind::ConcatCols, OpKind::RowSum, OpKind::RowMean,
    OpKind::ColMean,    OpKind::Sum,        OpKind::Mean,     OpKind::OneMinus,
};

}  // namespace

std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::MulColumn: return "mul_column";
        case OpKind::AddRow: return "add_row";
        case OpKind::Relu: return "relu";
        case OpKind::RowSoftmax: return "row_softmax";
        case OpKind::Log: return "log";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::RowSum: return "row_sum";
        case OpKind::RowMean: return "row_mean";
        case OpKind::ColMean: return "col_mean";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::OneMinus: return "one_minus";
    }
    return "unknown";
}

std::size_t arity(OpKind kind) {
    switch (kind) {
        case OpKind::MatMul:
        case OpKind::Add:
        case OpKind::Sub:
        case OpKind::Mul:
        case OpKind::MulColumn:
        case OpKind::AddRow:
        case OpKind::ConcatCols: return 2;
        default: return 1;
    }
}

std::span<const OpKind> all_op_kinds() { return kAllKinds; }

Tensor forward_op(Tape& tape, OpKind kind, std::span<const Tensor> in) {
    if (in.size() != arity(kind))
        throw ContractError(std::string(to_string(kind)) + " takes " + std::to_string(arity(kind)) + " inputs, got " +
                            std::to_string(in.size()));
    switch (kind) {
        case OpKind::MatMul: return tape.matmul(in[0], in[1]);
        case OpKind::Add: return tape.add(in[0], in[1]);
        case OpKind::Sub: return tape.sub(in[0], in[1]);
        case OpKind::Mul: return tape.mul(in[0], in[1]);
        case OpKind::MulColumn: return tape.mul_column(in[0], in[1]);
        case OpKind::AddRow: return tape.add_row(in[0], in[1]);
        case OpKind::Relu: return tape.relu(in[0]);
        case OpKind::RowSoftmax: return tape.row_softmax(in[0]);
        case OpKind::Log: return tape.log(in[0]);
        case OpKind::ConcatCols: return tape.concat_cols(in[0], in[1]);
        case OpKind::RowSum: return tape.row_sum(in[0]);
        case OpKind::RowMean: return tape.row_mean(in[0]);
        case OpKind::ColMean: return tape.col_mean(in[0]);
        case OpKind::Sum: return tape.sum(in[0]);
        case OpKind::Mean: return tape.mean(in[0]);
        case OpKind::OneMinus: return tape.one_minus(in[0]);
    }
    throw ContractError("unknown op kind");
}

// ---------------------------------------------------------------------------
// Recording and backward sweep
// ---------------------------------------------------------------------------

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void Tape::record(const Tensor& out, std::initializer_list<const Tensor*> inputs, std::function<void()> backward) {
    Node node;
    node.inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node.inputs.push_back(t->shared());
    node.output = out.shared();
    node.output->requires_grad = true;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
}

void Tape::record(const Tensor& out, std::span<const Tensor> inputs, std::function<void()> backward) {
    Node node;
    node.inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node.inputs.push_back(t.shared());
    node.output = out.shared();
    node.output->requires_grad = true;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    if (!loss.requires_grad()) return;
    // Intermediate gradients restart from zero; leaves keep accumulating.
    for (Node& node : nodes_) node.output->grad.clear();
    TensorImpl* root = loss.impl();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward();
    }
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dimensions differ, " + dims(m, k) + " x " + dims(b.rows(), n));
    Tensor out = Tensor::zeros({m, n});
    as_matrix(out.impl()->values, m, n).noalias() =
        as_matrix(std::as_const(a.impl()->values), m, k) * as_matrix(std::as_const(b.impl()->values), k, n);
    if (needs_grad({&a, &b})) {
        TensorImpl *pa = a.impl(), *pb = b.impl(), *po = out.impl();
        record(out, {&a, &b}, [=] {
            auto dout = as_matrix(po->grad, m, n);
            if (pa->requires_grad) {
                pa->ensure_grad();
                as_matrix(pa->grad, m, k).noalias() += dout * as_matrix(std::as_const(pb->values), k, n).transpose();
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                as_matrix(pb->grad, k, n).noalias() += as_matrix(std::as_const(pa->values), m, k).transpose() * dout;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_rank2(a, "add");
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vb = b.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] + vb[i];
    if (needs_grad({&a, &b})) {
        TensorImpl *pa = a.impl(), *pb = b.impl(), *po = out.impl();
        record(out, {&a, &b}, [=] {
            for (TensorImpl* p : {pa, pb}) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (std::size_t i = 0; i < po->grad.size(); ++i) p->grad[i] += po->grad[i];
            }
        });
    }
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require_rank2(a, "sub");
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vb = b.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] - vb[i];
    if (needs_grad({&a, &b})) {
        TensorImpl *pa = a.impl(), *pb = b.impl(), *po = out.impl();
        record(out, {&a, &b}, [=] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < po->grad.size(); ++i) pb->grad[i] -= po->grad[i];
            }
        });
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "mul");
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vb = b.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] * vb[i];
    if (needs_grad({&a, &b})) {
        TensorImpl *pa = a.impl(), *pb = b.impl(), *po = out.impl();
        record(out, {&a, &b}, [=] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i] * pb->values[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < po->grad.size(); ++i) pb->grad[i] += po->grad[i] * pa->values[i];
            }
        });
    }
    return out;
}

Tensor Tape::mul_column(const Tensor& a, const Tensor& column) {
    require_rank2(a, "mul_column");
    require_rank2(column, "mul_column");
    const std::size_t m = a.rows(), n = a.cols();
    if (column.rows() != m || column.cols() != 1)
        throw ShapeError("mul_column: expected a " + dims(m, 1) + " column for " + dims(m, n) + ", got " +
                         shape_string(column.shape()));
    Tensor out = Tensor::zeros({m, n});
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vc = column.impl()->values;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) o[r * n + c] = va[r * n + c] * vc[r];
    if (needs_grad({&a, &column})) {
        TensorImpl *pa = a.impl(), *pc = column.impl(), *po = out.impl();
        record(out, {&a, &column}, [=] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) pa->grad[r * n + c] += po->grad[r * n + c] * pc->values[r];
            }
            if (pc->requires_grad) {
                pc->ensure_grad();
                for (std::size_t r = 0; r < m; ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < n; ++c) acc += po->grad[r * n + c] * pa->values[r * n + c];
                    pc->grad[r] += acc;
                }
            }
        });
    }
    return out;
}

Tensor Tape::add_row(const Tensor& a, const Tensor& row) {
    require_rank2(a, "add_row");
    require_rank2(row, "add_row");
    const std::size_t m = a.rows(), n = a.cols();
    if (row.rows() != 1 || row.cols() != n)
        throw ShapeError("add_row: expected a " + dims(1, n) + " row for " + dims(m, n) + ", got " +
                         shape_string(row.shape()));
    Tensor out = Tensor::zeros({m, n});
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vr = row.impl()->values;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) o[r * n + c] = va[r * n + c] + vr[c];
    if (needs_grad({&a, &row})) {
        TensorImpl *pa = a.impl(), *pr = row.impl(), *po = out.impl();
        record(out, {&a, &row}, [=] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i];
            }
            if (pr->requires_grad) {
                pr->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) pr->grad[c] += po->grad[r * n + c];
            }
        });
    }
    return out;
}

Tensor Tape::scale(const Tensor& a, double factor) {
    require_rank2(a, "scale");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] * factor;
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i] * factor;
        });
    }
    return out;
}

Tensor Tape::add_scalar(const Tensor& a, double offset) {
    require_rank2(a, "add_scalar");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] + offset;
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i];
        });
    }
    return out;
}

Tensor Tape::one_minus(const Tensor& a) {
    require_rank2(a, "one_minus");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 - va[i];
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] -= po->grad[i];
        });
    }
    return out;
}

Tensor Tape::relu(const Tensor& a) {
    require_rank2(a, "relu");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] > 0.0 ? va[i] : 0.0;
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < po->grad.size(); ++i)
                if (pa->values[i] > 0.0) pa->grad[i] += po->grad[i];
        });
    }
    return out;
}

Tensor Tape::row_softmax(const Tensor& a) {
    require_rank2(a, "row_softmax");
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) throw ShapeError("row_softmax: rows must be non-empty");
    Tensor out = Tensor::zeros({m, n});
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t r = 0; r < m; ++r) {
        const double* x = va.data() + r * n;
        double* y = o.data() + r * n;
        const double hi = *std::max_element(x, x + n);
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) total += (y[c] = std::exp(x[c] - hi));
        for (std::size_t c = 0; c < n; ++c) y[c] /= total;
    }
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r) {
                const double* y = po->values.data() + r * n;
                const double* dy = po->grad.data() + r * n;
                double dot = 0.0;
                for (std::size_t c = 0; c < n; ++c) dot += dy[c] * y[c];
                for (std::size_t c = 0; c < n; ++c) pa->grad[r * n + c] += y[c] * (dy[c] - dot);
            }
        });
    }
    return out;
}

Tensor Tape::log(const Tensor& a, double epsilon) {
    require_rank2(a, "log");
    if (!(epsilon > 0.0)) throw DomainError("log: guard epsilon must be positive");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (va[i] < 0.0 || std::isnan(va[i]))
            throw DomainError("log: negative argument " + std::to_string(va[i]) + " at flat index " + std::to_string(i));
        o[i] = std::log(va[i] + epsilon);
    }
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i] / (pa->values[i] + epsilon);
        });
    }
    return out;
}

Tensor Tape::rsqrt(const Tensor& a) {
    require_rank2(a, "rsqrt");
    Tensor out = Tensor::zeros(a.shape());
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(va[i] > 0.0)) throw DomainError("rsqrt: non-positive argument " + std::to_string(va[i]));
        o[i] = 1.0 / std::sqrt(va[i]);
    }
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            // d/dx x^{-1/2} = -1/2 x^{-3/2} = -1/2 y^3
            for (std::size_t i = 0; i < po->grad.size(); ++i) {
                const double y = po->values[i];
                pa->grad[i] -= 0.5 * po->grad[i] * y * y * y;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
    if (b.rows() != m)
        throw ShapeError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor out = Tensor::zeros({m, n});
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vb = b.impl()->values;
    for (std::size_t r = 0; r < m; ++r) {
        std::copy_n(va.data() + r * na, na, o.data() + r * n);
        std::copy_n(vb.data() + r * nb, nb, o.data() + r * n + na);
    }
    if (needs_grad({&a, &b})) {
        TensorImpl *pa = a.impl(), *pb = b.impl(), *po = out.impl();
        record(out, {&a, &b}, [=] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < na; ++c) pa->grad[r * na + c] += po->grad[r * n + c];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < nb; ++c) pb->grad[r * nb + c] += po->grad[r * n + na + c];
            }
        });
    }
    return out;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::vector<std::size_t> offsets;
    std::size_t m = 0;
    bool grad = false;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != n)
            throw ShapeError("concat_rows: column counts differ, " + std::to_string(n) + " vs " + std::to_string(p.cols()));
        offsets.push_back(m);
        m += p.rows();
        grad = grad || p.requires_grad();
    }
    Tensor out = Tensor::zeros({m, n});
    auto& o = out.impl()->values;
    for (std::size_t i = 0; i < parts.size(); ++i)
        std::copy(parts[i].impl()->values.begin(), parts[i].impl()->values.end(), o.begin() + offsets[i] * n);
    if (recording_ && grad) {
        std::vector<TensorImpl*> ptrs;
        for (const Tensor& p : parts) ptrs.push_back(p.impl());
        TensorImpl* po = out.impl();
        record(out, parts, [=] {
            for (std::size_t i = 0; i < ptrs.size(); ++i) {
                TensorImpl* p = ptrs[i];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const double* src = po->grad.data() + offsets[i] * n;
                for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad[k] += src[k];
            }
        });
    }
    return out;
}

Tensor Tape::column(const Tensor& a, std::size_t col) {
    require_rank2(a, "column");
    const std::size_t m = a.rows(), n = a.cols();
    if (col >= n) throw ShapeError("column: index " + std::to_string(col) + " out of range for " + dims(m, n));
    Tensor out = Tensor::zeros({m, 1});
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t r = 0; r < m; ++r) o[r] = va[r * n + col];
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r) pa->grad[r * n + col] += po->grad[r];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor Tape::row_sum(const Tensor& a) {
    require_rank2(a, "row_sum");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, 1});
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) o[r] += va[r * n + c];
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) pa->grad[r * n + c] += po->grad[r];
        });
    }
    return out;
}

Tensor Tape::row_mean(const Tensor& a) {
    require_rank2(a, "row_mean");
    if (a.cols() == 0) throw ShapeError("row_mean: zero columns");
    return scale(row_sum(a), 1.0 / static_cast<double>(a.cols()));
}

Tensor Tape::col_mean(const Tensor& a) {
    require_rank2(a, "col_mean");
    const std::size_t m = a.rows(), n = a.cols();
    if (m == 0) throw ShapeError("col_mean: zero rows");
    const double inv = 1.0 / static_cast<double>(m);
    Tensor out = Tensor::zeros({1, n});
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) o[c] += va[r * n + c];
    for (double& v : o) v *= inv;
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) pa->grad[r * n + c] += po->grad[c] * inv;
        });
    }
    return out;
}

Tensor Tape::sum(const Tensor& a) {
    require_rank2(a, "sum");
    double total = 0.0;
    for (double v : a.impl()->values) total += v;
    Tensor out = Tensor::scalar(total);
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (double& g : pa->grad) g += po->grad[0];
        });
    }
    return out;
}

Tensor Tape::mean(const Tensor& a) {
    require_rank2(a, "mean");
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// Indexing and message passing
// ---------------------------------------------------------------------------

Tensor Tape::gather_rows(const Tensor& a, const Index& index) {
    require_rank2(a, "gather_rows");
    const std::size_t m = a.rows(), n = a.cols(), k = index.size();
    for (auto i : index)
        if (i >= m) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " + dims(m, n));
    Tensor out = Tensor::zeros({k, n});
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t r = 0; r < k; ++r) std::copy_n(va.data() + index[r] * n, n, o.data() + r * n);
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < k; ++r) {
                double* dst = pa->grad.data() + index[r] * n;
                const double* src = po->grad.data() + r * n;
                for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
            }
        });
    }
    return out;
}

Tensor Tape::gather_add(const Tensor& a, const Index& index_a, const Tensor& b, const Index& index_b) {
    require_rank2(a, "gather_add");
    require_rank2(b, "gather_add");
    const std::size_t n = a.cols(), k = index_a.size();
    if (b.cols() != n) throw ShapeError("gather_add: column counts differ");
    if (index_b.size() != k) throw ShapeError("gather_add: index lengths differ");
    for (std::size_t r = 0; r < k; ++r)
        if (index_a[r] >= a.rows() || index_b[r] >= b.rows()) throw ShapeError("gather_add: index out of range");
    Tensor out = Tensor::zeros({k, n});
    auto& o = out.impl()->values;
    const auto &va = a.impl()->values, &vb = b.impl()->values;
    for (std::size_t r = 0; r < k; ++r) {
        const double* x = va.data() + index_a[r] * n;
        const double* y = vb.data() + index_b[r] * n;
        double* dst = o.data() + r * n;
        for (std::size_t c = 0; c < n; ++c) dst[c] = x[c] + y[c];
    }
    if (needs_grad({&a, &b})) {
        TensorImpl *pa = a.impl(), *pb = b.impl(), *po = out.impl();
        record(out, {&a, &b}, [=] {
            for (auto [p, idx] : {std::pair{pa, &index_a}, std::pair{pb, &index_b}}) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (std::size_t r = 0; r < k; ++r) {
                    double* dst = p->grad.data() + (*idx)[r] * n;
                    const double* src = po->grad.data() + r * n;
                    for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
                }
            }
        });
    }
    return out;
}

Tensor Tape::scatter_add_rows(const Tensor& a, const Index& index, std::size_t out_rows) {
    require_rank2(a, "scatter_add_rows");
    const std::size_t k = a.rows(), n = a.cols();
    if (index.size() != k)
        throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + std::to_string(k) +
                         " rows");
    for (auto i : index)
        if (i >= out_rows)
            throw ShapeError("scatter_add_rows: index " + std::to_string(i) + " out of range for " +
                             std::to_string(out_rows) + " rows");
    Tensor out = Tensor::zeros({out_rows, n});
    auto& o = out.impl()->values;
    const auto& va = a.impl()->values;
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < n; ++c) o[index[r] * n + c] += va[r * n + c];
    if (needs_grad({&a})) {
        TensorImpl *pa = a.impl(), *po = out.impl();
        record(out, {&a}, [=] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < k; ++r)
                for (std::size_t c = 0; c < n; ++c) pa->grad[r * n + c] += po->grad[index[r] * n + c];
        });
    }
    return out;
}

Tensor Tape::propagate(const Index& row, const Index& col, const Tensor& edge_weight, const Tensor& self_weight,
                       const Tensor& h) {
    require_rank2(h, "propagate");
    const std::size_t n = h.rows(), d = h.cols(), e = row.size();
    if (col.size() != e) throw ShapeError("propagate: row and col index lengths differ");
    if (edge_weight.shape() != Shape{e, 1})
        throw ShapeError("propagate: edge weights must be " + dims(e, 1) + ", got " + shape_string(edge_weight.shape()));
    if (self_weight.shape() != Shape{n, 1})
        throw ShapeError("propagate: self weights must be " + dims(n, 1) + ", got " + shape_string(self_weight.shape()));
    for (std::size_t k = 0; k < e; ++k)
        if (row[k] >= n || col[k] >= n)
            throw ShapeError("propagate: edge " + std::to_string(k) + " references a node outside [0, " +
                             std::to_string(n) + ")");

    Tensor out = Tensor::zeros({n, d});
    auto& o = out.impl()->values;
    const auto &vh = h.impl()->values, &vw = edge_weight.impl()->values, &vs = self_weight.impl()->values;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) o[i * d + c] = vs[i] * vh[i * d + c];
    for (std::size_t k = 0; k < e; ++k) {
        double* dst = o.data() + row[k] * d;
        const double* src = vh.data() + col[k] * d;
        const double w = vw[k];
        for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
    }
    if (needs_grad({&edge_weight, &self_weight, &h})) {
        TensorImpl *pw = edge_weight.impl(), *ps = self_weight.impl(), *ph = h.impl(), *po = out.impl();
        record(out, {&edge_weight, &self_weight, &h}, [=] {
            const double* dout = po->grad.data();
            if (ph->requires_grad) {
                ph->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t c = 0; c < d; ++c) ph->grad[i * d + c] += ps->values[i] * dout[i * d + c];
                for (std::size_t k = 0; k < e; ++k) {
                    double* dst = ph->grad.data() + col[k] * d;
                    const double* src = dout + row[k] * d;
                    const double w = pw->values[k];
                    for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
                }
            }
            if (ps->requires_grad) {
                ps->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) acc += dout[i * d + c] * ph->values[i * d + c];
                    ps->grad[i] += acc;
                }
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                for (std::size_t k = 0; k < e; ++k) {
                    const double* g = dout + row[k] * d;
                    const double* x = ph->values.data() + col[k] * d;
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) acc += g[c] * x[c];
                    pw->grad[k] += acc;
                }
            }
        });
    }
    return out;
}

}  // namespace cal
