#pragma once

/// @file
/// Tape-based reverse-mode differentiation over dense 2-D tensors.
///
/// Nodes are evaluated eagerly as they are appended. `gradients()` records
/// the backward pass as ordinary tape nodes, so a gradient can itself be
/// differentiated (needed for the critic's input-gradient penalty).
/// `recompute()` replays the whole tape after leaf values are rebound,
/// which is what finite-difference checks use.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compgen/error.hpp"
#include "compgen/tensor.hpp"

namespace compgen::ad {

struct NodeId {
    std::uint32_t index = invalid;

    static constexpr std::uint32_t invalid = 0xFFFFFFFFu;
    bool valid() const { return index != invalid; }
    friend bool operator==(NodeId, NodeId) = default;
};

enum class Op : std::uint8_t {
    Constant,
    Variable,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Relu,
    StepMask,   // 1 where input > 0, else 0; not differentiated
    Sigmoid,
    Exp,
    Square,
    Sqrt,
    SafeRecip,  // 1/x, with 1/0 := 0
    Sum,
    Mean,
    SumRows,    // n x m -> 1 x m
    SumCols,    // n x m -> n x 1
    Broadcast,  // (1x1 | 1xm | nx1) -> n x m
    SliceCols,
    PadCols,    // zero-pads columns around the input
    ConcatCols,
    StopGradient,
};

inline const char* op_name(Op op) {
    switch (op) {
    case Op::Constant: return "constant";
    case Op::Variable: return "variable";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::StepMask: return "step_mask";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::SafeRecip: return "safe_recip";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::Broadcast: return "broadcast";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::ConcatCols: return "concat_cols";
    case Op::StopGradient: return "stop_gradient";
    }
    return "?";
}

class Tape {
public:
    // --- leaves -----------------------------------------------------------

    /// Leaf that is never differentiated.
    NodeId constant(Tensor value) { return push_leaf(Op::Constant, std::move(value)); }
    /// Leaf that gradients may be taken with respect to.
    NodeId variable(Tensor value) { return push_leaf(Op::Variable, std::move(value)); }

    /// Rebinds a leaf; call recompute() to refresh dependent nodes.
    void set_value(NodeId leaf, Tensor value) {
        Node& n = at(leaf);
        require(n.op == Op::Constant || n.op == Op::Variable, ErrorCode::InvalidArgument,
                "set_value on a non-leaf node");
        require(value.shape() == n.value.shape(), ErrorCode::ShapeMismatch,
                "rebinding " + to_string(n.value.shape()) + " leaf with " + to_string(value.shape()));
        n.value = std::move(value);
    }

    /// Re-evaluates every non-leaf node in tape order.
    void recompute() {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].op != Op::Constant && nodes_[i].op != Op::Variable) {
                nodes_[i].value = evaluate(nodes_[i]);
            }
        }
    }

    const Tensor& value(NodeId id) const { return at(id).value; }
    const Shape& shape(NodeId id) const { return at(id).value.shape(); }
    Op op(NodeId id) const { return at(id).op; }
    std::size_t size() const { return nodes_.size(); }

    // --- primitives -------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) { return push(Op::MatMul, a, b); }
    NodeId transpose(NodeId a) { return push(Op::Transpose, a); }
    NodeId add(NodeId a, NodeId b) { return push(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return push(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return push(Op::Mul, a, b); }
    NodeId scale(NodeId a, double c) { return push(Op::Scale, a, {}, c); }
    NodeId add_scalar(NodeId a, double c) { return push(Op::AddScalar, a, {}, c); }
    NodeId relu(NodeId a) { return push(Op::Relu, a); }
    NodeId step_mask(NodeId a) { return push(Op::StepMask, a); }
    NodeId sigmoid(NodeId a) { return push(Op::Sigmoid, a); }
    NodeId exp(NodeId a) { return push(Op::Exp, a); }
    NodeId square(NodeId a) { return push(Op::Square, a); }
    NodeId sqrt(NodeId a) { return push(Op::Sqrt, a); }
    NodeId safe_recip(NodeId a) { return push(Op::SafeRecip, a); }
    NodeId sum(NodeId a) { return push(Op::Sum, a); }
    NodeId mean(NodeId a) { return push(Op::Mean, a); }
    NodeId sum_rows(NodeId a) { return push(Op::SumRows, a); }
    NodeId sum_cols(NodeId a) { return push(Op::SumCols, a); }
    NodeId broadcast(NodeId a, Shape target) {
        return push(Op::Broadcast, a, {}, 0.0, target.rows, target.cols);
    }
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t count) {
        return push(Op::SliceCols, a, {}, 0.0, begin, count);
    }
    NodeId pad_cols(NodeId a, std::size_t begin, std::size_t total) {
        return push(Op::PadCols, a, {}, 0.0, begin, total);
    }
    NodeId concat_cols(NodeId a, NodeId b) { return push(Op::ConcatCols, a, b); }
    NodeId stop_gradient(NodeId a) { return push(Op::StopGradient, a); }

    // --- differentiation --------------------------------------------------

    /// Gradients of scalar `output` with respect to each node in `wrt`,
    /// recorded on the tape so they can be differentiated again. Constant
    /// leaves and nodes with no path to `output` get a zero constant.
    std::vector<NodeId> gradients(NodeId output, std::span<const NodeId> wrt) {
        require(value(output).size() == 1, ErrorCode::NonScalarOutput,
                "output has shape " + to_string(shape(output)));
        const std::size_t n = output.index + 1;
        std::vector<char> reach(n, 0);
        for (NodeId w : wrt) {
            if (w.index < n && at(w).op != Op::Constant) {
                reach[w.index] = 1;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const Node& node = nodes_[i];
            if (reach[i] || !differentiable(node.op)) {
                continue;
            }
            if ((node.a.valid() && reach[node.a.index]) || (node.b.valid() && reach[node.b.index])) {
                reach[i] = 1;
            }
        }

        std::vector<std::optional<NodeId>> grad(n);
        if (reach[output.index]) {
            grad[output.index] = constant(Tensor(1, 1, 1.0));
        }
        for (std::size_t i = n; i-- > 0;) {
            if (!grad[i] || !reach[i]) {
                continue;
            }
            propagate(NodeId{static_cast<std::uint32_t>(i)}, *grad[i], reach, grad);
        }

        std::vector<NodeId> out;
        out.reserve(wrt.size());
        for (NodeId w : wrt) {
            if (w.index < n && grad[w.index] && reach[w.index]) {
                out.push_back(*grad[w.index]);
            } else {
                out.push_back(constant(Tensor(shape(w).rows, shape(w).cols, 0.0)));
            }
        }
        return out;
    }

    /// Gradient values of scalar `output` with respect to `wrt`.
    std::vector<Tensor> backward(NodeId output, std::span<const NodeId> wrt) {
        std::vector<Tensor> out;
        for (NodeId g : gradients(output, wrt)) {
            out.push_back(value(g));
        }
        return out;
    }

private:
    struct Node {
        Op op = Op::Constant;
        NodeId a;
        NodeId b;
        double c = 0.0;
        std::size_t p0 = 0;
        std::size_t p1 = 0;
        Tensor value;
    };

    static bool differentiable(Op op) {
        return op != Op::Constant && op != Op::Variable && op != Op::StepMask && op != Op::StopGradient;
    }

    Node& at(NodeId id) {
        require(id.index < nodes_.size(), ErrorCode::InvalidArgument, "node id out of range");
        return nodes_[id.index];
    }
    const Node& at(NodeId id) const {
        require(id.index < nodes_.size(), ErrorCode::InvalidArgument, "node id out of range");
        return nodes_[id.index];
    }

    NodeId push_leaf(Op op, Tensor value) {
        require(value.all_finite(), ErrorCode::NonFiniteValue, "leaf value is not finite");
        Node n;
        n.op = op;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    NodeId push(Op op, NodeId a, NodeId b = {}, double c = 0.0, std::size_t p0 = 0, std::size_t p1 = 0) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.c = c;
        n.p0 = p0;
        n.p1 = p1;
        n.value = evaluate(n);
        nodes_.push_back(std::move(n));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    static Shape broadcast_shape(const Shape& x, const Shape& y, Op op) {
        auto dim = [&](std::size_t p, std::size_t q) {
            if (p == q || q == 1) {
                return p;
            }
            if (p == 1) {
                return q;
            }
            fail(ErrorCode::ShapeMismatch,
                 std::string(op_name(op)) + " of " + to_string(x) + " and " + to_string(y));
        };
        return {dim(x.rows, y.rows), dim(x.cols, y.cols)};
    }

    template <typename F>
    static Tensor elementwise(const Tensor& x, const Tensor& y, Op op, F f) {
        const Shape s = broadcast_shape(x.shape(), y.shape(), op);
        Tensor out(s.rows, s.cols);
        const bool same = x.shape() == s && y.shape() == s;
        if (same) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = f(x[i], y[i]);
            }
            return out;
        }
        for (std::size_t r = 0; r < s.rows; ++r) {
            const std::size_t xr = x.rows() == 1 ? 0 : r;
            const std::size_t yr = y.rows() == 1 ? 0 : r;
            for (std::size_t c = 0; c < s.cols; ++c) {
                out(r, c) = f(x(xr, x.cols() == 1 ? 0 : c), y(yr, y.cols() == 1 ? 0 : c));
            }
        }
        return out;
    }

    template <typename F>
    static Tensor unary(const Tensor& x, F f) {
        Tensor out(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = f(x[i]);
        }
        return out;
    }

    Tensor evaluate(const Node& n) const {
        Tensor out = compute(n);
        if (!out.all_finite()) {
            fail(ErrorCode::NonFiniteValue, std::string("non-finite result from ") + op_name(n.op));
        }
        return out;
    }

    Tensor compute(const Node& n) const {
        if (n.op == Op::Constant || n.op == Op::Variable) {
            return n.value;
        }
        const Tensor& x = nodes_[n.a.index].value;
        switch (n.op) {
        case Op::Constant:
        case Op::Variable:
            return n.value;
        case Op::MatMul: {
            const Tensor& y = nodes_[n.b.index].value;
            require(x.cols() == y.rows(), ErrorCode::ShapeMismatch,
                    "matmul of " + to_string(x.shape()) + " and " + to_string(y.shape()));
            Tensor out(x.rows(), y.cols());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double* orow = &out(i, 0);
                for (std::size_t k = 0; k < x.cols(); ++k) {
                    const double xik = x(i, k);
                    if (xik == 0.0) {
                        continue;
                    }
                    const double* yrow = y.values().data() + k * y.cols();
                    for (std::size_t j = 0; j < y.cols(); ++j) {
                        orow[j] += xik * yrow[j];
                    }
                }
            }
            return out;
        }
        case Op::Transpose: {
            Tensor out(x.cols(), x.rows());
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    out(c, r) = x(r, c);
                }
            }
            return out;
        }
        case Op::Add:
            return elementwise(x, nodes_[n.b.index].value, n.op, [](double p, double q) { return p + q; });
        case Op::Sub:
            return elementwise(x, nodes_[n.b.index].value, n.op, [](double p, double q) { return p - q; });
        case Op::Mul:
            return elementwise(x, nodes_[n.b.index].value, n.op, [](double p, double q) { return p * q; });
        case Op::Scale: {
            const double c = n.c;
            return unary(x, [c](double v) { return c * v; });
        }
        case Op::AddScalar: {
            const double c = n.c;
            return unary(x, [c](double v) { return v + c; });
        }
        case Op::Relu:
            return unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
        case Op::StepMask:
            return unary(x, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
        case Op::Sigmoid:
            return unary(x, [](double v) {
                if (v >= 0.0) {
                    return 1.0 / (1.0 + std::exp(-v));
                }
                const double e = std::exp(v);
                return e / (1.0 + e);
            });
        case Op::Exp:
            return unary(x, [](double v) { return std::exp(v); });
        case Op::Square:
            return unary(x, [](double v) { return v * v; });
        case Op::Sqrt:
            return unary(x, [](double v) { return std::sqrt(v); });
        case Op::SafeRecip:
            return unary(x, [](double v) { return v == 0.0 ? 0.0 : 1.0 / v; });
        case Op::Sum: {
            double s = 0.0;
            for (double v : x.values()) {
                s += v;
            }
            return Tensor(1, 1, s);
        }
        case Op::Mean: {
            require(x.size() > 0, ErrorCode::ShapeMismatch, "mean of an empty tensor");
            double s = 0.0;
            for (double v : x.values()) {
                s += v;
            }
            return Tensor(1, 1, s / static_cast<double>(x.size()));
        }
        case Op::SumRows: {
            Tensor out(1, x.cols());
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    out(0, c) += x(r, c);
                }
            }
            return out;
        }
        case Op::SumCols: {
            Tensor out(x.rows(), 1);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    s += x(r, c);
                }
                out(r, 0) = s;
            }
            return out;
        }
        case Op::Broadcast: {
            const Shape target{n.p0, n.p1};
            require((x.rows() == 1 || x.rows() == target.rows) && (x.cols() == 1 || x.cols() == target.cols),
                    ErrorCode::ShapeMismatch,
                    "cannot broadcast " + to_string(x.shape()) + " to " + to_string(target));
            Tensor out(target.rows, target.cols);
            for (std::size_t r = 0; r < target.rows; ++r) {
                for (std::size_t c = 0; c < target.cols; ++c) {
                    out(r, c) = x(x.rows() == 1 ? 0 : r, x.cols() == 1 ? 0 : c);
                }
            }
            return out;
        }
        case Op::SliceCols:
            return slice_columns(x, n.p0, n.p1);
        case Op::PadCols: {
            require(n.p0 + x.cols() <= n.p1, ErrorCode::ShapeMismatch, "pad_cols target too narrow");
            Tensor out(x.rows(), n.p1);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    out(r, n.p0 + c) = x(r, c);
                }
            }
            return out;
        }
        case Op::ConcatCols: {
            const Tensor& y = nodes_[n.b.index].value;
            require(x.rows() == y.rows(), ErrorCode::ShapeMismatch,
                    "concat_cols of " + to_string(x.shape()) + " and " + to_string(y.shape()));
            Tensor out(x.rows(), x.cols() + y.cols());
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    out(r, c) = x(r, c);
                }
                for (std::size_t c = 0; c < y.cols(); ++c) {
                    out(r, x.cols() + c) = y(r, c);
                }
            }
            return out;
        }
        case Op::StopGradient:
            return x;
        }
        fail(ErrorCode::InvalidArgument, "unknown op");
    }

    /// Reduces a broadcast gradient back to `target`.
    NodeId unbroadcast(NodeId g, const Shape& target) {
        const Shape s = shape(g);
        if (s == target) {
            return g;
        }
        if (target.rows == 1 && target.cols == 1) {
            return sum(g);
        }
        if (target.rows == 1 && target.cols == s.cols) {
            return sum_rows(g);
        }
        if (target.cols == 1 && target.rows == s.rows) {
            return sum_cols(g);
        }
        fail(ErrorCode::ShapeMismatch, "cannot reduce " + to_string(s) + " to " + to_string(target));
    }

    void accumulate(std::vector<std::optional<NodeId>>& grad, const std::vector<char>& reach, NodeId parent,
                    NodeId contribution) {
        if (!parent.valid() || parent.index >= reach.size() || !reach[parent.index]) {
            return;
        }
        auto& slot = grad[parent.index];
        slot = slot ? add(*slot, contribution) : contribution;
    }

    bool reaches(const std::vector<char>& reach, NodeId id) const {
        return id.valid() && id.index < reach.size() && reach[id.index];
    }

    /// Vector-Jacobian product of node `id` given upstream gradient `g`.
    void propagate(NodeId id, NodeId g, const std::vector<char>& reach, std::vector<std::optional<NodeId>>& grad) {
        // Copy out: appending nodes below may reallocate storage.
        const Op op = nodes_[id.index].op;
        const NodeId a = nodes_[id.index].a;
        const NodeId b = nodes_[id.index].b;
        const double c = nodes_[id.index].c;
        const std::size_t p0 = nodes_[id.index].p0;
        const bool ra = reaches(reach, a);
        const bool rb = reaches(reach, b);

        switch (op) {
        case Op::Constant:
        case Op::Variable:
        case Op::StepMask:
        case Op::StopGradient:
            return;
        case Op::MatMul:
            if (ra) {
                accumulate(grad, reach, a, matmul(g, transpose(b)));
            }
            if (rb) {
                accumulate(grad, reach, b, matmul(transpose(a), g));
            }
            return;
        case Op::Transpose:
            accumulate(grad, reach, a, transpose(g));
            return;
        case Op::Add:
            if (ra) {
                accumulate(grad, reach, a, unbroadcast(g, shape(a)));
            }
            if (rb) {
                accumulate(grad, reach, b, unbroadcast(g, shape(b)));
            }
            return;
        case Op::Sub:
            if (ra) {
                accumulate(grad, reach, a, unbroadcast(g, shape(a)));
            }
            if (rb) {
                accumulate(grad, reach, b, unbroadcast(scale(g, -1.0), shape(b)));
            }
            return;
        case Op::Mul:
            if (ra) {
                accumulate(grad, reach, a, unbroadcast(mul(g, b), shape(a)));
            }
            if (rb) {
                accumulate(grad, reach, b, unbroadcast(mul(g, a), shape(b)));
            }
            return;
        case Op::Scale:
            accumulate(grad, reach, a, scale(g, c));
            return;
        case Op::AddScalar:
            accumulate(grad, reach, a, g);
            return;
        case Op::Relu:
            accumulate(grad, reach, a, mul(g, step_mask(a)));
            return;
        case Op::Sigmoid: {
            const NodeId one_minus = add_scalar(scale(id, -1.0), 1.0);
            accumulate(grad, reach, a, mul(g, mul(id, one_minus)));
            return;
        }
        case Op::Exp:
            accumulate(grad, reach, a, mul(g, id));
            return;
        case Op::Square:
            accumulate(grad, reach, a, mul(g, scale(a, 2.0)));
            return;
        case Op::Sqrt:
            // d sqrt(x) = 1 / (2 sqrt(x)); taken as 0 at x = 0.
            accumulate(grad, reach, a, mul(g, scale(safe_recip(id), 0.5)));
            return;
        case Op::SafeRecip:
            accumulate(grad, reach, a, mul(g, scale(square(id), -1.0)));
            return;
        case Op::Sum:
        case Op::SumRows:
        case Op::SumCols:
            accumulate(grad, reach, a, broadcast(g, shape(a)));
            return;
        case Op::Mean:
            accumulate(grad, reach, a,
                       scale(broadcast(g, shape(a)), 1.0 / static_cast<double>(value(a).size())));
            return;
        case Op::Broadcast:
            accumulate(grad, reach, a, unbroadcast(g, shape(a)));
            return;
        case Op::SliceCols:
            accumulate(grad, reach, a, pad_cols(g, p0, shape(a).cols));
            return;
        case Op::PadCols:
            accumulate(grad, reach, a, slice_cols(g, p0, shape(a).cols));
            return;
        case Op::ConcatCols: {
            const std::size_t ca = shape(a).cols;
            if (ra) {
                accumulate(grad, reach, a, slice_cols(g, 0, ca));
            }
            if (rb) {
                accumulate(grad, reach, b, slice_cols(g, ca, shape(b).cols));
            }
            return;
        }
        }
    }

    std::vector<Node> nodes_;
};

/// Per-row Euclidean norm of d(sum of `critic_out`)/d`x`, recorded on the
/// tape. With rows that are independent samples this is the per-sample
/// input-gradient norm, n x 1.
inline NodeId input_gradient_norm(Tape& tape, NodeId critic_out, NodeId x) {
    const NodeId total = tape.shape(critic_out).size() == 1 ? critic_out : tape.sum(critic_out);
    const NodeId grad = tape.gradients(total, std::span<const NodeId>(&x, 1)).front();
    return tape.sqrt(tape.sum_cols(tape.square(grad)));
}

} // namespace compgen::ad
