#pragma once

// Matrix-level reverse-mode differentiation.
//
// Every operation exists twice: once on plain `Matrix` values and once on tape
// variables (`Var`). Algorithms written as templates over the operand type run
// unchanged on either, so the same code that evaluates an input HVP can be
// recorded and differentiated again with respect to the network parameters.

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "dlnn/activation.hpp"
#include "dlnn/error.hpp"
#include "dlnn/linalg.hpp"

namespace dlnn {

// ---------------------------------------------------------------------------
// Plain operations
// ---------------------------------------------------------------------------

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require_shape(a.cols() == b.rows(), "matmul: " + shape_string(a) + " * " + shape_string(b));
    return a * b;
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require_shape(a.cols() == b.cols(), "matmul_nt: " + shape_string(a) + " * (" + shape_string(b) + ")^T");
    return a * b.transpose();
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: " + shape_string(a) + " + " + shape_string(b));
    return a + b;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: " + shape_string(a) + " - " + shape_string(b));
    return a - b;
}

inline Matrix cmul(const Matrix& a, const Matrix& b) {
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "cmul: " + shape_string(a) + " .* " + shape_string(b));
    return a.cwiseProduct(b);
}

/// Adds the 1 x n row `row` to every row of `a`.
inline Matrix add_row(const Matrix& a, const Matrix& row) {
    require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row: " + shape_string(a) + " + " + shape_string(row));
    return a.rowwise() + row.row(0);
}

inline Matrix scale(const Matrix& a, double s) { return s * a; }

/// Elementwise k-th activation derivative. tanh goes through the vectorised
/// exponential, tanh(z) = 1 - 2 / (exp(2z) + 1).
inline Matrix activate(const Matrix& z, Activation act, int order) {
    if (act != Activation::tanh)
        return z.unaryExpr([act, order](double v) { return activation_derivative(act, order, v); });
    const Eigen::ArrayXXd t = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
    switch (order) {
    case 0: return t.matrix();
    case 1: return (1.0 - t.square()).matrix();
    case 2: return (-2.0 * t * (1.0 - t.square())).matrix();
    case 3: return ((1.0 - t.square()) * (6.0 * t.square() - 2.0)).matrix();
    case 4: return (8.0 * t * (1.0 - t.square()) * (2.0 - 3.0 * t.square())).matrix();
    default: break;
    }
    throw ConfigError("activation derivative order out of range: " + std::to_string(order));
}

inline Matrix cols(const Matrix& a, Index start, Index count) {
    require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "cols: range out of bounds");
    return a.middleCols(start, count);
}

/// Mean of squared entries, as a 1 x 1 matrix.
inline Matrix mean_square(const Matrix& a) {
    require_shape(a.size() > 0, "mean_square: empty operand");
    Matrix out(1, 1);
    out(0, 0) = a.squaredNorm() / static_cast<double>(a.size());
    return out;
}

inline Matrix lift(const Matrix&, Matrix value) { return value; }
inline const Matrix& value_of(const Matrix& m) { return m; }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

class Tape {
public:
    using Propagate = std::function<void(Tape&, const Matrix& adjoint)>;

    Var leaf(Matrix value, bool requires_grad = true) {
        nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, nullptr});
        return Var{this, nodes_.size() - 1};
    }

    Var constant(Matrix value) { return leaf(std::move(value), false); }

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }

    /// Adjoint after `backward`; zero matrix if nothing flowed into the node.
    Matrix adjoint(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.adjoint;
    }

    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Records an interior node. `propagate` is only stored if some input needs a gradient.
    Var record(Matrix value, bool needs_grad, Propagate propagate) {
        nodes_.push_back(Node{std::move(value), Matrix{}, needs_grad, needs_grad ? std::move(propagate) : nullptr});
        return Var{this, nodes_.size() - 1};
    }

    template <class Expr>
    void accumulate(std::size_t id, const Expr& contribution) {
        Node& n = nodes_[id];
        if (!n.needs_grad) return;
        if (n.adjoint.size() == 0)
            n.adjoint = contribution;
        else
            n.adjoint += contribution;
    }

    /// Reverse sweep seeded with d(root)/d(root) = 1. `root` must be 1 x 1.
    void backward(Var root) {
        require_shape(value(root).size() == 1, "Tape::backward: root must be scalar");
        for (auto& n : nodes_) n.adjoint.resize(0, 0);
        nodes_[root.id].adjoint = Matrix::Ones(1, 1);
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.propagate || n.adjoint.size() == 0) continue;
            n.propagate(*this, n.adjoint);
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix adjoint;
        bool needs_grad;
        Propagate propagate;
    };

    std::vector<Node> nodes_;
};

inline Var lift(const Var& like, Matrix value) { return like.tape->constant(std::move(value)); }
inline const Matrix& value_of(const Var& v) { return v.tape->value(v); }

namespace detail {
inline Tape& same_tape(const Var& a, const Var& b) {
    require_shape(a.tape != nullptr && a.tape == b.tape, "tape operands belong to different tapes");
    return *a.tape;
}
}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.record(matmul(t.value(a), t.value(b)), ng, [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a.id, g * tp.value(b).transpose());
        if (tp.needs_grad(b)) tp.accumulate(b.id, tp.value(a).transpose() * g);
    });
}

inline Var matmul_nt(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.record(matmul_nt(t.value(a), t.value(b)), ng, [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a.id, g * tp.value(b));
        if (tp.needs_grad(b)) tp.accumulate(b.id, g.transpose() * tp.value(a));
    });
}

inline Var add(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.record(add(t.value(a), t.value(b)), ng, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.record(sub(t.value(a), t.value(b)), ng, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, -g);
    });
}

inline Var cmul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.record(cmul(t.value(a), t.value(b)), ng, [a, b](Tape& tp, const Matrix& g) {
        if (tp.needs_grad(a)) tp.accumulate(a.id, g.cwiseProduct(tp.value(b)));
        if (tp.needs_grad(b)) tp.accumulate(b.id, g.cwiseProduct(tp.value(a)));
    });
}

inline Var add_row(const Var& a, const Var& row) {
    Tape& t = detail::same_tape(a, row);
    const bool ng = t.needs_grad(a) || t.needs_grad(row);
    return t.record(add_row(t.value(a), t.value(row)), ng, [a, row](Tape& tp, const Matrix& g) {
        tp.accumulate(a.id, g);
        if (tp.needs_grad(row)) tp.accumulate(row.id, g.colwise().sum());
    });
}

inline Var scale(const Var& a, double s) {
    Tape& t = *a.tape;
    return t.record(scale(t.value(a), s), t.needs_grad(a),
                    [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a.id, s * g); });
}

inline Var activate(const Var& z, Activation act, int order) {
    require_config(order < kMaxActivationOrder, "activate: derivative order too high to differentiate");
    Tape& t = *z.tape;
    return t.record(activate(t.value(z), act, order), t.needs_grad(z), [z, act, order](Tape& tp, const Matrix& g) {
        tp.accumulate(z.id, g.cwiseProduct(activate(tp.value(z), act, order + 1)));
    });
}

inline Var cols(const Var& a, Index start, Index count) {
    Tape& t = *a.tape;
    return t.record(cols(t.value(a), start, count), t.needs_grad(a), [a, start, count](Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(a);
        Matrix full = Matrix::Zero(av.rows(), av.cols());
        full.middleCols(start, count) = g;
        tp.accumulate(a.id, full);
    });
}

inline Var mean_square(const Var& a) {
    Tape& t = *a.tape;
    return t.record(mean_square(t.value(a)), t.needs_grad(a), [a](Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(a);
        tp.accumulate(a.id, (2.0 * g(0, 0) / static_cast<double>(av.size())) * av);
    });
}

}  // namespace dlnn
