#pragma once

#include <optional>
#include <string>
#include <utility>

#include "dlnn/error.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/network.hpp"
#include "dlnn/tape.hpp"

namespace dlnn {

/// Value, input gradient and (optionally) input Hessian of a scalar network at one point.
struct DerivativeBundle {
    double value = 0.0;
    Vector gradient;
    std::optional<Matrix> hessian;
};

namespace detail {

inline void check_input(const NetworkParams& p, Index width, const char* op) {
    p.validate();
    require_shape(width == p.input_width(), std::string(op) + ": input has " + std::to_string(width) +
                                                " entries, network expects " + std::to_string(p.input_width()));
}

inline void check_scalar_output(const NetworkParams& p, const char* op) {
    require_shape(p.output_width() == 1,
                  std::string(op) + ": needs a scalar-output network, got output width " + std::to_string(p.output_width()));
}

}  // namespace detail

// --- batched (rows are samples) -------------------------------------------

/// Network outputs for every row of `inputs` (B x n_out).
inline Matrix forward_batch(const NetworkParams& p, const Matrix& inputs) {
    detail::check_input(p, inputs.cols(), "forward");
    return forward_trace(view(p), inputs, false).output;
}

inline Matrix input_gradient_batch(const NetworkParams& p, const Matrix& inputs) {
    detail::check_input(p, inputs.cols(), "input_gradient");
    detail::check_scalar_output(p, "input_gradient");
    const auto net = view(p);
    const auto tr = forward_trace(net, inputs);
    return gradient_trace(net, tr).input;
}

/// Row i of the result is H(inputs.row(i)) * directions.row(i).
inline Matrix input_hvp_batch(const NetworkParams& p, const Matrix& inputs, const Matrix& directions) {
    detail::check_input(p, inputs.cols(), "input_hvp");
    detail::check_scalar_output(p, "input_hvp");
    require_shape(directions.rows() == inputs.rows() && directions.cols() == inputs.cols(),
                  "input_hvp: direction shape " + shape_string(directions) + " differs from input " + shape_string(inputs));
    const auto net = view(p);
    const auto tr = forward_trace(net, inputs);
    const auto g = gradient_trace(net, tr);
    return hvp_trace(net, tr, g, directions);
}

// --- single point -----------------------------------------------------------

inline double forward(const NetworkParams& p, const Vector& input) {
    detail::check_scalar_output(p, "forward");
    return forward_batch(p, input.transpose())(0, 0);
}

inline Vector input_gradient(const NetworkParams& p, const Vector& input) {
    return input_gradient_batch(p, input.transpose()).row(0).transpose();
}

inline Vector input_hvp(const NetworkParams& p, const Vector& input, const Vector& direction) {
    require_shape(direction.size() == input.size(), "input_hvp: direction length " + std::to_string(direction.size()) +
                                                        " differs from input length " + std::to_string(input.size()));
    return input_hvp_batch(p, input.transpose(), direction.transpose()).row(0).transpose();
}

/// Full input Hessian: one batched HVP over the coordinate directions.
inline Matrix input_hessian(const NetworkParams& p, const Vector& input) {
    detail::check_input(p, input.size(), "input_hessian");
    const Index n = input.size();
    const Matrix inputs = input.transpose().replicate(n, 1);
    const Matrix rows = input_hvp_batch(p, inputs, Matrix::Identity(n, n));
    return rows.transpose();
}

inline DerivativeBundle derivatives(const NetworkParams& p, const Vector& input, bool with_hessian = false) {
    DerivativeBundle b;
    b.value = forward(p, input);
    b.gradient = input_gradient(p, input);
    if (with_hessian) b.hessian = input_hessian(p, input);
    return b;
}

// --- parameter gradients ----------------------------------------------------

/// Loss value and its gradient with respect to every weight and bias,
/// shaped like the parameters (also usable through `flatten`).
struct LossGradient {
    double loss = 0.0;
    NetworkParams gradient;
};

/// Differentiates an arbitrary scalar loss with respect to the parameters.
/// `build(net, tape)` receives the parameters as tape leaves and returns a 1 x 1 Var.
/// Losses may contain input gradients and HVPs; those paths are differentiated exactly.
template <class Build>
LossGradient loss_param_gradient(const NetworkParams& p, Build&& build) {
    p.validate();
    Tape tape;
    const NetView<Var> net = record_params(tape, p);
    const Var loss = build(net, tape);
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value)) throw NonFiniteError("loss is not finite", -1);
    tape.backward(loss);
    LossGradient out;
    out.loss = value;
    out.gradient = zero_network(p.arch);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        out.gradient.weights[l] = tape.adjoint(net.weights[l]);
        out.gradient.biases[l] = tape.adjoint(net.biases[l]).row(0).transpose();
    }
    return out;
}

/// Mean-squared-residual loss and its parameter gradient. `build(net, tape)`
/// returns the B x m residual; a non-finite row is reported by its sample index.
template <class Build>
LossGradient residual_loss_gradient(const NetworkParams& p, Build&& build) {
    return loss_param_gradient(p, [&](const NetView<Var>& net, Tape& tape) {
        const Var residual = build(net, tape);
        const Index bad = first_nonfinite_row(tape.value(residual));
        if (bad >= 0) throw NonFiniteError("residual is not finite", bad);
        return mean_square(residual);
    });
}

}  // namespace dlnn
