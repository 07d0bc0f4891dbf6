#pragma once

// Lagrangian-side formulas: reference quadratic forms, the mirror-coordinate
// (Morse-Feshbach) Lagrangian, the two training residuals and matrix recovery
// from the input Hessian of a learned dissipative Lagrangian.

#include <string>
#include <utility>

#include "dlnn/dataset.hpp"
#include "dlnn/derivatives.hpp"
#include "dlnn/error.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/network.hpp"

namespace dlnn {

/// M x_ddot + C x_dot + K x = 0. Only the symmetric part of C enters the motion.
struct MechanicsSystem {
    Matrix M;
    Matrix C;
    Matrix K;

    Index dimension() const { return M.rows(); }

    void validate() const {
        const Index n = M.rows();
        require_shape(n > 0 && M.cols() == n, "mechanics system: M must be square");
        require_shape(C.rows() == n && C.cols() == n, "mechanics system: C must be " + std::to_string(n) + "x" + std::to_string(n));
        require_shape(K.rows() == n && K.cols() == n, "mechanics system: K must be " + std::to_string(n) + "x" + std::to_string(n));
    }
};

struct MechanicsState {
    Vector x;
    Vector x_dot;
    Vector x_ddot;  // optional; empty when unknown
};

struct MirrorState {
    Vector eta;
    Vector eta_dot;
};

/// Concentrations and (optionally) their rates.
struct DiffusionState {
    Vector c;
    Vector c_dot;
};

namespace detail {
inline void check_state(const MechanicsSystem& sys, const MechanicsState& s) {
    sys.validate();
    const Index n = sys.dimension();
    require_shape(s.x.size() == n && s.x_dot.size() == n, "mechanics state does not match system dimension " + std::to_string(n));
    require_shape(s.x_ddot.size() == 0 || s.x_ddot.size() == n, "acceleration does not match system dimension");
}
inline void check_mirror(const MechanicsSystem& sys, const MirrorState& m) {
    require_shape(m.eta.size() == sys.dimension() && m.eta_dot.size() == sys.dimension(),
                  "mirror state does not match system dimension");
}
}  // namespace detail

/// D = 1/2 x_dot'M x_dot + 1/2 x_dot'C x + 1/2 x'K x
inline double dissipative_lagrangian_quadratic(const MechanicsSystem& sys, const MechanicsState& s) {
    detail::check_state(sys, s);
    return 0.5 * s.x_dot.dot(sys.M * s.x_dot) + 0.5 * s.x_dot.dot(sys.C * s.x) + 0.5 * s.x.dot(sys.K * s.x);
}

/// Gradients of the quadratic D with respect to x and x_dot.
inline std::pair<Vector, Vector> dissipative_lagrangian_gradient(const MechanicsSystem& sys, const MechanicsState& s) {
    detail::check_state(sys, s);
    Vector d_x = 0.5 * sys.C.transpose() * s.x_dot + 0.5 * (sys.K + sys.K.transpose()) * s.x;
    Vector d_xdot = 0.5 * (sys.M + sys.M.transpose()) * s.x_dot + 0.5 * sys.C * s.x;
    return {std::move(d_x), std::move(d_xdot)};
}

/// L = eta_dot'M x_dot - 1/2 (x_dot'C eta - eta_dot'C x) - eta'K x
inline double morse_feshbach_lagrangian(const MechanicsSystem& sys, const MechanicsState& s, const MirrorState& m) {
    detail::check_state(sys, s);
    detail::check_mirror(sys, m);
    return m.eta_dot.dot(sys.M * s.x_dot) - 0.5 * (s.x_dot.dot(sys.C * m.eta) - m.eta_dot.dot(sys.C * s.x)) -
           m.eta.dot(sys.K * s.x);
}

struct Momenta {
    Vector p_x;    // dL/d(x_dot): mirror variables only
    Vector p_eta;  // dL/d(eta_dot): observables only
};

inline Momenta momenta(const MechanicsSystem& sys, const MechanicsState& s, const MirrorState& m) {
    detail::check_state(sys, s);
    detail::check_mirror(sys, m);
    return {sys.M.transpose() * m.eta_dot - 0.5 * sys.C * m.eta, sys.M * s.x_dot + 0.5 * sys.C * s.x};
}

// ---------------------------------------------------------------------------
// Reference networks
// ---------------------------------------------------------------------------

/// Network whose output is exactly 1/2 z'Hz: one hidden layer with the
/// quadratic activation over the eigenvectors of sym(H), eigenvalues as output weights.
inline NetworkParams quadratic_stub(const Matrix& hessian) {
    require_shape(hessian.rows() == hessian.cols() && hessian.rows() > 0, "quadratic_stub: Hessian must be square");
    const Index n = hessian.rows();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric_part(hessian));
    NetworkParams p = zero_network({{static_cast<int>(n), static_cast<int>(n), 1}, Activation::quadratic});
    p.weights[0] = eig.eigenvectors().transpose();
    p.weights[1] = eig.eigenvalues().transpose();
    return p;
}

/// Input Hessian of the quadratic D over z = (x, x_dot).
inline Matrix mechanics_hessian(const MechanicsSystem& sys) {
    sys.validate();
    const Index n = sys.dimension();
    Matrix h(2 * n, 2 * n);
    h.topLeftCorner(n, n) = symmetric_part(sys.K);
    h.bottomRightCorner(n, n) = symmetric_part(sys.M);
    h.bottomLeftCorner(n, n) = 0.5 * sys.C;               // d2D / dx_dot_i dx_j
    h.topRightCorner(n, n) = 0.5 * sys.C.transpose();     // d2D / dx_i dx_dot_j
    return h;
}

/// Network realising the quadratic dissipative Lagrangian of `sys` over (x, x_dot).
inline NetworkParams mechanics_stub(const MechanicsSystem& sys) { return quadratic_stub(mechanics_hessian(sys)); }

/// Affine network (identity hidden activation): zero input Hessian.
inline NetworkParams affine_stub(int input_width, std::uint64_t seed = 0) {
    NetworkParams p = init_network({{input_width, input_width, 1}, Activation::identity}, seed);
    p.biases[1](0) = 0.25;
    return p;
}

// ---------------------------------------------------------------------------
// Residuals (generic over Matrix / Var, rows are samples)
// ---------------------------------------------------------------------------

/// r = c_dot + H(c) c
template <class T>
T diffusion_residual_trace(const NetView<T>& net, const T& c, const T& c_dot) {
    const auto tr = forward_trace(net, c);
    const auto g = gradient_trace(net, tr);
    return add(c_dot, hvp_trace(net, tr, g, c));
}

/// Mass-weighted accelerations and the two HVP directions for the mechanics residual.
struct MechanicsOperands {
    Matrix phase;        // (x, x_dot)
    Matrix mass_accel;   // rows (M x_ddot)'
    Matrix velocity_dir; // (x_dot, 0)
};

inline MechanicsOperands mechanics_operands(const Matrix& M, const Matrix& phase, const Matrix& x_ddot) {
    const Index n = M.rows();
    require_shape(M.cols() == n, "mechanics residual: M must be square");
    require_shape(phase.cols() == 2 * n, "mechanics residual: phase width " + std::to_string(phase.cols()) +
                                             " is not 2N = " + std::to_string(2 * n));
    require_shape(x_ddot.rows() == phase.rows() && x_ddot.cols() == n, "mechanics residual: acceleration shape mismatch");
    MechanicsOperands ops;
    ops.phase = phase;
    ops.mass_accel = x_ddot * M.transpose();
    ops.velocity_dir = Matrix::Zero(phase.rows(), 2 * n);
    ops.velocity_dir.leftCols(n) = phase.rightCols(n);
    return ops;
}

/// r = M x_ddot + (H_vx + H_xv) x_dot + H_xx x over inputs (x, x_dot).
/// top(H (x, x_dot)) = H_xx x + H_xv x_dot and bottom(H (x_dot, 0)) = H_vx x_dot.
template <class T>
T mechanics_residual_trace(const NetView<T>& net, const T& phase, const T& mass_accel, const T& velocity_dir, Index n) {
    const auto tr = forward_trace(net, phase);
    const auto g = gradient_trace(net, tr);
    const T h_full = hvp_trace(net, tr, g, phase);
    const T h_vel = hvp_trace(net, tr, g, velocity_dir);
    return add(mass_accel, add(cols(h_full, 0, n), cols(h_vel, n, n)));
}

/// Rate-regression residual: network output minus the recorded rate.
template <class T>
T baseline_residual_trace(const NetView<T>& net, const T& states, const T& rates) {
    return sub(forward_trace(net, states, false).output, rates);
}

namespace detail {
inline Matrix checked(Matrix r, const char* what) {
    const Index bad = first_nonfinite_row(r);
    if (bad >= 0) throw NonFiniteError(std::string(what) + ": non-finite residual", bad);
    return r;
}
}  // namespace detail

inline Matrix diffusion_residual_batch(const NetworkParams& net, const Matrix& c, const Matrix& c_dot) {
    detail::check_input(net, c.cols(), "diffusion_residual");
    detail::check_scalar_output(net, "diffusion_residual");
    require_shape(c_dot.rows() == c.rows() && c_dot.cols() == c.cols(), "diffusion_residual: rate shape mismatch");
    return detail::checked(diffusion_residual_trace(view(net), c, c_dot), "diffusion_residual");
}

inline Vector diffusion_residual(const NetworkParams& net, const Vector& c, const Vector& c_dot) {
    return diffusion_residual_batch(net, c.transpose(), c_dot.transpose()).row(0).transpose();
}

inline Matrix mechanics_residual_batch(const NetworkParams& net, const Matrix& M, const Matrix& phase, const Matrix& x_ddot) {
    detail::check_input(net, phase.cols(), "mechanics_residual");
    detail::check_scalar_output(net, "mechanics_residual");
    const auto ops = mechanics_operands(M, phase, x_ddot);
    return detail::checked(mechanics_residual_trace(view(net), ops.phase, ops.mass_accel, ops.velocity_dir, M.rows()),
                           "mechanics_residual");
}

inline Vector mechanics_residual(const NetworkParams& net, const Matrix& M, const Vector& x, const Vector& x_dot,
                                 const Vector& x_ddot) {
    require_shape(x.size() == x_dot.size(), "mechanics_residual: x and x_dot differ in length");
    Matrix phase(1, x.size() + x_dot.size());
    phase << x.transpose(), x_dot.transpose();
    return mechanics_residual_batch(net, M, phase, x_ddot.transpose()).row(0).transpose();
}

inline Matrix baseline_residual_batch(const NetworkParams& net, const Matrix& states, const Matrix& rates) {
    detail::check_input(net, states.cols(), "baseline_residual");
    require_shape(rates.rows() == states.rows() && rates.cols() == net.output_width(),
                  "baseline_residual: rate shape " + shape_string(rates) + " does not match network output");
    return detail::checked(baseline_residual_trace(view(net), states, rates), "baseline_residual");
}

// ---------------------------------------------------------------------------
// Loss aggregation
// ---------------------------------------------------------------------------

/// Mean of squared residual entries over samples and components.
inline double batch_loss(const Matrix& residuals) {
    require_config(residuals.size() > 0, "batch_loss: empty batch");
    return residuals.squaredNorm() / static_cast<double>(residuals.size());
}

template <class ResidualFn>
double batch_loss(ResidualFn&& residual_fn, const SampleBatch& batch) {
    require_config(!batch.empty(), "batch_loss: empty batch");
    return batch_loss(residual_fn(batch));
}

// ---------------------------------------------------------------------------
// Matrix recovery
// ---------------------------------------------------------------------------

/// K_ij = d2D / dc_i dc_j at the probe, symmetrised.
inline Matrix extract_K_diffusion(const NetworkParams& net, const Vector& c_probe) {
    return symmetric_part(input_hessian(net, c_probe));
}

struct MechanicsMatrices {
    Matrix M;
    Matrix K;
    Matrix C_sym;
};

/// Blocks of the Hessian over (x, x_dot): M from (x_dot, x_dot), K from (x, x),
/// C_sym as the sum of the two cross blocks.
inline MechanicsMatrices extract_matrices_mechanics(const NetworkParams& net, const Vector& probe) {
    require_shape(probe.size() % 2 == 0, "extract_matrices_mechanics: probe length must be even");
    const Matrix h = input_hessian(net, probe);
    const Index n = probe.size() / 2;
    MechanicsMatrices out;
    out.K = symmetric_part(h.topLeftCorner(n, n));
    out.M = symmetric_part(h.bottomRightCorner(n, n));
    out.C_sym = h.bottomLeftCorner(n, n) + h.topRightCorner(n, n);
    return out;
}

}  // namespace dlnn
