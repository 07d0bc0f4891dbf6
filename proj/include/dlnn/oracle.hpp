#pragma once

// Ground-truth physics used to generate data and to check learned models.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "dlnn/dataset.hpp"
#include "dlnn/error.hpp"
#include "dlnn/lagrangian.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/trajectory.hpp"

namespace dlnn {

/// Autonomous first-order dynamics y' = f(y).
using RateFn = std::function<Vector(const Vector&)>;

/// Integration stopped early. `partial()` holds everything accepted so far.
class IntegratorAbort : public Error {
public:
    IntegratorAbort(const std::string& what, Trajectory partial) : Error(what), partial_(std::move(partial)) {}
    const Trajectory& partial() const noexcept { return partial_; }

private:
    Trajectory partial_;
};

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with FSAL and a 4th-order continuous extension
// ---------------------------------------------------------------------------

struct Rk45Options {
    double rtol = 1e-9;
    double atol = 1e-9;
    double max_step = std::numeric_limits<double>::infinity();
    double first_step = 0.0;  // 0: pick automatically
    std::size_t max_steps = 10'000'000;
    /// Report states at these times (increasing, inside the span). Empty: every accepted step.
    std::vector<double> output_times;
    bool record_rates = false;

    static Rk45Options with_tol(double tol) {
        Rk45Options o;
        o.rtol = tol;
        o.atol = tol;
        return o;
    }
};

namespace dp45 {
inline constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr std::array<std::array<double, 6>, 7> a{{
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
}};
// 5th-order weights minus embedded 4th-order weights.
inline constexpr std::array<double, 7> e{71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                                         -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
// Dense output: y(t + th) = y + h * sum_i k_i * sum_j p[i][j] th^(j+1).
inline constexpr std::array<std::array<double, 4>, 7> p{{
    {1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933, 87487479700.0 / 32700410799},
    {0.0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072},
    {0.0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408, 701980252875.0 / 199316789632},
    {0.0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844},
    {0.0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423},
}};
}  // namespace dp45

/// Adaptive Dormand-Prince integration of y' = f(y) over [t0, t1], t1 > t0.
/// Each accepted step keeps the RMS of error/(atol + rtol*|y|) at or below 1.
inline Trajectory rk45_integrate(const RateFn& f, const Vector& y0, double t0, double t1, const Rk45Options& opt = {}) {
    require_config(opt.rtol > 0 && opt.atol > 0, "rk45: tolerances must be positive");
    require_config(t1 > t0, "rk45: t1 must exceed t0");
    for (std::size_t i = 0; i < opt.output_times.size(); ++i) {
        const double t = opt.output_times[i];
        require_config(t >= t0 && t <= t1, "rk45: output time outside the integration span");
        require_config(i == 0 || t > opt.output_times[i - 1], "rk45: output times must increase");
    }
    const Index n = y0.size();
    const double sqrt_n = std::sqrt(static_cast<double>(std::max<Index>(n, 1)));
    auto error_norm = [&](const Vector& err, const Vector& ya, const Vector& yb) {
        const Vector scale = (ya.cwiseAbs().cwiseMax(yb.cwiseAbs()) * opt.rtol).array() + opt.atol;
        return err.cwiseQuotient(scale).stableNorm() / sqrt_n;
    };

    Trajectory out;
    auto emit = [&](double t, const Vector& y) {
        out.push_back(t, y);
        if (opt.record_rates) out.rates.push_back(f(y));
    };

    Vector y = y0;
    double t = t0;
    std::array<Vector, 7> k;
    k[0] = f(y);
    if (!k[0].allFinite()) throw IntegratorAbort("rk45: non-finite rate at initial state", out);

    std::size_t next_out = 0;
    const bool dense = !opt.output_times.empty();
    if (!dense) emit(t, y);
    while (dense && next_out < opt.output_times.size() && opt.output_times[next_out] <= t) emit(opt.output_times[next_out++], y);

    // Initial step (Hairer, Norsett & Wanner, II.4).
    double h = opt.first_step;
    if (h <= 0.0) {
        const Vector scale = (y.cwiseAbs() * opt.rtol).array() + opt.atol;
        const double d0 = y.cwiseQuotient(scale).stableNorm() / sqrt_n;
        const double d1 = k[0].cwiseQuotient(scale).stableNorm() / sqrt_n;
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        if (!std::isfinite(h0)) h0 = 1e-6;
        h0 = std::min(h0, t1 - t0);
        const Vector y1 = y + h0 * k[0];
        const double d2 = (f(y1) - k[0]).cwiseQuotient(scale).stableNorm() / sqrt_n / h0;
        const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                       : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
        h = std::min(100.0 * h0, h1);
        if (!std::isfinite(h) || h <= 0.0) h = 1e-6;
    }
    h = std::min({h, opt.max_step, t1 - t0});

    constexpr double safety = 0.9, min_factor = 0.2, max_factor = 10.0;
    std::size_t steps = 0;
    while (t < t1) {
        if (++steps > opt.max_steps) throw IntegratorAbort("rk45: step budget exhausted at t=" + format_double(t), out);
        const double min_step = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
        bool accepted = false;
        Vector y_new;
        double h_used = h;
        while (!accepted) {
            if (!(h >= min_step)) {
                if (dense) {
                    // Report the last accepted state even if it is not on the output grid.
                    if (out.empty() || out.times.back() < t) emit(t, y);
                }
                throw IntegratorAbort("rk45: step size underflow at t=" + format_double(t), out);
            }
            if (t + h > t1) h = t1 - t;
            for (std::size_t s = 1; s < 7; ++s) {
                Vector ys = y;
                for (std::size_t j = 0; j < s; ++j)
                    if (dp45::a[s][j] != 0.0) ys += (h * dp45::a[s][j]) * k[j];
                k[s] = f(ys);
                if (s == 6) y_new = std::move(ys);
            }
            Vector err = Vector::Zero(n);
            for (std::size_t s = 0; s < 7; ++s)
                if (dp45::e[s] != 0.0) err += (h * dp45::e[s]) * k[s];
            const double en = error_norm(err, y, y_new);
            if (!std::isfinite(en) || !y_new.allFinite()) {
                h *= min_factor;
                continue;
            }
            h_used = h;
            if (en <= 1.0) {
                accepted = true;
                const double factor = en == 0.0 ? max_factor : std::min(max_factor, safety * std::pow(en, -0.2));
                h = std::min(h * factor, opt.max_step);
            } else {
                h *= std::max(min_factor, safety * std::pow(en, -0.2));
            }
        }

        const double t_new = (t + h_used >= t1) ? t1 : t + h_used;
        if (dense) {
            while (next_out < opt.output_times.size() && opt.output_times[next_out] <= t_new) {
                const double theta = (opt.output_times[next_out] - t) / h_used;
                Vector yi = y;
                for (std::size_t s = 0; s < 7; ++s) {
                    double w = 0.0, pw = theta;
                    for (std::size_t j = 0; j < 4; ++j, pw *= theta) w += dp45::p[s][j] * pw;
                    if (w != 0.0) yi += (h_used * w) * k[s];
                }
                const double t_out = opt.output_times[next_out++];
                emit(t_out, t_out == t_new ? y_new : yi);
            }
        }
        y = std::move(y_new);
        t = t_new;
        k[0] = k[6];  // FSAL
        if (!dense) emit(t, y);
    }
    return out;
}

inline Trajectory rk45_integrate(const RateFn& f, const Vector& y0, double t0, double t1, double tol) {
    return rk45_integrate(f, y0, t0, t1, Rk45Options::with_tol(tol));
}

// ---------------------------------------------------------------------------
// Exact linear solutions
// ---------------------------------------------------------------------------

/// y(t) = exp(A t) y0 at each requested time (scaling-and-squaring Pade exponential).
inline Trajectory linear_system_exact(const Matrix& A, const Vector& y0, const std::vector<double>& times) {
    require_shape(A.rows() == A.cols(), "linear_system_exact: A must be square");
    require_shape(A.rows() == y0.size(), "linear_system_exact: y0 length does not match A");
    Trajectory out;
    for (double t : times) {
        require_config(std::isfinite(t), "linear_system_exact: non-finite time");
        const Matrix e = (A * t).exp();
        out.push_back(t, e * y0);
    }
    return out;
}

/// First-order generator of M x'' + C_sym x' + K x = 0 over (x, x_dot).
inline Matrix mechanics_generator(const MechanicsSystem& sys) {
    sys.validate();
    const Index n = sys.dimension();
    Eigen::FullPivLU<Matrix> lu(sys.M);
    require_config(lu.isInvertible(), "mechanics system: M is singular");
    const Matrix minv = lu.inverse();
    Matrix a = Matrix::Zero(2 * n, 2 * n);
    a.topRightCorner(n, n) = Matrix::Identity(n, n);
    a.bottomLeftCorner(n, n) = -minv * sys.K;
    a.bottomRightCorner(n, n) = -minv * symmetric_part(sys.C);
    return a;
}

/// d/dt (x, x_dot) = (x_dot, -M^{-1}(C_sym x_dot + K x)).
inline RateFn mass_spring_damper_rate(const MechanicsSystem& sys) {
    sys.validate();
    const Index n = sys.dimension();
    Eigen::FullPivLU<Matrix> lu(sys.M);
    require_config(lu.isInvertible(), "mechanics system: M is singular");
    const Matrix minv = lu.inverse();
    const Matrix csym = symmetric_part(sys.C);
    const Matrix k = sys.K;
    return [n, minv, csym, k](const Vector& phase) {
        require_shape(phase.size() == 2 * n, "mass_spring_damper_rate: phase vector must have 2N entries");
        Vector out(2 * n);
        out.head(n) = phase.tail(n);
        out.tail(n) = -minv * (csym * phase.tail(n) + k * phase.head(n));
        return out;
    };
}

/// x_ddot from the equation of motion.
inline Vector mechanics_acceleration(const MechanicsSystem& sys, const Vector& x, const Vector& x_dot) {
    sys.validate();
    return sys.M.fullPivLu().solve(-(symmetric_part(sys.C) * x_dot + sys.K * x));
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

enum class Boundary { zero_flux, fixed_zero };

/// Cell-centred grid. Cell (row, col) has index row * nx + col; row 0 is the top edge.
struct DiffusionGrid {
    int nx = 0;
    int ny = 0;
    double cell_size = 1.0;        // um
    Vector diffusivity;            // um^2/s per cell
    std::array<Boundary, 4> boundary{Boundary::zero_flux, Boundary::zero_flux, Boundary::zero_flux, Boundary::zero_flux};
    // boundary order: top, bottom, left, right

    Index cells() const { return static_cast<Index>(nx) * ny; }
    Index index(int row, int col) const { return static_cast<Index>(row) * nx + col; }

    void validate() const {
        require_config(nx > 0 && ny > 0, "diffusion grid: dimensions must be positive");
        require_config(cell_size > 0, "diffusion grid: cell size must be positive");
        require_shape(diffusivity.size() == cells(), "diffusion grid: diffusivity field has wrong size");
        for (Index i = 0; i < diffusivity.size(); ++i)
            require_config(diffusivity[i] > 0 && std::isfinite(diffusivity[i]),
                           "diffusion grid: diffusivity must be positive (cell " + std::to_string(i) + ")");
    }

    static DiffusionGrid uniform(int nx, int ny, double cell_size, double d) {
        DiffusionGrid g;
        g.nx = nx;
        g.ny = ny;
        g.cell_size = cell_size;
        g.diffusivity = Vector::Constant(static_cast<Index>(nx) * ny, d);
        return g;
    }
};

inline double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

/// Finite-volume K with c' + K c = 0: 5-point stencil, harmonic-mean face diffusivity.
/// Zero-flux edges contribute nothing; fixed-zero edges couple to a ghost at distance h/2.
inline Matrix assemble_diffusion_stiffness(const DiffusionGrid& g) {
    g.validate();
    const Index n = g.cells();
    const double inv_h2 = 1.0 / (g.cell_size * g.cell_size);
    Matrix k = Matrix::Zero(n, n);
    auto couple = [&](Index i, Index j) {
        const double w = harmonic_mean(g.diffusivity[i], g.diffusivity[j]) * inv_h2;
        k(i, i) += w;
        k(j, j) += w;
        k(i, j) -= w;
        k(j, i) -= w;
    };
    for (int r = 0; r < g.ny; ++r) {
        for (int c = 0; c < g.nx; ++c) {
            const Index i = g.index(r, c);
            if (c + 1 < g.nx) couple(i, g.index(r, c + 1));
            if (r + 1 < g.ny) couple(i, g.index(r + 1, c));
            const bool edges[4] = {r == 0, r == g.ny - 1, c == 0, c == g.nx - 1};
            for (int e = 0; e < 4; ++e)
                if (edges[e] && g.boundary[static_cast<std::size_t>(e)] == Boundary::fixed_zero)
                    k(i, i) += 2.0 * g.diffusivity[i] * inv_h2;
        }
    }
    return k;
}

/// c' = -K c
inline RateFn diffusion_rate(const Matrix& K) {
    require_shape(K.rows() == K.cols(), "diffusion_rate: K must be square");
    return [K](const Vector& c) -> Vector { return -(K * c); };
}

/// Mirror ("undiffuser") flow eta' = +K eta.
inline RateFn mirror_rate(const Matrix& K) {
    require_shape(K.rows() == K.cols(), "mirror_rate: K must be square");
    return [K](const Vector& eta) -> Vector { return K * eta; };
}

/// L_ij = min(i,j) / max(i,j), 1-based.
inline Matrix lehmer_matrix(int n) {
    require_config(n >= 1, "lehmer_matrix: n must be at least 1");
    Matrix l(n, n);
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j) l(i - 1, j - 1) = static_cast<double>(std::min(i, j)) / std::max(i, j);
    return l;
}

/// Mass-spring-damper parameters of the two-degree-of-freedom reference system.
inline MechanicsSystem reference_two_dof_system() {
    MechanicsSystem s;
    s.M = Matrix::Identity(2, 2);
    s.K.resize(2, 2);
    s.K << 1.0, -0.4, -0.4, 1.0;
    s.C.resize(2, 2);
    s.C << 0.1, 0.1, 0.1, 0.2;
    return s;
}

/// M = K = C = 1.
inline MechanicsSystem unit_single_dof_system() {
    MechanicsSystem s;
    s.M = Matrix::Ones(1, 1);
    s.K = Matrix::Ones(1, 1);
    s.C = Matrix::Ones(1, 1);
    return s;
}

}  // namespace dlnn
