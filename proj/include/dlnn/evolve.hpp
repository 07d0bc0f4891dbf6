#pragma once

// Rolling out learned dynamics in either time direction.

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "dlnn/datagen.hpp"
#include "dlnn/derivatives.hpp"
#include "dlnn/error.hpp"
#include "dlnn/network.hpp"
#include "dlnn/oracle.hpp"
#include "dlnn/trajectory.hpp"

namespace dlnn {

/// c' = -H(c) c, one HVP per call.
inline RateFn learned_rate_diffusion(const NetworkParams& net) {
    net.validate();
    require_shape(net.output_width() == 1, "learned_rate_diffusion: network must have scalar output");
    return [net](const Vector& c) -> Vector {
        Vector rate = -input_hvp(net, c, c);
        if (!rate.allFinite()) throw NonFiniteError("learned_rate_diffusion: non-finite HVP", -1);
        return rate;
    };
}

/// (x, x_dot)' = (x_dot, -M^{-1}[C_sym x_dot + K x]) with both bracket terms from HVPs.
inline RateFn learned_rate_mechanics(const NetworkParams& net, const Matrix& M) {
    net.validate();
    require_shape(net.output_width() == 1, "learned_rate_mechanics: network must have scalar output");
    require_shape(M.rows() == M.cols() && 2 * M.rows() == net.input_width(),
                  "learned_rate_mechanics: network input must be (x, x_dot) of the mass matrix dimension");
    Eigen::FullPivLU<Matrix> lu(M);
    require_config(lu.isInvertible(), "learned_rate_mechanics: M is singular");
    const Index n = M.rows();
    return [net, lu, n](const Vector& phase) -> Vector {
        require_shape(phase.size() == 2 * n, "learned_rate_mechanics: phase vector must have 2N entries");
        Vector vel_dir = Vector::Zero(2 * n);
        vel_dir.head(n) = phase.tail(n);
        const Vector h_full = input_hvp(net, phase, phase);
        const Vector h_vel = input_hvp(net, phase, vel_dir);
        Vector out(2 * n);
        out.head(n) = phase.tail(n);
        out.tail(n) = lu.solve(-(h_full.head(n) + h_vel.tail(n)));
        if (!out.allFinite()) throw NonFiniteError("learned_rate_mechanics: non-finite rate", -1);
        return out;
    };
}

/// Rate-regression network evaluated directly.
inline RateFn baseline_rate(const NetworkParams& net) {
    net.validate();
    require_shape(net.output_width() == net.input_width(), "baseline_rate: output width must equal state width");
    return [net](const Vector& s) -> Vector {
        require_shape(s.size() == net.input_width(), "baseline_rate: state has wrong length");
        return forward_batch(net, s.transpose()).row(0).transpose();
    };
}

/// Baseline for mechanics: the network predicts x_ddot from (x, x_dot).
inline RateFn baseline_rate_mechanics(const NetworkParams& net) {
    net.validate();
    require_shape(net.input_width() == 2 * net.output_width(), "baseline_rate_mechanics: expects (x, x_dot) -> x_ddot");
    const Index n = net.output_width();
    return [net, n](const Vector& phase) -> Vector {
        Vector out(2 * n);
        out.head(n) = phase.tail(n);
        out.tail(n) = forward_batch(net, phase.transpose()).row(0).transpose();
        return out;
    };
}

enum class Direction { forward, reverse };

inline std::string_view to_string(Direction d) { return d == Direction::forward ? "forward" : "reverse"; }

inline Direction direction_from_string(std::string_view s) {
    if (s == "forward") return Direction::forward;
    if (s == "reverse") return Direction::reverse;
    throw ConfigError("direction must be 'forward' or 'reverse', got '" + std::string(s) + "'");
}

/// Physical time span [t_begin, t_end]. Forward rollouts start at t_begin,
/// reverse rollouts start at t_end and march back to t_begin.
struct RolloutConfig {
    Direction direction = Direction::forward;
    double t_begin = 0.0;
    double t_end = 1.0;
    double tol = 1e-9;
    /// Physical report times: increasing for forward, decreasing for reverse. Empty: every step.
    std::vector<double> output_times;

    void validate() const {
        require_config(tol > 0, "rollout: tol must be positive");
        require_config(t_end > t_begin, "rollout: time span is degenerate");
    }
};

/// Forward: RK45 on [t_begin, t_end]. Reverse: integrates s = t_end - t with rate -f,
/// reporting states at decreasing physical times. No regularisation in either direction.
inline Trajectory rollout(const RateFn& rate, const Vector& ic, const RolloutConfig& cfg) {
    cfg.validate();
    const double span = cfg.t_end - cfg.t_begin;
    Rk45Options opt = Rk45Options::with_tol(cfg.tol);
    if (cfg.direction == Direction::forward) {
        opt.output_times = cfg.output_times;
        return rk45_integrate(rate, ic, cfg.t_begin, cfg.t_end, opt);
    }
    for (double t : cfg.output_times) opt.output_times.push_back(cfg.t_end - t);
    const RateFn backward = [&rate](const Vector& y) -> Vector { return -rate(y); };
    auto to_physical = [&](Trajectory tr) {
        for (double& t : tr.times) t = cfg.t_end - t;
        return tr;
    };
    try {
        return to_physical(rk45_integrate(backward, ic, 0.0, span, opt));
    } catch (const IntegratorAbort& abort) {
        throw IntegratorAbort(std::string("reverse rollout: ") + abort.what(), to_physical(abort.partial()));
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Largest absolute entry of (pred - truth) over all points. Time grids must match.
inline double max_abs_error(const Trajectory& pred, const Trajectory& truth) {
    require_shape(pred.size() == truth.size() && pred.dimension() == truth.dimension(),
                  "trajectory comparison: sizes differ");
    double e = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) e = std::max(e, (pred.states[i] - truth.states[i]).cwiseAbs().maxCoeff());
    return e;
}

/// 100 * ||pred - truth||_F / ||truth||_F over the stacked trajectory matrix.
inline double percent_rms_error(const Trajectory& pred, const Trajectory& truth) {
    require_shape(pred.size() == truth.size() && pred.dimension() == truth.dimension(),
                  "trajectory comparison: sizes differ");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        num += (pred.states[i] - truth.states[i]).squaredNorm();
        den += truth.states[i].squaredNorm();
    }
    require_config(den > 0, "percent_rms_error: reference trajectory is identically zero");
    return 100.0 * std::sqrt(num / den);
}

inline bool same_time_grid(const Trajectory& a, const Trajectory& b, double tol = 1e-12) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a.times[i] - b.times[i]) > tol * std::max(1.0, std::abs(b.times[i]))) return false;
    return true;
}

/// Piecewise-linear resampling onto `times` (within the trajectory's range).
inline Trajectory resample(const Trajectory& tr, const std::vector<double>& times) {
    tr.validate();
    require_config(tr.size() >= 2, "resample: need at least two points");
    const bool increasing = tr.times[1] > tr.times[0];
    const double lo = std::min(tr.times.front(), tr.times.back());
    const double hi = std::max(tr.times.front(), tr.times.back());
    const double slack = 1e-12 * std::max(1.0, hi - lo);
    Trajectory out;
    for (double t : times) {
        require_config(t >= lo - slack && t <= hi + slack, "resample: time " + format_double(t) + " outside trajectory range");
        std::size_t j = 0;
        while (j + 2 < tr.size() && (increasing ? tr.times[j + 1] < t : tr.times[j + 1] > t)) ++j;
        const double w = (t - tr.times[j]) / (tr.times[j + 1] - tr.times[j]);
        out.push_back(t, (1.0 - w) * tr.states[j] + w * tr.states[j + 1]);
    }
    return out;
}

/// Intersection over union between the cells of `image` at or above `threshold` and `mask`.
inline double threshold_iou(const Vector& image, const ShapeMask& mask, double threshold = 0.5) {
    require_shape(image.size() == static_cast<Index>(mask.cells.size()), "threshold_iou: image size differs from mask");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < mask.cells.size(); ++i) {
        const bool a = image[static_cast<Index>(i)] >= threshold;
        const bool b = mask.cells[i] != 0;
        inter += (a && b);
        uni += (a || b);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Per-frame CSV grids: one file per state, ny rows of nx values.
inline void save_image_sequence(const Trajectory& tr, int nx, int ny, const std::filesystem::path& dir,
                                const std::string& prefix = "frame") {
    tr.validate();
    require_shape(tr.dimension() == static_cast<Index>(nx) * ny, "save_image_sequence: state size is not nx*ny");
    for (std::size_t f = 0; f < tr.size(); ++f) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%04zu.csv", prefix.c_str(), f);
        auto out = open_for_write(dir / name);
        out << "# t=" << format_double(tr.times[f]) << '\n';
        for (int r = 0; r < ny; ++r) {
            for (int c = 0; c < nx; ++c) out << (c ? "," : "") << format_double(tr.states[f][static_cast<Index>(r) * nx + c]);
            out << '\n';
        }
    }
}

}  // namespace dlnn
