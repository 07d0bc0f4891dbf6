#pragma once

// Dataset generators for the five experiment families.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlnn/dataset.hpp"
#include "dlnn/error.hpp"
#include "dlnn/lagrangian.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/oracle.hpp"

namespace dlnn {

/// Binary precipitate indicator on an nx x ny grid (same indexing as DiffusionGrid).
struct ShapeMask {
    int nx = 0;
    int ny = 0;
    std::string name;
    std::vector<std::uint8_t> cells;

    bool at(int row, int col) const { return cells[static_cast<std::size_t>(row) * nx + col] != 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto c : cells) n += c;
        return n;
    }

    /// 1 inside the precipitate, 0 in the matrix.
    Vector indicator() const {
        Vector v(static_cast<Index>(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) v[static_cast<Index>(i)] = cells[i] ? 1.0 : 0.0;
        return v;
    }

    void validate() const {
        require_config(nx > 0 && ny > 0 && cells.size() == static_cast<std::size_t>(nx) * ny, "shape mask: bad dimensions");
        for (auto c : cells) require_config(c <= 1, "shape mask: values must be 0 or 1");
        require_config(count() > 0, "shape mask: at least one cell must be set");
    }

    bool operator==(const ShapeMask& o) const { return nx == o.nx && ny == o.ny && cells == o.cells; }
};

/// Uniform sample times 0, ..., t_end (inclusive), n >= 2.
inline std::vector<double> uniform_times(double t_end, int n) {
    require_config(n >= 2 && t_end > 0, "uniform_times: need n >= 2 and t_end > 0");
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = t_end * i / (n - 1);
    t.back() = t_end;
    return t;
}

/// Cartesian product of `values` over `dims` coordinates, last coordinate fastest.
inline std::vector<Vector> grid_initial_conditions(const std::vector<double>& values, int dims) {
    require_config(!values.empty(), "initial-condition values must be nonempty");
    require_config(dims >= 1, "initial-condition grid needs at least one coordinate");
    std::vector<Vector> out;
    std::vector<std::size_t> idx(static_cast<std::size_t>(dims), 0);
    while (true) {
        Vector v(dims);
        for (int d = 0; d < dims; ++d) v[d] = values[idx[static_cast<std::size_t>(d)]];
        out.push_back(v);
        int d = dims - 1;
        while (d >= 0 && ++idx[static_cast<std::size_t>(d)] == values.size()) idx[static_cast<std::size_t>(d--)] = 0;
        if (d < 0) break;
    }
    return out;
}

/// Oracle trajectory sampled at `times` (times[0] must be 0, the IC time).
inline Trajectory sample_trajectory(const RateFn& rate, const Vector& ic, const std::vector<double>& times, double tol) {
    Rk45Options opt = Rk45Options::with_tol(tol);
    opt.output_times = times;
    return rk45_integrate(rate, ic, times.front(), times.back(), opt);
}

namespace detail {
inline nlohmann::json ics_to_json(const std::vector<Vector>& ics) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : ics) j.push_back(vector_to_json(v));
    return j;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Mechanics
// ---------------------------------------------------------------------------

struct MechanicsDataOptions {
    double t_end = 10.0;
    int samples_per_trajectory = 50;
    double tol = 1e-9;
    std::uint64_t seed = 0;
};

/// One trajectory per point of the (x_1..x_N, x_dot_1..x_dot_N) grid over `ic_values`.
/// States are (x, x_dot); rates are accelerations from the equation of motion.
inline SampleBatch gen_mechanics_dataset(const MechanicsSystem& sys, const std::vector<double>& ic_values,
                                         const MechanicsDataOptions& opt = {}) {
    sys.validate();
    require_config(!ic_values.empty(), "gen_mechanics_dataset: ic_values must be nonempty");
    const Index n = sys.dimension();
    const auto ics = grid_initial_conditions(ic_values, static_cast<int>(2 * n));
    const auto times = uniform_times(opt.t_end, opt.samples_per_trajectory);
    const RateFn rate = mass_spring_damper_rate(sys);

    SampleBatch batch;
    batch.kind = SampleKind::mechanics;
    for (const auto& ic : ics) {
        Trajectory traj = sample_trajectory(rate, ic, times, opt.tol);
        for (const auto& s : traj.states) traj.rates.push_back(mechanics_acceleration(sys, s.head(n), s.tail(n)));
        append_trajectory(batch, traj);
    }
    batch.manifest = {
        {"generator", "mechanics"},
        {"system", {{"M", matrix_to_json(sys.M)}, {"C", matrix_to_json(sys.C)}, {"K", matrix_to_json(sys.K)}}},
        {"ic_values", ic_values},
        {"t_end", opt.t_end},
        {"samples_per_trajectory", opt.samples_per_trajectory},
        {"solver", {{"method", "dormand-prince-45"}, {"rtol", opt.tol}, {"atol", opt.tol}}},
        {"seed", opt.seed},
        {"initial_conditions", detail::ics_to_json(ics)},
    };
    batch.validate();
    return batch;
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

struct DiffusionDataOptions {
    double t_end = 3.0;
    int samples_per_trajectory = 100;
    double tol = 1e-9;
    std::uint64_t seed = 0;
    /// Rates as forward differences of consecutive frames (backward at the last frame)
    /// instead of -K c.
    bool frame_difference = false;
};

/// c' = -K c from each initial condition, sampled uniformly on [0, t_end].
inline SampleBatch gen_diffusion_dataset(const Matrix& K, const std::vector<Vector>& ics, const DiffusionDataOptions& opt,
                                         const std::string& generator) {
    require_shape(K.rows() == K.cols(), "diffusion dataset: K must be square");
    require_config(!ics.empty(), "diffusion dataset: need at least one initial condition");
    const auto times = uniform_times(opt.t_end, opt.samples_per_trajectory);
    const RateFn rate = diffusion_rate(K);
    SampleBatch batch;
    batch.kind = SampleKind::diffusion;
    for (const auto& ic : ics) {
        require_shape(ic.size() == K.rows(), "diffusion dataset: initial condition length does not match K");
        Trajectory traj = sample_trajectory(rate, ic, times, opt.tol);
        if (opt.frame_difference) {
            const std::size_t m = traj.size();
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t a = (i + 1 < m) ? i : i - 1;
                traj.rates.push_back((traj.states[a + 1] - traj.states[a]) / (traj.times[a + 1] - traj.times[a]));
            }
        } else {
            for (const auto& s : traj.states) traj.rates.push_back(-(K * s));
        }
        append_trajectory(batch, traj);
    }
    batch.manifest = {
        {"generator", generator},
        {"system", {{"K", matrix_to_json(K)}}},
        {"t_end", opt.t_end},
        {"samples_per_trajectory", opt.samples_per_trajectory},
        {"rates", opt.frame_difference ? "frame_difference" : "operator"},
        {"solver", {{"method", "dormand-prince-45"}, {"rtol", opt.tol}, {"atol", opt.tol}}},
        {"seed", opt.seed},
        {"initial_conditions", detail::ics_to_json(ics)},
    };
    batch.validate();
    return batch;
}

/// Initial concentrations {0.1, 0.4, 0.7, 1.0}^2.
inline std::vector<Vector> two_pixel_initial_conditions() { return grid_initial_conditions({0.1, 0.4, 0.7, 1.0}, 2); }

inline SampleBatch gen_two_pixel_dataset(const Matrix& K, DiffusionDataOptions opt = {}) {
    require_shape(K.rows() == 2 && K.cols() == 2, "gen_two_pixel_dataset: K must be 2x2");
    return gen_diffusion_dataset(K, two_pixel_initial_conditions(), opt, "two_pixel");
}

/// Case I (1-based): scale * sqrt(I) * [1, 1/2, ..., 1/n].
inline std::vector<Vector> lehmer_initial_conditions(int n, double scale = 1.0) {
    require_config(n >= 1, "lehmer_initial_conditions: n must be at least 1");
    std::vector<Vector> ics;
    for (int case_i = 1; case_i <= n; ++case_i) {
        Vector v(n);
        for (int j = 1; j <= n; ++j) v[j - 1] = scale * std::sqrt(static_cast<double>(case_i)) / j;
        ics.push_back(v);
    }
    return ics;
}

/// Ten-pixel data with K = lehmer_matrix(n). `ic_scale` 0.5 gives the extrapolation set.
inline SampleBatch gen_lehmer_dataset(int n = 10, DiffusionDataOptions opt = {6.0}, double ic_scale = 1.0) {
    auto batch = gen_diffusion_dataset(lehmer_matrix(n), lehmer_initial_conditions(n, ic_scale), opt, "lehmer");
    batch.manifest["ic_scale"] = ic_scale;
    return batch;
}

// ---------------------------------------------------------------------------
// Microstructures
// ---------------------------------------------------------------------------

inline constexpr double kMatrixDiffusivity = 1.0;
inline constexpr double kPrecipitateDiffusivity = 0.01;

/// Rectangular precipitate through the middle of the grid (rows ny/2-1..ny/2+1, cols nx/4..3nx/4-1).
inline ShapeMask default_microstructure_mask(int nx = 8, int ny = 8) {
    require_config(nx >= 4 && ny >= 4, "microstructure mask needs at least a 4x4 grid");
    ShapeMask m{nx, ny, "bar", std::vector<std::uint8_t>(static_cast<std::size_t>(nx) * ny, 0)};
    for (int r = ny / 2 - 1; r <= ny / 2 + 1; ++r)
        for (int c = nx / 4; c < 3 * nx / 4; ++c) m.cells[static_cast<std::size_t>(r) * nx + c] = 1;
    return m;
}

/// Two-phase grid over a 1 um x 1 um square: D = 1 in the matrix, 0.01 in the precipitate, zero flux everywhere.
inline DiffusionGrid microstructure_grid(const ShapeMask& mask, double side = 1.0) {
    mask.validate();
    require_config(mask.nx == mask.ny, "microstructure grid must be square");
    DiffusionGrid g = DiffusionGrid::uniform(mask.nx, mask.ny, side / mask.nx, kMatrixDiffusivity);
    for (std::size_t i = 0; i < mask.cells.size(); ++i)
        if (mask.cells[i]) g.diffusivity[static_cast<Index>(i)] = kPrecipitateDiffusivity;
    return g;
}

/// Top row at `value`, everything else 0.
inline Vector top_row_initial_condition(int nx, int ny, double value = 1.0) {
    Vector c = Vector::Zero(static_cast<Index>(nx) * ny);
    c.head(nx).setConstant(value);
    return c;
}

struct MicrostructureDataOptions {
    double t_end = 0.5;
    int n_steps = 100;
    double ic_value = 1.0;
    double tol = 1e-9;
    std::uint64_t seed = 0;
    bool frame_difference = false;
};

/// Concentration applied on the top row diffusing through the two-phase grid; n_steps snapshots on [0, t_end].
inline SampleBatch gen_microstructure_dataset(const DiffusionGrid& grid, const ShapeMask& mask,
                                              const MicrostructureDataOptions& opt = {}) {
    mask.validate();
    require_shape(mask.nx == grid.nx && mask.ny == grid.ny, "microstructure dataset: mask dimensions differ from grid");
    DiffusionGrid g = grid;
    for (std::size_t i = 0; i < mask.cells.size(); ++i)
        g.diffusivity[static_cast<Index>(i)] = mask.cells[i] ? kPrecipitateDiffusivity : kMatrixDiffusivity;
    const Matrix K = assemble_diffusion_stiffness(g);
    DiffusionDataOptions d{opt.t_end, opt.n_steps, opt.tol, opt.seed, opt.frame_difference};
    auto batch = gen_diffusion_dataset(K, {top_row_initial_condition(g.nx, g.ny, opt.ic_value)}, d, "microstructure");
    batch.manifest["grid"] = {{"nx", g.nx}, {"ny", g.ny}, {"cell_size", g.cell_size}, {"diffusivity", vector_to_json(g.diffusivity)}};
    batch.manifest["mask"] = mask.cells;
    return batch;
}

/// Four distinct precipitates: centred square, disk, plus sign and L shape.
inline std::vector<ShapeMask> gen_precipitate_shapes(int nx = 8, int ny = 8) {
    require_config(nx >= 8 && ny >= 8, "gen_precipitate_shapes: grid must be at least 8x8");
    const auto blank = std::vector<std::uint8_t>(static_cast<std::size_t>(nx) * ny, 0);
    auto set = [nx](ShapeMask& m, int r, int c) { m.cells[static_cast<std::size_t>(r) * nx + c] = 1; };
    std::vector<ShapeMask> shapes;

    ShapeMask square{nx, ny, "square", blank};
    for (int r = ny / 4; r < 3 * ny / 4; ++r)
        for (int c = nx / 4; c < 3 * nx / 4; ++c) set(square, r, c);
    shapes.push_back(square);

    ShapeMask disk{nx, ny, "disk", blank};
    const double cy = (ny - 1) / 2.0, cx = (nx - 1) / 2.0, radius = 0.36 * std::min(nx, ny);
    for (int r = 0; r < ny; ++r)
        for (int c = 0; c < nx; ++c)
            if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius) set(disk, r, c);
    shapes.push_back(disk);

    ShapeMask plus{nx, ny, "plus", blank};
    for (int i = 1; i < std::min(nx, ny) - 1; ++i) {
        for (int w = -1; w <= 0; ++w) {
            set(plus, ny / 2 + w, std::min(i, nx - 2));
            set(plus, std::min(i, ny - 2), nx / 2 + w);
        }
    }
    shapes.push_back(plus);

    ShapeMask ell{nx, ny, "L", blank};
    for (int r = 1; r < ny - 1; ++r)
        for (int c = 1; c <= 2; ++c) set(ell, r, c);
    for (int r = ny - 3; r < ny - 1; ++r)
        for (int c = 1; c < nx - 1; ++c) set(ell, r, c);
    shapes.push_back(ell);
    return shapes;
}

}  // namespace dlnn
