#pragma once

// The five experiment protocols: data, architectures, training schedules,
// held-out test cases and metrics. Shared by the command-line tool and the
// acceptance suite so both run exactly the same procedure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "dlnn/datagen.hpp"
#include "dlnn/evolve.hpp"
#include "dlnn/lagrangian.hpp"
#include "dlnn/oracle.hpp"
#include "dlnn/train.hpp"

namespace dlnn {

enum class Experiment { mechanics, two_pixel, lehmer, microstructure, reverse_shapes };

inline std::string_view to_string(Experiment e) {
    switch (e) {
    case Experiment::mechanics: return "mechanics";
    case Experiment::two_pixel: return "two_pixel";
    case Experiment::lehmer: return "lehmer";
    case Experiment::microstructure: return "microstructure";
    case Experiment::reverse_shapes: return "reverse_shapes";
    }
    return "?";
}

inline Experiment experiment_from_string(std::string_view s) {
    for (auto e : {Experiment::mechanics, Experiment::two_pixel, Experiment::lehmer, Experiment::microstructure,
                   Experiment::reverse_shapes})
        if (s == to_string(e)) return e;
    throw ConfigError("unknown experiment '" + std::string(s) +
                      "' (expected mechanics, two_pixel, lehmer, microstructure or reverse_shapes)");
}

struct ExperimentConfig {
    Experiment experiment = Experiment::two_pixel;
    std::uint64_t seed = 0;

    // data
    std::string system = "table1";            // mechanics: table1 | unit
    std::vector<double> ic_values;            // mechanics training grid values
    std::vector<double> test_ic_values;       // mechanics test grid values
    double t_end = 3.0;                       // training horizon
    double test_t_end = 3.0;                  // evaluation horizon
    int samples = 100;                        // snapshots per trajectory
    double data_tol = 1e-9;
    bool frame_difference = false;
    double test_scale = 1.0;                  // IC scaling of the held-out case
    int grid = 8;                             // cells per side (microstructure, reverse_shapes)
    double observe_time = 0.02;               // reverse_shapes observation time

    // models
    std::vector<int> hidden{64, 64};
    std::vector<int> baseline_hidden{64, 64};
    TrainConfig train;
    TrainConfig baseline_train;

    // rollout
    double tol = 1e-9;
    Direction direction = Direction::forward;
    double iou_threshold = 0.5;

    bool is_mechanics() const { return experiment == Experiment::mechanics; }

    void validate() const {
        require_config(samples >= 2, "samples must be at least 2");
        require_config(t_end > 0 && test_t_end > 0, "time horizons must be positive");
        require_config(data_tol > 0 && tol > 0, "tolerances must be positive");
        require_config(test_scale > 0, "test_scale must be positive");
        require_config(grid >= 8, "grid must be at least 8 cells per side");
        require_config(!hidden.empty() && !baseline_hidden.empty(), "hidden layer lists must be nonempty");
        require_config(system == "table1" || system == "unit", "system must be 'table1' or 'unit'");
        if (is_mechanics()) require_config(!ic_values.empty() && !test_ic_values.empty(), "mechanics needs ic grids");
        if (experiment == Experiment::reverse_shapes) require_config(observe_time > 0, "observe_time must be positive");
        train.validate();
        baseline_train.validate();
    }
};

inline ExperimentConfig default_config(Experiment e) {
    ExperimentConfig c;
    c.experiment = e;
    TrainConfig& t = c.train;
    switch (e) {
    case Experiment::mechanics:
        c.system = "table1";
        c.ic_values = {0.2, 0.4};
        c.test_ic_values = {0.15, 0.25, 0.3, 0.35, 0.45};
        c.t_end = c.test_t_end = 10.0;
        c.samples = 50;
        t.batch_size = 1000;
        t.max_epochs = 20000;
        t.target_loss = 1e-7;
        t.lr_decay = 0.5;
        t.lr_decay_every = 2000;
        c.baseline_train = t;
        c.baseline_train.max_epochs = 40000;
        c.baseline_train.lr_decay_every = 4000;
        break;
    case Experiment::two_pixel:
        c.t_end = 3.0;
        c.test_t_end = 6.0;
        t.batch_size = 750;
        t.max_epochs = 5000;
        t.target_loss = 1e-7;
        c.baseline_train = t;
        break;
    case Experiment::lehmer:
        c.t_end = c.test_t_end = 6.0;
        c.test_scale = 0.5;
        c.hidden = c.baseline_hidden = {600};
        t.batch_size = 1000;
        t.max_epochs = 5000;
        t.target_loss = 1e-5;
        c.baseline_train = t;
        break;
    case Experiment::microstructure:
        c.t_end = c.test_t_end = 0.5;
        c.test_scale = 0.9;
        c.hidden = c.baseline_hidden = {600};
        t.batch_size = 100;
        t.max_epochs = 20000;
        t.target_loss = 1e-10;
        t.lr_decay = 0.5;
        t.lr_decay_every = 4000;
        c.baseline_train = t;
        break;
    case Experiment::reverse_shapes:
        c.t_end = c.test_t_end = c.observe_time = 0.02;
        c.hidden = c.baseline_hidden = {600};
        c.direction = Direction::reverse;
        t.learning_rate = 2e-3;
        t.batch_size = 100;
        t.max_epochs = 12000;
        t.target_loss = 1e-8;
        t.lr_decay = 0.5;
        t.lr_decay_every = 3000;
        c.baseline_train = t;
        break;
    }
    return c;
}

inline void set_seed(ExperimentConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.train.seed = seed;
    c.baseline_train.seed = seed;
}

// ---------------------------------------------------------------------------
// Systems and data
// ---------------------------------------------------------------------------

inline MechanicsSystem mechanics_system(const ExperimentConfig& c) {
    return c.system == "unit" ? unit_single_dof_system() : reference_two_dof_system();
}

inline ShapeMask microstructure_mask(const ExperimentConfig& c) { return default_microstructure_mask(c.grid, c.grid); }

/// True diffusion stiffness of a diffusion experiment.
inline Matrix diffusion_stiffness(const ExperimentConfig& c) {
    switch (c.experiment) {
    case Experiment::two_pixel: return reference_two_dof_system().K;
    case Experiment::lehmer: return lehmer_matrix(10);
    case Experiment::microstructure:
    case Experiment::reverse_shapes: return assemble_diffusion_stiffness(microstructure_grid(microstructure_mask(c)));
    case Experiment::mechanics: break;
    }
    throw ConfigError("mechanics has no diffusion stiffness");
}

/// Generator A of the true linear dynamics y' = A y.
inline Matrix true_generator(const ExperimentConfig& c) {
    return c.is_mechanics() ? mechanics_generator(mechanics_system(c)) : Matrix(-diffusion_stiffness(c));
}

inline DiffusionDataOptions diffusion_options(const ExperimentConfig& c) {
    return {c.t_end, c.samples, c.data_tol, c.seed, c.frame_difference};
}

inline SampleBatch make_dataset(const ExperimentConfig& c) {
    c.validate();
    SampleBatch b;
    switch (c.experiment) {
    case Experiment::mechanics:
        b = gen_mechanics_dataset(mechanics_system(c), c.ic_values, {c.t_end, c.samples, c.data_tol, c.seed});
        break;
    case Experiment::two_pixel: b = gen_two_pixel_dataset(diffusion_stiffness(c), diffusion_options(c)); break;
    case Experiment::lehmer: b = gen_lehmer_dataset(10, diffusion_options(c)); break;
    case Experiment::microstructure: {
        const ShapeMask mask = microstructure_mask(c);
        MicrostructureDataOptions o;
        o.t_end = c.t_end;
        o.n_steps = c.samples;
        o.tol = c.data_tol;
        o.seed = c.seed;
        o.frame_difference = c.frame_difference;
        b = gen_microstructure_dataset(microstructure_grid(mask), mask, o);
        break;
    }
    case Experiment::reverse_shapes: {
        std::vector<Vector> ics;
        for (const auto& s : gen_precipitate_shapes(c.grid, c.grid)) ics.push_back(s.indicator());
        DiffusionDataOptions o = diffusion_options(c);
        o.t_end = c.observe_time;
        b = gen_diffusion_dataset(diffusion_stiffness(c), ics, o, "reverse_shapes");
        b.manifest["microstructure_mask"] = microstructure_mask(c).cells;
        break;
    }
    }
    b.manifest["experiment"] = std::string(to_string(c.experiment));
    return b;
}

inline LossKind dlnn_loss_kind(const ExperimentConfig& c) { return c.is_mechanics() ? LossKind::mechanics : LossKind::diffusion; }

inline Architecture dlnn_architecture(const ExperimentConfig& c, int state_width) {
    std::vector<int> sizes{state_width};
    sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
    sizes.push_back(1);
    return {sizes, Activation::tanh};
}

inline Architecture baseline_architecture(const ExperimentConfig& c, int state_width, int rate_width) {
    std::vector<int> sizes{state_width};
    sizes.insert(sizes.end(), c.baseline_hidden.begin(), c.baseline_hidden.end());
    sizes.push_back(rate_width);
    return {sizes, Activation::tanh};
}

inline TrainResult train_experiment_dlnn(const ExperimentConfig& c, const SampleBatch& data,
                                         const EpochCallback& on_epoch = {}) {
    return train_dlnn(data, dlnn_architecture(c, static_cast<int>(data.states.cols())), c.train, dlnn_loss_kind(c), on_epoch);
}

inline TrainResult train_experiment_baseline(const ExperimentConfig& c, const SampleBatch& data,
                                             const EpochCallback& on_epoch = {}) {
    return train_baseline(data,
                          baseline_architecture(c, static_cast<int>(data.states.cols()), static_cast<int>(data.rates.cols())),
                          c.baseline_train, on_epoch);
}

/// Exact quadratic network of the experiment's true system.
inline NetworkParams experiment_stub(const ExperimentConfig& c) {
    return c.is_mechanics() ? mechanics_stub(mechanics_system(c)) : quadratic_stub(diffusion_stiffness(c));
}

// ---------------------------------------------------------------------------
// Held-out cases
// ---------------------------------------------------------------------------

/// A rollout start state and the exact trajectory on the report grid, in rollout order.
struct TestCase {
    std::string name;
    Vector start;
    Trajectory truth;
    ShapeMask mask;  // reverse_shapes only
};

/// Forward cases start at the initial condition and report on [0, test_t_end].
/// Reverse cases start from the exact state at the end of the horizon and
/// report at decreasing times back to 0.
inline std::vector<TestCase> make_test_cases(const ExperimentConfig& c) {
    c.validate();
    const Matrix A = true_generator(c);
    std::vector<TestCase> cases;
    const double horizon = c.experiment == Experiment::reverse_shapes ? c.observe_time : c.test_t_end;
    const auto times = uniform_times(horizon, c.samples);
    auto add = [&](std::string name, const Vector& ic, ShapeMask mask = {}) {
        cases.push_back({std::move(name), ic, linear_system_exact(A, ic, times), std::move(mask)});
    };
    switch (c.experiment) {
    case Experiment::mechanics: {
        const auto ics = grid_initial_conditions(c.test_ic_values, static_cast<int>(2 * mechanics_system(c).dimension()));
        for (std::size_t i = 0; i < ics.size(); ++i) add("case_" + std::to_string(i), ics[i]);
        break;
    }
    case Experiment::two_pixel: {
        const auto ics = two_pixel_initial_conditions();
        for (std::size_t i = 0; i < ics.size(); ++i) add("case_" + std::to_string(i), ics[i]);
        break;
    }
    case Experiment::lehmer: {
        const auto ics = lehmer_initial_conditions(10, c.test_scale);
        for (std::size_t i = 0; i < ics.size(); ++i) add("case_" + std::to_string(i + 1), ics[i]);
        break;
    }
    case Experiment::microstructure: add("top_row", top_row_initial_condition(c.grid, c.grid, c.test_scale)); break;
    case Experiment::reverse_shapes:
        for (const auto& s : gen_precipitate_shapes(c.grid, c.grid)) add(s.name, s.indicator(), s);
        break;
    }
    if (c.direction == Direction::reverse) {
        for (auto& tc : cases) {
            std::reverse(tc.truth.times.begin(), tc.truth.times.end());
            std::reverse(tc.truth.states.begin(), tc.truth.states.end());
            tc.start = tc.truth.states.front();
        }
    }
    return cases;
}

// ---------------------------------------------------------------------------
// Rollouts and metrics
// ---------------------------------------------------------------------------

inline RateFn experiment_rate(const ExperimentConfig& c, const NetworkParams& net, bool baseline) {
    if (c.is_mechanics())
        return baseline ? baseline_rate_mechanics(net) : learned_rate_mechanics(net, mechanics_system(c).M);
    return baseline ? baseline_rate(net) : learned_rate_diffusion(net);
}

/// Rollout on the case's report grid. Direction follows the order of the truth times.
inline Trajectory predict_case(const RateFn& rate, const TestCase& tc, double tol) {
    const auto& t = tc.truth.times;
    require_config(t.size() >= 2, "test case needs at least two report times");
    RolloutConfig rc;
    rc.tol = tol;
    rc.direction = t.back() > t.front() ? Direction::forward : Direction::reverse;
    rc.t_begin = std::min(t.front(), t.back());
    rc.t_end = std::max(t.front(), t.back());
    rc.output_times = t;
    return rollout(rate, tc.start, rc);
}

struct CaseMetrics {
    std::string name;
    double max_abs = 0.0;
    double pct_rms = 0.0;
    double iou = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
    std::vector<CaseMetrics> cases;
    double max_abs = 0.0;   // over all cases
    double pct_rms = 0.0;   // over all cases stacked
    double min_iou = std::numeric_limits<double>::quiet_NaN();
};

/// Compares predictions with the truth of each case. `predictions[i]` pairs with `cases[i]`.
inline EvalReport score(const std::vector<TestCase>& cases, const std::vector<Trajectory>& predictions, double iou_threshold) {
    require_shape(cases.size() == predictions.size(), "score: prediction count differs from case count");
    EvalReport r;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Trajectory& p = predictions[i];
        const Trajectory& t = cases[i].truth;
        require_config(same_time_grid(p, t), "score: prediction for '" + cases[i].name + "' is on a different time grid");
        CaseMetrics m{cases[i].name, max_abs_error(p, t), percent_rms_error(p, t)};
        for (std::size_t k = 0; k < t.size(); ++k) {
            num += (p.states[k] - t.states[k]).squaredNorm();
            den += t.states[k].squaredNorm();
        }
        if (!cases[i].mask.cells.empty()) {
            m.iou = threshold_iou(p.states.back(), cases[i].mask, iou_threshold);
            r.min_iou = std::isnan(r.min_iou) ? m.iou : std::min(r.min_iou, m.iou);
        }
        r.max_abs = std::max(r.max_abs, m.max_abs);
        r.cases.push_back(m);
    }
    r.pct_rms = den > 0 ? 100.0 * std::sqrt(num / den) : 0.0;
    return r;
}

inline EvalReport evaluate_model(const ExperimentConfig& c, const NetworkParams& net, bool baseline,
                                 const std::vector<TestCase>& cases) {
    const RateFn rate = experiment_rate(c, net, baseline);
    std::vector<Trajectory> preds;
    for (const auto& tc : cases) preds.push_back(predict_case(rate, tc, c.tol));
    return score(cases, preds, c.iou_threshold);
}

}  // namespace dlnn
