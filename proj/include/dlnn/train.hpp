#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dlnn/dataset.hpp"
#include "dlnn/derivatives.hpp"
#include "dlnn/error.hpp"
#include "dlnn/lagrangian.hpp"
#include "dlnn/network.hpp"

namespace dlnn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 1000;
    int max_epochs = 1000;
    double target_loss = 0.0;
    std::uint64_t seed = 0;
    /// Learning rate is multiplied by lr_decay every lr_decay_every epochs (0 disables).
    double lr_decay = 1.0;
    int lr_decay_every = 0;
    double divergence_threshold = 1e6;

    void validate() const {
        require_config(batch_size >= 1, "batch_size must be at least 1");
        require_config(max_epochs >= 1, "max_epochs must be at least 1");
        require_config(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1, "Adam betas must lie in (0, 1)");
        require_config(adam_eps > 0, "adam_eps must be positive");
        require_config(learning_rate > 0, "learning_rate must be positive");
        require_config(target_loss >= 0, "target_loss must be nonnegative");
        require_config(lr_decay > 0 && lr_decay <= 1 && lr_decay_every >= 0, "invalid learning-rate decay");
    }

    double learning_rate_at(int epoch) const {
        if (lr_decay_every <= 0) return learning_rate;
        return learning_rate * std::pow(lr_decay, epoch / lr_decay_every);
    }
};

struct TrainReport {
    std::vector<double> loss_history;   // full-dataset loss, one per epoch
    std::vector<double> epoch_seconds;  // cumulative wall time at each entry
    double final_loss = 0.0;
    int epochs_run = 0;
    double wall_time = 0.0;
    bool reached_target = false;
};

/// Training was aborted because the loss blew up. Carries the report so far.
class TrainingDiverged : public DivergenceError {
public:
    TrainingDiverged(const std::string& what, TrainReport report) : DivergenceError(what), report_(std::move(report)) {}
    const TrainReport& report() const noexcept { return report_; }

private:
    TrainReport report_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    Vector m;
    Vector v;
    long step = 0;

    static AdamState zeros(Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }
};

/// One bias-corrected Adam update in place. Non-finite gradients leave
/// params and state untouched and raise NonFiniteError.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state, const TrainConfig& cfg, double learning_rate) {
    require_shape(grads.size() == params.size(), "adam_step: gradient size differs from parameter size");
    if (state.m.size() == 0) state = AdamState::zeros(params.size());
    require_shape(state.m.size() == params.size() && state.v.size() == params.size(), "adam_step: optimizer state size mismatch");
    for (Index i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) throw NonFiniteError("adam_step: non-finite gradient at parameter " + std::to_string(i), -1);
    ++state.step;
    state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grads;
    state.v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
    params.array() -= learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.adam_eps);
}

inline void adam_step(Vector& params, const Vector& grads, AdamState& state, const TrainConfig& cfg) {
    adam_step(params, grads, state, cfg, cfg.learning_rate);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// diffusion: r = c_dot + H c. mechanics: r = M x_ddot + C_sym x_dot + K x from Hessian blocks.
/// baseline: r = net(state) - rate.
enum class LossKind { diffusion, mechanics, baseline };

inline std::string_view to_string(LossKind k) {
    switch (k) {
    case LossKind::diffusion: return "diffusion";
    case LossKind::mechanics: return "mechanics";
    case LossKind::baseline: return "baseline";
    }
    return "?";
}

inline LossKind loss_kind_from_string(std::string_view s) {
    if (s == "diffusion") return LossKind::diffusion;
    if (s == "mechanics") return LossKind::mechanics;
    if (s == "baseline") return LossKind::baseline;
    throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

/// Mass matrix recorded in a mechanics dataset manifest, or identity.
inline Matrix dataset_mass_matrix(const SampleBatch& batch) {
    const Index n = batch.rates.cols();
    if (batch.manifest.contains("system") && batch.manifest["system"].contains("M"))
        return matrix_from_json(batch.manifest["system"]["M"]);
    return Matrix::Identity(n, n);
}

/// A dataset bound to a residual; evaluates loss or loss + parameter gradient on row subsets.
class ResidualProblem {
public:
    ResidualProblem(const SampleBatch& batch, LossKind kind, Matrix mass = {}) : batch_(batch), kind_(kind) {
        batch_.validate();
        require_config(!batch_.empty(), "training needs a nonempty dataset");
        if (kind_ == LossKind::mechanics) {
            require_config(batch_.kind == SampleKind::mechanics, "mechanics loss needs a mechanics dataset");
            mass_ = mass.size() ? std::move(mass) : dataset_mass_matrix(batch_);
            require_shape(mass_.rows() == batch_.rates.cols() && mass_.cols() == batch_.rates.cols(),
                          "mass matrix does not match the dataset dimension");
            ops_ = mechanics_operands(mass_, batch_.states, batch_.rates);
        } else if (kind_ == LossKind::diffusion) {
            require_config(batch_.kind == SampleKind::diffusion, "diffusion loss needs a diffusion dataset");
        }
    }

    LossKind kind() const { return kind_; }
    const SampleBatch& batch() const { return batch_; }
    Index size() const { return batch_.size(); }

    /// Expected architecture ends.
    int input_width() const { return static_cast<int>(batch_.states.cols()); }
    int output_width() const { return kind_ == LossKind::baseline ? static_cast<int>(batch_.rates.cols()) : 1; }

    Matrix residuals(const NetworkParams& p) const {
        switch (kind_) {
        case LossKind::diffusion: return diffusion_residual_batch(p, batch_.states, batch_.rates);
        case LossKind::mechanics: return mechanics_residual_batch(p, mass_, batch_.states, batch_.rates);
        case LossKind::baseline: return baseline_residual_batch(p, batch_.states, batch_.rates);
        }
        return {};
    }

    double loss(const NetworkParams& p) const { return batch_loss(residuals(p)); }

    /// Loss and parameter gradient over the selected rows (all rows if empty).
    LossGradient gradient(const NetworkParams& p, const std::vector<Index>& rows = {}) const {
        const bool all = rows.empty() || static_cast<Index>(rows.size()) == size();
        auto pick = [&](const Matrix& m) {
            if (all) return m;
            Matrix out(static_cast<Index>(rows.size()), m.cols());
            for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
            return out;
        };
        switch (kind_) {
        case LossKind::diffusion: {
            const Matrix c = pick(batch_.states), cd = pick(batch_.rates);
            return residual_loss_gradient(p, [&](const NetView<Var>& net, Tape& tape) {
                return diffusion_residual_trace(net, tape.constant(c), tape.constant(cd));
            });
        }
        case LossKind::mechanics: {
            const Matrix phase = pick(ops_.phase), ma = pick(ops_.mass_accel), vd = pick(ops_.velocity_dir);
            const Index n = mass_.rows();
            return residual_loss_gradient(p, [&](const NetView<Var>& net, Tape& tape) {
                return mechanics_residual_trace(net, tape.constant(phase), tape.constant(ma), tape.constant(vd), n);
            });
        }
        case LossKind::baseline: {
            const Matrix s = pick(batch_.states), r = pick(batch_.rates);
            return residual_loss_gradient(p, [&](const NetView<Var>& net, Tape& tape) {
                return baseline_residual_trace(net, tape.constant(s), tape.constant(r));
            });
        }
        }
        return {};
    }

private:
    SampleBatch batch_;
    LossKind kind_;
    Matrix mass_;
    MechanicsOperands ops_;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Adam over mini-batches. One epoch is one shuffled pass over the dataset; the
/// full-dataset loss is checked against the target at the start of every epoch.
inline TrainReport optimize(NetworkParams& params, const ResidualProblem& problem, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {}) {
    cfg.validate();
    params.validate();
    require_shape(params.input_width() == problem.input_width(),
                  "network input width " + std::to_string(params.input_width()) + " does not match dataset width " +
                      std::to_string(problem.input_width()));
    require_shape(params.output_width() == problem.output_width(),
                  "network output width " + std::to_string(params.output_width()) + " does not match the loss (expects " +
                      std::to_string(problem.output_width()) + ")");

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    TrainReport report;
    Vector flat = flatten(params);
    AdamState adam = AdamState::zeros(flat.size());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Index> order(static_cast<std::size_t>(problem.size()));
    std::iota(order.begin(), order.end(), Index{0});
    const bool full_batch = cfg.batch_size >= problem.size();

    auto record = [&](int epoch, double loss) {
        report.loss_history.push_back(loss);
        report.epoch_seconds.push_back(elapsed());
        report.epochs_run = static_cast<int>(report.loss_history.size());
        report.final_loss = loss;
        if (on_epoch) on_epoch(epoch, loss);
        if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
            report.wall_time = elapsed();
            throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (loss " + format_double(loss) + ")",
                                   report);
        }
        return loss <= cfg.target_loss;
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = cfg.learning_rate_at(epoch);
        if (full_batch) {
            const LossGradient lg = problem.gradient(params);
            if (record(epoch, lg.loss)) {
                report.reached_target = true;
                break;
            }
            adam_step(flat, flatten(lg.gradient), adam, cfg, lr);
            params = unflatten(params.arch, flat);
            continue;
        }
        if (record(epoch, problem.loss(params))) {
            report.reached_target = true;
            break;
        }
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));
            const LossGradient lg = problem.gradient(params, rows);
            adam_step(flat, flatten(lg.gradient), adam, cfg, lr);
            params = unflatten(params.arch, flat);
        }
    }
    if (!report.reached_target) {
        report.final_loss = problem.loss(params);
        report.reached_target = report.final_loss <= cfg.target_loss;
    }
    report.wall_time = elapsed();
    return report;
}

struct TrainResult {
    NetworkParams params;
    TrainReport report;
};

/// Fits a scalar dissipative Lagrangian network. `kind` must be diffusion or mechanics.
inline TrainResult train_dlnn(const SampleBatch& batch, const Architecture& arch, const TrainConfig& cfg, LossKind kind,
                              const EpochCallback& on_epoch = {}) {
    require_config(kind != LossKind::baseline, "train_dlnn: use train_baseline for rate regression");
    require_config(arch.output_width() == 1, "train_dlnn: the network output must be a single scalar");
    require_config(is_twice_differentiable_nonlinear(arch.activation),
                   "train_dlnn: activation must have a nonvanishing second derivative");
    const ResidualProblem problem(batch, kind);
    TrainResult r{init_network(arch, cfg.seed), {}};
    r.report = optimize(r.params, problem, cfg, on_epoch);
    return r;
}

/// Fits a direct state -> rate regression network (output width = rate width).
inline TrainResult train_baseline(const SampleBatch& batch, const Architecture& arch, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = {}) {
    const ResidualProblem problem(batch, LossKind::baseline);
    TrainResult r{init_network(arch, cfg.seed), {}};
    r.report = optimize(r.params, problem, cfg, on_epoch);
    return r;
}

/// Training log rows: epoch, loss, wall_time.
inline void save_training_log(const TrainReport& report, const std::filesystem::path& path) {
    Matrix table(static_cast<Index>(report.loss_history.size()), 3);
    for (std::size_t i = 0; i < report.loss_history.size(); ++i) {
        table(static_cast<Index>(i), 0) = static_cast<double>(i);
        table(static_cast<Index>(i), 1) = report.loss_history[i];
        table(static_cast<Index>(i), 2) = report.epoch_seconds[i];
    }
    write_csv(path, {"epoch", "loss", "wall_time"}, table);
}

}  // namespace dlnn
