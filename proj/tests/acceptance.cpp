// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "dlnn/dlnn.hpp"

using namespace dlnn;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

Matrix random_matrix(Index n, std::mt19937_64& rng) {
    Matrix m(n, n);
    for (Index j = 0; j < n; ++j) m.col(j) = random_vector(n, rng);
    return m;
}

// ---------------------------------------------------------------------------
// 1. derivative correctness
// ---------------------------------------------------------------------------

// Straight-line forward pass with std::tanh, independent of the library kernels.
double plain_forward(const NetworkParams& p, const Vector& x) {
    Vector a = x;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Vector z = p.weights[l] * a + p.biases[l];
        if (l + 1 < p.weights.size())
            for (Index i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i]);
        a = z;
    }
    return a[0];
}

Outcome derivative_correctness() {
    double worst_g = 0.0, worst_h = 0.0, worst_sym = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        std::mt19937_64 rng(1000 + s);
        std::uniform_int_distribution<int> width(2, 20), depth(1, 3), in(2, 8);
        std::vector<int> sizes{in(rng)};
        const int layers = depth(rng);
        for (int l = 0; l < layers; ++l) sizes.push_back(width(rng));
        sizes.push_back(1);
        NetworkParams p = init_network({sizes, Activation::tanh}, s);
        for (auto& b : p.biases) b = random_vector(b.size(), rng, 0.5);
        const Index n = sizes.front();
        const Vector x = random_vector(n, rng);

        Vector g_fd(n);
        Matrix h_fd(n, n);
        const double hg = 1e-4, hh = 1e-3;
        for (Index i = 0; i < n; ++i) {
            Vector xp = x, xm = x;
            xp[i] += hg;
            xm[i] -= hg;
            g_fd[i] = (plain_forward(p, xp) - plain_forward(p, xm)) / (2 * hg);
            for (Index j = 0; j < n; ++j) {
                auto f = [&](double a, double b) {
                    Vector y = x;
                    y[i] += a * hh;
                    y[j] += b * hh;
                    return plain_forward(p, y);
                };
                h_fd(i, j) = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * hh * hh);
            }
        }
        const Vector g = input_gradient(p, x);
        const Matrix H = input_hessian(p, x);
        worst_g = std::max(worst_g, (g - g_fd).norm() / std::max(g_fd.norm(), 1e-12));
        worst_h = std::max(worst_h, (H - h_fd).norm() / std::max(h_fd.norm(), 1e-12));
        worst_sym = std::max(worst_sym, (H - H.transpose()).cwiseAbs().maxCoeff() / std::max(H.cwiseAbs().maxCoeff(), 1e-300));
    }
    return {worst_g < 1e-6 && worst_h < 1e-5 && worst_sym < 1e-10,
            "20 nets: gradient rel err " + sci(worst_g) + " (< 1e-6), Hessian rel err " + sci(worst_h) +
                " (< 1e-5), symmetry residual " + sci(worst_sym) + " (< 1e-10)"};
}

// ---------------------------------------------------------------------------
// 2. identity chain
// ---------------------------------------------------------------------------

Outcome identity_chain() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dim(1, 5);
    double worst_sum = 0.0, worst_eta = 0.0, worst_etadot = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = dim(rng);
        MechanicsSystem sys{random_matrix(n, rng), random_matrix(n, rng), random_matrix(n, rng)};
        sys.M = sys.M * sys.M.transpose() + Matrix::Identity(n, n);
        sys.K = 0.5 * (sys.K + sys.K.transpose());
        const MechanicsState s{random_vector(n, rng), random_vector(n, rng), {}};
        const MirrorState m{random_vector(n, rng), random_vector(n, rng)};

        // dD/dx = 1/2 C' x_dot + K x, dD/dx_dot = M x_dot + 1/2 C x (symmetric M, K)
        const Vector dD_dx = 0.5 * sys.C.transpose() * s.x_dot + sys.K * s.x;
        const Vector dD_dxdot = sys.M * s.x_dot + 0.5 * sys.C * s.x;
        const double L = morse_feshbach_lagrangian(sys, s, m);
        const double sum = m.eta_dot.dot(dD_dxdot) - m.eta.dot(dD_dx);
        worst_sum = std::max(worst_sum, std::abs(L - sum) / std::max(std::abs(sum), 1e-300));

        const double h = 1e-6;
        for (Index i = 0; i < n; ++i) {
            MirrorState p = m, q = m;
            p.eta[i] += h;
            q.eta[i] -= h;
            const double d_eta = (morse_feshbach_lagrangian(sys, s, p) - morse_feshbach_lagrangian(sys, s, q)) / (2 * h);
            worst_eta = std::max(worst_eta, std::abs(d_eta + dD_dx[i]) / std::max(1.0, std::abs(dD_dx[i])));
            p = m;
            q = m;
            p.eta_dot[i] += h;
            q.eta_dot[i] -= h;
            const double d_etadot = (morse_feshbach_lagrangian(sys, s, p) - morse_feshbach_lagrangian(sys, s, q)) / (2 * h);
            worst_etadot = std::max(worst_etadot, std::abs(d_etadot - dD_dxdot[i]) / std::max(1.0, std::abs(dD_dxdot[i])));
        }
    }
    return {worst_sum < 1e-12 && worst_eta < 1e-6 && worst_etadot < 1e-6,
            "100 triples: L vs sum rel err " + sci(worst_sum) + " (< 1e-12), dL/deta + dD/dx " + sci(worst_eta) +
                ", dL/deta_dot - dD/dx_dot " + sci(worst_etadot) + " (< 1e-6)"};
}

// ---------------------------------------------------------------------------
// 3. oracle equivalence
// ---------------------------------------------------------------------------

double rk45_vs_expm(const Matrix& A, const std::vector<Vector>& ics, double horizon) {
    const auto times = uniform_times(horizon, 201);
    const RateFn f = [&A](const Vector& y) -> Vector { return A * y; };
    double worst = 0.0;
    for (const auto& ic : ics) {
        Rk45Options o = Rk45Options::with_tol(1e-9);
        o.output_times = times;
        const Trajectory num = rk45_integrate(f, ic, 0.0, horizon, o);
        const Trajectory ref = linear_system_exact(A, ic, times);
        worst = std::max(worst, max_abs_error(num, ref));
    }
    return worst;
}

Outcome oracle_equivalence() {
    const MechanicsSystem sys = reference_two_dof_system();
    const double mech = rk45_vs_expm(mechanics_generator(sys), grid_initial_conditions({0.2, 0.4}, 4), 10.0);
    const double leh = rk45_vs_expm(-lehmer_matrix(10), lehmer_initial_conditions(10), 6.0);
    return {mech < 1e-6 && leh < 1e-6,
            "max state error: reference mechanics " + sci(mech) + ", 10x10 Lehmer " + sci(leh) + " (< 1e-6)"};
}

// ---------------------------------------------------------------------------
// 4. conservation
// ---------------------------------------------------------------------------

Outcome conservation() {
    const ShapeMask mask = default_microstructure_mask(8, 8);
    const Matrix K = assemble_diffusion_stiffness(microstructure_grid(mask));
    const auto t6 = uniform_times(6.0, 301);
    const Trajectory c = sample_trajectory(diffusion_rate(K), top_row_initial_condition(8, 8), t6, 1e-9);
    const double mass0 = c.states.front().sum();
    double mass_drift = 0.0;
    for (const auto& s : c.states) mass_drift = std::max(mass_drift, std::abs(s.sum() - mass0) / mass0);

    double pair_drift = 0.0;
    const auto t3 = uniform_times(3.0, 151);
    for (const Matrix& Ks : {Matrix(reference_two_dof_system().K), lehmer_matrix(10)}) {
        std::mt19937_64 rng(5);
        const Vector c0 = random_vector(Ks.rows(), rng), e0 = random_vector(Ks.rows(), rng);
        const Trajectory cc = sample_trajectory(diffusion_rate(Ks), c0, t3, 1e-12);
        const Trajectory ee = sample_trajectory(mirror_rate(Ks), e0, t3, 1e-12);
        const double inv0 = e0.dot(c0);
        for (std::size_t i = 0; i < t3.size(); ++i)
            pair_drift = std::max(pair_drift, std::abs(ee.states[i].dot(cc.states[i]) - inv0));
    }
    return {mass_drift < 1e-8 && pair_drift < 1e-8,
            "zero-flux mass drift " + sci(mass_drift) + " (< 1e-8 rel, t in [0,6]), eta.c drift " + sci(pair_drift) +
                " (< 1e-8, t in [0,3])"};
}

// ---------------------------------------------------------------------------
// Trained experiments
// ---------------------------------------------------------------------------

struct Trained {
    TrainResult dlnn;
    TrainResult baseline;
    EvalReport dlnn_eval;
    EvalReport baseline_eval;
};

std::string train_summary(const char* name, const TrainReport& r) {
    return std::string(name) + " loss " + sci(r.final_loss) + " @" + std::to_string(r.epochs_run) + " ep";
}

Trained run_experiment(const ExperimentConfig& c, bool with_baseline) {
    const SampleBatch data = make_dataset(c);
    const auto cases = make_test_cases(c);
    Trained t;
    t.dlnn = train_experiment_dlnn(c, data);
    t.dlnn_eval = evaluate_model(c, t.dlnn.params, false, cases);
    if (with_baseline) {
        t.baseline = train_experiment_baseline(c, data);
        t.baseline_eval = evaluate_model(c, t.baseline.params, true, cases);
    }
    return t;
}

Outcome mechanics() {
    ExperimentConfig c = default_config(Experiment::mechanics);
    c.system = "unit";
    const Trained t = run_experiment(c, true);
    const double d = t.dlnn_eval.max_abs, b = t.baseline_eval.max_abs;
    return {d <= 5e-3 && d < b, "M=K=C=1, " + std::to_string(t.dlnn_eval.cases.size()) + " test trajectories: DLNN max err " +
                                    sci(d) + " (<= 5e-3), baseline " + sci(b) + " (DLNN must be lower); " +
                                    train_summary("dlnn", t.dlnn.report) + ", " + train_summary("baseline", t.baseline.report)};
}

Outcome matrix_recovery() {
    const ExperimentConfig c = default_config(Experiment::two_pixel);
    const SampleBatch data = make_dataset(c);
    const TrainResult r = train_experiment_dlnn(c, data);
    const Matrix K = diffusion_stiffness(c);
    const double trained = (extract_K_diffusion(r.params, data.centroid()) - K).cwiseAbs().maxCoeff();
    double stub = 0.0;
    std::mt19937_64 rng(9);
    for (const Matrix& Ks : {K, lehmer_matrix(10), Matrix(assemble_diffusion_stiffness(microstructure_grid(default_microstructure_mask(8, 8))))})
        stub = std::max(stub, (extract_K_diffusion(quadratic_stub(Ks), random_vector(Ks.rows(), rng)) - Ks).cwiseAbs().maxCoeff());
    return {trained <= 0.05 && stub <= 1e-12, "trained two-pixel |K_hat - K|max " + sci(trained) + " (<= 0.05), stubs " +
                                                  sci(stub) + " (<= 1e-12); " + train_summary("dlnn", r.report)};
}

Outcome lehmer() {
    const Trained t = run_experiment(default_config(Experiment::lehmer), true);
    const double d = t.dlnn_eval.max_abs, b = t.baseline_eval.max_abs;
    return {d <= 5e-3 && d < b, "halved ICs to t=6: DLNN max err " + sci(d) + " (<= 5e-3), baseline " + sci(b) +
                                    " (DLNN must be lower); " + train_summary("dlnn", t.dlnn.report) + ", " +
                                    train_summary("baseline", t.baseline.report)};
}

Outcome microstructure() {
    const Trained t = run_experiment(default_config(Experiment::microstructure), false);
    const double e = t.dlnn_eval.pct_rms;
    return {e <= 5.0, "0.9 IC, 64 cells: trajectory RMS error " + sci(e) + "% (<= 5%); " + train_summary("dlnn", t.dlnn.report)};
}

Outcome reverse_shapes() {
    const ExperimentConfig c = default_config(Experiment::reverse_shapes);
    const Trained t = run_experiment(c, false);
    std::ostringstream per;
    for (const auto& m : t.dlnn_eval.cases) per << m.name << " " << m.iou << ", ";
    return {t.dlnn_eval.min_iou >= 0.9, "IoU at 0.5 threshold: " + per.str() + "min " + std::to_string(t.dlnn_eval.min_iou) +
                                             " (>= 0.9); " + train_summary("dlnn", t.dlnn.report)};
}

Outcome round_trip() {
    std::mt19937_64 rng(21);
    const Matrix a = random_matrix(6, rng);
    const std::vector<Matrix> hessians{reference_two_dof_system().K, lehmer_matrix(10),
                                       assemble_diffusion_stiffness(microstructure_grid(default_microstructure_mask(8, 8))),
                                       a * a.transpose() + Matrix::Identity(6, 6)};
    RolloutConfig fwd;
    fwd.t_end = 0.02;
    fwd.tol = 1e-10;
    RolloutConfig rev = fwd;
    rev.direction = Direction::reverse;
    double worst = 0.0;
    auto check = [&](const RateFn& f, const Vector& ic) {
        const Vector back = rollout(f, rollout(f, ic, fwd).back(), rev).back();
        worst = std::max(worst, (back - ic).cwiseAbs().maxCoeff());
    };
    double worst_default = 0.0;
    for (const auto& s : gen_precipitate_shapes(8, 8)) {
        RolloutConfig f9 = fwd, r9 = rev;
        f9.tol = r9.tol = 1e-9;
        const RateFn f = learned_rate_diffusion(quadratic_stub(hessians[2]));
        const Vector ic = s.indicator();
        worst_default = std::max(worst_default, (rollout(f, rollout(f, ic, f9).back(), r9).back() - ic).cwiseAbs().maxCoeff());
    }
    for (const auto& H : hessians) {
        const RateFn f = learned_rate_diffusion(quadratic_stub(H));
        for (int k = 0; k < 3; ++k) check(f, random_vector(H.rows(), rng));
    }
    for (const auto& s : gen_precipitate_shapes(8, 8)) check(learned_rate_diffusion(quadratic_stub(hessians[2])), s.indicator());
    for (const auto& sys : {reference_two_dof_system(), unit_single_dof_system()})
        for (int k = 0; k < 3; ++k) check(learned_rate_mechanics(mechanics_stub(sys), sys.M), random_vector(2 * sys.dimension(), rng));
    return {worst < 1e-6, "max |x(0) - reverse(forward(x(0)))| over t in [0, 0.02] at tol 1e-10: " + sci(worst) +
                              " (< 1e-6); microstructure shapes at tol 1e-9: " + sci(worst_default)};
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"derivative correctness", derivative_correctness},
        {"identity chain", identity_chain},
        {"oracle equivalence", oracle_equivalence},
        {"conservation", conservation},
        {"mechanics extrapolation", mechanics},
        {"matrix recovery", matrix_recovery},
        {"lehmer extrapolation", lehmer},
        {"microstructure extrapolation", microstructure},
        {"reverse diffusion shapes", reverse_shapes},
        {"forward-reverse round trip", round_trip},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        char t[32];
        std::snprintf(t, sizeof t, "%.1f s", secs);
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << " [" << t
                  << "]" << std::endl;
    }
    return failures ? 1 : 0;
}
