#include <cmath>
#include <filesystem>

#include <catch_amalgamated.hpp>

#include "dlnn/dlnn.hpp"

using namespace dlnn;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

Trajectory make_traj(const std::vector<double>& t, const std::vector<Vector>& s) {
    Trajectory tr;
    for (std::size_t i = 0; i < t.size(); ++i) tr.push_back(t[i], s[i]);
    return tr;
}

}  // namespace

TEST_CASE("learned diffusion rate of the exact stub") {
    const Matrix K = reference_two_dof_system().K;
    const RateFn f = learned_rate_diffusion(quadratic_stub(K));
    const Vector r = f(Vector{{1.0, 0.0}});
    CHECK_THAT(r[0], WithinAbs(-1.0, 1e-14));
    CHECK_THAT(r[1], WithinAbs(0.4, 1e-14));
    CHECK(f(Vector::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("learned mechanics rate of the exact stub") {
    const MechanicsSystem sys = reference_two_dof_system();
    const RateFn f = learned_rate_mechanics(mechanics_stub(sys), sys.M);
    const Vector r = f(Vector{{1.0, 0.0, 0.0, 0.0}});
    CHECK_THAT(r[2], WithinAbs(-1.0, 1e-14));
    CHECK_THAT(r[3], WithinAbs(0.4, 1e-14));
    CHECK(f(Vector::Zero(4)).cwiseAbs().maxCoeff() == 0.0);
    const Vector y{{0.3, -0.1, 0.25, 0.4}};
    CHECK((f(y) - mass_spring_damper_rate(sys)(y)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(learned_rate_mechanics(mechanics_stub(sys), Matrix::Zero(2, 2)), ConfigError);
}

TEST_CASE("reverse rollout of scalar decay") {
    const RateFn decay = [](const Vector& y) { return Vector(-y); };
    RolloutConfig rc;
    rc.direction = Direction::reverse;
    rc.t_end = 1.0;
    rc.tol = 1e-10;
    rc.output_times = {1.0, 0.5, 0.0};
    const Trajectory tr = rollout(decay, Vector::Constant(1, std::exp(-1.0)), rc);
    REQUIRE(tr.size() == 3);
    CHECK(tr.times.front() == 1.0);
    CHECK(tr.times.back() == 0.0);
    CHECK_THAT(tr.back()[0], WithinAbs(1.0, 1e-8));
    CHECK_THAT(tr.states[1][0], WithinAbs(std::exp(-0.5), 1e-8));
}

TEST_CASE("forward then reverse with the exact stub returns the initial condition") {
    const ShapeMask mask = default_microstructure_mask(8, 8);
    const Matrix K = assemble_diffusion_stiffness(microstructure_grid(mask));
    const RateFn f = learned_rate_diffusion(quadratic_stub(K));
    const Vector ic = gen_precipitate_shapes(8, 8)[1].indicator();
    RolloutConfig fwd;
    fwd.t_end = 0.02;
    fwd.tol = 1e-10;
    const Vector end = rollout(f, ic, fwd).back();
    RolloutConfig rev = fwd;
    rev.direction = Direction::reverse;
    CHECK((rollout(f, end, rev).back() - ic).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("baseline rate is defined in both directions") {
    NetworkParams p = zero_network({{2, 3, 2}, Activation::tanh});
    p.biases[1] << 0.5, -0.25;
    const RateFn f = baseline_rate(p);
    RolloutConfig rc;
    rc.t_end = 2.0;
    rc.output_times = {0.0, 2.0};
    const Trajectory fw = rollout(f, Vector::Zero(2), rc);
    CHECK_THAT(fw.back()[0], WithinAbs(1.0, 1e-12));
    CHECK_THAT(fw.back()[1], WithinAbs(-0.5, 1e-12));
    rc.direction = Direction::reverse;
    rc.output_times = {2.0, 0.0};
    const Trajectory bw = rollout(f, fw.back(), rc);
    CHECK(bw.back().cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(baseline_rate(zero_network({{2, 3, 3}, Activation::tanh})), ShapeError);
}

TEST_CASE("rollout under the learned rate matches the extracted linear dynamics for a stub") {
    const Matrix K = lehmer_matrix(4);
    const NetworkParams stub = quadratic_stub(K);
    const Matrix Khat = extract_K_diffusion(stub, Vector::Constant(4, 0.3));
    const auto times = uniform_times(2.0, 21);
    RolloutConfig rc;
    rc.t_end = 2.0;
    rc.output_times = times;
    const Vector ic{{1.0, 0.5, 0.25, 0.1}};
    const Trajectory a = rollout(learned_rate_diffusion(stub), ic, rc);
    const Trajectory b = linear_system_exact(-Khat, ic, times);
    CHECK(max_abs_error(a, b) < 1e-8);
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a.states[i].norm() <= a.states[i - 1].norm() + 1e-12);
}

TEST_CASE("reverse rollout that blows up reports a partial trajectory") {
    const RateFn f = [](const Vector& y) { return Vector(-y.array().square()); };
    RolloutConfig rc;
    rc.direction = Direction::reverse;
    rc.t_end = 2.0;
    try {
        rollout(f, Vector::Ones(1), rc);
        FAIL("expected IntegratorAbort");
    } catch (const IntegratorAbort& e) {
        CHECK(!e.partial().empty());
        CHECK(e.partial().times.front() == 2.0);
        CHECK(e.partial().times.back() < 2.0);
    }
}

TEST_CASE("error metrics") {
    const Trajectory t = make_traj({0, 1}, {Vector{{3.0, 0.0}}, Vector{{0.0, 4.0}}});
    CHECK(max_abs_error(t, t) == 0.0);
    CHECK(percent_rms_error(t, t) == 0.0);
    const Trajectory p = make_traj({0, 1}, {Vector{{3.0, 0.0}}, Vector{{0.0, 3.0}}});
    CHECK(max_abs_error(p, t) == 1.0);
    CHECK_THAT(percent_rms_error(p, t), WithinAbs(20.0, 1e-12));
    CHECK_THROWS_AS(max_abs_error(make_traj({0}, {Vector{{1.0, 1.0}}}), t), ShapeError);
}

TEST_CASE("time grids and resampling") {
    const Trajectory t = make_traj({0, 1, 2}, {Vector{{0.0}}, Vector{{2.0}}, Vector{{4.0}}});
    CHECK(same_time_grid(t, t));
    const Trajectory r = resample(t, {0.5, 1.5});
    CHECK_FALSE(same_time_grid(r, t));
    CHECK_THAT(r.states[0][0], WithinAbs(1.0, 1e-15));
    CHECK_THAT(r.states[1][0], WithinAbs(3.0, 1e-15));
    CHECK_THROWS_AS(resample(t, {2.5}), ConfigError);
    const Trajectory rev = make_traj({2, 1, 0}, {Vector{{4.0}}, Vector{{2.0}}, Vector{{0.0}}});
    CHECK_THAT(resample(rev, {1.5}).states[0][0], WithinAbs(3.0, 1e-15));
}

TEST_CASE("threshold IoU") {
    const ShapeMask sq = gen_precipitate_shapes(8, 8)[0];
    CHECK(threshold_iou(sq.indicator(), sq) == 1.0);
    CHECK(threshold_iou(Vector::Zero(64), sq) == 0.0);
    Vector half = sq.indicator();
    std::size_t removed = 0;
    for (Index i = 0; i < half.size() && removed < sq.count() / 2; ++i)
        if (half[i] == 1.0) {
            half[i] = 0.49;
            ++removed;
        }
    CHECK_THAT(threshold_iou(half, sq), WithinAbs(0.5, 1e-15));
}

TEST_CASE("image sequence export") {
    const fs::path dir = fs::temp_directory_path() / "dlnn_test_evolve_frames";
    fs::remove_all(dir);
    const ShapeMask sq = gen_precipitate_shapes(8, 8)[0];
    const Trajectory tr = make_traj({0.0, 0.01}, {sq.indicator(), Vector(0.5 * sq.indicator())});
    save_image_sequence(tr, 8, 8, dir);
    CHECK(fs::exists(dir / "frame_0000.csv"));
    CHECK(fs::exists(dir / "frame_0001.csv"));
    const std::string text = read_file(dir / "frame_0001.csv");
    CHECK(text.rfind("# t=0.01", 0) == 0);
    fs::remove_all(dir);
}
