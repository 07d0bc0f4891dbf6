#include <cmath>
#include <filesystem>
#include <fstream>

#include <catch_amalgamated.hpp>

#include "dlnn/dlnn.hpp"

using namespace dlnn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dlnn_test_train_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SampleBatch constant_batch(SampleKind kind, Index n, Index k, Index m, double state, double rate) {
    SampleBatch b;
    b.kind = kind;
    b.states = Matrix::Constant(n, k, state);
    for (Index i = 0; i < n; ++i) b.states(i, 0) = state * static_cast<double>(i) / static_cast<double>(n);
    b.rates = Matrix::Constant(n, m, rate);
    b.times = Vector::LinSpaced(n, 0.0, 1.0);
    b.trajectories.push_back({0, n});
    return b;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Vector p{{1.0, -2.0, 3.0}};
    const Vector before = p;
    AdamState s;
    TrainConfig cfg;
    for (int i = 0; i < 10; ++i) adam_step(p, Vector::Zero(3), s, cfg);
    CHECK(p == before);
}

TEST_CASE("adam: first step moves every coordinate by about the learning rate") {
    Vector p = Vector::Zero(3);
    AdamState s;
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    const Vector g{{0.5, -3.0, 1e-3}};
    adam_step(p, g, s, cfg);
    for (Index i = 0; i < 3; ++i) {
        // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
        const double expected = -cfg.learning_rate * g[i] / (std::abs(g[i]) + cfg.adam_eps);
        CHECK_THAT(p[i], WithinRel(expected, 1e-12));
    }
}

TEST_CASE("adam: constant gradient gives steady steps of the learning rate") {
    Vector p = Vector::Zero(1);
    AdamState s;
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    double prev = 0.0;
    for (int i = 0; i < 2000; ++i) {
        prev = p[0];
        adam_step(p, Vector::Constant(1, 4.0), s, cfg);
    }
    CHECK(p[0] < 0.0);
    CHECK_THAT(prev - p[0], WithinRel(1e-3, 1e-6));
}

TEST_CASE("adam: non-finite gradient is rejected") {
    Vector p = Vector::Ones(2);
    AdamState s;
    CHECK_THROWS_AS(adam_step(p, Vector{{1.0, std::nan("")}}, s, TrainConfig{}), NonFiniteError);
    CHECK(p == Vector::Ones(2));
    CHECK(s.step == 0);
}

TEST_CASE("learning-rate step decay") {
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.lr_decay = 0.5;
    cfg.lr_decay_every = 100;
    CHECK(cfg.learning_rate_at(99) == 1e-3);
    CHECK(cfg.learning_rate_at(100) == 5e-4);
    CHECK(cfg.learning_rate_at(250) == 2.5e-4);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.adam_beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.target_loss = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train_dlnn on two-pixel data reaches 1e-4 within 5000 epochs") {
    const SampleBatch data = gen_two_pixel_dataset(reference_two_dof_system().K);
    TrainConfig cfg;
    cfg.batch_size = 750;
    cfg.max_epochs = 5000;
    cfg.target_loss = 1e-4;
    const TrainResult r = train_dlnn(data, {{2, 32, 32, 1}, Activation::tanh}, cfg, LossKind::diffusion);
    CHECK(r.report.final_loss <= 1e-4);
    CHECK(r.report.reached_target);
    CHECK(static_cast<int>(r.report.loss_history.size()) == r.report.epochs_run);

    // rates at the training states match the data within 10 sqrt(loss)
    const RateFn rate = learned_rate_diffusion(r.params);
    double worst = 0.0;
    for (Index i = 0; i < data.size(); i += 37)
        worst = std::max(worst, (rate(data.states.row(i).transpose()) - data.rates.row(i).transpose()).cwiseAbs().maxCoeff());
    CHECK(worst <= 10.0 * std::sqrt(r.report.final_loss));
}

TEST_CASE("training is deterministic for a fixed seed") {
    const SampleBatch data = gen_two_pixel_dataset(reference_two_dof_system().K);
    TrainConfig cfg;
    cfg.batch_size = 200;
    cfg.max_epochs = 20;
    cfg.seed = 3;
    const Architecture arch{{2, 8, 8, 1}, Activation::tanh};
    const TrainResult a = train_dlnn(data, arch, cfg, LossKind::diffusion);
    const TrainResult b = train_dlnn(data, arch, cfg, LossKind::diffusion);
    CHECK(a.report.loss_history == b.report.loss_history);
    CHECK(flatten(a.params) == flatten(b.params));
    cfg.seed = 4;
    CHECK(train_dlnn(data, arch, cfg, LossKind::diffusion).report.loss_history != a.report.loss_history);
}

TEST_CASE("all-zero data trains to zero residual") {
    SampleBatch b = constant_batch(SampleKind::diffusion, 50, 2, 2, 0.0, 0.0);
    TrainConfig cfg;
    cfg.max_epochs = 2000;
    cfg.target_loss = 1e-10;
    const TrainResult r = train_dlnn(b, {{2, 8, 1}, Activation::tanh}, cfg, LossKind::diffusion);
    CHECK(r.report.final_loss <= 1e-10);
}

TEST_CASE("baseline fits a constant rate") {
    const SampleBatch b = constant_batch(SampleKind::diffusion, 40, 3, 3, 1.0, 0.3);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.max_epochs = 4000;
    cfg.target_loss = 1e-6;
    const TrainResult r = train_baseline(b, {{3, 4, 3}, Activation::tanh}, cfg);
    CHECK(r.report.reached_target);
    CHECK(r.report.final_loss <= 1e-6);
    const Vector rate = baseline_rate(r.params)(Vector{{0.5, 1.0, 1.0}});
    CHECK((rate.array() - 0.3).abs().maxCoeff() < 5e-3);
}

TEST_CASE("loss kind must match the dataset") {
    const SampleBatch diff = gen_two_pixel_dataset(reference_two_dof_system().K);
    CHECK_THROWS_AS(train_dlnn(diff, {{2, 4, 1}, Activation::tanh}, TrainConfig{}, LossKind::mechanics), ConfigError);
    CHECK_THROWS_AS(train_dlnn(diff, {{2, 4, 1}, Activation::identity}, TrainConfig{}, LossKind::diffusion), ConfigError);
    CHECK_THROWS_AS(train_dlnn(diff, {{3, 4, 1}, Activation::tanh}, TrainConfig{}, LossKind::diffusion), ShapeError);
}

TEST_CASE("divergence aborts with the report so far") {
    const SampleBatch data = gen_two_pixel_dataset(reference_two_dof_system().K);
    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.divergence_threshold = 1e-12;
    try {
        train_dlnn(data, {{2, 4, 1}, Activation::tanh}, cfg, LossKind::diffusion);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.report().epochs_run == 1);
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    const fs::path dir = scratch("ckpt");
    NetworkParams p = init_network({{3, 7, 5, 1}, Activation::tanh}, 12);
    p.biases[0][2] = 0.1 + 0.2;
    TrainReport rep;
    rep.final_loss = 1.25e-7;
    save_checkpoint(p, rep, dir / "c.json", "diffusion", 12);
    const Checkpoint ck = load_checkpoint_full(dir / "c.json");
    CHECK(flatten(ck.params) == flatten(p));
    CHECK(ck.params.arch == p.arch);
    CHECK(ck.seed == 12);
    CHECK(ck.training["final_loss"].get<double>() == 1.25e-7);
    const Vector probe{{0.3, -0.1, 0.7}};
    CHECK(forward(ck.params, probe) == forward(p, probe));

    const std::string text = read_file(dir / "c.json");
    std::ofstream(dir / "truncated.json") << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(dir / "truncated.json"), IoError);

    auto j = nlohmann::json::parse(text);
    j["version"] = 99;
    std::ofstream(dir / "future.json") << j.dump();
    CHECK_THROWS_WITH(load_checkpoint(dir / "future.json"), Catch::Matchers::ContainsSubstring("incompatible"));

    j["version"] = 1;
    j["parameters"].erase(0);
    std::ofstream(dir / "short.json") << j.dump();
    CHECK_THROWS_AS(load_checkpoint(dir / "short.json"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.json"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("training log CSV") {
    const fs::path dir = scratch("log");
    TrainReport rep;
    rep.loss_history = {1.0, 0.5, 0.25};
    rep.epoch_seconds = {0.1, 0.2, 0.3};
    save_training_log(rep, dir / "log.csv");
    const CsvTable t = read_csv(dir / "log.csv");
    CHECK(t.header == std::vector<std::string>{"epoch", "loss", "wall_time"});
    CHECK(t.values.rows() == 3);
    CHECK(t.values(2, 1) == 0.25);
    fs::remove_all(dir);
}
