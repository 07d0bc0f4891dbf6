// dlnn_cli: dataset generation, training, rollout, evaluation and matrix
// extraction for the five experiments.
//
// Exit codes: 0 ok, 1 other failure, 2 config, 3 io, 4 training diverged,
// 5 integrator abort, 6 non-finite numerics.

#include <malloc.h>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dlnn/dlnn.hpp"

namespace fs = std::filesystem;
using namespace dlnn;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kDiverged = 4, kIntegrator = 5, kNonFinite = 6 };

struct Options {
    std::string experiment;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    bool baseline = false;
    std::string direction;
    std::string probe;
    std::optional<double> tol;
    std::string checkpoint;
    std::string data;
    bool resample = false;
    bool plot_script = false;
    bool quiet = false;
};

ExperimentConfig resolve_config(const Options& o) {
    ExperimentConfig c;
    if (!o.config.empty())
        c = load_experiment_config(o.config, o.experiment);
    else if (!o.experiment.empty())
        c = default_config(experiment_from_string(o.experiment));
    else
        throw ConfigError("pass --experiment or --config");
    if (o.seed) set_seed(c, *o.seed);
    if (!o.direction.empty()) c.direction = direction_from_string(o.direction);
    if (o.tol) c.tol = *o.tol;
    c.validate();
    return c;
}

std::string model_name(bool baseline) { return baseline ? "baseline" : "dlnn"; }

fs::path dataset_stem(const Options& o) { return o.data.empty() ? fs::path(o.out) / "train" : fs::path(o.data); }

fs::path checkpoint_path(const Options& o, bool baseline) {
    return o.checkpoint.empty() ? fs::path(o.out) / (model_name(baseline) + ".json") : fs::path(o.checkpoint);
}

fs::path rollout_dir(const Options& o, bool baseline, Direction d) {
    return fs::path(o.out) / (model_name(baseline) + "_" + std::string(to_string(d)));
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_for_write(path);
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

SampleBatch load_or_generate(const Options& o, const ExperimentConfig& c) {
    const fs::path stem = dataset_stem(o);
    auto manifest = stem;
    manifest += ".json";
    if (fs::exists(manifest)) return load_dataset(stem);
    if (!o.data.empty()) throw IoError("dataset '" + stem.string() + "' not found");
    return make_dataset(c);
}

// ---------------------------------------------------------------------------

int cmd_datagen(const Options& o) {
    const ExperimentConfig c = resolve_config(o);
    SampleBatch b = make_dataset(c);
    b.manifest["config"] = config_to_json(c);
    const fs::path stem = dataset_stem(o);
    save_dataset(b, stem);
    write_text(fs::path(o.out) / "config.txt", config_to_text(c));
    std::cout << "wrote " << stem.string() << ".csv (" << b.trajectories.size() << " trajectories, " << b.size()
              << " samples)\n";
    return kOk;
}

int cmd_train(const Options& o) {
    const ExperimentConfig c = resolve_config(o);
    const SampleBatch data = load_or_generate(o, c);
    const std::string name = model_name(o.baseline);
    EpochCallback progress;
    if (!o.quiet)
        progress = [](int epoch, double loss) {
            if (epoch % 500 == 0) std::cerr << "epoch " << epoch << " loss " << format_double(loss) << '\n';
        };
    const fs::path log_path = fs::path(o.out) / (name + "_log.csv");
    TrainResult r;
    try {
        r = o.baseline ? train_experiment_baseline(c, data, progress) : train_experiment_dlnn(c, data, progress);
    } catch (const TrainingDiverged& e) {
        save_training_log(e.report(), log_path);
        throw;
    }
    save_training_log(r.report, log_path);
    Checkpoint ck;
    ck.params = r.params;
    ck.model = o.baseline ? "baseline" : std::string(to_string(dlnn_loss_kind(c)));
    ck.seed = c.seed;
    ck.training = report_to_json(r.report);
    ck.training["config"] = config_to_json(c);
    ck.training["dataset"] = data.manifest;
    save_checkpoint(ck, checkpoint_path(o, o.baseline));
    std::cout << name << ": final loss " << format_double(r.report.final_loss) << " after " << r.report.epochs_run
              << " epochs (" << std::fixed << std::setprecision(1) << r.report.wall_time << " s)"
              << (r.report.reached_target ? "" : ", target not reached") << '\n';
    return kOk;
}

int cmd_stub(const Options& o) {
    const ExperimentConfig c = resolve_config(o);
    Checkpoint ck;
    ck.params = experiment_stub(c);
    ck.model = std::string(to_string(dlnn_loss_kind(c)));
    ck.training = {{"stub", true}, {"config", config_to_json(c)}};
    const fs::path path = o.checkpoint.empty() ? fs::path(o.out) / "stub.json" : fs::path(o.checkpoint);
    save_checkpoint(ck, path);
    std::cout << "wrote exact quadratic network to " << path.string() << '\n';
    return kOk;
}

int cmd_evolve(const Options& o) {
    const ExperimentConfig c = resolve_config(o);
    const Checkpoint ck = load_checkpoint_full(checkpoint_path(o, o.baseline));
    const bool baseline = ck.model == "baseline";
    const RateFn rate = experiment_rate(c, ck.params, baseline);
    const fs::path dir = rollout_dir(o, baseline, c.direction);
    int status = kOk;
    for (const auto& tc : make_test_cases(c)) {
        Trajectory pred;
        try {
            pred = predict_case(rate, tc, c.tol);
        } catch (const IntegratorAbort& e) {
            std::cerr << tc.name << ": " << e.what() << " (partial trajectory written)\n";
            pred = e.partial();
            status = kIntegrator;
        }
        if (!pred.empty()) save_trajectory(pred, dir / (tc.name + ".csv"));
        if (!tc.mask.cells.empty() && !pred.empty()) save_image_sequence(pred, tc.mask.nx, tc.mask.ny, dir / tc.name);
    }
    std::cout << "wrote " << model_name(baseline) << " rollouts to " << dir.string() << '\n';
    return status;
}

void print_report(const std::string& name, const EvalReport& r) {
    std::cout << std::left << std::setw(10) << name << std::right << std::scientific << std::setprecision(3)
              << "  max_abs " << r.max_abs << "  pct_rms " << std::fixed << std::setprecision(3) << r.pct_rms << "%";
    if (!std::isnan(r.min_iou)) std::cout << "  min_iou " << r.min_iou;
    std::cout << '\n';
}

nlohmann::json report_json(const EvalReport& r) {
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& m : r.cases) {
        nlohmann::json j{{"name", m.name}, {"max_abs", m.max_abs}, {"pct_rms", m.pct_rms}};
        if (!std::isnan(m.iou)) j["iou"] = m.iou;
        cases.push_back(j);
    }
    nlohmann::json j{{"max_abs", r.max_abs}, {"pct_rms", r.pct_rms}, {"cases", cases}};
    if (!std::isnan(r.min_iou)) j["min_iou"] = r.min_iou;
    return j;
}

std::string plot_script(const ExperimentConfig& c, const std::vector<std::string>& models) {
    std::string s =
        "# Plots rollouts against the exact solution. Usage: python3 plot_eval.py\n"
        "import csv, glob, os\n"
        "import matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
        "here = os.path.dirname(os.path.abspath(__file__))\n"
        "def load(path):\n"
        "    with open(path) as f:\n"
        "        rows = [list(map(float, r)) for r in list(csv.reader(f))[1:]]\n"
        "    return [r[0] for r in rows], [r[1:] for r in rows]\n\n"
        "for truth in sorted(glob.glob(os.path.join(here, 'truth_" + std::string(to_string(c.direction)) + "', '*.csv'))):\n"
        "    name = os.path.splitext(os.path.basename(truth))[0]\n"
        "    t, x = load(truth)\n"
        "    plt.figure()\n"
        "    for k in range(len(x[0])):\n"
        "        plt.plot(t, [r[k] for r in x], 'k-', lw=1)\n";
    for (const auto& m : models)
        s += "    p = os.path.join(here, '" + m + "_" + std::string(to_string(c.direction)) + "', name + '.csv')\n"
             "    if os.path.exists(p):\n"
             "        tp, xp = load(p)\n"
             "        for k in range(len(xp[0])):\n"
             "            plt.plot(tp, [r[k] for r in xp], '--', lw=1, label='" + m + "' if k == 0 else None)\n";
    s += "    plt.xlabel('t'); plt.title(name); plt.legend()\n"
         "    plt.savefig(os.path.join(here, 'plot_' + name + '.png'), dpi=120)\n"
         "    plt.close()\n";
    return s;
}

int cmd_eval(const Options& o) {
    const ExperimentConfig c = resolve_config(o);
    const auto cases = make_test_cases(c);
    const fs::path truth_dir = fs::path(o.out) / ("truth_" + std::string(to_string(c.direction)));
    for (const auto& tc : cases) save_trajectory(tc.truth, truth_dir / (tc.name + ".csv"));

    nlohmann::json out{{"experiment", std::string(to_string(c.experiment))}, {"direction", std::string(to_string(c.direction))}};
    std::vector<std::string> found;
    for (bool baseline : {false, true}) {
        const fs::path dir = rollout_dir(o, baseline, c.direction);
        if (!fs::exists(dir)) continue;
        std::vector<Trajectory> preds;
        nlohmann::json resampled = nlohmann::json::array();
        for (const auto& tc : cases) {
            Trajectory p = load_trajectory(dir / (tc.name + ".csv"));
            if (!same_time_grid(p, tc.truth)) {
                if (!o.resample)
                    throw ConfigError("rollout '" + (dir / (tc.name + ".csv")).string() +
                                      "' is on a different time grid (pass --resample to interpolate)");
                p = resample(p, tc.truth.times);
                resampled.push_back(tc.name);
            }
            preds.push_back(std::move(p));
        }
        const EvalReport r = score(cases, preds, c.iou_threshold);
        print_report(model_name(baseline), r);
        out[model_name(baseline)] = report_json(r);
        if (!resampled.empty()) out[model_name(baseline)]["resampled"] = resampled;
        found.push_back(model_name(baseline));
    }
    if (found.empty()) throw IoError("no rollouts under '" + o.out + "' (run evolve first)");
    auto f = open_for_write(fs::path(o.out) / "eval.json");
    f << out.dump(2) << '\n';
    if (o.plot_script) write_text(fs::path(o.out) / "plot_eval.py", plot_script(c, found));
    return kOk;
}

std::vector<std::string> matrix_header(Index n) {
    std::vector<std::string> h;
    for (Index j = 1; j <= n; ++j) h.push_back("c_" + std::to_string(j));
    return h;
}

int cmd_extract(const Options& o) {
    const ExperimentConfig c = resolve_config(o);
    const Checkpoint ck = load_checkpoint_full(checkpoint_path(o, false));
    require_config(ck.model != "baseline", "extract needs a Lagrangian checkpoint, not a baseline");
    Matrix probes;
    if (!o.probe.empty()) {
        probes = read_csv(o.probe).values;
    } else {
        probes = load_or_generate(o, c).centroid().transpose();
    }
    require_shape(probes.cols() == ck.params.input_width(), "probe width " + std::to_string(probes.cols()) +
                                                                " does not match network input " +
                                                                std::to_string(ck.params.input_width()));
    require_config(probes.rows() >= 1, "no probe points");
    const fs::path dir = fs::path(o.out) / "extract";
    nlohmann::json diag{{"probes", probes.rows()}};
    std::vector<Matrix> ks;
    std::cout << std::setprecision(6);
    for (Index i = 0; i < probes.rows(); ++i) {
        const Vector probe = probes.row(i).transpose();
        const std::string tag = "_" + std::to_string(i);
        if (c.is_mechanics()) {
            const MechanicsMatrices m = extract_matrices_mechanics(ck.params, probe);
            write_csv(dir / ("K" + tag + ".csv"), matrix_header(m.K.cols()), m.K);
            write_csv(dir / ("M" + tag + ".csv"), matrix_header(m.M.cols()), m.M);
            write_csv(dir / ("C_sym" + tag + ".csv"), matrix_header(m.C_sym.cols()), m.C_sym);
            ks.push_back(m.K);
            if (i == 0) std::cout << "K =\n" << m.K << "\nC_sym =\n" << m.C_sym << "\nM (not constrained by the loss) =\n" << m.M << '\n';
        } else {
            const Matrix K = extract_K_diffusion(ck.params, probe);
            write_csv(dir / ("K" + tag + ".csv"), matrix_header(K.cols()), K);
            ks.push_back(K);
            if (i == 0 && K.rows() <= 10) std::cout << "K =\n" << K << '\n';
        }
    }
    double variation = 0.0;
    for (const auto& k : ks) variation = std::max(variation, (k - ks.front()).cwiseAbs().maxCoeff());
    diag["max_entry_variation"] = variation;
    auto f = open_for_write(dir / "diagnostic.json");
    f << diag.dump(2) << '\n';
    std::cout << "probe variation (max entrywise |K_i - K_0|): " << format_double(variation) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Dissipative Lagrangian neural networks: data, training, rollout, evaluation"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    double tol = 0.0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--experiment", o.experiment, "mechanics | two_pixel | lehmer | microstructure | reverse_shapes");
        sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "seed for data and network initialisation");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option("--tol", tol, "rollout tolerance (rtol = atol)");
        sub->add_flag("--quiet", o.quiet, "no progress output");
    };

    auto* datagen = app.add_subcommand("datagen", "generate the training dataset");
    common(datagen);
    datagen->add_option("--data", o.data, "dataset stem (default <out>/train)");

    auto* train = app.add_subcommand("train", "train the DLNN (or the baseline)");
    common(train);
    train->add_flag("--baseline", o.baseline, "train the rate-regression baseline");
    train->add_option("--data", o.data, "dataset stem (default <out>/train, generated if absent)");
    train->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/dlnn.json or baseline.json)");

    auto* stub = app.add_subcommand("stub", "write the exact quadratic network of the true system");
    common(stub);
    stub->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/stub.json)");

    auto* evolve = app.add_subcommand("evolve", "roll out a trained model on the held-out cases");
    common(evolve);
    evolve->add_flag("--baseline", o.baseline, "use <out>/baseline.json");
    evolve->add_option("--checkpoint", o.checkpoint, "checkpoint to roll out");
    evolve->add_option("--direction", o.direction, "forward | reverse");

    auto* eval = app.add_subcommand("eval", "score rollouts against the exact solution");
    common(eval);
    eval->add_option("--direction", o.direction, "forward | reverse");
    eval->add_flag("--resample", o.resample, "interpolate rollouts on a different time grid");
    eval->add_flag("--plot-script", o.plot_script, "also write <out>/plot_eval.py");

    auto* extract = app.add_subcommand("extract", "recover K (and C_sym, M) from the network Hessian");
    common(extract);
    extract->add_option("--checkpoint", o.checkpoint, "checkpoint (default <out>/dlnn.json)");
    extract->add_option("--probe", o.probe, "CSV of probe points, one per row, with a header")->check(CLI::ExistingFile);
    extract->add_option("--data", o.data, "dataset whose centroid is the default probe");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    for (auto* sub : {datagen, train, stub, evolve, eval, extract}) {
        if (sub->count("--seed")) o.seed = seed;
        if (sub->count("--tol")) o.tol = tol;
    }

    try {
        if (datagen->parsed()) return cmd_datagen(o);
        if (train->parsed()) return cmd_train(o);
        if (stub->parsed()) return cmd_stub(o);
        if (evolve->parsed()) return cmd_evolve(o);
        if (eval->parsed()) return cmd_eval(o);
        if (extract->parsed()) return cmd_extract(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kDiverged;
    } catch (const IntegratorAbort& e) {
        std::cerr << "integrator abort: " << e.what() << '\n';
        return kIntegrator;
    } catch (const NonFiniteError& e) {
        std::cerr << "non-finite value: " << e.what() << '\n';
        return kNonFinite;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
    return kOther;
}
