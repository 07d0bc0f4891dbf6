#pragma once

// Checkpoint file: one JSON document.
//
//   {
//     "format": "dlnn-checkpoint", "version": 1,
//     "architecture": {"layer_sizes": [...], "activation": "tanh"},
//     "model": "diffusion" | "mechanics" | "baseline",
//     "seed": <int>,
//     "training": {...},                 // free-form metadata
//     "parameters": [...]                // flatten() order
//   }
//
// Doubles are written in shortest round-trip form, so load(save(p)) == p bit for bit.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dlnn/dataset.hpp"
#include "dlnn/error.hpp"
#include "dlnn/network.hpp"
#include "dlnn/train.hpp"

namespace dlnn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    NetworkParams params;
    std::string model = "diffusion";
    std::uint64_t seed = 0;
    nlohmann::json training = nlohmann::json::object();
};

inline nlohmann::json report_to_json(const TrainReport& r) {
    return {{"final_loss", r.final_loss},
            {"epochs_run", r.epochs_run},
            {"wall_time", r.wall_time},
            {"reached_target", r.reached_target}};
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    ck.params.validate();
    const Vector flat = flatten(ck.params);
    nlohmann::json j;
    j["format"] = "dlnn-checkpoint";
    j["version"] = kCheckpointVersion;
    j["architecture"] = {{"layer_sizes", ck.params.arch.layer_sizes},
                         {"activation", std::string(to_string(ck.params.arch.activation))}};
    j["model"] = ck.model;
    j["seed"] = ck.seed;
    j["training"] = ck.training;
    j["parameters"] = std::vector<double>(flat.data(), flat.data() + flat.size());
    auto out = open_for_write(path);
    out << j.dump() << '\n';
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void save_checkpoint(const NetworkParams& params, const TrainReport& report, const std::filesystem::path& path,
                            const std::string& model = "diffusion", std::uint64_t seed = 0) {
    save_checkpoint(Checkpoint{params, model, seed, report_to_json(report)}, path);
}

inline Checkpoint load_checkpoint_full(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint '" + path.string() + "': " + e.what());
    }
    try {
        if (!j.is_object() || j.value("format", std::string{}) != "dlnn-checkpoint")
            throw IoError("'" + path.string() + "' is not a checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw IoError("checkpoint '" + path.string() + "' has version " + std::to_string(version) +
                          ", incompatible with supported version " + std::to_string(kCheckpointVersion));
        Checkpoint ck;
        Architecture arch;
        arch.layer_sizes = j.at("architecture").at("layer_sizes").get<std::vector<int>>();
        arch.activation = activation_from_string(j.at("architecture").at("activation").get<std::string>());
        arch.validate();
        const auto flat = j.at("parameters").get<std::vector<double>>();
        ck.params = unflatten(arch, Eigen::Map<const Vector>(flat.data(), static_cast<Index>(flat.size())));
        ck.model = j.value("model", std::string("diffusion"));
        ck.seed = j.value("seed", std::uint64_t{0});
        ck.training = j.value("training", nlohmann::json::object());
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint '" + path.string() + "': " + e.what());
    } catch (const ShapeError& e) {
        throw IoError("malformed checkpoint '" + path.string() + "': " + e.what());
    } catch (const ConfigError& e) {
        throw IoError("malformed checkpoint '" + path.string() + "': " + e.what());
    }
}

inline NetworkParams load_checkpoint(const std::filesystem::path& path) { return load_checkpoint_full(path).params; }

}  // namespace dlnn
