#pragma once

// Experiment config files: one `key = value` per line, `#` starts a comment.
// `experiment` selects the defaults; every other key overrides one field.
// Lists are comma separated. Training keys prefixed `baseline.` apply to the
// rate-regression network, unprefixed ones to the DLNN.
//
//   experiment = lehmer
//   seed = 3
//   hidden = 600
//   learning_rate = 1e-3
//   baseline.max_epochs = 8000

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "dlnn/dataset.hpp"
#include "dlnn/error.hpp"
#include "dlnn/experiments.hpp"

namespace dlnn {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(x);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    }
}

inline double parse_number(const std::string& key, const std::string& v) {
    try {
        return parse_double(v);
    } catch (const Error&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (item.empty()) throw ConfigError("config key '" + key + "': empty list entry");
        out.push_back(parse(key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline bool apply_train_key(TrainConfig& t, const std::string& key, const std::string& v) {
    if (key == "learning_rate") t.learning_rate = parse_number(key, v);
    else if (key == "adam_beta1") t.adam_beta1 = parse_number(key, v);
    else if (key == "adam_beta2") t.adam_beta2 = parse_number(key, v);
    else if (key == "adam_eps") t.adam_eps = parse_number(key, v);
    else if (key == "batch_size") t.batch_size = parse_int(key, v);
    else if (key == "max_epochs") t.max_epochs = parse_int(key, v);
    else if (key == "target_loss") t.target_loss = parse_number(key, v);
    else if (key == "lr_decay") t.lr_decay = parse_number(key, v);
    else if (key == "lr_decay_every") t.lr_decay_every = parse_int(key, v);
    else if (key == "divergence_threshold") t.divergence_threshold = parse_number(key, v);
    else return false;
    return true;
}

}  // namespace detail

/// Ordered key/value pairs of a config text. Duplicate keys: last one wins.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string s = detail::trim(line);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value', got '" + s + "'");
        std::string key = detail::trim(std::string_view(s).substr(0, eq));
        std::string value = detail::trim(std::string_view(s).substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

/// Applies one override. Unknown keys are rejected.
inline void apply_config_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    if (key == "experiment") {
        if (experiment_from_string(v) != c.experiment)
            throw ConfigError("config key 'experiment' must come first (or match the selected experiment)");
    } else if (key == "seed") set_seed(c, static_cast<std::uint64_t>(parse_int(key, v)));
    else if (key == "system") c.system = v;
    else if (key == "ic_values") c.ic_values = parse_list<double>(key, v, parse_number);
    else if (key == "test_ic_values") c.test_ic_values = parse_list<double>(key, v, parse_number);
    else if (key == "t_end") c.t_end = parse_number(key, v);
    else if (key == "test_t_end") c.test_t_end = parse_number(key, v);
    else if (key == "samples") c.samples = parse_int(key, v);
    else if (key == "data_tol") c.data_tol = parse_number(key, v);
    else if (key == "frame_difference") c.frame_difference = parse_bool(key, v);
    else if (key == "test_scale") c.test_scale = parse_number(key, v);
    else if (key == "grid") c.grid = parse_int(key, v);
    else if (key == "observe_time") c.observe_time = parse_number(key, v);
    else if (key == "hidden") c.hidden = parse_list<int>(key, v, parse_int);
    else if (key == "baseline.hidden") c.baseline_hidden = parse_list<int>(key, v, parse_int);
    else if (key == "tol") c.tol = parse_number(key, v);
    else if (key == "direction") c.direction = direction_from_string(v);
    else if (key == "iou_threshold") c.iou_threshold = parse_number(key, v);
    else if (key.rfind("baseline.", 0) == 0) {
        if (!apply_train_key(c.baseline_train, key.substr(9), v)) throw ConfigError("unknown config key '" + key + "'");
    } else if (!apply_train_key(c.train, key, v)) {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// Defaults of `experiment` (or of the file's `experiment` key when `experiment` is empty), then the file's overrides.
inline ExperimentConfig config_from_text(std::string_view text, std::string_view experiment = {}) {
    const auto pairs = parse_config_text(text);
    std::string name(experiment);
    for (const auto& [k, v] : pairs)
        if (k == "experiment") {
            if (!name.empty() && name != v)
                throw ConfigError("config names experiment '" + v + "' but '" + name + "' was requested");
            name = v;
        }
    require_config(!name.empty(), "no experiment selected (pass --experiment or set 'experiment' in the config)");
    ExperimentConfig c = default_config(experiment_from_string(name));
    for (const auto& [k, v] : pairs) apply_config_key(c, k, v);
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::string_view experiment = {}) {
    return config_from_text(read_file(path), experiment);
}

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"adam_beta1", t.adam_beta1}, {"adam_beta2", t.adam_beta2},
            {"adam_eps", t.adam_eps},           {"batch_size", t.batch_size}, {"max_epochs", t.max_epochs},
            {"target_loss", t.target_loss},     {"seed", t.seed},             {"lr_decay", t.lr_decay},
            {"lr_decay_every", t.lr_decay_every}, {"divergence_threshold", t.divergence_threshold}};
}

/// Complete record of a config, written into every manifest and checkpoint.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    return {{"experiment", std::string(to_string(c.experiment))},
            {"seed", c.seed},
            {"system", c.system},
            {"ic_values", c.ic_values},
            {"test_ic_values", c.test_ic_values},
            {"t_end", c.t_end},
            {"test_t_end", c.test_t_end},
            {"samples", c.samples},
            {"data_tol", c.data_tol},
            {"frame_difference", c.frame_difference},
            {"test_scale", c.test_scale},
            {"grid", c.grid},
            {"observe_time", c.observe_time},
            {"hidden", c.hidden},
            {"baseline_hidden", c.baseline_hidden},
            {"train", train_config_to_json(c.train)},
            {"baseline_train", train_config_to_json(c.baseline_train)},
            {"tol", c.tol},
            {"direction", std::string(to_string(c.direction))},
            {"iou_threshold", c.iou_threshold}};
}

/// Config text that reproduces `c` when loaded.
inline std::string config_to_text(const ExperimentConfig& c) {
    auto list = [](const auto& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            if constexpr (std::is_same_v<std::decay_t<decltype(v[i])>, double>) s += format_double(v[i]);
            else s += std::to_string(v[i]);
        }
        return s;
    };
    std::string out;
    auto put = [&out](const std::string& k, const std::string& v) {
        if (!v.empty()) out += k + " = " + v + "\n";
    };
    auto train = [&](const std::string& prefix, const TrainConfig& t) {
        put(prefix + "learning_rate", format_double(t.learning_rate));
        put(prefix + "adam_beta1", format_double(t.adam_beta1));
        put(prefix + "adam_beta2", format_double(t.adam_beta2));
        put(prefix + "adam_eps", format_double(t.adam_eps));
        put(prefix + "batch_size", std::to_string(t.batch_size));
        put(prefix + "max_epochs", std::to_string(t.max_epochs));
        put(prefix + "target_loss", format_double(t.target_loss));
        put(prefix + "lr_decay", format_double(t.lr_decay));
        put(prefix + "lr_decay_every", std::to_string(t.lr_decay_every));
        put(prefix + "divergence_threshold", format_double(t.divergence_threshold));
    };
    put("experiment", std::string(to_string(c.experiment)));
    put("seed", std::to_string(c.seed));
    put("system", c.system);
    put("ic_values", list(c.ic_values));
    put("test_ic_values", list(c.test_ic_values));
    put("t_end", format_double(c.t_end));
    put("test_t_end", format_double(c.test_t_end));
    put("samples", std::to_string(c.samples));
    put("data_tol", format_double(c.data_tol));
    put("frame_difference", c.frame_difference ? "true" : "false");
    put("test_scale", format_double(c.test_scale));
    put("grid", std::to_string(c.grid));
    put("observe_time", format_double(c.observe_time));
    put("hidden", list(c.hidden));
    put("baseline.hidden", list(c.baseline_hidden));
    train("", c.train);
    train("baseline.", c.baseline_train);
    put("tol", format_double(c.tol));
    put("direction", std::string(to_string(c.direction)));
    put("iou_threshold", format_double(c.iou_threshold));
    return out;
}

}  // namespace dlnn
