#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "dlnn/error.hpp"
#include "dlnn/linalg.hpp"
#include "dlnn/trajectory.hpp"

namespace dlnn {

enum class SampleKind { mechanics, diffusion };

inline std::string_view to_string(SampleKind k) { return k == SampleKind::mechanics ? "mechanics" : "diffusion"; }

inline SampleKind sample_kind_from_string(std::string_view s) {
    if (s == "mechanics") return SampleKind::mechanics;
    if (s == "diffusion") return SampleKind::diffusion;
    throw ConfigError("unknown sample kind '" + std::string(s) + "'");
}

/// Contiguous run of rows belonging to one generated trajectory.
struct TrajectorySlice {
    Index start = 0;
    Index count = 0;
};

/// Matched state/rate records. Diffusion: state c, rate c_dot.
/// Mechanics: state (x, x_dot), rate x_ddot.
struct SampleBatch {
    SampleKind kind = SampleKind::diffusion;
    Matrix states;   // samples x k
    Matrix rates;    // samples x m
    Vector times;    // samples
    std::vector<TrajectorySlice> trajectories;
    nlohmann::json manifest = nlohmann::json::object();

    Index size() const { return states.rows(); }
    bool empty() const { return states.rows() == 0; }

    void validate() const {
        require_shape(rates.rows() == states.rows(), "sample batch: rate and state row counts differ");
        require_shape(times.size() == states.rows(), "sample batch: time and state row counts differ");
        if (kind == SampleKind::mechanics)
            require_shape(states.cols() == 2 * rates.cols(), "mechanics batch: states must be (x, x_dot)");
        else
            require_shape(states.cols() == rates.cols(), "diffusion batch: state and rate widths differ");
        const Index bad_s = first_nonfinite_row(states);
        if (bad_s >= 0) throw NonFiniteError("sample batch: non-finite state", bad_s);
        const Index bad_r = first_nonfinite_row(rates);
        if (bad_r >= 0) throw NonFiniteError("sample batch: non-finite rate", bad_r);
    }

    /// Rows selected by index, in the given order.
    SampleBatch select(const std::vector<Index>& rows) const {
        SampleBatch out;
        out.kind = kind;
        out.states.resize(static_cast<Index>(rows.size()), states.cols());
        out.rates.resize(static_cast<Index>(rows.size()), rates.cols());
        out.times.resize(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto r = static_cast<Index>(i);
            out.states.row(r) = states.row(rows[i]);
            out.rates.row(r) = rates.row(rows[i]);
            out.times[r] = times[rows[i]];
        }
        out.trajectories.push_back({0, static_cast<Index>(rows.size())});
        return out;
    }

    /// Column-wise mean of the states (default extraction probe).
    Vector centroid() const {
        require_shape(!empty(), "centroid of an empty batch");
        return states.colwise().mean().transpose();
    }
};

/// Appends a trajectory's states/rates/times as one slice.
inline void append_trajectory(SampleBatch& batch, const Trajectory& traj) {
    require_shape(traj.rates.size() == traj.states.size(), "append_trajectory: trajectory has no rates");
    const Index start = batch.states.rows();
    const auto n = static_cast<Index>(traj.size());
    if (n == 0) return;
    const Index k = traj.dimension();
    const Index m = traj.rates.front().size();
    if (start == 0) {
        batch.states.resize(0, k);
        batch.rates.resize(0, m);
        batch.times.resize(0);
    }
    require_shape(batch.states.cols() == k && batch.rates.cols() == m, "append_trajectory: width mismatch");
    batch.states.conservativeResize(start + n, k);
    batch.rates.conservativeResize(start + n, m);
    batch.times.conservativeResize(start + n);
    for (Index i = 0; i < n; ++i) {
        batch.states.row(start + i) = traj.states[static_cast<std::size_t>(i)].transpose();
        batch.rates.row(start + i) = traj.rates[static_cast<std::size_t>(i)].transpose();
        batch.times[start + i] = traj.times[static_cast<std::size_t>(i)];
    }
    batch.trajectories.push_back({start, n});
}

// ---------------------------------------------------------------------------
// Text formatting helpers shared by every CSV writer.
// ---------------------------------------------------------------------------

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError("cannot parse number '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Numeric CSV with a header row. Returns the header names and the rows.
struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    CsvTable t;
    if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
    for (auto h : split_csv_line(line)) {
        std::string name(h);
        while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
        while (!name.empty() && name.front() == ' ') name.erase(name.begin());
        t.header.push_back(name);
    }
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw IoError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                          std::to_string(t.header.size()) + " columns, found " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (auto c : cells) row.push_back(parse_double(c));
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return t;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix& values) {
    require_shape(static_cast<Index>(header.size()) == values.cols(), "write_csv: header/column count mismatch");
    auto out = open_for_write(path);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (Index r = 0; r < values.rows(); ++r) {
        for (Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(r, c));
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw IoError("expected a matrix (array of rows)");
    const auto rows = static_cast<Index>(j.size());
    const Index cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(j[static_cast<std::size_t>(r)].size()) != cols) throw IoError("ragged matrix in JSON");
        for (Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

// ---------------------------------------------------------------------------
// Dataset files: <stem>.csv with header t,s_1..s_k,r_1..r_m and <stem>.json manifest.
// ---------------------------------------------------------------------------

inline constexpr int kDatasetFormatVersion = 1;

inline std::vector<std::string> dataset_header(Index state_width, Index rate_width) {
    std::vector<std::string> h{"t"};
    for (Index i = 1; i <= state_width; ++i) h.push_back("s_" + std::to_string(i));
    for (Index i = 1; i <= rate_width; ++i) h.push_back("r_" + std::to_string(i));
    return h;
}

inline void save_dataset(const SampleBatch& batch, const std::filesystem::path& stem) {
    batch.validate();
    Matrix table(batch.size(), 1 + batch.states.cols() + batch.rates.cols());
    table.col(0) = batch.times;
    table.middleCols(1, batch.states.cols()) = batch.states;
    table.rightCols(batch.rates.cols()) = batch.rates;
    auto csv_path = stem;
    csv_path += ".csv";
    write_csv(csv_path, dataset_header(batch.states.cols(), batch.rates.cols()), table);

    nlohmann::json m = batch.manifest;
    m["format"] = "dlnn-dataset";
    m["version"] = kDatasetFormatVersion;
    m["kind"] = std::string(to_string(batch.kind));
    m["state_width"] = batch.states.cols();
    m["rate_width"] = batch.rates.cols();
    m["samples"] = batch.size();
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& s : batch.trajectories) slices.push_back({s.start, s.count});
    m["trajectories"] = slices;
    auto json_path = stem;
    json_path += ".json";
    auto out = open_for_write(json_path);
    out << m.dump(2) << '\n';
    if (!out) throw IoError("write to '" + json_path.string() + "' failed");
}

inline SampleBatch load_dataset(const std::filesystem::path& stem) {
    auto json_path = stem;
    json_path += ".json";
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed dataset manifest '" + json_path.string() + "': " + e.what());
    }
    if (m.value("format", std::string{}) != "dlnn-dataset") throw IoError("'" + json_path.string() + "' is not a dataset manifest");
    if (m.value("version", 0) != kDatasetFormatVersion)
        throw IoError("dataset manifest version " + std::to_string(m.value("version", 0)) + " is not supported (expected " +
                      std::to_string(kDatasetFormatVersion) + ")");
    SampleBatch b;
    b.kind = sample_kind_from_string(m.at("kind").get<std::string>());
    const auto k = m.at("state_width").get<Index>();
    const auto r = m.at("rate_width").get<Index>();
    auto csv_path = stem;
    csv_path += ".csv";
    const CsvTable t = read_csv(csv_path);
    if (t.header != dataset_header(k, r)) throw IoError("'" + csv_path.string() + "' header does not match manifest");
    b.times = t.values.col(0);
    b.states = t.values.middleCols(1, k);
    b.rates = t.values.rightCols(r);
    for (const auto& s : m.at("trajectories")) b.trajectories.push_back({s.at(0).get<Index>(), s.at(1).get<Index>()});
    b.manifest = m;
    b.validate();
    return b;
}

// ---------------------------------------------------------------------------
// Trajectory CSV: header t,s_1..s_N.
// ---------------------------------------------------------------------------

inline void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
    traj.validate();
    Matrix table(static_cast<Index>(traj.size()), 1 + traj.dimension());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        table(static_cast<Index>(i), 0) = traj.times[i];
        table.row(static_cast<Index>(i)).tail(traj.dimension()) = traj.states[i].transpose();
    }
    std::vector<std::string> header{"t"};
    for (Index i = 1; i <= traj.dimension(); ++i) header.push_back("s_" + std::to_string(i));
    write_csv(path, header, table);
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    if (t.header.empty() || t.header.front() != "t") throw IoError("'" + path.string() + "' is not a trajectory file");
    Trajectory traj;
    for (Index r = 0; r < t.values.rows(); ++r)
        traj.push_back(t.values(r, 0), t.values.row(r).tail(t.values.cols() - 1).transpose());
    traj.validate();
    return traj;
}

}  // namespace dlnn
