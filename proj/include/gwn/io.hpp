#pragma once

// Dataset ingestion (edges.txt / features.csv / labels.txt) and deterministic
// emission of CSV tables and JSON documents.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gwn/graph.hpp"
#include "gwn/matrix.hpp"

namespace gwn {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
public:
    IoError(const fs::path& path, const std::string& what) : std::runtime_error(path.string() + ": " + what) {}
};

/// 17 significant digits, C locale. Integral values print without exponent.
inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline double parse_double(std::string_view s, const fs::path& path, std::size_t line) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw IoError(path, "line " + std::to_string(line) + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    bool operator==(const CsvTable&) const = default;
};

inline void ensure_parent_dir(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.parent_path(), "cannot create directory: " + ec.message());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << text;
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string to_csv(const CsvTable& t) {
    std::string out;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c) out += ',';
        out += t.header[c];
    }
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            out += format_double(row[c]);
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const fs::path& path, const CsvTable& t) { write_text(path, to_csv(t)); }

/// Reads a CSV with a header line written by write_csv.
inline CsvTable read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError(path, "empty file, expected header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(',');
            row.push_back(parse_double(rest.substr(0, pos), path, lineno));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (row.size() != t.header.size())
            throw IoError(path, "line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                                    " columns, got " + std::to_string(row.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Pretty-printed JSON with a trailing newline; byte-stable for equal inputs.
inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path, std::string("invalid JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Three-file dataset layout

struct DatasetBundle {
    Graph graph;
    FeatureMatrix features;
    NodeLabels labels;
    std::string name;
};

inline FeatureMatrix read_features_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<double> values;
    std::size_t rows = 0, cols = 0, lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::size_t count = 0;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(',');
            const double v = parse_double(rest.substr(0, pos), path, lineno);
            if (!std::isfinite(v)) throw IoError(path, "line " + std::to_string(lineno) + ": non-finite feature");
            values.push_back(v);
            ++count;
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (rows == 0) cols = count;
        else if (count != cols)
            throw IoError(path, "line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                                    " columns, got " + std::to_string(count));
        ++rows;
    }
    FeatureMatrix m(rows, cols);
    std::copy(values.begin(), values.end(), m.values().begin());
    return m;
}

inline std::vector<std::size_t> read_labels_txt(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::size_t> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        long long v = -1;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc() || ptr != line.data() + line.size() || v < 0)
            throw IoError(path, "line " + std::to_string(lineno) + ": expected a nonnegative integer label");
        labels.push_back(static_cast<std::size_t>(v));
    }
    return labels;
}

/// Loads edges.txt, features.csv and labels.txt from `dir`. N comes from the
/// feature rows; edges and labels are cross-checked against it.
inline DatasetBundle load_dataset(const fs::path& dir, std::size_t num_classes = 0) {
    for (const char* f : {"edges.txt", "features.csv", "labels.txt"})
        if (!fs::exists(dir / f)) throw IoError(dir / f, "missing dataset file");

    DatasetBundle b;
    b.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    b.features = read_features_csv(dir / "features.csv");
    const std::size_t n = b.features.rows();

    auto raw_labels = read_labels_txt(dir / "labels.txt");
    if (raw_labels.size() != n)
        throw IoError(dir / "labels.txt", "row-count mismatch: " + std::to_string(raw_labels.size()) +
                                              " labels for " + std::to_string(n) + " feature rows");
    std::size_t c = num_classes;
    if (c == 0)
        for (auto l : raw_labels) c = std::max(c, l + 1);
    try {
        b.labels = NodeLabels(std::move(raw_labels), c);
    } catch (const std::exception& e) {
        throw IoError(dir / "labels.txt", std::string("label out of range: ") + e.what());
    }

    std::ifstream edges(dir / "edges.txt");
    if (!edges) throw IoError(dir / "edges.txt", "cannot open for reading");
    EdgeListFile el;
    try {
        el = parse_edge_list(edges);
    } catch (const std::exception& e) {
        throw IoError(dir / "edges.txt", e.what());
    }
    if (el.max_node > n)
        throw IoError(dir / "edges.txt", "row-count mismatch: node id " + std::to_string(el.max_node - 1) +
                                             " but only " + std::to_string(n) + " feature rows");
    b.graph = build_graph(el.edges, n).graph;
    return b;
}

/// Writes the three-file layout. Edges are emitted once each with i < j.
inline void save_dataset(const fs::path& dir, const Graph& g, const FeatureMatrix& x, const NodeLabels& labels) {
    if (x.rows() != g.num_nodes() || labels.size() != g.num_nodes())
        throw std::invalid_argument("save_dataset: graph, features and labels disagree on N");
    std::string edges = "# undirected edge list, 0-based node ids\n";
    for (const auto& [u, v] : g.edges()) edges += std::to_string(u) + ' ' + std::to_string(v) + '\n';
    write_text(dir / "edges.txt", edges);

    std::string feats;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) feats += ',';
            feats += format_double(r[c]);
        }
        feats += '\n';
    }
    write_text(dir / "features.csv", feats);

    std::string lab;
    for (auto l : labels.labels) lab += std::to_string(l) + '\n';
    write_text(dir / "labels.txt", lab);
}

}  // namespace gwn
