#pragma once

// Immutable undirected graph in compressed-row form, plus the synthetic
// block-model generator and split utilities used by the experiments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gwn/matrix.hpp"
#include "gwn/random.hpp"

namespace gwn {

using NodeIndex = std::uint32_t;
using Edge = std::pair<NodeIndex, NodeIndex>;

/// Simple undirected graph. Both arc directions are stored, rows are sorted,
/// there are no self-loops and no duplicate arcs. Immutable after construction.
class Graph {
public:
    Graph() = default;

    /// Validating constructor from raw CSR arrays.
    Graph(std::size_t num_nodes, std::vector<std::size_t> row_offsets, std::vector<NodeIndex> col_indices)
        : num_nodes_(num_nodes), row_offsets_(std::move(row_offsets)), col_indices_(std::move(col_indices)) {
        validate();
        degrees_.resize(num_nodes_);
        for (std::size_t i = 0; i < num_nodes_; ++i) degrees_[i] = row_offsets_[i + 1] - row_offsets_[i];
    }

    std::size_t num_nodes() const noexcept { return num_nodes_; }
    /// Number of stored directed arcs (2·|E|).
    std::size_t num_arcs() const noexcept { return col_indices_.size(); }
    std::size_t num_edges() const noexcept { return col_indices_.size() / 2; }

    std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
    std::span<const NodeIndex> col_indices() const noexcept { return col_indices_; }
    std::span<const std::size_t> degrees() const noexcept { return degrees_; }
    std::size_t degree(std::size_t i) const noexcept { return degrees_[i]; }

    std::span<const NodeIndex> neighbors(std::size_t i) const noexcept {
        return {col_indices_.data() + row_offsets_[i], degrees_[i]};
    }

    /// Arc index range [begin, end) of row i.
    std::size_t arc_begin(std::size_t i) const noexcept { return row_offsets_[i]; }
    std::size_t arc_end(std::size_t i) const noexcept { return row_offsets_[i + 1]; }

    bool has_arc(std::size_t i, std::size_t j) const {
        auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), static_cast<NodeIndex>(j));
    }

    /// Undirected edge list with i < j, in row order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(num_edges());
        for (std::size_t i = 0; i < num_nodes_; ++i)
            for (NodeIndex j : neighbors(i))
                if (i < j) out.emplace_back(static_cast<NodeIndex>(i), j);
        return out;
    }

    bool operator==(const Graph& o) const {
        return num_nodes_ == o.num_nodes_ && row_offsets_ == o.row_offsets_ && col_indices_ == o.col_indices_;
    }

private:
    void validate() const {
        if (row_offsets_.size() != num_nodes_ + 1) throw std::invalid_argument("Graph: row_offsets length must be N+1");
        if (row_offsets_.front() != 0 || row_offsets_.back() != col_indices_.size())
            throw std::invalid_argument("Graph: row_offsets do not span col_indices");
        for (std::size_t i = 0; i < num_nodes_; ++i) {
            if (row_offsets_[i + 1] < row_offsets_[i]) throw std::invalid_argument("Graph: row_offsets not monotone");
            for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
                const NodeIndex j = col_indices_[k];
                if (j >= num_nodes_) throw std::invalid_argument("Graph: column index out of range");
                if (j == i) throw std::invalid_argument("Graph: self-loop at node " + std::to_string(i));
                if (k > row_offsets_[i] && col_indices_[k - 1] >= j)
                    throw std::invalid_argument("Graph: row " + std::to_string(i) + " not strictly increasing");
            }
        }
        // Symmetry: every arc (i,j) has its reverse.
        for (std::size_t i = 0; i < num_nodes_; ++i)
            for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
                const NodeIndex j = col_indices_[k];
                auto b = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[j]);
                auto e = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[j + 1]);
                if (!std::binary_search(b, e, static_cast<NodeIndex>(i)))
                    throw std::invalid_argument("Graph: adjacency not symmetric at (" + std::to_string(i) + "," +
                                                std::to_string(j) + ")");
            }
    }

    std::size_t num_nodes_ = 0;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<NodeIndex> col_indices_;
    std::vector<std::size_t> degrees_;
};

struct GraphBuild {
    Graph graph;
    std::size_t self_loops_dropped = 0;
    std::size_t duplicates_merged = 0;
};

/// Builds a symmetric, deduplicated, self-loop-free graph from an edge list.
/// Either orientation of an edge may appear; duplicates collapse silently and
/// self-loops are dropped and counted.
inline GraphBuild build_graph(std::span<const Edge> edge_list, std::size_t num_nodes) {
    GraphBuild out;
    std::vector<Edge> arcs;
    arcs.reserve(edge_list.size() * 2);
    for (const auto& [u, v] : edge_list) {
        if (u >= num_nodes || v >= num_nodes)
            throw std::out_of_range("build_graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                                    ") has endpoint >= num_nodes " + std::to_string(num_nodes));
        if (u == v) {
            ++out.self_loops_dropped;
            continue;
        }
        arcs.emplace_back(u, v);
        arcs.emplace_back(v, u);
    }
    std::sort(arcs.begin(), arcs.end());
    const auto before = arcs.size();
    arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());
    out.duplicates_merged = (before - arcs.size()) / 2;

    std::vector<std::size_t> offsets(num_nodes + 1, 0);
    std::vector<NodeIndex> cols;
    cols.reserve(arcs.size());
    for (const auto& [u, v] : arcs) {
        ++offsets[u + 1];
        cols.push_back(v);
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    out.graph = Graph(num_nodes, std::move(offsets), std::move(cols));
    return out;
}

inline GraphBuild build_graph(std::initializer_list<Edge> edge_list, std::size_t num_nodes) {
    return build_graph(std::span<const Edge>(edge_list.begin(), edge_list.size()), num_nodes);
}

/// Per-node component id (0-based, in order of first appearance) and the count.
inline std::pair<std::vector<std::size_t>, std::size_t> connected_components(const Graph& g) {
    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> comp(g.num_nodes(), unset);
    std::vector<std::size_t> stack;
    std::size_t count = 0;
    for (std::size_t s = 0; s < g.num_nodes(); ++s) {
        if (comp[s] != unset) continue;
        comp[s] = count;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (NodeIndex v : g.neighbors(u))
                if (comp[v] == unset) {
                    comp[v] = count;
                    stack.push_back(v);
                }
        }
        ++count;
    }
    return {std::move(comp), count};
}

// ---------------------------------------------------------------------------
// Labels and splits

struct NodeLabels {
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    NodeLabels() = default;
    NodeLabels(std::vector<std::size_t> l, std::size_t c) : labels(std::move(l)), num_classes(c) { validate(); }

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t operator[](std::size_t i) const noexcept { return labels[i]; }

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("NodeLabels: need at least 2 classes");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= num_classes)
                throw std::out_of_range("NodeLabels: label " + std::to_string(labels[i]) + " at node " +
                                        std::to_string(i) + " not in [0, " + std::to_string(num_classes) + ")");
    }
};

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;

    void validate(std::size_t n) const {
        if (train.empty() || validation.empty() || test.empty())
            throw std::invalid_argument("DataSplit: every part must be nonempty");
        std::vector<char> seen(n, 0);
        for (const auto* part : {&train, &validation, &test})
            for (auto i : *part) {
                if (i >= n) throw std::out_of_range("DataSplit: index out of range");
                if (seen[i]++) throw std::invalid_argument("DataSplit: parts overlap at node " + std::to_string(i));
            }
    }
};

/// Uniformly random permutation cut into (train, validation, rest) by the
/// given fractions. Sizes are round(fraction * n).
inline DataSplit random_split(std::size_t n, double train_frac, double val_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0))
        throw std::invalid_argument("random_split: fractions must be positive with sum < 1");
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw std::invalid_argument("random_split: fractions leave an empty part for n=" + std::to_string(n));

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    DataSplit s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                        perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return s;
}

// ---------------------------------------------------------------------------
// Stochastic block model

struct SbmConfig {
    std::size_t nodes_per_block = 100;
    std::size_t num_blocks = 2;
    double p_intra = 0.1;
    double p_inter = 0.01;
    std::size_t feature_dim = 8;
    double feature_noise = 0.5;
    std::uint64_t seed = 0;

    bool homophilic() const noexcept { return p_intra > p_inter; }

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(p_intra) || !prob(p_inter)) throw std::invalid_argument("SbmConfig: probabilities must lie in [0,1]");
        if (num_blocks < 1 || nodes_per_block < 1) throw std::invalid_argument("SbmConfig: empty block model");
        if (feature_dim < num_blocks) throw std::invalid_argument("SbmConfig: feature_dim < num_blocks");
        if (!(feature_noise >= 0.0) || !std::isfinite(feature_noise))
            throw std::invalid_argument("SbmConfig: feature_noise must be a nonnegative real");
    }
};

struct SbmSample {
    Graph graph;
    FeatureMatrix features;
    NodeLabels labels;
};

/// Block-structured random graph. Nodes are numbered block-major; features are
/// one-hot(block) plus N(0, noise²) per entry; labels are the block ids.
inline SbmSample generate_sbm(const SbmConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.nodes_per_block * cfg.num_blocks;
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool same = i / cfg.nodes_per_block == j / cfg.nodes_per_block;
            const double p = same ? cfg.p_intra : cfg.p_inter;
            if (unif(rng) < p) edges.emplace_back(static_cast<NodeIndex>(i), static_cast<NodeIndex>(j));
        }

    SbmSample out;
    out.graph = build_graph(edges, n).graph;

    std::normal_distribution<double> noise(0.0, 1.0);
    out.features = FeatureMatrix(n, cfg.feature_dim);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i / cfg.nodes_per_block;
        for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
            const double base = (c == labels[i]) ? 1.0 : 0.0;
            out.features(i, c) = base + cfg.feature_noise * noise(rng);
        }
    }
    out.labels = NodeLabels(std::move(labels), std::max<std::size_t>(cfg.num_blocks, 2));
    return out;
}

// ---------------------------------------------------------------------------
// Edge-list text format: two 0-based ids per line, '#' starts a comment line.

struct EdgeListFile {
    std::vector<Edge> edges;
    std::size_t max_node = 0;  ///< largest id seen + 1 (0 when empty)
};

inline EdgeListFile parse_edge_list(std::istream& in) {
    EdgeListFile out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        long long u = -1, v = -1;
        std::string rest;
        if (!(ls >> u >> v) || u < 0 || v < 0 || (ls >> rest))
            throw std::runtime_error("edge list line " + std::to_string(lineno) + ": expected two node ids, got '" +
                                     line + "'");
        if (u > static_cast<long long>(UINT32_MAX - 1) || v > static_cast<long long>(UINT32_MAX - 1))
            throw std::out_of_range("edge list line " + std::to_string(lineno) + ": node id too large");
        out.edges.emplace_back(static_cast<NodeIndex>(u), static_cast<NodeIndex>(v));
        out.max_node = std::max<std::size_t>(out.max_node, static_cast<std::size_t>(std::max(u, v)) + 1);
    }
    return out;
}

}  // namespace gwn
