#pragma once

// Random instance generators and dense reference computations for tests.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "gwn/graph.hpp"
#include "gwn/matrix.hpp"
#include "gwn/random.hpp"

namespace gwn::fixtures {

/// G(n, p) with n drawn from [min_n, max_n].
inline Graph random_graph(Rng& rng, std::size_t min_n, std::size_t max_n, double p = -1.0) {
    std::uniform_int_distribution<std::size_t> nd(min_n, max_n);
    const std::size_t n = nd(rng);
    const double prob = p >= 0.0 ? p : std::uniform_real_distribution<double>(0.1, 0.7)(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (u(rng) < prob) edges.emplace_back(i, j);
    return build_graph(edges, n).graph;
}

/// Random graph forced to be connected by adding a random spanning path.
inline Graph random_connected_graph(Rng& rng, std::size_t min_n, std::size_t max_n) {
    const Graph base = random_graph(rng, min_n, max_n);
    const std::size_t n = base.num_nodes();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto edges = base.edges();
    for (std::size_t k = 1; k < n; ++k) edges.emplace_back(perm[k - 1], perm[k]);
    return build_graph(edges, n).graph;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    std::normal_distribution<double> nd(0.0, scale);
    for (double& v : m.values()) v = nd(rng);
    return m;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& x : v) x = u(rng);
    return v;
}

/// Dense adjacency matrix built from the arc list.
inline Matrix dense_adjacency(const Graph& g) {
    Matrix a(g.num_nodes(), g.num_nodes());
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        for (auto j : g.neighbors(i)) a(i, j) = 1.0;
    return a;
}

inline double rel_error(const Matrix& a, const Matrix& b) {
    const double denom = std::max(frobenius_norm(b), 1e-300);
    return frobenius_norm(a - b) / denom;
}

}  // namespace gwn::fixtures
