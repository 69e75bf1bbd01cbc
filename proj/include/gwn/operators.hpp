#pragma once

// Laplacian-family linear maps on node features. Every operator is stored as
// a per-arc coefficient plus a per-node diagonal, so one CSR kernel serves all
// kinds:
//
//   apply(X)_i = scale * (diag_i * x_i + sum_k coeff_k * x_col(k)) + shift * x_i
//
// The summation order inside a row is fixed (diagonal, then arcs in column
// order), so results do not depend on how rows are scheduled.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwn/graph.hpp"
#include "gwn/matrix.hpp"

namespace gwn {

enum class OperatorKind { Combinatorial, SymNorm, FreqAdaptive, HeatAttention };

inline const char* to_string(OperatorKind k) noexcept {
    switch (k) {
        case OperatorKind::Combinatorial: return "combinatorial";
        case OperatorKind::SymNorm: return "sym-norm";
        case OperatorKind::FreqAdaptive: return "freq-adaptive";
        case OperatorKind::HeatAttention: return "heat-attention";
    }
    return "?";
}

/// Attention vector g of length 2d: the first half scores the receiving node,
/// the second half the sending node.
struct AttentionParams {
    std::vector<double> g;

    std::size_t feature_dim() const noexcept { return g.size() / 2; }
    std::span<const double> receiver() const noexcept { return {g.data(), g.size() / 2}; }
    std::span<const double> sender() const noexcept { return {g.data() + g.size() / 2, g.size() / 2}; }
};

/// 1/sqrt(deg), with isolated nodes mapped to 0.
inline std::vector<double> inv_sqrt_degrees(const Graph& g) {
    std::vector<double> out(g.num_nodes());
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        out[i] = g.degree(i) ? 1.0 / std::sqrt(static_cast<double>(g.degree(i))) : 0.0;
    return out;
}

/// Linear map on FeatureMatrix. Holds a non-owning reference to its Graph,
/// which must outlive the operator.
class Operator {
public:
    Operator(OperatorKind kind, const Graph& graph, std::vector<double> coeff, std::vector<double> diag,
             std::vector<double> edge_weights, double scale = 1.0, double shift = 0.0)
        : kind_(kind),
          graph_(&graph),
          coeff_(std::move(coeff)),
          diag_(std::move(diag)),
          edge_weights_(std::move(edge_weights)),
          scale_(scale),
          shift_(shift) {
        if (coeff_.size() != graph.num_arcs() || diag_.size() != graph.num_nodes())
            throw std::invalid_argument("Operator: coefficient arrays do not match graph");
    }

    OperatorKind kind() const noexcept { return kind_; }
    const Graph& graph() const noexcept { return *graph_; }
    std::size_t size() const noexcept { return graph_->num_nodes(); }
    double scale() const noexcept { return scale_; }
    double shift() const noexcept { return shift_; }
    /// Raw per-arc weights (alpha or attention); empty for the fixed kinds.
    std::span<const double> edge_weights() const noexcept { return edge_weights_; }
    /// Effective unscaled per-arc coefficients.
    std::span<const double> arc_coefficients() const noexcept { return coeff_; }

    /// Combinatorial and SymNorm are symmetric for any scale and shift.
    bool symmetric() const noexcept {
        return kind_ == OperatorKind::Combinatorial || kind_ == OperatorKind::SymNorm;
    }

    Operator with_scale(double s) const {
        Operator o = *this;
        o.scale_ = s;
        return o;
    }
    Operator with_shift(double s) const {
        Operator o = *this;
        o.shift_ = s;
        return o;
    }

    FeatureMatrix apply(const FeatureMatrix& x) const {
        check_rows(x, "apply");
        const Graph& g = *graph_;
        const auto cols = g.col_indices();
        const std::size_t d = x.cols();
        FeatureMatrix y(x.rows(), d);
        std::vector<double> acc(d);
        for (std::size_t i = 0; i < g.num_nodes(); ++i) {
            auto xi = x.row(i);
            for (std::size_t c = 0; c < d; ++c) acc[c] = diag_[i] * xi[c];
            for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) {
                const double w = coeff_[k];
                auto xj = x.row(cols[k]);
                for (std::size_t c = 0; c < d; ++c) acc[c] += w * xj[c];
            }
            auto yi = y.row(i);
            for (std::size_t c = 0; c < d; ++c) yi[c] = scale_ * acc[c] + shift_ * xi[c];
        }
        return y;
    }

    /// opᵀ applied to x. Equals apply() for symmetric kinds.
    FeatureMatrix apply_transpose(const FeatureMatrix& x) const {
        check_rows(x, "apply_transpose");
        const Graph& g = *graph_;
        const auto cols = g.col_indices();
        const std::size_t d = x.cols();
        FeatureMatrix acc(x.rows(), d);
        for (std::size_t i = 0; i < g.num_nodes(); ++i) {
            auto xi = x.row(i);
            auto ai = acc.row(i);
            for (std::size_t c = 0; c < d; ++c) ai[c] += diag_[i] * xi[c];
            for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) {
                const double w = coeff_[k];
                auto aj = acc.row(cols[k]);
                for (std::size_t c = 0; c < d; ++c) aj[c] += w * xi[c];
            }
        }
        FeatureMatrix y(x.rows(), d);
        for (std::size_t k = 0; k < y.size(); ++k) y.values()[k] = scale_ * acc.values()[k] + shift_ * x.values()[k];
        return y;
    }

    /// Dense N x N matrix of the operator (small graphs only).
    Matrix dense() const {
        const Graph& g = *graph_;
        const auto cols = g.col_indices();
        Matrix m(size(), size());
        for (std::size_t i = 0; i < g.num_nodes(); ++i) {
            m(i, i) = scale_ * diag_[i] + shift_;
            for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) m(i, cols[k]) += scale_ * coeff_[k];
        }
        return m;
    }

private:
    void check_rows(const FeatureMatrix& x, const char* what) const {
        if (x.rows() != graph_->num_nodes())
            throw std::invalid_argument(std::string("Operator::") + what + ": feature rows " + std::to_string(x.rows()) +
                                        " != num_nodes " + std::to_string(graph_->num_nodes()));
    }

    OperatorKind kind_;
    const Graph* graph_;
    std::vector<double> coeff_;
    std::vector<double> diag_;
    std::vector<double> edge_weights_;
    double scale_;
    double shift_;
};

/// L = D - A, optionally scaled by the squared velocity.
inline Operator build_combinatorial(const Graph& g, double scale = 1.0) {
    std::vector<double> coeff(g.num_arcs(), -1.0);
    std::vector<double> diag(g.num_nodes());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) diag[i] = static_cast<double>(g.degree(i));
    return Operator(OperatorKind::Combinatorial, g, std::move(coeff), std::move(diag), {}, scale);
}

/// D^{-1/2} A D^{-1/2} (normalized adjacency, no self-loops). Isolated rows are zero.
inline Operator build_sym_norm(const Graph& g, double scale = 1.0) {
    const auto isd = inv_sqrt_degrees(g);
    const auto cols = g.col_indices();
    std::vector<double> coeff(g.num_arcs());
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) coeff[k] = isd[i] * isd[cols[k]];
    return Operator(OperatorKind::SymNorm, g, std::move(coeff), std::vector<double>(g.num_nodes(), 0.0), {}, scale);
}

/// L_sym = I - D^{-1/2} A D^{-1/2}.
inline Operator build_laplacian_sym(const Graph& g) { return build_sym_norm(g, -1.0).with_shift(1.0); }

/// alpha ⊙ D^{-1/2} A D^{-1/2}: one weight per stored arc, used as given.
inline Operator build_freq_adaptive(const Graph& g, std::vector<double> weights) {
    if (weights.size() != g.num_arcs())
        throw std::invalid_argument("build_freq_adaptive: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(g.num_arcs()) + " arcs");
    const auto isd = inv_sqrt_degrees(g);
    const auto cols = g.col_indices();
    std::vector<double> coeff(g.num_arcs());
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) coeff[k] = weights[k] * isd[i] * isd[cols[k]];
    return Operator(OperatorKind::FreqAdaptive, g, std::move(coeff), std::vector<double>(g.num_nodes(), 0.0),
                    std::move(weights));
}

/// Row-stochastic attention matrix Ā. Rows without arcs become identity rows.
inline Operator build_heat_attention(const Graph& g, std::vector<double> weights, double tol = 1e-10) {
    if (weights.size() != g.num_arcs())
        throw std::invalid_argument("build_heat_attention: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(g.num_arcs()) + " arcs");
    std::vector<double> diag(g.num_nodes(), 0.0);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        if (g.degree(i) == 0) {
            diag[i] = 1.0;
            continue;
        }
        double sum = 0.0;
        for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) {
            if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
                throw std::invalid_argument("build_heat_attention: negative or non-finite weight in row " +
                                            std::to_string(i));
            sum += weights[k];
        }
        if (std::abs(sum - 1.0) > tol)
            throw std::invalid_argument("build_heat_attention: row " + std::to_string(i) + " sums to " +
                                        std::to_string(sum) + ", not 1");
    }
    auto coeff = weights;
    return Operator(OperatorKind::HeatAttention, g, std::move(coeff), std::move(diag), std::move(weights));
}

/// Uniform neighbor average: weight 1/deg(i) on every arc of row i.
inline std::vector<double> uniform_heat_weights(const Graph& g) {
    std::vector<double> w(g.num_arcs());
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) w[k] = 1.0 / static_cast<double>(g.degree(i));
    return w;
}

/// Row i = sum over neighbors j of (x_i - x_j).
inline FeatureMatrix divergence_form(const Graph& g, const FeatureMatrix& x) {
    if (x.rows() != g.num_nodes())
        throw std::invalid_argument("divergence_form: feature rows " + std::to_string(x.rows()) +
                                    " != num_nodes " + std::to_string(g.num_nodes()));
    FeatureMatrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        auto xi = x.row(i);
        auto yi = y.row(i);
        for (NodeIndex j : g.neighbors(i)) {
            auto xj = x.row(j);
            for (std::size_t c = 0; c < x.cols(); ++c) yi[c] += xi[c] - xj[c];
        }
    }
    return y;
}

/// alpha_ij = tanh(gᵀ [x_i || x_j]) for every stored arc (i -> j), in arc order.
/// Not symmetrized: alpha_ij and alpha_ji generally differ.
inline std::vector<double> compute_attention(const Graph& g, const FeatureMatrix& x, const AttentionParams& p) {
    if (x.rows() != g.num_nodes()) throw std::invalid_argument("compute_attention: feature rows != num_nodes");
    if (p.g.size() != 2 * x.cols())
        throw std::invalid_argument("compute_attention: g has length " + std::to_string(p.g.size()) + ", expected " +
                                    std::to_string(2 * x.cols()));
    const auto gr = p.receiver();
    const auto gs = p.sender();
    std::vector<double> recv(g.num_nodes()), send(g.num_nodes());
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        auto xi = x.row(i);
        double a = 0.0, b = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            a += gr[c] * xi[c];
            b += gs[c] * xi[c];
        }
        recv[i] = a;
        send[i] = b;
    }
    const auto cols = g.col_indices();
    std::vector<double> alpha(g.num_arcs());
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
        for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) alpha[k] = std::tanh(recv[i] + send[cols[k]]);
    return alpha;
}

}  // namespace gwn
