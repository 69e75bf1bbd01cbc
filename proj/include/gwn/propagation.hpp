#pragma once

// Explicit time steppers for the graph wave equation (leapfrog form) and the
// first-order heat baseline.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gwn/io.hpp"
#include "gwn/matrix.hpp"
#include "gwn/operators.hpp"

namespace gwn {

enum class SchemeKind { WaveSym, WaveFa, HeatBaseline };

/// Two consecutive time levels plus the initial level X⁽⁰⁾.
struct WaveState {
    FeatureMatrix x0;
    FeatureMatrix prev;
    FeatureMatrix curr;
    std::size_t step = 0;
    double tau = 1.0;

    double time() const noexcept { return static_cast<double>(step) * tau; }
};

/// Number of steps for terminal time T: round(T / tau), at least 1.
inline std::size_t steps_for(double terminal_time, double tau) {
    if (!(tau > 0.0) || !(terminal_time > 0.0)) throw std::invalid_argument("steps_for: T and tau must be positive");
    const double r = std::round(terminal_time / tau);
    return r < 1.0 ? 1 : static_cast<std::size_t>(r);
}

namespace detail {
inline void require_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be a positive real");
}
inline void require_state(const WaveState& s) {
    if (!s.x0.same_shape(s.prev) || !s.x0.same_shape(s.curr))
        throw std::invalid_argument("WaveState: x0/prev/curr shapes differ");
    require_tau(s.tau);
}
}  // namespace detail

/// X⁽⁰⁾ = phi0, X⁽¹⁾ = tau*phi1 + (I + tau²/2 L⁽⁰⁾) phi0 + (forcing/2) phi0.
///
/// `forcing` is the coefficient of the X⁽⁰⁾ residual term of the adaptive
/// scheme; it enters X⁽¹⁾ at half weight because X⁽⁻¹⁾ is eliminated with the
/// central velocity quotient. Zero for the fixed-operator scheme.
inline WaveState init_state(const FeatureMatrix& phi0_out, const FeatureMatrix& phi1_out, const Operator& op0,
                            double tau, double forcing = 0.0) {
    detail::require_tau(tau);
    phi0_out.require_same_shape(phi1_out, "init_state");
    FeatureMatrix lx = op0.apply(phi0_out);
    FeatureMatrix x1(phi0_out.rows(), phi0_out.cols());
    const double half_tau2 = 0.5 * tau * tau;
    const double half_f = 0.5 * forcing;
    auto x0v = phi0_out.values();
    auto vv = phi1_out.values();
    auto lv = lx.values();
    auto out = x1.values();
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = tau * vv[k] + (x0v[k] + half_tau2 * lv[k]) + half_f * x0v[k];
    return WaveState{phi0_out, phi0_out, std::move(x1), 1, tau};
}

/// next = forcing*X⁽⁰⁾ + (curr + tau² op(curr)) + (curr - prev).
/// The neighbor-aggregation term and the velocity term are formed first and
/// added in that order.
inline WaveState leapfrog_step(const WaveState& s, const Operator& op, double forcing = 0.0) {
    detail::require_state(s);
    FeatureMatrix lx = op.apply(s.curr);
    FeatureMatrix next(s.curr.rows(), s.curr.cols());
    const double tau2 = s.tau * s.tau;
    auto c = s.curr.values();
    auto p = s.prev.values();
    auto l = lx.values();
    auto x0 = s.x0.values();
    auto out = next.values();
    if (forcing == 0.0) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = (c[k] + tau2 * l[k]) + (c[k] - p[k]);
    } else {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = forcing * x0[k] + ((c[k] + tau2 * l[k]) + (c[k] - p[k]));
    }
    return WaveState{s.x0, s.curr, std::move(next), s.step + 1, s.tau};
}

/// X⁽ⁿ⁺¹⁾ = (2I + tau² L) X⁽ⁿ⁾ - X⁽ⁿ⁻¹⁾ with a fixed operator.
inline WaveState wave_step_sym(const WaveState& s, const Operator& op) { return leapfrog_step(s, op); }

/// Frequency-adaptive step: alpha is recomputed from the current level, then
/// X⁽ⁿ⁺¹⁾ = eps X⁽⁰⁾ + (2I + tau² alpha ⊙ D^{-1/2} A D^{-1/2}) X⁽ⁿ⁾ - X⁽ⁿ⁻¹⁾.
inline WaveState wave_step_fa(const WaveState& s, const Graph& g, const AttentionParams& att, double eps,
                              std::vector<double>* alpha_out = nullptr) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("wave_step_fa: eps must lie in (0,1)");
    detail::require_state(s);
    auto alpha = compute_attention(g, s.curr, att);
    const Operator op = build_freq_adaptive(g, alpha);
    if (alpha_out) *alpha_out = std::move(alpha);
    return leapfrog_step(s, op, eps);
}

enum class HeatMode {
    Diffusion,  ///< X + tau (Ā - I) X
    Literal,    ///< X + tau Ā X
};

/// One explicit heat step with a row-stochastic operator.
inline FeatureMatrix heat_step(const Operator& heat_op, const FeatureMatrix& x, double tau,
                               HeatMode mode = HeatMode::Diffusion) {
    if (heat_op.kind() != OperatorKind::HeatAttention)
        throw std::invalid_argument("heat_step: operator must be a row-stochastic heat-attention operator");
    detail::require_tau(tau);
    FeatureMatrix ax = heat_op.apply(x);
    FeatureMatrix out(x.rows(), x.cols());
    auto xv = x.values();
    auto av = ax.values();
    auto ov = out.values();
    if (mode == HeatMode::Diffusion)
        for (std::size_t k = 0; k < ov.size(); ++k) ov[k] = xv[k] + tau * (av[k] - xv[k]);
    else
        for (std::size_t k = 0; k < ov.size(); ++k) ov[k] = xv[k] + tau * av[k];
    return out;
}

inline FeatureMatrix heat_step(const Graph& g, const FeatureMatrix& x, std::vector<double> weights, double tau,
                               HeatMode mode = HeatMode::Diffusion) {
    return heat_step(build_heat_attention(g, std::move(weights)), x, tau, mode);
}

// ---------------------------------------------------------------------------
// Multi-step driver

struct WaveSymScheme {
    const Operator* op;
};

/// Per-step attention vectors and eps values, indexed by the step number n of
/// the level being advanced. A single entry is reused for every step.
struct WaveFaScheme {
    const Graph* graph;
    std::vector<AttentionParams> attention;
    std::vector<double> eps;
};

struct HeatScheme {
    const Operator* op;
    HeatMode mode = HeatMode::Diffusion;
};

using Scheme = std::variant<WaveSymScheme, WaveFaScheme, HeatScheme>;

inline SchemeKind scheme_kind(const Scheme& s) noexcept {
    switch (s.index()) {
        case 0: return SchemeKind::WaveSym;
        case 1: return SchemeKind::WaveFa;
        default: return SchemeKind::HeatBaseline;
    }
}

/// Per-step, per-node Euclidean norm of the node's feature row.
struct Trace {
    std::vector<std::size_t> steps;
    std::vector<std::vector<double>> node_norms;

    void record(const WaveState& s) {
        steps.push_back(s.step);
        std::vector<double> norms(s.curr.rows());
        for (std::size_t i = 0; i < norms.size(); ++i) {
            double acc = 0.0;
            for (double v : s.curr.row(i)) acc += v * v;
            norms[i] = std::sqrt(acc);
        }
        node_norms.push_back(std::move(norms));
    }
};

/// CSV layout `step,node,channel_norm`.
inline CsvTable trace_table(const Trace& t) {
    CsvTable table{{"step", "node", "channel_norm"}, {}};
    for (std::size_t s = 0; s < t.steps.size(); ++s)
        for (std::size_t i = 0; i < t.node_norms[s].size(); ++i)
            table.rows.push_back({static_cast<double>(t.steps[s]), static_cast<double>(i), t.node_norms[s][i]});
    return table;
}

struct PropagationResult {
    WaveState state;
    Trace trace;
};

/// Applies the scheme's step `steps` times to an initialized state.
inline PropagationResult propagate(WaveState state, const Scheme& scheme, std::size_t steps,
                                   bool record_trace = false) {
    if (steps < 1) throw std::invalid_argument("propagate: steps must be >= 1");
    PropagationResult r;
    for (std::size_t k = 0; k < steps; ++k) {
        if (const auto* sym = std::get_if<WaveSymScheme>(&scheme)) {
            state = wave_step_sym(state, *sym->op);
        } else if (const auto* fa = std::get_if<WaveFaScheme>(&scheme)) {
            const std::size_t n = state.step;
            const auto pick = [n](std::size_t size) { return size == 1 ? 0 : n; };
            if (fa->attention.empty() || fa->eps.empty() || pick(fa->attention.size()) >= fa->attention.size() ||
                pick(fa->eps.size()) >= fa->eps.size())
                throw std::invalid_argument("propagate: no fa parameters for step " + std::to_string(n));
            state = wave_step_fa(state, *fa->graph, fa->attention[pick(fa->attention.size())],
                                 fa->eps[pick(fa->eps.size())]);
        } else {
            const auto& heat = std::get<HeatScheme>(scheme);
            FeatureMatrix next = heat_step(*heat.op, state.curr, state.tau, heat.mode);
            state = WaveState{std::move(state.x0), std::move(state.curr), std::move(next), state.step + 1, state.tau};
        }
        if (record_trace) r.trace.record(state);
    }
    r.state = std::move(state);
    return r;
}

/// Discrete leapfrog energy ||(curr - prev)/tau||² - <curr, op(prev)>,
/// conserved by wave_step_sym for symmetric operators.
inline double wave_energy(const WaveState& s, const Operator& op) {
    FeatureMatrix vel = s.curr - s.prev;
    vel *= 1.0 / s.tau;
    return dot(vel, vel) - dot(s.curr, op.apply(s.prev));
}

}  // namespace gwn
