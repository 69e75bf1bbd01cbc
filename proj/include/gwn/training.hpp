#pragma once

// Node-classification model around the wave backbone:
//
//   X⁽⁰⁾ = phi0(X), V = phi1(X)          affine encoders f -> d
//   X⁽¹⁾ ... X⁽ᴷ⁾                          explicit scheme, K = round(T / tau)
//   logits = X⁽ᴷ⁾ W_dec + b_dec           affine decoder d -> c
//
// Gradients are computed by hand, in reverse through the unrolled recurrence.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gwn/graph.hpp"
#include "gwn/io.hpp"
#include "gwn/matrix.hpp"
#include "gwn/operators.hpp"
#include "gwn/propagation.hpp"
#include "gwn/random.hpp"

namespace gwn {

enum class ModelKind { Sym, Fa, Heat };

inline const char* to_string(ModelKind k) noexcept {
    switch (k) {
        case ModelKind::Sym: return "sym";
        case ModelKind::Fa: return "fa";
        case ModelKind::Heat: return "heat";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "sym") return ModelKind::Sym;
    if (s == "fa") return ModelKind::Fa;
    if (s == "heat") return ModelKind::Heat;
    throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected sym, fa or heat)");
}

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    ModelKind model = ModelKind::Sym;
    double tau = 1.0;
    double terminal_time = 4.0;
    double learning_rate = 0.05;
    double weight_decay = 5e-4;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;  ///< early-stop window
    std::size_t hidden = 16;
    double dropout = 0.0;
    HeatMode heat_mode = HeatMode::Diffusion;
    std::uint64_t seed = 0;

    std::size_t steps() const { return steps_for(terminal_time, tau); }

    void validate() const {
        if (!(tau > 0.0) || !(terminal_time > 0.0)) throw std::invalid_argument("TrainConfig: tau and T must be positive");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
        if (hidden == 0) throw std::invalid_argument("TrainConfig: hidden dimension must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("TrainConfig: dropout must lie in [0,1)");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"model", to_string(c.model)},
            {"tau", c.tau},
            {"T", c.terminal_time},
            {"steps", c.steps()},
            {"lr", c.learning_rate},
            {"weight_decay", c.weight_decay},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"hidden", c.hidden},
            {"dropout", c.dropout},
            {"heat_mode", c.heat_mode == HeatMode::Diffusion ? "diffusion" : "literal"},
            {"seed", c.seed}};
}

/// Affine map in -> out: y = x W + b with W stored in x out.
struct Affine {
    Matrix w;
    std::vector<double> b;

    std::size_t in() const noexcept { return w.rows(); }
    std::size_t out() const noexcept { return w.cols(); }

    Matrix forward(const Matrix& x) const {
        Matrix y = matmul(x, w);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            auto yi = y.row(i);
            for (std::size_t j = 0; j < yi.size(); ++j) yi[j] += b[j];
        }
        return y;
    }
};

struct ModelParams {
    ModelKind kind = ModelKind::Sym;
    Affine enc0;
    Affine enc1;  ///< empty for the heat backbone
    Affine dec;
    std::vector<AttentionParams> attention;  ///< fa only, one per step
    std::vector<double> eps_raw;             ///< fa only; eps = sigmoid(eps_raw)
    double dropout_rate = 0.0;
    std::uint64_t seed = 0;

    std::size_t steps() const noexcept { return attention.size(); }

    /// Visits every parameter group as (name, values, is_weight). Biases and
    /// eps_raw are not weights and carry no L2 penalty.
    template <class Self, class F>
    static void visit(Self& p, F&& f) {
        f(std::string_view("enc0.w"), p.enc0.w.values(), true);
        f(std::string_view("enc0.b"), std::span(p.enc0.b), false);
        if (p.kind != ModelKind::Heat) {
            f(std::string_view("enc1.w"), p.enc1.w.values(), true);
            f(std::string_view("enc1.b"), std::span(p.enc1.b), false);
        }
        f(std::string_view("dec.w"), p.dec.w.values(), true);
        f(std::string_view("dec.b"), std::span(p.dec.b), false);
        if (p.kind == ModelKind::Fa) {
            for (auto& a : p.attention) f(std::string_view("fa.g"), std::span(a.g), true);
            f(std::string_view("fa.eps_raw"), std::span(p.eps_raw), false);
        }
    }
    template <class F>
    void for_each_group(F&& f) {
        visit(*this, std::forward<F>(f));
    }
    template <class F>
    void for_each_group(F&& f) const {
        visit(*this, std::forward<F>(f));
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for_each_group([&](std::string_view, auto v, bool) { n += v.size(); });
        return n;
    }
    std::size_t bias_size() const {
        std::size_t n = 0;
        for_each_group([&](std::string_view name, auto v, bool) {
            if (name.ends_with(".b")) n += v.size();
        });
        return n;
    }

    /// Same shapes, all zeros.
    ModelParams zeros_like() const {
        ModelParams z = *this;
        z.for_each_group([](std::string_view, std::span<double> v, bool) { std::fill(v.begin(), v.end(), 0.0); });
        return z;
    }
};

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

/// Parameter count of the learned maps, biases excluded:
/// sym 2fd + dc, fa 2fd + (2d+1)K + dc, heat fd + dc.
inline std::size_t count_parameters(ModelKind kind, std::size_t f, std::size_t d, std::size_t c, std::size_t steps) {
    if (f == 0 || d == 0 || c == 0) throw std::invalid_argument("count_parameters: f, d and c must be positive");
    switch (kind) {
        case ModelKind::Sym: return 2 * f * d + d * c;
        case ModelKind::Fa:
            if (steps == 0) throw std::invalid_argument("count_parameters: steps must be positive");
            return 2 * f * d + (2 * d + 1) * steps + d * c;
        case ModelKind::Heat: return f * d + d * c;
    }
    return 0;
}

inline std::size_t count_parameters(const TrainConfig& cfg, std::size_t f, std::size_t c) {
    cfg.validate();
    return count_parameters(cfg.model, f, cfg.hidden, c, cfg.steps());
}

namespace detail {
inline Affine glorot_affine(std::size_t in, std::size_t out, Rng& rng) {
    Affine a{Matrix(in, out), std::vector<double>(out, 0.0)};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : a.w.values()) v = u(rng);
    return a;
}
}  // namespace detail

inline ModelParams init_params(const TrainConfig& cfg, std::size_t f, std::size_t c) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0x1417));
    ModelParams p;
    p.kind = cfg.model;
    p.dropout_rate = cfg.dropout;
    p.seed = cfg.seed;
    const std::size_t d = cfg.hidden;
    p.enc0 = detail::glorot_affine(f, d, rng);
    if (cfg.model != ModelKind::Heat) p.enc1 = detail::glorot_affine(f, d, rng);
    p.dec = detail::glorot_affine(d, c, rng);
    if (cfg.model == ModelKind::Fa) {
        const std::size_t k = cfg.steps();
        const double limit = std::sqrt(6.0 / static_cast<double>(2 * d + 1));
        std::uniform_real_distribution<double> u(-limit, limit);
        p.attention.resize(k);
        for (auto& a : p.attention) {
            a.g.resize(2 * d);
            for (double& v : a.g) v = u(rng);
        }
        p.eps_raw.assign(k, 0.0);  // eps = 0.5
    }
    return p;
}

// ---------------------------------------------------------------------------
// Forward

struct ForwardCache {
    Matrix input;                            ///< features after dropout
    Matrix velocity;                         ///< phi1 output (empty for heat)
    std::vector<Matrix> levels;              ///< X⁽⁰⁾ ... X⁽ᴷ⁾
    std::vector<std::vector<double>> alpha;  ///< fa: alpha⁽⁰⁾ ... alpha⁽ᴷ⁻¹⁾
    std::vector<double> eps;                 ///< fa: eps⁽⁰⁾ ... eps⁽ᴷ⁻¹⁾
    Matrix logits;
};

/// Inverted-dropout mask over the input features (empty when rate is 0).
inline Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed) {
    if (rate <= 0.0) return {};
    Matrix m(rows, cols);
    Rng rng(seed);
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (double& v : m.values()) v = keep(rng) ? scale : 0.0;
    return m;
}

namespace detail {
inline void require_finite(const Matrix& m, const char* what, std::size_t step) {
    if (!all_finite(m))
        throw NumericalError(std::string("non-finite ") + what + " at propagation step " + std::to_string(step));
}
}  // namespace detail

/// Full-graph forward pass. `mask`, when non-empty, multiplies the input
/// features elementwise before both encoders.
inline ForwardCache forward(const ModelParams& p, const Graph& g, const FeatureMatrix& x, const TrainConfig& cfg,
                            const Matrix& mask = {}) {
    const std::size_t steps = cfg.steps();
    if (steps < 1) throw std::invalid_argument("forward: steps must be >= 1");
    if (x.rows() != g.num_nodes()) throw std::invalid_argument("forward: feature rows != num_nodes");
    if (x.cols() != p.enc0.in()) throw std::invalid_argument("forward: feature dimension does not match encoder");
    if (p.kind == ModelKind::Fa && p.attention.size() != steps)
        throw std::invalid_argument("forward: fa parameters cover " + std::to_string(p.attention.size()) +
                                    " steps, config needs " + std::to_string(steps));

    ForwardCache c;
    c.input = x;
    if (!mask.empty()) {
        mask.require_same_shape(x, "forward(mask)");
        auto iv = c.input.values();
        auto mv = mask.values();
        for (std::size_t k = 0; k < iv.size(); ++k) iv[k] *= mv[k];
    }
    const double tau = cfg.tau;
    c.levels.reserve(steps + 1);
    c.levels.push_back(p.enc0.forward(c.input));

    switch (p.kind) {
        case ModelKind::Sym: {
            const Operator s = build_sym_norm(g);
            c.velocity = p.enc1.forward(c.input);
            WaveState st = init_state(c.levels[0], c.velocity, s, tau);
            c.levels.push_back(st.curr);
            for (std::size_t n = 1; n < steps; ++n) {
                st = wave_step_sym(st, s);
                detail::require_finite(st.curr, "activation", n + 1);
                c.levels.push_back(st.curr);
            }
            break;
        }
        case ModelKind::Fa: {
            c.velocity = p.enc1.forward(c.input);
            c.eps.resize(steps);
            for (std::size_t n = 0; n < steps; ++n) c.eps[n] = sigmoid(p.eps_raw[n]);
            c.alpha.push_back(compute_attention(g, c.levels[0], p.attention[0]));
            const Operator m0 = build_freq_adaptive(g, c.alpha[0]);
            WaveState st = init_state(c.levels[0], c.velocity, m0, tau, c.eps[0]);
            c.levels.push_back(st.curr);
            for (std::size_t n = 1; n < steps; ++n) {
                std::vector<double> alpha;
                st = wave_step_fa(st, g, p.attention[n], c.eps[n], &alpha);
                detail::require_finite(st.curr, "activation", n + 1);
                c.alpha.push_back(std::move(alpha));
                c.levels.push_back(st.curr);
            }
            break;
        }
        case ModelKind::Heat: {
            const Operator a = build_heat_attention(g, uniform_heat_weights(g));
            for (std::size_t n = 0; n < steps; ++n) {
                c.levels.push_back(heat_step(a, c.levels.back(), tau, cfg.heat_mode));
                detail::require_finite(c.levels.back(), "activation", n + 1);
            }
            break;
        }
    }
    c.logits = p.dec.forward(c.levels.back());
    detail::require_finite(c.logits, "logits", steps);
    return c;
}

/// Per-step per-node norms of X⁽¹⁾ ... X⁽ᴷ⁾ from a forward cache.
inline Trace trace_from_cache(const ForwardCache& c) {
    Trace t;
    for (std::size_t n = 1; n < c.levels.size(); ++n) {
        WaveState s;
        s.curr = c.levels[n];
        s.step = n;
        t.record(s);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Loss and gradients

/// Mean cross-entropy of rows `idx` of the logits; optionally writes
/// d(loss)/d(logits) (zero outside idx).
inline double cross_entropy(const Matrix& logits, const NodeLabels& labels, std::span<const std::size_t> idx,
                            Matrix* dlogits = nullptr) {
    if (idx.empty()) throw std::invalid_argument("cross_entropy: empty index set");
    if (dlogits) *dlogits = Matrix(logits.rows(), logits.cols());
    const double inv = 1.0 / static_cast<double>(idx.size());
    double loss = 0.0;
    std::vector<double> prob(logits.cols());
    for (std::size_t i : idx) {
        auto z = logits.row(i);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) {
            prob[k] = std::exp(z[k] - zmax);
            sum += prob[k];
        }
        loss += (std::log(sum) + zmax - z[labels[i]]) * inv;
        if (dlogits) {
            auto dz = dlogits->row(i);
            for (std::size_t k = 0; k < z.size(); ++k) dz[k] = (prob[k] / sum - (k == labels[i] ? 1.0 : 0.0)) * inv;
        }
    }
    return loss;
}

inline double accuracy(const Matrix& logits, const NodeLabels& labels, std::span<const std::size_t> idx) {
    if (idx.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i : idx) {
        auto z = logits.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        hit += best == labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(idx.size());
}

/// (weight_decay / 2) * sum of squared weights (biases and eps excluded).
inline double l2_penalty(const ModelParams& p, double weight_decay) {
    double s = 0.0;
    p.for_each_group([&](std::string_view, auto v, bool is_weight) {
        if (is_weight)
            for (double x : v) s += x * x;
    });
    return 0.5 * weight_decay * s;
}

namespace detail {

inline std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> s(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) s[j] += r[j];
    }
    return s;
}

// Reverse pass through Y = coef * (alpha(X) ⊙ S) X with alpha = tanh(g_r·x_i + g_s·x_j).
// Accumulates into dx (from both the message and the attention logits) and dg.
inline void attention_backward(const Graph& g, const Matrix& x, const std::vector<double>& alpha,
                               const AttentionParams& att, const Matrix& gy, double coef, Matrix& dx,
                               std::vector<double>& dg) {
    const auto isd = inv_sqrt_degrees(g);
    const auto cols = g.col_indices();
    const std::size_t d = x.cols();
    const auto gr = att.receiver();
    const auto gs = att.sender();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        auto gyi = gy.row(i);
        auto xi = x.row(i);
        for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) {
            const std::size_t j = cols[k];
            const double s = coef * isd[i] * isd[j];
            auto xj = x.row(j);
            auto dxj = dx.row(j);
            double inner = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dxj[c] += alpha[k] * s * gyi[c];
                inner += gyi[c] * xj[c];
            }
            const double dz = s * inner * (1.0 - alpha[k] * alpha[k]);
            if (dz == 0.0) continue;
            auto dxi = dx.row(i);
            for (std::size_t c = 0; c < d; ++c) {
                dg[c] += dz * xi[c];
                dg[d + c] += dz * xj[c];
                dxi[c] += dz * gr[c];
                dxj[c] += dz * gs[c];
            }
        }
    }
}

}  // namespace detail

struct LossAndGrads {
    double loss = 0.0;      ///< cross-entropy + L2
    double data_loss = 0.0; ///< cross-entropy only
    ModelParams grads;
};

/// Backward pass for a completed forward cache.
inline LossAndGrads backward(const ModelParams& p, const Graph& g, const ForwardCache& c, const NodeLabels& labels,
                             std::span<const std::size_t> train_idx, const TrainConfig& cfg) {
    LossAndGrads out;
    out.grads = p.zeros_like();
    ModelParams& gr = out.grads;

    Matrix dlogits;
    out.data_loss = cross_entropy(c.logits, labels, train_idx, &dlogits);
    out.loss = out.data_loss + l2_penalty(p, cfg.weight_decay);
    if (!std::isfinite(out.loss)) throw NumericalError("non-finite loss");

    const std::size_t steps = c.levels.size() - 1;
    const Matrix& xk = c.levels.back();
    gr.dec.w = matmul_tn(xk, dlogits);
    gr.dec.b = detail::column_sums(dlogits);

    std::vector<Matrix> gl(steps + 1, Matrix(xk.rows(), xk.cols()));
    gl[steps] = matmul_nt(dlogits, p.dec.w);
    const double tau = cfg.tau;
    const double tau2 = tau * tau;
    Matrix dvel;

    switch (p.kind) {
        case ModelKind::Sym: {
            const Operator s = build_sym_norm(g);
            for (std::size_t n = steps - 1; n >= 1; --n) {
                const Matrix& gn1 = gl[n + 1];
                gl[n].axpy(2.0, gn1);
                gl[n].axpy(tau2, s.apply_transpose(gn1));
                gl[n - 1].axpy(-1.0, gn1);
            }
            const Matrix& g1 = gl[1];
            dvel = tau * g1;
            gl[0] += g1;
            gl[0].axpy(0.5 * tau2, s.apply_transpose(g1));
            break;
        }
        case ModelKind::Fa: {
            std::vector<double> deps(steps, 0.0);
            for (std::size_t n = steps - 1; n >= 1; --n) {
                const Matrix& gn1 = gl[n + 1];
                gl[n].axpy(2.0, gn1);
                detail::attention_backward(g, c.levels[n], c.alpha[n], p.attention[n], gn1, tau2, gl[n],
                                           gr.attention[n].g);
                gl[n - 1].axpy(-1.0, gn1);
                gl[0].axpy(c.eps[n], gn1);
                deps[n] = dot(gn1, c.levels[0]);
            }
            const Matrix& g1 = gl[1];
            dvel = tau * g1;
            gl[0] += g1;
            gl[0].axpy(0.5 * c.eps[0], g1);
            detail::attention_backward(g, c.levels[0], c.alpha[0], p.attention[0], g1, 0.5 * tau2, gl[0],
                                       gr.attention[0].g);
            deps[0] = 0.5 * dot(g1, c.levels[0]);
            for (std::size_t n = 0; n < steps; ++n) gr.eps_raw[n] = deps[n] * c.eps[n] * (1.0 - c.eps[n]);
            break;
        }
        case ModelKind::Heat: {
            const Operator a = build_heat_attention(g, uniform_heat_weights(g));
            const double keep = cfg.heat_mode == HeatMode::Diffusion ? 1.0 - tau : 1.0;
            for (std::size_t n = steps; n >= 1; --n) {
                gl[n - 1] = keep * gl[n];
                gl[n - 1].axpy(tau, a.apply_transpose(gl[n]));
            }
            break;
        }
    }

    gr.enc0.w = matmul_tn(c.input, gl[0]);
    gr.enc0.b = detail::column_sums(gl[0]);
    if (p.kind != ModelKind::Heat) {
        gr.enc1.w = matmul_tn(c.input, dvel);
        gr.enc1.b = detail::column_sums(dvel);
    }

    if (cfg.weight_decay != 0.0) {
        // Pair up groups of params and grads by visiting both in the same order.
        std::vector<std::span<const double>> src;
        p.for_each_group([&](std::string_view, auto v, bool w) {
            if (w) src.emplace_back(v.data(), v.size());
        });
        std::size_t k = 0;
        gr.for_each_group([&](std::string_view, std::span<double> v, bool w) {
            if (!w) return;
            const auto s = src[k++];
            for (std::size_t i = 0; i < v.size(); ++i) v[i] += cfg.weight_decay * s[i];
        });
    }
    return out;
}

/// Forward + backward on the train indices of `split`.
inline LossAndGrads loss_and_grads(const ModelParams& p, const Graph& g, const FeatureMatrix& x,
                                   const NodeLabels& labels, const DataSplit& split, const TrainConfig& cfg,
                                   const Matrix& mask = {}) {
    const ForwardCache c = forward(p, g, x, cfg, mask);
    return backward(p, g, c, labels, split.train, cfg);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::size_t t = 0;

    explicit AdamState(const ModelParams& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

namespace detail {
template <class F>
void zip_groups(ModelParams& a, const ModelParams& b, ModelParams& c, ModelParams& d, F&& f) {
    std::vector<std::span<double>> sa, sc, sd;
    std::vector<std::span<const double>> sb;
    a.for_each_group([&](std::string_view, std::span<double> v, bool) { sa.push_back(v); });
    b.for_each_group([&](std::string_view, auto v, bool) { sb.emplace_back(v.data(), v.size()); });
    c.for_each_group([&](std::string_view, std::span<double> v, bool) { sc.push_back(v); });
    d.for_each_group([&](std::string_view, std::span<double> v, bool) { sd.push_back(v); });
    if (sa.size() != sb.size() || sa.size() != sc.size() || sa.size() != sd.size())
        throw std::invalid_argument("adam_step: parameter and gradient structures differ");
    for (std::size_t k = 0; k < sa.size(); ++k) {
        if (sa[k].size() != sb[k].size() || sa[k].size() != sc[k].size() || sa[k].size() != sd[k].size())
            throw std::invalid_argument("adam_step: group size mismatch");
        for (std::size_t i = 0; i < sa[k].size(); ++i) f(sa[k][i], sb[k][i], sc[k][i], sd[k][i]);
    }
}
}  // namespace detail

/// Bias-corrected Adam update. L2 regularization is part of the loss, so
/// there is no decoupled decay here.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& st, const AdamOptions& o) {
    ++st.t;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.t));
    detail::zip_groups(params, grads, st.m, st.v, [&](double& w, double g, double& m, double& v) {
        m = o.beta1 * m + (1.0 - o.beta1) * g;
        v = o.beta2 * v + (1.0 - o.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        w -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    });
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochMetrics {
    std::size_t epoch = 0;  ///< 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct Metrics {
    std::vector<EpochMetrics> per_epoch;
    double test_accuracy = 0.0;
    std::size_t best_epoch = 0;  ///< 0 when no epoch ran
    std::optional<double> wall_clock_s;
    std::size_t parameter_count = 0;
};

struct TrainResult {
    ModelParams params;
    Metrics metrics;
};

struct TrainOptions {
    bool record_time = false;
};

/// Full-batch training with Adam. Returns the parameters of the epoch with
/// the best validation accuracy (earliest on ties). Stops early once the
/// validation loss exceeds the mean of the previous `patience` epochs.
inline TrainResult train(const Graph& g, const FeatureMatrix& x, const NodeLabels& labels, const DataSplit& split,
                         const TrainConfig& cfg, const TrainOptions& topts = {}) {
    cfg.validate();
    split.validate(g.num_nodes());
    if (labels.size() != g.num_nodes()) throw std::invalid_argument("train: label count != num_nodes");
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult r;
    r.params = init_params(cfg, x.cols(), labels.num_classes);
    r.metrics.parameter_count = count_parameters(cfg, x.cols(), labels.num_classes);

    ModelParams params = r.params;
    AdamState adam(params);
    const AdamOptions aopt{cfg.learning_rate};
    double best_val = -1.0;
    std::vector<double> val_history;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const Matrix mask =
            dropout_mask(x.rows(), x.cols(), cfg.dropout, derive_seed(cfg.seed, 0x10000 + epoch));
        const LossAndGrads lg = loss_and_grads(params, g, x, labels, split, cfg, mask);
        adam_step(params, lg.grads, adam, aopt);

        const ForwardCache eval = forward(params, g, x, cfg);
        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = cross_entropy(eval.logits, labels, split.train);
        em.train_acc = accuracy(eval.logits, labels, split.train);
        em.val_loss = cross_entropy(eval.logits, labels, split.validation);
        em.val_acc = accuracy(eval.logits, labels, split.validation);
        r.metrics.per_epoch.push_back(em);

        if (em.val_acc > best_val) {
            best_val = em.val_acc;
            r.params = params;
            r.metrics.best_epoch = epoch;
            r.metrics.test_accuracy = accuracy(eval.logits, labels, split.test);
        }

        if (cfg.patience > 0 && val_history.size() >= cfg.patience) {
            const double mean =
                std::accumulate(val_history.end() - static_cast<std::ptrdiff_t>(cfg.patience), val_history.end(), 0.0) /
                static_cast<double>(cfg.patience);
            if (em.val_loss > mean) break;
        }
        val_history.push_back(em.val_loss);
    }

    if (r.metrics.best_epoch == 0) {
        const ForwardCache eval = forward(r.params, g, x, cfg);
        r.metrics.test_accuracy = accuracy(eval.logits, labels, split.test);
    }
    if (topts.record_time)
        r.metrics.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline nlohmann::json to_json(const Metrics& m, const TrainConfig& cfg) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : m.per_epoch)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_acc", e.train_acc},
                          {"val_loss", e.val_loss},
                          {"val_acc", e.val_acc}});
    return {{"config", to_json(cfg)},
            {"per_epoch", std::move(epochs)},
            {"test_accuracy", m.test_accuracy},
            {"best_epoch", m.best_epoch},
            {"wall_clock_s", m.wall_clock_s ? nlohmann::json(*m.wall_clock_s) : nlohmann::json(nullptr)},
            {"parameter_count", m.parameter_count}};
}

inline void write_metrics(const fs::path& path, const Metrics& m, const TrainConfig& cfg) {
    write_json(path, to_json(m, cfg));
}

// ---------------------------------------------------------------------------
// Parameter checkpoints

inline nlohmann::json to_json(const ModelParams& p) {
    auto affine = [](const Affine& a) {
        return nlohmann::json{{"rows", a.w.rows()},
                              {"cols", a.w.cols()},
                              {"w", std::vector<double>(a.w.values().begin(), a.w.values().end())},
                              {"b", a.b}};
    };
    nlohmann::json j{{"kind", to_string(p.kind)},
                     {"enc0", affine(p.enc0)},
                     {"dec", affine(p.dec)},
                     {"dropout", p.dropout_rate},
                     {"seed", p.seed}};
    if (p.kind != ModelKind::Heat) j["enc1"] = affine(p.enc1);
    if (p.kind == ModelKind::Fa) {
        nlohmann::json gs = nlohmann::json::array();
        for (const auto& a : p.attention) gs.push_back(a.g);
        j["attention"] = std::move(gs);
        j["eps_raw"] = p.eps_raw;
    }
    return j;
}

inline ModelParams params_from_json(const nlohmann::json& j) {
    auto affine = [](const nlohmann::json& a) {
        Affine out{Matrix(a.at("rows").get<std::size_t>(), a.at("cols").get<std::size_t>()),
                   a.at("b").get<std::vector<double>>()};
        const auto w = a.at("w").get<std::vector<double>>();
        if (w.size() != out.w.size() || out.b.size() != out.w.cols())
            throw std::invalid_argument("checkpoint: affine map shape mismatch");
        std::copy(w.begin(), w.end(), out.w.values().begin());
        return out;
    };
    ModelParams p;
    p.kind = parse_model_kind(j.at("kind").get<std::string>());
    p.enc0 = affine(j.at("enc0"));
    p.dec = affine(j.at("dec"));
    p.dropout_rate = j.value("dropout", 0.0);
    p.seed = j.value("seed", std::uint64_t{0});
    if (p.kind != ModelKind::Heat) p.enc1 = affine(j.at("enc1"));
    if (p.kind == ModelKind::Fa) {
        for (const auto& g : j.at("attention")) p.attention.push_back({g.get<std::vector<double>>()});
        p.eps_raw = j.at("eps_raw").get<std::vector<double>>();
        if (p.eps_raw.size() != p.attention.size()) throw std::invalid_argument("checkpoint: fa step counts differ");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Attention export

struct AttentionSummary {
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::size_t zero = 0;
};

struct AttentionExport {
    CsvTable table;  ///< step,i,j,alpha
    AttentionSummary summary;
};

/// alpha for every step and stored arc of an fa model, evaluated without dropout.
inline AttentionExport export_attention(const ModelParams& p, const Graph& g, const FeatureMatrix& x,
                                        const TrainConfig& cfg) {
    if (p.kind != ModelKind::Fa) throw std::invalid_argument("export_attention: model is not fa");
    const ForwardCache c = forward(p, g, x, cfg);
    AttentionExport out;
    out.table.header = {"step", "i", "j", "alpha"};
    const auto cols = g.col_indices();
    for (std::size_t n = 0; n < c.alpha.size(); ++n)
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
            for (std::size_t k = g.arc_begin(i); k < g.arc_end(i); ++k) {
                const double a = c.alpha[n][k];
                out.table.rows.push_back(
                    {static_cast<double>(n), static_cast<double>(i), static_cast<double>(cols[k]), a});
                if (a > 0) ++out.summary.positive;
                else if (a < 0) ++out.summary.negative;
                else ++out.summary.zero;
            }
    return out;
}

}  // namespace gwn
