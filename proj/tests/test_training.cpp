#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gwn/training.hpp"
#include "support.hpp"

using namespace gwn;
using gwn::fixtures::random_graph;
using gwn::fixtures::random_matrix;

namespace {

struct Instance {
    Graph graph;
    Matrix x;
    NodeLabels labels;
    DataSplit split;
};

Instance random_instance(Rng& rng, std::size_t min_n, std::size_t max_n, std::size_t f, std::size_t c) {
    Instance in;
    in.graph = random_graph(rng, min_n, max_n, 0.5);
    const std::size_t n = in.graph.num_nodes();
    in.x = random_matrix(rng, n, f);
    std::vector<std::size_t> l(n);
    std::uniform_int_distribution<std::size_t> cd(0, c - 1);
    for (auto& v : l) v = cd(rng);
    in.labels = NodeLabels(l, c);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    in.split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n / 2));
    in.split.validation.assign(all.begin() + static_cast<std::ptrdiff_t>(n / 2),
                               all.begin() + static_cast<std::ptrdiff_t>(3 * n / 4));
    in.split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(3 * n / 4), all.end());
    return in;
}

std::vector<std::span<double>> groups(ModelParams& p) {
    std::vector<std::span<double>> out;
    p.for_each_group([&](std::string_view, std::span<double> v, bool) { out.push_back(v); });
    return out;
}

std::vector<std::string> group_names(const ModelParams& p) {
    std::vector<std::string> out;
    p.for_each_group([&](std::string_view n, auto, bool) { out.emplace_back(n); });
    return out;
}

// Worst per-group norm-wise relative error between analytic and central-difference gradients.
double gradient_check(const Instance& in, ModelParams params, const TrainConfig& cfg, const Matrix& mask,
                      std::string* worst_group = nullptr) {
    const auto lg = loss_and_grads(params, in.graph, in.x, in.labels, in.split, cfg, mask);
    ModelParams analytic = lg.grads;
    auto ga = groups(analytic);
    auto gp = groups(params);
    const auto names = group_names(params);
    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t k = 0; k < gp.size(); ++k) {
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < gp[k].size(); ++i) {
            const double orig = gp[k][i];
            gp[k][i] = orig + h;
            const double lp = loss_and_grads(params, in.graph, in.x, in.labels, in.split, cfg, mask).loss;
            gp[k][i] = orig - h;
            const double lm = loss_and_grads(params, in.graph, in.x, in.labels, in.split, cfg, mask).loss;
            gp[k][i] = orig;
            const double num = (lp - lm) / (2 * h);
            diff2 += (num - ga[k][i]) * (num - ga[k][i]);
            a2 += ga[k][i] * ga[k][i];
            n2 += num * num;
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-7});
        const double rel = std::sqrt(diff2) / denom;
        if (rel > worst) {
            worst = rel;
            if (worst_group) *worst_group = names[k];
        }
    }
    return worst;
}

TrainConfig small_config(ModelKind kind, double tau, double T, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.model = kind;
    cfg.tau = tau;
    cfg.terminal_time = T;
    cfg.hidden = 4;
    cfg.weight_decay = 1e-2;
    cfg.seed = seed;
    return cfg;
}

void randomize(ModelParams& p, Rng& rng, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    p.for_each_group([&](std::string_view, std::span<double> v, bool) {
        for (double& x : v) x = nd(rng);
    });
}

}  // namespace

TEST(Gradients, MatchFiniteDifferencesForAllModels) {
    Rng rng(61);
    for (int t = 0; t < 20; ++t) {
        const Instance in = random_instance(rng, 6, 10, 3, 3);
        for (ModelKind kind : {ModelKind::Sym, ModelKind::Fa, ModelKind::Heat}) {
            const double tau = 0.5 + 0.25 * (t % 3);
            const TrainConfig cfg = small_config(kind, tau, tau * (1 + t % 4), t);
            ModelParams p = init_params(cfg, 3, 3);
            randomize(p, rng, 0.5);
            std::string worst;
            const double err = gradient_check(in, p, cfg, {}, &worst);
            EXPECT_LT(err, 1e-4) << to_string(kind) << " trial " << t << " group " << worst;
        }
    }
}

TEST(Gradients, SpecInstanceSixNodesThreeSteps) {
    Rng rng(62);
    const Instance in = random_instance(rng, 6, 6, 5, 2);
    for (ModelKind kind : {ModelKind::Sym, ModelKind::Fa}) {
        const TrainConfig cfg = small_config(kind, 1.0, 3.0, 5);
        const ModelParams p = init_params(cfg, 5, 2);
        EXPECT_LT(gradient_check(in, p, cfg, {}), 1e-4) << to_string(kind);
    }
}

TEST(Gradients, WithFixedDropoutMask) {
    Rng rng(63);
    const Instance in = random_instance(rng, 8, 8, 4, 2);
    for (ModelKind kind : {ModelKind::Sym, ModelKind::Fa}) {
        TrainConfig cfg = small_config(kind, 0.5, 1.5, 7);
        cfg.dropout = 0.4;
        const ModelParams p = init_params(cfg, 4, 2);
        const Matrix mask = dropout_mask(8, 4, 0.4, 99);
        EXPECT_LT(gradient_check(in, p, cfg, mask), 1e-4);
    }
}

TEST(Gradients, LiteralHeatMode) {
    Rng rng(64);
    const Instance in = random_instance(rng, 7, 7, 3, 2);
    TrainConfig cfg = small_config(ModelKind::Heat, 0.3, 0.9, 1);
    cfg.heat_mode = HeatMode::Literal;
    EXPECT_LT(gradient_check(in, init_params(cfg, 3, 2), cfg, {}), 1e-4);
}

TEST(Forward, RejectsBadShapes) {
    Rng rng(65);
    const Instance in = random_instance(rng, 5, 5, 3, 2);
    TrainConfig cfg = small_config(ModelKind::Fa, 1.0, 3.0, 0);
    const ModelParams p = init_params(cfg, 3, 2);
    EXPECT_THROW(forward(p, in.graph, Matrix(5, 4), cfg), std::invalid_argument);
    EXPECT_THROW(forward(p, in.graph, Matrix(4, 3), cfg), std::invalid_argument);
    cfg.terminal_time = 5.0;  // fa parameters were sized for 3 steps
    EXPECT_THROW(forward(p, in.graph, in.x, cfg), std::invalid_argument);
    cfg.terminal_time = 0.0;
    EXPECT_THROW(forward(p, in.graph, in.x, cfg), std::invalid_argument);
}

TEST(Forward, EdgelessGraphWithZeroVelocityIsPerNodeMlp) {
    Rng rng(66);
    const Graph g = build_graph({}, 5).graph;
    const Matrix x = random_matrix(rng, 5, 3);
    const TrainConfig cfg = small_config(ModelKind::Sym, 0.5, 4.0, 3);
    ModelParams p = init_params(cfg, 3, 2);
    p.enc1.w.fill(0.0);
    const auto c = forward(p, g, x, cfg);
    EXPECT_LT(max_abs_diff(c.logits, p.dec.forward(p.enc0.forward(x))), 1e-12);
    EXPECT_EQ(c.levels.size(), cfg.steps() + 1);
}

TEST(Forward, FaWithZeroAttentionMatchesScalarRecurrence) {
    Rng rng(67);
    const Graph g = random_graph(rng, 4, 4, 0.7);
    const Matrix x = random_matrix(rng, 4, 2);
    const TrainConfig cfg = small_config(ModelKind::Fa, 0.8, 4.0, 9);
    ModelParams p = init_params(cfg, 2, 2);
    for (auto& a : p.attention) std::fill(a.g.begin(), a.g.end(), 0.0);
    for (std::size_t n = 0; n < p.eps_raw.size(); ++n) p.eps_raw[n] = 0.3 * static_cast<double>(n) - 0.5;
    const auto c = forward(p, g, x, cfg);

    // With alpha = 0 every entry evolves independently:
    // x1 = tau v + x0 + eps0/2 x0,  x_{n+1} = eps_n x0 + 2 x_n - x_{n-1}.
    const Matrix x0 = p.enc0.forward(x), v = p.enc1.forward(x);
    for (std::size_t k = 0; k < x0.size(); ++k) {
        const double a0 = x0.values()[k];
        double prev = a0;
        double curr = 0.8 * v.values()[k] + a0 + 0.5 * sigmoid(p.eps_raw[0]) * a0;
        for (std::size_t n = 1; n < cfg.steps(); ++n) {
            const double next = sigmoid(p.eps_raw[n]) * a0 + 2 * curr - prev;
            prev = curr;
            curr = next;
        }
        EXPECT_NEAR(c.levels.back().values()[k], curr, 1e-10);
    }
}

TEST(Forward, NonFiniteActivationReported) {
    Rng rng(68);
    const Instance in = random_instance(rng, 6, 6, 3, 2);
    TrainConfig cfg = small_config(ModelKind::Sym, 5.0, 5000.0, 0);
    const ModelParams p = init_params(cfg, 3, 2);
    try {
        forward(p, in.graph, in.x, cfg);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

TEST(Loss, UniformLogitsGiveLogC) {
    const Matrix logits(6, 4, 0.3);
    const NodeLabels labels({0, 1, 2, 3, 0, 1}, 4);
    const std::vector<std::size_t> idx{0, 2, 5};
    EXPECT_NEAR(cross_entropy(logits, labels, idx), std::log(4.0), 1e-14);
}

TEST(Loss, WeightDecayTermIsLinearInCoefficient) {
    Rng rng(69);
    const Instance in = random_instance(rng, 6, 6, 3, 2);
    TrainConfig cfg = small_config(ModelKind::Fa, 1.0, 2.0, 4);
    const ModelParams p = init_params(cfg, 3, 2);
    cfg.weight_decay = 0.0;
    const double base = loss_and_grads(p, in.graph, in.x, in.labels, in.split, cfg).loss;
    cfg.weight_decay = 0.01;
    const double one = loss_and_grads(p, in.graph, in.x, in.labels, in.split, cfg).loss - base;
    cfg.weight_decay = 0.02;
    const double two = loss_and_grads(p, in.graph, in.x, in.labels, in.split, cfg).loss - base;
    EXPECT_GT(one, 0.0);
    EXPECT_NEAR(two, 2.0 * one, 1e-14);
    EXPECT_NEAR(one, l2_penalty(p, 0.01), 1e-14);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
    const TrainConfig cfg = small_config(ModelKind::Fa, 1.0, 2.0, 1);
    ModelParams p = init_params(cfg, 3, 2);
    const ModelParams before = p;
    AdamState st(p);
    adam_step(p, p.zeros_like(), st, {});
    EXPECT_EQ(p.enc0.w, before.enc0.w);
    EXPECT_EQ(p.attention[1].g, before.attention[1].g);
    EXPECT_EQ(p.eps_raw, before.eps_raw);
}

TEST(Adam, ScalarOracle) {
    // One scalar weight through the generic path: enc0.w is 1x1 in a heat model
    // with f = d = 1; the other groups get zero gradient.
    TrainConfig cfg = small_config(ModelKind::Heat, 1.0, 1.0, 0);
    cfg.hidden = 1;
    ModelParams p = init_params(cfg, 1, 2);
    ModelParams g = p.zeros_like();
    g.enc0.w(0, 0) = 1.0;
    AdamState st(p);
    const double w0 = p.enc0.w(0, 0);
    const AdamOptions opt{0.1};
    double m = 0, v = 0, w = w0;
    for (int t = 1; t <= 5; ++t) {
        adam_step(p, g, st, opt);
        m = 0.9 * m + 0.1;
        v = 0.999 * v + 0.001;
        w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_NEAR(p.enc0.w(0, 0), w, 1e-15);
        if (t == 1) {
            EXPECT_NEAR(p.enc0.w(0, 0) - w0, -0.1, 1e-8);
        }
    }
}

TEST(Adam, StructureMismatchThrows) {
    ModelParams a = init_params(small_config(ModelKind::Fa, 1.0, 2.0, 1), 3, 2);
    const ModelParams b = init_params(small_config(ModelKind::Sym, 1.0, 2.0, 1), 3, 2);
    AdamState st(a);
    EXPECT_THROW(adam_step(a, b, st, {}), std::invalid_argument);
}

TEST(ParameterCount, FormulaExamples) {
    EXPECT_EQ(count_parameters(ModelKind::Sym, 1433, 64, 7, 1), 183872u);
    EXPECT_EQ(count_parameters(ModelKind::Fa, 10, 4, 2, 3), 115u);
    EXPECT_THROW(count_parameters(ModelKind::Sym, 10, 0, 2, 3), std::invalid_argument);
}

TEST(ParameterCountProperty, MatchesEnumeratedSizes) {
    Rng rng(70);
    std::uniform_int_distribution<std::size_t> fd(1, 40), dd(1, 20), cd(2, 8), kd(1, 12);
    for (int t = 0; t < 50; ++t) {
        for (ModelKind kind : {ModelKind::Sym, ModelKind::Fa, ModelKind::Heat}) {
            TrainConfig cfg;
            cfg.model = kind;
            cfg.hidden = dd(rng);
            cfg.tau = 0.5;
            cfg.terminal_time = 0.5 * static_cast<double>(kd(rng));
            const std::size_t f = fd(rng), c = cd(rng);
            const ModelParams p = init_params(cfg, f, c);
            const std::size_t formula = count_parameters(cfg, f, c);
            const std::size_t biases = (kind == ModelKind::Heat ? 1 : 2) * cfg.hidden + c;
            EXPECT_EQ(p.bias_size(), biases);
            EXPECT_EQ(p.total_size(), formula + biases);
        }
    }
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
    Rng rng(71);
    const Instance in = random_instance(rng, 10, 10, 3, 2);
    TrainConfig cfg = small_config(ModelKind::Sym, 1.0, 2.0, 8);
    cfg.max_epochs = 0;
    const auto r = train(in.graph, in.x, in.labels, in.split, cfg);
    EXPECT_TRUE(r.metrics.per_epoch.empty());
    EXPECT_EQ(r.metrics.best_epoch, 0u);
    EXPECT_EQ(r.params.enc0.w, init_params(cfg, 3, 2).enc0.w);
}

TEST(Train, DeterministicAndAccuraciesInRange) {
    SbmConfig sc;
    sc.nodes_per_block = 30;
    sc.seed = 5;
    const auto s = generate_sbm(sc);
    const auto split = random_split(60, 0.6, 0.2, 5);
    TrainConfig cfg;
    cfg.model = ModelKind::Fa;
    cfg.max_epochs = 30;
    cfg.dropout = 0.2;
    cfg.seed = 12;
    const auto a = train(s.graph, s.features, s.labels, split, cfg);
    const auto b = train(s.graph, s.features, s.labels, split, cfg);
    EXPECT_EQ(to_json(a.metrics, cfg).dump(), to_json(b.metrics, cfg).dump());
    for (const auto& e : a.metrics.per_epoch) {
        EXPECT_GE(e.train_acc, 0.0);
        EXPECT_LE(e.val_acc, 1.0);
    }
    EXPECT_FALSE(a.metrics.wall_clock_s.has_value());
    EXPECT_GE(a.metrics.best_epoch, 1u);
}

TEST(Train, EarlyStopFiresWhenValidationLossRises) {
    SbmConfig sc;
    sc.nodes_per_block = 20;
    sc.feature_noise = 2.0;
    sc.seed = 3;
    const auto s = generate_sbm(sc);
    const auto split = random_split(40, 0.3, 0.3, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.2;
    cfg.weight_decay = 0.0;
    cfg.max_epochs = 500;
    cfg.seed = 2;
    const auto r = train(s.graph, s.features, s.labels, split, cfg);
    const auto& e = r.metrics.per_epoch;
    ASSERT_LT(e.size(), 500u);
    ASSERT_GT(e.size(), 10u);
    double mean = 0.0;
    for (std::size_t k = e.size() - 11; k < e.size() - 1; ++k) mean += e[k].val_loss;
    EXPECT_GT(e.back().val_loss, mean / 10.0);
}

TEST(Train, MetricsJsonLayout) {
    Rng rng(72);
    const Instance in = random_instance(rng, 12, 12, 3, 2);
    TrainConfig cfg = small_config(ModelKind::Sym, 1.0, 2.0, 8);
    cfg.max_epochs = 3;
    const auto r = train(in.graph, in.x, in.labels, in.split, cfg, {true});
    const auto j = to_json(r.metrics, cfg);
    for (const char* key : {"config", "per_epoch", "test_accuracy", "wall_clock_s", "parameter_count"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(j["wall_clock_s"].is_number());
    EXPECT_EQ(j["per_epoch"].size(), r.metrics.per_epoch.size());
    EXPECT_EQ(j["parameter_count"], count_parameters(cfg, 3, 2));
}

TEST(Checkpoint, RoundTrip) {
    const TrainConfig cfg = small_config(ModelKind::Fa, 0.5, 2.0, 3);
    const ModelParams p = init_params(cfg, 3, 2);
    const ModelParams q = params_from_json(nlohmann::json::parse(to_json(p).dump()));
    EXPECT_EQ(q.enc0.w, p.enc0.w);
    EXPECT_EQ(q.enc1.b, p.enc1.b);
    EXPECT_EQ(q.dec.w, p.dec.w);
    EXPECT_EQ(q.attention.size(), p.attention.size());
    EXPECT_EQ(q.attention[2].g, p.attention[2].g);
    EXPECT_EQ(q.eps_raw, p.eps_raw);
}

TEST(Attention, ExportZeroVectorAndRowCount) {
    Rng rng(73);
    const Instance in = random_instance(rng, 8, 8, 3, 2);
    const TrainConfig cfg = small_config(ModelKind::Fa, 1.0, 3.0, 1);
    ModelParams p = init_params(cfg, 3, 2);
    const auto ex = export_attention(p, in.graph, in.x, cfg);
    EXPECT_EQ(ex.table.rows.size(), in.graph.num_arcs() * 3);
    EXPECT_EQ(ex.table.header, (std::vector<std::string>{"step", "i", "j", "alpha"}));
    for (auto& a : p.attention) std::fill(a.g.begin(), a.g.end(), 0.0);
    const auto z = export_attention(p, in.graph, in.x, cfg);
    EXPECT_EQ(z.summary.positive, 0u);
    EXPECT_EQ(z.summary.negative, 0u);
    EXPECT_EQ(z.summary.zero, in.graph.num_arcs() * 3);
    const ModelParams sym = init_params(small_config(ModelKind::Sym, 1.0, 3.0, 1), 3, 2);
    EXPECT_THROW(export_attention(sym, in.graph, in.x, cfg), std::invalid_argument);
}
