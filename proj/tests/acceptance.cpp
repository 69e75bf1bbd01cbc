// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gwn/io.hpp"
#include "gwn/propagation.hpp"
#include "gwn/spectral.hpp"
#include "gwn/stability.hpp"
#include "gwn/training.hpp"
#include "support.hpp"

namespace {

using namespace gwn;
using fixtures::dense_adjacency;
using fixtures::random_connected_graph;
using fixtures::random_graph;
using fixtures::random_matrix;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    const char* id;
    const char* title;
    double budget_s;  ///< <= 0: no runtime limit
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Matrix dense_sym_norm(const Graph& g) {
    const Matrix a = dense_adjacency(g);
    Matrix s(g.num_nodes(), g.num_nodes());
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = 0; j < s.cols(); ++j)
            if (a(i, j) != 0.0)
                s(i, j) = a(i, j) / std::sqrt(static_cast<double>(g.degree(i)) * static_cast<double>(g.degree(j)));
    return s;
}

Outcome ac1_divergence_form() {
    Rng rng(derive_seed(0xAC, 1));
    double worst = 0.0, worst_dense = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Graph g = random_graph(rng, 1, 64);
        const Matrix x = random_matrix(rng, g.num_nodes(), 1 + t % 5);
        const Matrix div = divergence_form(g, x);
        worst = std::max(worst, max_abs_diff(div, build_combinatorial(g).apply(x)));
        Matrix lap = dense_adjacency(g);
        lap *= -1.0;
        for (std::size_t i = 0; i < g.num_nodes(); ++i) lap(i, i) += static_cast<double>(g.degree(i));
        worst_dense = std::max(worst_dense, max_abs_diff(div, matmul(lap, x)));
    }
    const double e = std::max(worst, worst_dense);
    return {e <= 1e-12, "max |div - (D-A)X| = " + fmt("%.3g", e) + " (tol 1e-12)"};
}

Outcome ac2_companion_power() {
    Rng rng(derive_seed(0xAC, 2));
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Graph g = random_graph(rng, 2, 12);
        const std::size_t n = g.num_nodes(), ch = 2;
        const double tau = std::uniform_real_distribution<double>(0.05, 0.5)(rng);
        const Operator op = build_sym_norm(g);
        const Matrix x0 = random_matrix(rng, n, ch), v = random_matrix(rng, n, ch);
        const auto res = propagate(init_state(x0, v, op, tau), WaveSymScheme{&op}, 49, false);

        const Matrix s = dense_sym_norm(g);
        Matrix c(2 * n, 2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) c(i, j) = tau * tau * s(i, j);
            c(i, i) += 2.0;
            c(i, n + i) = -1.0;
            c(n + i, i) = 1.0;
        }
        Matrix z(2 * n, ch);
        const Matrix x1 = tau * v + x0 + (tau * tau / 2.0) * matmul(s, x0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < ch; ++k) {
                z(i, k) = x1(i, k);
                z(n + i, k) = x0(i, k);
            }
        for (int step = 1; step < 50; ++step) z = matmul(c, z);
        Matrix x50(n, ch);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < ch; ++k) x50(i, k) = z(i, k);
        if (res.state.step != 50) return {false, "propagate stopped at step " + std::to_string(res.state.step)};
        worst = std::max(worst, frobenius_norm(res.state.curr - x50) / frobenius_norm(x50));
    }
    return {worst < 1e-8, "max relative error = " + fmt("%.3g", worst) + " (tol 1e-8)"};
}

Outcome ac3_root_locus() {
    Rng rng(derive_seed(0xAC, 3));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double mod_err = 0.0;
    for (int t = 0; t < 1000; ++t) {
        double lp = u(rng);
        while (std::abs(lp) >= 2.0) lp = u(rng);
        const auto [r1, r2] = root_locus(lp);
        mod_err = std::max({mod_err, std::abs(std::abs(r1) - 1.0), std::abs(std::abs(r2) - 1.0)});
    }
    double prod_err = 0.0;
    for (int k = 0; k <= 2000; ++k) {
        const double lp = -10.0 + 20.0 * k / 2000.0;
        const auto [r1, r2] = root_locus(lp);
        prod_err = std::max(prod_err, std::abs(r1 * r2 - 1.0));
    }
    const Graph k2 = build_graph({Edge{0, 1}}, 2).graph;
    const double rho = spectral_radius(build_companion(build_sym_norm(k2), 1.0));
    const double rho_err = std::abs(rho - (3.0 + std::sqrt(5.0)) / 2.0);
    const bool ok = mod_err <= 1e-10 && prod_err <= 1e-12 && rho_err <= 1e-9;
    return {ok, "modulus err " + fmt("%.3g", mod_err) + ", product err " + fmt("%.3g", prod_err) + ", K2 rho " +
                    fmt("%.12f", rho) + " err " + fmt("%.3g", rho_err)};
}

Outcome ac4_spectral_bounds() {
    Rng rng(derive_seed(0xAC, 4));
    double lo = 1e300, hi = -1e300, top_err = 0.0;
    for (int t = 0; t < 50; ++t) {
        const Graph g = random_graph(rng, 1, 12);
        const auto ed = dense_eigensolve(build_laplacian_sym(g));
        lo = std::min(lo, ed.eigenvalues.front());
        hi = std::max(hi, ed.eigenvalues.back());
        const Graph gc = random_connected_graph(rng, 2, 12);
        const auto es = dense_eigensolve(build_sym_norm(gc));
        top_err = std::max(top_err, std::abs(es.eigenvalues.back() - 1.0));
    }
    const bool ok = lo >= -1e-10 && hi <= 2.0 + 1e-10 && top_err <= 1e-8;
    return {ok, "I-S spectrum in [" + fmt("%.3g", lo) + ", " + fmt("%.15g", hi) + "], |max eig S - 1| = " +
                    fmt("%.3g", top_err)};
}

double worst_group_error(const Graph& g, const Matrix& x, const NodeLabels& labels, const DataSplit& split,
                         ModelParams params, const TrainConfig& cfg) {
    const auto analytic = loss_and_grads(params, g, x, labels, split, cfg, {}).grads;
    std::vector<std::span<double>> gp, ga;
    ModelParams a = analytic;
    params.for_each_group([&](std::string_view, std::span<double> v, bool) { gp.push_back(v); });
    a.for_each_group([&](std::string_view, std::span<double> v, bool) { ga.push_back(v); });
    const double h = 1e-4;
    double worst = 0.0;
    for (std::size_t k = 0; k < gp.size(); ++k) {
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < gp[k].size(); ++i) {
            const double orig = gp[k][i];
            gp[k][i] = orig + h;
            const double lp = loss_and_grads(params, g, x, labels, split, cfg, {}).loss;
            gp[k][i] = orig - h;
            const double lm = loss_and_grads(params, g, x, labels, split, cfg, {}).loss;
            gp[k][i] = orig;
            const double num = (lp - lm) / (2 * h);
            diff2 += (num - ga[k][i]) * (num - ga[k][i]);
            a2 += ga[k][i] * ga[k][i];
            n2 += num * num;
        }
        worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-7}));
    }
    return worst;
}

Outcome ac5_gradients() {
    Rng rng(derive_seed(0xAC, 5));
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Graph g = random_graph(rng, 6, 10, 0.5);
        const std::size_t n = g.num_nodes(), f = 3, c = 3;
        const Matrix x = random_matrix(rng, n, f);
        std::vector<std::size_t> l(n);
        for (std::size_t i = 0; i < n; ++i) l[i] = (i + static_cast<std::size_t>(t)) % c;
        const NodeLabels labels(l, c);
        DataSplit split;
        for (std::size_t i = 0; i < n; ++i) (i % 2 ? split.validation : split.train).push_back(i);
        for (ModelKind kind : {ModelKind::Sym, ModelKind::Fa}) {
            TrainConfig cfg;
            cfg.model = kind;
            cfg.hidden = 4;
            cfg.tau = 0.5;
            cfg.terminal_time = 0.5 * static_cast<double>(1 + t % 4);
            cfg.weight_decay = 1e-2;
            cfg.seed = static_cast<std::uint64_t>(t);
            ModelParams p = init_params(cfg, f, c);
            std::normal_distribution<double> nd(0.0, 0.5);
            p.for_each_group([&](std::string_view, std::span<double> v, bool) {
                for (double& e : v) e = nd(rng);
            });
            worst = std::max(worst, worst_group_error(g, x, labels, split, p, cfg));
        }
    }
    return {worst < 1e-4, "worst per-group relative error = " + fmt("%.3g", worst) + " (tol 1e-4)"};
}

Outcome ac6_fourier() {
    Rng rng(derive_seed(0xAC, 6));
    double rt = 0.0, pars = 0.0;
    for (int t = 0; t < 12; ++t) {
        const Graph g = random_graph(rng, 2, 256, t % 2 ? 0.05 : 0.3);
        const auto ed = dense_eigensolve(build_sym_norm(g));
        const auto x = fixtures::random_vector(rng, g.num_nodes());
        const auto xh = graph_fourier(ed, x);
        const auto back = inverse_fourier(ed, xh, FilterFn::one());
        double e = 0.0, eh = 0.0, d = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            e += x[i] * x[i];
            eh += xh[i] * xh[i];
            d = std::max(d, std::abs(back[i] - x[i]));
        }
        rt = std::max(rt, d);
        pars = std::max(pars, std::abs(e - eh) / e);
    }
    return {rt <= 1e-8 && pars <= 1e-8,
            "round-trip max err " + fmt("%.3g", rt) + ", Parseval rel err " + fmt("%.3g", pars)};
}

// Node classification on the two-block SBM, ten seeds.

SbmConfig sbm(bool homophilic) {
    SbmConfig c;
    c.nodes_per_block = 100;
    c.num_blocks = 2;
    c.p_intra = homophilic ? 0.1 : 0.01;
    c.p_inter = homophilic ? 0.01 : 0.1;
    c.feature_noise = 0.5;
    return c;
}

constexpr int kSeeds = 10;

std::vector<double> seed_accuracies(bool homophilic, ModelKind kind, double tau, double terminal_time) {
    std::vector<double> out;
    for (int s = 0; s < kSeeds; ++s) {
        SbmConfig sc = sbm(homophilic);
        sc.seed = derive_seed(1000, static_cast<std::uint64_t>(s));
        const auto d = generate_sbm(sc);
        const auto split = random_split(d.graph.num_nodes(), 0.6, 0.2, derive_seed(2000, static_cast<std::uint64_t>(s)));
        TrainConfig cfg;
        cfg.model = kind;
        cfg.tau = tau;
        cfg.terminal_time = terminal_time;
        cfg.seed = derive_seed(3000, static_cast<std::uint64_t>(s));
        out.push_back(train(d.graph, d.features, d.labels, split, cfg).metrics.test_accuracy);
    }
    return out;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Outcome ac7_classification() {
    const double sym_h = mean(seed_accuracies(true, ModelKind::Sym, 1.0, 4.0));
    const double sym_x = mean(seed_accuracies(false, ModelKind::Sym, 1.0, 4.0));
    const double fa_x = mean(seed_accuracies(false, ModelKind::Fa, 1.0, 4.0));
    const bool ok = sym_h >= 0.90 && fa_x - sym_x >= 0.05;
    return {ok, "homophilic sym " + fmt("%.4f", sym_h) + " (>= 0.90); heterophilic fa " + fmt("%.4f", fa_x) +
                    " - sym " + fmt("%.4f", sym_x) + " = " + fmt("%.4f", fa_x - sym_x) + " (>= 0.05)"};
}

Outcome ac8_depth() {
    const double s4 = mean(seed_accuracies(true, ModelKind::Sym, 1.0, 4.0));
    const double s32 = mean(seed_accuracies(true, ModelKind::Sym, 1.0, 32.0));
    const double h4 = mean(seed_accuracies(true, ModelKind::Heat, 1.0, 4.0));
    const double h32 = mean(seed_accuracies(true, ModelKind::Heat, 1.0, 32.0));
    const bool ok = std::abs(s32 - s4) <= 0.03 && h4 - h32 > 0.10;
    return {ok, "sym T4 " + fmt("%.4f", s4) + " T32 " + fmt("%.4f", s32) + " |diff| " + fmt("%.4f", std::abs(s32 - s4)) +
                    " (<= 0.03); heat T4 " + fmt("%.4f", h4) + " T32 " + fmt("%.4f", h32) + " drop " +
                    fmt("%.4f", h4 - h32) + " (> 0.10)"};
}

Outcome ac9_tau_spread() {
    double lo = 1.0, hi = 0.0;
    std::string per;
    for (double tau : {0.2, 0.5, 1.0, 2.0, 5.0}) {
        const double m = mean(seed_accuracies(true, ModelKind::Sym, tau, 4.0));
        lo = std::min(lo, m);
        hi = std::max(hi, m);
        per += fmt(" %g:", tau) + fmt("%.4f", m);
    }
    return {hi - lo <= 0.05, "spread " + fmt("%.4f", hi - lo) + " (<= 0.05);" + per};
}

Outcome ac10_parameter_count() {
    Rng rng(derive_seed(0xAC, 10));
    std::uniform_int_distribution<std::size_t> fd(1, 40), dd(1, 32), cd(2, 10), kd(1, 16);
    int bad = 0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t f = fd(rng), d = dd(rng), c = cd(rng), k = kd(rng);
        for (ModelKind kind : {ModelKind::Sym, ModelKind::Fa, ModelKind::Heat}) {
            TrainConfig cfg;
            cfg.model = kind;
            cfg.hidden = d;
            cfg.tau = 0.5;
            cfg.terminal_time = 0.5 * static_cast<double>(k);
            const std::size_t formula = kind == ModelKind::Sym  ? 2 * f * d + d * c
                                        : kind == ModelKind::Fa ? 2 * f * d + (2 * d + 1) * k + d * c
                                                                : f * d + d * c;
            const ModelParams p = init_params(cfg, f, c);
            std::size_t enumerated = 0;
            p.for_each_group([&](std::string_view name, std::span<const double> v, bool) {
                if (!name.ends_with(".b")) enumerated += v.size();
            });
            if (count_parameters(cfg, f, c) != formula || enumerated != formula) ++bad;
        }
    }
    return {bad == 0, std::to_string(150 - bad) + "/150 (model, f, d, c, steps) cases agree"};
}

int run_cli(const std::string& args) {
    const int st = std::system((std::string("\"") + GWN_CLI_PATH + "\" " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome ac11_determinism() {
    const fs::path root = fs::temp_directory_path() / ("gwn_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    std::string detail;
    bool ok = true;
    for (const char* model : {"sym", "fa", "heat"}) {
        const std::string args = std::string("train --synth heterophilic --model ") + model +
                                 " --seeds 2 --dropout 0.3 --seed 11 --out ";
        const fs::path a = root / (std::string(model) + "_a"), b = root / (std::string(model) + "_b");
        if (run_cli(args + "\"" + a.string() + "\"") != 0 || run_cli(args + "\"" + b.string() + "\"") != 0) {
            ok = false;
            detail += std::string(model) + ": CLI failed; ";
            continue;
        }
        for (const char* f : {"metrics_seed0.json", "metrics_seed1.json", "summary.json"}) {
            const bool same = read_text(a / f) == read_text(b / f);
            ok = ok && same;
            if (!same) detail += std::string(model) + "/" + f + " differs; ";
        }
    }
    fs::remove_all(root);
    return {ok, ok ? "sym, fa, heat metrics byte-identical across reruns" : detail};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"AC1", "divergence form equals (D-A)X", 5.0, ac1_divergence_form},
        {"AC2", "wave-sym propagation equals companion power", 10.0, ac2_companion_power},
        {"AC3", "root locus modulus, Vieta product, K2 radius", 0.0, ac3_root_locus},
        {"AC4", "normalized spectrum bounds", 0.0, ac4_spectral_bounds},
        {"AC5", "analytic vs finite-difference gradients", 30.0, ac5_gradients},
        {"AC6", "Fourier round trip and Parseval", 0.0, ac6_fourier},
        {"AC7", "SBM classification and heterophily gap", 300.0, ac7_classification},
        {"AC8", "depth robustness vs heat baseline", 600.0, ac8_depth},
        {"AC9", "tau robustness", 0.0, ac9_tau_spread},
        {"AC10", "parameter accounting", 0.0, ac10_parameter_count},
        {"AC11", "CLI determinism", 0.0, ac11_determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = fmt("%.2fs", secs);
        if (c.budget_s > 0) {
            timing += fmt(" of %.0fs budget", c.budget_s);
            if (secs >= c.budget_s) {
                o.pass = false;
                timing += " EXCEEDED";
            }
        }
        if (!o.pass) ++failures;
        std::printf("%s %s: %s | %s [%s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), timing.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
