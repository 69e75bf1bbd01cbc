// gwn: batch front end for training, stability scans, spectra, wave traces
// and synthetic data.
//
// Exit codes: 0 success, 1 runtime failure, 2 flag or usage error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwn/graph.hpp"
#include "gwn/io.hpp"
#include "gwn/operators.hpp"
#include "gwn/propagation.hpp"
#include "gwn/random.hpp"
#include "gwn/spectral.hpp"
#include "gwn/stability.hpp"
#include "gwn/training.hpp"

namespace {

using namespace gwn;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Flag values that parse but do not make sense together.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Data sources

const char* const kSynthHelp =
    "Synthetic SBM: a preset (homophilic, heterophilic) and/or comma-separated key=value overrides "
    "with keys blocks, per_block, p_intra, p_inter, dim, noise, seed. "
    "Example: homophilic,seed=3 or blocks=1,per_block=2,p_intra=1,p_inter=0,dim=1";

SbmConfig parse_synth_option(const std::string& text, std::uint64_t fallback_seed) {
    SbmConfig cfg;
    cfg.seed = fallback_seed;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        if (item == "homophilic") {
            cfg.p_intra = 0.1;
            cfg.p_inter = 0.01;
            continue;
        }
        if (item == "heterophilic") {
            cfg.p_intra = 0.01;
            cfg.p_inter = 0.1;
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("--synth: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
        try {
            std::size_t used = 0;
            auto as_count = [&] {
                const long long v = std::stoll(value, &used);
                if (v < 0) throw std::invalid_argument("negative");
                return static_cast<std::size_t>(v);
            };
            if (key == "blocks") cfg.num_blocks = as_count();
            else if (key == "per_block") cfg.nodes_per_block = as_count();
            else if (key == "dim") cfg.feature_dim = as_count();
            else if (key == "seed") cfg.seed = std::stoull(value, &used);
            else if (key == "p_intra") cfg.p_intra = std::stod(value, &used);
            else if (key == "p_inter") cfg.p_inter = std::stod(value, &used);
            else if (key == "noise") cfg.feature_noise = std::stod(value, &used);
            else throw UsageError("--synth: unknown key '" + key + "'");
            if (used != value.size()) throw std::invalid_argument("trailing characters");
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception&) {
            throw UsageError("--synth: bad value for '" + key + "': '" + value + "'");
        }
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--synth: ") + e.what());
    }
    return cfg;
}

struct DataSource {
    std::string data_dir;
    std::string synth;

    void add_to(CLI::App& app) {
        auto* d = app.add_option("--data", data_dir, "Dataset directory with edges.txt, features.csv, labels.txt");
        auto* s = app.add_option("--synth", synth, kSynthHelp);
        d->excludes(s);
    }

    DatasetBundle load(std::uint64_t seed) const {
        if (data_dir.empty() && synth.empty()) throw UsageError("one of --data or --synth is required");
        if (!data_dir.empty()) return load_dataset(data_dir);
        const SbmConfig cfg = parse_synth_option(synth, derive_seed(seed, 0xDA7A));
        auto s = generate_sbm(cfg);
        return DatasetBundle{std::move(s.graph), std::move(s.features), std::move(s.labels), "synth"};
    }
};

std::vector<double> parse_real_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw UsageError(std::string(flag) + ": cannot parse '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
    return out;
}

std::string short_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    DataSource source;
    std::string model;
    double tau = 1.0;
    double terminal_time = 4.0;
    std::size_t hidden = 16;
    double lr = TrainConfig{}.learning_rate;
    double wd = TrainConfig{}.weight_decay;
    double dropout = 0.0;
    std::size_t epochs = 200;
    std::size_t patience = 10;
    std::size_t seeds = 1;
    std::string split = "0.6,0.2";
    std::string heat_mode = "diffusion";
    std::string out;
    std::uint64_t seed = 0;
    bool timing = false;
    bool save_params = false;
    bool export_attention = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
    a.source.add_to(app);
    app.add_option("--model", a.model, "Backbone: sym, fa or heat")
        ->required()
        ->check(CLI::IsMember({"sym", "fa", "heat"}));
    app.add_option("--tau", a.tau, "Time step length")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--T", a.terminal_time, "Terminal time; steps = round(T/tau)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--hidden", a.hidden, "Hidden dimension d")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lr", a.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--wd", a.wd, "L2 weight decay")->check(CLI::NonNegativeNumber)->capture_default_str();
    app.add_option("--dropout", a.dropout, "Input dropout rate in [0,1)")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    app.add_option("--epochs", a.epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--patience", a.patience, "Early-stop window (0 disables)")->capture_default_str();
    app.add_option("--seeds", a.seeds, "Number of seeded runs")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--split", a.split, "Train,validation fractions; the rest is test")->capture_default_str();
    app.add_option("--heat-mode", a.heat_mode, "Heat backbone form: diffusion or literal")
        ->check(CLI::IsMember({"diffusion", "literal"}))
        ->capture_default_str();
    app.add_option("--seed", a.seed, "Base seed for every random choice")->capture_default_str();
    app.add_option("--out", a.out, "Output directory")->required();
    app.add_flag("--timing", a.timing, "Record wall-clock seconds (makes metrics non-reproducible)");
    app.add_flag("--save-params", a.save_params, "Write the best parameters of each run as JSON");
    app.add_flag("--export-attention", a.export_attention, "fa only: write per-arc attention of each run as CSV");
}

int run_train(const TrainArgs& a) {
    const auto fr = parse_real_list(a.split, "--split");
    if (fr.size() != 2) throw UsageError("--split: expected two fractions, e.g. 0.6,0.2");
    if (!(fr[0] > 0 && fr[1] > 0 && fr[0] + fr[1] < 1)) throw UsageError("--split: fractions must be positive with sum < 1");
    if (a.export_attention && a.model != "fa") throw UsageError("--export-attention requires --model fa");

    TrainConfig base;
    base.model = parse_model_kind(a.model);
    base.tau = a.tau;
    base.terminal_time = a.terminal_time;
    base.hidden = a.hidden;
    base.learning_rate = a.lr;
    base.weight_decay = a.wd;
    base.dropout = a.dropout;
    base.max_epochs = a.epochs;
    base.patience = a.patience;
    base.heat_mode = a.heat_mode == "literal" ? HeatMode::Literal : HeatMode::Diffusion;
    base.seed = a.seed;

    const DatasetBundle data = a.source.load(a.seed);
    const fs::path out(a.out);
    std::vector<double> accs;
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t k = 0; k < a.seeds; ++k) {
        const DataSplit split = random_split(data.graph.num_nodes(), fr[0], fr[1], derive_seed(a.seed, 2 * k + 1));
        TrainConfig cfg = base;
        cfg.seed = derive_seed(a.seed, 2 * k + 2);
        const TrainResult r = train(data.graph, data.features, data.labels, split, cfg, {a.timing});
        const std::string tag = "seed" + std::to_string(k);
        write_metrics(out / ("metrics_" + tag + ".json"), r.metrics, cfg);
        if (a.save_params) write_json(out / ("params_" + tag + ".json"), to_json(r.params));
        if (a.export_attention) {
            const auto ex = gwn::export_attention(r.params, data.graph, data.features, cfg);
            write_csv(out / ("attention_" + tag + ".csv"), ex.table);
        }
        accs.push_back(r.metrics.test_accuracy);
        runs.push_back({{"run", k}, {"seed", cfg.seed}, {"test_accuracy", r.metrics.test_accuracy},
                        {"best_epoch", r.metrics.best_epoch}, {"epochs_run", r.metrics.per_epoch.size()}});
        std::cout << "run " << k << ": test_accuracy " << format_double(r.metrics.test_accuracy) << "\n";
    }

    double mean = 0.0;
    for (double v : accs) mean += v;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double v : accs) var += (v - mean) * (v - mean);
    const double stdev = std::sqrt(var / static_cast<double>(accs.size()));
    TrainConfig echo = base;
    nlohmann::json summary{{"dataset", data.name},
                           {"num_nodes", data.graph.num_nodes()},
                           {"config", to_json(echo)},
                           {"split", fr},
                           {"seeds", a.seeds},
                           {"test_accuracy", {{"mean", mean}, {"std", stdev}}},
                           {"runs", std::move(runs)}};
    write_json(out / "summary.json", summary);
    std::cout << "test_accuracy mean " << format_double(mean) << " std " << format_double(stdev) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// stability

struct StabilityArgs {
    DataSource source;
    std::string model = "sym";
    std::string tau_list = "0.2,0.5,1.0,2.0,5.0";
    std::size_t steps = 50;
    double eps = 0.5;
    std::string out;
    std::uint64_t seed = 0;
};

void add_stability(CLI::App& app, StabilityArgs& a) {
    a.source.add_to(app);
    app.add_option("--model", a.model, "Operator: sym (normalized adjacency) or fa (eps I + alpha * it)")
        ->check(CLI::IsMember({"sym", "fa"}))
        ->capture_default_str();
    app.add_option("--tau-list", a.tau_list, "Comma-separated time steps")->capture_default_str();
    app.add_option("--steps", a.steps, "Iterations per scan")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--eps", a.eps, "fa only: residual weight used as the spectral shift")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--seed", a.seed, "Seed for the initial state and fa attention vector")->capture_default_str();
    app.add_option("--out", a.out, "Output directory")->required();
}

int run_stability(const StabilityArgs& a) {
    const auto taus = parse_real_list(a.tau_list, "--tau-list");
    for (double t : taus)
        if (!(t > 0)) throw UsageError("--tau-list: every tau must be positive");
    const DatasetBundle data = a.source.load(a.seed);
    std::optional<Operator> op;
    if (a.model == "sym") {
        op.emplace(build_sym_norm(data.graph));
    } else {
        Rng rng(derive_seed(a.seed, 0xA77));
        AttentionParams g{std::vector<double>(2 * data.features.cols())};
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(g.g.size())));
        for (double& v : g.g) v = nd(rng);
        op.emplace(build_freq_adaptive(data.graph, compute_attention(data.graph, data.features, g)).with_shift(a.eps));
    }
    const auto reports = growth_scan(*op, taus, a.steps, a.seed);
    const fs::path out(a.out);
    std::string csv = "tau,eig_min,eig_max,rho,growth_constant,verdict\n";
    for (const auto& r : reports) {
        write_json(out / ("stability_tau" + short_real(r.tau) + ".json"), to_json(r));
        csv += format_double(r.tau) + ',' + format_double(r.eig_min) + ',' + format_double(r.eig_max) + ',' +
               format_double(r.rho) + ',' + format_double(r.growth_constant) + ',' + to_string(r.verdict) + '\n';
        std::cout << "tau " << short_real(r.tau) << ": rho " << format_double(r.rho) << " " << to_string(r.verdict)
                  << "\n";
    }
    write_text(out / "summary.csv", csv);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// spectrum

struct SpectrumArgs {
    DataSource source;
    std::optional<std::size_t> channel;
    std::string filter = "one";
    std::string op = "sym-norm";
    std::size_t cap = kDenseNodeCap;
    std::string out;
    std::uint64_t seed = 0;
};

void add_spectrum(CLI::App& app, SpectrumArgs& a) {
    a.source.add_to(app);
    app.add_option("--channel", a.channel, "Feature column to transform (default: all)");
    app.add_option("--filter", a.filter, "Spectral filter: identity or one")
        ->check(CLI::IsMember({"identity", "one"}))
        ->capture_default_str();
    app.add_option("--operator", a.op, "Operator to decompose: sym-norm, laplacian-sym or combinatorial")
        ->check(CLI::IsMember({"sym-norm", "laplacian-sym", "combinatorial"}))
        ->capture_default_str();
    app.add_option("--cap", a.cap, "Largest N for the dense eigensolve")->capture_default_str();
    app.add_option("--seed", a.seed, "Seed for --synth data")->capture_default_str();
    app.add_option("--out", a.out, "Output CSV file")->required();
}

int run_spectrum(const SpectrumArgs& a) {
    const DatasetBundle data = a.source.load(a.seed);
    const Graph& g = data.graph;
    const Operator op = a.op == "sym-norm"        ? build_sym_norm(g)
                        : a.op == "laplacian-sym" ? build_laplacian_sym(g)
                                                  : build_combinatorial(g);
    FeatureMatrix x = data.features;
    if (a.channel) {
        if (*a.channel >= x.cols())
            throw UsageError("--channel " + std::to_string(*a.channel) + " out of range (features have " +
                             std::to_string(x.cols()) + " columns)");
        FeatureMatrix one(x.rows(), 1);
        for (std::size_t i = 0; i < x.rows(); ++i) one(i, 0) = x(i, *a.channel);
        x = std::move(one);
    }
    const auto ed = dense_eigensolve(op, a.cap);
    const FilterFn f = a.filter == "identity" ? FilterFn::identity() : FilterFn::one();
    write_csv(a.out, spectrum_table(export_spectrum(ed, x, f)));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// wave-trace

struct TraceArgs {
    DataSource source;
    std::string model = "sym";
    double tau = 1.0;
    double terminal_time = 4.0;
    std::size_t hidden = 16;
    std::string params;
    bool no_velocity = false;
    std::string out;
    std::uint64_t seed = 0;
};

void add_trace(CLI::App& app, TraceArgs& a) {
    a.source.add_to(app);
    app.add_option("--model", a.model, "Backbone: sym or fa")
        ->check(CLI::IsMember({"sym", "fa"}))
        ->capture_default_str();
    app.add_option("--tau", a.tau, "Time step length")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--T", a.terminal_time, "Terminal time")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--hidden", a.hidden, "Hidden dimension for random parameters")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--params", a.params, "Parameter checkpoint written by train --save-params");
    app.add_flag("--no-velocity", a.no_velocity, "Zero the velocity encoder so the wave starts at rest");
    app.add_option("--seed", a.seed, "Seed for random parameters and --synth data")->capture_default_str();
    app.add_option("--out", a.out, "Output CSV file")->required();
}

int run_trace(const TraceArgs& a) {
    const DatasetBundle data = a.source.load(a.seed);
    TrainConfig cfg;
    cfg.model = parse_model_kind(a.model);
    cfg.tau = a.tau;
    cfg.terminal_time = a.terminal_time;
    cfg.hidden = a.hidden;
    cfg.seed = a.seed;
    ModelParams p;
    if (!a.params.empty()) {
        p = params_from_json(read_json(a.params));
        if (p.kind != cfg.model) throw UsageError("--params holds a " + std::string(to_string(p.kind)) + " model");
        cfg.hidden = p.enc0.out();
    } else {
        p = init_params(cfg, data.features.cols(), data.labels.num_classes);
    }
    if (a.no_velocity) {
        p.enc1.w.fill(0.0);
        std::fill(p.enc1.b.begin(), p.enc1.b.end(), 0.0);
    }
    const ForwardCache c = forward(p, data.graph, data.features, cfg);
    write_csv(a.out, trace_table(trace_from_cache(c)));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    SbmConfig cfg;
    std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    app.add_option("--blocks", a.cfg.num_blocks, "Number of blocks (classes)")->capture_default_str();
    app.add_option("--per-block", a.cfg.nodes_per_block, "Nodes per block")->capture_default_str();
    app.add_option("--p-intra", a.cfg.p_intra, "Edge probability inside a block")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--p-inter", a.cfg.p_inter, "Edge probability across blocks")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--dim", a.cfg.feature_dim, "Feature dimension (>= blocks)")->capture_default_str();
    app.add_option("--noise", a.cfg.feature_noise, "Gaussian feature noise scale")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--seed", a.cfg.seed, "Generator seed")->capture_default_str();
    app.add_option("--out", a.out, "Output dataset directory")->required();
}

int run_synth(const SynthArgs& a) {
    try {
        a.cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto s = generate_sbm(a.cfg);
    save_dataset(a.out, s.graph, s.features, s.labels);
    std::cout << "wrote " << s.graph.num_nodes() << " nodes, " << s.graph.num_edges() << " edges, "
              << connected_components(s.graph).second << " components to " << a.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph wave networks: training, stability and spectral tools"};
    app.require_subcommand(1);

    TrainArgs train_args;
    StabilityArgs stability_args;
    SpectrumArgs spectrum_args;
    TraceArgs trace_args;
    SynthArgs synth_args;
    auto* train_cmd = app.add_subcommand("train", "Train seeded runs and write metrics plus a mean/std summary");
    auto* stability_cmd = app.add_subcommand("stability", "Companion spectral radius and growth scan per tau");
    auto* spectrum_cmd = app.add_subcommand("spectrum", "Graph Fourier spectrum of node features as CSV");
    auto* trace_cmd = app.add_subcommand("wave-trace", "Per-step per-node feature norms of one forward pass");
    auto* synth_cmd = app.add_subcommand("synth", "Write a stochastic block model dataset");
    add_train(*train_cmd, train_args);
    add_stability(*stability_cmd, stability_args);
    add_spectrum(*spectrum_cmd, spectrum_args);
    add_trace(*trace_cmd, trace_args);
    add_synth(*synth_cmd, synth_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        if (active == train_cmd) return run_train(train_args);
        if (active == stability_cmd) return run_stability(stability_args);
        if (active == spectrum_cmd) return run_spectrum(spectrum_args);
        if (active == trace_cmd) return run_trace(trace_args);
        return run_synth(synth_args);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << active->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
