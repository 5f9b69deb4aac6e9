#include "kgnn/experiments.hpp"

#include "kgnn/coupling.hpp"
#include "kgnn/dynamics.hpp"
#include "kgnn/syncdiag.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

namespace kgnn {

Graph load_dataset(const std::string& source, bool lcc) {
    if (source.empty()) throw DatasetError("no dataset given (use --dataset PATH or synthetic:SPEC)");
    Graph g;
    const std::string prefix = "synthetic:";
    try {
        if (source.rfind(prefix, 0) == 0) g = generate_synthetic(parse_synthetic_spec(source.substr(prefix.size())));
        else g = load_bundle(source);
    } catch (const DatasetError&) {
        throw;
    } catch (const std::exception& e) {
        throw DatasetError("dataset '" + source + "': " + e.what());
    }
    if (lcc) g = largest_connected_component(g).graph;
    return g;
}

std::vector<NfeResult> nfe_compare(const Graph& g, const ModelParams& p, const SolverConfig& solver) {
    if (solver.method != SolverMethod::dopri5) throw InvalidInput("nfe_compare: solver must be dopri5");
    solver.validate();
    const OscillatorState x0 = encode(g, p);
    auto coupling = std::make_shared<const CouplingMatrix>(compute_attention(x0, p.attention, g));
    std::vector<NfeResult> out;
    for (DynamicsKind kind : {DynamicsKind::kuramoto, DynamicsKind::grand_linear}) {
        DynamicsSpec spec;
        spec.kind = kind;
        spec.coupling_strength = p.config.coupling_strength;
        spec.coupling = coupling;
        if (kind == DynamicsKind::kuramoto) spec.omega = x0;
        NfeResult r;
        r.dynamics = to_string(kind);
        try {
            const auto traj = integrate_dopri5(x0, [&spec](const OscillatorState& x) { return rhs_fast(x, spec); },
                                               solver);
            r.nfe = traj.nfe;
            r.accepted = traj.accepted;
            r.rejected = traj.rejected;
        } catch (const IntegrationError& e) {
            r.ok = false;
            r.error = e.what();
            r.nfe = solver.max_nfe;
        }
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct SweepPoint {
    DynamicsVariant variant;
    double K = 1.0;
    double T = 1.0;
    int per_class = 20;
};

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(10);
    return out;
}

constexpr const char* kResultsHeader =
    "schema_version,dataset,dynamics,K,T,dt,splits,seeds,mean_acc,std_acc,per_class,excluded_runs,"
    "max_pairwise,order_r,nfe_mean,wall_time_s\n";

TrainConfig point_config(const ExperimentConfig& cfg, const SweepPoint& pt) {
    TrainConfig t = cfg.train;
    t.model.dynamics = pt.variant.kind;
    t.model.coupling_strength = pt.K;
    t.model.T = pt.T;
    if (pt.variant.beta) {
        t.model.beta_init = *pt.variant.beta;
        t.model.learn_beta = false;
    }
    if (cfg.solver.method == SolverMethod::dopri5) {
        SolverConfig s = cfg.solver;
        s.T = pt.T;
        t.eval_solver = s;
    }
    return t;
}

void run_points(const ExperimentConfig& cfg, const std::vector<SweepPoint>& points, std::ostream& msg) {
    for (const auto& pt : points) {
        try {
            point_config(cfg, pt).validate();
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    }
    const Graph g = load_dataset(cfg.dataset, cfg.lcc);
    msg << "dataset " << (g.name().empty() ? cfg.dataset : g.name()) << ": n=" << g.num_nodes()
        << " edges=" << g.num_edges() << " f=" << g.feature_dim() << " c=" << g.num_classes() << '\n';
    std::filesystem::create_directories(cfg.out);
    write_effective_config(cfg, cfg.out);
    auto csv = open_csv(cfg.out / "results.csv");
    csv << kResultsHeader;

    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& pt = points[k];
        const auto start = Clock::now();
        SeededOptions opts = cfg.seeded;
        opts.per_class = pt.per_class;
        opts.log_dir = cfg.out / "logs" / ("point_" + std::to_string(k));
        const TrainConfig tc = point_config(cfg, pt);
        const SeededSummary s = run_seeded(g, tc, opts);
        const double wall = std::chrono::duration<double>(Clock::now() - start).count();

        std::string nfe;
        long nfe_sum = 0, nfe_count = 0;
        for (const auto& r : s.runs)
            if (r.ok && r.result.nfe) nfe_sum += *r.result.nfe, ++nfe_count;
        if (nfe_count) nfe = std::to_string(static_cast<double>(nfe_sum) / static_cast<double>(nfe_count));

        csv << kCsvSchemaVersion << ',' << (g.name().empty() ? cfg.dataset : g.name()) << ',' << pt.variant.label
            << ',' << pt.K << ',' << pt.T << ',' << tc.model.dt << ',' << opts.n_splits << ',' << opts.n_seeds
            << ',' << s.mean_acc << ',' << s.std_acc << ',' << pt.per_class << ',' << s.excluded << ','
            << s.max_pairwise << ',' << s.order_r << ',' << nfe << ',' << wall << '\n';
        csv.flush();
        msg << pt.variant.label << " K=" << pt.K << " T=" << pt.T << " per_class=" << pt.per_class
            << ": acc " << s.mean_acc << " +- " << s.std_acc << " (excluded " << s.excluded
            << ", max_pairwise " << s.max_pairwise << ")\n";
        for (const auto& r : s.runs)
            if (!r.ok) msg << "  run split=" << r.split << " seed=" << r.seed_index << " diverged: " << r.error << '\n';
    }
}

std::vector<DynamicsVariant> variants_or(const ExperimentConfig& cfg, std::vector<std::string> fallback) {
    if (!cfg.dynamics.empty()) return cfg.dynamics;
    std::vector<DynamicsVariant> out;
    for (const auto& f : fallback) out.push_back(parse_dynamics_variant(f));
    return out;
}

void require_axis(const ExperimentConfig& cfg, SweepAxis axis, const char* name) {
    if (cfg.sweep_axis && *cfg.sweep_axis != axis)
        throw ConfigError(std::string("sweep.axis: this command sweeps ") + name);
}

SweepPoint base_point(const ExperimentConfig& cfg, const DynamicsVariant& v) {
    return {v, cfg.train.model.coupling_strength, cfg.train.model.T, cfg.seeded.per_class};
}

}  // namespace

int cmd_run(const ExperimentConfig& cfg, std::ostream& msg) {
    std::vector<SweepPoint> points;
    for (const auto& v : variants_or(cfg, {to_string(cfg.train.model.dynamics)})) points.push_back(base_point(cfg, v));
    run_points(cfg, points, msg);
    return kExitOk;
}

int cmd_depth_sweep(const ExperimentConfig& cfg, std::ostream& msg) {
    require_axis(cfg, SweepAxis::T, "T");
    const auto values = cfg.sweep_values.empty() ? std::vector<double>{1, 4, 8, 16, 32, 64, 80, 100} : cfg.sweep_values;
    std::vector<SweepPoint> points;
    for (const auto& v : variants_or(cfg, {"kuramoto", "grand_linear", "grand_modified:beta=0"})) {
        for (double t : values) {
            auto pt = base_point(cfg, v);
            pt.T = t;
            points.push_back(pt);
        }
    }
    run_points(cfg, points, msg);
    return kExitOk;
}

int cmd_coupling_sweep(const ExperimentConfig& cfg, std::ostream& msg) {
    require_axis(cfg, SweepAxis::K, "K");
    const auto values =
        cfg.sweep_values.empty() ? std::vector<double>{0.4, 0.6, 0.8, 1, 1.5, 2, 3} : cfg.sweep_values;
    std::vector<SweepPoint> points;
    for (const auto& v : variants_or(cfg, {"kuramoto"})) {
        if (v.kind != DynamicsKind::kuramoto) throw ConfigError("model.dynamics: coupling-sweep requires kuramoto");
        for (double k : values) {
            auto pt = base_point(cfg, v);
            pt.K = k;
            points.push_back(pt);
        }
    }
    run_points(cfg, points, msg);
    return kExitOk;
}

int cmd_label_sweep(const ExperimentConfig& cfg, std::ostream& msg) {
    require_axis(cfg, SweepAxis::per_class, "per_class");
    const auto values = cfg.sweep_values.empty() ? std::vector<double>{1, 2, 5, 10, 20} : cfg.sweep_values;
    std::vector<SweepPoint> points;
    for (const auto& v : variants_or(cfg, {to_string(cfg.train.model.dynamics)})) {
        for (double pc : values) {
            if (pc < 1 || pc != std::floor(pc)) throw ConfigError("sweep.values: per_class values must be positive integers");
            auto pt = base_point(cfg, v);
            pt.per_class = static_cast<int>(pc);
            points.push_back(pt);
        }
    }
    run_points(cfg, points, msg);
    return kExitOk;
}

int cmd_nfe_compare(const ExperimentConfig& cfg, std::ostream& msg) {
    ModelConfig mc = cfg.train.model;
    try {
        mc.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    const Graph g = load_dataset(cfg.dataset, cfg.lcc);
    std::filesystem::create_directories(cfg.out);
    write_effective_config(cfg, cfg.out);
    const ModelParams p = ModelParams::initialize(mc, g.feature_dim(), std::max(g.num_classes(), 1), cfg.seeded.base_seed);

    auto csv = open_csv(cfg.out / "nfe.csv");
    csv << "schema_version,dataset,dynamics,K,T,rtol,atol,nfe,accepted,rejected,nfe_ratio,status\n";
    const auto tols = cfg.nfe_tolerances.empty() ? std::vector<double>{cfg.solver.rtol} : cfg.nfe_tolerances;
    for (double tol : tols) {
        SolverConfig s = cfg.solver;
        s.method = SolverMethod::dopri5;
        s.T = mc.T;
        // a tolerance list sets rtol = atol = tol; otherwise the solver section applies as given
        if (!cfg.nfe_tolerances.empty()) s.rtol = s.atol = tol;
        std::vector<NfeResult> rs;
        try {
            rs = nfe_compare(g, p, s);
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
        const double ratio = static_cast<double>(rs[0].nfe) / static_cast<double>(std::max(rs[1].nfe, 1L));
        for (const auto& r : rs) {
            csv << kCsvSchemaVersion << ',' << (g.name().empty() ? cfg.dataset : g.name()) << ',' << r.dynamics << ','
                << mc.coupling_strength << ',' << mc.T << ',' << s.rtol << ',' << s.atol << ',' << r.nfe << ','
                << r.accepted << ',' << r.rejected << ',' << ratio << ',' << (r.ok ? "ok" : "max_nfe_exceeded")
                << '\n';
            msg << r.dynamics << " rtol=" << s.rtol << " atol=" << s.atol << ": nfe " << r.nfe
                << (r.ok ? "" : " (" + r.error + ")") << '\n';
        }
        msg << "nfe ratio kuramoto/grand_linear = " << ratio << '\n';
    }
    return kExitOk;
}

int cmd_sync_demo(const ExperimentConfig& cfg, std::ostream& msg) {
    const auto& sc = cfg.sync;
    if (sc.channels < 1 || !(sc.T > 0) || !(sc.dt > 0) || sc.record_every < 1 || !(sc.omega_spread >= 0))
        throw ConfigError("sync: channels, T, dt, record_every must be positive and omega_spread >= 0");
    // a bare spec such as "ring:n=20" is shorthand for synthetic:ring:n=20
    std::string source = sc.graph;
    if (source.rfind("synthetic:", 0) != 0 && !std::filesystem::exists(source)) source = "synthetic:" + source;
    const Graph g = load_dataset(source, false).symmetrized();
    if (!is_weakly_connected(g)) msg << "warning: sync graph is not connected\n";
    auto coupling = std::make_shared<const CouplingMatrix>(uniform_coupling(g, true));
    std::filesystem::create_directories(cfg.out);
    write_effective_config(cfg, cfg.out);

    std::mt19937_64 rng(sc.seed);
    std::uniform_real_distribution<double> init(-sc.init_spread, sc.init_spread);
    std::uniform_real_distribution<double> freq(-sc.omega_spread, sc.omega_spread);
    OscillatorState x0(g.num_nodes(), sc.channels);
    for (Eigen::Index k = 0; k < x0.size(); ++k) x0.data()[k] = init(rng);
    NaturalFrequencies omega(g.num_nodes(), sc.channels);
    for (Eigen::Index k = 0; k < omega.size(); ++k) omega.data()[k] = freq(rng);

    struct Case {
        std::string name;
        DynamicsSpec spec;
    };
    std::vector<Case> cases(3);
    cases[0].name = "identical";
    cases[0].spec.kind = DynamicsKind::kuramoto_identical;
    cases[0].spec.coupling_strength = sc.K;
    cases[1].name = "distinct";
    cases[1].spec.kind = DynamicsKind::kuramoto;
    cases[1].spec.coupling_strength = sc.K;
    cases[1].spec.omega = omega;
    cases[2] = cases[1];
    cases[2].name = "distinct_strong";
    cases[2].spec.coupling_strength = sc.K_freq;
    for (auto& c : cases) c.spec.coupling = coupling;

    auto csv = open_csv(cfg.out / "sync.csv");
    csv << "schema_version,case,K,time,max_pairwise,order_r,energy_U,freq_residual\n";
    SolverConfig solver;
    solver.method = SolverMethod::euler;
    solver.dt = sc.dt;
    solver.T = sc.T;
    for (const auto& c : cases) {
        const auto traj = integrate(x0, [&c](const OscillatorState& x) { return rhs_fast(x, c.spec); }, solver, true);
        for (std::size_t s = 0; s < traj.states.size(); ++s) {
            if (s % static_cast<std::size_t>(sc.record_every) != 0 && s + 1 != traj.states.size()) continue;
            const auto rep = make_sync_report(traj.states[s], &c.spec);
            csv << kCsvSchemaVersion << ',' << c.name << ',' << c.spec.coupling_strength << ',' << traj.times[s] << ','
                << rep.max_pairwise << ',' << rep.r.mean() << ',' << energy_U(traj.states[s], *coupling).sum() << ','
                << *rep.freq_residual << '\n';
        }
        const auto fin = make_sync_report(traj.final_state(), &c.spec);
        msg << c.name << " (K=" << c.spec.coupling_strength << "): final max_pairwise " << fin.max_pairwise
            << ", energy U " << energy_U(traj.final_state(), *coupling).sum() << ", freq_residual "
            << *fin.freq_residual << '\n';
    }
    return kExitOk;
}

int cmd_make_bundle(const ExperimentConfig& cfg, std::ostream& msg) {
    const Graph g = load_dataset(cfg.dataset, cfg.lcc);
    save_bundle(g, cfg.out);
    msg << "wrote bundle with n=" << g.num_nodes() << " edges=" << g.num_edges() << " to " << cfg.out.string() << '\n';
    return kExitOk;
}

int run_command(const std::string& verb, const ExperimentConfig& cfg, std::ostream& msg) {
    try {
        if (verb == "run") return cmd_run(cfg, msg);
        if (verb == "depth-sweep") return cmd_depth_sweep(cfg, msg);
        if (verb == "coupling-sweep") return cmd_coupling_sweep(cfg, msg);
        if (verb == "label-sweep") return cmd_label_sweep(cfg, msg);
        if (verb == "nfe-compare") return cmd_nfe_compare(cfg, msg);
        if (verb == "sync-demo") return cmd_sync_demo(cfg, msg);
        if (verb == "make-bundle") return cmd_make_bundle(cfg, msg);
        msg << "error: unknown command '" << verb << "'\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        msg << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DatasetError& e) {
        msg << "dataset error: " << e.what() << '\n';
        return kExitDataset;
    } catch (const std::exception& e) {
        msg << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace kgnn
