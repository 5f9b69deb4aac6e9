#include "kgnn/train.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

namespace kgnn {

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
    throw InvalidInput("unknown optimizer '" + name + "' (expected adam or sgd_momentum)");
}

void TrainConfig::validate() const {
    model.validate();
    if (max_epochs < 0) throw InvalidInput("train: max_epochs must be >= 0");
    // a zero rate is allowed and leaves the parameters untouched
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw InvalidInput("train: learning rate must be finite and >= 0");
    if (!(weight_decay >= 0.0)) throw InvalidInput("train: weight decay must be >= 0");
    if (patience < 1) throw InvalidInput("train: patience must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("train: dropout must be in [0, 1)");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("train: momentum must be in [0, 1)");
    if (eval_solver) eval_solver->validate();
}

namespace {

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const ModelParams& like)
        : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

    void step(ModelParams& p, ModelGrads& grads) {
        ++t_;
        auto pb = p.blocks();
        auto gb = grads.blocks();
        auto mb = m_.blocks();
        auto vb = v_.blocks();
        const double lr = cfg_.learning_rate;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t k = 0; k < pb.size(); ++k) {
            if (!pb[k].trainable) continue;
            auto w = pb[k].value->array();
            auto g = gb[k].value->array();
            if (cfg_.weight_decay > 0.0) g += cfg_.weight_decay * w;
            auto m = mb[k].value->array();
            if (cfg_.optimizer == OptimizerKind::adam) {
                auto v = vb[k].value->array();
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g.square();
                w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            } else {
                m = cfg_.momentum * m + g;
                w -= lr * m;
            }
        }
    }

private:
    const TrainConfig& cfg_;
    ModelParams m_;
    ModelParams v_;
    long t_ = 0;
};

Matrix sample_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    Matrix mask(rows, cols);
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = keep(rng) ? scale : 0.0;
    return mask;
}

}  // namespace

TrainOutcome train_node_classifier(const Graph& g, const SplitSpec& split, const TrainConfig& cfg,
                                   std::ostream* log) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(g.num_nodes());
    if (split.train_mask.size() != n || split.val_mask.size() != n || split.test_mask.size() != n)
        throw InvalidInput("train: split masks do not match the graph");
    const auto start = std::chrono::steady_clock::now();

    ModelParams params = ModelParams::initialize(cfg.model, g.feature_dim(), g.num_classes(), cfg.seed);
    Optimizer opt(cfg, params);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainOutcome out;
    out.params = params;
    bool have_best = false;
    int since_best = 0;
    const auto& labels = g.labels();

    auto score = [&](const ModelParams& p, int epoch) {
        UnrollTape tape;
        try {
            tape = forward(g, p);
        } catch (const IntegrationError& e) {
            throw DivergenceError(std::string("evaluation: ") + e.what(), epoch);
        }
        return tape;
    };

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Matrix mask;
        ForwardOptions fo;
        if (cfg.dropout > 0.0) {
            mask = sample_dropout_mask(g.num_nodes(), cfg.model.hidden_dim, cfg.dropout, rng);
            fo.dropout_mask = &mask;
        }
        UnrollTape tape;
        try {
            tape = forward(g, params, fo);
        } catch (const IntegrationError& e) {
            throw DivergenceError(e.what(), epoch);
        }
        const double train_loss = cross_entropy(tape.logits, labels, split.train_mask);
        if (!std::isfinite(train_loss)) throw DivergenceError("training loss is not finite", epoch);
        ModelGrads grads = backward(g, params, tape, cross_entropy_grad(tape.logits, labels, split.train_mask));
        opt.step(params, grads);

        const UnrollTape eval = score(params, epoch);
        const double val_acc = accuracy(eval.logits, labels, split.val_mask);
        const double val_loss = cross_entropy(eval.logits, labels, split.val_mask);
        if (!std::isfinite(val_loss)) throw DivergenceError("validation loss is not finite", epoch);
        if (log) {
            *log << nlohmann::json{{"epoch", epoch}, {"train_loss", train_loss}, {"val_acc", val_acc}}.dump()
                 << '\n';
        }
        out.result.epochs_run = epoch;

        const bool better = !have_best || val_acc > out.result.best_val_acc ||
                            (val_acc == out.result.best_val_acc && val_loss < out.result.best_val_loss);
        if (better) {
            have_best = true;
            since_best = 0;
            out.params = params;
            out.result.best_val_acc = val_acc;
            out.result.best_val_loss = val_loss;
            out.result.best_epoch = epoch;
            out.result.test_acc_at_best_val = accuracy(eval.logits, labels, split.test_mask);
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    const UnrollTape best = score(out.params, out.result.epochs_run);
    if (!have_best) {
        out.result.best_val_acc = accuracy(best.logits, labels, split.val_mask);
        out.result.best_val_loss = cross_entropy(best.logits, labels, split.val_mask);
        out.result.test_acc_at_best_val = accuracy(best.logits, labels, split.test_mask);
    }
    out.result.sync = make_sync_report(best.final_state);
    if (cfg.eval_solver && cfg.eval_solver->method == SolverMethod::dopri5)
        out.result.nfe = infer(g, out.params, *cfg.eval_solver).trajectory.nfe;

    out.result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) {
        nlohmann::json fin{{"test_acc", out.result.test_acc_at_best_val}, {"nfe_if_adaptive", nullptr}};
        if (out.result.nfe) fin["nfe_if_adaptive"] = *out.result.nfe;
        *log << fin.dump() << '\n';
    }
    return out;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

SeededSummary run_seeded(const Graph& g, const TrainConfig& cfg, const SeededOptions& opts) {
    if (opts.n_splits < 1 || opts.n_seeds < 1) throw InvalidInput("run_seeded: splits and seeds must be >= 1");
    cfg.validate();
    std::vector<SplitSpec> splits;
    for (int s = 0; s < opts.n_splits; ++s)
        splits.push_back(make_split(g, opts.per_class, opts.val, opts.base_seed + static_cast<std::uint64_t>(s)));
    if (opts.log_dir) std::filesystem::create_directories(*opts.log_dir);

    const int total = opts.n_splits * opts.n_seeds;
    SeededSummary summary;
    summary.runs.resize(static_cast<std::size_t>(total));
    std::atomic<int> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;

    auto worker = [&] {
        for (int r = next++; r < total; r = next++) {
            RunRecord& rec = summary.runs[static_cast<std::size_t>(r)];
            rec.split = r / opts.n_seeds;
            rec.seed_index = r % opts.n_seeds;
            TrainConfig run_cfg = cfg;
            run_cfg.seed = opts.base_seed + static_cast<std::uint64_t>(r);
            std::ofstream log_file;
            if (opts.log_dir) {
                log_file.open(*opts.log_dir / ("run_" + std::to_string(rec.split) + "_" +
                                               std::to_string(rec.seed_index) + ".jsonl"));
            }
            try {
                rec.result = train_node_classifier(g, splits[static_cast<std::size_t>(rec.split)], run_cfg,
                                                   log_file.is_open() ? &log_file : nullptr).result;
                rec.ok = true;
            } catch (const DivergenceError& e) {
                rec.error = e.what();
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int nw = std::max(1, std::min(opts.workers, total));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    }

    if (failure) std::rethrow_exception(failure);

    // deterministic fold in run-index order
    std::vector<double> accs;
    for (const auto& rec : summary.runs) {
        if (!rec.ok) {
            ++summary.excluded;
            continue;
        }
        accs.push_back(rec.result.test_acc_at_best_val);
        summary.max_pairwise += rec.result.sync.max_pairwise;
        summary.order_r += rec.result.sync.r.size() ? rec.result.sync.r.mean() : 0.0;
    }
    if (!accs.empty()) {
        summary.max_pairwise /= static_cast<double>(accs.size());
        summary.order_r /= static_cast<double>(accs.size());
    }
    std::tie(summary.mean_acc, summary.std_acc) = mean_std(accs);
    return summary;
}

}  // namespace kgnn
