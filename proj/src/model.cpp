#include "kgnn/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace kgnn {

using json = nlohmann::json;

long ModelConfig::steps() const {
    if (T <= 0.0) return 0;
    return std::max(1L, std::lround(T / dt));
}

double ModelConfig::step_size() const {
    const long m = steps();
    return m == 0 ? 0.0 : T / static_cast<double>(m);
}

void ModelConfig::validate() const {
    if (hidden_dim < 1) throw InvalidInput("model: hidden_dim must be >= 1");
    if (heads < 1) throw InvalidInput("model: heads must be >= 1");
    if (key_dim < 1) throw InvalidInput("model: key_dim must be >= 1");
    if (!(coupling_strength >= 0.0) || !std::isfinite(coupling_strength))
        throw InvalidInput("model: K must be finite and >= 0");
    if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidInput("model: T must be finite and >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("model: dt must be > 0");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
}

bool uses_omega(DynamicsKind k) { return k == DynamicsKind::kuramoto; }

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, int feature_dim, int num_classes,
                                    std::uint64_t seed) {
    config.validate();
    if (feature_dim < 1) throw InvalidInput("model: feature_dim must be >= 1");
    if (num_classes < 1) throw InvalidInput("model: num_classes must be >= 1");
    const int d = config.hidden_dim;
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.config = config;

    const double enc_bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    p.enc_W.resize(d, feature_dim);
    p.enc_b.resize(1, d);
    fill_uniform(p.enc_W, enc_bound, rng);
    fill_uniform(p.enc_b, enc_bound, rng);
    if (!config.tie_omega) {
        p.omega_W.resize(d, feature_dim);
        p.omega_b.resize(1, d);
        fill_uniform(p.omega_W, enc_bound, rng);
        fill_uniform(p.omega_b, enc_bound, rng);
    }

    const double attn_bound = 1.0 / std::sqrt(static_cast<double>(d));
    p.attention.scale = config.attention_scale;
    for (int l = 0; l < config.heads; ++l) {
        AttentionHead h{Matrix(config.key_dim, d), Matrix(config.key_dim, d)};
        fill_uniform(h.key, attn_bound, rng);
        fill_uniform(h.query, attn_bound, rng);
        p.attention.heads.push_back(std::move(h));
    }

    p.dec_W.resize(num_classes, d);
    p.dec_b.resize(1, num_classes);
    fill_uniform(p.dec_W, attn_bound, rng);
    fill_uniform(p.dec_b, attn_bound, rng);
    p.grand_alpha = Matrix::Ones(1, 1);
    p.grand_beta = Matrix::Constant(1, 1, config.beta_init);
    return p;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto& b : z.blocks()) b.value->setZero();
    return z;
}

std::vector<ParamBlock> ModelParams::blocks() {
    const bool grand_mod = config.dynamics == DynamicsKind::grand_modified;
    std::vector<ParamBlock> out{{"enc_W", &enc_W, true}, {"enc_b", &enc_b, true}};
    if (!config.tie_omega) {
        const bool t = uses_omega(config.dynamics);
        out.push_back({"omega_W", &omega_W, t});
        out.push_back({"omega_b", &omega_b, t});
    }
    for (std::size_t l = 0; l < attention.heads.size(); ++l) {
        out.push_back({"attn." + std::to_string(l) + ".key", &attention.heads[l].key, true});
        out.push_back({"attn." + std::to_string(l) + ".query", &attention.heads[l].query, true});
    }
    out.push_back({"dec_W", &dec_W, true});
    out.push_back({"dec_b", &dec_b, true});
    out.push_back({"grand_alpha", &grand_alpha, grand_mod});
    out.push_back({"grand_beta", &grand_beta, grand_mod && config.learn_beta});
    return out;
}

std::vector<ConstParamBlock> ModelParams::blocks() const {
    auto mutable_blocks = const_cast<ModelParams*>(this)->blocks();
    std::vector<ConstParamBlock> out;
    out.reserve(mutable_blocks.size());
    for (const auto& b : mutable_blocks) out.push_back({b.name, b.value, b.trainable});
    return out;
}

std::size_t ModelParams::num_scalars() const {
    std::size_t s = 0;
    for (const auto& b : blocks()) s += static_cast<std::size_t>(b.value->size());
    return s;
}

namespace {

json config_to_json(const ModelConfig& c) {
    return {{"dynamics", to_string(c.dynamics)},
            {"hidden_dim", c.hidden_dim},
            {"heads", c.heads},
            {"key_dim", c.key_dim},
            {"attention_scale", c.attention_scale == AttentionScale::dk ? "dk" : "sqrt_dk"},
            {"K", c.coupling_strength},
            {"T", c.T},
            {"dt", c.dt},
            {"tie_omega", c.tie_omega},
            {"learn_beta", c.learn_beta},
            {"beta_init", c.beta_init}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.dynamics = parse_dynamics_kind(j.at("dynamics").get<std::string>());
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.key_dim = j.at("key_dim").get<int>();
    const auto scale = j.at("attention_scale").get<std::string>();
    if (scale == "dk") c.attention_scale = AttentionScale::dk;
    else if (scale == "sqrt_dk") c.attention_scale = AttentionScale::sqrt_dk;
    else throw IoError("checkpoint: unknown attention_scale '" + scale + "'");
    c.coupling_strength = j.at("K").get<double>();
    c.T = j.at("T").get<double>();
    c.dt = j.at("dt").get<double>();
    c.tie_omega = j.at("tie_omega").get<bool>();
    c.learn_beta = j.at("learn_beta").get<bool>();
    c.beta_init = j.at("beta_init").get<double>();
    return c;
}

}  // namespace

void ModelParams::save(const std::filesystem::path& path) const {
    json arrays = json::object();
    for (const auto& b : blocks()) {
        const Matrix& m = *b.value;
        arrays[b.name] = {{"shape", {m.rows(), m.cols()}},
                          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
    }
    const json doc = {{"format", "kgnn-model"},
                      {"version", 1},
                      {"config", config_to_json(config)},
                      {"arrays", arrays}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump();
    if (!out) throw IoError("write failed: " + path.string());
}

ModelParams ModelParams::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json doc;
    try {
        in >> doc;
        if (doc.at("format") != "kgnn-model" || doc.at("version") != 1)
            throw IoError("checkpoint: unsupported format in " + path.string());
        ModelParams p;
        p.config = config_from_json(doc.at("config"));
        p.config.validate();
        p.attention.scale = p.config.attention_scale;
        p.attention.heads.resize(static_cast<std::size_t>(p.config.heads));
        const auto& arrays = doc.at("arrays");
        for (auto& b : p.blocks()) {
            const auto& a = arrays.at(b.name);
            const auto rows = a.at("shape").at(0).get<Eigen::Index>();
            const auto cols = a.at("shape").at(1).get<Eigen::Index>();
            const auto data = a.at("data").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(data.size()) != rows * cols)
                throw IoError("checkpoint: array '" + b.name + "' size does not match its shape");
            b.value->resize(rows, cols);
            std::copy(data.begin(), data.end(), b.value->data());
        }
        p.attention.validate();
        return p;
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Forward

namespace {

/// V W^T + b, through the sparse copy of V when one exists.
Matrix affine_features(const Graph& g, const Matrix& w, const Matrix& b) {
    if (w.cols() != g.feature_dim())
        throw InvalidInput("encoder expects " + std::to_string(w.cols()) + " features, graph has " +
                           std::to_string(g.feature_dim()));
    Matrix out = g.sparse_features() ? Matrix(*g.sparse_features() * w.transpose())
                                     : Matrix(g.features() * w.transpose());
    out.rowwise() += b.row(0);
    return out;
}

/// g^T V for the encoder weight gradient.
Matrix affine_weight_grad(const Graph& g, const Matrix& grad_out) {
    if (g.sparse_features()) return Matrix(grad_out.transpose() * *g.sparse_features());
    return grad_out.transpose() * g.features();
}

Matrix decode(const Matrix& x, const ModelParams& p) {
    Matrix logits = x * p.dec_W.transpose();
    logits.rowwise() += p.dec_b.row(0);
    return logits;
}

void check_params(const Graph& g, const ModelParams& p) {
    p.config.validate();
    const auto d = p.config.hidden_dim;
    if (p.enc_W.rows() != d || p.enc_b.cols() != d || p.dec_W.cols() != d)
        throw InvalidInput("model: parameter shapes disagree with hidden_dim");
    if (p.dec_W.rows() != p.dec_b.cols()) throw InvalidInput("model: decoder weight/bias mismatch");
    if (g.num_classes() > 0 && p.dec_W.rows() != g.num_classes())
        throw InvalidInput("model: decoder has " + std::to_string(p.dec_W.rows()) +
                           " classes, graph has " + std::to_string(g.num_classes()));
    if (!p.config.tie_omega && uses_omega(p.config.dynamics) &&
        (p.omega_W.rows() != d || p.omega_b.cols() != d))
        throw InvalidInput("model: untied omega parameters missing");
}

}  // namespace

OscillatorState encode(const Graph& g, const ModelParams& p) {
    return affine_features(g, p.enc_W, p.enc_b);
}

DynamicsSpec model_dynamics(const ModelParams& p, const OscillatorState& x0,
                            const NaturalFrequencies& omega,
                            std::shared_ptr<const CouplingMatrix> coupling) {
    DynamicsSpec s;
    s.kind = p.config.dynamics;
    s.coupling_strength = p.config.coupling_strength;
    s.coupling = std::move(coupling);
    if (s.kind == DynamicsKind::kuramoto) s.omega = omega;
    if (s.kind == DynamicsKind::grand_modified) {
        s.alpha = p.grand_alpha(0, 0);
        s.beta = p.grand_beta(0, 0);
        s.x0 = x0;
    }
    return s;
}

OscillatorState rhs_fast(const OscillatorState& x, const DynamicsSpec& spec) {
    if (spec.kind != DynamicsKind::kuramoto && spec.kind != DynamicsKind::kuramoto_identical)
        return evaluate_rhs(x, spec);
    spec.validate(x);
    const Matrix sx = x.array().sin().matrix();
    const Matrix cx = x.array().cos().matrix();
    const Matrix s = spec.coupling->multiply(sx);
    const Matrix c = spec.coupling->multiply(cx);
    Matrix out = spec.coupling_strength * (cx.array() * s.array() - sx.array() * c.array()).matrix();
    if (spec.kind == DynamicsKind::kuramoto) out += *spec.omega;
    return out;
}

UnrollTape forward(const Graph& g, const ModelParams& p, const ForwardOptions& options) {
    check_params(g, p);
    UnrollTape tape;
    tape.encoded = encode(g, p);
    tape.x0 = tape.encoded;
    if (options.dropout_mask) {
        if (options.dropout_mask->rows() != tape.x0.rows() || options.dropout_mask->cols() != tape.x0.cols())
            throw InvalidInput("forward: dropout mask shape mismatch");
        tape.dropout_mask = *options.dropout_mask;
        tape.x0.array() *= options.dropout_mask->array();
    }
    if (uses_omega(p.config.dynamics))
        tape.omega = p.config.tie_omega ? tape.x0 : affine_features(g, p.omega_W, p.omega_b);

    if (options.fixed_coupling) {
        if (options.fixed_coupling->n != g.num_nodes())
            throw InvalidInput("forward: fixed coupling size mismatch");
        tape.coupling = options.fixed_coupling;
    } else {
        tape.attention = compute_attention_cached(tape.x0, p.attention, g);
        tape.coupling = std::make_shared<const CouplingMatrix>(tape.attention->averaged);
    }

    tape.steps = p.config.steps();
    tape.step_size = p.config.step_size();
    long stride = options.checkpoint_stride;
    if (stride <= 0) {
        const auto state_bytes = static_cast<std::size_t>(tape.x0.size()) * sizeof(double);
        const auto total = state_bytes * static_cast<std::size_t>(tape.steps + 1);
        const auto budget = std::max<std::size_t>(options.tape_budget_bytes, 1);
        stride = static_cast<long>((total + budget - 1) / budget);
        stride = std::max(stride, 1L);
    }
    tape.checkpoint_stride = stride;

    const DynamicsSpec spec = model_dynamics(p, tape.x0, tape.omega, tape.coupling);
    const double h = tape.step_size;
    OscillatorState z = tape.x0;
    tape.states.push_back(z);
    for (long m = 0; m < tape.steps; ++m) {
        z.noalias() += h * rhs_fast(z, spec);
        if (!z.allFinite()) throw IntegrationError("forward: non-finite state", m + 1);
        if ((m + 1) % stride == 0 && m + 1 < tape.steps) tape.states.push_back(z);
    }
    tape.final_state = z;
    tape.logits = decode(z, p);
    return tape;
}

// ---------------------------------------------------------------------------
// Loss

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - mx).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

namespace {

void check_mask(const Matrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask,
                const char* who) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows() ||
        static_cast<Eigen::Index>(mask.size()) != logits.rows())
        throw InvalidInput(std::string(who) + ": labels/mask length differs from logits rows");
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
        throw InvalidInput(std::string(who) + ": empty mask");
}

}  // namespace

double cross_entropy(const Matrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask) {
    check_mask(logits, labels, mask, "cross_entropy");
    double total = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        total += lse - logits(i, labels[i]);
        ++count;
    }
    return total / static_cast<double>(count);
}

Matrix cross_entropy_grad(const Matrix& logits, const std::vector<int>& labels,
                          const std::vector<bool>& mask) {
    check_mask(logits, labels, mask, "cross_entropy_grad");
    const auto count = static_cast<double>(std::count(mask.begin(), mask.end(), true));
    Matrix probs = softmax_rows(logits);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) {
            probs.row(i).setZero();
            continue;
        }
        probs(i, labels[i]) -= 1.0;
        probs.row(i) /= count;
    }
    return probs;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<bool>& mask) {
    check_mask(logits, labels, mask, "accuracy");
    std::size_t hit = 0, count = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        hit += (best == labels[i]);
        ++count;
    }
    return static_cast<double>(hit) / static_cast<double>(count);
}

LossReport evaluate(const Graph& g, const ModelParams& p, const std::vector<bool>& mask) {
    LossReport r;
    r.logits = forward(g, p).logits;
    r.loss = cross_entropy(r.logits, g.labels(), mask);
    r.accuracy = accuracy(r.logits, g.labels(), mask);
    return r;
}

double evaluate_accuracy(const ModelParams& p, const Graph& g, const std::vector<bool>& mask) {
    return accuracy(forward(g, p).logits, g.labels(), mask);
}

// ---------------------------------------------------------------------------
// Backward

namespace {

/// Reverse of one Euler step z' = z + h f(z). Returns dL/dz and accumulates into
/// the coupling-value, omega, x0 and grand scalar gradients.
OscillatorState euler_step_backward(const OscillatorState& z, const OscillatorState& gz_next,
                                    const DynamicsSpec& spec, double h,
                                    std::vector<double>& g_coupling, Matrix& g_omega, Matrix& g_x0,
                                    double& g_alpha, double& g_beta) {
    const CouplingMatrix& a = *spec.coupling;
    const int n = a.n;
    OscillatorState gz = gz_next;
    switch (spec.kind) {
        case DynamicsKind::kuramoto:
        case DynamicsKind::kuramoto_identical: {
            const double hk = h * spec.coupling_strength;
            const Matrix sx = z.array().sin().matrix();
            const Matrix cx = z.array().cos().matrix();
            const Matrix s = a.multiply(sx);
            const Matrix c = a.multiply(cx);
            const Matrix gcos = (gz_next.array() * cx.array()).matrix();
            const Matrix gsin = (gz_next.array() * sx.array()).matrix();
            const Matrix at_gcos = a.multiply_transpose(gcos);
            const Matrix at_gsin = a.multiply_transpose(gsin);
            gz.array() += hk * (gz_next.array() * (-sx.array() * s.array() - cx.array() * c.array()) +
                                cx.array() * at_gcos.array() + sx.array() * at_gsin.array());
            // dF_ic/da_ij = sin x_jc cos x_ic - cos x_jc sin x_ic
            for (int i = 0; i < n; ++i) {
                for (auto k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
                    const int j = a.col[k];
                    g_coupling[k] += hk * (gcos.row(i).dot(sx.row(j)) - gsin.row(i).dot(cx.row(j)));
                }
            }
            if (spec.kind == DynamicsKind::kuramoto) g_omega.noalias() += h * gz_next;
            break;
        }
        case DynamicsKind::grand_linear:
        case DynamicsKind::grand_modified: {
            const double scale = spec.kind == DynamicsKind::grand_modified ? spec.alpha : 1.0;
            const double hs = h * scale;
            gz.noalias() += hs * (a.multiply_transpose(gz_next) - gz_next);
            for (int i = 0; i < n; ++i) {
                for (auto k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
                    g_coupling[k] += hs * gz_next.row(i).dot(z.row(a.col[k]));
            }
            if (spec.kind == DynamicsKind::grand_modified) {
                const Matrix diffusion = a.multiply(z) - z;
                g_alpha += h * (gz_next.array() * diffusion.array()).sum();
                g_beta += h * (gz_next.array() * spec.x0->array()).sum();
                g_x0.noalias() += (h * spec.beta) * gz_next;
            }
            break;
        }
    }
    return gz;
}

}  // namespace

ModelGrads backward(const Graph& g, const ModelParams& p, const UnrollTape& tape,
                    const Matrix& logits_grad) {
    if (tape.states.empty() || tape.x0.size() == 0 || !tape.coupling)
        throw InvalidInput("backward: incomplete tape");
    if (logits_grad.rows() != tape.logits.rows() || logits_grad.cols() != tape.logits.cols())
        throw InvalidInput("backward: logits gradient shape mismatch");
    const long stride = tape.checkpoint_stride;
    const long expected = tape.steps == 0 ? 1 : (tape.steps - 1) / stride + 1;
    if (static_cast<long>(tape.states.size()) != expected)
        throw InvalidInput("backward: tape holds " + std::to_string(tape.states.size()) +
                           " states, expected " + std::to_string(expected));

    ModelGrads grads = p.zeros_like();
    grads.dec_W = logits_grad.transpose() * tape.final_state;
    grads.dec_b = logits_grad.colwise().sum();
    OscillatorState gz = logits_grad * p.dec_W;

    const DynamicsSpec spec = model_dynamics(p, tape.x0, tape.omega, tape.coupling);
    const double h = tape.step_size;
    std::vector<double> g_coupling(tape.coupling->nnz(), 0.0);
    Matrix g_omega = Matrix::Zero(tape.x0.rows(), tape.x0.cols());
    Matrix g_x0 = Matrix::Zero(tape.x0.rows(), tape.x0.cols());
    double g_alpha = 0.0, g_beta = 0.0;

    // segments [s, e) with Z^s stored; replay inside the segment when strided
    std::vector<OscillatorState> segment;
    for (long seg = static_cast<long>(tape.states.size()) - 1; seg >= 0; --seg) {
        const long s = seg * stride;
        const long e = std::min(s + stride, tape.steps);
        if (e <= s) continue;
        segment.clear();
        segment.push_back(tape.states[static_cast<std::size_t>(seg)]);
        for (long m = s + 1; m < e; ++m) {
            OscillatorState z = segment.back();
            z.noalias() += h * rhs_fast(z, spec);
            segment.push_back(std::move(z));
        }
        for (long m = e - 1; m >= s; --m)
            gz = euler_step_backward(segment[static_cast<std::size_t>(m - s)], gz, spec, h, g_coupling,
                                     g_omega, g_x0, g_alpha, g_beta);
    }

    // gz is now dL/dZ^0 along the state path
    Matrix g_state0 = gz + g_x0;
    if (spec.kind == DynamicsKind::kuramoto) {
        if (p.config.tie_omega) {
            g_state0 += g_omega;
        } else {
            grads.omega_W = affine_weight_grad(g, g_omega);
            grads.omega_b = g_omega.colwise().sum();
        }
    }
    if (tape.attention) {
        AttentionGrads ag = attention_backward(*tape.attention, tape.x0, p.attention, g_coupling);
        g_state0 += ag.x;
        for (std::size_t l = 0; l < ag.key.size(); ++l) {
            grads.attention.heads[l].key = std::move(ag.key[l]);
            grads.attention.heads[l].query = std::move(ag.query[l]);
        }
    }
    if (spec.kind == DynamicsKind::grand_modified) {
        grads.grand_alpha(0, 0) = g_alpha;
        grads.grand_beta(0, 0) = p.config.learn_beta ? g_beta : 0.0;
    }

    if (tape.dropout_mask) g_state0.array() *= tape.dropout_mask->array();
    grads.enc_W = affine_weight_grad(g, g_state0);
    grads.enc_b = g_state0.colwise().sum();
    return grads;
}

// ---------------------------------------------------------------------------

InferenceResult infer(const Graph& g, const ModelParams& p, const SolverConfig& solver) {
    check_params(g, p);
    const OscillatorState x0 = encode(g, p);
    NaturalFrequencies omega;
    if (uses_omega(p.config.dynamics))
        omega = p.config.tie_omega ? x0 : affine_features(g, p.omega_W, p.omega_b);
    auto coupling = std::make_shared<const CouplingMatrix>(compute_attention(x0, p.attention, g));
    const DynamicsSpec spec = model_dynamics(p, x0, omega, coupling);
    InferenceResult r;
    r.trajectory = integrate(x0, [&spec](const OscillatorState& x) { return rhs_fast(x, spec); }, solver);
    r.logits = decode(r.trajectory.final_state(), p);
    return r;
}

}  // namespace kgnn
