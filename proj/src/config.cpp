#include "kgnn/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace kgnn {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto t = trim(v);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty())
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return x;
}

long to_long(const std::string& key, const std::string& v) {
    long x = 0;
    const auto t = trim(v);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty())
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return x;
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_long(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
    const auto t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

// An empty list resets the field to its command default.
std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
    return out;
}

// Shortest text that parses back to the same double.
std::string num(double x) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

template <typename Fn>
auto rethrow_as_config(const std::string& key, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidInput& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"data.dataset", [](auto& c, auto&, auto& v) { c.dataset = trim(v); }},
        {"data.lcc", [](auto& c, auto& k, auto& v) { c.lcc = to_bool(k, v); }},
        {"data.per_class", [](auto& c, auto& k, auto& v) { c.seeded.per_class = to_int(k, v); }},
        {"data.val", [](auto& c, auto& k, auto& v) { c.seeded.val = to_int(k, v); }},

        {"model.dynamics",
         [](auto& c, auto& k, auto& v) {
             c.dynamics.clear();
             for (const auto& item : split_list(v))
                 c.dynamics.push_back(rethrow_as_config(k, [&] { return parse_dynamics_variant(item); }));
         }},
        {"model.hidden_dim", [](auto& c, auto& k, auto& v) { c.train.model.hidden_dim = to_int(k, v); }},
        {"model.heads", [](auto& c, auto& k, auto& v) { c.train.model.heads = to_int(k, v); }},
        {"model.key_dim", [](auto& c, auto& k, auto& v) { c.train.model.key_dim = to_int(k, v); }},
        {"model.attention_scale",
         [](auto& c, auto& k, auto& v) {
             const auto t = trim(v);
             if (t == "dk") c.train.model.attention_scale = AttentionScale::dk;
             else if (t == "sqrt_dk") c.train.model.attention_scale = AttentionScale::sqrt_dk;
             else throw ConfigError(k + ": expected dk or sqrt_dk, got '" + v + "'");
         }},
        {"model.K", [](auto& c, auto& k, auto& v) { c.train.model.coupling_strength = to_double(k, v); }},
        {"model.T", [](auto& c, auto& k, auto& v) { c.train.model.T = to_double(k, v); }},
        {"model.dt", [](auto& c, auto& k, auto& v) { c.train.model.dt = to_double(k, v); }},
        {"model.tie_omega", [](auto& c, auto& k, auto& v) { c.train.model.tie_omega = to_bool(k, v); }},

        {"train.epochs", [](auto& c, auto& k, auto& v) { c.train.max_epochs = to_int(k, v); }},
        {"train.lr", [](auto& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
        {"train.weight_decay", [](auto& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
        {"train.optimizer",
         [](auto& c, auto& k, auto& v) {
             c.train.optimizer = rethrow_as_config(k, [&] { return parse_optimizer_kind(trim(v)); });
         }},
        {"train.momentum", [](auto& c, auto& k, auto& v) { c.train.momentum = to_double(k, v); }},
        {"train.patience", [](auto& c, auto& k, auto& v) { c.train.patience = to_int(k, v); }},
        {"train.dropout", [](auto& c, auto& k, auto& v) { c.train.dropout = to_double(k, v); }},
        {"train.seed",
         [](auto& c, auto& k, auto& v) { c.seeded.base_seed = static_cast<std::uint64_t>(to_long(k, v)); }},
        {"train.splits", [](auto& c, auto& k, auto& v) { c.seeded.n_splits = to_int(k, v); }},
        {"train.seeds", [](auto& c, auto& k, auto& v) { c.seeded.n_seeds = to_int(k, v); }},
        {"train.workers", [](auto& c, auto& k, auto& v) { c.seeded.workers = to_int(k, v); }},

        {"solver.method",
         [](auto& c, auto& k, auto& v) {
             c.solver.method = rethrow_as_config(k, [&] { return parse_solver_method(trim(v)); });
         }},
        {"solver.dt", [](auto& c, auto& k, auto& v) { c.solver.dt = to_double(k, v); }},
        {"solver.rtol", [](auto& c, auto& k, auto& v) { c.solver.rtol = to_double(k, v); }},
        {"solver.atol", [](auto& c, auto& k, auto& v) { c.solver.atol = to_double(k, v); }},
        {"solver.max_nfe", [](auto& c, auto& k, auto& v) { c.solver.max_nfe = to_long(k, v); }},
        {"solver.tolerances", [](auto& c, auto& k, auto& v) { c.nfe_tolerances = to_doubles(k, v); }},

        {"sweep.axis",
         [](auto& c, auto& k, auto& v) {
             const auto t = trim(v);
             if (t.empty()) c.sweep_axis.reset();
             else if (t == "T") c.sweep_axis = SweepAxis::T;
             else if (t == "K") c.sweep_axis = SweepAxis::K;
             else if (t == "per_class") c.sweep_axis = SweepAxis::per_class;
             else throw ConfigError(k + ": unknown sweep axis '" + v + "' (expected T, K or per_class)");
         }},
        {"sweep.values", [](auto& c, auto& k, auto& v) { c.sweep_values = to_doubles(k, v); }},

        {"sync.graph", [](auto& c, auto&, auto& v) { c.sync.graph = trim(v); }},
        {"sync.channels", [](auto& c, auto& k, auto& v) { c.sync.channels = to_int(k, v); }},
        {"sync.T", [](auto& c, auto& k, auto& v) { c.sync.T = to_double(k, v); }},
        {"sync.dt", [](auto& c, auto& k, auto& v) { c.sync.dt = to_double(k, v); }},
        {"sync.K", [](auto& c, auto& k, auto& v) { c.sync.K = to_double(k, v); }},
        {"sync.K_freq", [](auto& c, auto& k, auto& v) { c.sync.K_freq = to_double(k, v); }},
        {"sync.omega_spread", [](auto& c, auto& k, auto& v) { c.sync.omega_spread = to_double(k, v); }},
        {"sync.init_spread", [](auto& c, auto& k, auto& v) { c.sync.init_spread = to_double(k, v); }},
        {"sync.seed",
         [](auto& c, auto& k, auto& v) { c.sync.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
        {"sync.record_every", [](auto& c, auto& k, auto& v) { c.sync.record_every = to_int(k, v); }},

        {"output.dir", [](auto& c, auto&, auto& v) { c.out = trim(v); }},
    };
    return table;
}

}  // namespace

IniEntries parse_ini(const std::string& text) {
    IniEntries out;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto cut = line.find_first_of("#;");
        const std::string body = trim(cut == std::string::npos ? line : line.substr(0, cut));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3)
                throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
            section = trim(body.substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(section.empty() ? key : section + "." + key, trim(body.substr(eq + 1)));
    }
    return out;
}

DynamicsVariant parse_dynamics_variant(const std::string& text) {
    DynamicsVariant v;
    v.label = trim(text);
    const auto colon = v.label.find(':');
    v.kind = parse_dynamics_kind(v.label.substr(0, colon));
    if (colon == std::string::npos) return v;
    std::istringstream rest(v.label.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ':')) {
        const auto eq = item.find('=');
        const std::string key = trim(item.substr(0, eq));
        if (eq == std::string::npos || key != "beta")
            throw InvalidInput("dynamics variant '" + text + "': only beta=<value> is supported");
        if (v.kind != DynamicsKind::grand_modified)
            throw InvalidInput("dynamics variant '" + text + "': beta applies to grand_modified only");
        v.beta = to_double("beta", item.substr(eq + 1));
    }
    return v;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config field '" + key + "'");
    it->second(cfg, key, value);
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_ini(ss.str())) apply_setting(base, k, v);
    return base;
}

void write_effective_config(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / "effective_config.ini";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const auto& m = cfg.train.model;
    std::string dyn;
    for (const auto& v : cfg.dynamics) dyn += (dyn.empty() ? "" : ",") + v.label;
    auto join = [](const std::vector<double>& xs) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + num(xs[i]);
        return s;
    };
    const char* axis = !cfg.sweep_axis ? ""
                       : *cfg.sweep_axis == SweepAxis::T ? "T"
                       : *cfg.sweep_axis == SweepAxis::K ? "K"
                                                         : "per_class";
    out << "[data]\ndataset = " << cfg.dataset << "\nlcc = " << std::boolalpha << cfg.lcc
        << "\nper_class = " << cfg.seeded.per_class << "\nval = " << cfg.seeded.val << "\n\n"
        << "[model]\ndynamics = " << dyn
        << "\nhidden_dim = " << m.hidden_dim << "\nheads = " << m.heads << "\nkey_dim = " << m.key_dim
        << "\nattention_scale = " << (m.attention_scale == AttentionScale::dk ? "dk" : "sqrt_dk")
        << "\nK = " << num(m.coupling_strength) << "\nT = " << num(m.T) << "\ndt = " << num(m.dt)
        << "\ntie_omega = " << m.tie_omega << "\n\n"
        << "[train]\nepochs = " << cfg.train.max_epochs << "\nlr = " << num(cfg.train.learning_rate)
        << "\nweight_decay = " << num(cfg.train.weight_decay) << "\noptimizer = " << to_string(cfg.train.optimizer)
        << "\nmomentum = " << num(cfg.train.momentum) << "\npatience = " << cfg.train.patience
        << "\ndropout = " << num(cfg.train.dropout) << "\nseed = " << cfg.seeded.base_seed
        << "\nsplits = " << cfg.seeded.n_splits << "\nseeds = " << cfg.seeded.n_seeds
        << "\nworkers = " << cfg.seeded.workers << "\n\n"
        << "[solver]\nmethod = " << to_string(cfg.solver.method) << "\ndt = " << num(cfg.solver.dt)
        << "\nrtol = " << num(cfg.solver.rtol) << "\natol = " << num(cfg.solver.atol) << "\nmax_nfe = " << cfg.solver.max_nfe
        << "\ntolerances = " << join(cfg.nfe_tolerances) << "\n\n"
        << "[sweep]\naxis = " << axis << "\nvalues = " << join(cfg.sweep_values) << "\n\n"
        << "[sync]\ngraph = " << cfg.sync.graph << "\nchannels = " << cfg.sync.channels << "\nT = " << num(cfg.sync.T)
        << "\ndt = " << num(cfg.sync.dt) << "\nK = " << num(cfg.sync.K) << "\nK_freq = " << num(cfg.sync.K_freq)
        << "\nomega_spread = " << num(cfg.sync.omega_spread) << "\ninit_spread = " << num(cfg.sync.init_spread)
        << "\nseed = " << cfg.sync.seed << "\nrecord_every = " << cfg.sync.record_every << "\n\n"
        << "[output]\ndir = " << cfg.out.string() << '\n';
}

}  // namespace kgnn
