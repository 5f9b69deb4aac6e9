#include "kgnn/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

namespace kgnn {

namespace fs = std::filesystem;

Graph Graph::from_edges(int n, std::vector<Edge> edges, Matrix features,
                        std::vector<int> labels, int num_classes, std::string name) {
    if (n < 0) throw InvalidInput("graph: negative node count");
    if (features.rows() != n)
        throw InvalidInput("graph: features has " + std::to_string(features.rows()) +
                           " rows, expected " + std::to_string(n));
    if (static_cast<int>(labels.size()) != n)
        throw InvalidInput("graph: labels has " + std::to_string(labels.size()) +
                           " entries, expected " + std::to_string(n));
    for (const auto& [s, t] : edges) {
        if (s < 0 || s >= n || t < 0 || t >= n)
            throw InvalidInput("graph: edge (" + std::to_string(s) + "," + std::to_string(t) +
                               ") out of range for n=" + std::to_string(n));
    }
    for (int y : labels) {
        if (y < 0 || y >= std::max(num_classes, 1))
            throw InvalidInput("graph: label " + std::to_string(y) + " outside [0," +
                               std::to_string(num_classes) + ")");
    }

    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    Graph g;
    g.n_ = n;
    g.num_classes_ = num_classes;
    g.name_ = std::move(name);
    g.features_ = std::move(features);
    g.labels_ = std::move(labels);
    g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    g.targets_.reserve(edges.size());
    for (const auto& [s, t] : edges) {
        ++g.offsets_[static_cast<std::size_t>(s) + 1];
        g.targets_.push_back(t);
    }
    std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());

    const auto total = g.features_.size();
    const auto nonzero = (g.features_.array() != 0.0).count();
    if (total > 0 && nonzero * 5 <= total)
        g.sparse_features_ = std::make_shared<const SparseRowMatrix>(g.features_.sparseView());
    return g;
}

bool Graph::has_edge(int src, int dst) const {
    auto nb = neighbors(src);
    return std::binary_search(nb.begin(), nb.end(), dst);
}

std::vector<Edge> Graph::edge_list() const {
    std::vector<Edge> out;
    out.reserve(targets_.size());
    for (int v = 0; v < n_; ++v)
        for (int t : neighbors(v)) out.emplace_back(v, t);
    return out;
}

std::size_t Graph::num_undirected_edges() const {
    std::size_t count = 0;
    for (int v = 0; v < n_; ++v) {
        for (int t : neighbors(v)) {
            if (t == v) continue;
            // count each unordered pair once: at the smaller endpoint, or at the larger
            // endpoint when the reverse direction is absent
            if (v < t || !has_edge(t, v)) ++count;
        }
    }
    return count;
}

Graph Graph::symmetrized() const {
    auto edges = edge_list();
    const std::size_t m = edges.size();
    edges.reserve(2 * m);
    for (std::size_t k = 0; k < m; ++k) edges.emplace_back(edges[k].second, edges[k].first);
    return from_edges(n_, std::move(edges), features_, labels_, num_classes_, name_);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> component_ids(const Graph& g, int& num_components) {
    const int n = g.num_nodes();
    // undirected adjacency: out-edges plus reversed in-edges
    std::vector<std::vector<int>> rev(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v)
        for (int t : g.neighbors(v)) rev[static_cast<std::size_t>(t)].push_back(v);

    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    num_components = 0;
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        const int id = num_components++;
        comp[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            auto visit = [&](int u) {
                if (comp[u] < 0) {
                    comp[u] = id;
                    stack.push_back(u);
                }
            };
            for (int u : g.neighbors(v)) visit(u);
            for (int u : rev[v]) visit(u);
        }
    }
    return comp;
}

}  // namespace

bool is_weakly_connected(const Graph& g) {
    if (g.num_nodes() == 0) return false;
    int k = 0;
    component_ids(g, k);
    return k == 1;
}

ComponentResult largest_connected_component(const Graph& g) {
    if (g.num_nodes() == 0) throw InvalidInput("largest_connected_component: empty graph");
    int k = 0;
    const auto comp = component_ids(g, k);
    std::vector<int> size(static_cast<std::size_t>(k), 0);
    for (int c : comp) ++size[c];
    // component ids are assigned in order of their smallest node, so max_element's
    // first-hit rule gives the documented tie-break
    const int best = static_cast<int>(std::max_element(size.begin(), size.end()) - size.begin());

    ComponentResult out;
    std::vector<int> remap(static_cast<std::size_t>(g.num_nodes()), -1);
    for (int v = 0; v < g.num_nodes(); ++v) {
        if (comp[v] == best) {
            remap[v] = static_cast<int>(out.mapping.size());
            out.mapping.push_back(v);
        }
    }
    const int m = static_cast<int>(out.mapping.size());
    Matrix feats(m, g.feature_dim());
    std::vector<int> labels(static_cast<std::size_t>(m));
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i) {
        const int v = out.mapping[i];
        feats.row(i) = g.features().row(v);
        labels[i] = g.labels()[v];
        for (int t : g.neighbors(v)) edges.emplace_back(i, remap[t]);
    }
    out.graph = Graph::from_edges(m, std::move(edges), std::move(feats), std::move(labels),
                                  g.num_classes(), g.name());
    return out;
}

// ---------------------------------------------------------------------------
// Bundle I/O

namespace {

std::ifstream open_input(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    return in;
}

template <typename T>
T parse_number(std::string_view tok, const fs::path& file, std::size_t line) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
        tok.remove_suffix(1);
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw IoError(file.string() + ":" + std::to_string(line) + ": bad number '" +
                      std::string(tok) + "'");
    return value;
}

template <typename T, typename Fn>
void for_each_field(const std::string& line, const fs::path& file, std::size_t lineno, Fn&& fn) {
    std::string_view rest(line);
    while (true) {
        const auto comma = rest.find(',');
        fn(parse_number<T>(rest.substr(0, comma), file, lineno));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

Graph load_bundle(const fs::path& dir) {
    const auto meta_path = dir / "meta.json";
    nlohmann::json meta;
    {
        auto in = open_input(meta_path);
        try {
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(meta_path.string() + ": " + e.what());
        }
    }
    int n = 0, f = 0, c = 0;
    std::string name;
    try {
        n = meta.at("n").get<int>();
        f = meta.at("f").get<int>();
        c = meta.at("c").get<int>();
        name = meta.value("name", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }

    std::vector<Edge> edges;
    {
        const auto p = dir / "edges.csv";
        auto in = open_input(p);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (blank(line)) continue;
            std::vector<int> pair;
            for_each_field<int>(line, p, lineno, [&](int v) { pair.push_back(v); });
            if (pair.size() != 2)
                throw IoError(p.string() + ":" + std::to_string(lineno) + ": expected src,dst");
            if (pair[0] < 0 || pair[0] >= n || pair[1] < 0 || pair[1] >= n)
                throw IoError(p.string() + ":" + std::to_string(lineno) +
                              ": node index out of range");
            edges.emplace_back(pair[0], pair[1]);
        }
    }

    Matrix features(n, f);
    {
        const auto p = dir / "features.csv";
        auto in = open_input(p);
        std::string line;
        std::size_t lineno = 0;
        int row = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (blank(line)) continue;
            if (row >= n) throw IoError(p.string() + ": more than n=" + std::to_string(n) + " rows");
            int col = 0;
            for_each_field<double>(line, p, lineno, [&](double v) {
                if (col < f) features(row, col) = v;
                ++col;
            });
            if (col != f)
                throw IoError(p.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(f) + " columns, got " + std::to_string(col));
            ++row;
        }
        if (row != n)
            throw IoError(p.string() + ": row count " + std::to_string(row) + " != n=" +
                          std::to_string(n));
    }

    std::vector<int> labels;
    {
        const auto p = dir / "labels.csv";
        auto in = open_input(p);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (blank(line)) continue;
            const int y = parse_number<int>(line, p, lineno);
            if (y < 0 || y >= c)
                throw IoError(p.string() + ":" + std::to_string(lineno) + ": label out of range");
            labels.push_back(y);
        }
        if (static_cast<int>(labels.size()) != n)
            throw IoError(p.string() + ": row count " + std::to_string(labels.size()) +
                          " != n=" + std::to_string(n));
    }

    return Graph::from_edges(n, std::move(edges), std::move(features), std::move(labels), c,
                             std::move(name));
}

void save_bundle(const Graph& g, const fs::path& dir) {
    fs::create_directories(dir);
    auto open_output = [](const fs::path& p) {
        std::ofstream out(p);
        if (!out) throw IoError("cannot write " + p.string());
        out.precision(17);
        return out;
    };
    {
        auto out = open_output(dir / "edges.csv");
        for (const auto& [s, t] : g.edge_list()) out << s << ',' << t << '\n';
    }
    {
        auto out = open_output(dir / "features.csv");
        const Matrix& x = g.features();
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                if (j) out << ',';
                out << x(i, j);
            }
            out << '\n';
        }
    }
    {
        auto out = open_output(dir / "labels.csv");
        for (int y : g.labels()) out << y << '\n';
    }
    {
        auto out = open_output(dir / "meta.json");
        nlohmann::json meta = {{"n", g.num_nodes()},
                               {"f", g.feature_dim()},
                               {"c", g.num_classes()},
                               {"name", g.name()}};
        out << meta.dump(2) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic graphs

Graph generate_synthetic(const SyntheticSpec& spec) {
    const int n = spec.n;
    if (n < 2) throw InvalidInput("generate_synthetic: n must be >= 2");
    if (spec.f < 1) throw InvalidInput("generate_synthetic: f must be >= 1");
    if (!(spec.p >= 0.0 && spec.p <= 1.0))
        throw InvalidInput("generate_synthetic: p must lie in [0,1]");
    if (spec.kind == SyntheticKind::sbm) {
        if (!(spec.p_out >= 0.0 && spec.p_out <= 1.0))
            throw InvalidInput("generate_synthetic: p_out must lie in [0,1]");
        if (spec.classes < 1) throw InvalidInput("generate_synthetic: classes must be >= 1");
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const int classes = spec.kind == SyntheticKind::sbm ? spec.classes : 2;
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[i] = i % classes;

    std::vector<Edge> edges;
    auto link = [&](int a, int b) {
        edges.emplace_back(a, b);
        edges.emplace_back(b, a);
    };
    std::string name;
    switch (spec.kind) {
        case SyntheticKind::ring:
            name = "ring";
            for (int i = 0; i < n; ++i) link(i, (i + 1) % n);
            break;
        case SyntheticKind::complete:
            name = "complete";
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) link(i, j);
            break;
        case SyntheticKind::erdos_renyi:
            name = "erdos_renyi";
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (unif(rng) < spec.p) link(i, j);
            break;
        case SyntheticKind::sbm:
            name = "sbm";
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (unif(rng) < (labels[i] == labels[j] ? spec.p : spec.p_out)) link(i, j);
            break;
    }

    Matrix features(n, spec.f);
    if (spec.kind == SyntheticKind::sbm) {
        Matrix means(classes, spec.f);
        for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = spec.signal * normal(rng);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < spec.f; ++j) features(i, j) = means(labels[i], j) + normal(rng);
    } else {
        for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = normal(rng);
    }
    return Graph::from_edges(n, std::move(edges), std::move(features), std::move(labels),
                             classes, name);
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
    SyntheticSpec spec;
    std::stringstream ss(text);
    std::string part;
    bool first = true;
    while (std::getline(ss, part, ':')) {
        if (first) {
            first = false;
            if (part == "ring") spec.kind = SyntheticKind::ring;
            else if (part == "complete") spec.kind = SyntheticKind::complete;
            else if (part == "erdos_renyi" || part == "er") spec.kind = SyntheticKind::erdos_renyi;
            else if (part == "sbm") spec.kind = SyntheticKind::sbm;
            else throw InvalidInput("synthetic spec: unknown kind '" + part + "'");
            continue;
        }
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw InvalidInput("synthetic spec: expected key=value, got '" + part + "'");
        const std::string key = part.substr(0, eq);
        const std::string val = part.substr(eq + 1);
        try {
            if (key == "n") spec.n = std::stoi(val);
            else if (key == "f") spec.f = std::stoi(val);
            else if (key == "seed") spec.seed = std::stoull(val);
            else if (key == "p") spec.p = std::stod(val);
            else if (key == "p_out") spec.p_out = std::stod(val);
            else if (key == "classes") spec.classes = std::stoi(val);
            else if (key == "signal") spec.signal = std::stod(val);
            else throw InvalidInput("synthetic spec: unknown key '" + key + "'");
        } catch (const std::logic_error& e) {
            if (dynamic_cast<const InvalidInput*>(&e)) throw;
            throw InvalidInput("synthetic spec: bad value for '" + key + "'");
        }
    }
    if (first) throw InvalidInput("synthetic spec: empty");
    return spec;
}

// ---------------------------------------------------------------------------
// Splits

std::size_t SplitSpec::count(const std::vector<bool>& mask) const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<int> mask_indices(const std::vector<bool>& mask) {
    std::vector<int> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(static_cast<int>(i));
    return out;
}

SplitSpec make_split(const Graph& g, int per_class, int val, std::uint64_t seed) {
    if (per_class < 1) throw InvalidInput("make_split: per_class must be >= 1");
    if (val < 0) throw InvalidInput("make_split: val must be >= 0");
    const int n = g.num_nodes();
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(g.num_classes()));
    for (int i = 0; i < n; ++i) by_class[g.labels()[i]].push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (by_class[c].empty())
            throw InvalidInput("make_split: class " + std::to_string(c) + " has no nodes");

    std::mt19937_64 rng(seed);
    SplitSpec split;
    split.per_class = per_class;
    split.seed = seed;
    split.train_mask.assign(static_cast<std::size_t>(n), false);
    split.val_mask.assign(static_cast<std::size_t>(n), false);
    split.test_mask.assign(static_cast<std::size_t>(n), false);

    for (auto& nodes : by_class) {
        std::shuffle(nodes.begin(), nodes.end(), rng);
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(per_class), nodes.size());
        for (std::size_t k = 0; k < take; ++k) split.train_mask[nodes[k]] = true;
    }
    std::vector<int> rest;
    for (int i = 0; i < n; ++i)
        if (!split.train_mask[i]) rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), rng);
    const std::size_t nval = std::min<std::size_t>(static_cast<std::size_t>(val), rest.size());
    for (std::size_t k = 0; k < rest.size(); ++k) {
        if (k < nval) split.val_mask[rest[k]] = true;
        else split.test_mask[rest[k]] = true;
    }
    return split;
}

}  // namespace kgnn
