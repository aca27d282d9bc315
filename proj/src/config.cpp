#include "nlspde/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nlspde/error.hpp"
#include "nlspde/io.hpp"

namespace nlspde {

using nlohmann::json;

std::string to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::ForwardPde: return "forward-pde";
        case ProblemKind::BackwardPde: return "backward-pde";
        case ProblemKind::ForwardSpde: return "forward-spde";
        case ProblemKind::BackwardSpde: return "backward-spde";
        case ProblemKind::Hedge: return "hedge";
        case ProblemKind::Probe: return "probe";
    }
    return "unknown";
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw Error(ErrorCode::Config, "field '" + field + "': " + what);
}

// Read-only view of a document node that remembers its dotted path.
class Node {
public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const std::string& path() const { return path_; }
    const json& raw() const { return *j_; }
    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key) && !(*j_)[key].is_null(); }
    Node at(const std::string& key) const {
        if (!has(key)) fail(child_path(key), "missing");
        return Node((*j_)[key], child_path(key));
    }
    Node at(std::size_t i) const { return Node((*j_)[i], path_ + "[" + std::to_string(i) + "]"); }
    std::size_t size() const { return j_->is_array() ? j_->size() : 0; }
    bool is_array() const { return j_->is_array(); }
    bool is_object() const { return j_->is_object(); }

    double number() const {
        if (j_->is_number()) return j_->get<double>();
        if (j_->is_string()) return expression(j_->get<std::string>());
        fail(path_, "expected a number");
    }
    long long integer() const {
        if (j_->is_number_integer()) return j_->get<long long>();
        if (j_->is_number_float()) {
            const double v = j_->get<double>();
            if (v == std::floor(v)) return static_cast<long long>(v);
        }
        fail(path_, "expected an integer");
    }
    std::string str() const {
        if (!j_->is_string()) fail(path_, "expected a string");
        return j_->get<std::string>();
    }
    bool boolean() const {
        if (!j_->is_boolean()) fail(path_, "expected true or false");
        return j_->get<bool>();
    }

    double number_or(const std::string& key, double def) const { return has(key) ? at(key).number() : def; }
    long long integer_or(const std::string& key, long long def) const { return has(key) ? at(key).integer() : def; }
    std::string str_or(const std::string& key, const std::string& def) const { return has(key) ? at(key).str() : def; }
    bool bool_or(const std::string& key, bool def) const { return has(key) ? at(key).boolean() : def; }

private:
    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    // Decimal, "pi", "c*pi" or "pi/c".
    double expression(const std::string& s) const {
        const auto p = s.find("pi");
        if (p == std::string::npos) return parse_decimal(s, path_);
        const std::string before = s.substr(0, p), after = s.substr(p + 2);
        double v = std::numbers::pi;
        if (!before.empty()) {
            if (before.back() != '*') fail(path_, "cannot parse '" + s + "'");
            v *= parse_decimal(before.substr(0, before.size() - 1), path_);
        }
        if (!after.empty()) {
            if (after.front() != '/') fail(path_, "cannot parse '" + s + "'");
            v /= parse_decimal(after.substr(1), path_);
        }
        return v;
    }

    const json* j_;
    std::string path_;
};

// Piecewise linear interpolation of a table column against column "x".
std::function<double(double)> table_function(const Node& n, const std::filesystem::path& base) {
    const std::filesystem::path p = base / n.at("path").str();
    const CsvTable t = read_csv(p);
    const std::string col = n.str_or("column", "value");
    const int cx = t.column(n.str_or("x", "x"));
    const int cv = t.column(col);
    if (cx < 0 || cv < 0) fail(n.path(), p.string() + " lacks the needed columns");
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : t.rows) pts.emplace_back(row[cx], row[cv]);
    std::sort(pts.begin(), pts.end());
    if (pts.empty()) fail(n.path(), p.string() + " has no rows");
    return [pts](double x) {
        if (x <= pts.front().first) return pts.front().second;
        if (x >= pts.back().first) return pts.back().second;
        auto it = std::upper_bound(pts.begin(), pts.end(), std::make_pair(x, -HUGE_VAL));
        const auto& [x1, y1] = *it;
        const auto& [x0, y0] = *(it - 1);
        return x1 == x0 ? y1 : y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    };
}

ScalarField scalar_spec(const Node& n, const std::filesystem::path& base) {
    if (!n.is_object()) return constant_scalar(n.number());
    const std::string kind = n.str_or("kind", "constant");
    if (kind == "constant") return constant_scalar(n.at("value").number());
    if (kind == "affine") {
        const double c0 = n.number_or("value", 0.0);
        double s0 = 0.0, s1 = 0.0;
        if (n.has("slope")) {
            const Node s = n.at("slope");
            if (s.is_array()) {
                s0 = s.size() > 0 ? s.at(0).number() : 0.0;
                s1 = s.size() > 1 ? s.at(1).number() : 0.0;
            } else {
                s0 = s.number();
            }
        }
        return [=](const Point& x, double) { return c0 + s0 * x[0] + s1 * x[1]; };
    }
    if (kind == "power") {
        const double a = n.at("scale").number(), p = n.at("power").number();
        const int axis = static_cast<int>(n.integer_or("axis", 0));
        if (axis < 0 || axis > 1) fail(n.path() + ".axis", "must be 0 or 1");
        return [=](const Point& x, double) { return a * std::pow(x[axis], p); };
    }
    if (kind == "sine") {
        const double a = n.number_or("amplitude", 1.0), w = n.number_or("mode", 1.0);
        const int axis = static_cast<int>(n.integer_or("axis", 0));
        if (axis < 0 || axis > 1) fail(n.path() + ".axis", "must be 0 or 1");
        return [=](const Point& x, double) { return a * std::sin(w * x[axis]); };
    }
    if (kind == "csv") {
        auto f = table_function(n, base);
        return [f](const Point& x, double) { return f(x[0]); };
    }
    fail(n.path() + ".kind", "unknown field kind '" + kind + "'");
}

VectorField vector_spec(const Node& n, const std::filesystem::path& base) {
    if (!n.is_array()) {
        auto s = scalar_spec(n, base);
        return [s](const Point& x, double t) { return Vec2(s(x, t), 0.0); };
    }
    auto a = n.size() > 0 ? scalar_spec(n.at(0), base) : constant_scalar(0.0);
    auto b = n.size() > 1 ? scalar_spec(n.at(1), base) : constant_scalar(0.0);
    return [a, b](const Point& x, double t) { return Vec2(a(x, t), b(x, t)); };
}

MatrixField matrix_spec(const Node& n, const std::filesystem::path& base) {
    if (n.is_object() && (n.has("b00") || n.has("b11"))) {
        auto b00 = scalar_spec(n.at("b00"), base);
        auto b01 = n.has("b01") ? scalar_spec(n.at("b01"), base) : constant_scalar(0.0);
        auto b11 = n.has("b11") ? scalar_spec(n.at("b11"), base) : constant_scalar(0.0);
        return [=](const Point& x, double t) {
            Mat2 m;
            m << b00(x, t), b01(x, t), b01(x, t), b11(x, t);
            return m;
        };
    }
    auto s = scalar_spec(n, base);
    return [s](const Point& x, double t) { return Mat2(s(x, t) * Mat2::Identity()); };
}

DataSpec data_spec(const Node& n) {
    DataSpec d;
    if (!n.is_object()) {
        d.kind = "constant";
        d.amplitude = n.number();
        return d;
    }
    d.kind = n.str_or("kind", "zero");
    static const std::vector<std::string> kinds{"zero", "sine", "constant", "csv", "random-leaf"};
    if (std::find(kinds.begin(), kinds.end(), d.kind) == kinds.end()) {
        fail(n.path() + ".kind", "unknown data kind '" + d.kind + "'");
    }
    d.amplitude = n.number_or("amplitude", n.number_or("value", 1.0));
    d.mode = static_cast<int>(n.integer_or("mode", 1));
    if (n.has("path")) d.path = n.at("path").str();
    d.column = n.str_or("column", "value");
    d.seed = static_cast<std::uint64_t>(n.integer_or("seed", 0));
    if (d.kind == "csv" && d.path.empty()) fail(n.path() + ".path", "missing");
    return d;
}

std::vector<double> knot_profile(const Node& n, const TimeGrid& tg, const std::filesystem::path& base) {
    std::vector<double> out(tg.steps() + 1);
    if (n.is_array()) {
        if (static_cast<int>(n.size()) != tg.steps() + 1) fail(n.path(), "needs one value per knot");
        for (std::size_t i = 0; i < n.size(); ++i) out[i] = n.at(i).number();
        return out;
    }
    if (n.is_object() && n.str_or("kind", "constant") == "csv") {
        const CsvTable t = read_csv(base / n.at("path").str());
        const int ct = t.column(n.str_or("x", "t"));
        const int cv = t.column(n.str_or("column", "k0"));
        if (ct < 0 || cv < 0) fail(n.path(), "kernel table needs columns t and k0");
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : t.rows) pts.emplace_back(row[ct], row[cv]);
        std::sort(pts.begin(), pts.end());
        for (int k = 0; k <= tg.steps(); ++k) {
            const double t0 = tg.knot(k);
            auto it = std::lower_bound(pts.begin(), pts.end(), std::make_pair(t0, -HUGE_VAL));
            if (it == pts.end()) out[k] = pts.back().second;
            else if (it == pts.begin()) out[k] = it->second;
            else {
                const auto& [x1, y1] = *it;
                const auto& [x0, y0] = *(it - 1);
                out[k] = y0 + (y1 - y0) * (t0 - x0) / (x1 - x0);
            }
        }
        return out;
    }
    const double v = n.is_object() ? n.at("value").number() : n.number();
    std::fill(out.begin(), out.end(), v);
    return out;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    cfg.doc = doc;
    cfg.base_dir = base_dir;
    const Node root(doc, "");
    if (!doc.is_object()) fail("<root>", "expected a table");

    const std::string kind = root.str_or("kind", "forward-pde");
    const std::vector<std::pair<std::string, ProblemKind>> kinds{
        {"forward-pde", ProblemKind::ForwardPde},     {"backward-pde", ProblemKind::BackwardPde},
        {"forward-spde", ProblemKind::ForwardSpde},   {"backward-spde", ProblemKind::BackwardSpde},
        {"hedge", ProblemKind::Hedge},                {"probe", ProblemKind::Probe}};
    auto it = std::find_if(kinds.begin(), kinds.end(), [&](const auto& p) { return p.first == kind; });
    if (it == kinds.end()) fail("kind", "unknown problem kind '" + kind + "'");
    cfg.kind = it->second;

    // Hedge instances take the corridor from the market block.
    const bool hedge = cfg.kind == ProblemKind::Hedge;
    const Node hn = root.has("hedge") ? root.at("hedge") : Node(json::object(), "hedge");
    if (hedge) {
        const double sig = hn.number_or("sigma", 0.2), sigt = hn.number_or("sigma_tilde", 0.2);
        cfg.market.sigma = [sig](double) { return sig; };
        cfg.market.sigma_tilde = [sigt](double) { return sigt; };
        cfg.market.s_lower = hn.number_or("s_lower", 0.5);
        cfg.market.s_upper = hn.number_or("s_upper", 2.0);
        cfg.market.s0 = hn.number_or("s0", 1.0);
        cfg.hedge.amplitude = hn.number_or("amplitude", 0.01);
        cfg.hedge.paths = static_cast<int>(hn.integer_or("paths", cfg.hedge.paths));
        cfg.hedge.substeps = static_cast<int>(hn.integer_or("substeps", cfg.hedge.substeps));
        cfg.hedge.checkpoints = static_cast<int>(hn.integer_or("checkpoints", cfg.hedge.checkpoints));
        cfg.hedge.csv_paths = static_cast<int>(hn.integer_or("csv_paths", cfg.hedge.csv_paths));
        cfg.hedge.bridge = hn.bool_or("bridge", true);
        if (hn.has("random_xi")) cfg.hedge.random_xi = data_spec(hn.at("random_xi"));
    }

    const Node grid = root.has("grid") ? root.at("grid") : Node(json::object(), "grid");
    cfg.allow_small = grid.bool_or("allow_small", false);
    if (grid.has("axes")) {
        const Node axes = grid.at("axes");
        if (!axes.is_array() || axes.size() < 1 || axes.size() > 2) fail(axes.path(), "needs one or two axes");
        for (std::size_t i = 0; i < axes.size(); ++i) {
            const Node a = axes.at(i);
            cfg.axes.push_back(Axis{a.at("lo").number(), a.at("hi").number(), static_cast<int>(a.at("n").integer())});
        }
    } else {
        const double lo = hedge ? cfg.market.s_lower : grid.number_or("lo", 0.0);
        const double hi = hedge ? cfg.market.s_upper : grid.number_or("hi", std::numbers::pi);
        cfg.axes.push_back(Axis{lo, hi, static_cast<int>(grid.integer_or("n", 31))});
    }
    for (const Axis& a : cfg.axes) {
        if (!(a.hi > a.lo)) fail("grid", "needs hi > lo");
        if (a.n < (cfg.allow_small ? 1 : 3)) fail("grid.n", "too few interior nodes");
    }

    const Node time = root.has("time") ? root.at("time") : Node(json::object(), "time");
    if (time.has("knots")) {
        const Node kn = time.at("knots");
        std::vector<double> knots;
        for (std::size_t i = 0; i < kn.size(); ++i) knots.push_back(kn.at(i).number());
        cfg.time = TimeGrid::from_knots(std::move(knots));
    } else {
        const long long steps = time.integer_or("steps", 16);
        if (steps < 1) fail("time.steps", "must be positive");
        cfg.time = TimeGrid::uniform(time.number_or("horizon", 1.0), static_cast<int>(steps));
    }
    cfg.market.horizon = cfg.time.horizon();
    cfg.theta = root.number_or("theta", 1.0);
    if (cfg.theta < 0.5 || cfg.theta > 1.0) fail("theta", "must lie in [0.5, 1]");

    if (hedge) {
        cfg.market.xi = sine_payoff(cfg.market, cfg.hedge.amplitude);
        cfg.coeffs = hedge_coefficients(cfg.market);
        cfg.components = 1;
    } else {
        const Node co = root.has("coefficients") ? root.at("coefficients") : Node(json::object(), "coefficients");
        const std::string form = co.str_or("form", "divergence");
        if (form != "divergence" && form != "non-divergence") fail("coefficients.form", "unknown form '" + form + "'");
        CoefficientSet& c = cfg.coeffs;
        c.form = form == "divergence" ? OperatorForm::Divergence : OperatorForm::NonDivergence;
        c.b = co.has("b") ? matrix_spec(co.at("b"), base_dir) : isotropic(1.0);
        c.f = co.has("f") ? vector_spec(co.at("f"), base_dir) : constant_vector(0.0);
        c.lambda = co.has("lambda") ? scalar_spec(co.at("lambda"), base_dir) : constant_scalar(0.0);
        if (c.form == OperatorForm::NonDivergence || co.has("f_tilde")) {
            c.f_tilde = co.has("f_tilde") ? vector_spec(co.at("f_tilde"), base_dir) : constant_vector(0.0);
        }
        if (c.form == OperatorForm::NonDivergence || co.has("lambda_tilde")) {
            c.lambda_tilde =
                co.has("lambda_tilde") ? scalar_spec(co.at("lambda_tilde"), base_dir) : constant_scalar(0.0);
        }
        c.delta = co.number_or("delta", 0.0);
        c.time_independent = true;

        const Node noise = root.has("noise") ? root.at("noise") : Node(json::object(), "noise");
        cfg.components = static_cast<int>(noise.integer_or("components", 1));
        if (cfg.components < 1 || cfg.components > 8) fail("noise.components", "must lie in [1, 8]");
        if (noise.has("beta")) {
            const Node beta = noise.at("beta");
            if (static_cast<int>(beta.size()) != cfg.components) fail(beta.path(), "needs one entry per component");
            for (std::size_t i = 0; i < beta.size(); ++i) c.beta.push_back(vector_spec(beta.at(i), base_dir));
            for (int i = 0; i < cfg.components; ++i) {
                c.beta_bar.push_back(noise.has("beta_bar") ? scalar_spec(noise.at("beta_bar").at(i), base_dir)
                                                           : constant_scalar(0.0));
            }
        }
    }
    {
        const Node noise = root.has("noise") ? root.at("noise") : Node(json::object(), "noise");
        const std::string topo = noise.str_or("topology", "recombining");
        if (topo != "recombining" && topo != "tree") fail("noise.topology", "must be recombining or tree");
        cfg.topology = topo == "tree" ? Topology::Tree : Topology::Recombining;
    }

    const Node cond = root.has("condition") ? root.at("condition") : Node(json::object(), "condition");
    const bool backward_kind = cfg.kind == ProblemKind::BackwardPde || cfg.kind == ProblemKind::BackwardSpde ||
                               hedge || cfg.kind == ProblemKind::Probe;
    const std::string dir = cond.str_or("direction", backward_kind ? "backward" : "forward");
    if (dir != "forward" && dir != "backward") fail("condition.direction", "must be forward or backward");
    cfg.condition.direction = dir == "forward" ? Direction::Forward : Direction::Backward;
    if (cond.has("kappa")) cfg.condition.kappa = cond.at("kappa").number();
    if (cond.has("k0")) cfg.condition.k0 = knot_profile(cond.at("k0"), cfg.time, base_dir);
    if (cond.has("masses")) {
        const Node ms = cond.at("masses");
        for (std::size_t i = 0; i < ms.size(); ++i) {
            cfg.condition.masses.push_back(PointMass{ms.at(i).at("t").number(), ms.at(i).at("k").number(), {}});
        }
    }
    if (hedge) cfg.condition = NonlocalCondition::with_kappa(Direction::Backward, 1.0);

    if (root.has("xi")) cfg.xi = data_spec(root.at("xi"));
    if (root.has("phi")) cfg.phi = data_spec(root.at("phi"));
    if (root.has("h")) {
        const Node hs = root.at("h");
        for (std::size_t i = 0; i < hs.size(); ++i) cfg.h.push_back(data_spec(hs.at(i)));
    }

    const Node solve = root.has("solve") ? root.at("solve") : Node(json::object(), "solve");
    const std::string method = solve.str_or("method", "direct");
    if (method != "direct" && method != "neumann") fail("solve.method", "must be direct or neumann");
    cfg.solve.method = method == "direct" ? SolveMethod::Direct : SolveMethod::Neumann;
    cfg.solve.tol = solve.number_or("tol", 1e-10);
    cfg.solve.max_iter = static_cast<int>(solve.integer_or("max_iter", 10000));
    cfg.seed = static_cast<std::uint64_t>(root.integer_or("seed", 1));

    if (root.has("probe")) {
        const Node p = root.at("probe");
        cfg.probe.kappa = p.number_or("kappa", 0.0);
        cfg.probe.paths = static_cast<int>(p.integer_or("paths", cfg.probe.paths));
        cfg.probe.substeps = static_cast<int>(p.integer_or("substeps", cfg.probe.substeps));
        cfg.probe.checkpoints = static_cast<int>(p.integer_or("checkpoints", cfg.probe.checkpoints));
        cfg.probe.nonlocal = p.bool_or("nonlocal", false);
        cfg.probe.bridge = p.bool_or("bridge", true);
        if (p.has("x")) {
            const Node x = p.at("x");
            Point pt{0.0, 0.0};
            for (std::size_t i = 0; i < std::min<std::size_t>(x.size(), 2); ++i) pt[i] = x.at(i).number();
            cfg.probe.x = pt;
        }
    }
    if (root.has("converge")) {
        const Node c = root.at("converge");
        cfg.converge.levels = static_cast<int>(c.integer_or("levels", 3));
        cfg.converge.refine = c.str_or("refine", "both");
        if (cfg.converge.refine != "both" && cfg.converge.refine != "time" && cfg.converge.refine != "space") {
            fail("converge.refine", "must be both, time or space");
        }
        cfg.converge.k = c.number_or("k", 0.5);
        cfg.converge.base_n = static_cast<int>(c.integer_or("base_n", 7));
        cfg.converge.base_steps = static_cast<int>(c.integer_or("base_steps", 8));
        cfg.converge.space_steps = static_cast<int>(c.integer_or("space_steps", 1024));
        if (cfg.converge.levels < 2) fail("converge.levels", "needs at least two levels");
    }
    if (cfg.probe.paths < 1 || cfg.hedge.paths < 1) fail("paths", "must be positive");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(load_document(path), path.parent_path());
}

void apply_overrides(json& doc, const Overrides& o) {
    if (o.seed) doc["seed"] = *o.seed;
    if (o.direction) doc["condition"]["direction"] = *o.direction;
    if (o.kappa) doc["condition"]["kappa"] = *o.kappa;
    if (o.kernel) {
        doc["condition"]["k0"] = {{"kind", "csv"}, {"path", std::filesystem::absolute(*o.kernel).string()}};
    }
    if (o.masses) {
        json list = json::array();
        std::string_view s = *o.masses;
        while (!s.empty()) {
            const auto comma = s.find(',');
            const std::string_view item = s.substr(0, comma);
            const auto colon = item.find(':');
            if (colon == std::string_view::npos) fail("--masses", "expected t:k pairs");
            list.push_back({{"t", parse_decimal(item.substr(0, colon), "--masses")},
                            {"k", parse_decimal(item.substr(colon + 1), "--masses")}});
            if (comma == std::string_view::npos) break;
            s.remove_prefix(comma + 1);
        }
        doc["condition"]["masses"] = list;
    }
    if (o.method) doc["solve"]["method"] = *o.method;
    if (o.tol) doc["solve"]["tol"] = *o.tol;
    if (o.paths) {
        doc["probe"]["paths"] = *o.paths;
        doc["hedge"]["paths"] = *o.paths;
    }
}

Vec sample_data(const DataSpec& d, const Grid& g, const std::filesystem::path& base_dir) {
    if (d.kind == "zero") return Vec::Zero(g.size());
    if (d.kind == "constant") return Vec::Constant(g.size(), d.amplitude);
    if (d.kind == "sine") {
        return sample_nodes(g, [&](const Point& x) {
            double v = d.amplitude;
            for (int a = 0; a < g.dim(); ++a) {
                const Axis& ax = g.axis(a);
                v *= std::sin(d.mode * std::numbers::pi * (x[a] - ax.lo) / (ax.hi - ax.lo));
            }
            return v;
        });
    }
    if (d.kind == "csv") {
        const CsvTable t = read_csv(base_dir / d.path);
        const int c = t.column(d.column);
        require(c >= 0, ErrorCode::Config, d.path.string() + ": missing column '" + d.column + "'");
        require(static_cast<int>(t.rows.size()) == g.size(), ErrorCode::Config,
                d.path.string() + ": needs one row per interior node");
        Vec v(g.size());
        for (int i = 0; i < g.size(); ++i) v[i] = t.rows[i][c];
        return v;
    }
    throw Error(ErrorCode::Config, "data kind '" + d.kind + "' is not a deterministic vector");
}

Mat sample_leaf_data(const DataSpec& d, const Grid& g, int leaves, const std::filesystem::path& base_dir) {
    if (d.kind != "random-leaf") return sample_data(d, g, base_dir).replicate(1, leaves);
    std::mt19937_64 rng(d.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat out(g.size(), leaves);
    for (int l = 0; l < leaves; ++l) {
        for (int i = 0; i < g.size(); ++i) out(i, l) = d.amplitude * u(rng);
    }
    return out;
}

KnotForcing sample_forcing(const DataSpec& d, const Grid& g, const TimeGrid& tg,
                           const std::filesystem::path& base_dir) {
    if (d.kind == "zero") return {};
    return KnotForcing(tg.steps() + 1, sample_data(d, g, base_dir));
}

}  // namespace nlspde
