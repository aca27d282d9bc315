#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "nlspde/cauchy.hpp"
#include "nlspde/config.hpp"
#include "nlspde/error.hpp"
#include "nlspde/harness.hpp"
#include "nlspde/io.hpp"

using namespace nlspde;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlspde_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

json heat_doc(double kappa, double horizon = 1.0) {
    return json{{"kind", "backward-pde"},
                {"grid", {{"n", 31}}},
                {"time", {{"horizon", horizon}, {"steps", 16}}},
                {"condition", {{"kappa", kappa}}},
                {"xi", {{"kind", "sine"}}}};
}

}  // namespace

TEST_CASE("toml subset") {
    const json j = parse_toml(R"(# experiment
kind = "forward-pde"
theta = 0.5
seed = 42

[grid]
n = 15     # interior nodes
allow_small = false

[condition]
masses = [ 0.5, 1.0 ]

[noise.extra]
label = "a # b"
)");
    CHECK(j["kind"] == "forward-pde");
    CHECK(j["theta"].get<double>() == 0.5);
    CHECK(j["seed"].get<long long>() == 42);
    CHECK(j["grid"]["n"].get<long long>() == 15);
    CHECK(j["grid"]["allow_small"] == false);
    CHECK(j["condition"]["masses"].size() == 2);
    CHECK(j["noise"]["extra"]["label"] == "a # b");

    try {
        parse_toml("a = 1\nb = \n");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Config);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK(code_of([] { parse_toml("[grid\nn = 1\n"); }) == ErrorCode::Config);
    CHECK(code_of([] { parse_toml("a = 1\na = 2\n"); }) == ErrorCode::Config);

    const json t = parse_toml(R"(
beta = [ { kind = "sine", amplitude = 0.5 }, 0.1 ]
k0 = { kind = "csv", path = "a,b.csv", inner = { x = [1, [2, 3]] } }

[[h]]
kind = "constant"

[[h]]
kind = "sine"

[h.extra]
mode = 2
)");
    CHECK(t["beta"][0]["kind"] == "sine");
    CHECK(t["beta"][0]["amplitude"].get<double>() == 0.5);
    CHECK(t["beta"][1].get<double>() == 0.1);
    CHECK(t["k0"]["path"] == "a,b.csv");
    CHECK(t["k0"]["inner"]["x"][1][1].get<long long>() == 3);
    REQUIRE(t["h"].size() == 2);
    CHECK(t["h"][0]["kind"] == "constant");
    CHECK(t["h"][1]["extra"]["mode"].get<long long>() == 2);
    CHECK(code_of([] { parse_toml("a = { b = 1\n"); }) == ErrorCode::Config);
    CHECK(code_of([] { parse_toml("a = [1, 2]]\n"); }) == ErrorCode::Config);
    CHECK(code_of([] { parse_toml("[[h]\n"); }) == ErrorCode::Config);
}

TEST_CASE("decimal text") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 123456.789}) {
        CHECK(parse_decimal(format_double(x), "x") == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(parse_decimal("1e-3", "x") == 0.001);
    CHECK(code_of([] { parse_decimal("1.2.3", "x"); }) == ErrorCode::Config);
    CHECK(code_of([] { parse_decimal("", "x"); }) == ErrorCode::Config);
}

TEST_CASE("csv round trip") {
    const fs::path dir = scratch("csv");
    write_csv(dir / "t.csv", {"x", "value"}, {{0.1, 1.0 / 3.0}, {0.2, -4.0}});
    const CsvTable t = read_csv(dir / "t.csv");
    CHECK(t.header == std::vector<std::string>{"x", "value"});
    CHECK(t.column("value") == 1);
    CHECK(t.column("nope") == -1);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == 1.0 / 3.0);
    CHECK(t.rows[1][1] == -4.0);
}

TEST_CASE("config diagnostics name the field") {
    auto field_error = [](json doc) {
        try {
            parse_config(doc);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Config);
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(field_error({{"kind", "elliptic"}}).find("kind") != std::string::npos);
    CHECK(field_error({{"theta", 0.3}}).find("theta") != std::string::npos);
    CHECK(field_error({{"grid", {{"n", 1}}}}).find("grid.n") != std::string::npos);
    CHECK(field_error({{"time", {{"steps", "many"}}}}).find("time.steps") != std::string::npos);
    CHECK(field_error({{"solve", {{"method", "auto"}}}}).find("solve.method") != std::string::npos);
    CHECK(field_error({{"coefficients", {{"lambda", {{"kind", "wavelet"}}}}}}).find("coefficients.lambda") !=
          std::string::npos);
    CHECK(field_error({{"noise", {{"components", 2}, {"beta", {0.1}}}}}).find("noise.beta") != std::string::npos);
}

TEST_CASE("config fields") {
    const ExperimentConfig cfg = parse_config(json::parse(R"({
        "kind": "backward-spde",
        "grid": {"lo": 0.0, "hi": 2.0, "n": 9},
        "time": {"knots": [0.0, 0.5, 1.0]},
        "coefficients": {"b": 0.5, "lambda": {"kind": "sine", "amplitude": -0.5, "mode": 2.0}},
        "noise": {"components": 1, "beta": [{"kind": "affine", "value": 0.1, "slope": 0.05}]},
        "condition": {"k0": 0.25, "masses": [{"t": 0.5, "k": 0.2}]},
        "seed": 9
    })"));
    CHECK(cfg.kind == ProblemKind::BackwardSpde);
    CHECK(cfg.condition.direction == Direction::Backward);
    CHECK(cfg.grid().size() == 9);
    CHECK(cfg.time.steps() == 2);
    CHECK(cfg.coeffs.lambda({std::numbers::pi / 4, 0.0}, 0.0) == doctest::Approx(-0.5));
    CHECK(cfg.coeffs.beta[0]({2.0, 0.0}, 0.0)[0] == doctest::Approx(0.2));
    CHECK(cfg.condition.k0 == std::vector<double>{0.25, 0.25, 0.25});
    CHECK(cfg.condition.masses.size() == 1);
    CHECK(cfg.seed == 9);
}

TEST_CASE("command-line overrides") {
    json doc = heat_doc(0.5);
    Overrides o;
    o.direction = "forward";
    o.masses = "0.5:0.3,1:0.2";
    o.method = "neumann";
    o.tol = 1e-12;
    o.seed = 77;
    o.paths = 500;
    apply_overrides(doc, o);
    const ExperimentConfig cfg = parse_config(doc);
    CHECK(cfg.condition.direction == Direction::Forward);
    REQUIRE(cfg.condition.masses.size() == 2);
    CHECK(cfg.condition.masses[1].t == 1.0);
    CHECK(cfg.condition.masses[1].k == 0.2);
    CHECK(cfg.solve.method == SolveMethod::Neumann);
    CHECK(cfg.solve.tol == 1e-12);
    CHECK(cfg.seed == 77);
    CHECK(cfg.probe.paths == 500);

    Overrides bad;
    bad.masses = "0.5";
    CHECK(code_of([&] { apply_overrides(doc, bad); }) == ErrorCode::Config);

    const fs::path dir = scratch("kernel");
    write_csv(dir / "k.csv", {"t", "k0"}, {{0.0, 0.0}, {1.0, 1.0}});
    Overrides kern;
    kern.kernel = (dir / "k.csv").string();
    json kd = heat_doc(0.0);
    kd["condition"].erase("kappa");
    apply_overrides(kd, kern);
    const ExperimentConfig kc = parse_config(kd, "/nonexistent");
    CHECK(kc.condition.k0[8] == doctest::Approx(0.5));
}

TEST_CASE("k = 0 run reproduces the Cauchy solve") {
    const ExperimentConfig cfg = parse_config(heat_doc(0.0));
    const fs::path dir = scratch("cauchy");
    const RunResult r = run_experiment(cfg, dir);
    CHECK(r.exit_code == kExitOk);
    const Model m = Model::assemble(cfg.grid(), cfg.time, cfg.coeffs, cfg.theta);
    const Trajectory c = solve_backward_cauchy(m.stepper, {}, sample_data(cfg.xi, cfg.grid(), {}));
    const CsvTable t = read_csv(dir / "trajectory.csv");
    const int ck = t.column("knot"), cn = t.column("node"), cu = t.column("u");
    REQUIRE(t.rows.size() == 17 * 31);
    double worst = 0.0;
    for (const auto& row : t.rows) {
        const Vec& v = c.values[static_cast<int>(row[ck])];
        worst = std::max(worst, std::abs(row[cu] - v[static_cast<int>(row[cn])]));
    }
    CHECK(worst == 0.0);
}

TEST_CASE("runs are deterministic and write artifacts") {
    const ExperimentConfig cfg = parse_config(heat_doc(0.5));
    const fs::path a = scratch("run_a"), b = scratch("run_b");
    const RunResult ra = run_experiment(cfg, a);
    const RunResult rb = run_experiment(cfg, b);
    CHECK(ra.report.dump() == rb.report.dump());
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
    CHECK(ra.report["solve"]["verdict"]["status"] == "GuaranteedKappa");
    CHECK(ra.report["solve"]["residual_h0"].get<double>() <= 1e-8);
}

TEST_CASE("kappa outside [-1, 1] is flagged but solved") {
    const RunResult r = run_experiment(parse_config(heat_doc(1.5, 0.25)));
    CHECK(r.exit_code == kExitNotGuaranteed);
    CHECK(r.report["solve"]["verdict"]["kappa_check"] == "NotGuaranteedKappa");
    CHECK(r.report["solve"]["verdict"]["status"] == "FredholmNumeric");
    CHECK(r.report["solve"]["residual_h0"].get<double>() <= 1e-8);
}

TEST_CASE("observed orders of the refinement study") {
    ConvergeSpec s;
    s.levels = 3;
    s.k = 0.5;

    s.refine = "time";
    s.base_n = 15;
    s.base_steps = 8;
    const ConvergenceTable t1 = convergence_study(s, 1.0);
    CHECK(std::isnan(t1.rows[0].order));
    for (int l = 1; l < 3; ++l) CHECK(t1.rows[l].order == doctest::Approx(1.0).epsilon(0.2));
    const ConvergenceTable t2 = convergence_study(s, 0.5);
    for (int l = 1; l < 3; ++l) CHECK(t2.rows[l].order == doctest::Approx(2.0).epsilon(0.15));

    s.refine = "space";
    s.base_n = 7;
    s.space_steps = 256;
    const ConvergenceTable sp = convergence_study(s, 0.5);
    for (int l = 1; l < 3; ++l) CHECK(sp.rows[l].order == doctest::Approx(2.0).epsilon(0.15));
    CHECK(sp.to_json()["rows"].size() == 3);
}
