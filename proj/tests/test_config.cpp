#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "geomech/config.hpp"
#include "geomech/runner.hpp"

using namespace geomech;
namespace fs = std::filesystem;

namespace {

const char* kPendulumConfig =
    "system = pendulum\n"
    "mode = simulate\n"
    "integrator = verlet\n"
    "h = 0.01\n"
    "t_final = 10\n"
    "param.m = 1\n"
    "param.l = 1\n"
    "param.g = 9.81\n"
    "initial.q0 = 0.1\n"
    "initial.p0 = 0\n";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "geomech_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

} // namespace

TEST_CASE("well-formed config parses", "[config]") {
    const RunConfig cfg = parse_config(kPendulumConfig);
    CHECK(cfg.system.name == "pendulum");
    CHECK(cfg.mode == "simulate");
    CHECK(cfg.integrator == "verlet");
    CHECK(cfg.h == 0.01);
    CHECK(cfg.t_final == 10.0);
    CHECK(cfg.system.parameters.at("g") == 9.81);
    REQUIRE(cfg.initial_q.size() == 1);
    CHECK(cfg.initial_q[0] == 0.1);
    CHECK(cfg.initial_p[0] == 0.0);
    CHECK(cfg.output_format == "csv");
    CHECK(cfg.output_path == "out.csv");
}

TEST_CASE("config errors carry line numbers", "[config]") {
    try {
        parse_config("h = -1\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("'h'") != std::string::npos);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        CHECK(e.line() == 1);
    }

    CHECK_THROWS_AS(parse_config("mode = simulate\nmode = bvp\n"), ParseError);
    CHECK_THROWS_AS(parse_config(std::string(kPendulumConfig) + "bogus_key = 3\n"), ParseError);
    CHECK_THROWS_AS(parse_config(std::string(kPendulumConfig) + "tolerance.H = abc\n"), ParseError);
    CHECK_THROWS_AS(parse_config("system pendulum\n"), ParseError);
    CHECK_THROWS_AS(parse_config("mode = orbit\nsystem = pendulum\n"), ParseError);

    // index past the configuration dimension
    CHECK_THROWS_AS(parse_config(std::string(kPendulumConfig) + "initial.q3 = 1\n"), ParseError);
    // p and v cannot be mixed
    CHECK_THROWS_AS(parse_config(std::string(kPendulumConfig) + "initial.v0 = 1\n"), ParseError);
}

TEST_CASE("velocities convert to momenta through the mass matrix", "[config]") {
    std::string text(kPendulumConfig);
    const std::size_t at = text.find("initial.p0 = 0\n");
    text.replace(at, std::string("initial.p0 = 0\n").size(), "initial.v0 = 2\n");
    const RunConfig cfg = parse_config(text);
    CHECK(cfg.initial_p[0] == Catch::Approx(2.0)); // p = m l^2 v
}

TEST_CASE("comments, blank lines and overrides", "[config]") {
    const std::string text = "# pendulum demo\n\nsystem = pendulum  # catalog name\n" +
                             std::string(kPendulumConfig).substr(std::string("system = pendulum\n").size());
    const RunConfig cfg = parse_config(text, {"h=0.02", "output=traj.csv"});
    CHECK(cfg.h == 0.02);
    CHECK(cfg.output_path == "traj.csv");
    CHECK_THROWS_AS(parse_config(text, {"h"}), ParseError);
}

TEST_CASE("render and reparse give the same config", "[config]") {
    const RunConfig simulate = parse_config(kPendulumConfig);
    CHECK(parse_config(render_config(simulate)) == simulate);

    const RunConfig bvp = parse_config(
        "system = free-particle\nmode = bvp\nparam.m = 1\nt_final = 1\nbvp.n = 8\n"
        "bvp.qb0 = 1\noutput = path.csv\n");
    CHECK(parse_config(render_config(bvp)) == bvp);
    CHECK(bvp.h == Catch::Approx(0.125));

    const RunConfig top = parse_config(
        "system = euler-top\nmode = euler-top\nparam.i1 = 1\nparam.i2 = 2\nparam.i3 = 3\n"
        "h = 0.001\nt_final = 1\ninitial.pi0 = 1\ntolerance.casimir = 1e-8\n");
    CHECK(parse_config(render_config(top)) == top);
}

TEST_CASE("mode-specific key validation", "[config]") {
    // bvp rejects h and integrator
    CHECK_THROWS_AS(
        parse_config("system = free-particle\nmode = bvp\nparam.m = 1\nt_final = 1\nbvp.n = 8\nh = 0.1\n"),
        ParseError);
    // euler-top demands the matching system name and inertia parameters
    CHECK_THROWS_AS(parse_config("system = pendulum\nmode = euler-top\nh = 0.1\nt_final = 1\n"),
                    ParseError);
    CHECK_THROWS_AS(
        parse_config("system = euler-top\nmode = euler-top\nparam.i1 = 1\nparam.i2 = 2\nh = 0.1\nt_final = 1\n"),
        ParseError);
}

TEST_CASE("simulate run writes a trajectory and a passing report", "[config]") {
    const fs::path dir = fresh_dir("simulate");
    RunConfig cfg = parse_config(kPendulumConfig, {"t_final=1"});
    cfg.output_path = (dir / "pendulum.csv").string();

    std::ostringstream diag;
    const int status = run(cfg, diag);
    INFO(diag.str());
    CHECK(status == 0);

    const std::string csv = read_file(dir / "pendulum.csv");
    // meta comment + header + 101 states
    CHECK(count_lines(csv) == 103);
    CHECK(csv.rfind("# meta: system=pendulum manifold=circle method=verlet", 0) == 0);
    CHECK(csv.find("t,q0,p0,H\n") != std::string::npos);

    const std::string report = read_file(dir / "pendulum.csv.report.json");
    CHECK(report.find("\"name\": \"H\"") != std::string::npos);
    CHECK(report.find("\"all_pass\": true") != std::string::npos);

    // byte-identical on a second run
    const int again = run(cfg, diag);
    CHECK(again == 0);
    CHECK(read_file(dir / "pendulum.csv") == csv);
    CHECK(read_file(dir / "pendulum.csv.report.json") == report);
}

TEST_CASE("bvp run reproduces uniform motion", "[config]") {
    const fs::path dir = fresh_dir("bvp");
    RunConfig cfg = parse_config(
        "system = free-particle\nmode = bvp\nparam.m = 1\nt_final = 1\nbvp.n = 8\nbvp.qb0 = 1\n");
    cfg.output_path = (dir / "line.csv").string();
    std::ostringstream diag;
    CHECK(run(cfg, diag) == 0);

    std::istringstream csv(read_file(dir / "line.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "t,q0,q1,q2");
    int row = 0;
    while (std::getline(csv, line)) {
        const double q0 = std::stod(line.substr(line.find(',') + 1));
        CHECK(q0 == Catch::Approx(row / 8.0).margin(1e-12));
        ++row;
    }
    CHECK(row == 9);
}

TEST_CASE("euler-top run keeps a principal-axis spin fixed", "[config]") {
    const fs::path dir = fresh_dir("top");
    RunConfig cfg = parse_config(
        "system = euler-top\nmode = euler-top\nparam.i1 = 1\nparam.i2 = 2\nparam.i3 = 3\n"
        "h = 0.001\nt_final = 0.1\ninitial.pi0 = 1\n");
    cfg.output_path = (dir / "top.csv").string();
    std::ostringstream diag;
    CHECK(run(cfg, diag) == 0);

    std::istringstream csv(read_file(dir / "top.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "t,Pi1,Pi2,Pi3,casimir,energy");
    while (std::getline(csv, line)) {
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ','); // t
        std::getline(row, cell, ',');
        CHECK(std::stod(cell) == 1.0);
        std::getline(row, cell, ',');
        CHECK(std::stod(cell) == 0.0);
    }
}

TEST_CASE("exit codes distinguish failure kinds", "[config]") {
    const fs::path dir = fresh_dir("codes");
    std::ostringstream diag;

    // conservation violated against an intentionally unreachable tolerance
    RunConfig strict = parse_config(kPendulumConfig, {"t_final=1", "tolerance.H=1e-16"});
    strict.output_path = (dir / "strict.csv").string();
    CHECK(run(strict, diag) == 2);

    // execution error: the leapfrog refuses a configuration-dependent mass matrix
    RunConfig bad = parse_config(
        "system = double-pendulum\nmode = simulate\nintegrator = verlet\nh = 0.01\nt_final = 1\n"
        "param.m1 = 1\nparam.m2 = 1\nparam.l1 = 1\nparam.l2 = 1\nparam.g = 9.81\n");
    bad.output_path = (dir / "bad.csv").string();
    diag.str("");
    CHECK(run(bad, diag) == 1);
    CHECK(diag.str().find("geomech:") != std::string::npos);

    // json output is also deterministic
    RunConfig json_cfg = parse_config(kPendulumConfig, {"t_final=1", "format=json"});
    json_cfg.output_path = (dir / "pendulum.json").string();
    CHECK(run(json_cfg, diag) == 0);
    const std::string once = read_file(dir / "pendulum.json");
    CHECK(run(json_cfg, diag) == 0);
    CHECK(read_file(dir / "pendulum.json") == once);
    CHECK(once.find("\"columns\":[\"t\",\"q0\",\"p0\",\"H\"]") != std::string::npos);
}
