#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include <acflow/check.hpp>
#include <acflow/experiments.hpp>
#include <acflow/scenario.hpp>

using namespace acflow;
using Catch::Approx;

namespace fs = std::filesystem;

namespace {

Scenario two_ball(double eps = 0.12) {
    Scenario s;
    s.name = "two";
    s.eps = eps;
    s.L = 3.6;
    s.N = 128;
    s.dt = 0.1 * eps * eps;
    s.init.kind = InitSpec::Kind::multi_ball;
    s.init.balls = {{0.5, {1.2015, 1.8}}, {0.5, {2.3985, 1.8}}};
    return s;
}

std::string message_of(const Scenario& s) {
    try {
        validate(s);
    } catch (const DomainError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("scenario round trip") {
    Scenario s = two_ball();
    s.name = "rt";
    s.backend = Backend::fd;
    s.volume_fix = false;
    s.dt = 1.0 / 3.0 * 1e-3;
    s.fisher_floor = 1e-9;
    s.snapshot_every = 50;
    const Scenario t = parse_scenario(serialize(s));
    CHECK(t == s);
    CHECK(serialize(t) == serialize(s));

    Scenario d;
    d.init.center = {0.9, 1.1};
    d.init.amplitude = 0.008;
    d.init.wavenumber = 3;
    CHECK(parse_scenario(serialize(d)) == d);
}

TEST_CASE("config text with comments and defaults") {
    const auto s = parse_scenario("# comment\nname = x\n[model]\n; another\neps = 0.1\n[grid]\nN = 64\nL = 2.4\n");
    CHECK(s.name == "x");
    CHECK(s.eps == 0.1);
    CHECK(s.N == 64);
    CHECK(s.dt == Approx(0.1 * 0.1 * 0.1));
    CHECK_NOTHROW(validate(s));
    CHECK_THROWS_AS(parse_scenario("[model]\neps = abc\n"), DomainError);
    CHECK_THROWS_AS(parse_scenario("[init]\nkind = cube\n"), DomainError);
}

TEST_CASE("guards name the violated inequality") {
    Scenario s;
    s.N = 32;
    CHECK(message_of(s).find("h = L/N") != std::string::npos);
    s = Scenario{};
    s.dt = 0.3 * s.eps * s.eps;
    CHECK(message_of(s).find("dt <= 0.25 eps^2") != std::string::npos);
    s = Scenario{};
    s.L = 1.5;
    s.N = 128;
    CHECK(message_of(s).find("r0 + 5 eps") != std::string::npos);
    s = Scenario{};
    s.n = 1;
    CHECK(message_of(s).find("n >= 2") != std::string::npos);
    s = two_ball();
    s.init.balls[1].center = {1.9, 1.8};
    CHECK(message_of(s).find("overlap") != std::string::npos);
    s = Scenario{};
    s.eps = 0.4;
    s.dt = 0.01;
    s.N = 256;
    s.L = 8.0;
    CHECK(message_of(s).find("eps < 0.3 m^{1/n}") != std::string::npos);
}

TEST_CASE("diffused ball satisfies the energy hypothesis") {
    Scenario s;
    const auto d = build_initial(s.init, s);
    CHECK(d.energy_hypothesis_known);
    CHECK(d.energy_hypothesis);
    CHECK(d.volume == Approx(1.0).epsilon(1e-14));
    CHECK(d.ac == Approx(psi(0.08, 1.0, 2, make_default_potentials(2))).epsilon(1e-3));
}

TEST_CASE("two far-apart half balls sit at the two-ball energy level") {
    const Scenario s = two_ball();
    const auto d = build_initial(s.init, s);
    const double level = 2.0 * psi(s.eps, 0.5, 2, make_default_potentials(2));
    CHECK(std::abs(d.ac - level) <= 0.01 * level);
    CHECK_FALSE(d.energy_hypothesis);
    CHECK(d.compact);
    CHECK(d.volume == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("raw snapshot round trip is bit-identical") {
    Scenario s;
    s.init.amplitude = 0.008;
    s.init.wavenumber = 3;
    const auto a = build_initial(s.init, s);
    const auto path = (fs::temp_directory_path() / "acflow_init.bin").string();
    save_snapshot(path, a.u, 0.0, s.eps);
    InitSpec raw;
    raw.kind = InitSpec::Kind::raw_snapshot;
    raw.path = path;
    const auto b = build_initial(raw, s);
    CHECK(b.u.values == a.u.values);
}

TEST_CASE("line fit") {
    std::vector<double> x{0, 1, 2, 3, 4}, y;
    for (double v : x) y.push_back(2.0 - 0.5 * v);
    const auto f = fit_line(x, y);
    CHECK(f.slope == Approx(-0.5));
    CHECK(f.intercept == Approx(2.0));
    CHECK(f.r2 == Approx(1.0));
}

TEST_CASE("SVG charts are written") {
    const auto dir = fs::temp_directory_path() / "acflow_svg";
    std::vector<DiagRecord> recs(5);
    for (int i = 0; i < 5; ++i) {
        recs[i].t = i;
        recs[i].ac = 8 - 0.1 * i;
        recs[i].volume = 1;
        recs[i].lambda = 3.5;
        recs[i].fisher = std::exp(-i);
    }
    write_run_plots(dir.string(), recs, 7.0, 3.5);
    for (const char* f : {"energy.svg", "lambda.svg", "fisher.svg", "volume.svg"}) {
        std::ifstream is(dir / f);
        std::string first;
        std::getline(is, first);
        CHECK(first.rfind("<svg", 0) == 0);
    }
}

TEST_CASE("short convergence experiment writes its outputs") {
    Scenario s;
    s.name = "short";
    s.eps = 0.12;
    s.N = 64;
    s.L = 2.4;
    s.dt = 0.1 * 0.12 * 0.12;
    s.T = 100 * s.dt;
    s.record_every = 10;
    s.init.amplitude = 0.012;
    s.init.wavenumber = 3;
    s.out_dir = (fs::temp_directory_path() / "acflow_short").string();
    const auto r = experiment_convergence(s);
    CHECK(r.M_final == 1);
    CHECK(r.run.stats.max_ac_increase <= 1e-12 * r.run.stats.ac0);
    for (const char* f : {"diagnostics.csv", "report.txt", "energy.svg", "final.bin", "scenario.ini"})
        CHECK(fs::exists(fs::path(s.out_dir) / f));
    CHECK(load_scenario((fs::path(s.out_dir) / "scenario.ini").string()) == s);
}

TEST_CASE("check suite exit codes") {
    std::ostringstream a, b;
    CHECK(check_suite(a) == 0);
    CheckOptions o;
    o.corrupt_potential_normalization = true;
    CHECK(check_suite(b, o) == 1);
    CHECK(b.str().find("FAIL potentials  normalization") != std::string::npos);
}
