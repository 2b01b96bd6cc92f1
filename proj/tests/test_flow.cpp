#include <catch_amalgamated.hpp>

#include <cmath>

#include <acflow/flow.hpp>
#include <acflow/scenario.hpp>

using namespace acflow;
using Catch::Approx;

namespace {

const PotentialSet& P2() {
    static const PotentialSet p = make_default_potentials(2);
    return p;
}

constexpr double kEps = 0.12;
const Grid kGrid(2, 128, 2.4);

Field ball(std::array<double, 3> c = {1.2, 1.2, 0.0}, double amp = 0.1 * kEps) {
    return interpolate_to_field(*cached_profile(kEps, 1.0, 2, P2()), kGrid, c, {amp, 3});
}

FlowState state(const Field& u, bool fix = true, Backend b = Backend::spectral) {
    FlowConfig c;
    c.eps = kEps;
    c.volume_fix = fix;
    c.backend = b;
    return make_flow_state(u, c, P2());
}

RunOptions quiet() {
    RunOptions o;
    o.record_every = 10;
    o.census = false;
    o.center = false;
    return o;
}

} // namespace

TEST_CASE("stiffness and resolution guards") {
    CHECK_THROWS_AS(Stepper(kGrid, kEps, 0.3 * kEps * kEps, Backend::spectral, P2(), 0.25), DomainError);
    CHECK_THROWS_AS(state(interpolate_to_field(*cached_profile(0.08, 1.0, 2, P2()), Grid(2, 32, 2.4), {1.2, 1.2, 0}),
                          true),
                    DomainError);
}

TEST_CASE("energy decreases and volume is conserved") {
    for (Backend b : {Backend::spectral, Backend::fd}) {
        const double dt = 0.1 * kEps * kEps;
        const auto r = run(state(ball(), true, b), 200 * dt, dt, quiet());
        const auto early = run(state(ball(), true, b), 20 * dt, dt, quiet());
        const auto settled = run(early.state, 60 * dt, dt, quiet());
        INFO(to_string(b));
        CHECK(r.stats.max_ac_increase <= 1e-12 * r.stats.ac0);
        CHECK(r.stats.max_total_drift <= 1e-12);
        CHECK(r.stats.ac_final < r.stats.ac0);
        CHECK(settled.stats.energy_identity_error() <= 0.01);
    }
}

TEST_CASE("without the volume fix the drift stays small") {
    const double dt = 0.1 * kEps * kEps;
    const auto r = run(state(ball(), false), 200 * dt, dt, quiet());
    CHECK(r.stats.max_total_drift <= 1e-6);
}

TEST_CASE("multiplier keeps the velocity orthogonal along the flow") {
    const double dt = 0.1 * kEps * kEps;
    const auto r = run(state(ball()), 50 * dt, dt, quiet());
    const Field F = flow_velocity(r.state.u, kEps, MultiplierMode::exact(), P2());
    CHECK(std::abs(orthogonality_residual(r.state.u, F, MultiplierMode::exact(), P2())) <= 1e-12);
}

TEST_CASE("diffused ball is stationary") {
    const double dt = 0.1 * kEps * kEps;
    const Field u0 = ball({1.2, 1.2, 0.0}, 0.0);
    const auto r = run(state(u0), 500 * dt, dt, quiet());
    double d = 0.0;
    for (std::size_t i = 0; i < u0.size(); ++i) d = std::max(d, std::abs(r.state.u[i] - u0[i]));
    CHECK(d <= 1e-3);
    CHECK(r.records.back().lambda == Approx(cached_profile(kEps, 1.0, 2, P2())->Lambda).epsilon(1e-2));
}

TEST_CASE("grid translation commutes with the flow") {
    const double dt = 0.1 * kEps * kEps;
    const Field u0 = ball({1.21, 1.17, 0.0});
    const auto a = run(state(u0), 30 * dt, dt, quiet());
    const auto b = run(state(shift(u0, {5, -9, 0})), 30 * dt, dt, quiet());
    const Field sa = shift(a.state.u, {5, -9, 0});
    double d = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) d = std::max(d, std::abs(sa[i] - b.state.u[i]));
    CHECK(d <= 1e-12);
}

TEST_CASE("reruns are bit-identical") {
    const double dt = 0.1 * kEps * kEps;
    const auto a = run(state(ball()), 40 * dt, dt, quiet());
    const auto b = run(state(ball()), 40 * dt, dt, quiet());
    CHECK(a.state.u.values == b.state.u.values);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].ac == b.records[i].ac);
}

TEST_CASE("Fisher information matches the dissipation rate") {
    const double dt = 0.1 * kEps * kEps;
    auto s = state(ball());
    const auto r = run(s, 300 * dt, dt, quiet());
    for (std::size_t i = 1; i + 1 < r.records.size(); ++i) {
        CHECK(r.records[i].fisher > 0.0);
        CHECK(r.records[i].dissipation_residual <= 0.05);
    }
}

TEST_CASE("bubble census") {
    Scenario sc;
    sc.eps = kEps;
    sc.N = 128;
    sc.L = 3.6;
    sc.init.kind = InitSpec::Kind::multi_ball;
    sc.init.balls = {{0.5, {1.2, 1.8}}, {0.5, {2.4, 1.8}}};
    sc.init.normalize = false;
    const auto two = build_initial(sc.init, sc);
    const auto c2 = bubble_census(two.u, P2(), kEps);
    CHECK(c2.M == 2);
    for (const auto& b : c2.bubbles) CHECK(b.mass == Approx(0.5).epsilon(1e-3));
    CHECK(bubble_census(ball(), P2(), kEps).M == 1);
}

TEST_CASE("center estimate recovers the ball position") {
    const auto z = cached_profile(kEps, 1.0, 2, P2());
    const ProfileSampler s(*z);
    const auto c = estimate_center(ball({1.234, 1.187, 0.0}, 0.0), P2(), &s);
    CHECK(c[0] == Approx(1.234).margin(1e-4));
    CHECK(c[1] == Approx(1.187).margin(1e-4));
}

TEST_CASE("even extension round trip") {
    const Field u = ball();
    const Field e = even_extension(u);
    CHECK(e.grid.N == 2 * u.grid.N);
    CHECK(restrict_even(e).values == u.values);
}

TEST_CASE("dimension one is rejected") {
    Field u(Grid(1, 64, 2.0), 0.5);
    CHECK_THROWS_AS(make_flow_state(u, FlowConfig{}, P2()), DomainError);
}

TEST_CASE("diagnostics CSV carries full precision") {
    const double dt = 0.1 * kEps * kEps;
    const auto r = run(state(ball()), 20 * dt, dt, quiet());
    const auto path = (std::filesystem::temp_directory_path() / "acflow_diag.csv").string();
    write_diagnostics_csv(path, r.records, 2);
    std::ifstream is(path);
    std::string header, line;
    std::getline(is, header);
    CHECK(header.rfind("t,ac,volume,lambda,fisher", 0) == 0);
    std::getline(is, line);
    CHECK(std::stod(line.substr(line.find(',') + 1)) == r.records[0].ac);
}
