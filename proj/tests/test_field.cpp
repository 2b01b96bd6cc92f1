#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include <acflow/check.hpp>
#include <acflow/field.hpp>

using namespace acflow;
using Catch::Approx;

namespace {

Field cos_mode(const Grid& g, int k) {
    Field u(g);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.5 + 0.25 * std::cos(2 * M_PI * k * u.x(i, 0) / g.L);
    return u;
}

} // namespace

TEST_CASE("grid guards") {
    CHECK_THROWS_AS(Grid(2, 100, 1.0), DomainError);
    CHECK_THROWS_AS(Grid(2, 8, 1.0), DomainError);
    CHECK_THROWS_AS(Grid(2, 64, 0.0), DomainError);
    CHECK_THROWS_AS(Grid(4, 64, 1.0), DomainError);
    CHECK_THROWS_AS(Grid(2, 64, 2.0).require_resolution(0.05), DomainError);
    CHECK_NOTHROW(Grid(2, 128, 2.0).require_resolution(0.08));
}

TEST_CASE("spectral Laplacian is exact on Fourier modes") {
    const Grid g(2, 64, 3.0);
    const Field u = cos_mode(g, 3);
    const Field l = laplacian(u, Backend::spectral);
    const double k2 = std::pow(2 * M_PI * 3 / g.L, 2);
    for (std::size_t i = 0; i < u.size(); i += 37) CHECK(l[i] == Approx(-k2 * (u[i] - 0.5)).margin(1e-10));
}

TEST_CASE("finite-difference Laplacian is second order") {
    double prev = 0.0;
    for (int N : {32, 64, 128}) {
        const Grid g(2, N, 1.0);
        const Field u = cos_mode(g, 1);
        const Field l = laplacian(u, Backend::fd);
        const double k2 = std::pow(2 * M_PI, 2);
        double err = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) err = std::max(err, std::abs(l[i] + k2 * (u[i] - 0.5)));
        if (prev > 0.0) CHECK(prev / err == Approx(4.0).epsilon(0.01));
        prev = err;
    }
}

TEST_CASE("Dirichlet energy of a cosine mode") {
    const Grid g(2, 64, 2.0);
    const Field u = cos_mode(g, 2);
    const double k = 2 * M_PI * 2 / g.L;
    const double exact = 0.0625 * k * k * g.L * g.L / 2.0;
    CHECK(dirichlet_energy(u, Backend::spectral) == Approx(exact).epsilon(1e-12));
}

TEST_CASE("Modica-Mortola lower bound on random smooth fields") {
    const Grid g(2, 128, 2.0);
    const auto p = make_default_potentials(2);
    std::mt19937_64 rng(7);
    for (int k = 0; k < 20; ++k) {
        const Field u = random_smooth_field(g, rng);
        CHECK(ac_energy(u, 0.08, p).isoperimetric_slack >= -1e-8);
    }
}

TEST_CASE("energy is invariant under grid symmetries") {
    const Grid g(2, 64, 2.0);
    const auto p = make_default_potentials(2);
    std::mt19937_64 rng(3);
    const Field u = random_smooth_field(g, rng);
    const double e = ac_energy(u, 0.1, p).ac;
    for (Backend b : {Backend::spectral, Backend::fd}) {
        const double eb = ac_energy(u, 0.1, p, b).ac;
        CHECK(ac_energy(shift(u, {7, 3, 0}), 0.1, p, b).ac == Approx(eb).epsilon(1e-13));
        CHECK(ac_energy(transpose(u, 0, 1), 0.1, p, b).ac == Approx(eb).epsilon(1e-13));
        CHECK(ac_energy(reflect(u, 1), 0.1, p, b).ac == Approx(eb).epsilon(1e-13));
    }
    CHECK(e > 0.0);
}

TEST_CASE("gradient matches central differences of the energy") {
    const Grid g(2, 128, 2.0);
    const auto p = make_default_potentials(2);
    std::mt19937_64 rng(11);
    const Field u = random_smooth_field(g, rng);
    for (Backend b : {Backend::spectral, Backend::fd}) {
        const auto r = gradient_check(u, 0.08, p, b, 4, rng);
        CHECK(r.worst <= 1e-6);
    }
}

TEST_CASE("range guard") {
    const Grid g(2, 16, 1.0);
    Field u(g, 0.5);
    u[3] = 1.5;
    CHECK_THROWS_AS(ac_energy(u, 0.1, make_default_potentials(2)), RangeError);
}

TEST_CASE("snapshot round trip is bit-identical") {
    const Grid g(2, 32, 1.5);
    std::mt19937_64 rng(5);
    const Field u = random_smooth_field(g, rng);
    const auto path = (std::filesystem::temp_directory_path() / "acflow_field_snap.bin").string();
    save_snapshot(path, u, 0.25, 0.1);
    SnapshotHeader h;
    const Field v = load_snapshot(path, &h);
    CHECK(v.values == u.values);
    CHECK(h.N == 32);
    CHECK(h.L == 1.5);
    CHECK(h.t == 0.25);
}
