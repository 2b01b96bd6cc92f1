#include <catch_amalgamated.hpp>

#include <cmath>

#include <acflow/multiplier.hpp>
#include <acflow/radial.hpp>

using namespace acflow;
using Catch::Approx;

namespace {

const PotentialSet& P2() {
    static const PotentialSet p = make_default_potentials(2);
    return p;
}

Field perturbed_ball(double eps) {
    const auto z = cached_profile(eps, 1.0, 2, P2());
    return interpolate_to_field(*z, Grid(2, 128, 2.4), {1.2, 1.2, 0.0}, {0.1 * eps, 3});
}

} // namespace

TEST_CASE("flow velocity is orthogonal to V'(u)") {
    const Field u = perturbed_ball(0.1);
    for (Backend b : {Backend::spectral, Backend::fd}) {
        const Field F = flow_velocity(u, 0.1, MultiplierMode::exact(), P2(), b);
        CHECK(std::abs(orthogonality_residual(u, F, MultiplierMode::exact(), P2())) <= 1e-12);
    }
}

TEST_CASE("weak and gradient forms of the multiplier agree under refinement") {
    const double eps = 0.1;
    const auto z = cached_profile(eps, 1.0, 2, P2());
    double prev = 1e300;
    for (int N : {64, 128, 256}) {
        const Field u = interpolate_to_field(*z, Grid(2, N, 2.4), {1.2, 1.2, 0.0}, {0.1 * eps, 3});
        const double a = lambda(u, eps, MultiplierMode::exact(), P2(), Backend::spectral, LambdaForm::gradient);
        const double b = lambda(u, eps, MultiplierMode::exact(), P2(), Backend::spectral, LambdaForm::weak);
        const double d = std::abs(a - b) / std::abs(b);
        CHECK(d < prev);
        prev = d;
    }
    CHECK(prev <= 1e-3);
}

TEST_CASE("multiplier at the diffused ball is Lambda") {
    const double eps = 0.1;
    const auto z = cached_profile(eps, 1.0, 2, P2());
    const Field u = interpolate_to_field(*z, Grid(2, 128, 2.4), {1.2, 1.2, 0.0});
    const double l = lambda(u, eps, MultiplierMode::exact(), P2(), Backend::spectral, LambdaForm::weak);
    CHECK(l == Approx(z->Lambda).epsilon(1e-3));
    double prev = 1e300;
    for (int N : {64, 128, 256}) {
        const double r = stationary_residual(interpolate_to_field(*z, Grid(2, N, 2.4), {1.2, 1.2, 0.0}), eps,
                                             MultiplierMode::exact(), P2());
        CHECK(r < 0.5 * prev);
        prev = r;
    }
}

TEST_CASE("Neumann multiplier is the mean of W'") {
    const Field u = perturbed_ball(0.1);
    double s = 0.0;
    for (double x : u.values) s += P2().dW(x);
    const double expect = s * u.grid.cell_volume() / (0.1 * u.grid.box_volume());
    CHECK(lambda(u, 0.1, MultiplierMode::neumann(), P2()) == Approx(expect).epsilon(1e-14));
}

TEST_CASE("degenerate denominator is reported") {
    const Field u(Grid(2, 32, 1.0), 0.0);
    CHECK_THROWS_AS(lambda(u, 0.1, MultiplierMode::exact(), P2()), DegenerateDenominator);
}

TEST_CASE("regularized multiplier converges as delta shrinks") {
    const double eps = 0.08;
    const auto z = cached_profile(eps, 1.0, 2, P2());
    const Field u = interpolate_to_field(*z, Grid(2, 128, 2.0), {1.0, 1.0, 0.0}, {0.1 * eps, 3});
    const double exact = lambda(u, eps, MultiplierMode::exact(), P2());
    double prev = 1e300;
    for (double d : {0.1, 0.05, 0.025}) {
        const auto mode = MultiplierMode::regularized(build_regularized_volume(P2(), d));
        const double diff = std::abs(lambda(u, eps, mode, P2()) - exact);
        CHECK(diff < prev);
        prev = diff;
    }
}
