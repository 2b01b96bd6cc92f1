#include <catch_amalgamated.hpp>

#include <cmath>

#include <acflow/potentials.hpp>

using namespace acflow;
using Catch::Approx;

namespace {

double simpson_sqrtW(const PotentialSet& p, int n) {
    const double h = 1.0 / n;
    double s = std::sqrt(p.W(0.0)) + std::sqrt(p.W(1.0));
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * std::sqrt(p.W(i * h));
    return s * h / 3.0;
}

class Sextic final : public DoubleWell {
public:
    std::string name() const override { return "sextic-test"; }
    double W(double r) const override { return 36.0 * r * r * (1 - r) * (1 - r) * (1 + r * r); }
    double dW(double) const override { return 0.0; }
    double d2W(double) const override { return 72.0; }
    double Phi(double r) const override { return r; }
    double dPhi(double) const override { return 1.0; }
    double d2Phi(double) const override { return 0.0; }
};

} // namespace

TEST_CASE("normalization of the default well") {
    for (int n : {2, 3}) {
        const auto p = make_default_potentials(n);
        CHECK(std::abs(p.normalization_residual()) <= 1e-10);
        CHECK(simpson_sqrtW(p, 20000) == Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("well curvature and endpoint values") {
    const auto p = make_default_potentials(2);
    CHECK(p.d2W(0.0) == 72.0);
    CHECK(p.d2W(1.0) == 72.0);
    CHECK(p.W(0.0) == 0.0);
    CHECK(p.W(1.0) == 0.0);
    CHECK(p.Phi(1.0) == 1.0);
    CHECK(p.V(1.0) == 1.0);
    CHECK(validate(p).empty());
    CHECK(validate(make_default_potentials(3)).empty());
}

TEST_CASE("V is Phi to the power n/(n-1)") {
    const auto p2 = make_default_potentials(2), p3 = make_default_potentials(3);
    for (double r = 0.01; r < 1.0; r += 0.07) {
        const double f = 3 * r * r - 2 * r * r * r;
        CHECK(p2.V(r) == Approx(f * f).epsilon(1e-14));
        CHECK(p3.V(r) == Approx(std::pow(f, 1.5)).epsilon(1e-14));
    }
}

TEST_CASE("derivatives agree with central differences") {
    for (int n : {2, 3}) {
        const auto p = make_default_potentials(n);
        const double h = 1e-6;
        for (double r = 0.05; r < 0.96; r += 0.09) {
            CHECK(p.dW(r) == Approx((p.W(r + h) - p.W(r - h)) / (2 * h)).epsilon(1e-7).margin(1e-8));
            CHECK(p.d2W(r) == Approx((p.dW(r + h) - p.dW(r - h)) / (2 * h)).epsilon(1e-7));
            CHECK(p.dPhi(r) == Approx(std::sqrt(p.W(r))).epsilon(1e-13));
            CHECK(p.dV(r) == Approx((p.V(r + h) - p.V(r - h)) / (2 * h)).epsilon(1e-7));
            CHECK(p.d2V(r) == Approx((p.dV(r + h) - p.dV(r - h)) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("batch reaction matches pointwise derivatives") {
    const auto p = make_default_potentials(2);
    std::vector<double> u{0.0, 0.1, 0.37, 0.5, 0.9, 1.0, -0.001, 1.002}, dw(u.size()), dv(u.size());
    p.reaction(u.data(), u.size(), dw.data(), dv.data());
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(dw[i] == Approx(p.dW(u[i])).margin(1e-15));
        CHECK(dv[i] == Approx(p.dV(u[i])).margin(1e-15));
    }
}

TEST_CASE("second-order Taylor remainder is cubic") {
    for (int n : {2, 3}) {
        const auto r = potential_taylor_residual(make_default_potentials(n), TaylorTarget::W);
        CHECK(std::abs(r.exponent - 3.0) <= 0.01);
        CHECK(std::isfinite(r.c));
    }
}

TEST_CASE("near-well constants are finite") {
    const auto c = measure_near_well(make_default_potentials(2));
    CHECK(std::isfinite(c.c_w));
    CHECK(c.c_w >= 1.0);
    CHECK(std::isfinite(c.c_v));
}

TEST_CASE("dimension one is rejected") {
    CHECK_THROWS_AS(make_default_potentials(1), DomainError);
    CHECK_THROWS_AS(make_potentials(2, "no-such-well"), DomainError);
}

TEST_CASE("registered wells are validated") {
    register_potential("sextic-test", [] { return std::make_shared<Sextic>(); });
    const auto names = registered_potentials();
    CHECK(std::find(names.begin(), names.end(), "sextic-test") != names.end());
    const auto p = make_potentials(2, "sextic-test");
    CHECK(std::abs(p.normalization_residual()) > 1e-3);
    CHECK_FALSE(validate(p).empty());
}

TEST_CASE("regularized volume approaches V") {
    const auto p = make_default_potentials(2);
    double prev = 1e300;
    for (double d : {0.1, 0.05, 0.025}) {
        const auto v = build_regularized_volume(p, d);
        double worst = 0.0;
        for (double r = 0.0; r <= 1.0; r += 1.0 / 512) worst = std::max(worst, std::abs(v->V(r) - p.V(r)));
        CHECK(worst < prev);
        prev = worst;
    }
    CHECK_THROWS_AS(build_regularized_volume(p, 0.2), DomainError);
    CHECK_THROWS_AS(build_regularized_volume(p, 0.0), DomainError);
}
