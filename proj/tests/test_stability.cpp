#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include <acflow/stability.hpp>

using namespace acflow;
using Catch::Approx;

namespace {

const PotentialSet& P2() {
    static const PotentialSet p = make_default_potentials(2);
    return p;
}

Eigen::MatrixXd dense(const BandMatrix& b) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(b.rows(), b.rows());
    for (int i = 0; i < b.rows(); ++i)
        for (int j = 0; j < b.rows(); ++j) m(i, j) = b.get(i, j);
    return m;
}

/// Generalized eigenvalues of A x = l M x, optionally restricted to g^T x = 0.
Eigen::VectorXd dense_eigs(const QBlock& b, bool constrained) {
    Eigen::MatrixXd A = dense(b.A), M = dense(b.M);
    if (constrained && !b.constraint.empty()) {
        Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(b.constraint.data(), b.size());
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        Eigen::MatrixXd Q = qr.householderQ();
        Eigen::MatrixXd Z = Q.rightCols(b.size() - 1);
        A = Z.transpose() * A * Z;
        M = Z.transpose() * M * Z;
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, M);
    return es.eigenvalues();
}

std::shared_ptr<const RadialProfile> coarse_profile() {
    static const auto z = [] {
        RadialOptions o;
        o.degree = 8;
        o.elements_per_eps = 3;
        o.growth = 1.6;
        return share(solve_profile(0.1, 1.0, 2, P2(), o));
    }();
    return z;
}

} // namespace

TEST_CASE("sphere modes and multiplicities") {
    const auto m2 = sphere_mode_check(2, 6);
    const std::vector<long> mu2{0, 1, 1, 4, 4, 9, 9};
    REQUIRE(m2.size() == mu2.size());
    for (std::size_t i = 0; i < m2.size(); ++i) {
        CHECK(m2[i].mu == mu2[i]);
        CHECK(m2[i].mu == m2[i].closed_form);
    }
    const auto m3 = sphere_mode_check(3, 8);
    const std::vector<long> mu3{0, 2, 2, 2, 6, 6, 6, 6, 6};
    for (std::size_t i = 0; i < m3.size(); ++i) CHECK(m3[i].mu == mu3[i]);
}

TEST_CASE("banded inertia and constrained solver match a dense eigensolver") {
    const auto q = assemble(coarse_profile(), 4);
    REQUIRE(q.radial().size() < 1500);
    for (long mu : {0L, 1L, 4L}) {
        const QBlock& b = q.block(mu);
        const Eigen::VectorXd ev = dense_eigs(b, false);
        INFO("mu = " << mu);
        for (int k = 0; k < 3; ++k) CHECK(block_eigenvalue(b, k) == Approx(ev(k)).epsilon(1e-8).margin(1e-9));
        CHECK(count_below(b, 0.5 * (ev(0) + ev(1))) == 1);
        if (!b.constraint.empty()) {
            const Eigen::VectorXd cv = dense_eigs(b, true);
            CHECK(constrained_min_eig_secular(b, b.constraint) == Approx(cv(0)).epsilon(1e-7));
            const auto r = projected_inverse_iteration(b, b.constraint);
            CHECK(r.value == Approx(cv(0)).epsilon(1e-7));
        }
    }
}

TEST_CASE("stability sectors at eps = 0.1") {
    const auto q = assemble(cached_profile(0.1, 1.0, 2, P2()), 8);
    const double all = constrained_min_eig(q, Sector::all_constrained);
    const double rad = constrained_min_eig(q, Sector::radial);
    CHECK(all > 0.0);
    CHECK(rad >= 10.0 * all);
    CHECK(count_below(q.radial(), 0.0) == 1);
    CHECK(std::abs(translation_rayleigh(q)) <= 1e-5 * rad);
    CHECK(q.symmetry_residual <= 1e-9);
}

TEST_CASE("transformed quadratic form identity") {
    const auto z = cached_profile(0.1, 1.0, 2, P2());
    const double a = 0.5 * z->r0, b = 1.6 * z->r0;
    auto g = [a, b](double r) -> std::array<double, 2> {
        if (r <= a || r >= b) return {0.0, 0.0};
        const double x = (r - a) / (b - a), s = std::sin(M_PI * x), c = std::cos(M_PI * x);
        const double w = 1 + 0.3 * std::cos(3 * x);
        return {s * s * w, (2 * s * c * M_PI * w - s * s * 0.9 * std::sin(3 * x)) / (b - a)};
    };
    for (long mu : {0L, 1L, 4L}) CHECK(psi_transform_check(*z, mu, g).relative_error <= 1e-6);
}

TEST_CASE("coarse meshes and too few modes are rejected") {
    RadialOptions o;
    o.degree = 4;
    o.elements_per_eps = 2;
    const auto z = share(solve_profile(0.1, 1.0, 2, P2(), o));
    CHECK_THROWS_AS(assemble(z, 4), DomainError);
    CHECK_THROWS_AS(assemble(cached_profile(0.1, 1.0, 2, P2()), 2), DomainError);
}
