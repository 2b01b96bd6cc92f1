#ifndef ACFLOW_STABILITY_HPP
#define ACFLOW_STABILITY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "radial.hpp"

namespace acflow {

struct SphereMode {
    int index = 0;      ///< i in the orthonormal basis A_i
    int degree = 0;     ///< harmonic degree k
    long mu = 0;        ///< eigenvalue used in assembly
    long closed_form = 0;
};

/// Spherical-harmonic eigenvalues mu_i with multiplicity, i = 0..i_max.
inline std::vector<SphereMode> sphere_modes(int n, int i_max) {
    if (n < 2) throw DomainError("sphere modes require n >= 2");
    auto binom = [](long a, long b) -> long {
        if (b < 0 || a < b) return 0;
        long r = 1;
        for (long j = 1; j <= b; ++j) r = r * (a - b + j) / j;
        return r;
    };
    std::vector<SphereMode> out;
    for (int k = 0; static_cast<int>(out.size()) <= i_max; ++k) {
        // dimension of degree-k harmonic polynomials in n variables
        const long mult = binom(k + n - 1, n - 1) - binom(k + n - 3, n - 1);
        for (long j = 0; j < mult && static_cast<int>(out.size()) <= i_max; ++j) {
            SphereMode s;
            s.index = static_cast<int>(out.size());
            s.degree = k;
            s.mu = static_cast<long>(k) * (k + n - 2);
            out.push_back(s);
        }
    }
    return out;
}

/// Table comparing assembly eigenvalues with k(k+n-2); all rows must match.
inline std::vector<SphereMode> sphere_mode_check(int n, int i_max) {
    auto modes = sphere_modes(n, i_max);
    for (auto& m : modes) m.closed_form = static_cast<long>(m.degree) * (m.degree + n - 2);
    return modes;
}

/// One radial block of the second variation: stiffness A and mass M on the free dofs.
struct QBlock {
    long mu = 0;
    int first = 0;  ///< first global dof (1 when phi(0) = 0 is imposed)
    BandMatrix A, M;
    std::vector<double> constraint;  ///< empty when the sector is unconstrained
    int size() const { return A.rows(); }
};

enum class Sector { radial, translation, higher, all_constrained };

inline std::string to_string(Sector s) {
    switch (s) {
    case Sector::radial: return "radial";
    case Sector::translation: return "translation";
    case Sector::higher: return "higher";
    default: return "all-constrained";
    }
}

/// Discretized constrained second variation at a diffused ball.
struct QForm {
    std::shared_ptr<const RadialProfile> profile;
    std::vector<SphereMode> modes;
    std::map<long, QBlock> blocks;  ///< keyed by mu
    double symmetry_residual = 0.0;

    const QBlock& block(long mu) const { return blocks.at(mu); }
    const QBlock& radial() const { return blocks.at(0); }
    const QBlock& translation() const { return blocks.at(profile->n - 1); }
};

namespace detail {

/// zeta'(r) at every GLL node (average of one-sided element derivatives at element edges)
inline std::vector<double> nodal_derivative(const RadialProfile& z) {
    const auto& ref = *z.ref;
    const int p = z.mesh.p;
    const LagrangeBasis lb(ref.gll);
    std::vector<double> d(z.mesh.ndof(), 0.0), cnt(z.mesh.ndof(), 0.0), dv(p + 1);
    for (std::size_t e = 0; e < z.mesh.elements(); ++e) {
        const double J = (z.mesh.edges[e + 1] - z.mesh.edges[e]) / 2.0;
        for (int k = 0; k <= p; ++k) {
            lb.eval(ref.gll[k], nullptr, dv.data(), nullptr);
            double s = 0.0;
            for (int a = 0; a <= p; ++a) s += z.coef[e * p + a] * dv[a];
            d[e * p + k] += s / J;
            cnt[e * p + k] += 1.0;
        }
    }
    for (std::size_t i = 0; i < d.size(); ++i) d[i] /= cnt[i];
    d.front() = 0.0;
    return d;
}

inline QBlock assemble_block(const RadialProfile& z, long mu) {
    const auto& ref = *z.ref;
    const auto& P = *z.potentials;
    const int p = z.mesh.p, n = z.n;
    const double eps = z.eps, Lam = z.Lambda, S = sphere_area(n);
    QBlock b;
    b.mu = mu;
    b.first = mu > 0 ? 1 : 0;
    const int nf = static_cast<int>(z.mesh.ndof()) - 1 - b.first;
    b.A = BandMatrix(nf, p, p);
    b.M = BandMatrix(nf, p, p);
    const std::size_t nb = p + 1;
    std::vector<double> la(nb * nb), lm(nb * nb);
    for (std::size_t e = 0; e < z.mesh.elements(); ++e) {
        const double a = z.mesh.edges[e], J = (z.mesh.edges[e + 1] - a) / 2.0;
        std::fill(la.begin(), la.end(), 0.0);
        std::fill(lm.begin(), lm.end(), 0.0);
        for (std::size_t q = 0; q < ref.nq(); ++q) {
            const double r = a + J * (1.0 + ref.quad.x[q]);
            const double w = S * std::pow(r, n - 1) * J * ref.quad.w[q];
            const double* Bq = &ref.B[q * nb];
            const double* Dq = &ref.D[q * nb];
            double zz = 0.0;
            for (std::size_t k = 0; k < nb; ++k) zz += z.coef[e * p + k] * Bq[k];
            const double pot = P.d2W(zz) / eps - Lam * P.d2V(zz) + 2.0 * eps * mu / (r * r);
            for (std::size_t i = 0; i < nb; ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    const double v = w * (2.0 * eps * Dq[i] * Dq[j] / (J * J) + pot * Bq[i] * Bq[j]);
                    const double mm = w * Bq[i] * Bq[j];
                    la[i * nb + j] += v;
                    lm[i * nb + j] += mm;
                }
        }
        for (std::size_t i = 0; i < nb; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const int gi = static_cast<int>(e * p + i) - b.first, gj = static_cast<int>(e * p + j) - b.first;
                if (gi < 0 || gj < 0 || gi >= nf || gj >= nf) continue;
                b.A.add(gi, gj, la[i * nb + j]);
                b.M.add(gi, gj, lm[i * nb + j]);
                if (gi != gj) {
                    b.A.add(gj, gi, la[i * nb + j]);
                    b.M.add(gj, gi, lm[i * nb + j]);
                }
            }
    }
    return b;
}

/// g_j = int f(r) phi_j r^{n-1} dS on the block's free dofs
inline std::vector<double> load_vector(const RadialProfile& z, const QBlock& b,
                                       const std::function<double(double zeta, double dzeta)>& f) {
    const auto& ref = *z.ref;
    const int p = z.mesh.p, n = z.n;
    const double S = sphere_area(n);
    const std::size_t nb = p + 1;
    std::vector<double> g(b.size(), 0.0);
    for (std::size_t e = 0; e < z.mesh.elements(); ++e) {
        const double a = z.mesh.edges[e], J = (z.mesh.edges[e + 1] - a) / 2.0;
        for (std::size_t q = 0; q < ref.nq(); ++q) {
            const double r = a + J * (1.0 + ref.quad.x[q]);
            const double w = S * std::pow(r, n - 1) * J * ref.quad.w[q];
            double zz = 0.0, dz = 0.0;
            for (std::size_t k = 0; k < nb; ++k) {
                zz += z.coef[e * p + k] * ref.B[q * nb + k];
                dz += z.coef[e * p + k] * ref.D[q * nb + k] / J;
            }
            const double fv = f(zz, dz);
            for (std::size_t i = 0; i < nb; ++i) {
                const int gi = static_cast<int>(e * p + i) - b.first;
                if (gi >= 0 && gi < b.size()) g[gi] += w * fv * ref.B[q * nb + i];
            }
        }
    }
    return g;
}

inline BandMatrix shifted(const QBlock& b, double sigma) {
    BandMatrix K(b.size(), b.A.lower(), b.A.upper());
    for (int i = 0; i < b.size(); ++i)
        for (int j = std::max(0, i - b.A.lower()); j <= std::min(b.size() - 1, i + b.A.upper()); ++j)
            K.at(i, j) = b.A.at(i, j) - sigma * b.M.at(i, j);
    return K;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace detail

/// Assemble the blocks for mu_0..mu_{i_max} with constraint vectors V'(zeta) and zeta'.
inline QForm assemble(std::shared_ptr<const RadialProfile> z, int i_max) {
    if (!z) throw DomainError("assemble requires a profile");
    const int n = z->n;
    if (i_max < n + 1) throw DomainError("assemble requires i_max >= n + 1 (got " + std::to_string(i_max) + ")");
    if (z->mesh.points_per_eps(z->eps) < 20.0)
        throw DomainError("mesh too coarse: " + std::to_string(z->mesh.points_per_eps(z->eps)) +
                          " points per eps, need >= 20");
    QForm q;
    q.profile = z;
    q.modes = sphere_modes(n, i_max);
    for (const auto& m : q.modes)
        if (!q.blocks.count(m.mu)) q.blocks.emplace(m.mu, detail::assemble_block(*z, m.mu));
    const auto& P = *z->potentials;
    auto& rb = q.blocks.at(0);
    rb.constraint = detail::load_vector(*z, rb, [&](double zz, double) { return P.dV(zz); });
    auto& tb = q.blocks.at(n - 1);
    tb.constraint = detail::load_vector(*z, tb, [](double, double dz) { return dz; });
    for (const auto& [mu, b] : q.blocks)
        for (int i = 0; i < b.size(); ++i)
            for (int j = std::max(0, i - b.A.lower()); j <= std::min(b.size() - 1, i + b.A.upper()); ++j)
                q.symmetry_residual = std::max(q.symmetry_residual, std::abs(b.A.at(i, j) - b.A.at(j, i)));
    return q;
}

inline std::shared_ptr<const RadialProfile> share(RadialProfile z) {
    return std::make_shared<const RadialProfile>(std::move(z));
}

/// Number of eigenvalues of the pencil (A, M) below sigma (Sylvester inertia).
inline int count_below(const QBlock& b, double sigma) {
    auto K = detail::shifted(b, sigma);
    if (!K.factorize(false)) return count_below(b, sigma * (1.0 + 1e-12) + 1e-300);
    return K.negative_pivots();
}

/// k-th smallest eigenvalue (k = 0, 1, ...) of the unconstrained block by bisection on inertia counts.
inline double block_eigenvalue(const QBlock& b, int k, double rtol = 1e-13) {
    double lo = -1.0, hi = 1.0;
    while (count_below(b, lo) > k) lo *= 2.0;
    while (count_below(b, hi) <= k) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > rtol * std::max(std::abs(lo), std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (count_below(b, mid) > k) hi = mid;
        else lo = mid;
    }
    return 0.5 * (lo + hi);
}

/// Root of the secular function g^T (A - s M)^{-1} g in (l1, l2): the smallest constrained eigenvalue.
inline double constrained_min_eig_secular(const QBlock& b, const std::vector<double>& g) {
    double lo = block_eigenvalue(b, 0), hi = block_eigenvalue(b, 1);
    auto f = [&](double s) {
        auto K = detail::shifted(b, s);
        K.factorize(true);
        auto y = g;
        K.solve(y);
        return detail::dot(g, y);
    };
    const double span = hi - lo;
    lo += 1e-12 * span;
    hi -= 1e-12 * span;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct EigResult {
    double value = 0.0;
    std::vector<double> vector;
    int iterations = 0;
};

/// Smallest eigenvalue of the block pencil restricted to {g . x = 0} by projected inverse iteration.
/// The shift sits just below the target, located by the secular equation (or inertia when g is empty).
inline EigResult projected_inverse_iteration(const QBlock& b, const std::vector<double>& g, int max_iter = 500,
                                             double tol = 1e-10) {
    const int N = b.size();
    const double l1 = block_eigenvalue(b, 0), l2 = block_eigenvalue(b, 1);
    const double target = g.empty() ? l1 : constrained_min_eig_secular(b, g);
    const double sigma = target - 1e-7 * std::max(std::abs(target), l2 - l1);
    auto K = detail::shifted(b, sigma);
    if (!K.factorize(true)) throw NonConvergence("projected inverse iteration: singular shifted operator");
    std::vector<double> zc;
    double gz = 0.0;
    if (!g.empty()) {
        zc = g;
        K.solve(zc);
        gz = detail::dot(g, zc);
    }
    std::vector<double> x(N);
    for (int i = 0; i < N; ++i) x[i] = 1.0 + 0.37 * std::sin(1.3 * i);
    EigResult res;
    double prev = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        std::vector<double> y = b.M.multiply(x);
        K.solve(y);
        if (!g.empty()) {
            const double c = detail::dot(g, y) / gz;
            for (int i = 0; i < N; ++i) y[i] -= c * zc[i];
        }
        const auto My = b.M.multiply(y);
        const double nrm = std::sqrt(detail::dot(y, My));
        for (double& v : y) v /= nrm;
        const auto Ay = b.A.multiply(y);
        const double rq = detail::dot(y, Ay);
        x.swap(y);
        res.value = rq;
        res.iterations = it;
        if (it > 2 && std::abs(rq - prev) <= tol * std::max(1.0, std::abs(rq))) {
            res.vector = x;
            return res;
        }
        prev = rq;
    }
    throw NonConvergence("projected inverse iteration did not converge in " + std::to_string(max_iter) +
                         " steps (last Rayleigh quotient " + std::to_string(res.value) + ")");
}

/// Smallest Rayleigh quotient of Q over the sector after projecting out its constraint.
inline double constrained_min_eig(const QForm& q, Sector s) {
    switch (s) {
    case Sector::radial: return projected_inverse_iteration(q.radial(), q.radial().constraint).value;
    case Sector::translation: return projected_inverse_iteration(q.translation(), q.translation().constraint).value;
    case Sector::higher: {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [mu, b] : q.blocks)
            if (mu > q.profile->n - 1) best = std::min(best, projected_inverse_iteration(b, {}).value);
        return best;
    }
    default:
        return std::min({constrained_min_eig(q, Sector::radial), constrained_min_eig(q, Sector::translation),
                         constrained_min_eig(q, Sector::higher)});
    }
}

/// Rayleigh quotient of zeta' in the translation block.
inline double translation_rayleigh(const QForm& q) {
    const auto& b = q.translation();
    const auto d = detail::nodal_derivative(*q.profile);
    std::vector<double> t(b.size());
    for (int i = 0; i < b.size(); ++i) t[i] = d[i + b.first];
    return detail::dot(t, b.A.multiply(t)) / detail::dot(t, b.M.multiply(t));
}

struct TransformCheck {
    double direct = 0.0;
    double transformed = 0.0;
    double relative_error = 0.0;
};

/// Q(phi) for phi = g(r) zeta'(r) A_i computed directly and via 2 eps int zeta'^2 {|grad g|^2 - (n-1) g^2/r^2}.
inline TransformCheck psi_transform_check(const RadialProfile& z, long mu,
                                          const std::function<std::array<double, 2>(double)>& g) {
    const auto& ref = *z.ref;
    const auto& P = *z.potentials;
    const int p = z.mesh.p, n = z.n;
    const double eps = z.eps, S = sphere_area(n);
    const std::size_t nb = p + 1;
    TransformCheck out;
    for (std::size_t e = 0; e < z.mesh.elements(); ++e) {
        const double a = z.mesh.edges[e], J = (z.mesh.edges[e + 1] - a) / 2.0;
        for (std::size_t q = 0; q < ref.nq(); ++q) {
            const double r = a + J * (1.0 + ref.quad.x[q]);
            const double w = S * std::pow(r, n - 1) * J * ref.quad.w[q];
            double zz = 0, d1 = 0, d2 = 0;
            for (std::size_t k = 0; k < nb; ++k) {
                const double c = z.coef[e * p + k];
                zz += c * ref.B[q * nb + k];
                d1 += c * ref.D[q * nb + k] / J;
                d2 += c * ref.D2[q * nb + k] / (J * J);
            }
            const auto [gv, dg] = g(r);
            const double phi = gv * d1, dphi = dg * d1 + gv * d2;
            const double pot = P.d2W(zz) / eps - z.Lambda * P.d2V(zz);
            out.direct += w * (2.0 * eps * (dphi * dphi + mu * phi * phi / (r * r)) + pot * phi * phi);
            out.transformed += w * 2.0 * eps * d1 * d1 * (dg * dg + (mu - (n - 1.0)) * gv * gv / (r * r));
        }
    }
    out.relative_error = std::abs(out.direct - out.transformed) / std::abs(out.direct);
    return out;
}

} // namespace acflow

#endif
