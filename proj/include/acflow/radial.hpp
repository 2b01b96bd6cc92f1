#ifndef ACFLOW_RADIAL_HPP
#define ACFLOW_RADIAL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "linalg.hpp"
#include "potentials.hpp"

namespace acflow {

/// Area of the unit sphere S^{n-1}.
inline double sphere_area(int n) { return n * omega(n); }

/// Discretization controls for the radial spectral-element solver.
struct RadialOptions {
    int degree = 16;              ///< polynomial degree per element
    int elements_per_eps = 4;     ///< element count per eps-width in the interface zone
    double zone = 8.0;            ///< half-width of the interface zone in units of eps
    double growth = 1.25;         ///< geometric growth of element size outside the zone
    double max_element = 1.0;     ///< largest element size in units of eps
    double box_factor = 3.0;      ///< R = box_factor * r0
    int refine = 0;               ///< number of uniform element bisections
    double newton_tol = 1e-10;    ///< residual tolerance, in units of 1/eps
    double volume_tol = 1e-13;    ///< relative volume tolerance
    double lambda_guess_factor = 1.0;  ///< multiplies the sharp-interface initial Lambda
    int max_newton = 60;
};

/// Reference element: GLL nodes, Gauss quadrature, basis tables.
struct RefElement {
    int p = 8;
    std::vector<double> gll;
    Quadrature quad;
    std::vector<double> B, D, D2;  ///< [q * (p+1) + a]

    explicit RefElement(int degree) : p(degree), gll(gll_nodes(degree)), quad(gauss_legendre(2 * degree + 2)) {
        const LagrangeBasis lb(gll);
        const std::size_t nb = p + 1, nq = quad.x.size();
        B.resize(nq * nb);
        D.resize(nq * nb);
        D2.resize(nq * nb);
        for (std::size_t q = 0; q < nq; ++q) lb.eval(quad.x[q], &B[q * nb], &D[q * nb], &D2[q * nb]);
    }
    std::size_t nq() const { return quad.x.size(); }
};

/// Element partition of [0, R].
struct RadialMesh {
    std::vector<double> edges;
    int p = 8;

    std::size_t elements() const { return edges.size() - 1; }
    std::size_t ndof() const { return elements() * p + 1; }
    double R() const { return edges.back(); }
    /// positions of all GLL nodes
    std::vector<double> nodes(const RefElement& ref) const {
        std::vector<double> x(ndof());
        for (std::size_t e = 0; e < elements(); ++e) {
            const double a = edges[e], b = edges[e + 1];
            for (int k = 0; k <= p; ++k) x[e * p + k] = a + (b - a) * (ref.gll[k] + 1.0) / 2.0;
        }
        x.back() = R();
        return x;
    }
    /// smallest node count per eps-width over the mesh's finest region
    double points_per_eps(double eps) const {
        double hmin = R();
        for (std::size_t e = 0; e < elements(); ++e) hmin = std::min(hmin, edges[e + 1] - edges[e]);
        return p * eps / hmin;
    }
};

namespace detail {
inline std::vector<double> graded_sizes(double length, double h0, double g, double hmax) {
    std::vector<double> s;
    if (length <= 0.0) return s;
    double sum = 0.0, h = h0;
    while (sum < length * (1.0 - 1e-12)) {
        s.push_back(h);
        sum += h;
        h = std::min(h * g, hmax);
    }
    // merge an undersized tail, then rescale to fit exactly
    if (s.size() > 1 && sum - length > 0.5 * s.back()) {
        sum -= s.back();
        s.pop_back();
    }
    for (double& x : s) x *= length / sum;
    return s;
}
} // namespace detail

/// Graded mesh: uniform elements of size eps/k across [r0 - zone eps, r0 + zone eps], geometric outside.
inline RadialMesh make_radial_mesh(double eps, double r0, double R, const RadialOptions& o) {
    RadialMesh m;
    m.p = o.degree;
    const double hf = eps / o.elements_per_eps;
    const double hmax = o.max_element * eps;
    const double a = std::max(0.0, r0 - o.zone * eps), b = std::min(R, r0 + o.zone * eps);
    const int nf = std::max(1, static_cast<int>(std::ceil((b - a) / hf - 1e-9)));
    std::vector<double> e;
    auto inner = detail::graded_sizes(a, hf, o.growth, hmax);
    double x = 0.0;
    e.push_back(0.0);
    for (auto it = inner.rbegin(); it != inner.rend(); ++it) {
        x += *it;
        e.push_back(x);
    }
    e.back() = a;
    if (a == 0.0) e.resize(1);
    for (int i = 1; i <= nf; ++i) e.push_back(a + (b - a) * i / nf);
    auto outer = detail::graded_sizes(R - b, hf, o.growth, hmax);
    x = b;
    for (double s : outer) {
        x += s;
        e.push_back(x);
    }
    e.back() = R;
    for (int r = 0; r < o.refine; ++r) {
        std::vector<double> f{e[0]};
        for (std::size_t i = 1; i < e.size(); ++i) {
            f.push_back(0.5 * (e[i - 1] + e[i]));
            f.push_back(e[i]);
        }
        e = std::move(f);
    }
    m.edges = std::move(e);
    return m;
}

/// Diffused ball: radial solution of 2 eps^2 (z'' + (n-1) z'/r) = W'(z) - eps Lambda V'(z) with V-volume m.
class RadialProfile {
public:
    double eps = 0.0, m = 0.0;
    int n = 2;
    double Lambda = 0.0;
    double Psi = 0.0;        ///< AC_eps(zeta)
    double volume = 0.0;     ///< int V(zeta)
    double dirichlet = 0.0;  ///< int |grad zeta|^2
    double r0 = 0.0;         ///< (m/omega_n)^{1/n}
    RadialMesh mesh;
    std::shared_ptr<const RefElement> ref;
    std::vector<double> coef;  ///< nodal values, last node (r = R) is 0
    std::shared_ptr<const PotentialSet> potentials;
    RadialOptions options;
    // residual diagnostics
    double ode_residual = 0.0;     ///< weak (Galerkin) residual scaled by the lumped mass, max norm
    double strong_residual = 0.0;  ///< pointwise ODE residual at quadrature points, max norm
    double volume_residual = 0.0;  ///< |V(zeta) - m| / m
    double pohozaev_residual = 0.0;  ///< |n Lambda V - (n AC - 2 eps D)| / AC
    int newton_iterations = 0;

    double R() const { return mesh.R(); }
    std::vector<double> nodes() const { return mesh.nodes(*ref); }

    std::size_t element_of(double r) const {
        auto it = std::upper_bound(mesh.edges.begin(), mesh.edges.end(), r);
        std::size_t e = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - mesh.edges.begin() - 1));
        return std::min(e, mesh.elements() - 1);
    }

    /// zeta, zeta', zeta'' at radius r (zero beyond R)
    std::array<double, 3> eval(double r) const {
        if (r >= R()) return {0.0, 0.0, 0.0};
        r = std::max(r, 0.0);
        const std::size_t e = element_of(r);
        const double a = mesh.edges[e], b = mesh.edges[e + 1], J = (b - a) / 2.0;
        const double xi = std::clamp((r - a) / J - 1.0, -1.0, 1.0);
        const int nb = mesh.p + 1;
        std::vector<double> v(nb), d1(nb), d2(nb);
        LagrangeBasis(ref->gll).eval(xi, v.data(), d1.data(), d2.data());
        std::array<double, 3> out{0.0, 0.0, 0.0};
        for (int k = 0; k < nb; ++k) {
            const double c = coef[e * mesh.p + k];
            out[0] += c * v[k];
            out[1] += c * d1[k] / J;
            out[2] += c * d2[k] / (J * J);
        }
        return out;
    }
    double operator()(double r) const { return eval(r)[0]; }
    double zeta0() const { return coef.front(); }
    double tail() const {
        const std::size_t e = mesh.elements() - 1;
        double t = 0.0;
        for (int k = 0; k <= mesh.p; ++k) t = std::max(t, std::abs(coef[e * mesh.p + k]));
        return t;
    }

    /// strictly decreasing where 1e-10 < zeta < 1 - 1e-10, nonincreasing to 1e-13 elsewhere (node samples)
    bool monotone() const {
        for (std::size_t i = 1; i < coef.size(); ++i) {
            const double a = coef[i - 1], b = coef[i];
            const bool interior = a > 1e-10 && a < 1.0 - 1e-10 && b > 1e-10 && b < 1.0 - 1e-10;
            if (interior ? !(b < a) : (b > a + 1e-13)) return false;
        }
        return true;
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw Error("cannot write " + path);
        os.precision(17);
        os << "r,zeta,Lambda,Psi\n";
        const auto x = nodes();
        for (std::size_t i = 0; i < x.size(); ++i) os << x[i] << ',' << coef[i] << ',' << Lambda << ',' << Psi << '\n';
    }
};

namespace detail {

struct Assembly {
    BandMatrix K;
    std::vector<double> res, dvol, lumped;
    double volume = 0.0, ac = 0.0, dirichlet = 0.0;
};

/// Residual, Jacobian and functionals of AC - Lambda V on the free dofs (all but r = R).
inline void assemble_radial(const RadialMesh& mesh, const RefElement& ref, const std::vector<double>& c, double eps,
                            double Lambda, int n, const PotentialSet& P, Assembly& A, bool jacobian) {
    const int p = mesh.p;
    const int nf = static_cast<int>(mesh.ndof()) - 1;
    if (jacobian) {
        if (A.K.rows() != nf) A.K = BandMatrix(nf, p, p);
        else A.K.set_zero();
    }
    A.res.assign(nf, 0.0);
    A.dvol.assign(nf, 0.0);
    A.lumped.assign(nf, 0.0);
    A.volume = A.ac = A.dirichlet = 0.0;
    const double S = sphere_area(n);
    const std::size_t nb = p + 1, nq = ref.nq();
    std::vector<double> lres(nb), ldv(nb), llm(nb), lk(nb * nb);
    for (std::size_t e = 0; e < mesh.elements(); ++e) {
        const double a = mesh.edges[e], b = mesh.edges[e + 1], J = (b - a) / 2.0;
        std::fill(lres.begin(), lres.end(), 0.0);
        std::fill(ldv.begin(), ldv.end(), 0.0);
        std::fill(llm.begin(), llm.end(), 0.0);
        std::fill(lk.begin(), lk.end(), 0.0);
        for (std::size_t q = 0; q < nq; ++q) {
            const double r = a + J * (1.0 + ref.quad.x[q]);
            const double w = S * std::pow(r, n - 1) * J * ref.quad.w[q];
            const double* Bq = &ref.B[q * nb];
            const double* Dq = &ref.D[q * nb];
            double z = 0.0, dz = 0.0;
            for (std::size_t k = 0; k < nb; ++k) {
                z += c[e * p + k] * Bq[k];
                dz += c[e * p + k] * Dq[k];
            }
            dz /= J;
            const double dW = P.dW(z), dV = P.dV(z);
            A.volume += w * P.V(z);
            A.dirichlet += w * dz * dz;
            A.ac += w * (eps * dz * dz + P.W(z) / eps);
            const double f = dW / eps - Lambda * dV;
            for (std::size_t i = 0; i < nb; ++i) {
                lres[i] += w * (2.0 * eps * dz * Dq[i] / J + f * Bq[i]);
                ldv[i] += w * dV * Bq[i];
                llm[i] += w * std::abs(Bq[i]);
            }
            if (jacobian) {
                const double g = P.d2W(z) / eps - Lambda * P.d2V(z);
                for (std::size_t i = 0; i < nb; ++i)
                    for (std::size_t j = 0; j < nb; ++j)
                        lk[i * nb + j] += w * (2.0 * eps * Dq[i] * Dq[j] / (J * J) + g * Bq[i] * Bq[j]);
            }
        }
        for (std::size_t i = 0; i < nb; ++i) {
            const int gi = static_cast<int>(e * p + i);
            if (gi >= nf) continue;
            A.res[gi] += lres[i];
            A.dvol[gi] += ldv[i];
            A.lumped[gi] += llm[i];
            if (jacobian)
                for (std::size_t j = 0; j < nb; ++j) {
                    const int gj = static_cast<int>(e * p + j);
                    if (gj < nf) A.K.add(gi, gj, lk[i * nb + j]);
                }
        }
    }
}

inline double scaled_residual(const Assembly& A) {
    double r = 0.0;
    for (std::size_t i = 0; i < A.res.size(); ++i) r = std::max(r, std::abs(A.res[i]) / A.lumped[i]);
    return r;
}


inline double merit(const Assembly& A, double m, double eps) {
    double s = 0.0, w = 0.0;
    for (std::size_t i = 0; i < A.res.size(); ++i) {
        s += A.res[i] * A.res[i] / A.lumped[i];
        w += A.lumped[i];
    }
    return std::sqrt(s / w) + std::abs(A.volume - m) / (m * eps);
}

} // namespace detail

/// Solve for the diffused ball with V-volume m.
inline RadialProfile solve_profile(double eps, double m, int n, const PotentialSet& P,
                                   const RadialOptions& opt = RadialOptions{}) {
    if (n < 2) throw DomainError("radial solver requires n >= 2");
    if (P.n() != n) throw DomainError("potential dimension does not match n");
    if (!(eps > 0.0) || !(m > 0.0)) throw DomainError("radial solver requires eps > 0 and m > 0");
    if (!(eps < 0.3 * std::pow(m, 1.0 / n)))
        throw RegimeViolation("regime guard violated: eps = " + std::to_string(eps) + " must be < 0.3 m^{1/n} = " +
                              std::to_string(0.3 * std::pow(m, 1.0 / n)));
    RadialProfile prof;
    prof.eps = eps;
    prof.m = m;
    prof.n = n;
    prof.options = opt;
    prof.potentials = std::make_shared<const PotentialSet>(P);
    prof.r0 = std::pow(m / omega(n), 1.0 / n);
    prof.ref = std::make_shared<const RefElement>(opt.degree);
    const double lambda_sharp = 2.0 * (n - 1) / prof.r0;

    double R = opt.box_factor * prof.r0;
    for (int attempt = 0; attempt < 6; ++attempt, R *= 2.0) {
        prof.mesh = make_radial_mesh(eps, prof.r0, R, opt);
        const auto x = prof.mesh.nodes(*prof.ref);
        const int nf = static_cast<int>(prof.mesh.ndof()) - 1;
        double L = lambda_sharp * opt.lambda_guess_factor;
        const double rc = 2.0 * (n - 1) / L;
        std::vector<double> c(prof.mesh.ndof(), 0.0);
        for (int i = 0; i < nf; ++i) c[i] = 1.0 / (1.0 + std::exp(std::min(700.0, 6.0 * (x[i] - rc) / eps)));
        detail::Assembly A, At;
        bool converged = false;
        double res = 0.0, last_step = 1.0;
        int it = 0;
        for (; it < opt.max_newton; ++it) {
            detail::assemble_radial(prof.mesh, *prof.ref, c, eps, L, n, P, A, true);
            res = detail::scaled_residual(A);
            const bool vol_ok = std::abs(A.volume - m) <= opt.volume_tol * m;
            if ((res <= opt.newton_tol / eps || last_step <= 1e-13) && vol_ok) {
                converged = true;
                break;
            }
            // bordered Newton step on (zeta, Lambda): K dz - b dL = -res, b.dz = m - V
            std::vector<double> y(A.res), z(A.dvol);
            for (double& v : y) v = -v;
            if (!A.K.factorize(true)) throw NonConvergence("radial Newton: singular Jacobian");
            A.K.solve(y);
            A.K.solve(z);
            double by = 0.0, bz = 0.0;
            for (int i = 0; i < nf; ++i) by += A.dvol[i] * y[i], bz += A.dvol[i] * z[i];
            if (bz == 0.0) throw NonConvergence("radial Newton: degenerate volume border");
            const double dL = (m - A.volume - by) / bz;
            const double m0 = detail::merit(A, m, eps);
            double t = 1.0;
            std::vector<double> trial(c);
            for (int ls = 0; ls < 40; ++ls) {
                for (int i = 0; i < nf; ++i) trial[i] = c[i] + t * (y[i] + z[i] * dL);
                detail::assemble_radial(prof.mesh, *prof.ref, trial, eps, L + t * dL, n, P, At, false);
                if (detail::merit(At, m, eps) < (1.0 - 1e-4 * t) * m0) break;
                t *= 0.5;
            }
            last_step = std::abs(t * dL) / std::abs(L);
            for (int i = 0; i < nf; ++i) last_step = std::max(last_step, std::abs(trial[i] - c[i]));
            c.swap(trial);
            L += t * dL;
        }
        if (!converged)
            throw NonConvergence("radial Newton did not converge: scaled residual " + std::to_string(res) +
                                 ", volume residual " + std::to_string(std::abs(A.volume - m) / m) + ", Lambda " +
                                 std::to_string(L));
        prof.coef = c;
        prof.Lambda = L;
        prof.newton_iterations = it;
        if (prof.tail() <= 1e-10) break;
        if (attempt == 5) throw NonConvergence("profile tail above 1e-10 after domain doubling");
    }

    // functionals and residual diagnostics
    detail::Assembly A;
    detail::assemble_radial(prof.mesh, *prof.ref, prof.coef, eps, prof.Lambda, n, P, A, false);
    prof.Psi = A.ac;
    prof.volume = A.volume;
    prof.dirichlet = A.dirichlet;
    prof.ode_residual = detail::scaled_residual(A);
    prof.volume_residual = std::abs(A.volume - m) / m;
    prof.pohozaev_residual = std::abs(n * prof.Lambda * A.volume - (n * A.ac - 2.0 * eps * A.dirichlet)) / A.ac;
    double sr = 0.0;
    const auto& ref = *prof.ref;
    const std::size_t nb = prof.mesh.p + 1;
    for (std::size_t e = 0; e < prof.mesh.elements(); ++e) {
        const double a = prof.mesh.edges[e], J = (prof.mesh.edges[e + 1] - a) / 2.0;
        for (std::size_t q = 0; q < ref.nq(); ++q) {
            const double r = a + J * (1.0 + ref.quad.x[q]);
            double z = 0, d1 = 0, d2 = 0;
            for (std::size_t k = 0; k < nb; ++k) {
                const double c = prof.coef[e * prof.mesh.p + k];
                z += c * ref.B[q * nb + k];
                d1 += c * ref.D[q * nb + k] / J;
                d2 += c * ref.D2[q * nb + k] / (J * J);
            }
            const double lhs = 2.0 * eps * eps * (d2 + (n - 1) * d1 / r);
            sr = std::max(sr, std::abs(lhs - P.dW(z) + eps * prof.Lambda * P.dV(z)));
        }
    }
    prof.strong_residual = sr;
    return prof;
}

/// Invariant violations of a profile; empty when all hold.
inline std::vector<std::string> validate(const RadialProfile& z) {
    std::vector<std::string> bad;
    if (!z.monotone()) bad.push_back("zeta strictly decreasing");
    if (!(z.zeta0() > 0.0 && z.zeta0() < 1.0 + 1e-12)) bad.push_back("zeta(0) in (0,1)");
    if (!(z.tail() <= 1e-10)) bad.push_back("zeta(R) <= 1e-10");
    if (!(z.strong_residual <= 1e-8)) bad.push_back("ODE residual <= 1e-8");
    if (!(z.volume_residual <= 1e-8)) bad.push_back("volume residual <= 1e-8 m");
    if (!(z.pohozaev_residual <= 1e-6)) bad.push_back("Pohozaev residual <= 1e-6 AC");
    return bad;
}

namespace detail {
struct ProfileCache {
    std::shared_mutex mutex;
    std::map<std::tuple<double, double, int, std::string>, std::shared_ptr<const RadialProfile>> map;
};
inline ProfileCache& profile_cache() {
    static ProfileCache c;
    return c;
}
} // namespace detail

/// Cached profile keyed by (eps, m, n, potential).
inline std::shared_ptr<const RadialProfile> cached_profile(double eps, double m, int n, const PotentialSet& P) {
    auto& c = detail::profile_cache();
    const auto key = std::make_tuple(eps, m, n, P.name());
    {
        std::shared_lock lock(c.mutex);
        auto it = c.map.find(key);
        if (it != c.map.end()) return it->second;
    }
    auto prof = std::make_shared<const RadialProfile>(solve_profile(eps, m, n, P));
    std::unique_lock lock(c.mutex);
    auto [it, inserted] = c.map.emplace(key, prof);
    return it->second;
}

/// Psi(eps, m) = AC_eps(zeta_{eps,m}).
inline double psi(double eps, double m, int n, const PotentialSet& P) { return cached_profile(eps, m, n, P)->Psi; }

/// Uniform Hermite table of zeta and zeta' for fast repeated evaluation.
class ProfileSampler {
public:
    explicit ProfileSampler(const RadialProfile& z, double points_per_eps = 200.0)
        : dr_(z.eps / points_per_eps), R_(z.R()) {
        const std::size_t n = static_cast<std::size_t>(std::ceil(R_ / dr_)) + 1;
        f_.resize(n);
        d_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto e = z.eval(std::min(i * dr_, R_));
            f_[i] = e[0];
            d_[i] = e[1];
        }
    }
    double R() const { return R_; }
    /// {zeta(r), zeta'(r)}; zero beyond R
    std::array<double, 2> operator()(double r) const {
        if (r >= R_) return {0.0, 0.0};
        r = std::max(r, 0.0);
        const std::size_t i = std::min(static_cast<std::size_t>(r / dr_), f_.size() - 2);
        const double t = (r - i * dr_) / dr_;
        const double t2 = t * t, t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        const double v = h00 * f_[i] + h10 * dr_ * d_[i] + h01 * f_[i + 1] + h11 * dr_ * d_[i + 1];
        const double g00 = 6 * t2 - 6 * t, g10 = 3 * t2 - 4 * t + 1, g01 = -6 * t2 + 6 * t, g11 = 3 * t2 - 2 * t;
        const double dv = (g00 * f_[i] + g01 * f_[i + 1]) / dr_ + g10 * d_[i] + g11 * d_[i + 1];
        return {v, dv};
    }

private:
    double dr_, R_;
    std::vector<double> f_, d_;
};

struct BallPerturbation {
    double amplitude = 0.0;  ///< radial displacement a in zeta(|x-c| - a cos(k theta))
    int wavenumber = 0;
};

/// Sample zeta(|x - center|) on the grid with periodic distance; far field below 1e-14 set to 0.
inline Field interpolate_to_field(const RadialProfile& z, const Grid& g, const std::array<double, 3>& center,
                                  const BallPerturbation& pert = {}) {
    if (g.dim != z.n) throw GeometryError("grid dimension does not match profile dimension");
    g.require_resolution(z.eps);
    if (!(z.r0 + 5.0 * z.eps <= g.L / 2.0))
        throw GeometryError("ball does not fit: r0 + 5 eps = " + std::to_string(z.r0 + 5.0 * z.eps) +
                            " must be <= L/2 = " + std::to_string(g.L / 2.0));
    Field u(g);
    const int nb = z.mesh.p + 1;
    const LagrangeBasis lb(z.ref->gll);
    std::vector<double> v(nb);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto c = g.coords(i);
        std::array<double, 3> dx{0.0, 0.0, 0.0};
        double r2 = 0.0;
        for (int d = 0; d < g.dim; ++d) {
            dx[d] = c[d] * g.h() - center[d];
            dx[d] -= g.L * std::round(dx[d] / g.L);
            r2 += dx[d] * dx[d];
        }
        double r = std::sqrt(r2);
        if (pert.amplitude != 0.0 && pert.wavenumber != 0 && r > 0.0) {
            const double theta = g.dim == 2 ? std::atan2(dx[1], dx[0]) : std::acos(std::clamp(dx[0] / r, -1.0, 1.0));
            r -= pert.amplitude * std::cos(pert.wavenumber * theta);
            r = std::max(r, 0.0);
        }
        if (r >= z.R()) {
            u[i] = 0.0;
            continue;
        }
        const std::size_t e = z.element_of(r);
        const double a = z.mesh.edges[e], J = (z.mesh.edges[e + 1] - a) / 2.0;
        lb.eval(std::clamp((r - a) / J - 1.0, -1.0, 1.0), v.data(), nullptr, nullptr);
        double s = 0.0;
        for (int k = 0; k < nb; ++k) s += z.coef[e * z.mesh.p + k] * v[k];
        u[i] = std::abs(s) < 1e-14 ? 0.0 : s;
    }
    return u;
}

} // namespace acflow

#endif

