#ifndef ACFLOW_FLOW_HPP
#define ACFLOW_FLOW_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <queue>
#include <string>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "multiplier.hpp"
#include "potentials.hpp"
#include "radial.hpp"

namespace acflow {

enum class RangePolicy {
    error,  ///< throw RangeError when a step leaves [-tol, 1+tol]
    record  ///< keep going and report the excursion in the run statistics
};

struct FlowConfig {
    double eps = 0.08;
    MultiplierMode mode = MultiplierMode::exact();
    Backend backend = Backend::spectral;
    bool volume_fix = true;
    double range_tolerance = 1e-9;
    RangePolicy range_policy = RangePolicy::record;
    double reaction_cfl = 0.25;  ///< sub-step guard dt_sub max|W''| / eps^2
};

/// State of the flow: the field, time, and the cached multiplier.
struct FlowState {
    Field u;
    double t = 0.0;
    double eps = 0.0;
    MultiplierMode mode;
    double lambda_cached = 0.0;
    long step_count = 0;
    Backend backend = Backend::spectral;
    bool volume_fix = true;
    double volume0 = 0.0;  ///< conserved quantity of u0
    double range_tolerance = 1e-9;
    RangePolicy range_policy = RangePolicy::record;
    double reaction_cfl = 0.25;
    std::shared_ptr<const PotentialSet> potentials;
    Field rate;  ///< (u_k - u_{k-1}) / dt of the last step, empty before the first step
    int last_fix_iterations = 0;

    const PotentialSet& P() const { return *potentials; }
};

/// Conserved quantity of the mode: int V(u), int V_delta(u) or int u.
inline double conserved_quantity(const Field& u, const MultiplierMode& mode, const PotentialSet& p) {
    double s = 0.0;
    for (double x : u.values) s += mode.density(p, x);
    return s * u.grid.cell_volume();
}

inline FlowState make_flow_state(Field u0, const FlowConfig& c, const PotentialSet& p) {
    const int n = u0.grid.dim;
    if (n < 2) throw DomainError("flow requires n >= 2 (got n = " + std::to_string(n) + ")");
    if (p.n() != n) throw DomainError("potential dimension does not match the grid dimension");
    if (!(c.eps > 0.0)) throw DomainError("flow requires eps > 0");
    u0.grid.require_resolution(c.eps);
    if (!u0.all_finite()) throw RangeError("initial field has non-finite values");
    if (u0.min() < -c.range_tolerance || u0.max() > 1.0 + c.range_tolerance)
        throw RangeError("initial field outside [-" + std::to_string(c.range_tolerance) + ", 1+" +
                         std::to_string(c.range_tolerance) + "]");
    FlowState s;
    s.eps = c.eps;
    s.mode = c.mode;
    s.backend = c.backend;
    s.volume_fix = c.volume_fix;
    s.range_tolerance = c.range_tolerance;
    s.range_policy = c.range_policy;
    if (!(c.reaction_cfl > 0.0)) throw DomainError("reaction_cfl must be positive");
    s.reaction_cfl = c.reaction_cfl;
    s.potentials = std::make_shared<const PotentialSet>(p);
    s.volume0 = conserved_quantity(u0, c.mode, p);
    s.lambda_cached = lambda(u0, c.eps, c.mode, p, c.backend, LambdaForm::weak);
    s.u = std::move(u0);
    return s;
}

/// Reaction-diffusion force 2 Lap u - W'(u)/eps^2, plus lambda g(u)/eps when with_multiplier.
inline Field explicit_force(const Field& u, double eps, const MultiplierMode& mode, const PotentialSet& p,
                            Backend b = Backend::spectral, bool with_multiplier = true) {
    if (with_multiplier) return flow_velocity(u, eps, mode, p, b);
    const Field lap = laplacian(u, b);
    Field F(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) F[i] = 2.0 * lap[i] - p.dW(u[i]) / (eps * eps);
    return F;
}

/// Largest |W''| on [0,1] (stiffness scale of the reaction).
inline double max_abs_d2W(const PotentialSet& p) {
    double m = 0.0;
    for (int i = 0; i <= 1000; ++i) m = std::max(m, std::abs(p.d2W(i / 1000.0)));
    return m;
}

/// Exponential integrator: diffusion exact in Fourier space, reaction by ETDRK2 on sub-steps.
class Stepper {
public:
    using cplx = std::complex<double>;

    Stepper(const Grid& g, double eps, double dt, Backend b, const PotentialSet& p, double reaction_cfl = 0.25)
        : grid_(g), eps_(eps), dt_(dt), backend_(b), ops_(spectral_ops(g)) {
        if (!(dt > 0.0)) throw DomainError("time step must be positive");
        if (!(dt <= 0.25 * eps * eps))
            throw DomainError("stiffness guard violated: dt = " + std::to_string(dt) + " must be <= 0.25 eps^2 = " +
                              std::to_string(0.25 * eps * eps));
        g.require_resolution(eps);
        substeps_ = std::max(1, static_cast<int>(std::ceil(dt * max_abs_d2W(p) / (reaction_cfl * eps * eps) - 1e-12)));
        const double hs = dt / substeps_;
        const auto& k2 = ops_.k2(b);
        const std::size_t nc = ops_.complex_size();
        E_.resize(nc);
        P1_.resize(nc);
        P2_.resize(nc);
        for (std::size_t j = 0; j < nc; ++j) {
            const double z = -2.0 * k2[j] * hs;
            E_[j] = std::exp(z);
            if (std::abs(z) < 1e-3) {
                P1_[j] = hs * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
                P2_[j] = hs * (0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0);
            } else {
                P1_[j] = hs * std::expm1(z) / z;
                P2_[j] = hs * (std::expm1(z) - z) / (z * z);
            }
        }
        uh_.resize(nc);
        ah_.resize(nc);
        nh0_.resize(nc);
        nh1_.resize(nc);
        vh_.resize(nc);
        dw_.resize(g.size());
        dv_.resize(g.size());
        a_.resize(g.size());
    }

    int substeps() const { return substeps_; }
    double dt() const { return dt_; }

    /// Advance s by one step of size dt.
    void advance(FlowState& s) {
        const PotentialSet& p = s.P();
        Field old = s.u;
        std::vector<double>& u = s.u.values;
        const std::size_t n = u.size(), nc = uh_.size();
        ops_.forward(u.data(), uh_.data());
        for (int k = 0; k < substeps_; ++k) {
            nonlinear(u.data(), uh_.data(), nh0_.data(), s);
            for (std::size_t j = 0; j < nc; ++j) ah_[j] = E_[j] * uh_[j] + P1_[j] * nh0_[j];
            inverse(ah_, a_.data());
            nonlinear(a_.data(), ah_.data(), nh1_.data(), s);
            for (std::size_t j = 0; j < nc; ++j) uh_[j] = ah_[j] + P2_[j] * (nh1_[j] - nh0_[j]);
            inverse(uh_, u.data());
        }
        s.last_fix_iterations = 0;
        if (s.volume_fix) s.last_fix_iterations = fix_volume(s);
        check_range(s);
        s.rate = Field(grid_);
        for (std::size_t i = 0; i < n; ++i) s.rate[i] = (u[i] - old[i]) / dt_;
        s.t += dt_;
        ++s.step_count;
        s.lambda_cached = lambda(s.u, s.eps, s.mode, p, s.backend, LambdaForm::weak);
    }

    /// AC energy of s.u (same quadrature as ac_energy).
    double energy(const FlowState& s) {
        ops_.forward(s.u.values.data(), uh_.data());
        double w = 0.0;
        for (double x : s.u.values) w += s.P().W(x);
        return s.eps * ops_.dirichlet_from_hat(uh_.data(), backend_) + w * grid_.cell_volume() / s.eps;
    }

private:
    void inverse(const std::vector<cplx>& in, double* out) {
        ops_.backward(in.data(), out);
        const double nn = ops_.norm();
        for (std::size_t i = 0; i < grid_.size(); ++i) out[i] *= nn;
    }

    /// nh = FFT(-W'(u)/eps^2 + lambda g(u)/eps) with the weak-form multiplier at u
    void nonlinear(const double* u, const cplx* uh, cplx* nh, const FlowState& s) {
        const std::size_t n = grid_.size(), nc = uh_.size();
        const PotentialSet& p = s.P();
        const double eps = eps_;
        if (s.mode.kind == MultiplierKind::exact_V) p.reaction(u, n, dw_.data(), dv_.data());
        else
            for (std::size_t i = 0; i < n; ++i) {
                dw_[i] = p.dW(u[i]);
                dv_[i] = s.mode.g(p, u[i]);
            }
        double lam = 0.0;
        if (s.mode.kind == MultiplierKind::neumann_mu) {
            double sw = 0.0;
            for (std::size_t i = 0; i < n; ++i) sw += dw_[i];
            lam = sw / (eps * static_cast<double>(n));
            ops_.forward(dw_.data(), nh);
            for (std::size_t j = 0; j < nc; ++j) nh[j] *= -1.0 / (eps * eps);
            nh[0] += lam / eps * static_cast<double>(n);
            return;
        }
        double den = 0.0, swv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            den += dv_[i] * dv_[i];
            swv += dv_[i] * dw_[i];
        }
        if (!(den * grid_.cell_volume() > degenerate_threshold)) throw DegenerateDenominator(den * grid_.cell_volume());
        ops_.forward(dw_.data(), nh);
        ops_.forward(dv_.data(), vh_.data());
        const auto& k2 = ops_.k2(backend_);
        const auto& w = ops_.weight();
        double vlap = 0.0;
        for (std::size_t j = 0; j < nc; ++j) vlap -= w[j] * k2[j] * (std::conj(vh_[j]) * uh[j]).real();
        vlap *= ops_.norm();
        lam = eps * (swv / (eps * eps) - 2.0 * vlap) / den;
        const double a = -1.0 / (eps * eps), b = lam / eps;
        for (std::size_t j = 0; j < nc; ++j) nh[j] = a * nh[j] + b * vh_[j];
    }

    /// Newton on the scalar s in u + s g(u0) so the conserved quantity returns to its initial value.
    int fix_volume(FlowState& s) {
        const PotentialSet& p = s.P();
        std::vector<double>& u = s.u.values;
        const std::size_t n = u.size();
        const double dv = grid_.cell_volume(), target = s.volume0;
        for (std::size_t i = 0; i < n; ++i) dv_[i] = s.mode.g(p, u[i]);
        double sh = 0.0, G = 0.0;
        for (int it = 1; it <= 8; ++it) {
            G = 0.0;
            double dG = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = u[i] + sh * dv_[i];
                G += s.mode.density(p, x);
                dG += s.mode.g(p, x) * dv_[i];
            }
            G = G * dv - target;
            dG *= dv;
            if (std::abs(G) <= 32.0 * std::numeric_limits<double>::epsilon() * std::abs(target)) {
                for (std::size_t i = 0; i < n; ++i) u[i] += sh * dv_[i];
                return it;
            }
            if (!(dG != 0.0)) break;
            const double ds = -G / dG;
            sh += ds;
            if (std::abs(ds * dG) <= 1e-15 * std::abs(target)) {
                for (std::size_t i = 0; i < n; ++i) u[i] += sh * dv_[i];
                return it;
            }
        }
        if (std::abs(G) <= 1e-13 * std::abs(target)) {
            for (std::size_t i = 0; i < n; ++i) u[i] += sh * dv_[i];
            return 8;
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", G);
        throw VolumeFixFailure(std::string("volume correction did not converge in 8 Newton iterations (residual ") +
                               buf + ")");
    }

    void check_range(const FlowState& s) const {
        double lo = 0.0, hi = 0.0;
        bool finite = true;
        for (double x : s.u.values) {
            finite = finite && std::isfinite(x);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        if (!finite) throw RangeError("flow produced non-finite values at t = " + std::to_string(s.t));
        if (lo < -0.01 || hi > 1.01)
            throw RangeError("flow left [-0.01, 1.01] (min " + std::to_string(lo) + ", max " + std::to_string(hi) +
                             ") at t = " + std::to_string(s.t));
        if (s.range_policy == RangePolicy::error && (lo < -s.range_tolerance || hi > 1.0 + s.range_tolerance))
            throw RangeError("range violation: min " + std::to_string(lo) + ", max " + std::to_string(hi) +
                             " outside tolerance " + std::to_string(s.range_tolerance));
    }

    Grid grid_;
    double eps_, dt_;
    Backend backend_;
    SpectralOps& ops_;
    int substeps_ = 1;
    std::vector<double> E_, P1_, P2_;
    std::vector<cplx> uh_, ah_, nh0_, nh1_, vh_;
    std::vector<double> dw_, dv_, a_;
};

/// One step of the flow (pure).
inline FlowState step(const FlowState& s, double dt) {
    FlowState out = s;
    Stepper st(s.u.grid, s.eps, dt, s.backend, s.P(), s.reaction_cfl);
    st.advance(out);
    return out;
}

struct FisherReport {
    double fisher = 0.0;  ///< eps int q^2 with q the step quotient of next
    double didt = std::numeric_limits<double>::quiet_NaN();
    double rhs = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();  ///< |didt - rhs|
    double relative = std::numeric_limits<double>::quiet_NaN();  ///< residual / |didt|
};

/// Fisher information and the dissipation identity dI/dt = -eps int {4|grad q|^2 + (2/eps)(W''/eps - lambda V'') q^2}.
/// dI/dt is the centered difference of the Fisher information of the steps into and out of prev.
inline FisherReport fisher_and_dissipation(const FlowState& prev, const FlowState& next, double dt) {
    const Grid& g = prev.u.grid;
    const double dv = g.cell_volume(), eps = prev.eps;
    Field q(g);
    double qq = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        q[i] = (next.u[i] - prev.u[i]) / dt;
        qq += q[i] * q[i];
    }
    FisherReport r;
    r.fisher = eps * qq * dv;
    if (prev.rate.size() != q.size()) return r;
    double pp = 0.0;
    for (double x : prev.rate.values) pp += x * x;
    r.didt = (r.fisher - eps * pp * dv) / dt;
    Field qm(g);
    for (std::size_t i = 0; i < q.size(); ++i) qm[i] = 0.5 * (q[i] + prev.rate[i]);
    const PotentialSet& p = prev.P();
    const double lam = prev.lambda_cached;
    double pot = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i)
        pot += (p.d2W(prev.u[i]) / eps - lam * prev.mode.g2(p, prev.u[i])) * qm[i] * qm[i];
    r.rhs = -eps * (4.0 * dirichlet_energy(qm, prev.backend) + 2.0 / eps * pot * dv);
    r.residual = std::abs(r.didt - r.rhs);
    r.relative = r.residual / std::abs(r.didt);
    return r;
}

struct Bubble {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    double mass = 0.0;  ///< int V(u) over the watershed basin
    double peak = 0.0;
};

struct BubbleCensus {
    int M = 0;
    std::vector<Bubble> bubbles;
    double background_mass = 0.0;  ///< V-mass not assigned to any bubble
    int M_energetic = -1;          ///< argmin_M |AC - M Psi(eps, V/M)|, -1 when not evaluated
    bool energetic_agrees = true;
};

namespace detail {

inline double periodic_delta(double a, double b, double L) {
    double d = a - b;
    return d - L * std::round(d / L);
}

inline std::vector<std::size_t> neighbors(const Grid& g, std::size_t i, bool full) {
    std::vector<std::size_t> out;
    const auto c = g.coords(i);
    if (!full) {
        for (int d = 0; d < g.dim; ++d)
            for (int s : {-1, 1}) {
                auto e = c;
                e[d] += s;
                out.push_back(g.index(e));
            }
        return out;
    }
    const int total = g.dim == 2 ? 9 : 27;
    for (int k = 0; k < total; ++k) {
        std::array<int, 3> o{k % 3 - 1, (k / 3) % 3 - 1, (k / 9) % 3 - 1};
        if (o[0] == 0 && o[1] == 0 && (g.dim == 2 || o[2] == 0)) continue;
        auto e = c;
        for (int d = 0; d < g.dim; ++d) e[d] += o[d];
        out.push_back(g.index(e));
    }
    return out;
}

/// V-weighted periodic (circular) mean over the points with the given label.
inline std::array<double, 3> circular_mean(const Field& u, const PotentialSet& p, const std::vector<int>* label,
                                           int which) {
    const Grid& g = u.grid;
    std::array<double, 3> cs{0, 0, 0}, sn{0, 0, 0}, c{0, 0, 0};
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (label && (*label)[i] != which) continue;
        const double w = p.V(std::clamp(u[i], 0.0, 1.0));
        if (w == 0.0) continue;
        const auto k = g.coords(i);
        for (int d = 0; d < g.dim; ++d) {
            const double th = 2.0 * std::numbers::pi * k[d] / g.N;
            cs[d] += w * std::cos(th);
            sn[d] += w * std::sin(th);
        }
    }
    for (int d = 0; d < g.dim; ++d) {
        double a = std::atan2(sn[d], cs[d]);
        if (a < 0) a += 2.0 * std::numbers::pi;
        c[d] = a / (2.0 * std::numbers::pi) * g.L;
    }
    return c;
}

} // namespace detail

/// Detect bubbles: superlevel components of {u > beta0} with peaks merged within 5 eps, masses by
/// steepest-ascent watershed. With eps > 0 the count is cross-checked against M Psi(eps, V/M).
inline BubbleCensus bubble_census(const Field& u, const PotentialSet& p, double eps = 0.0, double beta0 = 0.25) {
    const Grid& g = u.grid;
    const std::size_t n = u.size();
    BubbleCensus out;
    // components of the superlevel set
    std::vector<int> comp(n, -1);
    std::vector<std::size_t> peak;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(u[i] > beta0) || comp[i] >= 0) continue;
        const int id = static_cast<int>(peak.size());
        peak.push_back(i);
        std::queue<std::size_t> q;
        q.push(i);
        comp[i] = id;
        while (!q.empty()) {
            const std::size_t j = q.front();
            q.pop();
            if (u[j] > u[peak[id]]) peak[id] = j;
            for (std::size_t k : detail::neighbors(g, j, false))
                if (comp[k] < 0 && u[k] > beta0) {
                    comp[k] = id;
                    q.push(k);
                }
        }
    }
    // merge components whose peaks are closer than 5 eps (union by order of peak height)
    std::vector<int> rep(peak.size());
    for (std::size_t a = 0; a < peak.size(); ++a) rep[a] = static_cast<int>(a);
    std::vector<std::size_t> order(peak.size());
    for (std::size_t a = 0; a < order.size(); ++a) order[a] = a;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[peak[a]] > u[peak[b]]; });
    const double sep = 5.0 * eps;
    std::vector<std::size_t> kept;
    for (std::size_t a : order) {
        bool merged = false;
        if (sep > 0.0)
            for (std::size_t b : kept) {
                const auto ca = g.coords(peak[a]), cb = g.coords(peak[b]);
                double r2 = 0.0;
                for (int d = 0; d < g.dim; ++d) {
                    const double dx = detail::periodic_delta(ca[d] * g.h(), cb[d] * g.h(), g.L);
                    r2 += dx * dx;
                }
                if (std::sqrt(r2) < sep) {
                    rep[a] = static_cast<int>(b);
                    merged = true;
                    break;
                }
            }
        if (!merged) kept.push_back(a);
    }
    std::vector<int> bubble_of(peak.size(), -1);
    for (std::size_t k = 0; k < kept.size(); ++k) bubble_of[kept[k]] = static_cast<int>(k);
    for (std::size_t a = 0; a < peak.size(); ++a) bubble_of[a] = bubble_of[rep[a]];
    out.M = static_cast<int>(kept.size());
    // steepest-ascent watershed: each point climbs to a local maximum
    std::vector<std::size_t> up(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = i;
        for (std::size_t k : detail::neighbors(g, i, true))
            if (u[k] > u[best]) best = k;
        up[i] = best;
    }
    std::vector<int> label(n, -2);
    std::vector<std::size_t> path;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i;
        path.clear();
        while (label[j] == -2 && up[j] != j) {
            path.push_back(j);
            label[j] = -3;  // in progress
            j = up[j];
        }
        int l = label[j];
        if (l < 0) l = (comp[j] >= 0) ? bubble_of[comp[j]] : -1;
        label[j] = l;
        for (std::size_t k : path) label[k] = l;
    }
    out.bubbles.resize(kept.size());
    const double dv = g.cell_volume();
    for (std::size_t i = 0; i < n; ++i) {
        const double m = p.V(std::clamp(u[i], 0.0, 1.0)) * dv;
        if (label[i] >= 0) out.bubbles[label[i]].mass += m;
        else out.background_mass += m;
    }
    for (std::size_t k = 0; k < kept.size(); ++k) {
        out.bubbles[k].peak = u[peak[kept[k]]];
        out.bubbles[k].center = detail::circular_mean(u, p, &label, static_cast<int>(k));
    }
    if (eps > 0.0 && out.M > 0) {
        const auto e = ac_energy(u, eps, p);
        const int n_dim = g.dim;
        double best = std::numeric_limits<double>::infinity();
        for (int M = 1; M <= 8; ++M) {
            const double m = e.volume / M;
            if (!(eps < 0.3 * std::pow(m, 1.0 / n_dim))) break;
            const double gap = std::abs(e.ac - M * psi(eps, m, n_dim, p));
            if (gap < best) best = gap, out.M_energetic = M;
        }
        out.energetic_agrees = out.M_energetic < 0 || out.M_energetic == out.M;
    }
    return out;
}

/// Center of a single diffused ball: V-weighted circular mean, then Gauss-Newton on ||u - zeta(|x - c|)||^2.
inline std::array<double, 3> estimate_center(const Field& u, const PotentialSet& p, const ProfileSampler* zeta,
                                             int gauss_newton_steps = 3) {
    const Grid& g = u.grid;
    auto c = detail::circular_mean(u, p, nullptr, 0);
    if (!zeta) return c;
    const int n = g.dim;
    for (int it = 0; it < gauss_newton_steps; ++it) {
        double JtJ[3][3] = {{0}}, Jtr[3] = {0};
        for (std::size_t i = 0; i < u.size(); ++i) {
            const auto k = g.coords(i);
            double dx[3] = {0, 0, 0}, r2 = 0.0;
            for (int d = 0; d < n; ++d) {
                dx[d] = detail::periodic_delta(k[d] * g.h(), c[d], g.L);
                r2 += dx[d] * dx[d];
            }
            const double r = std::sqrt(r2);
            if (r >= zeta->R() || r == 0.0) continue;
            const auto [z, dz] = (*zeta)(r);
            const double res = u[i] - z;
            double J[3];
            for (int d = 0; d < n; ++d) J[d] = -dz * dx[d] / r;
            for (int a = 0; a < n; ++a) {
                Jtr[a] += J[a] * res;
                for (int b = 0; b < n; ++b) JtJ[a][b] += J[a] * J[b];
            }
        }
        // solve the n x n normal equations by Gaussian elimination
        double A[3][4];
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) A[a][b] = JtJ[a][b];
            A[a][n] = Jtr[a];
        }
        bool ok = true;
        for (int col = 0; col < n && ok; ++col) {
            int piv = col;
            for (int r = col + 1; r < n; ++r)
                if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
            if (A[piv][col] == 0.0) ok = false;
            else {
                std::swap(A[piv], A[col]);
                for (int r = 0; r < n; ++r) {
                    if (r == col) continue;
                    const double f = A[r][col] / A[col][col];
                    for (int k = col; k <= n; ++k) A[r][k] -= f * A[col][k];
                }
            }
        }
        if (!ok) break;
        for (int d = 0; d < n; ++d) {
            c[d] += A[d][n] / A[d][d];
            c[d] -= g.L * std::floor(c[d] / g.L);
        }
    }
    return c;
}

struct DiagRecord {
    double t = 0.0;
    double ac = 0.0;
    double volume = 0.0;
    double lambda = 0.0;
    double fisher = 0.0;
    double dissipation_residual = std::numeric_limits<double>::quiet_NaN();
    double sup_u = 0.0;
    double inf_u = 0.0;
    int M = 0;
    std::array<double, 3> center{0.0, 0.0, 0.0};
};

struct RunOptions {
    int record_every = 100;
    double fisher_floor = 0.0;  ///< stop once the Fisher information falls below (0 disables)
    bool census = true;
    bool center = true;
    long snapshot_every = 0;  ///< steps between snapshots (0 disables)
    std::string snapshot_dir;
    double wall_budget_seconds = 0.0;  ///< 0 disables
    std::function<bool(const DiagRecord&)> stop_when;  ///< extra stop test evaluated at records
    std::function<void(const DiagRecord&)> on_record;
};

struct RunStats {
    double ac0 = 0.0, ac_final = 0.0;
    double dissipated = 0.0;         ///< eps sum_k int q_k^2 dt
    double max_ac_increase = 0.0;    ///< largest single-step increase of AC (absolute, >= 0)
    double max_step_drift = 0.0;     ///< largest per-step relative change of the conserved quantity
    double max_total_drift = 0.0;    ///< largest relative deviation from the initial value
    double min_u = 1.0, max_u = 0.0;
    long steps = 0;
    int substeps = 0;
    bool stopped_early = false;
    bool incomplete = false;
    std::string stop_reason;
    double wall_seconds = 0.0;

    /// |Delta AC - dissipated| / |Delta AC|
    double energy_identity_error() const {
        const double d = ac0 - ac_final;
        return std::abs(d - dissipated) / std::abs(d);
    }
};

struct RunResult {
    FlowState state;
    std::vector<DiagRecord> records;
    RunStats stats;
};

namespace detail {

inline DiagRecord make_record(const FlowState& s, double ac, double fisher, double residual, const RunOptions& o,
                              const ProfileSampler* sampler) {
    DiagRecord r;
    r.t = s.t;
    r.ac = ac;
    r.volume = conserved_quantity(s.u, s.mode, s.P());
    r.lambda = s.lambda_cached;
    r.fisher = fisher;
    r.dissipation_residual = residual;
    r.sup_u = s.u.max();
    r.inf_u = s.u.min();
    if (o.census) r.M = bubble_census(s.u, s.P(), s.eps).M;
    if (o.center) r.center = estimate_center(s.u, s.P(), r.M == 1 ? sampler : nullptr);
    return r;
}

inline std::unique_ptr<ProfileSampler> center_sampler(const FlowState& s) {
    if (s.mode.kind == MultiplierKind::neumann_mu) return nullptr;
    const int n = s.u.grid.dim;
    const double m = s.volume0;
    if (!(m > 0.0) || !(s.eps < 0.3 * std::pow(m, 1.0 / n))) return nullptr;
    try {
        return std::make_unique<ProfileSampler>(*cached_profile(s.eps, m, n, s.P()));
    } catch (const Error&) {
        return nullptr;
    }
}

} // namespace detail

/// Integrate to time T with step dt, recording diagnostics every record_every steps.
inline RunResult run(FlowState s0, double T, double dt, const RunOptions& o = {}) {
    if (o.record_every < 1) throw DomainError("record_every must be >= 1");
    if (T < 0.0) throw DomainError("run length must be >= 0");
    const auto wall0 = std::chrono::steady_clock::now();
    RunResult res;
    Stepper st(s0.u.grid, s0.eps, dt, s0.backend, s0.P(), s0.reaction_cfl);
    auto sampler = o.center ? detail::center_sampler(s0) : nullptr;
    const long nsteps = static_cast<long>(std::llround(T / dt));
    FlowState s = std::move(s0);
    RunStats& S = res.stats;
    S.substeps = st.substeps();
    S.ac0 = st.energy(s);
    S.min_u = s.u.min();
    S.max_u = s.u.max();
    double ac = S.ac0, q0 = conserved_quantity(s.u, s.mode, s.P());
    const double eps = s.eps, dv = s.u.grid.cell_volume();
    auto snapshot = [&](const FlowState& x) {
        if (o.snapshot_every <= 0 || o.snapshot_dir.empty()) return;
        if (x.step_count % o.snapshot_every != 0) return;
        std::filesystem::create_directories(o.snapshot_dir);
        char name[64];
        std::snprintf(name, sizeof name, "snap_%08ld.bin", x.step_count);
        save_snapshot((std::filesystem::path(o.snapshot_dir) / name).string(), x.u, x.t, x.eps);
    };
    auto emit = [&](DiagRecord r) {
        if (o.on_record) o.on_record(r);
        res.records.push_back(std::move(r));
    };
    snapshot(s);
    FlowState prev;
    double ac_prev_state = ac;
    for (long k = 0; k < nsteps; ++k) {
        const bool record_prev = (k % o.record_every == 0);
        if (record_prev) prev = s;
        const double vol_before = conserved_quantity(s.u, s.mode, s.P());
        st.advance(s);
        const double ac_new = st.energy(s);
        S.max_ac_increase = std::max(S.max_ac_increase, ac_new - ac);
        double qq = 0.0;
        for (double x : s.rate.values) qq += x * x;
        const double fisher = eps * qq * dv;
        S.dissipated += fisher * dt;
        const double vol = conserved_quantity(s.u, s.mode, s.P());
        S.max_step_drift = std::max(S.max_step_drift, std::abs(vol - vol_before) / std::abs(q0));
        S.max_total_drift = std::max(S.max_total_drift, std::abs(vol - q0) / std::abs(q0));
        S.min_u = std::min(S.min_u, s.u.min());
        S.max_u = std::max(S.max_u, s.u.max());
        if (record_prev) {
            const auto fr = fisher_and_dissipation(prev, s, dt);
            DiagRecord r = detail::make_record(prev, ac_prev_state, fr.fisher, fr.relative, o, sampler.get());
            emit(r);
            if (k > 0 && o.fisher_floor > 0.0 && r.fisher < o.fisher_floor &&
                (!o.stop_when || o.stop_when(r))) {
                S.stopped_early = true;
                S.stop_reason = "fisher below floor";
            } else if (k > 0 && !o.fisher_floor && o.stop_when && o.stop_when(r)) {
                S.stopped_early = true;
                S.stop_reason = "stop condition met";
            }
        }
        ac = ac_new;
        ac_prev_state = ac_new;
        S.steps = k + 1;
        snapshot(s);
        if (S.stopped_early) break;
        if (o.wall_budget_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count() > o.wall_budget_seconds) {
            S.incomplete = true;
            S.stop_reason = "wall-clock budget exceeded";
            break;
        }
    }
    double fin_fisher = 0.0;
    if (s.rate.size() == s.u.size()) {
        double qq = 0.0;
        for (double x : s.rate.values) qq += x * x;
        fin_fisher = eps * qq * dv;
    }
    emit(detail::make_record(s, ac, fin_fisher, std::numeric_limits<double>::quiet_NaN(), o, sampler.get()));
    S.ac_final = ac;
    S.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    res.state = std::move(s);
    return res;
}

/// Diagnostics CSV: t, ac, volume, lambda, fisher, dissipation_residual, sup_u, inf_u, M, center_x0..
inline void write_diagnostics_csv(const std::string& path, const std::vector<DiagRecord>& recs, int n) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "t,ac,volume,lambda,fisher,dissipation_residual,sup_u,inf_u,M";
    for (int d = 0; d < n; ++d) os << ",center_x" << d;
    os << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (const auto& r : recs) {
        for (double v : {r.t, r.ac, r.volume, r.lambda, r.fisher, r.dissipation_residual, r.sup_u, r.inf_u}) {
            put(v);
            os << ',';
        }
        os << r.M;
        for (int d = 0; d < n; ++d) {
            os << ',';
            put(r.center[d]);
        }
        os << '\n';
    }
}

/// Half-sample even extension of a Neumann box field onto a periodic box of twice the side.
inline Field even_extension(const Field& u) {
    const Grid& g = u.grid;
    Grid G(g.dim, 2 * g.N, 2 * g.L);
    Field out(G);
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto c = G.coords(i);
        for (int d = 0; d < g.dim; ++d)
            if (c[d] >= g.N) c[d] = 2 * g.N - 1 - c[d];
        out[i] = u[g.index(c)];
    }
    return out;
}

/// Restriction of an even extension back to the Neumann box.
inline Field restrict_even(const Field& v) {
    const Grid& G = v.grid;
    Grid g(G.dim, G.N / 2, G.L / 2);
    Field out(g);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[G.index(g.coords(i))];
    return out;
}

} // namespace acflow

#endif
