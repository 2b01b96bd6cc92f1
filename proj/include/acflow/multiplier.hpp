#ifndef ACFLOW_MULTIPLIER_HPP
#define ACFLOW_MULTIPLIER_HPP

#include <cmath>
#include <memory>
#include <string>

#include "errors.hpp"
#include "field.hpp"
#include "potentials.hpp"

namespace acflow {

enum class MultiplierKind { exact_V, regularized, neumann_mu };

/// Which volume potential defines the multiplier.
struct MultiplierMode {
    MultiplierKind kind = MultiplierKind::exact_V;
    std::shared_ptr<const RegularizedVolume> vdelta;

    static MultiplierMode exact() { return {}; }
    static MultiplierMode regularized(std::shared_ptr<const RegularizedVolume> v) {
        if (!v) throw DomainError("regularized multiplier requires a built RegularizedVolume");
        return {MultiplierKind::regularized, std::move(v)};
    }
    static MultiplierMode neumann() { return {MultiplierKind::neumann_mu, nullptr}; }

    /// gradient of the conserved quantity at value r
    double g(const PotentialSet& p, double r) const {
        switch (kind) {
        case MultiplierKind::exact_V: return p.dV(r);
        case MultiplierKind::regularized: return vdelta->dV(r);
        default: return 1.0;
        }
    }
    double g2(const PotentialSet& p, double r) const {
        switch (kind) {
        case MultiplierKind::exact_V: return p.d2V(r);
        case MultiplierKind::regularized: return vdelta->d2V(r);
        default: return 0.0;
        }
    }
    /// conserved density
    double density(const PotentialSet& p, double r) const {
        switch (kind) {
        case MultiplierKind::exact_V: return p.V(r);
        case MultiplierKind::regularized: return vdelta->V(r);
        default: return r;
        }
    }
    std::string describe() const {
        switch (kind) {
        case MultiplierKind::exact_V: return "exact_V";
        case MultiplierKind::regularized: return "regularized(" + std::to_string(vdelta->delta()) + ")";
        default: return "neumann_mu";
        }
    }
};

enum class LambdaForm {
    gradient,  ///< [int 2eps^2 |grad u|^2 V'' + W'V'] / (eps int V'^2)
    weak       ///< eps int V'(W'/eps^2 - 2 Lap u) / int V'^2, discretely orthogonal
};

inline constexpr double degenerate_threshold = 1e-14;

/// Volume-preserving Lagrange multiplier.
inline double lambda(const Field& u, double eps, const MultiplierMode& mode, const PotentialSet& p,
                     Backend b = Backend::spectral, LambdaForm form = LambdaForm::gradient) {
    if (!(eps > 0.0)) throw DomainError("lambda requires eps > 0");
    const double dv = u.grid.cell_volume();
    if (mode.kind == MultiplierKind::neumann_mu) {
        double s = 0.0;
        for (double x : u.values) s += p.dW(x);
        return s * dv / (eps * u.grid.box_volume());
    }
    double den = 0.0;
    for (double x : u.values) {
        const double g = mode.g(p, x);
        den += g * g;
    }
    den *= dv;
    if (!(den > degenerate_threshold)) throw DegenerateDenominator(den);
    double num = 0.0;
    if (form == LambdaForm::gradient) {
        const Field gs = gradient_sq(u, b);
        for (std::size_t i = 0; i < u.size(); ++i)
            num += 2.0 * eps * eps * gs[i] * mode.g2(p, u[i]) + p.dW(u[i]) * mode.g(p, u[i]);
        return num * dv / (eps * den);
    }
    const Field lap = laplacian(u, b);
    for (std::size_t i = 0; i < u.size(); ++i) num += mode.g(p, u[i]) * (p.dW(u[i]) / (eps * eps) - 2.0 * lap[i]);
    return eps * num * dv / den;
}

/// Flow velocity 2 Lap u - W'(u)/eps^2 + lambda g(u)/eps with the weak-form multiplier.
inline Field flow_velocity(const Field& u, double eps, const MultiplierMode& mode, const PotentialSet& p,
                           Backend b = Backend::spectral, double* lambda_out = nullptr) {
    const double lam = lambda(u, eps, mode, p, b, LambdaForm::weak);
    const Field lap = laplacian(u, b);
    Field F(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i)
        F[i] = 2.0 * lap[i] - p.dW(u[i]) / (eps * eps) + lam * mode.g(p, u[i]) / eps;
    if (lambda_out) *lambda_out = lam;
    return F;
}

/// int g(u) F / (||g(u)|| ||F||): zero when the velocity preserves the volume.
inline double orthogonality_residual(const Field& u, const Field& F, const MultiplierMode& mode,
                                     const PotentialSet& p) {
    double s = 0.0, gg = 0.0, ff = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double g = mode.g(p, u[i]);
        s += g * F[i];
        gg += g * g;
        ff += F[i] * F[i];
    }
    if (ff == 0.0) return 0.0;
    return s / std::sqrt(gg * ff);
}

/// ||flow velocity||_L2 / ||u||_L2.
inline double stationary_residual(const Field& u, double eps, const MultiplierMode& mode, const PotentialSet& p,
                                  Backend b = Backend::spectral) {
    const Field F = flow_velocity(u, eps, mode, p, b);
    double ff = 0.0, uu = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) ff += F[i] * F[i], uu += u[i] * u[i];
    return std::sqrt(ff / uu);
}

struct LambdaBoundReport {
    double lambda = 0.0;
    /// |lambda| V^{2n} / (AC^{2n+1} int |grad u|^2)
    double ratio_upper = 0.0;
    /// int u^2 / (eps AC + V)
    double ratio_l2 = 0.0;
    bool regression = false;
    bool skipped = false;
};

/// Runtime check of the multiplier bounds with a running-maximum regression guard.
class LambdaBoundSession {
public:
    LambdaBoundReport check(const Field& u, double eps, const PotentialSet& p, Backend b = Backend::spectral) {
        LambdaBoundReport r;
        try {
            r.lambda = lambda(u, eps, MultiplierMode::exact(), p, b);
        } catch (const DegenerateDenominator&) {
            r.skipped = true;
            return r;
        }
        const auto e = ac_energy(u, eps, p, b);
        const int n = u.grid.dim;
        r.ratio_upper = std::abs(r.lambda) * std::pow(e.volume, 2 * n) / (std::pow(e.ac, 2 * n + 1) * e.dirichlet);
        double u2 = 0.0;
        for (double x : u.values) u2 += x * x;
        u2 *= u.grid.cell_volume();
        r.ratio_l2 = u2 / (eps * e.ac + e.volume);
        if (count_ > 0 && (r.ratio_upper > 10.0 * max_upper_ || r.ratio_l2 > 10.0 * max_l2_)) r.regression = true;
        max_upper_ = std::max(max_upper_, r.ratio_upper);
        max_l2_ = std::max(max_l2_, r.ratio_l2);
        ++count_;
        return r;
    }
    double max_upper() const { return max_upper_; }
    double max_l2() const { return max_l2_; }

private:
    double max_upper_ = 0.0, max_l2_ = 0.0;
    long count_ = 0;
};

inline LambdaBoundReport lambda_bound_check(const Field& u, double eps, const PotentialSet& p,
                                            Backend b = Backend::spectral) {
    LambdaBoundSession s;
    return s.check(u, eps, p, b);
}

} // namespace acflow

#endif
