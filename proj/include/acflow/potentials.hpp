#ifndef ACFLOW_POTENTIALS_HPP
#define ACFLOW_POTENTIALS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "errors.hpp"

namespace acflow {

/// Double-well potential W on [0,1] together with Phi(r) = int_0^r sqrt(W).
class DoubleWell {
public:
    virtual ~DoubleWell() = default;
    virtual std::string name() const = 0;
    virtual double W(double r) const = 0;
    virtual double dW(double r) const = 0;
    virtual double d2W(double r) const = 0;
    virtual double Phi(double r) const = 0;
    /// Phi' = sqrt(W) on [0,1]
    virtual double dPhi(double r) const = 0;
    virtual double d2Phi(double r) const = 0;
};

/// W = 36 r^2 (1-r)^2, Phi = 3 r^2 - 2 r^3.
class Quartic36 final : public DoubleWell {
public:
    std::string name() const override { return "quartic36"; }
    double W(double r) const override {
        const double q = r * (1.0 - r);
        return 36.0 * q * q;
    }
    double dW(double r) const override { return 72.0 * r * (1.0 - r) * (1.0 - 2.0 * r); }
    double d2W(double r) const override { return 72.0 * (1.0 - 6.0 * r + 6.0 * r * r); }
    double Phi(double r) const override { return r * r * (3.0 - 2.0 * r); }
    double dPhi(double r) const override { return 6.0 * r * (1.0 - r); }
    double d2Phi(double r) const override { return 6.0 - 12.0 * r; }
};

using WellFactory = std::function<std::shared_ptr<const DoubleWell>()>;

namespace detail {
inline std::map<std::string, WellFactory>& well_registry() {
    static std::map<std::string, WellFactory> reg{
        {"quartic36", [] { return std::make_shared<Quartic36>(); }}};
    return reg;
}
inline std::mutex& well_registry_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

/// Register an alternative double well under a config name.
inline void register_potential(const std::string& name, WellFactory f) {
    std::lock_guard lock(detail::well_registry_mutex());
    detail::well_registry()[name] = std::move(f);
}

inline std::vector<std::string> registered_potentials() {
    std::lock_guard lock(detail::well_registry_mutex());
    std::vector<std::string> out;
    for (const auto& [k, v] : detail::well_registry()) out.push_back(k);
    return out;
}

/// W, Phi, V = Phi^{n/(n-1)} and derivatives in dimension n. Immutable.
class PotentialSet {
public:
    PotentialSet(int n, std::shared_ptr<const DoubleWell> well) : n_(n), well_(std::move(well)) {
        if (n < 2) throw DomainError("potentials require n >= 2 (got n = " + std::to_string(n) + ")");
        if (!well_) throw DomainError("null double well");
        alpha_ = 1.0 / (n - 1);
        quartic_ = dynamic_cast<const Quartic36*>(well_.get()) != nullptr;
        boost::math::quadrature::gauss_kronrod<double, 31> gk;
        const double I = gk.integrate([this](double r) { return std::sqrt(std::max(0.0, well_->W(r))); },
                                      0.0, 1.0, 20, 1e-15);
        normalization_residual_ = I - 1.0;
    }

    int n() const { return n_; }
    const std::string name() const { return well_->name(); }
    const DoubleWell& well() const { return *well_; }
    std::shared_ptr<const DoubleWell> well_ptr() const { return well_; }
    double alpha() const { return alpha_; }
    /// Taylor remainder exponent gamma(n) = min{1, 2/(n-1)}
    double gamma() const { return std::min(1.0, 2.0 / (n_ - 1)); }
    /// int_0^1 sqrt(W) - 1 by adaptive Gauss-Kronrod
    double normalization_residual() const { return normalization_residual_; }

    double W(double r) const { return well_->W(r); }
    double dW(double r) const { return well_->dW(r); }
    double d2W(double r) const { return well_->d2W(r); }
    double Phi(double r) const { return well_->Phi(r); }
    double dPhi(double r) const { return well_->dPhi(r); }
    double d2Phi(double r) const { return well_->d2Phi(r); }

    double V(double r) const {
        const double f = std::max(0.0, Phi(r));
        return f * pow_alpha(f);
    }
    double dV(double r) const {
        const double f = std::max(0.0, Phi(r));
        return (1.0 + alpha_) * pow_alpha(f) * dPhi(r);
    }
    double d2V(double r) const {
        const double f = std::max(0.0, Phi(r));
        const double g = dPhi(r);
        double first = 0.0;
        if (alpha_ == 1.0) first = g * g;
        else if (f > 0.0) first = alpha_ * g * g * pow_alpha(f) / f;
        return (1.0 + alpha_) * (first + pow_alpha(f) * d2Phi(r));
    }

    /// Batch W'(u) and V'(u) for the flow's reaction term.
    void reaction(const double* u, std::size_t count, double* dw, double* dv) const {
        if (quartic_ && alpha_ == 1.0) {
            for (std::size_t i = 0; i < count; ++i) {
                const double r = u[i];
                const double q = r * (1.0 - r);
                dw[i] = 72.0 * q * (1.0 - 2.0 * r);
                const double f = std::max(0.0, r * r * (3.0 - 2.0 * r));
                dv[i] = 2.0 * f * 6.0 * q;
            }
            return;
        }
        for (std::size_t i = 0; i < count; ++i) {
            dw[i] = dW(u[i]);
            dv[i] = dV(u[i]);
        }
    }

private:
    double pow_alpha(double f) const {
        if (alpha_ == 1.0) return f;
        if (alpha_ == 0.5) return std::sqrt(f);
        return std::pow(f, alpha_);
    }

    int n_;
    std::shared_ptr<const DoubleWell> well_;
    double alpha_ = 1.0;
    bool quartic_ = false;
    double normalization_residual_ = 0.0;
};

inline PotentialSet make_potentials(int n, const std::string& name) {
    WellFactory f;
    {
        std::lock_guard lock(detail::well_registry_mutex());
        auto it = detail::well_registry().find(name);
        if (it == detail::well_registry().end()) throw DomainError("unknown potential '" + name + "'");
        f = it->second;
    }
    return PotentialSet(n, f());
}

inline PotentialSet make_default_potentials(int n) { return PotentialSet(n, std::make_shared<Quartic36>()); }

/// Empirical near-well constants on (0, delta0].
struct NearWellConstants {
    double c_w = 0.0;  ///< max of W/r^2 and r^2/W
    double c_v = 0.0;  ///< max V / r^{2n/(n-1)}
};

inline NearWellConstants measure_near_well(const PotentialSet& p, double delta0 = 0.1, int samples = 2000) {
    NearWellConstants c;
    const double e = 2.0 * p.n() / (p.n() - 1.0);
    for (int i = 1; i <= samples; ++i) {
        const double r = delta0 * i / samples;
        const double q = p.W(r) / (r * r);
        c.c_w = std::max({c.c_w, q, 1.0 / q});
    }
    for (int i = 1; i <= samples; ++i) {
        const double r = static_cast<double>(i) / samples;
        c.c_v = std::max(c.c_v, p.V(r) / std::pow(r, e));
    }
    return c;
}

/// Invariant violations of a PotentialSet; empty when all hold.
inline std::vector<std::string> validate(const PotentialSet& p, double tol = 1e-10) {
    std::vector<std::string> bad;
    if (std::abs(p.W(0.0)) > 0.0 || std::abs(p.W(1.0)) > 0.0) bad.push_back("W(0)=W(1)=0");
    if (!(p.d2W(0.0) > 0.0 && p.d2W(1.0) > 0.0)) bad.push_back("W''(0)>0, W''(1)>0");
    if (std::abs(p.normalization_residual()) > tol) bad.push_back("normalization |int sqrt(W) - 1| <= 1e-10");
    if (p.Phi(0.0) != 0.0 || std::abs(p.Phi(1.0) - 1.0) > tol) bad.push_back("Phi(0)=0, Phi(1)=1");
    if (p.V(0.0) != 0.0 || std::abs(p.V(1.0) - 1.0) > tol) bad.push_back("V(0)=0, V(1)=1");
    bool wpos = true, phimono = true, vmono = true;
    const int k = 4096;
    for (int i = 1; i < k; ++i) {
        const double r = static_cast<double>(i) / k, r0 = static_cast<double>(i - 1) / k;
        if (!(p.W(r) > 0.0)) wpos = false;
        if (!(p.Phi(r) > p.Phi(r0))) phimono = false;
        if (!(p.V(r) > p.V(r0))) vmono = false;
    }
    if (!wpos) bad.push_back("W>0 on (0,1)");
    if (!phimono) bad.push_back("Phi strictly increasing");
    if (!vmono) bad.push_back("V strictly increasing");
    const auto c = measure_near_well(p);
    if (!std::isfinite(c.c_w) || !std::isfinite(c.c_v)) bad.push_back("near-well bounds finite");
    return bad;
}

enum class TaylorTarget { W, V };

struct TaylorReport {
    double c = 0.0;             ///< smallest C with residual <= C |r-s|^{2+gamma}
    double max_residual = 0.0;
    double exponent = 0.0;      ///< log-log slope of max residual vs |r-s|
    double gamma = 0.0;
};

/// Second-order Taylor remainder of W or V sampled on (0,1)^2.
inline TaylorReport potential_taylor_residual(const PotentialSet& p, TaylorTarget target, int order = 2) {
    if (order != 2) throw DomainError("potential_taylor_residual supports order 2 only");
    std::function<double(double)> f, df, d2f;
    if (target == TaylorTarget::W) {
        f = [&](double r) { return p.W(r); };
        df = [&](double r) { return p.dW(r); };
        d2f = [&](double r) { return p.d2W(r); };
    } else {
        f = [&](double r) { return p.V(r); };
        df = [&](double r) { return p.dV(r); };
        d2f = [&](double r) { return p.d2V(r); };
    }
    TaylorReport rep;
    rep.gamma = target == TaylorTarget::W ? 1.0 : p.gamma();
    const double ex = 2.0 + rep.gamma;
    const int ns = 400;
    std::vector<double> hs, res;
    for (int j = 0; j <= 16; ++j) {
        const double h = 1e-3 * std::pow(10.0, j / 8.0);
        double worst = 0.0;
        for (int i = 1; i < ns; ++i) {
            const double s = static_cast<double>(i) / ns;
            for (double r : {s - h, s + h}) {
                if (r <= 0.0 || r >= 1.0) continue;
                const double d = r - s;
                const double R = std::abs(f(r) - f(s) - df(s) * d - d2f(s) * d * d / 2.0);
                worst = std::max(worst, R);
                rep.c = std::max(rep.c, R / std::pow(std::abs(d), ex));
            }
        }
        rep.max_residual = std::max(rep.max_residual, worst);
        hs.push_back(std::log(h));
        res.push_back(std::log(worst));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) mx += hs[i], my += res[i];
    mx /= hs.size();
    my /= hs.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        sxy += (hs[i] - mx) * (res[i] - my);
        sxx += (hs[i] - mx) * (hs[i] - mx);
    }
    rep.exponent = sxy / sxx;
    return rep;
}

/// V_delta = rho_delta * (L_delta o Phi)^{n/(n-1)} tabulated on 2^16 points.
class RegularizedVolume {
public:
    static constexpr double delta0 = 0.1;
    static constexpr std::size_t default_points = std::size_t{1} << 16;
    static constexpr int min_cells_per_halfwidth = 8;

    RegularizedVolume(const PotentialSet& p, double delta, std::size_t points = default_points)
        : delta_(delta), n_(p.n()) {
        if (!(delta > 0.0 && delta <= delta0))
            throw DomainError("regularization requires 0 < delta <= " + std::to_string(delta0) +
                              " (got " + std::to_string(delta) + ")");
        if (points < 16) throw DomainError("tabulation grid needs at least 16 points");
        const std::size_t M = points;
        h_ = 1.0 / static_cast<double>(M - 1);
        const double w = delta * delta;
        const long J = static_cast<long>(std::floor(w / h_));
        if (J < min_cells_per_halfwidth)
            throw DomainError("tabulation grid too coarse: mollifier half-width delta^2 = " + std::to_string(w) +
                              " spans " + std::to_string(J) + " cells, need >= " +
                              std::to_string(min_cells_per_halfwidth));
        // mollifier and its derivative sampled on the tabulation lattice
        std::vector<double> k(2 * J + 1), dk(2 * J + 1);
        double mass = 0.0;
        for (long j = -J; j <= J; ++j) {
            const double x = j * h_ / w;
            const double s = 1.0 - x * x;
            if (s <= 0.0) continue;
            const double rho = std::exp(-1.0 / s);
            k[j + J] = rho;
            dk[j + J] = rho * (-2.0 * x / w) / (s * s);
            mass += rho * h_;
        }
        for (long j = 0; j <= 2 * J; ++j) {
            k[j] *= h_ / mass;
            dk[j] *= h_ / mass;
        }
        // f = (L o Phi)^{1+alpha} and f' on the lattice, extended by 0 below and by 1 (f' = 0) above
        const double a = p.alpha();
        std::vector<double> f(M), df(M);
        for (std::size_t i = 0; i < M; ++i) {
            const double r = i * h_;
            const double phi = p.Phi(r);
            double L, dL;
            if (phi <= delta) L = 0.0, dL = 0.0;
            else if (phi >= 1.0 - delta) L = 1.0, dL = 0.0;
            else L = (phi - delta) / (1.0 - 2.0 * delta), dL = 1.0 / (1.0 - 2.0 * delta);
            f[i] = std::pow(L, 1.0 + a);
            df[i] = (1.0 + a) * std::pow(L, a) * dL * p.dPhi(r);
        }
        auto fat = [&](long i) { return i < 0 ? 0.0 : (i >= static_cast<long>(M) ? 1.0 : f[i]); };
        auto dfat = [&](long i) { return (i < 0 || i >= static_cast<long>(M)) ? 0.0 : df[i]; };
        v_.assign(M, 0.0);
        dv_.assign(M, 0.0);
        d2v_.assign(M, 0.0);
        for (long i = 0; i < static_cast<long>(M); ++i) {
            double s0 = 0, s1 = 0, s2 = 0;
            for (long j = -J; j <= J; ++j) {
                const double kk = k[j + J];
                if (kk == 0.0 && dk[j + J] == 0.0) continue;
                const double fv = fat(i - j), dfv = dfat(i - j);
                s0 += kk * fv;
                s1 += kk * dfv;
                s2 += dk[j + J] * dfv;
            }
            v_[i] = s0;
            dv_[i] = s1;
            d2v_[i] = s2;
        }
    }

    double delta() const { return delta_; }
    int n() const { return n_; }
    std::size_t points() const { return v_.size(); }
    double spacing() const { return h_; }
    const std::vector<double>& table() const { return v_; }
    const std::vector<double>& table_d1() const { return dv_; }
    const std::vector<double>& table_d2() const { return d2v_; }

    double V(double r) const {
        if (r <= 0.0) return 0.0;
        if (r >= 1.0) return v_.back();
        return hermite(v_, dv_, r);
    }
    double dV(double r) const {
        if (r <= 0.0 || r >= 1.0) return 0.0;
        return hermite(dv_, d2v_, r);
    }
    double d2V(double r) const {
        if (r <= 0.0) return d2v_.front();
        if (r >= 1.0) return d2v_.back();
        const double x = r / h_;
        long i = static_cast<long>(std::floor(x));
        const long M = static_cast<long>(v_.size());
        i = std::clamp(i, 1L, M - 3);
        const double t = x - i;
        const double y0 = d2v_[i - 1], y1 = d2v_[i], y2 = d2v_[i + 1], y3 = d2v_[i + 2];
        return y1 + 0.5 * t * (y2 - y0 + t * (2.0 * y0 - 5.0 * y1 + 4.0 * y2 - y3 + t * (3.0 * (y1 - y2) + y3 - y0)));
    }

    /// max |V_delta'' difference| / spacing over the table
    double lipschitz_d2() const {
        double L = 0.0;
        for (std::size_t i = 1; i < d2v_.size(); ++i) L = std::max(L, std::abs(d2v_[i] - d2v_[i - 1]) / h_);
        return L;
    }

    /// sup|V_delta - V| on the tabulation grid
    double c0_distance(const PotentialSet& p) const {
        double d = 0.0;
        for (std::size_t i = 0; i < v_.size(); ++i) d = std::max(d, std::abs(v_[i] - p.V(i * h_)));
        return d;
    }
    /// sup|V_d - V| + sup|V_d' - V'| + sup|V_d'' - V''| on the tabulation grid
    double c2_distance(const PotentialSet& p) const {
        double d0 = 0, d1 = 0, d2 = 0;
        for (std::size_t i = 0; i < v_.size(); ++i) {
            const double r = i * h_;
            d0 = std::max(d0, std::abs(v_[i] - p.V(r)));
            d1 = std::max(d1, std::abs(dv_[i] - p.dV(r)));
            d2 = std::max(d2, std::abs(d2v_[i] - p.d2V(r)));
        }
        return d0 + d1 + d2;
    }

    void dump_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw Error("cannot write " + path);
        os.precision(17);
        os << "r,V_delta\n";
        for (std::size_t i = 0; i < v_.size(); ++i) os << i * h_ << ',' << v_[i] << '\n';
    }

private:
    double hermite(const std::vector<double>& y, const std::vector<double>& dy, double r) const {
        const double x = r / h_;
        long i = static_cast<long>(std::floor(x));
        i = std::clamp(i, 0L, static_cast<long>(y.size()) - 2);
        const double t = x - i;
        const double t2 = t * t, t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        return h00 * y[i] + h10 * h_ * dy[i] + h01 * y[i + 1] + h11 * h_ * dy[i + 1];
    }

    double delta_;
    int n_;
    double h_ = 0.0;
    std::vector<double> v_, dv_, d2v_;
};

inline std::shared_ptr<const RegularizedVolume> build_regularized_volume(const PotentialSet& p, double delta) {
    return std::make_shared<const RegularizedVolume>(p, delta);
}

} // namespace acflow

#endif
