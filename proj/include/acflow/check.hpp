#ifndef ACFLOW_CHECK_HPP
#define ACFLOW_CHECK_HPP

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "field.hpp"
#include "flow.hpp"
#include "multiplier.hpp"
#include "potentials.hpp"
#include "radial.hpp"
#include "scenario.hpp"
#include "stability.hpp"

namespace acflow {

/// Smooth random field in [0,1]: a few low Fourier modes pushed through a logistic.
inline Field random_smooth_field(const Grid& g, std::mt19937_64& rng, int modes = 6, double sharpness = 4.0) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> K(-3, 3);
    const double tau = 2.0 * M_PI / g.L;
    std::vector<std::array<double, 5>> m;
    for (int j = 0; j < modes; ++j)
        m.push_back({double(K(rng)), double(K(rng)), double(K(rng)), 2.0 * U(rng) - 1.0, 2.0 * M_PI * U(rng)});
    const double shift = 2.0 * U(rng) - 1.0;
    Field u(g);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto c = g.coords(i);
        double s = shift;
        for (const auto& a : m) {
            double ph = a[4];
            for (int d = 0; d < g.dim; ++d) ph += tau * a[d] * c[d] * g.h();
            s += a[3] * std::cos(ph);
        }
        u[i] = 1.0 / (1.0 + std::exp(-sharpness * s));
    }
    return u;
}

struct GradientCheck {
    double worst = 0.0;
    std::vector<double> errors;
};

/// Discrete AC gradient against central differences of AC along random smooth directions.
inline GradientCheck gradient_check(const Field& u, double eps, const PotentialSet& p, Backend b, int directions,
                                    std::mt19937_64& rng, double tau = 1e-4) {
    GradientCheck out;
    const Field g = ac_gradient(u, eps, p, b);
    const double dv = u.grid.cell_volume();
    for (int k = 0; k < directions; ++k) {
        Field phi = random_smooth_field(u.grid, rng, 4, 1.0);
        for (auto& x : phi.values) x -= 0.5;
        double lin = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) lin += g[i] * phi[i];
        lin *= dv;
        Field a = u, c = u;
        for (std::size_t i = 0; i < u.size(); ++i) a[i] += tau * phi[i], c[i] -= tau * phi[i];
        const double fd = (ac_energy(a, eps, p, b).ac - ac_energy(c, eps, p, b).ac) / (2.0 * tau);
        const double e = std::abs(fd - lin) / std::max(std::abs(lin), 1e-300);
        out.errors.push_back(e);
        out.worst = std::max(out.worst, e);
    }
    return out;
}

struct CheckItem {
    std::string module;
    std::string invariant;
    bool pass = false;
    std::string detail;
};

struct CheckOptions {
    bool corrupt_potential_normalization = false;  ///< fault-injection hook
};

/// W scaled by 1.0201 so that int sqrt(W) = 1.01.
class CorruptedWell final : public DoubleWell {
public:
    std::string name() const override { return "corrupted"; }
    double W(double r) const override { return k2 * q_.W(r); }
    double dW(double r) const override { return k2 * q_.dW(r); }
    double d2W(double r) const override { return k2 * q_.d2W(r); }
    double Phi(double r) const override { return k * q_.Phi(r); }
    double dPhi(double r) const override { return k * q_.dPhi(r); }
    double d2Phi(double r) const override { return k * q_.d2Phi(r); }

private:
    static constexpr double k = 1.01, k2 = 1.01 * 1.01;
    Quartic36 q_;
};

inline std::string sci(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3e", v);
    return b;
}

inline std::vector<CheckItem> run_checks(const CheckOptions& opt = {}) {
    std::vector<CheckItem> out;
    auto add = [&](std::string mod, std::string inv, std::function<std::pair<bool, std::string>()> f) {
        CheckItem it{std::move(mod), std::move(inv), false, ""};
        try {
            auto [ok, d] = f();
            it.pass = ok;
            it.detail = d;
        } catch (const std::exception& e) {
            it.pass = false;
            it.detail = std::string("exception: ") + e.what();
        }
        out.push_back(std::move(it));
    };
    std::shared_ptr<const DoubleWell> well = opt.corrupt_potential_normalization
                                                 ? std::shared_ptr<const DoubleWell>(std::make_shared<CorruptedWell>())
                                                 : std::make_shared<Quartic36>();
    const PotentialSet p2(2, well), p3(3, well);

    for (const PotentialSet* p : {&p2, &p3}) {
        const std::string tag = "n=" + std::to_string(p->n());
        add("potentials", "normalization |int sqrt(W) - 1| <= 1e-10 (" + tag + ")", [p] {
            return std::pair{std::abs(p->normalization_residual()) <= 1e-10, sci(p->normalization_residual())};
        });
        add("potentials", "structural invariants (" + tag + ")", [p] {
            auto bad = validate(*p);
            std::string d;
            for (const auto& b : bad)
                if (b.find("normalization") == std::string::npos) d += (d.empty() ? "" : "; ") + b;
            return std::pair{d.empty(), d.empty() ? std::string("ok") : d};
        });
        add("potentials", "Taylor remainder slope (" + tag + ")", [p] {
            const auto r = potential_taylor_residual(*p, TaylorTarget::W);
            return std::pair{std::abs(r.exponent - 3.0) <= 0.01, "slope " + std::to_string(r.exponent)};
        });
    }

    const Grid g(2, 64, 2.0);
    std::mt19937_64 rng(12345);
    add("field", "Modica-Mortola lower bound on random fields", [&] {
        double worst = 1e300;
        for (int k = 0; k < 10; ++k) {
            const Field u = random_smooth_field(g, rng);
            worst = std::min(worst, ac_energy(u, 0.08, p2).isoperimetric_slack);
        }
        return std::pair{worst >= -1e-8, "min slack " + sci(worst)};
    });
    add("field", "translation and reflection invariance of AC", [&] {
        const Field u = random_smooth_field(g, rng);
        const double e = ac_energy(u, 0.08, p2).ac;
        const double a = ac_energy(shift(u, {5, -3, 0}), 0.08, p2).ac;
        const double b = ac_energy(reflect(transpose(u, 0, 1), 0), 0.08, p2).ac;
        const double d = std::max(std::abs(a - e), std::abs(b - e)) / e;
        return std::pair{d <= 1e-12, sci(d)};
    });
    add("field", "gradient check vs central differences", [&] {
        const Field u = random_smooth_field(g, rng);
        const auto r = gradient_check(u, 0.08, p2, Backend::spectral, 3, rng);
        return std::pair{r.worst <= 1e-6, sci(r.worst)};
    });

    const double eps = 0.1;
    std::shared_ptr<const RadialProfile> z;
    add("radial", "profile invariants (eps=0.1, m=1, n=2)", [&] {
        z = cached_profile(eps, 1.0, 2, p2);
        auto bad = validate(*z);
        std::string d;
        for (const auto& b : bad) d += (d.empty() ? "" : "; ") + b;
        return std::pair{bad.empty(), bad.empty() ? "Pohozaev " + sci(z->pohozaev_residual) : d};
    });
    add("multiplier", "volume orthogonality of the flow velocity", [&] {
        if (!z) throw Error("no profile");
        const Field u = interpolate_to_field(*z, Grid(2, 64, 2.4), {1.2, 1.2, 0.0}, {0.1 * eps, 3});
        const Field F = flow_velocity(u, eps, MultiplierMode::exact(), p2);
        const double r = orthogonality_residual(u, F, MultiplierMode::exact(), p2);
        return std::pair{std::abs(r) <= 1e-12, sci(r)};
    });
    add("stability", "all-constrained minimum eigenvalue > 0", [&] {
        if (!z) throw Error("no profile");
        const auto q = assemble(z, 4);
        const double v = constrained_min_eig(q, Sector::all_constrained);
        return std::pair{v > 0.0, sci(v)};
    });
    add("flow", "short run: AC nonincreasing, volume conserved", [&] {
        if (!z) throw Error("no profile");
        const Field u = interpolate_to_field(*z, Grid(2, 64, 2.4), {1.2, 1.2, 0.0}, {0.1 * eps, 3});
        FlowConfig c;
        c.eps = eps;
        auto s = make_flow_state(u, c, p2);
        RunOptions o;
        o.census = false;
        o.center = false;
        const auto r = run(s, 20 * 0.1 * eps * eps, 0.1 * eps * eps, o);
        const bool ok = r.stats.max_ac_increase <= 1e-12 * r.stats.ac0 && r.stats.max_total_drift <= 1e-6;
        return std::pair{ok, "max rise " + sci(r.stats.max_ac_increase) + ", drift " + sci(r.stats.max_total_drift)};
    });
    add("cli", "n = 1 scenario rejected (n >= 2 required)", [] {
        Scenario s;
        s.n = 1;
        try {
            validate(s);
        } catch (const DomainError& e) {
            return std::pair{std::string(e.what()).find("n >= 2") != std::string::npos, std::string("rejected")};
        }
        return std::pair{false, std::string("accepted")};
    });
    add("cli", "scenario round trip", [] {
        Scenario s;
        s.name = "rt";
        s.init.kind = InitSpec::Kind::multi_ball;
        s.init.balls = {{0.5, {1.0, 1.2}}, {0.5, {2.2, 1.2}}};
        return std::pair{parse_scenario(serialize(s)) == s, std::string("parse(serialize(s)) == s")};
    });
    return out;
}

/// Prints the pass/fail table; returns 0 iff everything passed.
inline int check_suite(std::ostream& os, const CheckOptions& opt = {}) {
    const auto items = run_checks(opt);
    int failed = 0;
    for (const auto& it : items) {
        char b[512];
        std::snprintf(b, sizeof b, "%-4s %-11s %-58s %s\n", it.pass ? "PASS" : "FAIL", it.module.c_str(),
                      it.invariant.c_str(), it.detail.c_str());
        os << b;
        failed += !it.pass;
    }
    os << (failed ? std::to_string(failed) + " invariant(s) failed\n" : "all invariants hold\n");
    return failed ? 1 : 0;
}

} // namespace acflow

#endif
