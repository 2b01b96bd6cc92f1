#ifndef ACFLOW_SCENARIO_HPP
#define ACFLOW_SCENARIO_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "errors.hpp"
#include "field.hpp"
#include "flow.hpp"
#include "multiplier.hpp"
#include "potentials.hpp"
#include "radial.hpp"

namespace acflow {

struct BallSpec {
    double m = 0.5;
    std::vector<double> center;
    bool operator==(const BallSpec&) const = default;
};

/// Initial data: a (perturbed) diffused ball, several truncated balls, or a raw snapshot.
struct InitSpec {
    enum class Kind { diffused_ball, multi_ball, raw_snapshot };
    Kind kind = Kind::diffused_ball;
    double m = 1.0;
    std::vector<double> center;  ///< empty means the box center
    double amplitude = 0.0;
    int wavenumber = 0;
    std::vector<BallSpec> balls;
    double truncation = 0.0;  ///< 0 means the radius where zeta falls below 1e-14
    std::string path;
    bool normalize = true;
    bool operator==(const InitSpec&) const = default;
};

inline std::string to_string(InitSpec::Kind k) {
    switch (k) {
    case InitSpec::Kind::diffused_ball: return "diffused_ball";
    case InitSpec::Kind::multi_ball: return "multi_ball";
    default: return "raw_snapshot";
    }
}

struct Scenario {
    std::string name = "scenario";
    int n = 2;
    double eps = 0.08;
    int N = 128;
    double L = 2.0;
    std::string potential = "quartic36";
    std::string multiplier = "exact_V";  ///< exact_V | regularized | neumann_mu
    double delta = 0.05;                 ///< regularization parameter for multiplier = regularized
    Backend backend = Backend::spectral;
    double dt = 0.1 * 0.08 * 0.08;
    double T = 1.0;
    bool volume_fix = true;
    int record_every = 100;
    double fisher_floor = 0.0;
    long snapshot_every = 0;
    double wall_budget = 0.0;
    std::string out_dir = "out";
    InitSpec init;
    bool operator==(const Scenario&) const = default;

    Grid grid() const { return Grid(n, N, L); }
    PotentialSet potentials() const { return make_potentials(n, potential); }
    MultiplierMode mode(const PotentialSet& p) const {
        if (multiplier == "exact_V") return MultiplierMode::exact();
        if (multiplier == "neumann_mu") return MultiplierMode::neumann();
        if (multiplier == "regularized") return MultiplierMode::regularized(build_regularized_volume(p, delta));
        throw DomainError("multiplier must be exact_V, regularized or neumann_mu (got '" + multiplier + "')");
    }
    std::vector<double> center_or_default(const std::vector<double>& c) const {
        if (!c.empty()) return c;
        return std::vector<double>(n, L / 2.0);
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

inline std::string fmt_vector(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_double(v[i]);
    return s;
}

inline std::vector<double> parse_vector(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto a = tok.find_first_not_of(" \t"), b = tok.find_last_not_of(" \t");
        if (a == std::string::npos) continue;
        out.push_back(std::stod(tok.substr(a, b - a + 1)));
    }
    return out;
}

inline bool parse_onoff(const std::string& s) {
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw DomainError("expected on|off (got '" + s + "')");
}

} // namespace detail

/// Serialize as key = value text with section headers.
inline std::string serialize(const Scenario& s) {
    using detail::fmt_double;
    std::ostringstream os;
    os << "name = " << s.name << "\n\n";
    os << "[model]\n";
    os << "n = " << s.n << "\n";
    os << "eps = " << fmt_double(s.eps) << "\n";
    os << "potential = " << s.potential << "\n";
    os << "multiplier = " << s.multiplier << "\n";
    os << "delta = " << fmt_double(s.delta) << "\n\n";
    os << "[grid]\n";
    os << "N = " << s.N << "\n";
    os << "L = " << fmt_double(s.L) << "\n";
    os << "backend = " << to_string(s.backend) << "\n\n";
    os << "[time]\n";
    os << "dt = " << fmt_double(s.dt) << "\n";
    os << "T = " << fmt_double(s.T) << "\n";
    os << "volume_fix = " << (s.volume_fix ? "on" : "off") << "\n";
    os << "record_every = " << s.record_every << "\n";
    os << "fisher_floor = " << fmt_double(s.fisher_floor) << "\n";
    os << "wall_budget = " << fmt_double(s.wall_budget) << "\n\n";
    os << "[init]\n";
    os << "kind = " << to_string(s.init.kind) << "\n";
    os << "m = " << fmt_double(s.init.m) << "\n";
    os << "center = " << detail::fmt_vector(s.init.center) << "\n";
    os << "amplitude = " << fmt_double(s.init.amplitude) << "\n";
    os << "wavenumber = " << s.init.wavenumber << "\n";
    os << "balls = ";
    for (std::size_t i = 0; i < s.init.balls.size(); ++i)
        os << (i ? "; " : "") << fmt_double(s.init.balls[i].m) << " @ " << detail::fmt_vector(s.init.balls[i].center);
    os << "\n";
    os << "truncation = " << fmt_double(s.init.truncation) << "\n";
    os << "path = " << s.init.path << "\n";
    os << "normalize = " << (s.init.normalize ? "on" : "off") << "\n\n";
    os << "[output]\n";
    os << "dir = " << s.out_dir << "\n";
    os << "snapshot_every = " << s.snapshot_every << "\n";
    return os.str();
}

inline Scenario parse_scenario(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw DomainError(std::string("config parse error: ") + e.what());
    }
    Scenario s;
    auto str = [&](const std::string& key, const std::string& def) {
        auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        return v ? *v : def;
    };
    auto num = [&](const std::string& key, double def) {
        const std::string v = str(key, "");
        if (v.empty()) return def;
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw DomainError("config key '" + key + "' expects a number (got '" + v + "')");
        }
    };
    s.name = str("name", s.name);
    s.n = static_cast<int>(num("model.n", s.n));
    s.eps = num("model.eps", s.eps);
    s.potential = str("model.potential", s.potential);
    s.multiplier = str("model.multiplier", s.multiplier);
    s.delta = num("model.delta", s.delta);
    s.N = static_cast<int>(num("grid.N", s.N));
    s.L = num("grid.L", s.L);
    s.backend = parse_backend(str("grid.backend", to_string(s.backend)));
    s.dt = num("time.dt", 0.1 * s.eps * s.eps);
    s.T = num("time.T", s.T);
    s.volume_fix = detail::parse_onoff(str("time.volume_fix", "on"));
    s.record_every = static_cast<int>(num("time.record_every", s.record_every));
    s.fisher_floor = num("time.fisher_floor", s.fisher_floor);
    s.wall_budget = num("time.wall_budget", s.wall_budget);
    const std::string kind = str("init.kind", "diffused_ball");
    if (kind == "diffused_ball") s.init.kind = InitSpec::Kind::diffused_ball;
    else if (kind == "multi_ball") s.init.kind = InitSpec::Kind::multi_ball;
    else if (kind == "raw_snapshot") s.init.kind = InitSpec::Kind::raw_snapshot;
    else throw DomainError("init.kind must be diffused_ball, multi_ball or raw_snapshot (got '" + kind + "')");
    s.init.m = num("init.m", s.init.m);
    s.init.center = detail::parse_vector(str("init.center", ""));
    s.init.amplitude = num("init.amplitude", s.init.amplitude);
    s.init.wavenumber = static_cast<int>(num("init.wavenumber", s.init.wavenumber));
    {
        std::stringstream ss(str("init.balls", ""));
        std::string item;
        while (std::getline(ss, item, ';')) {
            const auto at = item.find('@');
            if (item.find_first_not_of(" \t") == std::string::npos) continue;
            if (at == std::string::npos) throw DomainError("init.balls entries must look like 'm @ x, y'");
            BallSpec b;
            b.m = std::stod(item.substr(0, at));
            b.center = detail::parse_vector(item.substr(at + 1));
            s.init.balls.push_back(b);
        }
    }
    s.init.truncation = num("init.truncation", s.init.truncation);
    s.init.path = str("init.path", "");
    s.init.normalize = detail::parse_onoff(str("init.normalize", "on"));
    s.out_dir = str("output.dir", s.out_dir);
    s.snapshot_every = static_cast<long>(num("output.snapshot_every", 0));
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_scenario(ss.str());
}

/// All guards of the dependent modules; throws DomainError listing every violated inequality.
inline void validate(const Scenario& s) {
    std::vector<std::string> bad;
    if (s.n < 2) bad.push_back("n >= 2 required (got n = " + std::to_string(s.n) + "; the flow is posed for n >= 2)");
    if (s.n > 3) bad.push_back("n <= 3 required (got n = " + std::to_string(s.n) + ")");
    if (!(s.eps > 0.0)) bad.push_back("eps > 0 required");
    if (s.N < 16 || (s.N & (s.N - 1)) != 0) bad.push_back("N must be a power of two >= 16 (got " + std::to_string(s.N) + ")");
    if (!(s.L > 0.0)) bad.push_back("L > 0 required");
    if (s.eps > 0.0 && s.N > 0 && !(s.L / s.N < s.eps / 2.0))
        bad.push_back("resolution: h = L/N = " + detail::fmt_double(s.L / s.N) + " must be < eps/2 = " +
                      detail::fmt_double(s.eps / 2.0));
    if (!(s.dt > 0.0) || !(s.dt <= 0.25 * s.eps * s.eps))
        bad.push_back("stiffness: dt = " + detail::fmt_double(s.dt) + " must satisfy 0 < dt <= 0.25 eps^2 = " +
                      detail::fmt_double(0.25 * s.eps * s.eps));
    if (!(s.T >= 0.0)) bad.push_back("T >= 0 required");
    if (s.record_every < 1) bad.push_back("record_every >= 1 required");
    if (s.multiplier != "exact_V" && s.multiplier != "regularized" && s.multiplier != "neumann_mu")
        bad.push_back("multiplier must be exact_V, regularized or neumann_mu");
    if (s.multiplier == "regularized" && !(s.delta > 0.0 && s.delta <= 0.1))
        bad.push_back("regularized multiplier: 0 < delta <= 0.1 required");
    if (s.n >= 2 && s.n <= 3 && s.eps > 0.0 && s.L > 0.0) {
        auto fits = [&](double m, const std::vector<double>& c, const std::string& what) {
            if (!(m > 0.0)) {
                bad.push_back(what + ": volume m > 0 required");
                return;
            }
            const double r0 = std::pow(m / omega(s.n), 1.0 / s.n);
            if (!(s.eps < 0.3 * std::pow(m, 1.0 / s.n)))
                bad.push_back(what + ": regime eps < 0.3 m^{1/n} = " + detail::fmt_double(0.3 * std::pow(m, 1.0 / s.n)));
            if (!(r0 + 5.0 * s.eps <= s.L / 2.0))
                bad.push_back(what + ": geometry r0 + 5 eps = " + detail::fmt_double(r0 + 5.0 * s.eps) +
                              " must be <= L/2 = " + detail::fmt_double(s.L / 2.0));
            if (!c.empty() && static_cast<int>(c.size()) != s.n)
                bad.push_back(what + ": center needs " + std::to_string(s.n) + " coordinates");
        };
        if (s.init.kind == InitSpec::Kind::diffused_ball) {
            fits(s.init.m, s.init.center, "diffused_ball");
            if (s.init.amplitude != 0.0 && !(std::abs(s.init.amplitude) < s.eps))
                bad.push_back("diffused_ball: perturbation |amplitude| < eps required");
        } else if (s.init.kind == InitSpec::Kind::multi_ball) {
            if (s.init.balls.empty()) bad.push_back("multi_ball: at least one ball required");
            for (std::size_t i = 0; i < s.init.balls.size(); ++i) {
                const auto& b = s.init.balls[i];
                fits(b.m, b.center, "multi_ball[" + std::to_string(i) + "]");
                if (static_cast<int>(b.center.size()) != s.n) continue;
                for (std::size_t j = 0; j < i; ++j) {
                    const auto& o = s.init.balls[j];
                    if (static_cast<int>(o.center.size()) != s.n) continue;
                    double d2 = 0.0;
                    for (int d = 0; d < s.n; ++d) {
                        double dx = b.center[d] - o.center[d];
                        dx -= s.L * std::round(dx / s.L);
                        d2 += dx * dx;
                    }
                    const double rs = std::pow(b.m / omega(s.n), 1.0 / s.n) + std::pow(o.m / omega(s.n), 1.0 / s.n);
                    if (!(std::sqrt(d2) > rs + 2.0 * s.eps))
                        bad.push_back("multi_ball: balls " + std::to_string(j) + " and " + std::to_string(i) +
                                      " overlap: distance " + detail::fmt_double(std::sqrt(d2)) +
                                      " must be > r_i + r_j + 2 eps = " + detail::fmt_double(rs + 2.0 * s.eps));
                }
            }
        } else if (s.init.path.empty()) {
            bad.push_back("raw_snapshot: init.path required");
        }
    }
    if (!bad.empty()) {
        std::string msg = "scenario '" + s.name + "' rejected:";
        for (const auto& b : bad) msg += "\n  - " + b;
        throw DomainError(msg);
    }
}

/// Relative margin below 2 Psi(eps,1/2) required before the energy hypothesis is reported as holding.
inline constexpr double energy_hypothesis_margin = 1e-3;

struct InitialData {
    Field u;
    double ac = 0.0;
    double volume = 0.0;
    bool energy_hypothesis = false;        ///< AC(u0) < 2 Psi(eps, 1/2) by more than the margin
    bool energy_hypothesis_known = false;  ///< false when Psi(eps, 1/2) lies outside the regime guard
    bool compact = false;                  ///< far field exactly below 1e-14 on the box faces
};

/// Newton on s in u + s V'(u) so that the V-volume equals target; leaves u untouched when already there.
inline void normalize_volume(Field& u, const PotentialSet& p, double target = 1.0) {
    std::vector<double> g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = p.dV(u[i]);
    const double dv = u.grid.cell_volume();
    double sh = 0.0;
    for (int it = 0; it < 30; ++it) {
        double G = 0.0, dG = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double x = u[i] + sh * g[i];
            G += p.V(x);
            dG += p.dV(x) * g[i];
        }
        G = G * dv - target;
        if (std::abs(G) <= 1e-15 * target) {
            if (sh != 0.0)
                for (std::size_t i = 0; i < u.size(); ++i) u[i] += sh * g[i];
            return;
        }
        if (!(dG > 0.0)) break;
        sh -= G / (dG * dv);
    }
    throw Error("normalization failure: could not bring the V-volume to " + detail::fmt_double(target));
}

/// u <= 1e-14 on every point of the outer faces of the box.
inline bool numerically_compact(const Field& u) {
    const Grid& g = u.grid;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto c = g.coords(i);
        bool face = false;
        for (int d = 0; d < g.dim; ++d) face = face || c[d] == 0 || c[d] == g.N - 1;
        if (face && std::abs(u[i]) > 1e-14) return false;
    }
    return true;
}

/// Radius where the profile first drops to 1e-14.
inline double compact_radius(const RadialProfile& z) {
    double lo = z.r0, hi = z.R();
    if (z(hi) > 1e-14) return hi;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (z(mid) > 1e-14) lo = mid;
        else hi = mid;
    }
    return hi;
}

inline InitialData build_initial(const InitSpec& spec, const Scenario& sc) {
    const PotentialSet p = sc.potentials();
    InitialData out;
    if (spec.kind == InitSpec::Kind::raw_snapshot) {
        SnapshotHeader h;
        out.u = load_snapshot(spec.path, &h);
        if (h.n != sc.n || h.N != sc.N || h.L != sc.L)
            throw GeometryError("snapshot grid (n, N, L) = (" + std::to_string(h.n) + ", " + std::to_string(h.N) + ", " +
                                detail::fmt_double(h.L) + ") does not match the scenario grid");
    } else {
        validate(sc);
        const Grid g = sc.grid();
        if (spec.kind == InitSpec::Kind::diffused_ball) {
            const auto z = cached_profile(sc.eps, spec.m, sc.n, p);
            const auto c = sc.center_or_default(spec.center);
            out.u = interpolate_to_field(*z, g, {c[0], c[1], sc.n > 2 ? c[2] : 0.0},
                                         BallPerturbation{spec.amplitude, spec.wavenumber});
        } else {
            out.u = Field(g);
            for (const auto& b : spec.balls) {
                const auto z = cached_profile(sc.eps, b.m, sc.n, p);
                const double rt = spec.truncation > 0.0 ? spec.truncation : compact_radius(*z);
                const auto c = sc.center_or_default(b.center);
                const Field v = interpolate_to_field(*z, g, {c[0], c[1], sc.n > 2 ? c[2] : 0.0});
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const auto k = g.coords(i);
                    double r2 = 0.0;
                    for (int d = 0; d < sc.n; ++d) {
                        const double dx = detail::periodic_delta(k[d] * g.h(), c[d], g.L);
                        r2 += dx * dx;
                    }
                    if (std::sqrt(r2) <= rt) out.u[i] = std::max(out.u[i], v[i]);
                }
            }
        }
    }
    if (spec.normalize) normalize_volume(out.u, p, 1.0);
    const auto e = ac_energy(out.u, sc.eps, p, sc.backend);
    out.ac = e.ac;
    out.volume = e.volume;
    if (sc.eps < 0.3 * std::pow(0.5, 1.0 / sc.n)) {
        out.energy_hypothesis_known = true;
        const double level = 2.0 * psi(sc.eps, 0.5, sc.n, p);
        out.energy_hypothesis = e.ac < level * (1.0 - energy_hypothesis_margin);
    }
    out.compact = numerically_compact(out.u);
    return out;
}

} // namespace acflow

#endif
