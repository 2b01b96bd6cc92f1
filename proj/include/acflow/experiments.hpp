#ifndef ACFLOW_EXPERIMENTS_HPP
#define ACFLOW_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "flow.hpp"
#include "radial.hpp"
#include "scenario.hpp"

namespace acflow {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = std::numeric_limits<double>::quiet_NaN();
    int points = 0;
};

/// Least squares y = a + b x.
inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit f;
    f.points = static_cast<int>(x.size());
    if (x.size() < 3) return f;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= x.size();
    my /= y.size();
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - f.intercept - f.slope * x[i];
        ssr += e * e;
    }
    f.r2 = syy > 0.0 ? 1.0 - ssr / syy : (ssr == 0.0 ? 1.0 : 0.0);
    return f;
}

struct ChartSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Minimal self-contained SVG line chart.
inline void write_svg_chart(const std::string& path, const std::string& title, const std::string& xlabel,
                            const std::vector<ChartSeries>& series, bool logy = false) {
    const double W = 640, H = 400, ml = 80, mr = 20, mt = 40, mb = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double v = ty(s.y[i]);
            if (!std::isfinite(v) || !std::isfinite(s.x[i])) continue;
            x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, v), y1 = std::max(y1, v);
        }
    if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
    if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad, y1 += pad;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    char buf[128];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double yv = y0 + k * (y1 - y0) / 4, xv = x0 + k * (x1 - x0) / 4;
        std::snprintf(buf, sizeof buf, logy ? "1e%.1f" : "%.6g", yv);
        os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf
           << "</text>\n";
        std::snprintf(buf, sizeof buf, "%.4g", xv);
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << buf << "</text>\n";
    }
    os << "<text x=\"" << (W + ml) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << xlabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* c = colors[s % 5];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            const double v = ty(series[s].y[i]);
            if (!std::isfinite(v)) continue;
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(series[s].x[i]), py(v));
            os << buf;
        }
        os << "\"/>\n";
        os << "<text x=\"" << W - mr - 6 << "\" y=\"" << mt + 16 + 14 * s << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
           << c << "\">" << series[s].label << "</text>\n";
    }
    os << "</svg>\n";
}

/// Energy, multiplier, Fisher information and volume drift charts for a run.
inline void write_run_plots(const std::string& dir, const std::vector<DiagRecord>& recs, double psi_ref,
                            double lambda_ref) {
    std::filesystem::create_directories(dir);
    ChartSeries e{"AC", {}, {}}, ep{"Psi", {}, {}}, l{"lambda", {}, {}}, lr{"Lambda", {}, {}}, f{"Fisher", {}, {}},
        v{"volume drift", {}, {}};
    const double v0 = recs.empty() ? 1.0 : recs.front().volume;
    for (const auto& r : recs) {
        e.x.push_back(r.t), e.y.push_back(r.ac);
        ep.x.push_back(r.t), ep.y.push_back(psi_ref);
        l.x.push_back(r.t), l.y.push_back(r.lambda);
        lr.x.push_back(r.t), lr.y.push_back(lambda_ref);
        if (r.fisher > 0.0) f.x.push_back(r.t), f.y.push_back(r.fisher);
        v.x.push_back(r.t), v.y.push_back((r.volume - v0) / v0);
    }
    namespace fs = std::filesystem;
    write_svg_chart((fs::path(dir) / "energy.svg").string(), "Allen-Cahn energy", "t", {e, ep});
    write_svg_chart((fs::path(dir) / "lambda.svg").string(), "Lagrange multiplier", "t", {l, lr});
    write_svg_chart((fs::path(dir) / "fisher.svg").string(), "Fisher information (log10)", "t", {f}, true);
    write_svg_chart((fs::path(dir) / "volume.svg").string(), "relative volume drift", "t", {v});
}

inline FlowState flow_state_for(const Scenario& sc, const Field& u0, const PotentialSet& p) {
    FlowConfig c;
    c.eps = sc.eps;
    c.mode = sc.mode(p);
    c.backend = sc.backend;
    c.volume_fix = sc.volume_fix;
    return make_flow_state(u0, c, p);
}

inline RunOptions run_options_for(const Scenario& sc) {
    RunOptions o;
    o.record_every = sc.record_every;
    o.fisher_floor = sc.fisher_floor;
    o.wall_budget_seconds = sc.wall_budget;
    o.snapshot_every = sc.snapshot_every;
    if (sc.snapshot_every > 0) o.snapshot_dir = (std::filesystem::path(sc.out_dir) / "snapshots").string();
    return o;
}

/// Fraction of the run treated as the initial transient for Fisher monotonicity.
inline constexpr double fisher_transient_fraction = 0.05;

struct ConvergenceReport {
    Scenario scenario;
    InitialData init;
    RunResult run;
    double Psi = 0.0, Lambda = 0.0;
    LinearFit energy_fit;
    bool fit_degenerate = false;
    int nonpositive_gaps = 0;
    double rate = 0.0;
    bool fisher_monotone = false;
    double fisher_worst_rise = 0.0;  ///< largest relative increase between consecutive records after the transient
    LinearFit fisher_fit;
    double final_l2 = 0.0;
    std::array<double, 3> x0{};
    double lambda_rel_gap = 0.0;
    int M_final = 0;
    double center_shift = 0.0;
    bool center_stationary = false;

    std::string text() const {
        std::ostringstream os;
        char b[256];
        os << "convergence experiment '" << scenario.name << "'\n";
        std::snprintf(b, sizeof b, "  AC(u0) = %.12g  V(u0) = %.15g  AC(u0) < 2 Psi(eps,1/2): %s  compact: %s\n",
                      init.ac, init.volume,
                      init.energy_hypothesis_known ? (init.energy_hypothesis ? "yes" : "no") : "unknown",
                      init.compact ? "yes" : "no");
        os << b;
        std::snprintf(b, sizeof b, "  steps %ld  wall %.1f s  Psi(eps,1) = %.12g  Lambda = %.12g\n", run.stats.steps,
                      run.stats.wall_seconds, Psi, Lambda);
        os << b;
        std::snprintf(b, sizeof b, "  energy gap fit: rate %.6g  R^2 %.6f  points %d%s\n", rate, energy_fit.r2,
                      energy_fit.points,
                      fit_degenerate ? "  (degenerate: gap reached the quadrature floor)" : "");
        os << b;
        std::snprintf(b, sizeof b, "  Fisher: monotone after transient %s (worst rise %.3e)  fit rate %.6g  R^2 %.6f\n",
                      fisher_monotone ? "yes" : "no", fisher_worst_rise, -fisher_fit.slope, fisher_fit.r2);
        os << b;
        std::snprintf(b, sizeof b, "  final |u - zeta(. - x0)|_L2 = %.6e  x0 = (%.6f, %.6f, %.6f)\n", final_l2, x0[0],
                      x0[1], x0[2]);
        os << b;
        std::snprintf(b, sizeof b, "  (lambda - Lambda)/Lambda = %.6e  M = %d  center shift over last half %.3e (%s)\n",
                      lambda_rel_gap, M_final, center_shift, center_stationary ? "stationary" : "moving");
        os << b;
        std::snprintf(b, sizeof b, "  energy identity error %.3e  max AC increase %.3e  max volume drift %.3e  range [%.3e, 1%+.3e]\n",
                      run.stats.energy_identity_error(), run.stats.max_ac_increase, run.stats.max_total_drift,
                      run.stats.min_u, run.stats.max_u - 1.0);
        os << b;
        return os.str();
    }
};

inline const DiagRecord& record_near(const std::vector<DiagRecord>& recs, double t) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < recs.size(); ++i)
        if (std::abs(recs[i].t - t) < std::abs(recs[best].t - t)) best = i;
    return recs[best];
}

inline double center_distance(const std::array<double, 3>& a, const std::array<double, 3>& b, int n, double L) {
    double s = 0.0;
    for (int d = 0; d < n; ++d) {
        const double dx = detail::periodic_delta(a[d], b[d], L);
        s += dx * dx;
    }
    return std::sqrt(s);
}

/// Analysis of a finished convergence run against the radial reference values.
inline ConvergenceReport analyze_convergence(const Scenario& sc, InitialData init, RunResult run) {
    const PotentialSet p = sc.potentials();
    ConvergenceReport rep;
    rep.scenario = sc;
    rep.init = std::move(init);
    rep.run = std::move(run);
    const auto z = cached_profile(sc.eps, 1.0, sc.n, p);
    rep.Psi = z->Psi;
    rep.Lambda = z->Lambda;
    const auto& recs = rep.run.records;
    const double tf = recs.back().t;
    std::vector<double> xs, ys;
    for (const auto& r : recs) {
        if (r.t < 0.5 * tf) continue;
        const double gap = r.ac - rep.Psi;
        if (!(gap > 0.0)) {
            ++rep.nonpositive_gaps;
            continue;
        }
        xs.push_back(r.t);
        ys.push_back(std::log(gap));
    }
    rep.energy_fit = fit_line(xs, ys);
    rep.fit_degenerate = rep.nonpositive_gaps > 0 || xs.size() < 3;
    if (rep.fit_degenerate) rep.energy_fit.r2 = rep.nonpositive_gaps > 0 ? 0.0 : rep.energy_fit.r2;
    rep.rate = -rep.energy_fit.slope;

    std::vector<double> fx, fy;
    rep.fisher_monotone = true;
    const DiagRecord* last = nullptr;
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {  // the final record carries no quotient pair
        const auto& r = recs[i];
        if (r.t < fisher_transient_fraction * tf) continue;
        if (last && r.fisher > last->fisher) {
            rep.fisher_monotone = false;
            rep.fisher_worst_rise = std::max(rep.fisher_worst_rise, (r.fisher - last->fisher) / last->fisher);
        }
        last = &r;
        if (r.fisher > 0.0) fx.push_back(r.t), fy.push_back(std::log(r.fisher));
    }
    rep.fisher_fit = fit_line(fx, fy);

    const Field& u = rep.run.state.u;
    const ProfileSampler zs(*z);
    rep.x0 = estimate_center(u, p, &zs);
    const Field ref = interpolate_to_field(*z, u.grid, rep.x0);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - ref[i]) * (u[i] - ref[i]);
    rep.final_l2 = std::sqrt(s * u.grid.cell_volume());
    rep.lambda_rel_gap = (recs.back().lambda - rep.Lambda) / rep.Lambda;
    rep.M_final = bubble_census(u, p, sc.eps).M;
    rep.center_shift = center_distance(recs.back().center, record_near(recs, 0.5 * tf).center, sc.n, sc.L);
    rep.center_stationary = rep.center_shift <= u.grid.h();
    return rep;
}

inline void write_outputs(const Scenario& sc, const RunResult& run, double psi_ref, double lambda_ref,
                          const std::string& report) {
    namespace fs = std::filesystem;
    fs::create_directories(sc.out_dir);
    write_diagnostics_csv((fs::path(sc.out_dir) / "diagnostics.csv").string(), run.records, sc.n);
    write_run_plots(sc.out_dir, run.records, psi_ref, lambda_ref);
    save_snapshot((fs::path(sc.out_dir) / "final.bin").string(), run.state.u, run.state.t, sc.eps);
    std::ofstream((fs::path(sc.out_dir) / "report.txt").string()) << report;
    std::ofstream((fs::path(sc.out_dir) / "scenario.ini").string()) << serialize(sc);
}

inline ConvergenceReport experiment_convergence(const Scenario& sc, bool write = true) {
    validate(sc);
    const PotentialSet p = sc.potentials();
    InitialData init = build_initial(sc.init, sc);
    if (!init.energy_hypothesis && !init.compact)
        throw DomainError("initial data satisfies neither AC(u0) < 2 Psi(eps,1/2) nor numerical compactness");
    FlowState s = flow_state_for(sc, init.u, p);
    RunResult r = run(std::move(s), sc.T, sc.dt, run_options_for(sc));
    auto rep = analyze_convergence(sc, std::move(init), std::move(r));
    if (write) write_outputs(sc, rep.run, rep.Psi, rep.Lambda, rep.text());
    return rep;
}

struct TwoBallReport {
    Scenario scenario;
    InitialData init;
    RunResult run;
    double Psi1 = 0.0, Psi_half = 0.0;
    double dwell = 0.0;  ///< time AC stays within 1% of 2 Psi(eps,1/2) from the start
    double merge_time = std::numeric_limits<double>::quiet_NaN();  ///< first record with M = 1
    int M_initial = 0, M_final = 0;
    double ac_final = 0.0, ac_rel_gap = 0.0, volume_final = 0.0;
    bool monotone = false;
    bool incomplete = false;

    std::string text() const {
        std::ostringstream os;
        char b[256];
        os << "two-ball experiment '" << scenario.name << "'" << (incomplete ? "  INCOMPLETE" : "") << "\n";
        std::snprintf(b, sizeof b, "  AC(u0) = %.12g  2 Psi(eps,1/2) = %.12g  Psi(eps,1) = %.12g  compact: %s\n", init.ac,
                      2.0 * Psi_half, Psi1, init.compact ? "yes" : "no");
        os << b;
        std::snprintf(b, sizeof b, "  steps %ld  t_final %.6g  wall %.1f s  stop: %s\n", run.stats.steps, run.state.t,
                      run.stats.wall_seconds, run.stats.stop_reason.empty() ? "end time" : run.stats.stop_reason.c_str());
        os << b;
        std::snprintf(b, sizeof b, "  M: %d -> %d  merge time %.6g  dwell near two-ball level %.6g\n", M_initial, M_final,
                      merge_time, dwell);
        os << b;
        std::snprintf(b, sizeof b, "  final AC %.12g  (AC - Psi)/Psi = %.3e  volume %.15g  AC monotone: %s (max rise %.3e)\n",
                      ac_final, ac_rel_gap, volume_final, monotone ? "yes" : "no", run.stats.max_ac_increase);
        os << b;
        return os.str();
    }
};

inline TwoBallReport experiment_two_ball(const Scenario& sc, bool write = true) {
    validate(sc);
    if (sc.init.kind != InitSpec::Kind::multi_ball) throw DomainError("two-ball experiment requires init.kind = multi_ball");
    const PotentialSet p = sc.potentials();
    TwoBallReport rep;
    rep.scenario = sc;
    rep.init = build_initial(sc.init, sc);
    if (!rep.init.compact) throw DomainError("two-ball initial data is not numerically compact (far field > 1e-14)");
    rep.Psi1 = psi(sc.eps, 1.0, sc.n, p);
    rep.Psi_half = psi(sc.eps, 0.5, sc.n, p);
    rep.M_initial = bubble_census(rep.init.u, p, sc.eps).M;
    FlowState s = flow_state_for(sc, rep.init.u, p);
    RunOptions o = run_options_for(sc);
    if (o.fisher_floor <= 0.0) o.fisher_floor = 1e-8;
    o.stop_when = [](const DiagRecord& r) { return r.M == 1; };
    rep.run = run(std::move(s), sc.T, sc.dt, o);
    const auto& recs = rep.run.records;
    const double level = 2.0 * rep.Psi_half;
    for (const auto& r : recs) {
        if (std::abs(r.ac - level) > 0.01 * level) break;
        rep.dwell = r.t;
    }
    for (const auto& r : recs)
        if (r.M == 1) {
            rep.merge_time = r.t;
            break;
        }
    rep.M_final = bubble_census(rep.run.state.u, p, sc.eps).M;
    rep.ac_final = rep.run.stats.ac_final;
    rep.ac_rel_gap = (rep.ac_final - rep.Psi1) / rep.Psi1;
    rep.volume_final = v_volume(rep.run.state.u, p);
    rep.monotone = rep.run.stats.max_ac_increase <= 1e-12 * rep.run.stats.ac0;
    rep.incomplete = rep.run.stats.incomplete;
    if (write) write_outputs(sc, rep.run, rep.Psi1, cached_profile(sc.eps, 1.0, sc.n, p)->Lambda, rep.text());
    return rep;
}

} // namespace acflow

#endif
