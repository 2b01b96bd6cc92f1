#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include <acflow/check.hpp>
#include <acflow/experiments.hpp>
#include <acflow/stability.hpp>

using namespace acflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string f(const char* fmt, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, a, b, c, d, e);
    return buf;
}

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = seconds_since(t0);
    const bool in_time = limit_s <= 0.0 || s < limit_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s  %2d  %-30s %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), s,
                in_time ? "" : ", over time limit");
    std::fflush(stdout);
}

const PotentialSet& P2() {
    static const PotentialSet p = make_default_potentials(2);
    return p;
}

Scenario main_run_scenario(const std::string& out) {
    Scenario s;
    s.name = "perturbed_ball";
    s.eps = 0.08;
    s.N = 128;
    s.L = 2.0;
    s.dt = 0.1 * s.eps * s.eps;
    s.T = 10000 * s.dt;
    s.record_every = 100;
    s.init.amplitude = 0.1 * s.eps;
    s.init.wavenumber = 3;
    s.out_dir = out;
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

} // namespace

int main() {
    const fs::path out = fs::current_path() / "acceptance_out";
    fs::create_directories(out);
    std::printf("acceptance suite (output in %s)\n", out.string().c_str());

    report(1, "normalization", 1.0, [] {
        const double r = std::abs(P2().normalization_residual());
        return Outcome{r <= 1e-10, f("|int sqrt(W) - 1| = %.2e", r)};
    });

    report(2, "Modica-Mortola", 10.0, [] {
        const Grid g(2, 128, 2.0);
        std::mt19937_64 rng(2024);
        double worst = 1e300;
        for (int k = 0; k < 50; ++k) {
            const Field u = random_smooth_field(g, rng);
            worst = std::min(worst, ac_energy(u, 0.08, P2()).isoperimetric_slack);
        }
        return Outcome{worst >= -1e-8, f("min AC - 2 n omega^{1/n} V^{(n-1)/n} over 50 fields = %.4g", worst)};
    });

    std::vector<std::shared_ptr<const RadialProfile>> prof;
    report(3, "multiplier limit", 60.0, [&] {
        const double target = 2.0 * std::sqrt(M_PI);
        std::vector<double> err;
        for (double eps : {0.12, 0.06, 0.03}) {
            prof.push_back(cached_profile(eps, 1.0, 2, P2()));
            err.push_back(std::abs(prof.back()->Lambda - target));
        }
        const bool ok = err[0] > err[1] && err[1] > err[2] && err[2] / target <= 0.1;
        return Outcome{ok, f("|Lambda - 2 sqrt(pi)| = %.4g, %.4g, %.4g; rel at 0.03 = %.3g", err[0], err[1], err[2],
                             err[2] / target)};
    });

    report(4, "isoperimetric limit", 60.0, [&] {
        const double target = 4.0 * std::sqrt(M_PI);
        if (prof.size() != 3) return Outcome{false, "profiles unavailable"};
        const double a = prof[0]->Psi, b = prof[1]->Psi, c = prof[2]->Psi;
        const bool ok = a > b && b > c && c > target;
        return Outcome{ok, f("Psi = %.8f, %.8f, %.8f > 4 sqrt(pi) = %.6f", a, b, c, target)};
    });

    report(5, "scaling law", 30.0, [] {
        const double a = psi(0.05, 0.5, 2, P2());
        const double b = std::sqrt(0.5) * psi(0.05 / std::sqrt(0.5), 1.0, 2, P2());
        const double r = std::abs(a - b) / a;
        return Outcome{r <= 1e-6, f("relative defect %.3e", r)};
    });

    // run shared by criteria 6, 7, 9 and 10
    const Scenario main_sc = main_run_scenario((out / "perturbed_ball").string());
    std::unique_ptr<ConvergenceReport> conv;
    report(6, "conservation/monotonicity", 300.0, [&] {
        conv = std::make_unique<ConvergenceReport>(experiment_convergence(main_sc));
        const auto& S = conv->run.stats;
        const bool drift = S.max_total_drift <= 1e-6;
        const bool mono = S.max_ac_increase <= 1e-12 * S.ac0;
        const bool range = S.min_u >= -1e-9 && S.max_u <= 1.0 + 1e-9;
        return Outcome{drift && mono && range && S.steps == 10000,
                       f("volume drift %.2e, max AC rise %.2e AC0, range [%.3e, 1%+.3e]", S.max_total_drift,
                         S.max_ac_increase / S.ac0, S.min_u, S.max_u - 1.0) +
                           (range ? "" : " (range outside [-1e-9, 1+1e-9])")};
    });

    report(7, "energy identity", 0.0, [&] {
        if (!conv) return Outcome{false, "run 6 unavailable"};
        const auto& S = conv->run.stats;
        const double e = S.energy_identity_error();
        return Outcome{e <= 0.01, f("|dAC - eps int q^2| / |dAC| = %.3e (dAC = %.6e)", e, S.ac0 - S.ac_final)};
    });

    report(8, "stationarity", 120.0, [] {
        const double eps = 0.15, dt = 0.1 * eps * eps;
        const Grid g(2, 128, 2.7);
        const auto z = cached_profile(eps, 1.0, 2, P2());
        const Field u0 = interpolate_to_field(*z, g, {1.35, 1.35, 0.0});
        FlowConfig c;
        c.eps = eps;
        FlowState s = make_flow_state(u0, c, P2());
        Stepper st(g, eps, dt, Backend::spectral, P2(), c.reaction_cfl);
        const long steps = std::lround(10.0 / dt);
        double worst = 0.0;
        for (long k = 0; k < steps; ++k) {
            st.advance(s);
            for (std::size_t i = 0; i < u0.size(); ++i) worst = std::max(worst, std::abs(s.u[i] - u0[i]));
        }
        return Outcome{worst <= 1e-3, f("max_t |u(t) - u0|_inf = %.3e over t in [0, %.2f]", worst, s.t)};
    });

    report(9, "exponential convergence", 0.0, [&] {
        if (!conv) return Outcome{false, "run 6 unavailable"};
        const auto& r = *conv;
        const bool fit = r.energy_fit.r2 >= 0.98 && r.rate > 0.0 && !r.fit_degenerate;
        const bool lam = std::abs(r.lambda_rel_gap) <= 0.01;
        const bool m = r.M_final == 1;
        return Outcome{fit && lam && m,
                       f("log-gap fit R^2 %.4f rate %.4g; final gap %.3e; lambda rel %.2e; M = ", r.energy_fit.r2,
                         r.rate, r.run.records.back().ac - r.Psi, r.lambda_rel_gap) +
                           std::to_string(r.M_final)};
    });

    report(10, "Fisher decay", 0.0, [&] {
        if (!conv) return Outcome{false, "run 6 unavailable"};
        const auto& r = *conv;
        const bool ok = r.fisher_monotone && r.fisher_fit.r2 >= 0.95 && r.fisher_fit.slope < 0.0;
        return Outcome{ok, f("monotone after t = %.3g: ", fisher_transient_fraction * r.run.state.t) +
                               (r.fisher_monotone ? "yes" : "no") +
                               f(" (worst rise %.2e); fit rate %.4g R^2 %.4f", r.fisher_worst_rise,
                                 -r.fisher_fit.slope, r.fisher_fit.r2)};
    });

    report(11, "two-ball merge", 1800.0, [&] {
        Scenario s;
        s.name = "two_ball";
        s.eps = 0.12;
        s.N = 128;
        s.L = 3.6;
        s.dt = 0.1 * s.eps * s.eps;
        s.T = 2000.0;
        s.record_every = 200;
        s.fisher_floor = 1e-8;
        s.wall_budget = 1700.0;
        const double r = std::sqrt(0.5 / M_PI);
        s.init.kind = InitSpec::Kind::multi_ball;
        const double h = s.L / s.N, cx = 1.8 + 0.3 * h, cy = 1.8 + 0.17 * h;
        s.init.balls = {{0.5, {cx - 1.5 * r, cy}}, {0.5, {cx + 1.5 * r, cy}}};
        s.out_dir = (out / "two_ball").string();
        const auto rep = experiment_two_ball(s);
        const bool ok = !rep.incomplete && rep.M_final == 1 && std::abs(rep.ac_rel_gap) <= 0.02 &&
                        std::abs(rep.volume_final - 1.0) <= 1e-4;
        return Outcome{ok, std::string(rep.incomplete ? "INCOMPLETE; " : "") +
                               f("M %.0f -> %.0f, merge t %.4g, (AC - Psi)/Psi = %.2e, volume - 1 = %.2e", rep.M_initial,
                                 rep.M_final, rep.merge_time, rep.ac_rel_gap, rep.volume_final - 1.0)};
    });

    report(12, "stability spectrum", 120.0, [] {
        const auto qa = assemble(cached_profile(0.05, 1.0, 2, P2()), 8);
        const auto qb = assemble(cached_profile(0.025, 1.0, 2, P2()), 8);
        const double alla = constrained_min_eig(qa, Sector::all_constrained);
        const double rada = constrained_min_eig(qa, Sector::radial);
        const double tq = translation_rayleigh(qa);
        const double allb = constrained_min_eig(qb, Sector::all_constrained);
        const double radb = constrained_min_eig(qb, Sector::radial);
        const double ra = rada / alla, rb = radb / allb;
        const bool ok = alla > 0.0 && std::abs(tq) <= 1e-5 * rada && ra >= 10.0 && rb > ra;
        return Outcome{ok, f("all-constrained min %.5g; translation RQ / radial %.2e; radial/all %.1f -> %.1f at eps=0.025",
                             alla, std::abs(tq) / rada, ra, rb)};
    });

    report(13, "gradient check", 30.0, [] {
        const Grid g(2, 128, 2.0);
        std::mt19937_64 rng(99);
        const Field u = random_smooth_field(g, rng);
        const auto r = gradient_check(u, 0.08, P2(), Backend::spectral, 10, rng);
        return Outcome{r.worst <= 1e-6, f("worst relative error over 10 directions %.3e", r.worst)};
    });

    report(14, "lambda regularization", 30.0, [] {
        const double eps = 0.08;
        const auto z = cached_profile(eps, 1.0, 2, P2());
        const Field u = interpolate_to_field(*z, Grid(2, 128, 2.0), {1.0, 1.0, 0.0}, {0.1 * eps, 3});
        const double exact = lambda(u, eps, MultiplierMode::exact(), P2());
        std::vector<double> d;
        for (double delta : {0.1, 0.05, 0.025})
            d.push_back(std::abs(lambda(u, eps, MultiplierMode::regularized(build_regularized_volume(P2(), delta)), P2()) -
                                 exact));
        return Outcome{d[0] > d[1] && d[1] > d[2], f("|lambda_delta - lambda| = %.3e, %.3e, %.3e", d[0], d[1], d[2])};
    });

    report(15, "determinism", 0.0, [&] {
        if (!conv) return Outcome{false, "run 6 unavailable"};
        Scenario again = main_sc;
        again.out_dir = (out / "perturbed_ball_rerun").string();
        experiment_convergence(again);
        const std::string a = slurp((fs::path(main_sc.out_dir) / "diagnostics.csv").string());
        const std::string b = slurp((fs::path(again.out_dir) / "diagnostics.csv").string());
        return Outcome{!a.empty() && a == b, std::string("diagnostics CSV ") + (a == b ? "bit-identical" : "differs") +
                                                 " across reruns (" + std::to_string(a.size()) + " bytes)"};
    });

    std::printf("%d criteria failed\n", failures);
    return failures ? 1 : 0;
}
