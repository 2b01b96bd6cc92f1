#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <acflow/check.hpp>
#include <acflow/experiments.hpp>
#include <acflow/radial.hpp>
#include <acflow/scenario.hpp>
#include <acflow/stability.hpp>

using namespace acflow;

namespace {

struct Overrides {
    std::string volume_fix;
    std::string backend;
    std::string out;
};

Scenario load_with_overrides(const std::string& path, const Overrides& ov) {
    Scenario s = load_scenario(path);
    if (!ov.volume_fix.empty()) s.volume_fix = detail::parse_onoff(ov.volume_fix);
    if (!ov.backend.empty()) s.backend = parse_backend(ov.backend);
    if (!ov.out.empty()) s.out_dir = ov.out;
    return s;
}

/// Runs fn over the configs with up to jobs worker threads; returns the number of failures.
template <class Fn>
int batch(const std::vector<std::string>& configs, int jobs, const Overrides& ov, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    std::mutex out;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < configs.size();) {
            try {
                Overrides o = ov;
                if (configs.size() > 1 && !o.out.empty())
                    o.out = (std::filesystem::path(o.out) / std::filesystem::path(configs[i]).stem()).string();
                const Scenario s = load_with_overrides(configs[i], o);
                const std::string text = fn(s);
                std::lock_guard lock(out);
                std::cout << text << std::flush;
            } catch (const std::exception& e) {
                ++failures;
                std::lock_guard lock(out);
                std::cerr << configs[i] << ": " << e.what() << "\n";
            }
        }
    };
    std::vector<std::thread> pool;
    const int k = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
    for (int j = 1; j < k; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return failures;
}

void write_profile_csv(const std::string& path, const RadialProfile& z) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "r,zeta,dzeta\n";
    char b[96];
    for (double r : z.nodes()) {
        const auto v = z.eval(r);
        std::snprintf(b, sizeof b, "%.17g,%.17g,%.17g\n", r, v[0], v[1]);
        os << b;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volume-preserving Allen-Cahn flow toolkit"};
    app.require_subcommand(1);
    Overrides ov;
    int jobs = 1;
    std::vector<std::string> configs;

    double eps = 0.08, m = 1.0;
    int n = 2, imax = 8;
    std::string out_dir;

    auto* prof = app.add_subcommand("profile", "solve the diffused ball profile");
    prof->add_option("--eps", eps, "interface width")->check(CLI::PositiveNumber);
    prof->add_option("--m", m, "volume")->check(CLI::PositiveNumber);
    prof->add_option("--n", n, "dimension");
    prof->add_option("--out", out_dir, "write profile.csv here");

    auto* ps = app.add_subcommand("psi", "diffused isoperimetric function Psi(eps, m)");
    ps->add_option("--eps", eps, "interface width")->check(CLI::PositiveNumber);
    ps->add_option("--m", m, "volume")->check(CLI::PositiveNumber);
    ps->add_option("--n", n, "dimension");

    auto* stab = app.add_subcommand("stability", "second variation spectrum at the diffused ball");
    stab->add_option("--eps", eps, "interface width")->check(CLI::PositiveNumber);
    stab->add_option("--m", m, "volume")->check(CLI::PositiveNumber);
    stab->add_option("--n", n, "dimension");
    stab->add_option("--imax", imax, "highest sphere mode index");

    auto add_run_flags = [&](CLI::App* c) {
        c->add_option("--config", configs, "scenario file(s)")->required()->check(CLI::ExistingFile);
        c->add_option("--volume-fix", ov.volume_fix, "on|off")->check(CLI::IsMember({"on", "off"}));
        c->add_option("--backend", ov.backend, "spectral|fd")->check(CLI::IsMember({"spectral", "fd"}));
        c->add_option("--jobs", jobs, "scenarios run in parallel")->check(CLI::PositiveNumber);
        c->add_option("--out", ov.out, "output directory");
    };
    auto* flow = app.add_subcommand("flow", "convergence experiment from a scenario");
    add_run_flags(flow);
    auto* two = app.add_subcommand("two-ball", "two-ball merge experiment from a scenario");
    add_run_flags(two);

    bool corrupt = false;
    auto* chk = app.add_subcommand("check", "run the invariant suites");
    chk->add_flag("--inject-normalization-fault", corrupt, "test hook: corrupt the potential normalization");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*prof) {
            const auto p = make_default_potentials(n);
            const auto z = cached_profile(eps, m, n, p);
            std::printf("eps %.6g m %.6g n %d\nLambda %.15g\nPsi %.15g\nvolume residual %.3e\nODE residual %.3e\n"
                        "Pohozaev residual %.3e\nnodes %zu\n",
                        eps, m, n, z->Lambda, z->Psi, z->volume_residual, z->strong_residual, z->pohozaev_residual,
                        z->nodes().size());
            for (const auto& b : validate(*z)) std::printf("invariant violated: %s\n", b.c_str());
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                write_profile_csv((std::filesystem::path(out_dir) / "profile.csv").string(), *z);
            }
            return validate(*z).empty() ? 0 : 1;
        }
        if (*ps) {
            std::printf("%.15g\n", psi(eps, m, n, make_default_potentials(n)));
            return 0;
        }
        if (*stab) {
            const auto p = make_default_potentials(n);
            const auto q = assemble(cached_profile(eps, m, n, p), imax);
            for (Sector s : {Sector::radial, Sector::translation, Sector::higher, Sector::all_constrained})
                std::printf("%-16s %.12g\n", to_string(s).c_str(), constrained_min_eig(q, s));
            std::printf("%-16s %.3e\n", "translation RQ", translation_rayleigh(q));
            std::printf("%-16s %d\n", "radial negatives", count_below(q.radial(), 0.0));
            return 0;
        }
        if (*flow)
            return batch(configs, jobs, ov, [](const Scenario& s) { return experiment_convergence(s).text(); }) ? 1 : 0;
        if (*two)
            return batch(configs, jobs, ov, [](const Scenario& s) {
                       const auto r = experiment_two_ball(s);
                       return r.text();
                   }) ? 1 : 0;
        if (*chk) {
            CheckOptions o;
            o.corrupt_potential_normalization = corrupt;
            return check_suite(std::cout, o);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
