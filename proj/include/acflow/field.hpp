#ifndef ACFLOW_FIELD_HPP
#define ACFLOW_FIELD_HPP

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "errors.hpp"
#include "potentials.hpp"

namespace acflow {

enum class Backend { spectral, fd };

inline std::string to_string(Backend b) { return b == Backend::spectral ? "spectral" : "fd"; }
inline Backend parse_backend(const std::string& s) {
    if (s == "spectral") return Backend::spectral;
    if (s == "fd") return Backend::fd;
    throw DomainError("backend must be 'spectral' or 'fd' (got '" + s + "')");
}

/// Volume of the unit ball in R^n.
inline double omega(int n) {
    return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
}

/// Periodic box [0,L)^n with N points per side.
struct Grid {
    int dim = 2;
    int N = 128;
    double L = 1.0;

    Grid() = default;
    Grid(int dim_, int N_, double L_) : dim(dim_), N(N_), L(L_) {
        if (dim < 1 || dim > 3) throw DomainError("grid dimension must be 1, 2 or 3 (got " + std::to_string(dim) + ")");
        if (N < 16) throw DomainError("grid requires N >= 16 (got " + std::to_string(N) + ")");
        if (!std::has_single_bit(static_cast<unsigned>(N)))
            throw DomainError("grid requires N to be a power of two (got " + std::to_string(N) + ")");
        if (!(L > 0.0)) throw DomainError("grid requires L > 0");
    }
    double h() const { return L / N; }
    std::size_t size() const {
        std::size_t s = 1;
        for (int d = 0; d < dim; ++d) s *= static_cast<std::size_t>(N);
        return s;
    }
    double cell_volume() const { return std::pow(h(), dim); }
    double box_volume() const { return std::pow(L, dim); }
    std::size_t stride(int d) const {
        std::size_t s = 1;
        for (int e = d + 1; e < dim; ++e) s *= static_cast<std::size_t>(N);
        return s;
    }
    /// multi-index of flat index (row-major, last axis fastest)
    std::array<int, 3> coords(std::size_t i) const {
        std::array<int, 3> c{0, 0, 0};
        for (int d = dim - 1; d >= 0; --d) {
            c[d] = static_cast<int>(i % N);
            i /= N;
        }
        return c;
    }
    std::size_t index(const std::array<int, 3>& c) const {
        std::size_t i = 0;
        for (int d = 0; d < dim; ++d) i = i * N + static_cast<std::size_t>(((c[d] % N) + N) % N);
        return i;
    }
    /// resolution guard h < eps/2
    void require_resolution(double eps) const {
        if (!(h() < eps / 2.0))
            throw DomainError("resolution guard violated: h = L/N = " + std::to_string(h()) + " must be < eps/2 = " +
                              std::to_string(eps / 2.0));
    }
    bool operator==(const Grid& o) const { return dim == o.dim && N == o.N && L == o.L; }
};

/// Scalar field on a periodic grid.
struct Field {
    Grid grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
    Field(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != g.size()) throw DomainError("field size does not match grid");
    }
    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    double max() const { return *std::max_element(values.begin(), values.end()); }
    double min() const { return *std::min_element(values.begin(), values.end()); }
    /// grid quadrature of the values
    double integral() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * grid.cell_volume();
    }
    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
    /// physical coordinate of point i along axis d
    double x(std::size_t i, int d) const { return grid.coords(i)[d] * grid.h(); }
};

/// Circular shift by integer offsets per axis.
inline Field shift(const Field& u, const std::array<int, 3>& off) {
    Field out(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) {
        auto c = u.grid.coords(i);
        for (int d = 0; d < u.grid.dim; ++d) c[d] += off[d];
        out[u.grid.index(c)] = u[i];
    }
    return out;
}

/// Swap two axes (a hyperoctahedral symmetry of the grid).
inline Field transpose(const Field& u, int a, int b) {
    Field out(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) {
        auto c = u.grid.coords(i);
        std::swap(c[a], c[b]);
        out[u.grid.index(c)] = u[i];
    }
    return out;
}

/// Reflect one axis: x_d -> -x_d (mod N).
inline Field reflect(const Field& u, int a) {
    Field out(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) {
        auto c = u.grid.coords(i);
        c[a] = -c[a];
        out[u.grid.index(c)] = u[i];
    }
    return out;
}

namespace detail {
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

/// Real-to-complex FFT plans and Fourier symbols for one grid. Not shared across threads.
class SpectralOps {
public:
    using cplx = std::complex<double>;

    explicit SpectralOps(const Grid& g) : grid_(g) {
        const int n = g.dim, N = g.N;
        real_size_ = g.size();
        complex_size_ = real_size_ / N * (N / 2 + 1);
        rbuf_ = fftw_alloc_real(real_size_);
        cbuf_ = fftw_alloc_complex(complex_size_);
        std::array<int, 3> dims{N, N, N};
        {
            std::lock_guard lock(detail::fftw_planner_mutex());
            fwd_ = fftw_plan_dft_r2c(n, dims.data(), rbuf_, cbuf_, FFTW_ESTIMATE);
            bwd_ = fftw_plan_dft_c2r(n, dims.data(), cbuf_, rbuf_, FFTW_ESTIMATE);
        }
        // Fourier symbols
        k2_.resize(complex_size_);
        k2fd_.resize(complex_size_);
        weight_.resize(complex_size_);
        for (int d = 0; d < 3; ++d) kd_[d].assign(complex_size_, 0.0);
        const double h = g.h();
        const int nh = N / 2 + 1;
        for (std::size_t j = 0; j < complex_size_; ++j) {
            std::array<int, 3> c{0, 0, 0};
            std::size_t r = j;
            c[n - 1] = static_cast<int>(r % nh);
            r /= nh;
            for (int d = n - 2; d >= 0; --d) {
                c[d] = static_cast<int>(r % N);
                r /= N;
            }
            double s = 0.0, sfd = 0.0;
            for (int d = 0; d < n; ++d) {
                const int m = c[d] <= N / 2 ? c[d] : c[d] - N;
                const double k = 2.0 * std::numbers::pi * m / g.L;
                s += k * k;
                const double sn = std::sin(k * h / 2.0);
                sfd += 4.0 * sn * sn / (h * h);
                kd_[d][j] = (std::abs(m) == N / 2) ? 0.0 : k;
            }
            k2_[j] = s;
            k2fd_[j] = sfd;
            const int last = c[n - 1];
            weight_[j] = (last == 0 || last == N / 2) ? 1.0 : 2.0;
        }
    }
    SpectralOps(const SpectralOps&) = delete;
    SpectralOps& operator=(const SpectralOps&) = delete;
    ~SpectralOps() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(rbuf_);
        fftw_free(cbuf_);
    }

    const Grid& grid() const { return grid_; }
    std::size_t complex_size() const { return complex_size_; }
    /// |k|^2 for spectral, discrete 5-point symbol for fd
    const std::vector<double>& k2(Backend b) const { return b == Backend::spectral ? k2_ : k2fd_; }
    /// Hermitian multiplicity of each half-spectrum coefficient
    const std::vector<double>& weight() const { return weight_; }
    const std::vector<double>& kd(int d) const { return kd_[d]; }

    void forward(const double* in, cplx* out) {
        std::copy(in, in + real_size_, rbuf_);
        fftw_execute(fwd_);
        auto* c = reinterpret_cast<cplx*>(cbuf_);
        std::copy(c, c + complex_size_, out);
    }
    /// unnormalized inverse; caller divides by N^n
    void backward(const cplx* in, double* out) {
        auto* c = reinterpret_cast<cplx*>(cbuf_);
        std::copy(in, in + complex_size_, c);
        fftw_execute(bwd_);
        std::copy(rbuf_, rbuf_ + real_size_, out);
    }
    double norm() const { return 1.0 / static_cast<double>(real_size_); }

    /// -int u Lap u via Parseval with the backend symbol
    double dirichlet_from_hat(const cplx* uh, Backend b) const {
        const auto& s = k2(b);
        double acc = 0.0;
        for (std::size_t j = 0; j < complex_size_; ++j) acc += weight_[j] * s[j] * std::norm(uh[j]);
        return acc * grid_.cell_volume() * norm();
    }

private:
    Grid grid_;
    std::size_t real_size_ = 0, complex_size_ = 0;
    double* rbuf_ = nullptr;
    fftw_complex* cbuf_ = nullptr;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
    std::vector<double> k2_, k2fd_, weight_;
    std::array<std::vector<double>, 3> kd_;
};

/// Per-thread cache of SpectralOps keyed by grid.
inline SpectralOps& spectral_ops(const Grid& g) {
    thread_local std::map<std::tuple<int, int, double>, std::unique_ptr<SpectralOps>> cache;
    auto key = std::make_tuple(g.dim, g.N, g.L);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, std::make_unique<SpectralOps>(g)).first;
    return *it->second;
}

namespace detail {
inline std::size_t neighbor(const Grid& g, std::size_t i, int d, int step) {
    const std::size_t s = g.stride(d);
    const int c = static_cast<int>((i / s) % g.N);
    const int cn = ((c + step) % g.N + g.N) % g.N;
    return i + (static_cast<std::ptrdiff_t>(cn) - c) * static_cast<std::ptrdiff_t>(s);
}
} // namespace detail

/// Laplacian: spectral symbol -|k|^2 or second-order central differences.
inline Field laplacian(const Field& u, Backend b = Backend::spectral) {
    const Grid& g = u.grid;
    Field out(g);
    if (b == Backend::fd) {
        const double ih2 = 1.0 / (g.h() * g.h());
        for (std::size_t i = 0; i < u.size(); ++i) {
            double s = 0.0;
            for (int d = 0; d < g.dim; ++d)
                s += u[detail::neighbor(g, i, d, 1)] + u[detail::neighbor(g, i, d, -1)] - 2.0 * u[i];
            out[i] = s * ih2;
        }
        return out;
    }
    auto& ops = spectral_ops(g);
    std::vector<SpectralOps::cplx> uh(ops.complex_size());
    ops.forward(u.values.data(), uh.data());
    const auto& k2 = ops.k2(b);
    for (std::size_t j = 0; j < uh.size(); ++j) uh[j] *= -k2[j] * ops.norm();
    ops.backward(uh.data(), out.values.data());
    return out;
}

/// Pointwise |grad u|^2.
inline Field gradient_sq(const Field& u, Backend b = Backend::spectral) {
    const Grid& g = u.grid;
    Field out(g);
    if (b == Backend::fd) {
        const double ih2 = 1.0 / (g.h() * g.h());
        for (std::size_t i = 0; i < u.size(); ++i) {
            double s = 0.0;
            for (int d = 0; d < g.dim; ++d) {
                const double fp = u[detail::neighbor(g, i, d, 1)] - u[i];
                const double fm = u[i] - u[detail::neighbor(g, i, d, -1)];
                s += 0.5 * (fp * fp + fm * fm);
            }
            out[i] = s * ih2;
        }
        return out;
    }
    auto& ops = spectral_ops(g);
    std::vector<SpectralOps::cplx> uh(ops.complex_size()), dh(ops.complex_size());
    std::vector<double> du(u.size());
    ops.forward(u.values.data(), uh.data());
    for (int d = 0; d < g.dim; ++d) {
        const auto& k = ops.kd(d);
        for (std::size_t j = 0; j < uh.size(); ++j) dh[j] = SpectralOps::cplx(0.0, k[j] * ops.norm()) * uh[j];
        ops.backward(dh.data(), du.data());
        for (std::size_t i = 0; i < u.size(); ++i) out[i] += du[i] * du[i];
    }
    return out;
}

/// int |grad u|^2 = -int u Lap u with the backend's Laplacian.
inline double dirichlet_energy(const Field& u, Backend b = Backend::spectral) {
    const Grid& g = u.grid;
    if (b == Backend::fd) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            for (int d = 0; d < g.dim; ++d) {
                const double f = u[detail::neighbor(g, i, d, 1)] - u[i];
                s += f * f;
            }
        return s * g.cell_volume() / (g.h() * g.h());
    }
    auto& ops = spectral_ops(g);
    std::vector<SpectralOps::cplx> uh(ops.complex_size());
    ops.forward(u.values.data(), uh.data());
    return ops.dirichlet_from_hat(uh.data(), b);
}

struct EnergyReport {
    double ac = 0.0;
    double dirichlet = 0.0;
    double wellsum = 0.0;
    double volume = 0.0;
    double isoperimetric_slack = 0.0;
};

inline void require_potential_range(const Field& u) {
    for (double v : u.values)
        if (!(v >= -0.01 && v <= 1.01))
            throw RangeError("field value " + std::to_string(v) + " outside [-0.01, 1.01]; potentials undefined");
}

/// Isoperimetric constant 2 n omega_n^{1/n}.
inline double isoperimetric_constant(int n) { return 2.0 * n * std::pow(omega(n), 1.0 / n); }

/// V-volume int V(u).
inline double v_volume(const Field& u, const PotentialSet& p) {
    require_potential_range(u);
    double s = 0.0;
    for (double v : u.values) s += p.V(v);
    return s * u.grid.cell_volume();
}

/// AC_eps(u) = eps int |grad u|^2 + int W(u)/eps.
inline EnergyReport ac_energy(const Field& u, double eps, const PotentialSet& p, Backend b = Backend::spectral) {
    if (!(eps > 0.0)) throw DomainError("ac_energy requires eps > 0");
    require_potential_range(u);
    EnergyReport r;
    r.dirichlet = dirichlet_energy(u, b);
    double w = 0.0, v = 0.0;
    for (double x : u.values) {
        w += p.W(x);
        v += p.V(x);
    }
    const double dv = u.grid.cell_volume();
    r.wellsum = w * dv / eps;
    r.volume = v * dv;
    r.ac = eps * r.dirichlet + r.wellsum;
    const int n = u.grid.dim;
    r.isoperimetric_slack = r.ac - isoperimetric_constant(n) * std::pow(std::max(0.0, r.volume), (n - 1.0) / n);
    return r;
}

/// L2 gradient of AC on the grid: -2 eps Lap u + W'(u)/eps.
inline Field ac_gradient(const Field& u, double eps, const PotentialSet& p, Backend b = Backend::spectral) {
    const Field lap = laplacian(u, b);
    Field g(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = -2.0 * eps * lap[i] + p.dW(u[i]) / eps;
    return g;
}

/// Snapshot header stored beside the raw values.
struct SnapshotHeader {
    int n = 2;
    int N = 128;
    double L = 1.0;
    double t = 0.0;
    double eps = 0.0;
};

inline void save_snapshot(const std::string& path, const Field& u, double t, double eps) {
    static_assert(std::endian::native == std::endian::little, "snapshot writer assumes a little-endian host");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write snapshot " + path);
    os.write(reinterpret_cast<const char*>(u.values.data()), static_cast<std::streamsize>(u.size() * sizeof(double)));
    nlohmann::json j{{"n", u.grid.dim}, {"N", u.grid.N}, {"L", u.grid.L}, {"t", t}, {"eps", eps}};
    std::ofstream hs(path + ".hdr");
    hs << j.dump() << '\n';
}

inline SnapshotHeader read_snapshot_header(const std::string& path) {
    std::ifstream hs(path + ".hdr");
    if (!hs) throw Error("missing snapshot header " + path + ".hdr");
    nlohmann::json j;
    hs >> j;
    SnapshotHeader h;
    h.n = j.at("n").get<int>();
    h.N = j.at("N").get<int>();
    h.L = j.at("L").get<double>();
    h.t = j.at("t").get<double>();
    h.eps = j.at("eps").get<double>();
    return h;
}

inline Field load_snapshot(const std::string& path, SnapshotHeader* header = nullptr) {
    const auto h = read_snapshot_header(path);
    Grid g(h.n, h.N, h.L);
    Field u(g);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read snapshot " + path);
    is.read(reinterpret_cast<char*>(u.values.data()), static_cast<std::streamsize>(u.size() * sizeof(double)));
    if (is.gcount() != static_cast<std::streamsize>(u.size() * sizeof(double)))
        throw Error("snapshot " + path + " is truncated");
    if (header) *header = h;
    return u;
}

/// Shell averages of u around a center, written as CSV (r, mean_u, count).
inline void export_radial_average(const std::string& path, const Field& u, const std::array<double, 3>& center,
                                  int bins) {
    const Grid& g = u.grid;
    const double rmax = g.L / 2.0;
    std::vector<double> sum(bins, 0.0);
    std::vector<long> cnt(bins, 0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto c = g.coords(i);
        double r2 = 0.0;
        for (int d = 0; d < g.dim; ++d) {
            double dx = c[d] * g.h() - center[d];
            dx -= g.L * std::round(dx / g.L);
            r2 += dx * dx;
        }
        const int b = static_cast<int>(std::sqrt(r2) / rmax * bins);
        if (b < bins) sum[b] += u[i], ++cnt[b];
    }
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os.precision(17);
    os << "r,mean_u,count\n";
    for (int b = 0; b < bins; ++b)
        if (cnt[b]) os << (b + 0.5) * rmax / bins << ',' << sum[b] / cnt[b] << ',' << cnt[b] << '\n';
}

} // namespace acflow

#endif
