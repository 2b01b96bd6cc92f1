#ifndef ACFLOW_LINALG_HPP
#define ACFLOW_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace acflow {

/// Legendre P_k(x) and P_k'(x) by the three-term recurrence.
inline std::pair<double, double> legendre(int k, double x) {
    if (k == 0) return {1.0, 0.0};
    double p0 = 1.0, p1 = x;
    for (int j = 2; j <= k; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    const double dp = (std::abs(x) == 1.0) ? 0.5 * k * (k + 1.0) * std::pow(x, k + 1)
                                           : k * (x * p1 - p0) / (x * x - 1.0);
    return {p1, dp};
}

struct Quadrature {
    std::vector<double> x, w;
};

/// q-point Gauss-Legendre rule on [-1,1].
inline Quadrature gauss_legendre(int q) {
    Quadrature r;
    r.x.resize(q);
    r.w.resize(q);
    for (int i = 0; i < q; ++i) {
        double x = -std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre(q, x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const auto [p, dp] = legendre(q, x);
        r.x[i] = x;
        r.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

/// Gauss-Lobatto-Legendre nodes of degree p (p+1 points) on [-1,1].
inline std::vector<double> gll_nodes(int p) {
    std::vector<double> x(p + 1);
    x[0] = -1.0;
    x[p] = 1.0;
    for (int i = 1; i < p; ++i) {
        // roots of P_p', Newton on P_p' with derivative from the Legendre ODE
        double t = -std::cos(std::numbers::pi * i / p);
        for (int it = 0; it < 100; ++it) {
            const auto [P, dP] = legendre(p, t);
            const double d2P = (2.0 * t * dP - p * (p + 1.0) * P) / (1.0 - t * t);
            const double dt = dP / d2P;
            t -= dt;
            if (std::abs(dt) < 1e-16) break;
        }
        x[i] = t;
    }
    return x;
}

/// Lagrange basis on given nodes: values and first/second derivatives at x.
struct LagrangeBasis {
    std::vector<double> nodes, bary;

    explicit LagrangeBasis(std::vector<double> xs) : nodes(std::move(xs)) {
        if (nodes.size() > 64) throw DomainError("Lagrange basis supports at most 64 nodes");
        const std::size_t n = nodes.size();
        bary.assign(n, 1.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
                if (k != j) bary[j] /= (nodes[j] - nodes[k]);
    }
    std::size_t size() const { return nodes.size(); }

    /// l_j(x), l_j'(x), l_j''(x) by direct product formulas (any pointer may be null).
    void eval(double x, double* v, double* d1, double* d2) const {
        const std::size_t n = nodes.size();
        if (v) {
            // prefix/suffix products of (x - x_k), exact at the nodes
            double pre[64], suf[65];
            pre[0] = 1.0;
            for (std::size_t k = 1; k < n; ++k) pre[k] = pre[k - 1] * (x - nodes[k - 1]);
            suf[n] = 1.0;
            for (std::size_t k = n; k-- > 0;) suf[k] = suf[k + 1] * (x - nodes[k]);
            for (std::size_t j = 0; j < n; ++j) v[j] = bary[j] * pre[j] * suf[j + 1];
        }
        if (!d1 && !d2) return;
        double f[64];
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t m = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (k != j) f[m++] = x - nodes[k];
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t a = 0; a < m; ++a) {
                double pa = 1.0;
                for (std::size_t c = 0; c < m; ++c)
                    if (c != a) pa *= f[c];
                s1 += pa;
                if (d2)
                    for (std::size_t b = 0; b < m; ++b) {
                        if (b == a) continue;
                        double pab = 1.0;
                        for (std::size_t c = 0; c < m; ++c)
                            if (c != a && c != b) pab *= f[c];
                        s2 += pab;
                    }
            }
            if (d1) d1[j] = bary[j] * s1;
            if (d2) d2[j] = bary[j] * s2;
        }
    }
};

/// Banded matrix with LU factorization (optional partial pivoting).
class BandMatrix {
public:
    BandMatrix() = default;
    BandMatrix(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku), w_(2 * kl + ku + 1), a_(std::size_t(n) * w_, 0.0) {}

    int rows() const { return n_; }
    int lower() const { return kl_; }
    int upper() const { return ku_; }
    bool in_band(int i, int j) const { return j - i >= -kl_ && j - i <= ku_; }
    double& at(int i, int j) { return a_[std::size_t(i) * w_ + (j - i + kl_)]; }
    double at(int i, int j) const { return a_[std::size_t(i) * w_ + (j - i + kl_)]; }
    double get(int i, int j) const { return in_band(i, j) ? at(i, j) : 0.0; }
    void add(int i, int j, double v) { at(i, j) += v; }
    void set_zero() { std::fill(a_.begin(), a_.end(), 0.0); }

    std::vector<double> multiply(const std::vector<double>& x) const {
        std::vector<double> y(n_, 0.0);
        for (int i = 0; i < n_; ++i) {
            const int j0 = std::max(0, i - kl_), j1 = std::min(n_ - 1, i + ku_);
            double s = 0.0;
            for (int j = j0; j <= j1; ++j) s += at(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    /// in-place LU; returns false on an exactly zero pivot
    bool factorize(bool pivot) {
        piv_.assign(n_, 0);
        pivoted_ = pivot;
        const int kl = kl_, span = kl_ + ku_;
        for (int k = 0; k < n_; ++k) {
            int p = k;
            if (pivot) {
                double best = std::abs(at(k, k));
                for (int i = k + 1; i <= std::min(n_ - 1, k + kl); ++i)
                    if (std::abs(at(i, k)) > best) best = std::abs(at(i, k)), p = i;
                if (p != k)
                    for (int j = k; j <= std::min(n_ - 1, k + span); ++j) std::swap(at(k, j), at(p, j));
            }
            piv_[k] = p;
            const double d = at(k, k);
            if (d == 0.0) return false;
            const int jmax = std::min(n_ - 1, k + (pivot ? span : ku_));
            for (int i = k + 1; i <= std::min(n_ - 1, k + kl); ++i) {
                const double l = at(i, k) / d;
                at(i, k) = l;
                if (l == 0.0) continue;
                for (int j = k + 1; j <= jmax; ++j) at(i, j) -= l * at(k, j);
            }
        }
        return true;
    }

    /// solve after factorize
    void solve(std::vector<double>& b) const {
        const int span = pivoted_ ? kl_ + ku_ : ku_;
        for (int k = 0; k < n_; ++k) {
            if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
            for (int i = k + 1; i <= std::min(n_ - 1, k + kl_); ++i) b[i] -= at(i, k) * b[k];
        }
        for (int k = n_ - 1; k >= 0; --k) {
            double s = b[k];
            for (int j = k + 1; j <= std::min(n_ - 1, k + span); ++j) s -= at(k, j) * b[j];
            b[k] = s / at(k, k);
        }
    }

    /// number of negative pivots after an unpivoted factorization of a symmetric matrix
    int negative_pivots() const {
        int c = 0;
        for (int k = 0; k < n_; ++k)
            if (at(k, k) < 0.0) ++c;
        return c;
    }

private:
    int n_ = 0, kl_ = 0, ku_ = 0, w_ = 0;
    std::vector<double> a_;
    std::vector<int> piv_;
    bool pivoted_ = false;
};

} // namespace acflow

#endif
