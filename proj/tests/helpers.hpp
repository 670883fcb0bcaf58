#pragma once

// Shared fixtures and independent oracles for the test suites.  Oracle code
// here re-derives quantities from first principles (dense matrices, brute-force
// scans, quadrature) and must stay independent of the library's compute paths.

#include <cmath>
#include <functional>
#include <vector>

#include "fraclogi/grid.hpp"
#include "fraclogi/nonlocal.hpp"
#include "fraclogi/rng.hpp"

namespace testutil {

using namespace fraclogi;

inline Grid grid_1d(int resolution = 101, double pad = 0.25) {
    GridSpec spec;
    spec.dimension = 1;
    spec.omega = Box::interval(-1.0, 1.0);
    spec.refuge = Box::interval(-0.4, 0.4);
    spec.resolution = resolution;
    spec.pad_fraction = pad;
    return build_grid(spec);
}

inline Grid grid_2d(int resolution = 17, double pad = 0.25) {
    GridSpec spec;
    spec.dimension = 2;
    spec.omega = Box::square(-1.0, 1.0);
    spec.refuge = Box::square(-0.4, 0.4);
    spec.resolution = resolution;
    spec.pad_fraction = pad;
    return build_grid(spec);
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

inline Field random_interior_field(const Grid& g, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Field u(g);
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        u.v[i] = g.interior_mask[i] ? rng.uniform(lo, hi) : 0.0;
    return u;
}

/// Dense operator matrix for p = 2, assembled directly from node coordinates
/// and the closed-form 1d tail: diagonal 2(sum_j w_ij + zeta_i), off-diagonal
/// -2 w_ij, restricted to the rows/columns of `mask`.
struct DenseOracle {
    std::vector<std::size_t> nodes; // mask node -> grid index
    std::vector<double> M;          // row-major dense, size n*n

    static DenseOracle build(const Grid& g, double s, const std::vector<std::uint8_t>& mask) {
        DenseOracle o;
        for (std::size_t i = 0; i < g.n_nodes; ++i)
            if (mask[i]) o.nodes.push_back(i);
        const std::size_t n = o.nodes.size();
        const double expo = g.dim + 2.0 * s; // p = 2
        const double sp = 2.0 * s;
        const Box tb = g.tail_box();

        auto w = [&](std::size_t a, std::size_t b) {
            const double dx = g.coords[a][0] - g.coords[b][0];
            const double dy = g.coords[a][1] - g.coords[b][1];
            return g.cell_volume * std::pow(std::sqrt(dx * dx + dy * dy), -expo);
        };
        auto zeta = [&](std::size_t a) {
            if (g.dim == 1)
                return (std::pow(tb.hi[0] - g.coords[a][0], -sp) + std::pow(g.coords[a][0] - tb.lo[0], -sp)) /
                       sp;
            // 2d: dense trapezoid of the angular reduction (oracle-grade)
            const int K = 1 << 14;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) {
                const double th = 2.0 * 3.14159265358979323846 * (k + 0.5) / K;
                const double c = std::cos(th), sn = std::sin(th);
                double t = 1e300;
                if (c > 0) t = std::min(t, (tb.hi[0] - g.coords[a][0]) / c);
                if (c < 0) t = std::min(t, (tb.lo[0] - g.coords[a][0]) / c);
                if (sn > 0) t = std::min(t, (tb.hi[1] - g.coords[a][1]) / sn);
                if (sn < 0) t = std::min(t, (tb.lo[1] - g.coords[a][1]) / sn);
                acc += std::pow(t, -sp);
            }
            return acc * (2.0 * 3.14159265358979323846 / K) / sp;
        };

        o.M.assign(n * n, 0.0);
        for (std::size_t a = 0; a < n; ++a) {
            double row_sum = 0.0;
            for (std::size_t b2 = 0; b2 < g.n_nodes; ++b2) {
                if (b2 == o.nodes[a]) continue;
                row_sum += w(o.nodes[a], b2);
            }
            o.M[a * n + a] = 2.0 * (row_sum + zeta(o.nodes[a]));
            for (std::size_t b = 0; b < n; ++b)
                if (b != a) o.M[a * n + b] = -2.0 * w(o.nodes[a], o.nodes[b]);
        }
        return o;
    }

    std::vector<double> mult(const std::vector<double>& x) const {
        const std::size_t n = nodes.size();
        std::vector<double> y(n, 0.0);
        for (std::size_t a = 0; a < n; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < n; ++b) acc += M[a * n + b] * x[b];
            y[a] = acc;
        }
        return y;
    }
};

/// Cyclic Jacobi eigensolver for small dense symmetric matrices; returns all
/// eigenvalues (unsorted magnitude, then sorted ascending).
inline std::vector<double> jacobi_eigenvalues(std::vector<double> A, std::size_t n) {
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += A[i * n + j] * A[i * n + j];
        if (off < 1e-24 * n * n) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = A[p * n + q];
                if (apq == 0.0) continue;
                const double app = A[p * n + p], aqq = A[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                              : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = A[k * n + p], akq = A[k * n + q];
                    A[k * n + p] = c * akp - s * akq;
                    A[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = A[p * n + k], aqk = A[q * n + k];
                    A[p * n + k] = c * apk - s * aqk;
                    A[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = A[i * n + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

/// Adaptive Simpson quadrature (oracle for the tail integrals).
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                               int depth = 30) {
    const double c = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fc = f(c);
    std::function<double(double, double, double, double, double, double, int)> rec =
        [&](double a_, double b_, double fa_, double fb_, double fc_, double whole, int d) -> double {
        const double c_ = 0.5 * (a_ + b_);
        const double lm = 0.5 * (a_ + c_), rm = 0.5 * (c_ + b_);
        const double flm = f(lm), frm = f(rm);
        const double left = (c_ - a_) / 6.0 * (fa_ + 4.0 * flm + fc_);
        const double right = (b_ - c_) / 6.0 * (fc_ + 4.0 * frm + fb_);
        if (d <= 0 || std::abs(left + right - whole) < 15.0 * tol)
            return left + right + (left + right - whole) / 15.0;
        return rec(a_, c_, fa_, fc_, flm, left, d - 1) + rec(c_, b_, fc_, fb_, frm, right, d - 1);
    };
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    return rec(a, b, fa, fb, fc, whole, depth);
}

} // namespace testutil
