#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <thread>
#include <vector>

#include "fraclogi/common.hpp"
#include "fraclogi/grid.hpp"
#include "fraclogi/rng.hpp"

namespace fraclogi {

struct OperatorParams {
    double s = 0.5;
    double p = 2.0;

    void validate() const {
        if (!(s > 0.0 && s < 1.0)) throw ValidationError("s must lie in (0,1)");
        if (!(p > 1.0)) throw ValidationError("p must exceed 1");
    }
};

namespace detail {

// 16-point Gauss-Legendre on [-1,1].
inline const double* gl16_x() {
    static const double x[16] = {
        -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
        -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
        0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
        0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};
    return x;
}
inline const double* gl16_w() {
    static const double w[16] = {
        0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
        0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
        0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
        0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};
    return w;
}

/// Distance from x (strictly inside box b) to the boundary of b along direction theta.
inline double ray_exit(const Box& b, const std::array<double, 2>& x, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    double t = std::numeric_limits<double>::infinity();
    if (c > 0)
        t = std::min(t, (b.hi[0] - x[0]) / c);
    else if (c < 0)
        t = std::min(t, (b.lo[0] - x[0]) / c);
    if (s > 0)
        t = std::min(t, (b.hi[1] - x[1]) / s);
    else if (s < 0)
        t = std::min(t, (b.lo[1] - x[1]) / s);
    return t;
}

/// Exterior-of-box kernel mass in 2D, reduced to an angular integral:
///   int_{R^2 \ B} |x-y|^{-(2+sp)} dy = (1/sp) int_0^{2pi} rho(theta)^{-sp} dtheta,
/// rho the ray-exit distance.  The integrand is smooth between corner directions,
/// so 16-point Gauss per corner arc (64 evaluations) is accurate to rounding level.
inline double tail_2d(const Box& b, const std::array<double, 2>& x, double sp) {
    std::array<double, 4> corner_angles{
        std::atan2(b.lo[1] - x[1], b.lo[0] - x[0]), std::atan2(b.lo[1] - x[1], b.hi[0] - x[0]),
        std::atan2(b.hi[1] - x[1], b.hi[0] - x[0]), std::atan2(b.hi[1] - x[1], b.lo[0] - x[0])};
    std::sort(corner_angles.begin(), corner_angles.end());

    const double* gx = gl16_x();
    const double* gw = gl16_w();
    double total = 0.0;
    for (int seg = 0; seg < 4; ++seg) {
        const double a0 = corner_angles[seg];
        const double a1 = (seg < 3) ? corner_angles[seg + 1] : corner_angles[0] + 2.0 * std::numbers::pi;
        const double mid = 0.5 * (a0 + a1), half = 0.5 * (a1 - a0);
        double acc = 0.0;
        for (int k = 0; k < 16; ++k) {
            const double th = mid + half * gx[k];
            acc += gw[k] * std::pow(ray_exit(b, x, th), -sp);
        }
        total += half * acc;
    }
    return total / sp;
}

inline double tail_1d(const Box& b, double x, double sp) {
    return (std::pow(b.hi[0] - x, -sp) + std::pow(x - b.lo[0], -sp)) / sp;
}

} // namespace detail

/// Discrete fractional p-Laplacian with exterior Dirichlet condition.
///
/// Pairwise weights w_ij = cell_volume / |x_i - x_j|^{d+sp} quadrate the singular
/// kernel inside the bounding box (self-cell omitted: principal value); the
/// per-node tail zeta_i integrates the kernel over the complement of the cell
/// union in closed form (1d) or by angular quadrature (2d), realizing u = 0
/// beyond the box exactly.
class NonlocalOperator {
public:
    NonlocalOperator() = default;

    const Grid& grid() const { return *grid_; }
    const OperatorParams& params() const { return prm_; }
    std::size_t n() const { return grid_->n_nodes; }

    double pair_weight(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        return w_[packed_index(std::min(i, j), std::max(i, j))];
    }
    double tail_weight(std::size_t i) const { return zeta_[i]; }
    const std::vector<double>& packed_weights() const { return w_; }
    const std::vector<double>& tail_weights() const { return zeta_; }

    int threads() const { return threads_; }
    void set_threads(int t) { threads_ = std::max(1, t); }

    /// (L u)_i = 2 [ sum_{j != i} w_ij phi_p(u_i - u_j) + zeta_i phi_p(u_i) ]
    /// on nodes of `mask`, zero elsewhere.  Per-node sums always run in ascending
    /// j order, so results are bitwise identical for any thread count.
    Field apply(const Field& u, const std::vector<std::uint8_t>& mask) const {
        check_field(u, mask);
        Field out(*grid_);
        const std::size_t N = n();
        auto row = [&](std::size_t i) {
            const double ui = u.v[i];
            const double p = prm_.p;
            double acc = 0.0;
            // j < i: packed column walk; j > i: contiguous packed row.
            const double* wrow = w_.data() + packed_index(i, i + 1) - 0;
            if (p == 2.0) {
                for (std::size_t j = 0; j < i; ++j) acc += w_[packed_index(j, i)] * (ui - u.v[j]);
                for (std::size_t j = i + 1; j < N; ++j) acc += wrow[j - i - 1] * (ui - u.v[j]);
            } else {
                for (std::size_t j = 0; j < i; ++j) acc += w_[packed_index(j, i)] * signed_pow(ui - u.v[j], p);
                for (std::size_t j = i + 1; j < N; ++j) acc += wrow[j - i - 1] * signed_pow(ui - u.v[j], p);
            }
            out.v[i] = 2.0 * (acc + zeta_[i] * signed_pow(ui, p));
        };
        parallel_over_nodes(mask, row);
        return out;
    }

    Field apply(const Field& u) const { return apply(u, grid_->interior_mask); }

    /// Diagonal of the second derivative of (1/p)·gagliardo_energy in the
    /// nodal basis, 2(p-1)[ sum_j w_ij |u_i-u_j|^{p-2} + zeta_i |u_i|^{p-2} ],
    /// with differences floored to keep the p < 2 singularity finite.  Used as
    /// a Jacobi preconditioner by the degenerate-case solvers.
    Field curvature_diag(const Field& u, const std::vector<std::uint8_t>& mask, double floor) const {
        check_field(u, mask);
        Field out(*grid_);
        const std::size_t N = n();
        const double p = prm_.p;
        auto row = [&](std::size_t i) {
            const double ui = u.v[i];
            double acc = zeta_[i] * std::pow(std::max(std::abs(ui), floor), p - 2.0);
            for (std::size_t j = 0; j < i; ++j)
                acc += w_[packed_index(j, i)] * std::pow(std::max(std::abs(ui - u.v[j]), floor), p - 2.0);
            const double* wrow = w_.data() + packed_index(i, i + 1) - 0;
            for (std::size_t j = i + 1; j < N; ++j)
                acc += wrow[j - i - 1] * std::pow(std::max(std::abs(ui - u.v[j]), floor), p - 2.0);
            out.v[i] = 2.0 * (p - 1.0) * acc;
        };
        parallel_over_nodes(mask, row);
        return out;
    }

    /// Discrete Gagliardo energy
    ///   ||u||^p = sum_{i<j} 2 V w_ij |u_i-u_j|^p + sum_i 2 V zeta_i |u_i|^p,
    /// normalized so that d/du_i of (1/p)||u||^p = V (L u)_i exactly.
    double gagliardo_energy(const Field& u) const {
        check_field(u, grid_->interior_mask);
        const std::size_t N = n();
        const double p = prm_.p;
        std::vector<double> partial(N, 0.0);
        auto row = [&](std::size_t i) {
            const double ui = u.v[i];
            const double* wrow = w_.data() + packed_index(i, i + 1) - 0;
            double acc;
            if (p == 2.0) {
                acc = zeta_[i] * ui * ui;
                for (std::size_t j = i + 1; j < N; ++j) {
                    const double d = ui - u.v[j];
                    acc += wrow[j - i - 1] * d * d;
                }
            } else {
                acc = zeta_[i] * std::pow(std::abs(ui), p);
                for (std::size_t j = i + 1; j < N; ++j)
                    acc += wrow[j - i - 1] * std::pow(std::abs(ui - u.v[j]), p);
            }
            partial[i] = acc;
        };
        std::vector<std::uint8_t> all(N, 1);
        parallel_over_nodes(all, row);
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) total += partial[i];
        return 2.0 * grid_->cell_volume * total;
    }

    friend NonlocalOperator assemble(const Grid& g, const OperatorParams& prm, int threads);

    // Cache layout: header {magic, version, d, N, s, p, grid_hash}, then the
    // packed upper triangle, then the tail array (native little-endian doubles).
    bool save_cache(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) return false;
        const std::uint32_t magic = 0x464C4757u; // "FLGW"
        const std::uint32_t version = 1;
        const std::uint32_t d = static_cast<std::uint32_t>(grid_->dim);
        const std::uint64_t N = n();
        const std::uint64_t gh = grid_->hash();
        f.write(reinterpret_cast<const char*>(&magic), 4);
        f.write(reinterpret_cast<const char*>(&version), 4);
        f.write(reinterpret_cast<const char*>(&d), 4);
        f.write(reinterpret_cast<const char*>(&N), 8);
        f.write(reinterpret_cast<const char*>(&prm_.s), 8);
        f.write(reinterpret_cast<const char*>(&prm_.p), 8);
        f.write(reinterpret_cast<const char*>(&gh), 8);
        f.write(reinterpret_cast<const char*>(w_.data()), static_cast<std::streamsize>(w_.size() * 8));
        f.write(reinterpret_cast<const char*>(zeta_.data()), static_cast<std::streamsize>(zeta_.size() * 8));
        return bool(f);
    }

    static std::optional<NonlocalOperator> load_cache(const std::string& path, const Grid& g,
                                                      const OperatorParams& prm) {
        std::ifstream f(path, std::ios::binary);
        if (!f) return std::nullopt;
        std::uint32_t magic = 0, version = 0, d = 0;
        std::uint64_t N = 0, gh = 0;
        double s = 0, p = 0;
        f.read(reinterpret_cast<char*>(&magic), 4);
        f.read(reinterpret_cast<char*>(&version), 4);
        f.read(reinterpret_cast<char*>(&d), 4);
        f.read(reinterpret_cast<char*>(&N), 8);
        f.read(reinterpret_cast<char*>(&s), 8);
        f.read(reinterpret_cast<char*>(&p), 8);
        f.read(reinterpret_cast<char*>(&gh), 8);
        if (!f || magic != 0x464C4757u || version != 1) return std::nullopt;
        if (d != static_cast<std::uint32_t>(g.dim) || N != g.n_nodes) return std::nullopt;
        if (s != prm.s || p != prm.p || gh != g.hash()) return std::nullopt;
        NonlocalOperator op;
        op.grid_ = &g;
        op.prm_ = prm;
        op.w_.resize(N * (N - 1) / 2);
        op.zeta_.resize(N);
        f.read(reinterpret_cast<char*>(op.w_.data()), static_cast<std::streamsize>(op.w_.size() * 8));
        f.read(reinterpret_cast<char*>(op.zeta_.data()), static_cast<std::streamsize>(op.zeta_.size() * 8));
        if (!f) return std::nullopt;
        return op;
    }

private:
    const Grid* grid_ = nullptr;
    OperatorParams prm_;
    std::vector<double> w_;    // upper triangle, row-major: (0,1), (0,2), ..., (N-2,N-1)
    std::vector<double> zeta_;
    int threads_ = 1;

    std::size_t packed_index(std::size_t i, std::size_t j) const {
        // requires i < j
        const std::size_t N = grid_->n_nodes;
        return i * (2 * N - i - 1) / 2 + (j - i - 1);
    }

    void check_field(const Field& u, const std::vector<std::uint8_t>& mask) const {
        if (u.grid != grid_) throw ValidationError("field grid does not match operator grid");
        if (mask.size() != grid_->n_nodes) throw ValidationError("mask size mismatch");
    }

    template <typename Row>
    void parallel_over_nodes(const std::vector<std::uint8_t>& mask, Row row) const {
        const std::size_t N = n();
        if (threads_ <= 1) {
            for (std::size_t i = 0; i < N; ++i)
                if (mask[i]) row(i);
            return;
        }
        const int T = threads_;
        std::vector<std::thread> pool;
        pool.reserve(T);
        for (int t = 0; t < T; ++t) {
            pool.emplace_back([&, t]() {
                for (std::size_t i = t; i < N; i += static_cast<std::size_t>(T))
                    if (mask[i]) row(i);
            });
        }
        for (auto& th : pool) th.join();
    }
};

inline NonlocalOperator assemble(const Grid& g, const OperatorParams& prm, int threads = 1) {
    prm.validate();
    NonlocalOperator op;
    op.grid_ = &g;
    op.prm_ = prm;
    op.threads_ = std::max(1, threads);

    const std::size_t N = g.n_nodes;
    const double expo = g.dim + prm.s * prm.p;
    op.w_.resize(N * (N - 1) / 2);
    std::size_t k = 0;
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = i + 1; j < N; ++j, ++k) {
            const double dx = g.coords[i][0] - g.coords[j][0];
            const double dy = g.coords[i][1] - g.coords[j][1];
            const double w = g.cell_volume * std::pow(dx * dx + dy * dy, -0.5 * expo);
            if (!std::isfinite(w))
                throw ValidationError("kernel weight overflow at pair (" + std::to_string(i) + "," +
                                      std::to_string(j) + "); refine parameters, not the weights");
            op.w_[k] = w;
        }
    }

    const Box tb = g.tail_box();
    const double sp = prm.s * prm.p;
    op.zeta_.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double z = (g.dim == 1) ? detail::tail_1d(tb, g.coords[i][0], sp)
                                      : detail::tail_2d(tb, g.coords[i], sp);
        if (!(std::isfinite(z) && z > 0.0)) throw ValidationError("tail weight overflow or non-positive");
        op.zeta_[i] = z;
    }
    return op;
}

inline NonlocalOperator assemble_with_cache(const Grid& g, const OperatorParams& prm,
                                            const std::string& cache_path, int threads = 1) {
    if (!cache_path.empty()) {
        if (auto cached = NonlocalOperator::load_cache(cache_path, g, prm)) {
            cached->set_threads(std::max(1, threads));
            return std::move(*cached);
        }
    }
    NonlocalOperator op = assemble(g, prm, threads);
    if (!cache_path.empty()) op.save_cache(cache_path);
    return op;
}

struct IneqReport {
    long violations = 0;
    double worst_margin = std::numeric_limits<double>::infinity(); // min over samples of (slack side)
};

/// Samples scalar pairs and checks the two algebraic inequalities of the
/// p-power difference quotient with the constants documented below.
///
///   |phi_p(x) - phi_p(y)|          <= c1 * |x-y| (|x|+|y|)^{p-2}   (p >= 2)
///   |phi_p(x) - phi_p(y)|          <= c1 * |x-y|^{p-1}             (p <= 2)
///   (phi_p(x) - phi_p(y))(x - y)   >= c2 * |x-y|^p                 (p >= 2)
///   (phi_p(x) - phi_p(y))(x - y)   >= c2 * |x-y|^2 / (|x|+|y|)^{2-p}  (p <= 2)
///
/// Constants used (validated by 1d minimization of the scale-invariant ratio,
/// see the unit tests): c1 = p-1 for p >= 2 and c1 = 2^{2-p} for p <= 2;
/// c2 = 2^{2-p} for p >= 2 (equality at x = -y) and c2 = (p-1)/2 for p <= 2.
/// Sampling: x = U*10^E with U ~ Uniform(-1,1), E ~ UniformInt{-3..3}; every
/// 97th pair is mirrored (y = -x) and every 101st collapsed (y = x) to probe
/// the equality edges.  A relative slack of 1e-9 absorbs rounding.
inline IneqReport check_algebraic_inequalities(double p, long sample_count, std::uint64_t rng_seed) {
    if (!(p > 1.0)) throw ValidationError("p must exceed 1");
    const double c1 = (p <= 2.0) ? std::pow(2.0, 2.0 - p) : (p - 1.0);
    const double c2 = (p <= 2.0) ? 0.5 * (p - 1.0) : std::pow(2.0, 2.0 - p);
    const double slack = 1e-9;

    Rng rng(rng_seed);
    IneqReport rep;
    for (long t = 0; t < sample_count; ++t) {
        double x = rng.uniform(-1.0, 1.0) * std::pow(10.0, static_cast<double>(rng.below(7)) - 3.0);
        double y = rng.uniform(-1.0, 1.0) * std::pow(10.0, static_cast<double>(rng.below(7)) - 3.0);
        if (t % 97 == 42) y = -x;
        if (t % 101 == 7) y = x;

        const double d = x - y;
        const double ad = std::abs(d);
        const double sum = std::abs(x) + std::abs(y);
        const double lhs1 = std::abs(signed_pow(x, p) - signed_pow(y, p));
        const double rhs1 = (p >= 2.0) ? c1 * ad * std::pow(sum, p - 2.0) : c1 * std::pow(ad, p - 1.0);
        const double lhs2 = (signed_pow(x, p) - signed_pow(y, p)) * d;
        const double rhs2 = (p >= 2.0) ? c2 * std::pow(ad, p)
                                       : (sum > 0.0 ? c2 * ad * ad / std::pow(sum, 2.0 - p) : 0.0);

        const double m1 = (rhs1 - lhs1) + slack * (rhs1 + lhs1);
        const double m2 = (lhs2 - rhs2) + slack * (std::abs(lhs2) + rhs2);
        rep.worst_margin = std::min(rep.worst_margin, std::min(m1, m2));
        if (m1 < 0.0 || m2 < 0.0) ++rep.violations;
    }
    return rep;
}

} // namespace fraclogi
