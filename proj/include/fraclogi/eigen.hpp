#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fraclogi/common.hpp"
#include "fraclogi/grid.hpp"
#include "fraclogi/nonlocal.hpp"

namespace fraclogi {

// Convergence envelope: tight-tolerance eigensolves are reliable for p >= 1.8.
// Below that the energy Hessian degenerates on the eigenfunction's flat top
// (neighbor differences vanish while |t|^{p-2} blows up), and any first-order
// scheme crawls in the last digits; the quotient value itself still converges
// to rounding long before the field residual does.
struct EigenOptions {
    double tol = 1e-9;       // residual tolerance, relative to lambda * ||phi_m(psi)||
    long max_iter = 50000;
    double amplitude_cap = 1e12;
};

struct EigenResult {
    double lambda = 0.0;
    Field eigenfield;
    long iterations = 0;
    double residual = 0.0;
};

namespace detail {

inline double lp_norm_pow(const Grid& g, const std::vector<double>& v, double m) {
    double acc = 0.0;
    for (double x : v) acc += std::pow(std::abs(x), m);
    return g.cell_volume * acc;
}

inline double l2_norm(const Grid& g, const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(g.cell_volume * acc);
}

/// Minimizes  [ ||v||^p + mu * int w |v|^p ] / ||v||_{L^m}^{...}  over nonnegative
/// fields supported on `mask`, by projected gradient descent on the unit L^m
/// sphere with Barzilai-Borwein steps and monotone backtracking.  The residual
/// is || A v - Q phi_m(v) ||_{L^2} with A v = L v + mu w phi_p(v) and Q the
/// current quotient value.
inline EigenResult quotient_minimize(const NonlocalOperator& op, const std::vector<std::uint8_t>& mask,
                                     const Field* weight, double mu, double m, const EigenOptions& opts,
                                     const Field& init) {
    const Grid& g = op.grid();
    const double p = op.params().p;
    const double V = g.cell_volume;

    std::size_t mask_count = 0;
    for (auto b : mask) mask_count += b ? 1 : 0;
    if (mask_count == 0) throw ValidationError("eigen: empty domain mask");
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        if (mask[i] && !g.interior_mask[i]) throw ValidationError("eigen: mask extends outside interior");

    Field u = masked(init, mask);
    for (auto& x : u.v) x = std::max(x, 0.0);
    {
        double nm = std::pow(lp_norm_pow(g, u.v, m), 1.0 / m);
        if (!(nm > 0.0)) throw ValidationError("eigen: initial field vanishes on the mask");
        for (auto& x : u.v) x /= nm;
    }

    auto weighted_mass = [&](const std::vector<double>& v) {
        if (!weight) return 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) acc += weight->v[i] * std::pow(std::abs(v[i]), p);
        return V * acc;
    };
    auto quotient = [&](const Field& v) { return op.gagliardo_energy(v) + mu * weighted_mass(v.v); };

    double Q = quotient(u);
    std::vector<double> r(g.n_nodes, 0.0), dir(g.n_nodes, 0.0), r_prev, dir_prev, u_prev;
    double alpha = 0.1 / std::max(1.0, Q);
    // For p < 2 the pair terms |u_i - u_j|^{p-2} blow up on flat stretches of
    // the iterate; a Jacobi preconditioner built from the true local curvature
    // removes that stiffness.  For p >= 2 plain BB steps behave well.
    const bool precondition = p < 2.0;

    long it = 0;
    double resnorm = 0.0;
    for (; it < opts.max_iter; ++it) {
        Field Au = op.apply(u, mask);
        if (weight && mu != 0.0)
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                if (mask[i]) Au.v[i] += mu * weight->v[i] * signed_pow(u.v[i], p);

        double phinorm2 = 0.0;
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            r[i] = mask[i] ? (Au.v[i] - Q * signed_pow(u.v[i], m)) : 0.0;
            const double ph = signed_pow(u.v[i], m);
            phinorm2 += ph * ph;
        }
        resnorm = l2_norm(g, r);
        const double scale = Q * std::sqrt(V * phinorm2) + kTiny;
        if (resnorm <= opts.tol * scale) break;

        if (precondition) {
            // project in the preconditioned metric: the multiplier sigma makes
            // the update vanish exactly at eigenpairs, which plain division of
            // the Rayleigh residual would not
            Field curv = op.curvature_diag(u, mask, 1e-8 * (u.linf() + kTiny));
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                if (!mask[i]) continue;
                const double ph = signed_pow(u.v[i], m);
                num += Au.v[i] * ph / curv.v[i];
                den += ph * ph / curv.v[i];
            }
            const double sigma = num / (den + kTiny);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                dir[i] = mask[i] ? (Au.v[i] - sigma * signed_pow(u.v[i], m)) / curv.v[i] : 0.0;
        } else {
            dir = r;
        }

        if (!u_prev.empty()) {
            // BB step in the metric of the direction actually taken; for the
            // preconditioned path this damps the flat-top two-cycle that a
            // fixed unit step falls into
            const std::vector<double>& y_src = precondition ? dir : r;
            const std::vector<double>& y_old = precondition ? dir_prev : r_prev;
            double ss = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                const double s = u.v[i] - u_prev[i];
                ss += s * s;
                sy += s * (y_src[i] - y_old[i]);
            }
            if (sy > 0.0 && ss > 0.0)
                alpha = std::clamp(ss / sy, 1e-14, precondition ? 1.0 : 1e14);
        } else if (precondition) {
            alpha = 0.5;
        }
        u_prev = u.v;
        r_prev = r;
        dir_prev = dir;

        bool accepted = false;
        double a = alpha;
        for (int bt = 0; bt < 40; ++bt, a *= 0.5) {
            Field trial(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                trial.v[i] = mask[i] ? std::max(0.0, u.v[i] - a * dir[i]) : 0.0;
            const double nm = std::pow(lp_norm_pow(g, trial.v, m), 1.0 / m);
            if (!(nm > 0.0)) continue;
            for (auto& x : trial.v) x /= nm;
            const double Qt = quotient(trial);
            // slack of a few ulps lets the iterate keep polishing the
            // eigenvector once the quotient sits at its rounding floor
            if (Qt <= Q + 1e-14 * (std::abs(Q) + 1.0)) {
                u = std::move(trial);
                Q = Qt;
                alpha = a;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // flat to rounding level: accept the current point as converged if
            // the residual is already small in absolute terms
            if (resnorm <= 1e-12 * (1.0 + Q)) break;
            throw SolverFailure("eigen solver stagnated", u.v, resnorm, it);
        }
        if (u.linf() > opts.amplitude_cap) throw SolverFailure("eigen iterate diverged", u.v, resnorm, it);
    }
    if (it >= opts.max_iter)
        throw SolverFailure("eigen solver did not converge in max_iter", u.v, resnorm, it);

    EigenResult res;
    res.lambda = Q;
    res.eigenfield = std::move(u);
    res.iterations = it;
    res.residual = resnorm;
    return res;
}

} // namespace detail

/// Rayleigh quotient ||v||^p / ||v||_{L^p}^p; used by callers to cross-check the
/// inf property of first_eigen against arbitrary trial fields.
inline double rayleigh_quotient(const NonlocalOperator& op, const Field& v) {
    const double denom = detail::lp_norm_pow(op.grid(), v.v, op.params().p);
    if (!(denom > 0.0)) throw ValidationError("rayleigh_quotient of the zero field");
    return op.gagliardo_energy(v) / denom;
}

/// First eigenvalue of the fractional p-Laplacian on the sub-domain given by
/// `mask`, with the eigenfield normalized to unit discrete L^p norm.
inline EigenResult first_eigen(const NonlocalOperator& op, const std::vector<std::uint8_t>& mask,
                               const EigenOptions& opts = {}) {
    Field init = distance_profile(op.grid(), mask, op.params().s);
    return detail::quotient_minimize(op, mask, nullptr, 0.0, op.params().p, opts, init);
}

/// Weighted eigenpair: minimizes ||v||^p + mu * int b |v|^p over the unit L^p
/// sphere on the full interior.  As mu grows the pair approaches the first
/// eigenpair of the refuge.
inline EigenResult weighted_eigen(const NonlocalOperator& op, const Field& b, double mu,
                                  const EigenOptions& opts = {}) {
    if (mu < 0.0) throw ValidationError("weighted_eigen: mu must be nonnegative");
    Field init = distance_profile(op.grid(), op.grid().interior_mask, op.params().s);
    return detail::quotient_minimize(op, op.grid().interior_mask, &b, mu, op.params().p, opts, init);
}

/// Sobolev-type quotient  S = inf ||v||^p / ||v||_{L^{q+1}}^p  over `mask`
/// (the constant behind the mountain-pass level).
inline EigenResult sobolev_quotient(const NonlocalOperator& op, const std::vector<std::uint8_t>& mask,
                                    double q, const EigenOptions& opts = {}) {
    if (!(q > op.params().p - 1.0)) throw ValidationError("sobolev_quotient requires q > p-1");
    Field init = distance_profile(op.grid(), mask, op.params().s);
    return detail::quotient_minimize(op, mask, nullptr, 0.0, q + 1.0, opts, init);
}

} // namespace fraclogi
