#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fraclogi/common.hpp"
#include "fraclogi/eigen.hpp"
#include "fraclogi/grid.hpp"
#include "fraclogi/nonlocal.hpp"

namespace fraclogi {

/// Parameter tuple of the logistic problem: L u = lambda u^q - b u^r on the
/// active mask, u = 0 elsewhere.  The restricted flavor (arbitrary sub-mask,
/// absorption disabled) is the comparison problem used by the blow-up theory.
struct Problem {
    const NonlocalOperator* op = nullptr;
    Field b;
    double lambda = 1.0;
    double q = 1.0;
    double r = 2.0;
    std::vector<std::uint8_t> mask;
    bool restricted = false;

    const Grid& grid() const { return op->grid(); }
    double p() const { return op->params().p; }

    Problem with_lambda(double lam) const {
        Problem pb = *this;
        pb.lambda = lam;
        return pb;
    }
};

inline Problem make_problem(const NonlocalOperator& op, const Field& b, double lambda, double q, double r) {
    const Grid& g = op.grid();
    if (!(q > 0.0)) throw ValidationError("q must be positive");
    if (!(r > op.params().p - 1.0)) throw ValidationError("r must exceed p-1");
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
    if (b.grid != &g) throw ValidationError("absorption field grid mismatch");
    bool any_positive = false;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (b.v[i] < 0.0) throw ValidationError("absorption must be nonnegative");
        const bool should_vanish = !g.interior_mask[i] || g.refuge_mask[i];
        if (should_vanish && b.v[i] != 0.0)
            throw ValidationError("absorption must vanish exactly on refuge and exterior nodes");
        if (!should_vanish && b.v[i] == 0.0)
            throw ValidationError("absorption must be positive on interior nodes outside the refuge");
        any_positive |= (b.v[i] > 0.0);
    }
    if (!any_positive) throw ValidationError("absorption vanishes identically");
    Problem pb;
    pb.op = &op;
    pb.b = b;
    pb.lambda = lambda;
    pb.q = q;
    pb.r = r;
    pb.mask = g.interior_mask;
    pb.restricted = false;
    return pb;
}

/// Problem with b switched off on a sub-domain mask: L u = lambda u^q on mask.
inline Problem make_restricted_problem(const NonlocalOperator& op, double lambda, double q, double r,
                                       const std::vector<std::uint8_t>& mask) {
    const Grid& g = op.grid();
    if (!(q > 0.0) || !(lambda > 0.0)) throw ValidationError("lambda and q must be positive");
    if (!(r > op.params().p - 1.0)) throw ValidationError("r must exceed p-1");
    if (mask.size() != g.n_nodes) throw ValidationError("mask size mismatch");
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        if (mask[i] && !g.interior_mask[i]) throw ValidationError("active mask extends outside interior");
    Problem pb;
    pb.op = &op;
    pb.b = Field(g);
    pb.lambda = lambda;
    pb.q = q;
    pb.r = r;
    pb.mask = mask;
    pb.restricted = true;
    return pb;
}

struct LambdaRange {
    enum class QClass { subhomogeneous, homogeneous, superlinear };
    QClass q_class = QClass::subhomogeneous;
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
    double guard = 0.0; // margin applied before declaring lambda strictly inside
};

inline LambdaRange lambda_range(const NonlocalOperator& op, double q, const EigenOptions& eopts = {}) {
    const double p = op.params().p;
    LambdaRange lr;
    if (q < p - 1.0) {
        lr.q_class = LambdaRange::QClass::subhomogeneous;
    } else if (q == p - 1.0) {
        lr.q_class = LambdaRange::QClass::homogeneous;
        lr.lower = first_eigen(op, op.grid().interior_mask, eopts).lambda;
        lr.upper = first_eigen(op, op.grid().refuge_mask, eopts).lambda;
        lr.guard = 1e-3 * (lr.upper - lr.lower);
    } else {
        lr.q_class = LambdaRange::QClass::superlinear;
    }
    return lr;
}

/// J(v) = (1/p)||v||^p - (lambda/(q+1)) ||v||_{q+1}^{q+1} + int b |v|^{r+1}/(r+1)
inline double energy_J(const Problem& pb, const Field& v) {
    const Grid& g = pb.grid();
    const double V = g.cell_volume;
    double lq = 0.0, br = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        lq += std::pow(std::abs(v.v[i]), pb.q + 1.0);
        br += pb.b.v[i] * std::pow(std::abs(v.v[i]), pb.r + 1.0);
    }
    return pb.op->gagliardo_energy(v) / pb.p() - pb.lambda / (pb.q + 1.0) * V * lq + V * br / (pb.r + 1.0);
}

/// Exact discrete gradient of energy_J:  V * (L v - lambda phi_{q+1}(v) + b phi_{r+1}(v)).
inline Field grad_J(const Problem& pb, const Field& v) {
    const Grid& g = pb.grid();
    Field grad = pb.op->apply(v, pb.mask);
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!pb.mask[i]) {
            grad.v[i] = 0.0;
            continue;
        }
        grad.v[i] = g.cell_volume *
                    (grad.v[i] - pb.lambda * signed_pow(v.v[i], pb.q + 1.0) +
                     pb.b.v[i] * signed_pow(v.v[i], pb.r + 1.0));
    }
    return grad;
}

/// Strong nodal residual L u - lambda u^q + b u^r on the active mask (equals
/// grad_J / cell_volume for nonnegative u), reported in the discrete L^2 norm.
inline double weak_residual_norm(const Problem& pb, const Field& u) {
    const Grid& g = pb.grid();
    Field gr = grad_J(pb, u);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        const double rho = gr.v[i] / g.cell_volume;
        acc += rho * rho;
    }
    return std::sqrt(g.cell_volume * acc);
}

struct SteadyState {
    Field field;
    double residual = 0.0;
    double energy = 0.0;
    double positivity_floor = 0.0; // min over the refuge mask
    bool positive_solution = false;
    long iterations = 0;
};

struct DescentOptions {
    double tol = 1e-8;       // KKT residual (strong form, L^2), relative to the source scale
    long max_iter = 400000;
    double collapse_tol = 1e-10;
    double amplitude_cap = 1e8;
};

namespace detail {

inline double kkt_residual(const Problem& pb, const Field& u, const Field& grad, std::vector<double>& rho) {
    const Grid& g = pb.grid();
    rho.assign(g.n_nodes, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!pb.mask[i]) continue;
        double q = grad.v[i] / g.cell_volume;
        if (u.v[i] <= 0.0) q = std::min(q, 0.0);
        rho[i] = q;
        acc += q * q;
    }
    return std::sqrt(g.cell_volume * acc);
}

/// Magnitude of the equation's source terms; residual tolerances are relative
/// to it, since large-amplitude states cannot certify below rounding of the
/// terms themselves.
inline double residual_scale(const Problem& pb, const Field& u) {
    const Grid& g = pb.grid();
    double acc = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!pb.mask[i]) continue;
        acc += sqr(pb.lambda * std::pow(std::abs(u.v[i]), pb.q) +
                   pb.b.v[i] * std::pow(std::abs(u.v[i]), pb.r));
    }
    return 1.0 + std::sqrt(g.cell_volume * acc);
}

/// Positive minimizer of t -> J(t * dir) for q <= p-1, where the ray profile is
/// decreasing-then-increasing; returns 0 when the ray has no descent direction
/// (then zero is the ray minimizer).
inline double ray_minimizer(const Problem& pb, const Field& dir) {
    const Grid& g = pb.grid();
    const double V = g.cell_volume;
    const double p = pb.p();
    const double A = pb.op->gagliardo_energy(dir);
    double B = 0.0, C = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        B += std::pow(std::abs(dir.v[i]), pb.q + 1.0);
        C += pb.b.v[i] * std::pow(std::abs(dir.v[i]), pb.r + 1.0);
    }
    B *= pb.lambda * V;
    C *= V;
    if (!(A > 0.0 && B > 0.0)) return 0.0;
    if (pb.q == p - 1.0) {
        if (!(B > A) || C <= 0.0) return 0.0;
        return std::pow((B - A) / C, 1.0 / (pb.r - p + 1.0));
    }
    // q < p-1: g(t) = A t^{p-1-q} + C t^{r-q} - B increases through zero
    auto gfun = [&](double t) {
        return A * std::pow(t, p - 1.0 - pb.q) + C * std::pow(t, pb.r - pb.q) - B;
    };
    double hi = 1.0;
    while (gfun(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e40) return 0.0;
    }
    double lo = hi * 0.5;
    while (gfun(lo) > 0.0) {
        lo *= 0.5;
        if (lo < 1e-40) return 0.0;
    }
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (gfun(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline SteadyState finish_state(const Problem& pb, Field u, double res, long iters) {
    SteadyState st;
    st.residual = res;
    st.energy = energy_J(pb, u);
    st.iterations = iters;
    double floor = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < u.size(); ++i)
        if (pb.grid().refuge_mask[i]) {
            floor = std::min(floor, u.v[i]);
            any = true;
        }
    st.positivity_floor = any ? floor : 0.0;
    st.positive_solution = u.linf() > 0.0;
    st.field = std::move(u);
    return st;
}

} // namespace detail

/// Global minimization of J by projected Barzilai-Borwein descent with
/// positivity clamping.  Valid for q <= p-1, where J is coercive inside the
/// admissible lambda interval and the positive minimizer is the unique
/// nontrivial critical point.  Outside the interval the zero field is returned
/// with positive_solution = false.
inline SteadyState solve_subhomogeneous(const Problem& pb, const DescentOptions& opts = {},
                                        const std::optional<Field>& init = std::nullopt,
                                        const std::optional<LambdaRange>& known_range = std::nullopt) {
    const Grid& g = pb.grid();
    const double p = pb.p();
    if (!(pb.q <= p - 1.0)) throw ValidationError("solve_subhomogeneous requires q <= p-1");

    if (pb.q == p - 1.0) {
        if (pb.restricted)
            throw ValidationError("restricted homogeneous steady problem degenerates to the eigenproblem");
        LambdaRange lr = known_range ? *known_range : lambda_range(*pb.op, pb.q);
        // Outside the admissible interval (with the discrete guard band) there
        // is no positive steady state; J is unbounded below past the top.
        if (pb.lambda >= lr.upper - lr.guard || pb.lambda <= lr.lower + lr.guard)
            return detail::finish_state(pb, Field(g), 0.0, 0);
    }

    Field u(g);
    if (init) {
        u = masked(*init, pb.mask);
        for (auto& x : u.v) x = std::max(x, 0.0);
        if (u.linf() > 0.0) {
            // rescale the warm start onto its own ray minimizer: never raises J
            // (the ray minimum is taken over the scaling), fixes the amplitude
            // after a lambda step, and keeps J < 0 so the descent cannot slide
            // into the zero corner
            const double t_ray = detail::ray_minimizer(pb, u);
            if (t_ray > 0.0)
                for (auto& x : u.v) x *= t_ray;
        }
    }
    if (!init || u.linf() == 0.0) {
        // Scale the init direction to the ray minimizer of J, which has J < 0;
        // starting in the negative basin keeps the monotone descent away from
        // the degenerate stationary point at zero.
        Field dir = distance_profile(g, pb.mask, pb.op->params().s);
        double t_ray = detail::ray_minimizer(pb, dir);
        if (!(t_ray > 0.0) && pb.q == p - 1.0) {
            // the profile ray sees no descent direction this close to the lower
            // eigenvalue; the eigenfield ray always does
            dir = first_eigen(*pb.op, pb.mask).eigenfield;
            t_ray = detail::ray_minimizer(pb, dir);
        }
        if (!(t_ray > 0.0)) return detail::finish_state(pb, Field(g), 0.0, 0);
        for (std::size_t i = 0; i < g.n_nodes; ++i) u.v[i] = t_ray * dir.v[i];
    }
    const double scale0 = std::max(u.linf(), 1.0);

    double J = energy_J(pb, u);
    std::vector<double> rho, rho_prev, u_prev;
    double alpha = 1.0;
    double res = 0.0;
    double window_best = std::numeric_limits<double>::infinity();
    long window_mark = 0;
    long it = 0;
    for (; it < opts.max_iter; ++it) {
        Field grad = grad_J(pb, u);
        res = detail::kkt_residual(pb, u, grad, rho);
        const double tol_eff = opts.tol * detail::residual_scale(pb, u);
        if (res <= tol_eff) break;
        if (u.linf() < opts.collapse_tol * scale0) {
            // descent collapsed to zero: no positive solution at this lambda
            return detail::finish_state(pb, Field(g), 0.0, it);
        }
        if (res < 0.99 * window_best) {
            window_best = res;
            window_mark = it;
        } else if (it - window_mark > 2000) {
            // residual has flatlined: accept near-misses, fail honest stalls
            if (res <= 1e3 * tol_eff) break;
            throw SolverFailure("steady-state descent stalled above tolerance", u.v, res, it);
        }

        if (!u_prev.empty()) {
            double ss = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                const double s = u.v[i] - u_prev[i];
                ss += s * s;
                sy += s * (rho[i] - rho_prev[i]);
            }
            if (sy > 0.0 && ss > 0.0) alpha = std::clamp(ss / sy, 1e-14, 1e14);
        }
        u_prev = u.v;
        rho_prev = rho;

        bool accepted = false;
        double a = alpha;
        for (int bt = 0; bt < 50; ++bt, a *= 0.5) {
            Field trial(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                trial.v[i] = pb.mask[i] ? std::max(0.0, u.v[i] - a * rho[i]) : 0.0;
            const double Jt = energy_J(pb, trial);
            if (Jt <= J + 1e-14 * (std::abs(J) + 1.0)) {
                u = std::move(trial);
                J = Jt;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (res <= 1e3 * opts.tol * detail::residual_scale(pb, u)) break;
            throw SolverFailure("steady-state descent stagnated", u.v, res, it);
        }
        if (u.linf() > opts.amplitude_cap)
            throw SolverFailure("steady-state descent diverged", u.v, res, it);
        if (pb.q == p - 1.0 && it % 25 == 24 && u.linf() > 0.0) {
            // the slow mode of the homogeneous case is the ray scaling itself;
            // a periodic exact ray rescale collapses it at negligible cost
            const double t_ray = detail::ray_minimizer(pb, u);
            if (t_ray > 0.0 && std::abs(t_ray - 1.0) > 1e-15) {
                Field trial = u;
                for (auto& x : trial.v) x *= t_ray;
                const double Jt = energy_J(pb, trial);
                if (Jt < J) {
                    u = std::move(trial);
                    J = Jt;
                    u_prev.clear();
                }
            }
        }
    }
    if (it >= opts.max_iter) throw SolverFailure("steady-state descent hit max_iter", u.v, res, it);

    if (u.linf() < opts.collapse_tol * scale0) return detail::finish_state(pb, Field(g), 0.0, it);
    return detail::finish_state(pb, std::move(u), res, it);
}

namespace detail {

/// Unique positive root of d/dt J(t v) = 0, i.e. the maximizer of J along the
/// ray through v (exists for p-1 < q and r < q).
inline double ray_maximizer(const Problem& pb, const Field& v) {
    const Grid& g = pb.grid();
    const double V = g.cell_volume;
    const double p = pb.p();
    const double A = pb.op->gagliardo_energy(v);
    double B = 0.0, C = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        B += std::pow(std::abs(v.v[i]), pb.q + 1.0);
        C += pb.b.v[i] * std::pow(std::abs(v.v[i]), pb.r + 1.0);
    }
    B *= pb.lambda * V;
    C *= V;
    if (!(A > 0.0 && B > 0.0)) throw ValidationError("ray_maximizer needs a nontrivial field");
    // g(t) = A + C t^{r-p+1} - B t^{q-p+1}; unique sign change from + to -.
    auto gfun = [&](double t) {
        return A + C * std::pow(t, pb.r - p + 1.0) - B * std::pow(t, pb.q - p + 1.0);
    };
    double hi = 1.0;
    while (gfun(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e30) throw SolverFailure("ray maximizer bracket failed", v.v, 0.0, 0);
    }
    double lo = hi * 0.5;
    while (gfun(lo) < 0.0) {
        lo *= 0.5;
        if (lo < 1e-30) throw SolverFailure("ray maximizer bracket failed", v.v, 0.0, 0);
    }
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (gfun(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Best-effort critical point in the superlinear regime p-1 < q, r < q:
/// rescales the initial guess to the ray maximizer of J, then descends with the
/// rescaling reapplied each step, which pins the unstable ray direction.  The
/// certificate is the full gradient residual only; no mountain-pass level is
/// identified.  Experimental by design.
inline SteadyState solve_superlinear(const Problem& pb, const Field& init, const DescentOptions& opts = {}) {
    const Grid& g = pb.grid();
    const double p = pb.p();
    if (!(pb.q > p - 1.0)) throw ValidationError("solve_superlinear requires q > p-1");
    if (!(pb.r < pb.q)) throw ValidationError("solve_superlinear requires r < q");
    {
        const double sp = pb.op->params().s * p;
        const double d = static_cast<double>(g.dim);
        if (sp < d) {
            const double pstar = d * p / (d - sp);
            if (!(pb.q < pstar - 1.0)) throw ValidationError("solve_superlinear requires q < p*-1");
        }
    }
    bool touches_refuge = false;
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        touches_refuge |= (g.refuge_mask[i] && init.v[i] > 0.0);
    if (!touches_refuge) throw ValidationError("superlinear init must be positive somewhere on the refuge");

    Field u = masked(init, pb.mask);
    for (auto& x : u.v) x = std::max(x, 0.0);
    {
        const double t0 = detail::ray_maximizer(pb, u);
        for (auto& x : u.v) x *= t0;
    }
    double J = energy_J(pb, u);

    std::vector<double> rho, rho_prev, u_prev;
    double alpha = 1.0;
    double res = 0.0;
    long it = 0;
    for (; it < opts.max_iter; ++it) {
        Field grad = grad_J(pb, u);
        res = detail::kkt_residual(pb, u, grad, rho);
        if (res <= opts.tol * detail::residual_scale(pb, u)) break;

        if (!u_prev.empty()) {
            double ss = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                const double s = u.v[i] - u_prev[i];
                ss += s * s;
                sy += s * (rho[i] - rho_prev[i]);
            }
            if (sy != 0.0 && ss > 0.0) alpha = std::clamp(std::abs(ss / sy), 1e-14, 1e14);
        }
        u_prev = u.v;
        rho_prev = rho;

        bool accepted = false;
        double a = alpha;
        for (int bt = 0; bt < 50; ++bt, a *= 0.5) {
            Field trial(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                trial.v[i] = pb.mask[i] ? std::max(0.0, u.v[i] - a * rho[i]) : 0.0;
            if (trial.linf() == 0.0) continue;
            double t1;
            try {
                t1 = detail::ray_maximizer(pb, trial);
            } catch (const ValidationError&) {
                continue;
            }
            for (auto& x : trial.v) x *= t1;
            const double Jt = energy_J(pb, trial);
            if (Jt <= J + 1e-14 * (std::abs(J) + 1.0)) {
                u = std::move(trial);
                J = Jt;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (res <= 1e3 * opts.tol * detail::residual_scale(pb, u)) break;
            throw SolverFailure("superlinear flow stagnated", u.v, res, it);
        }
        if (u.linf() > opts.amplitude_cap)
            throw SolverFailure("superlinear flow diverged; try a smaller lambda or a different init", u.v,
                                res, it);
    }
    if (it >= opts.max_iter) throw SolverFailure("superlinear flow hit max_iter", u.v, res, it);
    if (u.linf() == 0.0) throw SolverFailure("superlinear flow collapsed to zero", u.v, res, it);
    return detail::finish_state(pb, std::move(u), res, it);
}

struct ComparisonReport {
    bool supersolution_ok = false;
    bool subsolution_ok = false;
    bool ordering_ok = false;
    double super_worst = 0.0;   // most negative residual of u (should be >= -tol)
    double sub_worst = 0.0;     // most positive residual of v (should be <= tol)
    double order_worst = 0.0;   // max of (v - u) over the mask (should be <= tol)
    std::size_t order_violations = 0;
};

/// Nodal sign test of the weak residuals (pairing against the canonical basis
/// of the active mask, which spans all nonnegative test fields) followed by
/// the ordering assertion u >= v - tol.
inline ComparisonReport check_comparison(const Field& u, const Field& v, const Problem& pb,
                                         double tol = 1e-8) {
    const Grid& g = pb.grid();
    Field Ru = grad_J(pb, u);
    Field Rv = grad_J(pb, v);
    ComparisonReport rep;
    double super_min = 0.0, sub_max = 0.0, order_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!pb.mask[i]) continue;
        super_min = std::min(super_min, Ru.v[i] / g.cell_volume);
        sub_max = std::max(sub_max, Rv.v[i] / g.cell_volume);
        const double gap = v.v[i] - u.v[i];
        order_max = std::max(order_max, gap);
        if (gap > tol) ++rep.order_violations;
    }
    rep.super_worst = super_min;
    rep.sub_worst = sub_max;
    rep.order_worst = order_max;
    rep.supersolution_ok = super_min >= -tol;
    rep.subsolution_ok = sub_max <= tol;
    rep.ordering_ok = rep.order_violations == 0;
    return rep;
}

struct SweepRow {
    double lambda = 0.0;
    bool solved = false;
    double residual = 0.0;
    double linf = 0.0;
    double l2 = 0.0;
    double energy = 0.0;
    std::vector<double> min_over_masks;
    std::string error;
};

/// Solves the steady problem along a sorted lambda ladder, warm-starting each
/// point from the previous solution, and records compact-set minima.  Per-point
/// failures are recorded and the sweep continues.
inline std::vector<SweepRow> lambda_sweep(const Problem& pb_template, const std::vector<double>& lambdas,
                                          const std::vector<std::vector<std::uint8_t>>& compact_masks,
                                          const DescentOptions& opts = {}) {
    const Grid& g = pb_template.grid();
    std::vector<SweepRow> rows;
    std::optional<Field> warm;
    std::optional<LambdaRange> range;
    if (pb_template.q == pb_template.p() - 1.0) range = lambda_range(*pb_template.op, pb_template.q);
    for (double lam : lambdas) {
        SweepRow row;
        row.lambda = lam;
        try {
            Problem pb = pb_template.with_lambda(lam);
            SteadyState st = (pb.q <= pb.p() - 1.0)
                                 ? solve_subhomogeneous(pb, opts, warm, range)
                                 : solve_superlinear(pb, warm ? *warm : distance_profile(g, pb.mask,
                                                                                         pb.op->params().s),
                                                     opts);
            row.solved = true;
            row.residual = st.residual;
            row.linf = st.field.linf();
            double l2 = 0.0;
            for (double x : st.field.v) l2 += x * x;
            row.l2 = std::sqrt(g.cell_volume * l2);
            row.energy = st.energy;
            for (const auto& m : compact_masks) {
                double mn = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < g.n_nodes; ++i)
                    if (m[i]) mn = std::min(mn, st.field.v[i]);
                row.min_over_masks.push_back(mn);
            }
            if (st.positive_solution) warm = st.field;
        } catch (const std::exception& e) {
            row.error = e.what();
            row.min_over_masks.assign(compact_masks.size(), 0.0);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace fraclogi
