#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fraclogi/common.hpp"
#include "fraclogi/elliptic.hpp"
#include "fraclogi/grid.hpp"

namespace fraclogi {

struct SchemeConfig {
    double dt = 0.0;            // 0 = auto: min(0.01, T_star/100)
    double T = 1.0;
    double R = 0.0;             // 0 = auto from the horizon policy
    bool allow_R_doubling = true;
    double blowup_cap = 1e6;
    double extinction_tol = 1e-10;
    long snapshot_stride = 0;   // 0 = initial and final only
    bool stop_on_stabilized = false;
    double stabilized_tol = 1e-8; // relative L^2 increment per unit time
    double inner_tol = 1e-12;
    long inner_max_iter = 50000;
    int max_dt_halvings = 6;
};

struct HorizonPolicy {
    double T_star = std::numeric_limits<double>::infinity();
    std::optional<double> R;
};

/// Guaranteed single-launch horizon of the truncated scheme, from the bound
/// ||u||_inf <= ||u0||_inf + lambda T R^q < R:
///   q < 1 : any horizon reachable (R grows to absorb it); T* = infinity
///   q = 1 : T* = 1/lambda
///   q > 1 : T* = max_R (R - ||u0||)/(lambda R^q), attained at R = q ||u0|| / (q-1)
inline HorizonPolicy horizon_policy(const Problem& pb, const Field& u0,
                                    std::optional<double> requested_T = std::nullopt) {
    const double M = u0.linf();
    const double lam = pb.lambda;
    const double q = pb.q;
    HorizonPolicy hp;
    if (M == 0.0) {
        hp.T_star = std::numeric_limits<double>::infinity();
        hp.R = 1.0;
        return hp;
    }
    if (q < 1.0) {
        hp.T_star = std::numeric_limits<double>::infinity();
        if (requested_T) {
            double R = std::max(2.0 * M, 1.0);
            const double margin = 0.1 * std::max(M, 1.0);
            while (R - lam * (*requested_T) * std::pow(R, q) - M < margin) {
                R *= 2.0;
                if (R > 1e30) throw ValidationError("horizon_policy: no admissible truncation level");
            }
            hp.R = R;
        }
    } else if (q == 1.0) {
        hp.T_star = 1.0 / lam;
        if (requested_T && *requested_T < hp.T_star) hp.R = 2.0 * M / (1.0 - lam * (*requested_T));
    } else {
        const double R = q * M / (q - 1.0);
        hp.T_star = (R - M) / (lam * std::pow(R, q));
        hp.R = R;
    }
    return hp;
}

/// Thrown when a time step cannot be completed (inner-solver stagnation or a
/// negativity beyond tolerance, which signals a scheme violation).
struct StepFailure : std::runtime_error {
    explicit StepFailure(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

/// Per-step convex objective
///   F(v) = (1/2) sum V (v-g)^2 + dt [ (1/p)||v||^p + sum V b |v|^{r+1}/(r+1) ]
/// whose minimizer solves  (v - g)/dt + L v + b phi_{r+1}(v) = 0.
inline double step_objective(const Problem& pb, const Field& gfield, double dt, const Field& v) {
    const Grid& g = pb.grid();
    const double V = g.cell_volume;
    double quad = 0.0, absorb = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        quad += sqr(v.v[i] - gfield.v[i]);
        absorb += pb.b.v[i] * std::pow(std::abs(v.v[i]), pb.r + 1.0);
    }
    return 0.5 * V * quad + dt * (pb.op->gagliardo_energy(v) / pb.p() + V * absorb / (pb.r + 1.0));
}

/// Minimizes the step objective; this is the resolvent v = (I + dt A)^{-1} g of
/// the operator A v = L v + b phi_{r+1}(v).  Strict convexity makes any point
/// with a small gradient the minimizer.
inline Field resolvent_solve(const Problem& pb, const Field& gfield, double dt, double tol, long max_iter) {
    const Grid& g = pb.grid();
    Field v = masked(gfield, pb.mask);
    double F = step_objective(pb, gfield, dt, v);

    std::vector<double> rho(g.n_nodes, 0.0), rho_prev, v_prev;
    double gl2 = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) gl2 += sqr(gfield.v[i]);
    const double scale = 1.0 + std::sqrt(g.cell_volume * gl2);
    double alpha = 1.0;
    long it = 0;
    for (; it < max_iter; ++it) {
        Field Lv = pb.op->apply(v, pb.mask);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            if (!pb.mask[i]) {
                rho[i] = 0.0;
                continue;
            }
            rho[i] = (v.v[i] - gfield.v[i]) + dt * (Lv.v[i] + pb.b.v[i] * signed_pow(v.v[i], pb.r + 1.0));
            acc += sqr(rho[i]);
        }
        const double res = std::sqrt(g.cell_volume * acc);
        if (res <= tol * scale) break;

        if (!v_prev.empty()) {
            double ss = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                const double s = v.v[i] - v_prev[i];
                ss += s * s;
                sy += s * (rho[i] - rho_prev[i]);
            }
            if (sy > 0.0 && ss > 0.0) alpha = std::clamp(ss / sy, 1e-14, 1e14);
        }
        v_prev = v.v;
        rho_prev = rho;

        bool accepted = false;
        double a = alpha;
        for (int bt = 0; bt < 60; ++bt, a *= 0.5) {
            Field trial(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                trial.v[i] = pb.mask[i] ? v.v[i] - a * rho[i] : 0.0;
            const double Ft = step_objective(pb, gfield, dt, trial);
            if (Ft <= F + 1e-14 * (std::abs(F) + kTiny)) {
                v = std::move(trial);
                F = Ft;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (res <= 1e3 * tol * scale) break; // rounding floor of the objective
            throw StepFailure("inner solver stagnated at residual " + std::to_string(res));
        }
    }
    if (it >= max_iter) throw StepFailure("inner solver hit max_iter");
    return v;
}

} // namespace detail

/// One semi-implicit step: solves
///   (u_n - u_prev)/dt + L u_n + b u_n^r = lambda min(R, u_prev)^q
/// as a strictly convex minimization.  Nodal values in [-tol, 0) are clamped to
/// zero; anything more negative aborts the run (the scheme preserves
/// nonnegativity, so a real violation means the step is broken, not the data).
inline Field implicit_step(const Problem& pb, const Field& u_prev, double dt, double R,
                           const SchemeConfig& cfg = {}) {
    const Grid& g = pb.grid();
    if (!(dt > 0.0) || !(R > 0.0)) throw ValidationError("implicit_step needs dt > 0 and R > 0");
    Field gfield(g);
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!pb.mask[i]) continue;
        const double up = u_prev.v[i];
        if (up < 0.0) throw ValidationError("implicit_step: negative input state");
        gfield.v[i] = up + dt * pb.lambda * std::pow(std::min(R, up), pb.q);
    }
    Field u = detail::resolvent_solve(pb, gfield, dt, cfg.inner_tol, cfg.inner_max_iter);

    const double neg_tol = 1e-9 * std::max(1.0, gfield.linf());
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (u.v[i] < -neg_tol)
            throw StepFailure("implicit step produced negativity beyond tolerance at node " +
                              std::to_string(i));
        if (u.v[i] < 0.0) u.v[i] = 0.0;
    }
    return u;
}

enum class Classification {
    running,
    stabilized,
    blowup_finite,
    blowup_infinite,
    blowup_suspected,
    extinct,
    horizon_reached
};

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::running: return "running";
        case Classification::stabilized: return "stabilized";
        case Classification::blowup_finite: return "blowup_finite";
        case Classification::blowup_infinite: return "blowup_infinite";
        case Classification::blowup_suspected: return "blowup_suspected";
        case Classification::extinct: return "extinct";
        case Classification::horizon_reached: return "horizon_reached";
    }
    return "?";
}

/// Time series of one run.  `series_*[n]` is recorded after step n (index 0 is
/// the initial state); dE_defect[0] = 0.
struct Trajectory {
    std::vector<double> times;
    std::vector<double> linf, l2_omega, l2_refuge;
    std::vector<double> energy, energy_refuge, nehari_refuge;
    std::vector<double> increment_l2; // ||u_n - u_{n-1}||_{L^2}
    std::vector<double> de_defect;    // E_n - E_{n-1} + increment^2/dt
    std::vector<double> dt_used;
    std::vector<std::uint8_t> truncation_active;
    std::vector<Field> snapshots;
    std::vector<long> snapshot_steps;
    std::vector<std::pair<double, double>> R_events; // (time, new R)
    std::vector<double> dt_history;
    Classification classification = Classification::running;
    std::optional<double> t_max_estimate;
    double linf_bound_excess = 0.0; // worst violation of the stepwise L^inf bound
    bool R_overridden = false;

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

struct EvolveFailure : std::runtime_error {
    Trajectory partial;
    EvolveFailure(const std::string& what, Trajectory t) : std::runtime_error(what), partial(std::move(t)) {}
};

namespace detail {

inline double masked_l2(const Grid& g, const std::vector<double>& v, const std::vector<std::uint8_t>& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (m[i]) acc += v[i] * v[i];
    return std::sqrt(g.cell_volume * acc);
}

/// E and I of the refuge restriction (coincides with the restricted-problem
/// energies when the state is supported on the refuge).
inline void refuge_energies(const Problem& pb, const Field& u, double& E, double& I) {
    const Grid& g = pb.grid();
    Field ur = masked(u, g.refuge_mask);
    const double gag = pb.op->gagliardo_energy(ur);
    double mass = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        if (g.refuge_mask[i]) mass += std::pow(std::abs(ur.v[i]), pb.q + 1.0);
    mass *= g.cell_volume * pb.lambda;
    E = gag / pb.p() - mass / (pb.q + 1.0);
    I = gag - mass;
}

/// Least-squares line fit; returns {intercept, slope, R^2}.
inline std::array<double, 3> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return {0.0, 0.0, 0.0};
    const double slope = (n * sxy - sx * sy) / den;
    const double icept = (sy - slope * sx) / n;
    double ss_res = 0.0, ss_tot = 0.0;
    const double ybar = sy / n;
    for (std::size_t i = 0; i < n; ++i) {
        ss_res += sqr(y[i] - (icept + slope * x[i]));
        ss_tot += sqr(y[i] - ybar);
    }
    const double r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 0.0;
    return {icept, slope, r2};
}

} // namespace detail

struct BlowupFit {
    bool valid = false;
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double t_max = 0.0;
};

/// Fits Z = Y^{1-gamma} against a + b t on the trailing monotone quarter of the
/// series; a blow-up obeying Y' >= c Y^gamma has Z decaying linearly to zero,
/// and the fitted root estimates the blow-up time.
inline BlowupFit fit_blowup_series(const std::vector<double>& times, const std::vector<double>& Y,
                                   double gamma) {
    BlowupFit fit;
    if (times.size() < 5 || gamma <= 1.0) return fit;
    // trailing window where Y is positive and nondecreasing
    std::size_t end = Y.size();
    std::size_t start = end - 1;
    while (start > 0 && Y[start - 1] > 0.0 && Y[start - 1] <= Y[start]) --start;
    const std::size_t span = end - start;
    if (span < 5) return fit;
    std::size_t w0 = end - std::max<std::size_t>(5, span / 4);
    std::vector<double> t, z;
    for (std::size_t i = w0; i < end; ++i) {
        t.push_back(times[i]);
        z.push_back(std::pow(Y[i], 1.0 - gamma));
    }
    auto [a, bslope, r2] = detail::line_fit(t, z);
    fit.intercept = a;
    fit.slope = bslope;
    fit.r2 = r2;
    if (bslope < 0.0) {
        fit.t_max = -a / bslope;
        fit.valid = r2 > 0.9 && fit.t_max > 0.0;
    }
    return fit;
}

/// Runs the truncated semi-implicit scheme.  The truncation level doubles
/// whenever the state reaches R/2 (each doubling is recorded), so exploratory
/// runs can pass the guaranteed horizon; the per-step L^inf bound
/// ||u_n|| <= ||u_{n-1}|| + dt lambda R^q is audited throughout.
inline Trajectory evolve(const Problem& pb, const Field& u0, const SchemeConfig& cfg) {
    const Grid& g = pb.grid();
    if (!is_supported_on(u0, pb.mask)) throw ValidationError("evolve: u0 not supported on the active mask");
    for (double x : u0.v)
        if (x < 0.0) throw ValidationError("evolve: u0 must be nonnegative");
    if (!(cfg.blowup_cap > u0.linf())) throw ValidationError("evolve: blowup_cap must exceed ||u0||_inf");
    if (!(cfg.T > 0.0)) throw ValidationError("evolve: horizon must be positive");

    HorizonPolicy hp = horizon_policy(pb, u0, cfg.T);
    double R = cfg.R > 0.0 ? cfg.R : std::max(hp.R.value_or(0.0), std::max(2.0 * u0.linf(), 1.0));
    double dt = cfg.dt > 0.0 ? cfg.dt
                             : std::min(0.01, std::isfinite(hp.T_star) ? hp.T_star / 100.0
                                                                       : std::numeric_limits<double>::infinity());
    if (!(dt > 0.0)) dt = 0.01;
    dt = std::min(dt, cfg.T);

    Trajectory traj;
    traj.R_overridden = cfg.R > 0.0;
    traj.dt_history.push_back(dt);

    Field u = u0;
    auto record = [&](double t, const Field& state, double inc, double dt_step, bool trunc) {
        traj.times.push_back(t);
        traj.linf.push_back(state.linf());
        traj.l2_omega.push_back(detail::masked_l2(g, state.v, g.interior_mask));
        traj.l2_refuge.push_back(detail::masked_l2(g, state.v, g.refuge_mask));
        traj.energy.push_back(energy_J(pb, state));
        double Er = 0.0, Ir = 0.0;
        detail::refuge_energies(pb, state, Er, Ir);
        traj.energy_refuge.push_back(Er);
        traj.nehari_refuge.push_back(Ir);
        traj.increment_l2.push_back(inc);
        traj.dt_used.push_back(dt_step);
        traj.truncation_active.push_back(trunc ? 1 : 0);
        if (traj.energy.size() >= 2 && dt_step > 0.0) {
            const auto n = traj.energy.size() - 1;
            traj.de_defect.push_back(traj.energy[n] - traj.energy[n - 1] + inc * inc / dt_step);
        } else {
            traj.de_defect.push_back(0.0);
        }
    };
    record(0.0, u, 0.0, 0.0, false);
    traj.snapshots.push_back(u);
    traj.snapshot_steps.push_back(0);

    double t = 0.0;
    long n = 0;
    long stable_streak = 0;
    int halvings = 0;
    while (t < cfg.T - 1e-12 * cfg.T) {
        while (cfg.allow_R_doubling && u.linf() > 0.5 * R) {
            R *= 2.0;
            traj.R_events.emplace_back(t, R);
        }
        const double step_dt = std::min(dt, cfg.T - t);
        Field next(g);
        try {
            next = implicit_step(pb, u, step_dt, R, cfg);
        } catch (const StepFailure& e) {
            if (halvings < cfg.max_dt_halvings) {
                ++halvings;
                dt *= 0.5;
                traj.dt_history.push_back(dt);
                continue;
            }
            traj.classification = Classification::running;
            throw EvolveFailure(std::string("evolve aborted: ") + e.what(), std::move(traj));
        }
        ++n;
        t += step_dt;

        double inc = 0.0;
        bool trunc_active = false;
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            inc += sqr(next.v[i] - u.v[i]);
            trunc_active |= (pb.mask[i] && u.v[i] > R);
        }
        inc = std::sqrt(g.cell_volume * inc);

        const double bound = traj.linf.back() + step_dt * pb.lambda * std::pow(R, pb.q);
        traj.linf_bound_excess = std::max(traj.linf_bound_excess, next.linf() - bound);

        u = std::move(next);
        record(t, u, inc, step_dt, trunc_active);
        if (cfg.snapshot_stride > 0 && n % cfg.snapshot_stride == 0) {
            traj.snapshots.push_back(u);
            traj.snapshot_steps.push_back(n);
        }

        if (u.linf() > cfg.blowup_cap) {
            if (pb.q > 1.0) {
                std::vector<double> Y(traj.l2_refuge.size());
                for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = sqr(traj.l2_refuge[i]);
                BlowupFit fit = fit_blowup_series(traj.times, Y, 0.5 * (pb.q + 1.0));
                traj.classification = fit.valid ? Classification::blowup_finite
                                                : Classification::blowup_suspected;
                if (fit.valid) traj.t_max_estimate = fit.t_max;
            } else {
                traj.classification = Classification::blowup_infinite;
            }
            break;
        }
        if (u.linf() < cfg.extinction_tol) {
            traj.classification = Classification::extinct;
            break;
        }
        const double rel_rate = inc / (step_dt * std::max(traj.l2_omega.back(), kTiny));
        stable_streak = (rel_rate < cfg.stabilized_tol) ? stable_streak + 1 : 0;
        if (cfg.stop_on_stabilized && stable_streak >= 10) {
            traj.classification = Classification::stabilized;
            break;
        }
    }

    if (traj.classification == Classification::running) {
        // horizon reached: label near-stationary states
        traj.classification = (stable_streak >= 10) ? Classification::stabilized
                                                    : Classification::horizon_reached;
    }
    if (traj.snapshot_steps.back() != n) {
        traj.snapshots.push_back(u);
        traj.snapshot_steps.push_back(n);
    }
    return traj;
}

struct AccretivityReport {
    bool contraction_ok = false;
    bool comparison_ok = true; // only meaningful when f <= g nodewise
    bool inputs_ordered = false;
    double contraction_gap = 0.0; // ||u-v||_inf - ||f-g||_inf
    double order_worst = 0.0;
};

/// Solves u + delta A u = f and v + delta A v = g (growth source off) and
/// checks the sup-norm contraction of the resolvent; for ordered data it also
/// checks that order is preserved.
inline AccretivityReport accretivity_test(const Problem& pb, const Field& f, const Field& gfield,
                                          double delta, double tol = 1e-8) {
    if (!(delta > 0.0)) throw ValidationError("accretivity_test: delta must be positive");
    SchemeConfig cfg;
    Field u = detail::resolvent_solve(pb, masked(f, pb.mask), delta, cfg.inner_tol, cfg.inner_max_iter);
    Field v = detail::resolvent_solve(pb, masked(gfield, pb.mask), delta, cfg.inner_tol, cfg.inner_max_iter);

    AccretivityReport rep;
    double duv = 0.0, dfg = 0.0;
    bool ordered = true;
    double order_worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < u.size(); ++i) {
        duv = std::max(duv, std::abs(u.v[i] - v.v[i]));
        dfg = std::max(dfg, std::abs(f.v[i] - gfield.v[i]));
        if (pb.mask[i]) {
            ordered &= (f.v[i] <= gfield.v[i]);
            order_worst = std::max(order_worst, u.v[i] - v.v[i]);
        }
    }
    rep.contraction_gap = duv - dfg;
    rep.contraction_ok = rep.contraction_gap <= tol;
    rep.inputs_ordered = ordered;
    rep.order_worst = order_worst;
    if (ordered) rep.comparison_ok = order_worst <= tol;
    return rep;
}

struct EnergyAuditReport {
    double max_defect = 0.0;          // max per-step defect rate |D_n| / dt_n
    double max_defect_abs = 0.0;      // max raw |D_n|
    double max_increase = 0.0;        // max positive energy jump after truncation deactivates
    bool nonincreasing_after_trunc = true;
    long first_untruncated_step = 0;
};

/// Per-step energy balance of a recorded trajectory:
///   D_n = E(u_n) - E(u_{n-1}) + dt ||(u_n - u_{n-1})/dt||_{L^2}^2.
/// The headline figure is the defect rate |D_n|/dt_n, the density at which the
/// discrete flow violates the exact energy identity; it shrinks linearly with
/// dt (the raw per-step defect shrinks quadratically).  Once the truncation is
/// inactive the scheme dissipates E up to rounding, so E must be
/// non-increasing from that point on.
inline EnergyAuditReport energy_audit(const Trajectory& traj, const Problem&) {
    EnergyAuditReport rep;
    const std::size_t n = traj.energy.size();
    std::size_t first_ok = 1;
    for (std::size_t k = 1; k < n; ++k)
        if (traj.truncation_active[k]) first_ok = k + 1;
    rep.first_untruncated_step = static_cast<long>(first_ok);
    for (std::size_t k = 1; k < n; ++k) {
        const double d = std::abs(traj.de_defect[k]);
        rep.max_defect_abs = std::max(rep.max_defect_abs, d);
        if (traj.dt_used[k] > 0.0) rep.max_defect = std::max(rep.max_defect, d / traj.dt_used[k]);
        if (k >= first_ok) {
            const double jump = traj.energy[k] - traj.energy[k - 1];
            rep.max_increase = std::max(rep.max_increase, jump);
        }
    }
    const double scale = 1.0 + std::abs(traj.energy.empty() ? 0.0 : traj.energy.front());
    rep.nonincreasing_after_trunc = rep.max_increase <= 1e-12 * scale;
    return rep;
}

} // namespace fraclogi
