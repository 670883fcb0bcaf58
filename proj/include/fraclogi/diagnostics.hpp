#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fraclogi/common.hpp"
#include "fraclogi/eigen.hpp"
#include "fraclogi/elliptic.hpp"
#include "fraclogi/grid.hpp"
#include "fraclogi/parabolic.hpp"

namespace fraclogi {

struct WellEnergies {
    double E = 0.0; // (1/p)||v||^p - lambda/(q+1) ||v||_{q+1}^{q+1}
    double I = 0.0; // ||v||^p - lambda ||v||_{q+1}^{q+1}
};

/// Potential-well functionals of a field supported on `mask`.  The Gagliardo
/// energy of the zero-extension already treats the mask complement as exterior,
/// so no separate restricted assembly is needed.
inline WellEnergies well_energies(const NonlocalOperator& op, const std::vector<std::uint8_t>& mask,
                                  double lambda, double q, const Field& v) {
    if (!is_supported_on(v, mask)) throw ValidationError("well_energies: field not supported on mask");
    const Grid& g = op.grid();
    const double gag = op.gagliardo_energy(v);
    double mass = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) mass += std::pow(std::abs(v.v[i]), q + 1.0);
    mass *= g.cell_volume * lambda;
    WellEnergies we;
    we.E = gag / op.params().p - mass / (q + 1.0);
    we.I = gag - mass;
    return we;
}

/// The ray scaling that zeroes the Nehari functional:
///   theta* = ( ||v||^p / (lambda ||v||_{q+1}^{q+1}) )^{1/(q+1-p)},
/// the maximizer of E along the ray through v.
inline double theta_star(const NonlocalOperator& op, const std::vector<std::uint8_t>& mask, double lambda,
                         double q, const Field& v) {
    if (!(q > op.params().p - 1.0)) throw ValidationError("theta_star requires q > p-1");
    const Grid& g = op.grid();
    if (!is_supported_on(v, mask)) throw ValidationError("theta_star: field not supported on mask");
    const double A = op.gagliardo_energy(v);
    double B = 0.0;
    for (std::size_t i = 0; i < g.n_nodes; ++i) B += std::pow(std::abs(v.v[i]), q + 1.0);
    B *= g.cell_volume * lambda;
    if (!(B > 0.0)) throw ValidationError("theta_star of the zero field");
    return std::pow(A / B, 1.0 / (q + 1.0 - op.params().p));
}

struct MountainLevel {
    double m = 0.0;
    double S0 = 0.0;
    long iterations = 0;
    double residual = 0.0;
};

/// Mountain-pass level of the b-free energy on `mask`:
///   m = (1/p - 1/(q+1)) lambda^{-p/(q+1-p)} S0^{(q+1)/(q+1-p)},
/// with S0 the Sobolev-type quotient inf ||v||^p / ||v||_{q+1}^p.
inline MountainLevel mountain_level(const NonlocalOperator& op, const std::vector<std::uint8_t>& mask,
                                    double lambda, double q, const EigenOptions& opts = {}) {
    const double p = op.params().p;
    if (!(q > p - 1.0)) throw ValidationError("mountain_level requires q > p-1");
    EigenResult s0 = sobolev_quotient(op, mask, q, opts);
    MountainLevel ml;
    ml.S0 = s0.lambda;
    ml.iterations = s0.iterations;
    ml.residual = s0.residual;
    const double e = q + 1.0 - p;
    ml.m = (1.0 / p - 1.0 / (q + 1.0)) * std::pow(lambda, -p / e) * std::pow(ml.S0, (q + 1.0) / e);
    return ml;
}

enum class Membership { in_H, in_Hu, in_Hs, none_established };

inline const char* to_string(Membership m) {
    switch (m) {
        case Membership::in_H: return "in_H";
        case Membership::in_Hu: return "in_Hu";
        case Membership::in_Hs: return "in_Hs";
        case Membership::none_established: return "none_established";
    }
    return "?";
}

struct WellReport {
    double E = 0.0;          // refuge-restricted energies of the initial datum
    double I = 0.0;
    double theta = std::numeric_limits<double>::quiet_NaN(); // theta* of u0 on its mask
    double m = 0.0;          // mountain level of the refuge
    double S0 = 0.0;
    Membership membership = Membership::none_established;
    std::optional<Field> witness;
};

struct ClassifyOptions {
    int theta_points = 32; // log grid resolution of the witness ray search
    EigenOptions eigen;
};

/// Witness search against the membership sets:
///   in_H : some 0 <= w <= u0 supported on the refuge with E_refuge(w) < 0
///   in_Hu: some such w with E_refuge(w) < m_refuge and I_refuge(w) < 0
///   in_Hs: some dominating theta*phi_omega >= u0 with E_omega < m_omega, I_omega > 0
/// The families searched are rays through the first eigenfields (the classical
/// witness construction); a none_established verdict does not prove
/// non-membership.
inline WellReport classify_initial(const Problem& pb, const Field& u0, const ClassifyOptions& opts = {}) {
    const Grid& g = pb.grid();
    const NonlocalOperator& op = *pb.op;
    const double p = pb.p();
    WellReport rep;

    Field u0_refuge = masked(u0, g.refuge_mask);
    {
        WellEnergies we = well_energies(op, g.refuge_mask, pb.lambda, pb.q, u0_refuge);
        rep.E = we.E;
        rep.I = we.I;
    }
    if (!(pb.q > p - 1.0)) return rep; // membership sets are defined for q > p-1 only

    MountainLevel ml = mountain_level(op, g.refuge_mask, pb.lambda, pb.q, opts.eigen);
    rep.m = ml.m;
    rep.S0 = ml.S0;
    if (u0.linf() > 0.0 && pb.mask == g.interior_mask) {
        Field u0m = masked(u0, pb.mask);
        if (u0m.linf() > 0.0) {
            try {
                rep.theta = theta_star(op, pb.mask, pb.lambda, pb.q, u0m);
            } catch (const ValidationError&) {
            }
        }
    }
    if (u0.linf() == 0.0) return rep; // zero datum: no nontrivial witness exists

    EigenResult phi0 = first_eigen(op, g.refuge_mask, opts.eigen);
    Field phi = phi0.eigenfield;
    {
        const double mx = phi.linf();
        for (auto& x : phi.v) x /= mx;
    }

    const double amp = u0.linf();
    bool found_H = false, found_Hu = false;
    Field witness_H, witness_Hu;
    for (int k = 0; k < opts.theta_points; ++k) {
        const double theta = amp * std::pow(10.0, -4.0 + 8.0 * k / (opts.theta_points - 1.0));
        Field w(g);
        double mx = 0.0;
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            w.v[i] = g.refuge_mask[i] ? std::min(u0.v[i], theta * phi.v[i]) : 0.0;
            mx = std::max(mx, w.v[i]);
        }
        if (mx == 0.0) continue;
        WellEnergies we = well_energies(op, g.refuge_mask, pb.lambda, pb.q, w);
        if (!found_H && we.E < 0.0) {
            found_H = true;
            witness_H = w;
        }
        if (!found_Hu && we.E < ml.m && we.I < 0.0) {
            found_Hu = true;
            witness_Hu = w;
        }
    }
    if (found_H) {
        rep.membership = Membership::in_H;
        rep.witness = std::move(witness_H);
        return rep;
    }
    if (found_Hu) {
        rep.membership = Membership::in_Hu;
        rep.witness = std::move(witness_Hu);
        return rep;
    }

    // stable side: dominating multiples of the whole-domain eigenfield
    EigenResult phiOm = first_eigen(op, g.interior_mask, opts.eigen);
    Field phio = phiOm.eigenfield;
    {
        const double mx = phio.linf();
        for (auto& x : phio.v) x /= mx;
    }
    double theta_min = 0.0;
    bool dominable = true;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (u0.v[i] <= 0.0) continue;
        if (phio.v[i] <= 0.0) {
            dominable = false;
            break;
        }
        theta_min = std::max(theta_min, u0.v[i] / phio.v[i]);
    }
    if (dominable && theta_min > 0.0) {
        MountainLevel mlo = mountain_level(op, g.interior_mask, pb.lambda, pb.q, opts.eigen);
        const double theta_up = theta_star(op, g.interior_mask, pb.lambda, pb.q, phio);
        for (int k = 0; k < opts.theta_points; ++k) {
            const double theta =
                theta_min * std::pow(std::max(theta_up / theta_min, 1.0 + 1e-12),
                                     static_cast<double>(k) / (opts.theta_points - 1.0) * 0.999);
            if (theta < theta_min) continue;
            Field w(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                w.v[i] = g.interior_mask[i] ? theta * phio.v[i] : 0.0;
            WellEnergies we = well_energies(op, g.interior_mask, pb.lambda, pb.q, w);
            if (we.E < mlo.m && we.I > 0.0) {
                rep.membership = Membership::in_Hs;
                rep.witness = std::move(w);
                return rep;
            }
        }
    }
    return rep;
}

struct TrajectoryVerdict {
    Classification cls = Classification::running;
    std::optional<double> t_max;
    double fit_slope = 0.0;
    double fit_r2 = 0.0;
    double terminal_rel_gap = std::numeric_limits<double>::quiet_NaN();
    std::string detail;
};

struct TrajectoryClassifyOptions {
    double r2_min = 0.9;
    double stabilized_gap = 1e-2;  // terminal relative L^2 distance to the target
    double growth_factor = 10.0;   // l2_refuge^2 growth declaring infinite-time blow-up
    double extinct_drop = 1e-2;    // terminal/initial sup-norm ratio declaring extinction
};

/// Post-hoc classification of a recorded trajectory with fitted evidence:
/// blow-up runs are matched against Y' >= c Y^gamma with gamma = (q+1)/2 via the
/// linear decay of Y^{1-gamma}; stabilization is measured as the terminal
/// relative L^2 distance to a supplied steady state.
inline TrajectoryVerdict classify_trajectory(const Trajectory& traj, const Problem& pb,
                                             const std::optional<Field>& steady_target = std::nullopt,
                                             const TrajectoryClassifyOptions& opts = {}) {
    TrajectoryVerdict out;
    if (traj.times.size() < 2) {
        out.detail = "series too short";
        return out;
    }
    std::vector<double> Y(traj.l2_refuge.size());
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = sqr(traj.l2_refuge[i]);

    const bool capped = traj.classification == Classification::blowup_finite ||
                        traj.classification == Classification::blowup_infinite ||
                        traj.classification == Classification::blowup_suspected;
    if (capped) {
        if (pb.q > 1.0) {
            BlowupFit fit = fit_blowup_series(traj.times, Y, 0.5 * (pb.q + 1.0));
            out.fit_slope = fit.slope;
            out.fit_r2 = fit.r2;
            if (fit.valid && fit.r2 >= opts.r2_min) {
                out.cls = Classification::blowup_finite;
                out.t_max = fit.t_max;
                out.detail = "Y^{1-gamma} decays linearly to zero";
            } else {
                out.cls = Classification::blowup_suspected;
                out.detail = "cap crossed but the blow-up fit is inconclusive";
            }
        } else {
            // q <= 1 cannot blow up in finite time; cap crossing is fast growth
            std::vector<double> logy;
            std::vector<double> tt;
            for (std::size_t i = 0; i < Y.size(); ++i)
                if (Y[i] > 0.0) {
                    logy.push_back(std::log(Y[i]));
                    tt.push_back(traj.times[i]);
                }
            if (tt.size() >= 3) {
                auto [a, slope, r2] = detail::line_fit(tt, logy);
                (void)a;
                out.fit_slope = slope;
                out.fit_r2 = r2;
            }
            out.cls = Classification::blowup_infinite;
            out.detail = "cap crossed with q <= 1";
        }
        return out;
    }

    const double u_end = traj.linf.back();
    const double u_start = traj.linf.front();
    if (u_end < std::max(opts.extinct_drop * u_start, 1e-14)) {
        bool tail_decreasing = true;
        const std::size_t n = traj.linf.size();
        for (std::size_t i = n - std::min<std::size_t>(n - 1, 5); i < n; ++i)
            tail_decreasing &= (traj.linf[i] <= traj.linf[i - 1] * (1.0 + 1e-9));
        if (tail_decreasing) {
            out.cls = Classification::extinct;
            out.detail = "sup norm decayed below the extinction ratio";
            return out;
        }
    }

    if (steady_target) {
        const Grid& g = pb.grid();
        double num = 0.0, den = 0.0;
        const Field& last = traj.snapshots.back();
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            num += sqr(last.v[i] - steady_target->v[i]);
            den += sqr(steady_target->v[i]);
        }
        out.terminal_rel_gap = std::sqrt(num / std::max(den, kTiny));
        if (out.terminal_rel_gap < opts.stabilized_gap) {
            out.cls = Classification::stabilized;
            out.detail = "terminal state matches the steady solution";
            return out;
        }
    }

    if (Y.back() > opts.growth_factor * std::max(Y.front(), kTiny)) {
        std::vector<double> logy, tt;
        for (std::size_t i = 0; i < Y.size(); ++i)
            if (Y[i] > 0.0) {
                logy.push_back(std::log(Y[i]));
                tt.push_back(traj.times[i]);
            }
        auto [a, slope, r2] = detail::line_fit(tt, logy);
        (void)a;
        out.fit_slope = slope;
        out.fit_r2 = r2;
        if (slope > 0.0) {
            out.cls = Classification::blowup_infinite;
            out.detail = "sustained refuge-norm growth over the horizon";
            return out;
        }
    }

    if (traj.classification == Classification::stabilized) {
        out.cls = Classification::stabilized;
        out.detail = "near-stationary at the horizon";
        return out;
    }
    out.cls = Classification::running;
    out.detail = "inconclusive";
    return out;
}

} // namespace fraclogi
