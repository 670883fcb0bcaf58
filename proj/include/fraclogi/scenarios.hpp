#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fraclogi/diagnostics.hpp"
#include "fraclogi/elliptic.hpp"
#include "fraclogi/io.hpp"
#include "fraclogi/parabolic.hpp"

namespace fraclogi {

struct ScenarioReport {
    std::string name;
    bool pass = true;
    std::vector<std::string> checks;    // "ok: ..." / "FAIL: ..." lines
    std::vector<std::string> artifacts; // files written (when an outdir is given)

    void check(bool ok, const std::string& what) {
        checks.push_back((ok ? "ok: " : "FAIL: ") + what);
        pass &= ok;
    }
};

namespace scenario_detail {

struct Bench {
    Grid grid;
    NonlocalOperator op;
    Field b;
};

/// Desk-scale 1d bench shared by the bundled scenarios.
inline Bench make_bench(int threads = 1) {
    GridSpec spec;
    spec.dimension = 1;
    spec.omega = Box::interval(-1.0, 1.0);
    spec.refuge = Box::interval(-0.4, 0.4);
    spec.resolution = 201;
    Bench bench{build_grid(spec), {}, {}};
    bench.op = assemble(bench.grid, {0.5, 2.0}, threads);
    bench.b = build_absorption(bench.grid, 1.0);
    return bench;
}

inline double rel_l2_gap(const Field& a, const Field& target) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += sqr(a.v[i] - target.v[i]);
        den += sqr(target.v[i]);
    }
    return std::sqrt(num / std::max(den, kTiny));
}

inline Field unit_sup(Field f) {
    const double mx = f.linf();
    if (mx > 0.0)
        for (auto& x : f.v) x /= mx;
    return f;
}

inline void emit_series(ScenarioReport& rep, const std::string& outdir, const std::string& name,
                        const Trajectory& traj) {
    if (outdir.empty()) return;
    std::filesystem::create_directories(outdir);
    const std::string path = outdir + "/" + name;
    write_series_csv(path, traj);
    rep.artifacts.push_back(path);
}

inline void emit_field(ScenarioReport& rep, const std::string& outdir, const std::string& name,
                       const Field& f) {
    if (outdir.empty()) return;
    std::filesystem::create_directories(outdir);
    const std::string path = outdir + "/" + name;
    write_field_csv(path, f);
    rep.artifacts.push_back(path);
}

inline std::string num(double x) {
    std::ostringstream ss;
    ss << x;
    return ss.str();
}

} // namespace scenario_detail

/// q < p-1 relaxation toward the steady state: the trajectory started from a
/// boundary-compatible bump must land on the elliptic solution.
inline ScenarioReport scenario_stabilization(const std::string& outdir = "", int threads = 1) {
    using namespace scenario_detail;
    ScenarioReport rep;
    rep.name = "stabilization";
    Bench bench = make_bench(threads);
    Problem pb = make_problem(bench.op, bench.b, 1.0, 0.5, 2.0);

    SteadyState st = solve_subhomogeneous(pb);
    rep.check(st.positive_solution && st.residual < 1e-6,
              "steady state certified, residual " + num(st.residual));

    Field u0 = distance_profile(bench.grid, bench.grid.interior_mask, 0.5);
    SchemeConfig cfg;
    cfg.T = 50.0;
    cfg.dt = 0.01;
    Trajectory traj = evolve(pb, u0, cfg);
    const double gap = rel_l2_gap(traj.snapshots.back(), st.field);
    rep.check(gap < 1e-3, "terminal relative L2 gap to the steady state = " + num(gap) + " < 1e-3");
    rep.check(traj.linf_bound_excess <= 1e-10,
              "stepwise sup-norm bound excess " + num(traj.linf_bound_excess));

    TrajectoryVerdict verdict = classify_trajectory(traj, pb, st.field);
    rep.check(verdict.cls == Classification::stabilized,
              std::string("classified ") + to_string(verdict.cls));

    emit_series(rep, outdir, "stabilization_series.csv", traj);
    emit_field(rep, outdir, "stabilization_steady.csv", st.field);
    return rep;
}

/// q = p-1 with lambda above the refuge eigenvalue: the refuge L2 norm grows
/// without bound (infinite-time blow-up).
inline ScenarioReport scenario_blowup_eigen(const std::string& outdir = "", int threads = 1) {
    using namespace scenario_detail;
    ScenarioReport rep;
    rep.name = "blowup_eigen";
    Bench bench = make_bench(threads);

    EigenResult e0 = first_eigen(bench.op, bench.grid.refuge_mask);
    const double lambda = 1.5 * e0.lambda;
    Problem pb = make_problem(bench.op, bench.b, lambda, 1.0, 2.0);

    Field u0 = unit_sup(e0.eigenfield);
    for (auto& x : u0.v) x *= 0.5;

    // the hypothesis u0 >= c d(., refuge^c)^s holds with the reported c
    Field prof = distance_profile(bench.grid, bench.grid.refuge_mask, 0.5);
    double c = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < u0.size(); ++i)
        if (bench.grid.refuge_mask[i] && prof.v[i] > 0.0) c = std::min(c, u0.v[i] / prof.v[i]);
    rep.check(c > 0.0, "initial datum dominates " + num(c) + " * d^s on the refuge");

    SchemeConfig cfg;
    cfg.T = 0.8;
    Trajectory traj = evolve(pb, u0, cfg);
    bool monotone = true;
    for (std::size_t k = 1; k < traj.l2_refuge.size(); ++k)
        monotone &= traj.l2_refuge[k] >= traj.l2_refuge[k - 1] * (1.0 - 1e-12);
    rep.check(monotone, "refuge L2 norm is nondecreasing at every step");
    const double growth = traj.l2_refuge.back() / traj.l2_refuge.front();
    rep.check(growth > 10.0, "refuge L2 growth factor " + num(growth) + " > 10");

    TrajectoryVerdict verdict = classify_trajectory(traj, pb);
    rep.check(verdict.cls == Classification::blowup_infinite,
              std::string("classified ") + to_string(verdict.cls));

    emit_series(rep, outdir, "blowup_eigen_series.csv", traj);
    return rep;
}

/// Potential-well dichotomy at q > 1: initial data below the well blow up in
/// finite time (with the Y' >= c Y^gamma signature), small data vanish.
inline ScenarioReport scenario_sattinger(const std::string& outdir = "", int threads = 1) {
    using namespace scenario_detail;
    ScenarioReport rep;
    rep.name = "sattinger";
    Bench bench = make_bench(threads);
    const double q = 3.0, r = 2.0, lambda = 1.0;
    Problem pb = make_problem(bench.op, bench.b, lambda, q, r);

    EigenResult e0 = first_eigen(bench.op, bench.grid.refuge_mask);
    Field phi0 = unit_sup(e0.eigenfield);

    // ray scaling with E_refuge = 0, then push 50% beyond it
    const double A = bench.op.gagliardo_energy(phi0);
    double B = 0.0;
    for (std::size_t i = 0; i < phi0.size(); ++i) B += std::pow(std::abs(phi0.v[i]), q + 1.0);
    B *= bench.grid.cell_volume * lambda;
    const double p = 2.0;
    const double theta_zero = std::pow((q + 1.0) * A / (p * B), 1.0 / (q + 1.0 - p));
    Field u0(bench.grid);
    for (std::size_t i = 0; i < u0.size(); ++i) u0.v[i] = 1.5 * theta_zero * phi0.v[i];

    WellReport wr = classify_initial(pb, u0);
    rep.check(wr.membership == Membership::in_H,
              std::string("unstable datum classified ") + to_string(wr.membership));
    rep.check(wr.E < 0.0 && wr.I < 0.0,
              "unstable datum has E = " + num(wr.E) + " < 0 and I = " + num(wr.I) + " < 0");

    const double M = u0.linf();
    SchemeConfig cfg;
    cfg.T = 2.0 / (lambda * M * M);
    Trajectory traj = evolve(pb, u0, cfg);
    std::vector<double> Y(traj.l2_refuge.size());
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = sqr(traj.l2_refuge[i]);
    BlowupFit fit = fit_blowup_series(traj.times, Y, 0.5 * (q + 1.0));
    rep.check(traj.classification == Classification::blowup_finite,
              std::string("full run classified ") + to_string(traj.classification));
    rep.check(fit.r2 > 0.95, "Y^{1-gamma} linear fit R^2 = " + num(fit.r2) + " > 0.95");
    if (traj.t_max_estimate)
        rep.checks.push_back("info: estimated blow-up time " + num(*traj.t_max_estimate));

    // restricted flow on the refuge: the unstable set is invariant
    Problem pb0 = make_restricted_problem(bench.op, lambda, q, r, bench.grid.refuge_mask);
    Trajectory traj0 = evolve(pb0, u0, cfg);
    bool invariant = true, e_monotone = true;
    for (std::size_t k = 0; k < traj0.energy_refuge.size(); ++k) {
        invariant &= (traj0.energy_refuge[k] < wr.m) && (traj0.nehari_refuge[k] < 0.0);
        if (k > 0)
            e_monotone &= traj0.energy_refuge[k] <=
                          traj0.energy_refuge[k - 1] + 1e-12 * (1.0 + std::abs(traj0.energy_refuge[0]));
    }
    rep.check(invariant, "restricted run stays in the unstable set (E < m, I < 0) at every step");
    rep.check(e_monotone, "restricted run has non-increasing well energy");

    // stable branch: small data under a stable-set dominator vanish
    EigenResult eo = first_eigen(bench.op, bench.grid.interior_mask);
    Field u0s = unit_sup(eo.eigenfield);
    for (auto& x : u0s.v) x *= 0.005;
    WellReport ws = classify_initial(pb, u0s);
    rep.check(ws.membership == Membership::in_Hs,
              std::string("stable datum classified ") + to_string(ws.membership));
    SchemeConfig cfg_s;
    cfg_s.T = 2.0;
    cfg_s.dt = 0.01;
    Trajectory traj_s = evolve(pb, u0s, cfg_s);
    const double drop = traj_s.linf.back() / traj_s.linf.front();
    rep.check(drop < 1e-2, "stable run terminal/initial sup ratio " + num(drop) + " < 1e-2");

    emit_series(rep, outdir, "sattinger_unstable_series.csv", traj);
    emit_series(rep, outdir, "sattinger_restricted_series.csv", traj0);
    emit_series(rep, outdir, "sattinger_stable_series.csv", traj_s);
    return rep;
}

/// q = p-1 sweep toward the refuge eigenvalue: steady states blow up uniformly
/// on compact subsets of both the refuge and its complement in omega.
inline ScenarioReport scenario_sweep_blowup(const std::string& outdir = "", int threads = 1) {
    using namespace scenario_detail;
    ScenarioReport rep;
    rep.name = "sweep_blowup";
    Bench bench = make_bench(threads);
    Problem pb = make_problem(bench.op, bench.b, 1.0, 1.0, 2.0);

    LambdaRange lr = lambda_range(bench.op, 1.0);
    rep.check(lr.lower < lr.upper, "admissible interval (" + num(lr.lower) + ", " + num(lr.upper) + ")");
    const double gap = lr.upper - lr.lower;
    std::vector<double> lambdas;
    for (double f : {0.5, 0.3, 0.18, 0.12}) lambdas.push_back(lr.upper - f * gap);

    std::vector<std::vector<std::uint8_t>> masks;
    masks.push_back(bench.grid.mask_of_box(Box::interval(-0.2, 0.2))); // compact inside the refuge
    masks.push_back(bench.grid.mask_of_box(Box::interval(0.6, 0.9)));  // compact outside the refuge
    auto rows = lambda_sweep(pb, lambdas, masks);

    bool all_solved = true, monotone = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        all_solved &= rows[k].solved;
        if (k > 0 && rows[k].solved && rows[k - 1].solved)
            for (std::size_t mi = 0; mi < masks.size(); ++mi)
                monotone &= rows[k].min_over_masks[mi] >= rows[k - 1].min_over_masks[mi] * (1.0 - 1e-9);
    }
    rep.check(all_solved, "every ladder point solved");
    rep.check(monotone, "compact-set minima increase monotonically along the ladder");
    if (all_solved) {
        const double g1 = rows.back().min_over_masks[0] / rows.front().min_over_masks[0];
        const double g2 = rows.back().min_over_masks[1] / rows.front().min_over_masks[1];
        rep.check(g1 >= 5.0, "refuge compact minimum grew " + num(g1) + "x >= 5x");
        rep.check(g2 >= 5.0, "outside-refuge compact minimum grew " + num(g2) + "x >= 5x");
    }

    if (!outdir.empty()) {
        std::filesystem::create_directories(outdir);
        const std::string path = outdir + "/sweep_blowup.csv";
        std::ofstream f(path);
        f << "lambda,residual,linf,l2,J,min_K1,min_K2\n";
        for (const auto& row : rows) {
            f << fmt17(row.lambda) << ',' << fmt17(row.residual) << ',' << fmt17(row.linf) << ','
              << fmt17(row.l2) << ',' << fmt17(row.energy);
            for (double m : row.min_over_masks) f << ',' << fmt17(m);
            f << '\n';
        }
        rep.artifacts.push_back(path);
    }
    return rep;
}

/// lambda descending to the bottom of the admissible range: steady states
/// vanish uniformly.
inline ScenarioReport scenario_vanish(const std::string& outdir = "", int threads = 1) {
    using namespace scenario_detail;
    ScenarioReport rep;
    rep.name = "vanish";
    Bench bench = make_bench(threads);
    Problem pb = make_problem(bench.op, bench.b, 1.0, 0.5, 2.0); // q < p-1: inf of the range is 0

    std::vector<double> lambdas{0.5, 0.2, 0.1, 0.05, 0.02, 0.01};
    auto rows = lambda_sweep(pb, lambdas, {});
    bool all_solved = true, decreasing = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        all_solved &= rows[k].solved;
        if (k > 0) decreasing &= rows[k].linf <= rows[k - 1].linf * (1.0 + 1e-9);
    }
    rep.check(all_solved, "every ladder point solved");
    rep.check(decreasing, "sup norm decreases along the descending ladder");
    rep.check(rows.back().linf < 1e-2,
              "terminal sup norm " + num(rows.back().linf) + " < 1e-2 at lambda = " +
                  num(rows.back().lambda));

    if (!outdir.empty()) {
        std::filesystem::create_directories(outdir);
        const std::string path = outdir + "/vanish.csv";
        std::ofstream f(path);
        f << "lambda,residual,linf,l2,J\n";
        for (const auto& row : rows)
            f << fmt17(row.lambda) << ',' << fmt17(row.residual) << ',' << fmt17(row.linf) << ','
              << fmt17(row.l2) << ',' << fmt17(row.energy) << '\n';
        rep.artifacts.push_back(path);
    }
    return rep;
}

/// Superlinear branch continued toward lambda = 0: amplitudes grow without
/// bound while every iterate stays residual-certified.
inline ScenarioReport scenario_superlinear_lambda0(const std::string& outdir = "", int threads = 1) {
    using namespace scenario_detail;
    ScenarioReport rep;
    rep.name = "superlinear_lambda0";
    Bench bench = make_bench(threads);
    const std::vector<double> lambdas{1.0, 0.5, 0.25, 0.125};

    std::optional<Field> warm;
    std::vector<double> sups;
    bool all_certified = true;
    for (double lam : lambdas) {
        Problem pb = make_problem(bench.op, bench.b, lam, 3.0, 2.0);
        Field init = warm ? *warm : distance_profile(bench.grid, bench.grid.interior_mask, 0.5);
        DescentOptions opts;
        opts.tol = 1e-7;
        SteadyState st = solve_superlinear(pb, init, opts);
        all_certified &= st.residual < 1e-5;
        sups.push_back(st.field.linf());
        warm = st.field;
        if (!outdir.empty()) emit_field(rep, outdir, "superlinear_lambda_" + num(lam) + ".csv", st.field);
    }
    rep.check(all_certified, "every branch point certified below residual 1e-5");
    bool increasing = true;
    for (std::size_t k = 1; k < sups.size(); ++k) increasing &= sups[k] > sups[k - 1];
    rep.check(increasing, "sup norms strictly increase as lambda decreases: " + num(sups.front()) +
                              " -> " + num(sups.back()));
    return rep;
}

inline ScenarioReport run_scenario(const std::string& name, const std::string& outdir = "",
                                   int threads = 1) {
    if (name == "stabilization") return scenario_stabilization(outdir, threads);
    if (name == "blowup_eigen") return scenario_blowup_eigen(outdir, threads);
    if (name == "sattinger") return scenario_sattinger(outdir, threads);
    if (name == "sweep_blowup") return scenario_sweep_blowup(outdir, threads);
    if (name == "vanish") return scenario_vanish(outdir, threads);
    if (name == "superlinear_lambda0") return scenario_superlinear_lambda0(outdir, threads);
    throw ValidationError("unknown scenario '" + name + "'");
}

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"stabilization", "blowup_eigen",        "sattinger",
                                                "sweep_blowup",  "vanish", "superlinear_lambda0"};
    return names;
}

} // namespace fraclogi
