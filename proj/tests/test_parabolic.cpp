#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fraclogi/parabolic.hpp"
#include "helpers.hpp"

using namespace fraclogi;
using testutil::grid_1d;
using testutil::rel_err;

namespace {

struct Lab {
    Grid g;
    NonlocalOperator op;
    Field b;
    Lab(int res = 101) : g(grid_1d(res)), op(assemble(g, {0.5, 2.0})), b(build_absorption(g, 1.0)) {}
};

double l2(const Field& u) {
    double acc = 0.0;
    for (double x : u.v) acc += x * x;
    return std::sqrt(u.grid->cell_volume * acc);
}

} // namespace

TEST_CASE("horizon policy: the three regimes, exact where closed-form") {
    Lab lab;
    Field one(lab.g);
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i) one.v[i] = lab.g.interior_mask[i] ? 1.0 : 0.0;

    Problem sub = make_problem(lab.op, lab.b, 2.0, 0.5, 2.0);
    HorizonPolicy hp = horizon_policy(sub, one, 10.0);
    CHECK(std::isinf(hp.T_star));
    REQUIRE(hp.R.has_value());
    CHECK(*hp.R - 2.0 * 10.0 * std::sqrt(*hp.R) - 1.0 > 0.0); // R - lambda T R^q > ||u0||

    Problem lin = make_problem(lab.op, lab.b, 2.0, 1.0, 2.0);
    CHECK(horizon_policy(lin, one).T_star == 0.5);

    Problem sup = make_problem(lab.op, lab.b, 1.0, 2.0, 1.5);
    HorizonPolicy hp2 = horizon_policy(sup, one);
    CHECK(hp2.T_star == 0.25);
    CHECK(*hp2.R == 2.0);

    Field zero(lab.g);
    CHECK(std::isinf(horizon_policy(sup, zero).T_star));
}

TEST_CASE("implicit step: zero stays zero, optimality certificate, sup bound") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.5, 0.5, 2.0);
    Field zero(lab.g);
    Field z1 = implicit_step(pb, zero, 0.01, 1.0);
    for (double x : z1.v) CHECK(x == 0.0);

    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    const double dt = 0.02, R = 4.0;
    Field u1 = implicit_step(pb, u0, dt, R);

    // gradient of the step objective vanishes at the solution
    Field gfield(lab.g);
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
        if (pb.mask[i])
            gfield.v[i] = u0.v[i] + dt * pb.lambda * std::pow(std::min(R, u0.v[i]), pb.q);
    Field Lv = lab.op.apply(u1, pb.mask);
    double resid = 0.0;
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i) {
        if (!pb.mask[i]) continue;
        const double rho =
            (u1.v[i] - gfield.v[i]) + dt * (Lv.v[i] + pb.b.v[i] * signed_pow(u1.v[i], pb.r + 1.0));
        resid = std::max(resid, std::abs(rho));
    }
    CHECK(resid < 1e-10);

    CHECK(u1.linf() <= u0.linf() + dt * pb.lambda * std::pow(R, pb.q) + 1e-12);

    // strict convexity probe of the step objective around the solution
    Rng rng(31);
    const double F0 = detail::step_objective(pb, gfield, dt, u1);
    for (int t = 0; t < 5; ++t) {
        Field dir = testutil::random_interior_field(lab.g, rng, -1.0, 1.0);
        const double eps = 1e-3;
        Field up = u1, dn = u1;
        for (std::size_t i = 0; i < lab.g.n_nodes; ++i) {
            up.v[i] += eps * dir.v[i];
            dn.v[i] -= eps * dir.v[i];
        }
        CHECK(detail::step_objective(pb, gfield, dt, up) + detail::step_objective(pb, gfield, dt, dn) -
                  2.0 * F0 >
              0.0);
    }
}

TEST_CASE("evolve preserves nonnegativity and the telescoped sup bound") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    SchemeConfig cfg;
    cfg.T = 0.5;
    cfg.dt = 0.01;
    cfg.snapshot_stride = 10;
    Trajectory traj = evolve(pb, u0, cfg);
    for (const auto& snap : traj.snapshots)
        for (double x : snap.v) CHECK(x >= 0.0);
    CHECK(traj.linf_bound_excess <= 1e-10);
    CHECK(traj.times.back() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(traj.snapshots.size() >= 5);
}

TEST_CASE("fixed point: evolve from the steady state drifts below 1e-6 over many steps") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    SteadyState st = solve_subhomogeneous(pb);
    REQUIRE(st.positive_solution);
    SchemeConfig cfg;
    cfg.T = 2.0;
    cfg.dt = 0.01; // 200 steps
    Trajectory traj = evolve(pb, st.field, cfg);
    double num = 0.0, den = 0.0;
    const Field& last = traj.snapshots.back();
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i) {
        num += sqr(last.v[i] - st.field.v[i]);
        den += sqr(st.field.v[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("comparison: ordered initial data stay ordered along the flow") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.2, 1.0, 2.0);
    Field lo = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    Field hi = lo;
    for (auto& x : hi.v) x *= 1.3;
    SchemeConfig cfg;
    cfg.T = 0.3;
    cfg.dt = 0.01;
    cfg.snapshot_stride = 1;
    Trajectory tlo = evolve(pb, lo, cfg);
    Trajectory thi = evolve(pb, hi, cfg);
    REQUIRE(tlo.snapshots.size() == thi.snapshots.size());
    for (std::size_t k = 0; k < tlo.snapshots.size(); ++k)
        for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
            CHECK(tlo.snapshots[k].v[i] <= thi.snapshots[k].v[i] + 1e-9);
}

TEST_CASE("monotone subsolution start: snapshots are nodewise nondecreasing") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    SteadyState st = solve_subhomogeneous(pb);
    Field u0 = st.field;
    for (auto& x : u0.v) x *= 0.05; // small multiple of the steady state is a subsolution (q < p-1)
    SchemeConfig cfg;
    cfg.T = 0.5;
    cfg.dt = 0.01;
    cfg.snapshot_stride = 5;
    Trajectory traj = evolve(pb, u0, cfg);
    for (std::size_t k = 1; k < traj.snapshots.size(); ++k)
        for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
            CHECK(traj.snapshots[k].v[i] >= traj.snapshots[k - 1].v[i] - 1e-10);
}

TEST_CASE("determinism: identical runs produce identical series") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.3, 1.0, 2.0);
    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    SchemeConfig cfg;
    cfg.T = 0.2;
    cfg.dt = 0.005;
    Trajectory a = evolve(pb, u0, cfg);
    Trajectory b = evolve(pb, u0, cfg);
    CHECK(a.linf == b.linf);
    CHECK(a.energy == b.energy);
    CHECK(a.snapshots.back().v == b.snapshots.back().v);
}

TEST_CASE("accretivity: equal data, ordered data, random pairs") {
    Grid g = grid_1d(61);
    NonlocalOperator op = assemble(g, {0.5, 2.5});
    Field b = build_absorption(g, 1.0);
    Problem pb = make_problem(op, b, 1.0, 1.0, 3.0);
    Rng rng(37);

    Field f = testutil::random_interior_field(g, rng, 0.0, 2.0);
    AccretivityReport eq = accretivity_test(pb, f, f, 0.1);
    CHECK(eq.contraction_ok);
    CHECK(eq.contraction_gap <= 0.0);

    Field gfield = f;
    for (std::size_t i = 0; i < g.n_nodes; ++i)
        if (g.interior_mask[i]) gfield.v[i] += rng.uniform(0.0, 0.5);
    AccretivityReport ord = accretivity_test(pb, f, gfield, 0.1);
    CHECK(ord.inputs_ordered);
    CHECK(ord.comparison_ok);

    for (int t = 0; t < 10; ++t) {
        Field a = testutil::random_interior_field(g, rng, -1.0, 2.0);
        Field c = testutil::random_interior_field(g, rng, -1.0, 2.0);
        AccretivityReport rep = accretivity_test(pb, a, c, 0.1, 1e-8);
        CHECK(rep.contraction_ok);
    }
}

TEST_CASE("energy audit: stationary start flat, generic run dissipates, defect is first order") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    SteadyState st = solve_subhomogeneous(pb);

    SchemeConfig cfg;
    cfg.T = 0.5;
    cfg.dt = 0.01;
    Trajectory stat = evolve(pb, st.field, cfg);
    EnergyAuditReport srep = energy_audit(stat, pb);
    CHECK(srep.max_defect < 1e-6);
    for (std::size_t k = 1; k < stat.energy.size(); ++k)
        CHECK(std::abs(stat.energy[k] - stat.energy[0]) < 1e-6 * (1.0 + std::abs(stat.energy[0])));

    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    Trajectory coarse = evolve(pb, u0, cfg);
    EnergyAuditReport crep = energy_audit(coarse, pb);
    CHECK(crep.nonincreasing_after_trunc);

    SchemeConfig cfg2 = cfg;
    cfg2.dt = 0.005;
    Trajectory fine = evolve(pb, u0, cfg2);
    EnergyAuditReport frep = energy_audit(fine, pb);
    const double ratio = crep.max_defect / frep.max_defect;
    CHECK(ratio > 1.5);
    CHECK(ratio < 2.5);
}

TEST_CASE("truncation kept active by a fixed small R still satisfies the bound") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 2.0, 1.0, 2.0);
    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    SchemeConfig cfg;
    cfg.T = 0.3;
    cfg.dt = 0.01;
    cfg.R = 0.25 * u0.linf(); // genuinely truncating
    cfg.allow_R_doubling = false;
    Trajectory traj = evolve(pb, u0, cfg);
    bool truncated_somewhere = false;
    for (auto t : traj.truncation_active) truncated_somewhere |= (t != 0);
    CHECK(truncated_somewhere);
    CHECK(traj.linf_bound_excess <= 1e-10);
    CHECK(traj.R_overridden);
}

TEST_CASE("Gronwall-style determinism with q >= 1: same data, same trajectory") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.5, 1.5, 2.0);
    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    SchemeConfig a;
    a.T = 0.1;
    a.dt = 0.005;
    SchemeConfig b = a;
    b.inner_tol = 1e-13; // tighter inner solve must land on the same trajectory
    Trajectory ta = evolve(pb, u0, a);
    Trajectory tb = evolve(pb, u0, b);
    REQUIRE(ta.times.size() == tb.times.size());
    for (std::size_t k = 0; k < ta.linf.size(); ++k)
        CHECK(ta.linf[k] == doctest::Approx(tb.linf[k]).epsilon(1e-8));
}

TEST_CASE("blowup fit: synthetic exact profile recovers the blow-up time") {
    std::vector<double> times, Y;
    const double T0 = 2.0, gamma = 2.0;
    for (double t = 0.0; t < T0 * 0.999; t += 0.002) {
        times.push_back(t);
        Y.push_back(std::pow(1.0 - t / T0, -2.0 / (gamma - 1.0)));
        if (Y.back() > 1e12) break;
    }
    BlowupFit fit = fit_blowup_series(times, Y, gamma);
    CHECK(fit.valid);
    CHECK(std::abs(fit.t_max - T0) / T0 < 0.05);
}

TEST_CASE("negativity beyond tolerance aborts instead of clamping") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    Field bad = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    for (auto& x : bad.v) x = -x;
    CHECK_THROWS(implicit_step(pb, bad, 0.01, 1.0));
}

TEST_CASE("inner-solver exhaustion propagates with the partial trajectory attached") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    Field u0 = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    SchemeConfig cfg;
    cfg.T = 0.1;
    cfg.dt = 0.01;
    cfg.inner_max_iter = 1; // starve the convex solver
    try {
        evolve(pb, u0, cfg);
        FAIL("expected EvolveFailure");
    } catch (const EvolveFailure& e) {
        CHECK(!e.partial.times.empty());
        CHECK(e.partial.dt_history.size() == 7); // initial dt plus six halvings
    }
}
