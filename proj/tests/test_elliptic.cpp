#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fraclogi/elliptic.hpp"
#include "helpers.hpp"

using namespace fraclogi;
using testutil::grid_1d;
using testutil::rel_err;

namespace {

struct Lab {
    Grid g;
    NonlocalOperator op;
    Field b;
    Lab(int res = 101, double s = 0.5, double p = 2.0)
        : g(grid_1d(res)), op(assemble(g, {s, p})), b(build_absorption(g, 1.0)) {}
};

double l2_gap(const Field& a, const Field& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += sqr(a.v[i] - b.v[i]);
        den += sqr(b.v[i]);
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

} // namespace

TEST_CASE("lambda_range covers the three regimes") {
    Lab lab;
    LambdaRange sub = lambda_range(lab.op, 0.5);
    CHECK(sub.q_class == LambdaRange::QClass::subhomogeneous);
    CHECK(sub.lower == 0.0);
    CHECK(std::isinf(sub.upper));

    LambdaRange hom = lambda_range(lab.op, 1.0);
    CHECK(hom.q_class == LambdaRange::QClass::homogeneous);
    CHECK(hom.lower > 0.0);
    CHECK(hom.lower < hom.upper);

    LambdaRange sup = lambda_range(lab.op, 3.0);
    CHECK(sup.q_class == LambdaRange::QClass::superlinear);
    CHECK(std::isinf(sup.upper));
}

TEST_CASE("problem validation rejects broken absorption and parameters") {
    Lab lab;
    CHECK_THROWS_AS(make_problem(lab.op, lab.b, 1.0, 0.0, 2.0), ValidationError);
    CHECK_THROWS_AS(make_problem(lab.op, lab.b, 1.0, 0.5, 0.9), ValidationError); // r <= p-1
    CHECK_THROWS_AS(make_problem(lab.op, lab.b, -1.0, 0.5, 2.0), ValidationError);
    Field zero_b(lab.g);
    CHECK_THROWS_AS(make_problem(lab.op, zero_b, 1.0, 0.5, 2.0), ValidationError);
    Field broken = lab.b;
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
        if (lab.g.refuge_mask[i]) broken.v[i] = 0.1; // absorption must vanish on the refuge
    CHECK_THROWS_AS(make_problem(lab.op, broken, 1.0, 0.5, 2.0), ValidationError);
}

TEST_CASE("energy and gradient at zero; J(t phi) < 0 for large t in the superlinear regime") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 3.0, 2.0);
    CHECK(energy_J(pb, Field(lab.g)) == 0.0);
    Field gz = grad_J(pb, Field(lab.g));
    for (double x : gz.v) CHECK(x == 0.0);

    Field phi = distance_profile(lab.g, lab.g.refuge_mask, 0.5); // supported in the refuge
    Field tphi(lab.g);
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i) tphi.v[i] = 50.0 * phi.v[i];
    CHECK(energy_J(pb, tphi) < 0.0);
}

TEST_CASE("grad_J matches central finite differences of energy_J") {
    Grid g = grid_1d(15, 0.3);
    NonlocalOperator op = assemble(g, {0.5, 2.5});
    Field b = build_absorption(g, 1.0);
    Problem pb = make_problem(op, b, 1.3, 1.2, 2.0);
    Rng rng(19);
    Field u = testutil::random_interior_field(g, rng, 0.3, 1.2);
    Field grad = grad_J(pb, u);
    const double h = 1e-6;
    for (std::size_t i = 0; i < g.n_nodes; ++i) {
        if (!g.interior_mask[i]) continue;
        Field up = u, dn = u;
        up.v[i] += h;
        dn.v[i] -= h;
        const double fd = (energy_J(pb, up) - energy_J(pb, dn)) / (2.0 * h);
        CHECK(rel_err(fd, grad.v[i]) < 1e-6);
    }
}

TEST_CASE("homogeneous case below the range returns the zero tag") {
    Lab lab;
    LambdaRange lr = lambda_range(lab.op, 1.0);
    Problem pb = make_problem(lab.op, lab.b, 0.9 * lr.lower, 1.0, 2.0);
    SteadyState st = solve_subhomogeneous(pb, {}, std::nullopt, lr);
    CHECK(!st.positive_solution);
    CHECK(st.field.linf() == 0.0);

    // above the range as well (J is unbounded below there)
    Problem pb2 = make_problem(lab.op, lab.b, lr.upper * 1.05, 1.0, 2.0);
    SteadyState st2 = solve_subhomogeneous(pb2, {}, std::nullopt, lr);
    CHECK(!st2.positive_solution);
}

TEST_CASE("homogeneous case inside the range produces a certified positive state") {
    Lab lab;
    LambdaRange lr = lambda_range(lab.op, 1.0);
    Problem pb = make_problem(lab.op, lab.b, 0.5 * (lr.lower + lr.upper), 1.0, 2.0);
    SteadyState st = solve_subhomogeneous(pb, {}, std::nullopt, lr);
    CHECK(st.positive_solution);
    CHECK(st.residual < 1e-6 * detail::residual_scale(pb, st.field));
    CHECK(st.positivity_floor > 0.0);
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
        if (lab.g.interior_mask[i]) CHECK(st.field.v[i] > 0.0);
}

TEST_CASE("steady states are ordered in lambda") {
    Lab lab;
    for (double q : {0.5, 1.0}) {
        LambdaRange lr = lambda_range(lab.op, q);
        double lam_lo, lam_hi;
        if (q == 1.0) {
            lam_lo = lr.lower + 0.35 * (lr.upper - lr.lower);
            lam_hi = lr.lower + 0.6 * (lr.upper - lr.lower);
        } else {
            lam_lo = 0.8;
            lam_hi = 1.6;
        }
        SteadyState lo = solve_subhomogeneous(make_problem(lab.op, lab.b, lam_lo, q, 2.0));
        SteadyState hi = solve_subhomogeneous(make_problem(lab.op, lab.b, lam_hi, q, 2.0));
        REQUIRE(lo.positive_solution);
        REQUIRE(hi.positive_solution);
        for (std::size_t i = 0; i < lab.g.n_nodes; ++i) CHECK(lo.field.v[i] <= hi.field.v[i] + 1e-8);
    }
}

TEST_CASE("uniqueness: two initializations converge to the same state") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    Field small = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    Field big = small;
    for (auto& x : small.v) x *= 0.01;
    for (auto& x : big.v) x *= 50.0;
    SteadyState a = solve_subhomogeneous(pb, {}, small);
    SteadyState b = solve_subhomogeneous(pb, {}, big);
    CHECK(l2_gap(a.field, b.field) < 1e-6);
}

TEST_CASE("restricted subsolution scaling: u_lambda dominates the scaled refuge state") {
    Lab lab;
    const double q = 0.5, p = 2.0;
    // V solves L w = w^q on the refuge (absorption off)
    Problem pbV = make_restricted_problem(lab.op, 1.0, q, 2.0, lab.g.refuge_mask);
    SteadyState V = solve_subhomogeneous(pbV);
    REQUIRE(V.positive_solution);
    for (double lam : {1.0, 4.0}) {
        Problem pb = make_problem(lab.op, lab.b, lam, q, 2.0);
        SteadyState st = solve_subhomogeneous(pb);
        const double scale = std::pow(lam, 1.0 / (p - 1.0 - q));
        for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
            if (lab.g.refuge_mask[i]) CHECK(st.field.v[i] >= scale * V.field.v[i] - 1e-6);
    }
}

TEST_CASE("superlinear solver: certificate, rejection of r >= q, zero init rejected") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 3.0, 2.0);
    Field init = distance_profile(lab.g, lab.g.interior_mask, 0.5);
    SteadyState st = solve_superlinear(pb, init);
    CHECK(st.field.linf() > 0.0);
    CHECK(st.residual < 1e-5);

    Problem bad = make_problem(lab.op, lab.b, 1.0, 1.5, 2.0); // r >= q
    CHECK_THROWS_AS(solve_superlinear(bad, init), ValidationError);

    Field outside(lab.g); // positive only off the refuge
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
        outside.v[i] = (lab.g.interior_mask[i] && !lab.g.refuge_mask[i]) ? 1.0 : 0.0;
    CHECK_THROWS_AS(solve_superlinear(pb, outside), ValidationError);
}

TEST_CASE("superlinear states solve the weak formulation against the nodal basis") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 3.0, 2.0);
    SteadyState st = solve_superlinear(pb, distance_profile(lab.g, lab.g.interior_mask, 0.5));
    Field grad = grad_J(pb, st.field);
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i)
        CHECK(std::abs(grad.v[i]) / lab.g.cell_volume < 1e-4);
}

TEST_CASE("check_comparison: certified state vs zero, ordering pair, eigen subsolution") {
    Lab lab;
    LambdaRange lr = lambda_range(lab.op, 1.0);
    const double lam = lr.lower + 0.55 * (lr.upper - lr.lower);
    Problem pb = make_problem(lab.op, lab.b, lam, 1.0, 2.0);
    SteadyState st = solve_subhomogeneous(pb, {}, std::nullopt, lr);
    REQUIRE(st.positive_solution);

    // residual sign tolerances commensurate with the state's certification,
    // which is relative to the source scale
    const double tol_u = 1e-5 * detail::residual_scale(pb, st.field);
    ComparisonReport triv = check_comparison(st.field, Field(lab.g), pb, tol_u);
    CHECK(triv.supersolution_ok);
    CHECK(triv.subsolution_ok);
    CHECK(triv.ordering_ok);

    const double lam2 = lr.lower + 0.4 * (lr.upper - lr.lower);
    SteadyState st2 = solve_subhomogeneous(pb.with_lambda(lam2), {}, std::nullopt, lr);
    ComparisonReport ord = check_comparison(st.field, st2.field, pb.with_lambda(lam2), tol_u);
    CHECK(ord.subsolution_ok); // the smaller-lambda state is a subsolution at lambda
    CHECK(ord.ordering_ok);

    // scaled weighted eigenfunction as a subsolution for lambda in [lambda_mu, sup)
    const double mu = 10.0;
    EigenResult we = weighted_eigen(lab.op, lab.b, mu);
    const double lam3 = we.lambda + 0.05 * (lr.upper - we.lambda);
    REQUIRE(lam3 < lr.upper - lr.guard);
    SteadyState st3 = solve_subhomogeneous(pb.with_lambda(lam3), {}, std::nullopt, lr);
    REQUIRE(st3.positive_solution);
    Field sub(lab.g);
    const double mx = we.eigenfield.linf();
    const double amp = std::pow(mu, 1.0 / (2.0 - 2.0 + 1.0)); // 1/(r-p+1) with r=2, p=2
    for (std::size_t i = 0; i < lab.g.n_nodes; ++i) sub.v[i] = amp * we.eigenfield.v[i] / mx;
    ComparisonReport eig =
        check_comparison(st3.field, sub, pb.with_lambda(lam3),
                         1e-4 * detail::residual_scale(pb.with_lambda(lam3), st3.field));
    CHECK(eig.subsolution_ok);
    CHECK(eig.ordering_ok);
}

TEST_CASE("lambda_sweep records failures without aborting") {
    Lab lab;
    Problem pb = make_problem(lab.op, lab.b, 1.0, 0.5, 2.0);
    DescentOptions strangled;
    strangled.max_iter = 3;
    auto rows = lambda_sweep(pb, {0.5, 1.0}, {}, strangled);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        CHECK(!row.solved);
        CHECK(!row.error.empty());
    }
}
