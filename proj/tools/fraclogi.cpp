// fraclogi: experiment runner for the nonlocal logistic lab.
//
// Subcommands: eigen, steady, sweep, evolve, classify, verify, scenario.
// Every run writes a manifest.json (config echo, grid metadata, wall time)
// next to its mode-specific outputs; all floats are serialized with 17
// significant digits and all randomness flows from the single --seed.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fraclogi/config.hpp"
#include "fraclogi/diagnostics.hpp"
#include "fraclogi/eigen.hpp"
#include "fraclogi/elliptic.hpp"
#include "fraclogi/grid.hpp"
#include "fraclogi/io.hpp"
#include "fraclogi/nonlocal.hpp"
#include "fraclogi/parabolic.hpp"
#include "fraclogi/rng.hpp"
#include "fraclogi/scenarios.hpp"
#include "fraclogi/version.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;
constexpr int kExitInconclusive = 4;

using nlohmann::json;
using namespace fraclogi;

struct RunContext {
    std::string mode;
    std::string config_path;
    std::string outdir = "out";
    std::uint64_t seed = 42;
    int threads = 1;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    std::vector<std::string> outputs;

    std::string path(const std::string& name) {
        std::filesystem::create_directories(outdir);
        std::string p = outdir + "/" + name;
        outputs.push_back(p);
        return p;
    }

    void write_manifest(const Config& cfg, const Grid& g) {
        json m;
        m["mode"] = mode;
        m["version"] = kVersion;
        m["seed"] = seed;
        m["threads"] = threads;
        m["config_echo"] = cfg.raw_text();
        m["grid"] = grid_json(g);
        m["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        m["outputs"] = outputs;
        std::filesystem::create_directories(outdir);
        write_json(outdir + "/manifest.json", m);
    }
};

struct Instruments {
    Grid grid;
    NonlocalOperator op;
    Field b;
};

Instruments make_instruments(const CommonSetup& c, int threads) {
    Instruments ins{build_grid(c.grid_spec), {}, {}};
    ins.op = assemble_with_cache(ins.grid, {c.s, c.p}, c.cache_path, threads);
    ins.b = build_absorption(ins.grid, c.b0);
    return ins;
}

Field build_initial(const std::string& spec, double amplitude, const Instruments& ins) {
    const Grid& g = ins.grid;
    Field u0(g);
    if (spec == "profile" || spec == "omega_profile") {
        u0 = distance_profile(g, g.interior_mask, ins.op.params().s);
    } else if (spec == "refuge_profile") {
        u0 = distance_profile(g, g.refuge_mask, ins.op.params().s);
    } else if (spec == "omega_eigenfield" || spec == "refuge_eigenfield") {
        const auto& mask = (spec == "omega_eigenfield") ? g.interior_mask : g.refuge_mask;
        u0 = first_eigen(ins.op, mask).eigenfield;
        const double mx = u0.linf();
        for (auto& x : u0.v) x /= mx;
    } else if (spec.rfind("csv:", 0) == 0) {
        u0 = read_field_csv(spec.substr(4), g);
    } else {
        throw ValidationError("unknown initial-datum spec '" + spec + "'");
    }
    for (auto& x : u0.v) x *= amplitude;
    return u0;
}

json steady_json(const SteadyState& st, double lambda) {
    json j;
    j["lambda"] = lambda;
    j["residual"] = st.residual;
    j["energy_J"] = st.energy;
    j["positivity_floor"] = st.positivity_floor;
    j["positive_solution"] = st.positive_solution;
    j["iterations"] = st.iterations;
    return j;
}

int run_eigen(Config& cfg, RunContext& ctx) {
    CommonSetup c = read_common(cfg, /*need_problem=*/false);
    const std::string domain = cfg.take_string("eigen.domain", "omega");
    std::optional<double> mu;
    if (cfg.has("eigen.mu")) mu = cfg.take_double("eigen.mu");
    double b0 = cfg.take_double("problem.b0", 1.0);
    EigenOptions opts;
    opts.tol = cfg.take_double("eigen.tol", opts.tol);
    opts.max_iter = cfg.take_long("eigen.max_iter", opts.max_iter);
    cfg.reject_unconsumed();

    c.b0 = b0;
    Instruments ins = make_instruments(c, ctx.threads);
    EigenResult res;
    if (mu) {
        res = weighted_eigen(ins.op, ins.b, *mu, opts);
    } else {
        const auto& mask = (domain == "refuge") ? ins.grid.refuge_mask : ins.grid.interior_mask;
        res = first_eigen(ins.op, mask, opts);
    }
    json j;
    j["lambda"] = res.lambda;
    j["iterations"] = res.iterations;
    j["residual"] = res.residual;
    if (mu) j["mu"] = *mu;
    write_json(ctx.path("report.json"), j);
    write_field_csv(ctx.path("eigenfield.csv"), res.eigenfield);
    ctx.write_manifest(cfg, ins.grid);
    std::cout << "lambda = " << fmt17(res.lambda) << " (" << res.iterations << " iterations)\n";
    return 0;
}

int run_steady(Config& cfg, RunContext& ctx) {
    CommonSetup c = read_common(cfg, /*need_problem=*/true);
    const std::string init_spec = cfg.take_string("steady.init", "profile");
    const double init_amp = cfg.take_double("steady.init_amplitude", 1.0);
    cfg.reject_unconsumed();
    if (!c.lambda) throw ValidationError("steady mode needs problem.lambda");

    Instruments ins = make_instruments(c, ctx.threads);
    Problem pb = make_problem(ins.op, ins.b, *c.lambda, c.q, c.r);
    SteadyState st = (c.q <= c.p - 1.0)
                         ? solve_subhomogeneous(pb)
                         : solve_superlinear(pb, build_initial(init_spec, init_amp, ins));
    write_json(ctx.path("report.json"), steady_json(st, *c.lambda));
    write_field_csv(ctx.path("field.csv"), st.field);
    ctx.write_manifest(cfg, ins.grid);
    std::cout << "steady state: sup = " << fmt17(st.field.linf()) << ", residual = " << fmt17(st.residual)
              << (st.positive_solution ? "" : "  [no positive solution]") << "\n";
    return 0;
}

int run_sweep(Config& cfg, RunContext& ctx) {
    CommonSetup c = read_common(cfg, /*need_problem=*/true);
    auto mask_groups = cfg.has("sweep.compact_masks") ? cfg.take_groups("sweep.compact_masks")
                                                      : std::vector<std::vector<double>>{};
    cfg.reject_unconsumed();
    if (c.lambda_list.empty()) throw ValidationError("sweep mode needs problem.lambda_list");

    Instruments ins = make_instruments(c, ctx.threads);
    std::vector<std::vector<std::uint8_t>> masks;
    for (const auto& grp : mask_groups) {
        if (grp.size() != (ins.grid.dim == 1 ? 2u : 4u))
            throw ValidationError("compact mask needs box bounds per axis");
        Box b;
        b.lo[0] = grp[0];
        b.hi[0] = grp[1];
        if (ins.grid.dim == 2) {
            b.lo[1] = grp[2];
            b.hi[1] = grp[3];
        }
        masks.push_back(ins.grid.mask_of_box(b));
    }
    Problem pb = make_problem(ins.op, ins.b, c.lambda_list.front(), c.q, c.r);
    auto rows = lambda_sweep(pb, c.lambda_list, masks);

    const std::string csv = ctx.path("sweep.csv");
    {
        std::ofstream f(csv);
        f << "lambda,residual,linf,l2,J";
        for (std::size_t k = 0; k < masks.size(); ++k) f << ",min_K" << (k + 1);
        f << '\n';
        for (const auto& row : rows) {
            f << fmt17(row.lambda) << ',' << fmt17(row.residual) << ',' << fmt17(row.linf) << ','
              << fmt17(row.l2) << ',' << fmt17(row.energy);
            for (double m : row.min_over_masks) f << ',' << fmt17(m);
            f << '\n';
        }
    }
    json j;
    j["points"] = rows.size();
    int failures = 0;
    for (const auto& row : rows)
        if (!row.solved) ++failures;
    j["failures"] = failures;
    write_json(ctx.path("report.json"), j);
    ctx.write_manifest(cfg, ins.grid);
    std::cout << "sweep: " << rows.size() << " points, " << failures << " failures -> " << csv << "\n";
    return failures == 0 ? 0 : kExitSolver;
}

int run_evolve(Config& cfg, RunContext& ctx) {
    CommonSetup c = read_common(cfg, /*need_problem=*/true);
    SchemeConfig sc;
    sc.dt = cfg.take_double("scheme.dt", 0.0);
    sc.T = cfg.take_double("scheme.T", 1.0);
    sc.R = cfg.take_double("scheme.R", 0.0);
    sc.blowup_cap = cfg.take_double("scheme.blowup_cap", sc.blowup_cap);
    sc.extinction_tol = cfg.take_double("scheme.extinction_tol", sc.extinction_tol);
    sc.snapshot_stride = cfg.take_long("scheme.snapshot_stride", 0);
    const bool restricted = cfg.take_bool("scheme.restricted", false);
    const std::string u0_spec = cfg.take_string("evolve.u0", "profile");
    const double u0_amp = cfg.take_double("evolve.u0_amplitude", 1.0);
    cfg.reject_unconsumed();
    if (!c.lambda) throw ValidationError("evolve mode needs problem.lambda");

    Instruments ins = make_instruments(c, ctx.threads);
    Problem pb = restricted
                     ? make_restricted_problem(ins.op, *c.lambda, c.q, c.r, ins.grid.refuge_mask)
                     : make_problem(ins.op, ins.b, *c.lambda, c.q, c.r);
    Field u0 = build_initial(u0_spec, u0_amp, ins);
    if (restricted) u0 = masked(u0, ins.grid.refuge_mask);

    Trajectory traj = evolve(pb, u0, sc);
    write_series_csv(ctx.path("series.csv"), traj);
    std::filesystem::create_directories(ctx.outdir + "/fields");
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k)
        write_field_csv(ctx.path("fields/snap_" + std::to_string(traj.snapshot_steps[k]) + ".csv"),
                        traj.snapshots[k]);

    json j;
    j["classification"] = to_string(traj.classification);
    if (traj.t_max_estimate) j["t_max_estimate"] = *traj.t_max_estimate;
    json revents = json::array();
    for (const auto& [t, R] : traj.R_events) revents.push_back({{"t", t}, {"R", R}});
    j["R_events"] = revents;
    j["dt_history"] = traj.dt_history;
    j["R_overridden"] = traj.R_overridden;
    j["linf_bound_excess"] = traj.linf_bound_excess;
    j["steps"] = traj.steps();
    write_json(ctx.path("summary.json"), j);
    ctx.write_manifest(cfg, ins.grid);
    std::cout << "evolve: " << traj.steps() << " steps, classified " << to_string(traj.classification)
              << "\n";
    return 0;
}

int run_classify(Config& cfg, RunContext& ctx) {
    CommonSetup c = read_common(cfg, /*need_problem=*/true);
    std::optional<std::string> field_spec, series_path;
    if (cfg.has("classify.initial")) field_spec = cfg.take_string("classify.initial");
    if (cfg.has("classify.trajectory")) series_path = cfg.take_string("classify.trajectory");
    const double amp = cfg.take_double("classify.amplitude", 1.0);
    cfg.reject_unconsumed();
    if (!c.lambda) throw ValidationError("classify mode needs problem.lambda");
    if (!field_spec && !series_path)
        throw ValidationError("classify mode needs classify.initial or classify.trajectory");

    Instruments ins = make_instruments(c, ctx.threads);
    Problem pb = make_problem(ins.op, ins.b, *c.lambda, c.q, c.r);
    json j;
    int exit_code = 0;
    if (field_spec) {
        Field u0 = build_initial(*field_spec, amp, ins);
        WellReport rep = classify_initial(pb, u0);
        j["well"] = {{"E", rep.E},
                     {"I", rep.I},
                     {"m", rep.m},
                     {"S0", rep.S0},
                     {"membership", to_string(rep.membership)}};
        if (std::isfinite(rep.theta)) j["well"]["theta_star"] = rep.theta;
        if (rep.witness) {
            write_field_csv(ctx.path("witness.csv"), *rep.witness);
            j["well"]["witness"] = "witness.csv";
        }
    }
    if (series_path) {
        Trajectory traj = read_series_csv(*series_path);
        traj.classification = Classification::horizon_reached;
        traj.snapshots.push_back(Field(ins.grid));
        TrajectoryVerdict v = classify_trajectory(traj, pb);
        j["trajectory"] = {{"classification", to_string(v.cls)},
                           {"fit_slope", v.fit_slope},
                           {"fit_r2", v.fit_r2},
                           {"detail", v.detail}};
        if (v.t_max) j["trajectory"]["t_max_estimate"] = *v.t_max;
        if (v.cls == Classification::running) exit_code = kExitInconclusive;
    }
    write_json(ctx.path("report.json"), j);
    ctx.write_manifest(cfg, ins.grid);
    std::cout << j.dump(2) << "\n";
    return exit_code;
}

int run_verify(Config& cfg, RunContext& ctx) {
    CommonSetup c;
    if (!ctx.config_path.empty()) {
        c = read_common(cfg, /*need_problem=*/false);
        cfg.reject_unconsumed();
    } else {
        c.grid_spec.omega = Box::interval(-1.0, 1.0);
        c.grid_spec.refuge = Box::interval(-0.4, 0.4);
        c.grid_spec.resolution = 65;
    }
    Instruments ins = make_instruments(c, ctx.threads);
    const Grid& g = ins.grid;
    Rng rng(ctx.seed);

    json checks = json::array();
    int failures = 0;
    auto record = [&](const std::string& name, bool ok, const std::string& detail) {
        checks.push_back({{"name", name}, {"pass", ok}, {"detail", detail}});
        if (!ok) ++failures;
        std::cout << (ok ? "  ok  " : " FAIL ") << name << "  (" << detail << ")\n";
    };

    for (double p : {1.5, 2.0, 3.0}) {
        NonlocalOperator op = assemble(g, {0.5, p});
        double worst = 0.0;
        for (int t = 0; t < 20; ++t) {
            Field u(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i)
                u.v[i] = g.interior_mask[i] ? rng.uniform(0.0, 1.0) : 0.0;
            const double cmul = rng.uniform(0.1, 10.0);
            Field cu(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i) cu.v[i] = cmul * u.v[i];
            Field a = op.apply(cu), bf = op.apply(u);
            double num = 0.0, den = 0.0;
            const double fac = std::pow(cmul, p - 1.0);
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                num = std::max(num, std::abs(a.v[i] - fac * bf.v[i]));
                den = std::max(den, std::abs(fac * bf.v[i]));
            }
            worst = std::max(worst, num / den);
        }
        record("homogeneity p=" + std::to_string(p), worst < 1e-12, "rel err " + fmt17(worst));
    }
    for (double p : {1.5, 2.0, 3.0}) {
        IneqReport rep = check_algebraic_inequalities(p, 100000, ctx.seed);
        record("algebraic inequalities p=" + std::to_string(p), rep.violations == 0,
               std::to_string(rep.violations) + " violations, worst margin " + fmt17(rep.worst_margin));
    }
    {
        NonlocalOperator op = assemble(g, {0.5, 2.0});
        Field b = build_absorption(g, 1.0);
        Problem pb = make_problem(op, b, 1.0, 0.5, 2.0);
        Field u(g);
        for (std::size_t i = 0; i < g.n_nodes; ++i)
            u.v[i] = g.interior_mask[i] ? rng.uniform(0.2, 1.0) : 0.0;
        Field grad = grad_J(pb, u);
        const double h = 1e-6;
        double worst = 0.0;
        for (std::size_t i = 0; i < g.n_nodes; i += 7) {
            if (!g.interior_mask[i]) continue;
            Field up = u, dn = u;
            up.v[i] += h;
            dn.v[i] -= h;
            const double fd = (energy_J(pb, up) - energy_J(pb, dn)) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - grad.v[i]) / std::max(1e-12, std::abs(grad.v[i])));
        }
        record("gradient of J vs finite differences", worst < 1e-6, "rel err " + fmt17(worst));
    }
    {
        NonlocalOperator op = assemble(g, {0.5, 2.5});
        Field b = build_absorption(g, 1.0);
        Problem pb = make_problem(op, b, 1.0, 1.0, 3.0);
        bool ok = true;
        double worst = 0.0;
        for (int t = 0; t < 10; ++t) {
            Field f(g), h(g);
            for (std::size_t i = 0; i < g.n_nodes; ++i) {
                if (!g.interior_mask[i]) continue;
                f.v[i] = rng.uniform(0.0, 2.0);
                h.v[i] = rng.uniform(0.0, 2.0);
            }
            AccretivityReport rep = accretivity_test(pb, f, h, 0.1);
            ok &= rep.contraction_ok;
            worst = std::max(worst, rep.contraction_gap);
        }
        record("resolvent sup-norm contraction", ok, "worst gap " + fmt17(worst));
    }
    json j;
    j["checks"] = checks;
    j["failures"] = failures;
    write_json(ctx.path("report.json"), j);
    ctx.write_manifest(cfg, ins.grid);
    std::cout << (failures == 0 ? "verify: all checks passed\n"
                                : "verify: " + std::to_string(failures) + " check(s) failed\n");
    return failures == 0 ? 0 : kExitSolver;
}

int run_scenario_mode(const std::string& name, RunContext& ctx) {
    std::vector<std::string> names;
    if (name == "all")
        names = scenario_names();
    else
        names.push_back(name);
    json reports = json::array();
    bool all_pass = true;
    for (const auto& n : names) {
        ScenarioReport rep = run_scenario(n, ctx.outdir + "/" + n, ctx.threads);
        std::cout << (rep.pass ? "PASS " : "FAIL ") << rep.name << "\n";
        for (const auto& c : rep.checks) std::cout << "    " << c << "\n";
        json jr;
        jr["name"] = rep.name;
        jr["pass"] = rep.pass;
        jr["checks"] = rep.checks;
        jr["artifacts"] = rep.artifacts;
        reports.push_back(jr);
        all_pass &= rep.pass;
    }
    std::filesystem::create_directories(ctx.outdir);
    write_json(ctx.outdir + "/report.json", reports);
    return all_pass ? 0 : kExitSolver;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fraclogi: nonlocal logistic equation laboratory"};
    app.require_subcommand(1);

    RunContext ctx;
    std::string scenario_name = "all";
    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", ctx.config_path, "experiment configuration file");
        if (need_config) opt->required();
        sub->add_option("--out", ctx.outdir, "output directory");
        sub->add_option("--seed", ctx.seed, "seed of the counter-based generator");
        sub->add_option("--threads", ctx.threads, "worker threads for the operator");
    };
    add_common(app.add_subcommand("eigen", "first or weighted eigenpair"), true);
    add_common(app.add_subcommand("steady", "steady state of the logistic problem"), true);
    add_common(app.add_subcommand("sweep", "steady states along a lambda ladder"), true);
    add_common(app.add_subcommand("evolve", "time evolution by the semi-implicit scheme"), true);
    add_common(app.add_subcommand("classify", "well membership / trajectory classification"), true);
    add_common(app.add_subcommand("verify", "built-in invariant suite"), false);
    auto* scen = app.add_subcommand("scenario", "bundled qualitative-theory scenarios");
    add_common(scen, false);
    scen->add_option("--name", scenario_name, "scenario name or 'all'");

    CLI11_PARSE(app, argc, argv);
    const std::string mode = app.get_subcommands().front()->get_name();
    ctx.mode = mode;

    try {
        Config cfg = ctx.config_path.empty() ? Config::parse_text("") : Config::parse_file(ctx.config_path);
        if (cfg.has("run.mode")) {
            const std::string want = cfg.take_string("run.mode");
            if (want != mode)
                throw ValidationError("config run.mode='" + want + "' does not match subcommand '" +
                                      mode + "'");
        }
        if (cfg.has("run.seed")) ctx.seed = static_cast<std::uint64_t>(cfg.take_long("run.seed"));
        if (cfg.has("run.threads")) ctx.threads = static_cast<int>(cfg.take_long("run.threads"));
        if (cfg.has("run.out")) ctx.outdir = cfg.take_string("run.out");

        if (mode == "eigen") return run_eigen(cfg, ctx);
        if (mode == "steady") return run_steady(cfg, ctx);
        if (mode == "sweep") return run_sweep(cfg, ctx);
        if (mode == "evolve") return run_evolve(cfg, ctx);
        if (mode == "classify") return run_classify(cfg, ctx);
        if (mode == "verify") return run_verify(cfg, ctx);
        if (mode == "scenario") return run_scenario_mode(scenario_name, ctx);
        throw ValidationError("unknown mode " + mode);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const EvolveFailure& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const SolverFailure& e) {
        std::cerr << "solver error: " << e.what() << " (residual " << e.residual << " after "
                  << e.iterations << " iterations)\n";
        return kExitSolver;
    } catch (const StepFailure& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
