// edflow: batch front end for spectra, flow runs and the validation suites.
//
// Exit codes: 0 success, 1 a validation check failed, 2 solver convergence
// failure, 3 precondition rejection, 4 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edflow/config.hpp"
#include "edflow/edflow.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace edflow;

namespace {

enum Exit { ok = 0, check_failed = 1, no_convergence = 2, rejected = 3, bad_config = 4 };

struct Context {
    RunConfig cfg;
    bool from_file = false;
};

// Defaults for the validation suites when no file is given: a small grid and a
// fixed generic conformal factor whose cluster near 0.88 is simple.
Context load(const std::string& path, bool validation_defaults) {
    Context ctx;
    if (!path.empty()) {
        ctx.cfg = load_config(path);
        ctx.from_file = true;
    } else if (validation_defaults) {
        ctx.cfg.grid_n = 6;
        ctx.cfg.initial_terms = "1; 0.3 cos(1,0,0); 0.2 cos(0,1,1)";
    }
    return ctx;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string csv_number(double v) { return format_double(v); }

json exponents_json(const ExponentTable& e) {
    return {{"m", e.m}, {"p1", e.p1}, {"p2", e.p2}, {"p3", e.p3}, {"p4", e.p4},
            {"p5", e.p5}, {"p6", e.p6}, {"p7", e.p7}, {"c_m", e.c_m}};
}

json formulas_json() {
    return {
        {"pencil", "D psi = lambda u^{p1} psi, symmetrized as C = u^{-p1/2} D u^{-p1/2}"},
        {"weighted_product", "(psi, phi)_2^u = Re int u^{p1} (psi, phi) dvol"},
        {"flow", "d_t u = -u^{-p4} [L u - (int u L u / int u^{p1} |psi|^2) |psi|^2 u^{p2}]"},
        {"eta", "eta_u = -(4/(m-2)) [u^{-p3} L u - E |psi_u|^2 u^{-p7}], d_t u = ((m-2)/4) eta_u u"},
        {"lambda_dot", "lambda' = -p1 lambda int u^{p1-1} u' |psi|^2 dvol"},
        {"psi_dot", "psi' = (lambda'/(2 lambda)) psi + p1 lambda (u^{-p1} D - lambda)^{-1} (I - P)(u^{-1} u' psi)"},
        {"volume", "Vol = int u^{p5} dvol"},
        {"energy", "E = int u L u dvol, L = -c_m Delta + scal"},
        {"stationarity", "L u - (E / int u^{p1}|psi|^2) |psi|^2 u^{p2}"},
        {"action", "Phi = int [u L u + Re(D psi, psi) - lambda u^{p1} |psi|^2] dvol"}};
}

FlowConfig flow_config(const RunConfig& c) {
    FlowConfig f;
    f.dt = c.flow_dt;
    f.cfl = c.flow_cfl;
    f.projection_period = c.flow_projection_period;
    f.projection_count = c.eigen_count;
    f.gap_tol = c.eigen_gap_tol;
    f.horizon = c.flow_horizon;
    f.scheme = c.flow_scheme == "imex" ? FlowScheme::imex : FlowScheme::rk4;
    f.perturbation.gap_tol = c.eigen_gap_tol;
    f.eigen.seed = c.seed;
    return f;
}

json check(const std::string& name, double value, double lo, double hi, bool& all) {
    const bool pass = value >= lo && value <= hi;
    all = all && pass;
    return {{"name", name}, {"value", value}, {"min", lo}, {"max", hi}, {"pass", pass}};
}

json check_below(const std::string& name, double value, double limit, bool& all) {
    const bool pass = std::abs(value) <= limit;
    all = all && pass;
    return {{"name", name}, {"value", value}, {"limit", limit}, {"pass", pass}};
}

int emit_report(const RunConfig& cfg, const std::string& file, json report, bool all) {
    report["pass"] = all;
    const std::string text = report.dump(2) + "\n";
    fs::create_directories(cfg.output_dir);
    write_text(fs::path(cfg.output_dir) / file, text);
    std::cout << text;
    return all ? ok : check_failed;
}

// ---------------------------------------------------------------------------

int cmd_spectrum(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const ScalarField u = initial_field(c);
    const SpinStructure spin(c.spin_shift);
    EigenSolverOptions eo;
    eo.seed = c.seed;
    const SpectrumWindow w = solve_window(u, spin, c.eigen_target, c.eigen_count, eo);

    json clusters = json::array();
    std::ostringstream csv;
    csv << "index,lambda,cluster,multiplicity\n";
    for (std::size_t ci = 0; ci < w.clusters.size(); ++ci) {
        const Cluster& cl = w.clusters[ci];
        const bool edge = ci == 0 || ci + 1 == w.clusters.size();
        std::optional<double> gap_next;
        if (ci + 1 < w.clusters.size()) gap_next = w.pairs[w.clusters[ci + 1].first].lambda - w.pairs[cl.first + cl.size - 1].lambda;
        json j = {{"lambda", cl.lambda}, {"multiplicity", cl.size}, {"width", cl.width},
                  {"may_be_truncated", edge}};
        j["gap_to_next"] = gap_next ? json(*gap_next) : json(nullptr);
        clusters.push_back(j);
        for (std::size_t k = cl.first; k < cl.first + cl.size; ++k)
            csv << k << "," << csv_number(w.pairs[k].lambda) << "," << ci << "," << cl.size << "\n";
    }
    json eig = json::array();
    for (const auto& p : w.pairs) eig.push_back(p.lambda);

    json simple;
    try {
        const SimplicityReport r = simplicity_gap(w, c.eigen_target, c.eigen_gap_tol * (1.0 + std::abs(c.eigen_target)));
        simple = {{"classification", to_string(r.kind)}, {"lambda", r.lambda}, {"multiplicity", r.multiplicity},
                  {"gap", r.gap}};
    } catch (const WindowTooNarrow& e) {
        simple = {{"classification", "window_too_narrow"}, {"message", e.what()}};
    }

    json out = {{"command", "spectrum"},
                {"grid", {{"n", c.grid_n}, {"length", c.grid_length}}},
                {"spin_shift", {c.spin_shift[0], c.spin_shift[1], c.spin_shift[2]}},
                {"target", c.eigen_target},
                {"count", c.eigen_count},
                {"eigenvalues", eig},
                {"clusters", clusters},
                {"nearest_cluster", simple},
                {"formulas", {{"pencil", formulas_json()["pencil"]}}}};
    fs::create_directories(c.output_dir);
    write_text(fs::path(c.output_dir) / "spectrum.csv", csv.str());
    const std::string text = out.dump(2) + "\n";
    write_text(fs::path(c.output_dir) / "spectrum.json", text);
    std::cout << text;
    return ok;
}

int cmd_flow(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const ScalarField u0 = initial_field(c);
    const SpinStructure spin(c.spin_shift);
    const FlowConfig fc = flow_config(c);
    const ExponentTable exps;

    const fs::path dir(c.output_dir);
    fs::create_directories(dir / "snapshots");
    json summary = {{"command", "flow"}, {"config", normalized(c)}, {"exponents", exponents_json(exps)},
                    {"formulas", formulas_json()}};

    std::ostringstream csv;
    csv << "t,lambda,energy,volume,constraint_residual,stationarity_residual,min_u,gap,dt\n";
    double prev_t = 0.0;
    auto observer = [&](const FlowState& s) {
        const FlowDiagnostics& d = s.diag;
        const double dt = s.steps == 0 ? 0.0 : s.t - prev_t;
        prev_t = s.t;
        csv << csv_number(s.t) << "," << csv_number(s.pair.lambda) << "," << csv_number(d.energy) << ","
            << csv_number(d.volume) << "," << csv_number(d.constraint_residual) << ","
            << csv_number(d.stationarity_residual) << "," << csv_number(d.min_u) << "," << csv_number(d.gap) << ","
            << csv_number(dt) << "\n";
        if (s.steps % c.output_stride == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "u_%06zu.edf", s.steps);
            snapshot::write_file((dir / "snapshots" / name).string(), snapshot::encode(s.u));
            std::snprintf(name, sizeof name, "psi_%06zu.edf", s.steps);
            snapshot::write_file((dir / "snapshots" / name).string(), snapshot::encode(s.pair.psi));
        }
    };

    FlowTrajectory traj;
    try {
        traj = run(u0, spin, c.eigen_target, fc, observer);
    } catch (const Error& e) {
        // Rejections of the initial data: no simple eigenvalue, or lambda = 0.
        summary["status"] = "rejected";
        summary["reason"] = dynamic_cast<const ZeroEigenvalue*>(&e) ? "ZeroEigenvalue" : "NoSimpleEigenvalue";
        summary["message"] = e.what();
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        std::cerr << "edflow flow: " << e.what() << "\n";
        return rejected;
    }
    write_text(dir / "trajectory.csv", csv.str());

    double vol_drift = 0.0, max_constraint = 0.0;
    const double v0 = traj.records.front().diag.volume;
    for (const auto& r : traj.records) {
        vol_drift = std::max(vol_drift, std::abs(r.diag.volume - v0) / v0);
        max_constraint = std::max(max_constraint, r.diag.constraint_residual);
    }
    summary["status"] = traj.completed ? "completed" : "aborted";
    summary["reason"] = traj.completed ? "" : traj.abort_reason;
    summary["message"] = traj.abort_message;
    summary["steps"] = traj.final_state.steps;
    summary["final_time"] = traj.final_state.t;
    summary["lambda_initial"] = traj.records.front().lambda;
    summary["lambda_final"] = traj.final_state.pair.lambda;
    summary["energy_initial"] = traj.records.front().diag.energy;
    summary["energy_final"] = traj.final_state.diag.energy;
    summary["volume_initial"] = v0;
    summary["max_relative_volume_drift"] = vol_drift;
    summary["max_constraint_residual"] = max_constraint;
    summary["final_gap"] = traj.final_state.gap;
    summary["final_min_u"] = traj.final_state.diag.min_u;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    if (!traj.completed && traj.abort_reason == "ConvergenceFailure") return no_convergence;
    return ok;
}

int cmd_perturb_validate(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const ScalarField u = initial_field(c);
    const SpinStructure spin(c.spin_shift);
    const TorusGrid& g = u.grid;
    const double k = g.wavenumber_unit();
    const ScalarField udot = ScalarField::sample(g, [k](double x, double y, double z) {
        return 0.8 * std::cos(k * x) + std::cos(k * y) + 0.5 * std::sin(k * (x - z));
    });
    EigenSolverOptions eo;
    eo.outer_tol = 1e-12;
    eo.inner_tol = 1e-13;
    eo.seed = c.seed;
    PerturbationOptions po;
    po.gap_tol = c.eigen_gap_tol;
    bool all = true;
    json checks = json::array();

    const FdValidation fd = fd_validate(u, udot, spin, c.eigen_target, {1e-2, 5e-3, 2.5e-3}, eo, po);
    checks.push_back(check("lambda_fd_slope", fd.lambda_slope, 1.9, 2.1, all));
    checks.push_back(check("psi_fd_slope", fd.psi_slope, 1.9, 2.1, all));
    checks.push_back(check_below("normalization_rate", fd.normalization_rate, 1e-9, all));

    // Uniform relative rate s: lambda' = -p1 s lambda exactly.
    const SpectrumWindow w = solve_window(u, spin, fd.lambda, 6, eo);
    const EigenPair pair = w.pairs[w.clusters[nearest_cluster(w.clusters, fd.lambda)].first];
    const double s = 0.3;
    const ExponentTable exps;
    const double ld = lambda_dot(u, s * u, pair, exps);
    const double exact = -exps.p1 * s * pair.lambda;
    checks.push_back(check_below("uniform_scaling_lambda_dot", std::abs(ld - exact) / std::abs(exact), 1e-12, all));

    // Projected resolvent on a random right-hand side.
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    SpinorField r(g, spin);
    for (auto& v : r.values) v = cplx(nd(rng), nd(rng));
    const SpinorField x = projected_resolvent(u, pair, r, po);
    SpinorField fwd = apply_dirac(x);
    fwd *= u.pow(-exps.p1);
    fwd -= pair.lambda * x;
    const double round_trip = spinor_l2_norm(fwd - project_out(u, pair, r)) / spinor_l2_norm(r);
    const double ortho = std::max(std::abs(weighted_spinor_inner_complex(u, x, pair.psi)),
                                  std::abs(weighted_spinor_inner_complex(u, x, quaternionic_j(pair.psi)))) /
                         weighted_norm(u, x);
    checks.push_back(check_below("resolvent_round_trip", round_trip, 1e-9, all));
    checks.push_back(check_below("resolvent_orthogonality", ortho, 1e-10, all));

    json report = {{"command", "perturb-validate"},
                   {"grid", {{"n", c.grid_n}, {"length", c.grid_length}}},
                   {"lambda", fd.lambda},
                   {"lambda_dot", fd.lambda_rate},
                   {"steps", fd.steps},
                   {"lambda_errors", fd.lambda_errors},
                   {"psi_errors", fd.psi_errors},
                   {"checks", checks},
                   {"formulas", {{"lambda_dot", formulas_json()["lambda_dot"]}, {"psi_dot", formulas_json()["psi_dot"]}}}};
    return emit_report(c, "perturb_validate.json", report, all);
}

int cmd_parabolic_validate(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const TorusGrid g(8, c.grid_length);
    const double k = g.wavenumber_unit();
    bool all = true;
    json checks = json::array();

    // Heat mode: u0 = cos x1 decays as e^{-k^2 t}.
    auto heat = [&](std::size_t steps) {
        ParabolicProblem pb{g, [g](double) { return ScalarField(g, 1.0); }, {}, {},
                            ScalarField::sample(g, [k](double x, double, double) { return std::cos(k * x); }), 1.0,
                            steps};
        return pb;
    };
    const double exact = std::exp(-k * k);
    auto amp_error = [&](TimeScheme s, std::size_t steps) {
        const auto sol = solve(heat(steps), s);
        const ScalarField ref = exact * heat(steps).initial;
        return (sol.states.back() - ref).max_abs();
    };
    std::vector<double> hs, cn, be;
    for (std::size_t n : {20, 40, 80}) {
        hs.push_back(1.0 / static_cast<double>(n));
        cn.push_back(amp_error(TimeScheme::crank_nicolson, n));
        be.push_back(amp_error(TimeScheme::backward_euler, n));
    }
    checks.push_back(check("heat_crank_nicolson_order", loglog_slope(hs, cn), 1.9, 2.1, all));
    checks.push_back(check("heat_backward_euler_order", loglog_slope(hs, be), 0.9, 1.1, all));

    // Manufactured w* = e^{-t} (1 + 0.2 cos x2) with a nonlocal operator.
    const TimeField diffusion = [g, k](double t) {
        return ScalarField::sample(g, [k, t](double x, double, double) { return 1.0 + 0.2 * std::sin(k * x + t); });
    };
    NonlocalOperator op = mean_operator(g);
    op.add(Multiply{[g, k](double) {
        return ScalarField::sample(g, [k](double, double, double z) { return 0.5 + 0.2 * std::cos(k * z); });
    }});
    op.add(GradContract{[g, k](double) {
        return VectorField{ScalarField(g, 0.1),
                           ScalarField::sample(g, [k](double x, double, double) { return 0.2 * std::sin(k * x); }),
                           ScalarField(g)};
    }});
    const auto wstar = [g, k](double t) {
        return ScalarField::sample(g, [k, t](double, double y, double) { return std::exp(-t) * (1.0 + 0.2 * std::cos(k * y)); });
    };
    const TimeField forcing = [=](double t) {
        const ScalarField w = wstar(t);
        return -1.0 * w - diffusion(t) * laplacian(w) + op.apply(w, t);
    };
    std::vector<double> mh, me;
    for (std::size_t n : {10, 20, 40}) {
        ParabolicProblem pb{g, diffusion, op, forcing, wstar(0.0), 1.0, n};
        const auto sol = solve(pb, TimeScheme::crank_nicolson);
        mh.push_back(1.0 / static_cast<double>(n));
        me.push_back((sol.states.back() - wstar(1.0)).max_abs());
    }
    checks.push_back(check("manufactured_crank_nicolson_order", loglog_slope(mh, me), 1.9, 2.1, all));

    // Energy estimate on randomized instances with a = kappa + 1/2.
    std::mt19937_64 rng(c.seed);
    double worst_margin = std::numeric_limits<double>::infinity();
    std::size_t passed = 0;
    const std::size_t instances = 20;
    for (std::size_t i = 0; i < instances; ++i) {
        const ScalarField abase = random_band_limited(g, rng, 2, 0.5) + 1.0;
        const ScalarField mult = random_band_limited(g, rng, 2, 1.0);
        const ScalarField kern = random_band_limited(g, rng, 1, 0.1);
        const ScalarField emit = random_band_limited(g, rng, 1, 0.1);
        const ScalarField f0 = random_band_limited(g, rng, 2, 1.0);
        const ScalarField init = random_band_limited(g, rng, 2, 1.0);
        NonlocalOperator rop{Multiply{[mult](double) { return mult; }},
                             RankOne{[kern](double) { return kern; }, [emit](double) { return emit; }}};
        ParabolicProblem pb{g, [abase](double t) { return (1.0 + 0.5 * std::sin(t)) * abase; }, rop,
                            [f0](double t) { return std::cos(3.0 * t) * f0; }, init, 1.0, 40};
        const GardingConstants gc = garding_constants(pb);
        const auto sol = solve(pb, TimeScheme::crank_nicolson);
        const EnergyEstimate e = energy_estimate_check(pb, sol, gc.kappa + 0.5, gc);
        worst_margin = std::min(worst_margin, e.margin / e.rhs);
        if (e.pass) ++passed;
    }
    checks.push_back(check("energy_estimate_instances_passed", static_cast<double>(passed),
                           static_cast<double>(instances), static_cast<double>(instances), all));

    // Uniqueness and time-locality on the manufactured problem.
    ParabolicProblem mpb{g, diffusion, op, forcing, wstar(0.0), 1.0, 20};
    checks.push_back(check_below("uniqueness_double_solve", uniqueness_check(mpb), 1e-9, all));
    const AxiomReport ax = check_axioms(op, g, 20, 1.0, c.seed);
    checks.push_back(check_below("a2_time_locality", ax.a2_violation, 1e-12, all));
    checks.push_back(check("a1_sampled_vs_bound", ax.a1_sampled, 0.0, ax.a1_bound, all));

    json report = {{"command", "parabolic-validate"},
                   {"heat", {{"steps", hs}, {"crank_nicolson_errors", cn}, {"backward_euler_errors", be}}},
                   {"manufactured", {{"steps", mh}, {"errors", me}}},
                   {"energy_estimate_worst_relative_margin", worst_margin},
                   {"checks", checks}};
    return emit_report(c, "parabolic_validate.json", report, all);
}

int cmd_covariance_check(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const TorusGrid g(ctx.from_file ? c.grid_n : 16, c.grid_length);
    const double k = g.wavenumber_unit();
    bool all = true;
    json checks = json::array();
    const ScalarField u = ScalarField::sample(g, [k](double, double y, double) { return 1.0 + 0.3 * std::cos(k * y); });
    checks.push_back(check_below("flat_factor", yamabe_covariance_residual(ScalarField(g), u), 0.0, all));
    checks.push_back(check_below("constant_factor", yamabe_covariance_residual(ScalarField(g, 0.3), u), 1e-10, all));
    const ScalarField f = ScalarField::sample(g, [k](double x, double, double) { return 0.2 * std::cos(k * x); });
    checks.push_back(check_below("band_limited_factor", yamabe_covariance_residual(f, u), 1e-8, all));
    std::mt19937_64 rng(c.seed);
    const ScalarField fr = random_band_limited(g, rng, 1, 0.2);
    const ScalarField ur = random_band_limited(g, rng, 2, 0.3) + 1.0;
    checks.push_back(check_below("random_band_limited_factor", yamabe_covariance_residual(fr, ur), 1e-8, all));
    json report = {{"command", "covariance-check"},
                   {"grid", {{"n", g.n}, {"length", g.length}}},
                   {"checks", checks},
                   {"formulas", {{"covariance", "L_g u = e^{(m+2)f/2} L_{e^{2f}g}(e^{-(m-2)f/2} u)"}}}};
    return emit_report(c, "covariance_check.json", report, all);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Einstein-Dirac flow laboratory on the flat 3-torus"};
    app.require_subcommand(1);
    std::string config_path;
    struct Sub {
        const char* name;
        const char* help;
        bool validation;
        int (*fn)(const Context&);
    };
    const std::vector<Sub> subs = {
        {"spectrum", "eigenvalues of the pencil near eigen.target", false, cmd_spectrum},
        {"flow", "run the flow and write trajectory, snapshots and summary", false, cmd_flow},
        {"perturb-validate", "finite-difference checks of the eigenpair derivatives", true, cmd_perturb_validate},
        {"parabolic-validate", "order, energy and uniqueness checks of the parabolic solver", true,
         cmd_parabolic_validate},
        {"covariance-check", "conformal covariance residuals of the Yamabe operator", true, cmd_covariance_check}};
    std::vector<CLI::App*> handles;
    for (const auto& s : subs) {
        CLI::App* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("config", config_path, "configuration file (key = value lines)");
        handles.push_back(sc);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : bad_config;
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (!handles[i]->parsed()) continue;
        try {
            const Context ctx = load(config_path, subs[i].validation);
            return subs[i].fn(ctx);
        } catch (const ParseError& e) {
            std::cerr << "edflow: " << e.what() << "\n";
            return bad_config;
        } catch (const ValidationError& e) {
            std::cerr << "edflow: " << e.what() << "\n";
            return bad_config;
        } catch (const ConvergenceFailure& e) {
            std::cerr << "edflow: " << e.what() << "\n";
            return no_convergence;
        } catch (const Error& e) {
            std::cerr << "edflow: " << e.what() << "\n";
            return rejected;
        } catch (const std::exception& e) {
            std::cerr << "edflow: " << e.what() << "\n";
            return rejected;
        }
    }
    return bad_config;
}
