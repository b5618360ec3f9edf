#pragma once

// Einstein-Dirac flow of a conformal factor u on the flat 3-torus, coupled to a
// tracked eigenpair (lambda, psi) of the pencil D psi = lambda u^{p1} psi:
//
//   d_t u = -u^{-p4} [ L u - (int u L u / int u^{p1} |psi|^2) |psi|^2 u^{p2} ].
//
// Between projections the eigenpair follows its first-order ODEs; every K steps
// it is re-solved near the tracked value and aligned to the running spinor.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "edflow/conformal.hpp"
#include "edflow/errors.hpp"
#include "edflow/parabolic.hpp"
#include "edflow/pencil.hpp"
#include "edflow/perturbation.hpp"
#include "edflow/torus.hpp"

namespace edflow {

inline double volume(const ScalarField& u, const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    return quadrature(u.pow(exps.p5));
}

inline double weighted_mass(const ScalarField& u, const SpinorField& psi, const ExponentTable& exps = ExponentTable{}) {
    return quadrature(u.pow(exps.p1) * pointwise_norm2(psi));
}

// Right-hand side in u-form, coefficient kept as a ratio.
inline ScalarField rhs_u(const ScalarField& u, const EigenPair& pair, const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const ScalarField lu = conformal_laplacian(u, exps);
    const double ratio = l2_inner(u, lu) / weighted_mass(u, pair.psi, exps);
    return ratio * pointwise_norm2(pair.psi) * u.pow(-exps.p6) - u.pow(-exps.p4) * lu;
}

// d_t (u^{p3}) = -p3 [ L u - ratio |psi|^2 u^{p2} ]
inline ScalarField rhs_power_form(const ScalarField& u, const EigenPair& pair,
                                  const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const ScalarField lu = conformal_laplacian(u, exps);
    const double ratio = l2_inner(u, lu) / weighted_mass(u, pair.psi, exps);
    return -exps.p3 * (lu - ratio * pointwise_norm2(pair.psi) * u.pow(exps.p2));
}

// eta_u = -(4/(m-2)) [ scal_{g(t)} - E |psi_u|^2 u^{-p7} ],  d_t g = eta_u g.
inline ScalarField eta_u(const ScalarField& u, const EigenPair& pair, const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const double energy = total_energy(u);
    const ScalarField dens = pointwise_norm2(pair.psi) * (1.0 / weighted_mass(u, pair.psi, exps));
    return (-4.0 / (exps.m - 2.0)) * (scal_conformal(u, exps) - energy * dens * u.pow(-exps.p7));
}

struct StationarityResidual {
    double scalar = 0.0;      // || L u - (E / int u^{p1}|psi|^2) |psi|^2 u^{p2} ||_2
    double constraint = 0.0;  // || D psi - lambda u^{p1} psi ||_2 / ||psi||_2
};

inline StationarityResidual stationarity_residual(const ScalarField& u, const EigenPair& pair,
                                                  const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const ScalarField lu = conformal_laplacian(u, exps);
    const double coef = l2_inner(u, lu) / weighted_mass(u, pair.psi, exps);
    StationarityResidual r;
    r.scalar = l2_norm(lu - coef * pointwise_norm2(pair.psi) * u.pow(exps.p2));
    r.constraint = constraint_residual(u, pair.lambda, pair.psi, exps);
    return r;
}

// Phi(u, psi) = int [ u L u + Re (D psi, psi) - lambda u^{p1} |psi|^2 ]
inline double action_value(const ScalarField& u, const SpinorField& psi, double lambda,
                           const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const double dirac = spinor_inner_complex(apply_dirac(psi), psi).real();
    return total_energy(u) + dirac - lambda * weighted_mass(u, psi, exps);
}

// Linearization at v of the flow, written as  d_t w - c_m v^{-p4} Delta w + cl_v[w]:
//
//   cl_v[w] = p4 c_m v^{-p3} (Delta v) w + ((m-6)/(m-2)) scal v^{-p4} w + p6 E |psi|^2 v^{-p7} w
//             - 2 (int w L v) |psi|^2 v^{-p6} - 2 E Re(psi, phi_w) v^{-p6}
//
// where phi_w is the eigenspinor response psi' along the direction w. The pair
// must be normalized; `gap` is its distance to the rest of the spectrum.
inline NonlocalOperator linearized_flow_operator(const ScalarField& v, const EigenPair& pair, double gap,
                                                 const PerturbationOptions& opts = {},
                                                 const ExponentTable& exps = ExponentTable{}) {
    require_positive(v);
    const TorusGrid grid = v.grid;
    const double energy = total_energy(v);
    const ScalarField dens = pointwise_norm2(pair.psi);
    const ScalarField lv = conformal_laplacian(v, exps);
    const ScalarField scal = background_scalar_curvature(grid);

    const ScalarField a = exps.p4 * exps.c_m * v.pow(-exps.p3) * laplacian(v) +
                          ((exps.m - 6.0) / (exps.m - 2.0)) * scal * v.pow(-exps.p4) +
                          exps.p6 * energy * dens * v.pow(-exps.p7);
    const ScalarField emitter = -2.0 * dens * v.pow(-exps.p6);

    NonlocalOperator op;
    op.add(Multiply{[a](double) { return a; }});
    op.add(RankOne{[lv](double) { return lv; }, [emitter](double) { return emitter; }});

    // The response term carries the factor E; when E vanishes to roundoff (a
    // flat constant v) it is dropped and no gap is needed.
    if (std::abs(energy) <= 1e-12 * quadrature(v * v)) return op;
    const double gap_floor = opts.gap_tol * (1.0 + std::abs(pair.lambda));
    if (gap < gap_floor) throw SmallGap(gap, gap_floor);

    // Operator bound of the response term, from |lambda'| and the resolvent norm 1/gap.
    const ScalarField abs_psi = dens.pow(0.5);
    const double lead = 2.0 * std::abs(energy) * (abs_psi * v.pow(-exps.p6)).max();
    const double along = 0.5 * exps.p1 * l2_norm(v.pow(exps.p1 - 1.0) * dens) * spinor_l2_norm(pair.psi);
    const double across = exps.p1 * std::abs(pair.lambda) * v.pow(-exps.p1 / 2.0).max() *
                          (v.pow(exps.p1 / 2.0 - 1.0) * abs_psi).max() / gap;
    const double bound = lead * (along + across);

    const ScalarField out_weight = -2.0 * energy * v.pow(-exps.p6);
    op.add(FiberMap{[v, pair, out_weight, opts, exps](const ScalarField& w, double) {
                        const double ld = lambda_dot(v, w, pair, exps);
                        const SpinorField phi = psi_dot(v, w, pair, ld, opts, exps);
                        ScalarField re(w.grid);
                        for (std::size_t p = 0; p < re.size(); ++p)
                            re.values[p] = (std::conj(pair.psi.values[2 * p]) * phi.values[2 * p] +
                                            std::conj(pair.psi.values[2 * p + 1]) * phi.values[2 * p + 1])
                                               .real();
                        return out_weight * re;
                    },
                    bound, "eigenspinor response"});
    return op;
}

enum class FlowScheme { rk4, imex };

inline const char* to_string(FlowScheme s) { return s == FlowScheme::rk4 ? "rk4" : "imex"; }

struct FlowConfig {
    double dt = 0.0;                   // 0 selects the CFL step at every step
    double cfl = 0.05;                 // dt = cfl h^2 min(u^{p4}) / c_m
    std::size_t projection_period = 5; // K
    std::size_t projection_count = 8;  // eigenpairs in each re-solve window
    double eps_pos = 1e-3;
    double gap_tol = 1e-3;             // relative to 1 + |lambda|
    double horizon = 0.1;
    FlowScheme scheme = FlowScheme::rk4;
    EigenSolverOptions eigen;
    PerturbationOptions perturbation;

    void validate() const {
        if (projection_period < 1) throw std::invalid_argument("projection period must be >= 1");
        if (!(eps_pos > 0.0)) throw std::invalid_argument("positivity floor must be > 0");
        if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be >= 0");
        if (dt < 0.0 || !(cfl > 0.0)) throw std::invalid_argument("time step settings must be positive");
    }
};

inline double cfl_step(const ScalarField& u, double cfl, const ExponentTable& exps = ExponentTable{}) {
    const double h = u.grid.spacing();
    return cfl * h * h * u.pow(exps.p4).min() / exps.c_m;
}

struct FlowDiagnostics {
    double energy = 0.0;
    double volume = 0.0;
    double constraint_residual = 0.0;
    double stationarity_residual = 0.0;
    double min_u = 0.0;
    double gap = 0.0;
    double action = 0.0;
};

struct FlowState {
    double t = 0.0;
    ScalarField u;
    EigenPair pair;
    double gap = 0.0;  // measured at the last projection
    std::size_t steps = 0;
    FlowDiagnostics diag;
};

inline FlowDiagnostics diagnose(const ScalarField& u, const EigenPair& pair, double gap,
                                const ExponentTable& exps = ExponentTable{}) {
    FlowDiagnostics d;
    d.energy = total_energy(u);
    d.volume = volume(u, exps);
    const StationarityResidual s = stationarity_residual(u, pair, exps);
    d.constraint_residual = s.constraint;
    d.stationarity_residual = s.scalar;
    d.min_u = u.min();
    d.gap = gap;
    d.action = action_value(u, pair.psi, pair.lambda, exps);
    return d;
}

// Re-solves the pencil near the tracked eigenvalue, aligns the new cluster
// member to the running spinor and measures the gap.
inline void project(FlowState& s, const FlowConfig& cfg, const ExponentTable& exps = ExponentTable{}) {
    const SpectrumWindow w = solve_window(s.u, s.pair.psi.spin, s.pair.lambda, cfg.projection_count, cfg.eigen, exps);
    const double tol = cfg.gap_tol * (1.0 + std::abs(s.pair.lambda));
    const SimplicityReport rep = simplicity_gap(w, s.pair.lambda, tol);
    if (rep.kind != Simplicity::quaternionic_simple) throw SmallGap(rep.gap, tol);
    s.pair.lambda = rep.lambda;
    s.pair.psi = align_to_span(cluster_basis(w, rep.cluster_index), s.pair.psi, s.u, exps);
    s.gap = rep.gap;
}

namespace flow_detail {

struct Rate {
    ScalarField u;
    double lambda;
    SpinorField psi;
};

inline Rate coupled_rate(const ScalarField& u, const EigenPair& pair, const FlowConfig& cfg,
                         const ExponentTable& exps) {
    ScalarField du = rhs_u(u, pair, exps);
    const double dl = lambda_dot(u, du, pair, exps);
    SpinorField dpsi = psi_dot(u, du, pair, dl, cfg.perturbation, exps);
    return {std::move(du), dl, std::move(dpsi)};
}

inline void check_positive(const ScalarField& u, double t, double eps) {
    const double m = u.min();
    if (!u.finite() || !(m >= eps)) throw PositivityLoss(t, u.finite() ? m : std::numeric_limits<double>::quiet_NaN());
}

}  // namespace flow_detail

// One step of size dt; projection is left to the caller.
inline FlowState step(const FlowState& s, double dt, const FlowConfig& cfg,
                      const ExponentTable& exps = ExponentTable{}) {
    using flow_detail::Rate;
    FlowState out = s;
    if (cfg.scheme == FlowScheme::rk4) {
        auto stage = [&](const Rate& k, double h) {
            FlowState x = s;
            x.u += h * k.u;
            flow_detail::check_positive(x.u, s.t + h, cfg.eps_pos);
            x.pair.lambda += h * k.lambda;
            for (std::size_t i = 0; i < x.pair.psi.size(); ++i) x.pair.psi.values[i] += h * k.psi.values[i];
            return x;
        };
        const Rate k1 = flow_detail::coupled_rate(s.u, s.pair, cfg, exps);
        const FlowState s2 = stage(k1, 0.5 * dt);
        const Rate k2 = flow_detail::coupled_rate(s2.u, s2.pair, cfg, exps);
        const FlowState s3 = stage(k2, 0.5 * dt);
        const Rate k3 = flow_detail::coupled_rate(s3.u, s3.pair, cfg, exps);
        const FlowState s4 = stage(k3, dt);
        const Rate k4 = flow_detail::coupled_rate(s4.u, s4.pair, cfg, exps);
        const double c = dt / 6.0;
        for (std::size_t p = 0; p < out.u.size(); ++p)
            out.u.values[p] += c * (k1.u.values[p] + 2.0 * k2.u.values[p] + 2.0 * k3.u.values[p] + k4.u.values[p]);
        out.pair.lambda += c * (k1.lambda + 2.0 * k2.lambda + 2.0 * k3.lambda + k4.lambda);
        for (std::size_t i = 0; i < out.pair.psi.size(); ++i)
            out.pair.psi.values[i] += c * (k1.psi.values[i] + 2.0 * k2.psi.values[i] + 2.0 * k3.psi.values[i] +
                                           k4.psi.values[i]);
    } else {
        // Linearly implicit Euler: c_m u^{-p4} Delta at frozen u is implicit,
        // the remainder of the right-hand side explicit.
        const ScalarField diffusion = exps.c_m * s.u.pow(-exps.p4);
        const ScalarField explicit_part = rhs_u(s.u, s.pair, exps) - diffusion * laplacian(s.u);
        const ScalarField rhs = s.u + dt * explicit_part;
        ScalarField next = s.u;
        ParabolicOptions popts;
        popts.tol = 1e-13;
        implicit_solve(diffusion, NonlocalOperator{}, s.t + dt, dt, rhs, next, popts);
        flow_detail::check_positive(next, s.t + dt, cfg.eps_pos);
        const ScalarField u0 = s.u;
        const ScalarField rate = (next - u0) * (1.0 / dt);
        const FieldPath u_of = [u0, rate, t0 = s.t](double t) { return u0 + (t - t0) * rate; };
        const FieldPath ud_of = [rate](double) { return rate; };
        out.pair = eigenpath_step(u_of, ud_of, s.t, s.pair, dt, cfg.perturbation, exps);
        out.u = std::move(next);
    }
    out.t = s.t + dt;
    out.steps = s.steps + 1;
    flow_detail::check_positive(out.u, out.t, cfg.eps_pos);
    // Renormalize in the new weighted product.
    const double nrm = weighted_norm(out.u, out.pair.psi, exps);
    out.pair.psi *= cplx(1.0 / nrm, 0.0);
    return out;
}

struct FlowRecord {
    double t = 0.0;
    double lambda = 0.0;
    double dt = 0.0;
    FlowDiagnostics diag;
};

struct FlowTrajectory {
    std::vector<FlowRecord> records;
    FlowState final_state;
    bool completed = false;
    std::string abort_reason;  // error type name when a step failed
    std::string abort_message;
};

using FlowObserver = std::function<void(const FlowState&)>;

// Selects the eigenpair at u0 nearest `target`, which must be quaternionic-simple.
inline FlowState initial_state(const ScalarField& u0, const SpinStructure& spin, double target, const FlowConfig& cfg,
                               const ExponentTable& exps = ExponentTable{}) {
    require_positive(u0);
    const SpectrumWindow w = solve_window(u0, spin, target, cfg.projection_count, cfg.eigen, exps);
    const std::size_t ci = nearest_cluster(w.clusters, target);
    const double tol = cfg.gap_tol * (1.0 + std::abs(w.clusters[ci].lambda));
    const SimplicityReport rep = simplicity_gap(w, w.clusters[ci].lambda, tol);
    if (rep.kind != Simplicity::quaternionic_simple)
        throw NoSimpleEigenvalue("no quaternionic-simple eigenvalue near " + std::to_string(target) + " (cluster at " +
                                 std::to_string(rep.lambda) + " has multiplicity " +
                                 std::to_string(rep.multiplicity) + ", gap " + std::to_string(rep.gap) + ")");
    FlowState s;
    s.u = u0;
    s.pair = w.pairs[w.clusters[ci].first];
    if (s.pair.lambda == 0.0) throw ZeroEigenvalue();
    s.gap = rep.gap;
    s.diag = diagnose(s.u, s.pair, s.gap, exps);
    return s;
}

inline FlowTrajectory run(const ScalarField& u0, const SpinStructure& spin, double target, const FlowConfig& cfg,
                          const FlowObserver& observer = {}, const ExponentTable& exps = ExponentTable{}) {
    cfg.validate();
    FlowTrajectory traj;
    FlowState s = initial_state(u0, spin, target, cfg, exps);
    traj.records.push_back({s.t, s.pair.lambda, 0.0, s.diag});
    if (observer) observer(s);

    const double eps_t = 1e-12 * std::max(1.0, cfg.horizon);
    try {
        while (s.t < cfg.horizon - eps_t) {
            double dt = cfg.dt > 0.0 ? cfg.dt : cfl_step(s.u, cfg.cfl, exps);
            if (s.t + dt > cfg.horizon - eps_t) dt = cfg.horizon - s.t;
            FlowState next = step(s, dt, cfg, exps);
            if (next.steps % cfg.projection_period == 0) project(next, cfg, exps);
            next.diag = diagnose(next.u, next.pair, next.gap, exps);
            s = std::move(next);
            traj.records.push_back({s.t, s.pair.lambda, dt, s.diag});
            if (observer) observer(s);
        }
        traj.completed = true;
    } catch (const PositivityLoss& e) {
        traj.abort_reason = "PositivityLoss";
        traj.abort_message = e.what();
    } catch (const SmallGap& e) {
        traj.abort_reason = "SmallGap";
        traj.abort_message = e.what();
    } catch (const ConvergenceFailure& e) {
        traj.abort_reason = "ConvergenceFailure";
        traj.abort_message = e.what();
    }
    traj.final_state = std::move(s);
    return traj;
}

}  // namespace edflow
