#pragma once

// First-order derivatives of a tracked eigenpair of the pencil along a curve
// u(t) of conformal factors, and their validation by finite differences.
//
//   lambda' = -p1 lambda  int u^{p1-1} u' |psi|^2
//   psi'    = (lambda' / 2 lambda) psi + p1 lambda R (I - P)(u^{-1} u' psi)
//
// with R = (u^{-p1} D - lambda)^{-1} on the complement of the eigenspace and P
// the (.,.)_2^u projection onto span{psi, J psi}. The component of psi' along
// J psi is fixed to zero (continuation gauge).

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "edflow/dirac.hpp"
#include "edflow/errors.hpp"
#include "edflow/krylov.hpp"
#include "edflow/pencil.hpp"
#include "edflow/torus.hpp"

namespace edflow {

struct PerturbationOptions {
    double resolvent_tol = 1e-12;
    std::size_t max_iterations = 20000;
    double gap_tol = 1e-3;  // relative to 1 + |lambda|
};

inline double lambda_dot(const ScalarField& u, const ScalarField& udot, const EigenPair& pair,
                         const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const ScalarField dens = pointwise_norm2(pair.psi);
    const ScalarField weight = u.pow(exps.p1 - 1.0) * udot * dens;
    return -exps.p1 * pair.lambda * quadrature(weight);
}

// (I - P) r with P the weighted projection onto span{psi, J psi}.
inline SpinorField project_out(const ScalarField& u, const EigenPair& pair, const SpinorField& r,
                               const ExponentTable& exps = ExponentTable{}) {
    const SpinorField jpsi = quaternionic_j(pair.psi);
    const double n2 = weighted_spinor_inner(u, pair.psi, pair.psi, exps);
    SpinorField out = r;
    for (const SpinorField* e : {&pair.psi, &jpsi}) {
        const cplx c = weighted_spinor_inner_complex(u, r, *e, exps) / n2;
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= c * e->values[i];
    }
    return out;
}

// x = (u^{-p1} D - lambda)^{-1} (I - P) r, with x orthogonal to span{psi, J psi}.
// Solved as a projected Hermitian system for y = w^{-1} x, w = u^{-p1/2}.
inline SpinorField projected_resolvent(const ScalarField& u, const EigenPair& pair, const SpinorField& r,
                                       const PerturbationOptions& opts = {},
                                       const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const PencilOperator op(u, pair.psi.spin, exps);
    const double lambda = pair.lambda;
    const ScalarField& w = op.weight();
    const std::size_t np = u.size();

    // Euclidean orthonormal basis of the excluded span in y-coordinates.
    std::vector<std::vector<cplx>> q;
    {
        const SpinorField jpsi = quaternionic_j(pair.psi);
        for (const SpinorField* e : {&pair.psi, &jpsi}) {
            std::vector<cplx> v = e->values;
            for (std::size_t p = 0; p < np; ++p) {
                v[2 * p] /= w.values[p];
                v[2 * p + 1] /= w.values[p];
            }
            for (const auto& prev : q) krylov::axpy(-krylov::dot(prev, v), prev, v);
            krylov::scale(1.0 / krylov::norm(v), v);
            q.push_back(std::move(v));
        }
    }
    auto deflate = [&](std::vector<cplx> v) {
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& e : q) krylov::axpy(-krylov::dot(e, v), e, v);
        return v;
    };

    std::vector<cplx> b = r.values;
    for (std::size_t p = 0; p < np; ++p) {
        b[2 * p] /= w.values[p];
        b[2 * p + 1] /= w.values[p];
    }
    b = deflate(std::move(b));
    std::vector<cplx> y(b.size(), cplx{});
    if (krylov::norm(b) == 0.0) return SpinorField(r.grid, r.spin);

    auto apply = [&](const std::vector<cplx>& v) {
        std::vector<cplx> out = op.apply(v);
        krylov::axpy(cplx(-lambda), v, out);
        return deflate(std::move(out));
    };
    auto prec = [&](const std::vector<cplx>& v) { return deflate(op.precondition(deflate(v), lambda)); };
    const auto st = krylov::minres(apply, b, y, opts.resolvent_tol, opts.max_iterations, prec);
    y = deflate(std::move(y));

    SpinorField x(r.grid, r.spin, std::move(y));
    x *= w;
    // On the complement the resolvent norm is 1 / gap; a larger amplification
    // certifies that the gap is below tolerance. Checked before convergence,
    // since a near-singular system is also what stalls the iteration.
    const double rn = weighted_norm(u, project_out(u, pair, r, exps), exps);
    const double xn = weighted_norm(u, x, exps);
    const double gap_floor = opts.gap_tol * (1.0 + std::abs(lambda));
    if (rn > 0.0 && !(xn * gap_floor <= rn)) throw SmallGap(xn > 0.0 ? rn / xn : 0.0, gap_floor);
    if (!st.converged) throw ConvergenceFailure("projected_resolvent", st.iterations, st.relative_residual);
    return x;
}

inline SpinorField psi_dot(const ScalarField& u, const ScalarField& udot, const EigenPair& pair, double lambda_rate,
                           const PerturbationOptions& opts = {}, const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    if (pair.lambda == 0.0) throw ZeroEigenvalue();
    SpinorField source = pair.psi;
    source *= udot / u;
    SpinorField out = projected_resolvent(u, pair, source, opts, exps);
    out *= cplx(exps.p1 * pair.lambda, 0.0);
    SpinorField along = pair.psi;
    along *= cplx(lambda_rate / (2.0 * pair.lambda), 0.0);
    out += along;
    return out;
}

// d/dt (psi, psi)_2^u for the derivative field psidot.
inline double normalization_rate(const ScalarField& u, const ScalarField& udot, const SpinorField& psi,
                                 const SpinorField& psidot, const ExponentTable& exps = ExponentTable{}) {
    const ScalarField weight = u.pow(exps.p1 - 1.0) * udot * pointwise_norm2(psi);
    return exps.p1 * quadrature(weight) + 2.0 * weighted_spinor_inner(u, psidot, psi, exps);
}

// Unit element of span{psi, J psi} with largest Re (., reference)_2^u.
inline SpinorField quaternionic_align(const ScalarField& u, const SpinorField& psi, const SpinorField& reference,
                                      const ExponentTable& exps = ExponentTable{}) {
    const double nrm = weighted_norm(u, psi, exps);
    SpinorField e = psi;
    e *= cplx(1.0 / nrm, 0.0);
    return align_to_span({e, quaternionic_j(e)}, reference, u, exps);
}

using FieldPath = std::function<ScalarField(double)>;

// Classical RK4 on (lambda, psi) along u(t); the result is renormalized at
// u(t + dt) and aligned to the incoming spinor.
inline EigenPair eigenpath_step(const FieldPath& u_of, const FieldPath& udot_of, double t, const EigenPair& pair,
                                double dt, const PerturbationOptions& opts = {},
                                const ExponentTable& exps = ExponentTable{}) {
    struct Rate {
        double lambda;
        SpinorField psi;
    };
    auto rate = [&](double s, const EigenPair& p) {
        const ScalarField u = u_of(s);
        const ScalarField ud = udot_of(s);
        const double ld = lambda_dot(u, ud, p, exps);
        return Rate{ld, psi_dot(u, ud, p, ld, opts, exps)};
    };
    auto advance = [&](const EigenPair& p, const Rate& k, double h) {
        EigenPair out = p;
        out.lambda += h * k.lambda;
        for (std::size_t i = 0; i < out.psi.size(); ++i) out.psi.values[i] += h * k.psi.values[i];
        return out;
    };
    const Rate k1 = rate(t, pair);
    const Rate k2 = rate(t + 0.5 * dt, advance(pair, k1, 0.5 * dt));
    const Rate k3 = rate(t + 0.5 * dt, advance(pair, k2, 0.5 * dt));
    const Rate k4 = rate(t + dt, advance(pair, k3, dt));

    EigenPair out = pair;
    out.lambda += dt / 6.0 * (k1.lambda + 2.0 * k2.lambda + 2.0 * k3.lambda + k4.lambda);
    for (std::size_t i = 0; i < out.psi.size(); ++i)
        out.psi.values[i] += dt / 6.0 *
                             (k1.psi.values[i] + 2.0 * k2.psi.values[i] + 2.0 * k3.psi.values[i] + k4.psi.values[i]);
    out.psi = quaternionic_align(u_of(t + dt), out.psi, pair.psi, exps);
    return out;
}

struct GrowthBoundReport {
    bool pass = false;
    double worst_margin = 0.0;  // min over samples of n0 (e^{C t} - 1) - |lambda(t) - lambda(0)|
};

inline GrowthBoundReport growth_bound_check(const std::vector<double>& times, const std::vector<double>& lambdas,
                                            double n0, double c) {
    GrowthBoundReport r;
    r.worst_margin = std::numeric_limits<double>::infinity();
    if (times.empty()) {
        r.pass = true;
        return r;
    }
    const double t0 = times.front(), l0 = lambdas.front();
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double bound = n0 * std::expm1(c * (times[i] - t0));
        r.worst_margin = std::min(r.worst_margin, bound - std::abs(lambdas[i] - l0));
    }
    r.pass = r.worst_margin >= 0.0;
    return r;
}

// Growth rate from sup-norm data: |lambda'| <= p1 sup|u'/u| |lambda|.
inline double growth_rate(const ScalarField& u, const ScalarField& udot, const ExponentTable& exps = ExponentTable{}) {
    return exps.p1 * (udot / u).max_abs();
}

// Least-squares slope of log(err) against log(h).
inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& err) {
    const std::size_t n = h.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(h[i]), y = std::log(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct FdValidation {
    double lambda = 0.0;
    double lambda_rate = 0.0;
    double normalization_rate = 0.0;
    std::vector<double> steps;
    std::vector<double> lambda_errors;
    std::vector<double> psi_errors;  // relative, unweighted L2
    double lambda_slope = 0.0;
    double psi_slope = 0.0;
};

// Compares lambda' and psi' with centered differences of re-solved, gauge-aligned
// eigenpairs at u +- h u'. The base cluster nearest `target` must be simple.
inline FdValidation fd_validate(const ScalarField& u, const ScalarField& udot, const SpinStructure& spin,
                                double target, const std::vector<double>& steps,
                                const EigenSolverOptions& eig = {}, const PerturbationOptions& opts = {},
                                const ExponentTable& exps = ExponentTable{}) {
    const SpectrumWindow base = solve_window(u, spin, target, 8, eig, exps);
    const SimplicityReport simple = simplicity_gap(base, target, opts.gap_tol * (1.0 + std::abs(target)));
    if (simple.kind != Simplicity::quaternionic_simple)
        throw NoSimpleEigenvalue("fd_validate: cluster near target is not quaternionic-simple");
    const EigenPair pair = base.pairs[base.clusters[simple.cluster_index].first];

    FdValidation out;
    out.lambda = pair.lambda;
    out.lambda_rate = lambda_dot(u, udot, pair, exps);
    const SpinorField pd = psi_dot(u, udot, pair, out.lambda_rate, opts, exps);
    out.normalization_rate = normalization_rate(u, udot, pair.psi, pd, exps);

    auto resolve = [&](double h) {
        const ScalarField uh = u + h * udot;
        const double guess = pair.lambda + h * out.lambda_rate;
        const SpectrumWindow w = solve_window(uh, spin, guess, 6, eig, exps);
        const std::size_t ci = nearest_cluster(w.clusters, guess);
        EigenPair p;
        p.lambda = w.clusters[ci].lambda;
        p.psi = align_to_span(cluster_basis(w, ci), pair.psi, uh, exps);
        return p;
    };
    const double scale = spinor_l2_norm(pd);
    for (double h : steps) {
        const EigenPair plus = resolve(h), minus = resolve(-h);
        const double lfd = (plus.lambda - minus.lambda) / (2.0 * h);
        SpinorField dfd = plus.psi - minus.psi;
        dfd *= cplx(1.0 / (2.0 * h), 0.0);
        out.steps.push_back(h);
        out.lambda_errors.push_back(std::abs(lfd - out.lambda_rate));
        out.psi_errors.push_back(spinor_l2_norm(dfd - pd) / scale);
    }
    out.lambda_slope = loglog_slope(out.steps, out.lambda_errors);
    out.psi_slope = loglog_slope(out.steps, out.psi_errors);
    return out;
}

}  // namespace edflow
