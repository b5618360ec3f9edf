#pragma once

// Linear parabolic problems  d_t w - A(x,t) Delta w + L_t[w] = f  on the torus,
// where L is a sum of time-fibered linear maps (the value at time t only sees
// w(., t)). Time stepping is the theta scheme; every implicit step is a GMRES
// solve with a Fourier-diagonal preconditioner built from the mean of A.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "edflow/conformal.hpp"
#include "edflow/errors.hpp"
#include "edflow/krylov.hpp"
#include "edflow/torus.hpp"

namespace edflow {

using TimeField = std::function<ScalarField(double)>;
using TimeVectorField = std::function<VectorField(double)>;

// w -> a w
struct Multiply {
    TimeField a;
};

// w -> b . grad w
struct GradContract {
    TimeVectorField b;
};

// w -> (int w K dvol) h
struct RankOne {
    TimeField kernel;
    TimeField emitter;
};

// Arbitrary linear map applied fiber by fiber. `bound` is an L2 <- H1 operator
// bound if one is known.
struct FiberMap {
    std::function<ScalarField(const ScalarField&, double)> map;
    double bound = std::numeric_limits<double>::infinity();
    std::string name = "fiber map";
};

using NonlocalTerm = std::variant<Multiply, GradContract, RankOne, FiberMap>;

class NonlocalOperator {
public:
    NonlocalOperator() = default;
    NonlocalOperator(std::initializer_list<NonlocalTerm> terms) : terms_(terms) {}

    NonlocalOperator& add(NonlocalTerm term) {
        terms_.push_back(std::move(term));
        return *this;
    }
    bool empty() const noexcept { return terms_.empty(); }
    const std::vector<NonlocalTerm>& terms() const noexcept { return terms_; }

    ScalarField apply(const ScalarField& w, double t) const {
        ScalarField out(w.grid);
        std::optional<VectorField> grad;
        for (const auto& term : terms_) {
            std::visit(
                [&](const auto& p) {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, Multiply>) {
                        out += p.a(t) * w;
                    } else if constexpr (std::is_same_v<P, GradContract>) {
                        if (!grad) grad = gradient(w);
                        out += dot(p.b(t), *grad);
                    } else if constexpr (std::is_same_v<P, RankOne>) {
                        out += l2_inner(w, p.kernel(t)) * p.emitter(t);
                    } else {
                        out += p.map(w, t);
                    }
                },
                term);
        }
        return out;
    }

    // Applies the operator to a sampled trajectory, one time slice at a time.
    std::vector<ScalarField> apply(const std::vector<ScalarField>& w, const std::vector<double>& times) const {
        std::vector<ScalarField> out;
        out.reserve(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) out.push_back(apply(w[i], times[i]));
        return out;
    }

    // Transpose with respect to the quadrature inner product; empty when a
    // fiber map is present (its adjoint is not available).
    std::optional<ScalarField> apply_transpose(const ScalarField& w, double t) const {
        ScalarField out(w.grid);
        bool ok = true;
        for (const auto& term : terms_) {
            std::visit(
                [&](const auto& p) {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, Multiply>) {
                        out += p.a(t) * w;
                    } else if constexpr (std::is_same_v<P, GradContract>) {
                        const VectorField b = p.b(t);
                        for (int i = 0; i < 3; ++i) out -= partial(b[i] * w, i);
                    } else if constexpr (std::is_same_v<P, RankOne>) {
                        out += l2_inner(w, p.emitter(t)) * p.kernel(t);
                    } else {
                        ok = false;
                    }
                },
                term);
        }
        if (!ok) return std::nullopt;
        return out;
    }

    // Sum of per-term bounds ||L_t w||_2 <= C ||w||_{H1}.
    double primitive_bound(const TorusGrid& grid, double t) const {
        double c = 0.0;
        for (const auto& term : terms_) {
            std::visit(
                [&](const auto& p) {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, Multiply>) {
                        c += p.a(t).max_abs();
                    } else if constexpr (std::is_same_v<P, GradContract>) {
                        const VectorField b = p.b(t);
                        c += std::sqrt(dot(b, b).max());
                    } else if constexpr (std::is_same_v<P, RankOne>) {
                        c += l2_norm(p.kernel(t)) * l2_norm(p.emitter(t));
                    } else {
                        c += p.bound;
                    }
                },
                term);
        }
        (void)grid;
        return c;
    }

    // Lower bound on int phi L_t[phi] in units of |phi|^2 (non-positive), or
    // -inf when some term has no usable structure.
    double coercivity_floor(double t) const {
        double floor = 0.0;
        for (const auto& term : terms_) {
            std::visit(
                [&](const auto& p) {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, Multiply>) {
                        floor -= std::max(0.0, -p.a(t).min());
                    } else if constexpr (std::is_same_v<P, GradContract>) {
                        // int phi b.grad phi = -1/2 int (div b) phi^2
                        const VectorField b = p.b(t);
                        const ScalarField div = partial(b[0], 0) + partial(b[1], 1) + partial(b[2], 2);
                        floor -= 0.5 * std::max(0.0, div.max());
                    } else if constexpr (std::is_same_v<P, RankOne>) {
                        floor -= l2_norm(p.kernel(t)) * l2_norm(p.emitter(t));
                    } else {
                        floor = -std::numeric_limits<double>::infinity();
                    }
                },
                term);
        }
        return floor;
    }

private:
    std::vector<NonlocalTerm> terms_;
};

// Mean-value functional  w -> (int w dvol) / vol  as a rank-one term.
inline NonlocalOperator mean_operator(const TorusGrid& grid) {
    const double vol = grid.volume();
    return NonlocalOperator{RankOne{[grid](double) { return ScalarField(grid, 1.0); },
                                    [grid, vol](double) { return ScalarField(grid, 1.0 / vol); }}};
}

struct AxiomReport {
    double a1_sampled = 0.0;  // max ||L w||_2 / ||w||_{H1} over probes
    double a1_bound = 0.0;    // sum of primitive bounds, max over sampled times
    double a2_violation = 0.0;
    std::size_t probes = 0;
    bool a1_bounded() const { return std::isfinite(a1_sampled) && a1_sampled <= a1_bound * (1.0 + 1e-12) + 1e-14; }
};

// Random probing of (A1) boundedness and (A2) time-locality. A2 compares
// L[alpha w](t) with alpha(t) L[w](t) for alpha(t) = 1 + t on random trajectories.
inline AxiomReport check_axioms(const NonlocalOperator& op, const TorusGrid& grid, std::size_t trials,
                                double horizon = 1.0, std::uint64_t seed = 11) {
    AxiomReport r;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> when(0.0, horizon);
    const std::size_t slices = 4;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::vector<double> times;
        std::vector<ScalarField> w, scaled;
        for (std::size_t s = 0; s < slices; ++s) {
            const double t = when(rng);
            times.push_back(t);
            ScalarField f = random_band_limited(grid, rng, 1 + static_cast<int>(trial % 3));
            if (trial == 0 && s == 0) f = ScalarField(grid, 1.0);
            w.push_back(f);
            scaled.push_back((1.0 + t) * f);
        }
        const auto lw = op.apply(w, times);
        const auto ls = op.apply(scaled, times);
        for (std::size_t s = 0; s < slices; ++s) {
            // Measured against the input size: outputs may vanish (a mean of a
            // zero-mean probe), inputs never do.
            const double ref = l2_norm(lw[s]);
            const double in = h1_norm(w[s]);
            const double diff = l2_norm(ls[s] - (1.0 + times[s]) * lw[s]);
            r.a2_violation = std::max(r.a2_violation, diff / ((1.0 + times[s]) * in));
            r.a1_sampled = std::max(r.a1_sampled, ref / in);
            r.a1_bound = std::max(r.a1_bound, op.primitive_bound(grid, times[s]));
            ++r.probes;
        }
    }
    return r;
}

struct ParabolicProblem {
    TorusGrid grid;
    TimeField diffusion;      // A(., t) > 0
    NonlocalOperator op;      // L_t
    TimeField forcing;        // f(., t); empty means zero
    ScalarField initial;
    double horizon = 1.0;
    std::size_t steps = 100;

    ScalarField force(double t) const { return forcing ? forcing(t) : ScalarField(grid); }
    double dt() const { return horizon / static_cast<double>(steps); }
    double time(std::size_t n) const { return horizon * static_cast<double>(n) / static_cast<double>(steps); }

    // Minimum of A over the space-time grid.
    double min_diffusion() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n <= steps; ++n) m = std::min(m, diffusion(time(n)).min());
        return m;
    }
    void validate() const {
        const double m = min_diffusion();
        if (!(m > 0.0)) throw NonPositiveDiffusivity(m);
        if (!(initial.grid == grid)) throw std::invalid_argument("ParabolicProblem: initial data on a different grid");
    }
};

// A_t(phi, phi) = int (-A Delta phi + L_t phi) phi dvol
inline double bilinear_form(const ParabolicProblem& pb, const ScalarField& phi, double t) {
    return l2_inner(-1.0 * pb.diffusion(t) * laplacian(phi) + pb.op.apply(phi, t), phi);
}

struct GardingConstants {
    double delta = 0.0;
    double kappa = 0.0;        // max deficit over probes and Lanczos refinement
    double kappa_bound = 0.0;  // from primitive structure; +inf if unavailable
    std::size_t probes = 0;
};

// delta = 2 min A, so that (delta/2)||phi||_{H1}^2 = min A (|grad phi|^2 + |phi|^2);
// kappa is the largest observed deficit per |phi|^2.
inline GardingConstants garding_constants(const ParabolicProblem& pb, std::size_t probes = 64,
                                          std::uint64_t seed = 23) {
    pb.validate();
    GardingConstants g;
    const double amin = pb.min_diffusion();
    g.delta = 2.0 * amin;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> slot(0, pb.steps);
    for (std::size_t i = 0; i < probes; ++i) {
        const double t = pb.time(i == 0 ? 0 : slot(rng));
        const ScalarField phi =
            i == 0 ? ScalarField(pb.grid, 1.0) : random_band_limited(pb.grid, rng, 1 + static_cast<int>(i % 3));
        const double deficit = 0.5 * g.delta * h1_norm2(phi) - bilinear_form(pb, phi, t);
        g.kappa = std::max(g.kappa, deficit / l2_inner(phi, phi));
        ++g.probes;
    }
    // The deficit is the Rayleigh quotient of the symmetric operator
    //   T = (delta/2)(I - Delta) - sym(-A Delta + L_t);
    // a short Lanczos run per sampled time finds its top eigenvalue.
    const std::size_t times = std::min<std::size_t>(pb.steps + 1, 41);
    for (std::size_t s = 0; s < times; ++s) {
        const double t = pb.time(times == 1 ? 0 : s * pb.steps / (times - 1));
        const ScalarField a = pb.diffusion(t);
        bool has_transpose = true;
        auto apply_t = [&](const ScalarField& phi) {
            const ScalarField lap = laplacian(phi);
            ScalarField out = 0.5 * g.delta * (phi - lap);
            ScalarField sym = -1.0 * a * lap - laplacian(a * phi) + pb.op.apply(phi, t);
            const auto tr = pb.op.apply_transpose(phi, t);
            if (!tr) {
                has_transpose = false;
                return out;
            }
            sym += *tr;
            return out - 0.5 * sym;
        };
        const std::size_t steps = std::min<std::size_t>(40, pb.grid.size());
        std::vector<ScalarField> basis;
        std::vector<double> alpha, beta;
        ScalarField q = random_band_limited(pb.grid, rng, 2);
        q *= 1.0 / l2_norm(q);
        for (std::size_t k = 0; k < steps; ++k) {
            basis.push_back(q);
            ScalarField w = apply_t(q);
            if (!has_transpose) break;
            alpha.push_back(l2_inner(w, q));
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& b : basis) w -= l2_inner(w, b) * b;
            const double nb = l2_norm(w);
            if (nb < 1e-12 * (1.0 + std::abs(alpha.back()))) break;
            beta.push_back(nb);
            q = w * (1.0 / nb);
        }
        if (!has_transpose) break;
        const std::size_t m = alpha.size();
        Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            tri(i, i) = alpha[i];
            if (i + 1 < m) tri(i, i + 1) = tri(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri, Eigen::EigenvaluesOnly);
        g.kappa = std::max(g.kappa, es.eigenvalues().maxCoeff());
    }

    double worst = 0.0;
    for (std::size_t n = 0; n <= pb.steps; ++n) {
        const double t = pb.time(n);
        const ScalarField lap_a = laplacian(pb.diffusion(t));
        worst = std::max(worst, 0.5 * std::max(0.0, lap_a.max()) - pb.op.coercivity_floor(t));
    }
    g.kappa_bound = amin + worst;
    return g;
}

enum class TimeScheme { backward_euler, crank_nicolson };

struct ParabolicOptions {
    double tol = 1e-12;  // relative residual of each implicit step
    std::size_t max_iterations = 2000;
    std::size_t restart = 40;
    bool random_guess = false;  // start Krylov from a random field instead of the previous step
    std::uint64_t seed = 97;
};

struct ParabolicSolution {
    std::vector<double> times;
    std::vector<ScalarField> states;
    double max_step_residual = 0.0;  // relative
    std::size_t iterations = 0;
};

// Solves (I + c (-A Delta + L_t)) w = rhs.
inline krylov::Stats implicit_solve(const ScalarField& diffusion, const NonlocalOperator& op, double t, double c,
                                    const ScalarField& rhs, ScalarField& w, const ParabolicOptions& opts = {}) {
    const TorusGrid& grid = rhs.grid;
    double amean = 0.0;
    for (double v : diffusion.values) amean += v;
    amean /= static_cast<double>(diffusion.size());
    const double k0 = grid.wavenumber_unit();
    auto apply = [&](const std::vector<double>& x) {
        const ScalarField f(grid, x);
        ScalarField out = f - c * diffusion * laplacian(f);
        if (!op.empty()) out += c * op.apply(f, t);
        return out.values;
    };
    auto prec = [&](const std::vector<double>& x) {
        return apply_multiplier(ScalarField(grid, x), [&](const std::array<long, 3>& k) {
                   const double k2 = static_cast<double>(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
                   return cplx(1.0 / (1.0 + c * amean * k0 * k0 * k2), 0.0);
               })
            .values;
    };
    if (w.size() != rhs.size()) w = rhs;
    const auto st = krylov::gmres(apply, rhs.values, w.values, opts.tol, opts.max_iterations, opts.restart, prec);
    if (!st.converged) throw ConvergenceFailure("implicit parabolic step", st.iterations, st.relative_residual);
    return st;
}

inline ParabolicSolution solve(const ParabolicProblem& pb, TimeScheme scheme, const ParabolicOptions& opts = {}) {
    pb.validate();
    const double theta = scheme == TimeScheme::backward_euler ? 1.0 : 0.5;
    const double dt = pb.dt();
    std::mt19937_64 rng(opts.seed);

    ParabolicSolution sol;
    sol.times.push_back(0.0);
    sol.states.push_back(pb.initial);
    ScalarField w = pb.initial;
    for (std::size_t n = 0; n < pb.steps; ++n) {
        const double t0 = pb.time(n), t1 = pb.time(n + 1);
        ScalarField rhs = w + (dt * theta) * pb.force(t1);
        if (theta < 1.0) {
            ScalarField explicit_part = pb.force(t0) + pb.diffusion(t0) * laplacian(w);
            if (!pb.op.empty()) explicit_part -= pb.op.apply(w, t0);
            rhs += (dt * (1.0 - theta)) * explicit_part;
        }
        ScalarField next = opts.random_guess ? random_band_limited(pb.grid, rng, 3, 1.0) : w;
        const auto st = implicit_solve(pb.diffusion(t1), pb.op, t1, dt * theta, rhs, next, opts);
        sol.iterations += st.iterations;
        sol.max_step_residual = std::max(sol.max_step_residual, st.relative_residual);
        w = std::move(next);
        sol.times.push_back(t1);
        sol.states.push_back(w);
    }
    return sol;
}

struct EnergyEstimate {
    bool pass = false;
    double lhs = 0.0;  // sum_trap e^{-2at} ||u||_{H1}^2
    double rhs = 0.0;  // (|u0|^2 + sum_trap e^{-2at} |f|^2) / delta
    double margin = 0.0;
};

// Discrete weighted energy estimate on [0, T] with trapezoidal time sums.
inline EnergyEstimate energy_estimate_check(const ParabolicProblem& pb, const ParabolicSolution& sol, double a,
                                            const GardingConstants& g) {
    if (a < g.kappa + 0.5)
        throw ParameterTooSmall("energy estimate needs a >= kappa + 1/2 (a = " + std::to_string(a) +
                                ", kappa = " + std::to_string(g.kappa) + ")");
    const double dt = pb.dt();
    double lhs = 0.0, forcing = 0.0;
    for (std::size_t n = 0; n < sol.states.size(); ++n) {
        const double t = sol.times[n];
        const double wgt = (n == 0 || n + 1 == sol.states.size() ? 0.5 : 1.0) * dt * std::exp(-2.0 * a * t);
        lhs += wgt * h1_norm2(sol.states[n]);
        const ScalarField f = pb.force(t);
        forcing += wgt * l2_inner(f, f);
    }
    EnergyEstimate e;
    e.lhs = lhs;
    e.rhs = (l2_inner(pb.initial, pb.initial) + forcing) / g.delta;
    e.margin = e.rhs - e.lhs;
    e.pass = e.margin >= 0.0;
    return e;
}

// Solves twice from different Krylov starting vectors; returns the largest
// pointwise difference over all time levels.
inline double uniqueness_check(const ParabolicProblem& pb, TimeScheme scheme = TimeScheme::crank_nicolson,
                               const ParabolicOptions& opts = {}) {
    ParabolicOptions first = opts, second = opts;
    first.random_guess = false;
    second.random_guess = true;
    const auto a = solve(pb, scheme, first);
    const auto b = solve(pb, scheme, second);
    double diff = 0.0;
    for (std::size_t n = 0; n < a.states.size(); ++n) diff = std::max(diff, (a.states[n] - b.states[n]).max_abs());
    return diff;
}

}  // namespace edflow
