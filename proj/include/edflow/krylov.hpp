#pragma once

// Krylov solvers over plain std::vector storage: preconditioned MINRES for
// Hermitian (possibly indefinite) operators and restarted right-preconditioned
// GMRES for general real operators. Inner products use pairwise summation so
// results do not depend on evaluation order.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "edflow/errors.hpp"
#include "edflow/torus.hpp"

namespace edflow::krylov {

template <class T>
inline double real_part(const T& v) {
    if constexpr (std::is_same_v<T, double>) return v;
    else return v.real();
}

template <class T>
inline T conj_of(const T& v) {
    if constexpr (std::is_same_v<T, double>) return v;
    else return std::conj(v);
}

// <x, y> = sum conj(x_i) y_i
template <class T>
T dot(const std::vector<T>& x, const std::vector<T>& y) {
    return pairwise_sum_of<T>(x.size(), [&](std::size_t i) { return conj_of(x[i]) * y[i]; });
}

template <class T>
double norm(const std::vector<T>& x) {
    return std::sqrt(pairwise_sum_of<double>(x.size(), [&](std::size_t i) { return std::norm(x[i]); }));
}

template <class T, class S>
void axpy(S alpha, const std::vector<T>& x, std::vector<T>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

template <class T, class S>
void scale(S alpha, std::vector<T>& x) {
    for (auto& v : x) v *= alpha;
}

struct Stats {
    std::size_t iterations = 0;
    double relative_residual = 0.0;  // true residual ||b - A x|| / ||b||
    bool converged = false;
};

struct Identity {
    template <class V>
    V operator()(const V& v) const { return v; }
};

// Preconditioned MINRES (Paige & Saunders). `precond` applies an SPD
// approximation of A^{-1}. The recursion's residual estimate only gates a true
// residual check; on a mismatch the iteration restarts from the current x.
template <class T, class Op, class Prec = Identity>
Stats minres(const Op& apply, const std::vector<T>& b, std::vector<T>& x, double tol, std::size_t max_iterations,
             const Prec& precond = Prec{}) {
    Stats stats;
    const double bnorm = norm(b);
    if (x.size() != b.size()) x.assign(b.size(), T{});
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), T{});
        stats.converged = true;
        return stats;
    }
    auto true_residual = [&]() {
        std::vector<T> r = b;
        axpy(T(-1.0), apply(x), r);
        return norm(r) / bnorm;
    };

    const std::size_t n = b.size();
    while (stats.iterations < max_iterations) {
        std::vector<T> r1 = b;
        axpy(T(-1.0), apply(x), r1);
        if (norm(r1) <= tol * bnorm) {
            stats.converged = true;
            break;
        }
        std::vector<T> y = precond(r1);
        double beta1 = real_part(dot(r1, y));
        if (!(beta1 > 0.0)) throw Error("minres: preconditioner is not positive definite");
        beta1 = std::sqrt(beta1);

        double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1, cs = -1.0, sn = 0.0;
        std::vector<T> w(n, T{}), w1(n, T{}), w2(n, T{}), r2 = r1, v(n);
        const double rnorm0 = norm(r1);
        bool restart = false;

        while (stats.iterations < max_iterations) {
            ++stats.iterations;
            const double s = 1.0 / beta;
            for (std::size_t i = 0; i < n; ++i) v[i] = s * y[i];
            y = apply(v);
            if (oldb != 0.0) axpy(T(-beta / oldb), r1, y);
            const double alfa = real_part(dot(v, y));
            axpy(T(-alfa / beta), r2, y);
            r1.swap(r2);
            r2 = y;
            y = precond(r2);
            oldb = beta;
            const double beta2 = real_part(dot(r2, y));
            if (beta2 < 0.0) throw Error("minres: preconditioner is not positive definite");
            beta = std::sqrt(beta2);

            const double oldeps = epsln;
            const double delta = cs * dbar + sn * alfa;
            const double gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            double gamma = std::hypot(gbar, beta);
            gamma = std::max(gamma, std::numeric_limits<double>::min());
            cs = gbar / gamma;
            sn = beta / gamma;
            const double phi = cs * phibar;
            phibar = sn * phibar;

            w1.swap(w2);
            w2.swap(w);
            for (std::size_t i = 0; i < n; ++i) w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            axpy(T(phi), w, x);

            // phibar tracks the M^{-1}-norm of the residual; rescale to the
            // Euclidean scale of the starting residual before comparing.
            const double estimate = phibar / beta1 * rnorm0 / bnorm;
            if (estimate <= 0.5 * tol || beta == 0.0) {
                stats.relative_residual = true_residual();
                if (stats.relative_residual <= tol) {
                    stats.converged = true;
                    return stats;
                }
                restart = true;
                break;
            }
        }
        if (!restart) break;
    }
    stats.relative_residual = true_residual();
    stats.converged = stats.relative_residual <= tol;
    return stats;
}

// Restarted GMRES(m) with right preconditioning for real operators.
template <class Op, class Prec = Identity>
Stats gmres(const Op& apply, const std::vector<double>& b, std::vector<double>& x, double tol,
            std::size_t max_iterations, std::size_t restart = 60, const Prec& precond = Prec{}) {
    Stats stats;
    const std::size_t n = b.size();
    if (x.size() != n) x.assign(n, 0.0);
    const double bnorm = norm(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        stats.converged = true;
        return stats;
    }
    while (stats.iterations < max_iterations) {
        std::vector<double> r = b;
        axpy(-1.0, apply(x), r);
        const double beta = norm(r);
        stats.relative_residual = beta / bnorm;
        if (stats.relative_residual <= tol) {
            stats.converged = true;
            return stats;
        }
        const std::size_t m = std::min(restart, max_iterations - stats.iterations);
        std::vector<std::vector<double>> V(m + 1), Z(m);
        std::vector<std::vector<double>> H(m + 1, std::vector<double>(m, 0.0));
        std::vector<double> cs(m, 0.0), sn(m, 0.0), g(m + 1, 0.0);
        V[0] = r;
        scale(1.0 / beta, V[0]);
        g[0] = beta;
        std::size_t used = 0;
        for (std::size_t j = 0; j < m; ++j) {
            ++stats.iterations;
            Z[j] = precond(V[j]);
            std::vector<double> w = apply(Z[j]);
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t i = 0; i <= j; ++i) {
                    const double hij = dot(V[i], w);
                    H[i][j] += hij;
                    axpy(-hij, V[i], w);
                }
            }
            H[j + 1][j] = norm(w);
            for (std::size_t i = 0; i < j; ++i) {
                const double tmp = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
                H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
                H[i][j] = tmp;
            }
            const double denom = std::hypot(H[j][j], H[j + 1][j]);
            cs[j] = denom == 0.0 ? 1.0 : H[j][j] / denom;
            sn[j] = denom == 0.0 ? 0.0 : H[j + 1][j] / denom;
            const double hnext = H[j + 1][j];
            H[j][j] = cs[j] * H[j][j] + sn[j] * hnext;
            H[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            if (hnext != 0.0) {
                V[j + 1] = std::move(w);
                scale(1.0 / hnext, V[j + 1]);
            }
            if (std::abs(g[j + 1]) <= 0.5 * tol * bnorm || hnext == 0.0) break;
        }
        std::vector<double> yk(used, 0.0);
        for (std::size_t ii = used; ii-- > 0;) {
            double s = g[ii];
            for (std::size_t k = ii + 1; k < used; ++k) s -= H[ii][k] * yk[k];
            yk[ii] = s / H[ii][ii];
        }
        for (std::size_t k = 0; k < used; ++k) axpy(yk[k], Z[k], x);
    }
    std::vector<double> r = b;
    axpy(-1.0, apply(x), r);
    stats.relative_residual = norm(r) / bnorm;
    stats.converged = stats.relative_residual <= tol;
    return stats;
}

}  // namespace edflow::krylov
