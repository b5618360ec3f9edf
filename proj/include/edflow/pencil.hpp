#pragma once

// Generalized eigenproblem  D psi = lambda u^{2/(m-2)} psi  as a Hermitian pencil.
//
// With B = u^{2/(m-2)} (a positive diagonal in physical space) the problem is
// symmetrized to C y = lambda y, C = B^{-1/2} D B^{-1/2}, y = B^{1/2} psi. C is
// applied matrix-free (pointwise weight, FFT, 2x2 symbol, FFT, weight). Interior
// eigenvalues near a target come from a restarted block shift-invert Krylov
// iteration whose inner solves are preconditioned MINRES runs; Ritz values are
// extracted with C itself.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edflow/dirac.hpp"
#include "edflow/errors.hpp"
#include "edflow/krylov.hpp"
#include "edflow/torus.hpp"

namespace edflow {

struct EigenPair {
    double lambda = 0.0;
    SpinorField psi;  // (psi, psi)_2^u = 1
};

struct Cluster {
    std::size_t first = 0;  // index into SpectrumWindow::pairs
    std::size_t size = 0;   // complex dimension
    double lambda = 0.0;    // mean eigenvalue
    double width = 0.0;     // max - min inside the cluster
};

struct SpectrumWindow {
    double target = 0.0;
    std::size_t count = 0;
    double radius = 0.0;  // largest |lambda - target| in the window
    std::vector<EigenPair> pairs;  // ascending in lambda
    std::vector<Cluster> clusters;
    std::size_t restarts = 0;
    std::size_t inner_iterations = 0;
};

struct EigenSolverOptions {
    double inner_tol = 1e-10;        // floor of the adaptive inner tolerance
    double outer_tol = 1e-10;        // ||C y - theta y|| / max(1, |theta|)
    double cluster_tol = 1e-6;       // relative to 1 + |lambda|
    std::size_t guard = 0;           // extra block vectors; 0 selects a default
    std::size_t krylov_blocks = 5;   // blocks per restart cycle
    std::size_t max_restarts = 80;
    std::size_t max_inner_iterations = 4000;
    std::uint64_t seed = 0x5eed;
};

inline constexpr std::size_t dense_oracle_max_points = 6;

namespace pencil_detail {

using Vector = std::vector<cplx>;

// Cluster identification: consecutive eigenvalues within tol * (1 + |lambda|).
inline std::vector<Cluster> find_clusters(const std::vector<EigenPair>& pairs, double tol) {
    std::vector<Cluster> out;
    for (std::size_t i = 0; i < pairs.size();) {
        std::size_t j = i + 1;
        while (j < pairs.size() &&
               pairs[j].lambda - pairs[j - 1].lambda <= tol * (1.0 + std::abs(pairs[j].lambda)))
            ++j;
        double sum = 0.0;
        for (std::size_t k = i; k < j; ++k) sum += pairs[k].lambda;
        out.push_back({i, j - i, sum / static_cast<double>(j - i), pairs[j - 1].lambda - pairs[i].lambda});
        i = j;
    }
    return out;
}

// First Fourier coefficient above a relative threshold is made real positive.
inline void fix_gauge(SpinorField& psi) {
    const SpinorSpectrum s = fourier_transform(psi);
    double peak = 0.0;
    for (const auto& c : s.coeffs) peak = std::max(peak, std::abs(c));
    for (const auto& c : s.coeffs) {
        if (std::abs(c) > 1e-6 * peak) {
            psi *= std::conj(c) / std::abs(c);
            return;
        }
    }
}

}  // namespace pencil_detail

// Matrix-free symmetrized pencil operator C = w D w, w = u^{-p1/2}.
class PencilOperator {
public:
    PencilOperator(const ScalarField& u, const SpinStructure& spin, const ExponentTable& exps = ExponentTable{})
        : grid_(u.grid), spin_(spin), exps_(exps) {
        require_positive(u);
        weight_ = u.pow(-exps.p1 / 2.0);
        double mean = 0.0;
        for (double v : u.values) mean += v;
        mean /= static_cast<double>(u.size());
        mean_scale_ = std::pow(mean, -exps.p1);
    }

    std::size_t dimension() const noexcept { return 2 * grid_.size(); }
    const TorusGrid& grid() const noexcept { return grid_; }
    const SpinStructure& spin() const noexcept { return spin_; }
    const ScalarField& weight() const noexcept { return weight_; }

    std::vector<cplx> apply(const std::vector<cplx>& y) const {
        SpinorField f(grid_, spin_, y);
        f *= weight_;
        SpinorField g = apply_dirac(f);
        g *= weight_;
        return std::move(g.values);
    }

    // SPD Fourier-diagonal approximation of |C - shift|^{-1} built from the
    // mean of u: on each mode the symbol s (sigma.kappa + mu) has eigenvalues
    // s(mu +- |kappa|).
    std::vector<cplx> precondition(const std::vector<cplx>& r, double shift) const {
        SpinorField f(grid_, spin_, r);
        const double s = mean_scale_;
        const double floor = 0.05 * (1.0 + std::abs(shift));
        SpinorField out = apply_spinor_symbol(f, [&](std::size_t idx) {
            const Vec3 kappa = momentum(grid_, spin_, idx);
            const double mag = std::sqrt(kappa[0] * kappa[0] + kappa[1] * kappa[1] + kappa[2] * kappa[2]);
            const double mu = nyquist_mass(grid_, spin_, idx);
            const double ep = 1.0 / std::max(std::abs(s * (mu + mag) - shift), floor);
            const double em = 1.0 / std::max(std::abs(s * (mu - mag) - shift), floor);
            if (mag == 0.0) return Mat2{cplx(ep, 0), cplx(0, 0), cplx(0, 0), cplx(ep, 0)};
            // (ep + em)/2 I + (ep - em)/2 (sigma . kappa_hat)
            const Mat2 sym = CliffordFrame::symbol({kappa[0] / mag, kappa[1] / mag, kappa[2] / mag});
            const double a = 0.5 * (ep + em), b = 0.5 * (ep - em);
            return Mat2{a + b * sym[0], b * sym[1], b * sym[2], a + b * sym[3]};
        });
        return std::move(out.values);
    }

    // Converts a Euclidean-unit vector y into psi = w y normalized in (.,.)_2^u.
    SpinorField to_spinor(const std::vector<cplx>& y) const {
        SpinorField psi(grid_, spin_, y);
        psi *= weight_;
        psi *= cplx(1.0 / std::sqrt(grid_.cell_volume()), 0.0);
        return psi;
    }

    // Inverse of to_spinor: y = sqrt(h^3) w^{-1} psi.
    std::vector<cplx> from_spinor(const SpinorField& psi) const {
        std::vector<cplx> y(psi.values);
        const double s = std::sqrt(grid_.cell_volume());
        for (std::size_t p = 0; p < grid_.size(); ++p) {
            y[2 * p] *= s / weight_.values[p];
            y[2 * p + 1] *= s / weight_.values[p];
        }
        return y;
    }

private:
    TorusGrid grid_;
    SpinStructure spin_;
    ExponentTable exps_;
    ScalarField weight_;
    double mean_scale_ = 1.0;
};

// `count` eigenpairs of the pencil nearest `target`.
inline SpectrumWindow solve_window(const ScalarField& u, const SpinStructure& spin, double target, std::size_t count,
                                   const EigenSolverOptions& opts = {}, const ExponentTable& exps = ExponentTable{}) {
    using Mat = Eigen::MatrixXcd;
    using pencil_detail::Vector;
    const PencilOperator op(u, spin, exps);
    const std::size_t n = op.dimension();
    if (count == 0 || count > n) throw std::invalid_argument("solve_window: count out of range");

    std::size_t guard = opts.guard ? opts.guard : std::max<std::size_t>(4, (count + 1) / 2);
    guard += guard % 2;
    const std::size_t p = std::min(n, count + guard);

    // An exact hit on an eigenvalue would make the inner systems singular.
    const double shift = target + 0.6180339887e-3 * (1.0 + std::abs(target));

    auto to_vec = [](const Mat& m, Eigen::Index col) { return Vector(m.col(col).data(), m.col(col).data() + m.rows()); };
    auto apply_block = [&](const Mat& V) {
        Mat out(V.rows(), V.cols());
        for (Eigen::Index j = 0; j < V.cols(); ++j) {
            const Vector r = op.apply(to_vec(V, j));
            out.col(j) = Eigen::Map<const Eigen::VectorXcd>(r.data(), static_cast<Eigen::Index>(r.size()));
        }
        return out;
    };

    SpectrumWindow window;
    window.target = target;
    window.count = count;

    // Ritz extraction uses C itself, so expansion vectors only need to be as
    // accurate as the current outer residual warrants.
    double inner_tol = 1e-3;
    auto shift_invert = [&](const Mat& V) {
        Mat out(V.rows(), V.cols());
        auto shifted = [&](const Vector& x) {
            Vector y = op.apply(x);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] -= shift * x[i];
            return y;
        };
        auto prec = [&](const Vector& r) { return op.precondition(r, shift); };
        for (Eigen::Index j = 0; j < V.cols(); ++j) {
            const Vector b = to_vec(V, j);
            Vector x(b.size(), cplx{});
            const auto st = krylov::minres(shifted, b, x, inner_tol, opts.max_inner_iterations, prec);
            window.inner_iterations += st.iterations;
            out.col(j) = Eigen::Map<const Eigen::VectorXcd>(x.data(), static_cast<Eigen::Index>(x.size()));
        }
        return out;
    };

    // Appends the columns of W orthonormalized against Q (two passes of
    // classical Gram-Schmidt); nearly dependent columns are dropped.
    auto extend_basis = [](Mat& Q, Mat W) {
        for (int pass = 0; pass < 2; ++pass)
            if (Q.cols() > 0) W -= Q * (Q.adjoint() * W);
        Mat accepted(W.rows(), 0);
        for (Eigen::Index j = 0; j < W.cols(); ++j) {
            Eigen::VectorXcd c = W.col(j);
            const double before = c.norm();
            for (int pass = 0; pass < 2; ++pass) {
                if (accepted.cols() > 0) c -= accepted * (accepted.adjoint() * c);
                if (Q.cols() > 0) c -= Q * (Q.adjoint() * c);
            }
            const double after = c.norm();
            if (after <= 1e-10 * std::max(before, 1e-300)) continue;
            accepted.conservativeResize(Eigen::NoChange, accepted.cols() + 1);
            accepted.col(accepted.cols() - 1) = c / after;
        }
        const Eigen::Index old = Q.cols();
        Q.conservativeResize(Eigen::NoChange, old + accepted.cols());
        Q.rightCols(accepted.cols()) = accepted;
        return accepted;
    };

    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = cplx(normal(rng), normal(rng));

    double worst = 0.0;
    for (std::size_t restart = 0; restart <= opts.max_restarts; ++restart) {
        window.restarts = restart;
        Mat V(static_cast<Eigen::Index>(n), 0);
        Mat last = extend_basis(V, X);
        for (std::size_t b = 1; b < opts.krylov_blocks && last.cols() > 0; ++b) last = extend_basis(V, shift_invert(last));

        // Harmonic Ritz selection: interior Ritz values of C on a large basis
        // can be spurious, harmonic ones are extremal for (C - shift)^{-1}.
        const Mat CV = apply_block(V);
        const Mat A = CV - shift * V;
        Mat G = A.adjoint() * A;
        G = 0.5 * (G + G.adjoint()).eval();
        Mat S = V.adjoint() * A;
        S = 0.5 * (S + S.adjoint()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> hes(S, G);
        const Eigen::VectorXd nu = hes.eigenvalues();
        std::vector<Eigen::Index> hord(static_cast<std::size_t>(nu.size()));
        std::iota(hord.begin(), hord.end(), Eigen::Index{0});
        std::stable_sort(hord.begin(), hord.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return std::abs(nu(a)) > std::abs(nu(b)); });
        const std::size_t keep = std::min<std::size_t>(p, hord.size());
        Mat Zh(V.cols(), static_cast<Eigen::Index>(keep));
        for (std::size_t j = 0; j < keep; ++j) Zh.col(static_cast<Eigen::Index>(j)) = hes.eigenvectors().col(hord[j]);

        // Rayleigh-Ritz with C on the selected span.
        Eigen::HouseholderQR<Mat> qr(Zh);
        const Mat Q = qr.householderQ() * Mat::Identity(Zh.rows(), Zh.cols());
        const Mat VQ = V * Q;
        const Mat CVQ = CV * Q;
        Mat H = VQ.adjoint() * CVQ;
        H = 0.5 * (H + H.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(H);
        const Eigen::VectorXd theta = es.eigenvalues();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(theta.size()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return std::abs(theta(a) - target) < std::abs(theta(b) - target);
        });
        Mat Zk(H.rows(), static_cast<Eigen::Index>(keep));
        for (std::size_t j = 0; j < keep; ++j) Zk.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(order[j]);
        const Mat Y = VQ * Zk;
        const Mat CY = CVQ * Zk;

        worst = 0.0;
        const std::size_t check = std::min(count, keep);
        for (std::size_t j = 0; j < check; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double th = theta(order[j]);
            const double res = (CY.col(jj) - th * Y.col(jj)).norm() / std::max(1.0, std::abs(th));
            worst = std::max(worst, res);
        }
        if (check == count && worst <= opts.outer_tol) {
            std::vector<std::size_t> idx(count);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return theta(order[a]) < theta(order[b]); });
            for (std::size_t j : idx) {
                EigenPair pair;
                pair.lambda = theta(order[j]);
                pair.psi = op.to_spinor(to_vec(Y, static_cast<Eigen::Index>(j)));
                pencil_detail::fix_gauge(pair.psi);
                window.radius = std::max(window.radius, std::abs(pair.lambda - target));
                window.pairs.push_back(std::move(pair));
            }
            window.clusters = pencil_detail::find_clusters(window.pairs, opts.cluster_tol);
            return window;
        }
        X = Y;
        inner_tol = std::clamp(1e-2 * worst, opts.inner_tol, 1e-3);
    }
    throw ConvergenceFailure("solve_window", opts.max_restarts, worst);
}

struct DenseSpectrum {
    std::vector<EigenPair> pairs;  // ascending, full spectrum
    std::vector<Cluster> clusters;
};

// Full eigendecomposition of the explicitly assembled symmetrized operator.
// Only for cross-validation: dimension 2 N^3 <= 432.
inline DenseSpectrum dense_oracle(const ScalarField& u, const SpinStructure& spin,
                                  const ExponentTable& exps = ExponentTable{}, double cluster_tol = 1e-6) {
    if (u.grid.n > dense_oracle_max_points)
        throw GridTooLarge("dense_oracle: grid with N = " + std::to_string(u.grid.n) + " exceeds N = 6");
    const PencilOperator op(u, spin, exps);
    const std::size_t n = op.dimension();
    Eigen::MatrixXcd C(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::vector<cplx> e(n, cplx{});
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const auto col = op.apply(e);
        e[j] = 0.0;
        for (std::size_t i = 0; i < n; ++i) C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    const Eigen::MatrixXcd Ch = 0.5 * (C + C.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Ch);
    DenseSpectrum out;
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
        EigenPair pair;
        pair.lambda = es.eigenvalues()(j);
        const auto col = es.eigenvectors().col(j);
        pair.psi = op.to_spinor(std::vector<cplx>(col.data(), col.data() + col.size()));
        pencil_detail::fix_gauge(pair.psi);
        out.pairs.push_back(std::move(pair));
    }
    out.clusters = pencil_detail::find_clusters(out.pairs, cluster_tol);
    return out;
}

// ---------------------------------------------------------------------------
// Cluster analysis

enum class Simplicity { quaternionic_simple, multiple, indeterminate };

inline const char* to_string(Simplicity s) {
    switch (s) {
        case Simplicity::quaternionic_simple: return "quaternionic_simple";
        case Simplicity::multiple: return "multiple";
        default: return "indeterminate";
    }
}

struct SimplicityReport {
    Simplicity kind = Simplicity::indeterminate;
    std::size_t multiplicity = 0;
    double lambda = 0.0;
    double width = 0.0;
    double gap = 0.0;  // distance to the nearest eigenvalue outside the cluster
    std::size_t cluster_index = 0;
};

inline std::size_t nearest_cluster(const std::vector<Cluster>& clusters, double lambda) {
    if (clusters.empty()) throw WindowTooNarrow("window has no eigenvalues");
    std::size_t best = 0;
    for (std::size_t c = 1; c < clusters.size(); ++c)
        if (std::abs(clusters[c].lambda - lambda) < std::abs(clusters[best].lambda - lambda)) best = c;
    return best;
}

// At m = 3 a simple eigenvalue is a complex-dimension-2 (quaternionic
// dimension 1) cluster isolated from the rest of the spectrum by gap_tol.
inline SimplicityReport simplicity_gap(const SpectrumWindow& window, double lambda, double gap_tol = 1e-3) {
    const std::size_t ci = nearest_cluster(window.clusters, lambda);
    const Cluster& c = window.clusters[ci];
    const double edge_tol = 1e-12 * (1.0 + window.radius);
    // Three or more members already decide the question, truncated or not.
    if (c.size <= 2)
        for (std::size_t k = c.first; k < c.first + c.size; ++k)
        if (std::abs(window.pairs[k].lambda - window.target) >= window.radius - edge_tol)
                throw WindowTooNarrow("cluster reaches the edge of the window; widen it");
    // Eigenvalues outside the window sit at least `radius` from the target.
    double gap = window.radius - std::abs(c.lambda - window.target);
    if (c.first > 0) gap = std::min(gap, window.pairs[c.first].lambda - window.pairs[c.first - 1].lambda);
    if (c.first + c.size < window.pairs.size())
        gap = std::min(gap, window.pairs[c.first + c.size].lambda - window.pairs[c.first + c.size - 1].lambda);

    SimplicityReport r;
    r.multiplicity = c.size;
    r.lambda = c.lambda;
    r.width = c.width;
    r.gap = gap;
    r.cluster_index = ci;
    if (c.size > 2) r.kind = Simplicity::multiple;
    else if (c.size == 2 && gap >= gap_tol) r.kind = Simplicity::quaternionic_simple;
    else r.kind = Simplicity::indeterminate;
    return r;
}

inline std::vector<SpinorField> cluster_basis(const SpectrumWindow& window, std::size_t cluster_index) {
    const Cluster& c = window.clusters.at(cluster_index);
    std::vector<SpinorField> basis;
    for (std::size_t k = c.first; k < c.first + c.size; ++k) basis.push_back(window.pairs[k].psi);
    return basis;
}

// Element of span(basis) closest to `reference` in (.,.)_2^u, renormalized.
// The basis must be orthonormal in the complex weighted product.
inline SpinorField align_to_span(const std::vector<SpinorField>& basis, const SpinorField& reference,
                                 const ScalarField& u, const ExponentTable& exps = ExponentTable{}) {
    SpinorField out(reference.grid, reference.spin);
    for (const auto& e : basis) {
        const cplx c = weighted_spinor_inner_complex(u, reference, e, exps);
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += c * e.values[i];
    }
    const double nrm = weighted_norm(u, out, exps);
    if (!(nrm > 0.0)) throw Error("align_to_span: reference is orthogonal to the span");
    out *= cplx(1.0 / nrm, 0.0);
    return out;
}

struct SplittingReport {
    std::size_t multiplicity = 0;
    std::vector<double> eps;
    std::vector<std::vector<double>> branches;  // per epsilon, sorted
    std::vector<double> separations;            // max - min per epsilon
    bool separation_increasing = false;
};

// Follows the cluster of `lambda` at u under u + eps v.
inline SplittingReport splitting_probe(const ScalarField& u, const SpinStructure& spin, double lambda,
                                       const ScalarField& v, const std::vector<double>& eps_list,
                                       const EigenSolverOptions& opts = {}, std::size_t probe_count = 32,
                                       const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const SpectrumWindow base = solve_window(u, spin, lambda, probe_count, opts, exps);
    const std::size_t ci = nearest_cluster(base.clusters, lambda);
    const Cluster c = base.clusters[ci];

    SplittingReport report;
    report.multiplicity = c.size;
    const double mean_ratio = quadrature(v / u) / u.grid.volume();
    for (double eps : eps_list) {
        const ScalarField ue = u + eps * v;
        require_positive(ue);
        const double guess = c.lambda * std::pow(1.0 + eps * mean_ratio, -exps.p1);
        const SpectrumWindow w = solve_window(ue, spin, guess, c.size, opts, exps);
        std::vector<double> b;
        for (const auto& pr : w.pairs) b.push_back(pr.lambda);
        std::sort(b.begin(), b.end());
        report.eps.push_back(eps);
        report.separations.push_back(b.back() - b.front());
        report.branches.push_back(std::move(b));
    }
    report.separation_increasing = true;
    for (std::size_t k = 1; k < report.separations.size(); ++k)
        if (!(report.separations[k] > report.separations[k - 1])) report.separation_increasing = false;
    return report;
}

// sup_x of the spread of |psi(x)| over normalized members of a cluster: its
// orthonormal basis plus `samples` random unit combinations.
inline double rigidity_probe(const std::vector<SpinorField>& basis, std::size_t samples = 16,
                             std::uint64_t seed = 7) {
    if (basis.empty()) return 0.0;
    std::vector<SpinorField> members = basis;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<cplx> coef(basis.size());
        double nrm = 0.0;
        for (auto& c : coef) {
            c = cplx(normal(rng), normal(rng));
            nrm += std::norm(c);
        }
        nrm = std::sqrt(nrm);
        SpinorField m(basis[0].grid, basis[0].spin);
        for (std::size_t k = 0; k < basis.size(); ++k)
            for (std::size_t i = 0; i < m.size(); ++i) m.values[i] += (coef[k] / nrm) * basis[k].values[i];
        members.push_back(std::move(m));
    }
    double spread = 0.0;
    for (std::size_t p = 0; p < basis[0].points(); ++p) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& m : members) {
            const double v = std::sqrt(std::norm(m.values[2 * p]) + std::norm(m.values[2 * p + 1]));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        spread = std::max(spread, hi - lo);
    }
    return spread;
}

// ||D psi - lambda u^{p1} psi||_2 / ||psi||_2
inline double constraint_residual(const ScalarField& u, double lambda, const SpinorField& psi,
                                  const ExponentTable& exps = ExponentTable{}) {
    SpinorField r = apply_dirac(psi);
    SpinorField rhs = psi;
    rhs *= u.pow(exps.p1);
    rhs *= cplx(lambda, 0.0);
    r -= rhs;
    return spinor_l2_norm(r) / spinor_l2_norm(psi);
}

}  // namespace edflow
