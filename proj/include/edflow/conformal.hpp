#pragma once

// Spectral derivatives, the Yamabe operator and conformal-change identities on
// the flat torus (background scalar curvature identically zero).

#include <array>
#include <cmath>

#include "edflow/torus.hpp"

namespace edflow {

inline ScalarField laplacian(const ScalarField& f) {
    const double c = f.grid.wavenumber_unit();
    return apply_multiplier(f, [c](const std::array<long, 3>& k) {
        const double k2 = static_cast<double>(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        return cplx(-c * c * k2, 0.0);
    });
}

// Spectral partial derivative along `axis`; the Nyquist mode is dropped so the
// result stays real.
inline ScalarField partial(const ScalarField& f, int axis) {
    const double c = f.grid.wavenumber_unit();
    const long nyquist = -static_cast<long>(f.grid.n / 2);
    return apply_multiplier(f, [c, axis, nyquist](const std::array<long, 3>& k) {
        const long ka = k[static_cast<std::size_t>(axis)];
        if (ka == nyquist) return cplx(0.0, 0.0);
        return cplx(0.0, c * static_cast<double>(ka));
    });
}

using VectorField = std::array<ScalarField, 3>;

inline VectorField gradient(const ScalarField& f) { return {partial(f, 0), partial(f, 1), partial(f, 2)}; }

inline ScalarField dot(const VectorField& a, const VectorField& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Background scalar curvature of the flat torus.
inline ScalarField background_scalar_curvature(const TorusGrid& grid) { return ScalarField(grid, 0.0); }

// L_g u = -c_m Delta u + scal_g u.
inline ScalarField conformal_laplacian(const ScalarField& u, const ExponentTable& exps = ExponentTable{}) {
    ScalarField out = laplacian(u) * (-exps.c_m);
    out += background_scalar_curvature(u.grid) * u;
    return out;
}

// Scalar curvature of u^{4/(m-2)} g:  u^{-(m+2)/(m-2)} L_g u.
inline ScalarField scal_conformal(const ScalarField& u, const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    return u.pow(-exps.p3) * conformal_laplacian(u, exps);
}

// Laplace-Beltrami operator of e^{2f} g applied to phi (dimension 3).
inline ScalarField laplace_beltrami_conformal(const ScalarField& f, const ScalarField& phi) {
    constexpr double m = 3.0;
    ScalarField inner = laplacian(phi) + (m - 2.0) * dot(gradient(f), gradient(phi));
    return f.map([](double v) { return std::exp(-2.0 * v); }) * inner;
}

// Scalar curvature of e^{2f} g (dimension 3).
inline ScalarField scal_of_conformal_metric(const ScalarField& f) {
    constexpr double m = 3.0;
    const VectorField g = gradient(f);
    ScalarField inner = -2.0 * (m - 1.0) * laplacian(f) - (m - 1.0) * (m - 2.0) * dot(g, g);
    return f.map([](double v) { return std::exp(-2.0 * v); }) * inner;
}

// Yamabe operator of the metric e^{2f} g, assembled from the two identities above.
inline ScalarField conformal_laplacian_of_metric(const ScalarField& f, const ScalarField& w) {
    const ExponentTable exps(3);
    return laplace_beltrami_conformal(f, w) * (-exps.c_m) + scal_of_conformal_metric(f) * w;
}

// || L_g u - e^{(m+2) f / 2} L_{e^{2f} g}(e^{-(m-2) f / 2} u) ||_2.
inline double yamabe_covariance_residual(const ScalarField& f, const ScalarField& u) {
    constexpr double m = 3.0;
    const ScalarField lhs = conformal_laplacian(u);
    const ScalarField inner = f.map([](double v) { return std::exp(-(m - 2.0) * v / 2.0); }) * u;
    const ScalarField rhs =
        f.map([](double v) { return std::exp((m + 2.0) * v / 2.0); }) * conformal_laplacian_of_metric(f, inner);
    return l2_norm(lhs - rhs);
}

// E(u) = int u L_g u dvol  (= c_m int |grad u|^2 on the flat torus).
inline double total_energy(const ScalarField& u, const ExponentTable& exps = ExponentTable{}) {
    return quadrature(u * conformal_laplacian(u, exps));
}

// Dirichlet energy int |grad f|^2, evaluated as -int f Delta f so the Nyquist
// modes are counted the same way the Laplacian counts them.
inline double dirichlet_energy(const ScalarField& f) { return -l2_inner(f, laplacian(f)); }

inline double h1_norm2(const ScalarField& f) { return l2_inner(f, f) + dirichlet_energy(f); }

inline double h1_norm(const ScalarField& f) { return std::sqrt(h1_norm2(f)); }

}  // namespace edflow
