#pragma once

// Flat Dirac operator D = -i sum_a sigma_a d_a on the rank-2 spinor bundle of
// T^3, its closed-form spectrum, and the quaternionic structure J.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "edflow/torus.hpp"

namespace edflow {

using Mat2 = std::array<cplx, 4>;  // row-major 2x2

struct CliffordFrame {
    // Pauli matrices.
    static constexpr std::array<Mat2, 3> sigma() {
        return {Mat2{cplx(0, 0), cplx(1, 0), cplx(1, 0), cplx(0, 0)},
                Mat2{cplx(0, 0), cplx(0, -1), cplx(0, 1), cplx(0, 0)},
                Mat2{cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(-1, 0)}};
    }

    // sigma . kappa
    static Mat2 symbol(const Vec3& kappa) {
        return {cplx(kappa[2], 0.0), cplx(kappa[0], -kappa[1]), cplx(kappa[0], kappa[1]), cplx(-kappa[2], 0.0)};
    }
};

inline Mat2 matmul(const Mat2& a, const Mat2& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3]};
}

// Shifted momentum (2 pi / L)(k + delta) of the Fourier slot `idx`. On a
// periodic axis the Nyquist mode -N/2 has no partner +N/2, so its component is
// set to zero; this keeps D commuting with J (see nyquist_mass).
inline Vec3 momentum(const TorusGrid& grid, const SpinStructure& spin, std::size_t idx) {
    const auto k = grid.modes(idx);
    const double c = grid.wavenumber_unit();
    const long nyquist = -static_cast<long>(grid.n / 2);
    Vec3 out{};
    for (std::size_t a = 0; a < 3; ++a)
        out[a] = spin.shift[a] == 0.0 && k[a] == nyquist ? 0.0 : c * (static_cast<double>(k[a]) + spin.shift[a]);
    return out;
}

// Zeroing a Nyquist component would leave spurious zero modes; a real scalar
// mass (2 pi / L) N on those slots lifts them above the low spectrum while
// staying self-adjoint and J-invariant, as a Wilson term does on a lattice.
inline double nyquist_mass(const TorusGrid& grid, const SpinStructure& spin, std::size_t idx) {
    const auto k = grid.modes(idx);
    const long nyquist = -static_cast<long>(grid.n / 2);
    for (std::size_t a = 0; a < 3; ++a)
        if (spin.shift[a] == 0.0 && k[a] == nyquist) return grid.wavenumber_unit() * static_cast<double>(grid.n);
    return 0.0;
}

// Full per-mode symbol: sigma . kappa + mass.
inline Mat2 dirac_symbol(const TorusGrid& grid, const SpinStructure& spin, std::size_t idx) {
    Mat2 m = CliffordFrame::symbol(momentum(grid, spin, idx));
    const double mass = nyquist_mass(grid, spin, idx);
    m[0] += mass;
    m[3] += mass;
    return m;
}

// Applies a per-mode 2x2 symbol to a spinor field in Fourier space.
template <class SymbolFn>
SpinorField apply_spinor_symbol(const SpinorField& psi, SymbolFn&& symbol_of) {
    SpinorSpectrum s = fourier_transform(psi);
    for (std::size_t idx = 0; idx < psi.points(); ++idx) {
        const Mat2 m = symbol_of(idx);
        const cplx a = s.coeffs[2 * idx], b = s.coeffs[2 * idx + 1];
        s.coeffs[2 * idx] = m[0] * a + m[1] * b;
        s.coeffs[2 * idx + 1] = m[2] * a + m[3] * b;
    }
    return inverse_transform(s);
}

inline SpinorField apply_dirac(const SpinorField& psi) {
    return apply_spinor_symbol(psi, [&](std::size_t idx) {
        return dirac_symbol(psi.grid, psi.spin, idx);
    });
}

struct FlatEigenvalue {
    double lambda;
    std::size_t multiplicity;  // complex dimension
};

// Closed-form spectrum of the flat Dirac operator restricted to the modes the
// grid represents: each lattice momentum kappa contributes +|kappa| and -|kappa|,
// shifted by the mass (2 pi / L) N on the Nyquist slots of periodic axes.
inline std::vector<FlatEigenvalue> flat_spectrum_oracle(const TorusGrid& grid, const SpinStructure& spin,
                                                        double lo, double hi) {
    // |k + delta|^2 scaled by 4 is an integer; group on it exactly.
    std::map<std::pair<bool, std::int64_t>, std::size_t> shells;
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const auto k = grid.modes(idx);
        std::int64_t key = 0;
        bool doubler = false;
        for (std::size_t a = 0; a < 3; ++a) {
            const std::int64_t shift2 = std::lround(2.0 * spin.shift[a]);
            const bool nyquist = shift2 == 0 && k[a] == -static_cast<long>(grid.n / 2);
            doubler = doubler || nyquist;
            const std::int64_t twice = nyquist ? 0 : 2 * k[a] + shift2;
            key += twice * twice;
        }
        ++shells[{doubler, key}];
    }
    const double c = grid.wavenumber_unit();
    std::map<double, std::size_t> spectrum;
    for (const auto& [shell, count] : shells) {
        const double mass = shell.first ? c * static_cast<double>(grid.n) : 0.0;
        const double mag = c * std::sqrt(static_cast<double>(shell.second)) / 2.0;
        if (shell.second == 0) {
            spectrum[mass] += 2 * count;
            continue;
        }
        spectrum[mass + mag] += count;
        spectrum[mass - mag] += count;
    }
    std::vector<FlatEigenvalue> out;
    for (const auto& [lambda, mult] : spectrum)
        if (lambda >= lo && lambda <= hi) out.push_back({lambda, mult});
    return out;
}

// Quaternionic structure J psi = i sigma_2 conj(psi), i.e. (psi_1, psi_2) ->
// (conj psi_2, -conj psi_1). In the trivialized gauge conjugation flips the
// shift, which is undone by the periodic phase exp(-i (2 pi / L) 2 delta . x).
inline SpinorField quaternionic_j(const SpinorField& psi) {
    SpinorField out(psi.grid, psi.spin);
    const double c = psi.grid.wavenumber_unit();
    const Vec3& d = psi.spin.shift;
    const bool periodic = d[0] == 0.0 && d[1] == 0.0 && d[2] == 0.0;
    for (std::size_t p = 0; p < psi.points(); ++p) {
        cplx phase(1.0, 0.0);
        if (!periodic) {
            const Vec3 x = psi.grid.point(p);
            const double arg = -c * 2.0 * (d[0] * x[0] + d[1] * x[1] + d[2] * x[2]);
            phase = cplx(std::cos(arg), std::sin(arg));
        }
        out.values[2 * p] = phase * std::conj(psi.values[2 * p + 1]);
        out.values[2 * p + 1] = -phase * std::conj(psi.values[2 * p]);
    }
    return out;
}

}  // namespace edflow
