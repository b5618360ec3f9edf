#pragma once

// Grid, field types and Fourier machinery for the flat 3-torus [0, L)^3.
//
// Scalars are real N^3 arrays. Spinors are rank-2 complex sections stored in
// the trivialized gauge psi~(x) = exp(-i (2 pi / L) delta . x) psi(x), which keeps
// every stored array periodic; the spin-structure shift delta reappears as a
// shifted Fourier momentum kappa = (2 pi / L)(k + delta).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "edflow/errors.hpp"

namespace edflow {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Reductions

namespace detail {

template <class T, class F>
T pairwise_reduce(std::size_t begin, std::size_t end, const F& term) {
    constexpr std::size_t block = 32;
    if (end - begin <= block) {
        T acc{};
        for (std::size_t i = begin; i < end; ++i) acc += term(i);
        return acc;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    return pairwise_reduce<T>(begin, mid, term) + pairwise_reduce<T>(mid, end, term);
}

}  // namespace detail

// Tree-ordered sum; result is independent of how the caller chunks work.
template <class T>
T pairwise_sum(std::span<const T> values) {
    return detail::pairwise_reduce<T>(0, values.size(), [&](std::size_t i) { return values[i]; });
}

template <class T, class F>
T pairwise_sum_of(std::size_t n, const F& term) {
    return detail::pairwise_reduce<T>(0, n, term);
}

// ---------------------------------------------------------------------------
// Grid and exponents

struct TorusGrid {
    std::size_t n = 8;
    double length = two_pi;

    TorusGrid() = default;
    TorusGrid(std::size_t points, double side = two_pi) : n(points), length(side) {
        if (n < 4 || n % 2 != 0)
            throw std::invalid_argument("TorusGrid: points per axis must be even and >= 4");
        if (!(length > 0.0) || !std::isfinite(length))
            throw std::invalid_argument("TorusGrid: side length must be positive");
    }

    std::size_t size() const noexcept { return n * n * n; }
    double spacing() const noexcept { return length / static_cast<double>(n); }
    double cell_volume() const noexcept {
        const double h = spacing();
        return h * h * h;
    }
    double volume() const noexcept { return length * length * length; }
    double wavenumber_unit() const noexcept { return two_pi / length; }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return (i * n + j) * n + k;
    }
    Vec3 point(std::size_t idx) const noexcept {
        const double h = spacing();
        const std::size_t k = idx % n;
        const std::size_t j = (idx / n) % n;
        const std::size_t i = idx / (n * n);
        return {h * static_cast<double>(i), h * static_cast<double>(j), h * static_cast<double>(k)};
    }
    // Signed mode number for FFT storage slot `slot` along one axis: [-N/2, N/2).
    long mode(std::size_t slot) const noexcept {
        const long s = static_cast<long>(slot);
        const long half = static_cast<long>(n / 2);
        return s < half ? s : s - static_cast<long>(n);
    }
    std::array<long, 3> modes(std::size_t idx) const noexcept {
        return {mode(idx / (n * n)), mode((idx / n) % n), mode(idx % n)};
    }
    std::size_t slot(long mode_number) const noexcept {
        const long nn = static_cast<long>(n);
        return static_cast<std::size_t>(((mode_number % nn) + nn) % nn);
    }

    friend bool operator==(const TorusGrid& a, const TorusGrid& b) {
        return a.n == b.n && a.length == b.length;
    }
};

// Conformal exponents for dimension m. At m = 3 all of them are integers.
struct ExponentTable {
    int m = 3;
    double p1, p2, p3, p4, p5, p6, p7, c_m;

    explicit ExponentTable(int dim = 3) : m(dim) {
        if (dim < 3) throw std::invalid_argument("ExponentTable: dimension must be >= 3");
        const double md = dim, d = md - 2.0;
        p1 = 2.0 / d;
        p2 = (4.0 - md) / d;
        p3 = (md + 2.0) / d;
        p4 = 4.0 / d;
        p5 = 2.0 * md / d;
        p6 = md / d;
        p7 = 2.0 * (md - 1.0) / d;
        c_m = 4.0 * (md - 1.0) / d;
    }
};

// ---------------------------------------------------------------------------
// Fields

struct ScalarField {
    TorusGrid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const TorusGrid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
    ScalarField(const TorusGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.size()) throw std::invalid_argument("ScalarField: size mismatch");
    }

    template <class F>
    static ScalarField sample(const TorusGrid& g, F&& f) {
        ScalarField out(g);
        for (std::size_t p = 0; p < g.size(); ++p) {
            const Vec3 x = g.point(p);
            out.values[p] = f(x[0], x[1], x[2]);
        }
        return out;
    }

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    double min() const { return *std::min_element(values.begin(), values.end()); }
    double max() const { return *std::max_element(values.begin(), values.end()); }
    double max_abs() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }
    bool finite() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }

    template <class F>
    ScalarField map(F&& f) const {
        ScalarField out(grid);
        for (std::size_t i = 0; i < size(); ++i) out.values[i] = f(values[i]);
        return out;
    }
    ScalarField pow(double e) const {
        return map([e](double v) { return std::pow(v, e); });
    }

    ScalarField& operator+=(const ScalarField& o) {
        for (std::size_t i = 0; i < size(); ++i) values[i] += o.values[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        for (std::size_t i = 0; i < size(); ++i) values[i] -= o.values[i];
        return *this;
    }
    ScalarField& operator*=(const ScalarField& o) {
        for (std::size_t i = 0; i < size(); ++i) values[i] *= o.values[i];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (double& v : values) v *= s;
        return *this;
    }
    ScalarField& operator+=(double s) {
        for (double& v : values) v += s;
        return *this;
    }
};

inline ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
inline ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
inline ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
inline ScalarField operator*(ScalarField a, double s) { return a *= s; }
inline ScalarField operator*(double s, ScalarField a) { return a *= s; }
inline ScalarField operator+(ScalarField a, double s) { return a += s; }
inline ScalarField operator-(ScalarField a) { return a *= -1.0; }
inline ScalarField operator/(ScalarField a, const ScalarField& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.values[i] /= b.values[i];
    return a;
}

// One of the eight spin structures of T^3: per-axis shift 0 or 1/2.
struct SpinStructure {
    Vec3 shift{0.5, 0.5, 0.5};

    SpinStructure() = default;
    explicit SpinStructure(Vec3 s) : shift(s) {
        for (double c : shift)
            if (c != 0.0 && c != 0.5)
                throw std::invalid_argument("SpinStructure: shift components must be 0 or 1/2");
    }
    static SpinStructure periodic() { return SpinStructure(Vec3{0.0, 0.0, 0.0}); }

    friend bool operator==(const SpinStructure& a, const SpinStructure& b) { return a.shift == b.shift; }
};

// values[2*p + c] holds component c at grid point p.
struct SpinorField {
    TorusGrid grid;
    SpinStructure spin;
    std::vector<cplx> values;

    SpinorField() = default;
    SpinorField(const TorusGrid& g, const SpinStructure& s) : grid(g), spin(s), values(2 * g.size()) {}
    SpinorField(const TorusGrid& g, const SpinStructure& s, std::vector<cplx> v)
        : grid(g), spin(s), values(std::move(v)) {
        if (values.size() != 2 * grid.size()) throw std::invalid_argument("SpinorField: size mismatch");
    }

    std::size_t points() const noexcept { return grid.size(); }
    std::size_t size() const noexcept { return values.size(); }
    cplx& at(std::size_t p, int c) { return values[2 * p + static_cast<std::size_t>(c)]; }
    const cplx& at(std::size_t p, int c) const { return values[2 * p + static_cast<std::size_t>(c)]; }

    bool finite() const {
        return std::all_of(values.begin(), values.end(),
                           [](const cplx& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
    }

    SpinorField& operator+=(const SpinorField& o) {
        for (std::size_t i = 0; i < size(); ++i) values[i] += o.values[i];
        return *this;
    }
    SpinorField& operator-=(const SpinorField& o) {
        for (std::size_t i = 0; i < size(); ++i) values[i] -= o.values[i];
        return *this;
    }
    SpinorField& operator*=(cplx s) {
        for (auto& v : values) v *= s;
        return *this;
    }
    // Pointwise multiplication by a real scalar field.
    SpinorField& operator*=(const ScalarField& f) {
        for (std::size_t p = 0; p < points(); ++p) {
            values[2 * p] *= f.values[p];
            values[2 * p + 1] *= f.values[p];
        }
        return *this;
    }
};

inline SpinorField operator+(SpinorField a, const SpinorField& b) { return a += b; }
inline SpinorField operator-(SpinorField a, const SpinorField& b) { return a -= b; }
inline SpinorField operator*(SpinorField a, cplx s) { return a *= s; }
inline SpinorField operator*(cplx s, SpinorField a) { return a *= s; }
inline SpinorField operator*(const ScalarField& f, SpinorField a) { return a *= f; }

// Pointwise |psi(x)|^2.
inline ScalarField pointwise_norm2(const SpinorField& psi) {
    ScalarField out(psi.grid);
    for (std::size_t p = 0; p < psi.points(); ++p)
        out.values[p] = std::norm(psi.values[2 * p]) + std::norm(psi.values[2 * p + 1]);
    return out;
}

// ---------------------------------------------------------------------------
// Discrete Fourier transform (FFTW backed)

namespace detail {

// FFTW planning is not thread safe; plans are created once per shape under a
// lock and executed through the new-array interface afterwards.
class FftPlans {
public:
    static FftPlans& instance() {
        static FftPlans plans;
        return plans;
    }

    // `howmany` interleaved transforms of an n^3 array (stride = howmany).
    fftw_plan get(std::size_t n, std::size_t howmany, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto key = std::make_tuple(n, howmany, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        const int dims[3] = {static_cast<int>(n), static_cast<int>(n), static_cast<int>(n)};
        const std::size_t total = n * n * n * howmany;
        fftw_complex* buf = fftw_alloc_complex(total);
        fftw_plan plan = fftw_plan_many_dft(3, dims, static_cast<int>(howmany), buf, nullptr,
                                            static_cast<int>(howmany), 1, buf, nullptr,
                                            static_cast<int>(howmany), 1, sign,
                                            FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        plans_.emplace(key, plan);
        return plan;
    }

    ~FftPlans() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

private:
    FftPlans() = default;
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

inline void fft_inplace(std::vector<cplx>& data, std::size_t n, std::size_t howmany, int sign) {
    fftw_plan plan = FftPlans::instance().get(n, howmany, sign);
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, ptr, ptr);
}

}  // namespace detail

// Fourier coefficients c_k with f(x) = sum_k c_k exp(i (2 pi / L) k . x),
// stored in FFT slot order; use `at` to index by signed mode.
struct ScalarSpectrum {
    TorusGrid grid;
    std::vector<cplx> coeffs;

    cplx at(long k1, long k2, long k3) const {
        return coeffs[grid.index(grid.slot(k1), grid.slot(k2), grid.slot(k3))];
    }
};

struct SpinorSpectrum {
    TorusGrid grid;
    SpinStructure spin;
    std::vector<cplx> coeffs;  // [slot][component]

    cplx at(long k1, long k2, long k3, int c) const {
        return coeffs[2 * grid.index(grid.slot(k1), grid.slot(k2), grid.slot(k3)) + static_cast<std::size_t>(c)];
    }
};

inline ScalarSpectrum fourier_transform(const ScalarField& f) {
    std::vector<cplx> data(f.values.begin(), f.values.end());
    detail::fft_inplace(data, f.grid.n, 1, FFTW_FORWARD);
    const double scale = 1.0 / static_cast<double>(f.grid.size());
    for (auto& c : data) c *= scale;
    return {f.grid, std::move(data)};
}

inline ScalarField inverse_transform(const ScalarSpectrum& s) {
    std::vector<cplx> data = s.coeffs;
    detail::fft_inplace(data, s.grid.n, 1, FFTW_BACKWARD);
    ScalarField out(s.grid);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = data[i].real();
    return out;
}

inline SpinorSpectrum fourier_transform(const SpinorField& psi) {
    std::vector<cplx> data = psi.values;
    detail::fft_inplace(data, psi.grid.n, 2, FFTW_FORWARD);
    const double scale = 1.0 / static_cast<double>(psi.grid.size());
    for (auto& c : data) c *= scale;
    return {psi.grid, psi.spin, std::move(data)};
}

inline SpinorField inverse_transform(const SpinorSpectrum& s) {
    std::vector<cplx> data = s.coeffs;
    detail::fft_inplace(data, s.grid.n, 2, FFTW_BACKWARD);
    return SpinorField(s.grid, s.spin, std::move(data));
}

// Applies a Fourier multiplier m(k) (k = signed integer mode triple) to a real
// field. The multiplier must respect m(-k) = conj(m(k)) for a real result; the
// imaginary part of the inverse transform is discarded.
template <class Multiplier>
ScalarField apply_multiplier(const ScalarField& f, Multiplier&& m) {
    ScalarSpectrum s = fourier_transform(f);
    for (std::size_t idx = 0; idx < s.coeffs.size(); ++idx) s.coeffs[idx] *= m(f.grid.modes(idx));
    return inverse_transform(s);
}

// ---------------------------------------------------------------------------
// Quadrature and inner products

inline double quadrature(const ScalarField& f) {
    return f.grid.cell_volume() * pairwise_sum(std::span<const double>(f.values));
}

inline double l2_norm(const ScalarField& f) {
    const double s = pairwise_sum_of<double>(f.size(), [&](std::size_t i) { return f.values[i] * f.values[i]; });
    return std::sqrt(f.grid.cell_volume() * s);
}

inline double l2_inner(const ScalarField& a, const ScalarField& b) {
    return a.grid.cell_volume() *
           pairwise_sum_of<double>(a.size(), [&](std::size_t i) { return a.values[i] * b.values[i]; });
}

// Complex L^2 product  int (psi, phi) dvol, linear in the first argument.
inline cplx spinor_inner_complex(const SpinorField& psi, const SpinorField& phi) {
    return psi.grid.cell_volume() *
           pairwise_sum_of<cplx>(psi.size(), [&](std::size_t i) { return psi.values[i] * std::conj(phi.values[i]); });
}

inline double spinor_l2_norm(const SpinorField& psi) {
    const double s = pairwise_sum_of<double>(psi.size(), [&](std::size_t i) { return std::norm(psi.values[i]); });
    return std::sqrt(psi.grid.cell_volume() * s);
}

inline void require_positive(const ScalarField& u) {
    const double m = u.min();
    if (!(m > 0.0)) throw NonPositiveConformalFactor(m);
}

// Complex weighted product  int u^{2/(m-2)} (psi, phi) dvol.
inline cplx weighted_spinor_inner_complex(const ScalarField& u, const SpinorField& psi, const SpinorField& phi,
                                          const ExponentTable& exps = ExponentTable{}) {
    require_positive(u);
    const ScalarField w = u.pow(exps.p1);
    return psi.grid.cell_volume() * pairwise_sum_of<cplx>(psi.points(), [&](std::size_t p) {
               return w.values[p] * (psi.values[2 * p] * std::conj(phi.values[2 * p]) +
                                     psi.values[2 * p + 1] * std::conj(phi.values[2 * p + 1]));
           });
}

// Real weighted product (psi, phi)_2^u = Re int u^{2/(m-2)} (psi, phi) dvol.
inline double weighted_spinor_inner(const ScalarField& u, const SpinorField& psi, const SpinorField& phi,
                                    const ExponentTable& exps = ExponentTable{}) {
    if (!(psi.grid == phi.grid) || !(psi.spin == phi.spin) || !(u.grid == psi.grid))
        throw std::invalid_argument("weighted_spinor_inner: fields live on different grids or spin structures");
    return weighted_spinor_inner_complex(u, psi, phi, exps).real();
}

inline double weighted_norm(const ScalarField& u, const SpinorField& psi, const ExponentTable& exps = ExponentTable{}) {
    return std::sqrt(weighted_spinor_inner(u, psi, psi, exps));
}

// Random real trigonometric polynomial with modes |k_a| <= max_mode, scaled so
// that max |f| = amplitude. Deterministic for a given generator state.
inline ScalarField random_band_limited(const TorusGrid& grid, std::mt19937_64& rng, int max_mode = 2,
                                       double amplitude = 1.0) {
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    ScalarField f(grid);
    const double c = grid.wavenumber_unit();
    for (int a = -max_mode; a <= max_mode; ++a)
        for (int b = -max_mode; b <= max_mode; ++b)
            for (int d = 0; d <= max_mode; ++d) {
                if (a == 0 && b == 0 && d == 0) continue;
                const double ca = coef(rng), sa = coef(rng);
                for (std::size_t p = 0; p < grid.size(); ++p) {
                    const Vec3 x = grid.point(p);
                    const double arg = c * (a * x[0] + b * x[1] + d * x[2]);
                    f.values[p] += ca * std::cos(arg) + sa * std::sin(arg);
                }
            }
    const double peak = f.max_abs();
    if (peak > 0.0) f *= amplitude / peak;
    return f;
}

}  // namespace edflow
