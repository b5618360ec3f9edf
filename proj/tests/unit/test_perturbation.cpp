#include <gtest/gtest.h>

#include "edflow/perturbation.hpp"

using namespace edflow;

namespace {

ScalarField bumpy(const TorusGrid& g) {
    const double k = g.wavenumber_unit();
    return ScalarField::sample(g, [k](double x, double y, double z) {
        return 1.0 + 0.3 * std::cos(k * x) + 0.2 * std::cos(k * (y + z));
    });
}

EigenPair simple_pair(const ScalarField& u) {
    const SpectrumWindow w = solve_window(u, SpinStructure{}, 0.9, 8);
    return w.pairs[w.clusters[simplicity_gap(w, 0.9).cluster_index].first];
}

}  // namespace

TEST(LambdaDot, UniformScalingClosedForm) {
    const TorusGrid g(6);
    const ScalarField u = bumpy(g);
    const EigenPair p = simple_pair(u);
    EXPECT_NEAR(lambda_dot(u, 0.5 * u, p), -2.0 * 0.5 * p.lambda, 1e-12);
}

TEST(LambdaDot, GrowthRateBoundsTheDerivative) {
    const TorusGrid g(6);
    const ScalarField u = bumpy(g);
    const ScalarField ud = ScalarField::sample(g, [](double x, double, double) { return std::sin(x); });
    const EigenPair p = simple_pair(u);
    EXPECT_LE(std::abs(lambda_dot(u, ud, p)), growth_rate(u, ud) * std::abs(p.lambda) + 1e-14);
}

TEST(ProjectOut, IsIdempotentAndOrthogonal) {
    const TorusGrid g(6);
    const ScalarField u = bumpy(g);
    const EigenPair p = simple_pair(u);
    SpinorField r(g, SpinStructure{});
    for (std::size_t i = 0; i < r.size(); ++i) r.values[i] = cplx(std::sin(0.1 * i), std::cos(0.3 * i));
    const SpinorField once = project_out(u, p, r);
    EXPECT_LT(spinor_l2_norm(project_out(u, p, once) - once), 1e-12 * spinor_l2_norm(once));
    EXPECT_LT(std::abs(weighted_spinor_inner_complex(u, p.psi, once)), 1e-12);
    EXPECT_LT(std::abs(weighted_spinor_inner_complex(u, quaternionic_j(p.psi), once)), 1e-12);
}

TEST(Resolvent, RejectsMultipleEigenvalue) {
    const TorusGrid g(4);
    const ScalarField u(g, 1.0);
    const SpectrumWindow w = solve_window(u, SpinStructure{}, 0.9, 8);
    SpinorField r(g, SpinStructure{});
    for (std::size_t i = 0; i < r.size(); ++i) r.values[i] = cplx(1.0 + 0.1 * i, 0.0);
    EXPECT_THROW(projected_resolvent(u, w.pairs[0], r), SmallGap);
}

TEST(PsiDot, ZeroEigenvalueIsRejected) {
    const TorusGrid g(4);
    const ScalarField u(g, 1.0);
    const SpectrumWindow w = solve_window(u, SpinStructure::periodic(), 0.0, 2);
    ASSERT_NEAR(w.pairs[0].lambda, 0.0, 1e-12);
    EigenPair zero = w.pairs[0];
    zero.lambda = 0.0;
    EXPECT_THROW(psi_dot(u, u, zero, 0.0), ZeroEigenvalue);
}

TEST(PsiDot, UniformScalingOnlyRescales) {
    // u -> (1 + s t) u keeps the eigenspinor direction; psi' = -(p1 s / 2) psi.
    const TorusGrid g(6);
    const ScalarField u = bumpy(g);
    const EigenPair p = simple_pair(u);
    const double s = 0.4;
    const double ld = lambda_dot(u, s * u, p);
    const SpinorField pd = psi_dot(u, s * u, p, ld);
    EXPECT_LT(spinor_l2_norm(pd + cplx(s, 0.0) * p.psi), 1e-9 * spinor_l2_norm(p.psi));
    EXPECT_NEAR(normalization_rate(u, s * u, p.psi, pd), 0.0, 1e-10);
}

TEST(EigenPath, FollowsUniformScalingExactly) {
    const TorusGrid g(6);
    const ScalarField u0 = bumpy(g);
    const EigenPair p = simple_pair(u0);
    const FieldPath u_of = [u0](double t) { return (1.0 + t) * u0; };
    const FieldPath ud_of = [u0](double) { return u0; };
    EigenPair q = p;
    double t = 0.0;
    for (int n = 0; n < 10; ++n, t += 0.01) q = eigenpath_step(u_of, ud_of, t, q, 0.01);
    EXPECT_NEAR(q.lambda, p.lambda / ((1.0 + t) * (1.0 + t)), 1e-9);
    EXPECT_LT(constraint_residual(u_of(t), q.lambda, q.psi), 1e-8);
}

TEST(QuaternionicAlign, RecoversReference) {
    const TorusGrid g(6);
    const ScalarField u = bumpy(g);
    const EigenPair p = simple_pair(u);
    const cplx a = std::polar(0.6, 0.7), b = std::polar(0.8, -1.1);
    const SpinorField rotated = a * p.psi + b * quaternionic_j(p.psi);
    const SpinorField aligned = quaternionic_align(u, rotated, p.psi);
    EXPECT_LT(spinor_l2_norm(aligned - p.psi), 1e-10 * spinor_l2_norm(p.psi));
}

TEST(GrowthBound, AcceptsAndRejects) {
    std::vector<double> t{0.0, 0.1, 0.2}, ok{1.0, 1.05, 1.1}, bad{1.0, 2.0, 3.0};
    EXPECT_TRUE(growth_bound_check(t, ok, 1.0, 1.0).pass);
    EXPECT_FALSE(growth_bound_check(t, bad, 1.0, 1.0).pass);
}

TEST(Slopes, LogLogSlopeOfPowerLaw) {
    std::vector<double> h{0.1, 0.05, 0.025}, e;
    for (double x : h) e.push_back(3.0 * x * x * x);
    EXPECT_NEAR(loglog_slope(h, e), 3.0, 1e-12);
}
