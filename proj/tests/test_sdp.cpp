#include <gtest/gtest.h>

#include <random>

#include "crittime/demo.hpp"
#include "crittime/lifting.hpp"
#include "crittime/quadtank.hpp"
#include "crittime/sdp.hpp"

using namespace crittime;

namespace {

// Is {|z| <= r_in} inside {|z - c| <= r_out} (2-D discs)?
FeasibilityProblem disc_problem(double r_in, const Vector& c, double r_out) {
    Matrix outer = Matrix::Zero(3, 3);
    outer.topLeftCorner(2, 2) = -Matrix::Identity(2, 2);
    outer.block(0, 2, 2, 1) = c;
    outer.block(2, 0, 1, 2) = c.transpose();
    outer(2, 2) = r_out * r_out - c.squaredNorm();
    Matrix inner = Matrix::Zero(3, 3);
    inner.topLeftCorner(2, 2) = -Matrix::Identity(2, 2);
    inner(2, 2) = r_in * r_in;
    return s_procedure(QuadraticForm(2, outer), {QuadraticForm(2, inner)}, {});
}

}  // namespace

TEST(MinEigenvalue, Basics) {
    Matrix M(2, 2);
    M << 2, 1, 1, 2;
    EXPECT_NEAR(min_eigenvalue(M), 1.0, 1e-12);
    EXPECT_TRUE(std::isinf(min_eigenvalue(Matrix(0, 0))));
}

TEST(Backend, DiscContainment) {
    const Vector c = (Vector(2) << 0.3, 0.0).finished();
    const auto inside = solve_feasibility(disc_problem(1.0, c, 1.5));
    ASSERT_EQ(inside.verdict, Verdict::Feasible);
    EXPECT_TRUE(verify_certificate(disc_problem(1.0, c, 1.5), *inside.multipliers, 1e-7));
    EXPECT_EQ(solve_feasibility(disc_problem(1.0, c, 1.2)).verdict, Verdict::Infeasible);
}

TEST(Backend, DiscGridMatchesGeometry) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int decided = 0;
    for (int t = 0; t < 30; ++t) {
        const double r_in = 0.5 + U(rng), r_out = 0.5 + 2.0 * U(rng);
        const double ang = 6.283 * U(rng), dist = U(rng);
        const Vector c = (Vector(2) << dist * std::cos(ang), dist * std::sin(ang)).finished();
        const double gap = r_out - (dist + r_in);
        if (std::abs(gap) < 1e-3) continue;
        const auto out = solve_feasibility(disc_problem(r_in, c, r_out));
        EXPECT_EQ(out.verdict, gap > 0 ? Verdict::Feasible : Verdict::Infeasible) << "case " << t;
        ++decided;
    }
    EXPECT_GT(decided, 20);
}

TEST(Verify, RejectsSignViolationsAndIndefiniteness) {
    const Vector c = Vector::Zero(2);
    const auto p = disc_problem(1.0, c, 2.0);
    EXPECT_TRUE(verify_certificate(p, Vector::Constant(1, 1.0), 1e-9));
    EXPECT_FALSE(verify_certificate(p, Vector::Constant(1, -0.1), 1e-9));
    EXPECT_FALSE(verify_certificate(p, Vector::Constant(1, 10.0), 1e-9));
    EXPECT_THROW(verify_certificate(p, Vector::Zero(2), 1e-9), ContractViolation);
    EXPECT_FALSE(sign_mask_holds(p, Vector::Constant(1, std::nan("")), 1e-9));
}

TEST(Backend, FreeMultiplierOnEquality) {
    // z = 1 implies 2 - z >= 0; needs a free multiplier on the equality.
    Matrix target(2, 2), eq(2, 2);
    target << 0, -0.5, -0.5, 2;
    eq << 0, 0.5, 0.5, -1;
    const auto p = s_procedure(QuadraticForm(1, target), {}, {QuadraticForm(1, eq)});
    EXPECT_EQ(solve_feasibility(p).verdict, Verdict::Feasible);
    Matrix bad(2, 2);
    bad << 0, -0.5, -0.5, 0.5;  // 0.5 - z >= 0 fails at z = 1
    EXPECT_EQ(solve_feasibility(s_procedure(QuadraticForm(1, bad), {}, {QuadraticForm(1, eq)})).verdict,
              Verdict::Infeasible);
}

TEST(Backend, Deterministic) {
    const auto sc = build_scenario(ScenarioKind::WorstCase, BenchConfig{}, 0.7, 0.6);
    const auto p = horizon_problem(LiftingContext(sc.model, 3), sc, 0);
    const auto a = solve_feasibility(p), b = solve_feasibility(p);
    ASSERT_EQ(a.verdict, b.verdict);
    EXPECT_EQ(a.iterations, b.iterations);
    if (a.multipliers) {
        EXPECT_EQ(*a.multipliers, *b.multipliers);
    }
}

TEST(Backend, DenseAndLowRankAgree) {
    const InteriorPointBackend dense(false), lifted(true);
    const auto sc = scalar_demo();
    for (int k = 1; k <= 2; ++k) {
        for (int s = 0; s < 2; ++s) {
            const auto p = horizon_problem(LiftingContext(sc.model, k), sc, s);
            EXPECT_EQ(solve_feasibility(p, {}, dense).verdict, solve_feasibility(p, {}, lifted).verdict);
        }
    }
    const auto q = build_scenario(ScenarioKind::DoS, BenchConfig{}, 0.7, 0.55);
    const auto p = horizon_problem(LiftingContext(q.model, 2), q, 0);
    EXPECT_EQ(solve_feasibility(p, {}, dense).verdict, solve_feasibility(p, {}, lifted).verdict);
}

TEST(Backend, FactoryNames) {
    EXPECT_EQ(make_backend("ipm")->name(), "ipm");
    EXPECT_EQ(make_backend("dense-ipm")->name(), "dense-ipm");
    EXPECT_THROW(make_backend("mosek"), ContractViolation);
    SolveOptions bad;
    bad.feas_tol = 0.0;
    EXPECT_THROW(solve_feasibility(disc_problem(1.0, Vector::Zero(2), 2.0), bad), ContractViolation);
}

TEST(Backend, FeasibleVerdictCarriesVerifiedMultipliers) {
    const auto sc = build_scenario(ScenarioKind::UpperSaturation, BenchConfig{}, 0.75, 0.55);
    for (int s = 0; s < 8; ++s) {
        const auto p = horizon_problem(LiftingContext(sc.model, 2), sc, s);
        const auto out = solve_feasibility(p);
        if (out.verdict == Verdict::Feasible) {
            ASSERT_TRUE(out.multipliers);
            EXPECT_TRUE(verify_certificate(p, *out.multipliers, SolveOptions{}.feas_tol));
        }
        EXPECT_NE(out.verdict, Verdict::NumericalFailure);
    }
}
