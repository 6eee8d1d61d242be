#include <gtest/gtest.h>

#include <random>

#include "crittime/quadtank.hpp"
#include "crittime/qc_sets.hpp"

using namespace crittime;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

QuadraticForm unit_disc() {
    Matrix S = Matrix::Identity(3, 3);
    S.topLeftCorner(2, 2) *= -1.0;
    return QuadraticForm(2, S);
}

double max_asym(const QuadraticForm& f) { return (f.matrix() - f.matrix().transpose()).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(EvalSigma, UnitDiscCenterAndBoundary) {
    EXPECT_DOUBLE_EQ(eval_sigma(unit_disc(), vec({0, 0})), 1.0);
    EXPECT_DOUBLE_EQ(eval_sigma(unit_disc(), vec({1, 0})), 0.0);
}

TEST(EvalSigma, DisturbanceEllipsoidAtOrigin) {
    const auto f = ellipsoid(quadtank_data::ellipsoid1_Q(), quadtank_data::ellipsoid1_s(), quadtank_data::ellipsoid1_r);
    EXPECT_DOUBLE_EQ(eval_sigma(f, vec({0, 0})), -1.20e-8);
}

TEST(EvalSigma, DimensionMismatchThrows) {
    EXPECT_THROW(eval_sigma(unit_disc(), vec({1, 2, 3})), ContractViolation);
}

TEST(QuadraticForm, RejectsAsymmetricOrMisshapen) {
    Matrix S = Matrix::Identity(3, 3);
    S(0, 1) = 1e-6;
    EXPECT_THROW(QuadraticForm(2, S), ContractViolation);
    EXPECT_THROW(QuadraticForm(3, Matrix::Identity(3, 3)), ContractViolation);
}

TEST(Ellipsoid, IntervalForm) {
    const auto f = ellipsoid(-Matrix::Identity(1, 1), Vector::Zero(1), 1.0);
    EXPECT_GE(eval_sigma(f, vec({0.5})), 0.0);
    EXPECT_LT(eval_sigma(f, vec({1.5})), 0.0);
}

TEST(Ellipsoid, ShapeMismatchThrows) {
    EXPECT_THROW(ellipsoid(Matrix::Identity(2, 2), Vector::Zero(3), 0.0), ContractViolation);
}

TEST(Ellipsoid, DegenerateCaseIsHalfspace) {
    const Vector H = vec({1.0, -2.0});
    const double h = 0.7;
    const auto a = ellipsoid(Matrix::Zero(2, 2), -H, 2 * h);
    const auto b = halfspace(H, h);
    EXPECT_EQ((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ellipsoid, NormalizationProperty) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + t % 5;
        Matrix Q(n, n);
        for (auto& x : Q.reshaped()) x = N(rng);
        Q = (0.5 * (Q + Q.transpose())).eval();
        Vector s(n), z(n);
        for (auto& x : s) x = N(rng);
        for (auto& x : z) x = N(rng);
        const double r = N(rng);
        const double expected = z.dot(Q * z) + 2 * s.dot(z) + r;
        EXPECT_NEAR(eval_sigma(ellipsoid(Q, s, r), z), expected, 1e-12 * (1 + std::abs(expected)));
    }
}

TEST(Halfspace, Examples) {
    const auto f = halfspace(vec({1}), 10);
    EXPECT_DOUBLE_EQ(eval_sigma(f, vec({5})), 10.0);
    EXPECT_DOUBLE_EQ(eval_sigma(f, vec({11})), -2.0);
    EXPECT_DOUBLE_EQ(eval_sigma(halfspace(vec({1, 0}), 0), vec({-1, 3})), 2.0);
    EXPECT_DOUBLE_EQ(eval_sigma(halfspace(vec({0, 1}), 0), vec({7, 0})), 0.0);
}

TEST(Halfspace, ZeroNormalThrows) { EXPECT_THROW(halfspace(Vector::Zero(2), 1.0), ContractViolation); }

TEST(Halfspace, MembershipMatchesInequality) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-3, 3);
    std::uniform_int_distribution<int> I(-4, 4);
    for (int t = 0; t < 1000; ++t) {
        const int n = 1 + t % 4;
        Vector H(n), z(n);
        // Small integers keep the comparison exact in floating point.
        for (auto& x : H) x = I(rng);
        if (H.cwiseAbs().maxCoeff() == 0.0) H(0) = 1;
        for (auto& x : z) x = I(rng);
        const double h = I(rng);
        const SetDescription set(n, {halfspace(H, h)}, {});
        EXPECT_EQ(contains(set, z, 0.0), H.dot(z) <= h);
        for (auto& x : z) x = U(rng);
        const double hr = U(rng);
        const SetDescription setr(n, {halfspace(H, hr)}, {});
        if (std::abs(H.dot(z) - hr) > 1e-12) {
            EXPECT_EQ(contains(setr, z, 0.0), H.dot(z) <= hr);
        }
    }
}

TEST(Box, HalfspaceCountAndMembership) {
    const auto b = box(vec({-1, -1}), vec({1, 1}));
    EXPECT_EQ(b.qcs().size(), 4u);
    EXPECT_TRUE(b.qces().empty());
    EXPECT_TRUE(contains(b, vec({0.5, -0.5})));
    EXPECT_FALSE(contains(b, vec({1.1, 0})));
    EXPECT_EQ(quadtank_data::initial_set().qcs().size(), 12u);
}

TEST(Box, DegenerateBoxIsOrigin) {
    const auto b = box(Vector::Zero(2), Vector::Zero(2));
    EXPECT_TRUE(contains(b, Vector::Zero(2), 0.0));
    EXPECT_FALSE(contains(b, vec({1e-3, 0}), 0.0));
}

TEST(Box, LowerAboveUpperThrows) { EXPECT_THROW(box(vec({1}), vec({0})), ContractViolation); }

TEST(Box, AgreesWithComponentwiseComparison) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-2, 2);
    for (int t = 0; t < 500; ++t) {
        const int n = 1 + t % 6;
        Vector lo(n), hi(n), z(n);
        for (int i = 0; i < n; ++i) {
            const double a = U(rng), b = U(rng);
            lo(i) = std::min(a, b);
            hi(i) = std::max(a, b);
            z(i) = U(rng);
        }
        const bool inside = (z.array() >= lo.array()).all() && (z.array() <= hi.array()).all();
        EXPECT_EQ(contains(box(lo, hi), z, 0.0), inside);
    }
}

TEST(Hyperplane, Examples) {
    const auto f = hyperplane(vec({1}), 0);
    EXPECT_EQ(eval_sigma(f, vec({0})), 0.0);
    EXPECT_NE(eval_sigma(f, vec({1})), 0.0);
    EXPECT_EQ(eval_sigma(hyperplane(vec({1, 1}), 2), vec({1, 1})), 0.0);
    EXPECT_THROW(hyperplane(Vector::Zero(3), 1.0), ContractViolation);
}

TEST(Singleton, Exactness) {
    const auto s = singleton(vec({3, -1}));
    EXPECT_EQ(s.qces().size(), 2u);
    EXPECT_TRUE(s.qcs().empty());
    EXPECT_TRUE(contains(s, vec({3, -1}), 0.0));
    EXPECT_FALSE(contains(s, vec({3, 0}), 0.0));
    EXPECT_TRUE(contains(singleton(Vector::Zero(3)), Vector::Zero(3), 0.0));
    EXPECT_TRUE(contains(singleton(vec({2})), vec({2 + 1e-12}), 1e-9));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-5, 5);
    for (int t = 0; t < 200; ++t) {
        const Vector c = vec({U(rng), U(rng)});
        EXPECT_TRUE(contains(singleton(c), c, 0.0));
        Vector z = c;
        z(t % 2) += 1e-6;
        EXPECT_FALSE(contains(singleton(c), z, 0.0));
    }
}

TEST(Zonotope, Examples) {
    const auto unit = zonotope_square(Vector::Zero(2), Matrix::Identity(2, 2));
    EXPECT_TRUE(contains(unit, vec({1, -1})));
    EXPECT_FALSE(contains(unit, vec({1.01, 0})));
    Matrix G = Matrix::Zero(2, 2);
    G.diagonal() << 2, 1;
    EXPECT_NEAR(eval_sigma(zonotope_square(vec({1, 0}), G).qcs()[0], vec({3, 0})), 0.0, 1e-12);
    Matrix G2(2, 2);
    G2 << 1, 0, 1, 1;
    const auto z2 = zonotope_square(Vector::Zero(2), G2);
    for (const auto& f : z2.qcs()) EXPECT_NEAR(eval_sigma(f, vec({1, 2})), 0.0, 1e-12);
}

TEST(Zonotope, UnsupportedShapes) {
    EXPECT_THROW(zonotope_square(Vector::Zero(2), Matrix::Identity(2, 3)), UnsupportedShape);
    Matrix singular = Matrix::Ones(2, 2);
    EXPECT_THROW(zonotope_square(Vector::Zero(2), singular), UnsupportedShape);
}

TEST(Zonotope, SubstitutionProperty) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 100; ++t) {
        const int n = 1 + t % 4;
        Matrix G = Matrix::Identity(n, n);
        for (auto& x : G.reshaped()) x += 0.4 * U(rng);
        Vector c(n);
        for (auto& x : c) x = U(rng);
        const auto set = zonotope_square(c, G);
        for (int s = 0; s < 20; ++s) {
            Vector lam(n);
            for (auto& x : lam) x = U(rng);
            EXPECT_TRUE(contains(set, c + G * lam, 1e-9));
            lam(s % n) = (s % 2 ? 1.0 : -1.0) * 1.01;
            EXPECT_FALSE(contains(set, c + G * lam, 1e-9));
        }
    }
}

TEST(Constructors, SymmetryInvariant) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + t % 5;
        Vector a(n), b(n);
        for (auto& x : a) x = U(rng) + 2.0;
        for (auto& x : b) x = U(rng);
        EXPECT_LE(max_asym(halfspace(a, U(rng))), 1e-12);
        EXPECT_LE(max_asym(hyperplane(a, U(rng))), 1e-12);
        const auto boxed = box(b, b + a);
        for (const auto& f : boxed.qcs()) EXPECT_LE(max_asym(f), 1e-12);
        const auto point = singleton(b);
        for (const auto& f : point.qces()) EXPECT_LE(max_asym(f), 1e-12);
        Matrix G = Matrix::Identity(n, n) * 2.0;
        G(0, n - 1) += U(rng);
        const auto zono = zonotope_square(b, G);
        for (const auto& f : zono.qcs()) EXPECT_LE(max_asym(f), 1e-12);
    }
}

TEST(SetDescription, Invariants) {
    EXPECT_THROW(SetDescription(2, {}, {}), ContractViolation);
    EXPECT_THROW(SetDescription(3, {unit_disc()}, {}), ContractViolation);
}

TEST(Contains, DisturbanceSetAtRectangleCorner) {
    const auto W = quadtank_data::deviation_set();
    const Vector wmax = quadtank_data::deviation_max();
    // Verdict follows from direct evaluation of every form.
    bool all = true;
    for (const auto& f : W.qcs()) all = all && eval_sigma(f, wmax) >= -kDefaultMembershipTol;
    EXPECT_EQ(contains(W, wmax), all);
    EXPECT_THROW(contains(W, Vector::Zero(5)), ContractViolation);
}

TEST(AxisBounds, BoxesAndSingletons) {
    const auto b = axis_bounds(box(vec({-1, 2}), vec({3, 4})));
    EXPECT_TRUE(b.bounded());
    EXPECT_DOUBLE_EQ(b.lower(0), -1);
    EXPECT_DOUBLE_EQ(b.upper(1), 4);
    const auto s = axis_bounds(singleton(vec({0.5})));
    EXPECT_DOUBLE_EQ(s.lower(0), 0.5);
    EXPECT_DOUBLE_EQ(s.upper(0), 0.5);
    EXPECT_FALSE(axis_bounds(SetDescription(2, {unit_disc()}, {})).bounded());
}
