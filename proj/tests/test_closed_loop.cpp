#include <gtest/gtest.h>

#include <random>

#include "crittime/closed_loop.hpp"
#include "crittime/demo.hpp"
#include "crittime/quadtank.hpp"

using namespace crittime;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    Matrix M(r, c);
    for (auto& x : M.reshaped()) x = N(rng);
    return M;
}

struct RandomLoop {
    PlantModel plant;
    ControllerModel ctrl;
    Matrix gu, ga;
};

RandomLoop random_loop(std::mt19937_64& rng, int n, int l, int m, int p, int ma, int nw, int nv) {
    RandomLoop r;
    r.plant = {random_matrix(rng, n, n, 0.4), random_matrix(rng, n, m), random_matrix(rng, n, nw),
               random_matrix(rng, p, n), random_matrix(rng, p, nv)};
    r.ctrl = {random_matrix(rng, l, l, 0.4), random_matrix(rng, l, p), random_matrix(rng, m, l),
              random_matrix(rng, m, p)};
    r.gu = random_matrix(rng, m, m);
    r.ga = random_matrix(rng, m, ma);
    return r;
}

SetDescription unit_box(int d) { return box(-Vector::Ones(d), Vector::Ones(d)); }

}  // namespace

TEST(Assemble, ScalarReconstruction) {
    PlantModel plant{Matrix::Constant(1, 1, 0.9), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                     Matrix::Zero(1, 1)};
    ControllerModel ctrl{Matrix::Zero(0, 0), Matrix::Zero(0, 1), Matrix::Zero(1, 0), Matrix::Constant(1, 1, -0.5)};
    AnomalyModel an(Matrix::Identity(1, 1), Matrix::Zero(1, 1), unit_box(1));
    const auto cl = assemble(plant, ctrl, an);
    EXPECT_DOUBLE_EQ(cl.A(0, 0), 0.4);
    EXPECT_EQ(cl.dims.nx(), 1);
    EXPECT_EQ(cl.dims.nd(), 2);
}

TEST(Assemble, DimensionErrors) {
    std::mt19937_64 rng(1);
    auto r = random_loop(rng, 3, 2, 2, 2, 1, 3, 2);
    AnomalyModel an(r.gu, r.ga, unit_box(1));
    PlantModel bad = r.plant;
    bad.B = Matrix::Zero(2, 2);
    EXPECT_THROW(assemble(bad, r.ctrl, an), ContractViolation);
    ControllerModel badc = r.ctrl;
    badc.D = Matrix::Zero(1, 2);
    EXPECT_THROW(assemble(r.plant, badc, an), ContractViolation);
    EXPECT_THROW(AnomalyModel(Matrix::Identity(2, 2), Matrix::Zero(2, 2), unit_box(1)), ContractViolation);
    EXPECT_THROW(AnomalyModel(Matrix::Identity(3, 3), Matrix::Zero(2, 1), unit_box(1)), ContractViolation);
}

// The closed loop must reproduce plant and controller stepped separately.
TEST(Assemble, CoSimulationAgreement) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + trial % 4, l = trial % 3, m = 1 + trial % 2, p = 1 + (trial / 2) % 3;
        const int ma = 1 + trial % 2, nw = trial % 3, nv = (trial + 1) % 3;
        auto r = random_loop(rng, n, l, m, p, ma, nw, nv);
        AnomalyModel an(r.gu, r.ga, unit_box(ma));
        const auto cl = assemble(r.plant, r.ctrl, an);
        Vector x = random_matrix(rng, n, 1), xi = random_matrix(rng, l, 1);
        Vector xbar(n + l);
        xbar << x, xi;
        for (int k = 0; k < 100; ++k) {
            const Vector w = random_matrix(rng, nw, 1), v = random_matrix(rng, nv, 1), a = random_matrix(rng, ma, 1);
            const Vector y = r.plant.C * x + r.plant.V * v;
            const Vector u = r.ctrl.C * xi + r.ctrl.D * y;
            const Vector ua = r.gu * u + r.ga * a;
            const Vector x_next = r.plant.A * x + r.plant.B * ua + r.plant.W * w;
            const Vector xi_next = r.ctrl.A * xi + r.ctrl.B * y;
            Vector wbar(nw + nv);
            wbar << w, v;
            auto [next, applied] = cl.step(xbar, wbar, a);
            ASSERT_LE((applied - ua).cwiseAbs().maxCoeff(), 1e-9 * (1 + ua.cwiseAbs().maxCoeff()));
            x = x_next;
            xi = xi_next;
            Vector ref(n + l);
            ref << x, xi;
            // Rescale so an unstable draw cannot blow the tolerance.
            const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
            ASSERT_LE((next - ref).cwiseAbs().maxCoeff() / scale, 1e-9) << "trial " << trial << " step " << k;
            xbar = ref / scale;
            x /= scale;
            xi /= scale;
        }
    }
}

TEST(Assemble, NormalModeMatchesPlainLoop) {
    std::mt19937_64 rng(4);
    auto r = random_loop(rng, 3, 2, 2, 2, 2, 3, 2);
    AnomalyModel an(Matrix::Identity(2, 2), Matrix::Zero(2, 2), unit_box(2));
    const auto cl = assemble(r.plant, r.ctrl, an);
    EXPECT_EQ(cl.B_a.cwiseAbs().maxCoeff(), 0.0);
    Matrix closed(5, 5);
    closed << r.plant.A + r.plant.B * r.ctrl.D * r.plant.C, r.plant.B * r.ctrl.C, r.ctrl.B * r.plant.C, r.ctrl.A;
    EXPECT_LE((cl.A - closed).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Anomaly, WorstCaseAndChannelStructure) {
    const auto wc = worst_case_anomaly(2, unit_box(2));
    EXPECT_EQ(wc.gamma_u, Matrix::Zero(2, 2));
    EXPECT_EQ(wc.gamma_a, Matrix::Identity(2, 2));
    const auto ch = channel_anomaly(2, 2, unit_box(1));
    Matrix gu(2, 2);
    gu << 1, 0, 0, 0;
    EXPECT_EQ(ch.gamma_u, gu);
    EXPECT_EQ(ch.gamma_a(1, 0), 1.0);
    EXPECT_EQ(ch.gamma_a(0, 0), 0.0);
    EXPECT_THROW(channel_anomaly(2, 3, unit_box(1)), ContractViolation);
    EXPECT_THROW(worst_case_anomaly(2, unit_box(3)), ContractViolation);
}

TEST(Anomaly, WorstCaseInputIsTheAnomaly) {
    const auto sc = build_scenario(ScenarioKind::WorstCase, BenchConfig{}, 0.7, 0.6);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const Vector x = random_matrix(rng, 6, 1), w = random_matrix(rng, 6, 1), a = random_matrix(rng, 2, 1);
        EXPECT_LE((sc.model.step(x, w, a).second - a).cwiseAbs().maxCoeff(), 1e-14);
    }
    EXPECT_EQ(sc.model.C_u.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(sc.model.V_u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Scenario, ValidateRejectsUnsafeInitialSet) {
    ScalarDemoConfig cfg;
    cfg.initial_bound = 2.0;
    EXPECT_THROW(scalar_demo(cfg), ContractViolation);
}

TEST(Scenario, ModelDocumentRoundTrip) {
    const auto sc = build_scenario(ScenarioKind::DoS, BenchConfig{}, 0.65, 0.55);
    const auto back = model_from_document(to_document(sc.model));
    EXPECT_EQ(back.dims, sc.model.dims);
    EXPECT_EQ(back.A, sc.model.A);
    Document broken = to_document(sc.model);
    broken.matrices.at("A") = Matrix::Zero(3, 3);
    EXPECT_THROW(model_from_document(broken), FormatError);
}
