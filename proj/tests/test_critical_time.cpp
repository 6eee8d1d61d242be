#include <gtest/gtest.h>

#include <sstream>

#include "crittime/critical_time.hpp"
#include "crittime/demo.hpp"
#include "crittime/quadtank.hpp"

using namespace crittime;

TEST(CriticalTime, ScalarDemoIsOne) {
    const auto res = compute_critical_time(scalar_demo());
    EXPECT_EQ(res.k_star, 1);
    EXPECT_EQ(res.stop_reason.kind, StopKind::InfeasibleAt);
    EXPECT_EQ(res.stop_reason.at, 2);
    EXPECT_EQ(scalar_demo_interval_critical_time(), 1);
    ASSERT_EQ(res.iterations.size(), 2u);
    EXPECT_TRUE(res.iterations[0].all_feasible());
    for (const auto& c : res.iterations[0].checks) EXPECT_TRUE(c.certificate_verified);
}

TEST(CriticalTime, MatchesIntervalRecursionAcrossConfigs) {
    for (double bound : {1.2, 1.6, 1.8, 1.95}) {
        ScalarDemoConfig cfg;
        cfg.safety_bound = bound;
        CritTimeOptions opts;
        opts.max_horizon = 8;
        const auto res = compute_critical_time(scalar_demo(cfg), opts);
        EXPECT_EQ(res.k_star, scalar_demo_interval_critical_time(cfg, 8)) << "bound " << bound;
    }
}

TEST(CriticalTime, VacuousSafetyHitsCap) {
    ScalarDemoConfig cfg;
    cfg.safety_bound = 100.0;
    CritTimeOptions opts;
    opts.max_horizon = 5;
    const auto res = compute_critical_time(scalar_demo(cfg), opts);
    EXPECT_EQ(res.k_star, 5);
    EXPECT_EQ(res.stop_reason.kind, StopKind::HorizonCap);
    EXPECT_EQ(res.iterations.size(), 5u);
}

TEST(CriticalTime, EveryCertifiedPrefixIsFeasible) {
    const auto sc = build_scenario(ScenarioKind::UpperSaturation, BenchConfig{}, 0.75, 0.55);
    const auto res = compute_critical_time(sc);
    EXPECT_EQ(res.k_star, 4);
    ASSERT_EQ(static_cast<int>(res.iterations.size()), res.k_star + 1);
    for (int k = 0; k < res.k_star; ++k) {
        EXPECT_EQ(res.iterations[k].k, k + 1);
        EXPECT_TRUE(res.iterations[k].all_feasible());
        for (const auto& c : res.iterations[k].checks) EXPECT_TRUE(c.certificate_verified);
    }
    EXPECT_FALSE(res.iterations.back().all_feasible());
}

TEST(CriticalTime, ShrinkingSafetySetNeverIncreases) {
    int prev = 1 << 30;
    for (double bound : {1.95, 1.8, 1.6, 1.5, 1.2}) {
        ScalarDemoConfig cfg;
        cfg.safety_bound = bound;
        CritTimeOptions opts;
        opts.max_horizon = 8;
        const int k = compute_critical_time(scalar_demo(cfg), opts).k_star;
        EXPECT_LE(k, prev);
        prev = k;
    }
}

TEST(CriticalTime, OnSolveSeesEverySolve) {
    int calls = 0;
    CritTimeOptions opts;
    opts.on_solve = [&](int, int, const FeasibilityProblem& p, const SolveOutcome& out) {
        ++calls;
        if (out.verdict == Verdict::Feasible) {
            EXPECT_TRUE(verify_certificate(p, *out.multipliers, 1e-7));
        }
    };
    opts.keep_multipliers = true;
    const auto res = compute_critical_time(scalar_demo(), opts);
    EXPECT_EQ(calls, 4);
    EXPECT_TRUE(res.iterations[0].checks[0].multipliers.has_value());
}

TEST(Grid, ErrorsStayInTheirCell) {
    // gamma1 + gamma2 = 1 makes the operating point singular.
    const std::vector<GammaPair> grid{{0.5, 0.5}, {0.75, 0.55}};
    const auto cells = run_grid(
        [](double g1, double g2) { return build_scenario(ScenarioKind::UpperSaturation, BenchConfig{}, g1, g2); },
        grid);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_FALSE(cells[0].result);
    EXPECT_FALSE(cells[0].error.empty());
    ASSERT_TRUE(cells[1].result);
    EXPECT_EQ(cells[1].result->k_star, 4);
    EXPECT_EQ(cell_text(cells[0]), "err");
    EXPECT_THROW(make_setup(BenchConfig{}, 0.5, 0.5), InfeasibleOperatingPoint);
}

TEST(Grid, SingleCellMatchesDirectCall) {
    const auto cells = run_grid([](double, double) { return scalar_demo(); }, {{0.7, 0.6}}, {}, 2);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].result->k_star, 1);
    EXPECT_THROW(run_grid([](double, double) { return scalar_demo(); }, {}), ContractViolation);
}

TEST(Grid, ParseGrid) {
    const auto g = parse_grid("0.7:0.6,0.65:0.55");
    ASSERT_EQ(g.size(), 2u);
    EXPECT_DOUBLE_EQ(g[1].first, 0.65);
    EXPECT_THROW(parse_grid("0.7-0.6"), FormatError);
    EXPECT_THROW(parse_grid("1.2:0.5"), FormatError);
    EXPECT_THROW(parse_grid(""), FormatError);
    EXPECT_EQ(reference_grid().size(), 25u);
}

TEST(Exports, CellTextAndTables) {
    GridCell c;
    c.gamma1 = 0.7;
    c.gamma2 = 0.6;
    CritTimeResult r;
    r.k_star = 12;
    r.stop_reason = {StopKind::InfeasibleAt, 13};
    c.result = r;
    EXPECT_EQ(cell_text(c), "12");
    c.empirical = 14;
    EXPECT_EQ(cell_text(c), "12 (+2)");
    c.empirical = 11;
    EXPECT_EQ(cell_text(c), "12 (-1)");
    c.empirical.reset();
    c.result->stop_reason = {StopKind::HorizonCap, 0};
    EXPECT_EQ(cell_text(c), "12+");
    c.result->stop_reason = {StopKind::SolverFailure, 13};
    EXPECT_EQ(cell_text(c), "12!");

    GridCell bad;
    bad.gamma1 = 0.65;
    bad.gamma2 = 0.6;
    bad.error = "boom, with comma";
    std::ostringstream csv, md;
    write_cells_csv(csv, {c, bad});
    EXPECT_EQ(csv.str(),
              "gamma1,gamma2,k_star,stop_reason,empirical,error\n"
              "0.7,0.6,12,SolverFailure(13),,\n"
              "0.65,0.6,,,,boom; with comma\n");
    write_markdown_table(md, {c, bad}, "t");
    EXPECT_NE(md.str().find("| 0.65 | err |"), std::string::npos);
    EXPECT_NE(md.str().find("| 0.7 | 12! |"), std::string::npos);
}
