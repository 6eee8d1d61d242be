#pragma once
// Scalar sanity system: x+ = 0.5 x + a, a in [-1, 1], x0 in [-0.1, 0.1],
// safety |x| <= 1.5, no disturbance. Interval recursion gives max|x1| = 1.05
// and max|x2| = 1.525, so the critical time is 1.

#include "crittime/scenario.hpp"

namespace crittime {

struct ScalarDemoConfig {
    double pole = 0.5;
    double anomaly_bound = 1.0;
    double initial_bound = 0.1;
    double safety_bound = 1.5;
};

inline ScenarioSpec scalar_demo(const ScalarDemoConfig& cfg = {}) {
    // One disturbance channel pinned to zero keeps every set non-empty.
    PlantModel plant{Matrix::Constant(1, 1, cfg.pole), Matrix::Ones(1, 1), Matrix::Zero(1, 1), Matrix::Ones(1, 1),
                     Matrix::Zero(1, 0)};
    ControllerModel ctrl{Matrix::Zero(0, 0), Matrix::Zero(0, 1), Matrix::Zero(1, 0), Matrix::Zero(1, 1)};
    const SetDescription inputs =
        box(Vector::Constant(1, -cfg.anomaly_bound), Vector::Constant(1, cfg.anomaly_bound));
    AnomalyModel anomaly = worst_case_anomaly(1, inputs);
    ScenarioSpec sc{assemble(plant, ctrl, anomaly),
                    box(Vector::Constant(1, -cfg.safety_bound), Vector::Constant(1, cfg.safety_bound)),
                    box(Vector::Constant(1, -cfg.initial_bound), Vector::Constant(1, cfg.initial_bound)),
                    inputs,
                    singleton(Vector::Zero(1)),
                    std::move(anomaly),
                    "demo-1d"};
    sc.validate();
    return sc;
}

/// Interval recursion for the scalar demo: largest k with max|x_j| <= safety for all j <= k.
inline int scalar_demo_interval_critical_time(const ScalarDemoConfig& cfg = {}, int max_horizon = 1000) {
    double r = cfg.initial_bound;
    for (int k = 1; k <= max_horizon; ++k) {
        r = std::abs(cfg.pole) * r + cfg.anomaly_bound;
        if (r > cfg.safety_bound) return k - 1;
    }
    return max_horizon;
}

}  // namespace crittime
