#pragma once
// Quadruple-tank benchmark: nonlinear plant, operating point, linearisation,
// ZOH discretisation, discrete PI controller and the four anomaly scenarios.

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cstdio>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crittime/scenario.hpp"
#include "crittime/simulation.hpp"

namespace crittime {

struct QuadTankParams {
    std::array<double, 4> tank_area{28.0, 32.0, 28.0, 32.0};       // cm^2
    std::array<double, 4> outlet_area{0.071, 0.057, 0.071, 0.057};  // cm^2
    double k1 = 3.33;   // cm^3/(V s)
    double k2 = 3.35;   // cm^3/(V s)
    double kc = 0.5;    // V/cm
    double g = 981.0;   // cm/s^2
    double gamma1 = 0.70;
    double gamma2 = 0.60;

    void validate() const {
        for (int i = 0; i < 4; ++i) {
            detail::require(tank_area[i] > 0.0 && outlet_area[i] > 0.0, "QuadTankParams: areas must be positive");
        }
        detail::require(k1 > 0.0 && k2 > 0.0 && kc > 0.0 && g > 0.0, "QuadTankParams: gains must be positive");
        detail::require(gamma1 > 0.0 && gamma1 < 1.0 && gamma2 > 0.0 && gamma2 < 1.0,
                        "QuadTankParams: valve coefficients must lie in (0,1)");
    }
};

enum class PiDiscretization { Euler, Tustin };

/// Everything about the benchmark except the valve pair.
struct BenchConfig {
    QuadTankParams params;
    double h1_target = 12.4;  // cm
    double h2_target = 12.7;  // cm
    double sample_time = 1.0;  // s
    std::array<double, 2> pi_gain{3.0, 2.7};
    std::array<double, 2> pi_reset{30.0, 40.0};  // s
    PiDiscretization pi_discretization = PiDiscretization::Euler;
    std::array<double, 4> level_min{9.0, 9.0, 0.1, 0.1};   // cm
    std::array<double, 4> level_max{20.0, 20.0, 5.0, 5.0};  // cm
    double voltage_min = 0.0;
    double voltage_max = 10.0;
};

/// Reads `key = value` overrides (A1..A4, a1..a4, k1, k2, kc, g, h1_0, h2_0,
/// Ts, K1, K2, T1, T2, pi_discretization) on top of `base`.
inline BenchConfig bench_config_from(const KeyValues& kv, BenchConfig base = {}) {
    auto num = [&](const std::string& key, double& target) {
        auto it = kv.find(key);
        if (it != kv.end()) target = parse_double(it->second, key);
    };
    for (int i = 0; i < 4; ++i) {
        num("A" + std::to_string(i + 1), base.params.tank_area[i]);
        num("a" + std::to_string(i + 1), base.params.outlet_area[i]);
    }
    num("k1", base.params.k1);
    num("k2", base.params.k2);
    num("kc", base.params.kc);
    num("g", base.params.g);
    num("h1_0", base.h1_target);
    num("h2_0", base.h2_target);
    num("Ts", base.sample_time);
    num("K1", base.pi_gain[0]);
    num("K2", base.pi_gain[1]);
    num("T1", base.pi_reset[0]);
    num("T2", base.pi_reset[1]);
    if (auto it = kv.find("pi_discretization"); it != kv.end()) {
        if (it->second == "euler") {
            base.pi_discretization = PiDiscretization::Euler;
        } else if (it->second == "tustin") {
            base.pi_discretization = PiDiscretization::Tustin;
        } else {
            throw FormatError("pi_discretization must be 'euler' or 'tustin'");
        }
    }
    return base;
}

/// dh/dt for absolute levels h (cm) and pump voltages v (V). Negative levels
/// are treated as empty tanks.
inline Vector quadtank_rhs(const QuadTankParams& p, const Vector& h, const Vector& v) {
    const auto& A = p.tank_area;
    const auto& a = p.outlet_area;
    std::array<double, 4> q{};
    for (int i = 0; i < 4; ++i) q[i] = a[i] * std::sqrt(2.0 * p.g * std::max(0.0, h(i)));
    Vector dh(4);
    dh(0) = (-q[0] + q[2] + p.gamma1 * p.k1 * v(0)) / A[0];
    dh(1) = (-q[1] + q[3] + p.gamma2 * p.k2 * v(1)) / A[1];
    dh(2) = (-q[2] + (1.0 - p.gamma2) * p.k2 * v(1)) / A[2];
    dh(3) = (-q[3] + (1.0 - p.gamma1) * p.k1 * v(0)) / A[3];
    return dh;
}

struct OperatingPoint {
    Vector h0;  // 4 levels, cm
    Vector v0;  // 2 voltages, V
    std::vector<std::string> warnings;
};

/// Stationary levels and voltages for the requested lower-tank levels.
inline OperatingPoint operating_point(const QuadTankParams& p, double h1 = 12.4, double h2 = 12.7,
                                      double v_min = 0.0, double v_max = 10.0) {
    p.validate();
    detail::require(h1 > 0.0 && h2 > 0.0, "operating_point: target levels must be positive");
    const auto& a = p.outlet_area;
    const double q1 = a[0] * std::sqrt(2.0 * p.g * h1);
    const double q2 = a[1] * std::sqrt(2.0 * p.g * h2);
    Eigen::Matrix2d split;
    split << p.gamma1 * p.k1, (1.0 - p.gamma2) * p.k2, (1.0 - p.gamma1) * p.k1, p.gamma2 * p.k2;
    if (std::abs(split.determinant()) < 1e-12 * split.cwiseAbs().maxCoeff() * split.cwiseAbs().maxCoeff()) {
        throw InfeasibleOperatingPoint("operating_point: valve split is singular (gamma1 + gamma2 = 1)");
    }
    const Eigen::Vector2d v = split.lu().solve(Eigen::Vector2d(q1, q2));
    auto upper_level = [&](double inflow, double outlet) {
        const double r = inflow / outlet;
        return r * r / (2.0 * p.g);
    };
    Vector x(4);  // unknowns (h3, h4, v1, v2)
    x << upper_level((1.0 - p.gamma2) * p.k2 * v(1), a[2]), upper_level((1.0 - p.gamma1) * p.k1 * v(0), a[3]), v(0),
        v(1);

    auto residual = [&](const Vector& y) {
        Vector h(4);
        h << h1, h2, y(0), y(1);
        return quadtank_rhs(p, h, y.tail(2));
    };
    // Damped Newton polish with a central-difference Jacobian.
    for (int it = 0; it < 20; ++it) {
        const Vector r = residual(x);
        if (r.cwiseAbs().maxCoeff() <= 1e-13) break;
        Matrix J(4, 4);
        for (int j = 0; j < 4; ++j) {
            const double step = 1e-7 * std::max(1.0, std::abs(x(j)));
            Vector xp = x, xm = x;
            xp(j) += step;
            xm(j) -= step;
            J.col(j) = (residual(xp) - residual(xm)) / (2.0 * step);
        }
        const Vector dx = J.fullPivLu().solve(-r);
        double lambda = 1.0;
        while (lambda > 1e-4) {
            const Vector trial = x + lambda * dx;
            if (trial(0) > 0.0 && trial(1) > 0.0 &&
                residual(trial).cwiseAbs().maxCoeff() < r.cwiseAbs().maxCoeff()) {
                x = trial;
                break;
            }
            lambda *= 0.5;
        }
        if (lambda <= 1e-4) break;
    }

    OperatingPoint op;
    op.h0.resize(4);
    op.h0 << h1, h2, x(0), x(1);
    op.v0 = x.tail(2);
    if (residual(x).cwiseAbs().maxCoeff() > 1e-8) {
        throw InfeasibleOperatingPoint("operating_point: steady-state residual above 1e-8");
    }
    if (op.v0.minCoeff() < v_min || op.v0.maxCoeff() > v_max) {
        throw InfeasibleOperatingPoint("operating_point: stationary voltages outside the admissible range");
    }
    for (int i = 2; i < 4; ++i) {
        if (op.h0(i) < 0.1 || op.h0(i) > 5.0) {
            op.warnings.push_back("operating point: h" + std::to_string(i + 1) + " = " + std::to_string(op.h0(i)) +
                                  " cm lies outside [0.1, 5]");
        }
    }
    return op;
}

struct ContinuousModel {
    Matrix A;  // 4 x 4
    Matrix B;  // 4 x 2
    Matrix C;  // 2 x 4
};

inline ContinuousModel linearize(const QuadTankParams& p, const OperatingPoint& op) {
    p.validate();
    detail::require(op.h0.size() == 4 && op.v0.size() == 2, "linearize: operating point shape");
    detail::require(op.h0.minCoeff() > 0.0, "linearize: levels must be strictly positive");
    const auto& A = p.tank_area;
    const auto& a = p.outlet_area;
    std::array<double, 4> T{};
    for (int i = 0; i < 4; ++i) T[i] = A[i] / a[i] * std::sqrt(2.0 * op.h0(i) / p.g);
    ContinuousModel m;
    m.A = Matrix::Zero(4, 4);
    for (int i = 0; i < 4; ++i) m.A(i, i) = -1.0 / T[i];
    m.A(0, 2) = A[2] / (A[0] * T[2]);
    m.A(1, 3) = A[3] / (A[1] * T[3]);
    m.B = Matrix::Zero(4, 2);
    m.B(0, 0) = p.gamma1 * p.k1 / A[0];
    m.B(1, 1) = p.gamma2 * p.k2 / A[1];
    m.B(2, 1) = (1.0 - p.gamma2) * p.k2 / A[2];
    m.B(3, 0) = (1.0 - p.gamma1) * p.k1 / A[3];
    m.C = Matrix::Zero(2, 4);
    m.C(0, 0) = p.kc;
    m.C(1, 1) = p.kc;
    return m;
}

/// Zero-order-hold discretisation through the exponential of [[A, B], [0, 0]] Ts.
inline std::pair<Matrix, Matrix> discretize_zoh(const Matrix& Ac, const Matrix& Bc, double Ts) {
    detail::require(Ts > 0.0, "discretize_zoh: sample time must be positive");
    detail::require(Ac.rows() == Ac.cols() && Bc.rows() == Ac.rows(), "discretize_zoh: shape mismatch");
    detail::require(Ac.allFinite() && Bc.allFinite(), "discretize_zoh: non-finite entries");
    const auto n = Ac.rows(), m = Bc.cols();
    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = Ac * Ts;
    aug.topRightCorner(n, m) = Bc * Ts;
    const Matrix E = aug.exp();
    return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

/// Discrete PI controller u = xi - K y, xi+ = xi - Ts (K/T) y in deviation
/// coordinates; Tustin adds the half-step feedthrough.
inline ControllerModel discretize_pi(const std::array<double, 2>& K, const std::array<double, 2>& T, double Ts = 1.0,
                                     PiDiscretization method = PiDiscretization::Euler) {
    detail::require(T[0] > 0.0 && T[1] > 0.0 && Ts > 0.0, "discretize_pi: reset times and Ts must be positive");
    ControllerModel c;
    c.A = Matrix::Identity(2, 2);
    c.B = Matrix::Zero(2, 2);
    c.C = Matrix::Identity(2, 2);
    c.D = Matrix::Zero(2, 2);
    for (int i = 0; i < 2; ++i) {
        c.B(i, i) = -Ts * K[i] / T[i];
        c.D(i, i) = method == PiDiscretization::Euler ? -K[i] : -K[i] * (1.0 + Ts / (2.0 * T[i]));
    }
    return c;
}

/// Disturbance and initial-set data in deviation coordinates (transcribed
/// constants, shared by every valve pair).
namespace quadtank_data {

inline Vector initial_min() {
    Vector v(6);
    v << -0.065, -0.047, -0.032, -0.028, -0.066, -0.061;
    return v;
}
inline Vector initial_max() {
    Vector v(6);
    v << 0.066, 0.056, 0.044, 0.024, 0.068, 0.077;
    return v;
}
inline Vector deviation_min() {
    Vector v(6);
    v << -0.013, -0.0027, 0.0, 0.0, -0.137, -0.126;
    return v;
}
inline Vector deviation_max() {
    Vector v(6);
    v << 0.00011, 0.0013, 0.014, 0.0045, 0.143, 0.147;
    return v;
}

/// First ellipsoid couples (w1, w3), the second (w2, w4).
inline Eigen::Matrix2d ellipsoid1_Q() {
    Eigen::Matrix2d Q;
    Q << -0.567, -0.489, -0.489, -0.448;
    return Q;
}
inline Eigen::Vector2d ellipsoid1_s() { return {0.000263, 0.000433}; }
inline constexpr double ellipsoid1_r = -1.20e-8;

inline Eigen::Matrix2d ellipsoid2_Q() {
    Eigen::Matrix2d Q;
    Q << -0.611, -0.480, -0.480, -0.409;
    return Q;
}
inline Eigen::Vector2d ellipsoid2_s() { return {0.000569, 0.000501}; }
inline constexpr double ellipsoid2_r = -3.70e-7;

/// Embeds a 2-D ellipsoid on coordinates (i, j) of R^6.
inline QuadraticForm embedded_ellipsoid(const Eigen::Matrix2d& Q, const Eigen::Vector2d& s, double r, int i, int j) {
    Matrix Q6 = Matrix::Zero(6, 6);
    Vector s6 = Vector::Zero(6);
    const std::array<int, 2> idx{i, j};
    for (int a = 0; a < 2; ++a) {
        s6(idx[a]) = s(a);
        for (int b = 0; b < 2; ++b) Q6(idx[a], idx[b]) = Q(a, b);
    }
    return ellipsoid(Q6, s6, r);
}

inline SetDescription deviation_set() {
    SetDescription rect = box(deviation_min(), deviation_max());
    std::vector<QuadraticForm> qcs{embedded_ellipsoid(ellipsoid1_Q(), ellipsoid1_s(), ellipsoid1_r, 0, 2),
                                   embedded_ellipsoid(ellipsoid2_Q(), ellipsoid2_s(), ellipsoid2_r, 1, 3)};
    for (const auto& f : rect.qcs()) qcs.push_back(f);
    return SetDescription(6, std::move(qcs), {});
}

inline SetDescription initial_set() { return box(initial_min(), initial_max()); }

}  // namespace quadtank_data

enum class ScenarioKind { DoS, UpperSaturation, WorstCase, Channel1, Channel2 };

inline const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::DoS: return "dos";
        case ScenarioKind::UpperSaturation: return "upper-saturation";
        case ScenarioKind::WorstCase: return "worst-case";
        case ScenarioKind::Channel1: return "channel1";
        case ScenarioKind::Channel2: return "channel2";
    }
    return "?";
}

inline std::optional<ScenarioKind> parse_scenario_kind(const std::string& s) {
    for (auto k : {ScenarioKind::DoS, ScenarioKind::UpperSaturation, ScenarioKind::WorstCase, ScenarioKind::Channel1,
                   ScenarioKind::Channel2}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

/// Plant, controller and operating point for one valve pair.
struct QuadTankSetup {
    BenchConfig config;
    OperatingPoint op;
    ContinuousModel continuous;
    PlantModel plant;
    ControllerModel controller;
};

inline QuadTankSetup make_setup(const BenchConfig& cfg, double gamma1, double gamma2) {
    QuadTankSetup s;
    s.config = cfg;
    s.config.params.gamma1 = gamma1;
    s.config.params.gamma2 = gamma2;
    s.config.params.validate();
    s.op = operating_point(s.config.params, cfg.h1_target, cfg.h2_target, cfg.voltage_min, cfg.voltage_max);
    s.continuous = linearize(s.config.params, s.op);
    auto [Ad, Bd] = discretize_zoh(s.continuous.A, s.continuous.B, cfg.sample_time);
    s.plant = {Ad, Bd, Matrix::Identity(4, 4), s.continuous.C, Matrix::Identity(2, 2)};
    s.controller = discretize_pi(cfg.pi_gain, cfg.pi_reset, cfg.sample_time, cfg.pi_discretization);
    return s;
}

/// Safety box on the levels (deviation coordinates); controller states are free.
inline SetDescription level_safety_set(const QuadTankSetup& s) {
    std::vector<QuadraticForm> qcs;
    for (int i = 0; i < 4; ++i) {
        Vector e = Vector::Zero(6);
        e(i) = 1.0;
        qcs.push_back(halfspace(e, s.config.level_max[i] - s.op.h0(i)));
        qcs.push_back(halfspace(-e, -(s.config.level_min[i] - s.op.h0(i))));
    }
    return SetDescription(6, std::move(qcs), {});
}

inline SetDescription input_limit_set(const QuadTankSetup& s) {
    const Vector lo = Vector::Constant(2, s.config.voltage_min) - s.op.v0;
    const Vector hi = Vector::Constant(2, s.config.voltage_max) - s.op.v0;
    return box(lo, hi);
}

inline AnomalyModel quadtank_anomaly(ScenarioKind kind, const QuadTankSetup& s) {
    const Vector v0 = s.op.v0;
    switch (kind) {
        case ScenarioKind::DoS: return worst_case_anomaly(2, singleton(-v0));
        case ScenarioKind::UpperSaturation:
            return worst_case_anomaly(2, singleton(Vector::Constant(2, s.config.voltage_max) - v0));
        case ScenarioKind::WorstCase: return worst_case_anomaly(2, input_limit_set(s));
        case ScenarioKind::Channel1:
        case ScenarioKind::Channel2: {
            const int ch = kind == ScenarioKind::Channel1 ? 0 : 1;
            const SetDescription slice =
                box(Vector::Constant(1, s.config.voltage_min - v0(ch)), Vector::Constant(1, s.config.voltage_max - v0(ch)));
            return channel_anomaly(2, ch + 1, slice);
        }
    }
    throw ContractViolation("quadtank_anomaly: unknown kind");
}

inline ScenarioSpec build_scenario(ScenarioKind kind, const QuadTankSetup& s) {
    AnomalyModel anomaly = quadtank_anomaly(kind, s);
    ClosedLoopModel model = assemble(s.plant, s.controller, anomaly);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s g1=%.4g g2=%.4g", to_string(kind), s.config.params.gamma1,
                  s.config.params.gamma2);
    ScenarioSpec sc{std::move(model),          level_safety_set(s), quadtank_data::initial_set(),
                    input_limit_set(s),        quadtank_data::deviation_set(), std::move(anomaly),
                    buf};
    sc.validate();
    return sc;
}

inline ScenarioSpec build_scenario(ScenarioKind kind, const BenchConfig& cfg, double gamma1, double gamma2) {
    return build_scenario(kind, make_setup(cfg, gamma1, gamma2));
}

/// The 5x5 valve grid: gamma1 in {0.65 .. 0.75}, gamma2 in {0.55 .. 0.65}.
inline std::vector<std::pair<double, double>> reference_grid() {
    std::vector<std::pair<double, double>> g;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) g.emplace_back(0.65 + 0.025 * i, 0.55 + 0.025 * j);
    }
    return g;
}


/// Nonlinear sampled-data loop for one setup. Without a kind the loop is
/// nominal (Gamma_u = I, a single zero anomaly channel).
inline NonlinearLoop nonlinear_loop(const QuadTankSetup& s, std::optional<ScenarioKind> kind = std::nullopt) {
    NonlinearLoop loop;
    const QuadTankParams params = s.config.params;
    loop.rhs = [params](const Vector& h, const Vector& v) { return quadtank_rhs(params, h, v); };
    loop.controller = s.controller;
    loop.output = s.continuous.C;
    loop.x_ref = s.op.h0;
    loop.u_ref = s.op.v0;
    if (kind) {
        const AnomalyModel an = quadtank_anomaly(*kind, s);
        loop.gamma_u = an.gamma_u;
        loop.gamma_a = an.gamma_a;
    } else {
        loop.gamma_u = Matrix::Identity(2, 2);
        loop.gamma_a = Matrix::Zero(2, 1);
    }
    loop.u_min = Vector::Constant(2, s.config.voltage_min);
    loop.u_max = Vector::Constant(2, s.config.voltage_max);
    loop.safe_min = Eigen::Map<const Vector>(s.config.level_min.data(), 4);
    loop.safe_max = Eigen::Map<const Vector>(s.config.level_max.data(), 4);
    loop.sample_time = s.config.sample_time;
    return loop;
}

/// Disturbance-free nonlinear critical time from the operating point, minimised
/// over constant anomalies drawn from the scenario's anomaly set.
inline EmpiricalResult quadtank_nonlinear_critical_time(ScenarioKind kind, const QuadTankSetup& s,
                                                        const SamplingOptions& opts = {}) {
    return nonlinear_critical_time(nonlinear_loop(s, kind), quadtank_anomaly(kind, s).anomaly_set, opts);
}

}  // namespace crittime
