#pragma once
// Forward simulation of closed loops (linear and sampled nonlinear plants),
// first-exit detection and sampling-based critical-time estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "crittime/scenario.hpp"

namespace crittime {

struct ExitReport {
    std::optional<int> first_exit_step;
    int violating_index = -1;  // first violated safety QC (linear) or level (nonlinear)
    int steps = 0;             // samples simulated after the initial state
    std::vector<Vector> trajectory;  // states 0..steps, when requested
    std::vector<Vector> inputs;      // applied input at 0..steps-1, when requested
    int clamped_levels = 0;          // nonlinear only: times a negative level was reset to 0

    /// Empirical critical time seen by this run: last step inside the safety set.
    std::optional<int> critical_time() const {
        if (!first_exit_step) return std::nullopt;
        return *first_exit_step - 1;
    }
};

/// Signal value at step k.
using Signal = std::function<Vector(int)>;

inline Signal constant_signal(Vector v) {
    return [v = std::move(v)](int) { return v; };
}

/// Index of the first QC of `set` violated by z (tolerance tol), -1 if none.
inline int first_violation(const SetDescription& set, const Vector& z, double tol = kDefaultMembershipTol) {
    for (std::size_t i = 0; i < set.qcs().size(); ++i) {
        if (eval_sigma(set.qcs()[i], z) < -tol) return static_cast<int>(i);
    }
    for (std::size_t i = 0; i < set.qces().size(); ++i) {
        if (std::abs(eval_sigma(set.qces()[i], z)) > tol) return static_cast<int>(set.qcs().size() + i);
    }
    return -1;
}

/// Steps the closed loop for `horizon` samples and reports the first state
/// outside `safety` (the initial state counts as step 0).
inline ExitReport simulate_linear(const ClosedLoopModel& model, const Vector& x0, const Signal& anomaly,
                                  const Signal& disturbance, const SetDescription& safety, int horizon,
                                  bool keep_trajectory = false, double tol = kDefaultMembershipTol) {
    model.validate();
    detail::require(x0.size() == model.dims.nx(), "simulate_linear: x0 dimension");
    detail::require(safety.dim() == model.dims.nx(), "simulate_linear: safety set dimension");
    detail::require(horizon >= 0, "simulate_linear: negative horizon");
    ExitReport rep;
    Vector x = x0;
    if (keep_trajectory) rep.trajectory.push_back(x);
    if (int v = first_violation(safety, x, tol); v >= 0) {
        rep.first_exit_step = 0;
        rep.violating_index = v;
        return rep;
    }
    for (int k = 0; k < horizon; ++k) {
        auto [next, u] = model.step(x, disturbance(k), anomaly(k));
        x = std::move(next);
        rep.steps = k + 1;
        if (keep_trajectory) {
            rep.trajectory.push_back(x);
            rep.inputs.push_back(u);
        }
        if (int v = first_violation(safety, x, tol); v >= 0) {
            rep.first_exit_step = k + 1;
            rep.violating_index = v;
            return rep;
        }
    }
    return rep;
}

// ---- sampling -----------------------------------------------------------------

/// Uniform samples from a bounded set: uniform on its axis-aligned hull,
/// rejected against every constraint. Coordinates pinned by hyperplanes are
/// set exactly.
class SetSampler {
public:
    explicit SetSampler(SetDescription set, int max_attempts = 1000000)
        : set_(std::move(set)), bounds_(axis_bounds(set_)), max_attempts_(max_attempts) {
        if (!bounds_.bounded()) throw ContractViolation("SetSampler: set has no finite axis-aligned hull");
    }

    const SetDescription& set() const { return set_; }
    const AxisBounds& bounds() const { return bounds_; }

    Vector sample(std::mt19937_64& rng) const {
        const auto n = bounds_.lower.size();
        Vector z(n);
        for (int attempt = 0; attempt < max_attempts_; ++attempt) {
            for (Eigen::Index i = 0; i < n; ++i) {
                std::uniform_real_distribution<double> d(bounds_.lower(i), bounds_.upper(i));
                z(i) = bounds_.lower(i) == bounds_.upper(i) ? bounds_.lower(i) : d(rng);
            }
            if (contains(set_, z)) return z;
        }
        throw SimulationError("SetSampler: rejection sampling did not find a member");
    }

    /// Corners of the hull that belong to the set (at most 2^16 candidates).
    std::vector<Vector> vertices() const {
        const auto n = bounds_.lower.size();
        detail::require(n <= 16, "SetSampler::vertices: dimension too large");
        std::vector<Vector> out;
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
            Vector c(n);
            bool duplicate = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                const bool hi = (mask >> i) & 1U;
                if (hi && bounds_.lower(i) == bounds_.upper(i)) duplicate = true;
                c(i) = hi ? bounds_.upper(i) : bounds_.lower(i);
            }
            if (!duplicate && contains(set_, c)) out.push_back(c);
        }
        return out;
    }

private:
    SetDescription set_;
    AxisBounds bounds_;
    int max_attempts_;
};

enum class SignalKind { Constant, VertexSweep, RandomInSet };

struct SignalSpec {
    SignalKind kind = SignalKind::RandomInSet;
    Vector value;             // Constant only
    std::uint64_t seed = 1;   // RandomInSet only
    bool per_step = true;     // RandomInSet: redraw every step (false: one constant draw)
};

/// Concrete signals over `horizon` steps: one for Constant and RandomInSet,
/// one constant signal per vertex for VertexSweep.
inline std::vector<Signal> signals_from(const SignalSpec& spec, const SetDescription& set, int horizon) {
    switch (spec.kind) {
        case SignalKind::Constant:
            detail::require(spec.value.size() == set.dim() && contains(set, spec.value),
                            "signals_from: constant value outside the set");
            return {constant_signal(spec.value)};
        case SignalKind::VertexSweep: {
            std::vector<Signal> out;
            for (auto& v : SetSampler(set).vertices()) out.push_back(constant_signal(std::move(v)));
            return out;
        }
        case SignalKind::RandomInSet: {
            const SetSampler sampler(set);
            std::mt19937_64 rng(spec.seed);
            std::vector<Vector> values(std::max(1, horizon));
            values[0] = sampler.sample(rng);
            for (std::size_t k = 1; k < values.size(); ++k) values[k] = spec.per_step ? sampler.sample(rng) : values[0];
            return {[values = std::move(values)](int k) {
                return values[std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), values.size() - 1)];
            }};
        }
    }
    return {};
}

struct SamplingOptions {
    int n_samples = 1000;
    bool vertex_sweep = true;  // also run every vertex of the anomaly and initial sets as constants
    std::uint64_t seed = 1;
    int horizon = 60;
    bool per_step_anomaly = false;  // random anomaly redrawn every step instead of held constant
};

/// One admissible run description for a linear scenario.
struct SampledRun {
    Vector x0;
    std::vector<Vector> anomaly;      // per step
    std::vector<Vector> disturbance;  // per step
};

/// Applied inputs of a run stay inside the input-limitation set.
inline bool run_admissible(const ScenarioSpec& sc, const SampledRun& run, int horizon) {
    Vector x = run.x0;
    for (int k = 0; k < horizon; ++k) {
        auto [next, u] = sc.model.step(x, run.disturbance[k], run.anomaly[k]);
        if (!contains(sc.input_limits, u)) return false;
        x = std::move(next);
    }
    return true;
}

/// Draws sampled runs for a linear scenario: vertex combinations first (when
/// enabled), then random runs. Inadmissible runs are dropped and counted.
class RunSampler {
public:
    RunSampler(const ScenarioSpec& sc, SamplingOptions opts)
        : sc_(sc), opts_(opts), initial_(sc.initial), anomaly_(sc.anomaly.anomaly_set), deviation_(sc.deviation),
          rng_(opts.seed) {}

    /// Calls fn(run) for up to n_samples admissible runs; returns the number of discarded runs.
    int for_each(const std::function<void(const SampledRun&)>& fn) {
        int produced = 0, discarded = 0;
        auto emit = [&](SampledRun r) {
            if (!run_admissible(sc_, r, opts_.horizon)) {
                ++discarded;
                return;
            }
            fn(r);
            ++produced;
        };
        if (opts_.vertex_sweep) {
            const auto xs = initial_.vertices();
            const auto as = anomaly_.vertices();
            for (const auto& a : as) {
                for (const auto& x : xs) {
                    if (produced >= opts_.n_samples) return discarded;
                    SampledRun r{x, std::vector<Vector>(opts_.horizon, a), draw_disturbances()};
                    emit(std::move(r));
                }
            }
        }
        const int budget = 20 * std::max(1, opts_.n_samples);
        for (int attempt = 0; produced < opts_.n_samples && attempt < budget; ++attempt) {
            SampledRun r;
            r.x0 = initial_.sample(rng_);
            const Vector a0 = anomaly_.sample(rng_);
            r.anomaly.resize(opts_.horizon, a0);
            if (opts_.per_step_anomaly) {
                for (auto& a : r.anomaly) a = anomaly_.sample(rng_);
            }
            r.disturbance = draw_disturbances();
            emit(std::move(r));
        }
        return discarded;
    }

private:
    std::vector<Vector> draw_disturbances() {
        std::vector<Vector> d(opts_.horizon);
        for (auto& w : d) w = deviation_.sample(rng_);
        return d;
    }

    const ScenarioSpec& sc_;
    SamplingOptions opts_;
    SetSampler initial_, anomaly_, deviation_;
    std::mt19937_64 rng_;
};

struct EmpiricalResult {
    std::optional<int> critical_time;  // min over runs of first exit - 1; none if no run left the safety set
    int runs = 0;
    int discarded = 0;
};

/// Sampling-based critical time of a linear scenario. This is an upper bound
/// on the true critical time (only the sampled runs are explored).
inline EmpiricalResult empirical_critical_time(const ScenarioSpec& sc, const SamplingOptions& opts = {}) {
    sc.validate();
    EmpiricalResult res;
    RunSampler sampler(sc, opts);
    res.discarded = sampler.for_each([&](const SampledRun& r) {
        ++res.runs;
        const auto rep = simulate_linear(
            sc.model, r.x0, [&](int k) { return r.anomaly[k]; }, [&](int k) { return r.disturbance[k]; }, sc.safety,
            opts.horizon);
        if (auto ct = rep.critical_time(); ct && (!res.critical_time || *ct < *res.critical_time)) {
            res.critical_time = ct;
        }
    });
    return res;
}

// ---- nonlinear plants ---------------------------------------------------------

/// Sampled-data loop around a continuous plant, in absolute plant coordinates.
/// The controller runs in deviation coordinates around (x_ref, u_ref).
struct NonlinearLoop {
    std::function<Vector(const Vector&, const Vector&)> rhs;  // dx/dt(x, u)
    ControllerModel controller;
    Matrix output;  // y = output * (x - x_ref)
    Vector x_ref;
    Vector u_ref;
    Matrix gamma_u;
    Matrix gamma_a;
    Vector u_min;  // actuator limits (absolute)
    Vector u_max;
    Vector safe_min;  // safety box on x (absolute)
    Vector safe_max;
    double sample_time = 1.0;
    int substeps = 10;
    bool clamp_negative = true;  // reset negative states to 0 (levels)
};

namespace detail {

inline void rk4_hold(const NonlinearLoop& loop, Vector& x, const Vector& u, int& clamped) {
    const double dt = loop.sample_time / loop.substeps;
    for (int s = 0; s < loop.substeps; ++s) {
        const Vector k1 = loop.rhs(x, u);
        const Vector k2 = loop.rhs(x + 0.5 * dt * k1, u);
        const Vector k3 = loop.rhs(x + 0.5 * dt * k2, u);
        const Vector k4 = loop.rhs(x + dt * k3, u);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite()) throw SimulationError("simulate_nonlinear: non-finite state");
        if (loop.clamp_negative) {
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                if (x(i) < 0.0) {
                    x(i) = 0.0;
                    ++clamped;
                }
            }
        }
    }
}

inline int box_violation(const Vector& x, const Vector& lo, const Vector& hi) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) < lo(i) || x(i) > hi(i)) return static_cast<int>(i);
    }
    return -1;
}

}  // namespace detail

/// Integrates the loop with the anomaly a(k) (deviation coordinates) for
/// `horizon` samples and reports the first sample outside the safety box.
inline ExitReport simulate_nonlinear(const NonlinearLoop& loop, const Vector& x_init, const Vector& xi_init,
                                     const Signal& anomaly, int horizon, bool keep_trajectory = false) {
    detail::require(loop.substeps >= 1 && loop.sample_time > 0.0, "simulate_nonlinear: bad integration settings");
    detail::require(x_init.size() == loop.x_ref.size() && xi_init.size() == loop.controller.l(),
                    "simulate_nonlinear: initial state dimension");
    ExitReport rep;
    Vector x = x_init;
    Vector xi = xi_init;
    if (keep_trajectory) rep.trajectory.push_back(x);
    if (int v = detail::box_violation(x, loop.safe_min, loop.safe_max); v >= 0) {
        rep.first_exit_step = 0;
        rep.violating_index = v;
        return rep;
    }
    for (int k = 0; k < horizon; ++k) {
        const Vector y = loop.output * (x - loop.x_ref);
        const Vector u = loop.controller.C * xi + loop.controller.D * y;
        xi = (loop.controller.A * xi + loop.controller.B * y).eval();
        const Vector applied =
            (loop.u_ref + loop.gamma_u * u + loop.gamma_a * anomaly(k)).cwiseMax(loop.u_min).cwiseMin(loop.u_max);
        detail::rk4_hold(loop, x, applied, rep.clamped_levels);
        rep.steps = k + 1;
        if (keep_trajectory) {
            rep.trajectory.push_back(x);
            rep.inputs.push_back(applied);
        }
        if (int v = detail::box_violation(x, loop.safe_min, loop.safe_max); v >= 0) {
            rep.first_exit_step = k + 1;
            rep.violating_index = v;
            return rep;
        }
    }
    return rep;
}

/// Minimum nonlinear critical time over constant anomalies: the vertices of
/// the anomaly set (when enabled) plus random members. Starts at x_ref with a
/// zero controller state.
inline EmpiricalResult nonlinear_critical_time(const NonlinearLoop& loop, const SetDescription& anomaly_set,
                                               const SamplingOptions& opts = {}) {
    EmpiricalResult res;
    const SetSampler sampler(anomaly_set);
    std::vector<Vector> candidates;
    if (opts.vertex_sweep) candidates = sampler.vertices();
    std::mt19937_64 rng(opts.seed);
    // Singletons need exactly one run.
    const bool single = (sampler.bounds().lower - sampler.bounds().upper).cwiseAbs().maxCoeff() == 0.0;
    if (single) {
        candidates = {sampler.bounds().lower};
    } else {
        const int extra = std::max(0, opts.n_samples - static_cast<int>(candidates.size()));
        for (int i = 0; i < extra; ++i) candidates.push_back(sampler.sample(rng));
    }
    const Vector xi0 = Vector::Zero(loop.controller.l());
    for (const auto& a : candidates) {
        ++res.runs;
        const auto rep = simulate_nonlinear(loop, loop.x_ref, xi0, constant_signal(a), opts.horizon);
        if (auto ct = rep.critical_time(); ct && (!res.critical_time || *ct < *res.critical_time)) {
            res.critical_time = ct;
        }
    }
    return res;
}

/// CSV with columns t, x1.., u1.. (the last row has no input).
inline void write_trajectory_csv(std::ostream& os, const ExitReport& rep, double sample_time = 1.0,
                                 const std::string& state_prefix = "x", const std::string& input_prefix = "u") {
    detail::require(!rep.trajectory.empty(), "write_trajectory_csv: no stored trajectory");
    const auto nx = rep.trajectory.front().size();
    const auto nu = rep.inputs.empty() ? Eigen::Index{0} : rep.inputs.front().size();
    os << 't';
    for (Eigen::Index i = 0; i < nx; ++i) os << ',' << state_prefix << i + 1;
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << input_prefix << i + 1;
    os << '\n';
    const auto old = os.precision(10);
    for (std::size_t k = 0; k < rep.trajectory.size(); ++k) {
        os << static_cast<double>(k) * sample_time;
        for (Eigen::Index i = 0; i < nx; ++i) os << ',' << rep.trajectory[k](i);
        for (Eigen::Index i = 0; i < nu; ++i) {
            os << ',';
            if (k < rep.inputs.size()) os << rep.inputs[k](i);
        }
        os << '\n';
    }
    os.precision(old);
}

}  // namespace crittime
