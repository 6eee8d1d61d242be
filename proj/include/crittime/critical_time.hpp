#pragma once
// Horizon extension: k_f = 1, 2, ... until some safety QC can no longer be
// certified. The last certified horizon is an under-estimate of the critical time.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "crittime/lifting.hpp"
#include "crittime/sdp.hpp"

namespace crittime {

enum class StopKind { InfeasibleAt, HorizonCap, SolverFailure };

struct StopReason {
    StopKind kind = StopKind::HorizonCap;
    int at = 0;  // horizon of the failing iteration (unused for HorizonCap)
};

inline std::string to_string(const StopReason& r) {
    switch (r.kind) {
        case StopKind::InfeasibleAt: return "InfeasibleAt(" + std::to_string(r.at) + ")";
        case StopKind::SolverFailure: return "SolverFailure(" + std::to_string(r.at) + ")";
        case StopKind::HorizonCap: return "HorizonCap";
    }
    return "?";
}

struct SafetyCheck {
    int s = 0;  // 0-based safety QC index
    Verdict verdict = Verdict::NumericalFailure;
    double solve_time = 0.0;
    int solver_iterations = 0;
    double residual_min_eig = 0.0;
    bool certificate_verified = false;
    std::size_t multiplier_count = 0;
    std::optional<Vector> multipliers;  // only kept on request
};

struct IterationRecord {
    int k = 0;
    std::vector<SafetyCheck> checks;
    double wall_time = 0.0;

    bool all_feasible() const {
        return std::all_of(checks.begin(), checks.end(),
                           [](const SafetyCheck& c) { return c.verdict == Verdict::Feasible; });
    }
};

struct CritTimeResult {
    int k_star = 0;
    std::vector<IterationRecord> iterations;
    StopReason stop_reason;
    double wall_time = 0.0;
};

struct CritTimeOptions {
    int max_horizon = 60;
    SolveOptions solver;
    const SdpBackend* backend = nullptr;  // default_backend() when null
    bool keep_multipliers = false;
    /// Called after every solve (k, s, problem, outcome); used by the test suites.
    std::function<void(int, int, const FeasibilityProblem&, const SolveOutcome&)> on_solve;
};

inline CritTimeResult compute_critical_time(const ScenarioSpec& sc, const CritTimeOptions& opts = {}) {
    sc.validate();
    detail::require(opts.max_horizon >= 1, "compute_critical_time: max_horizon must be >= 1");
    const SdpBackend& backend = opts.backend ? *opts.backend : default_backend();
    const auto start = std::chrono::steady_clock::now();
    CritTimeResult res;
    const int n_safety = static_cast<int>(sc.safety.qcs().size());
    for (int k = 1; k <= opts.max_horizon; ++k) {
        const auto it_start = std::chrono::steady_clock::now();
        const LiftingContext ctx(sc.model, k);
        IterationRecord rec;
        rec.k = k;
        for (int s = 0; s < n_safety; ++s) {
            const FeasibilityProblem p = horizon_problem(ctx, sc, s);
            const SolveOutcome out = solve_feasibility(p, opts.solver, backend);
            SafetyCheck c;
            c.s = s;
            c.verdict = out.verdict;
            c.solve_time = out.solve_time;
            c.solver_iterations = out.iterations;
            c.residual_min_eig = out.residual_min_eig;
            c.multiplier_count = p.multiplier_count();
            c.certificate_verified =
                out.verdict == Verdict::Feasible && verify_certificate(p, *out.multipliers, opts.solver.feas_tol);
            if (opts.keep_multipliers) c.multipliers = out.multipliers;
            if (opts.on_solve) opts.on_solve(k, s, p, out);
            rec.checks.push_back(std::move(c));
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - it_start).count();
        const bool ok = rec.all_feasible();
        const bool any_infeasible = std::any_of(rec.checks.begin(), rec.checks.end(), [](const SafetyCheck& c) {
            return c.verdict == Verdict::Infeasible;
        });
        res.iterations.push_back(std::move(rec));
        if (!ok) {
            res.k_star = k - 1;
            res.stop_reason = {any_infeasible ? StopKind::InfeasibleAt : StopKind::SolverFailure, k};
            res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return res;
        }
    }
    res.k_star = opts.max_horizon;
    res.stop_reason = {StopKind::HorizonCap, 0};
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

using GammaPair = std::pair<double, double>;

struct GridCell {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    std::optional<CritTimeResult> result;
    std::optional<int> empirical;  // simulation-based critical time, when compared
    std::string error;             // per-cell failure (scenario construction, ...)
};

/// Runs `cell_fn` over the grid with up to `jobs` worker threads. Exceptions
/// are recorded per cell. Output order follows the grid.
inline std::vector<GridCell> run_cells(const std::vector<GammaPair>& grid,
                                       const std::function<void(GridCell&)>& cell_fn, int jobs = 1) {
    detail::require(!grid.empty(), "run_grid: empty grid");
    std::vector<GridCell> cells(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        cells[i].gamma1 = grid[i].first;
        cells[i].gamma2 = grid[i].second;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                cell_fn(cells[i]);
            } catch (const std::exception& e) {
                cells[i].result.reset();
                cells[i].error = e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return cells;
}

inline std::vector<GridCell> run_grid(const std::function<ScenarioSpec(double, double)>& factory,
                                      const std::vector<GammaPair>& grid, const CritTimeOptions& opts = {},
                                      int jobs = 1) {
    return run_cells(
        grid, [&](GridCell& c) { c.result = compute_critical_time(factory(c.gamma1, c.gamma2), opts); }, jobs);
}

// ---- exports ----------------------------------------------------------------

inline std::string format_gamma(double g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", g);
    return buf;
}

inline void write_cells_csv(std::ostream& os, const std::vector<GridCell>& cells) {
    os << "gamma1,gamma2,k_star,stop_reason,empirical,error\n";
    for (const auto& c : cells) {
        os << format_gamma(c.gamma1) << ',' << format_gamma(c.gamma2) << ',';
        if (c.result) os << c.result->k_star << ',' << to_string(c.result->stop_reason);
        else os << ',';
        os << ',';
        if (c.empirical) os << *c.empirical;
        os << ',';
        std::string err = c.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << err << '\n';
    }
}

/// One row per (cell, iteration): wall time of the horizon step.
inline void write_timing_csv(std::ostream& os, const std::vector<GridCell>& cells) {
    os << "gamma1,gamma2,k,seconds,max_solve_seconds\n";
    for (const auto& c : cells) {
        if (!c.result) continue;
        for (const auto& it : c.result->iterations) {
            double mx = 0.0;
            for (const auto& ch : it.checks) mx = std::max(mx, ch.solve_time);
            os << format_gamma(c.gamma1) << ',' << format_gamma(c.gamma2) << ',' << it.k << ',' << std::setprecision(6)
               << it.wall_time << ',' << mx << '\n';
        }
    }
}

/// Text of one table cell: "k", "k (+d)" when compared, "k+" at the horizon
/// cap, "k!" after a solver failure and "err" for failed cells.
inline std::string cell_text(const GridCell& c) {
    if (!c.result) return "err";
    std::string s = std::to_string(c.result->k_star);
    if (c.result->stop_reason.kind == StopKind::HorizonCap) s += "+";
    if (c.result->stop_reason.kind == StopKind::SolverFailure) s += "!";
    if (c.empirical) {
        const int d = *c.empirical - c.result->k_star;
        s += d >= 0 ? " (+" + std::to_string(d) + ")" : " (" + std::to_string(d) + ")";
    }
    return s;
}

/// Rows gamma1, columns gamma2 ascending.
inline void write_markdown_table(std::ostream& os, const std::vector<GridCell>& cells, const std::string& title = "") {
    std::set<double> g1s, g2s;
    std::map<std::pair<double, double>, const GridCell*> at;
    for (const auto& c : cells) {
        g1s.insert(c.gamma1);
        g2s.insert(c.gamma2);
        at[{c.gamma1, c.gamma2}] = &c;
    }
    if (!title.empty()) os << "### " << title << "\n\n";
    os << "| g1 \\ g2 |";
    for (double g2 : g2s) os << ' ' << format_gamma(g2) << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < g2s.size(); ++i) os << "---|";
    os << '\n';
    for (double g1 : g1s) {
        os << "| " << format_gamma(g1) << " |";
        for (double g2 : g2s) {
            auto it = at.find({g1, g2});
            os << ' ' << (it == at.end() ? std::string("") : cell_text(*it->second)) << " |";
        }
        os << '\n';
    }
}

/// Parses "g1:g2,g1:g2,...".
inline std::vector<GammaPair> parse_grid(const std::string& spec) {
    std::vector<GammaPair> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw FormatError("grid entry '" + item + "' is not g1:g2");
        const double g1 = parse_double(item.substr(0, colon), "gamma1");
        const double g2 = parse_double(item.substr(colon + 1), "gamma2");
        if (!(g1 > 0.0 && g1 < 1.0 && g2 > 0.0 && g2 < 1.0)) {
            throw FormatError("grid entry '" + item + "' outside (0,1)");
        }
        out.emplace_back(g1, g2);
    }
    if (out.empty()) throw FormatError("empty grid");
    return out;
}

}  // namespace crittime
