// crittime command-line front end.
//
//   crittime analyze  --scenario worst-case --grid paper --out results/
//   crittime compare  --scenario dos --grid paper --jobs 4
//   crittime simulate --scenario dos --gamma 0.70,0.55 --out dos.csv
//   crittime sets check --file w.set --point 0,0,0,0,0,0
//
// Exit codes: 0 completed (cells may carry failure markers), 2 configuration
// error, 3 internal error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "crittime/crittime.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace crittime;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInternal = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string scenario = "worst-case";
    std::string grid;   // "paper" or "g1:g2,..."
    std::string gamma;  // "g1,g2"
    std::string out;
    std::string formats = "csv,md,json";
    std::string params;
    std::string scenario_file;
    std::string backend;
    int jobs = 1;
    int max_horizon = 60;
    int samples = 200;
    int sim_horizon = 100;
    std::uint64_t seed = 1;
    double feas_tol = 1e-7;
    double time_limit = 30.0;
};

/// Options given on the command line win over the config file.
struct Cli {
    RunConfig cfg;
    std::string config_file;
    std::vector<std::pair<std::string, CLI::Option*>> options;

    void add_common(CLI::App* app) {
        app->add_option("--config", config_file, "key = value run configuration file");
        track(app->add_option("--scenario", cfg.scenario,
                              "dos | upper-saturation | worst-case | channel1 | channel2 | demo-1d"),
              "scenario");
        track(app->add_option("--scenario-file", cfg.scenario_file, "scenario document (overrides --scenario)"),
              "scenario_file");
        track(app->add_option("--params", cfg.params, "plant parameter file"), "params");
        track(app->add_option("--backend", cfg.backend, "SDP backend (ipm, dense-ipm)"), "backend");
        track(app->add_option("--max-horizon", cfg.max_horizon, "horizon cap"), "max_horizon");
        track(app->add_option("--feas-tol", cfg.feas_tol, "certificate tolerance"), "feas_tol");
        track(app->add_option("--time-limit", cfg.time_limit, "per-solve time limit (s)"), "time_limit");
        track(app->add_option("--seed", cfg.seed, "sampling seed"), "seed");
    }

    void add_grid(CLI::App* app) {
        track(app->add_option("--grid", cfg.grid, "'paper' for the built-in 5x5 valve grid, or g1:g2,g1:g2,..."), "grid");
        track(app->add_option("--gamma", cfg.gamma, "single valve pair g1,g2"), "gamma");
        track(app->add_option("--out", cfg.out, "output directory"), "out");
        track(app->add_option("--formats", cfg.formats, "comma list of csv, md, json"), "formats");
        track(app->add_option("--jobs", cfg.jobs, "worker threads"), "jobs");
    }

    void track(CLI::Option* opt, const std::string& key) { options.emplace_back(key, opt); }

    void merge_config_file() {
        if (config_file.empty()) return;
        KeyValues kv;
        try {
            kv = load_key_values(config_file);
        } catch (const FormatError& e) {
            throw ConfigError(e.what());
        }
        for (const auto& [key, value] : kv) {
            auto it = std::find_if(options.begin(), options.end(), [&](const auto& o) { return o.first == key; });
            if (it == options.end()) throw ConfigError("unknown config key '" + key + "'");
            if (it->second->count() > 0) continue;
            try {
                it->second->clear();
                it->second->add_result(value);
                it->second->run_callback();
            } catch (const CLI::Error& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        }
    }
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Vector parse_vector(const std::string& s, const std::string& what) {
    const auto parts = split(s, ',');
    Vector v(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Eigen::Index>(i)) = parse_double(parts[i], what);
    return v;
}

BenchConfig bench_config(const RunConfig& cfg) {
    BenchConfig base;
    if (!cfg.params.empty()) base = bench_config_from(load_key_values(cfg.params), base);
    return base;
}

std::vector<GammaPair> grid_of(const RunConfig& cfg) {
    if (!cfg.gamma.empty()) {
        const Vector g = parse_vector(cfg.gamma, "gamma");
        if (g.size() != 2) throw ConfigError("--gamma expects g1,g2");
        return parse_grid(format_gamma(g(0)) + ":" + format_gamma(g(1)));
    }
    if (cfg.grid.empty() || cfg.grid == "paper") return reference_grid();
    return parse_grid(cfg.grid);
}

struct Formats {
    bool csv = false, md = false, json = false;
};

Formats formats_of(const RunConfig& cfg) {
    Formats f;
    for (const auto& t : split(cfg.formats, ',')) {
        if (t == "csv") f.csv = true;
        else if (t == "md") f.md = true;
        else if (t == "json") f.json = true;
        else throw ConfigError("unknown output format '" + t + "'");
    }
    if (!f.csv && !f.md && !f.json) throw ConfigError("--formats must name at least one format");
    return f;
}

CritTimeOptions crit_options(const RunConfig& cfg) {
    if (cfg.max_horizon < 1) throw ConfigError("--max-horizon must be >= 1");
    if (cfg.jobs < 1) throw ConfigError("--jobs must be >= 1");
    CritTimeOptions o;
    o.max_horizon = cfg.max_horizon;
    o.solver.feas_tol = cfg.feas_tol;
    o.solver.time_limit = cfg.time_limit;
    if (!cfg.backend.empty()) {
        static std::unique_ptr<SdpBackend> chosen;
        try {
            chosen = make_backend(cfg.backend);
        } catch (const ContractViolation& e) {
            throw ConfigError(e.what());
        }
        o.backend = chosen.get();
    }
    return o;
}

bool is_quadtank(const std::string& s) { return parse_scenario_kind(s).has_value(); }

/// Non-grid scenarios: the scalar demo or a scenario document.
std::optional<ScenarioSpec> standalone_scenario(const RunConfig& cfg) {
    if (!cfg.scenario_file.empty()) return scenario_from_document(load_document(cfg.scenario_file));
    if (cfg.scenario == "demo-1d") return scalar_demo();
    if (!is_quadtank(cfg.scenario)) throw ConfigError("unknown scenario '" + cfg.scenario + "'");
    return std::nullopt;
}

json check_json(const SafetyCheck& c) {
    return {{"s", c.s},
            {"verdict", to_string(c.verdict)},
            {"solve_time", c.solve_time},
            {"solver_iterations", c.solver_iterations},
            {"residual_min_eig", c.residual_min_eig},
            {"certificate_verified", c.certificate_verified},
            {"multiplier_count", c.multiplier_count}};
}

json result_json(const CritTimeResult& r) {
    json its = json::array();
    for (const auto& it : r.iterations) {
        json checks = json::array();
        for (const auto& c : it.checks) checks.push_back(check_json(c));
        its.push_back({{"k", it.k}, {"wall_time", it.wall_time}, {"checks", checks}});
    }
    return {{"k_star", r.k_star},
            {"stop_reason", to_string(r.stop_reason)},
            {"wall_time", r.wall_time},
            {"iterations", its}};
}

json cell_json(const GridCell& c) {
    json j = {{"gamma1", c.gamma1}, {"gamma2", c.gamma2}};
    if (c.result) j["result"] = result_json(*c.result);
    if (c.empirical) j["empirical"] = *c.empirical;
    if (!c.error.empty()) j["error"] = c.error;
    return j;
}

std::string timestamp() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

json config_json(const RunConfig& cfg) {
    return {{"scenario", cfg.scenario}, {"scenario_file", cfg.scenario_file}, {"grid", cfg.grid},
            {"gamma", cfg.gamma},       {"params", cfg.params},               {"backend", cfg.backend},
            {"jobs", cfg.jobs},         {"max_horizon", cfg.max_horizon},     {"samples", cfg.samples},
            {"sim_horizon", cfg.sim_horizon}, {"seed", cfg.seed},             {"feas_tol", cfg.feas_tol},
            {"time_limit", cfg.time_limit}};
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    return f;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::string& config_file, const std::vector<std::string>& files) {
    json m = {{"tool", "crittime"},
              {"version", CRITTIME_VERSION},
              {"command", command},
              {"created", timestamp()},
              {"config_file", config_file},
              {"config", config_json(cfg)},
              {"outputs", files}};
    open_out(dir / "manifest.json") << m.dump(2) << '\n';
}

void emit_grid(const std::string& command, const RunConfig& cfg, const std::string& config_file,
               const std::vector<GridCell>& cells, const std::string& title) {
    write_markdown_table(std::cout, cells, title);
    if (cfg.out.empty()) return;
    const Formats f = formats_of(cfg);
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    std::vector<std::string> files;
    if (f.csv) {
        auto cells_csv = open_out(dir / "cells.csv");
        write_cells_csv(cells_csv, cells);
        auto timing_csv = open_out(dir / "timing.csv");
        write_timing_csv(timing_csv, cells);
        files.insert(files.end(), {"cells.csv", "timing.csv"});
    }
    if (f.md) {
        auto md = open_out(dir / "table.md");
        write_markdown_table(md, cells, title);
        files.push_back("table.md");
    }
    if (f.json) {
        json arr = json::array();
        for (const auto& c : cells) arr.push_back(cell_json(c));
        open_out(dir / "results.json") << json{{"title", title}, {"cells", arr}}.dump(2) << '\n';
        files.push_back("results.json");
    }
    write_manifest(dir, command, cfg, config_file, files);
    std::cerr << "wrote " << files.size() + 1 << " files to " << dir.string() << '\n';
}

void emit_single(const std::string& command, const RunConfig& cfg, const std::string& config_file,
                 const ScenarioSpec& sc, const CritTimeResult& r, std::optional<int> empirical) {
    std::cout << sc.label << ": k_star = " << r.k_star << " (" << to_string(r.stop_reason) << ")";
    if (empirical) std::cout << ", simulation = " << *empirical << " (diff " << *empirical - r.k_star << ")";
    std::cout << '\n';
    if (cfg.out.empty()) return;
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    json j = {{"label", sc.label}, {"result", result_json(r)}};
    if (empirical) j["empirical"] = *empirical;
    open_out(dir / "results.json") << j.dump(2) << '\n';
    write_manifest(dir, command, cfg, config_file, {"results.json"});
}

std::mutex progress_mutex;

void progress(const std::string& kind, const GridCell& c) {
    std::lock_guard<std::mutex> lock(progress_mutex);
    std::cerr << kind << " g1=" << format_gamma(c.gamma1) << " g2=" << format_gamma(c.gamma2) << ": ";
    if (c.result) {
        std::cerr << "k_star=" << c.result->k_star << " " << to_string(c.result->stop_reason) << " in "
                  << std::setprecision(3) << c.result->wall_time << " s";
    }
    if (c.empirical) std::cerr << ", simulation=" << *c.empirical;
    if (!c.error.empty()) std::cerr << "error: " << c.error;
    std::cerr << '\n';
}

int cmd_analyze(const RunConfig& cfg, const std::string& config_file, bool compare) {
    const std::string command = compare ? "compare" : "analyze";
    CritTimeOptions opts = crit_options(cfg);
    SamplingOptions sampling;
    sampling.n_samples = cfg.samples;
    sampling.seed = cfg.seed;
    sampling.horizon = cfg.sim_horizon;

    if (auto sc = standalone_scenario(cfg)) {
        const CritTimeResult r = compute_critical_time(*sc, opts);
        std::optional<int> empirical;
        if (compare) {
            sampling.horizon = std::max(sampling.horizon, cfg.max_horizon + 1);
            empirical = empirical_critical_time(*sc, sampling).critical_time;
        }
        emit_single(command, cfg, config_file, *sc, r, empirical);
        return kExitOk;
    }

    const ScenarioKind kind = *parse_scenario_kind(cfg.scenario);
    const BenchConfig bench = bench_config(cfg);
    const auto grid = grid_of(cfg);
    formats_of(cfg);
    const auto cells = run_cells(
        grid,
        [&](GridCell& c) {
            const QuadTankSetup setup = make_setup(bench, c.gamma1, c.gamma2);
            c.result = compute_critical_time(build_scenario(kind, setup), opts);
            if (compare) c.empirical = quadtank_nonlinear_critical_time(kind, setup, sampling).critical_time;
            progress(cfg.scenario, c);
        },
        cfg.jobs);
    emit_grid(command, cfg, config_file, cells, cfg.scenario);
    return kExitOk;
}

int cmd_simulate(const RunConfig& cfg, const std::string& model, const std::string& anomaly_value,
                 const std::string& out) {
    if (cfg.sim_horizon < 0) throw ConfigError("--horizon must be >= 0");
    ExitReport rep;
    double ts = 1.0;
    std::string state_prefix = "x", input_prefix = "u";
    std::string label;

    if (cfg.scenario == "demo-1d" || !cfg.scenario_file.empty()) {
        const ScenarioSpec sc = *standalone_scenario(cfg);
        label = sc.label;
        Vector a = anomaly_value.empty() ? SetSampler(sc.anomaly.anomaly_set).vertices().back()
                                         : parse_vector(anomaly_value, "anomaly");
        if (a.size() != sc.model.dims.m_a) throw ConfigError("--anomaly has the wrong dimension");
        rep = simulate_linear(sc.model, Vector::Zero(sc.model.dims.nx()), constant_signal(a),
                              constant_signal(Vector::Zero(sc.model.dims.nd())), sc.safety, cfg.sim_horizon, true);
    } else {
        const std::optional<ScenarioKind> kind =
            cfg.scenario == "none" ? std::nullopt : parse_scenario_kind(cfg.scenario);
        if (cfg.scenario != "none" && !kind) throw ConfigError("unknown scenario '" + cfg.scenario + "'");
        const auto grid = grid_of(cfg);
        if (grid.size() != 1) throw ConfigError("simulate needs a single --gamma pair");
        const QuadTankSetup setup = make_setup(bench_config(cfg), grid[0].first, grid[0].second);
        ts = setup.config.sample_time;
        label = cfg.scenario;

        Vector a;
        const SetDescription anomaly_set =
            kind ? quadtank_anomaly(*kind, setup).anomaly_set : singleton(Vector::Zero(1));
        if (!anomaly_value.empty()) {
            a = parse_vector(anomaly_value, "anomaly");
            if (a.size() != anomaly_set.dim()) throw ConfigError("--anomaly has the wrong dimension");
        } else {
            std::mt19937_64 rng(cfg.seed);
            a = SetSampler(anomaly_set).sample(rng);
        }
        if (model == "nonlinear") {
            state_prefix = "h";
            input_prefix = "v";
            const NonlinearLoop loop = nonlinear_loop(setup, kind);
            rep = simulate_nonlinear(loop, setup.op.h0, Vector::Zero(setup.controller.l()), constant_signal(a),
                                     cfg.sim_horizon, true);
        } else if (model == "linear") {
            const ClosedLoopModel m =
                kind ? build_scenario(*kind, setup).model
                     : assemble(setup.plant, setup.controller,
                                AnomalyModel(Matrix::Identity(2, 2), Matrix::Zero(2, 1), anomaly_set));
            rep = simulate_linear(m, Vector::Zero(m.dims.nx()), constant_signal(a),
                                  constant_signal(Vector::Zero(m.dims.nd())), level_safety_set(setup), cfg.sim_horizon,
                                  true);
        } else {
            throw ConfigError("--model must be 'nonlinear' or 'linear'");
        }
    }

    if (out.empty()) {
        write_trajectory_csv(std::cout, rep, ts, state_prefix, input_prefix);
    } else {
        auto f = open_out(out);
        write_trajectory_csv(f, rep, ts, state_prefix, input_prefix);
    }
    std::cerr << label << ": ";
    if (rep.first_exit_step) {
        std::cerr << "first exit at step " << *rep.first_exit_step << " (index " << rep.violating_index << ")\n";
    } else {
        std::cerr << "no exit within " << rep.steps << " steps\n";
    }
    if (rep.clamped_levels > 0) std::cerr << "warning: " << rep.clamped_levels << " negative levels clamped to 0\n";
    return kExitOk;
}

const SetDescription& pick_set(const Document& doc, const std::string& name) {
    if (!name.empty()) return doc.set(name);
    if (doc.sets.size() != 1) throw ConfigError("document holds " + std::to_string(doc.sets.size()) +
                                                " sets; choose one with --set");
    return doc.sets.begin()->second;
}

int cmd_sets_check(const std::string& file, const std::string& name, const std::string& point, double tol) {
    const Document doc = load_document(file);
    const SetDescription& set = pick_set(doc, name);
    const Vector z = parse_vector(point, "point");
    if (z.size() != set.dim()) {
        throw ConfigError("point has " + std::to_string(z.size()) + " coordinates, set dim is " +
                          std::to_string(set.dim()));
    }
    for (std::size_t i = 0; i < set.qcs().size(); ++i) {
        std::cout << "qc  " << i << " sigma = " << eval_sigma(set.qcs()[i], z) << '\n';
    }
    for (std::size_t i = 0; i < set.qces().size(); ++i) {
        std::cout << "qce " << i << " sigma = " << eval_sigma(set.qces()[i], z) << '\n';
    }
    std::cout << (contains(set, z, tol) ? "member" : "non-member") << '\n';
    return kExitOk;
}

int cmd_sets_print(const std::string& file) {
    const Document doc = load_document(file);
    for (const auto& [name, set] : doc.sets) {
        std::cout << name << ": dim " << set.dim() << ", " << set.qcs().size() << " QCs, " << set.qces().size()
                  << " QCEs";
        const AxisBounds b = axis_bounds(set);
        if (b.bounded()) {
            std::cout << ", hull";
            for (Eigen::Index i = 0; i < b.lower.size(); ++i) std::cout << " [" << b.lower(i) << ", " << b.upper(i) << "]";
        }
        std::cout << '\n';
    }
    return kExitOk;
}

ScenarioSpec scenario_for_export(const RunConfig& cfg) {
    if (auto sc = standalone_scenario(cfg)) return *sc;
    const auto grid = grid_of(cfg);
    if (grid.size() != 1) throw ConfigError("needs a single --gamma pair");
    return build_scenario(*parse_scenario_kind(cfg.scenario), bench_config(cfg), grid[0].first, grid[0].second);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Critical-time under-estimates for linear closed loops under input anomalies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", CRITTIME_VERSION);

    Cli analyze_cli, compare_cli, simulate_cli, export_cli, problem_cli;

    auto* analyze = app.add_subcommand("analyze", "critical time over a valve grid or a single scenario");
    analyze_cli.add_common(analyze);
    analyze_cli.add_grid(analyze);

    auto* compare = app.add_subcommand("compare", "critical time next to the simulated critical time");
    compare_cli.add_common(compare);
    compare_cli.add_grid(compare);
    compare_cli.track(compare->add_option("--samples", compare_cli.cfg.samples, "sampled anomalies per cell"),
                      "samples");
    compare_cli.track(compare->add_option("--sim-horizon", compare_cli.cfg.sim_horizon, "simulation length"),
                      "sim_horizon");

    std::string sim_model = "nonlinear", sim_anomaly, sim_out;
    auto* simulate = app.add_subcommand("simulate", "trajectory CSV for one scenario");
    simulate_cli.add_common(simulate);
    simulate_cli.track(simulate->add_option("--gamma", simulate_cli.cfg.gamma, "valve pair g1,g2"), "gamma");
    simulate_cli.track(simulate->add_option("--horizon", simulate_cli.cfg.sim_horizon, "samples to simulate"),
                       "sim_horizon");
    simulate->add_option("--model", sim_model, "nonlinear | linear")->check(CLI::IsMember({"nonlinear", "linear"}));
    simulate->add_option("--anomaly", sim_anomaly, "constant anomaly a1,a2,... (deviation coordinates)");
    simulate->add_option("--out", sim_out, "CSV file (stdout when omitted)");

    auto* sets = app.add_subcommand("sets", "inspect set documents");
    sets->require_subcommand(1);
    std::string set_file, set_name, set_point;
    double set_tol = kDefaultMembershipTol;
    auto* check = sets->add_subcommand("check", "membership of a point");
    check->add_option("--file", set_file, "set document")->required();
    check->add_option("--set", set_name, "set name inside the document");
    check->add_option("--point", set_point, "comma-separated coordinates")->required();
    check->add_option("--tol", set_tol, "membership tolerance");
    auto* print = sets->add_subcommand("print", "summary of every set in a document");
    print->add_option("--file", set_file, "set document")->required();
    std::string export_out;
    auto* exp = sets->add_subcommand("export", "write a scenario document");
    export_cli.add_common(exp);
    export_cli.track(exp->add_option("--gamma", export_cli.cfg.gamma, "valve pair g1,g2"), "gamma");
    exp->add_option("--out", export_out, "output file")->required();

    int problem_k = 1, problem_s = 1;
    std::string problem_out;
    auto* problem = app.add_subcommand("problem", "dump one feasibility problem (debugging)");
    problem_cli.add_common(problem);
    problem_cli.track(problem->add_option("--gamma", problem_cli.cfg.gamma, "valve pair g1,g2"), "gamma");
    problem->add_option("--horizon-k", problem_k, "horizon k_f")->required();
    problem->add_option("--safety-index", problem_s, "1-based safety QC index")->required();
    problem->add_option("--out", problem_out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (analyze->parsed()) {
            analyze_cli.merge_config_file();
            return cmd_analyze(analyze_cli.cfg, analyze_cli.config_file, false);
        }
        if (compare->parsed()) {
            compare_cli.merge_config_file();
            return cmd_analyze(compare_cli.cfg, compare_cli.config_file, true);
        }
        if (simulate->parsed()) {
            simulate_cli.merge_config_file();
            return cmd_simulate(simulate_cli.cfg, sim_model, sim_anomaly, sim_out);
        }
        if (check->parsed()) return cmd_sets_check(set_file, set_name, set_point, set_tol);
        if (print->parsed()) return cmd_sets_print(set_file);
        if (exp->parsed()) {
            export_cli.merge_config_file();
            save_document(export_out, to_document(scenario_for_export(export_cli.cfg)));
            return kExitOk;
        }
        if (problem->parsed()) {
            problem_cli.merge_config_file();
            const ScenarioSpec sc = scenario_for_export(problem_cli.cfg);
            if (problem_k < 1) throw ConfigError("--horizon-k must be >= 1");
            if (problem_s < 1 || problem_s > static_cast<int>(sc.safety.qcs().size())) {
                throw ConfigError("--safety-index out of range");
            }
            auto f = open_out(problem_out);
            write_problem(f, horizon_problem(LiftingContext(sc.model, problem_k), sc, problem_s - 1));
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InfeasibleOperatingPoint& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInternal;
}
