#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mutualsim/constants.hpp"
#include "mutualsim/error.hpp"
#include "mutualsim/experiments.hpp"
#include "mutualsim/kv_record.hpp"
#include "mutualsim/mac_analytic.hpp"
#include "mutualsim/roadnet.hpp"
#include "mutualsim/scenario.hpp"

namespace ms = mutualsim;
namespace fs = std::filesystem;

namespace {

enum Exit : int {
    kOk = 0,
    kConfig = 2,
    kValidation = 3,
    kSolver = 4,
    kSimulation = 5,
    kOther = 1,
};

/// `key=value` overrides on top of a params file, as one KvMap.
ms::kv::KvMap mac_inputs(const std::string& file, const std::vector<std::string>& sets) {
    ms::kv::KvMap map;
    if (!file.empty()) map = ms::kv::parse_kv_file(file);
    std::string text;
    for (const auto& s : sets) text += s + "\n";
    std::istringstream in(text);
    for (auto& [k, e] : ms::kv::parse_kv(in)) map[k] = e;
    for (const auto& [k, e] : map) {
        const auto& keys = ms::kv::mac_param_keys();
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw ms::ParseError("unknown MAC parameter", e.line, k);
    }
    return map;
}

/// Cartesian product over list-valued keys, first key varying slowest.
std::vector<ms::kv::KvMap> expand(const ms::kv::KvMap& map) {
    std::vector<ms::kv::KvMap> out{{}};
    for (const auto& [k, e] : map) {
        std::vector<ms::kv::KvMap> next;
        for (const auto& partial : out)
            for (const auto& v : e.values) {
                auto m = partial;
                m[k] = ms::kv::Entry{{v}, e.line};
                next.push_back(std::move(m));
            }
        out = std::move(next);
    }
    return out;
}

int cmd_solve_mac(const std::string& file, const std::vector<std::string>& sets, bool with_params) {
    const auto points = expand(mac_inputs(file, sets));
    int status = kOk;
    for (const auto& point : points) {
        const auto params = ms::kv::apply_mac_fields({}, point);
        ms::kv::Record rec;
        if (with_params) rec = ms::kv::to_record(params);
        try {
            const auto sol = ms::mac::solve(params);
            for (auto& kv : ms::kv::to_record(sol)) rec.push_back(std::move(kv));
        } catch (const ms::SolverError& e) {
            if (points.size() == 1) throw;
            rec.emplace_back("error", std::string("\"") + e.what() + "\"");
            status = kSolver;
        }
        std::cout << ms::kv::format_record(rec) << "\n";
    }
    return status;
}

int cmd_validate_mac(double duration, int threads, std::uint64_t seed, const std::string& out) {
    ms::experiments::MacGrid grid;
    grid.des_duration = duration;
    grid.seed = seed;
    const auto rows = ms::experiments::validate_mac(grid, threads);
    if (out.empty()) {
        ms::experiments::write_mac_comparison(std::cout, rows);
    } else {
        if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
        std::ofstream f(out);
        if (!f) throw ms::ConfigError("cannot write '" + out + "'");
        ms::experiments::write_mac_comparison(f, rows);
    }
    double worst_thr = 0.0, worst_delay = 0.0;
    for (const auto& r : rows) {
        worst_thr = std::max(worst_thr, std::abs(r.throughput_error));
        worst_delay = std::max(worst_delay, std::abs(r.delay_error));
    }
    std::cerr << rows.size() << " points, max |throughput error| " << worst_thr
              << ", max |delay error| " << worst_delay << "\n";
    return kOk;
}

ms::roadnet::RoadNetwork network_from(const std::string& path, const ms::roadnet::GridOptions& grid) {
    if (path.empty()) return ms::roadnet::make_grid(grid);
    auto loaded = ms::roadnet::load_network(path);
    for (const auto& r : loaded.report.rejected)
        std::cerr << path << ":" << r.line << ": rejected [" << r.section << "] " << r.reason << "\n";
    return std::move(loaded.network);
}

int cmd_place_rsus(const std::string& path, const ms::roadnet::GridOptions& grid, double range,
                   const std::string& out) {
    const auto net = network_from(path, grid);
    const auto chosen = ms::roadnet::place_rsus(net, range);
    const auto placed = net.with_rsus(ms::roadnet::rsus_at_signals(net, chosen, range));
    std::cout << "signals=" << net.signals().size() << " rsus=" << chosen.size() << " signal_ids=";
    for (std::size_t i = 0; i < chosen.size(); ++i) std::cout << (i ? "," : "") << chosen[i];
    std::cout << " link_coverage=" << ms::kv::format_double(ms::roadnet::link_length_coverage(placed))
              << "\n";
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw ms::ConfigError("cannot write '" + out + "'");
        ms::roadnet::write_network(f, placed);
    }
    return kOk;
}

int cmd_gen_grid(const ms::roadnet::GridOptions& grid, const std::string& out) {
    const auto net = ms::roadnet::make_grid(grid);
    if (out.empty()) {
        ms::roadnet::write_network(std::cout, net);
        return kOk;
    }
    std::ofstream f(out);
    if (!f) throw ms::ConfigError("cannot write '" + out + "'");
    ms::roadnet::write_network(f, net);
    return kOk;
}

struct RunOverrides {
    std::vector<double> odsf;
    std::vector<std::uint64_t> seeds;
    std::string mode;
    std::string out;
    int threads = 0;
};

ms::scenario::Scenario scenario_with(const std::string& path, const RunOverrides& o) {
    auto s = ms::scenario::load_scenario(path);
    if (!o.odsf.empty()) s.odsf = o.odsf;
    if (!o.seeds.empty()) s.seeds = o.seeds;
    if (!o.mode.empty() && o.mode != "both") s.mode = ms::eco::parse_comm_mode(o.mode);
    if (!o.out.empty()) s.output_dir = o.out;
    if (o.threads > 0) s.threads = o.threads;
    return s;
}

int cmd_run(const std::string& path, const RunOverrides& o) {
    const auto s = scenario_with(path, o);
    const auto prepared = ms::experiments::prepare(s);
    const double odsf = s.odsf.front();
    const auto seed = s.seeds.front();
    const auto result = ms::experiments::run_once(prepared, odsf, seed, s.mode);
    ms::experiments::write_run(s.output_dir, result);
    std::cout << ms::experiments::summary_header() << "\n"
              << ms::experiments::summary_row(result.summary) << "\n";
    std::cerr << "wall " << result.summary.wall_seconds << " s, "
              << result.summary.wall_per_sim_second << " s per simulated s\n";
    return kOk;
}

int cmd_sweep(const std::string& path, const RunOverrides& o) {
    const auto s = scenario_with(path, o);
    const auto prepared = ms::experiments::prepare(s);
    std::vector<ms::eco::CommMode> modes{s.mode};
    if (o.mode == "both") modes = {ms::eco::CommMode::Ideal, ms::eco::CommMode::Realistic};
    const auto points = ms::experiments::sweep_points(s, modes);
    const auto runs = ms::experiments::sweep(prepared, points, s.threads);
    ms::experiments::write_sweep(s.output_dir, runs);
    std::cout << ms::experiments::summary_header() << "\n";
    for (const auto& r : runs) std::cout << ms::experiments::summary_row(r.summary) << "\n";
    return kOk;
}

int cmd_defaults(const std::string& scenario_path) {
    for (const auto& [k, v] : ms::constants::defaults_table()) std::cout << k << " = " << v << "\n";
    if (!scenario_path.empty()) {
        std::cout << "\n# scenario " << scenario_path << "\n";
        for (const auto& [k, v] : ms::scenario::describe(ms::scenario::load_scenario(scenario_path)))
            std::cout << k << " = " << v << "\n";
    }
    return kOk;
}

void grid_options(CLI::App* cmd, ms::roadnet::GridOptions& g) {
    cmd->add_option("--rows", g.rows, "Grid rows")->capture_default_str();
    cmd->add_option("--cols", g.cols, "Grid columns")->capture_default_str();
    cmd->add_option("--spacing", g.spacing, "Block length (m)")->capture_default_str();
    cmd->add_option("--lanes", g.lanes, "Lanes on local streets")->capture_default_str();
    cmd->add_option("--free-speed", g.free_speed, "Local free speed (km/h)")->capture_default_str();
    cmd->add_option("--jam-density", g.jam_density, "Jam density (veh/km/lane)")->capture_default_str();
    cmd->add_option("--arterial-every", g.arterial_every, "Every n-th row/column is an arterial (0: none)")
        ->capture_default_str();
    cmd->add_option("--arterial-lanes", g.arterial_lanes, "Arterial lanes")->capture_default_str();
    cmd->add_option("--arterial-speed", g.arterial_speed, "Arterial free speed (km/h)")->capture_default_str();
}

void run_options(CLI::App* cmd, RunOverrides& o) {
    cmd->add_option("--odsf", o.odsf, "Demand scaling factors (overrides the scenario)")->delimiter(',');
    cmd->add_option("--seed", o.seeds, "Seeds (overrides the scenario)")->delimiter(',');
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--threads", o.threads, "Worker threads");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"V2I communication and eco-routing co-simulation: MAC model, simulators, experiments"};
    app.require_subcommand(1);

    std::string params_file;
    std::vector<std::string> sets;
    bool with_params = false;
    auto* solve = app.add_subcommand("solve-mac", "Solve the analytical MAC model; list values sweep");
    solve->add_option("--params", params_file, "key = value file; comma lists expand to a grid")
        ->check(CLI::ExistingFile);
    solve->add_option("--set", sets, "key=value override, repeatable");
    solve->add_flag("--with-params", with_params, "Echo the input parameters in each record");

    double duration = 60.0;
    int threads = 1;
    std::uint64_t seed = 1;
    std::string out;
    auto* validate = app.add_subcommand("validate-mac", "Model vs discrete-event simulator on the validation grid");
    validate->add_option("--duration", duration, "Measured simulator time per point (s)")->capture_default_str();
    validate->add_option("--threads", threads, "Worker threads")->capture_default_str();
    validate->add_option("--seed", seed, "Base seed")->capture_default_str();
    validate->add_option("--out", out, "CSV file (default stdout)");

    std::string network;
    ms::roadnet::GridOptions grid;
    double range = ms::constants::kRsuRange;
    auto* place = app.add_subcommand("place-rsus", "Greedy RSU placement at signals");
    place->add_option("--network", network, "Network file (default: generated grid)")->check(CLI::ExistingFile);
    place->add_option("--range", range, "Communication range (m)")->capture_default_str();
    place->add_option("--out", out, "Write the network with RSUs");
    grid_options(place, grid);

    auto* gen = app.add_subcommand("gen-grid", "Write a grid network file");
    gen->add_option("--out", out, "Network file (default stdout)");
    grid_options(gen, grid);

    std::string scenario_path;
    RunOverrides overrides;
    auto* run = app.add_subcommand("run", "One co-simulation run (first odsf and seed)");
    run->add_option("scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--mode", overrides.mode, "Communication mode")->check(CLI::IsMember({"ideal", "realistic"}));
    run_options(run, overrides);

    auto* sweep = app.add_subcommand("sweep", "Every odsf x seed of a scenario on a worker pool");
    sweep->add_option("scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--mode", overrides.mode, "Communication mode")
        ->check(CLI::IsMember({"ideal", "realistic", "both"}));
    run_options(sweep, overrides);

    auto* defaults = app.add_subcommand("defaults", "Print every default (and a scenario's resolved values)");
    defaults->add_option("--scenario", scenario_path, "Scenario file to resolve")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*solve) return cmd_solve_mac(params_file, sets, with_params);
        if (*validate) return cmd_validate_mac(duration, threads, seed, out);
        if (*place) return cmd_place_rsus(network, grid, range, out);
        if (*gen) return cmd_gen_grid(grid, out);
        if (*run) return cmd_run(scenario_path, overrides);
        if (*sweep) return cmd_sweep(scenario_path, overrides);
        if (*defaults) return cmd_defaults(scenario_path);
    } catch (const ms::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kConfig;
    } catch (const ms::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ms::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const ms::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kSolver;
    } catch (const ms::SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return kSimulation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
    return kOk;
}
