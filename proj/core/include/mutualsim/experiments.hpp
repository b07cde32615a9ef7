#pragma once

// Experiment drivers behind the command-line tool: one co-simulation run, an
// ODSF sweep over a worker pool, and the model-versus-simulator MAC grid.
// Every table is written as CSV with a `#schema <name> v1` first line;
// timestamps and wall-clock figures go to a `.meta` sidecar only.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mutualsim/eco_routing.hpp"
#include "mutualsim/mac_analytic.hpp"
#include "mutualsim/scenario.hpp"
#include "mutualsim/traffic_sim.hpp"

namespace mutualsim::experiments {

struct RunSummary {
    double odsf = 1.0;
    std::uint64_t seed = 1;
    eco::CommMode mode = eco::CommMode::Realistic;

    // Finished, non-preload trips.
    std::uint64_t trips = 0;
    double mean_fuel = 0.0;         // L
    double mean_travel_time = 0.0;  // s
    double mean_delay = 0.0;        // s
    double mean_co = 0.0;           // mg
    double mean_hc = 0.0;
    double mean_nox = 0.0;
    double mean_distance = 0.0;     // km
    double mean_speed = 0.0;        // km/h, distance over travel time

    traffic::VehicleCounts counts;
    double finished_pct = 0.0;
    double unfinished_pct = 0.0;
    double deferred_pct = 0.0;

    eco::CommTotals comm;
    double mean_p_drop = 0.0;        // analytic, over packets handed to a cell
    double drop_fraction = 0.0;      // realised drops over created reports
    double mean_packet_delay = 0.0;  // s, every Delivered report
    double mean_applied_delay = 0.0; // s, reports applied before the horizon

    double max_density = 0.0;        // veh/km/lane over NFD samples
    double peak_flow = 0.0;          // veh/h/lane
    double peak_flow_density = 0.0;
    double min_flow_past_peak = 0.0; // lowest flow at a density above the peak's
    bool congested = false;
    double simulated_seconds = 0.0;
    std::uint64_t state_hash = 0;

    // Not part of the deterministic output.
    double wall_seconds = 0.0;
    double wall_per_sim_second = 0.0;
};

struct RunResult {
    RunSummary summary;
    traffic::NetworkStats stats;
    std::vector<traffic::LinkCostUpdate> ledger;
};

/// Inputs shared by every run of a scenario, loaded once.
struct Prepared {
    scenario::Scenario scenario;
    roadnet::RoadNetwork network;
    energy::VtMicroCoefficients coefficients;
    traffic::OdDemand demand;
};

Prepared prepare(const scenario::Scenario& s);

RunResult run_once(const Prepared& p, double odsf, std::uint64_t seed, eco::CommMode mode);

struct SweepPoint {
    double odsf = 1.0;
    std::uint64_t seed = 1;
    eco::CommMode mode = eco::CommMode::Realistic;
};

/// Every (mode, odsf, seed) combination, in that nesting order.
std::vector<SweepPoint> sweep_points(const scenario::Scenario& s,
                                     const std::vector<eco::CommMode>& modes);

/// Runs all points on `threads` workers; results are in point order.
std::vector<RunResult> sweep(const Prepared& p, const std::vector<SweepPoint>& points, int threads);

/// Means of consecutive, non-overlapping blocks of `block` samples (time of
/// the block's last sample). A trailing partial block is dropped.
std::vector<traffic::NfdSample> block_average(const std::vector<traffic::NfdSample>& nfd, std::size_t block);

/// True when some sample has density above the peak-flow sample's and flow
/// at most `flow_share` of the peak.
bool on_descending_branch(const std::vector<traffic::NfdSample>& nfd, double flow_share,
                          RunSummary* out = nullptr);

/// Smallest odsf at which a run of the given mode and seed is congested, or NaN.
double congestion_onset(const std::vector<RunSummary>& runs, eco::CommMode mode, std::uint64_t seed);

// Writers. `dir` is created if missing.
void write_run(const std::string& dir, const RunResult& r);
void write_sweep(const std::string& dir, const std::vector<RunResult>& runs);
std::string summary_header();
std::string summary_row(const RunSummary& s);

struct MacGrid {
    std::vector<int> stations{5, 10, 20, 40};
    std::vector<double> rates{10, 25, 50, 100};        // packets/s per station
    std::vector<double> payload_bytes{500, 1000};
    std::vector<mac::AccessMode> modes{mac::AccessMode::Basic, mac::AccessMode::RtsCts};
    mac::MacParams base;
    double des_duration = 60.0;  // s measured
    std::uint64_t seed = 1;
};

struct MacComparison {
    int stations = 0;
    double rate = 0.0;
    double payload_bytes = 0.0;
    mac::AccessMode mode = mac::AccessMode::Basic;
    bool converged = false;
    double model_throughput = 0.0;  // per station, packets/s
    double des_throughput = 0.0;
    double des_throughput_hw = 0.0;
    double throughput_error = 0.0;  // relative to the simulator
    double model_delay = 0.0;       // s; infinity when saturated
    double des_delay = 0.0;
    double des_delay_hw = 0.0;
    double delay_error = 0.0;
    double model_drop = 0.0;
    double des_drop = 0.0;
};

/// One row per grid point; points run on `threads` workers.
std::vector<MacComparison> validate_mac(const MacGrid& grid, int threads = 1);
void write_mac_comparison(std::ostream& out, const std::vector<MacComparison>& rows);

}  // namespace mutualsim::experiments
