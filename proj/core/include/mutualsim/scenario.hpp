#pragma once

// Co-simulation scenario: which network and demand to load, the load levels
// to sweep, how vehicles talk to the TMC, and where results go.
//
// File format is `key = value` per line (see kv_record.hpp). Relative paths
// resolve against the scenario file's directory.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mutualsim/eco_routing.hpp"
#include "mutualsim/mac_analytic.hpp"
#include "mutualsim/roadnet.hpp"
#include "mutualsim/traffic_sim.hpp"

namespace mutualsim::scenario {

struct Scenario {
    /// Network file; empty means generate a grid from `grid`.
    std::string network_path;
    roadnet::GridOptions grid;
    std::string demand_path;
    /// VT-Micro coefficient file; empty means the shipped light-duty set.
    std::string coefficients_path;

    std::vector<double> odsf{1.0};
    std::vector<std::uint64_t> seeds{1};
    eco::CommMode mode = eco::CommMode::Realistic;

    mac::MacParams mac;
    double rsu_range = constants::kRsuRange;
    /// Place RSUs with the greedy cover even if the network file lists some.
    bool place_rsus = true;
    double background_rate = constants::kBackgroundRate;
    double refresh_interval = constants::kCellRefreshInterval;
    double beta = constants::kCostSmoothing;
    double eta = constants::kRouteNoise;
    bool downlink_impairment = false;

    traffic::SimConfig sim;
    /// A run is congested once an NFD sample lies on the descending branch:
    /// density above the peak-flow sample and flow at most this share of the
    /// peak flow.
    double congestion_flow_share = 0.5;

    std::string output_dir = "out";
    int threads = 1;

    /// Throws ValidationError / ConfigError naming the offending key.
    void validate() const;
};

/// Parses a scenario file. Unknown keys are a ParseError.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(std::istream& in, const std::string& base_dir = ".");

/// Every scenario key with its current value, in a stable order.
std::vector<std::pair<std::string, std::string>> describe(const Scenario& s);

/// Network with RSUs as configured (greedy placement at signals when asked).
roadnet::RoadNetwork build_network(const Scenario& s);

}  // namespace mutualsim::scenario
