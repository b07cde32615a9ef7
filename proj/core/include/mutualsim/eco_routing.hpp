#pragma once

// Feedback eco-routing: the TMC keeps a fuel-cost estimate per link, vehicles
// report measured link fuel after every traversal, and routes are minimum-fuel
// paths over noise-perturbed costs. Reports travel over the V2I channel whose
// loss and delay come from the analytical MAC model of the RSU cell.

#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mutualsim/constants.hpp"
#include "mutualsim/energy.hpp"
#include "mutualsim/mac_analytic.hpp"
#include "mutualsim/roadnet.hpp"
#include "mutualsim/traffic_sim.hpp"

namespace mutualsim::eco {

class TmcCostTable {
public:
    /// Every link starts at its free-flow traversal fuel.
    TmcCostTable(const roadnet::RoadNetwork& net, const energy::VtMicroCoefficients& coeffs);
    explicit TmcCostTable(std::vector<double> costs);

    double cost(std::size_t link) const { return costs_[link]; }
    const std::vector<double>& costs() const noexcept { return costs_; }
    double last_update(std::size_t link) const { return updated_[link]; }
    std::size_t size() const noexcept { return costs_.size(); }

    /// cost <- (1 - beta) cost + beta measured.
    void apply(std::size_t link, double measured, double time, double beta);

private:
    std::vector<double> costs_;
    std::vector<double> updated_;
};

void apply_update(TmcCostTable& table, const traffic::LinkCostUpdate& update,
                  double beta = constants::kCostSmoothing);

/// Minimum total cost path from `from` to `to` (dense node indices) with each
/// link cost multiplied by (1 + eps), eps ~ U(-eta, eta) drawn per link per
/// query. Exact cost ties go to the lexicographically smallest link-id
/// sequence. Empty when no path exists or from == to.
std::vector<std::size_t> route(const roadnet::RoadNetwork& net, const std::vector<double>& costs,
                               std::size_t from, std::size_t to, double eta, std::mt19937_64& rng);

class EcoRouter : public traffic::Router {
public:
    EcoRouter(const roadnet::RoadNetwork& net, const TmcCostTable& table, double eta,
              std::uint64_t seed)
        : net_(net), table_(table), eta_(eta), rng_(seed) {}

    std::vector<std::size_t> route(const traffic::Vehicle& vehicle, std::size_t from_node,
                                   double now) override;

private:
    const roadnet::RoadNetwork& net_;
    const TmcCostTable& table_;
    double eta_;
    std::mt19937_64 rng_;
};

enum class CommMode { Ideal, Realistic };
const char* to_string(CommMode mode);
CommMode parse_comm_mode(const std::string& text);

struct CommConfig {
    CommMode mode = CommMode::Realistic;
    mac::MacParams mac;                          // n_stations / arrival_rate set per cell
    double background_rate = constants::kBackgroundRate;
    double refresh_interval = constants::kCellRefreshInterval;
    double beta = constants::kCostSmoothing;
    bool downlink_impairment = false;            // not modelled; must stay off
    std::uint64_t seed = 1;
};

/// Per-RSU evaluation context.
struct CommCellState {
    std::size_t rsu = 0;
    int n = 0;
    double lambda = 0.0;
    std::optional<mac::MacSolution> solution;
    double cached_at = -1.0;
    std::uint64_t sent_in_window = 0;  // packets handled since the last refresh
    double window_start = 0.0;
    std::vector<traffic::LinkCostUpdate> held;  // survived the drop draw, no finite delay yet
    std::unordered_map<int, std::optional<mac::MacSolution>> memo;  // by N at the current lambda
    std::uint64_t solves = 0;
};

struct CommTotals {
    std::uint64_t created = 0;
    std::uint64_t delivered = 0;          // fate Delivered (delivery time may lie past the horizon)
    std::uint64_t applied = 0;            // reached the TMC before the horizon
    std::uint64_t dropped_channel = 0;    // lost with the cell's P_drop
    std::uint64_t dropped_unconnected = 0;  // vehicle left the network while out of coverage
    std::uint64_t dropped_horizon = 0;    // still queued on a vehicle or in a cell at the horizon
    std::uint64_t solver_failures = 0;
    double p_drop_sum = 0.0;              // over packets handed to a cell
    std::uint64_t p_drop_count = 0;
};

/// Owns the TMC table, the delivery queue and the packet ledger.
class CommLayer {
public:
    CommLayer(const roadnet::RoadNetwork& net, const energy::VtMicroCoefficients& coeffs,
              CommConfig config);

    TmcCostTable& table() noexcept { return table_; }
    const TmcCostTable& table() const noexcept { return table_; }
    const CommConfig& config() const noexcept { return config_; }

    /// Call after every Simulation::step(). Hands pending reports of vehicles
    /// inside coverage to their cell, then releases deliveries due to the TMC.
    void comm_step(traffic::Simulation& sim);

    /// Marks reports that can no longer reach the TMC; call once at the end.
    void finalize(traffic::Simulation& sim);

    const std::vector<traffic::LinkCostUpdate>& ledger() const noexcept { return ledger_; }
    const CommTotals& totals() const noexcept { return totals_; }
    const std::vector<CommCellState>& cells() const noexcept { return cells_; }

    /// Mean analytic P_drop over packets handed to a cell (NaN if none).
    double mean_p_drop() const;
    /// Mean scheduled delay over every Delivered report, including those due
    /// after the horizon.
    double mean_delivered_delay() const;
    /// Mean creation-to-TMC delay over reports applied before the horizon.
    double mean_applied_delay() const;

private:
    const mac::MacSolution* cell_solution(CommCellState& cell, int n, double now);
    std::size_t record(const traffic::LinkCostUpdate& u);
    void schedule(traffic::LinkCostUpdate u, double at);
    void handle(CommCellState& cell, const mac::MacSolution* sol, traffic::LinkCostUpdate u);
    void deliver_due(double now);

    const roadnet::RoadNetwork& net_;
    CommConfig config_;
    TmcCostTable table_;
    roadnet::CoverageIndex coverage_;
    std::vector<CommCellState> cells_;
    std::mt19937_64 rng_;

    struct Scheduled {
        double at;
        std::uint64_t id;
        std::size_t ledger_index;
        bool operator>(const Scheduled& o) const { return at != o.at ? at > o.at : id > o.id; }
    };
    std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> deliveries_;
    std::vector<traffic::LinkCostUpdate> ledger_;
    std::vector<double> applied_delay_;
    CommTotals totals_;
    std::vector<std::size_t> holders_;  // vehicles with pending reports
    double last_step_ = -std::numeric_limits<double>::infinity();  // previous comm_step time
    std::vector<char> holding_;
    std::vector<roadnet::Point> positions_;
};

}  // namespace mutualsim::eco
