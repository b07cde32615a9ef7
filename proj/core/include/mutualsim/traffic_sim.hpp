#pragma once

// Deci-second link-level vehicle simulator. Vehicles move along links at the
// Greenshields speed of the running part of their link (the section upstream
// of the stop-line queue, with an acceleration clamp),
// queue at the stop line, discharge at the saturation headway when the signal
// is green and the next link has room, and re-route at every link end.

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mutualsim/constants.hpp"
#include "mutualsim/energy.hpp"
#include "mutualsim/roadnet.hpp"

namespace mutualsim::traffic {

enum class UpdateFate { Queued, Delivered, Dropped };

/// Measured fuel cost of one link traversal, on its way to the TMC.
struct LinkCostUpdate {
    std::uint64_t id = 0;
    std::size_t link = 0;     // dense link index
    double fuel = 0.0;        // L
    double created = 0.0;     // s
    UpdateFate fate = UpdateFate::Queued;
    double delivered_at = std::numeric_limits<double>::quiet_NaN();
    double p_drop = std::numeric_limits<double>::quiet_NaN();  // of the cell that handled it
};

enum class VehicleState { Waiting, EnRoute, Finished, Deferred };

const char* to_string(VehicleState s);
const char* to_string(UpdateFate f);

struct Vehicle {
    std::uint64_t id = 0;
    std::size_t origin = 0;        // dense node index
    std::size_t destination = 0;
    std::vector<std::size_t> route;  // remaining links, route.front() is the current link
    double position = 0.0;         // m along the current link
    double speed = 0.0;            // km/h
    double accel = 0.0;            // km/h/s
    double departure = 0.0;        // scheduled, s
    double entered_at = std::numeric_limits<double>::quiet_NaN();
    double finished_at = std::numeric_limits<double>::quiet_NaN();
    bool preload = false;
    bool at_line = false;          // waiting at the stop line of the current link
    bool routed_at_line = false;
    VehicleState state = VehicleState::Waiting;
    energy::FuelAccumulator emissions;
    std::vector<LinkCostUpdate> pending;
    double distance = 0.0;         // m, completed links
    double free_flow_time = 0.0;   // s, completed links at free-flow speed
    int links_done = 0;

    std::size_t current_link() const { return route.front(); }
};

struct OdEntry {
    int origin = 0;        // node id
    int destination = 0;   // node id
    double rate = 0.0;     // veh/h before scaling
    double start = 0.0;    // s
    double end = 0.0;      // s
};

struct OdDemand {
    std::vector<OdEntry> entries;
    double odsf = 1.0;
    /// Trips departing before (earliest start + preload) are pre-load traffic.
    double preload = 0.0;

    void validate() const;
    double demand_start() const;
    double demand_end() const;
};

/// Structured text: `od <origin> <destination> <veh/h> <start> <end>` rows
/// plus optional `preload <s>`.
OdDemand load_demand(std::istream& in);
OdDemand load_demand(const std::string& path);

struct Departure {
    double time = 0.0;
    int origin = 0;
    int destination = 0;
    bool preload = false;
};

/// Poisson departures per entry at rate * odsf, sorted by (time, entry).
std::vector<Departure> generate_demand(const OdDemand& od, std::uint64_t seed);

/// Chooses the links from `from_node` to the vehicle's destination.
class Router {
public:
    virtual ~Router() = default;
    /// Empty result means no path.
    virtual std::vector<std::size_t> route(const Vehicle& vehicle, std::size_t from_node,
                                           double now) = 0;
};

/// Minimum free-flow travel time, deterministic. Used when no router is set.
class FreeFlowRouter : public Router {
public:
    explicit FreeFlowRouter(const roadnet::RoadNetwork& net) : net_(net) {}
    std::vector<std::size_t> route(const Vehicle& vehicle, std::size_t from_node, double now) override;

private:
    const roadnet::RoadNetwork& net_;
};

struct NfdSample {
    double time = 0.0;
    double density = 0.0;  // veh/km/lane
    double flow = 0.0;     // veh/h/lane
    double speed = std::numeric_limits<double>::quiet_NaN();  // km/h, NaN when empty
    int vehicles = 0;
};

struct TripRecord {
    std::uint64_t id = 0;
    int origin = 0;
    int destination = 0;
    double departure = 0.0;
    double entered = 0.0;
    double finished = 0.0;
    double travel_time = 0.0;  // s, entry to arrival
    double delay = 0.0;        // s, travel time minus free-flow time
    double distance = 0.0;     // km
    double fuel = 0.0;         // L
    double co = 0.0;           // mg
    double hc = 0.0;
    double nox = 0.0;
    bool preload = false;
};

struct VehicleCounts {
    std::uint64_t generated = 0;
    std::uint64_t finished = 0;
    std::uint64_t unfinished = 0;  // entered, still on the network
    std::uint64_t deferred = 0;    // still waiting to enter at the horizon
    std::uint64_t waiting = 0;
};

struct NetworkStats {
    std::vector<NfdSample> nfd;
    std::vector<TripRecord> trips;
    VehicleCounts counts;
};

struct SimConfig {
    double dt = constants::kStepSeconds;
    double max_accel = constants::kMaxAccel;
    double signal_cycle = constants::kSignalCycle;
    double green_share = constants::kSignalGreenShare;
    double saturation_headway = constants::kSaturationHeadway;
    double nfd_interval = constants::kNfdSampleInterval;
    int fuel_refresh_steps = 10;
    /// Re-route moving vehicles every step instead of only at link ends.
    bool reroute_every_step = false;
    /// End of simulation; default twice the demand end.
    std::optional<double> horizon;
};

/// Single signal phase split: links heading mostly east-west are green in the
/// first part of the cycle, north-south in the rest.
bool signal_green(const roadnet::RoadNetwork& net, std::size_t link, double time, double cycle,
                  double green_share);

class Simulation {
public:
    Simulation(const roadnet::RoadNetwork& network, const energy::VtMicroCoefficients& coeffs,
               std::vector<Departure> departures, double demand_end, SimConfig config = {});

    /// Router used for the initial route and at every link end. Not owned.
    void set_router(Router* router) { router_ = router; }

    /// Advances one step. Returns false once the horizon is reached.
    bool step();
    void run();

    double now() const noexcept { return static_cast<double>(step_count_) * config_.dt; }
    std::uint64_t steps() const noexcept { return step_count_; }
    double horizon() const noexcept { return horizon_; }
    bool done() const noexcept { return now() >= horizon_ - 1e-9; }

    const roadnet::RoadNetwork& network() const noexcept { return net_; }
    std::vector<Vehicle>& vehicles() noexcept { return vehicles_; }
    const std::vector<Vehicle>& vehicles() const noexcept { return vehicles_; }
    /// Indices of EnRoute vehicles.
    const std::vector<std::size_t>& active() const noexcept { return active_; }

    int link_count(std::size_t link) const { return links_[link].count; }
    int link_capacity(std::size_t link) const { return links_[link].capacity; }
    /// Vehicle indices waiting at the stop line, front first.
    const std::deque<std::size_t>& stop_line(std::size_t link) const { return links_[link].line; }

    /// Vehicles that completed a link during the last step (index, link).
    const std::vector<std::pair<std::size_t, std::size_t>>& exits() const noexcept { return exits_; }

    NfdSample nfd_sample() const;
    /// Counts are refreshed at every NFD sample and at the horizon.
    const NetworkStats& stats() const noexcept { return stats_; }
    VehicleCounts counts() const;
    std::uint64_t entered() const noexcept { return entered_; }

    /// FNV-1a over every vehicle's discrete and kinematic state.
    std::uint64_t state_hash() const;

    std::uint64_t next_update_id() noexcept { return next_update_id_++; }

private:
    struct LinkState {
        int count = 0;
        int capacity = 1;
        double length_km_lanes = 0.0;
        double next_discharge = 0.0;
        double next_entry = 0.0;
        std::deque<std::size_t> line;  // vehicles at the stop line, FIFO
    };

    void release_departures();
    void admit_waiting();
    void move_vehicles();
    void discharge();
    bool ensure_route(Vehicle& v, std::size_t from_node);
    void enter_link(Vehicle& v, std::size_t link, double speed);
    void finish(std::size_t index);
    double target_speed(std::size_t link) const;

    const roadnet::RoadNetwork& net_;
    const energy::VtMicroCoefficients& coeffs_;
    SimConfig config_;
    FreeFlowRouter default_router_;
    Router* router_ = nullptr;

    std::vector<Departure> departures_;
    std::size_t next_departure_ = 0;
    double demand_end_;
    double horizon_;
    std::uint64_t step_count_ = 0;
    std::uint64_t next_sample_step_ = 0;
    std::uint64_t sample_every_ = 1;

    std::vector<Vehicle> vehicles_;
    std::vector<std::size_t> active_;
    std::vector<std::deque<std::size_t>> waiting_;  // per origin node
    std::vector<LinkState> links_;
    std::vector<std::pair<std::size_t, std::size_t>> exits_;
    std::uint64_t entered_ = 0;
    std::uint64_t next_update_id_ = 1;
    NetworkStats stats_;
};

}  // namespace mutualsim::traffic
