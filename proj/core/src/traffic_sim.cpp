#include "mutualsim/traffic_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <queue>
#include <sstream>

#include "mutualsim/error.hpp"
#include "mutualsim/kv_record.hpp"

namespace mutualsim::traffic {

namespace {

// Moving vehicles never go slower than this; a platoon that filled a link
// before anyone reached the stop line would otherwise never get there.
constexpr double kMinRunningSpeed = 5.0;  // km/h, floor for vehicles upstream of the queue

constexpr double kEps = 1e-9;

double greenshields(double free_speed, double density, double jam_density) {
    return std::clamp(free_speed * (1.0 - density / jam_density), 0.0, free_speed);
}

}  // namespace

const char* to_string(VehicleState s) {
    switch (s) {
        case VehicleState::Waiting: return "waiting";
        case VehicleState::EnRoute: return "enroute";
        case VehicleState::Finished: return "finished";
        case VehicleState::Deferred: return "deferred";
    }
    return "?";
}

const char* to_string(UpdateFate f) {
    switch (f) {
        case UpdateFate::Queued: return "queued";
        case UpdateFate::Delivered: return "delivered";
        case UpdateFate::Dropped: return "dropped";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Demand

void OdDemand::validate() const {
    if (!(odsf >= 0.0 && odsf <= 1.0)) throw ValidationError("demand: odsf must be in [0, 1]");
    if (preload < 0.0) throw ValidationError("demand: preload must be >= 0");
    for (const auto& e : entries) {
        if (!(e.rate >= 0.0) || !std::isfinite(e.rate)) throw ValidationError("demand: rate must be >= 0");
        if (!(e.end > e.start)) throw ValidationError("demand: end must be > start");
        if (e.origin == e.destination) throw ValidationError("demand: origin equals destination");
    }
}

double OdDemand::demand_start() const {
    double s = entries.empty() ? 0.0 : entries.front().start;
    for (const auto& e : entries) s = std::min(s, e.start);
    return s;
}

double OdDemand::demand_end() const {
    double s = entries.empty() ? 0.0 : entries.front().end;
    for (const auto& e : entries) s = std::max(s, e.end);
    return s;
}

OdDemand load_demand(std::istream& in) {
    OdDemand od;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        std::istringstream ss(hash == std::string::npos ? raw : raw.substr(0, hash));
        std::vector<std::string> tok;
        for (std::string t; ss >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok[0] == "od") {
            if (tok.size() != 6)
                throw ParseError("expected 'od <origin> <destination> <veh/h> <start> <end>'", line);
            OdEntry e;
            e.origin = static_cast<int>(kv::to_int(tok[1], "origin", line));
            e.destination = static_cast<int>(kv::to_int(tok[2], "destination", line));
            e.rate = kv::to_double(tok[3], "rate", line);
            e.start = kv::to_double(tok[4], "start", line);
            e.end = kv::to_double(tok[5], "end", line);
            od.entries.push_back(e);
        } else if (tok[0] == "preload") {
            if (tok.size() != 2) throw ParseError("expected 'preload <seconds>'", line);
            od.preload = kv::to_double(tok[1], "preload", line);
        } else {
            throw ParseError("unknown directive '" + tok[0] + "'", line);
        }
    }
    od.validate();
    return od;
}

OdDemand load_demand(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open demand file '" + path + "'");
    return load_demand(in);
}

std::vector<Departure> generate_demand(const OdDemand& od, std::uint64_t seed) {
    od.validate();
    std::vector<std::pair<std::size_t, Departure>> out;
    const double preload_end = od.demand_start() + od.preload;
    for (std::size_t k = 0; k < od.entries.size(); ++k) {
        const auto& e = od.entries[k];
        const double rate = e.rate * od.odsf / 3600.0;  // veh/s
        if (rate <= 0.0) continue;
        // One stream per entry so adding entries does not reshuffle the others.
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (k + 1)));
        std::exponential_distribution<double> gap(rate);
        for (double t = e.start + gap(rng); t < e.end; t += gap(rng))
            out.push_back({k, Departure{t, e.origin, e.destination, t < preload_end}});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second.time != b.second.time) return a.second.time < b.second.time;
        return a.first < b.first;
    });
    std::vector<Departure> result;
    result.reserve(out.size());
    for (auto& [k, d] : out) result.push_back(d);
    return result;
}

// ---------------------------------------------------------------------------
// Routing and signals

std::vector<std::size_t> FreeFlowRouter::route(const Vehicle& vehicle, std::size_t from_node, double) {
    const std::size_t n = net_.nodes().size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> via(n, SIZE_MAX);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[from_node] = 0.0;
    heap.push({0.0, from_node});
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        if (u == vehicle.destination) break;
        for (auto l : net_.out_links(u)) {
            const auto& link = net_.links()[l];
            const double nd = d + link.length / (link.free_speed / 3.6);
            const auto v = net_.to_index(l);
            if (nd < dist[v]) {
                dist[v] = nd;
                via[v] = l;
                heap.push({nd, v});
            }
        }
    }
    std::vector<std::size_t> path;
    if (from_node == vehicle.destination || via[vehicle.destination] == SIZE_MAX) return path;
    for (auto v = vehicle.destination; v != from_node; v = net_.from_index(via[v])) path.push_back(via[v]);
    std::reverse(path.begin(), path.end());
    return path;
}

bool signal_green(const roadnet::RoadNetwork& net, std::size_t link, double time, double cycle,
                  double green_share) {
    const auto node = net.to_index(link);
    if (!net.is_signalised(node)) return true;
    const auto a = net.node_position(net.from_index(link));
    const auto b = net.node_position(node);
    const bool east_west = std::abs(b.x - a.x) >= std::abs(b.y - a.y);
    const double phase = std::fmod(time, cycle);
    const bool first = phase < green_share * cycle - kEps;
    return east_west == first;
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(const roadnet::RoadNetwork& network, const energy::VtMicroCoefficients& coeffs,
                       std::vector<Departure> departures, double demand_end, SimConfig config)
    : net_(network),
      coeffs_(coeffs),
      config_(config),
      default_router_(network),
      departures_(std::move(departures)),
      demand_end_(demand_end) {
    if (!(config_.dt > 0.0)) throw ConfigError("simulation: dt must be > 0");
    if (!(config_.signal_cycle > 0.0)) throw ConfigError("simulation: signal cycle must be > 0");
    if (!(config_.green_share > 0.0 && config_.green_share < 1.0))
        throw ConfigError("simulation: green share must be in (0, 1)");
    horizon_ = config_.horizon.value_or(2.0 * demand_end_);
    sample_every_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(config_.nfd_interval / config_.dt)));

    links_.resize(net_.links().size());
    for (std::size_t i = 0; i < links_.size(); ++i) {
        const auto& l = net_.links()[i];
        links_[i].length_km_lanes = l.length / 1000.0 * l.lanes;
        links_[i].capacity = std::max(1, static_cast<int>(std::floor(l.jam_density * links_[i].length_km_lanes + kEps)));
    }
    waiting_.resize(net_.nodes().size());
    for (const auto& d : departures_) {
        if (!net_.find_node(d.origin) || !net_.find_node(d.destination))
            throw ValidationError("demand references unknown node " +
                                  std::to_string(net_.find_node(d.origin) ? d.destination : d.origin));
    }
    std::stable_sort(departures_.begin(), departures_.end(),
                     [](const Departure& a, const Departure& b) { return a.time < b.time; });
    vehicles_.reserve(departures_.size());
}

double Simulation::target_speed(std::size_t link) const {
    const auto& l = net_.links()[link];
    const auto& ls = links_[link];
    // Density of the running section, upstream of the stop-line queue.
    const double queued = static_cast<double>(ls.line.size());
    const double running = ls.length_km_lanes - queued / l.jam_density;
    const double density = running > kEps ? (ls.count - queued) / running : l.jam_density;
    return std::max(greenshields(l.free_speed, density, l.jam_density),
                    std::min(kMinRunningSpeed, l.free_speed));
}

bool Simulation::ensure_route(Vehicle& v, std::size_t from_node) {
    Router& r = router_ ? *router_ : default_router_;
    auto path = r.route(v, from_node, now());
    if (path.empty()) return false;
    if (net_.from_index(path.front()) != from_node || net_.to_index(path.back()) != v.destination)
        throw SimulationError("router returned a path that does not join origin and destination");
    if (v.state == VehicleState::EnRoute) {
        const auto current = v.route.front();
        v.route.clear();
        v.route.push_back(current);
        v.route.insert(v.route.end(), path.begin(), path.end());
    } else {
        v.route = std::move(path);
    }
    return true;
}

void Simulation::enter_link(Vehicle& v, std::size_t link, double speed) {
    auto& ls = links_[link];
    ++ls.count;
    v.position = 0.0;
    v.speed = std::min(speed, net_.links()[link].free_speed);
    v.accel = 0.0;
    v.at_line = false;
    v.routed_at_line = false;
}

void Simulation::release_departures() {
    const double t = now();
    while (next_departure_ < departures_.size() && departures_[next_departure_].time <= t + kEps) {
        const auto& d = departures_[next_departure_++];
        Vehicle v;
        v.id = vehicles_.size() + 1;
        v.origin = net_.node_index(d.origin);
        v.destination = net_.node_index(d.destination);
        v.departure = d.time;
        v.preload = d.preload;
        v.emissions = energy::FuelAccumulator(config_.fuel_refresh_steps);
        vehicles_.push_back(std::move(v));
        waiting_[vehicles_.back().origin].push_back(vehicles_.size() - 1);
    }
}

void Simulation::admit_waiting() {
    const double t = now();
    for (std::size_t node = 0; node < waiting_.size(); ++node) {
        auto& q = waiting_[node];
        while (!q.empty()) {
            Vehicle& v = vehicles_[q.front()];
            if (v.route.empty() && !ensure_route(v, v.origin))
                throw SimulationError("no path for vehicle " + std::to_string(v.id));
            const auto first = v.route.front();
            auto& ls = links_[first];
            if (ls.count >= ls.capacity || t + kEps < ls.next_entry) break;
            ls.next_entry = t + config_.saturation_headway / net_.links()[first].lanes;
            v.state = VehicleState::EnRoute;
            v.entered_at = t;
            enter_link(v, first, target_speed(first));
            ++entered_;
            active_.push_back(q.front());
            q.pop_front();
        }
    }
}

void Simulation::move_vehicles() {
    const double dt = config_.dt;
    const double max_dv = config_.max_accel * dt;
    std::vector<double> target(links_.size());
    std::vector<double> queue_back(links_.size());
    for (std::size_t l = 0; l < links_.size(); ++l) {
        target[l] = target_speed(l);
        const auto& link = net_.links()[l];
        const double stored_m = static_cast<double>(links_[l].line.size()) /
                                (link.jam_density * link.lanes) * 1000.0;
        queue_back[l] = std::max(0.0, link.length - stored_m);
    }
    for (auto idx : active_) {
        Vehicle& v = vehicles_[idx];
        const auto link = v.route.front();
        if (v.at_line) {
            v.accel = 0.0;
            v.emissions.accumulate(v.speed, 0.0, dt, coeffs_);
            continue;
        }
        const double dv = std::clamp(target[link] - v.speed, -max_dv, max_dv);
        v.speed = std::max(0.0, v.speed + dv);
        v.accel = dv / dt;
        v.position += v.speed / 3.6 * dt;
        v.emissions.accumulate(v.speed, v.accel, dt, coeffs_);
        const double length = net_.links()[link].length;
        if (v.position >= queue_back[link] - kEps) {
            v.position = length;
            v.at_line = true;
            links_[link].line.push_back(idx);
            const auto node = net_.to_index(link);
            if (node != v.destination && !v.routed_at_line) {
                v.routed_at_line = true;
                if (!ensure_route(v, node))
                    throw SimulationError("no path for vehicle " + std::to_string(v.id));
            }
        } else if (config_.reroute_every_step) {
            const auto node = net_.to_index(link);
            if (node != v.destination && !ensure_route(v, node))
                throw SimulationError("no path for vehicle " + std::to_string(v.id));
        }
    }
}

void Simulation::discharge() {
    const double t = now();
    exits_.clear();
    bool any_finished = false;
    for (std::size_t l = 0; l < links_.size(); ++l) {
        auto& ls = links_[l];
        if (ls.line.empty()) continue;
        const auto& link = net_.links()[l];
        const bool green = signal_green(net_, l, t, config_.signal_cycle, config_.green_share);
        const double headway = config_.saturation_headway / link.lanes;
        while (green && !ls.line.empty() && t + kEps >= ls.next_discharge) {
            const auto idx = ls.line.front();
            Vehicle& v = vehicles_[idx];
            const bool arriving = net_.to_index(l) == v.destination;
            std::size_t next = 0;
            if (!arriving) {
                next = v.route.at(1);
                if (links_[next].count >= links_[next].capacity) break;
            }
            ls.line.pop_front();
            --ls.count;
            ls.next_discharge = t + headway;

            const auto e = v.emissions.finalize_link();
            LinkCostUpdate u;
            u.id = next_update_id_++;
            u.link = l;
            u.fuel = e.fuel;
            u.created = t;
            v.pending.push_back(u);
            v.distance += link.length;
            v.free_flow_time += link.length / (link.free_speed / 3.6);
            ++v.links_done;
            exits_.emplace_back(idx, l);

            if (arriving) {
                finish(idx);
                any_finished = true;
            } else {
                v.route.erase(v.route.begin());
                enter_link(v, next, v.speed);
            }
        }
        for (auto idx : ls.line) vehicles_[idx].speed = 0.0;
    }
    if (any_finished)
        std::erase_if(active_, [&](std::size_t i) { return vehicles_[i].state != VehicleState::EnRoute; });
}

void Simulation::finish(std::size_t index) {
    Vehicle& v = vehicles_[index];
    v.state = VehicleState::Finished;
    v.finished_at = now();
    v.route.clear();
    v.at_line = false;
    v.speed = 0.0;
    TripRecord r;
    r.id = v.id;
    r.origin = net_.nodes()[v.origin].id;
    r.destination = net_.nodes()[v.destination].id;
    r.departure = v.departure;
    r.entered = v.entered_at;
    r.finished = v.finished_at;
    r.travel_time = v.finished_at - v.entered_at;
    r.delay = r.travel_time - v.free_flow_time;
    r.distance = v.distance / 1000.0;
    const auto& trip = v.emissions.trip();
    r.fuel = trip.fuel;
    r.co = trip.co;
    r.hc = trip.hc;
    r.nox = trip.nox;
    r.preload = v.preload;
    stats_.trips.push_back(r);
}

bool Simulation::step() {
    if (done()) return false;
    release_departures();
    admit_waiting();
    move_vehicles();
    discharge();
    ++step_count_;
    const bool finished = done();
    if (finished) {
        // Could not enter the network before the horizon.
        for (auto& q : waiting_) {
            for (auto idx : q) vehicles_[idx].state = VehicleState::Deferred;
            q.clear();
        }
    }
    if (step_count_ % sample_every_ == 0) stats_.nfd.push_back(nfd_sample());
    if (finished || step_count_ % sample_every_ == 0) stats_.counts = counts();
    return !finished;
}

void Simulation::run() {
    while (step()) {
    }
}

NfdSample Simulation::nfd_sample() const {
    NfdSample s;
    s.time = now();
    double on_network = 0.0;
    for (const auto& ls : links_) on_network += ls.count;
    s.vehicles = static_cast<int>(on_network);
    s.density = on_network / net_.total_lane_km();
    if (active_.empty()) return s;
    double speed = 0.0;
    for (auto idx : active_) speed += vehicles_[idx].speed;
    s.speed = speed / static_cast<double>(active_.size());
    s.flow = s.density * s.speed;
    return s;
}

VehicleCounts Simulation::counts() const {
    VehicleCounts c;
    c.generated = vehicles_.size();
    for (const auto& v : vehicles_) {
        switch (v.state) {
            case VehicleState::Waiting: ++c.waiting; break;
            case VehicleState::EnRoute: ++c.unfinished; break;
            case VehicleState::Finished: ++c.finished; break;
            case VehicleState::Deferred: ++c.deferred; break;
        }
    }
    return c;
}

std::uint64_t Simulation::state_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(step_count_);
    for (const auto& v : vehicles_) {
        mix(v.id);
        mix(static_cast<std::uint64_t>(v.state));
        mix(v.route.empty() ? SIZE_MAX : v.route.front());
        mix(std::bit_cast<std::uint64_t>(v.position));
        mix(std::bit_cast<std::uint64_t>(v.speed));
        mix(std::bit_cast<std::uint64_t>(v.emissions.trip().fuel));
        mix(v.pending.size());
    }
    return h;
}

}  // namespace mutualsim::traffic
