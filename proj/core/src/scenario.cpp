#include "mutualsim/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <type_traits>

#include "mutualsim/error.hpp"
#include "mutualsim/kv_record.hpp"

namespace mutualsim::scenario {

namespace fs = std::filesystem;

namespace {

const std::set<std::string>& plain_keys() {
    static const std::set<std::string> keys = {
        "network", "demand", "coefficients", "odsf", "seeds", "mode", "rsu_range", "place_rsus",
        "background_rate", "refresh_interval", "beta", "eta", "downlink_impairment",
        "dt", "max_accel", "signal_cycle", "green_share", "saturation_headway", "nfd_interval",
        "fuel_refresh_steps", "reroute_every_step", "horizon", "congestion_flow_share", "output",
        "threads", "grid.rows", "grid.cols", "grid.spacing", "grid.lanes", "grid.free_speed",
        "grid.jam_density", "grid.arterial_every", "grid.arterial_lanes", "grid.arterial_speed",
        "grid.signals_everywhere"};
    return keys;
}

bool to_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("expected true or false", line, key);
}

std::string resolve(const std::string& path, const std::string& base) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).lexically_normal().string();
}

}  // namespace

void Scenario::validate() const {
    if (odsf.empty()) throw ValidationError("scenario: odsf list is empty");
    for (double f : odsf)
        if (!(f > 0.0 && f <= 1.0)) throw ValidationError("scenario: odsf values must lie in (0, 1]");
    if (seeds.empty()) throw ValidationError("scenario: seeds list is empty");
    if (demand_path.empty()) throw ValidationError("scenario: demand is required");
    for (const auto* p : {&network_path, &demand_path, &coefficients_path})
        if (!p->empty() && !fs::exists(*p)) throw ConfigError("scenario: file not found '" + *p + "'");
    if (!(rsu_range > 0.0)) throw ValidationError("scenario: rsu_range must be positive");
    if (!(background_rate > 0.0)) throw ValidationError("scenario: background_rate must be positive");
    if (!(refresh_interval > 0.0)) throw ValidationError("scenario: refresh_interval must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("scenario: beta must lie in [0, 1]");
    if (!(eta >= 0.0 && eta < 1.0)) throw ValidationError("scenario: eta must lie in [0, 1)");
    if (downlink_impairment) throw ConfigError("scenario: downlink impairment is not supported");
    if (!(sim.dt > 0.0)) throw ValidationError("scenario: dt must be positive");
    if (sim.fuel_refresh_steps < 1) throw ValidationError("scenario: fuel_refresh_steps must be >= 1");
    if (!(sim.green_share > 0.0 && sim.green_share < 1.0))
        throw ValidationError("scenario: green_share must lie in (0, 1)");
    if (sim.horizon && !(*sim.horizon > 0.0)) throw ValidationError("scenario: horizon must be positive");
    if (!(congestion_flow_share > 0.0 && congestion_flow_share < 1.0))
        throw ValidationError("scenario: congestion_flow_share must lie in (0, 1)");
    if (threads < 1) throw ValidationError("scenario: threads must be >= 1");
    mac::MacParams probe = mac;
    probe.n_stations = 1;
    probe.arrival_rate = background_rate;
    probe.validate();
}

Scenario parse_scenario(std::istream& in, const std::string& base_dir) {
    const kv::KvMap map = kv::parse_kv(in);
    Scenario s;
    for (const auto& [key, entry] : map) {
        if (plain_keys().count(key)) continue;
        if (key.rfind("mac.", 0) == 0) {
            const std::string field = key.substr(4);
            const auto& known = kv::mac_param_keys();
            if (std::find(known.begin(), known.end(), field) == known.end())
                throw ParseError("unknown MAC field", entry.line, key);
            if (field == "n_stations" || field == "arrival_rate")
                throw ParseError("set per cell during the run", entry.line, key);
            continue;
        }
        throw ParseError("unknown scenario key", entry.line, key);
    }
    s.mac = kv::apply_mac_fields(s.mac, map, "mac.");

    const auto one = [&](const char* key) -> const std::string* {
        auto it = map.find(key);
        if (it == map.end()) return nullptr;
        if (it->second.values.size() != 1) throw ParseError("expected a single value", it->second.line, key);
        return &it->second.values.front();
    };
    const auto line = [&](const char* key) { return map.at(key).line; };
    const auto dbl = [&](const char* key, double& out) {
        if (const auto* v = one(key)) out = kv::to_double(*v, key, line(key));
    };
    const auto integer = [&](const char* key, int& out) {
        if (const auto* v = one(key)) out = static_cast<int>(kv::to_int(*v, key, line(key)));
    };
    const auto boolean = [&](const char* key, bool& out) {
        if (const auto* v = one(key)) out = to_bool(*v, key, line(key));
    };

    if (const auto* v = one("network")) s.network_path = *v == "grid" ? "" : resolve(*v, base_dir);
    if (const auto* v = one("demand")) s.demand_path = resolve(*v, base_dir);
    if (const auto* v = one("coefficients")) s.coefficients_path = resolve(*v, base_dir);
    if (auto it = map.find("odsf"); it != map.end()) {
        s.odsf.clear();
        for (const auto& v : it->second.values) s.odsf.push_back(kv::to_double(v, "odsf", it->second.line));
    }
    if (auto it = map.find("seeds"); it != map.end()) {
        s.seeds.clear();
        for (const auto& v : it->second.values) {
            const auto seed = kv::to_int(v, "seeds", it->second.line);
            if (seed < 0) throw ParseError("seeds must be non-negative", it->second.line, "seeds");
            s.seeds.push_back(static_cast<std::uint64_t>(seed));
        }
    }
    if (const auto* v = one("mode")) {
        try {
            s.mode = eco::parse_comm_mode(*v);
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), line("mode"), "mode");
        }
    }
    dbl("rsu_range", s.rsu_range);
    boolean("place_rsus", s.place_rsus);
    dbl("background_rate", s.background_rate);
    dbl("refresh_interval", s.refresh_interval);
    dbl("beta", s.beta);
    dbl("eta", s.eta);
    boolean("downlink_impairment", s.downlink_impairment);

    dbl("dt", s.sim.dt);
    dbl("max_accel", s.sim.max_accel);
    dbl("signal_cycle", s.sim.signal_cycle);
    dbl("green_share", s.sim.green_share);
    dbl("saturation_headway", s.sim.saturation_headway);
    dbl("nfd_interval", s.sim.nfd_interval);
    integer("fuel_refresh_steps", s.sim.fuel_refresh_steps);
    boolean("reroute_every_step", s.sim.reroute_every_step);
    if (map.count("horizon")) {
        double h = 0.0;
        dbl("horizon", h);
        s.sim.horizon = h;
    }
    dbl("congestion_flow_share", s.congestion_flow_share);
    if (const auto* v = one("output")) s.output_dir = resolve(*v, base_dir);
    integer("threads", s.threads);

    integer("grid.rows", s.grid.rows);
    integer("grid.cols", s.grid.cols);
    dbl("grid.spacing", s.grid.spacing);
    integer("grid.lanes", s.grid.lanes);
    dbl("grid.free_speed", s.grid.free_speed);
    dbl("grid.jam_density", s.grid.jam_density);
    integer("grid.arterial_every", s.grid.arterial_every);
    integer("grid.arterial_lanes", s.grid.arterial_lanes);
    dbl("grid.arterial_speed", s.grid.arterial_speed);
    boolean("grid.signals_everywhere", s.grid.signals_everywhere);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario '" + path + "'");
    const auto base = fs::path(path).parent_path();
    return parse_scenario(in, base.empty() ? "." : base.string());
}

std::vector<std::pair<std::string, std::string>> describe(const Scenario& s) {
    const auto d = [](double v) { return kv::format_double(v); };
    const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    const auto list = [&](const auto& values) {
        std::string out;
        for (const auto& v : values) {
            if (!out.empty()) out += ",";
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>)
                out += d(v);
            else
                out += std::to_string(v);
        }
        return out;
    };
    std::vector<std::pair<std::string, std::string>> out = {
        {"network", s.network_path.empty() ? "grid" : s.network_path},
        {"demand", s.demand_path},
        {"coefficients", s.coefficients_path.empty() ? "default" : s.coefficients_path},
        {"odsf", list(s.odsf)},
        {"seeds", list(s.seeds)},
        {"mode", eco::to_string(s.mode)},
        {"rsu_range", d(s.rsu_range)},
        {"place_rsus", b(s.place_rsus)},
        {"background_rate", d(s.background_rate)},
        {"refresh_interval", d(s.refresh_interval)},
        {"beta", d(s.beta)},
        {"eta", d(s.eta)},
        {"downlink_impairment", b(s.downlink_impairment)},
        {"dt", d(s.sim.dt)},
        {"max_accel", d(s.sim.max_accel)},
        {"signal_cycle", d(s.sim.signal_cycle)},
        {"green_share", d(s.sim.green_share)},
        {"saturation_headway", d(s.sim.saturation_headway)},
        {"nfd_interval", d(s.sim.nfd_interval)},
        {"fuel_refresh_steps", std::to_string(s.sim.fuel_refresh_steps)},
        {"reroute_every_step", b(s.sim.reroute_every_step)},
        {"horizon", s.sim.horizon ? d(*s.sim.horizon) : "2x demand end"},
        {"congestion_flow_share", d(s.congestion_flow_share)},
        {"output", s.output_dir},
        {"threads", std::to_string(s.threads)},
    };
    if (s.network_path.empty()) {
        out.insert(out.end(), {{"grid.rows", std::to_string(s.grid.rows)},
                               {"grid.cols", std::to_string(s.grid.cols)},
                               {"grid.spacing", d(s.grid.spacing)},
                               {"grid.lanes", std::to_string(s.grid.lanes)},
                               {"grid.free_speed", d(s.grid.free_speed)},
                               {"grid.jam_density", d(s.grid.jam_density)},
                               {"grid.arterial_every", std::to_string(s.grid.arterial_every)},
                               {"grid.arterial_lanes", std::to_string(s.grid.arterial_lanes)},
                               {"grid.arterial_speed", d(s.grid.arterial_speed)},
                               {"grid.signals_everywhere", b(s.grid.signals_everywhere)}});
    }
    for (const auto& [k, v] : kv::to_record(s.mac))
        if (k != "n_stations" && k != "arrival_rate") out.emplace_back("mac." + k, v);
    return out;
}

roadnet::RoadNetwork build_network(const Scenario& s) {
    roadnet::RoadNetwork net = s.network_path.empty()
                                   ? roadnet::make_grid(s.grid)
                                   : roadnet::load_network(s.network_path, true).network;
    if (!s.place_rsus) return net;
    if (net.signals().empty()) throw ValidationError("scenario: RSU placement needs signals");
    const auto chosen = roadnet::place_rsus(net, s.rsu_range);
    return net.with_rsus(roadnet::rsus_at_signals(net, chosen, s.rsu_range));
}

}  // namespace mutualsim::scenario
