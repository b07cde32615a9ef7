#include "mutualsim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "mutualsim/error.hpp"
#include "mutualsim/kv_record.hpp"
#include "mutualsim/mac_des.hpp"

namespace mutualsim::experiments {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Distinct streams per run component, all derived from the run seed.
constexpr std::uint64_t kRouterStream = 0x5bd1e9955bd1e995ULL;
constexpr std::uint64_t kCommStream = 0xc2b2ae3d27d4eb4fULL;

template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex guard;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(guard);
                    if (!first) first = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

std::string fmt(double v) { return kv::format_double(v); }

std::ofstream open_table(const fs::path& path, const std::string& schema) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << "#schema " << schema << " v1\n";
    return out;
}

std::string timestamp() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

double rel_error(double model, double reference) {
    if (reference == 0.0) return model == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return (model - reference) / reference;
}

}  // namespace

Prepared prepare(const scenario::Scenario& s) {
    s.validate();
    auto net = scenario::build_network(s);
    auto coeffs = s.coefficients_path.empty() ? energy::default_coefficients()
                                              : energy::load_coefficients(s.coefficients_path);
    auto demand = traffic::load_demand(s.demand_path);
    for (const auto& e : demand.entries) {
        if (!net.find_node(e.origin) || !net.find_node(e.destination))
            throw ValidationError("demand references node " +
                                  std::to_string(net.find_node(e.origin) ? e.destination : e.origin) +
                                  " which is not in the network");
    }
    return Prepared{s, std::move(net), std::move(coeffs), std::move(demand)};
}

RunResult run_once(const Prepared& p, double odsf, std::uint64_t seed, eco::CommMode mode) {
    const auto wall_start = std::chrono::steady_clock::now();
    const auto& s = p.scenario;

    traffic::OdDemand od = p.demand;
    od.odsf = odsf;
    auto departures = traffic::generate_demand(od, seed);
    traffic::Simulation sim(p.network, p.coefficients, std::move(departures), od.demand_end(), s.sim);

    eco::CommConfig cc;
    cc.mode = mode;
    cc.mac = s.mac;
    cc.background_rate = s.background_rate;
    cc.refresh_interval = s.refresh_interval;
    cc.beta = s.beta;
    cc.downlink_impairment = s.downlink_impairment;
    cc.seed = seed ^ kCommStream;
    eco::CommLayer comm(p.network, p.coefficients, cc);
    eco::EcoRouter router(p.network, comm.table(), s.eta, seed ^ kRouterStream);
    sim.set_router(&router);

    while (sim.step()) comm.comm_step(sim);
    comm.comm_step(sim);
    comm.finalize(sim);

    RunResult r;
    r.stats = sim.stats();
    r.ledger = comm.ledger();
    auto& m = r.summary;
    m.odsf = odsf;
    m.seed = seed;
    m.mode = mode;

    for (const auto& t : r.stats.trips) {
        if (t.preload) continue;
        ++m.trips;
        m.mean_fuel += t.fuel;
        m.mean_travel_time += t.travel_time;
        m.mean_delay += t.delay;
        m.mean_co += t.co;
        m.mean_hc += t.hc;
        m.mean_nox += t.nox;
        m.mean_distance += t.distance;
    }
    if (m.trips > 0) {
        const double n = static_cast<double>(m.trips);
        for (double* x : {&m.mean_fuel, &m.mean_travel_time, &m.mean_delay, &m.mean_co, &m.mean_hc,
                          &m.mean_nox, &m.mean_distance})
            *x /= n;
        m.mean_speed = m.mean_travel_time > 0.0 ? m.mean_distance / (m.mean_travel_time / 3600.0) : 0.0;
    } else {
        m.mean_fuel = m.mean_travel_time = m.mean_delay = m.mean_co = m.mean_hc = m.mean_nox =
            m.mean_distance = m.mean_speed = kNaN;
    }

    m.counts = r.stats.counts;
    if (m.counts.generated > 0) {
        const double g = static_cast<double>(m.counts.generated) / 100.0;
        m.finished_pct = static_cast<double>(m.counts.finished) / g;
        m.unfinished_pct = static_cast<double>(m.counts.unfinished) / g;
        m.deferred_pct = static_cast<double>(m.counts.deferred + m.counts.waiting) / g;
    }

    m.comm = comm.totals();
    m.mean_p_drop = mode == eco::CommMode::Ideal ? 0.0 : comm.mean_p_drop();
    const auto dropped = m.comm.dropped_channel + m.comm.dropped_unconnected + m.comm.dropped_horizon;
    m.drop_fraction = m.comm.created > 0 ? static_cast<double>(dropped) / static_cast<double>(m.comm.created) : 0.0;
    m.mean_packet_delay = comm.mean_delivered_delay();
    m.mean_applied_delay = comm.mean_applied_delay();

    for (const auto& n : r.stats.nfd) m.max_density = std::max(m.max_density, n.density);
    // Judge congestion on whole signal cycles so samples do not alias the phases.
    const auto per_cycle = static_cast<std::size_t>(
        std::max(1.0, std::round(s.sim.signal_cycle / s.sim.nfd_interval)));
    m.congested = on_descending_branch(block_average(r.stats.nfd, per_cycle), s.congestion_flow_share, &m);
    m.simulated_seconds = sim.now();
    m.state_hash = sim.state_hash();

    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    m.wall_per_sim_second = m.simulated_seconds > 0.0 ? m.wall_seconds / m.simulated_seconds : 0.0;
    return r;
}

std::vector<SweepPoint> sweep_points(const scenario::Scenario& s, const std::vector<eco::CommMode>& modes) {
    std::vector<SweepPoint> out;
    for (auto mode : modes)
        for (double f : s.odsf)
            for (auto seed : s.seeds) out.push_back({f, seed, mode});
    return out;
}

std::vector<RunResult> sweep(const Prepared& p, const std::vector<SweepPoint>& points, int threads) {
    std::vector<RunResult> out(points.size());
    parallel_for(points.size(), threads, [&](std::size_t i) {
        out[i] = run_once(p, points[i].odsf, points[i].seed, points[i].mode);
    });
    return out;
}

std::vector<traffic::NfdSample> block_average(const std::vector<traffic::NfdSample>& nfd, std::size_t block) {
    std::vector<traffic::NfdSample> out;
    if (block == 0) return out;
    for (std::size_t start = 0; start + block <= nfd.size(); start += block) {
        traffic::NfdSample m;
        double speed_sum = 0.0;
        int speed_n = 0;
        int vehicles = 0;
        for (std::size_t i = start; i < start + block; ++i) {
            m.density += nfd[i].density;
            m.flow += nfd[i].flow;
            vehicles += nfd[i].vehicles;
            if (!std::isnan(nfd[i].speed)) {
                speed_sum += nfd[i].speed;
                ++speed_n;
            }
        }
        const double n = static_cast<double>(block);
        m.time = nfd[start + block - 1].time;
        m.density /= n;
        m.flow /= n;
        m.vehicles = static_cast<int>(std::lround(vehicles / n));
        if (speed_n > 0) m.speed = speed_sum / speed_n;
        out.push_back(m);
    }
    return out;
}

bool on_descending_branch(const std::vector<traffic::NfdSample>& nfd, double flow_share, RunSummary* out) {
    double peak = 0.0;
    double peak_density = 0.0;
    for (const auto& n : nfd) {
        if (n.flow > peak) {
            peak = n.flow;
            peak_density = n.density;
        }
    }
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& n : nfd)
        if (n.vehicles > 0 && n.density > peak_density) lowest = std::min(lowest, n.flow);
    if (out) {
        out->peak_flow = peak;
        out->peak_flow_density = peak_density;
        out->min_flow_past_peak = std::isfinite(lowest) ? lowest : kNaN;
    }
    return peak > 0.0 && std::isfinite(lowest) && lowest <= flow_share * peak;
}

double congestion_onset(const std::vector<RunSummary>& runs, eco::CommMode mode, std::uint64_t seed) {
    double onset = kNaN;
    for (const auto& r : runs)
        if (r.mode == mode && r.seed == seed && r.congested && !(r.odsf >= onset)) onset = r.odsf;
    return onset;
}

std::string summary_header() {
    return "odsf,seed,mode,trips,mean_fuel_l,mean_travel_time_s,mean_delay_s,mean_co_mg,mean_hc_mg,"
           "mean_nox_mg,mean_distance_km,mean_speed_kmh,generated,finished,unfinished,deferred,"
           "waiting,finished_pct,unfinished_pct,deferred_pct,packets,delivered,applied,"
           "dropped_channel,dropped_unconnected,dropped_horizon,mean_p_drop,drop_fraction,"
           "mean_packet_delay_s,mean_applied_delay_s,max_density,peak_flow,peak_flow_density,min_flow_past_peak,congested,"
           "simulated_s,state_hash";
}

std::string summary_row(const RunSummary& s) {
    std::ostringstream o;
    const auto u = [](std::uint64_t v) { return std::to_string(v); };
    o << fmt(s.odsf) << ',' << s.seed << ',' << eco::to_string(s.mode) << ',' << s.trips << ','
      << fmt(s.mean_fuel) << ',' << fmt(s.mean_travel_time) << ',' << fmt(s.mean_delay) << ','
      << fmt(s.mean_co) << ',' << fmt(s.mean_hc) << ',' << fmt(s.mean_nox) << ','
      << fmt(s.mean_distance) << ',' << fmt(s.mean_speed) << ',' << u(s.counts.generated) << ','
      << u(s.counts.finished) << ',' << u(s.counts.unfinished) << ',' << u(s.counts.deferred) << ','
      << u(s.counts.waiting) << ',' << fmt(s.finished_pct) << ',' << fmt(s.unfinished_pct) << ','
      << fmt(s.deferred_pct) << ',' << u(s.comm.created) << ',' << u(s.comm.delivered) << ','
      << u(s.comm.applied) << ',' << u(s.comm.dropped_channel) << ','
      << u(s.comm.dropped_unconnected) << ',' << u(s.comm.dropped_horizon) << ','
      << fmt(s.mean_p_drop) << ',' << fmt(s.drop_fraction) << ',' << fmt(s.mean_packet_delay) << ','
      << fmt(s.mean_applied_delay) << ','
      << fmt(s.max_density) << ',' << fmt(s.peak_flow) << ',' << fmt(s.peak_flow_density) << ','
      << fmt(s.min_flow_past_peak) << ',' << (s.congested ? 1 : 0)
      << ',' << fmt(s.simulated_seconds) << ',' << std::hex << std::setw(16) << std::setfill('0')
      << s.state_hash;
    return o.str();
}

namespace {

void write_meta(const fs::path& path, const std::vector<RunSummary>& runs) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << "written = " << timestamp() << "\n";
    for (const auto& r : runs)
        out << "run odsf=" << fmt(r.odsf) << " seed=" << r.seed << " mode=" << eco::to_string(r.mode)
            << " wall_s=" << fmt(r.wall_seconds) << " wall_per_sim_s=" << fmt(r.wall_per_sim_second)
            << "\n";
}

void nfd_rows(std::ostream& out, const RunSummary& s, const std::vector<traffic::NfdSample>& nfd,
              bool keyed) {
    for (const auto& n : nfd) {
        if (keyed) out << fmt(s.odsf) << ',' << s.seed << ',' << eco::to_string(s.mode) << ',';
        out << fmt(n.time) << ',' << fmt(n.density) << ',' << fmt(n.flow) << ',' << fmt(n.speed)
            << ',' << n.vehicles << '\n';
    }
}

const char* fate_name(traffic::UpdateFate f) { return traffic::to_string(f); }

}  // namespace

void write_run(const std::string& dir, const RunResult& r) {
    const fs::path d(dir);
    fs::create_directories(d);
    {
        auto out = open_table(d / "summary.csv", "run_summary");
        out << summary_header() << '\n' << summary_row(r.summary) << '\n';
    }
    {
        auto out = open_table(d / "nfd.csv", "nfd");
        out << "time_s,density,flow,speed_kmh,vehicles\n";
        nfd_rows(out, r.summary, r.stats.nfd, false);
    }
    {
        auto out = open_table(d / "vehicles.csv", "vehicles");
        out << "id,origin,destination,departure_s,entered_s,finished_s,travel_time_s,delay_s,"
               "distance_km,fuel_l,co_mg,hc_mg,nox_mg,preload\n";
        for (const auto& t : r.stats.trips)
            out << t.id << ',' << t.origin << ',' << t.destination << ',' << fmt(t.departure) << ','
                << fmt(t.entered) << ',' << fmt(t.finished) << ',' << fmt(t.travel_time) << ','
                << fmt(t.delay) << ',' << fmt(t.distance) << ',' << fmt(t.fuel) << ',' << fmt(t.co)
                << ',' << fmt(t.hc) << ',' << fmt(t.nox) << ',' << (t.preload ? 1 : 0) << '\n';
    }
    {
        auto out = open_table(d / "packets.csv", "packet_ledger");
        out << "id,link,fuel_l,created_s,fate,delivered_s,p_drop\n";
        auto ledger = r.ledger;
        std::sort(ledger.begin(), ledger.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (const auto& u : ledger)
            out << u.id << ',' << u.link << ',' << fmt(u.fuel) << ',' << fmt(u.created) << ','
                << fate_name(u.fate) << ',' << fmt(u.delivered_at) << ',' << fmt(u.p_drop) << '\n';
    }
    write_meta(d / "run.meta", {r.summary});
}

void write_sweep(const std::string& dir, const std::vector<RunResult>& runs) {
    const fs::path d(dir);
    fs::create_directories(d);
    std::vector<RunSummary> summaries;
    for (const auto& r : runs) summaries.push_back(r.summary);
    {
        auto out = open_table(d / "sweep_summary.csv", "sweep_summary");
        out << summary_header() << '\n';
        for (const auto& s : summaries) out << summary_row(s) << '\n';
    }
    {
        auto out = open_table(d / "sweep_nfd.csv", "sweep_nfd");
        out << "odsf,seed,mode,time_s,density,flow,speed_kmh,vehicles\n";
        for (const auto& r : runs) nfd_rows(out, r.summary, r.stats.nfd, true);
    }
    {
        // Mean over seeds per (mode, odsf).
        auto out = open_table(d / "drop_vs_odsf.csv", "drop_vs_odsf");
        out << "mode,odsf,seeds,mean_p_drop,drop_fraction,mean_packet_delay_s,mean_applied_delay_s,finished_pct,"
               "deferred_pct,mean_fuel_l,congested_share\n";
        std::map<std::pair<int, double>, std::vector<const RunSummary*>> groups;
        for (const auto& s : summaries) groups[{static_cast<int>(s.mode), s.odsf}].push_back(&s);
        for (const auto& [key, g] : groups) {
            double pd = 0, df = 0, delay = 0, applied = 0, fin = 0, def = 0, fuel = 0, cong = 0;
            for (const auto* s : g) {
                pd += s->mean_p_drop;
                df += s->drop_fraction;
                delay += s->mean_packet_delay;
                applied += s->mean_applied_delay;
                fin += s->finished_pct;
                def += s->deferred_pct;
                fuel += s->mean_fuel;
                cong += s->congested ? 1.0 : 0.0;
            }
            const double n = static_cast<double>(g.size());
            out << eco::to_string(static_cast<eco::CommMode>(key.first)) << ',' << fmt(key.second) << ','
                << g.size() << ',' << fmt(pd / n) << ',' << fmt(df / n) << ',' << fmt(delay / n) << ','
                << fmt(applied / n) << ',' << fmt(fin / n) << ',' << fmt(def / n) << ',' << fmt(fuel / n) << ',' << fmt(cong / n)
                << '\n';
        }
    }
    {
        // Delivered-report delay histogram, 4 log10 bins per decade from 1e-4 s.
        constexpr int kPerDecade = 4;
        constexpr double kLow = -4.0;
        constexpr int kBins = 10 * kPerDecade;
        auto out = open_table(d / "delay_pdf.csv", "delay_pdf");
        out << "mode,odsf,bin_low_s,bin_high_s,count,density\n";
        std::map<std::pair<int, double>, std::vector<std::uint64_t>> hist;
        for (const auto& r : runs) {
            auto& h = hist[{static_cast<int>(r.summary.mode), r.summary.odsf}];
            h.resize(kBins + 2, 0);
            for (const auto& u : r.ledger) {
                if (u.fate != traffic::UpdateFate::Delivered) continue;
                const double delay = u.delivered_at - u.created;
                int bin = delay <= 0.0 ? 0
                                       : static_cast<int>(std::floor((std::log10(delay) - kLow) * kPerDecade)) + 1;
                bin = std::clamp(bin, 0, kBins + 1);
                ++h[static_cast<std::size_t>(bin)];
            }
        }
        for (const auto& [key, h] : hist) {
            std::uint64_t total = 0;
            for (auto c : h) total += c;
            for (int b = 0; b < kBins + 2; ++b) {
                const double lo = b == 0 ? 0.0 : std::pow(10.0, kLow + (b - 1) / double(kPerDecade));
                const double hi = b == kBins + 1 ? std::numeric_limits<double>::infinity()
                                                 : std::pow(10.0, kLow + b / double(kPerDecade));
                const auto c = h[static_cast<std::size_t>(b)];
                out << eco::to_string(static_cast<eco::CommMode>(key.first)) << ',' << fmt(key.second)
                    << ',' << fmt(lo) << ',' << fmt(hi) << ',' << c << ','
                    << fmt(total ? static_cast<double>(c) / static_cast<double>(total) : 0.0) << '\n';
            }
        }
    }
    write_meta(d / "sweep.meta", summaries);
}

std::vector<MacComparison> validate_mac(const MacGrid& grid, int threads) {
    std::vector<MacComparison> rows;
    for (auto mode : grid.modes)
        for (double bytes : grid.payload_bytes)
            for (int n : grid.stations)
                for (double rate : grid.rates) {
                    MacComparison c;
                    c.stations = n;
                    c.rate = rate;
                    c.payload_bytes = bytes;
                    c.mode = mode;
                    rows.push_back(c);
                }
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        auto& c = rows[i];
        mac::MacParams p = grid.base;
        p.n_stations = c.stations;
        p.arrival_rate = c.rate;
        p.payload_bits = c.payload_bytes * 8.0;
        p.access_mode = c.mode;
        try {
            const auto sol = mac::solve(p);
            c.converged = true;
            c.model_throughput = sol.throughput / c.stations;
            c.model_delay = sol.t_delay.value_or(std::numeric_limits<double>::infinity());
            c.model_drop = sol.p_drop;
        } catch (const SolverError&) {
            c.model_throughput = c.model_delay = c.model_drop = kNaN;
        }
        des::DesConfig dc;
        dc.mac = p;
        dc.seed = grid.seed + i;
        dc.measured_duration = grid.des_duration;
        const auto st = des::simulate(dc);
        c.des_throughput = st.delivered_per_station;
        c.des_throughput_hw = st.confidence_halfwidth.delivered_per_station;
        c.des_delay = st.mean_total_delay;
        c.des_delay_hw = st.confidence_halfwidth.mean_total_delay;
        c.des_drop = st.drop_rate;
        c.throughput_error = rel_error(c.model_throughput, c.des_throughput);
        c.delay_error = rel_error(c.model_delay, c.des_delay);
    });
    return rows;
}

void write_mac_comparison(std::ostream& out, const std::vector<MacComparison>& rows) {
    out << "#schema mac_validation v1\n"
        << "stations,rate,payload_bytes,access_mode,converged,model_throughput,des_throughput,"
           "des_throughput_hw,throughput_error,model_delay_s,des_delay_s,des_delay_hw,delay_error,"
           "model_drop,des_drop\n";
    for (const auto& c : rows)
        out << c.stations << ',' << fmt(c.rate) << ',' << fmt(c.payload_bytes) << ','
            << mac::to_string(c.mode) << ',' << (c.converged ? 1 : 0) << ',' << fmt(c.model_throughput)
            << ',' << fmt(c.des_throughput) << ',' << fmt(c.des_throughput_hw) << ','
            << fmt(c.throughput_error) << ',' << fmt(c.model_delay) << ',' << fmt(c.des_delay) << ','
            << fmt(c.des_delay_hw) << ',' << fmt(c.delay_error) << ',' << fmt(c.model_drop) << ','
            << fmt(c.des_drop) << '\n';
}

}  // namespace mutualsim::experiments
