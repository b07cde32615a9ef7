#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mutualsim/energy.hpp"
#include "mutualsim/error.hpp"
#include "mutualsim/traffic_sim.hpp"

using namespace mutualsim;
using namespace mutualsim::traffic;
using roadnet::Link;
using roadnet::Node;
using roadnet::RoadNetwork;

namespace {

// Straight road through nodes 1..n+1 along +x (or +y), one link per segment.
// A huge jam density makes a lone vehicle's own density negligible.
RoadNetwork straight(const std::vector<double>& lengths, std::vector<int> signal_nodes,
                     double free_speed = 36.0, double jam = 1e6, bool north = false) {
    std::vector<Node> nodes{{1, {0, 0}}};
    std::vector<Link> links;
    double at = 0.0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        at += lengths[i];
        const int id = static_cast<int>(i) + 2;
        nodes.push_back({id, north ? roadnet::Point{0, at} : roadnet::Point{at, 0}});
        links.push_back({static_cast<int>(i) + 1, id - 1, id, lengths[i], 1, free_speed, jam});
    }
    std::vector<roadnet::Signal> signals;
    for (int n : signal_nodes) signals.push_back({n, n});
    return RoadNetwork(nodes, links, signals);
}

std::vector<Departure> at_times(const std::vector<double>& times, int from, int to) {
    std::vector<Departure> d;
    for (double t : times) d.push_back({t, from, to, false});
    return d;
}

SimConfig with_horizon(double h) {
    SimConfig c;
    c.horizon = h;
    return c;
}

OdDemand grid_demand(double odsf) {
    OdDemand od;
    od.odsf = odsf;
    od.preload = 60.0;
    for (int r = 0; r < 5; ++r) {
        od.entries.push_back({r * 5 + 1, (4 - r) * 5 + 5, 400.0, 0.0, 600.0});
        od.entries.push_back({(4 - r) * 5 + 5, r * 5 + 1, 400.0, 0.0, 600.0});
    }
    return od;
}

RoadNetwork small_grid() {
    roadnet::GridOptions o;
    o.rows = 5;
    o.cols = 5;
    o.spacing = 200.0;
    return roadnet::make_grid(o);
}

}  // namespace

TEST(Demand, ZeroScaleIsEmpty) {
    OdDemand od;
    od.entries.push_back({1, 2, 3600.0, 0.0, 3600.0});
    od.odsf = 0.0;
    EXPECT_TRUE(generate_demand(od, 1).empty());
}

TEST(Demand, PoissonCount) {
    OdDemand od;
    od.entries.push_back({1, 2, 3600.0, 0.0, 3600.0});
    od.odsf = 0.5;
    const double bound = 3.0 * std::sqrt(1800.0);
    std::vector<std::size_t> sizes;
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        const auto d = generate_demand(od, seed);
        EXPECT_NEAR(static_cast<double>(d.size()), 1800.0, bound) << "seed " << seed;
        for (std::size_t i = 1; i < d.size(); ++i) EXPECT_LE(d[i - 1].time, d[i].time);
        sizes.push_back(d.size());
    }
    EXPECT_NE(generate_demand(od, 1)[0].time, generate_demand(od, 2)[0].time);
    EXPECT_EQ(generate_demand(od, 1).size(), sizes[0]);
}

TEST(Demand, PreloadFlag) {
    OdDemand od;
    od.entries.push_back({1, 2, 3600.0, 100.0, 400.0});
    od.preload = 50.0;
    for (const auto& d : generate_demand(od, 9)) EXPECT_EQ(d.preload, d.time < 150.0);
}

TEST(Demand, FileFormat) {
    std::istringstream ok("preload 300\n# comment\nod 1 2 250 0 1800\n");
    const auto od = load_demand(ok);
    ASSERT_EQ(od.entries.size(), 1u);
    EXPECT_EQ(od.preload, 300.0);
    EXPECT_EQ(od.demand_end(), 1800.0);
    std::istringstream bad("od 1 2 250 0 1800\nod 1 2 x 0 10\n");
    try {
        load_demand(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.field(), "rate");
    }
    std::istringstream backwards("od 1 2 250 100 50\n");
    EXPECT_THROW(load_demand(backwards), ValidationError);
}

TEST(Step, EmptyLinkAtFreeFlow) {
    const auto net = straight({360.0}, {});
    Simulation sim(net, energy::default_coefficients(), at_times({0.0}, 1, 2), 0.0, with_horizon(100.0));
    sim.run();
    ASSERT_EQ(sim.stats().trips.size(), 1u);
    EXPECT_NEAR(sim.stats().trips[0].travel_time, 36.0, 0.1 + 1e-9);
    EXPECT_NEAR(sim.stats().trips[0].delay, 0.0, 0.1 + 1e-9);
}

TEST(Step, SignalHandTrace) {
    // 360 m at 10 m/s reaches the stop line at 36 s, in the red half of the
    // cycle for eastbound links; it waits to 60 s, then covers 100 m from
    // standstill at 1 m/s^2 up to 10 m/s: 10 s for 50 m and 5 s for the rest.
    const auto net = straight({360.0, 100.0}, {2});
    Simulation sim(net, energy::default_coefficients(), at_times({0.0}, 1, 3), 0.0, with_horizon(200.0));
    sim.run();
    ASSERT_EQ(sim.stats().trips.size(), 1u);
    const auto& trip = sim.stats().trips[0];
    const double free_flow = 36.0 + 10.0;
    const double signal_wait = 60.0 - 36.0;
    const double start_up = 5.0;
    EXPECT_NEAR(trip.travel_time, free_flow + signal_wait + start_up, 0.2);
    EXPECT_NEAR(trip.delay, signal_wait + start_up, 0.2);
    EXPECT_DOUBLE_EQ(trip.distance, 0.46);
}

TEST(Step, QueueAtJamHasZeroSpeedAndFlow) {
    // Northbound links are red for the first half cycle, here 200 s; ten
    // vehicles fill a 100 m link with capacity 10 and stand at the line.
    const auto net = straight({100.0, 100.0}, {2}, 50.0, 100.0, true);
    std::vector<double> times;
    for (int i = 0; i < 14; ++i) times.push_back(0.1 * i);
    SimConfig cfg = with_horizon(150.0);
    cfg.signal_cycle = 400.0;
    Simulation sim(net, energy::default_coefficients(), at_times(times, 1, 3), 0.0, cfg);
    sim.run();
    EXPECT_EQ(sim.link_capacity(0), 10);
    EXPECT_EQ(sim.link_count(0), 10);
    EXPECT_EQ(sim.stop_line(0).size(), 10u);
    for (auto i : sim.active()) EXPECT_EQ(sim.vehicles()[i].speed, 0.0);
    const auto s = sim.nfd_sample();
    EXPECT_EQ(s.flow, 0.0);
    EXPECT_NEAR(s.density, 10.0 / 0.2, 1e-9);
    EXPECT_EQ(sim.counts().deferred, 4u);
}

TEST(Nfd, EmptyNetwork) {
    const auto net = straight({1000.0}, {});
    Simulation sim(net, energy::default_coefficients(), {}, 0.0, with_horizon(10.0));
    const auto s = sim.nfd_sample();
    EXPECT_EQ(s.density, 0.0);
    EXPECT_EQ(s.flow, 0.0);
    EXPECT_TRUE(std::isnan(s.speed));
}

TEST(Nfd, OneVehicleArithmetic) {
    const auto net = straight(std::vector<double>(10, 1000.0), {}, 60.0, 120.0);
    Simulation sim(net, energy::default_coefficients(), at_times({0.0}, 1, 11), 0.0, with_horizon(1000.0));
    sim.step();
    ASSERT_EQ(sim.active().size(), 1u);
    sim.vehicles()[sim.active()[0]].speed = 60.0;
    const auto s = sim.nfd_sample();
    EXPECT_DOUBLE_EQ(s.density, 0.1);
    EXPECT_DOUBLE_EQ(s.flow, 6.0);
    EXPECT_DOUBLE_EQ(s.speed, 60.0);
}

TEST(Simulation, ConservationAndAdmission) {
    const auto net = small_grid();
    const auto od = grid_demand(1.0);
    Simulation sim(net, energy::default_coefficients(), generate_demand(od, 4), od.demand_end());
    while (sim.step()) {
        const auto c = sim.counts();
        EXPECT_EQ(sim.entered(), sim.active().size() + c.finished);
        ASSERT_EQ(c.finished + c.unfinished + c.deferred + c.waiting, c.generated);
        for (std::size_t l = 0; l < net.links().size(); ++l)
            ASSERT_LE(sim.link_count(l), sim.link_capacity(l));
    }
    const auto c = sim.stats().counts;
    EXPECT_EQ(c.waiting, 0u);
    EXPECT_EQ(c.finished + c.unfinished + c.deferred, c.generated);
    EXPECT_GT(c.finished, 0u);
}

TEST(Simulation, SeedDeterminism) {
    const auto net = small_grid();
    const auto od = grid_demand(0.8);
    const auto run = [&](std::uint64_t seed) {
        Simulation sim(net, energy::default_coefficients(), generate_demand(od, seed), od.demand_end());
        sim.run();
        return sim.state_hash();
    };
    EXPECT_EQ(run(3), run(3));
    EXPECT_NE(run(3), run(4));
}

TEST(Simulation, FreeFlowLimitAtVanishingDemand) {
    // Alone on the road, a vehicle meets red with probability one half, then
    // waits 15 s on average and loses 5 s starting from standstill.
    const auto net = straight({300.0, 200.0}, {2});
    OdDemand od;
    od.entries.push_back({1, 3, 20.0, 0.0, 72000.0});
    Simulation sim(net, energy::default_coefficients(), generate_demand(od, 12), od.demand_end());
    sim.run();
    const auto& trips = sim.stats().trips;
    ASSERT_GT(trips.size(), 300u);
    double delay = 0.0;
    for (const auto& t : trips) delay += t.delay;
    delay /= static_cast<double>(trips.size());
    EXPECT_NEAR(delay, 0.5 * (15.0 + 5.0), 1.5);
    EXPECT_NEAR(trips[0].travel_time - trips[0].delay, 50.0, 1e-9);
}

TEST(Simulation, LinkExitsCreateCostReports) {
    const auto net = straight({360.0, 100.0}, {});
    Simulation sim(net, energy::default_coefficients(), at_times({0.0}, 1, 3), 0.0, with_horizon(100.0));
    sim.run();
    const auto& v = sim.vehicles()[0];
    ASSERT_EQ(v.pending.size(), 2u);
    EXPECT_EQ(v.pending[0].link, 0u);
    EXPECT_EQ(v.pending[1].link, 1u);
    EXPECT_LT(v.pending[0].created, v.pending[1].created);
    EXPECT_NEAR(v.pending[0].fuel + v.pending[1].fuel, sim.stats().trips[0].fuel, 1e-15);
    for (const auto& u : v.pending) EXPECT_EQ(u.fate, UpdateFate::Queued);
}

TEST(Simulation, UnknownDemandNodeIsInvalid) {
    const auto net = straight({100.0}, {});
    EXPECT_THROW(Simulation(net, energy::default_coefficients(), at_times({0.0}, 1, 9), 0.0),
                 ValidationError);
}
