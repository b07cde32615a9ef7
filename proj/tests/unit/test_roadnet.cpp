#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "mutualsim/error.hpp"
#include "mutualsim/roadnet.hpp"

using namespace mutualsim;
using namespace mutualsim::roadnet;

namespace {

// Nodes at the given points, chained by links so the graph is connected, with
// a signal on every node (signal id = node id).
RoadNetwork chain(const std::vector<Point>& pts, std::vector<Rsu> rsus = {}) {
    std::vector<Node> nodes;
    std::vector<Link> links;
    std::vector<Signal> signals;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        nodes.push_back({id, pts[i]});
        signals.push_back({id, id});
        if (i > 0) {
            const double len = std::max(1.0, distance(pts[i - 1], pts[i]));
            links.push_back({id - 1, id - 1, id, len, 1, 50.0, 120.0});
        }
    }
    return RoadNetwork(nodes, links, signals, std::move(rsus));
}

// Smallest number of signals whose open disks cover every signal.
std::size_t minimum_cover(const std::vector<Point>& pts, double r) {
    const std::size_t n = pts.size();
    std::vector<unsigned> covers(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (distance(pts[i], pts[j]) < r) covers[i] |= 1u << j;
    const unsigned all = (1u << n) - 1;
    std::size_t best = n;
    for (unsigned mask = 1; mask <= all; ++mask) {
        const auto size = static_cast<std::size_t>(__builtin_popcount(mask));
        if (size >= best) continue;
        unsigned got = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) got |= covers[i];
        if (got == all) best = size;
    }
    return best;
}

}  // namespace

TEST(Network, EmptyNodeListIsInvalid) {
    std::istringstream in("[nodes]\n[links]\n");
    EXPECT_THROW(load_network(in), ValidationError);
}

TEST(Network, TwoNodeToy) {
    std::istringstream in(
        "[nodes]\n1 0 0\n2 300 0\n[links]\n# id from to length lanes free_speed jam\n"
        "7 1 2 312.5 2 60 140\n[signals]\n1 2\n");
    const auto loaded = load_network(in);
    ASSERT_EQ(loaded.network.links().size(), 1u);
    EXPECT_EQ(loaded.network.links()[0].id, 7);
    EXPECT_DOUBLE_EQ(loaded.network.links()[0].length, 312.5);
    EXPECT_DOUBLE_EQ(loaded.network.total_lane_km(), 0.625);
    EXPECT_TRUE(loaded.network.is_signalised(1));
    EXPECT_TRUE(loaded.report.rejected.empty());
}

TEST(Network, GridRoundTrip) {
    const auto grid = make_grid(GridOptions{});
    EXPECT_EQ(grid.nodes().size(), 100u);
    EXPECT_EQ(grid.links().size(), 360u);
    std::stringstream file;
    write_network(file, grid);
    const auto loaded = load_network(file);
    EXPECT_TRUE(loaded.report.rejected.empty());
    EXPECT_EQ(loaded.network.nodes().size(), 100u);
    EXPECT_EQ(loaded.network.links().size(), 360u);
    EXPECT_EQ(loaded.network.signals().size(), grid.signals().size());
    for (std::size_t i = 0; i < grid.links().size(); ++i)
        EXPECT_EQ(loaded.network.links()[i].length, grid.links()[i].length);
}

TEST(Network, BadRowsAreRejectedOrFatalWhenStrict) {
    const std::string text =
        "[nodes]\n1 0 0\n2 100 0\n2 5 5\n[links]\n1 1 2 100 1 50 120\n2 1 9 100 1 50 120\n"
        "3 2 1 -4 1 50 120\n";
    std::istringstream lenient(text);
    const auto loaded = load_network(lenient);
    ASSERT_EQ(loaded.report.rejected.size(), 3u);
    EXPECT_EQ(loaded.report.rejected[0].line, 4);
    EXPECT_EQ(loaded.report.rejected[1].line, 7);
    EXPECT_EQ(loaded.report.rejected[2].line, 8);
    EXPECT_NE(loaded.report.rejected[2].reason.find("length"), std::string::npos);
    std::istringstream strict(text);
    EXPECT_THROW(load_network(strict, true), ValidationError);
}

TEST(Network, SyntaxErrorsCarryLineNumbers) {
    std::istringstream bad_field("[nodes]\n1 0 0\n2 abc 0\n");
    try {
        load_network(bad_field);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.field(), "x");
    }
    std::istringstream short_row("[nodes]\n1 0 0\n[links]\n1 1 2 100\n");
    try {
        load_network(short_row);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4);
    }
    std::istringstream section("[roads]\n");
    EXPECT_THROW(load_network(section), ParseError);
}

TEST(Network, DisconnectedGraphIsInvalid) {
    std::istringstream in("[nodes]\n1 0 0\n2 100 0\n3 500 500\n[links]\n1 1 2 100 1 50 120\n");
    EXPECT_THROW(load_network(in), ValidationError);
}

TEST(PlaceRsus, ClusterNeedsOne) {
    const auto net = chain({{0, 0}, {10, 0}, {0, 10}, {20, 20}});
    const auto g = place_rsus(net, 100.0);
    EXPECT_EQ(g.size(), 1u);
}

TEST(PlaceRsus, SpacingEqualToRangeIsNotCovered) {
    const auto net = chain({{0, 0}, {500, 0}, {1000, 0}, {1500, 0}});
    const auto g = place_rsus(net, 500.0);
    EXPECT_EQ(g, (std::vector<int>{1, 2, 3, 4}));
}

TEST(PlaceRsus, GreedyCoversAndIsNoBetterThanOptimal) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> coord(0.0, 2000.0);
    std::uniform_real_distribution<double> radius(300.0, 900.0);
    for (int instance = 0; instance < 20; ++instance) {
        std::vector<Point> pts;
        for (int i = 0; i < 12; ++i) pts.push_back({coord(rng), coord(rng)});
        const double r = radius(rng);
        const auto net = chain(pts);
        const auto g = place_rsus(net, r);
        for (const auto& p : pts) {
            const bool covered = std::any_of(g.begin(), g.end(), [&](int s) {
                return distance(p, pts[static_cast<std::size_t>(s - 1)]) < r;
            });
            EXPECT_TRUE(covered);
        }
        EXPECT_GE(g.size(), minimum_cover(pts, r));
        EXPECT_EQ(place_rsus(net, r), g);
        EXPECT_EQ(std::set<int>(g.begin(), g.end()).size(), g.size());
    }
}

TEST(PlaceRsus, TiesGoToLowestSignalId) {
    // Two isolated pairs: each pair member covers two signals.
    const auto net = chain({{0, 0}, {50, 0}, {5000, 0}, {5050, 0}});
    EXPECT_EQ(place_rsus(net, 100.0), (std::vector<int>{1, 3}));
}

TEST(Coverage, ConnectedRsu) {
    const auto base = chain({{0, 0}, {200, 0}, {5000, 0}});
    const auto net = base.with_rsus({{2, 1, 150.0}, {1, 2, 150.0}});
    const CoverageIndex index(net);
    const auto at_rsu = index.connected_rsu({0, 0});
    ASSERT_TRUE(at_rsu);
    EXPECT_EQ(net.rsus()[*at_rsu].id, 2);
    EXPECT_FALSE(index.connected_rsu({3000, 0}));
    const auto tie = index.connected_rsu({100, 0});
    ASSERT_TRUE(tie);
    EXPECT_EQ(net.rsus()[*tie].id, 1);
    const auto nearest = index.connected_rsu({120, 0});
    ASSERT_TRUE(nearest);
    EXPECT_EQ(net.rsus()[*nearest].id, 1);
}

TEST(Coverage, VehiclesInRange) {
    const auto net = chain({{0, 0}, {1000, 0}}).with_rsus({{1, 1, 100.0}});
    const CoverageIndex index(net);
    EXPECT_EQ(index.vehicles_in_range(0, {}), 0);
    const std::vector<Point> pos = {{0, 0}, {100, 0}, {-50, 50}, {101, 0}, {500, 500}};
    EXPECT_EQ(index.vehicles_in_range(0, pos), 3);
}

TEST(Coverage, IndexMatchesNaiveScan) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> coord(-500.0, 3500.0);
    std::uniform_real_distribution<double> radius(100.0, 700.0);
    for (int round = 0; round < 10; ++round) {
        std::vector<Point> nodes;
        for (int i = 0; i < 30; ++i) nodes.push_back({coord(rng), coord(rng)});
        std::vector<Rsu> rsus;
        for (int i = 0; i < 8; ++i) rsus.push_back({i + 1, 3 * i + 1, radius(rng)});
        const auto net = chain(nodes, rsus);
        const CoverageIndex index(net);
        std::vector<Point> cars;
        for (int i = 0; i < 500; ++i) cars.push_back({coord(rng), coord(rng)});
        const auto counts = index.counts(cars);
        for (std::size_t r = 0; r < rsus.size(); ++r) {
            int naive = 0;
            for (const auto& c : cars) naive += distance(c, net.rsu_position(r)) <= rsus[r].range;
            EXPECT_EQ(counts[r], naive);
            EXPECT_EQ(index.vehicles_in_range(r, cars), naive);
        }
        for (const auto& c : cars) {
            std::optional<std::size_t> best;
            double best_d = 0.0;
            for (std::size_t r = 0; r < rsus.size(); ++r) {
                const double d = distance(c, net.rsu_position(r));
                if (d > rsus[r].range) continue;
                if (!best || d < best_d - 1e-9 ||
                    (std::abs(d - best_d) <= 1e-9 && rsus[r].id < rsus[*best].id)) {
                    best = r;
                    best_d = d;
                }
            }
            EXPECT_EQ(index.connected_rsu(c), best);
        }
    }
}

TEST(Coverage, LinkLengthShare) {
    const auto net = chain({{0, 0}, {1000, 0}}).with_rsus({{1, 1, 500.0}});
    EXPECT_NEAR(link_length_coverage(net), 0.5, 1e-12);
    const auto all = chain({{0, 0}, {1000, 0}}).with_rsus({{1, 1, 2000.0}});
    EXPECT_NEAR(link_length_coverage(all), 1.0, 1e-12);
}

TEST(Grid, ArterialsAndSignals) {
    GridOptions o;
    o.arterial_every = 3;
    const auto net = make_grid(o);
    int arterial = 0;
    for (const auto& l : net.links()) arterial += l.lanes == o.arterial_lanes;
    EXPECT_GT(arterial, 0);
    EXPECT_EQ(net.signals().size(), 100u);
}
