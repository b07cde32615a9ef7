#pragma once

// Road network: nodes in planar metres, directed links, signalised nodes and
// roadside units. Plus RSU placement over signals and the spatial index used
// for connectivity queries.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mutualsim::roadnet {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

double distance(Point a, Point b) noexcept;

struct Node {
    int id = 0;
    Point pos;
};

struct Link {
    int id = 0;
    int from = 0;               // node id
    int to = 0;                 // node id
    double length = 0.0;        // m
    int lanes = 1;
    double free_speed = 0.0;    // km/h
    double jam_density = 0.0;   // veh/km/lane
};

struct Signal {
    int id = 0;
    int node = 0;
};

struct Rsu {
    int id = 0;
    int node = 0;
    double range = 0.0;  // m
};

/// Immutable, validated network. Entities keep their file ids; the dense
/// index of an entity is its position in the corresponding vector.
class RoadNetwork {
public:
    /// Throws ValidationError naming the violated invariant.
    RoadNetwork(std::vector<Node> nodes, std::vector<Link> links, std::vector<Signal> signals,
                std::vector<Rsu> rsus = {});

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Link>& links() const noexcept { return links_; }
    const std::vector<Signal>& signals() const noexcept { return signals_; }
    const std::vector<Rsu>& rsus() const noexcept { return rsus_; }

    std::size_t node_index(int node_id) const;  // throws std::out_of_range
    std::size_t link_index(int link_id) const;
    std::optional<std::size_t> find_node(int node_id) const;

    /// Dense node index of a link's endpoints.
    std::size_t from_index(std::size_t link) const { return link_from_[link]; }
    std::size_t to_index(std::size_t link) const { return link_to_[link]; }

    const std::vector<std::size_t>& out_links(std::size_t node) const { return out_[node]; }
    const std::vector<std::size_t>& in_links(std::size_t node) const { return in_[node]; }

    bool is_signalised(std::size_t node) const { return signalised_[node]; }
    Point node_position(std::size_t node) const { return nodes_[node].pos; }
    Point rsu_position(std::size_t rsu) const;

    /// Point at `offset` metres along a link, interpolated between endpoints.
    Point position_on_link(std::size_t link, double offset) const;

    double total_lane_km() const noexcept { return lane_km_; }

    /// Copy with the RSU list replaced.
    RoadNetwork with_rsus(std::vector<Rsu> rsus) const;

private:
    std::vector<Node> nodes_;
    std::vector<Link> links_;
    std::vector<Signal> signals_;
    std::vector<Rsu> rsus_;
    std::unordered_map<int, std::size_t> node_ix_;
    std::unordered_map<int, std::size_t> link_ix_;
    std::vector<std::size_t> link_from_;
    std::vector<std::size_t> link_to_;
    std::vector<std::vector<std::size_t>> out_;
    std::vector<std::vector<std::size_t>> in_;
    std::vector<bool> signalised_;
    double lane_km_ = 0.0;
};

struct RejectedRow {
    int line = 0;
    std::string section;
    std::string reason;
};

struct IngestionReport {
    int nodes = 0;
    int links = 0;
    int signals = 0;
    int rsus = 0;
    std::vector<RejectedRow> rejected;
};

struct LoadedNetwork {
    RoadNetwork network;
    IngestionReport report;
};

/// Row-level problems (bad values, unknown endpoints, duplicate ids) reject
/// the row and are listed in the report; with `strict` they raise
/// ValidationError instead. Syntax errors raise ParseError with the line.
LoadedNetwork load_network(std::istream& in, bool strict = false);
LoadedNetwork load_network(const std::string& path, bool strict = false);

void write_network(std::ostream& out, const RoadNetwork& network);

struct GridOptions {
    int rows = 10;
    int cols = 10;
    double spacing = 250.0;       // m
    int lanes = 1;
    double free_speed = 50.0;     // km/h
    double jam_density = 120.0;   // veh/km/lane
    /// Every `arterial_every`-th row and column (0 disables) gets these.
    int arterial_every = 0;
    int arterial_lanes = 2;
    double arterial_speed = 70.0;
    bool signals_everywhere = true;
};

/// Manhattan grid, two directed links per adjacent node pair. Node ids are
/// 1..rows*cols row-major; signal id equals its node id.
RoadNetwork make_grid(const GridOptions& options);

/// Greedy set cover over signals: repeatedly picks the remaining signal whose
/// disk of radius r_com (strict <) covers most remaining signals, ties to the
/// lowest signal id. Returns the selected signal ids in selection order.
std::vector<int> place_rsus(const RoadNetwork& network, double r_com);

/// RSUs at the nodes of the given signals, ids 1..n in the given order.
std::vector<Rsu> rsus_at_signals(const RoadNetwork& network, const std::vector<int>& signal_ids,
                                 double range);

/// Share of total link length within range of at least one RSU, computed
/// exactly from segment/disk intersections.
double link_length_coverage(const RoadNetwork& network);

/// Bucketed spatial index over RSU disks (bucket size = largest range).
class CoverageIndex {
public:
    explicit CoverageIndex(const RoadNetwork& network);

    /// Nearest RSU (dense index) with distance <= range; ties within 1e-9 m go
    /// to the lower RSU id.
    std::optional<std::size_t> connected_rsu(Point p) const;

    /// Number of positions with distance <= range of the given RSU.
    int vehicles_in_range(std::size_t rsu, const std::vector<Point>& positions) const;

    /// vehicles_in_range for every RSU at once.
    std::vector<int> counts(const std::vector<Point>& positions) const;

    std::size_t size() const noexcept { return centers_.size(); }

private:
    template <class F>
    void for_each_candidate(Point p, F&& f) const;

    std::vector<Point> centers_;
    std::vector<double> ranges_;
    std::vector<int> ids_;
    double cell_ = 1.0;
    std::unordered_map<long long, std::vector<std::size_t>> buckets_;
};

}  // namespace mutualsim::roadnet
