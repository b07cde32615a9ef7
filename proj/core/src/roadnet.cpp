#include "mutualsim/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "mutualsim/error.hpp"
#include "mutualsim/kv_record.hpp"

namespace mutualsim::roadnet {

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

namespace {

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

std::string link_problem(const Link& l) {
    if (!(l.length > 0.0) || !std::isfinite(l.length)) return "link length must be > 0";
    if (l.lanes < 1) return "link lanes must be >= 1";
    if (!(l.free_speed > 0.0) || !std::isfinite(l.free_speed)) return "link free_speed must be > 0";
    if (!(l.jam_density > 0.0) || !std::isfinite(l.jam_density))
        return "link jam_density must be > 0";
    if (l.from == l.to) return "link must join two distinct nodes";
    return {};
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Link> links,
                         std::vector<Signal> signals, std::vector<Rsu> rsus)
    : nodes_(std::move(nodes)),
      links_(std::move(links)),
      signals_(std::move(signals)),
      rsus_(std::move(rsus)) {
    if (nodes_.empty()) throw ValidationError("network: node list is empty");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        if (!std::isfinite(n.pos.x) || !std::isfinite(n.pos.y))
            throw ValidationError("network: node " + std::to_string(n.id) + " has non-finite coordinates");
        if (!node_ix_.emplace(n.id, i).second)
            throw ValidationError("network: duplicate node id " + std::to_string(n.id));
    }
    out_.resize(nodes_.size());
    in_.resize(nodes_.size());
    link_from_.reserve(links_.size());
    link_to_.reserve(links_.size());
    for (std::size_t i = 0; i < links_.size(); ++i) {
        const auto& l = links_[i];
        const std::string tag = "network: link " + std::to_string(l.id) + ": ";
        if (auto p = link_problem(l); !p.empty()) throw ValidationError(tag + p);
        if (!link_ix_.emplace(l.id, i).second) throw ValidationError(tag + "duplicate link id");
        const auto f = node_ix_.find(l.from);
        const auto t = node_ix_.find(l.to);
        if (f == node_ix_.end() || t == node_ix_.end())
            throw ValidationError(tag + "endpoint node does not exist");
        link_from_.push_back(f->second);
        link_to_.push_back(t->second);
        out_[f->second].push_back(i);
        in_[t->second].push_back(i);
        lane_km_ += l.length / 1000.0 * l.lanes;
    }

    DisjointSets sets(nodes_.size());
    for (std::size_t i = 0; i < links_.size(); ++i) sets.unite(link_from_[i], link_to_[i]);
    const auto root = sets.find(0);
    for (std::size_t i = 1; i < nodes_.size(); ++i)
        if (sets.find(i) != root) throw ValidationError("network: graph is not weakly connected");

    signalised_.assign(nodes_.size(), false);
    std::unordered_set<int> seen;
    for (const auto& s : signals_) {
        if (!seen.insert(s.id).second)
            throw ValidationError("network: duplicate signal id " + std::to_string(s.id));
        const auto it = node_ix_.find(s.node);
        if (it == node_ix_.end())
            throw ValidationError("network: signal " + std::to_string(s.id) + " on unknown node");
        signalised_[it->second] = true;
    }
    seen.clear();
    for (const auto& r : rsus_) {
        if (!seen.insert(r.id).second)
            throw ValidationError("network: duplicate rsu id " + std::to_string(r.id));
        if (!node_ix_.count(r.node))
            throw ValidationError("network: rsu " + std::to_string(r.id) + " on unknown node");
        if (!(r.range > 0.0) || !std::isfinite(r.range))
            throw ValidationError("network: rsu " + std::to_string(r.id) + " range must be > 0");
    }
}

std::size_t RoadNetwork::node_index(int node_id) const { return node_ix_.at(node_id); }

std::size_t RoadNetwork::link_index(int link_id) const { return link_ix_.at(link_id); }

std::optional<std::size_t> RoadNetwork::find_node(int node_id) const {
    const auto it = node_ix_.find(node_id);
    if (it == node_ix_.end()) return std::nullopt;
    return it->second;
}

Point RoadNetwork::rsu_position(std::size_t rsu) const {
    return nodes_[node_ix_.at(rsus_[rsu].node)].pos;
}

Point RoadNetwork::position_on_link(std::size_t link, double offset) const {
    const Point a = nodes_[link_from_[link]].pos;
    const Point b = nodes_[link_to_[link]].pos;
    const double t = std::clamp(offset / links_[link].length, 0.0, 1.0);
    return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t};
}

RoadNetwork RoadNetwork::with_rsus(std::vector<Rsu> rsus) const {
    return RoadNetwork(nodes_, links_, signals_, std::move(rsus));
}

// ---------------------------------------------------------------------------
// Text format

namespace {

enum class Section { None, Nodes, Links, Signals, Rsus };

std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) out.push_back(t);
    return out;
}

int as_int(const std::string& s, const char* field, int line) {
    return static_cast<int>(kv::to_int(s, field, line));
}

double as_double(const std::string& s, const char* field, int line) {
    return kv::to_double(s, field, line);
}

}  // namespace

LoadedNetwork load_network(std::istream& in, bool strict) {
    std::vector<Node> nodes;
    std::vector<Link> links;
    std::vector<Signal> signals;
    std::vector<Rsu> rsus;
    IngestionReport report;

    std::unordered_map<int, int> node_lines;
    std::unordered_set<int> link_ids, signal_ids, rsu_ids;
    Section section = Section::None;
    std::string section_name;

    // Rows are checked against nodes seen so far, so nodes come first.
    const auto reject = [&](int line, const std::string& why) {
        if (strict) throw ValidationError("line " + std::to_string(line) + ": " + why);
        report.rejected.push_back({line, section_name, why});
    };

    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const auto tok = tokens(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (tok.empty()) continue;
        if (tok.size() == 1 && tok[0].size() > 2 && tok[0].front() == '[' && tok[0].back() == ']') {
            section_name = tok[0].substr(1, tok[0].size() - 2);
            if (section_name == "nodes") section = Section::Nodes;
            else if (section_name == "links") section = Section::Links;
            else if (section_name == "signals") section = Section::Signals;
            else if (section_name == "rsus") section = Section::Rsus;
            else throw ParseError("unknown section '" + tok[0] + "'", line_no);
            continue;
        }
        const auto expect = [&](std::size_t n) {
            if (tok.size() != n)
                throw ParseError("expected " + std::to_string(n) + " fields, got " +
                                     std::to_string(tok.size()),
                                 line_no, section_name);
        };
        switch (section) {
            case Section::None:
                throw ParseError("row outside of any section", line_no);
            case Section::Nodes: {
                expect(3);
                Node n{as_int(tok[0], "id", line_no),
                       {as_double(tok[1], "x", line_no), as_double(tok[2], "y", line_no)}};
                if (!std::isfinite(n.pos.x) || !std::isfinite(n.pos.y))
                    reject(line_no, "non-finite coordinates");
                else if (node_lines.count(n.id))
                    reject(line_no, "duplicate node id " + tok[0]);
                else {
                    node_lines[n.id] = line_no;
                    nodes.push_back(n);
                }
                break;
            }
            case Section::Links: {
                expect(7);
                Link l;
                l.id = as_int(tok[0], "id", line_no);
                l.from = as_int(tok[1], "from", line_no);
                l.to = as_int(tok[2], "to", line_no);
                l.length = as_double(tok[3], "length", line_no);
                l.lanes = as_int(tok[4], "lanes", line_no);
                l.free_speed = as_double(tok[5], "free_speed", line_no);
                l.jam_density = as_double(tok[6], "jam_density", line_no);
                if (auto p = link_problem(l); !p.empty()) reject(line_no, p);
                else if (!node_lines.count(l.from) || !node_lines.count(l.to))
                    reject(line_no, "endpoint node does not exist");
                else if (!link_ids.insert(l.id).second)
                    reject(line_no, "duplicate link id " + tok[0]);
                else
                    links.push_back(l);
                break;
            }
            case Section::Signals: {
                expect(2);
                Signal s{as_int(tok[0], "id", line_no), as_int(tok[1], "node", line_no)};
                if (!node_lines.count(s.node)) reject(line_no, "signal on unknown node");
                else if (!signal_ids.insert(s.id).second)
                    reject(line_no, "duplicate signal id " + tok[0]);
                else
                    signals.push_back(s);
                break;
            }
            case Section::Rsus: {
                expect(3);
                Rsu r{as_int(tok[0], "id", line_no), as_int(tok[1], "node", line_no),
                      as_double(tok[2], "range", line_no)};
                if (!node_lines.count(r.node)) reject(line_no, "rsu on unknown node");
                else if (!(r.range > 0.0) || !std::isfinite(r.range))
                    reject(line_no, "rsu range must be > 0");
                else if (!rsu_ids.insert(r.id).second)
                    reject(line_no, "duplicate rsu id " + tok[0]);
                else
                    rsus.push_back(r);
                break;
            }
        }
    }
    report.nodes = static_cast<int>(nodes.size());
    report.links = static_cast<int>(links.size());
    report.signals = static_cast<int>(signals.size());
    report.rsus = static_cast<int>(rsus.size());
    RoadNetwork net(std::move(nodes), std::move(links), std::move(signals), std::move(rsus));
    return {std::move(net), std::move(report)};
}

LoadedNetwork load_network(const std::string& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open network file '" + path + "'");
    return load_network(in, strict);
}

void write_network(std::ostream& out, const RoadNetwork& net) {
    const auto d = [](double v) { return kv::format_double(v); };
    out << "[nodes]\n# id x y\n";
    for (const auto& n : net.nodes()) out << n.id << ' ' << d(n.pos.x) << ' ' << d(n.pos.y) << '\n';
    out << "[links]\n# id from to length lanes free_speed jam_density\n";
    for (const auto& l : net.links())
        out << l.id << ' ' << l.from << ' ' << l.to << ' ' << d(l.length) << ' ' << l.lanes << ' '
            << d(l.free_speed) << ' ' << d(l.jam_density) << '\n';
    out << "[signals]\n# id node\n";
    for (const auto& s : net.signals()) out << s.id << ' ' << s.node << '\n';
    if (!net.rsus().empty()) {
        out << "[rsus]\n# id node range\n";
        for (const auto& r : net.rsus()) out << r.id << ' ' << r.node << ' ' << d(r.range) << '\n';
    }
}

RoadNetwork make_grid(const GridOptions& o) {
    if (o.rows < 1 || o.cols < 1 || o.rows * o.cols < 2)
        throw ValidationError("grid: need at least two nodes");
    if (!(o.spacing > 0.0)) throw ValidationError("grid: spacing must be > 0");
    std::vector<Node> nodes;
    std::vector<Link> links;
    std::vector<Signal> signals;
    const auto id = [&](int r, int c) { return r * o.cols + c + 1; };
    for (int r = 0; r < o.rows; ++r)
        for (int c = 0; c < o.cols; ++c) {
            nodes.push_back({id(r, c), {c * o.spacing, r * o.spacing}});
            if (o.signals_everywhere) signals.push_back({id(r, c), id(r, c)});
        }
    const auto arterial = [&](int index) {
        return o.arterial_every > 0 && index % o.arterial_every == 0;
    };
    int next = 1;
    const auto add = [&](int a, int b, bool major) {
        Link l;
        l.id = next++;
        l.from = a;
        l.to = b;
        l.length = o.spacing;
        l.lanes = major ? o.arterial_lanes : o.lanes;
        l.free_speed = major ? o.arterial_speed : o.free_speed;
        l.jam_density = o.jam_density;
        links.push_back(l);
    };
    for (int r = 0; r < o.rows; ++r)
        for (int c = 0; c + 1 < o.cols; ++c) {
            add(id(r, c), id(r, c + 1), arterial(r));
            add(id(r, c + 1), id(r, c), arterial(r));
        }
    for (int c = 0; c < o.cols; ++c)
        for (int r = 0; r + 1 < o.rows; ++r) {
            add(id(r, c), id(r + 1, c), arterial(c));
            add(id(r + 1, c), id(r, c), arterial(c));
        }
    return RoadNetwork(std::move(nodes), std::move(links), std::move(signals));
}

// ---------------------------------------------------------------------------
// RSU placement and coverage

std::vector<int> place_rsus(const RoadNetwork& net, double r_com) {
    if (net.signals().empty()) throw ValidationError("place_rsus: network has no signals");
    if (!(r_com > 0.0)) throw ValidationError("place_rsus: r_com must be > 0");

    std::vector<std::size_t> order(net.signals().size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return net.signals()[a].id < net.signals()[b].id;
    });
    std::vector<Point> pos;
    for (auto s : order) pos.push_back(net.node_position(net.node_index(net.signals()[s].node)));

    const std::size_t n = order.size();
    std::vector<bool> remaining(n, true);
    std::size_t left = n;
    std::vector<int> chosen;
    while (left > 0) {
        std::size_t best = n;
        std::size_t best_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!remaining[i]) continue;
            std::size_t count = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (remaining[j] && distance(pos[i], pos[j]) < r_com) ++count;
            if (count > best_count) {  // ascending id order: first maximum wins
                best = i;
                best_count = count;
            }
        }
        chosen.push_back(net.signals()[order[best]].id);
        for (std::size_t j = 0; j < n; ++j)
            if (remaining[j] && distance(pos[best], pos[j]) < r_com) {
                remaining[j] = false;
                --left;
            }
    }
    return chosen;
}

std::vector<Rsu> rsus_at_signals(const RoadNetwork& net, const std::vector<int>& signal_ids,
                                 double range) {
    std::unordered_map<int, int> node_of;
    for (const auto& s : net.signals()) node_of[s.id] = s.node;
    std::vector<Rsu> out;
    int next = 1;
    for (int sid : signal_ids) {
        const auto it = node_of.find(sid);
        if (it == node_of.end()) throw ValidationError("unknown signal id " + std::to_string(sid));
        out.push_back({next++, it->second, range});
    }
    return out;
}

double link_length_coverage(const RoadNetwork& net) {
    double total = 0.0;
    double covered = 0.0;
    for (std::size_t li = 0; li < net.links().size(); ++li) {
        const Point a = net.node_position(net.from_index(li));
        const Point b = net.node_position(net.to_index(li));
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double seg2 = dx * dx + dy * dy;
        const double length = net.links()[li].length;
        total += length;
        if (seg2 == 0.0) continue;
        // Parameter intervals [t0, t1] of the segment inside each disk.
        std::vector<std::pair<double, double>> spans;
        for (std::size_t r = 0; r < net.rsus().size(); ++r) {
            const Point c = net.rsu_position(r);
            const double range = net.rsus()[r].range;
            const double fx = a.x - c.x;
            const double fy = a.y - c.y;
            const double bq = 2.0 * (fx * dx + fy * dy);
            const double cq = fx * fx + fy * fy - range * range;
            const double disc = bq * bq - 4.0 * seg2 * cq;
            if (disc < 0.0) continue;
            const double root = std::sqrt(disc);
            const double t0 = std::max(0.0, (-bq - root) / (2.0 * seg2));
            const double t1 = std::min(1.0, (-bq + root) / (2.0 * seg2));
            if (t1 > t0) spans.emplace_back(t0, t1);
        }
        std::sort(spans.begin(), spans.end());
        double share = 0.0;
        double end = 0.0;
        for (const auto& [s, e] : spans) {
            const double start = std::max(s, end);
            if (e > start) {
                share += e - start;
                end = e;
            }
        }
        covered += share * length;
    }
    return total > 0.0 ? covered / total : 0.0;
}

namespace {

long long bucket_key(long long i, long long j) { return (i << 32) ^ (j & 0xffffffffLL); }

}  // namespace

CoverageIndex::CoverageIndex(const RoadNetwork& net) {
    for (std::size_t r = 0; r < net.rsus().size(); ++r) {
        centers_.push_back(net.rsu_position(r));
        ranges_.push_back(net.rsus()[r].range);
        ids_.push_back(net.rsus()[r].id);
    }
    if (!ranges_.empty()) cell_ = *std::max_element(ranges_.begin(), ranges_.end());
    for (std::size_t r = 0; r < centers_.size(); ++r) {
        const auto i = static_cast<long long>(std::floor(centers_[r].x / cell_));
        const auto j = static_cast<long long>(std::floor(centers_[r].y / cell_));
        buckets_[bucket_key(i, j)].push_back(r);
    }
}

template <class F>
void CoverageIndex::for_each_candidate(Point p, F&& f) const {
    const auto i = static_cast<long long>(std::floor(p.x / cell_));
    const auto j = static_cast<long long>(std::floor(p.y / cell_));
    for (long long di = -1; di <= 1; ++di)
        for (long long dj = -1; dj <= 1; ++dj) {
            const auto it = buckets_.find(bucket_key(i + di, j + dj));
            if (it == buckets_.end()) continue;
            for (auto r : it->second) f(r);
        }
}

std::optional<std::size_t> CoverageIndex::connected_rsu(Point p) const {
    constexpr double kTie = 1e-9;
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for_each_candidate(p, [&](std::size_t r) {
        const double d = distance(p, centers_[r]);
        if (d > ranges_[r]) return;
        if (!best || d < best_d - kTie || (std::abs(d - best_d) <= kTie && ids_[r] < ids_[*best])) {
            best = r;
            best_d = d;
        }
    });
    return best;
}

int CoverageIndex::vehicles_in_range(std::size_t rsu, const std::vector<Point>& positions) const {
    int n = 0;
    for (const auto& p : positions)
        if (distance(p, centers_[rsu]) <= ranges_[rsu]) ++n;
    return n;
}

std::vector<int> CoverageIndex::counts(const std::vector<Point>& positions) const {
    std::vector<int> out(centers_.size(), 0);
    for (const auto& p : positions)
        for_each_candidate(p, [&](std::size_t r) {
            if (distance(p, centers_[r]) <= ranges_[r]) ++out[r];
        });
    return out;
}

}  // namespace mutualsim::roadnet
