#include "mutualsim/eco_routing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "mutualsim/error.hpp"

namespace mutualsim::eco {

namespace {

constexpr std::size_t kNone = SIZE_MAX;

std::vector<std::size_t> unwind(const roadnet::RoadNetwork& net, const std::vector<std::size_t>& via,
                                std::size_t from, std::size_t to) {
    std::vector<std::size_t> path;
    for (auto v = to; v != from; v = net.from_index(via[v])) path.push_back(via[v]);
    std::reverse(path.begin(), path.end());
    return path;
}

bool lex_less(const roadnet::RoadNetwork& net, const std::vector<std::size_t>& a,
              const std::vector<std::size_t>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [&](std::size_t x, std::size_t y) {
                                            return net.links()[x].id < net.links()[y].id;
                                        });
}

}  // namespace

TmcCostTable::TmcCostTable(const roadnet::RoadNetwork& net, const energy::VtMicroCoefficients& coeffs)
    : updated_(net.links().size(), std::numeric_limits<double>::quiet_NaN()) {
    costs_.reserve(net.links().size());
    for (const auto& l : net.links()) costs_.push_back(energy::free_flow_fuel(l.length, l.free_speed, coeffs));
}

TmcCostTable::TmcCostTable(std::vector<double> costs)
    : costs_(std::move(costs)), updated_(costs_.size(), std::numeric_limits<double>::quiet_NaN()) {
    for (double c : costs_)
        if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("tmc: link costs must be positive");
}

void TmcCostTable::apply(std::size_t link, double measured, double time, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("tmc: beta must lie in [0, 1]");
    costs_.at(link) = (1.0 - beta) * costs_[link] + beta * measured;
    updated_[link] = time;
}

void apply_update(TmcCostTable& table, const traffic::LinkCostUpdate& update, double beta) {
    const double at = std::isnan(update.delivered_at) ? update.created : update.delivered_at;
    table.apply(update.link, update.fuel, at, beta);
}

std::vector<std::size_t> route(const roadnet::RoadNetwork& net, const std::vector<double>& costs,
                               std::size_t from, std::size_t to, double eta, std::mt19937_64& rng) {
    const std::size_t links = net.links().size();
    if (costs.size() != links) throw ConfigError("route: cost vector does not match the network");
    std::vector<double> w(links);
    if (eta > 0.0) {
        std::uniform_real_distribution<double> noise(-eta, eta);
        for (std::size_t l = 0; l < links; ++l) w[l] = costs[l] * (1.0 + noise(rng));
    } else {
        w = costs;
    }

    const std::size_t n = net.nodes().size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> via(n, kNone);
    std::vector<bool> settled(n, false);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[from] = 0.0;
    heap.push({0.0, from});
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (settled[u]) continue;
        settled[u] = true;
        if (u == to) break;
        for (auto l : net.out_links(u)) {
            const auto v = net.to_index(l);
            if (settled[v] || v == from) continue;
            const double nd = d + w[l];
            if (nd < dist[v]) {
                dist[v] = nd;
                via[v] = l;
                heap.push({nd, v});
            } else if (nd == dist[v]) {
                auto mine = unwind(net, via, from, u);
                mine.push_back(l);
                if (lex_less(net, mine, unwind(net, via, from, v))) via[v] = l;
            }
        }
    }
    if (from == to || via[to] == kNone) return {};
    return unwind(net, via, from, to);
}

std::vector<std::size_t> EcoRouter::route(const traffic::Vehicle& vehicle, std::size_t from_node, double) {
    return eco::route(net_, table_.costs(), from_node, vehicle.destination, eta_, rng_);
}

const char* to_string(CommMode mode) {
    return mode == CommMode::Ideal ? "ideal" : "realistic";
}

CommMode parse_comm_mode(const std::string& text) {
    if (text == "ideal") return CommMode::Ideal;
    if (text == "realistic") return CommMode::Realistic;
    throw ConfigError("unknown communication mode '" + text + "' (ideal|realistic)");
}

CommLayer::CommLayer(const roadnet::RoadNetwork& net, const energy::VtMicroCoefficients& coeffs,
                     CommConfig config)
    : net_(net), config_(std::move(config)), table_(net, coeffs), coverage_(net), rng_(config_.seed) {
    if (config_.downlink_impairment) throw ConfigError("downlink impairment is not supported");
    if (!(config_.background_rate > 0.0)) throw ConfigError("background rate must be positive");
    if (!(config_.refresh_interval > 0.0)) throw ConfigError("cell refresh interval must be positive");
    if (!(config_.beta >= 0.0 && config_.beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
    if (config_.mode == CommMode::Realistic && net.rsus().empty())
        throw ConfigError("realistic communication needs at least one RSU");
    cells_.resize(net.rsus().size());
    for (std::size_t r = 0; r < cells_.size(); ++r) cells_[r].rsu = r;
}

const mac::MacSolution* CommLayer::cell_solution(CommCellState& cell, int n, double now) {
    n = std::max(n, 1);
    const bool stale = cell.cached_at < 0.0 || now - cell.cached_at >= config_.refresh_interval - 1e-9;
    if (!stale && n == cell.n) return cell.solution ? &*cell.solution : nullptr;

    if (stale) {
        const double window = now - cell.window_start;
        double lambda = config_.background_rate;
        if (window > 0.0) lambda += static_cast<double>(cell.sent_in_window) / (window * n);
        if (lambda != cell.lambda) cell.memo.clear();
        cell.lambda = lambda;
        cell.sent_in_window = 0;
        cell.window_start = now;
        cell.cached_at = now;
    }
    cell.n = n;
    auto it = cell.memo.find(n);
    if (it == cell.memo.end()) {
        mac::MacParams p = config_.mac;
        p.n_stations = n;
        p.arrival_rate = cell.lambda;
        std::optional<mac::MacSolution> sol;
        try {
            sol = mac::solve(p);
        } catch (const SolverError&) {
            ++totals_.solver_failures;
        }
        ++cell.solves;
        it = cell.memo.emplace(n, std::move(sol)).first;
    }
    cell.solution = it->second;
    if (cell.solution && cell.solution->t_delay && !cell.held.empty()) {
        auto held = std::move(cell.held);
        cell.held.clear();
        for (auto& u : held) schedule(std::move(u), now + *cell.solution->t_delay);
    }
    return cell.solution ? &*cell.solution : nullptr;
}

std::size_t CommLayer::record(const traffic::LinkCostUpdate& u) {
    ledger_.push_back(u);
    return ledger_.size() - 1;
}

void CommLayer::schedule(traffic::LinkCostUpdate u, double at) {
    u.fate = traffic::UpdateFate::Delivered;
    u.delivered_at = at;
    ++totals_.delivered;
    const auto id = u.id;
    deliveries_.push({at, id, record(u)});
}

void CommLayer::handle(CommCellState& cell, const mac::MacSolution* sol, traffic::LinkCostUpdate u) {
    ++cell.sent_in_window;
    if (!sol) {
        cell.held.push_back(std::move(u));
        return;
    }
    u.p_drop = sol->p_drop;
    totals_.p_drop_sum += sol->p_drop;
    ++totals_.p_drop_count;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    if (uni(rng_) < sol->p_drop) {
        u.fate = traffic::UpdateFate::Dropped;
        ++totals_.dropped_channel;
        record(u);
    } else if (sol->t_delay) {
        // Sent on creation, or from the start of this step if it was carried
        // out of coverage.
        const double sent = std::max(u.created, last_step_);
        schedule(std::move(u), sent + *sol->t_delay);
    } else {
        cell.held.push_back(std::move(u));
    }
}

void CommLayer::deliver_due(double now) {
    while (!deliveries_.empty() && deliveries_.top().at <= now + 1e-9) {
        const auto& u = ledger_[deliveries_.top().ledger_index];
        deliveries_.pop();
        apply_update(table_, u, config_.beta);
        applied_delay_.push_back(u.delivered_at - u.created);
        ++totals_.applied;
    }
}

void CommLayer::comm_step(traffic::Simulation& sim) {
    const double now = sim.now();
    auto& vehicles = sim.vehicles();
    for (const auto& [idx, link] : sim.exits()) {
        (void)link;
        ++totals_.created;
        if (idx >= holding_.size()) holding_.resize(vehicles.size(), 0);
        if (!holding_[idx]) {
            holding_[idx] = 1;
            holders_.push_back(idx);
        }
    }

    if (config_.mode == CommMode::Ideal) {
        for (auto idx : holders_) {
            for (auto& u : vehicles[idx].pending) {
                u.fate = traffic::UpdateFate::Delivered;
                u.delivered_at = u.created;
                ++totals_.delivered;
                record(u);
                apply_update(table_, u, config_.beta);
                applied_delay_.push_back(0.0);
                ++totals_.applied;
            }
            vehicles[idx].pending.clear();
            holding_[idx] = 0;
        }
        holders_.clear();
        return;
    }

    if (!holders_.empty()) {
        positions_.clear();
        for (auto i : sim.active()) {
            const auto& v = vehicles[i];
            positions_.push_back(net_.position_on_link(v.current_link(), v.position));
        }
        const auto counts = coverage_.counts(positions_);

        for (auto idx : holders_) {
            auto& v = vehicles[idx];
            const bool finished = v.state == traffic::VehicleState::Finished;
            const roadnet::Point at = finished ? net_.node_position(v.destination)
                                               : net_.position_on_link(v.current_link(), v.position);
            const auto rsu = coverage_.connected_rsu(at);
            if (!rsu) {
                if (finished) {
                    for (auto& u : v.pending) {
                        u.fate = traffic::UpdateFate::Dropped;
                        ++totals_.dropped_unconnected;
                        record(u);
                    }
                    v.pending.clear();
                }
                continue;
            }
            auto& cell = cells_[*rsu];
            const int n = counts[*rsu] + (finished ? 1 : 0);
            for (auto& u : v.pending) {
                const auto* sol = cell_solution(cell, n, now);
                handle(cell, sol, std::move(u));
            }
            v.pending.clear();
        }
        std::erase_if(holders_, [&](std::size_t i) {
            if (!vehicles[i].pending.empty()) return false;
            holding_[i] = 0;
            return true;
        });
    }

    // Cells holding packets re-solve on their own refresh schedule.
    for (auto& cell : cells_)
        if (!cell.held.empty()) cell_solution(cell, cell.n, now);

    deliver_due(now);
    last_step_ = now;
}

void CommLayer::finalize(traffic::Simulation& sim) {
    auto& vehicles = sim.vehicles();
    for (auto idx : holders_) {
        for (auto& u : vehicles[idx].pending) {
            u.fate = traffic::UpdateFate::Dropped;
            ++totals_.dropped_horizon;
            record(u);
        }
        vehicles[idx].pending.clear();
        holding_[idx] = 0;
    }
    holders_.clear();
    for (auto& cell : cells_) {
        for (auto& u : cell.held) {
            u.fate = traffic::UpdateFate::Dropped;
            ++totals_.dropped_horizon;
            record(u);
        }
        cell.held.clear();
    }
}

double CommLayer::mean_p_drop() const {
    if (totals_.p_drop_count == 0) return std::numeric_limits<double>::quiet_NaN();
    return totals_.p_drop_sum / static_cast<double>(totals_.p_drop_count);
}

double CommLayer::mean_delivered_delay() const {
    double s = 0.0;
    std::uint64_t n = 0;
    for (const auto& u : ledger_) {
        if (u.fate != traffic::UpdateFate::Delivered) continue;
        s += u.delivered_at - u.created;
        ++n;
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double CommLayer::mean_applied_delay() const {
    if (applied_delay_.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double d : applied_delay_) s += d;
    return s / static_cast<double>(applied_delay_.size());
}

}  // namespace mutualsim::eco
