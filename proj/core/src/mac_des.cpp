#include "mutualsim/mac_des.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <random>

namespace mutualsim::des {

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

struct Packet {
    std::uint64_t id;
    double birth;
    int attempts;
    std::size_t trace_index;
};

struct Contender {
    int station = 0;
    int ac = 0;
    int aifs = 0;
    int w0 = 0;
    int alpha = 2;
    int m_stages = 0;
    int retry_limit = 1;
    double lambda = 0.0;

    std::deque<Packet> queue;
    int stage = 0;
    long long counter = 0;

    double next_arrival = kNever;
    std::size_t script_pos = 0;
    const std::vector<double>* script = nullptr;

    double last_change = 0.0;  // time of last queue-size change

    long long window(int s) const {
        long long w = w0;
        for (int i = 0; i < std::min(s, m_stages); ++i) w *= alpha;
        return w;
    }
    bool active() const { return !queue.empty(); }
};

struct Batches {
    explicit Batches(int n) : delivered(n), delay_sum(n), drops(n) {}
    std::vector<double> delivered;
    std::vector<double> delay_sum;
    std::vector<double> drops;
};

double student_t975(int df) {
    static constexpr double table[] = {0,     12.706, 4.303, 3.182, 2.776, 2.571, 2.447,
                                       2.365, 2.306,  2.262, 2.228, 2.201, 2.179, 2.160,
                                       2.145, 2.131,  2.120, 2.110, 2.101, 2.093, 2.086,
                                       2.080, 2.074,  2.069, 2.064, 2.060, 2.056, 2.052,
                                       2.048, 2.045,  2.042};
    if (df <= 0) return 0.0;
    if (df <= 30) return table[df];
    return 1.96;
}

double halfwidth(const std::vector<double>& xs) {
    const auto n = static_cast<int>(xs.size());
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    return student_t975(n - 1) * sd / std::sqrt(static_cast<double>(n));
}

class Simulator {
public:
    explicit Simulator(const DesConfig& cfg)
        : cfg_(cfg),
          rng_(cfg.seed),
          warmup_(cfg.warmup_seconds()),
          horizon_(cfg.horizon()),
          batch_len_(cfg.measured_duration / cfg.batches),
          batches_(cfg.batches) {
        const auto& p = cfg.mac;
        const mac::TransmissionTimes tt = mac::transmission_times(p);
        const double aifs_time = p.aifs_slots * p.slot_time;
        // The medium is busy for the transmission itself; AIFS is simulated
        // explicitly as idle slots afterwards.
        success_busy_ = tt.t_s - aifs_time;
        collision_busy_ = tt.t_f - aifs_time;
        slot_ = p.slot_time;

        const int n = p.n_stations;
        if (cfg.ac_mode == AcMode::SingleAc) {
            for (int s = 0; s < n; ++s) {
                Contender c;
                c.station = s;
                c.ac = constants::kBestEffortIndex;
                c.aifs = p.aifs_slots;
                c.w0 = p.w0;
                c.alpha = p.alpha;
                c.m_stages = p.m_stages;
                c.retry_limit = p.retry_limit();
                c.lambda = p.arrival_rate;
                if (!cfg.scripted_arrivals.empty())
                    c.script = &cfg.scripted_arrivals[static_cast<std::size_t>(s)];
                contenders_.push_back(std::move(c));
            }
            n_classes_ = 1;
        } else {
            for (int s = 0; s < n; ++s) {
                for (int a = 0; a < static_cast<int>(constants::kEdca.size()); ++a) {
                    const auto& e = constants::kEdca[static_cast<std::size_t>(a)];
                    Contender c;
                    c.station = s;
                    c.ac = a;
                    c.aifs = e.aifs_slots;
                    c.w0 = e.w0;
                    c.alpha = p.alpha;
                    c.m_stages = e.m_stages;
                    c.retry_limit = e.m_stages + e.f_extra;
                    c.lambda = p.arrival_rate;
                    contenders_.push_back(std::move(c));
                }
            }
            n_classes_ = static_cast<int>(constants::kEdca.size());
        }
        delivered_by_class_.assign(static_cast<std::size_t>(n_classes_), 0.0);
        empty_time_.assign(contenders_.size(), 0.0);
        queue_area_.assign(contenders_.size(), 0.0);
        for (auto& c : contenders_) schedule_arrival(c, 0.0);
    }

    DesRun run() {
        double now = 0.0;
        int idle_slots = 0;
        while (now < horizon_) {
            process_arrivals(now);

            long long next_tx = std::numeric_limits<long long>::max();
            for (const auto& c : contenders_) {
                if (!c.active()) continue;
                next_tx = std::min(next_tx, std::max<long long>(idle_slots, c.aifs) + c.counter);
            }
            const double ta = next_arrival_time();
            long long arrival_slot = std::numeric_limits<long long>::max();
            if (ta < horizon_) {
                arrival_slot =
                    idle_slots + static_cast<long long>(std::ceil((ta - now) / slot_ - 1e-9));
                arrival_slot = std::max<long long>(arrival_slot, idle_slots + 1);
            }
            const long long target = std::min(next_tx, arrival_slot);
            if (target == std::numeric_limits<long long>::max()) break;  // nothing left

            if (target > idle_slots) {
                const long long k = target - idle_slots;
                for (auto& c : contenders_) {
                    if (!c.active()) continue;
                    const long long from = std::max<long long>(idle_slots, c.aifs);
                    c.counter -= std::max<long long>(0, target - from);
                }
                now += static_cast<double>(k) * slot_;
                idle_slots = static_cast<int>(std::min<long long>(target, 1 << 30));
                continue;
            }

            now = transmit(now, idle_slots);
            idle_slots = 0;
        }
        return finish();
    }

private:
    void schedule_arrival(Contender& c, double after) {
        if (c.script) {
            c.next_arrival = c.script_pos < c.script->size() ? (*c.script)[c.script_pos] : kNever;
            ++c.script_pos;
        } else {
            std::exponential_distribution<double> gap(c.lambda);
            c.next_arrival = after + gap(rng_);
        }
        if (c.next_arrival >= horizon_) c.next_arrival = kNever;
    }

    double next_arrival_time() const {
        double t = kNever;
        for (const auto& c : contenders_) t = std::min(t, c.next_arrival);
        return t;
    }

    bool in_window(double t) const { return t >= warmup_ && t < horizon_; }

    int batch_of(double t) const {
        const int b = static_cast<int>((t - warmup_) / batch_len_);
        return std::clamp(b, 0, cfg_.batches - 1);
    }

    double overlap(double a, double b) const {
        return std::max(0.0, std::min(b, horizon_) - std::max(a, warmup_));
    }

    // Integrates queue length and empty time of `c` up to `t`.
    void account(std::size_t idx, double t) {
        auto& c = contenders_[idx];
        const double span = overlap(c.last_change, t);
        queue_area_[idx] += span * static_cast<double>(c.queue.size());
        if (c.queue.empty()) empty_time_[idx] += span;
        c.last_change = t;
    }

    // Arrivals up to `now`, or strictly before it when `before` is set.
    void process_arrivals(double now, bool before = false) {
        while (true) {
            std::size_t best = contenders_.size();
            double t = kNever;
            for (std::size_t i = 0; i < contenders_.size(); ++i) {
                if (contenders_[i].next_arrival < t) {
                    t = contenders_[i].next_arrival;
                    best = i;
                }
            }
            if (best == contenders_.size() || t > now || (before && t >= now)) return;
            arrive(best, t);
        }
    }

    void arrive(std::size_t idx, double t) {
        auto& c = contenders_[idx];
        ++counts_.generated;
        const std::uint64_t id = next_id_++;
        std::size_t trace_index = 0;
        if (cfg_.record_trace) {
            trace_index = trace_.size();
            trace_.push_back(PacketRecord{id, c.station, c.ac, t, 0, PacketFate::InSystem, 0.0});
        }
        if (in_window(t)) ++generated_w_;
        if (static_cast<int>(c.queue.size()) >= cfg_.mac.queue_capacity) {
            ++counts_.rejected;
            if (in_window(t)) {
                ++drops_w_;
                batches_.drops[static_cast<std::size_t>(batch_of(t))] += 1.0;
            }
            if (cfg_.record_trace) trace_[trace_index].fate = PacketFate::Rejected;
        } else {
            account(idx, t);
            c.queue.push_back(Packet{id, t, 0, trace_index});
            if (in_window(t)) ++accepted_w_;
            if (c.queue.size() == 1) start_head(c);
        }
        schedule_arrival(c, t);
    }

    void start_head(Contender& c) {
        c.stage = 0;
        c.counter = draw_counter(c);
    }

    long long draw_counter(const Contender& c) {
        std::uniform_int_distribution<long long> u(0, c.window(c.stage) - 1);
        return u(rng_);
    }

    void remove_head(std::size_t idx, double t) {
        account(idx, t);
        auto& c = contenders_[idx];
        c.queue.pop_front();
        if (!c.queue.empty()) start_head(c);
    }

    // Failed attempt (external or internal collision): next stage or drop.
    void fail_head(std::size_t idx, double t) {
        auto& c = contenders_[idx];
        ++c.stage;
        if (c.stage >= c.retry_limit) {
            ++counts_.retry_dropped;
            const Packet& pkt = c.queue.front();
            if (cfg_.record_trace) {
                trace_[pkt.trace_index].fate = PacketFate::RetryDropped;
                trace_[pkt.trace_index].attempts = pkt.attempts;
            }
            if (in_window(t)) {
                ++drops_w_;
                batches_.drops[static_cast<std::size_t>(batch_of(t))] += 1.0;
                sojourn_sum_w_ += t - pkt.birth;
                ++sojourn_count_w_;
            }
            remove_head(idx, t);
        } else {
            c.counter = draw_counter(c);
        }
    }

    double transmit(double now, int idle_slots) {
        // Contenders whose counter expires in this slot, grouped by station.
        std::vector<std::size_t> winners;
        std::vector<std::size_t> internal_losers;
        int current_station = -1;
        for (std::size_t i = 0; i < contenders_.size(); ++i) {
            const auto& c = contenders_[i];
            if (!c.active() || idle_slots < c.aifs || c.counter != 0) continue;
            if (c.station != current_station) {
                // Contenders of a station are stored highest priority first.
                winners.push_back(i);
                current_station = c.station;
            } else {
                internal_losers.push_back(i);
            }
        }

        const bool success = winners.size() == 1;
        const double end = now + (success ? success_busy_ : collision_busy_);
        // Packets arriving while the medium is busy see the queue as it is
        // before this frame leaves.
        process_arrivals(std::min(end, horizon_), true);
        counts_.attempts += winners.size();
        if (in_window(now)) attempts_w_ += static_cast<double>(winners.size());

        for (std::size_t idx : winners) {
            auto& c = contenders_[idx];
            Packet& pkt = c.queue.front();
            ++pkt.attempts;
            if (success) {
                ++counts_.delivered;
                if (cfg_.record_trace) {
                    auto& rec = trace_[pkt.trace_index];
                    rec.fate = PacketFate::Delivered;
                    rec.attempts = pkt.attempts;
                    rec.delivered_at = end;
                }
                if (in_window(end)) {
                    const double delay = end - pkt.birth;
                    ++delivered_w_;
                    delay_sum_w_ += delay;
                    sojourn_sum_w_ += delay;
                    ++sojourn_count_w_;
                    delivered_by_class_[static_cast<std::size_t>(n_classes_ == 1 ? 0 : c.ac)] += 1.0;
                    const auto b = static_cast<std::size_t>(batch_of(end));
                    batches_.delivered[b] += 1.0;
                    batches_.delay_sum[b] += delay;
                }
                remove_head(idx, end);
            } else {
                ++counts_.collided_attempts;
                if (in_window(now)) collided_w_ += 1.0;
                fail_head(idx, end);
            }
        }
        for (std::size_t idx : internal_losers) {
            ++contenders_[idx].queue.front().attempts;
            fail_head(idx, now);
        }
        return end;
    }

    DesRun finish() {
        for (std::size_t i = 0; i < contenders_.size(); ++i) {
            account(i, horizon_);
            counts_.in_system += contenders_[i].queue.size();
            if (cfg_.record_trace) {
                for (const auto& pkt : contenders_[i].queue)
                    trace_[pkt.trace_index].attempts = pkt.attempts;
            }
        }

        if (delivered_w_ < static_cast<double>(cfg_.min_delivered)) {
            throw ConfigError("des: only " + std::to_string(static_cast<long long>(delivered_w_)) +
                              " packets delivered in the measured window (need " +
                              std::to_string(cfg_.min_delivered) + "); lengthen the horizon");
        }

        const double n = cfg_.mac.n_stations;
        const double dur = cfg_.measured_duration;
        const double units = static_cast<double>(contenders_.size());
        DesRun out;
        DesStats& s = out.stats;
        s.delivered_per_station = delivered_w_ / (n * dur);
        s.mean_total_delay = delivered_w_ > 0 ? delay_sum_w_ / delivered_w_ : 0.0;
        s.drop_rate = (delivered_w_ + drops_w_) > 0 ? drops_w_ / (delivered_w_ + drops_w_) : 0.0;
        double empty = 0.0;
        double area = 0.0;
        for (std::size_t i = 0; i < contenders_.size(); ++i) {
            empty += empty_time_[i];
            area += queue_area_[i];
        }
        s.empty_fraction = empty / (units * dur);
        s.mean_queue_length = area / (units * dur);
        s.effective_arrival_rate = accepted_w_ / (units * dur);
        s.collision_fraction = attempts_w_ > 0 ? collided_w_ / attempts_w_ : 0.0;
        for (double d : delivered_by_class_) s.delivered_per_station_by_ac.push_back(d / (n * dur));

        std::vector<double> thr;
        std::vector<double> delay;
        std::vector<double> drop;
        for (int b = 0; b < cfg_.batches; ++b) {
            const auto i = static_cast<std::size_t>(b);
            thr.push_back(batches_.delivered[i] / (n * batch_len_));
            if (batches_.delivered[i] > 0) delay.push_back(batches_.delay_sum[i] / batches_.delivered[i]);
            const double total = batches_.delivered[i] + batches_.drops[i];
            drop.push_back(total > 0 ? batches_.drops[i] / total : 0.0);
        }
        s.confidence_halfwidth = {halfwidth(thr), halfwidth(delay), halfwidth(drop)};

        out.counts = counts_;
        out.trace = std::move(trace_);
        return out;
    }

    const DesConfig& cfg_;
    std::mt19937_64 rng_;
    double warmup_;
    double horizon_;
    double batch_len_;
    double slot_ = 0.0;
    double success_busy_ = 0.0;
    double collision_busy_ = 0.0;
    int n_classes_ = 1;

    std::vector<Contender> contenders_;
    std::vector<double> empty_time_;
    std::vector<double> queue_area_;
    std::vector<double> delivered_by_class_;
    Batches batches_;

    DesCounts counts_;
    std::vector<PacketRecord> trace_;
    std::uint64_t next_id_ = 0;

    double generated_w_ = 0.0;
    double accepted_w_ = 0.0;
    double delivered_w_ = 0.0;
    double drops_w_ = 0.0;
    double delay_sum_w_ = 0.0;
    double sojourn_sum_w_ = 0.0;
    double sojourn_count_w_ = 0.0;
    double attempts_w_ = 0.0;
    double collided_w_ = 0.0;
};

}  // namespace

double DesConfig::warmup_seconds() const {
    // 10% of the horizon: w = 0.1 (w + d)  =>  w = d / 9.
    return warmup.value_or(measured_duration * constants::kDesWarmupShare /
                           (1.0 - constants::kDesWarmupShare));
}

void DesConfig::validate() const {
    mac.validate();
    if (!(measured_duration > 0.0)) throw ConfigError("des: measured_duration must be > 0");
    if (warmup_seconds() < 0.0) throw ConfigError("des: warmup must be >= 0");
    if (batches < 2) throw ConfigError("des: at least 2 batches required");
    if (!scripted_arrivals.empty()) {
        if (ac_mode != AcMode::SingleAc)
            throw ConfigError("des: scripted arrivals require single-AC mode");
        if (static_cast<int>(scripted_arrivals.size()) != mac.n_stations)
            throw ConfigError("des: one scripted arrival list per station required");
        for (const auto& list : scripted_arrivals)
            if (!std::is_sorted(list.begin(), list.end()))
                throw ConfigError("des: scripted arrivals must be sorted");
    }
}

DesRun simulate_detailed(const DesConfig& config) {
    config.validate();
    Simulator sim(config);
    return sim.run();
}

DesStats simulate(const DesConfig& config) { return simulate_detailed(config).stats; }

double single_ac_approximation_check(double lambda_per_ac, const DesConfig& base) {
    if (!(lambda_per_ac > 0.0))
        throw ConfigError("single_ac_approximation_check: lambda must be > 0");

    DesConfig four = base;
    four.ac_mode = AcMode::FourAc;
    four.mac.arrival_rate = lambda_per_ac;
    four.scripted_arrivals.clear();
    const DesStats multi = simulate(four);

    DesConfig single = base;
    single.ac_mode = AcMode::SingleAc;
    single.mac.arrival_rate = 4.0 * lambda_per_ac;
    single.scripted_arrivals.clear();
    const DesStats one = simulate(single);

    const double thr_be =
        multi.delivered_per_station_by_ac[static_cast<std::size_t>(constants::kBestEffortIndex)];
    if (!(thr_be > 0.0))
        throw SimulationError("single_ac_approximation_check: best-effort throughput is zero");
    return std::abs(one.delivered_per_station / 4.0 - thr_be) / thr_be;
}

const char* to_string(PacketFate fate) {
    switch (fate) {
        case PacketFate::Delivered: return "delivered";
        case PacketFate::Rejected: return "rejected";
        case PacketFate::RetryDropped: return "retry_dropped";
        case PacketFate::InSystem: return "in_system";
    }
    return "unknown";
}

void write_trace(std::ostream& out, const std::vector<PacketRecord>& trace) {
    out << "#schema des_trace v1\n";
    out << "packet_id,station,ac,birth,attempts,fate,delivered_at\n";
    for (const auto& r : trace) {
        out << r.id << ',' << r.station << ',' << r.ac << ',' << r.birth << ',' << r.attempts << ','
            << to_string(r.fate) << ',';
        if (r.fate == PacketFate::Delivered) out << r.delivered_at;
        out << '\n';
    }
}

}  // namespace mutualsim::des
