#pragma once

// Slot-synchronous discrete-event simulator of CSMA/CA back-off with finite
// per-station queues. It is the reference the analytical model is checked
// against: N stations, Poisson arrivals, AIFS + uniform back-off, freeze while
// the medium is busy, binary exponential CW growth up to w_max, drop after
// M + f attempts.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mutualsim/mac_analytic.hpp"

namespace mutualsim::des {

enum class AcMode { SingleAc, FourAc };

struct DesConfig {
    mac::MacParams mac;
    std::uint64_t seed = 1;
    std::optional<double> warmup;      // s; defaults to 10% of the horizon
    double measured_duration = 60.0;   // s
    AcMode ac_mode = AcMode::SingleAc;
    int batches = constants::kDesBatches;
    int min_delivered = constants::kDesMinDelivered;
    bool record_trace = false;
    /// Deterministic arrival times per station (s). When non-empty it replaces
    /// the Poisson process; one vector per station, single-AC mode only.
    std::vector<std::vector<double>> scripted_arrivals;

    double warmup_seconds() const;
    double horizon() const { return warmup_seconds() + measured_duration; }
    void validate() const;
};

struct HalfWidths {
    double delivered_per_station = 0.0;
    double mean_total_delay = 0.0;
    double drop_rate = 0.0;
};

struct DesStats {
    double delivered_per_station = 0.0;  // packets/s
    double mean_total_delay = 0.0;       // s, arrival to end of ACK
    double drop_rate = 0.0;              // (rejected + retry drops) / arrivals
    double empty_fraction = 0.0;         // time share with an empty queue
    double collision_fraction = 0.0;     // collided attempts / attempts
    double mean_queue_length = 0.0;      // packets in system, time average
    double effective_arrival_rate = 0.0; // accepted packets/s per station
    HalfWidths confidence_halfwidth;     // 95%, batch means
    /// Per access category (index as constants::kEdca); single entry in SingleAc.
    std::vector<double> delivered_per_station_by_ac;
};

/// Whole-run counts, warm-up included.
struct DesCounts {
    std::uint64_t generated = 0;
    std::uint64_t delivered = 0;
    std::uint64_t rejected = 0;      // queue full on arrival
    std::uint64_t retry_dropped = 0; // attempt limit reached
    std::uint64_t in_system = 0;     // still queued at the horizon
    std::uint64_t attempts = 0;
    std::uint64_t collided_attempts = 0;
};

enum class PacketFate { Delivered, Rejected, RetryDropped, InSystem };

struct PacketRecord {
    std::uint64_t id = 0;
    int station = 0;
    int ac = 0;
    double birth = 0.0;
    int attempts = 0;
    PacketFate fate = PacketFate::InSystem;
    double delivered_at = 0.0;  // valid when fate == Delivered
};

struct DesRun {
    DesStats stats;
    DesCounts counts;
    std::vector<PacketRecord> trace;  // filled when record_trace is set
};

/// Throws ConfigError when fewer than min_delivered packets are delivered in
/// the measured window.
DesRun simulate_detailed(const DesConfig& config);
DesStats simulate(const DesConfig& config);

/// |Thr_single / 4 - Thr_BE| / Thr_BE for four ACs at `lambda_per_ac` each
/// versus one best-effort queue at 4 * lambda_per_ac.
double single_ac_approximation_check(double lambda_per_ac, const DesConfig& base);

const char* to_string(PacketFate fate);
void write_trace(std::ostream& out, const std::vector<PacketRecord>& trace);

}  // namespace mutualsim::des
