#pragma once

// Analytical single-access-category 802.11p MAC model: a two-dimensional
// back-off Markov chain coupled with an M/M/1/K queue, solved as a damped
// fixed point over (p_trans, p_col, p_idle, q0).
//
// Durations are carried in slot units inside the service-time computation;
// the leading slot factor of the service-time sum converts back to seconds.

#include <optional>
#include <string>
#include <vector>

#include "mutualsim/constants.hpp"
#include "mutualsim/error.hpp"

namespace mutualsim::mac {

enum class AccessMode { Basic, RtsCts };

/// Queueing delay formula. `OpenQueue` is 1 / (mu - lambda_eff); `FiniteQueue` is
/// the exact M/M/1/K mean wait in queue (Little's law on the finite queue).
enum class WaitModel { OpenQueue, FiniteQueue };

struct MacParams {
    int n_stations = 10;
    double arrival_rate = constants::kBackgroundRate;  // packets/s per station
    int queue_capacity = constants::kQueueCapacity;    // system capacity K
    int w0 = constants::kW0;
    int alpha = constants::kAlpha;
    int m_stages = constants::kMStages;
    int f_extra = constants::kFExtra;
    int aifs_slots = constants::kAifsSlots;
    double slot_time = constants::kSlotTime;
    double sifs = constants::kSifs;
    double data_rate = constants::kDataRate;
    double payload_bits = constants::kPayloadBits;
    double ack_bits = constants::kAckBits;
    double rts_bits = constants::kRtsBits;
    double cts_bits = constants::kCtsBits;
    double propagation_delay = constants::kPropagationDelay;
    AccessMode access_mode = AccessMode::Basic;
    WaitModel wait_model = WaitModel::OpenQueue;

    /// Throws ValidationError naming the first violated invariant.
    void validate() const;

    /// Number of transmission attempts before a packet is dropped (M + f).
    int retry_limit() const noexcept { return m_stages + f_extra; }

    /// w_i = w0 * alpha^min(i, M).
    long long contention_window(int stage) const noexcept;
};

struct TransmissionTimes {
    double t_s = 0.0;  // s, successful transmission
    double t_f = 0.0;  // s, failed (collided) transmission
};

TransmissionTimes transmission_times(const MacParams& params);

/// Markov-chain state probabilities, all expressed through P(0,0).
class StateDistribution {
public:
    StateDistribution(double p00, double p_col, double p_idle, double q0, const MacParams& params);

    double empty() const noexcept { return p_empty_; }           // P(0)
    double p00() const noexcept { return p00_; }
    /// P(i, j); j = 0 is the transmit state of stage i.
    double at(int stage, int counter) const;
    /// P(M+f-1, 0), the last-attempt transmit state.
    double last_stage_head() const { return at(stages_ - 1, 0); }
    int stages() const noexcept { return stages_; }
    long long window(int stage) const { return windows_.at(static_cast<std::size_t>(stage)); }

    /// Sum of every state probability by explicit enumeration of all (i, j).
    double total_mass() const;

private:
    double p00_;
    double p_idle_;
    double p_empty_;
    int stages_;
    std::vector<long long> windows_;
    std::vector<double> heads_;  // P(i, 0)
};

StateDistribution state_probabilities(double p00, double p_col, double p_idle, double q0,
                                      const MacParams& params);

/// P(0,0) from the normalisation condition, by direct summation over stages.
double normalize_p00(double p_col, double p_idle, double q0, const MacParams& params);

struct ChannelProbabilities {
    double p_col = 0.0;
    double p_idle_slot = 1.0;
    double p_idle = 1.0;
    double p_suc = 0.0;
    double p_fail = 0.0;
};

ChannelProbabilities coupling_equations(double p_trans, const MacParams& params);

struct ServiceTime {
    double t_w = 0.0;      // s, mean time per back-off counter decrement
    double t_tr_av = 0.0;  // s, mean frame transmission time
    double t_serv = 0.0;   // s
};

ServiceTime service_time(double p_col, double p_idle, double p_suc, double p_fail,
                         double t_s, double t_f, const MacParams& params);

struct QueueMetrics {
    double q0 = 1.0;
    double p_rej = 0.0;
    double lambda_eff = 0.0;
    double t_q = 0.0;
};

/// Empty probability and blocking probability of an M/M/1/K queue with
/// system capacity K. Total for rho >= 0.
struct Mm1kState {
    double q0 = 1.0;
    double p_rej = 0.0;
};
Mm1kState mm1k_state(double rho, int queue_capacity);

/// Full queue metrics. Throws DegenerateInputError when mu <= lambda_eff
/// under the OpenQueue wait model.
QueueMetrics mm1k_metrics(double rho, int queue_capacity, double mu, double arrival_rate,
                          WaitModel model = WaitModel::OpenQueue);

double drop_probability(double p_rej, double p_last_state, double p_col);

struct MacSolution {
    double p_trans = 0.0;
    double p_col = 0.0;
    double p_idle_slot = 1.0;
    double p_idle = 1.0;
    double p_suc = 0.0;
    double p_fail = 0.0;
    double q0 = 1.0;
    double p00 = 0.0;
    double p_last_state = 0.0;  // P(M+f-1, 0)
    double t_s = 0.0;
    double t_f = 0.0;
    double t_w = 0.0;
    double t_tr_av = 0.0;
    double t_serv = 0.0;
    double mu = 0.0;
    double rho = 0.0;
    double p_rej = 0.0;
    double p_drop = 0.0;
    std::optional<double> t_q;      // absent when saturated
    std::optional<double> t_delay;  // t_serv + t_q
    double lambda_eff = 0.0;
    double throughput_raw = 0.0;    // N (1-q0)(1-P_last p_col)(1-p_fail), dimensionless
    double throughput = 0.0;        // packets/s over the whole cell
    int iterations = 0;
    double residual = 0.0;
    double final_damping = 0.0;

    bool saturated() const noexcept { return !t_q.has_value(); }
    double per_station_throughput(int n_stations) const noexcept {
        return n_stations > 0 ? throughput / n_stations : 0.0;
    }
};

struct Throughput {
    double raw = 0.0;         // as the product of probabilities
    double per_second = 0.0;  // raw / t_serv
};

Throughput throughput(const MacSolution& solution, const MacParams& params);

struct SolverOptions {
    double damping = constants::kSolverDamping;  // initial; reduced on stalls
    double tolerance = constants::kSolverTolerance;
    int max_iterations = constants::kSolverMaxIterations;
};

/// Carries the last iterate when the fixed point fails to converge.
class NonConvergenceError : public SolverError {
public:
    NonConvergenceError(const std::string& what, MacSolution last)
        : SolverError(what), last_(std::move(last)) {}
    const MacSolution& last_iterate() const noexcept { return last_; }
    double residual() const noexcept { return last_.residual; }

private:
    MacSolution last_;
};

/// Pure and deterministic: identical params give a bit-identical solution.
MacSolution solve(const MacParams& params, const SolverOptions& options = {});

std::string to_string(AccessMode mode);
std::string to_string(WaitModel model);
AccessMode parse_access_mode(const std::string& text);
WaitModel parse_wait_model(const std::string& text);

}  // namespace mutualsim::mac
