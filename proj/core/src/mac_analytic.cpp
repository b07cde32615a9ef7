#include "mutualsim/mac_analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mutualsim::mac {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void require(bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("MacParams: ") + what);
}

// Sum over stages i = 0..M+f-1 of p_col^i * (1 + (w_i - 1) / (2 p_idle)).
double stage_mass(double p_col, double p_idle, const MacParams& params) {
    double weight = 1.0;
    double sum = 0.0;
    for (int i = 0; i < params.retry_limit(); ++i) {
        const auto w = static_cast<double>(params.contention_window(i));
        sum += weight * (1.0 + (w - 1.0) / (2.0 * p_idle));
        weight *= p_col;
    }
    return sum;
}

double geometric_sum(double ratio, int terms) {
    double sum = 0.0;
    double weight = 1.0;
    for (int i = 0; i < terms; ++i) {
        sum += weight;
        weight *= ratio;
    }
    return sum;
}

}  // namespace

void MacParams::validate() const {
    require(n_stations >= 1, "n_stations must be >= 1");
    require(arrival_rate > 0.0 && std::isfinite(arrival_rate), "arrival_rate must be > 0");
    require(queue_capacity >= 1, "queue_capacity must be >= 1");
    require(w0 >= 2, "w0 must be >= 2");
    require(alpha >= 2, "alpha must be >= 2");
    require(m_stages >= 0, "m_stages must be >= 0");
    require(f_extra >= 0, "f_extra must be >= 0");
    require(retry_limit() >= 1, "m_stages + f_extra must be >= 1");
    require(retry_limit() <= 64, "m_stages + f_extra must be <= 64");
    require(aifs_slots >= 1, "aifs_slots must be >= 1");
    require(slot_time > 0.0, "slot_time must be > 0");
    require(sifs >= 0.0, "sifs must be >= 0");
    require(data_rate > 0.0, "data_rate must be > 0");
    require(payload_bits >= 0.0 && ack_bits >= 0.0 && rts_bits >= 0.0 && cts_bits >= 0.0,
            "frame sizes must be >= 0");
    require(propagation_delay >= 0.0, "propagation_delay must be >= 0");
    // w_max has to stay exactly representable.
    double w_max = w0;
    for (int i = 0; i < m_stages; ++i) w_max *= alpha;
    require(w_max <= 9.007199254740992e15, "w0 * alpha^M overflows");
}

long long MacParams::contention_window(int stage) const noexcept {
    long long w = w0;
    const int doublings = std::min(stage, m_stages);
    for (int i = 0; i < doublings; ++i) w *= alpha;
    return w;
}

TransmissionTimes transmission_times(const MacParams& params) {
    const double aifs = params.aifs_slots * params.slot_time;
    const double frame = params.payload_bits / params.data_rate;
    const double ack = params.ack_bits / params.data_rate;
    const double pro = params.propagation_delay;
    const double sifs = params.sifs;

    TransmissionTimes t;
    if (params.access_mode == AccessMode::Basic) {
        t.t_s = aifs + frame + pro + sifs + ack + pro;
        t.t_f = aifs + frame + pro;
    } else {
        const double rts = params.rts_bits / params.data_rate;
        const double cts = params.cts_bits / params.data_rate;
        t.t_s = aifs + rts + pro + sifs + cts + pro + sifs + frame + pro + sifs + ack + pro;
        t.t_f = aifs + rts + pro;
    }
    return t;
}

StateDistribution::StateDistribution(double p00, double p_col, double p_idle, double q0,
                                     const MacParams& params)
    : p00_(p00), p_idle_(p_idle), stages_(params.retry_limit()) {
    if (q0 >= 1.0) throw DegenerateInputError("state_probabilities: q0 = 1 (system always empty)");
    if (p_idle <= 0.0) throw DegenerateInputError("state_probabilities: p_idle must be > 0");
    p_empty_ = q0 / (1.0 - q0) * p00;
    windows_.reserve(static_cast<std::size_t>(stages_));
    heads_.reserve(static_cast<std::size_t>(stages_));
    double weight = p00;
    for (int i = 0; i < stages_; ++i) {
        windows_.push_back(params.contention_window(i));
        heads_.push_back(weight);
        weight *= p_col;
    }
}

double StateDistribution::at(int stage, int counter) const {
    if (stage < 0 || stage >= stages_) throw std::out_of_range("StateDistribution: stage");
    const auto i = static_cast<std::size_t>(stage);
    const long long w = windows_[i];
    if (counter < 0 || counter >= w) throw std::out_of_range("StateDistribution: counter");
    if (counter == 0) return heads_[i];
    return static_cast<double>(w - counter) / static_cast<double>(w) * heads_[i] / p_idle_;
}

double StateDistribution::total_mass() const {
    constexpr long long kEnumerationLimit = 1LL << 20;
    double mass = p_empty_;
    for (int i = 0; i < stages_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const long long w = windows_[idx];
        mass += heads_[idx];
        if (w <= kEnumerationLimit) {
            for (long long j = 1; j < w; ++j)
                mass += static_cast<double>(w - j) / static_cast<double>(w) * heads_[idx] / p_idle_;
        } else {
            mass += (static_cast<double>(w) - 1.0) / 2.0 * heads_[idx] / p_idle_;
        }
    }
    return mass;
}

StateDistribution state_probabilities(double p00, double p_col, double p_idle, double q0,
                                      const MacParams& params) {
    return StateDistribution(p00, p_col, p_idle, q0, params);
}

double normalize_p00(double p_col, double p_idle, double q0, const MacParams& params) {
    if (p_idle <= 0.0) throw DegenerateInputError("normalize_p00: p_idle must be > 0");
    if (q0 >= 1.0) throw DegenerateInputError("normalize_p00: q0 = 1 (system always empty)");
    const double total = q0 / (1.0 - q0) + stage_mass(p_col, p_idle, params);
    return 1.0 / total;
}

ChannelProbabilities coupling_equations(double p_trans, const MacParams& params) {
    const double quiet = 1.0 - clamp01(p_trans);
    const int n = params.n_stations;
    ChannelProbabilities c;
    const double others_quiet = std::pow(quiet, n - 1);
    c.p_col = 1.0 - others_quiet;
    c.p_idle_slot = others_quiet * quiet;
    c.p_idle = std::pow(c.p_idle_slot, params.aifs_slots);
    c.p_suc = n * clamp01(p_trans) * others_quiet;
    c.p_fail = clamp01(1.0 - c.p_suc - c.p_idle_slot);
    return c;
}

ServiceTime service_time(double p_col, double p_idle, double p_suc, double p_fail, double t_s,
                         double t_f, const MacParams& params) {
    if (p_idle <= 0.0) throw DegenerateInputError("service_time: p_idle must be > 0");
    const double slot = params.slot_time;
    const double ts = t_s / slot;
    const double tf = t_f / slot;
    const double t_w = p_fail * tf + p_suc * ts + 1.0 / p_idle;
    const double t_tr = p_col * tf + (1.0 - p_col) * ts;

    double sum = 0.0;
    double weight = 1.0;
    for (int i = 0; i < params.retry_limit(); ++i) {
        const auto w = static_cast<double>(params.contention_window(i));
        sum += (t_w * (w - 1.0) / 2.0 + t_tr) * weight;
        weight *= p_col;
    }
    return ServiceTime{t_w * slot, t_tr * slot, slot * sum};
}

Mm1kState mm1k_state(double rho, int queue_capacity) {
    const int k = queue_capacity;
    if (rho <= 0.0) return {1.0, 0.0};
    if (std::abs(rho - 1.0) < constants::kUnitRhoThreshold) {
        const double p = 1.0 / (k + 1.0);
        return {p, p};
    }
    if (rho < 1.0) {
        const double q0 = (1.0 - rho) / (1.0 - std::pow(rho, k + 1));
        return {q0, std::pow(rho, k) * q0};
    }
    // rho > 1: rewrite in r = 1/rho so nothing overflows.
    const double r = 1.0 / rho;
    const double denom = 1.0 - std::pow(r, k + 1);
    return {(1.0 - r) * std::pow(r, k) / denom, (1.0 - r) / denom};
}

namespace {

// Mean number in system of M/M/1/K, summed over the stationary distribution.
double mm1k_mean_in_system(double rho, int k, const Mm1kState& s) {
    if (rho <= 0.0) return 0.0;
    double mean = 0.0;
    if (rho <= 1.0) {
        double pn = s.q0;
        for (int n = 0; n <= k; ++n) {
            mean += n * pn;
            pn *= rho;
        }
    } else {
        const double r = 1.0 / rho;
        double pn = s.p_rej;  // p_K, walking down
        for (int n = k; n >= 0; --n) {
            mean += n * pn;
            pn *= r;
        }
    }
    return mean;
}

}  // namespace

QueueMetrics mm1k_metrics(double rho, int queue_capacity, double mu, double arrival_rate,
                          WaitModel model) {
    if (!(mu > 0.0)) throw DegenerateInputError("mm1k_metrics: mu must be > 0");
    if (rho < 0.0) throw DegenerateInputError("mm1k_metrics: rho must be >= 0");
    const Mm1kState s = mm1k_state(rho, queue_capacity);
    QueueMetrics m;
    m.q0 = s.q0;
    m.p_rej = s.p_rej;
    m.lambda_eff = arrival_rate * (1.0 - s.p_rej);
    if (model == WaitModel::OpenQueue) {
        if (mu <= m.lambda_eff)
            throw DegenerateInputError("mm1k_metrics: mu <= lambda_eff (saturated)");
        m.t_q = 1.0 / (mu - m.lambda_eff);
    } else {
        if (m.lambda_eff <= 0.0) {
            m.t_q = 0.0;
        } else {
            const double in_system = mm1k_mean_in_system(rho, queue_capacity, s);
            m.t_q = std::max(0.0, in_system / m.lambda_eff - 1.0 / mu);
        }
    }
    return m;
}

double drop_probability(double p_rej, double p_last_state, double p_col) {
    return p_rej + (1.0 - p_rej) * p_last_state * p_col;
}

Throughput throughput(const MacSolution& s, const MacParams& params) {
    Throughput t;
    t.raw = params.n_stations * (1.0 - s.q0) * (1.0 - s.p_last_state * s.p_col) * (1.0 - s.p_fail);
    t.per_second = s.t_serv > 0.0 ? t.raw / s.t_serv : 0.0;
    return t;
}

namespace {

constexpr int kDampingWindow = 50;
constexpr double kMinDamping = 1e-4;

struct Iterate {
    double p_trans = 0.0;
    double p_col = 0.0;
    double p_idle = 1.0;
    double q0 = 1.0;
};

// One pass of the coupled equations at a given iterate. Fills everything in
// `out` that follows from (p_col, p_idle, q0) and returns the next iterate.
Iterate evaluate(const Iterate& x, const MacParams& params, const TransmissionTimes& tt,
                 MacSolution& out) {
    const double p00 = normalize_p00(x.p_col, x.p_idle, x.q0, params);
    const double p_trans = p00 * geometric_sum(x.p_col, params.retry_limit());
    const ChannelProbabilities ch = coupling_equations(p_trans, params);
    const ServiceTime st =
        service_time(ch.p_col, ch.p_idle, ch.p_suc, ch.p_fail, tt.t_s, tt.t_f, params);
    const double mu = 1.0 / st.t_serv;
    const double rho = params.arrival_rate / mu;
    const Mm1kState q = mm1k_state(rho, params.queue_capacity);

    out.p00 = p00;
    out.p_trans = p_trans;
    out.p_idle_slot = ch.p_idle_slot;
    out.p_suc = ch.p_suc;
    out.p_fail = ch.p_fail;
    out.t_w = st.t_w;
    out.t_tr_av = st.t_tr_av;
    out.t_serv = st.t_serv;
    out.mu = mu;
    out.rho = rho;
    out.p_rej = q.p_rej;
    return Iterate{p_trans, ch.p_col, ch.p_idle, q.q0};
}

}  // namespace

MacSolution solve(const MacParams& params, const SolverOptions& options) {
    params.validate();
    const TransmissionTimes tt = transmission_times(params);

    MacSolution sol;
    sol.t_s = tt.t_s;
    sol.t_f = tt.t_f;

    // Start from a collision-free channel; q0 follows from rho at p_col = 0.
    Iterate x;
    {
        const ServiceTime st = service_time(0.0, 1.0, 0.0, 0.0, tt.t_s, tt.t_f, params);
        x.q0 = mm1k_state(params.arrival_rate * st.t_serv, params.queue_capacity).q0;
        if (x.q0 >= 1.0) x.q0 = std::nextafter(1.0, 0.0);
    }

    // The q0 update is very steep around rho = 1 and a fixed damping factor can
    // lock into a 2-cycle there. The factor is halved whenever the residual
    // has not at least halved over a window of iterations.
    double d = options.damping;
    bool converged = false;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    double window_start = residual;
    while (iterations < options.max_iterations) {
        ++iterations;
        const Iterate next = evaluate(x, params, tt, sol);
        residual = std::max({std::abs(next.p_trans - x.p_trans), std::abs(next.p_col - x.p_col),
                             std::abs(next.p_idle - x.p_idle), std::abs(next.q0 - x.q0)});
        if (iterations % kDampingWindow == 0) {
            if (residual > 0.5 * window_start) d = std::max(d * 0.5, kMinDamping);
            window_start = residual;
        }
        x.p_trans = d * next.p_trans + (1.0 - d) * x.p_trans;
        x.p_col = d * next.p_col + (1.0 - d) * x.p_col;
        x.p_idle = d * next.p_idle + (1.0 - d) * x.p_idle;
        x.q0 = std::min(d * next.q0 + (1.0 - d) * x.q0, std::nextafter(1.0, 0.0));
        if (residual < options.tolerance) {
            converged = true;
            break;
        }
    }

    // Report the fixed point itself: the chain is normalised with exactly the
    // (p_col, p_idle, q0) that are returned.
    evaluate(x, params, tt, sol);
    sol.p_col = x.p_col;
    sol.p_idle = x.p_idle;
    sol.q0 = x.q0;
    sol.iterations = iterations;
    sol.residual = residual;
    sol.final_damping = d;

    const StateDistribution dist(sol.p00, sol.p_col, sol.p_idle, sol.q0, params);
    sol.p_last_state = dist.last_stage_head();
    sol.p_drop = drop_probability(sol.p_rej, sol.p_last_state, sol.p_col);
    sol.lambda_eff = params.arrival_rate * (1.0 - sol.p_rej);
    try {
        const QueueMetrics qm = mm1k_metrics(sol.rho, params.queue_capacity, sol.mu,
                                             params.arrival_rate, params.wait_model);
        sol.t_q = qm.t_q;
        sol.t_delay = sol.t_serv + qm.t_q;
    } catch (const DegenerateInputError&) {
        sol.t_q.reset();
        sol.t_delay.reset();
    }
    const Throughput thr = throughput(sol, params);
    sol.throughput_raw = thr.raw;
    sol.throughput = thr.per_second;

    if (!converged) {
        throw NonConvergenceError("mac::solve: no convergence after " +
                                      std::to_string(iterations) + " iterations (residual " +
                                      std::to_string(residual) + ")",
                                  sol);
    }
    return sol;
}

std::string to_string(AccessMode mode) { return mode == AccessMode::Basic ? "basic" : "rtscts"; }

std::string to_string(WaitModel model) { return model == WaitModel::OpenQueue ? "open" : "finite"; }

AccessMode parse_access_mode(const std::string& text) {
    if (text == "basic" || text == "Basic") return AccessMode::Basic;
    if (text == "rtscts" || text == "RtsCts" || text == "rts") return AccessMode::RtsCts;
    throw ConfigError("unknown access mode '" + text + "' (expected basic|rtscts)");
}

WaitModel parse_wait_model(const std::string& text) {
    if (text == "open") return WaitModel::OpenQueue;
    if (text == "finite") return WaitModel::FiniteQueue;
    throw ConfigError("unknown wait model '" + text + "' (expected open|finite)");
}

}  // namespace mutualsim::mac
