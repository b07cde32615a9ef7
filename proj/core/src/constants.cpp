#include "mutualsim/constants.hpp"

#include <charconv>

namespace mutualsim::constants {

namespace {

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> defaults_table() {
    std::vector<std::pair<std::string, std::string>> t = {
        {"slot_time", num(kSlotTime)},
        {"sifs", num(kSifs)},
        {"aifs_slots", num(kAifsSlots)},
        {"data_rate", num(kDataRate)},
        {"propagation_delay", num(kPropagationDelay)},
        {"w0", num(kW0)},
        {"alpha", num(kAlpha)},
        {"m_stages", num(kMStages)},
        {"f_extra", num(kFExtra)},
        {"queue_capacity", num(kQueueCapacity)},
        {"payload_bits", num(kPayloadBits)},
        {"ack_bits", num(kAckBits)},
        {"rts_bits", num(kRtsBits)},
        {"cts_bits", num(kCtsBits)},
        {"background_rate", num(kBackgroundRate)},
        {"rsu_range", num(kRsuRange)},
        {"cell_refresh_interval", num(kCellRefreshInterval)},
        {"cost_smoothing", num(kCostSmoothing)},
        {"route_noise", num(kRouteNoise)},
        {"solver_damping", num(kSolverDamping)},
        {"solver_tolerance", num(kSolverTolerance)},
        {"solver_max_iterations", num(kSolverMaxIterations)},
        {"unit_rho_threshold", num(kUnitRhoThreshold)},
        {"step_seconds", num(kStepSeconds)},
        {"max_accel", num(kMaxAccel)},
        {"signal_cycle", num(kSignalCycle)},
        {"signal_green_share", num(kSignalGreenShare)},
        {"saturation_headway", num(kSaturationHeadway)},
        {"nfd_sample_interval", num(kNfdSampleInterval)},
        {"fuel_refresh_interval", num(kFuelRefreshInterval)},
        {"des_batches", num(kDesBatches)},
        {"des_warmup_share", num(kDesWarmupShare)},
        {"des_min_delivered", num(kDesMinDelivered)},
    };
    for (const auto& ac : kEdca) {
        const std::string p = std::string("edca.") + ac.name + ".";
        t.emplace_back(p + "aifs_slots", num(ac.aifs_slots));
        t.emplace_back(p + "w0", num(ac.w0));
        t.emplace_back(p + "m_stages", num(ac.m_stages));
        t.emplace_back(p + "f_extra", num(ac.f_extra));
    }
    return t;
}

}  // namespace mutualsim::constants
