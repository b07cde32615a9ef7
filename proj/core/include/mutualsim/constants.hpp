#pragma once

// Protocol and model constants. Every default used by the MAC model, the
// discrete-event MAC simulator and the co-simulation lives here so that one
// file documents the whole parameter set. All values are overridable through
// MacParams / scenario files.

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace mutualsim::constants {

// IEEE 802.11p OFDM, 10 MHz channel.
inline constexpr double kSlotTime = 13e-6;          // s
inline constexpr double kSifs = 32e-6;              // s
inline constexpr int kAifsSlots = 6;                // AC_BE AIFSN
inline constexpr double kDataRate = 6e6;            // bit/s
inline constexpr double kPropagationDelay = 1e-6;   // s
inline constexpr int kW0 = 16;                      // CWmin + 1
inline constexpr int kAlpha = 2;
inline constexpr int kMStages = 6;                  // log2(1024 / 16)
inline constexpr int kFExtra = 1;                   // retry limit 7 = M + f
inline constexpr int kQueueCapacity = 64;           // packets, buffer + in service

// Frame sizes in bits (MAC payload only, PHY preamble not modelled).
inline constexpr double kPayloadBits = 1000 * 8;
inline constexpr double kAckBits = 14 * 8;
inline constexpr double kRtsBits = 20 * 8;
inline constexpr double kCtsBits = 14 * 8;

// Co-simulation communication defaults.
inline constexpr double kBackgroundRate = 50.0;     // packets/s per vehicle
inline constexpr double kRsuRange = 1000.0;         // m
inline constexpr double kCellRefreshInterval = 1.0; // s
inline constexpr double kCostSmoothing = 0.2;       // beta
inline constexpr double kRouteNoise = 0.05;         // eta

// Fixed-point solver.
inline constexpr double kSolverDamping = 0.5;
inline constexpr double kSolverTolerance = 1e-9;
inline constexpr int kSolverMaxIterations = 10000;
inline constexpr double kUnitRhoThreshold = 1e-9;

// Traffic simulation.
inline constexpr double kStepSeconds = 0.1;
inline constexpr double kMaxAccel = 3.6;            // km/h/s (1 m/s^2)
inline constexpr double kSignalCycle = 60.0;        // s
inline constexpr double kSignalGreenShare = 0.5;
inline constexpr double kSaturationHeadway = 2.0;   // s per lane at stop line
inline constexpr double kNfdSampleInterval = 30.0;  // s
inline constexpr double kFuelRefreshInterval = 1.0; // s

// Discrete-event MAC simulator.
inline constexpr int kDesBatches = 20;
inline constexpr double kDesWarmupShare = 0.1;
inline constexpr int kDesMinDelivered = 1000;

/// EDCA parameter set of one access category.
struct EdcaSet {
    const char* name;
    int aifs_slots;
    int w0;        // CWmin + 1
    int m_stages;  // doublings until CWmax
    int f_extra;   // retries at CWmax; retry limit is m_stages + f_extra
};

// 802.11p defaults (aCWmin = 15, aCWmax = 1023), highest priority first.
inline constexpr std::array<EdcaSet, 4> kEdca = {{
    {"VO", 2, 4, 1, 6},
    {"VI", 3, 8, 1, 6},
    {"BE", 6, 16, 6, 1},
    {"BK", 9, 16, 6, 1},
}};
inline constexpr int kBestEffortIndex = 2;

/// Every default above as (name, value) text, in declaration order.
std::vector<std::pair<std::string, std::string>> defaults_table();

}  // namespace mutualsim::constants
