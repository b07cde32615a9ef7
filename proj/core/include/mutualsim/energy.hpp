#pragma once

// VT-Micro instantaneous fuel and emission rates: the exponential of a
// polynomial in speed and acceleration, with separate coefficient matrices
// for accelerating (a >= 0) and decelerating (a < 0) regimes.

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mutualsim::energy {

enum class Measure { Fuel = 0, Co, Hc, Nox };
inline constexpr std::size_t kMeasureCount = 4;

const char* to_string(Measure m);

/// Square coefficient matrix, row = speed power, column = acceleration power.
struct CoefficientMatrix {
    int size = 0;
    std::vector<double> values;  // row-major, size * size

    double at(int i, int j) const { return values[static_cast<std::size_t>(i * size + j)]; }
};

struct MeasureCoefficients {
    std::string units;
    CoefficientMatrix accelerating;  // a >= 0
    CoefficientMatrix decelerating;  // a < 0
};

class VtMicroCoefficients {
public:
    /// Index origin of the polynomial powers (0 or 1).
    VtMicroCoefficients(int index_origin, std::array<std::optional<MeasureCoefficients>, kMeasureCount> measures);

    int index_origin() const noexcept { return origin_; }
    bool has(Measure m) const noexcept { return measures_[static_cast<std::size_t>(m)].has_value(); }
    const MeasureCoefficients& measure(Measure m) const;

    /// Rate in the measure's units; speed km/h, acceleration km/h/s.
    double rate(Measure m, double speed, double accel) const;

private:
    int origin_;
    std::array<std::optional<MeasureCoefficients>, kMeasureCount> measures_;
};

/// Calibration envelope of the shipped coefficient set.
inline constexpr double kEnvelopeMaxSpeed = 120.0;  // km/h
inline constexpr double kEnvelopeMaxAccel = 10.0;   // km/h/s
bool within_envelope(double speed, double accel) noexcept;

/// Free function form of VtMicroCoefficients::rate.
double vt_micro_rate(double speed, double accel, const VtMicroCoefficients& coeffs,
                     Measure measure = Measure::Fuel);

/// Throws ParseError (with line) or ValidationError (shape, missing fuel).
VtMicroCoefficients load_coefficients(std::istream& in);
VtMicroCoefficients load_coefficients(const std::string& path);

/// Path of the shipped light-duty set: $MUTUALSIM_DATA_DIR, then the source
/// tree, then the install prefix.
std::string default_coefficients_path();
const VtMicroCoefficients& default_coefficients();

/// Fuel of one traversal at constant free-flow speed.
double free_flow_fuel(double length_m, double speed_kmh, const VtMicroCoefficients& coeffs);

struct LinkEmissions {
    double fuel = 0.0;  // L
    double co = 0.0;    // mg
    double hc = 0.0;
    double nox = 0.0;
};

/// Per-vehicle accumulator. Rates are re-evaluated once per refresh interval
/// (counted in kinematic steps) and held in between.
class FuelAccumulator {
public:
    explicit FuelAccumulator(int steps_per_refresh = 10) : steps_per_refresh_(steps_per_refresh) {}

    void accumulate(double speed, double accel, double dt, const VtMicroCoefficients& coeffs);

    const LinkEmissions& link() const noexcept { return link_; }
    const LinkEmissions& trip() const noexcept { return trip_; }
    int out_of_envelope() const noexcept { return out_of_envelope_; }

    /// Returns the link totals and resets them.
    LinkEmissions finalize_link();

private:
    int steps_per_refresh_;
    int step_ = 0;
    std::array<double, kMeasureCount> rate_{};
    LinkEmissions link_;
    LinkEmissions trip_;
    int out_of_envelope_ = 0;
};

struct RouteCost {
    std::vector<double> per_link;
    double total = 0.0;
};

RouteCost route_cost(std::vector<double> per_link);

}  // namespace mutualsim::energy
