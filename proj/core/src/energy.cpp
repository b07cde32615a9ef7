#include "mutualsim/energy.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include "mutualsim/error.hpp"
#include "mutualsim/kv_record.hpp"

namespace mutualsim::energy {

const char* to_string(Measure m) {
    switch (m) {
        case Measure::Fuel: return "fuel";
        case Measure::Co: return "co";
        case Measure::Hc: return "hc";
        case Measure::Nox: return "nox";
    }
    return "?";
}

VtMicroCoefficients::VtMicroCoefficients(
    int index_origin, std::array<std::optional<MeasureCoefficients>, kMeasureCount> measures)
    : origin_(index_origin), measures_(std::move(measures)) {
    if (origin_ != 0 && origin_ != 1) throw ValidationError("vt-micro: index_origin must be 0 or 1");
    const int expected = 4 - origin_;
    for (const auto& m : measures_) {
        if (!m) continue;
        for (const auto* mat : {&m->accelerating, &m->decelerating}) {
            if (mat->size != expected ||
                mat->values.size() != static_cast<std::size_t>(expected * expected))
                throw ValidationError("vt-micro: matrix must be " + std::to_string(expected) + "x" +
                                      std::to_string(expected) + " for index_origin " +
                                      std::to_string(origin_));
            for (double v : mat->values)
                if (!std::isfinite(v)) throw ValidationError("vt-micro: non-finite coefficient");
        }
    }
    if (!has(Measure::Fuel)) throw ValidationError("vt-micro: fuel measure is required");
}

const MeasureCoefficients& VtMicroCoefficients::measure(Measure m) const {
    const auto& slot = measures_[static_cast<std::size_t>(m)];
    if (!slot) throw ConfigError(std::string("vt-micro: measure '") + to_string(m) + "' not loaded");
    return *slot;
}

double VtMicroCoefficients::rate(Measure m, double speed, double accel) const {
    const auto& c = measure(m);
    const CoefficientMatrix& k = accel >= 0.0 ? c.accelerating : c.decelerating;
    // Horner in both powers.
    double exponent = 0.0;
    for (int i = k.size - 1; i >= 0; --i) {
        double row = 0.0;
        for (int j = k.size - 1; j >= 0; --j) row = row * accel + k.at(i, j);
        exponent = exponent * speed + row;
    }
    if (origin_ == 1) exponent *= speed * accel;
    return std::exp(exponent);
}

bool within_envelope(double speed, double accel) noexcept {
    return speed >= 0.0 && speed <= kEnvelopeMaxSpeed && std::abs(accel) <= kEnvelopeMaxAccel;
}

double vt_micro_rate(double speed, double accel, const VtMicroCoefficients& coeffs, Measure m) {
    return coeffs.rate(m, speed, accel);
}

VtMicroCoefficients load_coefficients(std::istream& in) {
    int origin = -1;
    std::array<std::optional<MeasureCoefficients>, kMeasureCount> measures;
    std::optional<Measure> current;
    CoefficientMatrix* target = nullptr;
    int rows_left = 0;

    const auto measure_of = [](const std::string& name, int line) {
        if (name == "fuel") return Measure::Fuel;
        if (name == "co") return Measure::Co;
        if (name == "hc") return Measure::Hc;
        if (name == "nox") return Measure::Nox;
        throw ParseError("unknown measure '" + name + "'", line, "measure");
    };

    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        std::istringstream ss(hash == std::string::npos ? raw : raw.substr(0, hash));
        std::vector<std::string> tok;
        for (std::string t; ss >> t;) tok.push_back(t);
        if (tok.empty()) continue;

        if (rows_left > 0) {
            if (static_cast<int>(tok.size()) != target->size)
                throw ParseError("expected " + std::to_string(target->size) + " coefficients",
                                 line, "matrix row");
            for (const auto& t : tok) target->values.push_back(kv::to_double(t, "coefficient", line));
            --rows_left;
            continue;
        }
        const std::string& key = tok[0];
        if (key == "index_origin") {
            if (tok.size() != 2) throw ParseError("expected one value", line, key);
            origin = static_cast<int>(kv::to_int(tok[1], key, line));
            if (origin != 0 && origin != 1) throw ParseError("must be 0 or 1", line, key);
        } else if (key == "speed_unit" || key == "accel_unit") {
            const std::string want = key == "speed_unit" ? "km/h" : "km/h/s";
            if (tok.size() != 2 || tok[1] != want)
                throw ParseError("only " + want + " is supported", line, key);
        } else if (key == "measure") {
            if (tok.size() != 3) throw ParseError("expected 'measure <name> <units>'", line, key);
            current = measure_of(tok[1], line);
            auto& slot = measures[static_cast<std::size_t>(*current)];
            if (slot) throw ParseError("duplicate measure '" + tok[1] + "'", line, key);
            slot = MeasureCoefficients{tok[2], {}, {}};
        } else if (key == "L" || key == "M") {
            if (origin < 0) throw ParseError("index_origin must precede matrices", line, key);
            if (!current) throw ParseError("matrix outside of a measure", line, key);
            auto& mc = *measures[static_cast<std::size_t>(*current)];
            target = key == "L" ? &mc.accelerating : &mc.decelerating;
            if (target->size != 0) throw ParseError("duplicate matrix", line, key);
            target->size = 4 - origin;
            rows_left = target->size;
        } else {
            throw ParseError("unknown directive '" + key + "'", line);
        }
    }
    if (rows_left > 0) throw ParseError("truncated matrix", line);
    if (origin < 0) throw ValidationError("vt-micro: missing index_origin");
    for (std::size_t m = 0; m < kMeasureCount; ++m)
        if (measures[m] && (measures[m]->accelerating.size == 0 || measures[m]->decelerating.size == 0))
            throw ValidationError(std::string("vt-micro: measure '") +
                                  to_string(static_cast<Measure>(m)) + "' needs both L and M");
    return VtMicroCoefficients(origin, std::move(measures));
}

VtMicroCoefficients load_coefficients(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open coefficient file '" + path + "'");
    return load_coefficients(in);
}

std::string default_coefficients_path() {
    namespace fs = std::filesystem;
    const std::string file = "vtmicro_ldv.txt";
    if (const char* env = std::getenv("MUTUALSIM_DATA_DIR")) {
        const fs::path p = fs::path(env) / file;
        if (fs::exists(p)) return p.string();
    }
    for (const char* dir : {MUTUALSIM_BUILD_DATA_DIR, MUTUALSIM_INSTALL_DATA_DIR}) {
        const fs::path p = fs::path(dir) / file;
        if (fs::exists(p)) return p.string();
    }
    throw ConfigError("default VT-Micro coefficient file not found; set MUTUALSIM_DATA_DIR");
}

const VtMicroCoefficients& default_coefficients() {
    static const VtMicroCoefficients coeffs = load_coefficients(default_coefficients_path());
    return coeffs;
}

double free_flow_fuel(double length_m, double speed_kmh, const VtMicroCoefficients& coeffs) {
    const double seconds = length_m / (speed_kmh / 3.6);
    return seconds * coeffs.rate(Measure::Fuel, speed_kmh, 0.0);
}

void FuelAccumulator::accumulate(double speed, double accel, double dt,
                                 const VtMicroCoefficients& coeffs) {
    if (step_ % steps_per_refresh_ == 0) {
        for (std::size_t m = 0; m < kMeasureCount; ++m) {
            const auto measure = static_cast<Measure>(m);
            rate_[m] = coeffs.has(measure) ? coeffs.rate(measure, speed, accel) : 0.0;
        }
        if (!within_envelope(speed, accel)) ++out_of_envelope_;
    }
    ++step_;
    link_.fuel += rate_[0] * dt;
    link_.co += rate_[1] * dt;
    link_.hc += rate_[2] * dt;
    link_.nox += rate_[3] * dt;
}

LinkEmissions FuelAccumulator::finalize_link() {
    const LinkEmissions out = link_;
    trip_.fuel += out.fuel;
    trip_.co += out.co;
    trip_.hc += out.hc;
    trip_.nox += out.nox;
    link_ = {};
    return out;
}

RouteCost route_cost(std::vector<double> per_link) {
    RouteCost r;
    r.total = std::accumulate(per_link.begin(), per_link.end(), 0.0);
    r.per_link = std::move(per_link);
    return r;
}

}  // namespace mutualsim::energy
