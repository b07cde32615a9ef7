#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mutualsim/energy.hpp"
#include "mutualsim/error.hpp"

using namespace mutualsim;
using namespace mutualsim::energy;

namespace {

CoefficientMatrix constant_matrix(int size, double c00) {
    CoefficientMatrix m{size, std::vector<double>(static_cast<std::size_t>(size * size), 0.0)};
    m.values[0] = c00;
    return m;
}

VtMicroCoefficients fuel_only(int origin, CoefficientMatrix l, CoefficientMatrix m) {
    std::array<std::optional<MeasureCoefficients>, kMeasureCount> measures;
    measures[0] = MeasureCoefficients{"L/s", std::move(l), std::move(m)};
    return VtMicroCoefficients(origin, std::move(measures));
}

// Double sum with explicit powers, independent of the Horner evaluation.
double direct_rate(const VtMicroCoefficients& c, double v, double a) {
    const auto& mc = c.measure(Measure::Fuel);
    const CoefficientMatrix& k = a >= 0.0 ? mc.accelerating : mc.decelerating;
    const int o = c.index_origin();
    double e = 0.0;
    for (int i = 0; i < k.size; ++i)
        for (int j = 0; j < k.size; ++j) e += k.at(i, j) * std::pow(v, i + o) * std::pow(a, j + o);
    return std::exp(e);
}

}  // namespace

TEST(VtMicro, ZeroCoefficientsGiveUnitRate) {
    for (int origin : {0, 1}) {
        const int n = 4 - origin;
        const auto c = fuel_only(origin, constant_matrix(n, 0.0), constant_matrix(n, 0.0));
        for (double v : {0.0, 37.0, 120.0})
            for (double a : {-8.0, 0.0, 5.0}) EXPECT_EQ(vt_micro_rate(v, a, c), 1.0);
    }
}

TEST(VtMicro, RegimeSwitchAtZeroAcceleration) {
    const auto c = fuel_only(0, constant_matrix(4, 0.0), constant_matrix(4, 1.0));
    EXPECT_EQ(vt_micro_rate(40.0, 0.0, c), 1.0);
    EXPECT_EQ(vt_micro_rate(40.0, 1e-12, c), 1.0);
    EXPECT_DOUBLE_EQ(vt_micro_rate(40.0, -1e-12, c), std::exp(1.0));
}

TEST(VtMicro, ShippedIdleRate) {
    const auto& c = default_coefficients();
    EXPECT_EQ(c.index_origin(), 0);
    const double idle = vt_micro_rate(0.0, 0.0, c);
    EXPECT_DOUBLE_EQ(idle, std::exp(c.measure(Measure::Fuel).accelerating.at(0, 0)));
    EXPECT_DOUBLE_EQ(idle, std::exp(-7.73452));
    // Documented idle consumption of the set: 1.575 L/h.
    EXPECT_NEAR(idle * 3600.0, 1.575, 5e-4);
}

TEST(VtMicro, MatchesDirectDoubleSum) {
    const auto& c = default_coefficients();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> v(0.0, 120.0);
    std::uniform_real_distribution<double> a(-10.0, 10.0);
    for (int k = 0; k < 1000; ++k) {
        const double sv = v(rng), sa = a(rng);
        EXPECT_NEAR(vt_micro_rate(sv, sa, c) / direct_rate(c, sv, sa), 1.0, 1e-12);
    }
    // Small enough that the cubic terms keep the exponent finite.
    std::vector<double> small{1e-3, -2e-4, 3e-5, 1e-5, 4e-6, -1e-7, 2e-8, 1e-9, -3e-10};
    const auto c1 = fuel_only(1, CoefficientMatrix{3, small}, CoefficientMatrix{3, small});
    for (int k = 0; k < 100; ++k) {
        const double sv = v(rng), sa = a(rng);
        EXPECT_NEAR(vt_micro_rate(sv, sa, c1) / direct_rate(c1, sv, sa), 1.0, 1e-12);
    }
}

TEST(VtMicro, PositiveBoundedAndContinuousOverEnvelope) {
    const auto& c = default_coefficients();
    for (double a = -10.0; a <= 10.0; a += 0.5) {
        for (double v = 0.0; v <= 120.0; v += 1.0) {
            const double r = vt_micro_rate(v, a, c);
            EXPECT_GT(r, 0.0);
            EXPECT_LT(r, 1.0);
            const double nearby = vt_micro_rate(v + 1e-6, a, c);
            EXPECT_NEAR(nearby, r, 1e-6 * r);
        }
    }
}

TEST(Accumulator, ConstantCruise) {
    const auto& c = default_coefficients();
    FuelAccumulator acc(10);
    for (int k = 0; k < 1000; ++k) acc.accumulate(60.0, 0.0, 0.1, c);
    EXPECT_NEAR(acc.link().fuel, 100.0 * vt_micro_rate(60.0, 0.0, c), 1e-12);
}

TEST(Accumulator, ZeroSojourn) {
    FuelAccumulator acc;
    const auto e = acc.finalize_link();
    EXPECT_EQ(e.fuel, 0.0);
    EXPECT_EQ(e.nox, 0.0);
}

TEST(Accumulator, SawtoothMatchesOfflineRiemannSum) {
    const auto& c = default_coefficients();
    const double dt = 0.1;
    const int refresh = 10;
    std::vector<double> speed, accel;
    for (int k = 0; k < 600; ++k) {
        const int phase = k % 200;
        const double a = phase < 100 ? 3.6 : -3.6;
        accel.push_back(a);
        speed.push_back(phase < 100 ? 0.36 * phase : 36.0 - 0.36 * (phase - 100));
    }
    FuelAccumulator acc(refresh);
    for (std::size_t k = 0; k < speed.size(); ++k) acc.accumulate(speed[k], accel[k], dt, c);

    double offline = 0.0;
    for (std::size_t k = 0; k < speed.size(); ++k) {
        const std::size_t held = k - k % refresh;
        offline += vt_micro_rate(speed[held], accel[held], c) * dt;
    }
    EXPECT_NEAR(acc.link().fuel, offline, 1e-12 * offline);
}

TEST(Accumulator, RouteIsSumOfLinks) {
    const auto& c = default_coefficients();
    FuelAccumulator acc(10);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> v(0.0, 80.0);
    std::vector<double> links;
    for (int l = 0; l < 7; ++l) {
        for (int k = 0; k < 50 + 13 * l; ++k) acc.accumulate(v(rng), 0.0, 0.1, c);
        links.push_back(acc.finalize_link().fuel);
    }
    const auto cost = route_cost(links);
    double sum = 0.0;
    for (double x : links) sum += x;
    EXPECT_EQ(cost.total, sum);
    EXPECT_NEAR(acc.trip().fuel, cost.total, 1e-12 * cost.total);
    EXPECT_EQ(acc.link().fuel, 0.0);
}

TEST(Accumulator, CountsOutOfEnvelopeRefreshes) {
    const auto& c = default_coefficients();
    FuelAccumulator acc(1);
    acc.accumulate(150.0, 0.0, 0.1, c);
    acc.accumulate(50.0, 0.0, 0.1, c);
    EXPECT_EQ(acc.out_of_envelope(), 1);
}

TEST(FreeFlowFuel, TraversalTimeTimesCruiseRate) {
    const auto& c = default_coefficients();
    EXPECT_DOUBLE_EQ(free_flow_fuel(500.0, 50.0, c), 36.0 * vt_micro_rate(50.0, 0.0, c));
}

TEST(CoefficientFile, Errors) {
    std::istringstream short_row(
        "index_origin 0\nmeasure fuel L/s\nL\n1 2 3 4\n1 2 3\n");
    try {
        load_coefficients(short_row);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 5);
    }
    std::istringstream no_fuel(
        "index_origin 1\nmeasure co mg/s\nL\n0 0 0\n0 0 0\n0 0 0\nM\n0 0 0\n0 0 0\n0 0 0\n");
    EXPECT_THROW(load_coefficients(no_fuel), ValidationError);
    std::istringstream unknown("index_origin 0\nmeasure co2 g/s\n");
    EXPECT_THROW(load_coefficients(unknown), ParseError);
    std::istringstream units("speed_unit mph\n");
    EXPECT_THROW(load_coefficients(units), ParseError);
}

TEST(CoefficientFile, ShippedSetHasAllMeasures) {
    const auto& c = default_coefficients();
    for (auto m : {Measure::Fuel, Measure::Co, Measure::Hc, Measure::Nox}) EXPECT_TRUE(c.has(m));
}
