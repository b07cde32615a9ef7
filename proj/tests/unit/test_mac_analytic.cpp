#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "mutualsim/mac_analytic.hpp"

using namespace mutualsim;
using namespace mutualsim::mac;

namespace {

MacParams zero_time_params() {
    MacParams p;
    p.payload_bits = 0;
    p.ack_bits = 0;
    p.rts_bits = 0;
    p.cts_bits = 0;
    p.propagation_delay = 0;
    p.sifs = 0;
    return p;
}

// Random valid parameter sets for property tests.
MacParams random_params(std::mt19937_64& rng) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    MacParams p;
    p.n_stations = pick(1, 60);
    p.arrival_rate = std::exp(real(std::log(0.5), std::log(200.0)));
    p.queue_capacity = pick(1, 100);
    p.w0 = 1 << pick(1, 6);
    p.m_stages = pick(0, 6);
    p.f_extra = pick(p.m_stages == 0 ? 1 : 0, 3);
    p.aifs_slots = pick(1, 9);
    p.payload_bits = 8.0 * pick(0, 1500);
    p.access_mode = pick(0, 1) ? AccessMode::Basic : AccessMode::RtsCts;
    p.wait_model = pick(0, 1) ? WaitModel::OpenQueue : WaitModel::FiniteQueue;
    return p;
}

double closed_form_geometric(double x, int n) {
    if (n <= 0) return 0.0;
    return std::abs(1.0 - x) < 1e-12 ? n : (1.0 - std::pow(x, n)) / (1.0 - x);
}

// Normalisation written with geometric-series closed forms instead of a loop.
double closed_form_p00(double p, double p_idle, double q0, const MacParams& prm) {
    const int r = prm.retry_limit();
    const int m = std::min(prm.m_stages, r - 1);
    const double a = prm.alpha;
    const double w0 = prm.w0;
    const double plain = closed_form_geometric(p, r);
    const double doubling = w0 * closed_form_geometric(a * p, m + 1);
    const double capped = w0 * std::pow(a, m) * std::pow(p, m + 1) * closed_form_geometric(p, r - m - 1);
    const double windows = doubling + capped - plain;
    return 1.0 / (q0 / (1.0 - q0) + plain + windows / (2.0 * p_idle));
}

bool probability(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

TEST(TransmissionTimes, AllTermsZero) {
    // AIFS is at least one slot by validation, so zero it through the slot length.
    MacParams p = zero_time_params();
    p.slot_time = 0.0;
    const auto z = transmission_times(p);
    EXPECT_EQ(z.t_s, 0.0);
    EXPECT_EQ(z.t_f, 0.0);
}

TEST(TransmissionTimes, BasicGoldenValues) {
    MacParams p;
    p.payload_bits = 8000;
    p.data_rate = 6e6;
    p.slot_time = 13e-6;
    p.aifs_slots = 6;
    p.sifs = 32e-6;
    p.ack_bits = 1760;
    p.propagation_delay = 1e-6;
    const auto t = transmission_times(p);
    // 78 + 1333.333 + 1 + 32 + 293.333 + 1 us and 78 + 1333.333 + 1 us.
    EXPECT_NEAR(t.t_s, 1.7386666666666667e-3, 1e-15);
    EXPECT_NEAR(t.t_f, 1.4123333333333333e-3, 1e-15);
}

TEST(TransmissionTimes, RtsCtsLongerSuccessShorterFailure) {
    MacParams basic;
    MacParams rts = basic;
    rts.access_mode = AccessMode::RtsCts;
    const auto b = transmission_times(basic);
    const auto r = transmission_times(rts);
    EXPECT_GT(r.t_s, b.t_s);
    EXPECT_LT(r.t_f, b.t_f);
}

TEST(ContentionWindow, CapsAtMaxStage) {
    MacParams p;
    p.w0 = 16;
    p.alpha = 2;
    p.m_stages = 3;
    EXPECT_EQ(p.contention_window(0), 16);
    EXPECT_EQ(p.contention_window(3), 128);
    EXPECT_EQ(p.contention_window(5), 128);
}

TEST(StateProbabilities, NoCollisionsLeaveLaterStagesEmpty) {
    MacParams p;
    const auto d = state_probabilities(0.1, 0.0, 0.7, 0.2, p);
    for (int i = 1; i < d.stages(); ++i) EXPECT_EQ(d.at(i, 0), 0.0);
}

TEST(StateProbabilities, IdleChannelCountdownIsLinear) {
    MacParams p;
    const double p00 = 0.05;
    const auto d = state_probabilities(p00, 0.0, 1.0, 0.0, p);
    for (int j = 0; j < p.w0; ++j)
        EXPECT_DOUBLE_EQ(d.at(0, j), static_cast<double>(p.w0 - j) / p.w0 * p00);
}

TEST(StateProbabilities, EmptySystemIsDegenerate) {
    MacParams p;
    EXPECT_THROW(state_probabilities(0.1, 0.1, 0.5, 1.0, p), DegenerateInputError);
}

TEST(NormalizeP00, TwoStateChain) {
    MacParams p;
    p.w0 = 2;
    p.m_stages = 0;
    p.f_extra = 1;
    EXPECT_DOUBLE_EQ(normalize_p00(0.0, 1.0, 0.0, p), 2.0 / 3.0);
}

TEST(NormalizeP00, VanishesAsSystemEmpties) {
    MacParams p;
    double prev = normalize_p00(0.2, 0.8, 0.9, p);
    for (double q0 : {0.99, 0.999, 0.9999, 1.0 - 1e-9}) {
        const double v = normalize_p00(0.2, 0.8, q0, p);
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_LT(prev, 1e-6);
}

TEST(NormalizeP00, MassIsOneByEnumeration) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        MacParams p = random_params(rng);
        const double p_col = 0.95 * u(rng);
        const double p_idle = 0.05 + 0.95 * u(rng);
        const double q0 = 0.99 * u(rng);
        const double p00 = normalize_p00(p_col, p_idle, q0, p);
        EXPECT_NEAR(state_probabilities(p00, p_col, p_idle, q0, p).total_mass(), 1.0, 1e-12);
    }
}

TEST(NormalizeP00, AgreesWithClosedForm) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        MacParams p = random_params(rng);
        const double p_col = 0.9 * u(rng);
        const double p_idle = 0.05 + 0.95 * u(rng);
        const double q0 = 0.99 * u(rng);
        if (std::abs(p.alpha * p_col - 1.0) < 1e-3) continue;
        const double direct = normalize_p00(p_col, p_idle, q0, p);
        const double closed = closed_form_p00(p_col, p_idle, q0, p);
        EXPECT_NEAR(direct, closed, 1e-10 * std::max(1.0, closed)) << "case " << k;
    }
}

TEST(CouplingEquations, SingleStationNeverCollides) {
    MacParams p;
    p.n_stations = 1;
    for (double t : {0.0, 0.3, 0.9, 1.0}) EXPECT_EQ(coupling_equations(t, p).p_col, 0.0);
}

TEST(CouplingEquations, SilentChannel) {
    MacParams p;
    p.n_stations = 7;
    const auto c = coupling_equations(0.0, p);
    EXPECT_EQ(c.p_idle_slot, 1.0);
    EXPECT_EQ(c.p_suc, 0.0);
    EXPECT_EQ(c.p_fail, 0.0);
    EXPECT_EQ(c.p_idle, 1.0);
}

TEST(CouplingEquations, TwoStationsHalfProbability) {
    MacParams p;
    p.n_stations = 2;
    p.aifs_slots = 2;
    const auto c = coupling_equations(0.5, p);
    EXPECT_DOUBLE_EQ(c.p_col, 0.5);
    EXPECT_DOUBLE_EQ(c.p_idle_slot, 0.25);
    EXPECT_DOUBLE_EQ(c.p_suc, 0.5);
    EXPECT_DOUBLE_EQ(c.p_fail, 0.25);
    EXPECT_DOUBLE_EQ(c.p_idle, 0.0625);
}

TEST(CouplingEquations, FailureClosesTheSlotPartition) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 300; ++k) {
        MacParams p = random_params(rng);
        const auto c = coupling_equations(u(rng), p);
        EXPECT_NEAR(c.p_fail, 1.0 - c.p_suc - c.p_idle_slot, 1e-15);
        EXPECT_TRUE(probability(c.p_col) && probability(c.p_idle) && probability(c.p_suc));
    }
}

TEST(ServiceTime, NoCollisionSingleTerm) {
    MacParams p;
    const auto tt = transmission_times(p);
    const double p_idle = 0.8, p_suc = 0.15, p_fail = 0.02;
    const auto s = service_time(0.0, p_idle, p_suc, p_fail, tt.t_s, tt.t_f, p);
    const double slot = p.slot_time;
    const double t_w = p_fail * tt.t_f / slot + p_suc * tt.t_s / slot + 1.0 / p_idle;
    EXPECT_NEAR(s.t_tr_av, tt.t_s, 1e-18);
    EXPECT_NEAR(s.t_serv, slot * (t_w * (p.w0 - 1) / 2.0 + tt.t_s / slot), 1e-15);
}

TEST(ServiceTime, CertainCollisionWeighsEveryStage) {
    MacParams p;
    const auto tt = transmission_times(p);
    const auto s = service_time(1.0, 0.5, 0.0, 1.0, tt.t_s, tt.t_f, p);
    const double slot = p.slot_time;
    const double t_w = tt.t_f / slot + 2.0;
    double expect = 0.0;
    for (int i = 0; i < p.retry_limit(); ++i)
        expect += t_w * (static_cast<double>(p.contention_window(i)) - 1.0) / 2.0 + tt.t_f / slot;
    EXPECT_NEAR(s.t_serv, slot * expect, 1e-12);
}

TEST(ServiceTime, ZeroIdleIsDegenerate) {
    MacParams p;
    EXPECT_THROW(service_time(0.1, 0.0, 0.1, 0.1, 1e-3, 1e-3, p), DegenerateInputError);
}

TEST(Mm1k, NearlyEmpty) {
    const auto m = mm1k_metrics(1e-12, 64, 100.0, 1e-10);
    EXPECT_NEAR(m.q0, 1.0, 1e-11);
    EXPECT_NEAR(m.p_rej, 0.0, 1e-100);
}

TEST(Mm1k, EqualRatesBranch) {
    const auto s = mm1k_state(1.0, 63);
    EXPECT_DOUBLE_EQ(s.q0, 1.0 / 64.0);
    EXPECT_DOUBLE_EQ(s.p_rej, 1.0 / 64.0);
    for (int k : {1, 5, 64}) EXPECT_DOUBLE_EQ(mm1k_state(1.0 + 1e-10, k).q0, 1.0 / (k + 1.0));
}

TEST(Mm1k, HalfLoadCapacityTwo) {
    const auto s = mm1k_state(0.5, 2);
    EXPECT_NEAR(s.q0, 4.0 / 7.0, 1e-15);
    EXPECT_NEAR(s.p_rej, 1.0 / 7.0, 1e-15);
}

TEST(Mm1k, OverloadMatchesDirectFormula) {
    for (double rho : {1.3, 2.0, 5.0})
        for (int k : {1, 5, 20}) {
            const auto s = mm1k_state(rho, k);
            const double q0 = (1.0 - rho) / (1.0 - std::pow(rho, k + 1));
            EXPECT_NEAR(s.q0, q0, 1e-12 * q0 + 1e-300);
            EXPECT_NEAR(s.p_rej, std::pow(rho, k) * q0, 1e-12);
        }
}

TEST(Mm1k, OpenWaitAndSaturation) {
    const auto m = mm1k_metrics(0.5, 10, 100.0, 50.0);
    EXPECT_NEAR(m.lambda_eff, 50.0 * (1.0 - m.p_rej), 1e-12);
    EXPECT_NEAR(m.t_q, 1.0 / (100.0 - m.lambda_eff), 1e-15);
    // Overloaded: accepted traffic never exceeds the service rate, so the
    // open wait stays finite and equals 1 / (mu q0).
    const auto over = mm1k_metrics(2.0, 10, 100.0, 200.0);
    EXPECT_NEAR(over.lambda_eff, 100.0 * (1.0 - over.q0), 1e-10);
    EXPECT_NEAR(over.t_q * 100.0 * over.q0, 1.0, 1e-9);
    EXPECT_THROW(mm1k_metrics(0.5, 10, 0.0, 50.0), DegenerateInputError);
}

TEST(Mm1k, FiniteWaitByLittlesLaw) {
    for (double rho : {0.3, 1.0, 1.7}) {
        const int k = 8;
        const double mu = 40.0;
        const double lambda = rho * mu;
        const auto m = mm1k_metrics(rho, k, mu, lambda, WaitModel::FiniteQueue);
        std::vector<double> pn(k + 1);
        double norm = 0.0;
        for (int n = 0; n <= k; ++n) norm += pn[static_cast<std::size_t>(n)] = std::pow(rho, n);
        double in_system = 0.0;
        for (int n = 0; n <= k; ++n) in_system += n * pn[static_cast<std::size_t>(n)] / norm;
        const double lambda_eff = lambda * (1.0 - pn.back() / norm);
        EXPECT_NEAR(m.t_q, in_system / lambda_eff - 1.0 / mu, 1e-12);
    }
}

TEST(DropProbability, Examples) {
    EXPECT_EQ(drop_probability(0.0, 0.3, 0.0), 0.0);
    EXPECT_EQ(drop_probability(1.0, 0.3, 0.4), 1.0);
    EXPECT_NEAR(drop_probability(0.1, 0.05, 0.4), 0.118, 1e-15);
}

TEST(Throughput, ZeroCases) {
    MacParams p;
    MacSolution s;
    s.t_serv = 1e-3;
    s.q0 = 1.0;
    s.p_fail = 0.2;
    EXPECT_EQ(throughput(s, p).raw, 0.0);
    s.q0 = 0.3;
    s.p_fail = 1.0;
    EXPECT_EQ(throughput(s, p).raw, 0.0);
    EXPECT_EQ(throughput(s, p).per_second, 0.0);
}

TEST(Solve, SingleStationIdentities) {
    for (auto mode : {AccessMode::Basic, AccessMode::RtsCts}) {
        MacParams p;
        p.n_stations = 1;
        p.arrival_rate = 1.0;
        p.access_mode = mode;
        const auto s = solve(p);
        EXPECT_EQ(s.p_col, 0.0);
        EXPECT_EQ(s.p_drop, s.p_rej);
    }
}

TEST(Solve, MassIsOneAtTheFixedPoint) {
    std::mt19937_64 rng(2024);
    int solved = 0;
    for (int k = 0; k < 150; ++k) {
        const MacParams p = random_params(rng);
        MacSolution s;
        try {
            s = solve(p);
        } catch (const NonConvergenceError&) {
            continue;
        }
        ++solved;
        const auto d = state_probabilities(s.p00, s.p_col, s.p_idle, s.q0, p);
        EXPECT_NEAR(d.total_mass(), 1.0, 1e-9);
    }
    EXPECT_EQ(solved, 150);
}

TEST(Solve, ProbabilityClosureAndRateBounds) {
    std::mt19937_64 rng(99);
    for (int k = 0; k < 150; ++k) {
        const MacParams p = random_params(rng);
        const auto s = solve(p);
        for (double x : {s.p_trans, s.p_col, s.p_idle_slot, s.p_idle, s.p_suc, s.p_fail, s.q0, s.p00,
                         s.p_rej, s.p_drop, s.p_last_state})
            EXPECT_TRUE(probability(x)) << x;
        EXPECT_GT(s.t_serv, 0.0);
        EXPECT_LE(s.lambda_eff, p.arrival_rate);
        EXPECT_NEAR(s.p_fail, 1.0 - s.p_suc - s.p_idle_slot, 1e-12);
        EXPECT_LT(s.residual, 1e-9);
        if (s.t_q) {
            EXPECT_GE(*s.t_q, 0.0);
            EXPECT_DOUBLE_EQ(*s.t_delay, s.t_serv + *s.t_q);
        }
    }
}

TEST(Solve, Deterministic) {
    MacParams p;
    p.n_stations = 23;
    p.arrival_rate = 37.0;
    const auto a = solve(p);
    const auto b = solve(p);
    const auto fields = [](const MacSolution& s) {
        return std::vector<double>{s.p_trans, s.p_col, s.p_idle_slot, s.p_idle, s.p_suc, s.p_fail,
                                   s.q0, s.p00, s.p_last_state, s.t_s, s.t_f, s.t_w, s.t_tr_av,
                                   s.t_serv, s.mu, s.rho, s.p_rej, s.p_drop, *s.t_q, *s.t_delay,
                                   s.lambda_eff, s.throughput_raw, s.throughput, s.residual};
    };
    const auto fa = fields(a);
    const auto fb = fields(b);
    EXPECT_EQ(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)), 0);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, DropNonDecreasingInStations) {
    for (auto mode : {AccessMode::Basic, AccessMode::RtsCts}) {
        MacParams p;
        p.arrival_rate = 50.0;
        p.access_mode = mode;
        double prev = -1.0;
        for (int n : {1, 2, 5, 10, 20, 40, 80}) {
            p.n_stations = n;
            const double d = solve(p).p_drop;
            EXPECT_GE(d, prev - 1e-6) << "N=" << n;
            prev = d;
        }
    }
}

TEST(Solve, DelayNonDecreasingInRateBelowSaturation) {
    MacParams p;
    p.n_stations = 10;
    p.wait_model = WaitModel::OpenQueue;
    double prev = 0.0;
    for (double rate = 1.0; rate <= 60.0; rate += 1.0) {
        p.arrival_rate = rate;
        const auto s = solve(p);
        if (s.rho >= 1.0) break;
        ASSERT_TRUE(s.t_delay.has_value());
        EXPECT_GE(*s.t_delay, prev - 1e-6) << "rate " << rate;
        prev = *s.t_delay;
    }
    EXPECT_GT(prev, 0.0);
}

TEST(Solve, VanishingLoad) {
    MacParams p;
    p.n_stations = 10;
    double prev_thr = -1.0;
    for (double rate : {1e-6, 1e-5, 1e-4, 1e-3}) {
        p.arrival_rate = rate;
        const auto s = solve(p);
        EXPECT_GT(s.throughput, prev_thr);
        prev_thr = s.throughput;
        if (rate == 1e-6) {
            EXPECT_GT(s.q0, 1.0 - 1e-6);
            EXPECT_LT(s.p_rej, 1e-100);
            EXPECT_LT(s.throughput, 1e-4);
        }
    }
}

TEST(Solve, RejectsInvalidParams) {
    MacParams p;
    p.w0 = 1;
    EXPECT_THROW(solve(p), ValidationError);
    p = MacParams{};
    p.n_stations = 0;
    EXPECT_THROW(solve(p), ValidationError);
    p = MacParams{};
    p.arrival_rate = 0.0;
    EXPECT_THROW(solve(p), ValidationError);
}

TEST(Solve, ConvergesAtHighPopulation) {
    MacParams p;
    p.arrival_rate = 50.0;
    for (int n : {80, 200, 1000}) {
        p.n_stations = n;
        EXPECT_NO_THROW(solve(p)) << "N=" << n;
    }
}

TEST(Solve, NonConvergenceCarriesLastIterate) {
    MacParams p;
    p.n_stations = 30;
    SolverOptions o;
    o.max_iterations = 3;
    try {
        solve(p, o);
        FAIL() << "expected NonConvergenceError";
    } catch (const NonConvergenceError& e) {
        EXPECT_EQ(e.last_iterate().iterations, 3);
        EXPECT_GT(e.residual(), 0.0);
    }
}
