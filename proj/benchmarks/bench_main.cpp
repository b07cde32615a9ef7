#include <benchmark/benchmark.h>

#include "mutualsim/eco_routing.hpp"
#include "mutualsim/experiments.hpp"
#include "mutualsim/mac_analytic.hpp"
#include "mutualsim/mac_des.hpp"
#include "mutualsim/scenario.hpp"

namespace ms = mutualsim;

namespace {

const ms::experiments::Prepared& desk() {
    static const auto p = ms::experiments::prepare(
        ms::scenario::load_scenario(std::string(MUTUALSIM_BENCH_DATA_DIR) + "/desk_scenario.txt"));
    return p;
}

void BM_MacSolve(benchmark::State& state) {
    ms::mac::MacParams p;
    p.n_stations = static_cast<int>(state.range(0));
    p.arrival_rate = 50.0;
    p.wait_model = ms::mac::WaitModel::FiniteQueue;
    for (auto _ : state) benchmark::DoNotOptimize(ms::mac::solve(p));
}
BENCHMARK(BM_MacSolve)->Arg(5)->Arg(40)->Arg(200);

void BM_DesSecond(benchmark::State& state) {
    ms::des::DesConfig c;
    c.mac.n_stations = static_cast<int>(state.range(0));
    c.mac.arrival_rate = 25.0;
    c.warmup = 0.0;
    c.measured_duration = 1.0;
    c.min_delivered = 0;
    for (auto _ : state) benchmark::DoNotOptimize(ms::des::simulate(c));
}
BENCHMARK(BM_DesSecond)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

// 600 simulated seconds of the desk grid; the counter is wall per simulated s.
void BM_CoSim(benchmark::State& state) {
    const auto& p = desk();
    const double odsf = static_cast<double>(state.range(0)) / 10.0;
    const auto mode = state.range(1) ? ms::eco::CommMode::Realistic : ms::eco::CommMode::Ideal;
    ms::scenario::Scenario s = p.scenario;
    for (auto _ : state) {
        auto od = p.demand;
        od.odsf = odsf;
        const auto demand = ms::traffic::generate_demand(od, 1);
        ms::traffic::SimConfig cfg = s.sim;
        cfg.horizon = 600.0;
        ms::traffic::Simulation sim(p.network, p.coefficients, demand, p.demand.demand_end(), cfg);
        ms::eco::CommConfig cc;
        cc.mode = mode;
        cc.mac = s.mac;
        cc.background_rate = s.background_rate;
        ms::eco::CommLayer comm(p.network, p.coefficients, cc);
        ms::eco::EcoRouter router(p.network, comm.table(), s.eta, 1);
        sim.set_router(&router);
        while (sim.step()) comm.comm_step(sim);
        benchmark::DoNotOptimize(sim.state_hash());
    }
    state.SetLabel(mode == ms::eco::CommMode::Realistic ? "realistic" : "ideal");
}
BENCHMARK(BM_CoSim)->Args({1, 0})->Args({1, 1})->Args({10, 0})->Args({10, 1})->Unit(benchmark::kSecond)->Iterations(1);

}  // namespace
BENCHMARK_MAIN();
