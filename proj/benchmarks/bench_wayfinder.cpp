#include <wayfinder/analytics.hpp>
#include <wayfinder/sim.hpp>
#include <wayfinder/strategies.hpp>
#include <wayfinder/testdata.hpp>

#include <benchmark/benchmark.h>

namespace {

using namespace wayfinder;

// Event log of a random walk over a synthetic SUT, shared by the benchmarks below.
const sim::SimRun& walk_log() {
    static const sim::SimRun run = [] {
        sim::SutShape shape;
        shape.pages = 200;
        const auto sut = sim::generate_synthetic_sut(shape, 1);
        Engine engine{EngineConfig{}};
        std::vector<sim::AgentSpec> agents;
        for (int t = 0; t < 5; ++t) agents.push_back({"t" + std::to_string(t + 1), sim::AgentPolicy{}, std::uint64_t(t)});
        return sim::simulate_team(sut, engine, agents, 1000, sim::DurationModel{});
    }();
    return run;
}

std::vector<ActivityEvent> merged_events() {
    std::vector<ActivityEvent> events;
    for (const auto& a : walk_log().agents) events.insert(events.end(), a.events.begin(), a.events.end());
    std::stable_sort(events.begin(), events.end(), [](const auto& x, const auto& y) { return x.ts < y.ts; });
    return events;
}

SutModel replayed(const std::vector<ActivityEvent>& events) {
    SutModel model;
    Reconstructor r{ReconstructionConfig{}};
    for (const auto& ev : events) r.ingest(model, ev);
    return model;
}

void BM_PageComplexityRank(benchmark::State& state) {
    WeightConfig w;
    PageCounts c{2, 1, 3};
    for (auto _ : state) {
        benchmark::DoNotOptimize(page_complexity_rank(c, w));
        benchmark::DoNotOptimize(priority_and_complexity_rank(5, c, w));
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_PageComplexityRank);

void BM_Ingest(benchmark::State& state) {
    const auto events = merged_events();
    for (auto _ : state) benchmark::DoNotOptimize(replayed(events));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * events.size()));
}
BENCHMARK(BM_Ingest)->Unit(benchmark::kMillisecond);

void BM_Suggest(benchmark::State& state) {
    const auto events = merged_events();
    const SutModel model = replayed(events);
    StrategyConfig cfg;
    cfg.ranking_fn = state.range(0) ? RankingFn::page_complexity : RankingFn::element_type;
    const auto strategy = static_cast<NavStrategy>(state.range(1));
    const Timestamp now = events.back().ts;
    std::size_t k = 0;
    for (auto _ : state) {
        const PageId page = model.pages()[k++ % model.pages().size()].id;
        benchmark::DoNotOptimize(suggest(model, "t1", page, strategy, cfg, now));
    }
}
BENCHMARK(BM_Suggest)->ArgsProduct({{0, 1}, {0, 1, 2}});

void BM_ComputeMetrics(benchmark::State& state) {
    const auto events = merged_events();
    const SutModel model = replayed(events);
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_metrics(model, events, walk_log().activations, "team"));
    }
}
BENCHMARK(BM_ComputeMetrics)->Unit(benchmark::kMillisecond);

void BM_ExportGraph(benchmark::State& state) {
    const SutModel model = replayed(merged_events());
    for (auto _ : state) benchmark::DoNotOptimize(export_graph(model).dump());
}
BENCHMARK(BM_ExportGraph)->Unit(benchmark::kMillisecond);

void BM_Pairwise(benchmark::State& state) {
    std::vector<PairwiseInput> inputs;
    for (int i = 0; i < state.range(0); ++i) {
        std::vector<EquivalenceClass> ecs;
        for (int e = 0; e < 4; ++e) ecs.push_back({"e" + std::to_string(e), Interval{e * 10.0, e * 10.0 + 9, true}});
        inputs.push_back({ElementId{std::uint32_t(i)}, ecs, default_range()});
    }
    for (auto _ : state) benchmark::DoNotOptimize(generate_pairwise(inputs, 1));
}
BENCHMARK(BM_Pairwise)->DenseRange(2, 8, 2);

}  // namespace

BENCHMARK_MAIN();
