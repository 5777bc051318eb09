#include "../support/temp_dir.hpp"

#include <wayfinder/sim.hpp>

#include <gtest/gtest.h>

#include <set>

namespace wayfinder::sim {
namespace {

using nlohmann::json;
using wayfinder::testing::TempDir;

AgentPolicy guided(NavStrategy s = NavStrategy::rank_new, DataStrategy d = DataStrategy::new_random) {
    AgentPolicy p;
    p.kind = PolicyKind::guided;
    p.strategy = s;
    p.data_strategy = d;
    return p;
}

std::set<std::string> page_urls(const SimRun& run) {
    std::set<std::string> urls;
    for (const auto& a : run.agents) {
        for (const auto& ev : a.events) {
            if (ev.kind == EventKind::page_view) urls.insert(std::get<PageViewPayload>(ev.payload).url);
        }
    }
    return urls;
}

TEST(SyntheticSut, DeterministicAndReachable) {
    SutShape shape;
    const auto a = generate_synthetic_sut(shape, 7);
    const auto b = generate_synthetic_sut(shape, 7);
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_NE(a.to_json(), generate_synthetic_sut(shape, 8).to_json());
    ASSERT_EQ(a.pages.size(), 50u);
    EXPECT_EQ(a.defects.size(), 19u);
    EXPECT_EQ(a.master.size(), 3u);

    std::vector<bool> seen(a.pages.size(), false);
    std::vector<std::uint32_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        auto visit = [&](const SimElement& e) {
            if (!seen[e.target]) {
                seen[e.target] = true;
                stack.push_back(e.target);
            }
        };
        for (const auto& l : a.pages[p].links) visit(l);
        for (const auto& x : a.pages[p].actions) visit(x);
        for (const auto& m : a.master) visit(m);
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));

    std::set<std::pair<std::uint32_t, std::size_t>> placed;
    for (const auto& d : a.defects) {
        EXPECT_TRUE(placed.insert({d.page, d.index + (d.kind == ElementKind::action ? 1000 : 0)}).second);
        if (d.condition) EXPECT_EQ(d.kind, ElementKind::action);
    }
}

TEST(SyntheticSut, RejectsUnsatisfiableShapes) {
    SutShape shape;
    shape.pages = 2;
    shape.links = {1, 1};
    shape.actions = {0, 0};
    shape.defects = 10'000;
    EXPECT_THROW(generate_synthetic_sut(shape, 1), ValidationError);
    shape.defects = 0;
    shape.pages = 0;
    EXPECT_THROW(generate_synthetic_sut(shape, 1), ValidationError);
    shape.pages = 3;
    shape.links = {3, 1};
    EXPECT_THROW(generate_synthetic_sut(shape, 1), ValidationError);
}

TEST(Simulation, ZeroStepsYieldsOnlySessionFrame) {
    const auto sut = generate_synthetic_sut(SutShape{}, 3);
    Engine engine{EngineConfig{}};
    auto run = simulate_tester(sut, engine, AgentSpec{"t1", guided(), 1}, 0, DurationModel{});
    ASSERT_EQ(run.agents.size(), 1u);
    const auto& ev = run.agents[0].events;
    ASSERT_EQ(ev.size(), 3u);
    EXPECT_EQ(ev[0].kind, EventKind::session_start);
    EXPECT_EQ(ev[1].kind, EventKind::page_view);
    EXPECT_EQ(ev[2].kind, EventKind::session_end);
}

TEST(Simulation, GuidedWalkOnStarVisitsEveryLeaf) {
    SyntheticSut sut;
    sut.shape.pages = 3;
    sut.shape.master_links = 0;
    sut.shape.defects = 0;
    sut.pages.resize(3);
    for (std::uint32_t p = 0; p < 3; ++p) sut.pages[p].url = "/star" + std::to_string(p);
    sut.pages[0].links = {SimElement{ElementKind::link, "to1", "one", 1, "", {}},
                          SimElement{ElementKind::link, "to2", "two", 2, "", {}}};
    sut.pages[1].links = {SimElement{ElementKind::link, "back1", "home", 0, "", {}}};
    sut.pages[2].links = {SimElement{ElementKind::link, "back2", "home", 0, "", {}}};

    Engine engine{EngineConfig{}};
    auto run = simulate_tester(sut, engine, AgentSpec{"t1", guided(), 5}, 3, DurationModel{});
    EXPECT_EQ(run.illegal_activations, 0u);
    std::vector<std::string> path;
    for (const auto& ev : run.agents[0].events) {
        if (ev.kind == EventKind::page_view) path.push_back(std::get<PageViewPayload>(ev.payload).url);
    }
    ASSERT_EQ(path.size(), 4u);
    EXPECT_EQ(path[0], "/star0");
    EXPECT_EQ(path[2], "/star0");
    EXPECT_NE(path[1], path[3]);
    EXPECT_EQ(page_urls(run).size(), 3u);
}

TEST(Simulation, SameSeedSameTrace) {
    const auto sut = generate_synthetic_sut(SutShape{}, 11);
    auto once = [&](AgentPolicy p) {
        Engine engine{EngineConfig{}};
        return simulate_tester(sut, engine, AgentSpec{"t1", p, 42}, 60, DurationModel{});
    };
    for (const auto& policy : {AgentPolicy{}, guided()}) {
        auto a = once(policy), b = once(policy);
        ASSERT_EQ(a.agents[0].events.size(), b.agents[0].events.size());
        for (std::size_t i = 0; i < a.agents[0].events.size(); ++i) {
            EXPECT_EQ(event_to_json(a.agents[0].events[i]), event_to_json(b.agents[0].events[i]));
        }
        EXPECT_EQ(a.activations.size(), b.activations.size());
    }
}

TEST(Simulation, GuidedAgentsOnlyUseListedElements) {
    const auto sut = generate_synthetic_sut(SutShape{}, 5);
    for (auto s : {NavStrategy::rank_new, NavStrategy::prio_new, NavStrategy::rank_new_team, NavStrategy::rt_time}) {
        Engine engine{EngineConfig{}};
        std::vector<AgentSpec> team;
        for (int t = 0; t < 3; ++t) team.push_back(AgentSpec{"t" + std::to_string(t + 1), guided(s), std::uint64_t(t)});
        auto run = simulate_team(sut, engine, team, 40, DurationModel{});
        EXPECT_EQ(run.illegal_activations, 0u) << to_string(s);
        for (const auto& a : run.agents) EXPECT_EQ(a.events.back().kind, EventKind::session_end);
    }
    AgentPolicy complexity = guided();
    complexity.ranking_fn = RankingFn::page_complexity;
    Engine engine{EngineConfig{}};
    EXPECT_EQ(simulate_tester(sut, engine, AgentSpec{"t1", complexity, 3}, 40, DurationModel{}).illegal_activations, 0u);
}

TEST(Experiment, DiffIsRelativeToAut) {
    EXPECT_NEAR(*diff(28.3, 9.6), 0.6608, 1e-4);
    EXPECT_EQ(*diff(0, 0), 0.0);
    EXPECT_FALSE(diff(0, 3));
    EXPECT_LT(*diff(5, 10), 0);
}

json small_config(const json& arms) {
    return json{{"sut", {{"pages", 12}, {"defects", 6}}}, {"seeds", 3}, {"steps", 30}, {"arms", arms}, {"threads", 1}};
}

TEST(Experiment, IdenticalArmsHaveNoDifference) {
    const json policy{{"kind", "guided"}, {"strategy", "RANK_NEW"}};
    auto cfg = ExperimentConfig::from_json(small_config(
        json::array({json{{"name", "A"}, {"policy", policy}}, json{{"name", "B"}, {"policy", policy}}})));
    auto report = run_experiment(cfg);
    ASSERT_EQ(report.runs.size(), 6u);
    const auto a = report.arm_mean("A"), b = report.arm_mean("B");
    for (const auto& [name, field] : MetricValues::fields()) {
        EXPECT_EQ(a.*field, b.*field) << name;
    }
    EXPECT_THROW(ExperimentConfig::from_json(json{{"arms", json::array()}, {"seeds", 1}, {"bogus", 1}}), ValidationError);
}

TEST(Experiment, ReportRebuiltFromRunDirectory) {
    TempDir dir;
    auto cfg = ExperimentConfig::from_json(small_config(json::array(
        {json{{"name", "MAN"}, {"policy", {{"kind", "random_walk"}}}},
         json{{"name", "TEAM"}, {"agents", 3}, {"budget", "shared"}, {"policy", {{"kind", "guided"}, {"strategy", "RANK_NEW_TEAM"}}}}})));
    auto direct = run_experiment(cfg, dir.path());
    auto rebuilt = report_from_runs(dir.path());
    ASSERT_EQ(rebuilt.runs.size(), direct.runs.size());
    for (std::size_t i = 0; i < direct.runs.size(); ++i) {
        EXPECT_EQ(rebuilt.runs[i].arm, direct.runs[i].arm);
        EXPECT_EQ(rebuilt.runs[i].seed, direct.runs[i].seed);
        EXPECT_EQ(rebuilt.runs[i].report.to_json(), direct.runs[i].report.to_json());
    }
    EXPECT_EQ(rebuilt.to_csv(), direct.to_csv());
    EXPECT_EQ(direct.run("TEAM", direct.runs.back().seed).report.participants, 3u);
}

}  // namespace
}  // namespace wayfinder::sim
