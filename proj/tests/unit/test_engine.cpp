#include "../support/builders.hpp"
#include "../support/persistence_check.hpp"
#include "../support/random_log.hpp"
#include "../support/temp_dir.hpp"

#include <wayfinder/engine.hpp>

#include <gtest/gtest.h>

#include <fstream>

namespace wayfinder {
namespace {

using namespace wayfinder::testing;
using nlohmann::json;

const Caller kAdmin{Role::admin, ""};
const Caller kLead{Role::test_lead, "lead"};
Caller tester(const std::string& t) { return Caller{Role::tester, t}; }

std::vector<ElementObservation> form_page() {
    return {link("home", "Home"), input("f.q", "f"), action("f.go", "f", "Go")};
}

void post(Engine& e, const ActivityEvent& ev, const Caller& c = kAdmin) { e.post_event(event_to_json(ev), c); }

std::size_t journal_lines(const std::filesystem::path& dir) {
    std::ifstream in(dir / "journal.ndjson");
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

TEST(Engine, PersistsAndRestoresFromSnapshotAndTail) {
    TempDir dir;
    EngineConfig cfg;
    cfg.snapshot_every = 5;
    auto log = random_log(3);
    log.events.resize(23);
    json before;
    {
        Engine e(cfg, dir.path());
        for (const auto& ev : log.events) post(e, ev);
        e.admin("strategy", json{{"tester", "t1"}}, kLead);
        before = e.workspace_copy().to_json();
    }
    Engine restored(cfg, dir.path());
    EXPECT_TRUE(restored.restored_from_snapshot());
    EXPECT_EQ(restored.workspace_copy().to_json(), before);
    EXPECT_EQ(restored.health().at("commands"), 24);
}

TEST(Engine, PrefixRestoresMatchDirectReplay) {
    TempDir dir;
    RandomLogOptions opt;
    opt.max_events = 300;
    auto log = random_log(9, opt);
    auto r = check_persistence_prefixes(log.events, dir / "store", 16);
    EXPECT_EQ(r.prefixes, log.events.size());
    EXPECT_GT(r.from_snapshot, 0u);
    EXPECT_TRUE(r.mismatches.empty()) << r.mismatches.front();
}

TEST(Engine, TornJournalTailIsDropped) {
    TempDir dir;
    EngineConfig cfg;
    cfg.snapshot_every = 0;
    std::string graph;
    {
        Engine e(cfg, dir.path());
        post(e, session_start("t1", "s1", 0));
        post(e, page_view("t1", "s1", 10, "/a", form_page()));
        graph = e.graph().dump();
    }
    {
        std::ofstream out(dir / "journal.ndjson", std::ios::app | std::ios::binary);
        out << R"({"op":"event","body":{"kind":"PAGE_VI)";
    }
    Engine restored(cfg, dir.path());
    EXPECT_EQ(restored.graph().dump(), graph);
    EXPECT_EQ(journal_lines(dir.path()), 2u);
    post(restored, page_view("t1", "s1", 20, "/b", {link("x")}));
    Engine again(cfg, dir.path());
    EXPECT_EQ(again.graph().dump(), restored.graph().dump());
}

TEST(Engine, CorruptSnapshotFallsBackToFullReplay) {
    TempDir dir;
    EngineConfig cfg;
    cfg.snapshot_every = 2;
    std::string graph;
    {
        Engine e(cfg, dir.path());
        post(e, session_start("t1", "s1", 0));
        post(e, page_view("t1", "s1", 10, "/a", form_page()));
        post(e, activate("t1", "s1", 11, "home"));
        post(e, page_view("t1", "s1", 12, "/b", {link("x")}));
        graph = e.graph().dump();
    }
    {
        std::ofstream out(dir / "snapshot.json", std::ios::trunc);
        out << "{ not json";
    }
    Engine restored(cfg, dir.path());
    EXPECT_FALSE(restored.restored_from_snapshot());
    EXPECT_EQ(restored.restored_tail(), 4u);
    EXPECT_EQ(restored.graph().dump(), graph);
}

TEST(Engine, SnapshotAheadOfJournalIsIgnored) {
    TempDir dir;
    EngineConfig cfg;
    cfg.snapshot_every = 1;
    {
        Engine e(cfg, dir.path());
        post(e, session_start("t1", "s1", 0));
        post(e, page_view("t1", "s1", 10, "/a", form_page()));
    }
    std::filesystem::resize_file(dir / "journal.ndjson", 0);
    Engine restored(cfg, dir.path());
    EXPECT_FALSE(restored.restored_from_snapshot());
    EXPECT_EQ(restored.workspace_copy().model.pages().size(), 0u);
}

TEST(Engine, DuplicatesAreNotJournaled) {
    TempDir dir;
    Engine e(EngineConfig{}, dir.path());
    post(e, session_start("t1", "s1", 0));
    auto pv = page_view("t1", "s1", 10, "/a", form_page());
    post(e, pv);
    auto again = e.post_event(event_to_json(pv), kAdmin);
    EXPECT_TRUE(again.at("duplicate").get<bool>());
    EXPECT_EQ(journal_lines(dir.path()), 2u);
}

TEST(Engine, LateEventsInsideWindowAreReordered) {
    std::vector<ActivityEvent> ordered{session_start("t1", "s1", 0),
                                       page_view("t1", "s1", 1'000, "/a", form_page()),
                                       activate("t1", "s1", 2'000, "home"),
                                       page_view("t1", "s1", 3'000, "/b", {link("x")})};
    Engine direct(EngineConfig{});
    for (const auto& ev : ordered) post(direct, ev);

    Engine shuffled(EngineConfig{});
    post(shuffled, ordered[0]);
    post(shuffled, ordered[1]);
    post(shuffled, ordered[3]);
    post(shuffled, ordered[2]);
    EXPECT_EQ(shuffled.graph().dump(), direct.graph().dump());
    auto log = shuffled.event_log();
    ASSERT_EQ(log.size(), 4u);
    EXPECT_EQ(log[2].kind, EventKind::element_activated);

    post(shuffled, page_view("t1", "s1", 20'000, "/c", {}));
    EXPECT_THROW(post(shuffled, page_view("t1", "s1", 10'000, "/d", {})), Conflict);
}

TEST(Engine, ReorderFailureLeavesStateIntact) {
    Engine e(EngineConfig{});
    std::vector<json> t2_frames;
    e.subscribe("t2", [&](const json& f) { t2_frames.push_back(f); });
    auto two_forms = form_page();
    two_forms.push_back(input("g.q", "g"));
    post(e, session_start("t1", "s1", 0));
    post(e, session_start("t2", "s2", 0));
    post(e, page_view("t1", "s1", 1'000, "/a", two_forms));
    post(e, page_view("t1", "s1", 3'000, "/b", {link("x")}));
    const auto before = e.workspace_copy().to_json().at("model");
    // The late submission names an input of another form on /a, which fails during replay.
    EXPECT_THROW(post(e, submit("t1", "s1", 2'000, "f.go", {{"g.q", "1"}})), ValidationError);
    EXPECT_EQ(e.workspace_copy().to_json().at("model"), before);

    t2_frames.clear();
    post(e, activate("t1", "s1", 2'000, "home"));
    ASSERT_EQ(t2_frames.size(), 1u);
    EXPECT_EQ(t2_frames[0].at("payload").at("reason"), "reordered");
}

TEST(Engine, RolesAndMissingState) {
    Engine e(EngineConfig{});
    post(e, session_start("t1", "s1", 0));
    EXPECT_THROW(post(e, page_view("t1", "s1", 1, "/a", form_page()), tester("t2")), Forbidden);
    post(e, page_view("t1", "s1", 1, "/a", form_page()), tester("t1"));

    EXPECT_THROW(e.testcase("t1", std::nullopt, tester("t1")), Conflict);
    EXPECT_THROW(e.admin("strategy", json{{"tester", "t1"}}, tester("t1")), Forbidden);
    EXPECT_THROW(e.admin("explode", json::object(), kLead), NotFound);
    EXPECT_THROW(e.admin("strategy", json::object(), kLead), ValidationError);
    EXPECT_THROW(e.admin("weights", json{{"tester", "t9"}, {"linkElementsWeight", 3}}, kLead), Conflict);
    e.admin("strategy", json{{"tester", "t1"}, {"navigational", {"RANK_NEW"}}}, kLead);
    EXPECT_THROW(e.testcase("t1", std::nullopt, tester("t2")), Forbidden);
    EXPECT_THROW(e.testcase("t1", PageId{42}, tester("t1")), NotFound);
    auto tc = e.testcase("t1", std::nullopt, tester("t1"));
    EXPECT_EQ(tc.at("url"), "/a");
    EXPECT_EQ(tc.at("suggestions").at(0).at("items").at(0).at("locator"), "f.go");

    post(e, session_end("t1", "s1", 2));
    EXPECT_THROW(e.testcase("t1", std::nullopt, tester("t1")), NotFound);
}

TEST(Engine, AdminEcsAreAtomic) {
    Engine e(EngineConfig{});
    post(e, session_start("t1", "s1", 0));
    post(e, page_view("t1", "s1", 1, "/a", form_page()));
    const auto ws = e.workspace_copy();
    const auto q = ws.model.find_element(ws.model.pages()[0].id, ElementKind::input, "f.q")->value;
    json overlapping = json::array({json{{"label", "a"}, {"lo", 0}, {"hi", 10}}, json{{"label", "b"}, {"lo", 5}, {"hi", 20}}});
    try {
        e.admin("ecs", json{{"input", q}, {"ecs", overlapping}}, kLead);
        FAIL();
    } catch (const ValidationError& err) {
        EXPECT_EQ(err.field(), "ecs");
    }
    EXPECT_THROW(e.admin("ecs", json{{"input", q}, {"range", {{"lo", 0}, {"hi", 5}}},
                                     {"ecs", json::array({json{{"lo", 0}, {"hi", 9}}})}},
                         kLead),
                 ValidationError);
    EXPECT_FALSE(e.workspace_copy().model.element(ElementId{q}).declared_range);
    e.admin("ecs", json{{"input", q}, {"range", {{"lo", 0}, {"hi", 99}}},
                        {"ecs", json::array({json{{"lo", 0}, {"hi", 49}}, json{{"lo", 50}, {"hi", 99}}})}},
            kLead);
    EXPECT_EQ(e.workspace_copy().model.element(ElementId{q}).ecs.size(), 2u);
}

TEST(Engine, PriorityEditChangesPrioNewTopSuggestion) {
    Engine e(EngineConfig{});
    post(e, session_start("t1", "s1", 0));
    post(e, page_view("t1", "s1", 1, "/a", {link("l1"), link("l2")}));
    e.admin("strategy", json{{"tester", "t1"}, {"navigational", {"PRIO_NEW"}}}, kLead);
    auto top = [&] {
        return e.testcase("t1", std::nullopt, tester("t1")).at("suggestions")[0]["items"][0]["locator"].get<std::string>();
    };
    EXPECT_EQ(top(), "l1");
    const auto ws = e.workspace_copy();
    const auto l2 = ws.model.find_element(ws.model.pages()[0].id, ElementKind::link, "l2")->value;
    e.admin("priority", json{{"element", l2}, {"priority", 4}}, kLead);
    EXPECT_EQ(top(), "l2");
}

TEST(Engine, LiveFramesAndInvalidation) {
    Engine e(EngineConfig{});
    std::vector<json> t1_frames, t2_frames;
    auto s1 = e.subscribe("t1", [&](const json& f) { t1_frames.push_back(f); });
    e.subscribe("t2", [&](const json& f) { t2_frames.push_back(f); });
    post(e, session_start("t1", "s1", 0));
    post(e, session_start("t2", "s2", 0));
    post(e, page_view("t2", "s2", 1, "/a", form_page()));
    t2_frames.clear();
    post(e, page_view("t1", "s1", 2, "/a", form_page()));
    ASSERT_FALSE(t1_frames.empty());
    EXPECT_EQ(t1_frames.back().at("type"), "delta");
    ASSERT_EQ(t2_frames.size(), 1u);
    EXPECT_EQ(t2_frames[0].at("type"), "testcase_invalidated");
    EXPECT_EQ(t2_frames[0].at("payload").at("reason"), "model_changed");

    e.unsubscribe(s1);
    const auto n = t1_frames.size();
    post(e, activate("t1", "s1", 3, "home"));
    EXPECT_EQ(t1_frames.size(), n);

    t2_frames.clear();
    e.admin("strategy", json{{"tester", "t2"}}, kLead);
    ASSERT_EQ(t2_frames.size(), 1u);
    EXPECT_EQ(t2_frames[0].at("payload").at("reason"), "strategy");
}

TEST(Engine, GeneratedCombinationsSurviveRestart) {
    TempDir dir;
    EngineConfig cfg;
    cfg.snapshot_every = 3;
    json first;
    {
        Engine e(cfg, dir.path());
        post(e, session_start("t1", "s1", 0));
        post(e, page_view("t1", "s1", 1, "/a", form_page()));
        const auto ws = e.workspace_copy();
        const PageId p = ws.model.pages()[0].id;
        const auto q = ws.model.find_element(p, ElementKind::input, "f.q")->value;
        const auto go = ws.model.find_element(p, ElementKind::action, "f.go")->value;
        e.admin("ecs", json{{"input", q}, {"ecs", json::array({json{{"lo", 0}, {"hi", 9}}, json{{"lo", 10}, {"hi", 19}}})}}, kLead);
        auto gen = e.admin("cit_generate", json{{"action", go}}, kLead);
        EXPECT_EQ(gen.at("combinations"), 2);
        e.admin("strategy", json{{"tester", "t1"}, {"data_strategy", "DATA_NEW_GENERATED"}}, kLead);
        first = e.testcase("t1", std::nullopt, tester("t1")).at("data");
        EXPECT_EQ(first[0].at("pipeline_index"), 0);
    }
    Engine restored(cfg, dir.path());
    EXPECT_EQ(restored.testcase("t1", std::nullopt, tester("t1")).at("data"), first);
}

TEST(Engine, MetricsReadDefectLogFromStore) {
    TempDir dir;
    Engine e(EngineConfig{}, dir.path());
    post(e, session_start("t1", "s1", 0));
    post(e, page_view("t1", "s1", 1'000, "/a", form_page()));
    post(e, page_view("t1", "s1", 5'000, "/b", {link("x")}));
    post(e, session_end("t1", "s1", 9'000));
    {
        std::ofstream out(dir / "activations.ndjson");
        out << defect_to_ndjson_line({2'000, "D1", std::string("s1")}) << "\n";
    }
    auto m = e.metrics("team");
    EXPECT_EQ(m.at("pooled").at("pages"), 2);
    EXPECT_EQ(m.at("pooled").at("defects"), 1);
    EXPECT_EQ(m.at("pooled").at("tau"), 8);
    EXPECT_THROW(e.metrics("ghost"), NotFound);
}

TEST(Engine, HealthCounts) {
    Engine e(EngineConfig{});
    post(e, session_start("t1", "s1", 0));
    post(e, page_view("t1", "s1", 1, "/a", form_page()));
    auto h = e.health();
    EXPECT_EQ(h.at("status"), "ok");
    EXPECT_EQ(h.at("pages"), 1);
    EXPECT_EQ(h.at("elements"), 3);
    EXPECT_EQ(h.at("testers"), 1);
}

}  // namespace
}  // namespace wayfinder
