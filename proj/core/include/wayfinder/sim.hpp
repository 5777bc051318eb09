#pragma once

#include <wayfinder/analytics.hpp>
#include <wayfinder/engine.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wayfinder::sim {

/// Inclusive integer range used by SUT shape parameters.
struct Span {
    int lo = 1;
    int hi = 1;
};

struct SutShape {
    int pages = 50;
    Span links{2, 4};         // own links per page
    Span actions{0, 2};       // forms per page
    Span inputs{1, 3};        // inputs per form
    Span ecs{2, 3};           // equivalence classes per input
    int master_links = 3;     // header links injected on every page
    int defects = 19;
    double conditional_share = 0.5;  // share of action defects that need a specific EC
    int value_max = 999;             // inputs accept 0..value_max

    void validate() const;
};

void to_json(nlohmann::json& j, const SutShape& s);
void from_json(const nlohmann::json& j, SutShape& s);

struct SimInput {
    std::string locator;
    std::vector<Interval> ecs;
};

struct SimElement {
    ElementKind kind = ElementKind::link;
    std::string locator;
    std::string text;
    std::uint32_t target = 0;  // page reached by activating the element
    std::string form_group;
    std::vector<SimInput> inputs;  // actions only
};

struct SimPage {
    std::string url;
    std::string title;
    std::vector<SimElement> links;
    std::vector<SimElement> actions;
};

struct DefectMarker {
    std::string defect;
    std::uint32_t page = 0;
    ElementKind kind = ElementKind::link;
    std::size_t index = 0;  // into SimPage::links or SimPage::actions
    /// (input index, EC index) the submitted value must fall into.
    std::optional<std::pair<std::size_t, std::size_t>> condition;
};

struct SyntheticSut {
    std::uint64_t seed = 0;
    SutShape shape;
    std::vector<SimPage> pages;  // pages[0] is the home page
    std::vector<SimElement> master;
    std::vector<DefectMarker> defects;

    /// What a browser extension would report for the page: master header, links, forms.
    std::vector<ElementObservation> observations(std::uint32_t page) const;
    /// Element by locator on `page`, master elements included.
    const SimElement* find(std::uint32_t page, const std::string& locator) const;
    const DefectMarker* marker(std::uint32_t page, ElementKind kind, std::size_t index) const;
    PageCounts counts(std::uint32_t page) const;

    nlohmann::json to_json() const;
};

/// Spanning tree from page 0 plus random extra links; throws ValidationError for
/// unsatisfiable shapes (for instance more defects than own elements).
SyntheticSut generate_synthetic_sut(const SutShape& shape, std::uint64_t seed);

enum class PolicyKind { random_walk, guided };

struct AgentPolicy {
    PolicyKind kind = PolicyKind::random_walk;
    NavStrategy strategy = NavStrategy::rank_new;
    RankingFn ranking_fn = RankingFn::element_type;
    DataStrategy data_strategy = DataStrategy::new_random;
};

void to_json(nlohmann::json& j, const AgentPolicy& p);
void from_json(const nlohmann::json& j, AgentPolicy& p);

/// Log-normal step durations.
struct DurationModel {
    double median_s = 20.0;
    double sigma = 0.5;
};

struct AgentSpec {
    TesterId tester;
    AgentPolicy policy;
    std::uint64_t seed = 0;
};

struct AgentTrace {
    TesterId tester;
    std::vector<ActivityEvent> events;
};

struct SimRun {
    std::vector<AgentTrace> agents;
    std::vector<DefectActivation> activations;
    /// Elements activated by guided agents that the service did not list (must stay 0).
    std::size_t illegal_activations = 0;
};

/// Drives the agents against one engine for `steps` steps each, earliest clock first. Every
/// agent opens one session, views the home page, takes its steps and closes the session.
SimRun simulate_team(const SyntheticSut& sut, Engine& engine, const std::vector<AgentSpec>& agents, std::size_t steps,
                     const DurationModel& durations);

/// Single-agent convenience wrapper.
SimRun simulate_tester(const SyntheticSut& sut, Engine& engine, const AgentSpec& agent, std::size_t steps,
                       const DurationModel& durations);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ArmConfig {
    std::string name;
    int agents = 1;
    AgentPolicy policy;
    /// Budget split: "per_agent" gives every agent the full step budget, "shared"
    /// divides it evenly across the arm's agents.
    bool shared_budget = false;

    std::size_t steps_per_agent(std::size_t budget) const {
        return shared_budget ? budget / static_cast<std::size_t>(agents) : budget;
    }
};

struct Comparison {
    std::string aut;
    std::string man;
};

struct ExperimentConfig {
    SutShape sut;
    std::vector<std::uint64_t> seeds;
    std::size_t steps = 200;
    DurationModel durations;
    std::int64_t idle_threshold_s = 900;
    std::vector<ArmConfig> arms;
    std::vector<Comparison> compare;  // defaults to every later arm against the first
    unsigned threads = 0;             // 0 = hardware concurrency

    /// Accepts "seeds" as a list or as a count (1..n), plus optional "base_seed".
    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct RunResult {
    std::string arm;
    std::uint64_t seed = 0;
    MetricReport report;  // team scope over the arm's agents
    std::size_t illegal_activations = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunResult> runs;  // arm-major, then seed order

    /// Arm means: counts and tau averaged over seeds, the rest derived from them.
    MetricValues arm_mean(const std::string& arm) const;
    const RunResult& run(const std::string& arm, std::uint64_t seed) const;

    std::string to_csv() const;
    std::string to_table() const;
    std::string seeds_csv() const;
};

/// (AUT - MAN) / AUT; nullopt when AUT is zero and MAN is not.
std::optional<double> diff(double aut, double man);

/// Runs every (arm, seed) pair. When `out` is set, writes per-run event logs and the reports.
ExperimentReport run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out = {});

/// Rebuilds the report of a simulate output directory from its event and activation logs.
ExperimentReport report_from_runs(const std::filesystem::path& dir);

void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace wayfinder::sim
