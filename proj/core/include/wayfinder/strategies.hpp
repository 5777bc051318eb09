#pragma once

#include <wayfinder/model.hpp>
#include <wayfinder/testdata.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wayfinder {

/// Ranking constants. Defaults are 256; last_time_s is the RT_TIME staleness threshold.
struct WeightConfig {
    std::uint32_t input_elements = 256;   // 0..512
    std::uint32_t action_elements = 256;  // 1..512
    std::uint32_t link_elements = 256;    // 1..512
    std::uint32_t page_priority = 256;    // 0..512
    std::int64_t last_time_s = 86400;

    /// Throws ValidationError naming the offending field.
    void validate() const;

    friend bool operator==(const WeightConfig&, const WeightConfig&) = default;
};

void to_json(nlohmann::json& j, const WeightConfig& w);
/// Missing keys keep their defaults; the result is validated.
void from_json(const nlohmann::json& j, WeightConfig& w);

enum class NavStrategy { rank_new, rank_new_team, rt_time, prio_new, prio_new_team };
enum class RankingFn { element_type, page_complexity };

std::string_view to_string(NavStrategy s);  // e.g. "RANK_NEW_TEAM"
NavStrategy nav_strategy_from_string(std::string_view text);
std::string_view to_string(RankingFn f);  // "ElementTypeRank" | "PageComplexityRank"
RankingFn ranking_fn_from_string(std::string_view text);

struct StrategyConfig {
    TesterId tester;
    std::vector<NavStrategy> navigational{NavStrategy::rank_new};
    RankingFn ranking_fn = RankingFn::element_type;
    DataStrategy data_strategy = DataStrategy::new_random;
    WeightConfig weights;

    void validate() const;

    friend bool operator==(const StrategyConfig&, const StrategyConfig&) = default;
};

void to_json(nlohmann::json& j, const StrategyConfig& c);
void from_json(const nlohmann::json& j, StrategyConfig& c);

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

/// 1 for links, 2 for actions; inputs are rejected.
std::uint64_t element_type_rank(ElementKind kind);

/// ((|I|·iW + |A|)·aW + |L|)·lW, exact. Throws std::overflow_error beyond 64 bits.
std::uint64_t page_complexity_rank(const PageCounts& counts, const WeightConfig& weights);

/// (((prio·pW + |I|)·iW + |A|)·aW + |L|)·lW, exact; prio 0 means unset.
std::uint64_t priority_and_complexity_rank(int prio, const PageCounts& counts, const WeightConfig& weights);

// ---------------------------------------------------------------------------
// Suggestions
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxSuggestions = 5;

struct Suggestion {
    ElementId element;
    ElementKind kind = ElementKind::link;
    bool on_master = false;
    int tier = 0;
    std::uint64_t score = 0;
    std::uint64_t visits_t = 0;
    std::uint64_t visits_T = 0;
    bool fallback = false;
    std::string rationale;

    friend bool operator==(const Suggestion&, const Suggestion&) = default;
};

/// Ordered suggestions (at most five) for `page` under one strategy. `now` is
/// the reference time for RT_TIME. When the strategy filter removes every
/// candidate, the least-visited candidates are returned with fallback set.
std::vector<Suggestion> suggest(const SutModel& model, const TesterId& tester, PageId page, NavStrategy strategy,
                                const StrategyConfig& config, Timestamp now);

// ---------------------------------------------------------------------------
// Navigational test case
// ---------------------------------------------------------------------------

struct LinkEntry {
    ElementId id;
    std::string locator;
    std::string text;
    bool on_master = false;
    std::uint64_t visits_t = 0;
    std::uint64_t visits_T = 0;
    int priority = 0;
    std::optional<int> target_priority;
    std::vector<PageId> targets;
    bool out_of_band = false;
};

struct ActionEntry {
    ElementId id;
    std::string locator;
    std::string text;
    bool on_master = false;
    std::uint64_t visits_t = 0;
    std::uint64_t visits_T = 0;
    int priority = 0;
    std::vector<ElementId> inputs;
    bool out_of_band = false;
};

struct SuggestionGroup {
    NavStrategy strategy = NavStrategy::rank_new;
    std::vector<Suggestion> items;
    bool fallback = false;
};

struct ActionErrors {
    ElementId action;
    std::vector<ErrorCombination> combinations;
};

struct NoteEntry {
    std::string target;  // "page:<id>" or "element:<id>"
    std::string text;
};

struct NavigationalTestCase {
    TesterId tester;
    PageId page;
    std::string url;
    std::string title;
    int page_priority = 0;
    std::uint64_t page_visits_t = 0;
    std::uint64_t page_visits_T = 0;
    std::vector<LinkEntry> links;
    std::vector<ActionEntry> actions;
    std::vector<SuggestionGroup> suggestions;
    std::vector<DataSuggestion> data_block;
    std::vector<ActionErrors> error_combinations;
    std::vector<NoteEntry> notes;

    nlohmann::json to_json(const SutModel& model) const;
};

/// Assembles the full guidance record for `tester` standing on `page`.
/// `pipelines` may be null when no combinations were imported or generated.
NavigationalTestCase build_navigational_test_case(const SutModel& model, const TesterId& tester, PageId page,
                                                  const StrategyConfig& config, Timestamp now,
                                                  const PipelineMap* pipelines, std::uint64_t seed);

}  // namespace wayfinder
