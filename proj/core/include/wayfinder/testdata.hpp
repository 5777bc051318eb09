#pragma once

#include <wayfinder/model.hpp>

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace wayfinder {

enum class DataStrategy {
    repeat_last,
    repeat_random,
    repeat_random_team,
    new_random,
    new_random_team,
    new_generated,
    new_generated_team,
};

std::string_view to_string(DataStrategy strategy);  // e.g. "DATA_NEW_RANDOM_TEAM"
DataStrategy data_strategy_from_string(std::string_view text);

inline bool is_team(DataStrategy s) {
    return s == DataStrategy::repeat_random_team || s == DataStrategy::new_random_team ||
           s == DataStrategy::new_generated_team;
}

// ---------------------------------------------------------------------------
// Combination pipeline
// ---------------------------------------------------------------------------

struct GeneratedCombination {
    Combination values;
    /// Inputs whose value was drawn from the range because no EC was defined.
    std::set<ElementId> without_ec;

    bool generated_without_ec() const { return !without_ec.empty(); }

    friend bool operator==(const GeneratedCombination&, const GeneratedCombination&) = default;
};

/// Ordered queue of prepared combinations for one action, with serving state.
///
/// A combination handed to a tester stays assigned to them (and is returned
/// again on refresh) until they submit the action.
struct CombinationPipeline {
    ElementId action;
    std::vector<GeneratedCombination> queue;
    std::map<TesterId, std::set<std::size_t>> served;
    std::set<std::size_t> served_team;
    std::map<TesterId, std::size_t> assigned;

    /// Index take() would return, without changing state.
    std::optional<std::size_t> peek(const TesterId& tester, bool team) const;
    /// Assigns and marks served. nullopt when the pipeline is exhausted for the caller.
    std::optional<std::size_t> take(const TesterId& tester, bool team);
    /// Clears the caller's assignment once the combination has been used.
    void release(const TesterId& tester);

    friend bool operator==(const CombinationPipeline&, const CombinationPipeline&) = default;
};

nlohmann::json pipeline_to_json(const CombinationPipeline& pipeline);
CombinationPipeline pipeline_from_json(const nlohmann::json& j);

using PipelineMap = std::map<ElementId, CombinationPipeline>;

// ---------------------------------------------------------------------------
// Suggestions
// ---------------------------------------------------------------------------

struct InputSuggestion {
    ElementId input;
    std::string locator;
    std::optional<std::string> value;
    std::optional<EquivalenceClass> ec;
    bool exhausted = false;  // every EC / range value already used; least-used returned
    bool random_value = false;  // drawn from range(i), no EC involved
    std::vector<std::string> data_t;
    std::vector<std::string> data_T;
};

struct DataSuggestion {
    ElementId action;
    DataStrategy strategy = DataStrategy::repeat_last;
    std::vector<InputSuggestion> inputs;
    std::optional<std::size_t> pipeline_index;
    bool pipeline_empty = false;
    bool generated_without_ec = false;
    std::vector<Combination> combos_t;  // data(I_a)_t
    std::vector<Combination> combos_T;  // data(I_a)_T

    nlohmann::json to_json(const SutModel& model) const;
};

/// Computes the per-input suggestion for one action under one strategy.
/// Pure: randomness comes from `seed`, pipeline serving state is only read.
/// Returns an empty suggestion when the action has no form inputs.
DataSuggestion suggest_data(const SutModel& model, const TesterId& tester, ElementId action, DataStrategy strategy,
                            const CombinationPipeline* pipeline, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Combinatorial import and generation
// ---------------------------------------------------------------------------

enum class CitFormat { csv, json };

CitFormat cit_format_from_string(std::string_view text);

/// RFC 4180 style: quoted fields may contain commas, quotes ("") and newlines.
/// Throws ValidationError naming the 1-based line of a malformed record.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Builds a fresh pipeline from a CSV or JSON document. Columns are input
/// locators or numeric input ids and must cover the action's form inputs exactly.
CombinationPipeline import_cit(const SutModel& model, ElementId action, std::string_view document, CitFormat format);

struct PairwiseInput {
    ElementId input;
    std::vector<EquivalenceClass> ecs;
    Range range = default_range();  // used only when ecs is empty
};

/// Greedy pairwise covering suite over EC representatives. Inputs without
/// ECs get one seeded random value from their range, flagged in `without_ec`.
/// Never larger than the full factorial.
std::vector<GeneratedCombination> generate_pairwise(const std::vector<PairwiseInput>& inputs, std::uint64_t seed);

/// Runs the generator over the action's current form inputs.
CombinationPipeline generate_pipeline(const SutModel& model, ElementId action, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Error combinations
// ---------------------------------------------------------------------------

void record_error_combination(SutModel& model, ElementId action, Combination combination, Outcome outcome,
                              const TesterId& tester = {}, Timestamp ts = 0);

struct ErrorCombination {
    Combination values;
    Outcome outcome = Outcome::error_page;  // first observed error outcome
    std::uint64_t occurrences = 0;
    std::set<TesterId> testers;
};

/// Distinct error-yielding combinations of the action, in first-seen order.
std::vector<ErrorCombination> error_combinations(const SutModel& model, ElementId action);

}  // namespace wayfinder
