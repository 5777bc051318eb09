#pragma once

#include <wayfinder/model.hpp>
#include <wayfinder/reconstruction.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace wayfinder {

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

/// Time on one page: from a PAGE_VIEW to the next PAGE_VIEW or SESSION_END of
/// the same session.
struct Step {
    TesterId tester;
    SessionId session;
    Timestamp start = 0;
    Timestamp end = 0;
    std::optional<PageId> page;  // resolved against the model, when known
    std::vector<ElementId> links;
    std::vector<ElementId> actions;
    bool closed = false;  // false for a final step whose session never ended
    bool idle = false;    // duration above the idle threshold

    Timestamp duration() const { return end - start; }
    bool included() const { return closed && !idle; }
};

/// Splits the log into steps, resolving pages and elements through `model`.
/// Events are grouped by session and ordered by timestamp (stable).
std::vector<Step> extract_steps(const SutModel& model, const std::vector<ActivityEvent>& events,
                                const NormalizationConfig& normalization, Timestamp idle_threshold_ms);

// ---------------------------------------------------------------------------
// Defect activations
// ---------------------------------------------------------------------------

struct DefectActivation {
    Timestamp ts = 0;
    std::string defect;
    std::optional<SessionId> session;
};

/// One JSON object per line: {"ts", "defect", "session"?}. Blank lines are skipped;
/// malformed lines raise ValidationError naming the line.
std::vector<DefectActivation> parse_defect_log(std::string_view ndjson);
std::string defect_to_ndjson_line(const DefectActivation& a);

struct DefectJoin {
    /// Per activation, index into the step list, or nullopt when unattributable.
    std::vector<std::optional<std::size_t>> step_of;
    std::vector<std::size_t> unattributed;
};

/// Attributes each activation to the latest step of its session starting at or before it.
DefectJoin join_defect_log(const std::vector<Step>& steps, const std::vector<DefectActivation>& activations);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricValues {
    double pages = 0, u_pages = 0, r_pages = 0;
    double links = 0, u_links = 0, r_links = 0;
    double actions = 0, u_actions = 0, r_actions = 0;
    double time_page = 0, time_u_page = 0;
    double time_link = 0, time_u_link = 0;
    double time_action = 0, time_u_action = 0;
    double defects = 0, u_defects = 0, time_defect = 0, time_u_defect = 0;
    double tau = 0;  // seconds

    /// Derives ratios and times from the count fields and tau.
    void derive();

    static const std::array<std::pair<const char*, double MetricValues::*>, 20>& fields();

    nlohmann::ordered_json to_json() const;
};

struct MetricConfig {
    Timestamp idle_threshold_ms = 900'000;
    NormalizationConfig normalization;
};

struct MetricReport {
    std::string scope;  // "team" or a tester id
    std::size_t participants = 0;
    /// Each count averaged over testers; ratios and times from those averages.
    MetricValues per_tester_mean;
    /// Steps of all testers in scope pooled; uniqueness across the scope.
    MetricValues pooled;
    std::map<TesterId, MetricValues> per_tester;
    std::size_t total_steps = 0;
    std::size_t excluded_steps = 0;
    std::size_t open_steps = 0;  // discarded: session never ended
    double excluded_step_ratio = 0;  // percent of closed steps
    std::size_t unattributed_defects = 0;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

/// scope is "team" or a tester id.
MetricReport compute_metrics(const SutModel& model, const std::vector<ActivityEvent>& events,
                             const std::vector<DefectActivation>& defects, const std::string& scope,
                             const MetricConfig& config = {});

// ---------------------------------------------------------------------------
// Graph export
// ---------------------------------------------------------------------------

/// {"nodes": [...], "edges": [...]} ordered by id; byte-stable for equal models.
nlohmann::ordered_json export_graph(const SutModel& model);

}  // namespace wayfinder
