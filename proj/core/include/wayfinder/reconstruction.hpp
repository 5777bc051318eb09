#pragma once

#include <wayfinder/model.hpp>
#include <wayfinder/signature.hpp>

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace wayfinder {

// ---------------------------------------------------------------------------
// Event wire protocol
// ---------------------------------------------------------------------------

enum class EventKind {
    session_start,
    page_view,
    page_peek,
    element_activated,
    form_submitted,
    error_observed,
    session_end,
};

std::string_view to_string(EventKind kind);  // wire spelling, e.g. "PAGE_VIEW"
EventKind event_kind_from_string(std::string_view text);

enum class PageClass { none, fatal_page, error_message };

std::string_view to_string(PageClass cls);

struct PageViewPayload {
    std::string url;
    std::string title;
    std::string excerpt;  // optional page text excerpt used by error patterns
    std::vector<ElementObservation> elements;
};

struct ActivationPayload {
    std::string locator;
    ElementKind kind = ElementKind::link;
};

struct FormEntry {
    std::string input_locator;
    std::string value;
};

struct FormPayload {
    std::string action_locator;
    std::vector<FormEntry> entries;
};

struct PeekPayload {
    std::string link_locator;
    PageCounts dest_counts;
};

struct ErrorPayload {
    PageClass cls = PageClass::fatal_page;
    std::string excerpt;
};

using EventPayload =
    std::variant<std::monostate, PageViewPayload, ActivationPayload, FormPayload, PeekPayload, ErrorPayload>;

struct ActivityEvent {
    EventKind kind = EventKind::session_start;
    TesterId tester;
    SessionId session;
    Timestamp ts = 0;
    EventPayload payload;
};

/// Validates and decodes one wire object. Throws ValidationError naming the bad field.
ActivityEvent parse_event(const nlohmann::json& j);
nlohmann::json event_to_json(const ActivityEvent& event);
/// Stable hash of the event's canonical encoding.
std::uint64_t event_fingerprint(const ActivityEvent& event);

// ---------------------------------------------------------------------------
// Error-page recognition
// ---------------------------------------------------------------------------

struct ErrorPattern {
    enum class Field { url, title, text };

    Field field = Field::title;
    std::string pattern;
    PageClass tag = PageClass::fatal_page;
    std::regex compiled;
};

/// Ordered pattern rules; the first match wins.
class ErrorPatternSet {
public:
    ErrorPatternSet() = default;

    /// Throws ValidationError if the pattern does not compile or the tag is unknown.
    void add(ErrorPattern::Field field, std::string pattern, PageClass tag);

    const std::vector<ErrorPattern>& rules() const { return rules_; }
    bool empty() const { return rules_.empty(); }

    static ErrorPatternSet from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

private:
    std::vector<ErrorPattern> rules_;
};

PageClass classify_error_page(std::string_view url, std::string_view title, std::string_view text_excerpt,
                              const ErrorPatternSet& patterns);

// ---------------------------------------------------------------------------
// Master pages
// ---------------------------------------------------------------------------

/// An element group shared by enough visited pages to be factored out.
struct MasterCandidate {
    std::vector<ElementSignature> group;
    std::vector<PageId> pages;

    friend bool operator==(const MasterCandidate&, const MasterCandidate&) = default;
};

/// Groups own-element signatures by the exact set of visited pages carrying them and
/// keeps groups present on at least share_threshold of the visited non-master pages.
/// Ordered by descending page count, then by page set.
std::vector<MasterCandidate> find_master_candidates(const SutModel& model, double share_threshold);

/// Attaches visited pages to existing masters they fully contain, then factors every
/// candidate into a new master page. Idempotent.
std::vector<FactoringResult> detect_master_pages(SutModel& model, double share_threshold);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct ReconstructionConfig {
    NormalizationConfig normalization;
    ErrorPatternSet error_patterns;
    double master_threshold = 0.8;
    std::size_t master_interval = 25;  // re-run master detection every N new pages
    Timestamp reorder_window_ms = 5000;
};

struct ModelDelta {
    TesterId tester;
    SessionId session;
    EventKind kind = EventKind::session_start;
    bool duplicate = false;
    std::optional<PageId> current_page;
    std::vector<PageId> created_pages;
    std::vector<PageId> visited_pages;
    std::vector<ElementId> created_elements;
    std::vector<ElementId> out_of_band;
    std::vector<ElementId> visited_elements;
    std::size_t new_transitions = 0;
    std::optional<std::pair<ElementId, std::size_t>> combination;  // (action, record index)
    std::vector<PageId> error_pages;
    std::vector<PageId> factored_masters;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
};

struct SessionState {
    TesterId tester;
    bool open = true;
    Timestamp started = 0;
    Timestamp ended = 0;
    std::optional<PageId> current_page;
    std::optional<ElementId> pending_activation;
    std::optional<std::pair<ElementId, std::size_t>> pending_combination;
    bool combination_viewed = false;

    friend bool operator==(const SessionState&, const SessionState&) = default;
};

/// Turns activity events into model mutations. Exact duplicate events are ignored.
class Reconstructor {
public:
    explicit Reconstructor(ReconstructionConfig config = {});

    /// Applies one event. Throws ValidationError for unknown sessions or
    /// mismatched testers; in that case the model is untouched.
    ModelDelta ingest(SutModel& model, const ActivityEvent& event);

    const ReconstructionConfig& config() const { return config_; }
    const std::map<SessionId, SessionState>& sessions() const { return sessions_; }

    nlohmann::json state_to_json() const;
    void state_from_json(const nlohmann::json& j);

    bool same_state(const Reconstructor& other) const;
    bool has_seen(const ActivityEvent& event) const { return seen_.count(event_fingerprint(event)) > 0; }

private:
    ReconstructionConfig config_;
    std::map<SessionId, SessionState> sessions_;
    std::set<std::uint64_t> seen_;
    std::size_t pages_since_scan_ = 0;
};

/// Enforces the per-session out-of-order window.
///
/// Events newer than everything seen for their session are appended; events up to
/// the window older are admitted for re-ordering; older ones raise Conflict.
class EventSequencer {
public:
    enum class Verdict { append, reorder };

    explicit EventSequencer(Timestamp window_ms = 5000) : window_ms_(window_ms) {}

    /// Throws Conflict (too late) or ValidationError (unknown or closed session).
    Verdict check(const ActivityEvent& event) const;
    void commit(const ActivityEvent& event);

    nlohmann::json state_to_json() const;
    void state_from_json(const nlohmann::json& j);

private:
    struct SessionClock {
        Timestamp max_ts = 0;
        std::optional<Timestamp> end_ts;
    };
    Timestamp window_ms_;
    std::map<SessionId, SessionClock> clocks_;
};

/// Orders events so each session's events are ascending in time: an event older
/// than already-placed events of its session is moved in front of the first of
/// them (but never before the session's start). Other entries keep arrival order.
/// Works on indices so callers can reorder heterogeneous logs.
std::vector<std::size_t> canonical_order(const std::vector<const ActivityEvent*>& arrivals);

}  // namespace wayfinder
