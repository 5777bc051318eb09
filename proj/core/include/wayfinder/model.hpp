#pragma once

#include <wayfinder/common.hpp>
#include <wayfinder/signature.hpp>

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace wayfinder {

// ---------------------------------------------------------------------------
// Ledgers
// ---------------------------------------------------------------------------

/// Per-tester and team visit counts for a page, link or action.
/// team_total always equals the sum of per_tester.
struct VisitLedger {
    std::map<TesterId, std::uint64_t> per_tester;
    std::uint64_t team_total = 0;
    std::map<TesterId, Timestamp> last_visit;

    void record(const TesterId& tester, Timestamp ts);
    void merge(const VisitLedger& other);

    std::uint64_t visits(const TesterId& tester) const;
    std::optional<Timestamp> last_visit_of(const TesterId& tester) const;

    friend bool operator==(const VisitLedger&, const VisitLedger&) = default;
};

// ---------------------------------------------------------------------------
// Input domains
// ---------------------------------------------------------------------------

/// Closed interval over numeric values. When integral, only whole numbers belong.
struct Interval {
    double lo = 0;
    double hi = 0;
    bool integral = true;

    friend bool operator==(const Interval&, const Interval&) = default;
};

struct Enumeration {
    std::vector<std::string> values;

    friend bool operator==(const Enumeration&, const Enumeration&) = default;
};

using Range = std::variant<Interval, Enumeration>;

/// Range assumed for inputs whose range was never declared.
Range default_range();

bool range_contains(const Range& range, std::string_view value);

/// A sub-interval of an interval range, or one or more values of an enumeration range.
struct EquivalenceClass {
    std::string label;
    Range domain;

    bool contains(std::string_view value) const { return range_contains(domain, value); }
    /// Interval midpoint (floored for integral intervals) or the first enumerated value.
    std::string representative() const;

    friend bool operator==(const EquivalenceClass&, const EquivalenceClass&) = default;
};

/// Parses a numeric literal; nullopt for anything else.
std::optional<double> parse_number(std::string_view text);
std::string format_number(double value, bool integral);

// ---------------------------------------------------------------------------
// Pages and elements
// ---------------------------------------------------------------------------

struct PageCounts {
    std::uint64_t inputs = 0;
    std::uint64_t actions = 0;
    std::uint64_t links = 0;

    friend bool operator==(const PageCounts&, const PageCounts&) = default;
};

struct UiElement {
    ElementId id;
    ElementKind kind = ElementKind::link;
    ElementSignature signature;
    std::string locator;
    std::string text;
    PageId owning_page;
    std::string form_group;
    int priority = 0;  // 0 = unset
    std::string notes;
    VisitLedger visits;  // links and actions only
    std::optional<Range> declared_range;  // inputs only
    std::vector<EquivalenceClass> ecs;  // inputs only
    std::optional<PageCounts> peek;  // links only: destination summary
    bool out_of_band = false;
    std::optional<ElementId> merged_into;  // set when factored into a master page

    friend bool operator==(const UiElement&, const UiElement&) = default;
};

struct Page {
    PageId id;
    PageSignature signature;
    std::string url;
    std::string title;
    std::vector<ElementId> links;
    std::vector<ElementId> actions;
    std::vector<ElementId> inputs;
    std::vector<PageId> master_refs;
    int priority = 0;  // 0 = unset
    std::string notes;
    VisitLedger visits;
    bool is_master = false;

    const std::vector<ElementId>& elements(ElementKind kind) const;
    std::vector<ElementId>& elements(ElementKind kind);

    friend bool operator==(const Page&, const Page&) = default;
};

// ---------------------------------------------------------------------------
// Data ledger
// ---------------------------------------------------------------------------

enum class Outcome { normal, error_page, error_message };

std::string_view to_string(Outcome outcome);
Outcome outcome_from_string(std::string_view text);

/// Input id -> entered value.
using Combination = std::map<ElementId, std::string>;

struct DataEntry {
    std::string value;
    Timestamp ts = 0;

    friend bool operator==(const DataEntry&, const DataEntry&) = default;
};

struct CombinationRecord {
    TesterId tester;
    Timestamp ts = 0;
    Combination values;
    Outcome outcome = Outcome::normal;

    friend bool operator==(const CombinationRecord&, const CombinationRecord&) = default;
};

struct DataLedger {
    std::map<ElementId, std::map<TesterId, std::vector<DataEntry>>> inputs;
    std::map<ElementId, std::vector<CombinationRecord>> combinations;  // keyed by action

    friend bool operator==(const DataLedger&, const DataLedger&) = default;
};

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

struct LinkTransition {
    PageId source;
    ElementId link;
    PageId target;
    std::uint64_t count = 0;

    friend bool operator==(const LinkTransition&, const LinkTransition&) = default;
};

struct ActionTransition {
    PageId source;
    ElementId action;
    PageId target;
    std::vector<std::size_t> combinations;  // indices into the action's combination records
    std::uint64_t count = 0;

    friend bool operator==(const ActionTransition&, const ActionTransition&) = default;
};

using VisitTarget = std::variant<PageId, ElementId>;

struct UpsertResult {
    PageId page;
    bool created = false;
    std::vector<ElementId> new_elements;
};

struct FactoringResult {
    PageId master;
    std::vector<ElementSignature> group;
    std::vector<PageId> pages;
    std::optional<PageId> nested_in;
};

// ---------------------------------------------------------------------------
// SutModel
// ---------------------------------------------------------------------------

/// Screen-flow model reconstructed from tester activity.
///
/// Holds pages, their link/action/input elements, master pages, transitions,
/// visit ledgers, equivalence classes, priorities and entered test data.
/// Ids are dense and assigned in insertion order, so replaying the same
/// mutations always yields the same ids.
class SutModel {
public:
    // -- queries ----------------------------------------------------------
    std::span<const Page> pages() const { return pages_; }
    std::span<const UiElement> elements() const { return elements_; }
    const Page& page(PageId id) const;
    const UiElement& element(ElementId id) const;
    bool has_page(PageId id) const { return id.value < pages_.size(); }
    bool has_element(ElementId id) const { return id.value < elements_.size(); }

    /// Follows merged_into links to the live element.
    ElementId resolve(ElementId id) const;

    const std::set<PageId>& masters() const { return masters_; }
    std::optional<PageId> home_page() const { return home_page_; }
    const std::set<PageId>& error_pages() const { return error_pages_; }
    const std::set<TesterId>& team() const { return team_; }
    std::span<const LinkTransition> link_transitions() const { return link_transitions_; }
    std::span<const ActionTransition> action_transitions() const { return action_transitions_; }
    const DataLedger& data() const { return data_; }

    std::optional<PageId> find_page(const PageSignature& signature) const;
    std::optional<ElementId> find_element(PageId page, ElementKind kind, std::string_view locator) const;

    /// Master pages reachable through master_refs, transitively, in first-seen order.
    std::vector<PageId> effective_masters(PageId page) const;
    /// Own elements followed by master-page elements; no duplicates.
    std::vector<ElementId> effective_elements(PageId page, ElementKind kind) const;
    PageCounts counts(PageId page) const;
    /// Targets of all transition records sourced at the page.
    std::set<PageId> next_pages(PageId page) const;
    /// Inputs on the action's owning page (or its masters) sharing its form group.
    std::vector<ElementId> form_inputs(ElementId action) const;
    /// Known destination pages of a link, in first-observed order.
    std::vector<PageId> link_targets(ElementId link) const;

    std::vector<DataEntry> input_values(ElementId input, const TesterId* tester) const;

    // -- mutations --------------------------------------------------------
    void enroll(const TesterId& tester);

    /// Creates the page or unions the observed elements into the existing one.
    /// Elements already carried by an attached master page are not duplicated.
    UpsertResult upsert_page(const PageSignature& signature, std::span<const ElementObservation> elements,
                             std::string_view url = {}, std::string_view title = {});

    ElementId add_element(PageId page, const ElementObservation& observation, bool out_of_band);

    void record_visit(const TesterId& tester, VisitTarget target, Timestamp ts);

    /// Requires a lead role; prio in 1..5.
    void set_priority(VisitTarget target, int prio, Role caller);
    void set_note(VisitTarget target, std::string note);

    void declare_range(ElementId input, Range range);
    /// Replaces EC(i) atomically after checking containment and pairwise disjointness.
    void define_equivalence_classes(ElementId input, std::vector<EquivalenceClass> ecs);

    void set_peek(ElementId link, PageCounts counts);
    void set_home_page(PageId page);
    void mark_error_page(PageId page);

    void add_link_transition(PageId source, ElementId link, PageId target);
    void add_action_transition(PageId source, ElementId action, PageId target,
                               std::optional<std::size_t> combination);

    void record_input_value(ElementId input, const TesterId& tester, std::string value, Timestamp ts);
    /// Appends to the action's combination records; returns the record index.
    std::size_t record_combination(ElementId action, CombinationRecord record);
    void set_combination_outcome(ElementId action, std::size_t index, Outcome outcome);

    /// Factors the element-signature group found on `pages` into a new master page,
    /// or into the existing master `into`. Page-owned copies are merged into one
    /// element per signature; ledgers, data and transitions follow the survivor.
    FactoringResult factor_master(const std::vector<ElementSignature>& group, const std::vector<PageId>& pages,
                                  std::optional<PageId> into = std::nullopt);

    /// Throws std::logic_error describing the first broken structural invariant.
    void check_invariants() const;

    /// Compares model state; derived lookup indexes are ignored.
    friend bool operator==(const SutModel& a, const SutModel& b);

    friend void to_json(nlohmann::json& j, const SutModel& model);
    friend void from_json(const nlohmann::json& j, SutModel& model);

private:
    Page& page_mut(PageId id);
    UiElement& element_mut(ElementId id);
    VisitLedger& ledger_for(VisitTarget target);
    void rebuild_indexes();

    std::vector<Page> pages_;
    std::vector<UiElement> elements_;
    std::set<PageId> masters_;
    std::optional<PageId> home_page_;
    std::set<PageId> error_pages_;
    std::set<TesterId> team_;
    std::vector<LinkTransition> link_transitions_;
    std::vector<ActionTransition> action_transitions_;
    DataLedger data_;

    // (page, kind, locator) -> element, including locators that map onto master elements.
    std::map<std::tuple<PageId, ElementKind, std::string>, ElementId> locators_;

    std::map<PageSignature, PageId> by_signature_;  // derived
};

void to_json(nlohmann::json& j, const Range& range);
void from_json(const nlohmann::json& j, Range& range);
void to_json(nlohmann::json& j, const EquivalenceClass& ec);
void from_json(const nlohmann::json& j, EquivalenceClass& ec);
void to_json(nlohmann::json& j, const PageCounts& counts);
void from_json(const nlohmann::json& j, PageCounts& counts);

}  // namespace wayfinder
