#pragma once

// Soundness checks for navigational suggestions, evaluated against the raw
// candidate set of a page rather than the strategy's own filtering.

#include <wayfinder/strategies.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace wayfinder::oracle {

struct CandidateFacts {
    ElementId id;
    std::uint64_t visits_t = 0;
    std::uint64_t visits_T = 0;
    std::optional<Timestamp> last_t;
};

inline std::vector<CandidateFacts> candidates(const SutModel& model, PageId page, const TesterId& tester) {
    std::vector<CandidateFacts> out;
    for (ElementKind kind : {ElementKind::link, ElementKind::action}) {
        for (ElementId id : model.effective_elements(page, kind)) {
            const UiElement& el = model.element(id);
            out.push_back({id, el.visits.visits(tester), el.visits.team_total, el.visits.last_visit_of(tester)});
        }
    }
    return out;
}

/// Human-readable violations of the strategy's contract; empty when sound.
inline std::vector<std::string> strategy_violations(const SutModel& model, PageId page, const TesterId& tester,
                                                    NavStrategy strategy, const StrategyConfig& config, Timestamp now) {
    std::vector<std::string> bad;
    const auto cands = candidates(model, page, tester);
    const auto got = suggest(model, tester, page, strategy, config, now);
    auto facts = [&](ElementId id) {
        return *std::find_if(cands.begin(), cands.end(), [&](const CandidateFacts& c) { return c.id == id; });
    };
    auto fail = [&](const std::string& what) {
        bad.push_back(std::string(to_string(strategy)) + " page " + std::to_string(page.value) + " tester " + tester +
                      ": " + what);
    };

    if (cands.empty()) {
        if (!got.empty()) fail("suggestions on a page without candidates");
        return bad;
    }
    if (got.empty()) fail("no suggestion although candidates exist");
    if (got.size() > kMaxSuggestions) fail("more than five suggestions");
    for (const auto& s : got) {
        if (std::none_of(cands.begin(), cands.end(), [&](const CandidateFacts& c) { return c.id == s.element; })) {
            fail("suggested element " + std::to_string(s.element.value) + " is not on the page");
            return bad;
        }
    }

    std::uint64_t min_t = UINT64_MAX, min_T = UINT64_MAX;
    for (const auto& c : cands) {
        min_t = std::min(min_t, c.visits_t);
        min_T = std::min(min_T, c.visits_T);
    }
    const Timestamp threshold = config.weights.last_time_s * 1000;
    auto stale = [&](const CandidateFacts& c) { return c.visits_t > 0 && c.last_t && now - *c.last_t > threshold; };

    switch (strategy) {
        case NavStrategy::rank_new:
        case NavStrategy::prio_new: {
            const bool any_new = min_t == 0;
            for (const auto& s : got) {
                const auto f = facts(s.element);
                if (any_new && f.visits_t > 0) fail("visited element suggested while an unvisited one exists");
                if (s.fallback == any_new) fail("fallback flag wrong");
                if (!any_new && f.visits_t != min_t) fail("fallback element is not least visited");
            }
            break;
        }
        case NavStrategy::rank_new_team:
        case NavStrategy::prio_new_team:
            for (const auto& s : got) {
                if (facts(s.element).visits_T != min_T) fail("element above the team minimum suggested");
                if (s.fallback) fail("team strategy flagged as fallback");
            }
            break;
        case NavStrategy::rt_time: {
            const bool any_stale = std::any_of(cands.begin(), cands.end(), stale);
            for (const auto& s : got) {
                const auto f = facts(s.element);
                if (any_stale && !stale(f)) fail("element not stale beyond last_time suggested");
                if (s.fallback == any_stale) fail("fallback flag wrong");
                if (!any_stale && f.visits_t != min_t) fail("fallback element is not least visited");
            }
            break;
        }
    }
    // Full candidate set must be represented when the kept set fits.
    std::size_t eligible = 0;
    for (const auto& c : cands) {
        switch (strategy) {
            case NavStrategy::rank_new:
            case NavStrategy::prio_new: eligible += (min_t == 0 ? c.visits_t == 0 : c.visits_t == min_t); break;
            case NavStrategy::rank_new_team:
            case NavStrategy::prio_new_team: eligible += c.visits_T == min_T; break;
            case NavStrategy::rt_time:
                eligible += std::any_of(cands.begin(), cands.end(), stale) ? stale(c) : c.visits_t == min_t;
                break;
        }
    }
    if (got.size() != std::min(eligible, kMaxSuggestions)) fail("suggestion count does not match eligible set");
    return bad;
}

}  // namespace wayfinder::oracle
