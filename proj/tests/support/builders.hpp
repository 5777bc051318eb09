#pragma once

#include <wayfinder/reconstruction.hpp>

#include <string>
#include <utility>
#include <vector>

namespace wayfinder::testing {

inline ElementObservation link(std::string locator, std::string text = {}) {
    return ElementObservation{ElementKind::link, std::move(locator), "", std::move(text), ""};
}

inline ElementObservation action(std::string locator, std::string group, std::string text = {}) {
    return ElementObservation{ElementKind::action, std::move(locator), "", std::move(text), std::move(group)};
}

inline ElementObservation input(std::string locator, std::string group) {
    return ElementObservation{ElementKind::input, std::move(locator), "", "", std::move(group)};
}

inline ActivityEvent session_start(TesterId t, SessionId s, Timestamp ts) {
    return ActivityEvent{EventKind::session_start, std::move(t), std::move(s), ts, {}};
}

inline ActivityEvent session_end(TesterId t, SessionId s, Timestamp ts) {
    return ActivityEvent{EventKind::session_end, std::move(t), std::move(s), ts, {}};
}

inline ActivityEvent page_view(TesterId t, SessionId s, Timestamp ts, std::string url,
                               std::vector<ElementObservation> elements, std::string title = {}) {
    return ActivityEvent{EventKind::page_view, std::move(t), std::move(s), ts,
                         PageViewPayload{std::move(url), std::move(title), "", std::move(elements)}};
}

inline ActivityEvent activate(TesterId t, SessionId s, Timestamp ts, std::string locator,
                              ElementKind kind = ElementKind::link) {
    return ActivityEvent{EventKind::element_activated, std::move(t), std::move(s), ts,
                         ActivationPayload{std::move(locator), kind}};
}

inline ActivityEvent submit(TesterId t, SessionId s, Timestamp ts, std::string action_locator,
                            std::vector<std::pair<std::string, std::string>> entries) {
    FormPayload f;
    f.action_locator = std::move(action_locator);
    for (auto& [k, v] : entries) f.entries.push_back(FormEntry{k, v});
    return ActivityEvent{EventKind::form_submitted, std::move(t), std::move(s), ts, std::move(f)};
}

inline ActivityEvent peek(TesterId t, SessionId s, Timestamp ts, std::string link_locator, PageCounts counts) {
    return ActivityEvent{EventKind::page_peek, std::move(t), std::move(s), ts, PeekPayload{std::move(link_locator), counts}};
}

inline ActivityEvent error_observed(TesterId t, SessionId s, Timestamp ts, PageClass cls) {
    return ActivityEvent{EventKind::error_observed, std::move(t), std::move(s), ts, ErrorPayload{cls, ""}};
}

inline SutModel replay(const std::vector<ActivityEvent>& events, ReconstructionConfig config = {}) {
    SutModel model;
    Reconstructor r(std::move(config));
    for (const auto& e : events) r.ingest(model, e);
    return model;
}

}  // namespace wayfinder::testing
