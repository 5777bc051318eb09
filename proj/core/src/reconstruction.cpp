#include <wayfinder/reconstruction.hpp>

#include <algorithm>

namespace wayfinder {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Wire protocol
// ---------------------------------------------------------------------------

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::session_start: return "SESSION_START";
        case EventKind::page_view: return "PAGE_VIEW";
        case EventKind::page_peek: return "PAGE_PEEK";
        case EventKind::element_activated: return "ELEMENT_ACTIVATED";
        case EventKind::form_submitted: return "FORM_SUBMITTED";
        case EventKind::error_observed: return "ERROR_OBSERVED";
        case EventKind::session_end: return "SESSION_END";
    }
    return "SESSION_START";
}

EventKind event_kind_from_string(std::string_view text) {
    for (auto k : {EventKind::session_start, EventKind::page_view, EventKind::page_peek, EventKind::element_activated,
                   EventKind::form_submitted, EventKind::error_observed, EventKind::session_end}) {
        if (to_string(k) == text) return k;
    }
    throw ValidationError("kind", "unknown event kind '" + std::string(text) + "'");
}

std::string_view to_string(PageClass cls) {
    switch (cls) {
        case PageClass::none: return "none";
        case PageClass::fatal_page: return "fatal_page";
        case PageClass::error_message: return "error_message";
    }
    return "none";
}

namespace {

PageClass page_class_from_string(std::string_view text) {
    if (text == "fatal_page") return PageClass::fatal_page;
    if (text == "error_message") return PageClass::error_message;
    throw ValidationError("class", "unknown error class '" + std::string(text) + "'");
}

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw ValidationError(where + "." + key, "missing field '" + std::string(key) + "' in " + where);
    }
    return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) throw ValidationError(where + "." + key, "field '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
}

std::string optional_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) return {};
    if (!obj.at(key).is_string()) {
        throw ValidationError(where + "." + key, "field '" + std::string(key) + "' must be a string");
    }
    return obj.at(key).get<std::string>();
}

std::uint64_t require_count(const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ValidationError(where + "." + key, "field '" + std::string(key) + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

}  // namespace

ActivityEvent parse_event(const json& j) {
    if (!j.is_object()) throw ValidationError("event", "event must be a JSON object");
    ActivityEvent ev;
    ev.kind = event_kind_from_string(require_string(j, "kind", "event"));
    ev.tester = require_string(j, "tester", "event");
    ev.session = require_string(j, "session", "event");
    if (ev.tester.empty()) throw ValidationError("event.tester", "tester must not be empty");
    if (ev.session.empty()) throw ValidationError("event.session", "session must not be empty");
    const json& ts = require(j, "ts", "event");
    if (!ts.is_number_integer()) throw ValidationError("event.ts", "ts must be integer milliseconds");
    ev.ts = ts.get<Timestamp>();

    static const json empty = json::object();
    const json& p = j.contains("payload") && !j.at("payload").is_null() ? j.at("payload") : empty;
    if (!p.is_object()) throw ValidationError("event.payload", "payload must be an object");

    switch (ev.kind) {
        case EventKind::session_start:
        case EventKind::session_end: break;
        case EventKind::page_view: {
            PageViewPayload pv;
            pv.url = require_string(p, "url", "payload");
            pv.title = optional_string(p, "title", "payload");
            pv.excerpt = optional_string(p, "excerpt", "payload");
            parse_url(pv.url);
            if (p.contains("elements")) {
                const json& els = p.at("elements");
                if (!els.is_array()) throw ValidationError("payload.elements", "elements must be an array");
                for (std::size_t i = 0; i < els.size(); ++i) {
                    const std::string where = "payload.elements[" + std::to_string(i) + "]";
                    ElementObservation o;
                    o.kind = element_kind_from_string(require_string(els[i], "kind", where));
                    o.locator = optional_string(els[i], "locator", where);
                    o.attr_key = optional_string(els[i], "attr_key", where);
                    o.text = optional_string(els[i], "text", where);
                    o.form_group = optional_string(els[i], "form_group", where);
                    try {
                        validate_observation(o);
                    } catch (const ValidationError& e) {
                        throw ValidationError(where, std::string(e.what()) + ": " + els[i].dump());
                    }
                    pv.elements.push_back(std::move(o));
                }
            }
            ev.payload = std::move(pv);
            break;
        }
        case EventKind::element_activated: {
            ActivationPayload a;
            a.locator = require_string(p, "locator", "payload");
            a.kind = element_kind_from_string(require_string(p, "kind", "payload"));
            if (a.kind == ElementKind::input) {
                throw ValidationError("payload.kind", "only links and actions can be activated");
            }
            if (a.locator.empty()) throw ValidationError("payload.locator", "locator must not be empty");
            ev.payload = std::move(a);
            break;
        }
        case EventKind::form_submitted: {
            FormPayload f;
            f.action_locator = require_string(p, "action_locator", "payload");
            if (f.action_locator.empty()) throw ValidationError("payload.action_locator", "locator must not be empty");
            const json& entries = require(p, "entries", "payload");
            if (!entries.is_array()) throw ValidationError("payload.entries", "entries must be an array");
            for (std::size_t i = 0; i < entries.size(); ++i) {
                const std::string where = "payload.entries[" + std::to_string(i) + "]";
                FormEntry e;
                e.input_locator = require_string(entries[i], "input_locator", where);
                const json& v = require(entries[i], "value", where);
                e.value = v.is_string() ? v.get<std::string>() : v.dump();
                if (e.input_locator.empty()) throw ValidationError(where, "input_locator must not be empty");
                f.entries.push_back(std::move(e));
            }
            ev.payload = std::move(f);
            break;
        }
        case EventKind::page_peek: {
            PeekPayload pk;
            pk.link_locator = require_string(p, "link_locator", "payload");
            const json& c = require(p, "dest_counts", "payload");
            pk.dest_counts.inputs = require_count(c, "inputs", "payload.dest_counts");
            pk.dest_counts.actions = require_count(c, "actions", "payload.dest_counts");
            pk.dest_counts.links = require_count(c, "links", "payload.dest_counts");
            ev.payload = std::move(pk);
            break;
        }
        case EventKind::error_observed: {
            ErrorPayload er;
            er.cls = page_class_from_string(require_string(p, "class", "payload"));
            er.excerpt = optional_string(p, "excerpt", "payload");
            ev.payload = std::move(er);
            break;
        }
    }
    return ev;
}

json event_to_json(const ActivityEvent& ev) {
    json payload = json::object();
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, PageViewPayload>) {
                json els = json::array();
                for (const auto& e : p.elements) {
                    json je{{"kind", to_string(e.kind)}, {"locator", e.locator}};
                    if (!e.attr_key.empty()) je["attr_key"] = e.attr_key;
                    if (!e.text.empty()) je["text"] = e.text;
                    if (!e.form_group.empty()) je["form_group"] = e.form_group;
                    els.push_back(std::move(je));
                }
                payload = json{{"url", p.url}, {"title", p.title}, {"elements", std::move(els)}};
                if (!p.excerpt.empty()) payload["excerpt"] = p.excerpt;
            } else if constexpr (std::is_same_v<T, ActivationPayload>) {
                payload = json{{"locator", p.locator}, {"kind", to_string(p.kind)}};
            } else if constexpr (std::is_same_v<T, FormPayload>) {
                json entries = json::array();
                for (const auto& e : p.entries) entries.push_back(json{{"input_locator", e.input_locator}, {"value", e.value}});
                payload = json{{"action_locator", p.action_locator}, {"entries", std::move(entries)}};
            } else if constexpr (std::is_same_v<T, PeekPayload>) {
                payload = json{{"link_locator", p.link_locator}, {"dest_counts", p.dest_counts}};
            } else if constexpr (std::is_same_v<T, ErrorPayload>) {
                payload = json{{"class", to_string(p.cls)}, {"excerpt", p.excerpt}};
            }
        },
        ev.payload);
    return json{{"kind", to_string(ev.kind)},
                {"tester", ev.tester},
                {"session", ev.session},
                {"ts", ev.ts},
                {"payload", std::move(payload)}};
}

std::uint64_t event_fingerprint(const ActivityEvent& event) { return fnv1a(event_to_json(event).dump()); }

// ---------------------------------------------------------------------------
// Error patterns
// ---------------------------------------------------------------------------

void ErrorPatternSet::add(ErrorPattern::Field field, std::string pattern, PageClass tag) {
    if (tag == PageClass::none) throw ValidationError("error_patterns", "pattern tag must be fatal_page or error_message");
    ErrorPattern rule;
    rule.field = field;
    rule.tag = tag;
    try {
        rule.compiled = std::regex(pattern);
    } catch (const std::regex_error& e) {
        throw ValidationError("error_patterns", "pattern '" + pattern + "' does not compile: " + e.what());
    }
    rule.pattern = std::move(pattern);
    rules_.push_back(std::move(rule));
}

ErrorPatternSet ErrorPatternSet::from_json(const json& j) {
    ErrorPatternSet set;
    if (j.is_null()) return set;
    if (!j.is_array()) throw ValidationError("error_patterns", "error_patterns must be an array");
    for (const auto& r : j) {
        std::string field = r.value("field", std::string("title"));
        ErrorPattern::Field f = field == "url"     ? ErrorPattern::Field::url
                                : field == "title" ? ErrorPattern::Field::title
                                : field == "text"  ? ErrorPattern::Field::text
                                                   : throw ValidationError("error_patterns", "unknown field '" + field + "'");
        set.add(f, r.at("pattern").get<std::string>(), page_class_from_string(r.at("tag").get<std::string>()));
    }
    return set;
}

json ErrorPatternSet::to_json() const {
    json out = json::array();
    for (const auto& r : rules_) {
        const char* field = r.field == ErrorPattern::Field::url ? "url" : r.field == ErrorPattern::Field::title ? "title" : "text";
        out.push_back(json{{"field", field}, {"pattern", r.pattern}, {"tag", to_string(r.tag)}});
    }
    return out;
}

PageClass classify_error_page(std::string_view url, std::string_view title, std::string_view text_excerpt,
                              const ErrorPatternSet& patterns) {
    for (const auto& rule : patterns.rules()) {
        std::string_view subject = rule.field == ErrorPattern::Field::url     ? url
                                   : rule.field == ErrorPattern::Field::title ? title
                                                                              : text_excerpt;
        if (std::regex_search(subject.begin(), subject.end(), rule.compiled)) return rule.tag;
    }
    return PageClass::none;
}

// ---------------------------------------------------------------------------
// Master pages
// ---------------------------------------------------------------------------

namespace {

std::vector<PageId> visited_pages(const SutModel& model) {
    std::vector<PageId> out;
    for (const auto& p : model.pages()) {
        if (!p.is_master && p.visits.team_total > 0) out.push_back(p.id);
    }
    return out;
}

std::set<ElementSignature> own_signatures(const SutModel& model, PageId page) {
    std::set<ElementSignature> out;
    const Page& p = model.page(page);
    for (ElementKind k : {ElementKind::link, ElementKind::action, ElementKind::input}) {
        for (ElementId e : p.elements(k)) out.insert(model.element(e).signature);
    }
    return out;
}

}  // namespace

std::vector<MasterCandidate> find_master_candidates(const SutModel& model, double share_threshold) {
    const auto visited = visited_pages(model);
    if (visited.size() < 2 || share_threshold <= 0) return {};

    std::map<ElementSignature, std::vector<PageId>> carriers;
    for (PageId p : visited) {
        for (const auto& sig : own_signatures(model, p)) carriers[sig].push_back(p);
    }
    std::map<std::vector<PageId>, std::vector<ElementSignature>> groups;
    for (auto& [sig, pages] : carriers) groups[pages].push_back(sig);

    std::vector<MasterCandidate> out;
    const double needed = share_threshold * static_cast<double>(visited.size());
    for (auto& [pages, sigs] : groups) {
        if (pages.size() < 2 || static_cast<double>(pages.size()) + 1e-9 < needed) continue;
        out.push_back(MasterCandidate{sigs, pages});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const MasterCandidate& a, const MasterCandidate& b) { return a.pages.size() > b.pages.size(); });
    return out;
}

std::vector<FactoringResult> detect_master_pages(SutModel& model, double share_threshold) {
    std::vector<FactoringResult> out;
    // Pages that arrived after a master was created but still carry its full group.
    for (PageId m : std::vector<PageId>(model.masters().begin(), model.masters().end())) {
        std::vector<ElementSignature> group;
        for (ElementKind k : {ElementKind::link, ElementKind::action, ElementKind::input}) {
            for (ElementId e : model.page(m).elements(k)) group.push_back(model.element(e).signature);
        }
        if (group.empty()) continue;
        std::vector<PageId> joiners;
        for (PageId p : visited_pages(model)) {
            auto own = own_signatures(model, p);
            if (std::all_of(group.begin(), group.end(), [&](const auto& s) { return own.count(s) > 0; })) joiners.push_back(p);
        }
        if (!joiners.empty()) out.push_back(model.factor_master(group, joiners, m));
    }
    for (const auto& c : find_master_candidates(model, share_threshold)) {
        out.push_back(model.factor_master(c.group, c.pages));
    }
    return out;
}

// ---------------------------------------------------------------------------
// ModelDelta
// ---------------------------------------------------------------------------

json ModelDelta::to_json() const {
    auto ids = [](const auto& v) {
        json out = json::array();
        for (auto id : v) out.push_back(id.value);
        return out;
    };
    json j{{"tester", tester},
           {"session", session},
           {"kind", to_string(kind)},
           {"duplicate", duplicate},
           {"current_page", current_page ? json(current_page->value) : json(nullptr)},
           {"created_pages", ids(created_pages)},
           {"visited_pages", ids(visited_pages)},
           {"created_elements", ids(created_elements)},
           {"out_of_band", ids(out_of_band)},
           {"visited_elements", ids(visited_elements)},
           {"new_transitions", new_transitions},
           {"error_pages", ids(error_pages)},
           {"factored_masters", ids(factored_masters)},
           {"notes", notes}};
    if (combination) j["combination"] = json{{"action", combination->first.value}, {"index", combination->second}};
    return j;
}

// ---------------------------------------------------------------------------
// Reconstructor
// ---------------------------------------------------------------------------

Reconstructor::Reconstructor(ReconstructionConfig config) : config_(std::move(config)) {}

ModelDelta Reconstructor::ingest(SutModel& model, const ActivityEvent& ev) {
    ModelDelta delta;
    delta.tester = ev.tester;
    delta.session = ev.session;
    delta.kind = ev.kind;

    const std::uint64_t fingerprint = event_fingerprint(ev);
    if (seen_.count(fingerprint)) {
        delta.duplicate = true;
        if (auto it = sessions_.find(ev.session); it != sessions_.end()) delta.current_page = it->second.current_page;
        return delta;
    }

    if (ev.kind == EventKind::session_start) {
        if (sessions_.count(ev.session)) {
            seen_.insert(fingerprint);
            delta.notes.push_back("session already started");
            return delta;
        }
        for (auto& [id, s] : sessions_) {
            if (s.tester == ev.tester && s.open && id != ev.session) {
                s.open = false;
                s.ended = ev.ts;
                delta.notes.push_back("closed previous session " + id);
            }
        }
        SessionState s;
        s.tester = ev.tester;
        s.started = ev.ts;
        sessions_[ev.session] = std::move(s);
        model.enroll(ev.tester);
        seen_.insert(fingerprint);
        return delta;
    }

    auto sit = sessions_.find(ev.session);
    if (sit == sessions_.end()) throw ValidationError("session", "unknown session '" + ev.session + "'");
    SessionState& session = sit->second;
    if (session.tester != ev.tester) {
        throw ValidationError("tester", "session '" + ev.session + "' belongs to tester '" + session.tester + "'");
    }
    if (!session.open) {
        seen_.insert(fingerprint);
        delta.notes.push_back("event for closed session ignored");
        return delta;
    }

    switch (ev.kind) {
        case EventKind::page_view: {
            const auto& pv = std::get<PageViewPayload>(ev.payload);
            PageSignature sig = page_signature(pv.url, pv.elements, config_.normalization);
            PageClass cls = classify_error_page(pv.url, pv.title, pv.excerpt, config_.error_patterns);
            UpsertResult up = model.upsert_page(sig, pv.elements, pv.url, pv.title);
            const PageId page = up.page;
            if (up.created) {
                delta.created_pages.push_back(page);
                ++pages_since_scan_;
            }
            delta.created_elements = up.new_elements;
            model.record_visit(ev.tester, page, ev.ts);
            delta.visited_pages.push_back(page);
            if (!model.home_page()) model.set_home_page(page);

            if (session.current_page && session.pending_activation) {
                const UiElement& el = model.element(model.resolve(*session.pending_activation));
                if (el.kind == ElementKind::link) {
                    model.add_link_transition(*session.current_page, el.id, page);
                    ++delta.new_transitions;
                } else if (el.kind == ElementKind::action) {
                    std::optional<std::size_t> combo;
                    if (session.pending_combination && !session.combination_viewed &&
                        model.resolve(session.pending_combination->first) == el.id) {
                        combo = session.pending_combination->second;
                    }
                    model.add_action_transition(*session.current_page, el.id, page, combo);
                    ++delta.new_transitions;
                }
            }
            session.pending_activation.reset();

            if (session.pending_combination) {
                if (!session.combination_viewed) {
                    session.combination_viewed = true;
                    if (cls != PageClass::none) {
                        model.set_combination_outcome(session.pending_combination->first,
                                                      session.pending_combination->second,
                                                      cls == PageClass::fatal_page ? Outcome::error_page
                                                                                   : Outcome::error_message);
                    }
                } else {
                    session.pending_combination.reset();
                    session.combination_viewed = false;
                }
            }
            if (cls == PageClass::fatal_page) {
                model.mark_error_page(page);
                delta.error_pages.push_back(page);
            }
            session.current_page = page;
            delta.current_page = page;

            if (config_.master_interval > 0 && pages_since_scan_ >= config_.master_interval) {
                pages_since_scan_ = 0;
                for (const auto& f : detect_master_pages(model, config_.master_threshold)) {
                    delta.factored_masters.push_back(f.master);
                }
            }
            break;
        }
        case EventKind::element_activated: {
            const auto& a = std::get<ActivationPayload>(ev.payload);
            if (!session.current_page) {
                delta.notes.push_back("activation before any page view dropped");
                break;
            }
            auto id = model.find_element(*session.current_page, a.kind, a.locator);
            if (!id) {
                id = model.add_element(*session.current_page, ElementObservation{a.kind, a.locator, "", "", ""}, true);
                delta.created_elements.push_back(*id);
                delta.out_of_band.push_back(*id);
            }
            model.record_visit(ev.tester, *id, ev.ts);
            delta.visited_elements.push_back(*id);
            if (session.pending_combination && session.combination_viewed) {
                session.pending_combination.reset();
                session.combination_viewed = false;
            }
            session.pending_activation = *id;
            break;
        }
        case EventKind::form_submitted: {
            const auto& f = std::get<FormPayload>(ev.payload);
            if (!session.current_page) {
                delta.notes.push_back("form submission before any page view dropped");
                break;
            }
            const PageId page = *session.current_page;
            auto action = model.find_element(page, ElementKind::action, f.action_locator);
            const std::string group = action ? model.element(*action).form_group : std::string{};
            // Validate every entry before touching the model.
            std::vector<std::optional<ElementId>> inputs;
            for (const auto& e : f.entries) {
                auto input = model.find_element(page, ElementKind::input, e.input_locator);
                if (input && model.element(*input).form_group != group) {
                    throw ValidationError("entries", "input '" + e.input_locator + "' is not in the form group of action '" +
                                                         f.action_locator + "'");
                }
                inputs.push_back(input);
            }
            if (!action) {
                action = model.add_element(page, ElementObservation{ElementKind::action, f.action_locator, "", "", ""}, true);
                delta.created_elements.push_back(*action);
                delta.out_of_band.push_back(*action);
            }
            CombinationRecord record;
            record.tester = ev.tester;
            record.ts = ev.ts;
            for (std::size_t i = 0; i < f.entries.size(); ++i) {
                if (!inputs[i]) {
                    inputs[i] = model.add_element(
                        page, ElementObservation{ElementKind::input, f.entries[i].input_locator, "", "", group}, true);
                    delta.created_elements.push_back(*inputs[i]);
                    delta.out_of_band.push_back(*inputs[i]);
                }
                model.record_input_value(*inputs[i], ev.tester, f.entries[i].value, ev.ts);
                record.values[model.resolve(*inputs[i])] = f.entries[i].value;
            }
            std::size_t index = model.record_combination(*action, std::move(record));
            session.pending_combination = std::pair{model.resolve(*action), index};
            session.combination_viewed = false;
            delta.combination = session.pending_combination;
            break;
        }
        case EventKind::page_peek: {
            const auto& pk = std::get<PeekPayload>(ev.payload);
            if (!session.current_page) {
                delta.notes.push_back("peek before any page view dropped");
                break;
            }
            auto link = model.find_element(*session.current_page, ElementKind::link, pk.link_locator);
            if (!link) {
                link = model.add_element(*session.current_page,
                                         ElementObservation{ElementKind::link, pk.link_locator, "", "", ""}, true);
                delta.created_elements.push_back(*link);
                delta.out_of_band.push_back(*link);
            }
            model.set_peek(*link, pk.dest_counts);
            break;
        }
        case EventKind::error_observed: {
            const auto& er = std::get<ErrorPayload>(ev.payload);
            if (session.pending_combination) {
                model.set_combination_outcome(session.pending_combination->first, session.pending_combination->second,
                                              er.cls == PageClass::fatal_page ? Outcome::error_page : Outcome::error_message);
            }
            if (er.cls == PageClass::fatal_page && session.current_page) {
                model.mark_error_page(*session.current_page);
                delta.error_pages.push_back(*session.current_page);
            }
            break;
        }
        case EventKind::session_end:
            session.open = false;
            session.ended = ev.ts;
            session.current_page.reset();
            session.pending_activation.reset();
            session.pending_combination.reset();
            break;
        case EventKind::session_start: break;
    }
    delta.current_page = session.current_page;
    seen_.insert(fingerprint);
    return delta;
}

json Reconstructor::state_to_json() const {
    json sessions = json::object();
    for (const auto& [id, s] : sessions_) {
        json js{{"tester", s.tester},
                {"open", s.open},
                {"started", s.started},
                {"ended", s.ended},
                {"combination_viewed", s.combination_viewed}};
        js["current_page"] = s.current_page ? json(s.current_page->value) : json(nullptr);
        js["pending_activation"] = s.pending_activation ? json(s.pending_activation->value) : json(nullptr);
        js["pending_combination"] = s.pending_combination
                                        ? json::array({s.pending_combination->first.value, s.pending_combination->second})
                                        : json(nullptr);
        sessions[id] = std::move(js);
    }
    return json{{"sessions", std::move(sessions)}, {"seen", seen_}, {"pages_since_scan", pages_since_scan_}};
}

void Reconstructor::state_from_json(const json& j) {
    sessions_.clear();
    for (const auto& [id, js] : j.at("sessions").items()) {
        SessionState s;
        js.at("tester").get_to(s.tester);
        js.at("open").get_to(s.open);
        js.at("started").get_to(s.started);
        js.at("ended").get_to(s.ended);
        js.at("combination_viewed").get_to(s.combination_viewed);
        if (!js.at("current_page").is_null()) s.current_page = PageId{js.at("current_page").get<std::uint32_t>()};
        if (!js.at("pending_activation").is_null()) {
            s.pending_activation = ElementId{js.at("pending_activation").get<std::uint32_t>()};
        }
        if (!js.at("pending_combination").is_null()) {
            const auto& pc = js.at("pending_combination");
            s.pending_combination = std::pair{ElementId{pc.at(0).get<std::uint32_t>()}, pc.at(1).get<std::size_t>()};
        }
        sessions_[id] = std::move(s);
    }
    seen_ = j.at("seen").get<std::set<std::uint64_t>>();
    pages_since_scan_ = j.at("pages_since_scan").get<std::size_t>();
}

bool Reconstructor::same_state(const Reconstructor& other) const {
    return sessions_ == other.sessions_ && seen_ == other.seen_ && pages_since_scan_ == other.pages_since_scan_;
}

// ---------------------------------------------------------------------------
// Sequencing
// ---------------------------------------------------------------------------

EventSequencer::Verdict EventSequencer::check(const ActivityEvent& ev) const {
    auto it = clocks_.find(ev.session);
    if (it == clocks_.end()) {
        if (ev.kind != EventKind::session_start) {
            throw ValidationError("session", "unknown session '" + ev.session + "'");
        }
        return Verdict::append;
    }
    const SessionClock& clock = it->second;
    if (clock.end_ts && ev.ts > *clock.end_ts) {
        throw ValidationError("session", "session '" + ev.session + "' has ended");
    }
    if (ev.ts >= clock.max_ts) return Verdict::append;
    if (clock.max_ts - ev.ts > window_ms_) {
        throw Conflict("event is " + std::to_string(clock.max_ts - ev.ts) + " ms older than the newest event of session '" +
                       ev.session + "' (window " + std::to_string(window_ms_) + " ms)");
    }
    return Verdict::reorder;
}

void EventSequencer::commit(const ActivityEvent& ev) {
    auto [it, fresh] = clocks_.try_emplace(ev.session, SessionClock{ev.ts, std::nullopt});
    SessionClock& clock = it->second;
    if (!fresh) clock.max_ts = std::max(clock.max_ts, ev.ts);
    if (ev.kind == EventKind::session_end) clock.end_ts = ev.ts;
}

json EventSequencer::state_to_json() const {
    json out = json::object();
    for (const auto& [id, c] : clocks_) {
        out[id] = json{{"max_ts", c.max_ts}, {"end_ts", c.end_ts ? json(*c.end_ts) : json(nullptr)}};
    }
    return json{{"window_ms", window_ms_}, {"sessions", std::move(out)}};
}

void EventSequencer::state_from_json(const json& j) {
    window_ms_ = j.at("window_ms").get<Timestamp>();
    clocks_.clear();
    for (const auto& [id, c] : j.at("sessions").items()) {
        SessionClock clock;
        clock.max_ts = c.at("max_ts").get<Timestamp>();
        if (!c.at("end_ts").is_null()) clock.end_ts = c.at("end_ts").get<Timestamp>();
        clocks_[id] = clock;
    }
}

std::vector<std::size_t> canonical_order(const std::vector<const ActivityEvent*>& arrivals) {
    std::vector<std::size_t> order;
    order.reserve(arrivals.size());
    for (std::size_t i = 0; i < arrivals.size(); ++i) {
        const ActivityEvent* ev = arrivals[i];
        if (!ev) {
            order.push_back(i);
            continue;
        }
        std::size_t insert_at = order.size();
        std::size_t floor = 0;  // just after the session start
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const ActivityEvent* other = arrivals[order[pos]];
            if (!other || other->session != ev->session) continue;
            if (other->kind == EventKind::session_start) floor = pos + 1;
            if (other->ts > ev->ts && insert_at == order.size() && other->kind != EventKind::session_start) insert_at = pos;
        }
        insert_at = std::max(insert_at, floor);
        order.insert(order.begin() + static_cast<std::ptrdiff_t>(insert_at), i);
    }
    return order;
}

}  // namespace wayfinder
