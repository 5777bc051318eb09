#include <wayfinder/model.hpp>

#include <nlohmann/json.hpp>

namespace wayfinder {

using nlohmann::json;

namespace {

json ledger_to_json(const VisitLedger& l) {
    return json{{"per_tester", l.per_tester}, {"team_total", l.team_total}, {"last_visit", l.last_visit}};
}

VisitLedger ledger_from_json(const json& j) {
    VisitLedger l;
    j.at("per_tester").get_to(l.per_tester);
    j.at("team_total").get_to(l.team_total);
    j.at("last_visit").get_to(l.last_visit);
    return l;
}

json ids_to_json(const std::vector<ElementId>& ids) {
    json out = json::array();
    for (auto id : ids) out.push_back(id.value);
    return out;
}

std::vector<ElementId> ids_from_json(const json& j) {
    std::vector<ElementId> out;
    for (const auto& v : j) out.push_back(ElementId{v.get<std::uint32_t>()});
    return out;
}

json pages_to_json(const std::vector<PageId>& ids) {
    json out = json::array();
    for (auto id : ids) out.push_back(id.value);
    return out;
}

json combination_to_json(const Combination& c) {
    json out = json::array();
    for (const auto& [input, value] : c) out.push_back(json::array({input.value, value}));
    return out;
}

Combination combination_from_json(const json& j) {
    Combination c;
    for (const auto& pair : j) c[ElementId{pair.at(0).get<std::uint32_t>()}] = pair.at(1).get<std::string>();
    return c;
}

json element_sig_to_json(const ElementSignature& s) {
    return json{{"kind", to_string(s.kind)}, {"key", s.key}, {"text_hash", s.text_hash}};
}

ElementSignature element_sig_from_json(const json& j) {
    return ElementSignature{element_kind_from_string(j.at("kind").get<std::string>()), j.at("key").get<std::string>(),
                            j.at("text_hash").get<std::uint64_t>()};
}

json page_sig_to_json(const PageSignature& s) {
    return json{{"path", s.path}, {"query", s.query}, {"element_hash", s.element_hash}};
}

PageSignature page_sig_from_json(const json& j) {
    PageSignature s;
    j.at("path").get_to(s.path);
    j.at("query").get_to(s.query);
    j.at("element_hash").get_to(s.element_hash);
    return s;
}

}  // namespace

void to_json(json& j, const Range& range) {
    if (const auto* iv = std::get_if<Interval>(&range)) {
        j = json{{"lo", iv->lo}, {"hi", iv->hi}, {"integral", iv->integral}};
    } else {
        j = json{{"values", std::get<Enumeration>(range).values}};
    }
}

void from_json(const json& j, Range& range) {
    if (!j.is_object()) throw ValidationError("range", "range must be an object");
    if (j.contains("values")) {
        Enumeration en;
        for (const auto& v : j.at("values")) en.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        range = std::move(en);
        return;
    }
    if (!j.contains("lo") || !j.contains("hi") || !j.at("lo").is_number() || !j.at("hi").is_number()) {
        throw ValidationError("range", "interval needs numeric 'lo' and 'hi'");
    }
    Interval iv;
    iv.lo = j.at("lo").get<double>();
    iv.hi = j.at("hi").get<double>();
    iv.integral = j.contains("integral") ? j.at("integral").get<bool>()
                                         : (j.at("lo").is_number_integer() && j.at("hi").is_number_integer());
    range = iv;
}

void to_json(json& j, const EquivalenceClass& ec) {
    to_json(j, ec.domain);
    j["label"] = ec.label;
}

void from_json(const json& j, EquivalenceClass& ec) {
    from_json(j, ec.domain);
    ec.label = j.value("label", std::string{});
    if (ec.label.empty()) {
        json d;
        to_json(d, ec.domain);
        ec.label = d.dump();
    }
}

void to_json(json& j, const PageCounts& c) {
    j = json{{"inputs", c.inputs}, {"actions", c.actions}, {"links", c.links}};
}

void from_json(const json& j, PageCounts& c) {
    c.inputs = j.value("inputs", std::uint64_t{0});
    c.actions = j.value("actions", std::uint64_t{0});
    c.links = j.value("links", std::uint64_t{0});
}

void to_json(json& j, const SutModel& m) {
    json pages = json::array();
    for (const auto& p : m.pages_) {
        pages.push_back(json{{"id", p.id.value},
                             {"signature", page_sig_to_json(p.signature)},
                             {"url", p.url},
                             {"title", p.title},
                             {"links", ids_to_json(p.links)},
                             {"actions", ids_to_json(p.actions)},
                             {"inputs", ids_to_json(p.inputs)},
                             {"master_refs", pages_to_json(p.master_refs)},
                             {"priority", p.priority},
                             {"notes", p.notes},
                             {"visits", ledger_to_json(p.visits)},
                             {"is_master", p.is_master}});
    }
    json elements = json::array();
    for (const auto& e : m.elements_) {
        json je{{"id", e.id.value},
                {"kind", to_string(e.kind)},
                {"signature", element_sig_to_json(e.signature)},
                {"locator", e.locator},
                {"text", e.text},
                {"owning_page", e.owning_page.value},
                {"form_group", e.form_group},
                {"priority", e.priority},
                {"notes", e.notes},
                {"visits", ledger_to_json(e.visits)},
                {"ecs", e.ecs},
                {"out_of_band", e.out_of_band}};
        if (e.declared_range) je["declared_range"] = *e.declared_range;
        if (e.peek) je["peek"] = *e.peek;
        if (e.merged_into) je["merged_into"] = e.merged_into->value;
        elements.push_back(std::move(je));
    }
    json masters = json::array();
    for (auto id : m.masters_) masters.push_back(id.value);
    json errors = json::array();
    for (auto id : m.error_pages_) errors.push_back(id.value);
    json links = json::array();
    for (const auto& t : m.link_transitions_) {
        links.push_back(json::array({t.source.value, t.link.value, t.target.value, t.count}));
    }
    json actions = json::array();
    for (const auto& t : m.action_transitions_) {
        actions.push_back(json::array({t.source.value, t.action.value, t.target.value, t.count, t.combinations}));
    }
    json inputs = json::array();
    for (const auto& [input, per_tester] : m.data_.inputs) {
        json testers = json::object();
        for (const auto& [tester, entries] : per_tester) {
            json list = json::array();
            for (const auto& d : entries) list.push_back(json::array({d.value, d.ts}));
            testers[tester] = std::move(list);
        }
        inputs.push_back(json::array({input.value, std::move(testers)}));
    }
    json combos = json::array();
    for (const auto& [action, records] : m.data_.combinations) {
        json list = json::array();
        for (const auto& r : records) {
            list.push_back(json{{"tester", r.tester},
                                {"ts", r.ts},
                                {"values", combination_to_json(r.values)},
                                {"outcome", to_string(r.outcome)}});
        }
        combos.push_back(json::array({action.value, std::move(list)}));
    }
    json locators = json::array();
    for (const auto& [key, id] : m.locators_) {
        const auto& [page, kind, locator] = key;
        locators.push_back(json::array({page.value, to_string(kind), locator, id.value}));
    }
    j = json{{"pages", std::move(pages)},
             {"elements", std::move(elements)},
             {"masters", std::move(masters)},
             {"home_page", m.home_page_ ? json(m.home_page_->value) : json(nullptr)},
             {"error_pages", std::move(errors)},
             {"team", m.team_},
             {"link_transitions", std::move(links)},
             {"action_transitions", std::move(actions)},
             {"input_data", std::move(inputs)},
             {"combinations", std::move(combos)},
             {"locators", std::move(locators)}};
}

void from_json(const json& j, SutModel& m) {
    m = SutModel{};
    for (const auto& jp : j.at("pages")) {
        Page p;
        p.id = PageId{jp.at("id").get<std::uint32_t>()};
        p.signature = page_sig_from_json(jp.at("signature"));
        jp.at("url").get_to(p.url);
        jp.at("title").get_to(p.title);
        p.links = ids_from_json(jp.at("links"));
        p.actions = ids_from_json(jp.at("actions"));
        p.inputs = ids_from_json(jp.at("inputs"));
        for (const auto& v : jp.at("master_refs")) p.master_refs.push_back(PageId{v.get<std::uint32_t>()});
        jp.at("priority").get_to(p.priority);
        jp.at("notes").get_to(p.notes);
        p.visits = ledger_from_json(jp.at("visits"));
        jp.at("is_master").get_to(p.is_master);
        m.pages_.push_back(std::move(p));
    }
    for (const auto& je : j.at("elements")) {
        UiElement e;
        e.id = ElementId{je.at("id").get<std::uint32_t>()};
        e.kind = element_kind_from_string(je.at("kind").get<std::string>());
        e.signature = element_sig_from_json(je.at("signature"));
        je.at("locator").get_to(e.locator);
        je.at("text").get_to(e.text);
        e.owning_page = PageId{je.at("owning_page").get<std::uint32_t>()};
        je.at("form_group").get_to(e.form_group);
        je.at("priority").get_to(e.priority);
        je.at("notes").get_to(e.notes);
        e.visits = ledger_from_json(je.at("visits"));
        je.at("ecs").get_to(e.ecs);
        je.at("out_of_band").get_to(e.out_of_band);
        if (je.contains("declared_range")) e.declared_range = je.at("declared_range").get<Range>();
        if (je.contains("peek")) e.peek = je.at("peek").get<PageCounts>();
        if (je.contains("merged_into")) e.merged_into = ElementId{je.at("merged_into").get<std::uint32_t>()};
        m.elements_.push_back(std::move(e));
    }
    for (const auto& v : j.at("masters")) m.masters_.insert(PageId{v.get<std::uint32_t>()});
    if (!j.at("home_page").is_null()) m.home_page_ = PageId{j.at("home_page").get<std::uint32_t>()};
    for (const auto& v : j.at("error_pages")) m.error_pages_.insert(PageId{v.get<std::uint32_t>()});
    j.at("team").get_to(m.team_);
    for (const auto& t : j.at("link_transitions")) {
        m.link_transitions_.push_back(LinkTransition{PageId{t.at(0).get<std::uint32_t>()},
                                                     ElementId{t.at(1).get<std::uint32_t>()},
                                                     PageId{t.at(2).get<std::uint32_t>()}, t.at(3).get<std::uint64_t>()});
    }
    for (const auto& t : j.at("action_transitions")) {
        m.action_transitions_.push_back(ActionTransition{
            PageId{t.at(0).get<std::uint32_t>()}, ElementId{t.at(1).get<std::uint32_t>()},
            PageId{t.at(2).get<std::uint32_t>()}, t.at(4).get<std::vector<std::size_t>>(), t.at(3).get<std::uint64_t>()});
    }
    for (const auto& pair : j.at("input_data")) {
        auto& per_tester = m.data_.inputs[ElementId{pair.at(0).get<std::uint32_t>()}];
        for (const auto& [tester, list] : pair.at(1).items()) {
            auto& entries = per_tester[tester];
            for (const auto& d : list) entries.push_back(DataEntry{d.at(0).get<std::string>(), d.at(1).get<Timestamp>()});
        }
    }
    for (const auto& pair : j.at("combinations")) {
        auto& records = m.data_.combinations[ElementId{pair.at(0).get<std::uint32_t>()}];
        for (const auto& r : pair.at(1)) {
            records.push_back(CombinationRecord{r.at("tester").get<std::string>(), r.at("ts").get<Timestamp>(),
                                                combination_from_json(r.at("values")),
                                                outcome_from_string(r.at("outcome").get<std::string>())});
        }
    }
    for (const auto& l : j.at("locators")) {
        m.locators_.emplace(std::tuple{PageId{l.at(0).get<std::uint32_t>()},
                                       element_kind_from_string(l.at(1).get<std::string>()), l.at(2).get<std::string>()},
                            ElementId{l.at(3).get<std::uint32_t>()});
    }
    m.rebuild_indexes();
}

}  // namespace wayfinder
