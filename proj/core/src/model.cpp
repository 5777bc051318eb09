#include <wayfinder/model.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace wayfinder {

// ---------------------------------------------------------------------------
// VisitLedger
// ---------------------------------------------------------------------------

void VisitLedger::record(const TesterId& tester, Timestamp ts) {
    ++per_tester[tester];
    ++team_total;
    auto [it, inserted] = last_visit.try_emplace(tester, ts);
    if (!inserted) it->second = std::max(it->second, ts);
}

void VisitLedger::merge(const VisitLedger& other) {
    for (const auto& [tester, count] : other.per_tester) per_tester[tester] += count;
    team_total += other.team_total;
    for (const auto& [tester, ts] : other.last_visit) {
        auto [it, inserted] = last_visit.try_emplace(tester, ts);
        if (!inserted) it->second = std::max(it->second, ts);
    }
}

std::uint64_t VisitLedger::visits(const TesterId& tester) const {
    auto it = per_tester.find(tester);
    return it == per_tester.end() ? 0 : it->second;
}

std::optional<Timestamp> VisitLedger::last_visit_of(const TesterId& tester) const {
    auto it = last_visit.find(tester);
    if (it == last_visit.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// Numbers, ranges, ECs
// ---------------------------------------------------------------------------

std::optional<double> parse_number(std::string_view text) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::string format_number(double value, bool integral) {
    if (integral) return std::to_string(static_cast<long long>(std::floor(value)));
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

Range default_range() { return Interval{0, 999999, true}; }

bool range_contains(const Range& range, std::string_view value) {
    if (const auto* iv = std::get_if<Interval>(&range)) {
        auto x = parse_number(value);
        if (!x) return false;
        if (iv->integral && std::floor(*x) != *x) return false;
        return *x >= iv->lo && *x <= iv->hi;
    }
    const auto& en = std::get<Enumeration>(range);
    return std::find(en.values.begin(), en.values.end(), value) != en.values.end();
}

std::string EquivalenceClass::representative() const {
    if (const auto* iv = std::get_if<Interval>(&domain)) {
        return format_number(iv->integral ? std::floor((iv->lo + iv->hi) / 2) : (iv->lo + iv->hi) / 2, iv->integral);
    }
    const auto& en = std::get<Enumeration>(domain);
    return en.values.empty() ? std::string{} : en.values.front();
}

namespace {

std::string describe(const Range& r) {
    if (const auto* iv = std::get_if<Interval>(&r)) {
        return "[" + format_number(iv->lo, iv->integral) + ".." + format_number(iv->hi, iv->integral) + "]";
    }
    std::string out = "{";
    const auto& en = std::get<Enumeration>(r);
    for (std::size_t i = 0; i < en.values.size(); ++i) out += (i ? "," : "") + en.values[i];
    return out + "}";
}

bool range_within(const Range& inner, const Range& outer) {
    if (const auto* in_iv = std::get_if<Interval>(&inner)) {
        const auto* out_iv = std::get_if<Interval>(&outer);
        return out_iv && in_iv->lo >= out_iv->lo && in_iv->hi <= out_iv->hi;
    }
    const auto& en = std::get<Enumeration>(inner);
    return std::all_of(en.values.begin(), en.values.end(),
                       [&](const std::string& v) { return range_contains(outer, v); });
}

/// Overlap of two EC domains, described for error messages; nullopt when disjoint.
std::optional<std::string> overlap(const Range& a, const Range& b) {
    const auto* ia = std::get_if<Interval>(&a);
    const auto* ib = std::get_if<Interval>(&b);
    if (ia && ib) {
        double lo = std::max(ia->lo, ib->lo);
        double hi = std::min(ia->hi, ib->hi);
        bool integral = ia->integral && ib->integral;
        if (integral) {
            lo = std::ceil(lo);
            hi = std::floor(hi);
        }
        if (lo > hi) return std::nullopt;
        return describe(Interval{lo, hi, integral});
    }
    const Range& en_side = ia ? b : a;
    const Range& other = ia ? a : b;
    Enumeration common;
    for (const auto& v : std::get<Enumeration>(en_side).values) {
        if (range_contains(other, v)) common.values.push_back(v);
    }
    if (common.values.empty()) return std::nullopt;
    return describe(common);
}

void validate_range(const Range& r, const std::string& field) {
    if (const auto* iv = std::get_if<Interval>(&r)) {
        if (!(iv->lo <= iv->hi)) throw ValidationError(field, "interval lower bound exceeds upper bound");
    } else if (std::get<Enumeration>(r).values.empty()) {
        throw ValidationError(field, "enumeration has no values");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Page / Outcome helpers
// ---------------------------------------------------------------------------

const std::vector<ElementId>& Page::elements(ElementKind kind) const {
    switch (kind) {
        case ElementKind::link: return links;
        case ElementKind::action: return actions;
        case ElementKind::input: return inputs;
    }
    return links;
}

std::vector<ElementId>& Page::elements(ElementKind kind) {
    return const_cast<std::vector<ElementId>&>(std::as_const(*this).elements(kind));
}

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
        case Outcome::normal: return "normal";
        case Outcome::error_page: return "error_page";
        case Outcome::error_message: return "error_message";
    }
    return "normal";
}

Outcome outcome_from_string(std::string_view text) {
    if (text == "normal") return Outcome::normal;
    if (text == "error_page" || text == "fatal_page") return Outcome::error_page;
    if (text == "error_message") return Outcome::error_message;
    throw ValidationError("outcome", "unknown outcome '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// SutModel queries
// ---------------------------------------------------------------------------

bool operator==(const SutModel& a, const SutModel& b) {
    return a.pages_ == b.pages_ && a.elements_ == b.elements_ && a.masters_ == b.masters_ &&
           a.home_page_ == b.home_page_ && a.error_pages_ == b.error_pages_ && a.team_ == b.team_ &&
           a.link_transitions_ == b.link_transitions_ && a.action_transitions_ == b.action_transitions_ &&
           a.data_ == b.data_ && a.locators_ == b.locators_;
}

const Page& SutModel::page(PageId id) const {
    if (!has_page(id)) throw NotFound("unknown page " + std::to_string(id.value));
    return pages_[id.value];
}

const UiElement& SutModel::element(ElementId id) const {
    if (!has_element(id)) throw NotFound("unknown element " + std::to_string(id.value));
    return elements_[id.value];
}

Page& SutModel::page_mut(PageId id) { return const_cast<Page&>(page(id)); }
UiElement& SutModel::element_mut(ElementId id) { return const_cast<UiElement&>(element(id)); }

ElementId SutModel::resolve(ElementId id) const {
    while (element(id).merged_into) id = *element(id).merged_into;
    return id;
}

std::optional<PageId> SutModel::find_page(const PageSignature& signature) const {
    auto it = by_signature_.find(signature);
    if (it == by_signature_.end()) return std::nullopt;
    return it->second;
}

std::optional<ElementId> SutModel::find_element(PageId page_id, ElementKind kind, std::string_view locator) const {
    auto it = locators_.find({page_id, kind, std::string(locator)});
    if (it != locators_.end()) return resolve(it->second);
    for (PageId m : effective_masters(page_id)) {
        for (ElementId e : page(m).elements(kind)) {
            if (element(e).locator == locator) return e;
        }
    }
    return std::nullopt;
}

std::vector<PageId> SutModel::effective_masters(PageId page_id) const {
    std::vector<PageId> out;
    std::deque<PageId> queue(page(page_id).master_refs.begin(), page(page_id).master_refs.end());
    while (!queue.empty()) {
        PageId m = queue.front();
        queue.pop_front();
        if (m == page_id || std::find(out.begin(), out.end(), m) != out.end()) continue;
        out.push_back(m);
        for (PageId nested : page(m).master_refs) queue.push_back(nested);
    }
    return out;
}

std::vector<ElementId> SutModel::effective_elements(PageId page_id, ElementKind kind) const {
    std::vector<ElementId> out = page(page_id).elements(kind);
    for (PageId m : effective_masters(page_id)) {
        for (ElementId e : page(m).elements(kind)) {
            if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
        }
    }
    return out;
}

PageCounts SutModel::counts(PageId page_id) const {
    return PageCounts{effective_elements(page_id, ElementKind::input).size(),
                      effective_elements(page_id, ElementKind::action).size(),
                      effective_elements(page_id, ElementKind::link).size()};
}

std::set<PageId> SutModel::next_pages(PageId page_id) const {
    page(page_id);
    std::set<PageId> out;
    for (const auto& t : link_transitions_) {
        if (t.source == page_id) out.insert(t.target);
    }
    for (const auto& t : action_transitions_) {
        if (t.source == page_id) out.insert(t.target);
    }
    return out;
}

std::vector<ElementId> SutModel::form_inputs(ElementId action) const {
    const UiElement& a = element(resolve(action));
    std::vector<ElementId> out;
    for (ElementId i : effective_elements(a.owning_page, ElementKind::input)) {
        if (element(i).form_group == a.form_group) out.push_back(i);
    }
    return out;
}

std::vector<PageId> SutModel::link_targets(ElementId link) const {
    link = resolve(link);
    std::vector<PageId> out;
    for (const auto& t : link_transitions_) {
        if (t.link == link && std::find(out.begin(), out.end(), t.target) == out.end()) out.push_back(t.target);
    }
    return out;
}

std::vector<DataEntry> SutModel::input_values(ElementId input, const TesterId* tester) const {
    input = resolve(input);
    std::vector<DataEntry> out;
    auto it = data_.inputs.find(input);
    if (it == data_.inputs.end()) return out;
    for (const auto& [t, entries] : it->second) {
        if (tester && t != *tester) continue;
        out.insert(out.end(), entries.begin(), entries.end());
    }
    if (!tester) {
        std::stable_sort(out.begin(), out.end(), [](const DataEntry& a, const DataEntry& b) { return a.ts < b.ts; });
    }
    return out;
}

// ---------------------------------------------------------------------------
// SutModel mutations
// ---------------------------------------------------------------------------

void SutModel::enroll(const TesterId& tester) { team_.insert(tester); }

UpsertResult SutModel::upsert_page(const PageSignature& signature, std::span<const ElementObservation> elements,
                                   std::string_view url, std::string_view title) {
    for (const auto& e : elements) validate_observation(e);

    UpsertResult result;
    if (auto existing = find_page(signature)) {
        result.page = *existing;
    } else {
        Page p;
        p.id = PageId{static_cast<std::uint32_t>(pages_.size())};
        p.signature = signature;
        p.url = url;
        p.title = title;
        // Attach every master whose full element group is present in this observation.
        std::set<ElementSignature> observed;
        for (const auto& e : elements) observed.insert(element_signature(e));
        for (PageId m : masters_) {
            const Page& mp = pages_[m.value];
            bool all = true;
            bool any = false;
            for (ElementKind k : {ElementKind::link, ElementKind::action, ElementKind::input}) {
                for (ElementId e : mp.elements(k)) {
                    any = true;
                    if (!observed.count(elements_[e.value].signature)) all = false;
                }
            }
            if (any && all) p.master_refs.push_back(m);
        }
        result.page = p.id;
        result.created = true;
        by_signature_.emplace(signature, p.id);
        pages_.push_back(std::move(p));
    }

    const PageId pid = result.page;
    const auto masters = effective_masters(pid);
    for (const auto& obs : elements) {
        ElementSignature sig = element_signature(obs);
        std::optional<ElementId> match;
        for (ElementId e : pages_[pid.value].elements(obs.kind)) {
            if (elements_[e.value].signature == sig) {
                match = e;
                break;
            }
        }
        for (auto it = masters.begin(); !match && it != masters.end(); ++it) {
            for (ElementId e : pages_[it->value].elements(obs.kind)) {
                if (elements_[e.value].signature == sig) {
                    match = e;
                    break;
                }
            }
        }
        if (match) {
            if (!obs.locator.empty()) locators_.try_emplace({pid, obs.kind, obs.locator}, *match);
            continue;
        }
        ElementId id = add_element(pid, obs, false);
        result.new_elements.push_back(id);
    }
    return result;
}

ElementId SutModel::add_element(PageId page_id, const ElementObservation& obs, bool out_of_band) {
    validate_observation(obs);
    Page& p = page_mut(page_id);
    ElementSignature sig = element_signature(obs);
    for (ElementId e : p.elements(obs.kind)) {
        if (elements_[e.value].signature == sig) return e;
    }
    UiElement el;
    el.id = ElementId{static_cast<std::uint32_t>(elements_.size())};
    el.kind = obs.kind;
    el.signature = sig;
    el.locator = obs.locator.empty() ? obs.attr_key : obs.locator;
    el.text = obs.text;
    el.owning_page = page_id;
    el.form_group = obs.form_group;
    el.out_of_band = out_of_band;
    p.elements(obs.kind).push_back(el.id);
    locators_.try_emplace({page_id, obs.kind, el.locator}, el.id);
    if (!obs.attr_key.empty()) locators_.try_emplace({page_id, obs.kind, obs.attr_key}, el.id);
    ElementId id = el.id;
    elements_.push_back(std::move(el));
    return id;
}

VisitLedger& SutModel::ledger_for(VisitTarget target) {
    if (auto* pid = std::get_if<PageId>(&target)) return page_mut(*pid).visits;
    UiElement& e = element_mut(resolve(std::get<ElementId>(target)));
    if (e.kind == ElementKind::input) {
        throw ValidationError("target", "input elements carry no visit ledger");
    }
    return e.visits;
}

void SutModel::record_visit(const TesterId& tester, VisitTarget target, Timestamp ts) {
    VisitLedger& ledger = ledger_for(target);
    enroll(tester);
    ledger.record(tester, ts);
}

void SutModel::set_priority(VisitTarget target, int prio, Role caller) {
    if (!is_lead(caller)) throw Forbidden("setting priorities requires the test_lead role");
    if (prio < 1 || prio > 5) {
        throw ValidationError("priority", "priority must be in 1..5, got " + std::to_string(prio));
    }
    if (auto* pid = std::get_if<PageId>(&target)) {
        page_mut(*pid).priority = prio;
        return;
    }
    UiElement& e = element_mut(resolve(std::get<ElementId>(target)));
    if (e.kind == ElementKind::input) throw ValidationError("target", "inputs cannot be prioritized");
    e.priority = prio;
}

void SutModel::set_note(VisitTarget target, std::string note) {
    if (auto* pid = std::get_if<PageId>(&target)) {
        page_mut(*pid).notes = std::move(note);
    } else {
        element_mut(resolve(std::get<ElementId>(target))).notes = std::move(note);
    }
}

void SutModel::declare_range(ElementId input, Range range) {
    UiElement& e = element_mut(resolve(input));
    if (e.kind != ElementKind::input) throw ValidationError("input", "ranges apply to input elements only");
    validate_range(range, "range");
    for (const auto& ec : e.ecs) {
        if (!range_within(ec.domain, range)) {
            throw ValidationError("range", "existing equivalence class '" + ec.label + "' lies outside the new range");
        }
    }
    e.declared_range = std::move(range);
}

void SutModel::define_equivalence_classes(ElementId input, std::vector<EquivalenceClass> ecs) {
    UiElement& e = element_mut(resolve(input));
    if (e.kind != ElementKind::input) throw ValidationError("input", "equivalence classes apply to input elements only");
    for (const auto& ec : ecs) {
        validate_range(ec.domain, "ecs");
        if (e.declared_range && !range_within(ec.domain, *e.declared_range)) {
            throw ValidationError("ecs", "equivalence class '" + ec.label + "' " + describe(ec.domain) +
                                             " lies outside range " + describe(*e.declared_range));
        }
    }
    for (std::size_t i = 0; i < ecs.size(); ++i) {
        for (std::size_t j = i + 1; j < ecs.size(); ++j) {
            if (auto common = overlap(ecs[i].domain, ecs[j].domain)) {
                throw ValidationError("ecs", "equivalence classes '" + ecs[i].label + "' and '" + ecs[j].label +
                                                 "' overlap on " + *common);
            }
        }
    }
    e.ecs = std::move(ecs);
}

void SutModel::set_peek(ElementId link, PageCounts counts) {
    UiElement& e = element_mut(resolve(link));
    if (e.kind != ElementKind::link) throw ValidationError("link_locator", "peek summaries apply to links only");
    e.peek = counts;
}

void SutModel::set_home_page(PageId page_id) {
    page(page_id);
    home_page_ = page_id;
}

void SutModel::mark_error_page(PageId page_id) {
    page(page_id);
    error_pages_.insert(page_id);
}

void SutModel::add_link_transition(PageId source, ElementId link, PageId target) {
    page(source);
    page(target);
    link = resolve(link);
    if (element(link).kind != ElementKind::link) throw ValidationError("link", "element is not a link");
    for (auto& t : link_transitions_) {
        if (t.source == source && t.link == link && t.target == target) {
            ++t.count;
            return;
        }
    }
    link_transitions_.push_back(LinkTransition{source, link, target, 1});
}

void SutModel::add_action_transition(PageId source, ElementId action, PageId target,
                                     std::optional<std::size_t> combination) {
    page(source);
    page(target);
    action = resolve(action);
    if (element(action).kind != ElementKind::action) throw ValidationError("action", "element is not an action");
    for (auto& t : action_transitions_) {
        if (t.source == source && t.action == action && t.target == target) {
            ++t.count;
            if (combination) t.combinations.push_back(*combination);
            return;
        }
    }
    ActionTransition t{source, action, target, {}, 1};
    if (combination) t.combinations.push_back(*combination);
    action_transitions_.push_back(std::move(t));
}

void SutModel::record_input_value(ElementId input, const TesterId& tester, std::string value, Timestamp ts) {
    input = resolve(input);
    if (element(input).kind != ElementKind::input) throw ValidationError("input_locator", "element is not an input");
    data_.inputs[input][tester].push_back(DataEntry{std::move(value), ts});
}

std::size_t SutModel::record_combination(ElementId action, CombinationRecord record) {
    action = resolve(action);
    const auto inputs = form_inputs(action);
    Combination resolved;
    for (auto& [input, value] : record.values) {
        ElementId r = resolve(input);
        if (std::find(inputs.begin(), inputs.end(), r) == inputs.end()) {
            throw ValidationError("entries", "input " + std::to_string(r.value) + " is not in the action's form group");
        }
        resolved[r] = std::move(value);
    }
    record.values = std::move(resolved);
    auto& list = data_.combinations[action];
    list.push_back(std::move(record));
    return list.size() - 1;
}

void SutModel::set_combination_outcome(ElementId action, std::size_t index, Outcome outcome) {
    auto it = data_.combinations.find(resolve(action));
    if (it == data_.combinations.end() || index >= it->second.size()) {
        throw NotFound("unknown combination record");
    }
    it->second[index].outcome = outcome;
}

FactoringResult SutModel::factor_master(const std::vector<ElementSignature>& group, const std::vector<PageId>& pages,
                                        std::optional<PageId> into) {
    FactoringResult result;
    result.group = group;
    result.pages = pages;

    if (into) {
        if (!masters_.count(*into)) throw ValidationError("master", "target page is not a master page");
        result.master = *into;
    }
    for (PageId m : into ? std::set<PageId>{} : masters_) {
        bool covers = std::all_of(pages.begin(), pages.end(), [&](PageId p) {
            auto ms = effective_masters(p);
            return std::find(ms.begin(), ms.end(), m) != ms.end();
        });
        if (covers) {
            result.nested_in = m;
            break;
        }
    }

    if (!into) {
        Page master;
        master.id = PageId{static_cast<std::uint32_t>(pages_.size())};
        master.is_master = true;
        master.signature.path = "(master)";
        std::uint64_t h = fnv1a("");
        for (const auto& s : group) h = fnv1a(s.canonical() + "\n", h);
        master.signature.element_hash = h;
        if (result.nested_in) master.master_refs.push_back(*result.nested_in);
        result.master = master.id;
        by_signature_.emplace(master.signature, master.id);
        pages_.push_back(std::move(master));
        masters_.insert(result.master);
    }

    std::map<ElementId, ElementId> remap;  // page-owned copy -> master element
    for (const auto& sig : group) {
        std::optional<ElementId> survivor;
        for (ElementId e : pages_[result.master.value].elements(sig.kind)) {
            if (elements_[e.value].signature == sig) survivor = e;
        }
        for (PageId pid : pages) {
            if (pid == result.master) continue;
            auto& own = pages_[pid.value].elements(sig.kind);
            auto it = std::find_if(own.begin(), own.end(), [&](ElementId e) { return elements_[e.value].signature == sig; });
            if (it == own.end()) continue;
            ElementId e = *it;
            own.erase(it);
            if (!survivor) {
                survivor = e;
                elements_[e.value].owning_page = result.master;
                pages_[result.master.value].elements(sig.kind).push_back(e);
                continue;
            }
            UiElement& dst = elements_[survivor->value];
            UiElement& src = elements_[e.value];
            dst.visits.merge(src.visits);
            src.visits = {};
            dst.priority = std::max(dst.priority, src.priority);
            if (dst.notes.empty()) dst.notes = src.notes;
            if (!dst.peek) dst.peek = src.peek;
            if (!dst.declared_range) dst.declared_range = src.declared_range;
            if (dst.ecs.empty()) dst.ecs = src.ecs;
            src.merged_into = *survivor;
            remap[e] = *survivor;
        }
    }

    for (PageId pid : pages) {
        auto& refs = pages_[pid.value].master_refs;
        if (std::find(refs.begin(), refs.end(), result.master) == refs.end()) refs.push_back(result.master);
    }
    if (remap.empty()) return result;

    // Data ledgers: fold merged inputs and actions into their survivors.
    for (const auto& [from, to] : remap) {
        if (auto it = data_.inputs.find(from); it != data_.inputs.end()) {
            auto moved = std::move(it->second);
            data_.inputs.erase(it);
            auto& dst = data_.inputs[to];
            for (auto& [tester, entries] : moved) {
                auto& list = dst[tester];
                list.insert(list.end(), entries.begin(), entries.end());
                std::stable_sort(list.begin(), list.end(), [](const DataEntry& a, const DataEntry& b) { return a.ts < b.ts; });
            }
        }
    }
    std::map<ElementId, std::size_t> offsets;
    for (const auto& [from, to] : remap) {
        auto it = data_.combinations.find(from);
        if (it == data_.combinations.end()) continue;
        auto moved = std::move(it->second);
        data_.combinations.erase(it);
        auto& dst = data_.combinations[to];
        offsets[from] = dst.size();
        for (auto& rec : moved) dst.push_back(std::move(rec));
    }
    for (auto& [action, records] : data_.combinations) {
        for (auto& rec : records) {
            Combination rewritten;
            for (auto& [input, value] : rec.values) {
                auto r = remap.find(input);
                rewritten[r == remap.end() ? input : r->second] = std::move(value);
            }
            rec.values = std::move(rewritten);
        }
    }

    // Transitions: rewrite element ids and coalesce identical records.
    std::vector<LinkTransition> links;
    for (auto t : link_transitions_) {
        if (auto r = remap.find(t.link); r != remap.end()) t.link = r->second;
        auto same = std::find_if(links.begin(), links.end(), [&](const LinkTransition& o) {
            return o.source == t.source && o.link == t.link && o.target == t.target;
        });
        if (same == links.end()) {
            links.push_back(t);
        } else {
            same->count += t.count;
        }
    }
    link_transitions_ = std::move(links);

    std::vector<ActionTransition> actions;
    for (auto t : action_transitions_) {
        if (auto r = remap.find(t.action); r != remap.end()) {
            std::size_t offset = offsets.count(t.action) ? offsets[t.action] : 0;
            for (auto& c : t.combinations) c += offset;
            t.action = r->second;
        }
        auto same = std::find_if(actions.begin(), actions.end(), [&](const ActionTransition& o) {
            return o.source == t.source && o.action == t.action && o.target == t.target;
        });
        if (same == actions.end()) {
            actions.push_back(std::move(t));
        } else {
            same->count += t.count;
            same->combinations.insert(same->combinations.end(), t.combinations.begin(), t.combinations.end());
        }
    }
    action_transitions_ = std::move(actions);
    return result;
}

void SutModel::rebuild_indexes() {
    by_signature_.clear();
    for (const auto& p : pages_) by_signature_.emplace(p.signature, p.id);
}

void SutModel::check_invariants() const {
    auto fail = [](const std::string& what) { throw std::logic_error("model invariant violated: " + what); };
    for (PageId m : masters_) {
        if (!has_page(m)) fail("master outside pages");
    }
    if (home_page_ && !has_page(*home_page_)) fail("home page outside pages");
    for (PageId e : error_pages_) {
        if (!has_page(e)) fail("error page outside pages");
    }
    auto check_ledger = [&](const VisitLedger& l) {
        std::uint64_t sum = 0;
        for (const auto& [t, c] : l.per_tester) sum += c;
        if (sum != l.team_total) fail("visit ledger sum");
    };
    for (const auto& p : pages_) {
        check_ledger(p.visits);
        if (p.priority < 0 || p.priority > 5) fail("page priority range");
        for (PageId m : p.master_refs) {
            if (!has_page(m) || !masters_.count(m)) fail("master_ref to non-master page");
        }
        for (ElementKind k : {ElementKind::link, ElementKind::action, ElementKind::input}) {
            std::set<ElementSignature> seen;
            for (ElementId e : p.elements(k)) {
                const UiElement& el = element(e);
                if (el.kind != k || el.owning_page != p.id || el.merged_into) fail("element placement");
                if (!seen.insert(el.signature).second) fail("duplicate element signature on page");
            }
        }
    }
    for (const auto& el : elements_) {
        check_ledger(el.visits);
        if (el.kind == ElementKind::input && el.visits.team_total != 0) fail("input with visits");
        if (el.kind != ElementKind::input && (el.declared_range || !el.ecs.empty())) fail("range on non-input");
        for (std::size_t i = 0; i < el.ecs.size(); ++i) {
            for (std::size_t j = i + 1; j < el.ecs.size(); ++j) {
                if (overlap(el.ecs[i].domain, el.ecs[j].domain)) fail("overlapping equivalence classes");
            }
        }
    }
    auto on_page = [&](PageId source, ElementId e, ElementKind k) {
        auto effective = effective_elements(source, k);
        return std::find(effective.begin(), effective.end(), e) != effective.end();
    };
    for (const auto& t : link_transitions_) {
        if (!has_page(t.source) || !has_page(t.target)) fail("link transition endpoint");
        if (!has_element(t.link) || !on_page(t.source, t.link, ElementKind::link)) fail("link transition element");
    }
    for (const auto& t : action_transitions_) {
        if (!has_page(t.source) || !has_page(t.target)) fail("action transition endpoint");
        if (!has_element(t.action) || !on_page(t.source, t.action, ElementKind::action)) fail("action transition element");
    }
}

}  // namespace wayfinder
