#include <wayfinder/strategies.hpp>

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace wayfinder {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void WeightConfig::validate() const {
    auto check = [](const char* field, std::uint32_t v, std::uint32_t lo) {
        if (v < lo || v > 512) {
            throw ValidationError(field, std::string(field) + " must be in " + std::to_string(lo) + "..512, got " +
                                             std::to_string(v));
        }
    };
    check("inputElementsWeight", input_elements, 0);
    check("actionElementsWeight", action_elements, 1);
    check("linkElementsWeight", link_elements, 1);
    check("pagePriorityWeight", page_priority, 0);
    if (last_time_s < 0) throw ValidationError("last_time", "last_time must be non-negative");
}

void to_json(json& j, const WeightConfig& w) {
    j = json{{"inputElementsWeight", w.input_elements},
             {"actionElementsWeight", w.action_elements},
             {"linkElementsWeight", w.link_elements},
             {"pagePriorityWeight", w.page_priority},
             {"last_time", w.last_time_s}};
}

void from_json(const json& j, WeightConfig& w) {
    if (!j.is_object()) throw ValidationError("weights", "weights must be an object");
    auto read = [&](const char* key, std::uint32_t& out) {
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 512) {
            throw ValidationError(key, std::string(key) + " must be an integer in range, got " + v.dump());
        }
        out = v.get<std::uint32_t>();
    };
    read("inputElementsWeight", w.input_elements);
    read("actionElementsWeight", w.action_elements);
    read("linkElementsWeight", w.link_elements);
    read("pagePriorityWeight", w.page_priority);
    if (j.contains("last_time")) {
        if (!j.at("last_time").is_number_integer()) throw ValidationError("last_time", "last_time must be integer seconds");
        w.last_time_s = j.at("last_time").get<std::int64_t>();
    }
    w.validate();
}

namespace {

constexpr std::pair<NavStrategy, std::string_view> kNavNames[] = {
    {NavStrategy::rank_new, "RANK_NEW"},
    {NavStrategy::rank_new_team, "RANK_NEW_TEAM"},
    {NavStrategy::rt_time, "RT_TIME"},
    {NavStrategy::prio_new, "PRIO_NEW"},
    {NavStrategy::prio_new_team, "PRIO_NEW_TEAM"},
};

}  // namespace

std::string_view to_string(NavStrategy s) {
    for (const auto& [k, name] : kNavNames) {
        if (k == s) return name;
    }
    return "RANK_NEW";
}

NavStrategy nav_strategy_from_string(std::string_view text) {
    for (const auto& [k, name] : kNavNames) {
        if (name == text) return k;
    }
    throw ValidationError("navigational", "unknown navigational strategy '" + std::string(text) + "'");
}

std::string_view to_string(RankingFn f) {
    return f == RankingFn::element_type ? "ElementTypeRank" : "PageComplexityRank";
}

RankingFn ranking_fn_from_string(std::string_view text) {
    if (text == "ElementTypeRank") return RankingFn::element_type;
    if (text == "PageComplexityRank") return RankingFn::page_complexity;
    throw ValidationError("ranking_fn", "unknown ranking function '" + std::string(text) + "'");
}

void StrategyConfig::validate() const {
    if (navigational.empty()) throw ValidationError("navigational", "at least one navigational strategy is required");
    weights.validate();
}

void to_json(json& j, const StrategyConfig& c) {
    json nav = json::array();
    for (auto s : c.navigational) nav.push_back(to_string(s));
    j = json{{"tester", c.tester},
             {"navigational", std::move(nav)},
             {"ranking_fn", to_string(c.ranking_fn)},
             {"data_strategy", to_string(c.data_strategy)},
             {"weights", c.weights}};
}

void from_json(const json& j, StrategyConfig& c) {
    if (!j.is_object()) throw ValidationError("strategy", "strategy config must be an object");
    c.tester = j.value("tester", c.tester);
    if (j.contains("navigational")) {
        const json& nav = j.at("navigational");
        c.navigational.clear();
        if (nav.is_string()) {
            c.navigational.push_back(nav_strategy_from_string(nav.get<std::string>()));
        } else if (nav.is_array()) {
            for (const auto& s : nav) {
                if (!s.is_string()) throw ValidationError("navigational", "strategy names must be strings");
                c.navigational.push_back(nav_strategy_from_string(s.get<std::string>()));
            }
        } else {
            throw ValidationError("navigational", "navigational must be a list of strategy names");
        }
    }
    if (j.contains("ranking_fn")) c.ranking_fn = ranking_fn_from_string(j.at("ranking_fn").get<std::string>());
    if (j.contains("data_strategy")) {
        c.data_strategy = data_strategy_from_string(j.at("data_strategy").get<std::string>());
    }
    if (j.contains("weights")) from_json(j.at("weights"), c.weights);
    c.validate();
}

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("rank exceeds 64-bit range");
    return r;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("rank exceeds 64-bit range");
    return r;
}

}  // namespace

std::uint64_t element_type_rank(ElementKind kind) {
    switch (kind) {
        case ElementKind::link: return 1;
        case ElementKind::action: return 2;
        case ElementKind::input: break;
    }
    throw ValidationError("kind", "ElementTypeRank is undefined for input elements");
}

std::uint64_t page_complexity_rank(const PageCounts& c, const WeightConfig& w) {
    w.validate();
    std::uint64_t r = mul(c.inputs, w.input_elements);
    r = mul(add(r, c.actions), w.action_elements);
    return mul(add(r, c.links), w.link_elements);
}

std::uint64_t priority_and_complexity_rank(int prio, const PageCounts& c, const WeightConfig& w) {
    if (prio < 0 || prio > 5) throw ValidationError("priority", "priority must be in 0..5");
    w.validate();
    std::uint64_t r = mul(static_cast<std::uint64_t>(prio), w.page_priority);
    r = mul(add(r, c.inputs), w.input_elements);
    r = mul(add(r, c.actions), w.action_elements);
    return mul(add(r, c.links), w.link_elements);
}

// ---------------------------------------------------------------------------
// suggest
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

struct Candidate {
    Suggestion s;
    std::string signature;
    std::optional<Timestamp> last_t;
};

/// Destination summary of a link: best observed target, otherwise the peek.
struct Destination {
    std::optional<PageId> page;
    std::optional<PageCounts> counts;
};

Destination destination_of(const SutModel& model, const UiElement& link, const WeightConfig& w, bool with_priority) {
    Destination best;
    std::uint64_t best_rank = 0;
    for (PageId target : model.link_targets(link.id)) {
        const PageCounts c = model.counts(target);
        std::uint64_t rank;
        try {
            rank = with_priority ? priority_and_complexity_rank(model.page(target).priority, c, w)
                                 : page_complexity_rank(c, w);
        } catch (const std::overflow_error&) {
            rank = kSaturated;
        }
        if (!best.page || rank > best_rank) {
            best = Destination{target, c};
            best_rank = rank;
        }
    }
    if (!best.page && link.peek) best.counts = link.peek;
    return best;
}

std::uint64_t saturating(auto&& f) {
    try {
        return f();
    } catch (const std::overflow_error&) {
        return kSaturated;
    }
}

void score_rank(const SutModel& model, Candidate& c, const UiElement& el, const StrategyConfig& config) {
    if (config.ranking_fn == RankingFn::element_type) {
        c.s.tier = static_cast<int>(element_type_rank(el.kind));
        c.s.score = element_type_rank(el.kind);
        c.s.rationale = "ElementTypeRank " + std::to_string(c.s.score);
        return;
    }
    if (el.kind == ElementKind::action) {
        c.s.tier = 2;
        c.s.score = element_type_rank(el.kind);
        c.s.rationale = "action, destination decided by data";
        return;
    }
    Destination d = destination_of(model, el, config.weights, false);
    if (d.counts) {
        c.s.tier = 1;
        c.s.score = saturating([&] { return page_complexity_rank(*d.counts, config.weights); });
        c.s.rationale = "PageComplexityRank " + std::to_string(c.s.score) + (d.page ? "" : " (peeked)");
    } else {
        c.s.tier = 0;
        c.s.score = element_type_rank(el.kind);
        c.s.rationale = "destination unknown";
    }
}

void score_prio(const SutModel& model, Candidate& c, const UiElement& el, const StrategyConfig& config) {
    c.s.tier = el.priority;
    c.s.score = 0;
    c.s.rationale = "prio " + std::to_string(el.priority);
    if (el.kind != ElementKind::link) return;
    Destination d = destination_of(model, el, config.weights, true);
    if (!d.counts) return;
    const int dest_prio = d.page ? model.page(*d.page).priority : 0;
    c.s.score = saturating([&] { return priority_and_complexity_rank(dest_prio, *d.counts, config.weights); });
    c.s.rationale += ", PriorityAndComplexityRank " + std::to_string(c.s.score);
}

bool before(const Candidate& a, const Candidate& b) {
    if (a.s.on_master != b.s.on_master) return !a.s.on_master;
    if (a.s.tier != b.s.tier) return a.s.tier > b.s.tier;
    if (a.s.score != b.s.score) return a.s.score > b.s.score;
    if (a.s.visits_T != b.s.visits_T) return a.s.visits_T < b.s.visits_T;
    if (a.signature != b.signature) return a.signature < b.signature;
    return a.s.element < b.s.element;
}

}  // namespace

std::vector<Suggestion> suggest(const SutModel& model, const TesterId& tester, PageId page, NavStrategy strategy,
                                const StrategyConfig& config, Timestamp now) {
    std::vector<Candidate> candidates;
    for (ElementKind kind : {ElementKind::link, ElementKind::action}) {
        for (ElementId id : model.effective_elements(page, kind)) {
            const UiElement& el = model.element(id);
            Candidate c;
            c.s.element = id;
            c.s.kind = kind;
            c.s.on_master = el.owning_page != page;
            c.s.visits_t = el.visits.visits(tester);
            c.s.visits_T = el.visits.team_total;
            c.signature = el.signature.canonical();
            c.last_t = el.visits.last_visit_of(tester);
            switch (strategy) {
                case NavStrategy::rank_new:
                case NavStrategy::rank_new_team: score_rank(model, c, el, config); break;
                case NavStrategy::prio_new:
                case NavStrategy::prio_new_team: score_prio(model, c, el, config); break;
                case NavStrategy::rt_time:
                    c.s.tier = 0;
                    c.s.score = c.last_t ? static_cast<std::uint64_t>(std::max<Timestamp>(0, now - *c.last_t)) : 0;
                    c.s.rationale = "last visited " + std::to_string(c.s.score / 1000) + " s ago";
                    break;
            }
            candidates.push_back(std::move(c));
        }
    }
    if (candidates.empty()) return {};

    std::vector<Candidate> kept;
    switch (strategy) {
        case NavStrategy::rank_new:
        case NavStrategy::prio_new:
            for (const auto& c : candidates) {
                if (c.s.visits_t == 0) kept.push_back(c);
            }
            break;
        case NavStrategy::rank_new_team:
        case NavStrategy::prio_new_team: {
            std::uint64_t min_T = kSaturated;
            for (const auto& c : candidates) min_T = std::min(min_T, c.s.visits_T);
            for (const auto& c : candidates) {
                if (c.s.visits_T == min_T) kept.push_back(c);
            }
            break;
        }
        case NavStrategy::rt_time: {
            const Timestamp threshold = config.weights.last_time_s * 1000;
            for (const auto& c : candidates) {
                if (c.s.visits_t > 0 && c.last_t && now - *c.last_t > threshold) kept.push_back(c);
            }
            break;
        }
    }

    bool fallback = false;
    if (kept.empty()) {
        fallback = true;
        std::uint64_t min_t = kSaturated;
        for (const auto& c : candidates) min_t = std::min(min_t, c.s.visits_t);
        for (const auto& c : candidates) {
            if (c.s.visits_t == min_t) kept.push_back(c);
        }
    }
    std::sort(kept.begin(), kept.end(), before);
    if (kept.size() > kMaxSuggestions) kept.resize(kMaxSuggestions);

    std::vector<Suggestion> out;
    out.reserve(kept.size());
    for (auto& c : kept) {
        c.s.fallback = fallback;
        if (fallback) c.s.rationale = "fallback: least visited; " + c.s.rationale;
        out.push_back(std::move(c.s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Navigational test case
// ---------------------------------------------------------------------------

NavigationalTestCase build_navigational_test_case(const SutModel& model, const TesterId& tester, PageId page,
                                                  const StrategyConfig& config, Timestamp now,
                                                  const PipelineMap* pipelines, std::uint64_t seed) {
    const Page& p = model.page(page);
    NavigationalTestCase tc;
    tc.tester = tester;
    tc.page = page;
    tc.url = p.url;
    tc.title = p.title;
    tc.page_priority = p.priority;
    tc.page_visits_t = p.visits.visits(tester);
    tc.page_visits_T = p.visits.team_total;
    if (!p.notes.empty()) tc.notes.push_back(NoteEntry{"page:" + std::to_string(page.value), p.notes});

    for (ElementId id : model.effective_elements(page, ElementKind::link)) {
        const UiElement& el = model.element(id);
        LinkEntry e;
        e.id = id;
        e.locator = el.locator;
        e.text = el.text;
        e.on_master = el.owning_page != page;
        e.visits_t = el.visits.visits(tester);
        e.visits_T = el.visits.team_total;
        e.priority = el.priority;
        e.targets = model.link_targets(id);
        for (PageId t : e.targets) e.target_priority = std::max(e.target_priority.value_or(0), model.page(t).priority);
        e.out_of_band = el.out_of_band;
        tc.links.push_back(std::move(e));
        if (!el.notes.empty()) tc.notes.push_back(NoteEntry{"element:" + std::to_string(id.value), el.notes});
    }
    for (ElementId id : model.effective_elements(page, ElementKind::action)) {
        const UiElement& el = model.element(id);
        ActionEntry e;
        e.id = id;
        e.locator = el.locator;
        e.text = el.text;
        e.on_master = el.owning_page != page;
        e.visits_t = el.visits.visits(tester);
        e.visits_T = el.visits.team_total;
        e.priority = el.priority;
        e.inputs = model.form_inputs(id);
        e.out_of_band = el.out_of_band;
        if (!el.notes.empty()) tc.notes.push_back(NoteEntry{"element:" + std::to_string(id.value), el.notes});

        if (!e.inputs.empty()) {
            const CombinationPipeline* pipeline = nullptr;
            if (pipelines) {
                if (auto it = pipelines->find(id); it != pipelines->end()) pipeline = &it->second;
            }
            tc.data_block.push_back(suggest_data(model, tester, id, config.data_strategy, pipeline, seed));
        }
        auto errors = error_combinations(model, id);
        if (!errors.empty()) tc.error_combinations.push_back(ActionErrors{id, std::move(errors)});
        tc.actions.push_back(std::move(e));
    }
    for (ElementId id : model.effective_elements(page, ElementKind::input)) {
        const UiElement& el = model.element(id);
        if (!el.notes.empty()) tc.notes.push_back(NoteEntry{"element:" + std::to_string(id.value), el.notes});
    }
    for (NavStrategy s : config.navigational) {
        SuggestionGroup g;
        g.strategy = s;
        g.items = suggest(model, tester, page, s, config, now);
        g.fallback = !g.items.empty() && g.items.front().fallback;
        tc.suggestions.push_back(std::move(g));
    }
    return tc;
}

json NavigationalTestCase::to_json(const SutModel& model) const {
    json links_json = json::array();
    for (const auto& l : links) {
        json targets = json::array();
        for (auto t : l.targets) targets.push_back(t.value);
        links_json.push_back(json{{"id", l.id.value},
                                  {"locator", l.locator},
                                  {"text", l.text},
                                  {"on_master", l.on_master},
                                  {"visits_t", l.visits_t},
                                  {"visits_T", l.visits_T},
                                  {"priority", l.priority},
                                  {"target_priority", l.target_priority ? json(*l.target_priority) : json(nullptr)},
                                  {"targets", std::move(targets)},
                                  {"out_of_band", l.out_of_band}});
    }
    json actions_json = json::array();
    for (const auto& a : actions) {
        json inputs = json::array();
        for (auto i : a.inputs) inputs.push_back(i.value);
        actions_json.push_back(json{{"id", a.id.value},
                                    {"locator", a.locator},
                                    {"text", a.text},
                                    {"on_master", a.on_master},
                                    {"visits_t", a.visits_t},
                                    {"visits_T", a.visits_T},
                                    {"priority", a.priority},
                                    {"inputs", std::move(inputs)},
                                    {"out_of_band", a.out_of_band}});
    }
    json groups = json::array();
    for (const auto& g : suggestions) {
        json items = json::array();
        for (const auto& s : g.items) {
            items.push_back(json{{"element", s.element.value},
                                 {"locator", model.element(s.element).locator},
                                 {"kind", to_string(s.kind)},
                                 {"on_master", s.on_master},
                                 {"tier", s.tier},
                                 {"score", s.score},
                                 {"visits_t", s.visits_t},
                                 {"visits_T", s.visits_T},
                                 {"fallback", s.fallback},
                                 {"rationale", s.rationale}});
        }
        groups.push_back(json{{"strategy", to_string(g.strategy)}, {"fallback", g.fallback}, {"items", std::move(items)}});
    }
    json data = json::array();
    for (const auto& d : data_block) data.push_back(d.to_json(model));
    json errors = json::array();
    for (const auto& ae : error_combinations) {
        json list = json::array();
        for (const auto& e : ae.combinations) {
            json values = json::object();
            for (const auto& [input, value] : e.values) values[model.element(input).locator] = value;
            list.push_back(json{{"values", std::move(values)},
                                {"outcome", to_string(e.outcome)},
                                {"occurrences", e.occurrences},
                                {"testers", e.testers}});
        }
        errors.push_back(json{{"action", ae.action.value}, {"combinations", std::move(list)}});
    }
    json notes_json = json::array();
    for (const auto& n : notes) notes_json.push_back(json{{"target", n.target}, {"text", n.text}});
    return json{{"tester", tester},
                {"page", page.value},
                {"url", url},
                {"title", title},
                {"priority", page_priority},
                {"visits_t", page_visits_t},
                {"visits_T", page_visits_T},
                {"links", std::move(links_json)},
                {"actions", std::move(actions_json)},
                {"suggestions", std::move(groups)},
                {"data", std::move(data)},
                {"error_combinations", std::move(errors)},
                {"notes", std::move(notes_json)}};
}

}  // namespace wayfinder
