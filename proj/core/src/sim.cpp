#include <wayfinder/sim.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace wayfinder::sim {

using nlohmann::json;

namespace {

constexpr Timestamp kEpoch = 1'600'000'000'000;  // first session start of every agent

int draw(std::mt19937_64& rng, Span s) { return std::uniform_int_distribution<int>(s.lo, s.hi)(rng); }

void check_span(const Span& s, const char* field, int min_lo) {
    if (s.lo < min_lo || s.hi < s.lo) {
        throw ValidationError(field, std::string(field) + " must satisfy " + std::to_string(min_lo) + " <= lo <= hi");
    }
}

void span_to_json(json& j, const char* key, const Span& s) { j[key] = json::array({s.lo, s.hi}); }

void span_from_json(const json& j, const char* key, Span& s) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (v.is_number_integer()) {
        s.lo = s.hi = v.get<int>();
    } else if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
        s.lo = v[0].get<int>();
        s.hi = v[1].get<int>();
    } else {
        throw ValidationError(key, std::string(key) + " must be an integer or [lo, hi]");
    }
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NotFound("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic SUT
// ---------------------------------------------------------------------------

void SutShape::validate() const {
    if (pages < 1) throw ValidationError("pages", "pages must be >= 1");
    check_span(links, "links", 1);
    check_span(actions, "actions", 0);
    check_span(inputs, "inputs", 1);
    check_span(ecs, "ecs", 1);
    if (master_links < 0) throw ValidationError("master_links", "master_links must be >= 0");
    if (defects < 0) throw ValidationError("defects", "defects must be >= 0");
    if (!(conditional_share >= 0 && conditional_share <= 1)) {
        throw ValidationError("conditional_share", "conditional_share must be in [0, 1]");
    }
    if (value_max < ecs.hi - 1) throw ValidationError("value_max", "value_max too small for the EC count");
}

void to_json(json& j, const SutShape& s) {
    j = json{{"pages", s.pages}};
    span_to_json(j, "links", s.links);
    span_to_json(j, "actions", s.actions);
    span_to_json(j, "inputs", s.inputs);
    span_to_json(j, "ecs", s.ecs);
    j["master_links"] = s.master_links;
    j["defects"] = s.defects;
    j["conditional_share"] = s.conditional_share;
    j["value_max"] = s.value_max;
}

void from_json(const json& j, SutShape& s) {
    if (!j.is_object()) throw ValidationError("sut", "sut shape must be an object");
    s.pages = j.value("pages", s.pages);
    span_from_json(j, "links", s.links);
    span_from_json(j, "actions", s.actions);
    span_from_json(j, "inputs", s.inputs);
    span_from_json(j, "ecs", s.ecs);
    s.master_links = j.value("master_links", s.master_links);
    s.defects = j.value("defects", s.defects);
    s.conditional_share = j.value("conditional_share", s.conditional_share);
    s.value_max = j.value("value_max", s.value_max);
    s.validate();
}

SyntheticSut generate_synthetic_sut(const SutShape& shape, std::uint64_t seed) {
    shape.validate();
    std::mt19937_64 rng(seed);
    SyntheticSut sut;
    sut.seed = seed;
    sut.shape = shape;
    const auto n = static_cast<std::uint32_t>(shape.pages);
    sut.pages.resize(n);

    std::vector<std::vector<std::uint32_t>> targets(n);
    for (std::uint32_t i = 1; i < n; ++i) {
        const auto parent = std::uniform_int_distribution<std::uint32_t>(0, i - 1)(rng);
        targets[parent].push_back(i);
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto want = static_cast<std::size_t>(draw(rng, shape.links));
        while (targets[i].size() < want) {
            std::uint32_t t = std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng);
            if (n > 1 && t == i) t = (t + 1) % n;
            targets[i].push_back(t);
        }
        std::shuffle(targets[i].begin(), targets[i].end(), rng);
    }

    for (std::uint32_t i = 0; i < n; ++i) {
        SimPage& page = sut.pages[i];
        const std::string p = "p" + std::to_string(i);
        page.url = "/" + p + ".php";
        page.title = "Page " + std::to_string(i);
        for (std::size_t l = 0; l < targets[i].size(); ++l) {
            SimElement link;
            link.kind = ElementKind::link;
            link.locator = p + ".l" + std::to_string(l);
            link.text = "to p" + std::to_string(targets[i][l]);
            link.target = targets[i][l];
            page.links.push_back(std::move(link));
        }
        const int forms = draw(rng, shape.actions);
        for (int f = 0; f < forms; ++f) {
            SimElement action;
            action.kind = ElementKind::action;
            action.form_group = p + ".f" + std::to_string(f);
            action.locator = action.form_group + ".submit";
            action.text = "submit";
            action.target = std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng);
            const int inputs = draw(rng, shape.inputs);
            for (int k = 0; k < inputs; ++k) {
                SimInput in;
                in.locator = action.form_group + ".i" + std::to_string(k);
                const int m = draw(rng, shape.ecs);
                std::set<int> cuts;  // class c covers [cut_{c-1}, cut_c - 1]
                while (static_cast<int>(cuts.size()) < m - 1) {
                    cuts.insert(std::uniform_int_distribution<int>(1, shape.value_max)(rng));
                }
                int lo = 0;
                for (int c : cuts) {
                    in.ecs.push_back(Interval{static_cast<double>(lo), static_cast<double>(c - 1), true});
                    lo = c;
                }
                in.ecs.push_back(Interval{static_cast<double>(lo), static_cast<double>(shape.value_max), true});
                action.inputs.push_back(std::move(in));
            }
            page.actions.push_back(std::move(action));
        }
    }

    for (int m = 0; m < shape.master_links; ++m) {
        SimElement link;
        link.kind = ElementKind::link;
        link.locator = "nav.l" + std::to_string(m);
        link.target = m == 0 ? 0 : std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng);
        link.text = "nav to p" + std::to_string(link.target);
        sut.master.push_back(std::move(link));
    }

    struct Slot {
        std::uint32_t page;
        ElementKind kind;
        std::size_t index;
    };
    std::vector<Slot> slots;
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < sut.pages[i].links.size(); ++l) slots.push_back({i, ElementKind::link, l});
        for (std::size_t a = 0; a < sut.pages[i].actions.size(); ++a) slots.push_back({i, ElementKind::action, a});
    }
    if (static_cast<std::size_t>(shape.defects) > slots.size()) {
        throw ValidationError("defects", "cannot plant " + std::to_string(shape.defects) + " defects on " +
                                             std::to_string(slots.size()) + " elements");
    }
    std::shuffle(slots.begin(), slots.end(), rng);
    std::bernoulli_distribution conditional(shape.conditional_share);
    for (int d = 0; d < shape.defects; ++d) {
        const Slot& s = slots[static_cast<std::size_t>(d)];
        DefectMarker marker;
        marker.defect = "D" + std::to_string(d + 1);
        marker.page = s.page;
        marker.kind = s.kind;
        marker.index = s.index;
        if (s.kind == ElementKind::action && conditional(rng)) {
            const SimElement& action = sut.pages[s.page].actions[s.index];
            const auto in = std::uniform_int_distribution<std::size_t>(0, action.inputs.size() - 1)(rng);
            const auto ec = std::uniform_int_distribution<std::size_t>(0, action.inputs[in].ecs.size() - 1)(rng);
            marker.condition = std::make_pair(in, ec);
        }
        sut.defects.push_back(std::move(marker));
    }
    std::sort(sut.defects.begin(), sut.defects.end(), [](const DefectMarker& a, const DefectMarker& b) {
        return std::tie(a.page, a.kind, a.index) < std::tie(b.page, b.kind, b.index);
    });
    return sut;
}

std::vector<ElementObservation> SyntheticSut::observations(std::uint32_t page) const {
    std::vector<ElementObservation> out;
    for (const auto& m : master) out.push_back(ElementObservation{ElementKind::link, m.locator, "", m.text, ""});
    const SimPage& p = pages.at(page);
    for (const auto& l : p.links) out.push_back(ElementObservation{ElementKind::link, l.locator, "", l.text, ""});
    for (const auto& a : p.actions) {
        for (const auto& in : a.inputs) {
            out.push_back(ElementObservation{ElementKind::input, in.locator, "", "", a.form_group});
        }
        out.push_back(ElementObservation{ElementKind::action, a.locator, "", a.text, a.form_group});
    }
    return out;
}

const SimElement* SyntheticSut::find(std::uint32_t page, const std::string& locator) const {
    for (const auto& m : master) {
        if (m.locator == locator) return &m;
    }
    const SimPage& p = pages.at(page);
    for (const auto& l : p.links) {
        if (l.locator == locator) return &l;
    }
    for (const auto& a : p.actions) {
        if (a.locator == locator) return &a;
    }
    return nullptr;
}

const DefectMarker* SyntheticSut::marker(std::uint32_t page, ElementKind kind, std::size_t index) const {
    for (const auto& d : defects) {
        if (d.page == page && d.kind == kind && d.index == index) return &d;
    }
    return nullptr;
}

PageCounts SyntheticSut::counts(std::uint32_t page) const {
    PageCounts c;
    const SimPage& p = pages.at(page);
    c.links = master.size() + p.links.size();
    c.actions = p.actions.size();
    for (const auto& a : p.actions) c.inputs += a.inputs.size();
    return c;
}

json SyntheticSut::to_json() const {
    auto element_json = [](const SimElement& e) {
        json j{{"kind", wayfinder::to_string(e.kind)}, {"locator", e.locator}, {"text", e.text}, {"target", e.target}};
        if (e.kind == ElementKind::action) {
            json inputs = json::array();
            for (const auto& in : e.inputs) {
                json ecs = json::array();
                for (const auto& iv : in.ecs) ecs.push_back(json::array({iv.lo, iv.hi}));
                inputs.push_back(json{{"locator", in.locator}, {"ecs", std::move(ecs)}});
            }
            j["form_group"] = e.form_group;
            j["inputs"] = std::move(inputs);
        }
        return j;
    };
    json pages_json = json::array();
    for (const auto& p : pages) {
        json links = json::array(), actions = json::array();
        for (const auto& l : p.links) links.push_back(element_json(l));
        for (const auto& a : p.actions) actions.push_back(element_json(a));
        pages_json.push_back(json{{"url", p.url}, {"title", p.title}, {"links", links}, {"actions", actions}});
    }
    json master_json = json::array();
    for (const auto& m : master) master_json.push_back(element_json(m));
    json defects_json = json::array();
    for (const auto& d : defects) {
        json dj{{"defect", d.defect}, {"page", d.page}, {"kind", wayfinder::to_string(d.kind)}, {"index", d.index}};
        dj["condition"] = d.condition ? json{{"input", d.condition->first}, {"ec", d.condition->second}} : json(nullptr);
        defects_json.push_back(std::move(dj));
    }
    json shape_json;
    sim::to_json(shape_json, shape);
    return json{{"seed", seed}, {"shape", shape_json}, {"pages", pages_json}, {"master", master_json},
                {"defects", defects_json}};
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

void to_json(json& j, const AgentPolicy& p) {
    if (p.kind == PolicyKind::random_walk) {
        j = json{{"kind", "random_walk"}};
        return;
    }
    j = json{{"kind", "guided"},
             {"strategy", wayfinder::to_string(p.strategy)},
             {"ranking_fn", wayfinder::to_string(p.ranking_fn)},
             {"data_strategy", wayfinder::to_string(p.data_strategy)}};
}

void from_json(const json& j, AgentPolicy& p) {
    if (!j.is_object()) throw ValidationError("policy", "policy must be an object");
    const std::string kind = j.value("kind", std::string("random_walk"));
    if (kind == "random_walk") {
        p = AgentPolicy{};
        return;
    }
    if (kind != "guided") throw ValidationError("policy.kind", "policy kind must be random_walk or guided");
    p.kind = PolicyKind::guided;
    if (j.contains("strategy")) p.strategy = nav_strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("ranking_fn")) p.ranking_fn = ranking_fn_from_string(j.at("ranking_fn").get<std::string>());
    if (j.contains("data_strategy")) {
        p.data_strategy = data_strategy_from_string(j.at("data_strategy").get<std::string>());
    }
}

namespace {

struct Agent {
    AgentSpec spec;
    SessionId session;
    std::uint32_t page = 0;
    Timestamp clock = kEpoch;
    std::mt19937_64 rng;
    std::size_t steps_taken = 0;
};

class Driver {
public:
    Driver(const SyntheticSut& sut, Engine& engine, const DurationModel& durations)
        : sut_(sut), engine_(engine), durations_(durations) {}

    SimRun run(const std::vector<AgentSpec>& specs, std::size_t steps) {
        std::vector<Agent> agents;
        for (const auto& spec : specs) {
            Agent a;
            a.spec = spec;
            a.session = spec.tester + "-s1";
            a.rng.seed(spec.seed);
            agents.push_back(std::move(a));
            run_.agents.push_back(AgentTrace{spec.tester, {}});
            if (spec.policy.kind == PolicyKind::guided) {
                json body{{"tester", spec.tester},
                          {"navigational", json::array({wayfinder::to_string(spec.policy.strategy)})},
                          {"ranking_fn", wayfinder::to_string(spec.policy.ranking_fn)},
                          {"data_strategy", wayfinder::to_string(spec.policy.data_strategy)}};
                engine_.admin("strategy", body, lead_);
            }
        }
        for (std::size_t i = 0; i < agents.size(); ++i) {
            Agent& a = agents[i];
            post(i, ActivityEvent{EventKind::session_start, a.spec.tester, a.session, a.clock, {}});
            view(i, a, 0, a.clock);
        }
        // Discrete-event order: the agent with the earliest clock acts next.
        while (true) {
            std::size_t next = agents.size();
            for (std::size_t i = 0; i < agents.size(); ++i) {
                if (agents[i].steps_taken >= steps) continue;
                if (next == agents.size() || agents[i].clock < agents[next].clock) next = i;
            }
            if (next == agents.size()) break;
            step(next, agents[next]);
        }
        for (std::size_t i = 0; i < agents.size(); ++i) {
            Agent& a = agents[i];
            const Timestamp end = a.clock + duration(a);
            post(i, ActivityEvent{EventKind::session_end, a.spec.tester, a.session, end, {}});
        }
        return std::move(run_);
    }

private:
    Timestamp duration(Agent& a) {
        std::normal_distribution<double> z(0.0, 1.0);
        const double seconds = durations_.median_s * std::exp(durations_.sigma * z(a.rng));
        return std::max<Timestamp>(1000, static_cast<Timestamp>(std::llround(seconds * 1000.0)));
    }

    void post(std::size_t agent, ActivityEvent ev) {
        engine_.post_event(event_to_json(ev), lead_);
        run_.agents[agent].events.push_back(std::move(ev));
    }

    void view(std::size_t i, Agent& a, std::uint32_t page, Timestamp ts) {
        const SimPage& p = sut_.pages.at(page);
        PageViewPayload pv{p.url, p.title, "", sut_.observations(page)};
        post(i, ActivityEvent{EventKind::page_view, a.spec.tester, a.session, ts, std::move(pv)});
        a.page = page;
    }

    /// Test Lead duty: declare ranges and ECs for inputs the service has not been told about.
    bool define_ecs(const json& testcase) {
        bool changed = false;
        for (const auto& d : testcase.at("data")) {
            for (const auto& in : d.at("inputs")) {
                const auto id = in.at("input").get<std::uint32_t>();
                if (!defined_.insert(id).second) continue;
                const SimInput* sim_input = find_input(in.at("locator").get<std::string>());
                if (!sim_input) continue;
                json ecs = json::array();
                for (std::size_t c = 0; c < sim_input->ecs.size(); ++c) {
                    const auto& iv = sim_input->ecs[c];
                    ecs.push_back(json{{"label", "ec" + std::to_string(c)}, {"lo", iv.lo}, {"hi", iv.hi}, {"integral", true}});
                }
                json body{{"input", id},
                          {"range", {{"lo", 0}, {"hi", sut_.shape.value_max}, {"integral", true}}},
                          {"ecs", std::move(ecs)}};
                engine_.admin("ecs", body, lead_);
                changed = true;
            }
        }
        return changed;
    }

    const SimInput* find_input(const std::string& locator) const {
        // p<page>.f<form>.i<k>
        const auto dot = locator.find('.');
        if (locator.size() < 2 || locator[0] != 'p' || dot == std::string::npos) return nullptr;
        const auto page = static_cast<std::uint32_t>(std::stoul(locator.substr(1, dot - 1)));
        if (page >= sut_.pages.size()) return nullptr;
        for (const auto& a : sut_.pages[page].actions) {
            for (const auto& in : a.inputs) {
                if (in.locator == locator) return &in;
            }
        }
        return nullptr;
    }

    void step(std::size_t i, Agent& a) {
        ++a.steps_taken;
        const Timestamp d = duration(a);
        const Timestamp act_ts = a.clock + d - std::min<Timestamp>(500, d / 2);

        const SimElement* chosen = nullptr;
        std::map<std::string, std::string> values;
        if (a.spec.policy.kind == PolicyKind::guided) {
            chosen = guided_choice(i, a, values);
        } else {
            const SimPage& p = sut_.pages[a.page];
            std::vector<const SimElement*> all;
            for (const auto& m : sut_.master) all.push_back(&m);
            for (const auto& l : p.links) all.push_back(&l);
            for (const auto& x : p.actions) all.push_back(&x);
            chosen = all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(a.rng)];
        }

        if (chosen->kind == ElementKind::link) {
            post(i, ActivityEvent{EventKind::element_activated, a.spec.tester, a.session, act_ts,
                                  ActivationPayload{chosen->locator, ElementKind::link}});
        } else {
            post(i, ActivityEvent{EventKind::element_activated, a.spec.tester, a.session, act_ts,
                                  ActivationPayload{chosen->locator, ElementKind::action}});
            FormPayload form;
            form.action_locator = chosen->locator;
            std::uniform_int_distribution<int> any(0, sut_.shape.value_max);
            for (const auto& in : chosen->inputs) {
                auto it = values.find(in.locator);
                std::string v = it != values.end() ? it->second : std::to_string(any(a.rng));
                values[in.locator] = v;
                form.entries.push_back(FormEntry{in.locator, v});
            }
            post(i, ActivityEvent{EventKind::form_submitted, a.spec.tester, a.session, act_ts, std::move(form)});
        }
        record_defect(a, *chosen, values, act_ts);
        view(i, a, chosen->target, a.clock + d);
        a.clock += d;
    }

    const SimElement* guided_choice(std::size_t i, Agent& a, std::map<std::string, std::string>& values) {
        const Caller& lead = lead_;
        if (a.spec.policy.ranking_fn == RankingFn::page_complexity) {
            auto peek = [&](const SimElement& link) {
                post(i, ActivityEvent{EventKind::page_peek, a.spec.tester, a.session, a.clock,
                                      PeekPayload{link.locator, sut_.counts(link.target)}});
            };
            for (const auto& m : sut_.master) peek(m);
            for (const auto& l : sut_.pages[a.page].links) peek(l);
        }
        json tc = engine_.testcase(a.spec.tester, std::nullopt, lead);
        if (define_ecs(tc)) tc = engine_.testcase(a.spec.tester, std::nullopt, lead);

        const std::string wanted(wayfinder::to_string(a.spec.policy.strategy));
        const json* top = nullptr;
        for (const auto& g : tc.at("suggestions")) {
            if (g.at("strategy") == wanted && !g.at("items").empty()) top = &g.at("items").at(0);
        }
        const SimElement* chosen = nullptr;
        if (top) {
            const std::string locator = top->at("locator").get<std::string>();
            bool listed = false;
            for (const char* list : {"links", "actions"}) {
                for (const auto& e : tc.at(list)) listed = listed || e.at("locator") == locator;
            }
            chosen = sut_.find(a.page, locator);
            if (!listed || !chosen) ++run_.illegal_activations;
            if (chosen && chosen->kind == ElementKind::action) {
                const auto element = top->at("element").get<std::uint32_t>();
                for (const auto& d : tc.at("data")) {
                    if (d.at("action").get<std::uint32_t>() != element) continue;
                    for (const auto& in : d.at("inputs")) {
                        if (in.at("value").is_string()) values[in.at("locator").get<std::string>()] = in.at("value").get<std::string>();
                    }
                }
            }
        }
        if (!chosen) {
            ++run_.illegal_activations;
            const SimPage& p = sut_.pages[a.page];
            chosen = !p.links.empty() ? &p.links.front() : &sut_.master.front();
        }
        return chosen;
    }

    void record_defect(const Agent& a, const SimElement& element, const std::map<std::string, std::string>& values,
                       Timestamp ts) {
        const SimPage& p = sut_.pages[a.page];
        const auto& list = element.kind == ElementKind::link ? p.links : p.actions;
        if (&element < list.data() || &element >= list.data() + list.size()) return;  // master element
        const auto index = static_cast<std::size_t>(&element - list.data());
        const DefectMarker* m = sut_.marker(a.page, element.kind, index);
        if (!m) return;
        if (m->condition) {
            const SimInput& in = element.inputs.at(m->condition->first);
            const Interval& ec = in.ecs.at(m->condition->second);
            auto v = parse_number(values.at(in.locator));
            if (!v || *v < ec.lo || *v > ec.hi) return;
        }
        run_.activations.push_back(DefectActivation{ts, m->defect, a.session});
    }

    const SyntheticSut& sut_;
    Engine& engine_;
    DurationModel durations_;
    Caller lead_{Role::admin, ""};
    std::set<std::uint32_t> defined_;
    SimRun run_;
};

}  // namespace

SimRun simulate_team(const SyntheticSut& sut, Engine& engine, const std::vector<AgentSpec>& agents, std::size_t steps,
                     const DurationModel& durations) {
    return Driver(sut, engine, durations).run(agents, steps);
}

SimRun simulate_tester(const SyntheticSut& sut, Engine& engine, const AgentSpec& agent, std::size_t steps,
                       const DurationModel& durations) {
    return simulate_team(sut, engine, {agent}, steps, durations);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config", "experiment config must be an object");
    ExperimentConfig c;
    if (j.contains("sut")) c.sut = j.at("sut").get<SutShape>();
    const std::uint64_t base = j.value("base_seed", std::uint64_t{1});
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        if (s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
            for (std::uint64_t k = 0; k < s.get<std::uint64_t>(); ++k) c.seeds.push_back(base + k);
        } else if (s.is_array()) {
            for (const auto& v : s) c.seeds.push_back(v.get<std::uint64_t>());
        } else {
            throw ValidationError("seeds", "seeds must be a count or a list");
        }
    } else {
        c.seeds.push_back(base);
    }
    if (c.seeds.empty()) throw ValidationError("seeds", "at least one seed is required");
    c.steps = j.value("steps", c.steps);
    if (j.contains("duration")) {
        c.durations.median_s = j.at("duration").value("median_s", c.durations.median_s);
        c.durations.sigma = j.at("duration").value("sigma", c.durations.sigma);
        if (!(c.durations.median_s > 0) || !(c.durations.sigma >= 0)) {
            throw ValidationError("duration", "median_s must be > 0 and sigma >= 0");
        }
    }
    c.idle_threshold_s = j.value("idle_threshold_s", c.idle_threshold_s);
    if (!j.contains("arms") || !j.at("arms").is_array()) throw ValidationError("arms", "arms must be a list");
    std::set<std::string> names;
    for (const auto& a : j.at("arms")) {
        ArmConfig arm;
        arm.name = a.at("name").get<std::string>();
        arm.agents = a.value("agents", 1);
        const std::string budget = a.value("budget", std::string("per_agent"));
        if (budget != "per_agent" && budget != "shared") {
            throw ValidationError("budget", "budget must be per_agent or shared");
        }
        arm.shared_budget = budget == "shared";
        if (arm.agents < 1) throw ValidationError("agents", "arm '" + arm.name + "' needs at least one agent");
        if (a.contains("policy")) arm.policy = a.at("policy").get<AgentPolicy>();
        if (!names.insert(arm.name).second) throw ValidationError("arms", "duplicate arm name '" + arm.name + "'");
        c.arms.push_back(std::move(arm));
    }
    if (c.arms.size() < 2) throw ValidationError("arms", "at least two arms are required");
    if (j.contains("compare")) {
        for (const auto& p : j.at("compare")) {
            Comparison cmp{p.at("aut").get<std::string>(), p.at("man").get<std::string>()};
            if (!names.count(cmp.aut) || !names.count(cmp.man)) {
                throw ValidationError("compare", "comparison names an unknown arm");
            }
            c.compare.push_back(std::move(cmp));
        }
    } else {
        for (std::size_t k = 1; k < c.arms.size(); ++k) c.compare.push_back(Comparison{c.arms[k].name, c.arms[0].name});
    }
    c.threads = j.value("threads", 0u);
    return c;
}

json ExperimentConfig::to_json() const {
    json arms_json = json::array();
    for (const auto& a : arms) arms_json.push_back(json{{"name", a.name},
                                               {"agents", a.agents},
                                               {"budget", a.shared_budget ? "shared" : "per_agent"},
                                               {"policy", a.policy}});
    json cmp = json::array();
    for (const auto& c : compare) cmp.push_back(json{{"aut", c.aut}, {"man", c.man}});
    return json{{"sut", sut},
                {"seeds", seeds},
                {"steps", steps},
                {"duration", {{"median_s", durations.median_s}, {"sigma", durations.sigma}}},
                {"idle_threshold_s", idle_threshold_s},
                {"arms", arms_json},
                {"compare", cmp},
                {"threads", threads}};
}

std::optional<double> diff(double aut, double man) {
    if (aut == 0) {
        if (man == 0) return 0.0;
        return std::nullopt;
    }
    return (aut - man) / aut;
}

MetricValues ExperimentReport::arm_mean(const std::string& arm) const {
    static const std::array<double MetricValues::*, 9> counts = {
        &MetricValues::pages,   &MetricValues::u_pages,   &MetricValues::links,
        &MetricValues::u_links, &MetricValues::actions,   &MetricValues::u_actions,
        &MetricValues::defects, &MetricValues::u_defects, &MetricValues::tau};
    MetricValues mean;
    std::size_t n = 0;
    for (const auto& r : runs) {
        if (r.arm != arm) continue;
        ++n;
        for (auto f : counts) mean.*f += r.report.pooled.*f;
    }
    if (n == 0) throw NotFound("no runs for arm '" + arm + "'");
    for (auto f : counts) mean.*f /= static_cast<double>(n);
    mean.derive();
    return mean;
}

const RunResult& ExperimentReport::run(const std::string& arm, std::uint64_t seed) const {
    for (const auto& r : runs) {
        if (r.arm == arm && r.seed == seed) return r;
    }
    throw NotFound("no run for arm '" + arm + "' seed " + std::to_string(seed));
}

std::string ExperimentReport::to_csv() const {
    std::ostringstream out;
    out << "row";
    for (const auto& [name, field] : MetricValues::fields()) out << ',' << name;
    out << '\n';
    for (const auto& arm : config.arms) {
        const MetricValues m = arm_mean(arm.name);
        out << arm.name;
        for (const auto& [name, field] : MetricValues::fields()) out << ',' << fmt(m.*field, 6);
        out << '\n';
    }
    for (const auto& c : config.compare) {
        const MetricValues aut = arm_mean(c.aut), man = arm_mean(c.man);
        out << "DIFF(" << c.aut << ";" << c.man << ")";
        for (const auto& [name, field] : MetricValues::fields()) {
            auto d = diff(aut.*field, man.*field);
            out << ',' << (d ? fmt(*d * 100.0, 4) : std::string("n/a"));
        }
        out << '\n';
    }
    return out.str();
}

std::string ExperimentReport::to_table() const {
    std::vector<std::string> header{"metric"};
    for (const auto& arm : config.arms) header.push_back(arm.name);
    for (const auto& c : config.compare) header.push_back("DIFF " + c.aut + " vs " + c.man);
    std::vector<std::vector<std::string>> rows{header};
    std::map<std::string, MetricValues> means;
    for (const auto& arm : config.arms) means[arm.name] = arm_mean(arm.name);
    for (const auto& [name, field] : MetricValues::fields()) {
        std::vector<std::string> row{name};
        for (const auto& arm : config.arms) row.push_back(fmt(means[arm.name].*field, 2));
        for (const auto& c : config.compare) {
            auto d = diff(means[c.aut].*field, means[c.man].*field);
            row.push_back(d ? fmt(*d * 100.0, 1) + "%" : std::string("n/a"));
        }
        rows.push_back(std::move(row));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) width[k] = std::max(width[k], r[k].size());
    }
    std::ostringstream out;
    out << "seeds: " << config.seeds.size() << ", steps: " << config.steps << ", pages: " << config.sut.pages << '\n';
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k == 0) {
                out << r[k] << std::string(width[k] - r[k].size(), ' ');
            } else {
                out << "  " << std::string(width[k] - r[k].size(), ' ') << r[k];
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string ExperimentReport::seeds_csv() const {
    std::ostringstream out;
    out << "arm,seed";
    for (const auto& [name, field] : MetricValues::fields()) out << ',' << name;
    out << ",excluded_step_ratio\n";
    for (const auto& r : runs) {
        out << r.arm << ',' << r.seed;
        for (const auto& [name, field] : MetricValues::fields()) out << ',' << fmt(r.report.pooled.*field, 6);
        out << ',' << fmt(r.report.excluded_step_ratio, 6) << '\n';
    }
    return out.str();
}

namespace {

EngineConfig engine_config_for(const ExperimentConfig& config) {
    EngineConfig ec;
    ec.idle_threshold_ms = config.idle_threshold_s * 1000;
    return ec;
}

std::uint64_t agent_seed(std::uint64_t seed, int agent) {
    return fnv1a("agent:" + std::to_string(agent), seed * 0x9e3779b97f4a7c15ULL + 1);
}

MetricReport measure(Engine& engine, const std::vector<DefectActivation>& activations, const ExperimentConfig& config) {
    MetricConfig mc;
    mc.idle_threshold_ms = config.idle_threshold_s * 1000;
    mc.normalization = engine.config().reconstruction.normalization;
    const auto events = engine.event_log();
    const Workspace ws = engine.workspace_copy();
    return compute_metrics(ws.model, events, activations, "team", mc);
}

std::string ndjson(const std::vector<ActivityEvent>& events) {
    std::string out;
    for (const auto& e : events) out += event_to_json(e).dump() + '\n';
    return out;
}

std::filesystem::path run_dir(const std::filesystem::path& out, const std::string& arm, std::uint64_t seed) {
    return out / "runs" / arm / ("seed-" + std::to_string(seed));
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < count; k = next++) {
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out) {
    ExperimentReport report;
    report.config = config;
    const std::size_t n_seeds = config.seeds.size();
    report.runs.resize(config.arms.size() * n_seeds);

    parallel_for(report.runs.size(), config.threads, [&](std::size_t k) {
        const ArmConfig& arm = config.arms[k / n_seeds];
        const std::uint64_t seed = config.seeds[k % n_seeds];
        const SyntheticSut sut = generate_synthetic_sut(config.sut, seed);
        std::vector<AgentSpec> agents;
        for (int a = 0; a < arm.agents; ++a) {
            agents.push_back(AgentSpec{"t" + std::to_string(a + 1), arm.policy, agent_seed(seed, a)});
        }
        Engine engine(engine_config_for(config));
        SimRun sim = simulate_team(sut, engine, agents, arm.steps_per_agent(config.steps), config.durations);

        RunResult& r = report.runs[k];
        r.arm = arm.name;
        r.seed = seed;
        r.report = measure(engine, sim.activations, config);
        r.illegal_activations = sim.illegal_activations;

        if (out) {
            const auto dir = run_dir(*out, arm.name, seed);
            json testers = json::array();
            for (const auto& t : sim.agents) {
                write_file(dir / t.tester / "events.ndjson", ndjson(t.events));
                testers.push_back(t.tester);
            }
            std::string acts;
            for (const auto& a : sim.activations) acts += defect_to_ndjson_line(a) + '\n';
            write_file(dir / "activations.ndjson", acts);
            write_file(dir / "run.json", json{{"arm", arm.name}, {"seed", seed}, {"testers", testers}}.dump(2) + '\n');
            write_file(dir / "sut.json", sut.to_json().dump() + '\n');
        }
    });

    if (out) {
        write_file(*out / "experiment.json", config.to_json().dump(2) + '\n');
        write_report(report, *out);
    }
    return report;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    write_file(dir / "report.csv", report.to_csv());
    write_file(dir / "report.txt", report.to_table());
    write_file(dir / "seeds.csv", report.seeds_csv());
}

ExperimentReport report_from_runs(const std::filesystem::path& dir) {
    ExperimentReport report;
    report.config = ExperimentConfig::from_json(json::parse(read_file(dir / "experiment.json")));
    const ExperimentConfig& config = report.config;
    const std::size_t n_seeds = config.seeds.size();
    report.runs.resize(config.arms.size() * n_seeds);

    parallel_for(report.runs.size(), config.threads, [&](std::size_t k) {
        const ArmConfig& arm = config.arms[k / n_seeds];
        const std::uint64_t seed = config.seeds[k % n_seeds];
        const auto rdir = run_dir(dir, arm.name, seed);
        const json meta = json::parse(read_file(rdir / "run.json"));

        // Merge agent logs by timestamp; ties keep agent order.
        struct Entry {
            Timestamp ts;
            std::size_t agent;
            std::size_t pos;
            json event;
        };
        std::vector<Entry> merged;
        std::size_t agent = 0;
        for (const auto& t : meta.at("testers")) {
            std::istringstream lines(read_file(rdir / t.get<std::string>() / "events.ndjson"));
            std::string line;
            std::size_t pos = 0;
            while (std::getline(lines, line)) {
                if (line.empty()) continue;
                json ev = json::parse(line);
                const Timestamp ts = ev.at("ts").get<Timestamp>();
                merged.push_back(Entry{ts, agent, pos++, std::move(ev)});
            }
            ++agent;
        }
        std::stable_sort(merged.begin(), merged.end(), [](const Entry& a, const Entry& b) {
            return std::tie(a.ts, a.agent, a.pos) < std::tie(b.ts, b.agent, b.pos);
        });
        Engine engine(engine_config_for(config));
        const Caller lead{Role::admin, ""};
        for (const auto& e : merged) engine.post_event(e.event, lead);

        RunResult& r = report.runs[k];
        r.arm = arm.name;
        r.seed = seed;
        r.report = measure(engine, parse_defect_log(read_file(rdir / "activations.ndjson")), config);
    });
    return report;
}

}  // namespace wayfinder::sim
