#include <wayfinder/analytics.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace wayfinder {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

std::vector<Step> extract_steps(const SutModel& model, const std::vector<ActivityEvent>& events,
                                const NormalizationConfig& normalization, Timestamp idle_threshold_ms) {
    std::map<SessionId, std::vector<const ActivityEvent*>> by_session;
    std::vector<SessionId> session_order;
    std::set<std::uint64_t> seen;
    for (const auto& ev : events) {
        if (!seen.insert(event_fingerprint(ev)).second) continue;
        auto [it, fresh] = by_session.try_emplace(ev.session);
        if (fresh) session_order.push_back(ev.session);
        it->second.push_back(&ev);
    }

    std::vector<Step> steps;
    for (const auto& session : session_order) {
        auto& list = by_session[session];
        std::stable_sort(list.begin(), list.end(),
                         [](const ActivityEvent* a, const ActivityEvent* b) { return a->ts < b->ts; });
        std::optional<std::size_t> current;
        auto close = [&](Timestamp ts) {
            if (!current) return;
            Step& s = steps[*current];
            s.end = ts;
            s.closed = true;
            s.idle = s.duration() > idle_threshold_ms;
            current.reset();
        };
        for (const ActivityEvent* ev : list) {
            switch (ev->kind) {
                case EventKind::page_view: {
                    close(ev->ts);
                    const auto& pv = std::get<PageViewPayload>(ev->payload);
                    Step s;
                    s.tester = ev->tester;
                    s.session = ev->session;
                    s.start = ev->ts;
                    s.end = ev->ts;
                    s.page = model.find_page(page_signature(pv.url, pv.elements, normalization));
                    steps.push_back(std::move(s));
                    current = steps.size() - 1;
                    break;
                }
                case EventKind::element_activated: {
                    if (!current || !steps[*current].page) break;
                    const auto& a = std::get<ActivationPayload>(ev->payload);
                    auto id = model.find_element(*steps[*current].page, a.kind, a.locator);
                    if (!id) break;
                    (a.kind == ElementKind::link ? steps[*current].links : steps[*current].actions)
                        .push_back(model.resolve(*id));
                    break;
                }
                case EventKind::session_end: close(ev->ts); break;
                default: break;
            }
        }
    }
    return steps;
}

// ---------------------------------------------------------------------------
// Defects
// ---------------------------------------------------------------------------

std::vector<DefectActivation> parse_defect_log(std::string_view ndjson) {
    std::vector<DefectActivation> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < ndjson.size()) {
        auto nl = ndjson.find('\n', pos);
        if (nl == std::string_view::npos) nl = ndjson.size();
        std::string_view line = ndjson.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            json j = json::parse(line);
            DefectActivation a;
            a.ts = j.at("ts").get<Timestamp>();
            const json& d = j.at("defect");
            a.defect = d.is_string() ? d.get<std::string>() : d.dump();
            if (j.contains("session") && !j.at("session").is_null()) a.session = j.at("session").get<std::string>();
            out.push_back(std::move(a));
        } catch (const json::exception& e) {
            throw ValidationError("defects", "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string defect_to_ndjson_line(const DefectActivation& a) {
    ordered_json j{{"ts", a.ts}, {"defect", a.defect}};
    if (a.session) j["session"] = *a.session;
    return j.dump();
}

DefectJoin join_defect_log(const std::vector<Step>& steps, const std::vector<DefectActivation>& activations) {
    std::map<SessionId, std::vector<std::size_t>> by_session;
    for (std::size_t i = 0; i < steps.size(); ++i) by_session[steps[i].session].push_back(i);
    for (auto& [session, idx] : by_session) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return steps[a].start < steps[b].start; });
    }
    DefectJoin out;
    out.step_of.resize(activations.size());
    for (std::size_t i = 0; i < activations.size(); ++i) {
        const auto& a = activations[i];
        if (a.session) {
            if (auto it = by_session.find(*a.session); it != by_session.end()) {
                const auto& idx = it->second;
                auto after = std::upper_bound(idx.begin(), idx.end(), a.ts,
                                              [&](Timestamp ts, std::size_t s) { return ts < steps[s].start; });
                if (after != idx.begin()) out.step_of[i] = *std::prev(after);
            }
        }
        if (!out.step_of[i]) out.unattributed.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {

double ratio(double num, double den) { return den == 0 ? 0 : num / den; }

struct Tally {
    std::uint64_t pages = 0, links = 0, actions = 0, defects = 0;
    std::set<PageId> u_pages;
    std::set<ElementId> u_links, u_actions;
    std::set<std::string> u_defects;
    Timestamp tau_ms = 0;

    void add_step(const Step& s) {
        ++pages;
        if (s.page) u_pages.insert(*s.page);
        links += s.links.size();
        actions += s.actions.size();
        u_links.insert(s.links.begin(), s.links.end());
        u_actions.insert(s.actions.begin(), s.actions.end());
        tau_ms += s.duration();
    }

    void add_defect(const std::string& id) {
        ++defects;
        u_defects.insert(id);
    }

    MetricValues values() const {
        MetricValues v;
        v.pages = static_cast<double>(pages);
        v.u_pages = static_cast<double>(u_pages.size());
        v.links = static_cast<double>(links);
        v.u_links = static_cast<double>(u_links.size());
        v.actions = static_cast<double>(actions);
        v.u_actions = static_cast<double>(u_actions.size());
        v.defects = static_cast<double>(defects);
        v.u_defects = static_cast<double>(u_defects.size());
        v.tau = static_cast<double>(tau_ms) / 1000.0;
        v.derive();
        return v;
    }
};

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

void MetricValues::derive() {
    r_pages = ratio(u_pages, pages) * 100.0;
    r_links = ratio(u_links, links) * 100.0;
    r_actions = ratio(u_actions, actions) * 100.0;
    time_page = ratio(tau, pages);
    time_u_page = ratio(tau, u_pages);
    time_link = ratio(tau, links);
    time_u_link = ratio(tau, u_links);
    time_action = ratio(tau, actions);
    time_u_action = ratio(tau, u_actions);
    time_defect = ratio(tau, defects);
    time_u_defect = ratio(tau, u_defects);
}

const std::array<std::pair<const char*, double MetricValues::*>, 20>& MetricValues::fields() {
    static const std::array<std::pair<const char*, double MetricValues::*>, 20> table{{
        {"pages", &MetricValues::pages},
        {"u_pages", &MetricValues::u_pages},
        {"r_pages", &MetricValues::r_pages},
        {"links", &MetricValues::links},
        {"u_links", &MetricValues::u_links},
        {"r_links", &MetricValues::r_links},
        {"actions", &MetricValues::actions},
        {"u_actions", &MetricValues::u_actions},
        {"r_actions", &MetricValues::r_actions},
        {"time_page", &MetricValues::time_page},
        {"time_u_page", &MetricValues::time_u_page},
        {"time_link", &MetricValues::time_link},
        {"time_u_link", &MetricValues::time_u_link},
        {"time_action", &MetricValues::time_action},
        {"time_u_action", &MetricValues::time_u_action},
        {"defects", &MetricValues::defects},
        {"u_defects", &MetricValues::u_defects},
        {"time_defect", &MetricValues::time_defect},
        {"time_u_defect", &MetricValues::time_u_defect},
        {"tau", &MetricValues::tau},
    }};
    return table;
}

ordered_json MetricValues::to_json() const {
    ordered_json j = ordered_json::object();
    for (const auto& [name, field] : fields()) j[name] = this->*field;
    return j;
}

MetricReport compute_metrics(const SutModel& model, const std::vector<ActivityEvent>& events,
                             const std::vector<DefectActivation>& defects, const std::string& scope,
                             const MetricConfig& config) {
    if (config.idle_threshold_ms <= 0) throw ValidationError("idle_threshold", "idle threshold must be positive");
    const bool team = scope == "team";
    MetricReport report;
    report.scope = scope;

    std::set<TesterId> participants;
    for (const auto& ev : events) {
        if (team || ev.tester == scope) participants.insert(ev.tester);
    }
    if (!team && participants.empty() && !model.team().count(scope)) {
        throw NotFound("unknown tester '" + scope + "'");
    }

    const auto steps = extract_steps(model, events, config.normalization, config.idle_threshold_ms);
    const auto join = join_defect_log(steps, defects);

    std::map<TesterId, Tally> per;
    for (const auto& t : participants) per[t];
    Tally pooled;
    std::size_t closed = 0;
    for (const auto& s : steps) {
        if (!participants.count(s.tester)) continue;
        ++report.total_steps;
        if (!s.closed) {
            ++report.open_steps;
            continue;
        }
        ++closed;
        if (s.idle) {
            ++report.excluded_steps;
            continue;
        }
        per[s.tester].add_step(s);
        pooled.add_step(s);
    }
    for (std::size_t i = 0; i < defects.size(); ++i) {
        if (!join.step_of[i]) {
            if (team || (defects[i].session && std::any_of(steps.begin(), steps.end(), [&](const Step& s) {
                             return s.session == *defects[i].session && s.tester == scope;
                         }))) {
                ++report.unattributed_defects;
            }
            continue;
        }
        const Step& s = steps[*join.step_of[i]];
        if (!participants.count(s.tester) || !s.included()) continue;
        per[s.tester].add_defect(defects[i].defect);
        pooled.add_defect(defects[i].defect);
    }

    report.participants = participants.size();
    report.excluded_step_ratio = closed == 0 ? 0 : 100.0 * static_cast<double>(report.excluded_steps) / static_cast<double>(closed);
    report.pooled = pooled.values();
    for (const auto& [t, tally] : per) report.per_tester[t] = tally.values();

    MetricValues mean;
    if (!per.empty()) {
        const double n = static_cast<double>(per.size());
        for (const auto& [t, v] : report.per_tester) {
            mean.pages += v.pages / n;
            mean.u_pages += v.u_pages / n;
            mean.links += v.links / n;
            mean.u_links += v.u_links / n;
            mean.actions += v.actions / n;
            mean.u_actions += v.u_actions / n;
            mean.defects += v.defects / n;
            mean.u_defects += v.u_defects / n;
            mean.tau += v.tau / n;
        }
    }
    mean.derive();
    report.per_tester_mean = mean;
    return report;
}

ordered_json MetricReport::to_json() const {
    ordered_json testers = ordered_json::object();
    for (const auto& [t, v] : per_tester) testers[t] = v.to_json();
    return ordered_json{{"scope", scope},
                        {"participants", participants},
                        {"per_tester_mean", per_tester_mean.to_json()},
                        {"pooled", pooled.to_json()},
                        {"total_steps", total_steps},
                        {"excluded_steps", excluded_steps},
                        {"open_steps", open_steps},
                        {"excluded_step_ratio", excluded_step_ratio},
                        {"unattributed_defects", unattributed_defects},
                        {"per_tester", std::move(testers)}};
}

std::string MetricReport::to_table() const {
    std::vector<std::array<std::string, 3>> rows;
    rows.push_back({"metric", "per_tester_mean", "pooled"});
    rows.push_back({"|T|", std::to_string(participants), std::to_string(participants)});
    for (const auto& [name, field] : MetricValues::fields()) {
        rows.push_back({name, format_value(per_tester_mean.*field), format_value(pooled.*field)});
    }
    rows.push_back({"excluded_step_ratio", format_value(excluded_step_ratio), format_value(excluded_step_ratio)});
    std::array<std::size_t, 3> width{};
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < 3; ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream out;
    out << "scope: " << scope << '\n';
    for (const auto& r : rows) {
        out << r[0] << std::string(width[0] - r[0].size() + 2, ' ');
        out << std::string(width[1] - r[1].size(), ' ') << r[1] << "  ";
        out << std::string(width[2] - r[2].size(), ' ') << r[2] << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Graph export
// ---------------------------------------------------------------------------

ordered_json export_graph(const SutModel& model) {
    ordered_json nodes = ordered_json::array();
    for (const auto& p : model.pages()) {
        const PageCounts c = model.counts(p.id);
        ordered_json masters = ordered_json::array();
        for (auto m : p.master_refs) masters.push_back(m.value);
        nodes.push_back(ordered_json{{"id", p.id.value},
                                     {"signature", p.signature.canonical()},
                                     {"url", p.url},
                                     {"title", p.title},
                                     {"priority", p.priority},
                                     {"visits", p.visits.team_total},
                                     {"is_master", p.is_master},
                                     {"is_error", model.error_pages().count(p.id) > 0},
                                     {"is_home", model.home_page() == p.id},
                                     {"masters", std::move(masters)},
                                     {"counts", {{"inputs", c.inputs}, {"actions", c.actions}, {"links", c.links}}}});
    }
    struct Edge {
        std::uint32_t source, element, target;
        const char* kind;
        std::uint64_t count;
    };
    std::vector<Edge> edges;
    for (const auto& t : model.link_transitions()) edges.push_back({t.source.value, t.link.value, t.target.value, "link", t.count});
    for (const auto& t : model.action_transitions()) {
        edges.push_back({t.source.value, t.action.value, t.target.value, "action", t.count});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.source, a.element, a.target) < std::tie(b.source, b.element, b.target);
    });
    ordered_json edges_json = ordered_json::array();
    for (const auto& e : edges) {
        edges_json.push_back(ordered_json{
            {"source", e.source}, {"element", e.element}, {"kind", e.kind}, {"target", e.target}, {"count", e.count}});
    }
    return ordered_json{{"nodes", std::move(nodes)}, {"edges", std::move(edges_json)}};
}

}  // namespace wayfinder
