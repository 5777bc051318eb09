#include <wayfinder/engine.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

namespace wayfinder {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool is_non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

const std::set<std::string> kAdminOps = {"priority", "ecs", "notes", "strategy", "weights", "cit_import", "cit_generate"};

ElementId element_arg(const json& body, const char* key) {
    if (!body.contains(key)) throw ValidationError(key, std::string("missing field '") + key + "'");
    const json& v = body.at(key);
    if (!is_non_negative_integer(v)) throw ValidationError(key, std::string("field '") + key + "' must be an element id");
    return ElementId{v.get<std::uint32_t>()};
}

VisitTarget target_arg(const json& body) {
    if (body.contains("page")) {
        const json& v = body.at("page");
        if (!is_non_negative_integer(v)) throw ValidationError("page", "field 'page' must be a page id");
        return PageId{v.get<std::uint32_t>()};
    }
    if (body.contains("element")) return element_arg(body, "element");
    throw ValidationError("target", "expected a 'page' or 'element' id");
}

std::string string_arg(const json& body, const char* key) {
    if (!body.contains(key) || !body.at(key).is_string()) {
        throw ValidationError(key, std::string("field '") + key + "' must be a string");
    }
    return body.at(key).get<std::string>();
}

}  // namespace

Command Command::from_json(const json& j) {
    return Command{j.at("op").get<std::string>(), j.at("body")};
}

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

Workspace::Workspace(const EngineConfig& config)
    : reconstructor(config.reconstruction),
      sequencer(config.reconstruction.reorder_window_ms),
      default_weights(config.default_weights),
      seed(config.seed) {}

std::uint64_t Workspace::data_seed() const { return fnv1a(std::to_string(commands), seed ^ 0x5bd1e995ULL); }

PipelineMap Workspace::resolved_pipelines() const {
    PipelineMap out;
    for (const auto& [action, p] : pipelines) out[model.resolve(action)] = p;
    return out;
}

Workspace::Effects Workspace::apply(const Command& command) {
    Effects effects;
    if (command.op == "event") {
        effects = apply_event(parse_event(command.body));
    } else if (command.op == "serve") {
        const TesterId tester = string_arg(command.body, "tester");
        const ElementId action = model.resolve(element_arg(command.body, "action"));
        const bool team = command.body.value("team", false);
        for (auto& [key, p] : pipelines) {
            if (model.resolve(key) == action) effects.result = json{{"index", p.take(tester, team).value_or(0)}};
        }
    } else if (kAdminOps.count(command.op)) {
        effects = apply_admin(command.op, command.body);
    } else {
        throw NotFound("unknown operation '" + command.op + "'");
    }
    ++commands;
    return effects;
}

Workspace::Effects Workspace::apply_event(const ActivityEvent& event) {
    Effects effects;
    ModelDelta delta = reconstructor.ingest(model, event);
    if (!delta.duplicate) sequencer.commit(event);
    now = std::max(now, event.ts);
    if (delta.combination) {
        for (auto& [key, p] : pipelines) {
            if (model.resolve(key) == delta.combination->first) p.release(event.tester);
        }
    }
    effects.notifications.push_back(Notification{event.tester, json{{"type", "delta"}, {"payload", delta.to_json()}}});
    if (!delta.duplicate) {
        auto others = invalidate(testers_on_touched_pages(delta), "model_changed", event.tester);
        effects.notifications.insert(effects.notifications.end(), others.begin(), others.end());
    }
    effects.delta = std::move(delta);
    return effects;
}

Workspace::Effects Workspace::apply_admin(const std::string& op, const json& body) {
    if (!body.is_object()) throw ValidationError("body", "request body must be a JSON object");
    Effects effects;
    std::vector<TesterId> affected = active_testers();
    if (op == "priority") {
        if (!body.contains("priority") || !body.at("priority").is_number_integer()) {
            throw ValidationError("priority", "field 'priority' must be an integer in 1..5");
        }
        model.set_priority(target_arg(body), body.at("priority").get<int>(), Role::test_lead);
    } else if (op == "notes") {
        model.set_note(target_arg(body), string_arg(body, "text"));
    } else if (op == "ecs") {
        const ElementId input = element_arg(body, "input");
        std::vector<EquivalenceClass> ecs;
        if (body.contains("ecs")) {
            if (!body.at("ecs").is_array()) throw ValidationError("ecs", "field 'ecs' must be an array");
            for (const auto& e : body.at("ecs")) ecs.push_back(e.get<EquivalenceClass>());
        }
        if (body.contains("range")) {
            SutModel staged = model;
            staged.declare_range(input, body.at("range").get<Range>());
            staged.define_equivalence_classes(input, std::move(ecs));
            model = std::move(staged);
        } else {
            model.define_equivalence_classes(input, std::move(ecs));
        }
    } else if (op == "strategy") {
        StrategyConfig config;
        config.weights = default_weights;
        wayfinder::from_json(body, config);
        if (config.tester.empty()) throw ValidationError("tester", "field 'tester' is required");
        strategies[config.tester] = config;
        affected = {config.tester};
    } else if (op == "weights") {
        const json& w = body.contains("weights") ? body.at("weights") : body;
        if (body.contains("tester")) {
            const TesterId tester = string_arg(body, "tester");
            auto it = strategies.find(tester);
            if (it == strategies.end()) throw Conflict("tester '" + tester + "' has no strategy assigned");
            WeightConfig weights = it->second.weights;
            wayfinder::from_json(w, weights);
            it->second.weights = weights;
            affected = {tester};
        } else {
            WeightConfig weights = default_weights;
            wayfinder::from_json(w, weights);
            default_weights = weights;
            for (auto& [t, c] : strategies) c.weights = weights;
        }
    } else if (op == "cit_import") {
        const ElementId action = model.resolve(element_arg(body, "action"));
        const CitFormat format = cit_format_from_string(body.value("format", std::string("csv")));
        auto pipeline = import_cit(model, action, string_arg(body, "document"), format);
        effects.result = json{{"action", action.value}, {"combinations", pipeline.queue.size()}};
        for (auto it = pipelines.begin(); it != pipelines.end();) {
            it = model.resolve(it->first) == action ? pipelines.erase(it) : std::next(it);
        }
        pipelines[action] = std::move(pipeline);
    } else if (op == "cit_generate") {
        const ElementId action = model.resolve(element_arg(body, "action"));
        std::uint64_t gen_seed = data_seed();
        if (body.contains("seed")) {
            if (!is_non_negative_integer(body.at("seed"))) throw ValidationError("seed", "seed must be a non-negative integer");
            gen_seed = body.at("seed").get<std::uint64_t>();
        }
        auto pipeline = generate_pipeline(model, action, gen_seed);
        std::size_t flagged = 0;
        for (const auto& c : pipeline.queue) flagged += c.without_ec.empty() ? 0 : 1;
        effects.result = json{{"action", action.value}, {"combinations", pipeline.queue.size()}, {"without_ec", flagged}};
        for (auto it = pipelines.begin(); it != pipelines.end();) {
            it = model.resolve(it->first) == action ? pipelines.erase(it) : std::next(it);
        }
        pipelines[action] = std::move(pipeline);
    }
    effects.notifications = invalidate(affected, op);
    if (effects.result.is_null()) effects.result = json{{"ok", true}};
    return effects;
}

std::vector<TesterId> Workspace::active_testers() const {
    std::set<TesterId> out;
    for (const auto& [id, s] : reconstructor.sessions()) {
        if (s.open) out.insert(s.tester);
    }
    return {out.begin(), out.end()};
}

std::vector<Notification> Workspace::invalidate(const std::vector<TesterId>& testers, const std::string& reason,
                                                const std::optional<TesterId>& except) const {
    std::vector<Notification> out;
    for (const auto& t : testers) {
        if (except && t == *except) continue;
        json page = nullptr;
        for (const auto& [id, s] : reconstructor.sessions()) {
            if (s.open && s.tester == t && s.current_page) page = s.current_page->value;
        }
        out.push_back(Notification{
            t, json{{"type", "testcase_invalidated"}, {"payload", {{"tester", t}, {"page", page}, {"reason", reason}}}}});
    }
    return out;
}

std::vector<TesterId> Workspace::testers_on_touched_pages(const ModelDelta& delta) const {
    std::set<PageId> touched(delta.visited_pages.begin(), delta.visited_pages.end());
    touched.insert(delta.error_pages.begin(), delta.error_pages.end());
    if (delta.current_page) touched.insert(*delta.current_page);
    for (const auto* list : {&delta.created_elements, &delta.visited_elements}) {
        for (ElementId e : *list) touched.insert(model.element(e).owning_page);
    }
    const bool everything = !delta.factored_masters.empty();
    std::set<TesterId> out;
    for (const auto& [id, s] : reconstructor.sessions()) {
        if (!s.open || !s.current_page || s.tester == delta.tester) continue;
        bool hit = everything || touched.count(*s.current_page) > 0;
        for (PageId m : hit ? std::vector<PageId>{} : model.effective_masters(*s.current_page)) hit = hit || touched.count(m) > 0;
        if (hit) out.insert(s.tester);
    }
    return {out.begin(), out.end()};
}

json Workspace::to_json() const {
    json strategies_json = json::array();
    for (const auto& [t, c] : strategies) strategies_json.push_back(c);
    json pipelines_json = json::array();
    for (const auto& [a, p] : pipelines) pipelines_json.push_back(pipeline_to_json(p));
    return json{{"model", model},
                {"reconstructor", reconstructor.state_to_json()},
                {"sequencer", sequencer.state_to_json()},
                {"strategies", std::move(strategies_json)},
                {"default_weights", default_weights},
                {"pipelines", std::move(pipelines_json)},
                {"now", now},
                {"commands", commands},
                {"seed", seed}};
}

Workspace Workspace::from_json(const json& j, const EngineConfig& config) {
    Workspace ws(config);
    ws.model = j.at("model").get<SutModel>();
    ws.reconstructor.state_from_json(j.at("reconstructor"));
    ws.sequencer.state_from_json(j.at("sequencer"));
    for (const auto& c : j.at("strategies")) {
        StrategyConfig sc = c.get<StrategyConfig>();
        ws.strategies[sc.tester] = std::move(sc);
    }
    ws.default_weights = j.at("default_weights").get<WeightConfig>();
    for (const auto& p : j.at("pipelines")) {
        auto pipeline = pipeline_from_json(p);
        ws.pipelines[pipeline.action] = std::move(pipeline);
    }
    ws.now = j.at("now").get<Timestamp>();
    ws.commands = j.at("commands").get<std::uint64_t>();
    ws.seed = j.at("seed").get<std::uint64_t>();
    return ws;
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

Store::Store(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    std::error_code ec;
    auto size = std::filesystem::file_size(journal_path(), ec);
    size_ = ec ? 0 : size;
    reopen();
}

void Store::reopen() {
    journal_.reset(std::fopen(journal_path().c_str(), "ab"));
    if (!journal_) throw std::runtime_error("cannot open journal " + journal_path().string());
}

std::uint64_t Store::append(const Command& command) {
    std::string line = command.to_json().dump();
    line += '\n';
    if (std::fwrite(line.data(), 1, line.size(), journal_.get()) != line.size() || std::fflush(journal_.get()) != 0) {
        throw std::runtime_error("journal write failed");
    }
    size_ += line.size();
    return size_;
}

void Store::write_snapshot(const json& snapshot) {
    const auto tmp = dir_ / "snapshot.json.tmp";
    {
        std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(tmp.c_str(), "wb"), &std::fclose);
        if (!f) throw std::runtime_error("cannot write snapshot");
        const std::string text = snapshot.dump();
        if (std::fwrite(text.data(), 1, text.size(), f.get()) != text.size() || std::fflush(f.get()) != 0) {
            throw std::runtime_error("snapshot write failed");
        }
        ::fsync(fileno(f.get()));
    }
    std::filesystem::rename(tmp, snapshot_path());
}

std::optional<json> Store::read_snapshot() const {
    std::ifstream in(snapshot_path(), std::ios::binary);
    if (!in) return std::nullopt;
    try {
        return json::parse(in);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

Store::JournalTail Store::read_journal(std::uint64_t offset) {
    JournalTail tail;
    tail.end_offset = offset;
    std::ifstream in(journal_path(), std::ios::binary);
    if (!in) return tail;
    in.seekg(static_cast<std::streamoff>(offset));
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            ++tail.dropped;  // torn final record
            break;
        }
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        try {
            tail.commands.push_back(Command::from_json(json::parse(line)));
        } catch (const json::exception&) {
            ++tail.dropped;
        }
        tail.end_offset = offset + pos;
    }
    if (offset + text.size() != tail.end_offset) {
        journal_.reset();
        std::filesystem::resize_file(journal_path(), tail.end_offset);
        reopen();
    }
    size_ = tail.end_offset;
    return tail;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

Engine::Engine(EngineConfig config, std::optional<std::filesystem::path> store)
    : config_(std::move(config)), ws_(config_) {
    if (store) {
        store_.emplace(*store);
        restore();
    } else {
        history_.emplace();
    }
}

Engine::~Engine() {
    try {
        if (store_ && since_snapshot_ > 0) checkpoint();
    } catch (...) {
    }
}

void Engine::restore() {
    std::uint64_t offset = 0;
    if (auto snap = store_->read_snapshot()) {
        try {
            const auto snap_offset = snap->at("offset").get<std::uint64_t>();
            const auto snap_count = snap->at("commands").get<std::uint64_t>();
            std::error_code ec;
            const auto size = std::filesystem::file_size(store_->journal_path(), ec);
            if (!ec && snap_offset <= size) {
                Workspace ws = Workspace::from_json(snap->at("workspace"), config_);
                ws_ = std::move(ws);
                offset = snap_offset;
                journal_count_ = snap_count;
                restored_from_snapshot_ = true;
            }
        } catch (const std::exception&) {
            ws_ = Workspace(config_);
            journal_count_ = 0;
            offset = 0;
        }
    }
    if (!restored_from_snapshot_) history_.emplace();

    auto tail = store_->read_journal(offset);
    restored_tail_ = tail.commands.size();
    for (const auto& command : tail.commands) {
        try {
            commit(command, false);
        } catch (const Error&) {
            // A command that failed once fails identically on every replay; keep it in history.
            if (history_) history_->push_back(command);
            ++journal_count_;
        }
    }
}

void Engine::ensure_history() {
    if (history_) return;
    auto all = store_->read_journal(0);
    if (all.commands.size() > journal_count_) all.commands.resize(journal_count_);
    history_ = std::move(all.commands);
}

std::vector<const Command*> Engine::history_order() const {
    std::vector<std::optional<ActivityEvent>> parsed(history_->size());
    std::vector<const ActivityEvent*> arrivals(history_->size(), nullptr);
    for (std::size_t i = 0; i < history_->size(); ++i) {
        const Command& c = (*history_)[i];
        if (c.op != "event") continue;
        try {
            parsed[i] = parse_event(c.body);
            arrivals[i] = &*parsed[i];
        } catch (const Error&) {
        }
    }
    std::vector<const Command*> out;
    out.reserve(arrivals.size());
    for (std::size_t i : canonical_order(arrivals)) out.push_back(&(*history_)[i]);
    return out;
}

Workspace::Effects Engine::rebuild(std::optional<std::size_t> target) {
    Workspace fresh(config_);
    Workspace::Effects target_effects;
    const Command* target_command = target ? &(*history_)[*target] : nullptr;
    for (const Command* c : history_order()) {
        if (c == target_command) {
            target_effects = fresh.apply(*c);  // errors propagate to the caller
        } else {
            try {
                fresh.apply(*c);
            } catch (const Error&) {
            }
        }
    }
    ws_ = std::move(fresh);
    return target_effects;
}

void Engine::record(const Command& command, bool journal) {
    if (history_) history_->push_back(command);
    ++journal_count_;
    if (!journal || !store_) return;
    store_->append(command);
    ++since_snapshot_;
    if (config_.snapshot_every > 0 && since_snapshot_ >= config_.snapshot_every) checkpoint();
}

void Engine::checkpoint() {
    if (!store_) return;
    store_->write_snapshot(json{{"version", 1},
                                {"commands", journal_count_},
                                {"offset", store_->journal_size()},
                                {"workspace", ws_.to_json()}});
    since_snapshot_ = 0;
}

Workspace::Effects Engine::commit(const Command& command, bool journal) {
    if (command.op == "event") return commit_event(command, parse_event(command.body), journal);
    auto effects = ws_.apply(command);
    record(command, journal);
    return effects;
}

Workspace::Effects Engine::commit_event(const Command& command, const ActivityEvent& event, bool journal) {
    if (ws_.reconstructor.has_seen(event)) {
        Workspace::Effects effects;
        ModelDelta delta;
        delta.tester = event.tester;
        delta.session = event.session;
        delta.kind = event.kind;
        delta.duplicate = true;
        effects.delta = std::move(delta);
        return effects;
    }
    if (ws_.sequencer.check(event) == EventSequencer::Verdict::append) {
        auto effects = ws_.apply(command);
        record(command, journal);
        return effects;
    }

    // Late but inside the window: place it in session order and replay.
    ensure_history();
    history_->push_back(command);
    Workspace::Effects effects;
    try {
        effects = rebuild(history_->size() - 1);
    } catch (...) {
        history_->pop_back();
        rebuild(std::nullopt);
        throw;
    }
    history_->pop_back();
    record(command, journal);
    effects.notifications.erase(std::remove_if(effects.notifications.begin(), effects.notifications.end(),
                                               [](const Notification& n) { return n.frame.at("type") != "delta"; }),
                                effects.notifications.end());
    for (const auto& t : ws_.reconstructor.sessions()) {
        if (t.second.open && t.second.tester != event.tester) {
            effects.notifications.push_back(Notification{
                t.second.tester,
                json{{"type", "testcase_invalidated"},
                     {"payload", {{"tester", t.second.tester},
                                  {"page", t.second.current_page ? json(t.second.current_page->value) : json(nullptr)},
                                  {"reason", "reordered"}}}}});
        }
    }
    return effects;
}

void Engine::publish(const std::vector<Notification>& notes) {
    std::lock_guard lock(sinks_mutex_);
    for (const auto& n : notes) {
        for (const auto& [id, entry] : sinks_) {
            if (entry.first == n.tester) entry.second(n.frame);
        }
    }
}

json Engine::post_event(const json& body, const Caller& caller) {
    const ActivityEvent event = parse_event(body);
    if (caller.role == Role::tester && caller.tester != event.tester) {
        throw Forbidden("token of tester '" + caller.tester + "' cannot post events for '" + event.tester + "'");
    }
    std::lock_guard lock(mutex_);
    auto effects = commit_event(Command{"event", event_to_json(event)}, event, true);
    publish(effects.notifications);
    return effects.delta ? effects.delta->to_json() : json::object();
}

json Engine::testcase(const TesterId& tester, std::optional<PageId> page, const Caller& caller) {
    if (caller.role == Role::tester && caller.tester != tester) {
        throw Forbidden("token of tester '" + caller.tester + "' cannot read test cases of '" + tester + "'");
    }
    std::lock_guard lock(mutex_);
    auto sit = ws_.strategies.find(tester);
    if (sit == ws_.strategies.end()) throw Conflict("tester '" + tester + "' has no strategy assigned");
    if (!page) {
        for (const auto& [id, s] : ws_.reconstructor.sessions()) {
            if (s.open && s.tester == tester && s.current_page) page = s.current_page;
        }
        if (!page) throw NotFound("tester '" + tester + "' has no current page");
    }
    if (!ws_.model.has_page(*page)) throw NotFound("unknown page " + std::to_string(page->value));

    const StrategyConfig config = sit->second;
    if (config.data_strategy == DataStrategy::new_generated || config.data_strategy == DataStrategy::new_generated_team) {
        const bool team = config.data_strategy == DataStrategy::new_generated_team;
        const auto pipelines = ws_.resolved_pipelines();
        for (ElementId action : ws_.model.effective_elements(*page, ElementKind::action)) {
            auto it = pipelines.find(action);
            if (it == pipelines.end() || it->second.assigned.count(tester)) continue;
            if (!it->second.peek(tester, team)) continue;
            commit(Command{"serve", json{{"tester", tester}, {"action", action.value}, {"team", team}}}, true);
        }
    }
    const auto pipelines = ws_.resolved_pipelines();
    auto tc = build_navigational_test_case(ws_.model, tester, *page, config, ws_.now, &pipelines, ws_.data_seed());
    return tc.to_json(ws_.model);
}

json Engine::admin(const std::string& op, const json& body, const Caller& caller) {
    if (!is_lead(caller.role)) throw Forbidden("operation '" + op + "' requires the test_lead role");
    if (!kAdminOps.count(op)) throw NotFound("unknown admin operation '" + op + "'");
    std::lock_guard lock(mutex_);
    auto effects = commit(Command{op, body}, true);
    publish(effects.notifications);
    return effects.result;
}

std::vector<ActivityEvent> Engine::event_log() {
    std::lock_guard lock(mutex_);
    ensure_history();
    std::vector<ActivityEvent> out;
    for (const Command* c : history_order()) {
        if (c->op != "event") continue;
        try {
            out.push_back(parse_event(c->body));
        } catch (const Error&) {
        }
    }
    return out;
}

ordered_json Engine::metrics(const std::string& scope) {
    auto events = event_log();
    std::vector<DefectActivation> defects;
    if (store_) {
        std::ifstream in(store_->defects_path(), std::ios::binary);
        if (in) {
            std::ostringstream buf;
            buf << in.rdbuf();
            defects = parse_defect_log(buf.str());
        }
    }
    std::lock_guard lock(mutex_);
    MetricConfig mc;
    mc.idle_threshold_ms = config_.idle_threshold_ms;
    mc.normalization = config_.reconstruction.normalization;
    return compute_metrics(ws_.model, events, defects, scope, mc).to_json();
}

ordered_json Engine::graph() {
    std::lock_guard lock(mutex_);
    return export_graph(ws_.model);
}

json Engine::health() {
    std::lock_guard lock(mutex_);
    return json{{"status", "ok"},
                {"commands", journal_count_},
                {"pages", ws_.model.pages().size()},
                {"elements", ws_.model.elements().size()},
                {"testers", ws_.model.team().size()}};
}

std::uint64_t Engine::subscribe(const TesterId& tester, Sink sink) {
    std::lock_guard lock(sinks_mutex_);
    const auto id = next_sink_++;
    sinks_[id] = {tester, std::move(sink)};
    return id;
}

void Engine::unsubscribe(std::uint64_t id) {
    std::lock_guard lock(sinks_mutex_);
    sinks_.erase(id);
}

Workspace Engine::workspace_copy() const {
    std::lock_guard lock(mutex_);
    return ws_;
}

}  // namespace wayfinder
