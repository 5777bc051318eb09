#include <wayfinder/testdata.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace wayfinder {

using nlohmann::json;

namespace {

constexpr std::pair<DataStrategy, std::string_view> kStrategyNames[] = {
    {DataStrategy::repeat_last, "DATA_REPEAT_LAST"},
    {DataStrategy::repeat_random, "DATA_REPEAT_RANDOM"},
    {DataStrategy::repeat_random_team, "DATA_REPEAT_RANDOM_TEAM"},
    {DataStrategy::new_random, "DATA_NEW_RANDOM"},
    {DataStrategy::new_random_team, "DATA_NEW_RANDOM_TEAM"},
    {DataStrategy::new_generated, "DATA_NEW_GENERATED"},
    {DataStrategy::new_generated_team, "DATA_NEW_GENERATED_TEAM"},
};

constexpr int kRangeRetries = 100;

std::mt19937_64 make_rng(std::uint64_t seed, const TesterId& tester, ElementId id) {
    std::uint64_t h = fnv1a(tester, seed ^ 0x9e3779b97f4a7c15ULL);
    h = fnv1a(std::to_string(id.value), h);
    return std::mt19937_64{h};
}

json combination_json(const SutModel& model, const Combination& c) {
    json out = json::object();
    for (const auto& [input, value] : c) out[model.element(input).locator] = value;
    return out;
}

struct RangeDraw {
    std::string value;
    bool exhausted = false;
};

/// A value of `range` not in `used`, or a flagged arbitrary value.
RangeDraw draw_unused(const Range& range, const std::set<std::string>& used, std::mt19937_64& rng) {
    if (const auto* iv = std::get_if<Interval>(&range)) {
        auto draw = [&] {
            if (iv->integral) {
                std::uniform_int_distribution<long long> d(static_cast<long long>(std::ceil(iv->lo)),
                                                           static_cast<long long>(std::floor(iv->hi)));
                return format_number(static_cast<double>(d(rng)), true);
            }
            std::uniform_real_distribution<double> d(iv->lo, iv->hi);
            return format_number(d(rng), false);
        };
        std::string v;
        for (int i = 0; i < kRangeRetries; ++i) {
            v = draw();
            if (!used.count(v)) return {v, false};
        }
        return {v, true};
    }
    const auto& values = std::get<Enumeration>(range).values;
    std::vector<std::string> unused;
    for (const auto& v : values) {
        if (!used.count(v)) unused.push_back(v);
    }
    if (!unused.empty()) {
        std::uniform_int_distribution<std::size_t> d(0, unused.size() - 1);
        return {unused[d(rng)], false};
    }
    if (values.empty()) return {"", true};
    std::uniform_int_distribution<std::size_t> d(0, values.size() - 1);
    return {values[d(rng)], true};
}

}  // namespace

std::string_view to_string(DataStrategy strategy) {
    for (const auto& [s, name] : kStrategyNames) {
        if (s == strategy) return name;
    }
    return "DATA_REPEAT_LAST";
}

DataStrategy data_strategy_from_string(std::string_view text) {
    for (const auto& [s, name] : kStrategyNames) {
        if (name == text) return s;
    }
    throw ValidationError("data_strategy", "unknown data strategy '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

std::optional<std::size_t> CombinationPipeline::peek(const TesterId& tester, bool team) const {
    if (auto it = assigned.find(tester); it != assigned.end()) return it->second;
    const auto mine = served.find(tester);
    for (std::size_t i = 0; i < queue.size(); ++i) {
        if (team ? served_team.count(i) > 0 : (mine != served.end() && mine->second.count(i) > 0)) continue;
        return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> CombinationPipeline::take(const TesterId& tester, bool team) {
    auto index = peek(tester, team);
    if (!index) return index;
    assigned[tester] = *index;
    served[tester].insert(*index);
    served_team.insert(*index);
    return index;
}

void CombinationPipeline::release(const TesterId& tester) { assigned.erase(tester); }

json pipeline_to_json(const CombinationPipeline& p) {
    json queue = json::array();
    for (const auto& c : p.queue) {
        json values = json::array();
        for (const auto& [input, value] : c.values) values.push_back(json::array({input.value, value}));
        json flagged = json::array();
        for (auto id : c.without_ec) flagged.push_back(id.value);
        queue.push_back(json{{"values", std::move(values)}, {"without_ec", std::move(flagged)}});
    }
    json assigned = json::object();
    for (const auto& [t, i] : p.assigned) assigned[t] = i;
    return json{{"action", p.action.value},
                {"queue", std::move(queue)},
                {"served", p.served},
                {"served_team", p.served_team},
                {"assigned", std::move(assigned)}};
}

CombinationPipeline pipeline_from_json(const json& j) {
    CombinationPipeline p;
    p.action = ElementId{j.at("action").get<std::uint32_t>()};
    for (const auto& c : j.at("queue")) {
        GeneratedCombination g;
        for (const auto& pair : c.at("values")) g.values[ElementId{pair.at(0).get<std::uint32_t>()}] = pair.at(1).get<std::string>();
        for (const auto& v : c.at("without_ec")) g.without_ec.insert(ElementId{v.get<std::uint32_t>()});
        p.queue.push_back(std::move(g));
    }
    j.at("served").get_to(p.served);
    j.at("served_team").get_to(p.served_team);
    for (const auto& [t, i] : j.at("assigned").items()) p.assigned[t] = i.get<std::size_t>();
    return p;
}

// ---------------------------------------------------------------------------
// suggest_data
// ---------------------------------------------------------------------------

json DataSuggestion::to_json(const SutModel& model) const {
    json inputs_json = json::array();
    for (const auto& s : inputs) {
        json ec = nullptr;
        if (s.ec) ec = *s.ec;
        inputs_json.push_back(json{{"input", s.input.value},
                                   {"locator", s.locator},
                                   {"value", s.value ? json(*s.value) : json(nullptr)},
                                   {"ec", std::move(ec)},
                                   {"exhausted", s.exhausted},
                                   {"random_value", s.random_value},
                                   {"data_t", s.data_t},
                                   {"data_T", s.data_T}});
    }
    json ct = json::array();
    for (const auto& c : combos_t) ct.push_back(combination_json(model, c));
    json cT = json::array();
    for (const auto& c : combos_T) cT.push_back(combination_json(model, c));
    return json{{"action", action.value},
                {"strategy", to_string(strategy)},
                {"inputs", std::move(inputs_json)},
                {"pipeline_index", pipeline_index ? json(*pipeline_index) : json(nullptr)},
                {"pipeline_empty", pipeline_empty},
                {"generated_without_ec", generated_without_ec},
                {"data_Ia_t", std::move(ct)},
                {"data_Ia_T", std::move(cT)}};
}

DataSuggestion suggest_data(const SutModel& model, const TesterId& tester, ElementId action, DataStrategy strategy,
                            const CombinationPipeline* pipeline, std::uint64_t seed) {
    action = model.resolve(action);
    if (model.element(action).kind != ElementKind::action) {
        throw ValidationError("action", "element " + std::to_string(action.value) + " is not an action");
    }
    DataSuggestion out;
    out.action = action;
    out.strategy = strategy;
    const auto inputs = model.form_inputs(action);
    if (inputs.empty()) return out;

    if (auto it = model.data().combinations.find(action); it != model.data().combinations.end()) {
        for (const auto& r : it->second) {
            out.combos_T.push_back(r.values);
            if (r.tester == tester) out.combos_t.push_back(r.values);
        }
    }
    for (ElementId i : inputs) {
        InputSuggestion s;
        s.input = i;
        s.locator = model.element(i).locator;
        for (const auto& d : model.input_values(i, &tester)) s.data_t.push_back(d.value);
        for (const auto& d : model.input_values(i, nullptr)) s.data_T.push_back(d.value);
        out.inputs.push_back(std::move(s));
    }

    auto rng = make_rng(seed, tester, action);
    switch (strategy) {
        case DataStrategy::repeat_last:
            for (auto& s : out.inputs) {
                if (!s.data_t.empty()) s.value = s.data_t.back();
            }
            break;
        case DataStrategy::repeat_random:
        case DataStrategy::repeat_random_team: {
            const auto& pool = strategy == DataStrategy::repeat_random ? out.combos_t : out.combos_T;
            if (pool.empty()) break;
            std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
            const Combination& pick = pool[d(rng)];
            for (auto& s : out.inputs) {
                if (auto v = pick.find(s.input); v != pick.end()) s.value = v->second;
            }
            break;
        }
        case DataStrategy::new_random:
        case DataStrategy::new_random_team: {
            const bool team = strategy == DataStrategy::new_random_team;
            for (auto& s : out.inputs) {
                const UiElement& el = model.element(s.input);
                const auto& prior = team ? s.data_T : s.data_t;
                if (!el.ecs.empty()) {
                    std::vector<std::size_t> uses(el.ecs.size(), 0);
                    for (std::size_t k = 0; k < el.ecs.size(); ++k) {
                        for (const auto& v : prior) uses[k] += el.ecs[k].contains(v) ? 1 : 0;
                    }
                    std::vector<std::size_t> clean;
                    for (std::size_t k = 0; k < uses.size(); ++k) {
                        if (uses[k] == 0) clean.push_back(k);
                    }
                    std::size_t pick;
                    if (!clean.empty()) {
                        std::uniform_int_distribution<std::size_t> d(0, clean.size() - 1);
                        pick = clean[d(rng)];
                    } else {
                        pick = static_cast<std::size_t>(std::min_element(uses.begin(), uses.end()) - uses.begin());
                        s.exhausted = true;
                    }
                    s.ec = el.ecs[pick];
                    s.value = el.ecs[pick].representative();
                } else {
                    const Range range = el.declared_range.value_or(default_range());
                    auto draw = draw_unused(range, std::set<std::string>(prior.begin(), prior.end()), rng);
                    s.value = draw.value;
                    s.exhausted = draw.exhausted;
                    s.random_value = true;
                }
            }
            break;
        }
        case DataStrategy::new_generated:
        case DataStrategy::new_generated_team: {
            if (!pipeline) {
                out.pipeline_empty = true;
                break;
            }
            auto index = pipeline->peek(tester, strategy == DataStrategy::new_generated_team);
            if (!index) {
                out.pipeline_empty = true;
                break;
            }
            out.pipeline_index = index;
            const GeneratedCombination& c = pipeline->queue[*index];
            out.generated_without_ec = c.generated_without_ec();
            for (auto& s : out.inputs) {
                for (const auto& [input, value] : c.values) {
                    if (model.resolve(input) == s.input) s.value = value;
                }
                for (ElementId f : c.without_ec) {
                    if (model.resolve(f) == s.input) s.random_value = true;
                }
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CIT import
// ---------------------------------------------------------------------------

CitFormat cit_format_from_string(std::string_view text) {
    if (text == "csv" || text == "text/csv") return CitFormat::csv;
    if (text == "json" || text == "application/json") return CitFormat::json;
    throw ValidationError("format", "unknown CIT format '" + std::string(text) + "'");
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool quoted_field = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        quoted_field = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty() || quoted_field) {
                    throw ValidationError("csv", "line " + std::to_string(line) + ": stray quote inside unquoted field");
                }
                in_quotes = true;
                quoted_field = true;
                break;
            case ',': end_field(); break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                [[fallthrough]];
            case '\n':
                end_record();
                ++line;
                record_line = line;
                break;
            default:
                if (quoted_field) {
                    throw ValidationError("csv", "line " + std::to_string(line) + ": text after closing quote");
                }
                field += c;
        }
    }
    if (in_quotes) throw ValidationError("csv", "line " + std::to_string(record_line) + ": unterminated quoted field");
    if (!field.empty() || !row.empty() || quoted_field) end_record();
    return rows;
}

namespace {

std::vector<ElementId> resolve_columns(const SutModel& model, ElementId action, const std::vector<std::string>& header) {
    const auto inputs = model.form_inputs(action);
    std::vector<ElementId> columns;
    std::set<ElementId> seen;
    for (const auto& name : header) {
        std::optional<ElementId> match;
        for (ElementId i : inputs) {
            if (model.element(i).locator == name || std::to_string(i.value) == name) {
                match = i;
                break;
            }
        }
        if (!match) throw ValidationError("columns", "unknown input column '" + name + "'");
        if (!seen.insert(*match).second) throw ValidationError("columns", "duplicate input column '" + name + "'");
        columns.push_back(*match);
    }
    for (ElementId i : inputs) {
        if (!seen.count(i)) {
            throw ValidationError("columns", "missing input column '" + model.element(i).locator + "'");
        }
    }
    return columns;
}

}  // namespace

CombinationPipeline import_cit(const SutModel& model, ElementId action, std::string_view document, CitFormat format) {
    action = model.resolve(action);
    if (model.element(action).kind != ElementKind::action) {
        throw ValidationError("action", "element " + std::to_string(action.value) + " is not an action");
    }
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row_labels;

    if (format == CitFormat::csv) {
        auto records = parse_csv(document);
        if (records.empty()) throw ValidationError("csv", "document has no header row");
        header = std::move(records.front());
        for (std::size_t r = 1; r < records.size(); ++r) {
            rows.push_back(std::move(records[r]));
            row_labels.push_back("row " + std::to_string(r));
        }
    } else {
        json doc;
        try {
            doc = json::parse(document);
        } catch (const json::parse_error& e) {
            throw ValidationError("json", std::string("document does not parse: ") + e.what());
        }
        if (!doc.is_object() || !doc.contains("inputs") || !doc.contains("combinations") ||
            !doc.at("inputs").is_array() || !doc.at("combinations").is_array()) {
            throw ValidationError("json", "expected {\"action\", \"inputs\": [...], \"combinations\": [[...]]}");
        }
        if (doc.contains("action")) {
            const json& a = doc.at("action");
            const UiElement& el = model.element(action);
            bool ok = (a.is_string() && (a.get<std::string>() == el.locator || a.get<std::string>() == std::to_string(action.value))) ||
                      (a.is_number_unsigned() && model.resolve(ElementId{a.get<std::uint32_t>()}) == action);
            if (!ok) throw ValidationError("action", "document is for action " + a.dump() + ", not '" + el.locator + "'");
        }
        for (const auto& h : doc.at("inputs")) {
            if (!h.is_string()) throw ValidationError("inputs", "input names must be strings");
            header.push_back(h.get<std::string>());
        }
        std::size_t r = 0;
        for (const auto& row : doc.at("combinations")) {
            ++r;
            if (!row.is_array()) throw ValidationError("combinations", "row " + std::to_string(r) + " is not an array");
            std::vector<std::string> values;
            for (const auto& v : row) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            rows.push_back(std::move(values));
            row_labels.push_back("row " + std::to_string(r));
        }
    }

    const auto columns = resolve_columns(model, action, header);
    CombinationPipeline pipeline;
    pipeline.action = action;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != columns.size()) {
            throw ValidationError("rows", row_labels[r] + ": expected " + std::to_string(columns.size()) + " values, got " +
                                              std::to_string(rows[r].size()));
        }
        GeneratedCombination c;
        for (std::size_t k = 0; k < columns.size(); ++k) c.values[columns[k]] = rows[r][k];
        pipeline.queue.push_back(std::move(c));
    }
    return pipeline;
}

// ---------------------------------------------------------------------------
// Pairwise generation
// ---------------------------------------------------------------------------

std::vector<GeneratedCombination> generate_pairwise(const std::vector<PairwiseInput>& inputs, std::uint64_t seed) {
    const std::size_t k = inputs.size();
    if (k == 0) return {};

    // Levels per input: EC representatives, or a single random range value.
    std::vector<std::vector<std::string>> levels(k);
    std::vector<bool> flagged(k, false);
    std::mt19937_64 rng{seed};
    for (std::size_t i = 0; i < k; ++i) {
        if (inputs[i].ecs.empty()) {
            levels[i].push_back(draw_unused(inputs[i].range, {}, rng).value);
            flagged[i] = true;
        } else {
            for (const auto& ec : inputs[i].ecs) levels[i].push_back(ec.representative());
        }
    }

    auto make = [&](const std::vector<std::size_t>& choice) {
        GeneratedCombination c;
        for (std::size_t i = 0; i < k; ++i) {
            c.values[inputs[i].input] = levels[i][choice[i]];
            if (flagged[i]) c.without_ec.insert(inputs[i].input);
        }
        return c;
    };

    std::size_t factorial = 1;
    for (const auto& l : levels) factorial *= l.size();

    std::vector<std::vector<std::size_t>> rows;
    if (k == 1) {
        for (std::size_t v = 0; v < levels[0].size(); ++v) rows.push_back({v});
    } else {
        // uncovered[(a,b)] holds the still-missing level pairs for inputs a < b.
        std::map<std::pair<std::size_t, std::size_t>, std::set<std::pair<std::size_t, std::size_t>>> uncovered;
        std::size_t remaining = 0;
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a + 1; b < k; ++b) {
                auto& set = uncovered[{a, b}];
                for (std::size_t x = 0; x < levels[a].size(); ++x) {
                    for (std::size_t y = 0; y < levels[b].size(); ++y) set.insert({x, y});
                }
                remaining += set.size();
            }
        }
        const std::size_t npos = static_cast<std::size_t>(-1);
        while (remaining > 0) {
            std::vector<std::size_t> row(k, npos);
            // Seed the row with the first uncovered pair.
            for (auto& [ab, set] : uncovered) {
                if (set.empty()) continue;
                row[ab.first] = set.begin()->first;
                row[ab.second] = set.begin()->second;
                break;
            }
            for (std::size_t i = 0; i < k; ++i) {
                if (row[i] != npos) continue;
                std::size_t best = 0;
                std::size_t best_gain = 0;
                for (std::size_t v = 0; v < levels[i].size(); ++v) {
                    std::size_t gain = 0;
                    for (std::size_t j = 0; j < k; ++j) {
                        if (j == i || row[j] == npos) continue;
                        const auto key = i < j ? std::pair{i, j} : std::pair{j, i};
                        const auto pair = i < j ? std::pair{v, row[j]} : std::pair{row[j], v};
                        gain += uncovered[key].count(pair);
                    }
                    if (gain > best_gain) {
                        best_gain = gain;
                        best = v;
                    }
                }
                row[i] = best;
            }
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = a + 1; b < k; ++b) remaining -= uncovered[{a, b}].erase({row[a], row[b]});
            }
            rows.push_back(std::move(row));
        }
        if (rows.size() > factorial) {
            rows.clear();
            std::vector<std::size_t> choice(k, 0);
            bool done = false;
            while (!done) {
                rows.push_back(choice);
                std::size_t i = k;
                for (;;) {
                    if (i == 0) {
                        done = true;
                        break;
                    }
                    --i;
                    if (++choice[i] < levels[i].size()) break;
                    choice[i] = 0;
                }
            }
        }
    }

    std::vector<GeneratedCombination> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(make(r));
    return out;
}

CombinationPipeline generate_pipeline(const SutModel& model, ElementId action, std::uint64_t seed) {
    action = model.resolve(action);
    if (model.element(action).kind != ElementKind::action) {
        throw ValidationError("action", "element " + std::to_string(action.value) + " is not an action");
    }
    std::vector<PairwiseInput> inputs;
    for (ElementId i : model.form_inputs(action)) {
        const UiElement& el = model.element(i);
        inputs.push_back(PairwiseInput{i, el.ecs, el.declared_range.value_or(default_range())});
    }
    if (inputs.empty()) throw ValidationError("action", "action has no form inputs");
    if (std::all_of(inputs.begin(), inputs.end(), [](const PairwiseInput& p) { return p.ecs.empty(); })) {
        throw ValidationError("ecs", "no equivalence classes defined for any input of the action");
    }
    CombinationPipeline pipeline;
    pipeline.action = action;
    pipeline.queue = generate_pairwise(inputs, seed);
    return pipeline;
}

// ---------------------------------------------------------------------------
// Error combinations
// ---------------------------------------------------------------------------

void record_error_combination(SutModel& model, ElementId action, Combination combination, Outcome outcome,
                              const TesterId& tester, Timestamp ts) {
    if (outcome == Outcome::normal) throw ValidationError("outcome", "outcome must be error_page or error_message");
    CombinationRecord record;
    record.tester = tester;
    record.ts = ts;
    record.values = std::move(combination);
    record.outcome = outcome;
    model.record_combination(action, std::move(record));
}

std::vector<ErrorCombination> error_combinations(const SutModel& model, ElementId action) {
    action = model.resolve(action);
    std::vector<ErrorCombination> out;
    auto it = model.data().combinations.find(action);
    if (it == model.data().combinations.end()) return out;
    for (const auto& r : it->second) {
        if (r.outcome == Outcome::normal) continue;
        auto same = std::find_if(out.begin(), out.end(), [&](const ErrorCombination& e) { return e.values == r.values; });
        if (same == out.end()) {
            out.push_back(ErrorCombination{r.values, r.outcome, 0, {}});
            same = std::prev(out.end());
        }
        ++same->occurrences;
        if (!r.tester.empty()) same->testers.insert(r.tester);
    }
    return out;
}

}  // namespace wayfinder
