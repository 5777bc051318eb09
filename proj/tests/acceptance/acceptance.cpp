// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "../oracles/metrics_oracle.hpp"
#include "../oracles/pairwise_oracle.hpp"
#include "../oracles/rank_oracle.hpp"
#include "../oracles/strategy_oracle.hpp"
#include "../support/data_checks.hpp"
#include "../support/persistence_check.hpp"
#include "../support/random_log.hpp"
#include "../support/random_model.hpp"
#include "../support/temp_dir.hpp"

#include <wayfinder/sim.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace wayfinder;
using namespace wayfinder::testing;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Pinned tolerances.
constexpr double kRankBudgetS = 1.0;
constexpr double kRatioTolerancePts = 0.1;  // percentage points around 14.5
constexpr double kMetricRelTol = 1e-9;
constexpr int kDirectionalWins = 16;
constexpr double kDirectionalBudgetS = 300.0;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [" << what << "]";
        }
    }
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Verdict ranks(const std::optional<std::string>& oracle_file) {
    Verdict o;
    const auto start = Clock::now();
    WeightConfig w;
    const auto pcr = page_complexity_rank(PageCounts{2, 1, 3}, w);
    const auto pacr = priority_and_complexity_rank(5, PageCounts{0, 0, 0}, w);
    const double elapsed = seconds_since(start);

    std::uint64_t want_pcr = 0, want_pacr = 0;
    if (oracle_file) {
        std::ifstream in(*oracle_file);
        if (!in) {
            o.require(false, "cannot read oracle output " + *oracle_file);
            return o;
        }
        const json ref = json::parse(in);
        want_pcr = ref.at("pcr_2_1_3").get<std::uint64_t>();
        want_pacr = ref.at("pacr_5_0_0_0").get<std::uint64_t>();
    } else {
        want_pcr = *oracle::fit64(oracle::pcr_exact(2, 1, 3, 256, 256, 256));
        want_pacr = *oracle::fit64(oracle::pacr_exact(5, 0, 0, 0, 256, 256, 256, 256));
    }
    o.require(want_pcr == 33'620'736 && want_pacr == 21'474'836'480ULL, "oracle disagrees with the reference values");
    o.require(pcr == want_pcr, "PCR " + std::to_string(pcr));
    o.require(pacr == want_pacr, "PACR " + std::to_string(pacr));
    o.require(elapsed < kRankBudgetS, "too slow");
    o.detail << " pcr=" << pcr << " pacr=" << pacr << " oracle=" << (oracle_file ? "script" : "cpp_int")
             << " time=" << elapsed << "s";
    return o;
}

Verdict metric_formulas() {
    Verdict o;
    MetricValues single;
    single.pages = 152;
    single.u_pages = 22;
    single.derive();
    o.require(std::abs(single.r_pages - 14.5) <= kRatioTolerancePts, "22/152");
    MetricValues team;
    team.pages = 151.8;
    team.u_pages = 22.2;
    team.derive();
    o.require(std::round(team.r_pages * 10) / 10 == 14.6, "22.2/151.8");

    std::size_t events = 0, mismatches = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RandomLogOptions opt;
        opt.testers = 4 + static_cast<int>(seed % 6);
        opt.max_sessions = 4;
        opt.max_steps = 300;
        opt.max_events = 10'000;
        auto log = random_log(1000 + seed, opt);
        events = std::max(events, log.events.size());
        SutModel model = replay(log.events);
        auto report = compute_metrics(model, log.events, log.defects, "team");
        auto want = oracle::oracle_metrics(log.events, log.defects, 900'000);
        auto bad = oracle::metric_mismatches(report.per_tester_mean, want.mean, kMetricRelTol);
        auto bad_pooled = oracle::metric_mismatches(report.pooled, want.pooled, kMetricRelTol);
        mismatches += bad.size() + bad_pooled.size() + (report.excluded_steps != want.excluded);
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " metric mismatches");
    o.require(events <= 10'000, "log too long");
    o.detail << " r_pages(22/152)=" << single.r_pages << " r_pages(22.2/151.8)=" << team.r_pages
             << " logs=20 max_events=" << events << " tol=" << kMetricRelTol;
    return o;
}

Verdict soundness() {
    Verdict o;
    std::size_t cases = 0, violations = 0;
    std::string first;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        auto r = random_model(50'000 + seed);
        StrategyConfig cfg;
        cfg.ranking_fn = seed % 2 ? RankingFn::element_type : RankingFn::page_complexity;
        cfg.weights.last_time_s = static_cast<std::int64_t>(seed % 5) * 20'000;
        const PageId page = r.pages[seed % r.pages.size()];
        const TesterId& tester = r.testers[seed % r.testers.size()];
        ++cases;
        for (NavStrategy s : {NavStrategy::rank_new, NavStrategy::rank_new_team, NavStrategy::rt_time,
                              NavStrategy::prio_new, NavStrategy::prio_new_team}) {
            auto bad = oracle::strategy_violations(r.model, page, tester, s, cfg, r.now);
            if (!bad.empty() && first.empty()) first = bad.front();
            violations += bad.size();
        }
    }
    o.require(violations == 0, first);
    o.detail << " cases=" << cases << " violations=" << violations;
    return o;
}

Verdict directional(const std::string& config_file) {
    Verdict o;
    std::ifstream in(config_file);
    if (!in) {
        o.require(false, "cannot read " + config_file);
        return o;
    }
    auto cfg = sim::ExperimentConfig::from_json(json::parse(in));
    const auto start = Clock::now();
    auto report = sim::run_experiment(cfg);
    const double elapsed = seconds_since(start);

    int pages = 0, actions = 0, defects = 0, team = 0;
    std::size_t illegal = 0;
    for (auto seed : cfg.seeds) {
        const auto& aut = report.run("AUT", seed).report.pooled;
        const auto& man = report.run("MAN", seed).report.pooled;
        pages += aut.u_pages > man.u_pages;
        actions += aut.u_actions > man.u_actions;
        defects += aut.u_defects > man.u_defects;
        team += report.run("TEAM", seed).report.pooled.u_pages > report.run("TEAM_IND", seed).report.pooled.u_pages;
    }
    for (const auto& r : report.runs) illegal += r.illegal_activations;
    const auto n = cfg.seeds.size();
    o.require(n == 20, "expected 20 seeds");
    o.require(pages >= kDirectionalWins, "u_pages");
    o.require(actions >= kDirectionalWins, "u_actions");
    o.require(defects >= kDirectionalWins, "u_defects");
    o.require(team >= kDirectionalWins, "team u_pages");
    o.require(illegal == 0, "guided agents left the suggestion list");
    o.require(elapsed < kDirectionalBudgetS, "too slow");
    o.detail << " AUT>MAN u_pages " << pages << "/" << n << ", u_actions " << actions << "/" << n << ", u_defects "
             << defects << "/" << n << "; TEAM>TEAM_IND u_pages " << team << "/" << n << "; time=" << elapsed << "s";
    return o;
}

Verdict data_strategies() {
    Verdict o;
    auto exhaustive = check_new_random_exhaustive(5);
    auto team = check_generated_team_interleavings(100, 5);
    o.require(exhaustive.violations.empty(), exhaustive.violations.empty() ? "" : exhaustive.violations.front());
    o.require(team.violations.empty(), team.violations.empty() ? "" : team.violations.front());
    o.require(team.served > 0, "nothing served");
    o.detail << " new_random cases=" << exhaustive.cases << " violations=" << exhaustive.violations.size()
             << "; generated_team interleavings=100 fetches=" << team.cases << " served=" << team.served
             << " violations=" << team.violations.size();
    return o;
}

Verdict pairwise() {
    Verdict o;
    std::size_t shapes = 0, uncovered = 0, oversized = 0;
    for (int k = 1; k <= 4; ++k) {
        std::vector<int> v(k, 1);
        for (;;) {
            std::vector<PairwiseInput> inputs;
            for (int i = 0; i < k; ++i) {
                std::vector<EquivalenceClass> ecs;
                for (int e = 0; e < v[i]; ++e) {
                    ecs.push_back({"e" + std::to_string(e), Interval{e * 10.0, e * 10.0 + 9, true}});
                }
                inputs.push_back({ElementId{std::uint32_t(i)}, ecs, default_range()});
            }
            auto suite = generate_pairwise(inputs, shapes);
            uncovered += oracle::uncovered_pairs(inputs, suite).size();
            oversized += suite.size() > oracle::full_factorial(inputs);
            ++shapes;
            int i = 0;
            while (i < k && ++v[i] > 4) v[i++] = 1;
            if (i == k) break;
        }
    }
    o.require(uncovered == 0, std::to_string(uncovered) + " uncovered pairs");
    o.require(oversized == 0, std::to_string(oversized) + " suites above full factorial");
    o.detail << " shapes=" << shapes << " uncovered=" << uncovered << " oversized=" << oversized;
    return o;
}

Verdict persistence() {
    Verdict o;
    RandomLogOptions opt;
    opt.testers = 30;
    opt.max_sessions = 4;
    opt.max_steps = 120;
    opt.max_events = 6'000;
    auto log = random_log(77, opt);
    if (log.events.size() < 5'000) {
        o.require(false, "generated log too short");
        return o;
    }
    log.events.resize(5'000);
    TempDir dir;
    const auto start = Clock::now();
    auto r = check_persistence_prefixes(log.events, dir / "store");
    o.require(r.prefixes == 5'000, "not every prefix checked");
    o.require(r.mismatches.empty(), r.mismatches.empty() ? "" : r.mismatches.front());
    o.detail << " prefixes=" << r.prefixes << " from_snapshot=" << r.from_snapshot
             << " mismatches=" << r.mismatches.size() << " time=" << seconds_since(start) << "s";
    return o;
}

Verdict idle_exclusion() {
    Verdict o;
    std::size_t planted = 0, excluded = 0, closed = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RandomLogOptions opt;
        opt.idle_share = 0.15;
        opt.idle_duration_ms = 16 * 60'000;
        opt.open_share = 0;
        auto log = random_log(300 + seed, opt);
        SutModel model = replay(log.events);
        auto strict = compute_metrics(model, log.events, log.defects, "team");
        MetricConfig lax;
        lax.idle_threshold_ms = 24 * 3'600'000LL;
        auto loose = compute_metrics(model, log.events, log.defects, "team", lax);
        const double n = static_cast<double>(log.idle_steps);
        o.require(strict.excluded_steps == log.idle_steps, "seed " + std::to_string(seed) + " excluded count");
        o.require(loose.pooled.pages - strict.pooled.pages == n, "seed " + std::to_string(seed) + " page count");
        o.require(std::abs(loose.pooled.tau - strict.pooled.tau - log.idle_ms / 1000.0) < 1e-6,
                  "seed " + std::to_string(seed) + " time");
        o.require(std::abs(strict.excluded_step_ratio - 100.0 * strict.excluded_steps / strict.total_steps) < 1e-9,
                  "ratio");
        planted += log.idle_steps;
        excluded += strict.excluded_steps;
        closed += strict.total_steps;
    }
    o.require(planted > 0, "nothing planted");
    o.detail << " planted=" << planted << " excluded=" << excluded << " excluded_step_ratio="
             << (closed ? 100.0 * excluded / closed : 0.0) << "%";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::optional<std::string> oracle_file;
    std::string directional_config;
    app.add_option("--rank-oracle", oracle_file, "JSON written by rank_oracle.py");
    app.add_option("--directional", directional_config, "experiment config for the directional run")->required();
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"rank arithmetic", [&] { return ranks(oracle_file); }},
        {"metric formulas", metric_formulas},
        {"strategy soundness", soundness},
        {"directional simulation", [&] { return directional(directional_config); }},
        {"data strategies", data_strategies},
        {"pairwise generator", pairwise},
        {"persistence round trip", persistence},
        {"idle exclusion", idle_exclusion},
    };
    bool all = true;
    for (const auto& [name, run] : criteria) {
        Verdict o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ":" << o.detail.str() << std::endl;
    }
    return all ? 0 : 1;
}
