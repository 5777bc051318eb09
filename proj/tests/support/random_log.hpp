#pragma once

#include "builders.hpp"

#include <wayfinder/analytics.hpp>

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace wayfinder::testing {

/// Fixed page layout used by random logs: page p has three links, one form
/// with one input, and a URL of its own. No element is shared between pages.
struct RandomSite {
    int pages = 12;

    std::string url(int p) const { return "/r" + std::to_string(p) + ".php"; }
    std::string link_locator(int p, int j) const { return "r" + std::to_string(p) + ".l" + std::to_string(j); }
    std::string action_locator(int p) const { return "r" + std::to_string(p) + ".f0.submit"; }
    std::string input_locator(int p) const { return "r" + std::to_string(p) + ".f0.i0"; }
    int link_target(int p, int j) const { return (p * 7 + j * 3 + 1) % pages; }

    std::vector<ElementObservation> observations(int p) const {
        const std::string group = "r" + std::to_string(p) + ".f0";
        return {link(link_locator(p, 0), "a"), link(link_locator(p, 1), "b"), link(link_locator(p, 2), "c"),
                input(input_locator(p), group), action(action_locator(p), group, "go")};
    }
};

struct RandomLogOptions {
    int testers = 3;
    int max_sessions = 2;
    int max_steps = 40;
    double idle_share = 0.1;   // steps longer than the idle threshold
    double open_share = 0.2;   // sessions that never end
    double defect_share = 0.3; // steps that trigger a defect activation
    std::size_t max_events = 10'000;
    std::optional<Timestamp> idle_duration_ms;  // fixed length for idle steps, else random above 900 s
};

struct RandomLog {
    RandomSite site;
    std::vector<ActivityEvent> events;
    std::vector<DefectActivation> defects;
    std::size_t idle_steps = 0;
    Timestamp idle_ms = 0;  // summed duration of the idle steps
};

/// Synthetic activity with idle steps, open sessions, stray defect records and
/// boundary durations (exactly 900 s). Events of one session are in time order.
inline RandomLog random_log(std::uint64_t seed, const RandomLogOptions& opt = {}) {
    std::mt19937_64 rng(seed);
    auto chance = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };
    auto uniform = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };

    RandomLog log;
    const Timestamp base = 1'700'000'000'000;
    for (int t = 0; t < opt.testers; ++t) {
        const TesterId tester = "t" + std::to_string(t + 1);
        Timestamp clock = base + t * 37'000;
        const int sessions = static_cast<int>(uniform(1, opt.max_sessions));
        for (int s = 0; s < sessions; ++s) {
            const SessionId session = tester + "-s" + std::to_string(s);
            if (log.events.size() + 8 > opt.max_events) break;
            log.events.push_back(session_start(tester, session, clock));
            int page = static_cast<int>(uniform(0, log.site.pages - 1));
            clock += 500;
            log.events.push_back(page_view(tester, session, clock, log.site.url(page), log.site.observations(page)));
            const int steps = static_cast<int>(uniform(1, opt.max_steps));
            Timestamp duration = 0;
            for (int k = 0; k < steps && log.events.size() + 6 <= opt.max_events; ++k) {
                if (chance(opt.idle_share)) {
                    duration = opt.idle_duration_ms ? *opt.idle_duration_ms : uniform(900'001, 2'400'000);
                    ++log.idle_steps;
                    log.idle_ms += duration;
                } else if (chance(0.05)) {
                    duration = 900'000;
                } else {
                    duration = uniform(1'000, 120'000);
                }
                const Timestamp act = clock + duration / 2;
                int next = page;
                const auto roll = uniform(0, 9);
                if (roll < 6) {
                    const int j = static_cast<int>(uniform(0, 2));
                    log.events.push_back(activate(tester, session, act, log.site.link_locator(page, j)));
                    next = log.site.link_target(page, j);
                } else if (roll < 9) {
                    log.events.push_back(activate(tester, session, act, log.site.action_locator(page), ElementKind::action));
                    log.events.push_back(submit(tester, session, act, log.site.action_locator(page),
                                                {{log.site.input_locator(page), std::to_string(uniform(0, 99))}}));
                    next = static_cast<int>(uniform(0, log.site.pages - 1));
                }
                if (chance(opt.defect_share)) {
                    log.defects.push_back(DefectActivation{clock + uniform(0, duration - 1),
                                                           "D" + std::to_string(uniform(0, 9)), session});
                }
                clock += duration;
                page = next;
                log.events.push_back(page_view(tester, session, clock, log.site.url(page), log.site.observations(page)));
            }
            if (!chance(opt.open_share)) {
                clock += uniform(1'000, 60'000);
                log.events.push_back(session_end(tester, session, clock));
            } else {
                clock += 1'000;
            }
            clock += uniform(60'000, 3'600'000);
        }
    }
    // Records that cannot be attributed: unknown session, before the session's first page, no session.
    log.defects.push_back(DefectActivation{base + 1, "D99", std::string("nobody")});
    log.defects.push_back(DefectActivation{base - 10, "D98", std::string("t1-s0")});
    log.defects.push_back(DefectActivation{base + 5, "D97", std::nullopt});
    return log;
}

}  // namespace wayfinder::testing
