#pragma once

#include "builders.hpp"

#include <wayfinder/engine.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace wayfinder::testing {

struct PersistenceResult {
    std::size_t prefixes = 0;
    std::size_t from_snapshot = 0;  // restores that started from a snapshot
    std::vector<std::string> mismatches;
};

/// Posts the events one at a time to a persisted engine. After every prefix a second
/// engine restores from the same store, and its graph export must equal, byte for
/// byte, the export of a model built by replaying the prefix directly.
inline PersistenceResult check_persistence_prefixes(const std::vector<ActivityEvent>& events,
                                                    const std::filesystem::path& dir, std::size_t snapshot_every = 64) {
    std::filesystem::remove_all(dir);
    EngineConfig cfg;
    cfg.snapshot_every = snapshot_every;
    const Caller admin{Role::admin, ""};

    PersistenceResult out;
    SutModel direct;
    Reconstructor reconstructor(cfg.reconstruction);
    Engine writer(cfg, dir);
    for (std::size_t k = 0; k < events.size(); ++k) {
        writer.post_event(event_to_json(events[k]), admin);
        reconstructor.ingest(direct, events[k]);
        Engine restored(cfg, dir);
        ++out.prefixes;
        if (restored.restored_from_snapshot()) ++out.from_snapshot;
        if (restored.graph().dump() != export_graph(direct).dump()) {
            out.mismatches.push_back("prefix " + std::to_string(k + 1));
        }
    }
    return out;
}

}  // namespace wayfinder::testing
