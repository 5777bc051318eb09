#pragma once

#include <wayfinder/analytics.hpp>
#include <wayfinder/model.hpp>
#include <wayfinder/reconstruction.hpp>
#include <wayfinder/strategies.hpp>
#include <wayfinder/testdata.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace wayfinder {

struct EngineConfig {
    ReconstructionConfig reconstruction;
    WeightConfig default_weights;
    Timestamp idle_threshold_ms = 900'000;
    std::size_t snapshot_every = 64;  // commands between snapshots; 0 disables
    std::uint64_t seed = 0;
};

/// One journaled state change. `op` is "event", an admin operation name, or "serve".
struct Command {
    std::string op;
    nlohmann::json body;

    nlohmann::json to_json() const { return {{"op", op}, {"body", body}}; }
    static Command from_json(const nlohmann::json& j);
};

struct Caller {
    Role role = Role::tester;
    TesterId tester;
};

/// Live-channel frame addressed to one tester.
struct Notification {
    TesterId tester;
    nlohmann::json frame;  // {"type": "delta" | "testcase_invalidated", "payload": {...}}
};

/// Everything that command replay reconstructs. Copyable; apply() is deterministic.
struct Workspace {
    explicit Workspace(const EngineConfig& config = {});

    SutModel model;
    Reconstructor reconstructor;
    EventSequencer sequencer;
    std::map<TesterId, StrategyConfig> strategies;
    WeightConfig default_weights;
    PipelineMap pipelines;
    Timestamp now = 0;
    std::uint64_t commands = 0;
    std::uint64_t seed = 0;

    struct Effects {
        std::optional<ModelDelta> delta;
        std::vector<Notification> notifications;
        nlohmann::json result;
    };

    /// Applies an accepted command. Throws domain errors without side effects on the
    /// caller-visible state for validation failures.
    Effects apply(const Command& command);

    /// Seed for data suggestions, derived from replayed state only.
    std::uint64_t data_seed() const;

    /// Pipelines keyed by the current (resolved) action id.
    PipelineMap resolved_pipelines() const;

    nlohmann::json to_json() const;
    static Workspace from_json(const nlohmann::json& j, const EngineConfig& config);

private:
    Effects apply_event(const ActivityEvent& event);
    Effects apply_admin(const std::string& op, const nlohmann::json& body);
    std::vector<Notification> invalidate(const std::vector<TesterId>& testers, const std::string& reason,
                                         const std::optional<TesterId>& except = std::nullopt) const;
    std::vector<TesterId> testers_on_touched_pages(const ModelDelta& delta) const;
    std::vector<TesterId> active_testers() const;
};

/// Append-only command journal plus an atomically replaced snapshot.
class Store {
public:
    explicit Store(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path journal_path() const { return dir_ / "journal.ndjson"; }
    std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }
    std::filesystem::path defects_path() const { return dir_ / "activations.ndjson"; }

    /// Appends one record and flushes. Returns the journal size afterwards.
    std::uint64_t append(const Command& command);
    void write_snapshot(const nlohmann::json& snapshot);

    std::optional<nlohmann::json> read_snapshot() const;

    struct JournalTail {
        std::vector<Command> commands;
        std::uint64_t end_offset = 0;  // byte offset after the last valid record
        std::size_t dropped = 0;
    };
    /// Reads valid records from `offset`; a torn final record is dropped and
    /// the journal truncated back to the last complete line.
    JournalTail read_journal(std::uint64_t offset = 0);

    std::uint64_t journal_size() const { return size_; }

private:
    void reopen();

    std::filesystem::path dir_;
    std::uint64_t size_ = 0;
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> journal_{nullptr, &std::fclose};
};

/// Serialized single writer over a Workspace, with persistence and live fan-out.
class Engine {
public:
    using Sink = std::function<void(const nlohmann::json& frame)>;

    /// With a store directory, restores from snapshot + journal tail.
    explicit Engine(EngineConfig config, std::optional<std::filesystem::path> store = std::nullopt);
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Validates, sequences and ingests one wire event. Returns the delta summary.
    nlohmann::json post_event(const nlohmann::json& event, const Caller& caller);
    /// Page defaults to the tester's current page.
    nlohmann::json testcase(const TesterId& tester, std::optional<PageId> page, const Caller& caller);
    /// Test Lead operations: priority, ecs, notes, strategy, weights, cit_import, cit_generate.
    nlohmann::json admin(const std::string& op, const nlohmann::json& body, const Caller& caller);

    nlohmann::ordered_json metrics(const std::string& scope);
    nlohmann::ordered_json graph();
    nlohmann::json health();

    /// Registers a live-channel sink for one tester. Frames arrive in commit order.
    std::uint64_t subscribe(const TesterId& tester, Sink sink);
    void unsubscribe(std::uint64_t id);

    /// Forces a snapshot when a store is attached.
    void checkpoint();

    Workspace workspace_copy() const;
    std::vector<ActivityEvent> event_log();
    const EngineConfig& config() const { return config_; }
    std::size_t restored_tail() const { return restored_tail_; }
    bool restored_from_snapshot() const { return restored_from_snapshot_; }

private:
    Workspace::Effects commit(const Command& command, bool journal);
    Workspace::Effects commit_event(const Command& command, const ActivityEvent& event, bool journal);
    void record(const Command& command, bool journal);
    std::vector<const Command*> history_order() const;
    void ensure_history();
    Workspace::Effects rebuild(std::optional<std::size_t> target);
    void publish(const std::vector<Notification>& notes);
    void restore();

    EngineConfig config_;
    std::optional<Store> store_;
    mutable std::mutex mutex_;
    Workspace ws_;
    std::optional<std::vector<Command>> history_;  // arrival order; loaded lazily after restore
    std::uint64_t since_snapshot_ = 0;
    std::uint64_t journal_count_ = 0;  // commands accepted so far, in arrival order
    std::size_t restored_tail_ = 0;
    bool restored_from_snapshot_ = false;

    std::mutex sinks_mutex_;
    std::map<std::uint64_t, std::pair<TesterId, Sink>> sinks_;
    std::uint64_t next_sink_ = 1;
};

}  // namespace wayfinder
