#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sbm/core.hpp"

namespace sbm::exec {

// ---------------------------------------------------------------------------
// Strategies

struct Strategy;

namespace strategy {
/// Highest-ranked enabled event wins; unlisted events rank after listed ones,
/// lexicographically.
struct Priority {
    std::vector<Event> order;
};
struct Lexicographic {};
/// Uniform choice. Step k draws from an mt19937_64 seeded with
/// splitmix64(seed + k), so a run is a pure function of (model, config).
struct Random {
    std::uint64_t seed = 0;
};
/// Cycles through scenarios in model order (the injection schedule comes last);
/// the next scenario with an enabled requested event gets its smallest one.
struct RoundRobin {};
/// Prefers events after which no deadlock is forced within `depth` steps;
/// the fallback breaks ties.
struct Lookahead {
    std::size_t depth = 1;
    std::shared_ptr<const Strategy> fallback;
};
}  // namespace strategy

struct Strategy {
    std::variant<strategy::Lexicographic, strategy::Priority, strategy::Random,
                 strategy::RoundRobin, strategy::Lookahead>
        kind;

    static Strategy lexicographic() { return {strategy::Lexicographic{}}; }
    static Strategy priority(std::vector<Event> order) { return {strategy::Priority{std::move(order)}}; }
    static Strategy random(std::uint64_t seed) { return {strategy::Random{seed}}; }
    static Strategy round_robin() { return {strategy::RoundRobin{}}; }
    static Strategy lookahead(std::size_t depth, Strategy fallback = lexicographic());

    bool is_random() const;
};

/// Accepts "lexicographic", "random[:SEED]", "roundrobin", "priority:A,B,...",
/// "lookahead:DEPTH[:FALLBACK]". `default_seed` applies to a bare "random".
Strategy parse_strategy(const std::string& text, std::uint64_t default_seed = 0);
std::string to_string(const Strategy& strategy);

/// Throws ConfigError when the strategy does not fit the model.
void validate(const Strategy& strategy, const BehavioralModel& model);

// ---------------------------------------------------------------------------
// Configuration and logs

struct Injection {
    std::size_t after_step = 0;
    Event event;
};

struct SpawnConfig {
    bool enabled = false;
    std::size_t bound = std::numeric_limits<std::size_t>::max();
};

struct RunConfig {
    Strategy strategy = Strategy::lexicographic();
    std::size_t max_steps = 1000;
    SpawnConfig spawn;
    /// Environment schedule, played by a virtual scenario that requests the
    /// head event once `after_step` events have been triggered.
    std::vector<Injection> injections;
};

void validate(const RunConfig& config, const BehavioralModel& model);

struct ScenarioRow {
    std::string name;
    bool reacted = false;
    StateId state;
    StateDecl decl;
};

struct LogEntry {
    std::size_t step = 0;  // 1-based
    Event triggered;
    bool injected = false;
    std::vector<ScenarioRow> rows;
    /// Multi-valued transitions resolved during this step.
    std::vector<std::string> notes;
    /// Round-robin slot credited with the event (scenario index, or model size
    /// for the injection schedule).
    std::size_t served_slot = 0;
};

enum class Terminal { deadlock, max_steps, external_stop };
std::string to_string(Terminal terminal);

struct EventLog {
    std::vector<LogEntry> entries;
    Terminal terminal = Terminal::external_stop;
    std::vector<std::string> warnings;

    EventTrace events() const;
};

std::string format_human(const EventLog& log);
/// One "step<TAB>event<TAB>scenario=state;..." line per entry, then
/// "# terminal=<reason>".
std::string format_machine(const EventLog& log);

// ---------------------------------------------------------------------------
// Semantics

/// Successor states under the execution semantics, optionally with spawning.
/// `first_only` resolves each multi-valued transition to the target with the
/// smallest state id (executor behaviour); otherwise every branch is returned
/// (verifier behaviour). Spawn warnings are appended to `warnings` when given.
std::vector<CompositeState> successors(const BehavioralModel& model, const CompositeState& state,
                                       const Event& event, const SpawnConfig& spawn,
                                       bool first_only, std::vector<std::string>* warnings = nullptr);

/// Full play-out state: composite state plus the injection cursor, the step
/// counter and the round-robin pointer.
struct ExecState {
    CompositeState cs;
    std::size_t injection_head = 0;
    std::size_t steps = 0;
    std::size_t rr_last = std::numeric_limits<std::size_t>::max();

    auto operator<=>(const ExecState&) const = default;
};

class Engine {
public:
    Engine(const BehavioralModel& model, const RunConfig& config);

    const BehavioralModel& model() const { return *model_; }
    const RunConfig& config() const { return *config_; }

    ExecState initial() const;
    std::optional<Event> pending_injection(const ExecState& state) const;
    EventSet enabled(const ExecState& state) const;
    std::vector<std::string> blockers(const ExecState& state, const Event& event) const;
    std::size_t served_slot(const ExecState& state, const Event& event) const;

    /// Triggers `event`; `target` forces a particular successor (it must be one
    /// of the semantic successors). Fills `entry` when given.
    ExecState advance(const ExecState& state, const Event& event, LogEntry* entry = nullptr,
                      std::vector<std::string>* warnings = nullptr,
                      const CompositeState* target = nullptr) const;

    Event select(const Strategy& strategy, const EventSet& enabled, const ExecState& state) const;

private:
    bool lookahead_safe(const ExecState& state, std::size_t depth) const;

    const BehavioralModel* model_;
    const RunConfig* config_;
};

/// Picks one event from a non-empty enabled set. History supplies the step
/// index and round-robin position.
Event select(const Strategy& strategy, const EventSet& enabled, const EventLog& history,
             const BehavioralModel& model, const CompositeState& state);

EventLog run(const BehavioralModel& model, const RunConfig& config);

// ---------------------------------------------------------------------------
// Interactive sessions

struct ChooseResult {
    bool accepted = false;
    std::string explanation;
    std::vector<std::string> blockers;
};

class Session {
public:
    Session(BehavioralModel model, RunConfig config);

    const BehavioralModel& model() const { return model_; }
    EventSet enabled() const;
    bool finished() const { return finished_; }
    const CompositeState& state() const { return state_.cs; }
    const ExecState& exec_state() const { return state_; }
    const EventLog& log() const { return log_; }

    ChooseResult choose(const Event& event);
    /// Like choose(), additionally steering a multi-valued transition to `target`.
    ChooseResult force(const Event& event, const CompositeState& target);
    /// Lets the configured strategy pick; nullopt at a deadlock.
    std::optional<Event> auto_step();
    /// Human-readable answer to "why is this event not enabled".
    std::string why_not(const Event& event) const;
    void stop();

private:
    ChooseResult apply(const Event& event, const CompositeState* target);
    void mark_deadlock_if_stuck();
    Engine engine() const { return Engine(model_, config_); }

    BehavioralModel model_;
    RunConfig config_;
    ExecState state_;
    EventLog log_;
    bool finished_ = false;
};

}  // namespace sbm::exec
