#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sbm/core.hpp"
#include "sbm/dsl.hpp"
#include "sbm/executor.hpp"

namespace sbm::verify {

struct ExploreOptions {
    std::size_t node_bound = 1'000'000;
    exec::SpawnConfig spawn;
    /// Worker threads for frontier expansion. Results do not depend on it.
    std::size_t jobs = 1;
};

/// Explicit state graph. Node ids follow breadth-first discovery order, node 0
/// is the initial state, and `parent` holds the BFS tree edge used for
/// shortest counterexamples.
struct StateGraph {
    struct Edge {
        std::size_t from = 0;
        Event event;
        std::size_t to = 0;
    };

    std::vector<CompositeState> nodes;
    std::vector<EventSet> enabled;
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> out;  // edge indices per node
    std::vector<std::size_t> parent;            // edge index, npos for the root
    bool bound_reached = false;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t initial() const { return 0; }
};

StateGraph build_state_graph(const BehavioralModel& model, const ExploreOptions& options = {});

struct TraceStep {
    Event event;
    CompositeState target;
};

/// Replayable execution fragment: starting composite state and the steps taken,
/// each with the successor reached (needed when transitions branch).
struct Trace {
    CompositeState start;
    std::vector<TraceStep> steps;

    EventTrace events() const;
};

struct Lasso {
    Trace prefix;
    Trace cycle;
};

enum class Result { holds, violated, bound_reached };
std::string to_string(Result result);

enum class Property { deadlock, safety, starvation };

struct Verdict {
    Property property = Property::deadlock;
    Result result = Result::holds;
    std::optional<Trace> counterexample;
    std::optional<Lasso> lasso;
    /// For safety: the "Scenario=state" in violation at the end of the trace.
    std::string violation;
    Event starved;
    std::size_t explored = 0;
};

enum class DeadlockKind {
    /// Any reachable state with an empty enabled set.
    any,
    /// Only states where something is requested yet everything requested is
    /// blocked; quiescent states (nothing requested) count as termination.
    blocked_requests,
};

Verdict check_deadlock(const BehavioralModel& model, const ExploreOptions& options = {},
                       DeadlockKind kind = DeadlockKind::any);

/// Reachability of any violation-marked state. Throws ConfigError when the
/// model has no violation states.
Verdict check_safety(const BehavioralModel& model, const ExploreOptions& options = {});

struct StarvationMode {
    /// Empty: existential search for a reachable cycle avoiding the event.
    /// Otherwise: follow the path induced by this (deterministic) strategy.
    std::optional<exec::Strategy> under;
};

Verdict check_starvation(const BehavioralModel& model, const Event& event, const StarvationMode& mode,
                         const ExploreOptions& options = {});

/// "scenario=state" state predicate used by path queries.
struct StateAt {
    std::string scenario;
    StateId state;
};
StateAt parse_state_at(const std::string& text);
bool holds_at(const BehavioralModel& model, const CompositeState& cs, const StateAt& predicate);

struct PathQuery {
    std::size_t max_length = 1;
    bool acyclic = false;
    std::optional<StateAt> must_visit;
    std::optional<StateAt> must_end_at;
    std::vector<Event> must_contain;
    std::optional<Event> must_end_with;
    std::size_t cap = 100'000;
    exec::SpawnConfig spawn;
};

/// Distinct event sequences (length <= max_length, including the empty one)
/// satisfying the query, sorted lexicographically. Throws Error when more than
/// `cap` paths qualify.
std::vector<EventTrace> enumerate_paths(const BehavioralModel& model, const PathQuery& query);

struct LintOptions {
    std::size_t node_bound = 100'000;
};

/// Static and graph-based under-specification findings (all warnings):
/// L01 waited-for never requested, L02 requested but always blocked,
/// L03 unreachable scenario state, W001 transition on undeclared event,
/// L04 alphabet event never mentioned.
std::vector<dsl::Diagnostic> lint(const BehavioralModel& model, const LintOptions& options = {});

/// "k<TAB>event" per step then DEADLOCK, "VIOLATION Scenario=state" or
/// "LASSO-START k"; "HOLDS"/"BOUND-REACHED" when there is no trace.
std::string export_counterexample(const Verdict& verdict);

struct ReplayOutcome {
    bool reproduced = false;
    std::string detail;
};

/// Replays a violated verdict through an executor session with forced choices
/// and checks that the violation shows up again.
ReplayOutcome replay(const BehavioralModel& model, const Verdict& verdict,
                     const exec::SpawnConfig& spawn = {});

}  // namespace sbm::verify
