#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbm {

using Event = std::string;
using EventSet = std::set<Event>;
using StateId = std::string;
using EventTrace = std::vector<Event>;

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model/state inconsistencies: unknown states, alphabet violations, bad composites.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration (strategies, bounds, property selection).
class ConfigError : public Error {
public:
    using Error::Error;
};

bool is_identifier(const std::string& text);

/// Declarations a scenario publishes while sitting at one synchronization point.
struct StateDecl {
    EventSet requested;
    EventSet blocked;
    EventSet waited_for;

    bool operator==(const StateDecl&) const = default;
};

/// A scenario object: finite transition system over events whose states carry
/// request/block/wait-for declarations.
///
/// States keep insertion order; the first added state is the initial one unless
/// set_initial() says otherwise. Transition targets are kept sorted by state id,
/// which is what the executor relies on when it resolves a multi-valued
/// transition deterministically.
class ScenarioObject {
public:
    struct State {
        StateId id;
        StateDecl decl;
        bool violation = false;
        std::map<Event, std::vector<std::size_t>> transitions;
    };

    ScenarioObject() = default;
    explicit ScenarioObject(std::string name) : name_(std::move(name)) {}

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    /// Event set the object is defined over. Not part of structural equality.
    const EventSet& alphabet() const { return alphabet_; }
    void set_alphabet(EventSet alphabet) { alphabet_ = std::move(alphabet); }
    /// Every event appearing in a declaration or a transition label.
    EventSet events_used() const;

    std::size_t add_state(StateId id, StateDecl decl = {}, bool violation = false);
    void add_transition(const StateId& from, const Event& event, const StateId& to);
    void set_initial(const StateId& id);

    std::size_t size() const { return states_.size(); }
    bool empty() const { return states_.empty(); }
    const std::vector<State>& states() const { return states_; }
    const State& state(std::size_t index) const { return states_.at(index); }
    std::optional<std::size_t> index_of(const StateId& id) const;
    std::size_t initial() const { return initial_; }

    const StateDecl& decl(std::size_t index) const { return states_.at(index).decl; }
    bool is_violation(std::size_t index) const { return states_.at(index).violation; }
    bool has_violation_states() const;

    /// Listed targets for (state, event); empty when nothing is listed.
    const std::vector<std::size_t>& targets(std::size_t index, const Event& event) const;

    /// True when the state requests or waits for the event and lists a transition on it.
    bool reacts(std::size_t index, const Event& event) const;

    /// Successors used by the execution semantics: the listed targets when the
    /// state reacts, otherwise the implicit self-loop.
    std::vector<std::size_t> effective_targets(std::size_t index, const Event& event) const;

    bool operator==(const ScenarioObject& other) const;

private:
    std::size_t require_state(const StateId& id) const;

    std::string name_;
    EventSet alphabet_;
    std::vector<State> states_;
    std::map<StateId, std::size_t> index_;
    std::size_t initial_ = 0;
};

/// Reorders states in first-visit order (depth-first from the initial state,
/// following transitions by event name then target id); unreachable states keep
/// their relative order at the end.
ScenarioObject canonicalize(const ScenarioObject& object);

/// Alphabet plus an ordered list of scenarios. Scenario order is the default
/// priority and round-robin order.
class BehavioralModel {
public:
    BehavioralModel() = default;
    BehavioralModel(EventSet alphabet, std::vector<ScenarioObject> scenarios);

    const EventSet& alphabet() const { return alphabet_; }
    const std::vector<ScenarioObject>& scenarios() const { return scenarios_; }
    const ScenarioObject& scenario(std::size_t index) const { return scenarios_.at(index); }
    std::size_t size() const { return scenarios_.size(); }
    std::optional<std::size_t> index_of(const std::string& name) const;

    /// Appends a scenario; its alphabet is widened to the model's.
    void add_scenario(ScenarioObject scenario);
    bool has_violation_states() const;

private:
    void check(const ScenarioObject& scenario) const;

    EventSet alphabet_;
    std::vector<ScenarioObject> scenarios_;
};

/// A live copy of a scenario created in spawn mode.
struct Instance {
    std::size_t scenario = 0;
    std::size_t state = 0;

    auto operator<=>(const Instance&) const = default;
};

/// Tuple of per-scenario current states (positional, aligned with the model's
/// scenario order) plus the sorted multiset of spawned instances.
struct CompositeState {
    std::vector<std::size_t> states;
    std::vector<Instance> spawns;

    auto operator<=>(const CompositeState&) const = default;
};

struct CompositeStateHash {
    std::size_t operator()(const CompositeState& state) const noexcept;
};

CompositeState initial_state(const BehavioralModel& model);
void validate_state(const BehavioralModel& model, const CompositeState& state);

/// "Name=state;Name=state" in scenario order, spawned instances as "Name*=state".
std::string describe(const BehavioralModel& model, const CompositeState& state);

/// Union of declarations over every current state, instances included.
struct SyncPoint {
    EventSet requested;
    EventSet blocked;
    EventSet waited_for;
};
SyncPoint collect(const BehavioralModel& model, const CompositeState& state);

EventSet enabled_events(const BehavioralModel& model, const CompositeState& state);

/// Names of scenarios (or instances, as "Name*") blocking the event.
std::vector<std::string> blockers(const BehavioralModel& model, const CompositeState& state,
                                  const Event& event);

/// Every composite successor after triggering `event`. The event need not be
/// enabled. Non-reacting scenarios keep their state; multi-valued transitions
/// yield every combination. Result is sorted and duplicate-free.
std::vector<CompositeState> step(const BehavioralModel& model, const CompositeState& state,
                                 const Event& event);

/// Synchronous product of two scenario objects over the same alphabet.
ScenarioObject compose(const ScenarioObject& first, const ScenarioObject& second);

/// Every event sequence of length <= max_length produced by repeatedly firing
/// an enabled event. Prefix-closed; contains the empty trace.
std::set<EventTrace> reachable_traces(const BehavioralModel& model, std::size_t max_length);

/// Members that are not a proper prefix of another member.
std::set<EventTrace> maximal_traces(const std::set<EventTrace>& traces);

std::string join(const std::vector<std::string>& items, const std::string& separator);
std::string join(const EventSet& items, const std::string& separator);

}  // namespace sbm
