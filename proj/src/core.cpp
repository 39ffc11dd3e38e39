#include "sbm/core.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

namespace sbm {

bool is_identifier(const std::string& text)
{
    if (text.empty() || std::isdigit(static_cast<unsigned char>(text.front())))
        return false;
    return std::all_of(text.begin(), text.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_';
    });
}

std::string join(const std::vector<std::string>& items, const std::string& separator)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += separator;
        out += items[i];
    }
    return out;
}

std::string join(const EventSet& items, const std::string& separator)
{
    return join(std::vector<std::string>(items.begin(), items.end()), separator);
}

// ---------------------------------------------------------------------------
// ScenarioObject

EventSet ScenarioObject::events_used() const
{
    EventSet used;
    for (const auto& s : states_) {
        used.insert(s.decl.requested.begin(), s.decl.requested.end());
        used.insert(s.decl.blocked.begin(), s.decl.blocked.end());
        used.insert(s.decl.waited_for.begin(), s.decl.waited_for.end());
        for (const auto& [event, _] : s.transitions)
            used.insert(event);
    }
    return used;
}

std::size_t ScenarioObject::add_state(StateId id, StateDecl decl, bool violation)
{
    if (index_.count(id))
        throw StructuralError("scenario " + name_ + ": duplicate state '" + id + "'");
    const std::size_t index = states_.size();
    index_.emplace(id, index);
    states_.push_back(State{std::move(id), std::move(decl), violation, {}});
    return index;
}

std::size_t ScenarioObject::require_state(const StateId& id) const
{
    auto it = index_.find(id);
    if (it == index_.end())
        throw StructuralError("scenario " + name_ + ": unknown state '" + id + "'");
    return it->second;
}

void ScenarioObject::add_transition(const StateId& from, const Event& event, const StateId& to)
{
    const std::size_t source = require_state(from);
    const std::size_t target = require_state(to);
    auto& list = states_[source].transitions[event];
    auto pos = std::lower_bound(list.begin(), list.end(), target,
                                [this](std::size_t a, std::size_t b) {
                                    return states_[a].id < states_[b].id;
                                });
    if (pos == list.end() || *pos != target)
        list.insert(pos, target);
}

void ScenarioObject::set_initial(const StateId& id) { initial_ = require_state(id); }

std::optional<std::size_t> ScenarioObject::index_of(const StateId& id) const
{
    auto it = index_.find(id);
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

bool ScenarioObject::has_violation_states() const
{
    return std::any_of(states_.begin(), states_.end(), [](const State& s) { return s.violation; });
}

const std::vector<std::size_t>& ScenarioObject::targets(std::size_t index, const Event& event) const
{
    static const std::vector<std::size_t> none;
    const auto& trans = states_.at(index).transitions;
    auto it = trans.find(event);
    return it == trans.end() ? none : it->second;
}

bool ScenarioObject::reacts(std::size_t index, const Event& event) const
{
    const auto& s = states_.at(index);
    if (!s.decl.requested.count(event) && !s.decl.waited_for.count(event))
        return false;
    auto it = s.transitions.find(event);
    return it != s.transitions.end() && !it->second.empty();
}

std::vector<std::size_t> ScenarioObject::effective_targets(std::size_t index, const Event& event) const
{
    if (reacts(index, event))
        return targets(index, event);
    return {index};
}

bool ScenarioObject::operator==(const ScenarioObject& other) const
{
    if (name_ != other.name_ || states_.size() != other.states_.size())
        return false;
    if (states_.empty())
        return true;
    if (states_[initial_].id != other.states_[other.initial_].id)
        return false;
    for (std::size_t i = 0; i < states_.size(); ++i) {
        const auto& a = states_[i];
        const auto& b = other.states_[i];
        if (a.id != b.id || a.decl != b.decl || a.violation != b.violation)
            return false;
        if (a.transitions.size() != b.transitions.size())
            return false;
        for (const auto& [event, targets] : a.transitions) {
            auto it = b.transitions.find(event);
            if (it == b.transitions.end() || it->second.size() != targets.size())
                return false;
            for (std::size_t k = 0; k < targets.size(); ++k)
                if (states_[targets[k]].id != other.states_[it->second[k]].id)
                    return false;
        }
    }
    return true;
}

ScenarioObject canonicalize(const ScenarioObject& object)
{
    std::vector<std::size_t> order;
    std::vector<bool> seen(object.size(), false);
    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        if (seen[i])
            return;
        seen[i] = true;
        order.push_back(i);
        for (const auto& [event, targets] : object.state(i).transitions)
            for (std::size_t t : targets)
                visit(t);
    };
    if (!object.empty())
        visit(object.initial());
    for (std::size_t i = 0; i < object.size(); ++i)
        if (!seen[i])
            order.push_back(i);

    ScenarioObject out(object.name());
    out.set_alphabet(object.alphabet());
    for (std::size_t i : order) {
        const auto& s = object.state(i);
        out.add_state(s.id, s.decl, s.violation);
    }
    for (std::size_t i : order) {
        const auto& s = object.state(i);
        for (const auto& [event, targets] : s.transitions)
            for (std::size_t t : targets)
                out.add_transition(s.id, event, object.state(t).id);
    }
    if (!object.empty())
        out.set_initial(object.state(object.initial()).id);
    return out;
}

// ---------------------------------------------------------------------------
// BehavioralModel

BehavioralModel::BehavioralModel(EventSet alphabet, std::vector<ScenarioObject> scenarios)
    : alphabet_(std::move(alphabet))
{
    for (const auto& e : alphabet_)
        if (!is_identifier(e))
            throw StructuralError("invalid event name '" + e + "'");
    for (auto& s : scenarios)
        add_scenario(std::move(s));
}

void BehavioralModel::check(const ScenarioObject& scenario) const
{
    if (!is_identifier(scenario.name()))
        throw StructuralError("invalid scenario name '" + scenario.name() + "'");
    if (index_of(scenario.name()))
        throw StructuralError("duplicate scenario name '" + scenario.name() + "'");
    if (scenario.empty())
        throw StructuralError("scenario " + scenario.name() + " has no states");
    for (const auto& e : scenario.events_used())
        if (!alphabet_.count(e))
            throw StructuralError("scenario " + scenario.name() + " uses event '" + e +
                                  "' outside the alphabet");
    for (const auto& e : scenario.alphabet())
        if (!alphabet_.count(e))
            throw StructuralError("scenario " + scenario.name() + " is defined over event '" +
                                  e + "' outside the alphabet");
}

void BehavioralModel::add_scenario(ScenarioObject scenario)
{
    check(scenario);
    scenario.set_alphabet(alphabet_);
    scenarios_.push_back(std::move(scenario));
}

std::optional<std::size_t> BehavioralModel::index_of(const std::string& name) const
{
    for (std::size_t i = 0; i < scenarios_.size(); ++i)
        if (scenarios_[i].name() == name)
            return i;
    return std::nullopt;
}

bool BehavioralModel::has_violation_states() const
{
    return std::any_of(scenarios_.begin(), scenarios_.end(),
                       [](const ScenarioObject& s) { return s.has_violation_states(); });
}

// ---------------------------------------------------------------------------
// Composite states

std::size_t CompositeStateHash::operator()(const CompositeState& state) const noexcept
{
    std::size_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::size_t v) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    for (std::size_t s : state.states)
        mix(s);
    mix(state.spawns.size());
    for (const auto& inst : state.spawns) {
        mix(inst.scenario);
        mix(inst.state);
    }
    return h;
}

CompositeState initial_state(const BehavioralModel& model)
{
    CompositeState cs;
    cs.states.reserve(model.size());
    for (const auto& s : model.scenarios())
        cs.states.push_back(s.initial());
    return cs;
}

void validate_state(const BehavioralModel& model, const CompositeState& state)
{
    if (state.states.size() != model.size())
        throw StructuralError("composite state has " + std::to_string(state.states.size()) +
                              " components, model has " + std::to_string(model.size()) +
                              " scenarios");
    for (std::size_t i = 0; i < model.size(); ++i)
        if (state.states[i] >= model.scenario(i).size())
            throw StructuralError("composite state: invalid state index for scenario " +
                                  model.scenario(i).name());
    for (const auto& inst : state.spawns)
        if (inst.scenario >= model.size() || inst.state >= model.scenario(inst.scenario).size())
            throw StructuralError("composite state: invalid spawned instance");
}

std::string describe(const BehavioralModel& model, const CompositeState& state)
{
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < model.size(); ++i)
        parts.push_back(model.scenario(i).name() + "=" +
                        model.scenario(i).state(state.states.at(i)).id);
    for (const auto& inst : state.spawns)
        parts.push_back(model.scenario(inst.scenario).name() + "*=" +
                        model.scenario(inst.scenario).state(inst.state).id);
    return join(parts, ";");
}

namespace {

template <typename Fn>
void for_each_current(const BehavioralModel& model, const CompositeState& state, Fn&& fn)
{
    for (std::size_t i = 0; i < model.size(); ++i)
        fn(model.scenario(i), state.states[i], false);
    for (const auto& inst : state.spawns)
        fn(model.scenario(inst.scenario), inst.state, true);
}

}  // namespace

SyncPoint collect(const BehavioralModel& model, const CompositeState& state)
{
    validate_state(model, state);
    SyncPoint sp;
    for_each_current(model, state, [&](const ScenarioObject& obj, std::size_t q, bool) {
        const auto& d = obj.decl(q);
        sp.requested.insert(d.requested.begin(), d.requested.end());
        sp.blocked.insert(d.blocked.begin(), d.blocked.end());
        sp.waited_for.insert(d.waited_for.begin(), d.waited_for.end());
    });
    return sp;
}

EventSet enabled_events(const BehavioralModel& model, const CompositeState& state)
{
    const SyncPoint sp = collect(model, state);
    EventSet out;
    std::set_difference(sp.requested.begin(), sp.requested.end(), sp.blocked.begin(),
                        sp.blocked.end(), std::inserter(out, out.end()));
    return out;
}

std::vector<std::string> blockers(const BehavioralModel& model, const CompositeState& state,
                                  const Event& event)
{
    validate_state(model, state);
    std::vector<std::string> out;
    for_each_current(model, state, [&](const ScenarioObject& obj, std::size_t q, bool spawned) {
        if (obj.decl(q).blocked.count(event))
            out.push_back(spawned ? obj.name() + "*" : obj.name());
    });
    return out;
}

std::vector<CompositeState> step(const BehavioralModel& model, const CompositeState& state,
                                 const Event& event)
{
    validate_state(model, state);
    if (!model.alphabet().count(event))
        throw StructuralError("event '" + event + "' is not in the alphabet");

    std::vector<CompositeState> frontier{CompositeState{{}, {}}};
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto next = model.scenario(i).effective_targets(state.states[i], event);
        std::vector<CompositeState> grown;
        grown.reserve(frontier.size() * next.size());
        for (const auto& partial : frontier)
            for (std::size_t t : next) {
                CompositeState c = partial;
                c.states.push_back(t);
                grown.push_back(std::move(c));
            }
        frontier = std::move(grown);
    }
    for (const auto& inst : state.spawns) {
        const auto next = model.scenario(inst.scenario).effective_targets(inst.state, event);
        std::vector<CompositeState> grown;
        for (const auto& partial : frontier)
            for (std::size_t t : next) {
                CompositeState c = partial;
                c.spawns.push_back(Instance{inst.scenario, t});
                grown.push_back(std::move(c));
            }
        frontier = std::move(grown);
    }
    for (auto& c : frontier)
        std::sort(c.spawns.begin(), c.spawns.end());
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
    return frontier;
}

// ---------------------------------------------------------------------------
// Composition

ScenarioObject compose(const ScenarioObject& first, const ScenarioObject& second)
{
    if (!first.alphabet().empty() && !second.alphabet().empty() &&
        first.alphabet() != second.alphabet())
        throw StructuralError("cannot compose " + first.name() + " and " + second.name() +
                              ": alphabets differ");
    if (first.empty() || second.empty())
        throw StructuralError("cannot compose an object without states");

    EventSet alphabet = first.alphabet();
    alphabet.insert(second.alphabet().begin(), second.alphabet().end());
    EventSet events = alphabet;
    for (const auto& e : first.events_used())
        events.insert(e);
    for (const auto& e : second.events_used())
        events.insert(e);

    ScenarioObject out(first.name() + "_" + second.name());
    out.set_alphabet(alphabet);
    auto pair_id = [&](std::size_t a, std::size_t b) {
        return "(" + first.state(a).id + "," + second.state(b).id + ")";
    };
    auto union_of = [](const EventSet& x, const EventSet& y) {
        EventSet u = x;
        u.insert(y.begin(), y.end());
        return u;
    };

    for (std::size_t a = 0; a < first.size(); ++a)
        for (std::size_t b = 0; b < second.size(); ++b) {
            const auto& da = first.decl(a);
            const auto& db = second.decl(b);
            StateDecl d{union_of(da.requested, db.requested), union_of(da.blocked, db.blocked),
                        union_of(da.waited_for, db.waited_for)};
            out.add_state(pair_id(a, b), std::move(d),
                          first.is_violation(a) || second.is_violation(b));
        }
    for (std::size_t a = 0; a < first.size(); ++a)
        for (std::size_t b = 0; b < second.size(); ++b)
            for (const auto& e : events) {
                if (!first.reacts(a, e) && !second.reacts(b, e))
                    continue;
                for (std::size_t ta : first.effective_targets(a, e))
                    for (std::size_t tb : second.effective_targets(b, e))
                        out.add_transition(pair_id(a, b), e, pair_id(ta, tb));
            }
    out.set_initial(pair_id(first.initial(), second.initial()));
    return out;
}

// ---------------------------------------------------------------------------
// Bounded traces

namespace {

void extend_traces(const BehavioralModel& model, const std::set<CompositeState>& frontier,
                   EventTrace& prefix, std::size_t remaining, std::set<EventTrace>& out)
{
    out.insert(prefix);
    if (remaining == 0)
        return;
    std::map<Event, std::set<CompositeState>> next;
    for (const auto& cs : frontier)
        for (const auto& e : enabled_events(model, cs))
            for (auto& succ : step(model, cs, e))
                next[e].insert(std::move(succ));
    for (const auto& [event, states] : next) {
        prefix.push_back(event);
        extend_traces(model, states, prefix, remaining - 1, out);
        prefix.pop_back();
    }
}

}  // namespace

std::set<EventTrace> reachable_traces(const BehavioralModel& model, std::size_t max_length)
{
    std::set<EventTrace> out;
    EventTrace prefix;
    extend_traces(model, {initial_state(model)}, prefix, max_length, out);
    return out;
}

std::set<EventTrace> maximal_traces(const std::set<EventTrace>& traces)
{
    std::set<EventTrace> out;
    for (auto it = traces.begin(); it != traces.end(); ++it) {
        // In lexicographic order any extension of *it sorts right after it.
        auto next = std::next(it);
        const bool extended = next != traces.end() && next->size() > it->size() &&
                              std::equal(it->begin(), it->end(), next->begin());
        if (!extended)
            out.insert(*it);
    }
    return out;
}

}  // namespace sbm
