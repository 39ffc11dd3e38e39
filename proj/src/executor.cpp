#include "sbm/executor.hpp"

#include <algorithm>
#include <iomanip>
#include <random>
#include <sstream>

namespace sbm::exec {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::string> split(const std::string& text, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what)
{
    try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used != text.size())
            throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid " + what + " '" + text + "'");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Strategy helpers

Strategy Strategy::lookahead(std::size_t depth, Strategy fallback)
{
    return {strategy::Lookahead{depth, std::make_shared<const Strategy>(std::move(fallback))}};
}

bool Strategy::is_random() const
{
    return std::visit(overloaded{
                          [](const strategy::Random&) { return true; },
                          [](const strategy::Lookahead& l) { return l.fallback && l.fallback->is_random(); },
                          [](const auto&) { return false; },
                      },
                      kind);
}

Strategy parse_strategy(const std::string& text, std::uint64_t default_seed)
{
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head == "lexicographic" || head == "lex") {
        if (!rest.empty())
            throw ConfigError("lexicographic strategy takes no argument");
        return Strategy::lexicographic();
    }
    if (head == "random")
        return Strategy::random(rest.empty() ? default_seed : parse_u64(rest, "seed"));
    if (head == "roundrobin" || head == "round-robin") {
        if (!rest.empty())
            throw ConfigError("round-robin strategy takes no argument");
        return Strategy::round_robin();
    }
    if (head == "priority") {
        if (rest.empty())
            throw ConfigError("priority strategy needs an event list, e.g. priority:A,B");
        return Strategy::priority(split(rest, ','));
    }
    if (head == "lookahead") {
        const auto colon2 = rest.find(':');
        const std::string depth = rest.substr(0, colon2);
        if (depth.empty())
            throw ConfigError("lookahead strategy needs a depth, e.g. lookahead:3");
        Strategy fallback = colon2 == std::string::npos
                                ? Strategy::lexicographic()
                                : parse_strategy(rest.substr(colon2 + 1), default_seed);
        const auto d = parse_u64(depth, "lookahead depth");
        if (d < 1)
            throw ConfigError("lookahead depth must be at least 1");
        return Strategy::lookahead(d, std::move(fallback));
    }
    throw ConfigError("unknown strategy '" + text + "'");
}

std::string to_string(const Strategy& s)
{
    return std::visit(overloaded{
                          [](const strategy::Lexicographic&) { return std::string("lexicographic"); },
                          [](const strategy::Priority& p) { return "priority:" + join(p.order, ","); },
                          [](const strategy::Random& r) { return "random:" + std::to_string(r.seed); },
                          [](const strategy::RoundRobin&) { return std::string("roundrobin"); },
                          [](const strategy::Lookahead& l) {
                              return "lookahead:" + std::to_string(l.depth) + ":" +
                                     to_string(*l.fallback);
                          },
                      },
                      s.kind);
}

void validate(const Strategy& s, const BehavioralModel& model)
{
    std::visit(overloaded{
                   [&](const strategy::Priority& p) {
                       EventSet seen;
                       for (const auto& e : p.order) {
                           if (!model.alphabet().count(e))
                               throw ConfigError("priority list names unknown event '" + e + "'");
                           if (!seen.insert(e).second)
                               throw ConfigError("priority list repeats event '" + e + "'");
                       }
                   },
                   [&](const strategy::Lookahead& l) {
                       if (l.depth < 1)
                           throw ConfigError("lookahead depth must be at least 1");
                       if (!l.fallback)
                           throw ConfigError("lookahead needs a fallback strategy");
                       validate(*l.fallback, model);
                   },
                   [](const auto&) {},
               },
               s.kind);
}

void validate(const RunConfig& config, const BehavioralModel& model)
{
    validate(config.strategy, model);
    for (const auto& inj : config.injections)
        if (!model.alphabet().count(inj.event))
            throw ConfigError("injected event '" + inj.event + "' is not in the alphabet");
}

std::string to_string(Terminal t)
{
    switch (t) {
    case Terminal::deadlock:
        return "deadlock";
    case Terminal::max_steps:
        return "max-steps";
    case Terminal::external_stop:
        return "external-stop";
    }
    return "?";
}

EventTrace EventLog::events() const
{
    EventTrace out;
    out.reserve(entries.size());
    for (const auto& e : entries)
        out.push_back(e.triggered);
    return out;
}

// ---------------------------------------------------------------------------
// Successor computation

std::vector<CompositeState> successors(const BehavioralModel& model, const CompositeState& state,
                                       const Event& event, const SpawnConfig& spawn,
                                       bool first_only, std::vector<std::string>* warnings)
{
    validate_state(model, state);
    if (!model.alphabet().count(event))
        throw StructuralError("event '" + event + "' is not in the alphabet");

    auto trim = [first_only](std::vector<std::size_t> v) {
        if (first_only && v.size() > 1)
            v.resize(1);
        return v;
    };

    // One choice list per component; spawned instances use (scenario, state)
    // pairs where `state == npos` marks a completed instance.
    std::vector<std::vector<std::size_t>> main_choices(model.size());
    std::vector<std::vector<std::size_t>> spawn_choices(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& obj = model.scenario(i);
        const std::size_t q = state.states[i];
        const bool listening = spawn.enabled && q == obj.initial() &&
                               obj.decl(q).waited_for.count(event) && obj.reacts(q, event);
        if (!listening) {
            main_choices[i] = trim(obj.effective_targets(q, event));
            continue;
        }
        main_choices[i] = {q};
        std::vector<std::size_t> fresh;
        for (std::size_t t : obj.targets(q, event))
            if (t != q)
                fresh.push_back(t);
        if (fresh.empty())
            continue;
        const auto live = std::count_if(state.spawns.begin(), state.spawns.end(),
                                        [i](const Instance& inst) { return inst.scenario == i; });
        if (static_cast<std::size_t>(live) >= spawn.bound) {
            if (warnings)
                warnings->push_back("spawn of " + obj.name() + " on " + event +
                                    " suppressed: bound " + std::to_string(spawn.bound) +
                                    " reached");
            continue;
        }
        spawn_choices[i] = trim(std::move(fresh));
    }
    std::vector<std::vector<std::size_t>> instance_choices;
    for (const auto& inst : state.spawns) {
        const auto& obj = model.scenario(inst.scenario);
        auto next = trim(obj.effective_targets(inst.state, event));
        for (auto& t : next)
            if (spawn.enabled && t == obj.initial() && obj.reacts(inst.state, event))
                t = npos;
        instance_choices.push_back(std::move(next));
    }

    std::vector<CompositeState> frontier{CompositeState{}};
    auto expand = [&frontier](const std::vector<std::size_t>& choices, auto&& apply) {
        std::vector<CompositeState> grown;
        grown.reserve(frontier.size() * choices.size());
        for (const auto& partial : frontier)
            for (std::size_t c : choices) {
                CompositeState next = partial;
                apply(next, c);
                grown.push_back(std::move(next));
            }
        frontier = std::move(grown);
    };
    for (std::size_t i = 0; i < model.size(); ++i)
        expand(main_choices[i], [](CompositeState& cs, std::size_t c) { cs.states.push_back(c); });
    for (std::size_t k = 0; k < state.spawns.size(); ++k) {
        const std::size_t scenario = state.spawns[k].scenario;
        expand(instance_choices[k], [scenario](CompositeState& cs, std::size_t c) {
            if (c != npos)
                cs.spawns.push_back(Instance{scenario, c});
        });
    }
    for (std::size_t i = 0; i < model.size(); ++i)
        if (!spawn_choices[i].empty())
            expand(spawn_choices[i],
                   [i](CompositeState& cs, std::size_t c) { cs.spawns.push_back(Instance{i, c}); });

    for (auto& cs : frontier)
        std::sort(cs.spawns.begin(), cs.spawns.end());
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
    return frontier;
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(const BehavioralModel& model, const RunConfig& config)
    : model_(&model), config_(&config)
{
}

ExecState Engine::initial() const { return ExecState{initial_state(*model_), 0, 0, npos}; }

std::optional<Event> Engine::pending_injection(const ExecState& state) const
{
    const auto& inj = config_->injections;
    if (state.injection_head >= inj.size())
        return std::nullopt;
    if (state.steps < inj[state.injection_head].after_step)
        return std::nullopt;
    return inj[state.injection_head].event;
}

EventSet Engine::enabled(const ExecState& state) const
{
    SyncPoint sp = collect(*model_, state.cs);
    if (auto pending = pending_injection(state))
        sp.requested.insert(*pending);
    EventSet out;
    std::set_difference(sp.requested.begin(), sp.requested.end(), sp.blocked.begin(),
                        sp.blocked.end(), std::inserter(out, out.end()));
    return out;
}

std::vector<std::string> Engine::blockers(const ExecState& state, const Event& event) const
{
    return sbm::blockers(*model_, state.cs, event);
}

namespace {

// Events requested by round-robin slot `slot`.
EventSet slot_requests(const Engine& engine, const ExecState& state, std::size_t slot)
{
    const auto& model = engine.model();
    EventSet out;
    if (slot == model.size()) {
        if (auto pending = engine.pending_injection(state))
            out.insert(*pending);
        return out;
    }
    const auto& obj = model.scenario(slot);
    const auto& r = obj.decl(state.cs.states[slot]).requested;
    out.insert(r.begin(), r.end());
    for (const auto& inst : state.cs.spawns)
        if (inst.scenario == slot) {
            const auto& ri = obj.decl(inst.state).requested;
            out.insert(ri.begin(), ri.end());
        }
    return out;
}

std::size_t slot_count(const Engine& engine)
{
    return engine.model().size() + (engine.config().injections.empty() ? 0 : 1);
}

}  // namespace

std::size_t Engine::served_slot(const ExecState& state, const Event& event) const
{
    const std::size_t n = slot_count(*this);
    if (n == 0)
        return state.rr_last;
    const std::size_t start = state.rr_last == npos ? 0 : (state.rr_last + 1) % n;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t slot = (start + k) % n;
        if (slot_requests(*this, state, slot).count(event))
            return slot;
    }
    return state.rr_last;
}

ExecState Engine::advance(const ExecState& state, const Event& event, LogEntry* entry,
                          std::vector<std::string>* warnings, const CompositeState* target) const
{
    const auto& model = *model_;
    CompositeState next;
    if (target) {
        const auto all = successors(model, state.cs, event, config_->spawn, false, warnings);
        if (!std::binary_search(all.begin(), all.end(), *target))
            throw StructuralError("forced successor is not reachable by " + event + " from " +
                                  describe(model, state.cs));
        next = *target;
    } else {
        next = successors(model, state.cs, event, config_->spawn, true, warnings).front();
    }

    ExecState out = state;
    const auto pending = pending_injection(state);
    const bool injected = pending && *pending == event;
    out.rr_last = served_slot(state, event);
    if (injected)
        ++out.injection_head;
    ++out.steps;
    out.cs = std::move(next);

    if (entry) {
        entry->step = out.steps;
        entry->triggered = event;
        entry->injected = injected;
        entry->served_slot = out.rr_last;
        entry->rows.clear();
        entry->notes.clear();
        for (std::size_t i = 0; i < model.size(); ++i) {
            const auto& obj = model.scenario(i);
            const std::size_t before = state.cs.states[i];
            const std::size_t after = out.cs.states[i];
            entry->rows.push_back(
                ScenarioRow{obj.name(), obj.reacts(before, event), obj.state(after).id, obj.decl(after)});
            const auto& listed = obj.targets(before, event);
            if (obj.reacts(before, event) && listed.size() > 1) {
                std::vector<std::string> ids;
                for (std::size_t t : listed)
                    ids.push_back(obj.state(t).id);
                entry->notes.push_back(obj.name() + ": chose " + obj.state(after).id + " from {" +
                                       join(ids, ", ") + "}");
            }
        }
        for (const auto& inst : out.cs.spawns) {
            const auto& obj = model.scenario(inst.scenario);
            const bool unchanged =
                std::binary_search(state.cs.spawns.begin(), state.cs.spawns.end(), inst);
            entry->rows.push_back(ScenarioRow{obj.name() + "*", !unchanged, obj.state(inst.state).id,
                                              obj.decl(inst.state)});
        }
        if (!config_->injections.empty()) {
            ScenarioRow env{"(env)", injected, {}, {}};
            if (out.injection_head < config_->injections.size()) {
                env.state = "i" + std::to_string(out.injection_head);
                if (auto p = pending_injection(out))
                    env.decl.requested.insert(*p);
            } else {
                env.state = "done";
            }
            entry->rows.push_back(std::move(env));
        }
    }
    return out;
}

bool Engine::lookahead_safe(const ExecState& state, std::size_t depth) const
{
    const EventSet en = enabled(state);
    if (en.empty())
        return false;
    if (depth == 0)
        return true;
    for (const auto& e : en)
        if (lookahead_safe(advance(state, e), depth - 1))
            return true;
    return false;
}

Event Engine::select(const Strategy& strat, const EventSet& enabled, const ExecState& state) const
{
    if (enabled.empty())
        throw Error("cannot select from an empty enabled set");
    return std::visit(
        overloaded{
            [&](const strategy::Lexicographic&) { return *enabled.begin(); },
            [&](const strategy::Priority& p) {
                for (const auto& e : p.order)
                    if (enabled.count(e))
                        return e;
                return *enabled.begin();
            },
            [&](const strategy::Random& r) {
                std::mt19937_64 gen(splitmix64(r.seed + state.steps));
                std::uniform_int_distribution<std::size_t> pick(0, enabled.size() - 1);
                return *std::next(enabled.begin(), static_cast<std::ptrdiff_t>(pick(gen)));
            },
            [&](const strategy::RoundRobin&) {
                const std::size_t n = slot_count(*this);
                const std::size_t start = state.rr_last == npos ? 0 : (state.rr_last + 1) % n;
                for (std::size_t k = 0; k < n; ++k) {
                    for (const auto& e : slot_requests(*this, state, (start + k) % n))
                        if (enabled.count(e))
                            return e;
                }
                return *enabled.begin();
            },
            [&](const strategy::Lookahead& l) {
                EventSet safe;
                for (const auto& e : enabled)
                    if (lookahead_safe(advance(state, e), l.depth - 1))
                        safe.insert(e);
                return select(*l.fallback, safe.empty() ? enabled : safe, state);
            },
        },
        strat.kind);
}

Event select(const Strategy& strategy, const EventSet& enabled, const EventLog& history,
             const BehavioralModel& model, const CompositeState& state)
{
    RunConfig config;
    Engine engine(model, config);
    ExecState es{state, 0, history.entries.size(),
                 history.entries.empty() ? npos : history.entries.back().served_slot};
    return engine.select(strategy, enabled, es);
}

EventLog run(const BehavioralModel& model, const RunConfig& config)
{
    validate(config, model);
    Engine engine(model, config);
    EventLog log;
    ExecState state = engine.initial();
    while (true) {
        const EventSet en = engine.enabled(state);
        if (en.empty()) {
            log.terminal = Terminal::deadlock;
            break;
        }
        if (log.entries.size() >= config.max_steps) {
            log.terminal = Terminal::max_steps;
            break;
        }
        const Event e = engine.select(config.strategy, en, state);
        LogEntry entry;
        state = engine.advance(state, e, &entry, &log.warnings);
        log.entries.push_back(std::move(entry));
    }
    return log;
}

// ---------------------------------------------------------------------------
// Log formatting

namespace {

std::string set_or_dash(const EventSet& s) { return s.empty() ? "-" : join(s, ","); }

}  // namespace

std::string format_human(const EventLog& log)
{
    std::ostringstream os;
    for (const auto& entry : log.entries) {
        os << "Step " << entry.step << ": triggered " << entry.triggered;
        if (entry.injected)
            os << " (injected)";
        os << '\n';
        std::vector<std::vector<std::string>> table{
            {"scenario", "reacted", "state", "requested", "blocked", "waited-for"}};
        for (const auto& row : entry.rows)
            table.push_back({row.name, row.reacted ? "yes" : "no", row.state,
                             set_or_dash(row.decl.requested), set_or_dash(row.decl.blocked),
                             set_or_dash(row.decl.waited_for)});
        std::vector<std::size_t> width(table.front().size(), 0);
        for (const auto& r : table)
            for (std::size_t c = 0; c < r.size(); ++c)
                width[c] = std::max(width[c], r[c].size());
        for (const auto& r : table) {
            std::string line = " ";
            for (std::size_t c = 0; c < r.size(); ++c) {
                line += ' ';
                line += r[c];
                if (c + 1 < r.size())
                    line += std::string(width[c] - r[c].size() + 1, ' ');
            }
            os << line << '\n';
        }
        for (const auto& note : entry.notes)
            os << "  note: " << note << '\n';
    }
    for (const auto& w : log.warnings)
        os << "warning: " << w << '\n';
    os << "Terminal: " << to_string(log.terminal) << " after " << log.entries.size() << " step"
       << (log.entries.size() == 1 ? "" : "s") << '\n';
    return os.str();
}

std::string format_machine(const EventLog& log)
{
    std::ostringstream os;
    for (const auto& entry : log.entries) {
        std::vector<std::string> states;
        for (const auto& row : entry.rows)
            states.push_back(row.name + "=" + row.state);
        os << entry.step << '\t' << entry.triggered << '\t' << join(states, ";") << '\n';
    }
    os << "# terminal=" << to_string(log.terminal) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Session

Session::Session(BehavioralModel model, RunConfig config)
    : model_(std::move(model)), config_(std::move(config))
{
    validate(config_, model_);
    state_ = engine().initial();
    mark_deadlock_if_stuck();
}

EventSet Session::enabled() const
{
    if (finished_ && log_.terminal != Terminal::deadlock)
        return {};
    return engine().enabled(state_);
}

void Session::mark_deadlock_if_stuck()
{
    if (engine().enabled(state_).empty()) {
        finished_ = true;
        log_.terminal = Terminal::deadlock;
    } else if (log_.entries.size() >= config_.max_steps) {
        finished_ = true;
        log_.terminal = Terminal::max_steps;
    }
}

std::string Session::why_not(const Event& event) const
{
    if (!model_.alphabet().count(event))
        return "'" + event + "' is not an event of this model";
    const Engine eng = engine();
    const auto bl = eng.blockers(state_, event);
    if (!bl.empty())
        return event + " is blocked by " + join(bl, ", ");
    const auto pending = eng.pending_injection(state_);
    const bool requested =
        collect(model_, state_.cs).requested.count(event) || (pending && *pending == event);
    if (!requested)
        return event + " is not requested by any scenario";
    return event + " is enabled";
}

ChooseResult Session::apply(const Event& event, const CompositeState* target)
{
    ChooseResult res;
    if (finished_) {
        res.explanation = "session has ended (" + to_string(log_.terminal) + ")";
        return res;
    }
    if (!model_.alphabet().count(event)) {
        res.explanation = "'" + event + "' is not an event of this model";
        return res;
    }
    const Engine eng = engine();
    if (!eng.enabled(state_).count(event)) {
        res.blockers = eng.blockers(state_, event);
        res.explanation = why_not(event);
        return res;
    }
    LogEntry entry;
    try {
        state_ = eng.advance(state_, event, &entry, &log_.warnings, target);
    } catch (const StructuralError& err) {
        res.explanation = err.what();
        return res;
    }
    log_.entries.push_back(std::move(entry));
    res.accepted = true;
    mark_deadlock_if_stuck();
    return res;
}

ChooseResult Session::choose(const Event& event) { return apply(event, nullptr); }

ChooseResult Session::force(const Event& event, const CompositeState& target)
{
    return apply(event, &target);
}

std::optional<Event> Session::auto_step()
{
    if (finished_)
        return std::nullopt;
    const Engine eng = engine();
    const EventSet en = eng.enabled(state_);
    if (en.empty())
        return std::nullopt;
    const Event e = eng.select(config_.strategy, en, state_);
    apply(e, nullptr);
    return e;
}

void Session::stop()
{
    if (!finished_) {
        finished_ = true;
        log_.terminal = Terminal::external_stop;
    }
}

}  // namespace sbm::exec
