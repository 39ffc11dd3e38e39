#include "sbm/verifier.hpp"

#include <algorithm>
#include <exception>
#include <functional>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace sbm::verify {

namespace {

constexpr std::size_t npos = StateGraph::npos;

struct Expansion {
    EventSet enabled;
    std::vector<std::pair<Event, std::vector<CompositeState>>> moves;
};

Expansion expand(const BehavioralModel& model, const CompositeState& cs, const exec::SpawnConfig& spawn)
{
    Expansion x;
    x.enabled = enabled_events(model, cs);
    for (const auto& e : x.enabled)
        x.moves.emplace_back(e, exec::successors(model, cs, e, spawn, false));
    return x;
}

// Expands `level` into `results`, splitting the work over `jobs` threads.
void expand_level(const BehavioralModel& model, const StateGraph& graph,
                  const std::vector<std::size_t>& level, const exec::SpawnConfig& spawn,
                  std::size_t jobs, std::vector<Expansion>& results)
{
    results.assign(level.size(), Expansion{});
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, level.size() / 64 + 1));
    if (workers == 1) {
        for (std::size_t k = 0; k < level.size(); ++k)
            results[k] = expand(model, graph.nodes[level[k]], spawn);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < level.size(); k += workers)
                    results[k] = expand(model, graph.nodes[level[k]], spawn);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& err : errors)
        if (err)
            std::rethrow_exception(err);
}

Trace trace_to(const StateGraph& g, std::size_t node)
{
    std::vector<std::size_t> path;
    for (std::size_t n = node; g.parent[n] != npos; n = g.edges[g.parent[n]].from)
        path.push_back(g.parent[n]);
    std::reverse(path.begin(), path.end());
    Trace t;
    t.start = g.nodes[0];
    for (std::size_t e : path)
        t.steps.push_back(TraceStep{g.edges[e].event, g.nodes[g.edges[e].to]});
    return t;
}

std::optional<std::string> violation_at(const BehavioralModel& model, const CompositeState& cs)
{
    for (std::size_t i = 0; i < model.size(); ++i)
        if (model.scenario(i).is_violation(cs.states[i]))
            return model.scenario(i).name() + "=" + model.scenario(i).state(cs.states[i]).id;
    for (const auto& inst : cs.spawns)
        if (model.scenario(inst.scenario).is_violation(inst.state))
            return model.scenario(inst.scenario).name() + "*=" +
                   model.scenario(inst.scenario).state(inst.state).id;
    return std::nullopt;
}

bool uses_round_robin(const exec::Strategy& s)
{
    if (std::holds_alternative<exec::strategy::RoundRobin>(s.kind))
        return true;
    if (auto* l = std::get_if<exec::strategy::Lookahead>(&s.kind))
        return l->fallback && uses_round_robin(*l->fallback);
    return false;
}

}  // namespace

std::string to_string(Result r)
{
    switch (r) {
    case Result::holds:
        return "holds";
    case Result::violated:
        return "violated";
    case Result::bound_reached:
        return "bound-reached";
    }
    return "?";
}

EventTrace Trace::events() const
{
    EventTrace out;
    for (const auto& s : steps)
        out.push_back(s.event);
    return out;
}

// ---------------------------------------------------------------------------
// State graph

StateGraph build_state_graph(const BehavioralModel& model, const ExploreOptions& options)
{
    if (options.spawn.enabled && options.spawn.bound == std::numeric_limits<std::size_t>::max())
        throw ConfigError("spawn-mode verification needs a finite spawn bound");
    if (options.node_bound == 0)
        throw ConfigError("node bound must be positive");

    StateGraph g;
    std::unordered_map<CompositeState, std::size_t, CompositeStateHash> ids;
    g.nodes.push_back(initial_state(model));
    g.parent.push_back(npos);
    ids.emplace(g.nodes[0], 0);

    std::vector<std::size_t> level{0};
    std::vector<Expansion> results;
    while (!level.empty()) {
        expand_level(model, g, level, options.spawn, options.jobs, results);
        std::vector<std::size_t> next;
        for (std::size_t k = 0; k < level.size(); ++k) {
            const std::size_t from = level[k];
            if (g.enabled.size() <= from)
                g.enabled.resize(from + 1);
            g.enabled[from] = std::move(results[k].enabled);
            if (g.out.size() <= from)
                g.out.resize(from + 1);
            for (auto& [event, succs] : results[k].moves)
                for (auto& succ : succs) {
                    auto it = ids.find(succ);
                    std::size_t to;
                    if (it != ids.end()) {
                        to = it->second;
                    } else if (g.nodes.size() >= options.node_bound) {
                        g.bound_reached = true;
                        continue;
                    } else {
                        to = g.nodes.size();
                        ids.emplace(succ, to);
                        g.nodes.push_back(std::move(succ));
                        g.parent.push_back(g.edges.size());
                        next.push_back(to);
                    }
                    g.out[from].push_back(g.edges.size());
                    g.edges.push_back(StateGraph::Edge{from, event, to});
                }
        }
        level = std::move(next);
    }
    g.enabled.resize(g.nodes.size());
    g.out.resize(g.nodes.size());
    return g;
}

// ---------------------------------------------------------------------------
// Deadlock and safety

Verdict check_deadlock(const BehavioralModel& model, const ExploreOptions& options, DeadlockKind kind)
{
    const StateGraph g = build_state_graph(model, options);
    Verdict v;
    v.property = Property::deadlock;
    v.explored = g.nodes.size();
    for (std::size_t n = 0; n < g.nodes.size(); ++n) {
        if (!g.enabled[n].empty())
            continue;
        if (kind == DeadlockKind::blocked_requests && collect(model, g.nodes[n]).requested.empty())
            continue;
        v.result = Result::violated;
        v.counterexample = trace_to(g, n);
        return v;
    }
    v.result = g.bound_reached ? Result::bound_reached : Result::holds;
    return v;
}

Verdict check_safety(const BehavioralModel& model, const ExploreOptions& options)
{
    if (!model.has_violation_states())
        throw ConfigError("safety check needs at least one violation-marked state");
    const StateGraph g = build_state_graph(model, options);
    Verdict v;
    v.property = Property::safety;
    v.explored = g.nodes.size();
    for (std::size_t n = 0; n < g.nodes.size(); ++n)
        if (auto bad = violation_at(model, g.nodes[n])) {
            v.result = Result::violated;
            v.violation = *bad;
            v.counterexample = trace_to(g, n);
            return v;
        }
    v.result = g.bound_reached ? Result::bound_reached : Result::holds;
    return v;
}

// ---------------------------------------------------------------------------
// Starvation

namespace {

// Tarjan's SCC over edges not labelled `avoid`; returns the component id per node.
std::vector<std::size_t> components_avoiding(const StateGraph& g, const Event& avoid)
{
    const std::size_t n = g.nodes.size();
    std::vector<std::size_t> index(n, npos), low(n, 0), comp(n, npos);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    std::size_t counter = 0, comps = 0;

    struct Frame {
        std::size_t node;
        std::size_t next_edge;
    };
    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != npos)
            continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            const auto& edges = g.out[f.node];
            if (f.next_edge < edges.size()) {
                const auto& e = g.edges[edges[f.next_edge++]];
                if (e.event == avoid)
                    continue;
                if (index[e.to] == npos) {
                    index[e.to] = low[e.to] = counter++;
                    stack.push_back(e.to);
                    on_stack[e.to] = true;
                    call.push_back({e.to, 0});
                } else if (on_stack[e.to]) {
                    low[f.node] = std::min(low[f.node], index[e.to]);
                }
                continue;
            }
            const std::size_t v = f.node;
            if (low[v] == index[v]) {
                while (true) {
                    const std::size_t w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp[w] = comps;
                    if (w == v)
                        break;
                }
                ++comps;
            }
            call.pop_back();
            if (!call.empty())
                low[call.back().node] = std::min(low[call.back().node], low[v]);
        }
    }
    return comp;
}

Verdict starvation_existential(const BehavioralModel& model, const Event& event,
                               const ExploreOptions& options)
{
    const StateGraph g = build_state_graph(model, options);
    Verdict v;
    v.property = Property::starvation;
    v.starved = event;
    v.explored = g.nodes.size();

    const auto comp = components_avoiding(g, event);
    std::map<std::size_t, std::size_t> comp_size;
    for (std::size_t c : comp)
        ++comp_size[c];
    auto cyclic = [&](std::size_t node) {
        if (comp_size[comp[node]] > 1)
            return true;
        for (std::size_t ei : g.out[node])
            if (g.edges[ei].to == node && g.edges[ei].event != event)
                return true;
        return false;
    };

    for (std::size_t start = 0; start < g.nodes.size(); ++start) {
        if (!cyclic(start))
            continue;
        // Shortest cycle through `start` inside its component, avoiding `event`.
        std::vector<std::size_t> via(g.nodes.size(), npos);
        std::vector<std::size_t> queue{start};
        std::size_t closing = npos;
        for (std::size_t qi = 0; qi < queue.size() && closing == npos; ++qi) {
            const std::size_t u = queue[qi];
            for (std::size_t ei : g.out[u]) {
                const auto& e = g.edges[ei];
                if (e.event == event || comp[e.to] != comp[start])
                    continue;
                if (e.to == start) {
                    closing = ei;
                    break;
                }
                if (via[e.to] == npos) {
                    via[e.to] = ei;
                    queue.push_back(e.to);
                }
            }
        }
        std::vector<std::size_t> cycle_edges{closing};
        for (std::size_t n = g.edges[closing].from; n != start; n = g.edges[via[n]].from)
            cycle_edges.push_back(via[n]);
        std::reverse(cycle_edges.begin(), cycle_edges.end());

        Lasso lasso;
        lasso.prefix = trace_to(g, start);
        lasso.cycle.start = g.nodes[start];
        for (std::size_t ei : cycle_edges)
            lasso.cycle.steps.push_back(TraceStep{g.edges[ei].event, g.nodes[g.edges[ei].to]});
        Trace full = lasso.prefix;
        full.steps.insert(full.steps.end(), lasso.cycle.steps.begin(), lasso.cycle.steps.end());
        v.result = Result::violated;
        v.counterexample = std::move(full);
        v.lasso = std::move(lasso);
        return v;
    }
    v.result = g.bound_reached ? Result::bound_reached : Result::holds;
    return v;
}

Verdict starvation_under(const BehavioralModel& model, const Event& event, const exec::Strategy& strategy,
                         const ExploreOptions& options)
{
    if (strategy.is_random())
        throw ConfigError("starvation under a random strategy is not a single path; "
                          "use seeded runs instead");
    exec::RunConfig config;
    config.strategy = strategy;
    config.spawn = options.spawn;
    exec::validate(config, model);
    const exec::Engine engine(model, config);
    const bool keep_rr = uses_round_robin(strategy);

    auto key_of = [keep_rr](const exec::ExecState& s) {
        exec::ExecState k = s;
        k.steps = 0;
        if (!keep_rr)
            k.rr_last = 0;
        return k;
    };

    Verdict v;
    v.property = Property::starvation;
    v.starved = event;
    std::map<exec::ExecState, std::size_t> seen;
    exec::ExecState state = engine.initial();
    Trace path;
    path.start = state.cs;
    seen.emplace(key_of(state), 0);
    for (std::size_t i = 0; i < options.node_bound; ++i) {
        const EventSet en = engine.enabled(state);
        if (en.empty()) {
            v.explored = seen.size();
            const auto events = path.events();
            const bool starved = std::find(events.begin(), events.end(), event) == events.end();
            v.result = starved ? Result::violated : Result::holds;
            if (starved)
                v.counterexample = path;
            return v;
        }
        const Event e = engine.select(strategy, en, state);
        state = engine.advance(state, e);
        path.steps.push_back(TraceStep{e, state.cs});
        auto [it, inserted] = seen.emplace(key_of(state), path.steps.size());
        if (inserted)
            continue;
        v.explored = seen.size();
        const std::size_t loop_start = it->second;
        Lasso lasso;
        lasso.prefix.start = path.start;
        lasso.prefix.steps.assign(path.steps.begin(),
                                  path.steps.begin() + static_cast<std::ptrdiff_t>(loop_start));
        lasso.cycle.start = loop_start == 0 ? path.start : path.steps[loop_start - 1].target;
        lasso.cycle.steps.assign(path.steps.begin() + static_cast<std::ptrdiff_t>(loop_start),
                                 path.steps.end());
        const auto cycle_events = lasso.cycle.events();
        const bool starved =
            std::find(cycle_events.begin(), cycle_events.end(), event) == cycle_events.end();
        v.result = starved ? Result::violated : Result::holds;
        if (starved) {
            v.counterexample = path;
            v.lasso = std::move(lasso);
        }
        return v;
    }
    v.explored = seen.size();
    v.result = Result::bound_reached;
    return v;
}

}  // namespace

Verdict check_starvation(const BehavioralModel& model, const Event& event, const StarvationMode& mode,
                         const ExploreOptions& options)
{
    if (!model.alphabet().count(event))
        throw ConfigError("event '" + event + "' is not in the alphabet");
    if (mode.under)
        return starvation_under(model, event, *mode.under, options);
    return starvation_existential(model, event, options);
}

// ---------------------------------------------------------------------------
// Path enumeration

StateAt parse_state_at(const std::string& text)
{
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
        throw ConfigError("expected Scenario=state, got '" + text + "'");
    return StateAt{text.substr(0, eq), text.substr(eq + 1)};
}

namespace {

std::pair<std::size_t, std::size_t> resolve(const BehavioralModel& model, const StateAt& at)
{
    const auto s = model.index_of(at.scenario);
    if (!s)
        throw ConfigError("unknown scenario '" + at.scenario + "'");
    const auto q = model.scenario(*s).index_of(at.state);
    if (!q)
        throw ConfigError("scenario " + at.scenario + " has no state '" + at.state + "'");
    return {*s, *q};
}

}  // namespace

bool holds_at(const BehavioralModel& model, const CompositeState& cs, const StateAt& predicate)
{
    const auto [s, q] = resolve(model, predicate);
    if (cs.states.at(s) == q)
        return true;
    return std::any_of(cs.spawns.begin(), cs.spawns.end(),
                       [s = s, q = q](const Instance& i) { return i.scenario == s && i.state == q; });
}

std::vector<EventTrace> enumerate_paths(const BehavioralModel& model, const PathQuery& query)
{
    if (query.max_length < 1)
        throw ConfigError("path length bound must be at least 1");
    if (query.must_visit)
        resolve(model, *query.must_visit);
    if (query.must_end_at)
        resolve(model, *query.must_end_at);
    for (const auto& e : query.must_contain)
        if (!model.alphabet().count(e))
            throw ConfigError("unknown event '" + e + "'");
    if (query.must_end_with && !model.alphabet().count(*query.must_end_with))
        throw ConfigError("unknown event '" + *query.must_end_with + "'");

    std::set<EventTrace> found;
    EventTrace trace;
    std::vector<CompositeState> branch;

    std::function<void(const CompositeState&, bool)> dfs = [&](const CompositeState& cs, bool visited) {
        visited = visited || (query.must_visit && holds_at(model, cs, *query.must_visit));
        bool ok = !query.must_visit || visited;
        ok = ok && (!query.must_end_at || holds_at(model, cs, *query.must_end_at));
        ok = ok && (!query.must_end_with || (!trace.empty() && trace.back() == *query.must_end_with));
        for (const auto& e : query.must_contain)
            ok = ok && std::find(trace.begin(), trace.end(), e) != trace.end();
        if (ok && found.insert(trace).second && found.size() > query.cap)
            throw Error("path enumeration exceeded the cap of " + std::to_string(query.cap) + " paths");
        if (trace.size() >= query.max_length)
            return;
        for (const auto& e : enabled_events(model, cs))
            for (const auto& succ : exec::successors(model, cs, e, query.spawn, false)) {
                if (query.acyclic && std::find(branch.begin(), branch.end(), succ) != branch.end())
                    continue;
                trace.push_back(e);
                branch.push_back(succ);
                dfs(succ, visited);
                branch.pop_back();
                trace.pop_back();
            }
    };
    const CompositeState init = initial_state(model);
    branch.push_back(init);
    dfs(init, false);
    return {found.begin(), found.end()};
}

// ---------------------------------------------------------------------------
// Lint

std::vector<dsl::Diagnostic> lint(const BehavioralModel& model, const LintOptions& options)
{
    using dsl::Diagnostic;
    using dsl::Severity;
    std::vector<Diagnostic> out;
    auto warn = [&out](std::string code, std::string message) {
        out.push_back(Diagnostic{Severity::warning, std::move(code), std::move(message), {}});
    };

    EventSet requested, waited, mentioned;
    for (const auto& sc : model.scenarios()) {
        for (const auto& st : sc.states()) {
            requested.insert(st.decl.requested.begin(), st.decl.requested.end());
            waited.insert(st.decl.waited_for.begin(), st.decl.waited_for.end());
        }
        const auto used = sc.events_used();
        mentioned.insert(used.begin(), used.end());
    }

    // L01
    for (const auto& e : waited)
        if (!requested.count(e))
            warn("L01", "event " + e + " is waited for but never requested by any scenario");

    // L02
    if (!model.scenarios().empty()) {
        ExploreOptions eo;
        eo.node_bound = options.node_bound;
        const StateGraph g = build_state_graph(model, eo);
        EventSet requested_somewhere, enabled_somewhere;
        for (std::size_t n = 0; n < g.nodes.size(); ++n) {
            const SyncPoint sp = collect(model, g.nodes[n]);
            requested_somewhere.insert(sp.requested.begin(), sp.requested.end());
            enabled_somewhere.insert(g.enabled[n].begin(), g.enabled[n].end());
        }
        for (const auto& e : requested_somewhere)
            if (!enabled_somewhere.count(e))
                warn("L02", "event " + e + " is requested but blocked at every reachable point" +
                                (g.bound_reached ? " explored (exploration bounded)" : ""));
    }

    // L03
    for (const auto& sc : model.scenarios()) {
        std::vector<bool> seen(sc.size(), false);
        std::vector<std::size_t> stack{sc.initial()};
        seen[sc.initial()] = true;
        while (!stack.empty()) {
            const std::size_t q = stack.back();
            stack.pop_back();
            for (const auto& [event, targets] : sc.state(q).transitions) {
                if (!sc.reacts(q, event))
                    continue;
                for (std::size_t t : targets)
                    if (!seen[t]) {
                        seen[t] = true;
                        stack.push_back(t);
                    }
            }
        }
        for (std::size_t q = 0; q < sc.size(); ++q)
            if (!seen[q])
                warn("L03", "state " + sc.name() + "." + sc.state(q).id + " is unreachable");
    }

    // W001
    for (const auto& sc : model.scenarios())
        for (const auto& st : sc.states())
            for (const auto& [event, targets] : st.transitions)
                if (!st.decl.requested.count(event) && !st.decl.waited_for.count(event))
                    warn("W001", "state " + sc.name() + "." + st.id + " has a transition on " + event +
                                     " which it neither requests nor waits for");

    // L04
    for (const auto& e : model.alphabet())
        if (!mentioned.count(e))
            warn("L04", "event " + e + " is never mentioned by any scenario");
    return out;
}

// ---------------------------------------------------------------------------
// Export and replay

std::string export_counterexample(const Verdict& v)
{
    std::ostringstream os;
    if (v.result != Result::violated || !v.counterexample) {
        os << (v.result == Result::bound_reached ? "BOUND-REACHED" : "HOLDS") << '\n';
        return os.str();
    }
    std::size_t k = 1;
    for (const auto& s : v.counterexample->steps)
        os << k++ << '\t' << s.event << '\n';
    if (v.lasso)
        os << "LASSO-START " << v.lasso->prefix.steps.size() + 1 << '\n';
    else if (v.property == Property::safety)
        os << "VIOLATION " << v.violation << '\n';
    else
        os << "DEADLOCK\n";
    return os.str();
}

ReplayOutcome replay(const BehavioralModel& model, const Verdict& verdict, const exec::SpawnConfig& spawn)
{
    if (verdict.result != Result::violated || !verdict.counterexample)
        return {false, "verdict carries no counterexample"};
    exec::RunConfig config;
    config.max_steps = std::numeric_limits<std::size_t>::max();
    config.spawn = spawn;
    exec::Session session(model, config);
    const Trace& trace = *verdict.counterexample;
    if (session.state() != trace.start)
        return {false, "initial state differs"};

    std::optional<CompositeState> loop_state;
    const std::size_t prefix_len = verdict.lasso ? verdict.lasso->prefix.steps.size() : 0;
    if (verdict.lasso && prefix_len == 0)
        loop_state = session.state();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const auto& step = trace.steps[i];
        const auto res = session.force(step.event, step.target);
        if (!res.accepted)
            return {false, "step " + std::to_string(i + 1) + " (" + step.event + ") rejected: " +
                               res.explanation};
        if (verdict.lasso && i + 1 == prefix_len)
            loop_state = session.state();
    }

    switch (verdict.property) {
    case Property::deadlock:
        if (!session.enabled().empty())
            return {false, "final state is not deadlocked"};
        return {true, "deadlock reproduced after " + std::to_string(trace.steps.size()) + " steps"};
    case Property::safety: {
        const auto bad = violation_at(model, session.state());
        if (!bad)
            return {false, "no scenario is in a violation state"};
        return {true, "violation " + *bad + " reproduced"};
    }
    case Property::starvation: {
        const auto events = verdict.lasso ? verdict.lasso->cycle.events() : trace.events();
        if (std::find(events.begin(), events.end(), verdict.starved) != events.end())
            return {false, "starved event occurs in the witness"};
        if (verdict.lasso) {
            if (!loop_state || *loop_state != session.state())
                return {false, "cycle does not close"};
            return {true, "lasso closes without " + verdict.starved};
        }
        if (!session.enabled().empty())
            return {false, "final state is not deadlocked"};
        return {true, "run deadlocks without " + verdict.starved};
    }
    }
    return {false, "unknown property"};
}

}  // namespace sbm::verify
