#include <gtest/gtest.h>

#include <numeric>

#include "sbm/dsl.hpp"
#include "sbm/verifier.hpp"
#include "support.hpp"

using namespace sbm;
using namespace sbm::verify;
using sbm::exec::Strategy;

namespace {

BehavioralModel model_from(const std::string& text)
{
    auto r = dsl::parse_model(text);
    if (!r.ok())
        throw Error(dsl::format(r.diagnostics.at(0)));
    return *r.value;
}

std::size_t count_of(const EventTrace& t, const Event& e) { return std::count(t.begin(), t.end(), e); }

std::vector<std::string> codes(const std::vector<dsl::Diagnostic>& ds)
{
    std::vector<std::string> out;
    for (const auto& d : ds)
        out.push_back(d.code);
    return out;
}

}  // namespace

TEST(StateGraph, WaterTapHasEightStates)
{
    const auto g = build_state_graph(testkit::corpus("watertap.sbm"));
    EXPECT_EQ(g.nodes.size(), 8u);
    EXPECT_EQ(g.edges.size(), 7u);
    EXPECT_FALSE(g.bound_reached);
    EXPECT_EQ(g.parent[0], StateGraph::npos);
    EXPECT_TRUE(g.enabled.back().empty());
}

TEST(StateGraph, IndependentOfWorkerCount)
{
    const auto m = testkit::corpus("grid.sbm");
    ExploreOptions one, four;
    four.jobs = 4;
    const auto a = build_state_graph(m, one);
    const auto b = build_state_graph(m, four);
    EXPECT_EQ(a.nodes, b.nodes);
    ASSERT_EQ(a.edges.size(), b.edges.size());
    for (std::size_t i = 0; i < a.edges.size(); ++i)
        EXPECT_TRUE(a.edges[i].from == b.edges[i].from && a.edges[i].to == b.edges[i].to &&
                    a.edges[i].event == b.edges[i].event);
}

TEST(StateGraph, NodeBound)
{
    ExploreOptions o;
    o.node_bound = 5;
    const auto g = build_state_graph(testkit::corpus("grid.sbm"), o);
    EXPECT_EQ(g.nodes.size(), 5u);
    EXPECT_TRUE(g.bound_reached);
    o.node_bound = 0;
    EXPECT_THROW(build_state_graph(testkit::corpus("grid.sbm"), o), ConfigError);
}

TEST(StateGraph, SpawnNeedsFiniteBound)
{
    ExploreOptions o;
    o.spawn.enabled = true;
    EXPECT_THROW(build_state_graph(testkit::corpus("watertap.sbm"), o), ConfigError);
}

TEST(Deadlock, WaterTapTerminatesQuiescently)
{
    const auto m = testkit::corpus("watertap.sbm");
    const auto any = check_deadlock(m);
    ASSERT_EQ(any.result, Result::violated);
    EXPECT_EQ(any.counterexample->events().size(), 7u);
    EXPECT_EQ(check_deadlock(m, {}, DeadlockKind::blocked_requests).result, Result::holds);
}

TEST(Deadlock, FlashModelsDeadlockAtLcm)
{
    const std::vector<std::tuple<const char*, std::size_t, std::size_t>> cases{
        {"flash23.sbm", 2, 3}, {"flash35.sbm", 3, 5}, {"flash47.sbm", 4, 7}};
    for (const auto& [file, a, b] : cases) {
        const auto v = check_deadlock(testkit::corpus(file));
        ASSERT_EQ(v.result, Result::violated) << file;
        const auto events = v.counterexample->events();
        EXPECT_EQ(count_of(events, "Tick"), std::lcm(a, b)) << file;
        EXPECT_EQ(events.back(), "Tick") << file;
        EXPECT_TRUE(replay(testkit::corpus(file), v).reproduced) << file;
    }
}

TEST(Deadlock, BoundReachedWhenNothingFound)
{
    ExploreOptions o;
    o.node_bound = 3;
    EXPECT_EQ(check_deadlock(testkit::corpus("beep.sbm"), o).result, Result::holds);  // 2 states only
    EXPECT_EQ(check_deadlock(testkit::corpus("grid.sbm"), o).result, Result::bound_reached);
}

TEST(Safety, GridMonitorsHold)
{
    const auto v = check_safety(testkit::corpus("grid.sbm"));
    EXPECT_EQ(v.result, Result::holds);
    EXPECT_EQ(v.explored, 16u);
    EXPECT_THROW(check_safety(testkit::corpus("beep.sbm")), ConfigError);
}

TEST(Safety, MonitorCatchesDoubleHot)
{
    auto m = testkit::corpus("watertap_nostab.sbm");
    const auto monitor =
        dsl::load_model((testkit::models_dir() / "monitors" / "no_double_hot.sbm").string(), dsl::ModelOptions{true});
    for (const auto& s : monitor.scenarios())
        m.add_scenario(s);
    const auto v = check_safety(m);
    ASSERT_EQ(v.result, Result::violated);
    EXPECT_EQ(v.violation, "NoDoubleHot=bad");
    EXPECT_EQ(v.counterexample->events(), (EventTrace{"WaterLow", "AddHot", "AddHot"}));
    EXPECT_TRUE(replay(m, v).reproduced);
    EXPECT_EQ(export_counterexample(v), "1\tWaterLow\n2\tAddHot\n3\tAddHot\nVIOLATION NoDoubleHot=bad\n");
}

TEST(Starvation, PriorityStarvesLongBeep)
{
    const auto m = testkit::corpus("beep.sbm");
    const auto v = check_starvation(m, "LongBeep", StarvationMode{Strategy::priority({"ShortBeep"})});
    ASSERT_EQ(v.result, Result::violated);
    ASSERT_TRUE(v.lasso);
    EXPECT_EQ(v.lasso->cycle.events(), (EventTrace{"Tick", "ShortBeep"}));
    EXPECT_TRUE(replay(m, v).reproduced);
    EXPECT_EQ(export_counterexample(v), "1\tTick\n2\tShortBeep\nLASSO-START 1\n");

    const auto fair = check_starvation(m, "LongBeep", StarvationMode{Strategy::priority({"LongBeep"})});
    EXPECT_EQ(fair.result, Result::holds);
}

TEST(Starvation, ExistentialSearchFindsAvoidingCycle)
{
    const auto m = testkit::corpus("beep.sbm");
    const auto v = check_starvation(m, "LongBeep", {});
    ASSERT_EQ(v.result, Result::violated);
    EXPECT_EQ(count_of(v.lasso->cycle.events(), "LongBeep"), 0u);
    EXPECT_TRUE(replay(m, v).reproduced);
    // Tick is on every cycle.
    EXPECT_EQ(check_starvation(m, "Tick", {}).result, Result::holds);
}

TEST(Starvation, DeadlockingPathCountsWhenEventNeverHappens)
{
    const auto m = testkit::corpus("watertap.sbm");
    const auto v = check_starvation(m, "WaterLow", StarvationMode{Strategy::lexicographic()});
    EXPECT_EQ(v.result, Result::holds);  // happens once, then deadlock
    const auto nostab = model_from("events: a, b\nscenario S:\n  s0: request a. If a is triggered, go to state s1.\n"
                                   "  s1: .\n");
    const auto w = check_starvation(nostab, "b", StarvationMode{Strategy::lexicographic()});
    ASSERT_EQ(w.result, Result::violated);
    EXPECT_FALSE(w.lasso);
    EXPECT_TRUE(replay(nostab, w).reproduced);
}

TEST(Starvation, RejectsRandomAndUnknownEvents)
{
    const auto m = testkit::corpus("beep.sbm");
    EXPECT_THROW(check_starvation(m, "LongBeep", StarvationMode{Strategy::random(1)}), ConfigError);
    EXPECT_THROW(check_starvation(m, "LongBeep", StarvationMode{Strategy::lookahead(2, Strategy::random(1))}),
                 ConfigError);
    EXPECT_THROW(check_starvation(m, "Buzz", {}), ConfigError);
}

TEST(Starvation, RoundRobinKeepsPointerInState)
{
    const auto m = testkit::corpus("beep.sbm");
    const auto v = check_starvation(m, "LongBeep", StarvationMode{Strategy::round_robin()});
    EXPECT_NE(v.result, Result::bound_reached);
    if (v.result == Result::violated)
        EXPECT_TRUE(replay(m, v).reproduced);
}

TEST(Paths, GridShortestPaths)
{
    const auto m = testkit::corpus("grid.sbm");
    PathQuery q;
    q.max_length = 6;
    q.must_end_at = parse_state_at("Robot=c33");
    const auto all = enumerate_paths(m, q);
    EXPECT_EQ(all.size(), 20u);
    q.must_visit = parse_state_at("Robot=c13");
    const auto via = enumerate_paths(m, q);
    EXPECT_EQ(via.size(), 4u);
    EXPECT_EQ(via.front(), (EventTrace{"Right", "Up", "Up", "Up", "Right", "Right"}));
}

TEST(Paths, IncludesEmptyTraceWhenUnconstrained)
{
    PathQuery q;
    q.max_length = 2;
    const auto p = enumerate_paths(testkit::corpus("watertap.sbm"), q);
    EXPECT_EQ(p, (std::vector<EventTrace>{{}, {"WaterLow"}, {"WaterLow", "AddHot"}}));
}

TEST(Paths, EventConstraints)
{
    const auto m = testkit::corpus("grid.sbm");
    PathQuery q;
    q.max_length = 2;
    q.must_end_with = "Up";
    q.must_contain = {"Right"};
    EXPECT_EQ(enumerate_paths(m, q), (std::vector<EventTrace>{{"Right", "Up"}}));
}

TEST(Paths, AcyclicDropsRevisits)
{
    const auto m = testkit::corpus("grid.sbm");
    PathQuery q;
    q.max_length = 2;
    q.must_end_at = parse_state_at("Robot=c00");
    EXPECT_EQ(enumerate_paths(m, q).size(), 3u);  // empty, Right Left, Up Down
    q.acyclic = true;
    EXPECT_EQ(enumerate_paths(m, q), (std::vector<EventTrace>{{}}));
}

TEST(Paths, CapAndValidation)
{
    const auto m = testkit::corpus("grid.sbm");
    PathQuery q;
    q.max_length = 6;
    q.cap = 10;
    EXPECT_THROW(enumerate_paths(m, q), Error);
    q.max_length = 0;
    EXPECT_THROW(enumerate_paths(m, q), ConfigError);
    q.max_length = 1;
    q.must_visit = parse_state_at("Robot=c99");
    EXPECT_THROW(enumerate_paths(m, q), ConfigError);
    EXPECT_THROW(parse_state_at("Robot"), ConfigError);
}

TEST(Lint, CleanCorpusModels)
{
    for (const char* f : {"watertap.sbm", "beep.sbm", "grid.sbm", "flash35.sbm"})
        EXPECT_TRUE(lint(testkit::corpus(f)).empty()) << f;
}

TEST(Lint, ReportsEachKind)
{
    const auto m = model_from("events: a, b, c, w, z\n"
                              "scenario S:\n"
                              "  s0: request a, wait for w. If a is triggered, go to state s1.\n"
                              "  s1: request b. If b is triggered, go to state s0. If c is triggered, go to state s0.\n"
                              "  lost: .\n"
                              "scenario Blocker:\n"
                              "  k: block b.\n");
    EXPECT_EQ(codes(lint(m)), (std::vector<std::string>{"L01", "L02", "L03", "W001", "L04"}));
    for (const auto& d : lint(m))
        EXPECT_EQ(d.severity, dsl::Severity::warning);
}

TEST(Replay, RejectsHoldingVerdicts)
{
    const auto m = testkit::corpus("grid.sbm");
    EXPECT_FALSE(replay(m, check_safety(m)).reproduced);
    EXPECT_EQ(export_counterexample(check_safety(m)), "HOLDS\n");
}

TEST(Replay, DetectsTamperedTrace)
{
    const auto m = testkit::corpus("flash23.sbm");
    auto v = check_deadlock(m);
    v.counterexample->steps.pop_back();
    const auto out = replay(m, v);
    EXPECT_FALSE(out.reproduced);
    EXPECT_EQ(out.detail, "final state is not deadlocked");
}
