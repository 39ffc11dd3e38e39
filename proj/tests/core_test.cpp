#include <gtest/gtest.h>

#include "sbm/core.hpp"
#include "support.hpp"

using namespace sbm;

namespace {

ScenarioObject toggle(const std::string& name, const Event& x, const Event& y)
{
    ScenarioObject s(name);
    s.add_state("p", StateDecl{{x}, {y}, {}});
    s.add_state("q", StateDecl{{y}, {x}, {}});
    s.add_transition("p", x, "q");
    s.add_transition("q", y, "p");
    return s;
}

}  // namespace

TEST(ScenarioObject, RejectsDuplicateAndUnknownStates)
{
    ScenarioObject s("S");
    s.add_state("a");
    EXPECT_THROW(s.add_state("a"), StructuralError);
    EXPECT_THROW(s.add_transition("a", "e", "missing"), StructuralError);
    EXPECT_THROW(s.set_initial("missing"), StructuralError);
}

TEST(ScenarioObject, TargetsAreSortedById)
{
    ScenarioObject s("S");
    s.add_state("z");
    s.add_state("b");
    s.add_state("m");
    s.add_transition("z", "e", "m");
    s.add_transition("z", "e", "b");
    s.add_transition("z", "e", "m");
    const auto& t = s.targets(0, "e");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(s.state(t[0]).id, "b");
    EXPECT_EQ(s.state(t[1]).id, "m");
}

TEST(ScenarioObject, ReactsOnlyToDeclaredListedEvents)
{
    ScenarioObject s("S");
    s.add_state("a", StateDecl{{"x"}, {}, {"w"}});
    s.add_state("b");
    s.add_transition("a", "x", "b");
    s.add_transition("a", "u", "b");  // neither requested nor waited for
    EXPECT_TRUE(s.reacts(0, "x"));
    EXPECT_FALSE(s.reacts(0, "u"));
    EXPECT_FALSE(s.reacts(0, "w"));  // waited for, no transition listed
    EXPECT_EQ(s.effective_targets(0, "u"), std::vector<std::size_t>{0});
    EXPECT_EQ(s.effective_targets(0, "w"), std::vector<std::size_t>{0});
    EXPECT_EQ(s.effective_targets(0, "x"), std::vector<std::size_t>{1});
}

TEST(ScenarioObject, EqualityIgnoresAlphabet)
{
    auto a = toggle("T", "x", "y");
    auto b = toggle("T", "x", "y");
    b.set_alphabet({"x", "y", "z"});
    EXPECT_EQ(a, b);
    b.set_name("U");
    EXPECT_FALSE(a == b);
}

TEST(ScenarioObject, CanonicalizeFollowsFirstVisitOrder)
{
    ScenarioObject s("S");
    s.add_state("orphan");
    s.add_state("start", StateDecl{{"b", "a"}, {}, {}});
    s.add_state("via_b");
    s.add_state("via_a");
    s.set_initial("start");
    s.add_transition("start", "b", "via_b");
    s.add_transition("start", "a", "via_a");
    const auto c = canonicalize(s);
    std::vector<std::string> ids;
    for (const auto& st : c.states())
        ids.push_back(st.id);
    EXPECT_EQ(ids, (std::vector<std::string>{"start", "via_a", "via_b", "orphan"}));
    EXPECT_EQ(c.initial(), 0u);
}

TEST(BehavioralModel, ValidatesScenarios)
{
    EXPECT_THROW(BehavioralModel({"x"}, {toggle("T", "x", "y")}), StructuralError);
    EXPECT_THROW(BehavioralModel({"x", "y"}, {toggle("T", "x", "y"), toggle("T", "y", "x")}), StructuralError);
    EXPECT_THROW(BehavioralModel({"x"}, {ScenarioObject("Empty")}), StructuralError);
    EXPECT_THROW(BehavioralModel({"bad name"}, {}), StructuralError);

    BehavioralModel m({"x", "y", "z"}, {toggle("T", "x", "y")});
    EXPECT_EQ(m.scenario(0).alphabet(), (EventSet{"x", "y", "z"}));
    EXPECT_EQ(m.index_of("T"), 0u);
    EXPECT_FALSE(m.index_of("U"));
}

TEST(Semantics, WaterTapInitialSyncPoint)
{
    const auto m = testkit::corpus("watertap.sbm");
    const auto cs = initial_state(m);
    EXPECT_EQ(enabled_events(m, cs), (EventSet{"WaterLow"}));
    EXPECT_EQ(describe(m, cs), "AddHotWater=s1;AddColdWater=s1;Stability=st1;Environment=e1");
    const auto sp = collect(m, cs);
    EXPECT_EQ(sp.blocked, (EventSet{"AddCold"}));
    EXPECT_EQ(sp.waited_for, (EventSet{"WaterLow", "AddHot"}));
    EXPECT_EQ(blockers(m, cs, "AddCold"), std::vector<std::string>{"Stability"});
    EXPECT_TRUE(blockers(m, cs, "AddHot").empty());
}

TEST(Semantics, StepMovesOnlyReactingScenarios)
{
    const auto m = testkit::corpus("watertap.sbm");
    const auto next = step(m, initial_state(m), "WaterLow");
    ASSERT_EQ(next.size(), 1u);
    EXPECT_EQ(describe(m, next[0]), "AddHotWater=s2;AddColdWater=s2;Stability=st1;Environment=e2");
    EXPECT_THROW(step(m, initial_state(m), "Coffee"), StructuralError);
}

TEST(Semantics, StepEnumeratesBranches)
{
    ScenarioObject s("N");
    s.add_state("a", StateDecl{{"x"}, {}, {}});
    s.add_state("b");
    s.add_state("c");
    s.add_transition("a", "x", "c");
    s.add_transition("a", "x", "b");
    BehavioralModel m({"x"}, {s, toggle("T", "x", "x")});
    const auto next = step(m, initial_state(m), "x");
    ASSERT_EQ(next.size(), 2u);
    EXPECT_EQ(describe(m, next[0]), "N=b;T=q");
    EXPECT_EQ(describe(m, next[1]), "N=c;T=q");
}

TEST(Semantics, ValidateStateChecksShape)
{
    const auto m = testkit::corpus("watertap.sbm");
    CompositeState cs = initial_state(m);
    cs.states.pop_back();
    EXPECT_THROW(validate_state(m, cs), StructuralError);
    cs = initial_state(m);
    cs.states[0] = 99;
    EXPECT_THROW(validate_state(m, cs), StructuralError);
}

TEST(Compose, ProductNamesAndUnionLabels)
{
    auto a = toggle("A", "x", "y");
    auto b = toggle("B", "y", "x");
    a.set_alphabet({"x", "y"});
    b.set_alphabet({"x", "y"});
    const auto ab = compose(a, b);
    EXPECT_EQ(ab.name(), "A_B");
    EXPECT_EQ(ab.size(), 4u);
    EXPECT_EQ(ab.state(ab.initial()).id, "(p,p)");
    const auto pp = *ab.index_of("(p,p)");
    EXPECT_EQ(ab.decl(pp).requested, (EventSet{"x", "y"}));
    EXPECT_EQ(ab.decl(pp).blocked, (EventSet{"x", "y"}));
    // x moves A to q; B (at p requesting y) does not react to x.
    EXPECT_EQ(ab.state(ab.targets(pp, "x").at(0)).id, "(q,p)");
}

TEST(Compose, RejectsAlphabetMismatch)
{
    auto a = toggle("A", "x", "y");
    auto b = toggle("B", "x", "y");
    a.set_alphabet({"x", "y"});
    b.set_alphabet({"x", "y", "z"});
    EXPECT_THROW(compose(a, b), StructuralError);
}

TEST(Compose, ViolationIfEitherSideViolates)
{
    ScenarioObject a("A");
    a.add_state("ok");
    ScenarioObject b("B");
    b.add_state("bad", {}, true);
    const auto ab = compose(a, b);
    EXPECT_TRUE(ab.is_violation(ab.initial()));
}

TEST(Traces, PrefixClosedWithEmptyTrace)
{
    const auto m = testkit::corpus("watertap.sbm");
    const auto traces = reachable_traces(m, 3);
    EXPECT_TRUE(traces.count({}));
    for (const auto& t : traces)
        if (!t.empty())
            EXPECT_TRUE(traces.count(EventTrace(t.begin(), t.end() - 1)));
    EXPECT_EQ(traces.size(), 4u);  // deterministic: one trace per length
}

TEST(Traces, MaximalDropsProperPrefixes)
{
    const std::set<EventTrace> in{{}, {"a"}, {"a", "b"}, {"a", "c"}, {"b"}};
    EXPECT_EQ(maximal_traces(in), (std::set<EventTrace>{{"a", "b"}, {"a", "c"}, {"b"}}));
}

TEST(Util, Identifiers)
{
    EXPECT_TRUE(is_identifier("AddHot"));
    EXPECT_TRUE(is_identifier("s_1"));
    EXPECT_FALSE(is_identifier("1s"));
    EXPECT_FALSE(is_identifier(""));
    EXPECT_FALSE(is_identifier("a-b"));
}
