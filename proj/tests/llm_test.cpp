#include <gtest/gtest.h>

#include <filesystem>

#include "sbm/dsl.hpp"
#include "sbm/llm.hpp"
#include "support.hpp"

using namespace sbm;
using namespace sbm::llm;
namespace fs = std::filesystem;

namespace {

Transcript conversation(const std::string& file = "watertap_conversation.json")
{
    return load_transcript(testkit::fixtures_dir() / file);
}

std::string fixture(const std::string& name) { return dsl::read_file((testkit::fixtures_dir() / name).string()); }

struct Project {
    fs::path dir = testkit::fresh_dir("proj");
    ProjectStore store = ProjectStore::init(dir, {"WaterLow", "AddHot", "AddCold"});

    ~Project() { fs::remove_all(dir); }

    void add(const std::string& name) const
    {
        const auto m = testkit::corpus("watertap.sbm");
        store.add_manual(m.scenario(*m.index_of(name)));
    }
};

}  // namespace

TEST(Preamble, DefaultAndEventSet)
{
    const std::string p = build_preamble();
    EXPECT_EQ(p.rfind("I would like you to help me create a scenario-based model", 0), 0u);
    EXPECT_EQ(p, preamble_template());
    EXPECT_EQ(build_preamble(PreambleOptions{}), p);
    EXPECT_EQ(build_preamble({EventSet{"A", "B"}, {}}), p + "\n\nConsider the event set {A, B}.");
    EXPECT_EQ(preamble_version(), "v1");
    EXPECT_NE(p.find("s1: request X, block Y."), std::string::npos);
}

TEST(Preamble, FillTemplate)
{
    EXPECT_EQ(fill_template("{{A}} and {{A}} or {{B}}", {{"A", "x"}, {"B", "{{A}}"}}), "x and x or {{A}}");
}

TEST(Transcript, RoundTripAndValidation)
{
    const auto t = conversation();
    ASSERT_EQ(t.size(), 7u);
    EXPECT_EQ(t[0].role, Role::system);
    EXPECT_EQ(parse_transcript(serialize_transcript(t)), t);
    EXPECT_THROW(parse_transcript(R"([{"role":"assistant","content":"hi"}])"), Error);
    EXPECT_THROW(parse_transcript(R"([{"role":"user","content":"a"},{"role":"user","content":"b"}])"), Error);
    EXPECT_THROW(parse_transcript(R"([{"role":"robot","content":"a"}])"), Error);
    EXPECT_THROW(parse_transcript("{not json"), Error);
}

TEST(Transcript, NormalizeWhitespace)
{
    EXPECT_EQ(normalize_whitespace("  a\n\tb   c \n"), "a b c");
}

TEST(Replay, AnswersRecordedTurns)
{
    ReplayClient client(conversation());
    const Transcript start{{Role::system, build_preamble()}};
    const auto first = ask(client, start, fixture("prompt_addhot.txt"));
    EXPECT_EQ(first.response, conversation()[2].content);
    EXPECT_EQ(first.transcript.size(), 3u);

    // Reflowed prompt text still matches.
    std::string reflowed = fixture("prompt_addcold.txt");
    std::replace(reflowed.begin(), reflowed.end(), '\n', ' ');
    const auto second = ask(client, first.transcript, "  " + reflowed);
    EXPECT_EQ(second.response, conversation()[4].content);
}

TEST(Replay, EmptyHistoryFirstCall)
{
    ReplayClient client(conversation());
    const auto r = ask(client, {}, fixture("prompt_addhot.txt"));
    EXPECT_EQ(r.transcript.size(), 2u);
    EXPECT_EQ(r.response, conversation()[2].content);
}

TEST(Replay, MismatchNamesTurn)
{
    ReplayClient client(conversation());
    const Transcript start{{Role::system, build_preamble()}};
    try {
        ask(client, start, "Please suggest a scenario for boiling eggs.");
        FAIL() << "expected a mismatch";
    } catch (const ReplayMismatch& e) {
        EXPECT_EQ(e.turn(), 1u);
        EXPECT_NE(std::string(e.what()).find("turn 1"), std::string::npos);
    }
    auto history = start;
    for (int i = 0; i < 3; ++i) {
        history.push_back({Role::user, conversation()[1 + 2 * i].content});
        history.push_back({Role::assistant, conversation()[2 + 2 * i].content});
    }
    EXPECT_THROW(ask(client, history, "anything else?"), ReplayMismatch);
}

TEST(Live, RequestAndResponseShapes)
{
    const Transcript h{{Role::system, "sys"}, {Role::user, "hi"}};
    EXPECT_EQ(build_chat_request("m1", h),
              R"({"messages":[{"content":"sys","role":"system"},{"content":"hi","role":"user"}],"model":"m1"})");
    EXPECT_EQ(parse_chat_response(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})"), "ok");
    try {
        parse_chat_response(R"({"choices":[]})");
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_FALSE(e.retriable());
    }
}

TEST(Live, UnreachableEndpointIsRetriable)
{
    LiveClient client({"http://127.0.0.1:9", "m", ""});
    try {
        client.complete({{Role::user, "hi"}});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_TRUE(e.retriable());
        EXPECT_EQ(e.status(), 0);
    }
}

TEST(TraceSpec, DirectivesAndDefaults)
{
    const auto spec = parse_trace_spec("# comment\n@strategy random\n@seed 7\n@inject 2 AddHot\nWaterLow\n\nAddHot # x\n"
                                       "@terminal max-steps\n");
    EXPECT_EQ(spec.events, (EventTrace{"WaterLow", "AddHot"}));
    EXPECT_EQ(exec::to_string(spec.config.strategy), "random:7");
    EXPECT_EQ(spec.config.max_steps, 3u);
    ASSERT_EQ(spec.config.injections.size(), 1u);
    EXPECT_EQ(spec.config.injections[0].after_step, 2u);
    EXPECT_EQ(spec.terminal, exec::Terminal::max_steps);
    EXPECT_THROW(parse_trace_spec("@bogus 1\n"), ConfigError);
    EXPECT_THROW(parse_trace_spec("two words\n"), ConfigError);
    EXPECT_THROW(parse_trace_spec("@max-steps x\n"), ConfigError);
}

TEST(TraceSpec, CheckAgainstModel)
{
    const auto m = testkit::corpus("watertap.sbm");
    const auto ok = check_trace(m, parse_trace_spec(fixture("interleaved.trace")));
    EXPECT_TRUE(ok.passed) << ok.detail;
    const auto prefix = check_trace(m, parse_trace_spec("WaterLow\nAddHot\n"));
    EXPECT_FALSE(prefix.passed);  // exact match, not prefix
    EXPECT_EQ(prefix.detail, "step 3: expected end of trace, got AddCold");
}

TEST(PlayoutLog, ComparesAgainstExecutor)
{
    const auto m = testkit::corpus("watertap.sbm");
    const std::string good = "1. WaterLow\n2. AddHot\nStep 3: AddCold\n- AddHot\nAddCold\nAddHot\nAddCold\n";
    EXPECT_TRUE(check_playout_log(m, exec::RunConfig{}, good).passed);
    const auto bad = check_playout_log(m, exec::RunConfig{}, "WaterLow\nAddCold\n");
    EXPECT_FALSE(bad.passed);
    EXPECT_EQ(bad.detail, "step 2: expected AddHot, got AddCold");
}

TEST(Store, InitLayout)
{
    Project p;
    for (const char* sub : {"prompts", "transcripts", "traces", "monitors", "staged", "reports"})
        EXPECT_TRUE(fs::is_directory(p.dir / sub)) << sub;
    EXPECT_EQ(p.store.model().alphabet(), (EventSet{"AddCold", "AddHot", "WaterLow"}));
    EXPECT_TRUE(p.store.ledger().empty());
    EXPECT_THROW(ProjectStore::init(p.dir, {"X"}), ConfigError);
    EXPECT_THROW(ProjectStore(p.dir / "nowhere"), ConfigError);
}

TEST(Store, ContentHashIgnoresLayout)
{
    const auto a = dsl::parse_scenario("s1: request X. If X is triggered, go to state s1.", "S");
    const auto b = dsl::parse_scenario("s1:   Request X.\n If X is triggered,\n go to state s1.", "S");
    EXPECT_EQ(content_hash(*a.value), content_hash(*b.value));
    EXPECT_EQ(content_hash(*a.value).size(), 64u);
    const auto c = dsl::parse_scenario("s1: request X, block X. If X is triggered, go to state s1.", "S");
    EXPECT_NE(content_hash(*a.value), content_hash(*c.value));
}

TEST(Ingest, StagesWithProvenance)
{
    Project p;
    const auto res = ingest_response(p.store, conversation()[2].content, "AddHotWater",
                                     {"prompts/hot.txt", "transcripts/session.json", 2});
    EXPECT_EQ(res.object.size(), 4u);
    EXPECT_TRUE(p.store.staged_text("AddHotWater"));
    const auto ledger = p.store.ledger();
    ASSERT_TRUE(ledger.count("AddHotWater"));
    EXPECT_EQ(ledger.at("AddHotWater").status, "staged");
    EXPECT_EQ(ledger.at("AddHotWater").turn, 2u);
    EXPECT_EQ(ledger.at("AddHotWater").hash, content_hash(res.object));
    EXPECT_EQ(p.store.model().size(), 0u);  // never merged automatically

    EXPECT_THROW(ingest_response(p.store, conversation()[2].content, "AddHotWater", {}), ConfigError);
}

TEST(Ingest, Errors)
{
    Project p;
    try {
        ingest_response(p.store, "I am not sure what you mean.", "X", {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(std::string(e.what()), "no scenario block found in the response");
    }
    const std::string two = "- a0: request AddHot.\n\nAnd:\n\n- b0: request AddCold.\n";
    try {
        ingest_response(p.store, two, "X", {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("split"), std::string::npos);
    }
    EXPECT_THROW(ingest_response(p.store, "- a0: request AddHot.", "", {}), ConfigError);
    p.add("Environment");
    EXPECT_THROW(ingest_response(p.store, "- a0: request AddHot.", "Environment", {}), ConfigError);
    EXPECT_THROW(ingest_response(p.store, "- a0: request AddHot. If AddHot is triggered, go to state a9.", "X", {}),
                 dsl::ParseError);
}

TEST(Validate, StabilityPassesAllStagesAndMerges)
{
    Project p;
    p.add("AddHotWater");
    p.add("AddColdWater");
    p.add("Environment");
    fs::create_directories(p.dir / "traces" / "Stability");
    fs::copy_file(testkit::fixtures_dir() / "interleaved.trace", p.dir / "traces" / "Stability" / "interleaved.trace");
    ingest_response(p.store, conversation()[6].content, "Stability", {"prompts/stability.txt", "t.json", 6});

    const auto report = validate(p.store, "Stability");
    EXPECT_TRUE(report.passed()) << format_report(report);
    ASSERT_EQ(report.stages.size(), 4u);
    EXPECT_EQ(report.stage(Stage::unit_trace).details.at(0),
              "traces/Stability/interleaved.trace: ok, matched 7 events");
    EXPECT_TRUE(fs::exists(p.dir / "reports" / "Stability.json"));
    EXPECT_EQ(ValidationReport::from_json(report.to_json()).to_json(), report.to_json());

    merge(p.store, "Stability");
    EXPECT_TRUE(p.store.model().index_of("Stability"));
    EXPECT_EQ(p.store.ledger().at("Stability").status, "merged");
    EXPECT_FALSE(p.store.staged_text("Stability"));
    EXPECT_TRUE(regenerate_guard(p.store).empty());
}

TEST(Validate, UnknownEventFailsAtParse)
{
    Project p;
    p.store.stage("Tea", "scenario Tea:\n  t0: request Boil.\n");
    const auto report = validate(p.store, "Tea");
    EXPECT_EQ(report.failed_stage(), Stage::parse);
    EXPECT_EQ(report.stage(Stage::parse).diagnostics.at(0).code, "E010");
    EXPECT_EQ(report.stage(Stage::lint).status, StageStatus::skipped);
    EXPECT_EQ(report.stage(Stage::model_check).status, StageStatus::skipped);
    EXPECT_THROW(merge(p.store, "Tea"), ConfigError);
}

TEST(Validate, PermanentBlockingFailsAtModelCheck)
{
    Project p;
    p.add("AddHotWater");
    p.add("AddColdWater");
    p.add("Environment");
    p.store.stage("Jam", "scenario Jam:\n  j: block AddHot and AddCold.\n");
    const auto report = validate(p.store, "Jam");
    EXPECT_EQ(report.failed_stage(), Stage::model_check);
    const auto& mc = report.stage(Stage::model_check);
    EXPECT_EQ(mc.counterexample, "1\tWaterLow\nDEADLOCK\n");
}

TEST(Validate, MonitorsJoinModelCheck)
{
    Project p;
    p.add("AddHotWater");
    p.add("AddColdWater");
    fs::copy_file(testkit::models_dir() / "monitors" / "no_double_hot.sbm", p.dir / "monitors" / "no_double_hot.sbm");
    p.store.stage("Env", "scenario Env:\n  e1: request WaterLow. If WaterLow is triggered, go to state e2.\n  e2: .\n");
    const auto report = validate(p.store, "Env");
    EXPECT_EQ(report.failed_stage(), Stage::model_check);
    EXPECT_NE(report.stage(Stage::model_check).counterexample.find("VIOLATION NoDoubleHot=bad"), std::string::npos);
}

TEST(Merge, RefusesChangedText)
{
    Project p;
    p.add("AddHotWater");
    p.add("AddColdWater");
    p.add("Environment");
    ingest_response(p.store, conversation()[6].content, "Stability", {});
    ASSERT_TRUE(validate(p.store, "Stability").passed());
    p.store.stage("Stability", "scenario Stability:\n  st1: wait for AddHot.\n");
    EXPECT_THROW(merge(p.store, "Stability"), ConfigError);
}

TEST(Guard, FlagsEditedAndMissingGeneratedScenarios)
{
    Project p;
    p.add("AddHotWater");
    p.add("AddColdWater");
    p.add("Environment");
    ingest_response(p.store, conversation()[6].content, "Stability", {"prompts/stability.txt", "t.json", 6});
    ASSERT_TRUE(validate(p.store, "Stability").passed());
    merge(p.store, "Stability");
    EXPECT_TRUE(regenerate_guard(p.store).empty());

    // A reformatted model keeps its hashes.
    const std::string text = dsl::read_file(p.store.model_path().string());
    dsl::write_file(p.store.model_path().string(), text + "\n# note\n");
    EXPECT_TRUE(regenerate_guard(p.store).empty());

    // Hand edits to generated code are flagged; manual scenarios are exempt.
    std::string edited = text;
    const auto pos = edited.find("st2: wait for AddCold, block AddHot.");
    ASSERT_NE(pos, std::string::npos);
    edited.replace(pos, 36, "st2: wait for AddCold.");
    const auto env_pos = edited.find("e2: .");
    ASSERT_NE(env_pos, std::string::npos);
    edited.replace(env_pos, 5, "e2: wait for WaterLow.");
    dsl::write_file(p.store.model_path().string(), edited);
    const auto flags = regenerate_guard(p.store);
    ASSERT_EQ(flags.size(), 1u);
    EXPECT_EQ(flags[0].code, "G001");
    EXPECT_NE(flags[0].message.find("prompts/stability.txt"), std::string::npos);
}
