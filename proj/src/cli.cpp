#include "sbm/cli.hpp"

#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sbm/dsl.hpp"
#include "sbm/executor.hpp"
#include "sbm/llm.hpp"
#include "sbm/verifier.hpp"

namespace sbm::cli {

namespace {

namespace fs = std::filesystem;

struct Globals {
    std::string format = "human";
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    bool machine() const { return format == "machine"; }
};

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

EventSet parse_event_list(const std::string& text)
{
    EventSet out;
    std::istringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        item = trim(item);
        if (!is_identifier(item))
            throw ConfigError("invalid event name '" + item + "'");
        out.insert(item);
    }
    if (out.empty())
        throw ConfigError("event list is empty");
    return out;
}

exec::Injection parse_injection(const std::string& text)
{
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw ConfigError("injection must look like AFTER:EVENT, got '" + text + "'");
    exec::Injection inj;
    try {
        std::size_t used = 0;
        inj.after_step = std::stoull(text.substr(0, colon), &used);
        if (used != colon)
            throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw ConfigError("injection step must be a number in '" + text + "'");
    }
    inj.event = text.substr(colon + 1);
    return inj;
}

BehavioralModel load(const std::string& file, const std::vector<std::string>& monitors = {})
{
    BehavioralModel model = dsl::load_model(file);
    for (const auto& m : monitors) {
        const auto extra = dsl::load_model(m, dsl::ModelOptions{true});
        for (const auto& sc : extra.scenarios())
            model.add_scenario(sc);
    }
    return model;
}

exec::SpawnConfig spawn_config(bool spawn, std::size_t bound)
{
    exec::SpawnConfig s;
    s.enabled = spawn || bound != 0;
    if (bound != 0)
        s.bound = bound;
    return s;
}

int report_verdict(const verify::Verdict& v, const Globals& g, std::ostream& out)
{
    const std::string property = v.property == verify::Property::deadlock ? "deadlock"
                                 : v.property == verify::Property::safety ? "safety"
                                                                          : "starvation(" + v.starved + ")";
    if (g.machine()) {
        out << "verdict\t" << property << '\t' << verify::to_string(v.result) << '\t' << v.explored << '\n';
        out << verify::export_counterexample(v);
    } else {
        out << property << ": " << verify::to_string(v.result) << " (" << v.explored << " states explored)\n";
        if (v.counterexample) {
            out << "counterexample:\n";
            std::istringstream lines(verify::export_counterexample(v));
            for (std::string line; std::getline(lines, line);)
                out << "  " << line << '\n';
        }
    }
    switch (v.result) {
    case verify::Result::holds:
        return ok;
    case verify::Result::violated:
        return violated;
    case verify::Result::bound_reached:
        return bound;
    }
    return ok;
}

void print_diagnostics(const std::vector<dsl::Diagnostic>& ds, const std::string& file, std::ostream& os)
{
    for (const auto& d : ds)
        os << dsl::format(d, file) << '\n';
}

// ---------------------------------------------------------------------------

int cmd_parse(const std::string& file, bool infer, std::ostream& out, std::ostream& err)
{
    auto res = dsl::parse_model(dsl::read_file(file), dsl::ModelOptions{infer});
    print_diagnostics(res.diagnostics, file, res.ok() ? out : err);
    if (!res.ok())
        return usage;
    out << file << ": ok, " << res.value->size() << " scenario" << (res.value->size() == 1 ? "" : "s") << ", "
        << res.value->alphabet().size() << " events\n";
    return ok;
}

int cmd_fmt(const std::string& file, bool in_place, bool check, std::ostream& out, std::ostream& err)
{
    const std::string text = dsl::read_file(file);
    auto res = dsl::parse_model(text);
    if (!res.ok()) {
        print_diagnostics(res.diagnostics, file, err);
        return usage;
    }
    const std::string printed = dsl::print_model(*res.value);
    if (check) {
        if (printed == text)
            return ok;
        err << file << ": not in canonical form\n";
        return violated;
    }
    if (in_place)
        dsl::write_file(file, printed);
    else
        out << printed;
    return ok;
}

int cmd_step(const BehavioralModel& model, const exec::RunConfig& config, std::ostream& out, std::istream& in)
{
    exec::Session session(model, config);
    auto show = [&] {
        out << "state: " << describe(model, session.state()) << '\n';
        out << "enabled: {" << join(session.enabled(), ", ") << "}\n";
    };
    show();
    for (std::string line; !session.finished() && std::getline(in, line);) {
        line = trim(line);
        if (line.empty())
            continue;
        if (line == "quit" || line == "exit") {
            session.stop();
            break;
        }
        if (line == "log") {
            out << exec::format_human(session.log());
            continue;
        }
        if (line.rfind("why", 0) == 0) {
            std::istringstream words(line);
            std::string w, event;
            words >> w;
            words >> event;
            if (event == "not")
                words >> event;
            out << (event.empty() ? "usage: why not EVENT" : session.why_not(event)) << '\n';
            continue;
        }
        if (line == "auto") {
            const auto e = session.auto_step();
            if (e)
                out << "triggered " << *e << '\n';
        } else {
            const auto r = session.choose(line);
            if (r.accepted)
                out << "triggered " << line << '\n';
            else
                out << "rejected: " << r.explanation << '\n';
        }
        show();
    }
    if (!session.finished())
        session.stop();
    out << "terminal: " << exec::to_string(session.log().terminal) << " after " << session.log().entries.size()
        << " steps\n";
    return ok;
}

std::unique_ptr<llm::ChatClient> make_client(const std::string& replay)
{
    if (!replay.empty())
        return std::make_unique<llm::ReplayClient>(llm::load_transcript(replay));
    return std::make_unique<llm::LiveClient>(llm::LiveConfig::from_env());
}

std::string relative_to(const fs::path& p, const fs::path& root)
{
    const auto rel = fs::relative(p, root);
    return rel.empty() ? p.generic_string() : rel.generic_string();
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in)
{
    CLI::App app{"Scenario-based modeling toolkit: parse, run, verify and grow models.", "sbm"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"human", "machine"}));
    app.add_option("--seed", g.seed, "Seed for random strategies");
    app.add_option("--jobs", g.jobs, "Worker threads for state exploration")->check(CLI::PositiveNumber);

    std::string file;
    std::function<int()> action;

    // parse
    bool infer = false;
    auto* parse = app.add_subcommand("parse", "Parse a model file and report diagnostics");
    parse->add_option("file", file, "Model file")->required();
    parse->add_flag("--infer-events", infer, "Accept events missing from the header");
    parse->callback([&] { action = [&] { return cmd_parse(file, infer, out, err); }; });

    // fmt
    bool in_place = false, fmt_check = false;
    auto* fmt = app.add_subcommand("fmt", "Print a model in canonical form");
    fmt->add_option("file", file, "Model file")->required();
    fmt->add_flag("--in-place,-i", in_place, "Rewrite the file");
    fmt->add_flag("--check", fmt_check, "Exit 1 when the file is not canonical");
    fmt->callback([&] { action = [&] { return cmd_fmt(file, in_place, fmt_check, out, err); }; });

    // run / step share execution options
    std::string strategy = "lexicographic";
    std::size_t max_steps = 1000;
    std::vector<std::string> injections;
    bool spawn = false;
    std::size_t spawn_bound = 0;
    auto exec_options = [&](CLI::App* sub) {
        sub->add_option("file", file, "Model file")->required();
        sub->add_option("--strategy,-s", strategy, "lexicographic | random[:SEED] | roundrobin | priority:A,B | "
                                                   "lookahead:D[:FALLBACK]");
        sub->add_option("--max-steps", max_steps, "Stop after this many events");
        sub->add_option("--inject", injections, "AFTER:EVENT, repeatable");
        sub->add_flag("--spawn", spawn, "Spawn a fresh copy when a template's first wait-for event fires");
        sub->add_option("--spawn-bound", spawn_bound, "Live copies per template (implies --spawn)");
    };
    auto run_config = [&](const BehavioralModel& model) {
        exec::RunConfig c;
        c.strategy = exec::parse_strategy(strategy, g.seed);
        c.max_steps = max_steps;
        c.spawn = spawn_config(spawn, spawn_bound);
        for (const auto& i : injections)
            c.injections.push_back(parse_injection(i));
        exec::validate(c, model);
        return c;
    };

    auto* run = app.add_subcommand("run", "Play out a model and print the event log");
    exec_options(run);
    run->callback([&] {
        action = [&] {
            const auto model = load(file);
            const auto log = exec::run(model, run_config(model));
            out << (g.machine() ? exec::format_machine(log) : exec::format_human(log));
            return ok;
        };
    });

    auto* step = app.add_subcommand("step", "Interactive play-out: type an event, 'auto', 'why not E', 'log' or 'quit'");
    exec_options(step);
    step->callback([&] {
        action = [&] {
            const auto model = load(file);
            return cmd_step(model, run_config(model), out, in);
        };
    });

    // check
    bool deadlock = false, safety = false, ignore_quiescent = false;
    std::string starve, under, export_file;
    std::size_t node_bound = 1'000'000;
    std::vector<std::string> monitors;
    auto* check = app.add_subcommand("check", "Verify deadlock freedom, monitor safety or starvation");
    check->add_option("file", file, "Model file")->required();
    auto* o_dead = check->add_flag("--deadlock", deadlock);
    auto* o_safe = check->add_flag("--safety", safety);
    auto* o_starve = check->add_option("--starve", starve, "Event that must keep occurring");
    check->add_option("--under", under, "Follow this strategy instead of searching all paths")->needs(o_starve);
    o_dead->excludes(o_safe)->excludes(o_starve);
    o_safe->excludes(o_starve);
    check->add_option("--node-bound", node_bound, "Give up after this many composite states")->check(CLI::PositiveNumber);
    check->add_flag("--ignore-quiescent", ignore_quiescent, "Do not report states where nothing is requested");
    check->add_option("--monitor", monitors, "Extra monitor file, repeatable");
    check->add_option("--spawn-bound", spawn_bound, "Verify with spawning, at most N copies per template");
    check->add_option("--export", export_file, "Write the counterexample to a file");
    check->callback([&] {
        action = [&]() -> int {
            if (!deadlock && !safety && starve.empty())
                throw CLI::ValidationError("check", "choose one of --deadlock, --safety, --starve");
            const auto model = load(file, monitors);
            verify::ExploreOptions eo;
            eo.node_bound = node_bound;
            eo.jobs = g.jobs;
            eo.spawn = spawn_config(false, spawn_bound);
            verify::Verdict v;
            if (deadlock)
                v = verify::check_deadlock(model, eo,
                                           ignore_quiescent ? verify::DeadlockKind::blocked_requests
                                                            : verify::DeadlockKind::any);
            else if (safety)
                v = verify::check_safety(model, eo);
            else {
                verify::StarvationMode mode;
                if (!under.empty())
                    mode.under = exec::parse_strategy(under, g.seed);
                v = verify::check_starvation(model, starve, mode, eo);
            }
            if (!export_file.empty())
                dsl::write_file(export_file, verify::export_counterexample(v));
            return report_verdict(v, g, out);
        };
    });

    // paths
    verify::PathQuery query;
    std::string end_at, visits, end_event;
    bool count_only = false;
    auto* paths = app.add_subcommand("paths", "Enumerate event sequences up to a length bound");
    paths->add_option("file", file, "Model file")->required();
    paths->add_option("--max-len", query.max_length, "Longest path to list")->required()->check(CLI::PositiveNumber);
    paths->add_option("--end-at", end_at, "Scenario=state the path must end in");
    paths->add_option("--visits", visits, "Scenario=state the path must pass through");
    paths->add_option("--contains", query.must_contain, "Event the path must contain, repeatable");
    paths->add_option("--end-event", end_event, "Event the path must end with");
    paths->add_flag("--acyclic", query.acyclic, "Never revisit a composite state");
    paths->add_option("--cap", query.cap, "Fail when more paths qualify");
    paths->add_flag("--count", count_only, "Print only the number of paths");
    paths->callback([&] {
        action = [&] {
            const auto model = load(file);
            if (!end_at.empty())
                query.must_end_at = verify::parse_state_at(end_at);
            if (!visits.empty())
                query.must_visit = verify::parse_state_at(visits);
            if (!end_event.empty())
                query.must_end_with = end_event;
            const auto found = verify::enumerate_paths(model, query);
            if (!count_only)
                for (const auto& p : found)
                    out << (p.empty() ? "(empty)" : join(p, ",")) << '\n';
            if (count_only || !g.machine())
                out << found.size() << (count_only ? "" : found.size() == 1 ? " path" : " paths") << '\n';
            return ok;
        };
    });

    // lint
    bool strict = false;
    verify::LintOptions lint_options;
    auto* lint = app.add_subcommand("lint", "Report under-specification findings");
    lint->add_option("file", file, "Model file")->required();
    lint->add_option("--node-bound", lint_options.node_bound, "State bound for reachability findings")->check(CLI::PositiveNumber);
    lint->add_flag("--strict", strict, "Exit 1 when there is any finding");
    lint->callback([&] {
        action = [&] {
            const auto model = load(file);
            auto res = dsl::parse_model(dsl::read_file(file));
            auto findings = res.diagnostics;
            const auto more = verify::lint(model, lint_options);
            findings.insert(findings.end(), more.begin(), more.end());
            print_diagnostics(findings, file, out);
            if (!g.machine())
                out << findings.size() << (findings.size() == 1 ? " finding" : " findings") << '\n';
            return strict && !findings.empty() ? violated : ok;
        };
    });

    // llm
    auto* llm_cmd = app.add_subcommand("llm", "Generate and validate scenarios with a chat model");
    llm_cmd->require_subcommand(1);
    std::string project_dir = ".", prompt_file, replay_file, name, response_file, events_text;

    auto* preamble = llm_cmd->add_subcommand("preamble", "Print the prompt preamble");
    preamble->add_option("--events", events_text, "Comma-separated event set to append");
    preamble->callback([&] {
        action = [&] {
            llm::PreambleOptions po;
            if (!events_text.empty())
                po.events = parse_event_list(events_text);
            out << llm::build_preamble(po) << '\n';
            return ok;
        };
    });

    auto* gen = llm_cmd->add_subcommand("gen", "Send a prompt, stage the scenario in the reply");
    gen->add_option("--project,-p", project_dir, "Project directory (default: current)");
    gen->add_option("--prompt", prompt_file, "Prompt file")->required();
    gen->add_option("--replay", replay_file, "Answer from a recorded transcript instead of the network");
    gen->add_option("--name", name, "Scenario name (overrides the reply)");
    gen->callback([&] {
        action = [&] {
            const llm::ProjectStore project(project_dir);
            const fs::path prompt_path = fs::absolute(prompt_file);
            const std::string prompt = dsl::read_file(prompt_path.string());
            llm::Transcript session;
            if (fs::exists(project.session_path()))
                session = llm::load_transcript(project.session_path());
            else
                session.push_back(llm::Turn{llm::Role::system,
                                            llm::build_preamble({project.model().alphabet(), {}})});
            auto client = make_client(replay_file);
            const auto answer = llm::ask(*client, session, prompt);
            llm::save_transcript(project.session_path(), answer.transcript);

            fs::path stored = prompt_path;
            const auto rel = relative_to(prompt_path, project.root());
            if (rel.rfind("..", 0) == 0 || fs::path(rel).is_absolute()) {
                stored = project.prompts_dir() / prompt_path.filename();
                fs::create_directories(project.prompts_dir());
                dsl::write_file(stored.string(), prompt);
            }
            llm::Provenance prov{relative_to(stored, project.root()),
                                 relative_to(project.session_path(), project.root()),
                                 answer.transcript.size() - 1};
            const auto res = llm::ingest_response(project, answer.response, name, prov);
            print_diagnostics(res.diagnostics, "reply", out);
            out << "staged " << res.object.name() << ":\n" << dsl::print_scenario(res.object);
            return ok;
        };
    });

    auto* ingest = llm_cmd->add_subcommand("ingest", "Stage the scenario found in a saved reply");
    ingest->add_option("--project,-p", project_dir, "Project directory (default: current)");
    ingest->add_option("--response", response_file, "File holding the chat reply")->required();
    ingest->add_option("--name", name, "Scenario name (overrides the reply)");
    ingest->add_option("--prompt", prompt_file, "Prompt that produced the reply, for the ledger");
    ingest->callback([&] {
        action = [&] {
            const llm::ProjectStore project(project_dir);
            llm::Provenance prov{prompt_file, response_file, 0};
            const auto res = llm::ingest_response(project, dsl::read_file(response_file), name, prov);
            print_diagnostics(res.diagnostics, response_file, out);
            out << "staged " << res.object.name() << ":\n" << dsl::print_scenario(res.object);
            return ok;
        };
    });

    auto* validate = llm_cmd->add_subcommand("validate", "Run parse, lint, unitTrace and modelCheck on a staged scenario");
    validate->add_option("--project,-p", project_dir, "Project directory (default: current)");
    validate->add_option("name", name, "Staged scenario")->required();
    validate->callback([&] {
        action = [&] {
            const llm::ProjectStore project(project_dir);
            const auto report = llm::validate(project, name);
            out << (g.machine() ? report.to_json() : llm::format_report(report));
            return report.passed() ? ok : violated;
        };
    });

    auto* merge = llm_cmd->add_subcommand("merge", "Move a validated scenario into the model");
    merge->add_option("--project,-p", project_dir, "Project directory (default: current)");
    merge->add_option("name", name, "Staged scenario")->required();
    merge->callback([&] {
        action = [&] {
            llm::merge(llm::ProjectStore(project_dir), name);
            out << "merged " << name << '\n';
            return ok;
        };
    });

    auto* guard = llm_cmd->add_subcommand("guard", "Detect hand edits to generated scenarios");
    guard->add_option("--project,-p", project_dir, "Project directory (default: current)");
    guard->callback([&] {
        action = [&] {
            const auto flags = llm::regenerate_guard(llm::ProjectStore(project_dir));
            print_diagnostics(flags, "", out);
            if (!g.machine() && flags.empty())
                out << "all generated scenarios match the ledger\n";
            return flags.empty() ? ok : violated;
        };
    });

    std::string log_file;
    auto* check_log = llm_cmd->add_subcommand("check-log", "Compare a chat model's play-out log with the executor");
    exec_options(check_log);
    check_log->add_option("log", log_file, "Play-out log written by the chat model")->required();
    check_log->callback([&] {
        action = [&] {
            const auto model = load(file);
            const auto c = llm::check_playout_log(model, run_config(model), dsl::read_file(log_file));
            out << (c.passed ? "ok: " : "mismatch: ") << c.detail << '\n';
            return c.passed ? ok : violated;
        };
    });

    // project
    auto* project_cmd = app.add_subcommand("project", "Create and edit project directories");
    project_cmd->require_subcommand(1);
    auto* init = project_cmd->add_subcommand("init", "Create an empty project");
    init->add_option("dir", project_dir, "Directory to create")->required();
    init->add_option("--events", events_text, "Comma-separated event alphabet")->required();
    init->callback([&] {
        action = [&] {
            llm::ProjectStore::init(project_dir, parse_event_list(events_text));
            out << "created project " << project_dir << '\n';
            return ok;
        };
    });
    auto* manual = project_cmd->add_subcommand("add-manual", "Add a hand-written scenario to the model");
    manual->add_option("dir", project_dir, "Project directory")->required();
    manual->add_option("scenario", file, "File holding one scenario block")->required();
    manual->callback([&] {
        action = [&] {
            const llm::ProjectStore project(project_dir);
            auto parsed = dsl::parse_scenario(dsl::read_file(file));
            if (!parsed.ok()) {
                print_diagnostics(parsed.diagnostics, file, err);
                return static_cast<int>(usage);
            }
            project.add_manual(*parsed.value);
            out << "added " << parsed.value->name() << '\n';
            return static_cast<int>(ok);
        };
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        return action ? action() : static_cast<int>(usage);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const dsl::ParseError& e) {
        err << "error: " << e.what() << '\n';
        print_diagnostics(e.diagnostics(), file, err);
        return usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    }
}

}  // namespace sbm::cli
