#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "sbm/llm.hpp"

namespace sbm::llm {

using nlohmann::json;

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::size_t parse_count(const std::string& text, const std::string& what)
{
    try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used == text.size())
            return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid " + what + " '" + text + "'");
}

std::vector<std::string> tokens(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += c;
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

std::string first_difference(const EventTrace& expected, const EventTrace& actual)
{
    std::size_t i = 0;
    while (i < expected.size() && i < actual.size() && expected[i] == actual[i])
        ++i;
    std::ostringstream os;
    os << "step " << i + 1 << ": expected "
       << (i < expected.size() ? expected[i] : std::string("end of trace")) << ", got "
       << (i < actual.size() ? actual[i] : std::string("end of trace"));
    return os.str();
}

json diagnostics_json(const std::vector<dsl::Diagnostic>& ds)
{
    json arr = json::array();
    for (const auto& d : ds)
        arr.push_back({{"severity", d.severity == dsl::Severity::error ? "error" : "warning"},
                       {"code", d.code},
                       {"message", d.message},
                       {"line", d.span.line},
                       {"column", d.span.column}});
    return arr;
}

std::vector<dsl::Diagnostic> diagnostics_from(const json& arr)
{
    std::vector<dsl::Diagnostic> out;
    for (const auto& d : arr)
        out.push_back(dsl::Diagnostic{
            d.at("severity") == "error" ? dsl::Severity::error : dsl::Severity::warning,
            d.at("code"), d.at("message"),
            dsl::SourceSpan{d.at("line").get<std::size_t>(), d.at("column").get<std::size_t>(), 0}});
    return out;
}

void prefix_messages(std::vector<dsl::Diagnostic>& ds, const std::string& prefix)
{
    for (auto& d : ds)
        d.message = prefix + d.message;
}

}  // namespace

// ---------------------------------------------------------------------------
// Expected traces

TraceSpec parse_trace_spec(const std::string& text)
{
    TraceSpec spec;
    std::optional<std::size_t> max_steps;
    std::optional<std::string> strategy;
    std::uint64_t seed = 0;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw.substr(0, raw.find('#'));
        line = trim(line);
        if (line.empty())
            continue;
        std::istringstream words(line);
        std::string head;
        words >> head;
        std::vector<std::string> args;
        for (std::string w; words >> w;)
            args.push_back(w);
        auto need = [&](std::size_t n) {
            if (args.size() != n)
                throw ConfigError("trace line " + std::to_string(lineno) + ": " + head + " takes " +
                                  std::to_string(n) + " argument(s)");
        };
        if (head == "@strategy") {
            need(1);
            strategy = args[0];
        } else if (head == "@max-steps") {
            need(1);
            max_steps = parse_count(args[0], "max steps");
        } else if (head == "@seed") {
            need(1);
            seed = parse_count(args[0], "seed");
        } else if (head == "@inject") {
            need(2);
            spec.config.injections.push_back(exec::Injection{parse_count(args[0], "injection step"), args[1]});
        } else if (head == "@terminal") {
            need(1);
            if (args[0] == "deadlock")
                spec.terminal = exec::Terminal::deadlock;
            else if (args[0] == "max-steps")
                spec.terminal = exec::Terminal::max_steps;
            else
                throw ConfigError("trace line " + std::to_string(lineno) + ": unknown terminal '" + args[0] + "'");
        } else if (head[0] == '@') {
            throw ConfigError("trace line " + std::to_string(lineno) + ": unknown directive " + head);
        } else {
            if (!args.empty() || !is_identifier(head))
                throw ConfigError("trace line " + std::to_string(lineno) + ": expected one event name");
            spec.events.push_back(head);
        }
    }
    if (strategy)
        spec.config.strategy = exec::parse_strategy(*strategy, seed);
    spec.config.max_steps = max_steps.value_or(spec.events.size() + 1);
    return spec;
}

TraceCheck check_trace(const BehavioralModel& model, const TraceSpec& spec)
{
    exec::validate(spec.config, model);
    const exec::EventLog log = exec::run(model, spec.config);
    TraceCheck c;
    c.actual = log.events();
    if (c.actual != spec.events) {
        c.detail = first_difference(spec.events, c.actual);
        return c;
    }
    if (spec.terminal && *spec.terminal != log.terminal) {
        c.detail = "expected terminal " + exec::to_string(*spec.terminal) + ", got " + exec::to_string(log.terminal);
        return c;
    }
    c.passed = true;
    c.detail = "matched " + std::to_string(c.actual.size()) + " events";
    return c;
}

TraceCheck check_playout_log(const BehavioralModel& model, const exec::RunConfig& config,
                             const std::string& log_text)
{
    EventTrace claimed;
    std::istringstream in(log_text);
    for (std::string line; std::getline(in, line);) {
        const auto words = tokens(line);
        for (auto it = words.rbegin(); it != words.rend(); ++it)
            if (model.alphabet().count(*it)) {
                claimed.push_back(*it);
                break;
            }
    }
    exec::validate(config, model);
    TraceCheck c;
    c.actual = exec::run(model, config).events();
    c.passed = claimed == c.actual;
    c.detail = c.passed ? "log agrees with the executor (" + std::to_string(claimed.size()) + " events)"
                        : first_difference(c.actual, claimed);
    return c;
}

// ---------------------------------------------------------------------------
// Project store

std::string content_hash(const ScenarioObject& object)
{
    const std::string text = dsl::print_scenario(object);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return os.str();
}

std::string scenario_block(const ScenarioObject& object)
{
    std::ostringstream os;
    os << "scenario " << object.name() << ":\n";
    std::istringstream lines(dsl::print_scenario(object));
    for (std::string line; std::getline(lines, line);)
        os << "  " << line << '\n';
    return os.str();
}

ProjectStore::ProjectStore(fs::path root) : root_(std::move(root))
{
    const fs::path config = root_ / "project.json";
    if (!fs::exists(config))
        throw ConfigError("not a project directory (no project.json): " + root_.string());
    try {
        const json doc = json::parse(dsl::read_file(config.string()));
        model_file_ = doc.value("model", model_file_);
        node_bound_ = doc.value("node_bound", node_bound_);
        seed_ = doc.value("seed", seed_);
    } catch (const json::exception& e) {
        throw ConfigError("project.json: " + std::string(e.what()));
    }
}

ProjectStore ProjectStore::init(const fs::path& root, const EventSet& alphabet)
{
    if (fs::exists(root / "project.json"))
        throw ConfigError("project already exists: " + root.string());
    for (const char* sub : {"prompts", "transcripts", "traces", "monitors", "staged", "reports"})
        fs::create_directories(root / sub);
    const json config{{"model", "model.sbm"}, {"node_bound", 1'000'000}, {"seed", 0}};
    dsl::write_file((root / "project.json").string(), config.dump(2) + "\n");
    ProjectStore store(root);
    store.save_model(BehavioralModel(alphabet, {}));
    store.save_ledger({});
    return store;
}

fs::path ProjectStore::model_path() const { return root_ / model_file_; }

BehavioralModel ProjectStore::model() const { return dsl::load_model(model_path().string()); }

void ProjectStore::save_model(const BehavioralModel& model) const
{
    dsl::write_file(model_path().string(), dsl::print_model(model));
}

std::vector<ScenarioObject> ProjectStore::monitors() const
{
    std::vector<fs::path> files;
    if (fs::is_directory(monitors_dir()))
        for (const auto& entry : fs::directory_iterator(monitors_dir()))
            if (entry.path().extension() == ".sbm")
                files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<ScenarioObject> out;
    for (const auto& f : files) {
        const auto m = dsl::load_model(f.string(), dsl::ModelOptions{true});
        out.insert(out.end(), m.scenarios().begin(), m.scenarios().end());
    }
    return out;
}

std::vector<fs::path> ProjectStore::trace_files(const std::string& scenario) const
{
    std::vector<fs::path> files;
    const fs::path dir = traces_dir() / scenario;
    if (fs::is_directory(dir))
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.path().extension() == ".trace")
                files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

Ledger ProjectStore::ledger() const
{
    Ledger out;
    if (!fs::exists(ledger_path()))
        return out;
    try {
        const json doc = json::parse(dsl::read_file(ledger_path().string()));
        for (const auto& [name, e] : doc.items())
            out[name] = LedgerEntry{e.at("prompt"), e.at("transcript"), e.at("turn").get<std::size_t>(),
                                    e.at("hash"), e.at("status")};
    } catch (const json::exception& e) {
        throw ConfigError("ledger.json: " + std::string(e.what()));
    }
    return out;
}

void ProjectStore::save_ledger(const Ledger& ledger) const
{
    json doc = json::object();
    for (const auto& [name, e] : ledger)
        doc[name] = {{"prompt", e.prompt},
                     {"transcript", e.transcript},
                     {"turn", e.turn},
                     {"hash", e.hash},
                     {"status", e.status}};
    dsl::write_file(ledger_path().string(), doc.dump(2) + "\n");
}

std::vector<std::string> ProjectStore::staged_names() const
{
    std::vector<std::string> out;
    if (fs::is_directory(staged_dir()))
        for (const auto& entry : fs::directory_iterator(staged_dir()))
            if (entry.path().extension() == ".sbm")
                out.push_back(entry.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<std::string> ProjectStore::staged_text(const std::string& name) const
{
    const fs::path p = staged_dir() / (name + ".sbm");
    if (!fs::exists(p))
        return std::nullopt;
    return dsl::read_file(p.string());
}

void ProjectStore::stage(const std::string& name, const std::string& text) const
{
    fs::create_directories(staged_dir());
    dsl::write_file((staged_dir() / (name + ".sbm")).string(), text);
}

void ProjectStore::add_manual(const ScenarioObject& object) const
{
    if (ledger().count(object.name()))
        throw ConfigError("scenario " + object.name() + " is tracked as generated; merge it through validation");
    BehavioralModel m = model();
    m.add_scenario(object);
    save_model(m);
}

// ---------------------------------------------------------------------------
// Ingest

IngestResult ingest_response(const ProjectStore& project, const std::string& response,
                             const std::string& target_name, const Provenance& provenance)
{
    auto blocks = dsl::extract_scenarios(response);
    if (blocks.empty())
        throw Error("no scenario block found in the response");
    if (blocks.size() > 1)
        throw Error("response contains " + std::to_string(blocks.size()) +
                    " scenario blocks; ask for one scenario per reply or split it");
    auto& block = blocks.front();
    if (!block.object)
        throw dsl::ParseError("scenario block in the response does not parse", block.diagnostics);

    ScenarioObject object = *block.object;
    if (!target_name.empty())
        object.set_name(target_name);
    if (object.name().empty())
        throw ConfigError("the response does not name its scenario; pass a target name");
    if (!is_identifier(object.name()))
        throw ConfigError("invalid scenario name '" + object.name() + "'");

    const BehavioralModel model = project.model();
    if (model.index_of(object.name()))
        throw ConfigError("scenario " + object.name() + " already exists in the model");
    if (project.staged_text(object.name()))
        throw ConfigError("scenario " + object.name() + " is already staged");

    project.stage(object.name(), scenario_block(object));
    Ledger ledger = project.ledger();
    ledger[object.name()] =
        LedgerEntry{provenance.prompt, provenance.transcript, provenance.turn, content_hash(object), "staged"};
    project.save_ledger(ledger);
    return IngestResult{std::move(object), std::move(block.diagnostics)};
}

// ---------------------------------------------------------------------------
// Validation

std::string to_string(Stage stage)
{
    switch (stage) {
    case Stage::parse:
        return "parse";
    case Stage::lint:
        return "lint";
    case Stage::unit_trace:
        return "unitTrace";
    case Stage::model_check:
        return "modelCheck";
    }
    return "?";
}

std::string to_string(StageStatus status)
{
    switch (status) {
    case StageStatus::passed:
        return "passed";
    case StageStatus::failed:
        return "failed";
    case StageStatus::skipped:
        return "skipped";
    }
    return "?";
}

bool ValidationReport::passed() const
{
    return !stages.empty() && std::all_of(stages.begin(), stages.end(),
                                          [](const StageReport& s) { return s.status == StageStatus::passed; });
}

std::optional<Stage> ValidationReport::failed_stage() const
{
    for (const auto& s : stages)
        if (s.status == StageStatus::failed)
            return s.stage;
    return std::nullopt;
}

const StageReport& ValidationReport::stage(Stage which) const
{
    for (const auto& s : stages)
        if (s.stage == which)
            return s;
    throw Error("report has no " + to_string(which) + " stage");
}

std::string ValidationReport::to_json() const
{
    json doc{{"scenario", scenario}, {"hash", hash}, {"passed", passed()}, {"stages", json::array()}};
    for (const auto& s : stages)
        doc["stages"].push_back({{"stage", to_string(s.stage)},
                                 {"status", to_string(s.status)},
                                 {"diagnostics", diagnostics_json(s.diagnostics)},
                                 {"details", s.details},
                                 {"counterexample", s.counterexample}});
    return doc.dump(2) + "\n";
}

ValidationReport ValidationReport::from_json(const std::string& text)
{
    ValidationReport r;
    try {
        const json doc = json::parse(text);
        r.scenario = doc.at("scenario");
        r.hash = doc.at("hash");
        for (const auto& s : doc.at("stages")) {
            StageReport sr;
            const std::string stage = s.at("stage");
            for (Stage st : {Stage::parse, Stage::lint, Stage::unit_trace, Stage::model_check})
                if (to_string(st) == stage)
                    sr.stage = st;
            const std::string status = s.at("status");
            sr.status = status == "passed"   ? StageStatus::passed
                        : status == "failed" ? StageStatus::failed
                                             : StageStatus::skipped;
            sr.diagnostics = diagnostics_from(s.at("diagnostics"));
            sr.details = s.at("details").get<std::vector<std::string>>();
            sr.counterexample = s.at("counterexample");
            r.stages.push_back(std::move(sr));
        }
    } catch (const json::exception& e) {
        throw Error("malformed validation report: " + std::string(e.what()));
    }
    return r;
}

std::string format_report(const ValidationReport& r)
{
    std::ostringstream os;
    os << "validation of " << r.scenario << ": " << (r.passed() ? "PASSED" : "FAILED") << '\n';
    for (const auto& s : r.stages) {
        os << "  " << to_string(s.stage) << ": " << to_string(s.status) << '\n';
        for (const auto& d : s.diagnostics)
            os << "    " << dsl::format(d) << '\n';
        for (const auto& d : s.details)
            os << "    " << d << '\n';
        if (!s.counterexample.empty()) {
            std::istringstream lines(s.counterexample);
            for (std::string line; std::getline(lines, line);)
                os << "    | " << line << '\n';
        }
    }
    return os.str();
}

namespace {

StageReport skipped_stage(Stage s)
{
    StageReport r;
    r.stage = s;
    return r;
}

BehavioralModel with_scenarios(const BehavioralModel& base, const std::vector<ScenarioObject>& extra)
{
    BehavioralModel m = base;
    for (const auto& s : extra)
        m.add_scenario(s);
    return m;
}

StageReport run_parse(const std::string& text, const BehavioralModel& model, const std::string& name,
                      std::optional<ScenarioObject>& out)
{
    StageReport r;
    r.stage = Stage::parse;
    auto parsed = dsl::parse_scenario(text, name);
    r.diagnostics = parsed.diagnostics;
    if (parsed.ok()) {
        for (const auto& e : parsed.value->events_used())
            if (!model.alphabet().count(e))
                r.diagnostics.push_back(dsl::Diagnostic{dsl::Severity::error, "E010",
                                                        "event " + e + " is not in the project's event set", {}});
        if (parsed.value->name() != name)
            r.diagnostics.push_back(dsl::Diagnostic{dsl::Severity::error, "E012",
                                                    "staged file names scenario " + parsed.value->name() +
                                                        ", expected " + name,
                                                    {}});
        if (model.index_of(name))
            r.diagnostics.push_back(dsl::Diagnostic{dsl::Severity::error, "E012",
                                                    "scenario " + name + " already exists in the model", {}});
    }
    r.status = parsed.ok() && !dsl::has_errors(r.diagnostics) ? StageStatus::passed : StageStatus::failed;
    if (r.status == StageStatus::passed)
        out = parsed.value;
    return r;
}

StageReport run_lint(const ScenarioObject& staged, const BehavioralModel& model, const ProjectStore& project)
{
    StageReport r;
    r.stage = Stage::lint;
    try {
        verify::LintOptions lo;
        lo.node_bound = std::min<std::size_t>(project.node_bound(), lo.node_bound);
        auto alone = verify::lint(BehavioralModel(staged.events_used(), {staged}), lo);
        prefix_messages(alone, "alone: ");
        auto composed = verify::lint(with_scenarios(model, {staged}), lo);
        prefix_messages(composed, "composed: ");
        r.diagnostics = std::move(alone);
        r.diagnostics.insert(r.diagnostics.end(), composed.begin(), composed.end());
        r.status = dsl::has_errors(r.diagnostics) ? StageStatus::failed : StageStatus::passed;
    } catch (const Error& e) {
        r.details.push_back(e.what());
        r.status = StageStatus::failed;
    }
    return r;
}

StageReport run_unit_traces(const ScenarioObject& staged, const BehavioralModel& model,
                            const ProjectStore& project)
{
    StageReport r;
    r.stage = Stage::unit_trace;
    r.status = StageStatus::passed;
    const auto files = project.trace_files(staged.name());
    if (files.empty())
        r.details.push_back("no expected traces under traces/" + staged.name());
    const BehavioralModel composed = with_scenarios(model, {staged});
    for (const auto& f : files) {
        const std::string label = fs::relative(f, project.root()).generic_string();
        try {
            const TraceCheck c = check_trace(composed, parse_trace_spec(dsl::read_file(f.string())));
            r.details.push_back(label + ": " + (c.passed ? "ok, " : "FAILED, ") + c.detail);
            if (!c.passed)
                r.status = StageStatus::failed;
        } catch (const Error& e) {
            r.details.push_back(label + ": FAILED, " + e.what());
            r.status = StageStatus::failed;
        }
    }
    return r;
}

StageReport run_model_check(const ScenarioObject& staged, const BehavioralModel& model,
                            const ProjectStore& project)
{
    StageReport r;
    r.stage = Stage::model_check;
    try {
        std::vector<ScenarioObject> extra{staged};
        const auto monitors = project.monitors();
        extra.insert(extra.end(), monitors.begin(), monitors.end());
        const BehavioralModel full = with_scenarios(model, extra);
        verify::ExploreOptions eo;
        eo.node_bound = project.node_bound();

        std::vector<verify::Verdict> verdicts;
        if (full.has_violation_states())
            verdicts.push_back(verify::check_safety(full, eo));
        verdicts.push_back(verify::check_deadlock(full, eo, verify::DeadlockKind::blocked_requests));

        r.status = StageStatus::passed;
        for (const auto& v : verdicts) {
            const std::string what = v.property == verify::Property::safety ? "safety" : "deadlock";
            r.details.push_back(what + ": " + verify::to_string(v.result) + " (" + std::to_string(v.explored) +
                                " states)");
            if (v.result != verify::Result::holds) {
                r.status = StageStatus::failed;
                if (r.counterexample.empty() && v.counterexample)
                    r.counterexample = verify::export_counterexample(v);
            }
        }
    } catch (const Error& e) {
        r.details.push_back(e.what());
        r.status = StageStatus::failed;
    }
    return r;
}

}  // namespace

ValidationReport validate(const ProjectStore& project, const std::string& name)
{
    const auto text = project.staged_text(name);
    if (!text)
        throw ConfigError("no staged scenario named " + name);
    const BehavioralModel model = project.model();

    ValidationReport report;
    report.scenario = name;
    std::optional<ScenarioObject> staged;
    report.stages.push_back(run_parse(*text, model, name, staged));
    if (staged) {
        report.hash = content_hash(*staged);
        using Runner = StageReport (*)(const ScenarioObject&, const BehavioralModel&, const ProjectStore&);
        for (Runner run : {Runner(run_lint), Runner(run_unit_traces), Runner(run_model_check)}) {
            if (report.stages.back().status != StageStatus::passed)
                break;
            report.stages.push_back(run(*staged, model, project));
        }
    }
    for (Stage s : {Stage::parse, Stage::lint, Stage::unit_trace, Stage::model_check})
        if (std::none_of(report.stages.begin(), report.stages.end(),
                         [s](const StageReport& r) { return r.stage == s; }))
            report.stages.push_back(skipped_stage(s));

    fs::create_directories(project.reports_dir());
    dsl::write_file((project.reports_dir() / (name + ".json")).string(), report.to_json());
    return report;
}

void merge(const ProjectStore& project, const std::string& name)
{
    const auto text = project.staged_text(name);
    if (!text)
        throw ConfigError("no staged scenario named " + name);
    const fs::path report_path = project.reports_dir() / (name + ".json");
    if (!fs::exists(report_path))
        throw ConfigError(name + " has not been validated");
    const ValidationReport report = ValidationReport::from_json(dsl::read_file(report_path.string()));
    if (!report.passed())
        throw ConfigError(name + " did not pass validation; it stays staged");
    auto parsed = dsl::parse_scenario(*text, name);
    if (!parsed.ok() || content_hash(*parsed.value) != report.hash)
        throw ConfigError(name + " changed since it was validated; validate it again");

    BehavioralModel m = project.model();
    m.add_scenario(*parsed.value);
    project.save_model(m);

    Ledger ledger = project.ledger();
    auto& entry = ledger[name];
    entry.hash = report.hash;
    entry.status = "merged";
    project.save_ledger(ledger);
    fs::remove(project.staged_dir() / (name + ".sbm"));
}

std::vector<dsl::Diagnostic> regenerate_guard(const ProjectStore& project)
{
    std::vector<dsl::Diagnostic> out;
    const BehavioralModel model = project.model();
    for (const auto& [name, entry] : project.ledger()) {
        if (entry.status != "merged")
            continue;
        const auto idx = model.index_of(name);
        if (!idx) {
            out.push_back(dsl::Diagnostic{dsl::Severity::error, "G002",
                                          "generated scenario " + name + " is missing from the model; regenerate it from " +
                                              entry.prompt,
                                          {}});
            continue;
        }
        if (content_hash(model.scenario(*idx)) != entry.hash)
            out.push_back(dsl::Diagnostic{dsl::Severity::error, "G001",
                                          "generated scenario " + name + " was edited by hand; revise " + entry.prompt +
                                              " and regenerate instead",
                                          {}});
    }
    return out;
}

}  // namespace sbm::llm
