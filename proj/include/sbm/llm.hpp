#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sbm/core.hpp"
#include "sbm/dsl.hpp"
#include "sbm/executor.hpp"
#include "sbm/verifier.hpp"

namespace sbm::llm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Prompts

/// Version tag of the embedded preamble template.
std::string preamble_version();
/// Embedded preamble template text.
std::string preamble_template();

struct PreambleOptions {
    std::optional<EventSet> events;
    /// Extra paragraphs appended after the event set.
    std::vector<std::string> reminders;
};

std::string build_preamble(const PreambleOptions& options = {});

/// "Consider the event set {A, B}."
std::string event_set_sentence(const EventSet& events);

/// Replaces {{KEY}} placeholders.
std::string fill_template(std::string text, const std::map<std::string, std::string>& values);

// ---------------------------------------------------------------------------
// Transcripts and clients

enum class Role { system, user, assistant };
std::string to_string(Role role);
Role parse_role(const std::string& text);

struct Turn {
    Role role = Role::user;
    std::string content;

    bool operator==(const Turn&) const = default;
};

using Transcript = std::vector<Turn>;

/// Throws Error unless roles alternate user/assistant after an optional
/// leading system turn.
void validate_transcript(const Transcript& transcript);

Transcript parse_transcript(const std::string& json_text);
std::string serialize_transcript(const Transcript& transcript);
Transcript load_transcript(const fs::path& path);
void save_transcript(const fs::path& path, const Transcript& transcript);

/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(const std::string& text);

class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// Reply to the last (user) turn of `history`.
    virtual std::string complete(const Transcript& history) = 0;
};

class ReplayMismatch : public Error {
public:
    ReplayMismatch(std::size_t turn, const std::string& what) : Error(what), turn_(turn) {}
    std::size_t turn() const { return turn_; }

private:
    std::size_t turn_;
};

/// Answers from a recorded transcript. The answer depends only on the
/// recorded file and the history length; a leading system turn in the
/// recording may be absent from the history.
class ReplayClient : public ChatClient {
public:
    explicit ReplayClient(Transcript recorded);
    std::string complete(const Transcript& history) override;

    const Transcript& recorded() const { return recorded_; }

private:
    Transcript recorded_;
};

struct LiveConfig {
    std::string base_url;
    std::string model;
    std::string api_key;

    /// Reads SBM_LLM_URL, SBM_LLM_MODEL and SBM_LLM_KEY.
    static LiveConfig from_env();
};

class TransportError : public Error {
public:
    TransportError(int status, bool retriable, const std::string& what)
        : Error(what), status_(status), retriable_(retriable)
    {
    }
    int status() const { return status_; }
    bool retriable() const { return retriable_; }

private:
    int status_;
    bool retriable_;
};

std::string build_chat_request(const std::string& model, const Transcript& history);
/// Content of the first returned message.
std::string parse_chat_response(const std::string& body);

class LiveClient : public ChatClient {
public:
    explicit LiveClient(LiveConfig config);
    std::string complete(const Transcript& history) override;

private:
    LiveConfig config_;
};

struct AskResult {
    std::string response;
    Transcript transcript;
};

AskResult ask(ChatClient& client, const Transcript& so_far, const std::string& prompt);

// ---------------------------------------------------------------------------
// Expected traces

/// One event per line; '#' starts a comment; directives:
///   @strategy S, @max-steps N, @seed N, @inject AFTER EVENT,
///   @terminal deadlock|max-steps
struct TraceSpec {
    EventTrace events;
    exec::RunConfig config;
    std::optional<exec::Terminal> terminal;
};

TraceSpec parse_trace_spec(const std::string& text);

struct TraceCheck {
    bool passed = false;
    std::string detail;
    EventTrace actual;
};

TraceCheck check_trace(const BehavioralModel& model, const TraceSpec& spec);

/// Compares a play-out log written by a chat model with the executor's run.
/// Each non-empty line contributes its last token naming an alphabet event.
TraceCheck check_playout_log(const BehavioralModel& model, const exec::RunConfig& config,
                             const std::string& log_text);

// ---------------------------------------------------------------------------
// Project store

struct LedgerEntry {
    std::string prompt;
    std::string transcript;
    std::size_t turn = 0;
    std::string hash;
    std::string status = "staged";  // staged | merged

    bool operator==(const LedgerEntry&) const = default;
};

using Ledger = std::map<std::string, LedgerEntry>;

struct Provenance {
    std::string prompt;
    std::string transcript;
    std::size_t turn = 0;
};

/// SHA-256 (hex) of the canonical printed form.
std::string content_hash(const ScenarioObject& object);

/// "scenario Name:" block with indented canonical state lines.
std::string scenario_block(const ScenarioObject& object);

class ProjectStore {
public:
    /// Opens an existing project; throws ConfigError when project.json is missing.
    explicit ProjectStore(fs::path root);

    static ProjectStore init(const fs::path& root, const EventSet& alphabet);

    const fs::path& root() const { return root_; }
    fs::path model_path() const;
    fs::path prompts_dir() const { return root_ / "prompts"; }
    fs::path transcripts_dir() const { return root_ / "transcripts"; }
    fs::path traces_dir() const { return root_ / "traces"; }
    fs::path monitors_dir() const { return root_ / "monitors"; }
    fs::path staged_dir() const { return root_ / "staged"; }
    fs::path reports_dir() const { return root_ / "reports"; }
    fs::path ledger_path() const { return root_ / "ledger.json"; }
    fs::path session_path() const { return transcripts_dir() / "session.json"; }

    std::size_t node_bound() const { return node_bound_; }
    std::uint64_t seed() const { return seed_; }

    BehavioralModel model() const;
    void save_model(const BehavioralModel& model) const;
    /// Scenarios of every monitors/*.sbm file, in file name order.
    std::vector<ScenarioObject> monitors() const;
    std::vector<fs::path> trace_files(const std::string& scenario) const;

    Ledger ledger() const;
    void save_ledger(const Ledger& ledger) const;

    std::vector<std::string> staged_names() const;
    std::optional<std::string> staged_text(const std::string& name) const;
    void stage(const std::string& name, const std::string& text) const;

    /// Adds a hand-written scenario directly; it is never tracked by the ledger.
    void add_manual(const ScenarioObject& object) const;

private:
    fs::path root_;
    std::string model_file_ = "model.sbm";
    std::size_t node_bound_ = 1'000'000;
    std::uint64_t seed_ = 0;
};

struct IngestResult {
    ScenarioObject object;
    std::vector<dsl::Diagnostic> diagnostics;
};

/// Extracts exactly one scenario block from a reply and stages it with a
/// ledger entry. `target_name` overrides any name found in the reply.
IngestResult ingest_response(const ProjectStore& project, const std::string& response,
                             const std::string& target_name, const Provenance& provenance);

enum class Stage { parse, lint, unit_trace, model_check };
enum class StageStatus { passed, failed, skipped };
std::string to_string(Stage stage);
std::string to_string(StageStatus status);

struct StageReport {
    Stage stage = Stage::parse;
    StageStatus status = StageStatus::skipped;
    std::vector<dsl::Diagnostic> diagnostics;
    std::vector<std::string> details;
    /// Exported counterexample when a check fails.
    std::string counterexample;
};

struct ValidationReport {
    std::string scenario;
    std::string hash;
    std::vector<StageReport> stages;

    bool passed() const;
    std::optional<Stage> failed_stage() const;
    const StageReport& stage(Stage stage) const;
    std::string to_json() const;
    static ValidationReport from_json(const std::string& text);
};

std::string format_report(const ValidationReport& report);

/// Runs parse, lint, unitTrace and modelCheck on a staged scenario and
/// persists the report under reports/.
ValidationReport validate(const ProjectStore& project, const std::string& name);

/// Appends a staged scenario to the model. Requires a passing report for the
/// current staged text.
void merge(const ProjectStore& project, const std::string& name);

/// G001: merged generated scenario whose text no longer matches the ledger.
/// G002: merged generated scenario missing from the model.
std::vector<dsl::Diagnostic> regenerate_guard(const ProjectStore& project);

}  // namespace sbm::llm
