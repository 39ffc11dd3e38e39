#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sbm/core.hpp"

namespace sbm::dsl {

/// 1-based position of a diagnostic inside the source text. A zero line means
/// the diagnostic has no source location (engine-side findings).
struct SourceSpan {
    std::size_t line = 0;
    std::size_t column = 0;
    std::size_t length = 0;

    bool operator==(const SourceSpan&) const = default;
};

enum class Severity { error, warning };

struct Diagnostic {
    Severity severity = Severity::error;
    std::string code;
    std::string message;
    SourceSpan span;
};

bool has_errors(const std::vector<Diagnostic>& diagnostics);

/// "file:line:col: error E001: message" (file part omitted when empty).
std::string format(const Diagnostic& diagnostic, const std::string& file = {});

template <typename T>
struct ParseResult {
    std::optional<T> value;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return value.has_value(); }
};

/// Parses the state lines of a single scenario. An optional leading
/// "scenario Name:" header overrides `name`. The alphabet of the result is the
/// set of events it mentions.
ParseResult<ScenarioObject> parse_scenario(const std::string& text, const std::string& name = {});

struct ModelOptions {
    /// Accept files without an events header and events missing from it.
    bool infer_alphabet = false;
};

ParseResult<BehavioralModel> parse_model(const std::string& text, ModelOptions options = {});

/// Canonical state lines for one scenario (no header), newline terminated.
std::string print_scenario(const ScenarioObject& object);

/// Whole model file: events header followed by one block per scenario.
std::string print_model(const BehavioralModel& model);

struct ExtractedScenario {
    std::optional<ScenarioObject> object;
    SourceSpan span;
    std::vector<Diagnostic> diagnostics;
};

/// Finds maximal runs of state lines inside free-form text (chat replies),
/// stripping bullets and numbering, and parses each run on its own. Runs that
/// fail to parse are returned with their diagnostics and no object.
std::vector<ExtractedScenario> extract_scenarios(const std::string& free_text);

BehavioralModel load_model(const std::string& path, ModelOptions options = {});
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Raised by load_model when the file does not parse.
class ParseError : public Error {
public:
    ParseError(std::string what, std::vector<Diagnostic> diagnostics)
        : Error(std::move(what)), diagnostics_(std::move(diagnostics))
    {
    }
    const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

private:
    std::vector<Diagnostic> diagnostics_;
};

}  // namespace sbm::dsl
