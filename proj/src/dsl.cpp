#include "sbm/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace sbm::dsl {

bool has_errors(const std::vector<Diagnostic>& diagnostics)
{
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [](const Diagnostic& d) { return d.severity == Severity::error; });
}

std::string format(const Diagnostic& d, const std::string& file)
{
    std::ostringstream os;
    if (!file.empty())
        os << file << ':';
    if (d.span.line)
        os << d.span.line << ':' << d.span.column << ": ";
    else if (!file.empty())
        os << ' ';
    os << (d.severity == Severity::error ? "error " : "warning ") << d.code << ": " << d.message;
    return os.str();
}

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { ident, colon, comma, period, newline, end, bad };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    SourceSpan span;
};

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<Token> lex(const std::string& text)
{
    std::vector<Token> out;
    std::size_t line = 1, col = 1;
    std::size_t i = 0;
    bool line_start = true;
    auto push = [&](Tok k, std::string t, std::size_t len) {
        out.push_back(Token{k, std::move(t), SourceSpan{line, col, len}});
    };
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            push(Tok::newline, "\n", 1);
            ++i;
            ++line;
            col = 1;
            line_start = true;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
            ++col;
            continue;
        }
        if (c == '#' && line_start) {
            while (i < text.size() && text[i] != '\n') {
                ++i;
                ++col;
            }
            continue;
        }
        line_start = false;
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            push(Tok::ident, text.substr(i, j - i), j - i);
            col += j - i;
            i = j;
            continue;
        }
        Tok k = Tok::bad;
        if (c == ':')
            k = Tok::colon;
        else if (c == ',')
            k = Tok::comma;
        else if (c == '.')
            k = Tok::period;
        push(k, std::string(1, c), 1);
        ++i;
        ++col;
    }
    push(Tok::end, "", 0);
    return out;
}

// ---------------------------------------------------------------------------
// Parser

struct RawTransition {
    Token event;
    Token target;
};

struct RawState {
    Token id;
    bool violation = false;
    StateDecl decl;
    std::vector<Token> decl_events;
    std::vector<RawTransition> transitions;
};

struct RawScenario {
    Token name;
    std::vector<RawState> states;
};

class Parser {
public:
    explicit Parser(const std::string& text) : toks_(lex(text)) {}

    std::vector<Diagnostic> diags;

    // Parses "events: A, B" if present. Returns false when absent.
    bool parse_events_header(std::vector<Token>& events)
    {
        skip_newlines();
        if (!(is_kw(peek(), "events") && peek(1).kind == Tok::colon))
            return false;
        advance();
        advance();
        while (peek().kind != Tok::newline && peek().kind != Tok::end) {
            if (peek().kind == Tok::ident) {
                events.push_back(advance());
            } else {
                error("E002", "expected an event name in the events header", peek());
                advance();
                continue;
            }
            if (peek().kind == Tok::comma)
                advance();
            else if (peek().kind != Tok::newline && peek().kind != Tok::end) {
                error("E002", "expected ',' between event names", peek());
                advance();
            }
        }
        return true;
    }

    bool at_end()
    {
        skip_newlines();
        return peek().kind == Tok::end;
    }

    bool at_scenario_header()
    {
        skip_newlines();
        return is_kw(peek(), "scenario") && peek(1).kind == Tok::ident &&
               peek(2).kind == Tok::colon;
    }

    RawScenario parse_scenario_header()
    {
        RawScenario sc;
        advance();
        sc.name = advance();
        advance();
        return sc;
    }

    // State lines until the next scenario header or end of input.
    void parse_body(RawScenario& sc)
    {
        while (!at_end() && !at_scenario_header()) {
            RawState st;
            if (parse_state(st))
                sc.states.push_back(std::move(st));
            else
                recover();
        }
    }

    const Token& peek(std::size_t ahead = 0) const
    {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }

    void error(const std::string& code, const std::string& message, const Token& at)
    {
        diags.push_back(Diagnostic{Severity::error, code, message, at.span});
    }

    void skip_line()
    {
        while (peek().kind != Tok::newline && peek().kind != Tok::end)
            advance();
    }

private:
    static bool is_kw(const Token& t, const char* kw)
    {
        return t.kind == Tok::ident && lower(t.text) == kw;
    }

    const Token& advance()
    {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size())
            ++pos_;
        return t;
    }

    void skip_newlines()
    {
        while (peek().kind == Tok::newline)
            advance();
    }

    // Next significant token inside a statement (newlines are insignificant there).
    const Token& next_sig()
    {
        skip_newlines();
        return peek();
    }

    bool expect(Tok kind, const char* what)
    {
        const Token& t = next_sig();
        if (t.kind != kind) {
            error("E002", std::string("expected ") + what + describe_found(t), t);
            return false;
        }
        advance();
        return true;
    }

    bool expect_kw(const char* kw)
    {
        const Token& t = next_sig();
        if (!is_kw(t, kw)) {
            error("E002", std::string("expected '") + kw + "'" + describe_found(t), t);
            return false;
        }
        advance();
        return true;
    }

    static std::string describe_found(const Token& t)
    {
        if (t.kind == Tok::end)
            return ", found end of input";
        return ", found '" + t.text + "'";
    }

    void recover()
    {
        while (true) {
            const Token& t = peek();
            if (t.kind == Tok::end)
                return;
            if (t.kind == Tok::period) {
                advance();
                return;
            }
            advance();
        }
    }

    bool parse_events(EventSet& into, std::vector<Token>& tokens)
    {
        while (true) {
            const Token& t = next_sig();
            if (t.kind != Tok::ident) {
                error("E002", "expected an event name" + describe_found(t), t);
                return false;
            }
            into.insert(t.text);
            tokens.push_back(advance());
            if (is_kw(next_sig(), "and")) {
                advance();
                continue;
            }
            return true;
        }
    }

    bool parse_state(RawState& st)
    {
        const Token& first = next_sig();
        if (is_kw(first, "violation") && peek(1).kind == Tok::ident) {
            st.violation = true;
            advance();
        }
        const Token& id = next_sig();
        if (id.kind != Tok::ident) {
            error("E002", "expected a state id" + describe_found(id), id);
            return false;
        }
        st.id = advance();
        if (!expect(Tok::colon, "':' after state id"))
            return false;

        // Declarations.
        if (next_sig().kind != Tok::period) {
            while (true) {
                const Token& kw = next_sig();
                if (is_kw(kw, "request")) {
                    advance();
                    if (!parse_events(st.decl.requested, st.decl_events))
                        return false;
                } else if (is_kw(kw, "block")) {
                    advance();
                    if (!parse_events(st.decl.blocked, st.decl_events))
                        return false;
                } else if (is_kw(kw, "wait")) {
                    advance();
                    if (!expect_kw("for"))
                        return false;
                    if (!parse_events(st.decl.waited_for, st.decl_events))
                        return false;
                } else if (kw.kind == Tok::ident) {
                    error("E001", "unknown keyword '" + kw.text +
                                      "' (expected request, block or wait for)",
                          kw);
                    return false;
                } else {
                    error("E002", "expected a declaration" + describe_found(kw), kw);
                    return false;
                }
                if (next_sig().kind == Tok::comma) {
                    advance();
                    continue;
                }
                break;
            }
        }
        if (!expect(Tok::period, "'.' after declarations"))
            return false;

        // Transitions.
        while (is_kw(next_sig(), "if")) {
            advance();
            RawTransition tr;
            const Token& ev = next_sig();
            if (ev.kind != Tok::ident) {
                error("E002", "expected an event name" + describe_found(ev), ev);
                return false;
            }
            tr.event = advance();
            if (!expect_kw("is") || !expect_kw("triggered") || !expect(Tok::comma, "','") ||
                !expect_kw("go") || !expect_kw("to") || !expect_kw("state"))
                return false;
            const Token& target = next_sig();
            if (target.kind != Tok::ident) {
                error("E002", "expected a target state" + describe_found(target), target);
                return false;
            }
            tr.target = advance();
            if (!expect(Tok::period, "'.' after transition"))
                return false;
            st.transitions.push_back(std::move(tr));
        }
        const Token& after = next_sig();
        if (after.kind != Tok::end && !is_state_start() && !at_scenario_header()) {
            if (after.kind == Tok::ident)
                error("E001", "unknown keyword '" + after.text + "' (expected If or a new state)",
                      after);
            else
                error("E002", "unexpected '" + after.text + "'", after);
            return false;
        }
        return true;
    }

    bool is_state_start()
    {
        const Token& t = next_sig();
        if (t.kind != Tok::ident)
            return false;
        if (peek(1).kind == Tok::colon)
            return true;
        return is_kw(t, "violation") && peek(1).kind == Tok::ident && peek(2).kind == Tok::colon;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

Diagnostic make(Severity sev, std::string code, std::string message, const SourceSpan& span)
{
    return Diagnostic{sev, std::move(code), std::move(message), span};
}

// Builds the object, reporting semantic problems. `alphabet` null means the
// scenario defines its own alphabet from usage.
std::optional<ScenarioObject> build(const RawScenario& raw, const std::string& name,
                                    const EventSet* alphabet, std::vector<Diagnostic>& diags,
                                    const SourceSpan& header_span)
{
    bool failed = false;
    if (raw.states.empty()) {
        diags.push_back(make(Severity::error, "E014", "scenario '" + name + "' has no states",
                             header_span));
        return std::nullopt;
    }
    std::map<std::string, const RawState*> ids;
    for (const auto& st : raw.states) {
        if (!ids.emplace(st.id.text, &st).second) {
            diags.push_back(make(Severity::error, "E004", "duplicate state id '" + st.id.text + "'",
                                 st.id.span));
            failed = true;
        }
    }
    if (alphabet) {
        for (const auto& st : raw.states) {
            auto check = [&](const Token& t) {
                if (!alphabet->count(t.text)) {
                    diags.push_back(make(Severity::error, "E010",
                                         "event '" + t.text + "' is not declared in the events header",
                                         t.span));
                    failed = true;
                }
            };
            for (const auto& t : st.decl_events)
                check(t);
            for (const auto& tr : st.transitions)
                check(tr.event);
        }
    }
    for (const auto& st : raw.states)
        for (const auto& tr : st.transitions) {
            if (!ids.count(tr.target.text)) {
                diags.push_back(make(Severity::error, "E003",
                                     "transition targets unknown state '" + tr.target.text + "'",
                                     tr.target.span));
                failed = true;
            }
            if (!st.decl.requested.count(tr.event.text) && !st.decl.waited_for.count(tr.event.text))
                diags.push_back(make(Severity::warning, "W001",
                                     "state " + st.id.text + " has a transition on '" +
                                         tr.event.text + "' which it neither requests nor waits for",
                                     tr.event.span));
        }
    if (failed)
        return std::nullopt;

    ScenarioObject obj(name);
    for (const auto& st : raw.states)
        obj.add_state(st.id.text, st.decl, st.violation);
    for (const auto& st : raw.states)
        for (const auto& tr : st.transitions)
            obj.add_transition(st.id.text, tr.event.text, tr.target.text);
    obj.set_initial(raw.states.front().id.text);
    obj.set_alphabet(alphabet ? *alphabet : obj.events_used());
    return obj;
}

}  // namespace

ParseResult<ScenarioObject> parse_scenario(const std::string& text, const std::string& name)
{
    ParseResult<ScenarioObject> result;
    Parser p(text);
    RawScenario raw;
    SourceSpan header{1, 1, 0};
    std::string scenario_name = name;
    if (p.at_scenario_header()) {
        header = p.peek().span;
        raw = p.parse_scenario_header();
        scenario_name = raw.name.text;
    }
    p.parse_body(raw);
    if (p.at_scenario_header())
        p.error("E005", "expected a single scenario, found another scenario header", p.peek());
    result.diagnostics = std::move(p.diags);
    if (raw.states.empty() && !has_errors(result.diagnostics)) {
        result.diagnostics.push_back(make(Severity::error, "E014", "no states found", header));
        return result;
    }
    if (has_errors(result.diagnostics))
        return result;
    result.value = build(raw, scenario_name, nullptr, result.diagnostics, header);
    return result;
}

ParseResult<BehavioralModel> parse_model(const std::string& text, ModelOptions options)
{
    ParseResult<BehavioralModel> result;
    Parser p(text);
    std::vector<Token> header_events;
    const bool has_header = p.parse_events_header(header_events);

    std::vector<RawScenario> raws;
    std::vector<SourceSpan> header_spans;
    while (!p.at_end()) {
        if (!p.at_scenario_header()) {
            const Token& t = p.peek();
            p.error("E006", "expected 'scenario <Name>:'", t);
            p.skip_line();
            continue;
        }
        header_spans.push_back(p.peek().span);
        raws.push_back(p.parse_scenario_header());
        p.parse_body(raws.back());
    }
    auto& diags = p.diags;

    EventSet alphabet;
    if (!has_header && !options.infer_alphabet)
        diags.push_back(make(Severity::error, "E011", "missing 'events:' header", SourceSpan{1, 1, 0}));
    for (const auto& t : header_events) {
        if (!alphabet.insert(t.text).second)
            diags.push_back(make(Severity::warning, "W002", "event '" + t.text + "' listed twice",
                                 t.span));
    }
    if (options.infer_alphabet)
        for (const auto& raw : raws)
            for (const auto& st : raw.states) {
                for (const auto& t : st.decl_events)
                    alphabet.insert(t.text);
                for (const auto& tr : st.transitions)
                    alphabet.insert(tr.event.text);
            }

    std::map<std::string, SourceSpan> names;
    std::vector<ScenarioObject> scenarios;
    bool failed = has_errors(diags);
    for (std::size_t i = 0; i < raws.size(); ++i) {
        const auto& raw = raws[i];
        if (!names.emplace(raw.name.text, raw.name.span).second) {
            diags.push_back(make(Severity::error, "E012",
                                 "duplicate scenario name '" + raw.name.text + "'", raw.name.span));
            failed = true;
            continue;
        }
        // Without a header every event would be reported as unknown.
        const EventSet* known = has_header || options.infer_alphabet ? &alphabet : nullptr;
        auto obj = build(raw, raw.name.text, known, diags, header_spans[i]);
        if (!obj)
            failed = true;
        else
            scenarios.push_back(std::move(*obj));
    }
    result.diagnostics = diags;
    if (failed || has_errors(diags))
        return result;
    result.value = BehavioralModel(std::move(alphabet), std::move(scenarios));
    return result;
}

// ---------------------------------------------------------------------------
// Printer

std::string print_scenario(const ScenarioObject& input)
{
    const ScenarioObject object = canonicalize(input);
    std::ostringstream os;
    for (const auto& st : object.states()) {
        if (st.violation)
            os << "violation ";
        os << st.id << ": ";
        std::vector<std::string> decls;
        if (!st.decl.requested.empty())
            decls.push_back("request " + join(st.decl.requested, " and "));
        if (!st.decl.waited_for.empty())
            decls.push_back("wait for " + join(st.decl.waited_for, " and "));
        if (!st.decl.blocked.empty())
            decls.push_back("block " + join(st.decl.blocked, " and "));
        os << join(decls, ", ") << '.';
        for (const auto& [event, targets] : st.transitions)
            for (std::size_t t : targets)
                os << " If " << event << " is triggered, go to state " << object.state(t).id << '.';
        os << '\n';
    }
    return os.str();
}

std::string print_model(const BehavioralModel& model)
{
    std::ostringstream os;
    os << "events: " << join(model.alphabet(), ", ") << '\n';
    for (const auto& sc : model.scenarios()) {
        os << "\nscenario " << sc.name() << ":\n";
        std::istringstream lines(print_scenario(sc));
        std::string line;
        while (std::getline(lines, line))
            os << "  " << line << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Extraction from free text

namespace {

// Blanks out a leading bullet or list number, preserving byte columns.
std::string strip_bullet(const std::string& line)
{
    std::string out = line;
    std::size_t i = 0;
    while (i < out.size() && (out[i] == ' ' || out[i] == '\t'))
        ++i;
    auto blank = [&](std::size_t from, std::size_t to) {
        for (std::size_t k = from; k < to; ++k)
            out[k] = ' ';
    };
    if (i < out.size() && (out[i] == '-' || out[i] == '*' || out[i] == '+')) {
        blank(i, i + 1);
    } else if (out.compare(i, 3, "\xE2\x80\xA2") == 0) {
        blank(i, i + 3);
    } else if (out.compare(i, 5, "\\item") == 0) {
        blank(i, i + 5);
    } else {
        std::size_t j = i;
        while (j < out.size() && std::isdigit(static_cast<unsigned char>(out[j])))
            ++j;
        if (j > i && j < out.size() && (out[j] == '.' || out[j] == ')'))
            blank(i, j + 1);
    }
    return out;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool is_state_line(const std::string& stripped)
{
    static const std::regex re(
        R"(^\s*(violation\s+)?[A-Za-z0-9_]+\s*:\s*(request\b|block\b|wait\b|\.).*)",
        std::regex::icase);
    return std::regex_match(stripped, re);
}

std::optional<std::string> scenario_title(const std::string& line)
{
    static const std::regex re(R"(^\s*[#*]*\s*scenario\s+\**([A-Za-z0-9_]+)\**\s*:?\s*\**\s*$)",
                               std::regex::icase);
    std::smatch m;
    if (std::regex_match(line, m, re))
        return m[1].str();
    return std::nullopt;
}

}  // namespace

std::vector<ExtractedScenario> extract_scenarios(const std::string& free_text)
{
    std::vector<std::string> lines;
    {
        std::string line;
        std::istringstream is(free_text);
        while (std::getline(is, line))
            lines.push_back(line);
    }
    std::vector<std::string> stripped;
    stripped.reserve(lines.size());
    for (const auto& l : lines)
        stripped.push_back(strip_bullet(l));

    std::vector<ExtractedScenario> out;
    std::size_t i = 0;
    while (i < lines.size()) {
        if (!is_state_line(stripped[i])) {
            ++i;
            continue;
        }
        const std::size_t begin = i;
        std::size_t end = i + 1;  // exclusive
        while (end < lines.size()) {
            const std::string prev = trim(stripped[end - 1]);
            const std::string cur = trim(stripped[end]);
            const bool prev_complete = !prev.empty() && prev.back() == '.';
            if (!cur.empty() && is_state_line(stripped[end])) {
                ++end;
                continue;
            }
            if (!cur.empty() && !prev_complete) {
                ++end;  // wrapped continuation of the previous state line
                continue;
            }
            if (cur.empty() && prev_complete) {
                std::size_t k = end;
                while (k < lines.size() && trim(stripped[k]).empty())
                    ++k;
                if (k < lines.size() && is_state_line(stripped[k])) {
                    end = k;
                    continue;
                }
            }
            break;
        }

        // Keep line numbers aligned with the original text.
        std::string chunk(begin, '\n');
        for (std::size_t k = begin; k < end; ++k)
            chunk += stripped[k] + '\n';

        std::string name;
        for (std::size_t k = begin; k-- > 0;) {
            if (trim(lines[k]).empty())
                continue;
            if (auto title = scenario_title(lines[k]))
                name = *title;
            break;
        }

        ExtractedScenario ex;
        const std::size_t col = stripped[begin].find_first_not_of(" \t") + 1;
        ex.span = SourceSpan{begin + 1, col, trim(stripped[begin]).size()};
        auto parsed = parse_scenario(chunk, name);
        ex.object = std::move(parsed.value);
        ex.diagnostics = std::move(parsed.diagnostics);
        out.push_back(std::move(ex));
        i = end;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write '" + path + "'");
    out << content;
}

BehavioralModel load_model(const std::string& path, ModelOptions options)
{
    auto parsed = parse_model(read_file(path), options);
    if (!parsed.ok()) {
        std::string msg = "failed to parse " + path;
        for (const auto& d : parsed.diagnostics)
            if (d.severity == Severity::error) {
                msg += "\n  " + format(d, path);
            }
        throw ParseError(msg, std::move(parsed.diagnostics));
    }
    return std::move(*parsed.value);
}

}  // namespace sbm::dsl
