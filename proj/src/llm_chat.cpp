#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "preamble_asset.hpp"
#include "sbm/llm.hpp"

namespace sbm::llm {

using nlohmann::json;

std::string preamble_version() { return asset::preamble_version; }
std::string preamble_template() { return asset::preamble_text; }

std::string event_set_sentence(const EventSet& events)
{
    return "Consider the event set {" + join(events, ", ") + "}.";
}

std::string build_preamble(const PreambleOptions& options)
{
    std::string text = preamble_template();
    if (options.events)
        text += "\n\n" + event_set_sentence(*options.events);
    for (const auto& r : options.reminders)
        text += "\n\n" + r;
    return text;
}

std::string fill_template(std::string text, const std::map<std::string, std::string>& values)
{
    for (const auto& [key, value] : values) {
        const std::string marker = "{{" + key + "}}";
        for (auto pos = text.find(marker); pos != std::string::npos; pos = text.find(marker, pos + value.size()))
            text.replace(pos, marker.size(), value);
    }
    return text;
}

std::string to_string(Role role)
{
    switch (role) {
    case Role::system:
        return "system";
    case Role::user:
        return "user";
    case Role::assistant:
        return "assistant";
    }
    return "user";
}

Role parse_role(const std::string& text)
{
    if (text == "system")
        return Role::system;
    if (text == "user")
        return Role::user;
    if (text == "assistant")
        return Role::assistant;
    throw Error("unknown transcript role '" + text + "'");
}

void validate_transcript(const Transcript& t)
{
    std::size_t i = (!t.empty() && t[0].role == Role::system) ? 1 : 0;
    for (Role expect = Role::user; i < t.size(); ++i) {
        if (t[i].role != expect)
            throw Error("transcript turn " + std::to_string(i) + " should be a " + to_string(expect) +
                        " turn, found " + to_string(t[i].role));
        expect = expect == Role::user ? Role::assistant : Role::user;
    }
}

Transcript parse_transcript(const std::string& json_text)
{
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(std::string("transcript is not valid JSON: ") + e.what());
    }
    if (!doc.is_array())
        throw Error("transcript must be a JSON array of {role, content} records");
    Transcript t;
    for (const auto& rec : doc) {
        if (!rec.is_object() || !rec.contains("role") || !rec.contains("content"))
            throw Error("transcript record needs role and content");
        t.push_back(Turn{parse_role(rec.at("role").get<std::string>()), rec.at("content").get<std::string>()});
    }
    validate_transcript(t);
    return t;
}

std::string serialize_transcript(const Transcript& t)
{
    json doc = json::array();
    for (const auto& turn : t)
        doc.push_back({{"role", to_string(turn.role)}, {"content", turn.content}});
    return doc.dump(2) + "\n";
}

Transcript load_transcript(const fs::path& path) { return parse_transcript(dsl::read_file(path.string())); }

void save_transcript(const fs::path& path, const Transcript& t)
{
    fs::create_directories(path.parent_path());
    dsl::write_file(path.string(), serialize_transcript(t));
}

std::string normalize_whitespace(const std::string& text)
{
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out += ' ';
        pending_space = false;
        out += static_cast<char>(c);
    }
    return out;
}

// ---------------------------------------------------------------------------

ReplayClient::ReplayClient(Transcript recorded) : recorded_(std::move(recorded))
{
    validate_transcript(recorded_);
}

std::string ReplayClient::complete(const Transcript& history)
{
    if (history.empty() || history.back().role != Role::user)
        throw Error("replay needs a history ending in a user turn");
    const bool recorded_system = !recorded_.empty() && recorded_[0].role == Role::system;
    const bool history_system = history[0].role == Role::system;
    const std::size_t index = history.size() - 1 + (recorded_system && !history_system ? 1 : 0);
    if (index >= recorded_.size())
        throw ReplayMismatch(index, "replay ran past the recording at turn " + std::to_string(index));
    const Turn& rec = recorded_[index];
    if (rec.role != Role::user ||
        normalize_whitespace(rec.content) != normalize_whitespace(history.back().content))
        throw ReplayMismatch(index, "prompt diverges from the recording at turn " + std::to_string(index));
    if (index + 1 >= recorded_.size())
        throw ReplayMismatch(index + 1, "recording has no reply at turn " + std::to_string(index + 1));
    return recorded_[index + 1].content;
}

// ---------------------------------------------------------------------------

LiveConfig LiveConfig::from_env()
{
    auto get = [](const char* name) {
        const char* v = std::getenv(name);
        if (!v || !*v)
            throw ConfigError(std::string("environment variable ") + name + " is not set");
        return std::string(v);
    };
    LiveConfig c;
    c.base_url = get("SBM_LLM_URL");
    c.model = get("SBM_LLM_MODEL");
    const char* key = std::getenv("SBM_LLM_KEY");
    c.api_key = key ? key : "";
    return c;
}

std::string build_chat_request(const std::string& model, const Transcript& history)
{
    json messages = json::array();
    for (const auto& t : history)
        messages.push_back({{"role", to_string(t.role)}, {"content", t.content}});
    return json{{"model", model}, {"messages", messages}}.dump();
}

std::string parse_chat_response(const std::string& body)
{
    try {
        const json doc = json::parse(body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(200, false, std::string("malformed chat response: ") + e.what());
    }
}

LiveClient::LiveClient(LiveConfig config) : config_(std::move(config)) {}

std::string LiveClient::complete(const Transcript& history)
{
    // base_url = scheme://host[:port][/path]
    const auto scheme_end = config_.base_url.find("://");
    const auto path_start =
        config_.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = config_.base_url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    if (path.empty() || path == "/")
        path = "/v1/chat/completions";

    httplib::Client client(origin);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(path, headers, build_chat_request(config_.model, history), "application/json");
    if (!res)
        throw TransportError(0, true, "chat endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        const bool retriable = res->status == 429 || res->status >= 500;
        throw TransportError(res->status, retriable,
                             "chat endpoint returned HTTP " + std::to_string(res->status));
    }
    return parse_chat_response(res->body);
}

AskResult ask(ChatClient& client, const Transcript& so_far, const std::string& prompt)
{
    AskResult r;
    r.transcript = so_far;
    r.transcript.push_back(Turn{Role::user, prompt});
    validate_transcript(r.transcript);
    r.response = client.complete(r.transcript);
    r.transcript.push_back(Turn{Role::assistant, r.response});
    return r;
}

}  // namespace sbm::llm
