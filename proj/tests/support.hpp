#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "sbm/core.hpp"
#include "sbm/dsl.hpp"

namespace sbm::testkit {

inline std::filesystem::path source_dir() { return SBM_SOURCE_DIR; }
inline std::filesystem::path models_dir() { return source_dir() / "models"; }
inline std::filesystem::path fixtures_dir() { return source_dir() / "tests" / "fixtures"; }

inline BehavioralModel corpus(const std::string& name)
{
    return dsl::load_model((models_dir() / name).string());
}

inline std::filesystem::path fresh_dir(const std::string& tag)
{
    static std::mt19937_64 rng(std::random_device{}());
    const auto dir = std::filesystem::temp_directory_path() /
                     ("sbm-" + tag + "-" + std::to_string(rng() % 1'000'000'000));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct GenOptions {
    std::size_t max_events = 4;
    std::size_t max_states = 3;
    double nondeterminism = 0.0;
    double violation = 0.0;
};

/// Random scenario over `alphabet` with states s0..sN.
inline ScenarioObject random_scenario(std::mt19937& rng, const std::string& name, const EventSet& alphabet,
                                      const GenOptions& opt = {})
{
    auto chance = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, opt.max_states)(rng);
    ScenarioObject obj(name);
    obj.set_alphabet(alphabet);
    for (std::size_t i = 0; i < n; ++i) {
        StateDecl d;
        for (const auto& e : alphabet) {
            if (chance(0.35))
                d.requested.insert(e);
            if (chance(0.2))
                d.blocked.insert(e);
            if (chance(0.3))
                d.waited_for.insert(e);
        }
        obj.add_state("s" + std::to_string(i), d, chance(opt.violation));
    }
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& d = obj.decl(i);
        for (const auto& e : alphabet) {
            const bool declared = d.requested.count(e) || d.waited_for.count(e);
            if (!(declared ? chance(0.8) : chance(0.1)))
                continue;
            const std::string from = "s" + std::to_string(i);
            obj.add_transition(from, e, "s" + std::to_string(pick(rng)));
            if (chance(opt.nondeterminism))
                obj.add_transition(from, e, "s" + std::to_string(pick(rng)));
        }
    }
    return obj;
}

inline EventSet random_alphabet(std::mt19937& rng, std::size_t max_events)
{
    static const char* names[] = {"a", "b", "c", "d", "e", "f"};
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, max_events)(rng);
    return EventSet(names, names + k);
}

inline BehavioralModel random_model(std::mt19937& rng, std::size_t max_scenarios, const GenOptions& opt = {})
{
    const EventSet alphabet = random_alphabet(rng, opt.max_events);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, max_scenarios)(rng);
    std::vector<ScenarioObject> scenarios;
    for (std::size_t i = 0; i < k; ++i)
        scenarios.push_back(random_scenario(rng, "S" + std::to_string(i), alphabet, opt));
    return BehavioralModel(alphabet, scenarios);
}

}  // namespace sbm::testkit
