// ---------------------------------------------------------------------------
// playground.hpp
//
// The sandbox world as executable fixtures: schema, seed rows, the ELA,
// and the six-rule scenario. A second, simplified fixture set mirrors the
// sandbox(name, toy) / toys(toy, ageLimit) tables of the worked
// transformation examples.
// ---------------------------------------------------------------------------
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "secss/backend.hpp"
#include "secss/gateway.hpp"

namespace secss::playground {

struct Fixture {
    std::string_view name;    // "playground", "paper_tables"
    std::string_view schema;  // schema name the ELA refers to
    std::string_view schema_sql;
    std::string_view seed_sql;
    std::string_view ela_xml;
};

const Fixture& playground_fixture();
const Fixture& paper_tables_fixture();
std::string_view scenario_json();

// NOW() for the seeded world: Mia is 9, Loys 5, Ana 2.
inline constexpr std::string_view kPinnedNow = "2012-06-15T12:00:00Z";

// Birthdays in the seed; no response may ever contain one.
std::vector<std::string> protected_birthdays();

// Creates the fixture tables and rows. Existing tables raise SchemaExists
// unless force is set, in which case every table is dropped first.
void seed(backend::SqliteBackend& db, const Fixture& fixture, bool force);

// Fresh database file at path, seeded, clock pinned to kPinnedNow.
std::unique_ptr<backend::SqliteBackend> open_seeded(const Fixture& fixture, const std::filesystem::path& path);

struct Expectation {
    bool ok = true;
    std::optional<std::string> feedback_prefix;
    std::optional<std::size_t> rows;
};

struct ScenarioStep {
    std::string name;
    int rule = 0;
    std::string sql;
    std::optional<std::string> now;
    Expectation expect;
};

std::vector<ScenarioStep> load_scenario(std::string_view json_text);

struct StepOutcome {
    ScenarioStep step;
    gateway::ResponseEnvelope envelope;
    std::string body;
    bool passed = false;
    std::string problem;
};

struct ScenarioReport {
    std::vector<StepOutcome> steps;
    std::vector<std::string> privacy_leaks;  // step names

    bool passed() const;
};

// Runs each step through the full wire path (encode, handle_request,
// decode) with NOW() pinned per step.
ScenarioReport run_scenario(const gateway::Gateway& gw, backend::SqliteBackend& db,
                            const std::vector<ScenarioStep>& steps);

}  // namespace secss::playground
