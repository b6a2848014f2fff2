// ---------------------------------------------------------------------------
// playground.cpp
// ---------------------------------------------------------------------------

#include "secss/playground.hpp"

#include <json.hpp>

namespace secss::playground {

namespace {

using nlohmann::json;

std::string quote_ident(std::string_view name) {
    std::string out = "\"";
    for (char c : name) {
        out += c;
        if (c == '"') out += '"';
    }
    return out + "\"";
}

}  // namespace

std::vector<std::string> protected_birthdays() { return {"2003-02-28", "2007-01-20", "2010-03-10"}; }

void seed(backend::SqliteBackend& db, const Fixture& fixture, bool force) {
    const auto existing = db.table_names();
    if (!existing.empty() && !force) {
        throw backend::BackendError(backend::ErrorCode::SchemaExists,
                                    "database already has tables (" + existing.front() +
                                        ", ...); use --force to replace them");
    }
    std::string script = "PRAGMA foreign_keys = OFF;\nBEGIN;\n";
    for (const auto& t : existing) script += "DROP TABLE " + quote_ident(t) + ";\n";
    script += "COMMIT;\nPRAGMA foreign_keys = ON;\nBEGIN;\n";
    script += fixture.schema_sql;
    script += "\n";
    script += fixture.seed_sql;
    script += "\nCOMMIT;\n";
    db.execute_raw(script);
}

std::unique_ptr<backend::SqliteBackend> open_seeded(const Fixture& fixture, const std::filesystem::path& path) {
    for (const char* suffix : {"", "-wal", "-shm"}) {
        std::filesystem::path p = path;
        p += suffix;
        std::filesystem::remove(p);
    }
    auto db = std::make_unique<backend::SqliteBackend>(path, std::string(fixture.schema));
    seed(*db, fixture, false);
    db->set_clock(backend::parse_utc(kPinnedNow));
    return db;
}

std::vector<ScenarioStep> load_scenario(std::string_view json_text) {
    const json j = json::parse(json_text);
    const std::optional<std::string> default_now =
        j.contains("now") ? std::optional<std::string>(j["now"].get<std::string>()) : std::nullopt;
    std::vector<ScenarioStep> steps;
    for (const auto& s : j.at("steps")) {
        ScenarioStep step;
        step.name = s.at("name").get<std::string>();
        step.rule = s.value("rule", 0);
        step.sql = s.at("sql").get<std::string>();
        step.now = s.contains("now") ? std::optional<std::string>(s["now"].get<std::string>()) : default_now;
        const json& e = s.at("expect");
        step.expect.ok = e.at("ok").get<bool>();
        if (e.contains("feedback_prefix")) step.expect.feedback_prefix = e["feedback_prefix"].get<std::string>();
        if (e.contains("rows")) step.expect.rows = e["rows"].get<std::size_t>();
        steps.push_back(std::move(step));
    }
    return steps;
}

bool ScenarioReport::passed() const {
    if (!privacy_leaks.empty() || steps.empty()) return false;
    for (const auto& s : steps) {
        if (!s.passed) return false;
    }
    return true;
}

ScenarioReport run_scenario(const gateway::Gateway& gw, backend::SqliteBackend& db,
                            const std::vector<ScenarioStep>& steps) {
    ScenarioReport report;
    const auto birthdays = protected_birthdays();
    const auto saved_clock = db.clock();
    for (const auto& step : steps) {
        db.set_clock(step.now ? std::optional(backend::parse_utc(*step.now)) : saved_clock);
        StepOutcome out;
        out.step = step;
        out.body = gw.handle_request(gateway::encode_request({step.sql, std::nullopt, step.name})).body;
        out.envelope = gateway::decode_response(out.body);

        std::vector<std::string> problems;
        if (out.envelope.ok != step.expect.ok) {
            problems.push_back(std::string("expected OK=") + (step.expect.ok ? "true" : "false"));
        }
        if (step.expect.feedback_prefix && !out.envelope.feedback.starts_with(*step.expect.feedback_prefix)) {
            problems.push_back("expected feedback starting with '" + *step.expect.feedback_prefix + "'");
        }
        if (step.expect.rows) {
            const std::size_t got = out.envelope.results.empty() ? 0 : out.envelope.results.front().rows.size();
            if (got != *step.expect.rows) {
                problems.push_back("expected " + std::to_string(*step.expect.rows) + " rows, got " +
                                   std::to_string(got));
            }
        }
        for (const auto& b : birthdays) {
            if (out.body.find(b) != std::string::npos) {
                report.privacy_leaks.push_back(step.name);
                problems.push_back("response contains a birthday");
                break;
            }
        }
        out.passed = problems.empty();
        for (std::size_t i = 0; i < problems.size(); ++i) out.problem += (i ? "; " : "") + problems[i];
        if (!out.passed) out.problem += " (feedback: " + out.envelope.feedback + ")";
        report.steps.push_back(std::move(out));
    }
    db.set_clock(saved_clock);
    return report;
}

}  // namespace secss::playground
