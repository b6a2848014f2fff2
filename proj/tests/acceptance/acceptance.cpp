// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 when
// any criterion fails.
#include <json.hpp>

#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>

#include "corpora.hpp"
#include "goldens.hpp"
#include "oracle.hpp"
#include "secss/gateway.hpp"
#include "secss/playground.hpp"
#include "test_files.hpp"

using namespace secss;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

struct World {
    std::unique_ptr<backend::SqliteBackend> db;
    std::unique_ptr<gateway::Gateway> gw;
};

World playground_world(const std::filesystem::path& dir, const identity::TrustStore& trust) {
    World w;
    std::filesystem::create_directories(dir);
    const auto& f = playground::playground_fixture();
    w.db = playground::open_seeded(f, dir / "playground.db");
    w.gw = std::make_unique<gateway::Gateway>(*w.db, trust,
                                              gateway::publish_ela(std::string(f.ela_xml), std::nullopt, trust));
    return w;
}

Outcome golden(std::size_t index, const std::filesystem::path& dir) {
    const auto& c = testing::transformation_goldens().at(index);
    const auto run = testing::run_golden(c, dir);
    Outcome o;
    o.pass = run.matched && run.seconds < 1.0;
    if (!run.error.empty()) {
        o.detail = run.error;
    } else if (!run.matched) {
        o.detail = "expected [" + run.expected + "] got [" + run.actual + "]";
    }
    o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(run.seconds) + " s";
    return o;
}

Outcome oracle(const std::filesystem::path& dir) {
    const auto start = Clock::now();
    const auto report = testing::run_oracle_suite(100, 20120615u, dir);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome o;
    o.pass = report.mismatches.empty() && report.states >= 200 && secs < 60.0;
    o.detail = std::to_string(report.states) + " states, " + std::to_string(report.cases) + " requests (" +
               std::to_string(report.allowed) + " applied, " + std::to_string(report.filtered) + " filtered, " +
               std::to_string(report.errors) + " failing), " + std::to_string(report.mismatches.size()) +
               " mismatches, " + std::to_string(secs) + " s";
    for (std::size_t i = 0; i < report.mismatches.size() && i < 3; ++i) o.detail += "\n    " + report.mismatches[i];
    return o;
}

Outcome scenario(const std::filesystem::path& dir) {
    const auto start = Clock::now();
    auto w = playground_world(dir, {});
    const auto steps = playground::load_scenario(playground::scenario_json());
    const auto report = playground::run_scenario(*w.gw, *w.db, steps);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    Outcome o;
    o.pass = report.passed() && secs < 30.0;
    std::size_t passed = 0;
    for (const auto& s : report.steps) {
        if (s.passed) {
            ++passed;
        } else {
            o.detail += "\n    " + s.step.name + ": " + s.problem;
        }
    }
    o.detail = std::to_string(passed) + "/" + std::to_string(report.steps.size()) + " steps, " +
               std::to_string(report.privacy_leaks.size()) + " birthday leaks, " + std::to_string(secs) + " s" +
               o.detail;
    return o;
}

// Structural check of one response body.
std::vector<std::string> response_shape_problems(const std::string& body) {
    std::vector<std::string> p;
    const json j = json::parse(body);
    auto keys = [](const json& obj) {
        std::set<std::string> out;
        for (auto it = obj.begin(); it != obj.end(); ++it) out.insert(it.key());
        return out;
    };
    if (!j.is_object() || keys(j) != std::set<std::string>{"Results", "Feedback", "GenerationDate", "OK"}) {
        p.push_back("top-level fields");
        return p;
    }
    if (!j["OK"].is_boolean()) p.push_back("OK is not a boolean");
    if (!j["Feedback"].is_string()) p.push_back("Feedback is not a string");
    if (!j["GenerationDate"].is_string() ||
        !std::regex_match(j["GenerationDate"].get<std::string>(), std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ)"))) {
        p.push_back("GenerationDate format");
    }
    if (!j["Results"].is_array()) {
        p.push_back("Results is not an array");
        return p;
    }
    for (const auto& r : j["Results"]) {
        if (!r.is_object() || keys(r) != std::set<std::string>{"ExecutedSQL", "RequestedSQL", "Rows"}) {
            p.push_back("result fields");
            continue;
        }
        if (!r["ExecutedSQL"].is_string() || !r["RequestedSQL"].is_string()) p.push_back("SQL fields are not strings");
        if (!r["Rows"].is_array()) {
            p.push_back("Rows is not an array");
            continue;
        }
        for (const auto& row : r["Rows"]) {
            if (!row.is_array()) {
                p.push_back("row is not an array");
                continue;
            }
            for (const auto& cell : row) {
                if (!cell.is_object() || keys(cell) != std::set<std::string>{"Name", "Value"} ||
                    !cell["Name"].is_string() || !(cell["Value"].is_string() || cell["Value"].is_null())) {
                    p.push_back("cell fields");
                }
            }
        }
    }
    return p;
}

Outcome wire(const std::filesystem::path& dir) {
    const auto trust = identity::TrustStore::from_directory(testing::cert_path("trusted"));
    auto w = playground_world(dir, trust);
    Outcome o;
    std::vector<std::string> problems;

    const identity::SignedRequest sample{"SELECT name FROM children",
                                         identity::sign_sql("SELECT name FROM children",
                                                            testing::read_file(testing::cert_path("alice.key.pem")),
                                                            testing::read_file(testing::cert_path("alice.cert.pem"))),
                                         std::string("names")};
    const json req = json::parse(gateway::encode_request(sample));
    std::set<std::string> req_keys;
    for (auto it = req.begin(); it != req.end(); ++it) {
        req_keys.insert(it.key());
        if (!it->is_string()) problems.push_back("request field " + it.key() + " is not a string");
    }
    if (req_keys != std::set<std::string>{"SQL", "Pkcs7", "Comment"}) problems.push_back("request fields");

    const std::vector<std::string> bodies = {
        gateway::encode_request(sample),
        gateway::encode_request({"SELECT name, surname FROM children; SHOW COLUMNS FROM sandbox", std::nullopt, std::nullopt}),
        gateway::encode_request({"UPDATE sandbox SET posx = 1 WHERE ninu = '2003022850001'", std::nullopt, std::nullopt}),
        gateway::encode_request({"SELECT birthday FROM children", std::nullopt, std::nullopt}),
        R"({"SQL": null})",
    };
    int ok_count = 0;
    for (const auto& b : bodies) {
        const auto reply = w.gw->handle_request(b);
        if (reply.status != 200 || reply.content_type != "application/json") problems.push_back("status/content type");
        for (const auto& p : response_shape_problems(reply.body)) problems.push_back(p);
        const json parsed = json::parse(reply.body);
        if (parsed["OK"].get<bool>()) {
            ++ok_count;
        } else {
            o.detail += "\n    " + parsed["Feedback"].get<std::string>();
        }
        if (gateway::encode_response(gateway::decode_response(reply.body)) != reply.body) {
            problems.push_back("response does not round-trip");
        }
    }
    if (ok_count != 3) problems.push_back("expected 3 successful sample requests, got " + std::to_string(ok_count));
    if (w.gw->handle_request("not json").status != 400) problems.push_back("non-JSON body is not HTTP 400");

    o.pass = problems.empty();
    o.detail = std::to_string(bodies.size()) + " responses checked" + o.detail;
    for (const auto& p : problems) o.detail += "\n    " + p;
    return o;
}

Outcome integrity(const std::filesystem::path& dir) {
    const auto trust = identity::TrustStore::from_directory(testing::cert_path("trusted"));
    auto w = playground_world(dir, trust);
    const std::string sql = "UPDATE sandbox SET posx = 123, posy = 45 WHERE ninu = '2003022850001'";
    const std::string sig = identity::sign_sql(sql, testing::read_file(testing::cert_path("alice.key.pem")),
                                               testing::read_file(testing::cert_path("alice.cert.pem")));
    const std::string before = w.db->snapshot();
    Outcome o;
    std::mt19937 rng(4242);
    int bad_signature = 0, effects = 0;
    for (int n = 0; n < 100; ++n) {
        std::string mutated = sql;
        const auto at = std::uniform_int_distribution<std::size_t>(0, sql.size() - 1)(rng);
        mutated[at] = static_cast<char>(mutated[at] ^ std::uniform_int_distribution<int>(1, 255)(rng));
        const auto env = w.gw->process({mutated, sig, std::nullopt});
        if (!env.ok && env.feedback.starts_with("BadSignature: ")) {
            ++bad_signature;
        } else {
            o.detail += "\n    offset " + std::to_string(at) + ": " + env.feedback;
        }
        if (w.db->snapshot() != before) ++effects;
    }
    // The untouched request must go through, or the check proves nothing.
    const auto genuine = w.gw->process({sql, sig, std::nullopt});
    o.pass = bad_signature == 100 && effects == 0 && genuine.ok && w.db->snapshot() != before;
    o.detail = std::to_string(bad_signature) + "/100 BadSignature, " + std::to_string(effects) +
               " database changes, genuine request " + (genuine.ok ? "applied" : "failed: " + genuine.feedback) +
               o.detail;
    return o;
}

Outcome injection(const std::filesystem::path& dir) {
    auto w = playground_world(dir, {});
    const std::string before = w.db->snapshot();
    Outcome o;
    int rejected = 0, partial = 0;
    for (const auto& sql : testing::injection_corpus()) {
        const auto env = w.gw->process({sql, std::nullopt, std::nullopt});
        if (!env.ok && env.results.empty()) {
            ++rejected;
        } else {
            o.detail += "\n    accepted: " + sql;
        }
        if (w.db->snapshot() != before) {
            ++partial;
            o.detail += "\n    changed the database: " + sql;
        }
    }
    const auto total = testing::injection_corpus().size();
    o.pass = rejected == static_cast<int>(total) && partial == 0;
    o.detail = std::to_string(rejected) + "/" + std::to_string(total) + " rejected, " + std::to_string(partial) +
               " partial commits" + o.detail;
    return o;
}

Outcome ela_validation() {
    Outcome o;
    const std::string_view xml = playground::playground_fixture().ela_xml;
    const auto doc = ela::parse_ela(xml);
    std::size_t unenforced = 0;
    for (const auto& w : doc.warnings) unenforced += w.message == "declared but not enforced" ? 1 : 0;
    int correct = 0;
    for (const auto& m : testing::ela_mutations()) {
        const std::string mutated = testing::apply_mutation(xml, m);
        std::string got = "accepted";
        if (mutated.empty()) {
            got = "edit does not apply";
        } else {
            try {
                ela::parse_ela(mutated);
            } catch (const ela::ElaError& e) {
                got = std::string(ela::to_string(e.code()));
            }
        }
        if (got == ela::to_string(m.expected)) {
            ++correct;
        } else {
            o.detail += "\n    " + m.name + ": expected " + std::string(ela::to_string(m.expected)) + ", got " + got;
        }
    }
    const auto total = testing::ela_mutations().size();
    o.pass = doc.restrictions.size() == 2 && unenforced > 0 && total >= 10 && correct == static_cast<int>(total);
    o.detail = std::to_string(doc.restrictions.size()) + " restrictions, " + std::to_string(unenforced) +
               " unenforced-grant warnings, " + std::to_string(correct) + "/" + std::to_string(total) +
               " invalid variants rejected with the right code" + o.detail;
    return o;
}

}  // namespace

int main() {
    const auto root = testing::scratch_dir("acceptance");
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"golden INSERT transformation", [&] { return golden(0, root / "golden"); }},
        {"golden UPDATE transformation", [&] { return golden(1, root / "golden"); }},
        {"golden UPDATE with derived variables", [&] { return golden(2, root / "golden"); }},
        {"oracle equivalence", [&] { return oracle(root / "oracle"); }},
        {"six-rule scenario", [&] { return scenario(root / "scenario"); }},
        {"wire exactness", [&] { return wire(root / "wire"); }},
        {"integrity", [&] { return integrity(root / "integrity"); }},
        {"injection rejection", [&] { return injection(root / "injection"); }},
        {"ELA validation", [] { return ela_validation(); }},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        std::filesystem::create_directories(root);
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.detail = std::string("exception: ") + e.what();
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
