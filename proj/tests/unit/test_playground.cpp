#include <gtest/gtest.h>

#include <set>

#include "secss/playground.hpp"
#include "test_files.hpp"

using namespace secss;

namespace {

struct World {
    std::unique_ptr<backend::SqliteBackend> db;
    std::unique_ptr<gateway::Gateway> gw;
};

World world(const std::string& name) {
    World w;
    const auto dir = secss::testing::scratch_dir("playground_" + name);
    w.db = playground::open_seeded(playground::playground_fixture(), dir / "playground.db");
    w.gw = std::make_unique<gateway::Gateway>(
        *w.db, identity::TrustStore{},
        gateway::publish_ela(std::string(playground::playground_fixture().ela_xml), std::nullopt, {}));
    return w;
}

}  // namespace

TEST(Fixtures, NamesAndSchemas) {
    EXPECT_EQ(playground::playground_fixture().name, "playground");
    EXPECT_EQ(playground::playground_fixture().schema, "playground");
    EXPECT_EQ(playground::paper_tables_fixture().name, "paper_tables");
    EXPECT_EQ(playground::paper_tables_fixture().schema, "paper");
}

TEST(Fixtures, SeedProducesTheDeclaredColumns) {
    auto w = world("columns");
    EXPECT_EQ(w.db->catalog_columns("playground", "children"),
              (std::vector<std::string>{"ninu", "name", "surname", "birthday"}));
    EXPECT_EQ(w.db->catalog_columns("playground", "toychest"),
              (std::vector<std::string>{"item", "name", "image", "suitable4age", "owner"}));
}

TEST(Fixtures, OpenSeededStartsOver) {
    const auto dir = secss::testing::scratch_dir("playground_again");
    auto a = playground::open_seeded(playground::playground_fixture(), dir / "p.db");
    a->execute_raw("UPDATE sandbox SET posx = 0");
    const std::string dirty = a->snapshot();
    a.reset();
    auto b = playground::open_seeded(playground::playground_fixture(), dir / "p.db");
    EXPECT_NE(b->snapshot(), dirty);
    ASSERT_TRUE(b->clock());
    EXPECT_EQ(backend::format_utc(*b->clock()), playground::kPinnedNow);
}

TEST(Scenario, LoadsEverySixRules) {
    const auto steps = playground::load_scenario(playground::scenario_json());
    ASSERT_GE(steps.size(), 20u);
    std::set<int> rules;
    for (const auto& s : steps) {
        rules.insert(s.rule);
        ASSERT_TRUE(s.now) << s.name;
    }
    for (int r = 1; r <= 6; ++r) EXPECT_TRUE(rules.contains(r)) << "rule " << r;
}

TEST(Scenario, PassesEndToEnd) {
    auto w = world("scenario");
    const auto report = playground::run_scenario(*w.gw, *w.db, playground::load_scenario(playground::scenario_json()));
    for (const auto& s : report.steps) EXPECT_TRUE(s.passed) << s.step.name << ": " << s.problem;
    EXPECT_TRUE(report.privacy_leaks.empty());
    EXPECT_TRUE(report.passed());
}

TEST(Scenario, BirthdayAgeBoundary) {
    auto w = world("boundary");
    const std::string sql = "UPDATE sandbox SET item = 3 WHERE ninu = '2007012050002'";
    w.gw->process({"INSERT INTO sandbox (ninu, posx, posy) VALUES ('2007012050002', 1, 1)", std::nullopt, std::nullopt});
    w.db->set_clock(backend::parse_utc("2013-01-19T23:59:59Z"));
    EXPECT_EQ(w.gw->process({sql, std::nullopt, std::nullopt}).feedback, "OK: statement 1: 0 rows affected");
    w.db->set_clock(backend::parse_utc("2013-01-20T00:00:00Z"));
    EXPECT_EQ(w.gw->process({sql, std::nullopt, std::nullopt}).feedback, "OK: statement 1: 1 row affected");
}

TEST(Scenario, FailingExpectationsAreReported) {
    auto w = world("reported");
    playground::ScenarioStep step;
    step.name = "leaky";
    step.sql = "SELECT name FROM children";
    step.expect.ok = false;
    const auto report = playground::run_scenario(*w.gw, *w.db, {step});
    EXPECT_FALSE(report.passed());
    ASSERT_EQ(report.steps.size(), 1u);
    EXPECT_NE(report.steps[0].problem.find("expected OK=false"), std::string::npos);
}

TEST(Scenario, ProtectedBirthdaysMatchTheSeed) {
    const std::string seed(playground::playground_fixture().seed_sql);
    for (const auto& b : playground::protected_birthdays()) EXPECT_NE(seed.find(b), std::string::npos) << b;
}
