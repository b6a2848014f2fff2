#include <gtest/gtest.h>

#include "oracle.hpp"
#include "secss/playground.hpp"
#include "test_files.hpp"

using namespace secss;
using namespace secss::testing;

TEST(OracleModel, AgeOnPinnedDate) {
    EXPECT_EQ(age_on_pinned_date("2003-02-28"), 9);
    EXPECT_EQ(age_on_pinned_date("2007-01-20"), 5);
    EXPECT_EQ(age_on_pinned_date("2010-03-10"), 2);
    EXPECT_EQ(age_on_pinned_date("2011-06-15"), 1);
    EXPECT_EQ(age_on_pinned_date("2011-06-16"), 0);
}

// The model of the seed dumps exactly like the seeded database.
TEST(OracleModel, SeedDumpMatchesSnapshot) {
    const auto dir = scratch_dir("oracle_model");
    auto db = playground::open_seeded(playground::playground_fixture(), dir / "p.db");
    PlaygroundState s;
    s.children = {{"2003022850001", "Mia", "Novak", "2003-02-28"},
                  {"2007012050002", "Loys", "Kranjc", "2007-01-20"},
                  {"2010031050003", "Ana", "Zupan", "2010-03-10"}};
    s.toys = {{1, "rattle", 0}, {2, "ball", 3}, {3, "bike", 6}, {4, "skateboard", 10}};
    s.sandbox = {{"2003022850001", 2, 40, 60}};
    s.sequence = 4;
    EXPECT_EQ(db->snapshot(), s.dump());

    auto pdb = playground::open_seeded(playground::paper_tables_fixture(), dir / "t.db");
    PaperState p;
    p.children = {{"Loys", 5, "100898450000"}, {"Mia", 9, "280203450001"}, {"Ana", 2, "100310450003"}};
    p.toys = {{"ball", 3}, {"squirrel", 4}, {"bike", 6}, {"rattle", 0}};
    p.chest = {{"15", "squirrel"}, {"16", "bike"}, {"17", "ball"}};
    p.sandbox = {{"Loys", "rattle"}, {"Mia", "ball"}};
    EXPECT_EQ(pdb->snapshot(), p.dump());
}

TEST(OracleModel, LoadRestoresAnyState) {
    const auto dir = scratch_dir("oracle_load");
    auto db = playground::open_seeded(playground::playground_fixture(), dir / "p.db");
    std::mt19937 rng(3);
    for (int n = 0; n < 30; ++n) {
        const auto s = random_playground_state(rng);
        db->execute_raw(s.load_sql());
        ASSERT_EQ(db->snapshot(), s.dump());
    }
}

TEST(OracleModel, GeneratedStatesRespectKeys) {
    std::mt19937 rng(5);
    for (int n = 0; n < 200; ++n) {
        const auto s = random_playground_state(rng);
        std::set<std::int64_t> items;
        for (const auto& x : s.sandbox) {
            if (x.item) EXPECT_TRUE(items.insert(*x.item).second);
        }
        EXPECT_GE(s.sequence, s.toys.back().item);
    }
}

TEST(OracleSuite, GatewayAgreesWithTheOracle) {
    const auto report = run_oracle_suite(60, 20120615u, scratch_dir("oracle_suite"));
    EXPECT_EQ(report.states, 120);
    EXPECT_GT(report.allowed, 0);
    EXPECT_GT(report.filtered, 0);
    EXPECT_GT(report.errors, 0);
    for (const auto& m : report.mismatches) ADD_FAILURE() << m;
}
