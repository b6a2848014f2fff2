#include <gtest/gtest.h>

#include <random>

#include "goldens.hpp"
#include "secss/playground.hpp"
#include "secss/rewriter.hpp"
#include "test_files.hpp"

using namespace secss;
using rewrite::DenialReason;

namespace {

class RewriterTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        const auto dir = secss::testing::scratch_dir("rewriter");
        db_ = playground::open_seeded(playground::playground_fixture(), dir / "playground.db").release();
        doc_ = new ela::ElaDocument(ela::parse_ela(playground::playground_fixture().ela_xml));
    }
    static void TearDownTestSuite() {
        delete doc_;
        delete db_;
    }

    static rewrite::RewriteResult run(std::string_view sql) {
        rewrite::Rewriter rw(*doc_, *db_);
        return rw.rewrite(sql::parse_statement(sql), identity::RequesterIdentity::anonymous());
    }
    static rewrite::TransformedScript allowed(std::string_view sql) {
        auto r = run(sql);
        if (auto* d = std::get_if<rewrite::Denial>(&r)) {
            ADD_FAILURE() << sql << " denied: " << d->detail;
            return {};
        }
        return std::get<rewrite::TransformedScript>(r);
    }
    static rewrite::Denial denied(std::string_view sql) {
        auto r = run(sql);
        if (auto* t = std::get_if<rewrite::TransformedScript>(&r)) {
            ADD_FAILURE() << sql << " allowed as " << t->executed_sql();
            return {};
        }
        return std::get<rewrite::Denial>(r);
    }

    static backend::SqliteBackend* db_;
    static ela::ElaDocument* doc_;
};

backend::SqliteBackend* RewriterTest::db_ = nullptr;
ela::ElaDocument* RewriterTest::doc_ = nullptr;

}  // namespace

TEST(Goldens, PublishedTransformationsAreReproduced) {
    const auto dir = secss::testing::scratch_dir("goldens");
    for (const auto& c : secss::testing::transformation_goldens()) {
        const auto run = secss::testing::run_golden(c, dir);
        EXPECT_TRUE(run.error.empty()) << c.name << ": " << run.error;
        EXPECT_EQ(run.actual, run.expected) << c.name;
    }
}

TEST(Goldens, StraySemicolonOnlyBeforeAnd) {
    EXPECT_EQ(secss::testing::strip_stray_semicolons("x = 1));\nAND y"), "x = 1))\nAND y");
    EXPECT_EQ(secss::testing::strip_stray_semicolons("SET @a = 1;\nSET @b = 2;"), "SET @a = 1;\nSET @b = 2;");
}

TEST_F(RewriterTest, SelectWithoutWhereIsUnchanged) {
    const auto t = allowed("SELECT name, surname FROM children");
    EXPECT_TRUE(t.set_statements.empty());
    EXPECT_EQ(t.final_statement, "SELECT name, surname FROM children;");
}

TEST_F(RewriterTest, SelectWhereIsParenthesized) {
    const auto t = allowed("SELECT name FROM children WHERE name = 'Ana' OR surname = 'Novak'");
    EXPECT_EQ(t.final_statement, "SELECT name FROM children WHERE (name = 'Ana' OR surname = 'Novak');");
}

TEST_F(RewriterTest, UngrantedFieldsAreDenied) {
    const auto d = denied("SELECT name, birthday FROM children");
    EXPECT_EQ(d.reason, DenialReason::NoPermission);
    EXPECT_EQ(d.subject, "children.birthday");
    EXPECT_EQ(denied("SELECT name FROM children WHERE birthday > '2005-01-01'").subject, "children.birthday");
    EXPECT_EQ(denied("SELECT name FROM children ORDER BY birthday").subject, "children.birthday");
}

TEST_F(RewriterTest, StarNeedsEveryColumn) {
    EXPECT_EQ(denied("SELECT * FROM children").subject, "children.birthday");
    allowed("SELECT * FROM sandbox");
}

TEST_F(RewriterTest, SubqueriesAreAuthorizedToo) {
    const auto d = denied("SELECT ninu FROM sandbox WHERE ninu IN (SELECT c.ninu FROM children c WHERE c.birthday > '2000-01-01')");
    EXPECT_EQ(d.subject, "children.birthday");
}

TEST_F(RewriterTest, UpdateOfUngrantedColumn) {
    const auto d = denied("UPDATE sandbox SET ninu = '2010031050003' WHERE item = 2");
    EXPECT_EQ(d.reason, DenialReason::NoPermission);
    EXPECT_EQ(d.subject, "sandbox.ninu");
}

TEST_F(RewriterTest, UnrestrictedInsertUsesValues) {
    const auto t = allowed("INSERT INTO toychest (name, image, suitable4age) VALUES ('kite', 'img/kite.png', 4)");
    EXPECT_EQ(t.set_statements, (std::vector<std::string>{"SET @name = 'kite';", "SET @image = 'img/kite.png';",
                                                           "SET @suitable4age = 4;"}));
    EXPECT_EQ(t.final_statement, "INSERT INTO toychest (name, image, suitable4age) VALUES (@name, @image, @suitable4age);");
}

TEST_F(RewriterTest, RestrictedInsertGoesThroughDual) {
    const auto t = allowed("INSERT INTO sandbox (ninu, item, posx, posy) VALUES ('2007012050002', 1, 10, 20)");
    ASSERT_EQ(t.set_statements.size(), 4u);
    EXPECT_EQ(t.set_statements[0], "SET @ninu = '2007012050002';");
    EXPECT_EQ(t.set_statements[1], "SET @item = 1;");
    EXPECT_EQ(t.set_statements[2], "SET @posx = 10;");
    EXPECT_EQ(t.set_statements[3], "SET @posy = 20;");
    EXPECT_EQ(t.final_statement.rfind("INSERT INTO sandbox (ninu, item, posx, posy) SELECT @ninu, @item, @posx, @posy "
                                      "FROM DUAL WHERE @item IN (",
                                      0),
              0u)
        << t.final_statement;
}

TEST_F(RewriterTest, UpdateDerivesKeyFromEquality) {
    const auto t = allowed("UPDATE sandbox SET item = 3 WHERE ninu = '2010031050003'");
    ASSERT_EQ(t.set_statements.size(), 2u);
    EXPECT_EQ(t.set_statements[0], "SET @ninu = '2010031050003';");
    EXPECT_EQ(t.set_statements[1], "SET @item = 3;");
    // Restrictions follow the Apply-Restriction order of the grant.
    const auto in = t.final_statement.find("WHERE (ninu = @ninu) AND @item IN (");
    const auto not_in = t.final_statement.find(" AND @item NOT IN (");
    EXPECT_NE(in, std::string::npos) << t.final_statement;
    EXPECT_NE(not_in, std::string::npos) << t.final_statement;
    EXPECT_LT(in, not_in);
}

TEST_F(RewriterTest, UpdateFallsBackToASubquery) {
    const auto t = allowed("UPDATE sandbox SET item = 3 WHERE posx > 50");
    ASSERT_EQ(t.set_statements.size(), 2u);
    EXPECT_EQ(t.set_statements[0], "SET @ninu = (SELECT sandbox.ninu FROM sandbox WHERE posx > 50);");
}

TEST_F(RewriterTest, UpdateDerivesThroughAJoin) {
    const auto t = allowed(
        "UPDATE sandbox s LEFT JOIN children c ON s.ninu = c.ninu SET s.item = 1 WHERE c.name = 'Loys'");
    ASSERT_EQ(t.set_statements.size(), 2u);
    EXPECT_EQ(t.set_statements[0], "SET @ninu = (SELECT c.ninu FROM children c WHERE c.name = 'Loys');");
}

TEST_F(RewriterTest, UpdateWithoutScopeCannotBindKey) {
    const auto d = denied("UPDATE sandbox SET item = 3");
    EXPECT_EQ(d.reason, DenialReason::UnresolvableVariable);
    EXPECT_EQ(d.subject, "@ninu");
}

TEST_F(RewriterTest, UnrestrictedUpdateHasNoFilter) {
    const auto t = allowed("UPDATE sandbox SET posx = 1 WHERE ninu = 'a' OR ninu = 'b'");
    EXPECT_EQ(t.set_statements, std::vector<std::string>{"SET @posx = 1;"});
    EXPECT_EQ(t.final_statement, "UPDATE sandbox SET posx = @posx WHERE (ninu = 'a' OR ninu = 'b');");
}

TEST_F(RewriterTest, UnknownTableIsDenied) {
    auto r = run("SELECT a FROM nowhere");
    ASSERT_TRUE(std::holds_alternative<rewrite::Denial>(r));
}

TEST_F(RewriterTest, ShowPassesThrough) {
    rewrite::Rewriter rw(*doc_, *db_);
    const auto t = rw.rewrite_show(sql::parse_statement("show columns from sandbox"));
    EXPECT_EQ(t.final_statement, "SHOW COLUMNS FROM sandbox;");
    EXPECT_TRUE(t.set_statements.empty());
}

// Every variable the final statement reads is bound by a SET statement,
// and the requested WHERE clause survives inside parentheses.
TEST_F(RewriterTest, VariablesAreAlwaysBound) {
    std::mt19937 rng(11);
    const std::vector<std::string> ninus = {"'2003022850001'", "'2007012050002'", "'x'"};
    const std::vector<std::string> items = {"1", "2", "3", "NULL", "(SELECT t.item FROM toychest t WHERE t.name = 'bike')"};
    auto any = [&](const std::vector<std::string>& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
    for (int n = 0; n < 300; ++n) {
        std::string sql;
        switch (n % 4) {
            case 0: sql = "INSERT INTO sandbox (ninu, item) VALUES (" + any(ninus) + ", " + any(items) + ")"; break;
            case 1: sql = "UPDATE sandbox SET item = " + any(items) + " WHERE ninu = " + any(ninus); break;
            case 2: sql = "UPDATE sandbox SET item = " + any(items) + ", posy = 3 WHERE posx < 100 AND posy > 1"; break;
            default:
                sql = "UPDATE sandbox s JOIN children c ON s.ninu = c.ninu SET s.item = " + any(items) +
                      " WHERE c.surname = 'Kranjc'";
        }
        const auto t = allowed(sql);
        const auto in = rewrite::variables_in(t);
        const auto bound = rewrite::variables_bound(t);
        for (const auto& v : in) EXPECT_TRUE(bound.contains(v)) << v << " unbound in " << t.executed_sql();
        EXPECT_FALSE(in.empty()) << sql;
    }
}
