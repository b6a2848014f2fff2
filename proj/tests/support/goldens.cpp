#include "goldens.hpp"

#include <chrono>
#include <regex>

#include "secss/gateway.hpp"
#include "secss/playground.hpp"
#include "secss/rewriter.hpp"

namespace secss::testing {

const std::vector<GoldenCase>& transformation_goldens() {
    static const std::vector<GoldenCase> cases = {
        {"insert-suitable-age",
         "INSERT INTO sandbox (name, toy) VALUES ('Loys', 'ball');",
         R"(SET @name = 'Loys';
SET @toy = 'ball';

INSERT INTO sandbox (name, toy)
SELECT @name, @toy FROM DUAL
    WHERE @toy IN
        (SELECT t.toy FROM toys t
            WHERE t.ageLimit < (SELECT c.age FROM children c
                WHERE c.name = @name));)"},
        {"update-two-restrictions",
         "UPDATE sandbox SET toy = 'squirrel'\nWHERE name = 'Loys';",
         R"(SET @name = 'Loys';
SET @toy = 'squirrel';

UPDATE sandbox SET toy = @toy WHERE (name = @name)
AND @toy IN
(SELECT t.toy FROM toys t
WHERE t.ageLimit < (SELECT c.age FROM children c
WHERE c.name = @name));
AND @toy NOT IN
(SELECT s.toy FROM sandbox s))"},
        {"update-derived-variables",
         "UPDATE sandbox s LEFT JOIN children c ON s.name = c.name\nSET s.toy =\n"
         "    (SELECT t.toy FROM toychest t WHERE t.id = '15')\nWHERE c.emšo = '100898450000';",
         R"(SET @name = (SELECT c.name FROM children c
             WHERE c.emšo = '100898450000');
SET @toy = (SELECT t.toy FROM toychest t WHERE t.id = '15');

UPDATE sandbox s LEFT JOIN children c ON s.name = c.name
SET s.toy = @toy
WHERE (c.emšo = '100898450000')
AND @toy IN
    (SELECT t.toy FROM toys t
     WHERE t.ageLimit < (SELECT c.age FROM children c
                        WHERE c.name = @name));
AND @toy NOT IN
    (SELECT s.toy FROM sandbox s))"},
    };
    return cases;
}

std::string strip_stray_semicolons(std::string_view text) {
    static const std::regex stray(R"(;(\s*AND\b))");
    return std::regex_replace(std::string(text), stray, "$1");
}

std::string canonical_sql(std::string_view script) {
    std::string out = sql::normalize(script);
    // A script's last statement may or may not carry its terminator.
    while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
    return out;
}

GoldenRun run_golden(const GoldenCase& c, const std::filesystem::path& workdir) {
    GoldenRun run;
    std::filesystem::create_directories(workdir);
    auto db = playground::open_seeded(playground::paper_tables_fixture(), workdir / ("golden_" + c.name + ".db"));
    const auto doc = ela::parse_ela(playground::paper_tables_fixture().ela_xml);
    run.expected = canonical_sql(strip_stray_semicolons(c.expected));

    const auto start = std::chrono::steady_clock::now();
    try {
        rewrite::Rewriter rw(doc, *db);
        const auto result = rw.rewrite(sql::parse_statement(c.request), identity::RequesterIdentity::anonymous());
        if (const auto* d = std::get_if<rewrite::Denial>(&result)) {
            run.error = "denied: " + d->detail;
        } else {
            run.actual = canonical_sql(std::get<rewrite::TransformedScript>(result).executed_sql());
        }
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    run.matched = run.error.empty() && run.actual == run.expected;
    return run;
}

}  // namespace secss::testing
