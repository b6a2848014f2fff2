// Request and document corpora shared by the unit tests and the acceptance
// runner.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "secss/ela_policy.hpp"

namespace secss::testing {

// Scripts that must be refused before anything executes.
inline const std::vector<std::string>& injection_corpus() {
    static const std::vector<std::string> corpus = {
        "DROP TABLE children;",
        "DELETE FROM sandbox;",
        "DELETE FROM toychest WHERE item = 1;",
        "GRANT ALL ON playground.* TO 'mallory';",
        "TRUNCATE TABLE sandbox;",
        "ALTER TABLE children DROP COLUMN birthday;",
        "CREATE TABLE loot (birthday TEXT);",
        "REPLACE INTO sandbox (ninu, posx, posy) VALUES ('2007012050002', 1, 2);",
        "INSERT INTO sandbox (ninu, posx, posy) VALUES ('2007012050002', 1, 2); DROP TABLE children;",
        "INSERT INTO sandbox (ninu, posx, posy) VALUES ('2007012050002', 1, 2); GRANT ALL ON *.* TO anon;",
        "UPDATE sandbox SET posx = 1 WHERE ninu = '2003022850001'; DELETE FROM children WHERE 1 = 1;",
        "SELECT name FROM children; DELETE FROM children;",
        "SELECT name FROM children WHERE name = 'x'; DROP TABLE children; --';",
        "SELECT name FROM children WHERE name = 'a\\'; DROP TABLE children; --';",
        "SELECT name FROM children WHERE name = 'x';; DROP TABLE children;",
        "SELECT name FROM children UNION SELECT birthday FROM children;",
        "SELECT name FROM children /*! UNION SELECT birthday FROM children */;",
        "SELECT name FROM children WHERE name = 'x' /*+ DELETE */;",
        "SET @ninu = '2007012050002';",
        "UPDATE sandbox SET item = 1 WHERE ninu = @ninu;",
        "INSERT INTO sandbox (ninu, posx, posy) VALUES ('2007012050002', 1, 2), ('2010031050003', 3, 4);",
        "INSERT INTO sandbox (ninu, posx, posy) SELECT ninu, 1, 2 FROM children;",
        "UPDATE sandbox SET posx = 5 WHERE ninu = '2003022850001'; SHUTDOWN;",
        "LOAD DATA INFILE '/etc/passwd' INTO TABLE children;",
        "SELECT name FROM children INTO OUTFILE '/tmp/x';",
        "CALL wipe();",
        "UPDATE sandbox SET posx = 1; EXECUTE stmt;",
        "SELECT name FROM children WHERE name = 'x' OR SLEEP(5) = 0;",
    };
    return corpus;
}

struct ElaMutation {
    std::string name;
    std::string from;  // substring of the playground ELA
    std::string to;
    ela::ErrorCode expected;
};

// Single edits of the playground ELA, each breaking one rule.
inline const std::vector<ElaMutation>& ela_mutations() {
    static const std::vector<ElaMutation> m = {
        {"unclosed element", "</Restrictions>", "", ela::ErrorCode::XmlError},
        {"duplicate restriction id", "Id=\"suitableAge\"", "Id=\"toyInUse\"",
         ela::ErrorCode::DuplicateRestrictionId},
        {"dangling reference", "<Apply-Restriction ref=\"#toyInUse\" />",
         "<Apply-Restriction ref=\"#toyMissing\" />", ela::ErrorCode::DanglingRestrictionRef},
        {"unknown restriction type", "Id=\"toyInUse\" type=\"INSERT/UPDATE\"", "Id=\"toyInUse\" type=\"DELETE\"",
         ela::ErrorCode::BadRestrictionType},
        {"unknown use clause", "use=\"NOT IN\"", "use=\"LIKE\"", ela::ErrorCode::BadUseClause},
        {"unbound variable", "WHERE c.ninu = @ninu", "WHERE c.ninu = @child", ela::ErrorCode::UnboundVariable},
        {"missing table attribute", "table=\"sandbox\" field=\"@item\" use=\"NOT IN\"",
         "field=\"@item\" use=\"NOT IN\"", ela::ErrorCode::MissingAttribute},
        {"unknown permission type", "<Permission user=\"###(admin)###\" type=\"UPDATE\" />",
         "<Permission user=\"###(admin)###\" type=\"DROP\" />", ela::ErrorCode::BadPermissionType},
        {"SELECT restriction on a write permission",
         "Id=\"toyInUse\" type=\"INSERT/UPDATE\"\n      table=\"sandbox\" field=\"@item\"",
         "Id=\"toyInUse\" type=\"SELECT\"\n      table=\"sandbox\" field=\"item\"",
         ela::ErrorCode::RestrictionTypeMismatch},
        {"restriction sql is not a SELECT", "SELECT s.item FROM playground.sandbox s\n          WHERE s.item IS NOT NULL",
         "DELETE FROM playground.sandbox", ela::ErrorCode::BadRestrictionSql},
        {"variable without @", "<var field=\"ninu\" name=\"@ninu\" />", "<var field=\"ninu\" name=\"ninu\" />",
         ela::ErrorCode::BadVariable},
        {"write restriction field is not a variable", "table=\"sandbox\" field=\"@item\" use=\"IN\"",
         "table=\"sandbox\" field=\"item\" use=\"IN\"", ela::ErrorCode::BadRestrictionField},
    };
    return m;
}

inline std::string apply_mutation(std::string_view xml, const ElaMutation& m) {
    std::string out(xml);
    const auto at = out.find(m.from);
    if (at == std::string::npos) return {};
    out.replace(at, m.from.size(), m.to);
    return out;
}

}  // namespace secss::testing
