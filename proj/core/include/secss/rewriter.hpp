// ---------------------------------------------------------------------------
// rewriter.hpp
//
// Authorizes analyzed statements against the ELA and rewrites them so the
// restrictions run inside the statement itself:
//
//   SET @name = 'Loys';
//   SET @toy = 'ball';
//   INSERT INTO sandbox (name, toy) SELECT @name, @toy FROM DUAL
//     WHERE @toy IN (SELECT ... WHERE c.name = @name);
//
// A restriction that fails filters the row out; the database is never asked
// to do anything the ELA would not allow.
// ---------------------------------------------------------------------------
#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "secss/ela_policy.hpp"
#include "secss/identity.hpp"
#include "secss/sql_frontend.hpp"

namespace secss::rewrite {

// Column lists of the tables a statement may touch. The backend implements
// this; tests use fixed maps.
class Catalog {
public:
    virtual ~Catalog() = default;
    // Throws when the table does not exist.
    virtual std::vector<std::string> columns(const std::optional<std::string>& schema,
                                             const std::string& table) const = 0;
    // Schema that unqualified table names belong to.
    virtual std::string default_schema() const = 0;
};

struct TransformedScript {
    sql::StatementKind kind = sql::StatementKind::Select;
    std::string requested_sql;
    std::vector<std::string> set_statements;  // "SET @v = ...;"
    std::string final_statement;
    std::set<std::string> touched_tables;

    // Set statements and final statement, one per line.
    std::string executed_sql() const;

    friend bool operator==(const TransformedScript&, const TransformedScript&) = default;
};

enum class DenialReason {
    NoPermission,
    UnsupportedKind,
    UnresolvableVariable,
    // A SELECT restriction names a table that is not in the outer FROM, or
    // an INSERT/UPDATE restriction names a table other than the target.
    UnenforceableRestriction,
};

std::string_view to_string(DenialReason reason);

struct Denial {
    std::size_t statement_index = 0;
    DenialReason reason = DenialReason::NoPermission;
    std::string subject;  // field ("children.birthday") or variable ("@ninu")
    std::string detail;

    friend bool operator==(const Denial&, const Denial&) = default;
};

using RewriteResult = std::variant<TransformedScript, Denial>;

class Rewriter {
public:
    Rewriter(const ela::ElaDocument& ela, const Catalog& catalog) : ela_(ela), catalog_(catalog) {}

    RewriteResult rewrite(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                          std::size_t statement_index = 0) const;

    TransformedScript rewrite_show(const sql::StatementAnalysis& stmt) const;
    RewriteResult rewrite_select(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                 std::size_t statement_index = 0) const;
    RewriteResult rewrite_insert(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                 std::size_t statement_index = 0) const;
    RewriteResult rewrite_update(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                 std::size_t statement_index = 0) const;

    // SET statement giving var a value for an UPDATE that does not assign
    // var.field itself. Denial(UnresolvableVariable) when impossible.
    std::variant<std::string, Denial> derive_variable(const sql::StatementAnalysis& stmt,
                                                      const ela::VarBinding& var,
                                                      std::size_t statement_index = 0) const;

private:
    const ela::ElaDocument& ela_;
    const Catalog& catalog_;
};

// Every `@variable` referenced by the final statement, for the binding check.
std::set<std::string> variables_in(const TransformedScript& script);
// Every variable assigned by a SET statement.
std::set<std::string> variables_bound(const TransformedScript& script);

}  // namespace secss::rewrite
