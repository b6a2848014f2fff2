// ---------------------------------------------------------------------------
// sql_frontend.hpp
//
// Lexer, parser and canonical renderer for the SQL subset accepted by the
// gateway: SHOW, SELECT, INSERT and UPDATE.
//
// Everything downstream (authorization, rewriting, dialect translation)
// works on the token streams kept inside StatementAnalysis, so the text that
// finally reaches the database is always a rendering of tokens that passed
// through this parser. Comments are dropped; nothing else is.
//
// Supported grammar:
//   SHOW TABLES | SHOW DATABASES | SHOW COLUMNS FROM <table>
//   SELECT [DISTINCT] <items> [FROM <table> {JOIN ...}] [WHERE ...]
//          [GROUP BY ...] [HAVING ...] [ORDER BY ...] [LIMIT ...]
//   INSERT INTO <table> (<cols>) VALUES (<literal | (SELECT ...)>, ...)
//   UPDATE <table> [alias] {JOIN ... ON ...} SET <col> = <value>, ...
//          [WHERE ...]
// ---------------------------------------------------------------------------
#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace secss::sql {

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------
bool iequals(std::string_view a, std::string_view b);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------
enum class ErrorCode {
    SyntaxError,
    UnsupportedStatement,
    ReservedVariable,
};

std::string_view to_string(ErrorCode code);

class SqlError : public std::runtime_error {
public:
    SqlError(ErrorCode code, std::size_t statement_index, std::string token,
             const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    std::size_t statement_index() const noexcept { return statement_index_; }
    const std::string& token() const noexcept { return token_; }

private:
    ErrorCode code_;
    std::size_t statement_index_;
    std::string token_;
};

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------
enum class TokenKind {
    Identifier,
    QuotedIdentifier,  // `name`
    Keyword,           // text is upper-cased
    Number,
    String,            // text is the unescaped content
    Variable,          // @name, text excludes the '@'
    Operator,
    LParen,
    RParen,
    Comma,
    Semicolon,
    Dot,
};

struct Token {
    TokenKind kind = TokenKind::Identifier;
    std::string text;
    std::size_t offset = 0;  // byte offset in the source, not compared

    bool is_keyword(std::string_view kw) const {
        return kind == TokenKind::Keyword && text == kw;
    }
    bool is_op(std::string_view op) const {
        return kind == TokenKind::Operator && text == op;
    }
    bool is_name() const {
        return kind == TokenKind::Identifier || kind == TokenKind::QuotedIdentifier;
    }

    friend bool operator==(const Token& a, const Token& b) {
        return a.kind == b.kind && a.text == b.text;
    }
};

struct LexOptions {
    // `@name` session variables are reserved for the rewriter. User input is
    // lexed with this off; restriction bodies and rewriter output with it on.
    bool allow_variables = false;
};

std::vector<Token> tokenize(std::string_view text, LexOptions options = {});

// Canonical text: single spaces, upper-case keywords, single-quoted strings
// with '' escaping. No trailing semicolon is added.
std::string render_tokens(std::span<const Token> tokens);

// Token-level normal form of arbitrary SQL text; two texts that differ only
// in whitespace, comments or keyword case normalize to the same string.
std::string normalize(std::string_view text, LexOptions options = {.allow_variables = true});

// Quoting helpers shared with the rewriter.
std::string quote_string(std::string_view content);
std::string render_name(std::string_view name);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------
struct FieldRef {
    std::optional<std::string> schema;
    std::string table;  // empty when the column could not be resolved yet
    std::string field;

    std::string to_string() const;
};

// Case-insensitive identity.
bool operator==(const FieldRef& a, const FieldRef& b);
struct FieldRefLess {
    bool operator()(const FieldRef& a, const FieldRef& b) const;
};
using FieldSet = std::set<FieldRef, FieldRefLess>;

struct TableRef {
    std::optional<std::string> schema;
    std::string table;
    std::optional<std::string> alias;

    // The name other clauses use to refer to this table.
    const std::string& qualifier() const { return alias ? *alias : table; }
    // "schema.table alias"
    std::string render() const;
    std::string render_name_only() const;
};

bool operator==(const TableRef& a, const TableRef& b);

enum class StatementKind { Show, Select, Insert, Update };
enum class ShowKind { Tables, Databases, Columns };

std::string_view to_string(StatementKind kind);

enum class LiteralKind { String, Number, Null };

struct Literal {
    std::string text;  // unescaped for strings, "NULL" for null
    LiteralKind kind = LiteralKind::String;

    friend bool operator==(const Literal&, const Literal&) = default;
};

struct Subquery {
    std::string text;  // canonical SELECT text without parentheses

    friend bool operator==(const Subquery&, const Subquery&) = default;
};

using ValueExpr = std::variant<Literal, Subquery>;

std::string render_value(const ValueExpr& value);

struct Assignment {
    FieldRef field;
    std::vector<Token> target;  // as written, e.g. `s . toy`
    ValueExpr value;
};

bool operator==(const Assignment& a, const Assignment& b);

struct StarItem {
    std::optional<std::string> qualifier;

    friend bool operator==(const StarItem&, const StarItem&) = default;
};

struct ExprItem {
    std::vector<Token> expr;
    std::optional<std::string> alias;

    friend bool operator==(const ExprItem&, const ExprItem&) = default;
};

using ProjectionItem = std::variant<StarItem, ExprItem>;

// Where in the statement a column reference appeared.
enum class Clause { Projection, Join, Where, Tail, Assignment, Value };

struct ColumnUse {
    FieldRef ref;
    bool qualified = false;
    std::optional<std::string> qualifier;  // table name or alias as written
    Clause clause = Clause::Where;
    // Resolved against the statement's own FROM/target tables (as opposed
    // to a table introduced by a nested sub-query).
    bool top_level = false;
    // Unqualified name that also matches a select-list alias of its scope.
    bool may_be_alias = false;
    // Tables visible to the reference, innermost scope first.
    std::vector<std::vector<TableRef>> scopes;
};

struct StatementAnalysis {
    StatementKind kind = StatementKind::Select;
    std::string source_text;  // verbatim slice of the request; ignored by ==

    ShowKind show_kind = ShowKind::Tables;
    std::vector<TableRef> target_tables;
    FieldSet accessed_fields;
    std::vector<ColumnUse> column_uses;

    // INSERT / UPDATE
    std::vector<Assignment> assignments;

    // SELECT
    bool distinct = false;
    std::vector<ProjectionItem> projection;
    std::vector<Token> tail_tokens;  // GROUP BY .. HAVING .. ORDER BY .. LIMIT ..

    // SELECT / UPDATE
    std::vector<Token> where_tokens;
    std::vector<Token> join_tokens;  // everything after the first table

    std::optional<std::string> where_text() const;
    std::optional<std::string> join_text() const;
};

bool operator==(const StatementAnalysis& a, const StatementAnalysis& b);

struct SqlScript {
    std::string raw_text;
    std::vector<StatementAnalysis> statements;
};

struct ParseOptions {
    bool allow_variables = false;
};

// Parses a multi-statement request. Throws SqlError naming the offending
// statement index and token.
SqlScript parse_script(std::string_view text, ParseOptions options = {});

// Parses exactly one statement (a trailing semicolon is optional).
StatementAnalysis parse_statement(std::string_view text, ParseOptions options = {});

// Canonical rendering with a single trailing semicolon.
std::string render(const StatementAnalysis& stmt);

// Top-level AND conjuncts of a predicate; empty when the predicate has a
// top-level OR/XOR (and therefore no conjunct is implied by the whole).
std::vector<std::span<const Token>> top_level_conjuncts(std::span<const Token> predicate);

// Names of every `@variable` referenced by the tokens, in first-use order.
std::vector<std::string> referenced_variables(std::span<const Token> tokens);

// Scalar functions the grammar accepts; the backend provides every one.
bool is_supported_function(std::string_view name);

}  // namespace secss::sql
