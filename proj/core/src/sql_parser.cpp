// ---------------------------------------------------------------------------
// sql_parser.cpp
//
// Recursive-descent parser for the accepted SQL subset.
//
// Column references are collected while parsing and resolved only after the
// whole statement has been read, because a select list (and any sub-query
// inside it) is parsed before the FROM clause that defines its tables.
//
// A reference that is unqualified and sits in a scope with several tables
// keeps an empty table name; the rewriter resolves those against the
// backend catalog.
// ---------------------------------------------------------------------------

#include "secss/sql_frontend.hpp"

#include <algorithm>
#include <array>
#include <tuple>

namespace secss::sql {

namespace {

// First words that name a statement kind we deliberately do not execute.
constexpr std::array kForeignVerbs = {
    "ALTER",  "ANALYZE", "ATTACH",   "BACKUP",   "BEGIN",   "CALL",     "CHANGE",  "CHECK",
    "COMMIT", "CREATE",  "DEALLOCATE","DELETE",  "DESC",    "DESCRIBE", "DETACH",  "DO",
    "DROP",   "EXECUTE", "EXPLAIN",  "FLUSH",    "GET",     "GRANT",    "HANDLER", "HELP",
    "IMPORT", "INSTALL", "KILL",     "LOAD",     "LOCK",    "MERGE",    "OPTIMIZE","PRAGMA",
    "PREPARE","PURGE",   "REINDEX",  "RELEASE",  "RENAME",  "REPAIR",   "REPLACE", "RESET",
    "RESTORE","REVOKE",  "ROLLBACK", "SAVEPOINT","SET",     "SHUTDOWN", "SIGNAL",  "START",
    "TABLE",  "TRUNCATE","UNINSTALL","UNLOCK",   "UPSERT",  "USE",      "VACUUM",  "VALUES",
    "WITH",   "XA",
};

bool is_foreign_verb(const Token& t) {
    if (t.kind != TokenKind::Keyword && t.kind != TokenKind::Identifier) return false;
    const std::string upper = to_upper(t.text);
    return std::find(kForeignVerbs.begin(), kForeignVerbs.end(), upper) != kForeignVerbs.end();
}

struct Scope {
    std::vector<TableRef> tables;
    int parent = -1;
    std::vector<std::string> aliases;
};

struct PendingUse {
    std::optional<std::string> schema;
    std::optional<std::string> table;
    std::string column;
    int scope = -1;
    Clause clause = Clause::Where;
};

struct SelectParts {
    bool distinct = false;
    std::vector<ProjectionItem> projection;
    std::vector<TableRef> tables;
    std::size_t join_begin = 0;
    std::size_t join_end = 0;
    std::size_t where_begin = 0;
    std::size_t where_end = 0;
    std::size_t tail_begin = 0;
    std::size_t tail_end = 0;
    int scope = -1;
};

class Parser {
public:
    Parser(std::span<const Token> tokens, std::size_t index) : t_(tokens), index_(index) {}

    StatementAnalysis parse() {
        const Token& first = peek();
        StatementAnalysis st;
        if (first.is_keyword("SELECT")) {
            parse_top_select(st);
        } else if (first.is_keyword("INSERT")) {
            parse_insert(st);
        } else if (first.is_keyword("UPDATE")) {
            parse_update(st);
        } else if (first.is_keyword("SHOW")) {
            parse_show(st);
        } else if (is_foreign_verb(first) || first.kind == TokenKind::Keyword) {
            fail(ErrorCode::UnsupportedStatement, first,
                 "statement kind " + to_upper(first.text) + " is not supported");
        } else {
            fail(ErrorCode::SyntaxError, first, "expected SHOW, SELECT, INSERT or UPDATE");
        }
        if (!at_end()) fail(ErrorCode::SyntaxError, peek(), "unexpected token");
        resolve(st);
        return st;
    }

private:
    // -- token cursor -------------------------------------------------------
    bool at_end() const { return pos_ >= t_.size(); }

    const Token& peek(std::size_t k = 0) const {
        static const Token kEnd{TokenKind::Semicolon, "<end>", 0};
        return pos_ + k < t_.size() ? t_[pos_ + k] : kEnd;
    }

    const Token& next() {
        if (at_end()) fail(ErrorCode::SyntaxError, peek(), "unexpected end of statement");
        return t_[pos_++];
    }

    bool accept_keyword(std::string_view kw) {
        if (peek().is_keyword(kw)) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect_keyword(std::string_view kw) {
        if (!accept_keyword(kw)) fail(ErrorCode::SyntaxError, peek(), "expected " + std::string(kw));
    }

    bool accept(TokenKind kind) {
        if (!at_end() && peek().kind == kind) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(TokenKind kind, std::string_view what) {
        if (!accept(kind)) fail(ErrorCode::SyntaxError, peek(), "expected " + std::string(what));
    }

    bool accept_op(std::string_view op) {
        if (peek().is_op(op)) {
            ++pos_;
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(ErrorCode code, const Token& at, const std::string& msg) const {
        throw SqlError(code, index_, at.text, msg);
    }

    std::vector<Token> slice(std::size_t b, std::size_t e) const {
        return {t_.begin() + static_cast<std::ptrdiff_t>(b), t_.begin() + static_cast<std::ptrdiff_t>(e)};
    }

    std::string name_token() {
        const Token& tok = peek();
        if (!tok.is_name()) fail(ErrorCode::SyntaxError, tok, "expected a name");
        ++pos_;
        return tok.text;
    }

    int new_scope(int parent) {
        scopes_.push_back(Scope{{}, parent, {}});
        return static_cast<int>(scopes_.size()) - 1;
    }

    // -- tables -------------------------------------------------------------
    TableRef parse_table_name() {
        TableRef ref;
        if (peek().is_keyword("DUAL")) {
            ++pos_;
            ref.table = "DUAL";
            return ref;
        }
        if (peek().kind == TokenKind::LParen) {
            fail(ErrorCode::UnsupportedStatement, peek(), "derived tables are not supported");
        }
        std::string first = name_token();
        if (accept(TokenKind::Dot)) {
            ref.schema = std::move(first);
            ref.table = name_token();
        } else {
            ref.table = std::move(first);
        }
        return ref;
    }

    void parse_alias(TableRef& ref) {
        if (accept_keyword("AS")) {
            ref.alias = name_token();
        } else if (peek().is_name()) {
            ref.alias = name_token();
        }
    }

    TableRef parse_table_factor() {
        TableRef ref = parse_table_name();
        parse_alias(ref);
        return ref;
    }

    // JOIN chain after the first table; appends to the current scope.
    void parse_joins(int scope) {
        while (true) {
            if (accept(TokenKind::Comma)) {
                scopes_[scope].tables.push_back(parse_table_factor());
                continue;
            }
            bool needs_on = false;
            if (peek().is_keyword("RIGHT") || peek().is_keyword("NATURAL")) {
                fail(ErrorCode::UnsupportedStatement, peek(), to_upper(peek().text) + " JOIN is not supported");
            }
            if (accept_keyword("LEFT")) {
                accept_keyword("OUTER");
                expect_keyword("JOIN");
                needs_on = true;
            } else if (accept_keyword("INNER") || accept_keyword("CROSS")) {
                expect_keyword("JOIN");
            } else if (!accept_keyword("JOIN")) {
                break;
            }
            scopes_[scope].tables.push_back(parse_table_factor());
            if (peek().is_keyword("USING")) {
                fail(ErrorCode::UnsupportedStatement, peek(), "JOIN ... USING is not supported");
            }
            if (accept_keyword("ON")) {
                with_clause(Clause::Join, [&] { parse_expr(); });
            } else if (needs_on) {
                fail(ErrorCode::SyntaxError, peek(), "expected ON");
            }
        }
    }

    template <typename F>
    void with_clause(Clause c, F&& f) {
        const Clause saved = clause_;
        if (depth_ == 0) clause_ = c;
        f();
        clause_ = saved;
    }

    // -- SELECT -------------------------------------------------------------
    SelectParts parse_select(int parent) {
        SelectParts parts;
        expect_keyword("SELECT");
        parts.scope = new_scope(parent);
        const int saved_scope = scope_;
        scope_ = parts.scope;

        if (accept_keyword("DISTINCT")) {
            parts.distinct = true;
        } else {
            accept_keyword("ALL");
        }

        with_clause(Clause::Projection, [&] {
            do {
                parts.projection.push_back(parse_select_item());
            } while (accept(TokenKind::Comma));
        });

        if (accept_keyword("FROM")) {
            scopes_[parts.scope].tables.push_back(parse_table_factor());
            parts.join_begin = pos_;
            parse_joins(parts.scope);
            parts.join_end = pos_;
        }
        if (accept_keyword("WHERE")) {
            parts.where_begin = pos_;
            with_clause(Clause::Where, [&] { parse_expr(); });
            parts.where_end = pos_;
        }
        parts.tail_begin = pos_;
        with_clause(Clause::Tail, [&] {
            if (accept_keyword("GROUP")) {
                expect_keyword("BY");
                do {
                    parse_expr();
                } while (accept(TokenKind::Comma));
            }
            if (accept_keyword("HAVING")) parse_expr();
            if (accept_keyword("ORDER")) {
                expect_keyword("BY");
                do {
                    parse_expr();
                    if (!accept_keyword("ASC")) accept_keyword("DESC");
                } while (accept(TokenKind::Comma));
            }
            if (accept_keyword("LIMIT")) {
                expect(TokenKind::Number, "a row count");
                if (accept(TokenKind::Comma) || accept_keyword("OFFSET")) {
                    expect(TokenKind::Number, "an offset");
                }
            }
        });
        parts.tail_end = pos_;

        if (peek().is_keyword("UNION") || peek().is_keyword("INTERSECT") || peek().is_keyword("EXCEPT")) {
            fail(ErrorCode::UnsupportedStatement, peek(), "set operations are not supported");
        }
        parts.tables = scopes_[parts.scope].tables;
        scope_ = saved_scope;
        return parts;
    }

    ProjectionItem parse_select_item() {
        if (accept_op("*")) return StarItem{};
        if (peek().is_name() && peek(1).kind == TokenKind::Dot && peek(2).is_op("*")) {
            StarItem star{peek().text};
            pos_ += 3;
            return star;
        }
        ExprItem item;
        const std::size_t begin = pos_;
        parse_expr();
        item.expr = slice(begin, pos_);
        if (accept_keyword("AS")) {
            if (peek().kind == TokenKind::String) {
                item.alias = next().text;
            } else {
                item.alias = name_token();
            }
        } else if (peek().is_name()) {
            item.alias = name_token();
        }
        if (item.alias) scopes_[scope_].aliases.push_back(*item.alias);
        return item;
    }

    // Parses "( SELECT ... )" after the opening parenthesis has been seen.
    void parse_nested_select() {
        ++depth_;
        parse_select(scope_);
        --depth_;
        expect(TokenKind::RParen, "')'");
    }

    // -- expressions --------------------------------------------------------
    void parse_expr() { parse_or(); }

    void parse_or() {
        parse_and();
        while (accept_keyword("OR") || accept_keyword("XOR")) parse_and();
    }

    void parse_and() {
        parse_not();
        while (accept_keyword("AND")) parse_not();
    }

    void parse_not() {
        if (accept_keyword("NOT")) {
            parse_not();
            return;
        }
        parse_predicate();
    }

    void parse_predicate() {
        parse_additive();
        while (true) {
            const Token& tok = peek();
            if (tok.kind == TokenKind::Operator &&
                (tok.text == "=" || tok.text == "<>" || tok.text == "!=" || tok.text == "<" ||
                 tok.text == "<=" || tok.text == ">" || tok.text == ">=" || tok.text == "<=>")) {
                ++pos_;
                parse_additive();
                continue;
            }
            if (tok.is_keyword("IS")) {
                ++pos_;
                accept_keyword("NOT");
                if (!accept_keyword("NULL") && !accept_keyword("TRUE") && !accept_keyword("FALSE")) {
                    fail(ErrorCode::SyntaxError, peek(), "expected NULL, TRUE or FALSE");
                }
                continue;
            }
            const bool negated = tok.is_keyword("NOT") &&
                                 (peek(1).is_keyword("IN") || peek(1).is_keyword("BETWEEN") ||
                                  peek(1).is_keyword("LIKE"));
            if (negated) ++pos_;
            if (accept_keyword("IN")) {
                expect(TokenKind::LParen, "'('");
                if (peek().is_keyword("SELECT")) {
                    parse_nested_select();
                } else {
                    do {
                        parse_expr();
                    } while (accept(TokenKind::Comma));
                    expect(TokenKind::RParen, "')'");
                }
                continue;
            }
            if (accept_keyword("BETWEEN")) {
                parse_additive();
                expect_keyword("AND");
                parse_additive();
                continue;
            }
            if (accept_keyword("LIKE")) {
                parse_additive();
                if (accept_keyword("ESCAPE")) expect(TokenKind::String, "an escape string");
                continue;
            }
            if (negated) fail(ErrorCode::SyntaxError, peek(), "expected IN, BETWEEN or LIKE");
            break;
        }
    }

    void parse_additive() {
        parse_multiplicative();
        while (accept_op("+") || accept_op("-")) parse_multiplicative();
    }

    void parse_multiplicative() {
        parse_unary();
        while (accept_op("*") || accept_op("/") || accept_op("%") || accept_keyword("DIV") ||
               accept_keyword("MOD")) {
            parse_unary();
        }
    }

    void parse_unary() {
        if (accept_op("-") || accept_op("+")) {
            parse_unary();
            return;
        }
        parse_primary();
    }

    void parse_primary() {
        const Token& tok = peek();
        switch (tok.kind) {
            case TokenKind::Number:
            case TokenKind::String:
            case TokenKind::Variable:
                ++pos_;
                return;
            case TokenKind::LParen:
                ++pos_;
                if (peek().is_keyword("SELECT")) {
                    parse_nested_select();
                    return;
                }
                do {
                    parse_expr();
                } while (accept(TokenKind::Comma));
                expect(TokenKind::RParen, "')'");
                return;
            case TokenKind::Keyword:
                if (accept_keyword("NULL") || accept_keyword("TRUE") || accept_keyword("FALSE")) return;
                if (accept_keyword("EXISTS")) {
                    expect(TokenKind::LParen, "'('");
                    if (!peek().is_keyword("SELECT")) fail(ErrorCode::SyntaxError, peek(), "expected SELECT");
                    parse_nested_select();
                    return;
                }
                if (accept_keyword("CASE")) {
                    parse_case();
                    return;
                }
                fail(ErrorCode::SyntaxError, tok, "unexpected keyword");
            case TokenKind::Identifier:
            case TokenKind::QuotedIdentifier:
                if (tok.kind == TokenKind::Identifier && peek(1).kind == TokenKind::LParen) {
                    parse_function_call();
                    return;
                }
                parse_column_ref();
                return;
            default:
                fail(ErrorCode::SyntaxError, tok, "unexpected token");
        }
    }

    void parse_case() {
        if (!peek().is_keyword("WHEN")) parse_expr();
        if (!peek().is_keyword("WHEN")) fail(ErrorCode::SyntaxError, peek(), "expected WHEN");
        while (accept_keyword("WHEN")) {
            parse_expr();
            expect_keyword("THEN");
            parse_expr();
        }
        if (accept_keyword("ELSE")) parse_expr();
        expect_keyword("END");
    }

    void parse_function_call() {
        const Token& name = next();
        if (!is_supported_function(name.text)) {
            fail(ErrorCode::SyntaxError, name, "unknown function " + name.text);
        }
        expect(TokenKind::LParen, "'('");
        if (accept(TokenKind::RParen)) return;
        if (iequals(name.text, "COUNT") && accept_op("*")) {
            expect(TokenKind::RParen, "')'");
            return;
        }
        accept_keyword("DISTINCT");
        do {
            parse_expr();
        } while (accept(TokenKind::Comma));
        expect(TokenKind::RParen, "')'");
    }

    void parse_column_ref() {
        PendingUse use;
        use.scope = scope_;
        use.clause = clause_;
        std::string a = name_token();
        if (accept(TokenKind::Dot)) {
            std::string b = name_token();
            if (accept(TokenKind::Dot)) {
                use.schema = std::move(a);
                use.table = std::move(b);
                use.column = name_token();
            } else {
                use.table = std::move(a);
                use.column = std::move(b);
            }
        } else {
            use.column = std::move(a);
        }
        if (scope_ < 0) fail(ErrorCode::SyntaxError, t_[pos_ - 1], "column reference outside of a query");
        uses_.push_back(std::move(use));
    }

    // -- values (INSERT / UPDATE) ------------------------------------------
    ValueExpr parse_value() {
        const Token& tok = peek();
        if (tok.kind == TokenKind::String) {
            ++pos_;
            return Literal{tok.text, LiteralKind::String};
        }
        if (tok.kind == TokenKind::Number) {
            ++pos_;
            return Literal{tok.text, LiteralKind::Number};
        }
        if ((tok.is_op("-") || tok.is_op("+")) && peek(1).kind == TokenKind::Number) {
            std::string text = (tok.text == "-" ? "-" : "") + peek(1).text;
            pos_ += 2;
            return Literal{std::move(text), LiteralKind::Number};
        }
        if (tok.is_keyword("NULL")) {
            ++pos_;
            return Literal{"NULL", LiteralKind::Null};
        }
        if (tok.kind == TokenKind::LParen && peek(1).is_keyword("SELECT")) {
            ++pos_;
            const std::size_t begin = pos_;
            const int saved_scope = scope_;
            const Clause saved_clause = clause_;
            clause_ = Clause::Value;
            scope_ = -1;  // a value sub-query is never correlated with the target row
            ++depth_;
            parse_select(-1);
            --depth_;
            scope_ = saved_scope;
            clause_ = saved_clause;
            const std::size_t end = pos_;
            expect(TokenKind::RParen, "')'");
            return Subquery{render_tokens(t_.subspan(begin, end - begin))};
        }
        if (tok.kind == TokenKind::Variable) {
            fail(ErrorCode::ReservedVariable, tok, "session variables are reserved for the gateway");
        }
        fail(ErrorCode::UnsupportedStatement, tok, "a value must be a literal or a scalar sub-query");
    }

    // -- statements ---------------------------------------------------------
    void parse_top_select(StatementAnalysis& st) {
        st.kind = StatementKind::Select;
        root_ = static_cast<int>(scopes_.size());
        SelectParts parts = parse_select(-1);
        st.distinct = parts.distinct;
        st.projection = std::move(parts.projection);
        st.target_tables = parts.tables;
        st.join_tokens = slice(parts.join_begin, parts.join_end);
        st.where_tokens = slice(parts.where_begin, parts.where_end);
        st.tail_tokens = slice(parts.tail_begin, parts.tail_end);
    }

    void parse_insert(StatementAnalysis& st) {
        st.kind = StatementKind::Insert;
        expect_keyword("INSERT");
        expect_keyword("INTO");
        TableRef target = parse_table_name();
        if (peek().is_keyword("SELECT")) {
            fail(ErrorCode::UnsupportedStatement, peek(), "INSERT ... SELECT is not supported");
        }
        if (peek().is_keyword("SET")) {
            fail(ErrorCode::UnsupportedStatement, peek(), "INSERT ... SET is not supported");
        }
        expect(TokenKind::LParen, "a column list");
        std::vector<std::string> columns;
        do {
            const Token& col = peek();
            std::string name = name_token();
            for (const auto& c : columns) {
                if (iequals(c, name)) fail(ErrorCode::SyntaxError, col, "duplicate column " + name);
            }
            columns.push_back(std::move(name));
        } while (accept(TokenKind::Comma));
        expect(TokenKind::RParen, "')'");
        if (peek().is_keyword("SELECT")) {
            fail(ErrorCode::UnsupportedStatement, peek(), "INSERT ... SELECT is not supported");
        }
        expect_keyword("VALUES");
        expect(TokenKind::LParen, "'('");
        std::vector<ValueExpr> values;
        do {
            values.push_back(parse_value());
        } while (accept(TokenKind::Comma));
        expect(TokenKind::RParen, "')'");
        if (peek().kind == TokenKind::Comma) {
            fail(ErrorCode::UnsupportedStatement, peek(), "multi-row INSERT is not supported");
        }
        if (!at_end()) fail(ErrorCode::UnsupportedStatement, peek(), "unexpected clause after VALUES");
        if (values.size() != columns.size()) {
            fail(ErrorCode::SyntaxError, t_[pos_ - 1], "column count does not match value count");
        }
        st.target_tables.push_back(target);
        for (std::size_t i = 0; i < columns.size(); ++i) {
            Assignment a;
            a.field = FieldRef{target.schema, target.table, columns[i]};
            a.target = {Token{columns[i] == render_name(columns[i]) ? TokenKind::Identifier
                                                                    : TokenKind::QuotedIdentifier,
                              columns[i], 0}};
            a.value = std::move(values[i]);
            st.assignments.push_back(std::move(a));
        }
    }

    void parse_update(StatementAnalysis& st) {
        st.kind = StatementKind::Update;
        expect_keyword("UPDATE");
        root_ = new_scope(-1);
        scope_ = root_;
        TableRef target = parse_table_factor();
        scopes_[root_].tables.push_back(target);
        const std::size_t join_begin = pos_;
        parse_joins(root_);
        st.join_tokens = slice(join_begin, pos_);
        expect_keyword("SET");
        do {
            const Token& first = peek();
            std::size_t begin = pos_;
            std::string col = name_token();
            if (accept(TokenKind::Dot)) {
                if (!iequals(col, target.qualifier())) {
                    fail(ErrorCode::UnsupportedStatement, first,
                         "only columns of the updated table may be assigned");
                }
                col = name_token();
            }
            std::vector<Token> written = slice(begin, pos_);
            if (!accept_op("=")) fail(ErrorCode::SyntaxError, peek(), "expected '='");
            for (const auto& a : st.assignments) {
                if (iequals(a.field.field, col)) fail(ErrorCode::SyntaxError, first, "duplicate assignment to " + col);
            }
            Assignment a;
            a.field = FieldRef{target.schema, target.table, col};
            a.target = std::move(written);
            a.value = parse_value();
            st.assignments.push_back(std::move(a));
        } while (accept(TokenKind::Comma));
        if (accept_keyword("WHERE")) {
            const std::size_t begin = pos_;
            clause_ = Clause::Where;
            parse_expr();
            st.where_tokens = slice(begin, pos_);
        }
        if (peek().is_keyword("ORDER") || peek().is_keyword("LIMIT")) {
            fail(ErrorCode::UnsupportedStatement, peek(), "ORDER BY / LIMIT in UPDATE is not supported");
        }
        st.target_tables = scopes_[root_].tables;
    }

    void parse_show(StatementAnalysis& st) {
        st.kind = StatementKind::Show;
        expect_keyword("SHOW");
        if (accept_keyword("TABLES")) {
            st.show_kind = ShowKind::Tables;
        } else if (accept_keyword("DATABASES")) {
            st.show_kind = ShowKind::Databases;
        } else if (accept_keyword("COLUMNS")) {
            st.show_kind = ShowKind::Columns;
            expect_keyword("FROM");
            st.target_tables.push_back(parse_table_name());
        } else {
            fail(ErrorCode::UnsupportedStatement, peek(), "unsupported SHOW variant");
        }
    }

    // -- resolution ---------------------------------------------------------
    std::vector<std::vector<TableRef>> chain_of(int scope) const {
        std::vector<std::vector<TableRef>> chain;
        for (int s = scope; s >= 0; s = scopes_[s].parent) chain.push_back(scopes_[s].tables);
        return chain;
    }

    void resolve(StatementAnalysis& st) {
        for (const auto& a : st.assignments) {
            ColumnUse use;
            use.ref = a.field;
            use.qualified = true;
            use.qualifier = st.target_tables.front().qualifier();
            use.clause = Clause::Assignment;
            use.top_level = true;
            use.scopes = {{st.target_tables.front()}};
            st.accessed_fields.insert(a.field);
            st.column_uses.push_back(std::move(use));
        }
        for (const auto& p : uses_) {
            ColumnUse use;
            use.clause = p.clause;
            use.qualified = p.table.has_value();
            use.qualifier = p.table;
            use.scopes = chain_of(p.scope);
            use.ref.field = p.column;
            if (p.table) {
                bool found = false;
                for (int s = p.scope; s >= 0 && !found; s = scopes_[s].parent) {
                    for (const auto& t : scopes_[s].tables) {
                        const bool match = p.schema ? (t.schema && iequals(*t.schema, *p.schema) &&
                                                       iequals(t.table, *p.table) && !t.alias)
                                                    : iequals(t.qualifier(), *p.table);
                        if (match) {
                            use.ref.schema = t.schema;
                            use.ref.table = t.table;
                            use.top_level = s == root_;
                            found = true;
                            break;
                        }
                    }
                }
                if (!found) {
                    throw SqlError(ErrorCode::SyntaxError, index_, *p.table,
                                   "unknown table or alias " + *p.table);
                }
            } else {
                int s = p.scope;
                while (s >= 0 && scopes_[s].tables.empty()) s = scopes_[s].parent;
                if (s < 0) {
                    throw SqlError(ErrorCode::SyntaxError, index_, p.column,
                                   "column " + p.column + " has no table to refer to");
                }
                if (scopes_[s].tables.size() == 1) {
                    use.ref.schema = scopes_[s].tables.front().schema;
                    use.ref.table = scopes_[s].tables.front().table;
                }
                use.top_level = s == root_;
                const auto& aliases = scopes_[p.scope].aliases;
                use.may_be_alias = std::any_of(aliases.begin(), aliases.end(),
                                               [&](const std::string& a) { return iequals(a, p.column); });
            }
            st.accessed_fields.insert(use.ref);
            st.column_uses.push_back(std::move(use));
        }
    }

    std::span<const Token> t_;
    std::size_t index_;
    std::size_t pos_ = 0;
    std::vector<Scope> scopes_;
    std::vector<PendingUse> uses_;
    int scope_ = -1;
    int root_ = -1;
    int depth_ = 0;
    Clause clause_ = Clause::Where;
};

std::string join_items(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

bool opt_iequals(const std::optional<std::string>& a, const std::optional<std::string>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || iequals(*a, *b);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain helpers
// ---------------------------------------------------------------------------
std::string FieldRef::to_string() const {
    std::string out;
    if (schema) out += *schema + ".";
    out += table.empty() ? std::string("?") : table;
    out += "." + field;
    return out;
}

bool operator==(const FieldRef& a, const FieldRef& b) {
    return opt_iequals(a.schema, b.schema) && iequals(a.table, b.table) && iequals(a.field, b.field);
}

bool FieldRefLess::operator()(const FieldRef& a, const FieldRef& b) const {
    auto key = [](const FieldRef& f) {
        return std::tuple(f.schema ? to_lower(*f.schema) : std::string(), f.schema.has_value(),
                          to_lower(f.table), to_lower(f.field));
    };
    return key(a) < key(b);
}

std::string TableRef::render_name_only() const {
    if (table == "DUAL" && !schema) return "DUAL";
    return (schema ? render_name(*schema) + "." : std::string()) + render_name(table);
}

std::string TableRef::render() const {
    return render_name_only() + (alias ? " " + render_name(*alias) : std::string());
}

bool operator==(const TableRef& a, const TableRef& b) {
    return opt_iequals(a.schema, b.schema) && iequals(a.table, b.table) && opt_iequals(a.alias, b.alias);
}

std::string_view to_string(StatementKind kind) {
    switch (kind) {
        case StatementKind::Show: return "SHOW";
        case StatementKind::Select: return "SELECT";
        case StatementKind::Insert: return "INSERT";
        case StatementKind::Update: return "UPDATE";
    }
    return "SELECT";
}

std::string render_value(const ValueExpr& value) {
    if (const auto* lit = std::get_if<Literal>(&value)) {
        switch (lit->kind) {
            case LiteralKind::String: return quote_string(lit->text);
            case LiteralKind::Number: return lit->text;
            case LiteralKind::Null: return "NULL";
        }
    }
    return "(" + std::get<Subquery>(value).text + ")";
}

bool operator==(const Assignment& a, const Assignment& b) {
    return a.field == b.field && a.target == b.target && a.value == b.value;
}

std::optional<std::string> StatementAnalysis::where_text() const {
    if (where_tokens.empty()) return std::nullopt;
    return render_tokens(where_tokens);
}

std::optional<std::string> StatementAnalysis::join_text() const {
    if (join_tokens.empty()) return std::nullopt;
    return render_tokens(join_tokens);
}

bool operator==(const StatementAnalysis& a, const StatementAnalysis& b) {
    if (a.kind != b.kind || a.target_tables != b.target_tables || a.assignments != b.assignments ||
        a.distinct != b.distinct || a.projection != b.projection || a.tail_tokens != b.tail_tokens ||
        a.where_tokens != b.where_tokens || a.join_tokens != b.join_tokens) {
        return false;
    }
    if (a.kind == StatementKind::Show && a.show_kind != b.show_kind) return false;
    if (a.accessed_fields.size() != b.accessed_fields.size()) return false;
    return std::equal(a.accessed_fields.begin(), a.accessed_fields.end(), b.accessed_fields.begin(),
                      [](const FieldRef& x, const FieldRef& y) { return x == y; });
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------
SqlScript parse_script(std::string_view text, ParseOptions options) {
    if (trim(text).empty()) {
        throw SqlError(ErrorCode::SyntaxError, 0, "", "empty request");
    }
    const std::vector<Token> tokens = tokenize(text, LexOptions{options.allow_variables});
    SqlScript script;
    script.raw_text = std::string(text);

    std::size_t begin = 0;
    std::size_t index = 0;
    while (begin < tokens.size()) {
        std::size_t end = begin;
        while (end < tokens.size() && tokens[end].kind != TokenKind::Semicolon) ++end;
        if (end == begin) throw SqlError(ErrorCode::SyntaxError, index, ";", "empty statement");

        std::span<const Token> stmt_tokens(tokens.data() + begin, end - begin);
        StatementAnalysis st = Parser(stmt_tokens, index).parse();
        const std::size_t from = tokens[begin].offset;
        const std::size_t to = end < tokens.size() ? tokens[end].offset + 1 : text.size();
        st.source_text = trim(text.substr(from, to - from));
        script.statements.push_back(std::move(st));

        begin = end + 1;
        ++index;
    }
    if (script.statements.empty()) throw SqlError(ErrorCode::SyntaxError, 0, "", "empty request");
    return script;
}

StatementAnalysis parse_statement(std::string_view text, ParseOptions options) {
    SqlScript script = parse_script(text, options);
    if (script.statements.size() != 1) {
        throw SqlError(ErrorCode::SyntaxError, 1, ";", "expected exactly one statement");
    }
    return std::move(script.statements.front());
}

std::string render(const StatementAnalysis& st) {
    std::string out;
    switch (st.kind) {
        case StatementKind::Show:
            switch (st.show_kind) {
                case ShowKind::Tables: out = "SHOW TABLES"; break;
                case ShowKind::Databases: out = "SHOW DATABASES"; break;
                case ShowKind::Columns: out = "SHOW COLUMNS FROM " + st.target_tables.front().render_name_only(); break;
            }
            break;
        case StatementKind::Select: {
            std::vector<std::string> items;
            for (const auto& item : st.projection) {
                if (const auto* star = std::get_if<StarItem>(&item)) {
                    items.push_back(star->qualifier ? render_name(*star->qualifier) + ".*" : "*");
                } else {
                    const auto& e = std::get<ExprItem>(item);
                    items.push_back(render_tokens(e.expr) + (e.alias ? " AS " + render_name(*e.alias) : ""));
                }
            }
            out = "SELECT ";
            if (st.distinct) out += "DISTINCT ";
            out += join_items(items, ", ");
            if (!st.target_tables.empty()) {
                out += " FROM " + st.target_tables.front().render();
                if (!st.join_tokens.empty()) out += " " + render_tokens(st.join_tokens);
            }
            if (!st.where_tokens.empty()) out += " WHERE " + render_tokens(st.where_tokens);
            if (!st.tail_tokens.empty()) out += " " + render_tokens(st.tail_tokens);
            break;
        }
        case StatementKind::Insert: {
            std::vector<std::string> cols;
            std::vector<std::string> vals;
            for (const auto& a : st.assignments) {
                cols.push_back(render_tokens(a.target));
                vals.push_back(render_value(a.value));
            }
            out = "INSERT INTO " + st.target_tables.front().render_name_only() + " (" + join_items(cols, ", ") +
                  ") VALUES (" + join_items(vals, ", ") + ")";
            break;
        }
        case StatementKind::Update: {
            std::vector<std::string> sets;
            for (const auto& a : st.assignments) {
                sets.push_back(render_tokens(a.target) + " = " + render_value(a.value));
            }
            out = "UPDATE " + st.target_tables.front().render();
            if (!st.join_tokens.empty()) out += " " + render_tokens(st.join_tokens);
            out += " SET " + join_items(sets, ", ");
            if (!st.where_tokens.empty()) out += " WHERE " + render_tokens(st.where_tokens);
            break;
        }
    }
    return out + ";";
}

}  // namespace secss::sql
