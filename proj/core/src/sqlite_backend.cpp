// ---------------------------------------------------------------------------
// sqlite_backend.cpp
//
// SQLite adapter. Every session opens its own connection with an empty
// in-memory main database and ATTACHes the data file under the configured
// schema name, so both `children` and `playground.children` resolve.
//
// Session variables live in a per-session map and are bound to SQLite named
// parameters (`@name`), which share the MySQL spelling.
// ---------------------------------------------------------------------------

#include "secss/backend.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <map>
#include <sstream>

#include "secss/sql_frontend.hpp"

namespace secss::backend {

namespace {

using sql::Token;
using sql::TokenKind;

// ---------------------------------------------------------------------------
// MySQL-compatible date functions
// ---------------------------------------------------------------------------
struct Ymd {
    int year = 0;
    int month = 0;
    int day = 0;
};

constexpr int kDaysInMonth[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_year(int y) { return ((y & 3) == 0 && (y % 100 || (y % 400 == 0 && y))) ? 366 : 365; }

// "YYYY-MM-DD" with an optional time part; also the zero date.
std::optional<Ymd> parse_date(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    Ymd d;
    auto read = [&](int& out, std::size_t min_digits, std::size_t max_digits) {
        std::size_t n = 0;
        out = 0;
        while (n < s.size() && n < max_digits && s[n] >= '0' && s[n] <= '9') out = out * 10 + (s[n++] - '0');
        if (n < min_digits) return false;
        s.remove_prefix(n);
        return true;
    };
    if (!read(d.year, 4, 4) || s.empty() || s.front() != '-') return std::nullopt;
    s.remove_prefix(1);
    if (!read(d.month, 1, 2) || s.empty() || s.front() != '-') return std::nullopt;
    s.remove_prefix(1);
    if (!read(d.day, 1, 2)) return std::nullopt;
    if (!s.empty() && s.front() != ' ' && s.front() != 'T') return std::nullopt;
    if (d.year == 0 && d.month == 0 && d.day == 0) return d;
    if (d.month < 1 || d.month > 12 || d.day < 1) return std::nullopt;
    const int dim = d.month == 2 && leap(d.year) ? 29 : kDaysInMonth[d.month - 1];
    if (d.day > dim) return std::nullopt;
    return d;
}

std::string format_date(int y, int m, int d) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

std::optional<Ymd> arg_date(sqlite3_value* v) {
    if (sqlite3_value_type(v) == SQLITE_NULL) return std::nullopt;
    const auto* text = reinterpret_cast<const char*>(sqlite3_value_text(v));
    if (!text) return std::nullopt;
    return parse_date(text);
}

void result_text(sqlite3_context* ctx, const std::string& s) {
    sqlite3_result_text(ctx, s.c_str(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
}

struct FunctionContext {
    std::optional<Clock::time_point> now;
};

Clock::time_point now_of(sqlite3_context* ctx) {
    const auto* fc = static_cast<const FunctionContext*>(sqlite3_user_data(ctx));
    return fc && fc->now ? *fc->now : Clock::now();
}

void fn_now(sqlite3_context* ctx, int, sqlite3_value**) { result_text(ctx, format_utc(now_of(ctx), ' ')); }

void fn_curdate(sqlite3_context* ctx, int, sqlite3_value**) {
    result_text(ctx, format_utc(now_of(ctx), ' ').substr(0, 10));
}

void fn_date(sqlite3_context* ctx, int, sqlite3_value** argv) {
    const auto d = arg_date(argv[0]);
    if (!d) return sqlite3_result_null(ctx);
    result_text(ctx, format_date(d->year, d->month, d->day));
}

void fn_to_days(sqlite3_context* ctx, int, sqlite3_value** argv) {
    const auto d = arg_date(argv[0]);
    if (!d) return sqlite3_result_null(ctx);
    sqlite3_result_int64(ctx, mysql_dates::to_days(d->year, d->month, d->day));
}

void fn_datediff(sqlite3_context* ctx, int, sqlite3_value** argv) {
    const auto a = arg_date(argv[0]);
    const auto b = arg_date(argv[1]);
    if (!a || !b) return sqlite3_result_null(ctx);
    sqlite3_result_int64(ctx, mysql_dates::to_days(a->year, a->month, a->day) -
                                  mysql_dates::to_days(b->year, b->month, b->day));
}

void fn_from_days(sqlite3_context* ctx, int, sqlite3_value** argv) {
    if (sqlite3_value_type(argv[0]) == SQLITE_NULL) return sqlite3_result_null(ctx);
    result_text(ctx, mysql_dates::from_days(sqlite3_value_int64(argv[0])));
}

template <int Ymd::*Part>
void fn_part(sqlite3_context* ctx, int, sqlite3_value** argv) {
    const auto d = arg_date(argv[0]);
    if (!d) return sqlite3_result_null(ctx);
    sqlite3_result_int(ctx, (*d).*Part);
}

void fn_concat(sqlite3_context* ctx, int argc, sqlite3_value** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (sqlite3_value_type(argv[i]) == SQLITE_NULL) return sqlite3_result_null(ctx);
        const auto* t = reinterpret_cast<const char*>(sqlite3_value_text(argv[i]));
        out.append(t, static_cast<std::size_t>(sqlite3_value_bytes(argv[i])));
    }
    result_text(ctx, out);
}

void register_functions(sqlite3* db, FunctionContext* fc) {
    constexpr int kDet = SQLITE_UTF8 | SQLITE_DETERMINISTIC;
    struct Fn {
        const char* name;
        int argc;
        int flags;
        void (*fn)(sqlite3_context*, int, sqlite3_value**);
    };
    const Fn fns[] = {
        {"NOW", 0, SQLITE_UTF8, fn_now},
        {"CURDATE", 0, SQLITE_UTF8, fn_curdate},
        {"DATE", 1, kDet, fn_date},
        {"TO_DAYS", 1, kDet, fn_to_days},
        {"DATEDIFF", 2, kDet, fn_datediff},
        {"FROM_DAYS", 1, kDet, fn_from_days},
        {"YEAR", 1, kDet, fn_part<&Ymd::year>},
        {"MONTH", 1, kDet, fn_part<&Ymd::month>},
        {"DAY", 1, kDet, fn_part<&Ymd::day>},
        {"CONCAT", -1, kDet, fn_concat},
    };
    for (const auto& f : fns) {
        sqlite3_create_function_v2(db, f.name, f.argc, f.flags, fc, f.fn, nullptr, nullptr, nullptr);
    }
}

// ---------------------------------------------------------------------------
// Connections and statements
// ---------------------------------------------------------------------------
struct DbCloser {
    void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
};
using DbPtr = std::unique_ptr<sqlite3, DbCloser>;

struct StmtFinalizer {
    void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
};
using StmtPtr = std::unique_ptr<sqlite3_stmt, StmtFinalizer>;

struct ValueFree {
    void operator()(sqlite3_value* v) const { sqlite3_value_free(v); }
};
using ValuePtr = std::unique_ptr<sqlite3_value, ValueFree>;

[[noreturn]] void fail(sqlite3* db, int rc, std::string_view context) {
    const std::string msg = std::string(context) + ": " + sqlite3_errmsg(db);
    if ((rc & 0xff) == SQLITE_CONSTRAINT) throw BackendError(ErrorCode::ConstraintViolation, msg);
    if (msg.find("no such table") != std::string::npos) throw BackendError(ErrorCode::UnknownTable, msg);
    throw BackendError(ErrorCode::ExecutionError, msg);
}

void exec(sqlite3* db, const std::string& sql) {
    char* err = nullptr;
    const int rc = sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
        std::string msg = err ? err : sqlite3_errstr(rc);
        sqlite3_free(err);
        if ((rc & 0xff) == SQLITE_CONSTRAINT) throw BackendError(ErrorCode::ConstraintViolation, msg);
        throw BackendError(ErrorCode::ExecutionError, msg);
    }
}

DbPtr open_db(const std::string& path, int flags) {
    sqlite3* raw = nullptr;
    const int rc = sqlite3_open_v2(path.c_str(), &raw, flags, nullptr);
    DbPtr db(raw);
    if (rc != SQLITE_OK) {
        throw BackendError(ErrorCode::ConnectionError,
                           "cannot open " + path + ": " + (raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc)));
    }
    sqlite3_busy_timeout(db.get(), 10000);
    sqlite3_extended_result_codes(db.get(), 1);
    return db;
}

std::string quote_ident(std::string_view name) {
    std::string out = "\"";
    for (char c : name) {
        out += c;
        if (c == '"') out += '"';
    }
    return out + "\"";
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Value column_value(sqlite3_stmt* st, int i) {
    switch (sqlite3_column_type(st, i)) {
        case SQLITE_NULL: return std::nullopt;
        case SQLITE_INTEGER: return std::to_string(sqlite3_column_int64(st, i));
        case SQLITE_FLOAT: return format_double(sqlite3_column_double(st, i));
        default: {
            const auto* p = static_cast<const char*>(sqlite3_column_blob(st, i));
            return std::string(p ? p : "", static_cast<std::size_t>(sqlite3_column_bytes(st, i)));
        }
    }
}

// ---------------------------------------------------------------------------
// MySQL to SQLite translation, token level
// ---------------------------------------------------------------------------
std::vector<Token> lex(std::string_view sql) {
    std::vector<Token> toks = sql::tokenize(sql, {.allow_variables = true});
    while (!toks.empty() && toks.back().kind == TokenKind::Semicolon) toks.pop_back();
    for (const auto& t : toks) {
        if (t.kind == TokenKind::Semicolon) {
            throw BackendError(ErrorCode::ExecutionError, "one statement per call");
        }
    }
    return toks;
}

std::vector<Token> generic_translate(const std::vector<Token>& in) {
    std::vector<Token> out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const Token& t = in[i];
        if (t.is_keyword("FROM") && i + 1 < in.size() && in[i + 1].is_keyword("DUAL")) {
            ++i;
            continue;
        }
        if (t.is_keyword("DIV")) {
            out.push_back(Token{TokenKind::Operator, "/", 0});
        } else if (t.is_keyword("MOD")) {
            out.push_back(Token{TokenKind::Operator, "%", 0});
        } else if (t.is_op("<=>")) {
            out.push_back(Token{TokenKind::Keyword, "IS", 0});
        } else {
            out.push_back(t);
        }
    }
    return out;
}

std::size_t find_top(const std::vector<Token>& toks, std::size_t from, std::string_view kw) {
    int depth = 0;
    for (std::size_t i = from; i < toks.size(); ++i) {
        if (toks[i].kind == TokenKind::LParen) ++depth;
        if (toks[i].kind == TokenKind::RParen) --depth;
        if (depth == 0 && toks[i].is_keyword(kw)) return i;
    }
    return toks.size();
}

std::string render(const std::vector<Token>& toks, std::size_t b, std::size_t e) {
    return sql::render_tokens(std::span<const Token>(toks.data() + b, e - b));
}

// UPDATE t [alias] [JOIN ...] SET [q.]c = v, ... [WHERE w]
std::string translate_update(const std::vector<Token>& toks) {
    std::size_t i = 1;
    auto name_at = [&](std::size_t k) { return k < toks.size() && toks[k].is_name(); };
    if (!name_at(i)) throw BackendError(ErrorCode::ExecutionError, "malformed UPDATE");
    std::size_t table_end = i + 1;
    if (table_end + 1 < toks.size() && toks[table_end].kind == TokenKind::Dot && name_at(table_end + 1)) {
        table_end += 2;
    }
    const std::string table = render(toks, i, table_end);
    std::optional<std::string> alias;
    std::size_t k = table_end;
    if (k < toks.size() && toks[k].is_keyword("AS")) ++k;
    if (name_at(k)) alias = toks[k++].text;

    const std::size_t set_at = find_top(toks, k, "SET");
    if (set_at == toks.size()) throw BackendError(ErrorCode::ExecutionError, "UPDATE without SET");
    const std::size_t where_at = find_top(toks, set_at, "WHERE");

    // SQLite wants bare column names on the left of SET.
    std::vector<std::string> sets;
    std::size_t start = set_at + 1;
    int depth = 0;
    for (std::size_t p = start; p <= where_at; ++p) {
        if (p < where_at) {
            if (toks[p].kind == TokenKind::LParen) ++depth;
            if (toks[p].kind == TokenKind::RParen) --depth;
            if (!(depth == 0 && toks[p].kind == TokenKind::Comma)) continue;
        }
        std::size_t col = start;
        if (start + 2 < p && toks[start + 1].kind == TokenKind::Dot) col = start + 2;
        sets.push_back(render(toks, col, p));
        start = p + 1;
    }
    std::string set_text;
    for (std::size_t n = 0; n < sets.size(); ++n) set_text += (n ? ", " : "") + sets[n];

    const std::string alias_text = alias ? " AS " + sql::render_name(*alias) : "";
    const std::string where = where_at < toks.size() ? render(toks, where_at + 1, toks.size()) : "";
    if (k == set_at) {
        return "UPDATE " + table + alias_text + " SET " + set_text + (where.empty() ? "" : " WHERE " + where);
    }
    const std::string qualifier = alias ? sql::render_name(*alias) : table;
    std::string inner = "SELECT " + qualifier + ".rowid FROM " + table +
                        (alias ? " " + sql::render_name(*alias) : "") + " " + render(toks, k, set_at);
    if (!where.empty()) inner += " WHERE " + where;
    return "UPDATE " + table + alias_text + " SET " + set_text + " WHERE rowid IN (" + inner + ")";
}

std::string translate(const std::vector<Token>& raw) {
    const std::vector<Token> toks = generic_translate(raw);
    if (!toks.empty() && toks.front().is_keyword("UPDATE")) return translate_update(toks);
    return sql::render_tokens(toks);
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------
class SqliteSession : public Session {
public:
    SqliteSession(const std::filesystem::path& path, std::string schema, std::optional<Clock::time_point> now,
                  bool immediate)
        : schema_(std::move(schema)) {
        fc_.now = now;
        db_ = open_db(":memory:", SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX);
        register_functions(db_.get(), &fc_);
        exec(db_.get(), "PRAGMA foreign_keys = ON");
        sqlite3_stmt* raw = nullptr;
        const std::string attach = "ATTACH DATABASE ? AS " + quote_ident(schema_);
        if (sqlite3_prepare_v2(db_.get(), attach.c_str(), -1, &raw, nullptr) != SQLITE_OK) {
            fail(db_.get(), SQLITE_ERROR, "attach");
        }
        StmtPtr st(raw);
        const std::string p = path.string();
        sqlite3_bind_text(st.get(), 1, p.c_str(), -1, SQLITE_TRANSIENT);
        if (const int rc = sqlite3_step(st.get()); rc != SQLITE_DONE) fail(db_.get(), rc, "attach");
        st.reset();
        exec(db_.get(), immediate ? "BEGIN IMMEDIATE" : "BEGIN");
        open_ = true;
    }

    ~SqliteSession() override {
        if (open_) {
            sqlite3_exec(db_.get(), "ROLLBACK", nullptr, nullptr, nullptr);
        }
    }

    ResultRelation execute(const rewrite::TransformedScript& script) override {
        for (const auto& s : script.set_statements) execute_statement(s);
        return execute_statement(script.final_statement);
    }

    ResultRelation execute_statement(std::string_view text) override {
        if (!open_) throw BackendError(ErrorCode::ExecutionError, "session already finished");
        const std::vector<Token> toks = lex(text);
        if (toks.empty()) throw BackendError(ErrorCode::ExecutionError, "empty statement");
        if (toks.front().is_keyword("SET")) return run_set(toks);
        if (toks.front().is_keyword("SHOW")) return run_show(text);
        return run(translate(toks));
    }

    void commit() override {
        if (!open_) throw BackendError(ErrorCode::ExecutionError, "session already finished");
        exec(db_.get(), "COMMIT");
        open_ = false;
        vars_.clear();
    }

    void rollback() override {
        if (!open_) return;
        exec(db_.get(), "ROLLBACK");
        open_ = false;
        vars_.clear();
    }

private:
    StmtPtr prepare(const std::string& sql) {
        sqlite3_stmt* raw = nullptr;
        const int rc = sqlite3_prepare_v2(db_.get(), sql.c_str(), static_cast<int>(sql.size()), &raw, nullptr);
        if (rc != SQLITE_OK) fail(db_.get(), rc, "prepare");
        StmtPtr st(raw);
        if (!st) throw BackendError(ErrorCode::ExecutionError, "empty statement");
        const int n = sqlite3_bind_parameter_count(st.get());
        for (int i = 1; i <= n; ++i) {
            const char* name = sqlite3_bind_parameter_name(st.get(), i);
            if (!name || name[0] != '@') throw BackendError(ErrorCode::ExecutionError, "unsupported parameter");
            auto it = vars_.find(sql::to_lower(name + 1));
            if (it == vars_.end() || !it->second) {
                sqlite3_bind_null(st.get(), i);
            } else {
                sqlite3_bind_value(st.get(), i, it->second.get());
            }
        }
        return st;
    }

    ResultRelation run(const std::string& sql) {
        StmtPtr st = prepare(sql);
        ResultRelation out;
        const int ncol = sqlite3_column_count(st.get());
        for (int i = 0; i < ncol; ++i) out.columns.emplace_back(sqlite3_column_name(st.get(), i));
        while (true) {
            const int rc = sqlite3_step(st.get());
            if (rc == SQLITE_DONE) break;
            if (rc != SQLITE_ROW) fail(db_.get(), rc, "execute");
            std::vector<Value> row;
            row.reserve(static_cast<std::size_t>(ncol));
            for (int i = 0; i < ncol; ++i) row.push_back(column_value(st.get(), i));
            out.rows.push_back(std::move(row));
        }
        if (!sqlite3_stmt_readonly(st.get())) out.affected_rows = sqlite3_changes(db_.get());
        return out;
    }

    // SET @v = expr. A parenthesized SELECT must yield at most one row,
    // as in MySQL; no row gives NULL.
    ResultRelation run_set(const std::vector<Token>& toks) {
        if (toks.size() < 4 || toks[1].kind != TokenKind::Variable || !toks[2].is_op("=")) {
            throw BackendError(ErrorCode::ExecutionError, "expected SET @variable = expression");
        }
        const std::vector<Token> expr(toks.begin() + 3, toks.end());
        const bool wrapped_select = expr.size() > 2 && expr.front().kind == TokenKind::LParen &&
                                    expr.back().kind == TokenKind::RParen && expr[1].is_keyword("SELECT") &&
                                    find_closing(expr) == expr.size() - 1;
        std::string query;
        if (wrapped_select) {
            query = translate(std::vector<Token>(expr.begin() + 1, expr.end() - 1));
        } else {
            std::vector<Token> sel{Token{TokenKind::Keyword, "SELECT", 0}};
            sel.insert(sel.end(), expr.begin(), expr.end());
            query = translate(sel);
        }
        StmtPtr st = prepare(query);
        if (sqlite3_column_count(st.get()) != 1) {
            throw BackendError(ErrorCode::ExecutionError, "Operand should contain 1 column");
        }
        ValuePtr value;
        int rows = 0;
        while (true) {
            const int rc = sqlite3_step(st.get());
            if (rc == SQLITE_DONE) break;
            if (rc != SQLITE_ROW) fail(db_.get(), rc, "SET");
            if (++rows > 1) throw BackendError(ErrorCode::ExecutionError, "Subquery returns more than 1 row");
            value.reset(sqlite3_value_dup(sqlite3_column_value(st.get(), 0)));
        }
        vars_[sql::to_lower(toks[1].text)] = std::move(value);
        return {};
    }

    static std::size_t find_closing(const std::vector<Token>& toks) {
        int depth = 0;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (toks[i].kind == TokenKind::LParen) ++depth;
            if (toks[i].kind == TokenKind::RParen && --depth == 0) return i;
        }
        return toks.size();
    }

    ResultRelation run_show(std::string_view text) {
        const sql::StatementAnalysis st = sql::parse_statement(text);
        const std::string schema = quote_ident(schema_);
        ResultRelation out;
        switch (st.show_kind) {
            case sql::ShowKind::Databases:
                out.columns = {"Database"};
                out.rows.push_back({schema_});
                return out;
            case sql::ShowKind::Tables: {
                out = run("SELECT name FROM " + schema +
                          ".sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name");
                out.columns = {"Tables_in_" + schema_};
                return out;
            }
            case sql::ShowKind::Columns: break;
        }
        const sql::TableRef& t = st.target_tables.front();
        if (t.schema && !sql::iequals(*t.schema, schema_)) {
            throw BackendError(ErrorCode::UnknownTable, "unknown table " + t.render_name_only());
        }
        const ResultRelation info = run("PRAGMA " + schema + ".table_info(" + quote_ident(t.table) + ")");
        if (info.rows.empty()) throw BackendError(ErrorCode::UnknownTable, "unknown table " + t.table);
        const ResultRelation master =
            run("SELECT sql FROM " + schema + ".sqlite_master WHERE type = 'table' AND name = " +
                sql::quote_string(t.table));
        const std::string ddl = master.rows.empty() || !master.rows[0][0] ? "" : sql::to_upper(*master.rows[0][0]);

        // Single-column unique indexes give "UNI".
        std::set<std::string> unique;
        const ResultRelation indexes = run("PRAGMA " + schema + ".index_list(" + quote_ident(t.table) + ")");
        for (const auto& idx : indexes.rows) {
            if (!idx[1] || !idx[2] || *idx[2] != "1") continue;
            const ResultRelation cols = run("PRAGMA " + schema + ".index_info(" + quote_ident(*idx[1]) + ")");
            if (cols.rows.size() == 1 && cols.rows[0][2]) unique.insert(sql::to_lower(*cols.rows[0][2]));
        }
        std::set<std::string> foreign;
        const ResultRelation fks = run("PRAGMA " + schema + ".foreign_key_list(" + quote_ident(t.table) + ")");
        for (const auto& fk : fks.rows) {
            if (fk[3]) foreign.insert(sql::to_lower(*fk[3]));
        }

        out.columns = {"Field", "Type", "Null", "Key", "Default", "Extra"};
        for (const auto& row : info.rows) {
            // cid, name, type, notnull, dflt_value, pk
            const std::string name = row[1].value_or("");
            const bool pk = row[5] && *row[5] != "0";
            const std::string type = row[2].value_or("");
            const bool notnull = (row[3] && *row[3] == "1") || pk;
            std::string key;
            if (pk) {
                key = "PRI";
            } else if (unique.contains(sql::to_lower(name))) {
                key = "UNI";
            } else if (foreign.contains(sql::to_lower(name))) {
                key = "MUL";
            }
            const bool autoinc = pk && sql::iequals(type, "INTEGER") && ddl.find("AUTOINCREMENT") != std::string::npos;
            out.rows.push_back({name, type, std::string(notnull ? "NO" : "YES"), key, row[4],
                                std::string(autoinc ? "auto_increment" : "")});
        }
        return out;
    }

    std::string schema_;
    FunctionContext fc_;
    DbPtr db_;
    bool open_ = false;
    std::map<std::string, ValuePtr> vars_;
};

std::string url_decode(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            int v = 0;
            std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
            out += static_cast<char>(v);
            i += 2;
        } else if (s[i] == '+') {
            out += ' ';
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownTable: return "UnknownTable";
        case ErrorCode::ConstraintViolation: return "ConstraintViolation";
        case ErrorCode::ExecutionError: return "ExecutionError";
        case ErrorCode::ConnectionError: return "ConnectionError";
        case ErrorCode::SchemaExists: return "SchemaExists";
    }
    return "ExecutionError";
}

BackendError::BackendError(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

namespace mysql_dates {

std::int64_t to_days(int year, int month, int day) {
    if (year == 0 && month == 0) return 0;
    std::int64_t y = year;
    std::int64_t delsum = 365 * y + 31 * (month - 1) + day;
    if (month <= 2) {
        --y;
    } else {
        delsum -= (month * 4 + 23) / 10;
    }
    const std::int64_t temp = ((y / 100 + 1) * 3) / 4;
    return delsum + y / 4 - temp;
}

std::string from_days(std::int64_t daynr) {
    if (daynr <= 365 || daynr >= 3652500) return "0000-00-00";
    int year = static_cast<int>(daynr * 100 / 36525);
    const std::int64_t temp = (((year - 1) / 100 + 1) * 3) / 4;
    std::int64_t day_of_year = daynr - static_cast<std::int64_t>(year) * 365 - (year - 1) / 4 + temp;
    int diy = 0;
    while (day_of_year > (diy = days_in_year(year))) {
        day_of_year -= diy;
        ++year;
    }
    int leap_day = 0;
    if (diy == 366 && day_of_year > 31 + 28) {
        --day_of_year;
        if (day_of_year == 31 + 28) leap_day = 1;
    }
    int month = 1;
    for (const int* m = kDaysInMonth; day_of_year > *m; day_of_year -= *(m++), ++month) {
    }
    return format_date(year, month, static_cast<int>(day_of_year) + leap_day);
}

}  // namespace mysql_dates

Clock::time_point parse_utc(std::string_view text) {
    std::tm tm{};
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const std::string str(text);
    char sep = 0;
    if (std::sscanf(str.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s) != 7 ||
        (sep != 'T' && sep != ' ')) {
        throw BackendError(ErrorCode::ConnectionError, "bad timestamp '" + str + "'");
    }
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = s;
    return Clock::from_time_t(timegm(&tm));
}

std::string format_utc(Clock::time_point t, char separator) {
    const std::time_t tt = Clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[80];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d%c%02d:%02d:%02d", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  separator, tm.tm_hour, tm.tm_min, tm.tm_sec);
    std::string out = buf;
    if (separator == 'T') out += 'Z';
    return out;
}

SqliteBackend::SqliteBackend(std::filesystem::path path, std::string schema)
    : path_(std::move(path)), schema_(std::move(schema)) {
    if (schema_.empty() || sql::iequals(schema_, "main") || sql::iequals(schema_, "temp")) {
        throw BackendError(ErrorCode::ConnectionError, "schema name '" + schema_ + "' is reserved");
    }
    DbPtr db = open_db(path_.string(), SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
    exec(db.get(), "PRAGMA journal_mode = WAL");
    exec(db.get(), "PRAGMA synchronous = NORMAL");
}

SqliteBackend::~SqliteBackend() = default;

std::unique_ptr<SqliteBackend> SqliteBackend::open(std::string_view connection_string) {
    constexpr std::string_view kScheme = "sqlite:";
    if (!connection_string.starts_with(kScheme)) {
        throw BackendError(ErrorCode::ConnectionError,
                           "unsupported backend '" + std::string(connection_string) + "' (expected sqlite:<path>)");
    }
    std::string_view rest = connection_string.substr(kScheme.size());
    const auto q = rest.find('?');
    const std::string path = url_decode(rest.substr(0, q));
    if (path.empty()) throw BackendError(ErrorCode::ConnectionError, "missing database path");
    std::map<std::string, std::string> params;
    if (q != std::string_view::npos) {
        std::string_view query = rest.substr(q + 1);
        while (!query.empty()) {
            const auto amp = query.find('&');
            const std::string_view pair = query.substr(0, amp);
            const auto eq = pair.find('=');
            params[std::string(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(pair.substr(eq + 1));
            if (amp == std::string_view::npos) break;
            query.remove_prefix(amp + 1);
        }
    }
    std::string schema = params.count("schema") ? params["schema"] : std::filesystem::path(path).stem().string();
    auto backend = std::make_unique<SqliteBackend>(path, schema);
    if (params.count("now")) backend->set_clock(parse_utc(params["now"]));
    return backend;
}

BackendCapabilities SqliteBackend::capabilities() const {
    return {true, true, {"YEAR", "FROM_DAYS", "DATEDIFF", "NOW", "DATE"}};
}

std::vector<std::string> SqliteBackend::catalog_columns(const std::string& schema, const std::string& table) const {
    if (!sql::iequals(schema, schema_)) {
        throw BackendError(ErrorCode::UnknownTable, "unknown table " + schema + "." + table);
    }
    std::lock_guard lock(mutex_);
    DbPtr db = open_db(path_.string(), SQLITE_OPEN_READONLY);
    sqlite3_stmt* raw = nullptr;
    const std::string q = "PRAGMA table_info(" + quote_ident(table) + ")";
    if (sqlite3_prepare_v2(db.get(), q.c_str(), -1, &raw, nullptr) != SQLITE_OK) fail(db.get(), SQLITE_ERROR, "catalog");
    StmtPtr st(raw);
    std::vector<std::string> out;
    while (sqlite3_step(st.get()) == SQLITE_ROW) {
        out.emplace_back(reinterpret_cast<const char*>(sqlite3_column_text(st.get(), 1)));
    }
    if (out.empty()) throw BackendError(ErrorCode::UnknownTable, "unknown table " + schema + "." + table);
    return out;
}

std::unique_ptr<Session> SqliteBackend::begin_session(SessionMode mode) {
    return std::make_unique<SqliteSession>(path_, schema_, clock(), mode == SessionMode::ReadWrite);
}

void SqliteBackend::set_clock(std::optional<Clock::time_point> now) {
    std::lock_guard lock(mutex_);
    pinned_now_ = now;
}

std::optional<Clock::time_point> SqliteBackend::clock() const {
    std::lock_guard lock(mutex_);
    return pinned_now_;
}

void SqliteBackend::execute_raw(std::string_view sql) {
    std::lock_guard lock(mutex_);
    DbPtr db = open_db(path_.string(), SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
    FunctionContext fc{pinned_now_};
    register_functions(db.get(), &fc);
    exec(db.get(), "PRAGMA foreign_keys = ON");
    exec(db.get(), std::string(sql));
}

std::vector<std::string> SqliteBackend::table_names() const {
    std::lock_guard lock(mutex_);
    DbPtr db = open_db(path_.string(), SQLITE_OPEN_READONLY);
    sqlite3_stmt* raw = nullptr;
    sqlite3_prepare_v2(db.get(),
                       "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
                       -1, &raw, nullptr);
    StmtPtr st(raw);
    std::vector<std::string> out;
    while (sqlite3_step(st.get()) == SQLITE_ROW) {
        out.emplace_back(reinterpret_cast<const char*>(sqlite3_column_text(st.get(), 0)));
    }
    return out;
}

std::string SqliteBackend::snapshot() const {
    std::lock_guard lock(mutex_);
    DbPtr db = open_db(path_.string(), SQLITE_OPEN_READONLY);
    std::vector<std::string> tables;
    {
        sqlite3_stmt* raw = nullptr;
        sqlite3_prepare_v2(db.get(), "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name", -1, &raw,
                           nullptr);
        StmtPtr st(raw);
        while (sqlite3_step(st.get()) == SQLITE_ROW) {
            tables.emplace_back(reinterpret_cast<const char*>(sqlite3_column_text(st.get(), 0)));
        }
    }
    std::ostringstream out;
    for (const auto& t : tables) {
        out << "table " << t << "\n";
        const std::string q = "SELECT * FROM " + quote_ident(t) + (t == "sqlite_sequence" ? " ORDER BY name" : " ORDER BY rowid");
        sqlite3_stmt* raw = nullptr;
        if (sqlite3_prepare_v2(db.get(), q.c_str(), -1, &raw, nullptr) != SQLITE_OK) fail(db.get(), SQLITE_ERROR, "snapshot");
        StmtPtr st(raw);
        const int n = sqlite3_column_count(st.get());
        while (sqlite3_step(st.get()) == SQLITE_ROW) {
            for (int i = 0; i < n; ++i) {
                out << (i ? " | " : "  ");
                switch (sqlite3_column_type(st.get(), i)) {
                    case SQLITE_NULL: out << "NULL"; break;
                    case SQLITE_INTEGER: out << "i:" << sqlite3_column_int64(st.get(), i); break;
                    case SQLITE_FLOAT: out << "r:" << format_double(sqlite3_column_double(st.get(), i)); break;
                    default:
                        out << "t:" << sql::quote_string(std::string(
                                           static_cast<const char*>(sqlite3_column_blob(st.get(), i)),
                                           static_cast<std::size_t>(sqlite3_column_bytes(st.get(), i))));
                }
            }
            out << "\n";
        }
    }
    return out.str();
}

std::unique_ptr<Backend> open_backend(std::string_view connection_string) {
    return SqliteBackend::open(connection_string);
}

}  // namespace secss::backend
