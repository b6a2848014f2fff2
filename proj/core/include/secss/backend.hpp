// ---------------------------------------------------------------------------
// backend.hpp
//
// Execution layer. A Backend hands out Sessions; each Session is one
// transaction with its own set of `@variables`.
//
// The reference adapter runs on SQLite and provides the MySQL pieces the
// rewriter relies on: SET @var, FROM DUAL, UPDATE ... JOIN, SHOW, and the
// date functions NOW, DATE, DATEDIFF, FROM_DAYS, TO_DAYS, YEAR.
//
// Connection string:  sqlite:<path>?schema=<name>[&now=<ISO-8601 UTC>]
// ---------------------------------------------------------------------------
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "secss/rewriter.hpp"

namespace secss::backend {

enum class ErrorCode {
    UnknownTable,
    ConstraintViolation,
    ExecutionError,
    ConnectionError,
    SchemaExists,
};

std::string_view to_string(ErrorCode code);

class BackendError : public std::runtime_error {
public:
    BackendError(ErrorCode code, const std::string& message);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct BackendCapabilities {
    bool supports_session_variables = false;
    bool supports_dual = false;
    std::set<std::string> date_functions;
};

using Value = std::optional<std::string>;  // nullopt is SQL NULL

struct ResultRelation {
    std::vector<std::string> columns;
    std::vector<std::vector<Value>> rows;
    std::int64_t affected_rows = 0;

    friend bool operator==(const ResultRelation&, const ResultRelation&) = default;
};

class Session {
public:
    virtual ~Session() = default;

    // Runs the SET statements, then the final statement. Returns the final
    // statement's relation (empty for INSERT/UPDATE, with affected_rows).
    virtual ResultRelation execute(const rewrite::TransformedScript& script) = 0;
    // One statement in the backend's MySQL-flavoured input dialect.
    virtual ResultRelation execute_statement(std::string_view sql) = 0;

    virtual void commit() = 0;
    virtual void rollback() = 0;
};

// ReadWrite sessions take the write lock up front; ReadOnly sessions share.
enum class SessionMode { ReadWrite, ReadOnly };

class Backend : public rewrite::Catalog {
public:
    virtual BackendCapabilities capabilities() const = 0;
    virtual std::vector<std::string> catalog_columns(const std::string& schema, const std::string& table) const = 0;
    virtual std::unique_ptr<Session> begin_session(SessionMode mode = SessionMode::ReadWrite) = 0;

    std::vector<std::string> columns(const std::optional<std::string>& schema,
                                     const std::string& table) const override {
        return catalog_columns(schema.value_or(default_schema()), table);
    }
};

using Clock = std::chrono::system_clock;

// "YYYY-MM-DDTHH:MM:SSZ" or "YYYY-MM-DD HH:MM:SS" (UTC).
Clock::time_point parse_utc(std::string_view text);
std::string format_utc(Clock::time_point t, char separator = 'T');

class SqliteBackend : public Backend {
public:
    SqliteBackend(std::filesystem::path path, std::string schema);
    ~SqliteBackend() override;

    static std::unique_ptr<SqliteBackend> open(std::string_view connection_string);

    BackendCapabilities capabilities() const override;
    std::vector<std::string> catalog_columns(const std::string& schema, const std::string& table) const override;
    std::string default_schema() const override { return schema_; }
    std::unique_ptr<Session> begin_session(SessionMode mode = SessionMode::ReadWrite) override;

    // Pins NOW() for every session started afterwards; nullopt restores the
    // system clock.
    void set_clock(std::optional<Clock::time_point> now);
    std::optional<Clock::time_point> clock() const;

    // Administrative access outside the gateway: DDL, seeding, fixtures.
    void execute_raw(std::string_view sql);
    std::vector<std::string> table_names() const;
    // Deterministic dump of every table (rows in rowid order, typed values)
    // plus the autoincrement counters; equal dumps mean equal states.
    std::string snapshot() const;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::string schema_;
    mutable std::mutex mutex_;
    std::optional<Clock::time_point> pinned_now_;
};

// sqlite:<path>?schema=<name>&now=<time>; the only scheme supported.
std::unique_ptr<Backend> open_backend(std::string_view connection_string);

// MySQL day-number arithmetic used by the shims (exposed for tests).
namespace mysql_dates {
std::int64_t to_days(int year, int month, int day);
// "YYYY-MM-DD"; "0000-00-00" for day numbers MySQL maps to the zero date.
std::string from_days(std::int64_t daynr);
}  // namespace mysql_dates

}  // namespace secss::backend
