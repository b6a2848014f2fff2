// ---------------------------------------------------------------------------
// ela_policy.hpp
//
// The Electronic Legal Act: restrictions (membership tests against SQL
// sub-queries) and the Schema/Table/Field/Permission tree that grants
// access field by field.
//
// Document grammar:
//   Configuration
//     Connection                      (carried, unused)
//     Restrictions
//       Restriction Id type table field use
//         var field name              (zero or more)
//         sql                         (single SELECT, CDATA allowed)
//         justification               (optional)
//     Permissions
//       Schema name / Table name / Field name
//         Permission user type
//           Apply-Restriction ref="#Id"   (zero or more)
//           justification                 (optional)
// ---------------------------------------------------------------------------
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "secss/identity.hpp"
#include "secss/sql_frontend.hpp"

namespace secss::ela {

enum class ErrorCode {
    XmlError,
    MissingAttribute,
    DuplicateRestrictionId,
    DanglingRestrictionRef,
    BadRestrictionType,
    BadUseClause,
    BadRestrictionField,
    BadRestrictionSql,
    BadVariable,
    UnboundVariable,
    VariableConflict,
    BadPermissionType,
    RestrictionTypeMismatch,
};

std::string_view to_string(ErrorCode code);

class ElaError : public std::runtime_error {
public:
    ElaError(ErrorCode code, int line, const std::string& message);
    ErrorCode code() const noexcept { return code_; }
    int line() const noexcept { return line_; }

private:
    ErrorCode code_;
    int line_;
};

enum class RestrictionType { Select, InsertUpdate };
enum class UseClause { In, NotIn };
enum class PermissionType { Select, Insert, Update, Delete };

std::string_view to_string(RestrictionType t);
std::string_view to_string(UseClause u);
std::string_view to_string(PermissionType t);

struct VarBinding {
    std::string field;
    std::string name;  // with the leading '@'

    friend bool operator==(const VarBinding&, const VarBinding&) = default;
};

struct Restriction {
    std::string id;
    RestrictionType type = RestrictionType::InsertUpdate;
    std::string table;
    std::string field;  // "@var" for INSERT/UPDATE, a column name for SELECT
    UseClause use = UseClause::In;
    std::vector<VarBinding> vars;
    std::string sql;            // element body, CDATA unwrapped, outer whitespace trimmed
    std::string canonical_sql;  // token rendering of sql
    std::string justification;

    const VarBinding* var_named(std::string_view name) const;

    friend bool operator==(const Restriction&, const Restriction&) = default;
};

struct Permission {
    std::string user;
    PermissionType type = PermissionType::Select;
    std::vector<std::string> applied_restrictions;  // ids without '#', document order
    std::string justification;

    // DELETE grants and "@column" users are carried but never matched.
    bool enforced() const;

    friend bool operator==(const Permission&, const Permission&) = default;
};

struct FieldNode {
    std::string name;
    std::vector<Permission> permissions;

    friend bool operator==(const FieldNode&, const FieldNode&) = default;
};

struct TableNode {
    std::string name;
    std::vector<FieldNode> fields;

    friend bool operator==(const TableNode&, const TableNode&) = default;
};

struct SchemaNode {
    std::string name;
    std::vector<TableNode> tables;

    friend bool operator==(const SchemaNode&, const SchemaNode&) = default;
};

struct Warning {
    std::string where;  // e.g. "playground.toychest.* user=@owner type=DELETE"
    std::string message;

    friend bool operator==(const Warning&, const Warning&) = default;
};

struct ElaDocument {
    std::string connection;
    std::vector<Restriction> restrictions;  // document order
    std::vector<SchemaNode> schemas;
    std::vector<Warning> warnings;

    const Restriction* restriction(std::string_view id) const;

    friend bool operator==(const ElaDocument&, const ElaDocument&) = default;
};

ElaDocument parse_ela(std::string_view xml);

// Statement kinds that can carry a permission: SELECT, INSERT, UPDATE.
// SHOW is never looked up.
std::optional<PermissionType> permission_type_for(sql::StatementKind kind);

// Exact identity first, then "anon". fref.schema, when absent, matches any
// schema in document order.
const Permission* lookup_permission(const ElaDocument& doc, const identity::RequesterIdentity& who,
                                    PermissionType type, const sql::FieldRef& fref);

// Union of Apply-Restriction lists over the permissions matched for the
// accessed fields, deduplicated, in document order.
std::vector<const Restriction*> collect_restrictions(const ElaDocument& doc,
                                                     const identity::RequesterIdentity& who,
                                                     PermissionType type,
                                                     const sql::FieldSet& accessed);

// Human-readable summary used by `secss-gate validate-ela`.
std::string describe(const ElaDocument& doc);

}  // namespace secss::ela
