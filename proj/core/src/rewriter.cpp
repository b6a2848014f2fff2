// ---------------------------------------------------------------------------
// rewriter.cpp
// ---------------------------------------------------------------------------

#include "secss/rewriter.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace secss::rewrite {

namespace {

using sql::Clause;
using sql::FieldRef;
using sql::Token;
using sql::TokenKind;

struct ResolvedUse {
    FieldRef ref;
    Clause clause = Clause::Where;
    bool top_level = false;
};

struct VarPlan {
    std::string name;   // with '@'
    std::string field;  // column of the target table
};

// One derivation: the SET text plus, for the equality short-circuit, the
// literal tokens in the WHERE clause that the variable replaces.
struct Derivation {
    std::string set_statement;
    std::optional<std::pair<std::size_t, std::size_t>> literal_range;
};

std::string field_label(const FieldRef& f) { return f.table + "." + f.field; }

Denial deny(std::size_t index, DenialReason reason, std::string subject, std::string detail) {
    return Denial{index, reason, std::move(subject), std::move(detail)};
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string finish(std::string_view text) { return sql::normalize(text) + ";"; }

bool is_dual(const sql::TableRef& t) { return !t.schema && sql::iequals(t.table, "DUAL"); }

// Cached catalog lookups for one statement.
class Columns {
public:
    Columns(const Catalog& catalog) : catalog_(catalog) {}

    const std::vector<std::string>* of(const sql::TableRef& t) {
        if (is_dual(t)) return &empty_;
        const std::string key = sql::to_lower(t.schema.value_or("")) + "." + sql::to_lower(t.table);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            std::optional<std::vector<std::string>> cols;
            try {
                cols = catalog_.columns(t.schema, t.table);
            } catch (const std::exception&) {
                cols.reset();
            }
            it = cache_.emplace(key, std::move(cols)).first;
        }
        return it->second ? &*it->second : nullptr;
    }

    bool has(const sql::TableRef& t, std::string_view column) {
        const auto* cols = of(t);
        return cols && std::any_of(cols->begin(), cols->end(),
                                   [&](const std::string& c) { return sql::iequals(c, column); });
    }

private:
    const Catalog& catalog_;
    std::map<std::string, std::optional<std::vector<std::string>>> cache_;
    std::vector<std::string> empty_;
};

FieldRef qualify(FieldRef f, const std::string& default_schema) {
    if (!f.schema) f.schema = default_schema;
    return f;
}

// Binds every column reference to a table using the catalog. Unqualified
// names follow SQL scoping: innermost query first, then enclosing ones.
std::variant<std::vector<ResolvedUse>, Denial> resolve_uses(const sql::StatementAnalysis& stmt, Columns& columns,
                                                            const std::string& default_schema,
                                                            std::size_t index) {
    std::vector<ResolvedUse> out;
    for (const auto& use : stmt.column_uses) {
        ResolvedUse r{use.ref, use.clause, use.top_level};
        if (!use.qualified && use.clause != Clause::Assignment) {
            bool found = false;
            for (std::size_t depth = 0; depth < use.scopes.size() && !found; ++depth) {
                std::vector<const sql::TableRef*> hits;
                for (const auto& t : use.scopes[depth]) {
                    if (columns.has(t, use.ref.field)) hits.push_back(&t);
                }
                if (hits.size() > 1) {
                    return deny(index, DenialReason::NoPermission, use.ref.field,
                                "column " + use.ref.field + " is ambiguous");
                }
                if (hits.size() == 1) {
                    r.ref.schema = hits.front()->schema;
                    r.ref.table = hits.front()->table;
                    found = true;
                }
            }
            if (!found) {
                if (use.may_be_alias) continue;
                if (r.ref.table.empty()) {
                    return deny(index, DenialReason::NoPermission, use.ref.field,
                                "unknown column " + use.ref.field);
                }
            }
        }
        r.ref = qualify(std::move(r.ref), default_schema);
        out.push_back(std::move(r));
    }
    return out;
}

const ela::Permission* permitted(const ela::ElaDocument& doc, const identity::RequesterIdentity& who,
                                 ela::PermissionType type, const FieldRef& f) {
    return ela::lookup_permission(doc, who, type, f);
}

std::optional<Denial> require(const ela::ElaDocument& doc, const identity::RequesterIdentity& who,
                              ela::PermissionType type, const FieldRef& f, std::size_t index) {
    if (permitted(doc, who, type, f)) return std::nullopt;
    return deny(index, DenialReason::NoPermission, field_label(f),
                "no " + std::string(ela::to_string(type)) + " permission on " + field_label(f) + " for " +
                    who.ela_user());
}

std::vector<Token> tokens_of(std::string_view text) { return sql::tokenize(text, {.allow_variables = true}); }

void append(std::vector<Token>& dst, const std::vector<Token>& src) { dst.insert(dst.end(), src.begin(), src.end()); }

Token keyword(std::string text) { return Token{TokenKind::Keyword, std::move(text), 0}; }

std::string predicate(const ela::Restriction& r) {
    return r.field + " " + std::string(ela::to_string(r.use)) + " (" + r.canonical_sql + ")";
}

// `( where ) AND p1 AND p2`, or `p1 AND p2` without a user predicate.
std::vector<Token> conjoin(const std::vector<Token>& where, const std::vector<std::string>& predicates) {
    std::vector<Token> out;
    if (!where.empty()) {
        out.push_back(Token{TokenKind::LParen, "(", 0});
        append(out, where);
        out.push_back(Token{TokenKind::RParen, ")", 0});
    }
    for (const auto& p : predicates) {
        if (!out.empty()) out.push_back(keyword("AND"));
        append(out, tokens_of(p));
    }
    return out;
}

std::string sanitize_variable(std::string_view field) {
    std::string out = "@";
    for (char ch : field) {
        const auto c = static_cast<unsigned char>(ch);
        out += (std::isalnum(c) || c == '_' || c == '$' || c >= 0x80) ? ch : '_';
    }
    if (out.size() > 1 && std::isdigit(static_cast<unsigned char>(out[1]))) out.insert(1, "_");
    return out == "@" ? "@_" : out;
}

// Restriction variables first (collect order, declaration order), then one
// variable for every remaining assigned field.
std::vector<VarPlan> plan_variables(const std::vector<const ela::Restriction*>& restrictions,
                                    const std::vector<sql::Assignment>& assignments) {
    std::vector<VarPlan> plan;
    auto name_taken = [&](std::string_view name) {
        return std::any_of(plan.begin(), plan.end(), [&](const VarPlan& v) { return sql::iequals(v.name, name); });
    };
    auto field_bound = [&](std::string_view field) {
        return std::any_of(plan.begin(), plan.end(), [&](const VarPlan& v) { return sql::iequals(v.field, field); });
    };
    for (const auto* r : restrictions) {
        for (const auto& v : r->vars) {
            if (!name_taken(v.name)) plan.push_back({v.name, v.field});
        }
    }
    for (const auto& a : assignments) {
        if (field_bound(a.field.field)) continue;
        const std::string base = sanitize_variable(a.field.field);
        std::string name = base;
        for (int n = 2; name_taken(name); ++n) name = base + "_" + std::to_string(n);
        plan.push_back({name, a.field.field});
    }
    return plan;
}

const sql::Assignment* assignment_for(const sql::StatementAnalysis& stmt, std::string_view field) {
    for (const auto& a : stmt.assignments) {
        if (sql::iequals(a.field.field, field)) return &a;
    }
    return nullptr;
}

const std::string& variable_for(const std::vector<VarPlan>& plan, std::string_view field) {
    for (const auto& v : plan) {
        if (sql::iequals(v.field, field)) return v.name;
    }
    static const std::string kNone;
    return kNone;
}

std::set<std::string> touched(const sql::StatementAnalysis& stmt, const std::vector<ResolvedUse>& uses) {
    std::set<std::string> out;
    for (const auto& t : stmt.target_tables) {
        if (!is_dual(t)) out.insert(t.table);
    }
    for (const auto& u : uses) {
        if (!u.ref.table.empty()) out.insert(u.ref.table);
    }
    return out;
}

// Splits join tokens into the ON predicates of each join.
std::vector<std::span<const Token>> on_predicates(const std::vector<Token>& join) {
    std::vector<std::span<const Token>> out;
    int depth = 0;
    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::size_t start = none;
    auto close = [&](std::size_t end) {
        if (start != none) out.emplace_back(join.data() + start, end - start);
        start = none;
    };
    for (std::size_t i = 0; i < join.size(); ++i) {
        const Token& t = join[i];
        if (t.kind == TokenKind::LParen) ++depth;
        if (t.kind == TokenKind::RParen) --depth;
        if (depth != 0) continue;
        if (t.is_keyword("ON")) {
            close(i);
            start = i + 1;
        } else if (t.is_keyword("LEFT") || t.is_keyword("INNER") || t.is_keyword("CROSS") || t.is_keyword("JOIN") ||
                   t.kind == TokenKind::Comma) {
            close(i);
        }
    }
    close(join.size());
    return out;
}

// Column reference at the start of toks: `col` or `q . col`.
struct ColumnAt {
    std::optional<std::string> qualifier;
    std::string column;
    std::size_t length = 0;
};

std::optional<ColumnAt> column_at(std::span<const Token> toks) {
    if (toks.empty() || !toks[0].is_name()) return std::nullopt;
    if (toks.size() >= 3 && toks[1].kind == TokenKind::Dot && toks[2].is_name()) {
        return ColumnAt{toks[0].text, toks[2].text, 3};
    }
    return ColumnAt{std::nullopt, toks[0].text, 1};
}

std::optional<std::pair<std::string, std::size_t>> literal_at(std::span<const Token> toks) {
    if (toks.empty()) return std::nullopt;
    if (toks[0].kind == TokenKind::String) return std::pair{sql::quote_string(toks[0].text), std::size_t{1}};
    if (toks[0].kind == TokenKind::Number) return std::pair{toks[0].text, std::size_t{1}};
    if (toks.size() >= 2 && (toks[0].is_op("-") || toks[0].is_op("+")) && toks[1].kind == TokenKind::Number) {
        return std::pair{(toks[0].text == "-" ? "-" : "") + toks[1].text, std::size_t{2}};
    }
    return std::nullopt;
}

class UpdateDeriver {
public:
    UpdateDeriver(const sql::StatementAnalysis& stmt, Columns& columns, std::size_t index)
        : stmt_(stmt), columns_(columns), index_(index), target_(stmt.target_tables.front()) {}

    std::variant<Derivation, Denial> derive(const ela::VarBinding& var,
                                            const std::set<std::size_t>& used_literals) const {
        if (stmt_.where_tokens.empty()) {
            return deny(index_, DenialReason::UnresolvableVariable, var.name,
                        var.name + " needs " + target_.table + "." + var.field +
                            ", which the UPDATE neither assigns nor scopes with a WHERE clause");
        }
        if (auto d = by_equality(var, used_literals)) return *d;
        if (auto d = by_join(var)) return *d;
        if (!columns_.has(target_, var.field)) {
            return deny(index_, DenialReason::UnresolvableVariable, var.name,
                        var.name + " needs " + target_.table + "." + var.field + ", which does not exist");
        }
        std::string text = "SET " + var.name + " = (SELECT " + sql::render_name(target_.qualifier()) + "." +
                           sql::render_name(var.field) + " FROM " + target_.render();
        if (!stmt_.join_tokens.empty()) text += " " + sql::render_tokens(stmt_.join_tokens);
        text += " WHERE " + sql::render_tokens(stmt_.where_tokens) + ")";
        return Derivation{finish(text), std::nullopt};
    }

private:
    bool names_target_field(const ColumnAt& c, std::string_view field) const {
        if (!sql::iequals(c.column, field)) return false;
        if (c.qualifier) return sql::iequals(*c.qualifier, target_.qualifier());
        // Unqualified: only the target may expose the column.
        for (std::size_t i = 1; i < stmt_.target_tables.size(); ++i) {
            if (columns_.has(stmt_.target_tables[i], field)) return false;
        }
        return true;
    }

    // WHERE has a top-level conjunct `field = literal` on the target table.
    std::optional<Derivation> by_equality(const ela::VarBinding& var, const std::set<std::size_t>& used) const {
        const auto& where = stmt_.where_tokens;
        for (auto conj : sql::top_level_conjuncts(where)) {
            while (conj.size() >= 2 && conj.front().kind == TokenKind::LParen &&
                   conj.back().kind == TokenKind::RParen && balanced(conj.subspan(1, conj.size() - 2))) {
                conj = conj.subspan(1, conj.size() - 2);
            }
            const std::size_t base = static_cast<std::size_t>(conj.data() - where.data());
            // col = literal
            if (auto col = column_at(conj); col && conj.size() > col->length && conj[col->length].is_op("=")) {
                auto rest = conj.subspan(col->length + 1);
                if (auto lit = literal_at(rest); lit && lit->second == rest.size() && names_target_field(*col, var.field)) {
                    const std::size_t at = base + col->length + 1;
                    if (used.contains(at)) continue;
                    return Derivation{finish("SET " + var.name + " = " + lit->first),
                                      std::pair{at, at + lit->second}};
                }
            }
            // literal = col
            if (auto lit = literal_at(conj); lit && conj.size() > lit->second && conj[lit->second].is_op("=")) {
                auto rest = conj.subspan(lit->second + 1);
                if (auto col = column_at(rest); col && col->length == rest.size() && names_target_field(*col, var.field)) {
                    if (used.contains(base)) continue;
                    return Derivation{finish("SET " + var.name + " = " + lit->first), std::pair{base, base + lit->second}};
                }
            }
        }
        return std::nullopt;
    }

    static bool balanced(std::span<const Token> toks) {
        int depth = 0;
        for (const auto& t : toks) {
            if (t.kind == TokenKind::LParen) ++depth;
            if (t.kind == TokenKind::RParen && --depth < 0) return false;
        }
        return depth == 0;
    }

    // A join maps target.field onto joined.column and the WHERE clause only
    // looks at the joined table: read the value straight from it.
    std::optional<Derivation> by_join(const ela::VarBinding& var) const {
        for (auto on : on_predicates(stmt_.join_tokens)) {
            for (auto conj : sql::top_level_conjuncts(on)) {
                auto left = column_at(conj);
                if (!left || conj.size() <= left->length || !conj[left->length].is_op("=")) continue;
                auto rest = conj.subspan(left->length + 1);
                auto right = column_at(rest);
                if (!right || right->length != rest.size() || !left->qualifier || !right->qualifier) continue;
                const ColumnAt* mine = nullptr;
                const ColumnAt* other = nullptr;
                if (sql::iequals(*left->qualifier, target_.qualifier())) {
                    mine = &*left;
                    other = &*right;
                } else if (sql::iequals(*right->qualifier, target_.qualifier())) {
                    mine = &*right;
                    other = &*left;
                }
                if (!mine || !sql::iequals(mine->column, var.field)) continue;
                const sql::TableRef* joined = table_with_qualifier(*other->qualifier);
                if (!joined || joined == &stmt_.target_tables.front()) continue;
                if (!where_only_on(*other->qualifier)) continue;
                const std::string text = "SET " + var.name + " = (SELECT " + sql::render_name(*other->qualifier) + "." +
                                         sql::render_name(other->column) + " FROM " + joined->render() + " WHERE " +
                                         sql::render_tokens(stmt_.where_tokens) + ")";
                return Derivation{finish(text), std::nullopt};
            }
        }
        return std::nullopt;
    }

    const sql::TableRef* table_with_qualifier(std::string_view q) const {
        for (const auto& t : stmt_.target_tables) {
            if (sql::iequals(t.qualifier(), q)) return &t;
        }
        return nullptr;
    }

    bool where_only_on(std::string_view q) const {
        bool any = false;
        for (const auto& u : stmt_.column_uses) {
            if (u.clause != Clause::Where || !u.top_level) continue;
            any = true;
            if (!u.qualifier || !sql::iequals(*u.qualifier, q)) return false;
        }
        return any;
    }

    const sql::StatementAnalysis& stmt_;
    Columns& columns_;
    std::size_t index_;
    const sql::TableRef& target_;
};

}  // namespace

// ---------------------------------------------------------------------------
std::string TransformedScript::executed_sql() const {
    std::string out;
    for (const auto& s : set_statements) out += s + "\n";
    return out + final_statement;
}

std::string_view to_string(DenialReason reason) {
    switch (reason) {
        case DenialReason::NoPermission: return "NoPermission";
        case DenialReason::UnsupportedKind: return "UnsupportedKind";
        case DenialReason::UnresolvableVariable: return "UnresolvableVariable";
        case DenialReason::UnenforceableRestriction: return "UnenforceableRestriction";
    }
    return "NoPermission";
}

RewriteResult Rewriter::rewrite(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                std::size_t statement_index) const {
    switch (stmt.kind) {
        case sql::StatementKind::Show: return rewrite_show(stmt);
        case sql::StatementKind::Select: return rewrite_select(stmt, who, statement_index);
        case sql::StatementKind::Insert: return rewrite_insert(stmt, who, statement_index);
        case sql::StatementKind::Update: return rewrite_update(stmt, who, statement_index);
    }
    return deny(statement_index, DenialReason::UnsupportedKind, "", "unsupported statement kind");
}

TransformedScript Rewriter::rewrite_show(const sql::StatementAnalysis& stmt) const {
    TransformedScript out;
    out.kind = stmt.kind;
    out.requested_sql = stmt.source_text;
    out.final_statement = sql::render(stmt);
    for (const auto& t : stmt.target_tables) out.touched_tables.insert(t.table);
    return out;
}

RewriteResult Rewriter::rewrite_select(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                       std::size_t index) const {
    if (stmt.kind != sql::StatementKind::Select) {
        return deny(index, DenialReason::UnsupportedKind, "", "not a SELECT statement");
    }
    const std::string schema = catalog_.default_schema();
    Columns columns(catalog_);
    auto resolved = resolve_uses(stmt, columns, schema, index);
    if (auto* d = std::get_if<Denial>(&resolved)) return *d;
    const auto& uses = std::get<std::vector<ResolvedUse>>(resolved);

    // Star items first, expanded over the catalog, then every column use.
    std::vector<FieldRef> required;
    for (const auto& item : stmt.projection) {
        const auto* star = std::get_if<sql::StarItem>(&item);
        if (!star) continue;
        bool matched = false;
        for (const auto& t : stmt.target_tables) {
            if (is_dual(t) || (star->qualifier && !sql::iequals(t.qualifier(), *star->qualifier))) continue;
            matched = true;
            const auto* cols = columns.of(t);
            if (!cols) {
                return deny(index, DenialReason::NoPermission, t.table, "unknown table " + t.table);
            }
            for (const auto& c : *cols) required.push_back(qualify(FieldRef{t.schema, t.table, c}, schema));
        }
        if (star->qualifier && !matched) {
            return deny(index, DenialReason::NoPermission, *star->qualifier, "unknown table " + *star->qualifier);
        }
    }
    for (const auto& u : uses) required.push_back(u.ref);

    sql::FieldSet accessed;
    for (const auto& f : required) {
        if (auto d = require(ela_, who, ela::PermissionType::Select, f, index)) return *d;
        accessed.insert(f);
    }

    std::vector<std::string> predicates;
    for (const ela::Restriction* r : ela::collect_restrictions(ela_, who, ela::PermissionType::Select, accessed)) {
        bool applied = false;
        for (const auto& t : stmt.target_tables) {
            if (!sql::iequals(t.table, r->table)) continue;
            applied = true;
            std::vector<Token> body;
            for (const Token& tok : tokens_of(r->canonical_sql)) {
                const ela::VarBinding* v =
                    tok.kind == TokenKind::Variable ? r->var_named("@" + tok.text) : nullptr;
                if (v) {
                    append(body, tokens_of(sql::render_name(t.qualifier()) + "." + sql::render_name(v->field)));
                } else {
                    body.push_back(tok);
                }
            }
            predicates.push_back(sql::render_name(t.qualifier()) + "." + sql::render_name(r->field) + " " +
                                 std::string(ela::to_string(r->use)) + " (" + sql::render_tokens(body) + ")");
        }
        if (!applied) {
            return deny(index, DenialReason::UnenforceableRestriction, r->id,
                        "restriction " + r->id + " filters table " + r->table +
                            ", which the query reads only inside a sub-query");
        }
    }

    sql::StatementAnalysis out_stmt = stmt;
    out_stmt.where_tokens = conjoin(stmt.where_tokens, predicates);

    TransformedScript out;
    out.kind = stmt.kind;
    out.requested_sql = stmt.source_text;
    out.final_statement = sql::render(out_stmt);
    out.touched_tables = touched(stmt, uses);
    return out;
}

RewriteResult Rewriter::rewrite_insert(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                       std::size_t index) const {
    if (stmt.kind != sql::StatementKind::Insert) {
        return deny(index, DenialReason::UnsupportedKind, "", "not an INSERT statement");
    }
    const std::string schema = catalog_.default_schema();
    Columns columns(catalog_);
    auto resolved = resolve_uses(stmt, columns, schema, index);
    if (auto* d = std::get_if<Denial>(&resolved)) return *d;
    const auto& uses = std::get<std::vector<ResolvedUse>>(resolved);

    sql::FieldSet assigned;
    for (const auto& u : uses) {
        const bool write = u.clause == Clause::Assignment;
        const auto type = write ? ela::PermissionType::Insert : ela::PermissionType::Select;
        if (auto d = require(ela_, who, type, u.ref, index)) return *d;
        if (write) assigned.insert(u.ref);
    }

    const sql::TableRef& target = stmt.target_tables.front();
    const auto restrictions = ela::collect_restrictions(ela_, who, ela::PermissionType::Insert, assigned);
    for (const auto* r : restrictions) {
        if (!sql::iequals(r->table, target.table)) {
            return deny(index, DenialReason::UnenforceableRestriction, r->id,
                        "restriction " + r->id + " is defined on " + r->table + ", not on " + target.table);
        }
    }

    const std::vector<VarPlan> plan = plan_variables(restrictions, stmt.assignments);
    TransformedScript out;
    out.kind = stmt.kind;
    out.requested_sql = stmt.source_text;
    out.touched_tables = touched(stmt, uses);
    for (const auto& v : plan) {
        const sql::Assignment* a = assignment_for(stmt, v.field);
        if (!a) {
            return deny(index, DenialReason::UnresolvableVariable, v.name,
                        v.name + " needs " + target.table + "." + v.field + ", which the INSERT does not assign");
        }
        out.set_statements.push_back(finish("SET " + v.name + " = " + sql::render_value(a->value)));
    }

    std::vector<std::string> cols;
    std::vector<std::string> vars;
    for (const auto& a : stmt.assignments) {
        cols.push_back(sql::render_tokens(a.target));
        vars.push_back(variable_for(plan, a.field.field));
    }
    std::string text = "INSERT INTO " + target.render_name_only() + " (" + join(cols, ", ") + ")";
    if (restrictions.empty()) {
        text += " VALUES (" + join(vars, ", ") + ")";
    } else {
        std::vector<std::string> predicates;
        for (const auto* r : restrictions) predicates.push_back(predicate(*r));
        text += " SELECT " + join(vars, ", ") + " FROM DUAL WHERE " + join(predicates, " AND ");
    }
    out.final_statement = finish(text);
    return out;
}

RewriteResult Rewriter::rewrite_update(const sql::StatementAnalysis& stmt, const identity::RequesterIdentity& who,
                                       std::size_t index) const {
    if (stmt.kind != sql::StatementKind::Update) {
        return deny(index, DenialReason::UnsupportedKind, "", "not an UPDATE statement");
    }
    const std::string schema = catalog_.default_schema();
    Columns columns(catalog_);
    auto resolved = resolve_uses(stmt, columns, schema, index);
    if (auto* d = std::get_if<Denial>(&resolved)) return *d;
    const auto& uses = std::get<std::vector<ResolvedUse>>(resolved);

    sql::FieldSet assigned;
    for (const auto& u : uses) {
        const bool write = u.clause == Clause::Assignment;
        const auto type = write ? ela::PermissionType::Update : ela::PermissionType::Select;
        if (auto d = require(ela_, who, type, u.ref, index)) return *d;
        if (write) assigned.insert(u.ref);
    }

    const sql::TableRef& target = stmt.target_tables.front();
    const auto restrictions = ela::collect_restrictions(ela_, who, ela::PermissionType::Update, assigned);
    for (const auto* r : restrictions) {
        if (!sql::iequals(r->table, target.table)) {
            return deny(index, DenialReason::UnenforceableRestriction, r->id,
                        "restriction " + r->id + " is defined on " + r->table + ", not on " + target.table);
        }
    }

    const std::vector<VarPlan> plan = plan_variables(restrictions, stmt.assignments);
    TransformedScript out;
    out.kind = stmt.kind;
    out.requested_sql = stmt.source_text;
    out.touched_tables = touched(stmt, uses);

    UpdateDeriver deriver(stmt, columns, index);
    std::vector<Token> where = stmt.where_tokens;
    std::set<std::size_t> used_literals;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::string>> substitutions;
    for (const auto& v : plan) {
        if (const sql::Assignment* a = assignment_for(stmt, v.field)) {
            out.set_statements.push_back(finish("SET " + v.name + " = " + sql::render_value(a->value)));
            continue;
        }
        auto derived = deriver.derive(ela::VarBinding{v.field, v.name}, used_literals);
        if (auto* d = std::get_if<Denial>(&derived)) return *d;
        auto& dv = std::get<Derivation>(derived);
        out.set_statements.push_back(dv.set_statement);
        if (dv.literal_range) {
            used_literals.insert(dv.literal_range->first);
            substitutions.emplace_back(*dv.literal_range, v.name);
        }
    }
    // Replace the literals right to left so earlier offsets stay valid.
    std::sort(substitutions.begin(), substitutions.end(),
              [](const auto& a, const auto& b) { return a.first.first > b.first.first; });
    for (const auto& [range, name] : substitutions) {
        where.erase(where.begin() + static_cast<std::ptrdiff_t>(range.first),
                    where.begin() + static_cast<std::ptrdiff_t>(range.second));
        where.insert(where.begin() + static_cast<std::ptrdiff_t>(range.first),
                     Token{TokenKind::Variable, name.substr(1), 0});
    }

    std::vector<std::string> sets;
    for (const auto& a : stmt.assignments) {
        sets.push_back(sql::render_tokens(a.target) + " = " + variable_for(plan, a.field.field));
    }
    std::vector<std::string> predicates;
    for (const auto* r : restrictions) predicates.push_back(predicate(*r));

    std::string text = "UPDATE " + target.render();
    if (!stmt.join_tokens.empty()) text += " " + sql::render_tokens(stmt.join_tokens);
    text += " SET " + join(sets, ", ");
    const std::vector<Token> full_where = conjoin(where, predicates);
    if (!full_where.empty()) text += " WHERE " + sql::render_tokens(full_where);
    out.final_statement = finish(text);
    return out;
}

std::variant<std::string, Denial> Rewriter::derive_variable(const sql::StatementAnalysis& stmt,
                                                            const ela::VarBinding& var,
                                                            std::size_t statement_index) const {
    if (stmt.kind != sql::StatementKind::Update) {
        return deny(statement_index, DenialReason::UnresolvableVariable, var.name,
                    "variables are derived for UPDATE statements only");
    }
    Columns columns(catalog_);
    UpdateDeriver deriver(stmt, columns, statement_index);
    auto derived = deriver.derive(var, {});
    if (auto* d = std::get_if<Denial>(&derived)) return *d;
    return std::get<Derivation>(derived).set_statement;
}

std::set<std::string> variables_in(const TransformedScript& script) {
    std::set<std::string> out;
    for (const auto& v : sql::referenced_variables(tokens_of(script.final_statement))) out.insert(sql::to_lower(v));
    return out;
}

std::set<std::string> variables_bound(const TransformedScript& script) {
    std::set<std::string> out;
    for (const auto& s : script.set_statements) {
        const auto toks = tokens_of(s);
        if (toks.size() >= 2 && toks[1].kind == TokenKind::Variable) out.insert(sql::to_lower(toks[1].text));
    }
    return out;
}

}  // namespace secss::rewrite
