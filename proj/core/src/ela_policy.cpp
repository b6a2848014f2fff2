// ---------------------------------------------------------------------------
// ela_policy.cpp
// ---------------------------------------------------------------------------

#include "secss/ela_policy.hpp"

#include <expat.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace secss::ela {

namespace {

// Minimal element tree built from expat callbacks.
struct Node {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attrs;
    std::vector<std::unique_ptr<Node>> children;
    std::string text;
    int line = 0;

    const std::string* attr(std::string_view key) const {
        for (const auto& [k, v] : attrs) {
            if (k == key) return &v;
        }
        return nullptr;
    }
};

struct TreeBuilder {
    std::unique_ptr<Node> root;
    std::vector<Node*> stack;
    XML_Parser parser = nullptr;

    static void on_start(void* ud, const XML_Char* name, const XML_Char** atts) {
        auto* self = static_cast<TreeBuilder*>(ud);
        auto node = std::make_unique<Node>();
        node->name = name;
        node->line = static_cast<int>(XML_GetCurrentLineNumber(self->parser));
        for (int i = 0; atts[i]; i += 2) node->attrs.emplace_back(atts[i], atts[i + 1]);
        Node* raw = node.get();
        if (self->stack.empty()) {
            self->root = std::move(node);
        } else {
            self->stack.back()->children.push_back(std::move(node));
        }
        self->stack.push_back(raw);
    }

    static void on_end(void* ud, const XML_Char*) { static_cast<TreeBuilder*>(ud)->stack.pop_back(); }

    static void on_text(void* ud, const XML_Char* s, int len) {
        auto* self = static_cast<TreeBuilder*>(ud);
        if (!self->stack.empty()) self->stack.back()->text.append(s, static_cast<std::size_t>(len));
    }
};

std::unique_ptr<Node> parse_xml(std::string_view xml) {
    TreeBuilder builder;
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
        XML_ParserCreate("UTF-8"), &XML_ParserFree);
    if (!parser) throw ElaError(ErrorCode::XmlError, 0, "cannot create XML parser");
    builder.parser = parser.get();
    XML_SetUserData(parser.get(), &builder);
    XML_SetElementHandler(parser.get(), &TreeBuilder::on_start, &TreeBuilder::on_end);
    XML_SetCharacterDataHandler(parser.get(), &TreeBuilder::on_text);
    if (XML_Parse(parser.get(), xml.data(), static_cast<int>(xml.size()), XML_TRUE) == XML_STATUS_ERROR) {
        throw ElaError(ErrorCode::XmlError, static_cast<int>(XML_GetCurrentLineNumber(parser.get())),
                       XML_ErrorString(XML_GetErrorCode(parser.get())));
    }
    if (!builder.root) throw ElaError(ErrorCode::XmlError, 0, "empty document");
    return std::move(builder.root);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Collapses runs of whitespace, for justification text.
std::string squeeze(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : trim(s)) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

const std::string& required(const Node& n, std::string_view key) {
    const std::string* v = n.attr(key);
    if (!v) {
        throw ElaError(ErrorCode::MissingAttribute, n.line,
                       "<" + n.name + "> lacks attribute " + std::string(key));
    }
    return *v;
}

void no_text(const Node& n) {
    if (!trim(n.text).empty()) {
        throw ElaError(ErrorCode::XmlError, n.line, "unexpected text inside <" + n.name + ">");
    }
}

[[noreturn]] void unexpected(const Node& parent, const Node& child) {
    throw ElaError(ErrorCode::XmlError, child.line,
                   "unexpected element <" + child.name + "> inside <" + parent.name + ">");
}

bool is_variable_name(std::string_view name) {
    if (name.size() < 2 || name[0] != '@') return false;
    const auto first = static_cast<unsigned char>(name[1]);
    if (!(std::isalpha(first) || first == '_' || first >= 0x80)) return false;
    return std::all_of(name.begin() + 1, name.end(), [](char ch) {
        const auto c = static_cast<unsigned char>(ch);
        return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
    });
}

Restriction parse_restriction(const Node& n) {
    no_text(n);
    Restriction r;
    r.id = required(n, "Id");
    const std::string& type = required(n, "type");
    r.table = required(n, "table");
    r.field = required(n, "field");
    const std::string& use = required(n, "use");

    if (r.id.empty()) throw ElaError(ErrorCode::MissingAttribute, n.line, "empty restriction Id");
    if (type == "SELECT") {
        r.type = RestrictionType::Select;
    } else if (type == "INSERT/UPDATE") {
        r.type = RestrictionType::InsertUpdate;
    } else {
        throw ElaError(ErrorCode::BadRestrictionType, n.line,
                       "restriction " + r.id + ": type must be SELECT or INSERT/UPDATE, not '" + type + "'");
    }
    if (use == "IN") {
        r.use = UseClause::In;
    } else if (use == "NOT IN") {
        r.use = UseClause::NotIn;
    } else {
        throw ElaError(ErrorCode::BadUseClause, n.line,
                       "restriction " + r.id + ": use must be IN or NOT IN, not '" + use + "'");
    }

    bool have_sql = false;
    bool have_justification = false;
    for (const auto& child : n.children) {
        if (child->name == "var") {
            no_text(*child);
            VarBinding v{required(*child, "field"), required(*child, "name")};
            if (!is_variable_name(v.name) || v.field.empty()) {
                throw ElaError(ErrorCode::BadVariable, child->line,
                               "restriction " + r.id + ": bad variable '" + v.name + "'");
            }
            if (r.var_named(v.name)) {
                throw ElaError(ErrorCode::BadVariable, child->line,
                               "restriction " + r.id + ": variable " + v.name + " declared twice");
            }
            r.vars.push_back(std::move(v));
        } else if (child->name == "sql" && !have_sql) {
            have_sql = true;
            if (!child->children.empty()) unexpected(*child, *child->children.front());
            r.sql = trim(child->text);
        } else if (child->name == "justification" && !have_justification) {
            have_justification = true;
            r.justification = squeeze(child->text);
        } else {
            unexpected(n, *child);
        }
    }
    if (!have_sql || r.sql.empty()) {
        throw ElaError(ErrorCode::BadRestrictionSql, n.line, "restriction " + r.id + " has no sql");
    }

    std::vector<sql::Token> tokens;
    try {
        const sql::StatementAnalysis st = sql::parse_statement(r.sql, {.allow_variables = true});
        if (st.kind != sql::StatementKind::Select) {
            throw ElaError(ErrorCode::BadRestrictionSql, n.line,
                           "restriction " + r.id + ": sql must be a single SELECT");
        }
        tokens = sql::tokenize(r.sql, {.allow_variables = true});
        if (!tokens.empty() && tokens.back().kind == sql::TokenKind::Semicolon) tokens.pop_back();
    } catch (const sql::SqlError& e) {
        throw ElaError(ErrorCode::BadRestrictionSql, n.line, "restriction " + r.id + ": " + e.what());
    }
    r.canonical_sql = sql::render_tokens(tokens);

    if (r.type == RestrictionType::InsertUpdate) {
        if (!is_variable_name(r.field)) {
            throw ElaError(ErrorCode::BadRestrictionField, n.line,
                           "restriction " + r.id + ": field of an INSERT/UPDATE restriction must be a @variable");
        }
        if (!r.var_named(r.field)) {
            throw ElaError(ErrorCode::UnboundVariable, n.line,
                           "restriction " + r.id + ": " + r.field + " is not declared by a <var>");
        }
    } else if (r.field.empty() || r.field.front() == '@' || r.field == "*") {
        throw ElaError(ErrorCode::BadRestrictionField, n.line,
                       "restriction " + r.id + ": field of a SELECT restriction must be a column name");
    }
    for (const std::string& v : sql::referenced_variables(tokens)) {
        if (!r.var_named("@" + v)) {
            throw ElaError(ErrorCode::UnboundVariable, n.line,
                           "restriction " + r.id + ": @" + v + " is not declared by a <var>");
        }
    }
    return r;
}

Permission parse_permission(const Node& n, const ElaDocument& doc) {
    no_text(n);
    Permission p;
    p.user = required(n, "user");
    const std::string& type = required(n, "type");
    if (p.user.empty()) throw ElaError(ErrorCode::MissingAttribute, n.line, "empty permission user");
    if (type == "SELECT") {
        p.type = PermissionType::Select;
    } else if (type == "INSERT") {
        p.type = PermissionType::Insert;
    } else if (type == "UPDATE") {
        p.type = PermissionType::Update;
    } else if (type == "DELETE") {
        p.type = PermissionType::Delete;
    } else {
        throw ElaError(ErrorCode::BadPermissionType, n.line, "unknown permission type '" + type + "'");
    }
    bool have_justification = false;
    for (const auto& child : n.children) {
        if (child->name == "Apply-Restriction") {
            no_text(*child);
            const std::string& ref = required(*child, "ref");
            const std::string id = ref.starts_with('#') ? ref.substr(1) : ref;
            const Restriction* r = ref.starts_with('#') ? doc.restriction(id) : nullptr;
            if (!r) {
                throw ElaError(ErrorCode::DanglingRestrictionRef, child->line,
                               "Apply-Restriction ref '" + ref + "' names no restriction");
            }
            const bool select_side = p.type == PermissionType::Select;
            const bool write_side = p.type == PermissionType::Insert || p.type == PermissionType::Update;
            if ((r->type == RestrictionType::Select && !select_side) ||
                (r->type == RestrictionType::InsertUpdate && !write_side)) {
                throw ElaError(ErrorCode::RestrictionTypeMismatch, child->line,
                               "restriction " + id + " of type " + std::string(to_string(r->type)) +
                                   " applied to a " + type + " permission");
            }
            if (std::find(p.applied_restrictions.begin(), p.applied_restrictions.end(), id) ==
                p.applied_restrictions.end()) {
                p.applied_restrictions.push_back(id);
            }
        } else if (child->name == "justification" && !have_justification) {
            have_justification = true;
            p.justification = squeeze(child->text);
        } else {
            unexpected(n, *child);
        }
    }
    return p;
}

bool user_matches(const Permission& p, std::string_view user) { return p.enforced() && p.user == user; }

bool field_matches(const FieldNode& f, const sql::FieldRef& fref) {
    // "*" is an ordinary name: it only matches a literal "*" reference.
    if (f.name == "*" || fref.field == "*") return f.name == fref.field;
    return sql::iequals(f.name, fref.field);
}

template <typename F>
void for_each_field(const ElaDocument& doc, const sql::FieldRef& fref, F&& f) {
    for (const auto& schema : doc.schemas) {
        if (fref.schema && !sql::iequals(schema.name, *fref.schema)) continue;
        for (const auto& table : schema.tables) {
            if (!sql::iequals(table.name, fref.table)) continue;
            for (const auto& field : table.fields) {
                if (field_matches(field, fref)) f(field);
            }
        }
    }
}

const Permission* find_for_user(const ElaDocument& doc, std::string_view user, PermissionType type,
                                const sql::FieldRef& fref) {
    const Permission* found = nullptr;
    for_each_field(doc, fref, [&](const FieldNode& field) {
        if (found) return;
        for (const auto& p : field.permissions) {
            if (p.type == type && user_matches(p, user)) {
                found = &p;
                return;
            }
        }
    });
    return found;
}

}  // namespace

// ---------------------------------------------------------------------------
std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::XmlError: return "XmlError";
        case ErrorCode::MissingAttribute: return "MissingAttribute";
        case ErrorCode::DuplicateRestrictionId: return "DuplicateRestrictionId";
        case ErrorCode::DanglingRestrictionRef: return "DanglingRestrictionRef";
        case ErrorCode::BadRestrictionType: return "BadRestrictionType";
        case ErrorCode::BadUseClause: return "BadUseClause";
        case ErrorCode::BadRestrictionField: return "BadRestrictionField";
        case ErrorCode::BadRestrictionSql: return "BadRestrictionSql";
        case ErrorCode::BadVariable: return "BadVariable";
        case ErrorCode::UnboundVariable: return "UnboundVariable";
        case ErrorCode::VariableConflict: return "VariableConflict";
        case ErrorCode::BadPermissionType: return "BadPermissionType";
        case ErrorCode::RestrictionTypeMismatch: return "RestrictionTypeMismatch";
    }
    return "XmlError";
}

ElaError::ElaError(ErrorCode code, int line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      code_(code),
      line_(line) {}

std::string_view to_string(RestrictionType t) {
    return t == RestrictionType::Select ? "SELECT" : "INSERT/UPDATE";
}

std::string_view to_string(UseClause u) { return u == UseClause::In ? "IN" : "NOT IN"; }

std::string_view to_string(PermissionType t) {
    switch (t) {
        case PermissionType::Select: return "SELECT";
        case PermissionType::Insert: return "INSERT";
        case PermissionType::Update: return "UPDATE";
        case PermissionType::Delete: return "DELETE";
    }
    return "SELECT";
}

const VarBinding* Restriction::var_named(std::string_view name) const {
    for (const auto& v : vars) {
        if (sql::iequals(v.name, name)) return &v;
    }
    return nullptr;
}

bool Permission::enforced() const { return type != PermissionType::Delete && !user.starts_with('@'); }

const Restriction* ElaDocument::restriction(std::string_view id) const {
    for (const auto& r : restrictions) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

ElaDocument parse_ela(std::string_view xml) {
    const std::unique_ptr<Node> root = parse_xml(xml);
    if (root->name != "Configuration") {
        throw ElaError(ErrorCode::XmlError, root->line, "root element must be <Configuration>");
    }
    no_text(*root);

    ElaDocument doc;
    const Node* restrictions = nullptr;
    const Node* permissions = nullptr;
    bool have_connection = false;
    for (const auto& child : root->children) {
        if (child->name == "Connection" && !have_connection) {
            have_connection = true;
            doc.connection = trim(child->text);
        } else if (child->name == "Restrictions" && !restrictions) {
            restrictions = child.get();
        } else if (child->name == "Permissions" && !permissions) {
            permissions = child.get();
        } else {
            unexpected(*root, *child);
        }
    }

    if (restrictions) {
        no_text(*restrictions);
        for (const auto& child : restrictions->children) {
            if (child->name != "Restriction") unexpected(*restrictions, *child);
            Restriction r = parse_restriction(*child);
            if (doc.restriction(r.id)) {
                throw ElaError(ErrorCode::DuplicateRestrictionId, child->line, "duplicate restriction Id " + r.id);
            }
            doc.restrictions.push_back(std::move(r));
        }
    }

    // A variable name denotes one field of one table across the document;
    // otherwise a shared binding would feed two different values.
    std::map<std::string, std::pair<std::string, const Restriction*>> var_owner;
    for (const auto& r : doc.restrictions) {
        if (r.type != RestrictionType::InsertUpdate) continue;
        for (const auto& v : r.vars) {
            const std::string key = sql::to_lower(v.name);
            const std::string target = sql::to_lower(r.table) + "." + sql::to_lower(v.field);
            auto [it, inserted] = var_owner.emplace(key, std::pair{target, &r});
            if (!inserted && it->second.first != target) {
                throw ElaError(ErrorCode::VariableConflict, 0,
                               "variable " + v.name + " is bound to " + it->second.first + " by restriction " +
                                   it->second.second->id + " and to " + target + " by restriction " + r.id);
            }
        }
    }

    if (permissions) {
        no_text(*permissions);
        for (const auto& s : permissions->children) {
            if (s->name != "Schema") unexpected(*permissions, *s);
            no_text(*s);
            SchemaNode schema{required(*s, "name"), {}};
            for (const auto& t : s->children) {
                if (t->name != "Table") unexpected(*s, *t);
                no_text(*t);
                TableNode table{required(*t, "name"), {}};
                for (const auto& f : t->children) {
                    if (f->name != "Field") unexpected(*t, *f);
                    no_text(*f);
                    FieldNode field{required(*f, "name"), {}};
                    for (const auto& p : f->children) {
                        if (p->name != "Permission") unexpected(*f, *p);
                        Permission perm = parse_permission(*p, doc);
                        if (!perm.enforced()) {
                            doc.warnings.push_back(
                                {schema.name + "." + table.name + "." + field.name + " user=" + perm.user +
                                     " type=" + std::string(to_string(perm.type)),
                                 "declared but not enforced"});
                        }
                        field.permissions.push_back(std::move(perm));
                    }
                    table.fields.push_back(std::move(field));
                }
                schema.tables.push_back(std::move(table));
            }
            doc.schemas.push_back(std::move(schema));
        }
    }
    return doc;
}

std::optional<PermissionType> permission_type_for(sql::StatementKind kind) {
    switch (kind) {
        case sql::StatementKind::Select: return PermissionType::Select;
        case sql::StatementKind::Insert: return PermissionType::Insert;
        case sql::StatementKind::Update: return PermissionType::Update;
        case sql::StatementKind::Show: return std::nullopt;
    }
    return std::nullopt;
}

const Permission* lookup_permission(const ElaDocument& doc, const identity::RequesterIdentity& who,
                                    PermissionType type, const sql::FieldRef& fref) {
    if (type == PermissionType::Delete) return nullptr;
    if (!who.is_anonymous()) {
        if (const Permission* p = find_for_user(doc, who.ela_user(), type, fref)) return p;
    }
    return find_for_user(doc, identity::kAnonymousUser, type, fref);
}

std::vector<const Restriction*> collect_restrictions(const ElaDocument& doc,
                                                     const identity::RequesterIdentity& who,
                                                     PermissionType type,
                                                     const sql::FieldSet& accessed) {
    // The matched permission of each accessed field, then document order.
    std::set<const Permission*> matched;
    for (const auto& fref : accessed) {
        if (const Permission* p = lookup_permission(doc, who, type, fref)) matched.insert(p);
    }
    std::vector<const Restriction*> out;
    std::set<std::string> seen;
    for (const auto& schema : doc.schemas) {
        for (const auto& table : schema.tables) {
            for (const auto& field : table.fields) {
                for (const auto& p : field.permissions) {
                    if (!matched.contains(&p)) continue;
                    for (const auto& id : p.applied_restrictions) {
                        if (seen.insert(id).second) out.push_back(doc.restriction(id));
                    }
                }
            }
        }
    }
    return out;
}

std::string describe(const ElaDocument& doc) {
    std::ostringstream out;
    out << "restrictions: " << doc.restrictions.size() << "\n";
    for (const auto& r : doc.restrictions) {
        out << "  #" << r.id << " type=" << to_string(r.type) << " table=" << r.table << " field=" << r.field
            << " use=" << to_string(r.use) << " vars=";
        for (std::size_t i = 0; i < r.vars.size(); ++i) {
            out << (i ? "," : "") << r.vars[i].name << "<-" << r.vars[i].field;
        }
        out << "\n";
    }
    std::size_t count = 0;
    for (const auto& s : doc.schemas) {
        for (const auto& t : s.tables) {
            for (const auto& f : t.fields) count += f.permissions.size();
        }
    }
    out << "permissions: " << count << "\n";
    for (const auto& s : doc.schemas) {
        for (const auto& t : s.tables) {
            for (const auto& f : t.fields) {
                for (const auto& p : f.permissions) {
                    out << "  " << s.name << "." << t.name << "." << f.name << " " << to_string(p.type)
                        << " user=" << p.user;
                    for (const auto& id : p.applied_restrictions) out << " #" << id;
                    out << "\n";
                }
            }
        }
    }
    out << "warnings: " << doc.warnings.size() << "\n";
    for (const auto& w : doc.warnings) out << "  " << w.where << ": " << w.message << "\n";
    return out.str();
}

}  // namespace secss::ela
