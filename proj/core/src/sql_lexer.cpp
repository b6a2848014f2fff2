// ---------------------------------------------------------------------------
// sql_lexer.cpp
//
// Tokenizer and canonical token renderer.
//
// String literals follow the ANSI rules ('' doubles a quote, backslash is
// an ordinary character). The executing engine receives our rendering, never
// the caller's bytes, so the lexer and the renderer only have to agree with
// each other.
//
// MySQL executable comments (/*! ... */) and optimizer hints (/*+ ... */)
// are rejected instead of being stripped.
// ---------------------------------------------------------------------------

#include "secss/sql_frontend.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace secss::sql {

namespace {

constexpr std::array kKeywords = {
    "ALL", "ALTER", "AND", "AS", "ASC", "BETWEEN", "BY",
    "CASE", "COLUMNS", "CREATE", "CROSS", "DATABASES", "DELETE", "DESC",
    "DISTINCT", "DIV", "DROP", "DUAL", "ELSE", "END", "ESCAPE",
    "EXCEPT", "EXISTS", "FALSE", "FROM", "GRANT", "GROUP", "HAVING",
    "IN", "INNER", "INSERT", "INTERSECT", "INTO", "IS", "JOIN",
    "LEFT", "LIKE", "LIMIT", "MOD", "NATURAL", "NOT", "NULL",
    "OFFSET", "ON", "OR", "ORDER", "OUTER", "REPLACE", "REVOKE",
    "RIGHT", "SELECT", "SET", "SHOW", "TABLE", "TABLES", "THEN",
    "TRUE", "UNION", "UPDATE", "USING", "VALUES", "WHEN", "WHERE",
    "WITH", "XOR",
};

// Functions rendered without a space before their argument list.
constexpr std::array kFunctionNames = {
    "ABS",     "AVG",      "COALESCE", "CONCAT",    "COUNT", "CURDATE", "DATE",
    "DATEDIFF","DAY",      "FROM_DAYS","IFNULL",    "LENGTH","LOWER",   "MAX",
    "MIN",     "MONTH",    "NOW",      "NULLIF",    "ROUND", "SUBSTR",  "SUBSTRING",
    "SUM",     "TO_DAYS",  "TRIM",     "UPPER",     "YEAR",
};

bool is_ident_start(unsigned char c) {
    return std::isalpha(c) || c == '_' || c >= 0x80;
}

bool is_ident_char(unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
}

bool is_keyword_text(std::string_view upper) {
    return std::find(kKeywords.begin(), kKeywords.end(), upper) != kKeywords.end();
}


class Lexer {
public:
    Lexer(std::string_view text, LexOptions options) : text_(text), options_(options) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space_and_comments();
            if (pos_ >= text_.size()) break;
            out.push_back(next_token());
            if (out.back().kind == TokenKind::Semicolon) ++statement_index_;
        }
        return out;
    }

private:
    [[noreturn]] void fail(ErrorCode code, std::string token, const std::string& msg) const {
        throw SqlError(code, statement_index_, std::move(token), msg);
    }

    char peek(std::size_t k = 0) const {
        return pos_ + k < text_.size() ? text_[pos_ + k] : '\0';
    }

    void skip_space_and_comments() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#' || (c == '-' && peek(1) == '-' &&
                                    (peek(2) == '\0' || std::isspace(static_cast<unsigned char>(peek(2)))))) {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (c == '/' && peek(1) == '*') {
                if (peek(2) == '!' || peek(2) == '+') {
                    fail(ErrorCode::SyntaxError, std::string(text_.substr(pos_, 3)),
                         "executable comments and optimizer hints are not accepted");
                }
                const auto end = text_.find("*/", pos_ + 2);
                if (end == std::string_view::npos) {
                    fail(ErrorCode::SyntaxError, "/*", "unterminated block comment");
                }
                pos_ = end + 2;
            } else {
                break;
            }
        }
    }

    Token make(TokenKind kind, std::string text, std::size_t offset) const {
        return Token{kind, std::move(text), offset};
    }

    Token next_token() {
        const std::size_t start = pos_;
        const char c = text_[pos_];
        const auto uc = static_cast<unsigned char>(c);

        if (c == '\'' || c == '"') return quoted(c, TokenKind::String);
        if (c == '`') return quoted('`', TokenKind::QuotedIdentifier);
        if (std::isdigit(uc) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
            return number();
        }
        if (is_ident_start(uc)) {
            while (pos_ < text_.size() && is_ident_char(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            std::string word(text_.substr(start, pos_ - start));
            std::string upper = to_upper(word);
            if (is_keyword_text(upper)) return make(TokenKind::Keyword, std::move(upper), start);
            return make(TokenKind::Identifier, std::move(word), start);
        }
        if (c == '@') return variable();

        ++pos_;
        switch (c) {
            case '(': return make(TokenKind::LParen, "(", start);
            case ')': return make(TokenKind::RParen, ")", start);
            case ',': return make(TokenKind::Comma, ",", start);
            case ';': return make(TokenKind::Semicolon, ";", start);
            case '.': return make(TokenKind::Dot, ".", start);
            case '+': case '-': case '*': case '/': case '%': case '=':
                return make(TokenKind::Operator, std::string(1, c), start);
            case '<':
                if (peek() == '=' && peek(1) == '>') { pos_ += 2; return make(TokenKind::Operator, "<=>", start); }
                if (peek() == '=') { ++pos_; return make(TokenKind::Operator, "<=", start); }
                if (peek() == '>') { ++pos_; return make(TokenKind::Operator, "<>", start); }
                return make(TokenKind::Operator, "<", start);
            case '>':
                if (peek() == '=') { ++pos_; return make(TokenKind::Operator, ">=", start); }
                return make(TokenKind::Operator, ">", start);
            case '!':
                if (peek() == '=') { ++pos_; return make(TokenKind::Operator, "!=", start); }
                break;
            default:
                break;
        }
        fail(ErrorCode::SyntaxError, std::string(1, c), "unexpected character");
    }

    Token quoted(char quote, TokenKind kind) {
        const std::size_t start = pos_++;
        std::string content;
        while (true) {
            if (pos_ >= text_.size()) {
                fail(ErrorCode::SyntaxError, std::string(text_.substr(start, 16)),
                     kind == TokenKind::String ? "unterminated string literal"
                                               : "unterminated quoted identifier");
            }
            const char c = text_[pos_++];
            if (c == quote) {
                if (peek() == quote) {
                    content.push_back(quote);
                    ++pos_;
                    continue;
                }
                break;
            }
            content.push_back(c);
        }
        if (kind == TokenKind::QuotedIdentifier && content.empty()) {
            fail(ErrorCode::SyntaxError, "``", "empty quoted identifier");
        }
        return make(kind, std::move(content), start);
    }

    Token number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
        };
        digits();
        if (peek() == '.') {
            ++pos_;
            digits();
        }
        if ((peek() == 'e' || peek() == 'E') &&
            (std::isdigit(static_cast<unsigned char>(peek(1))) ||
             ((peek(1) == '+' || peek(1) == '-') && std::isdigit(static_cast<unsigned char>(peek(2)))))) {
            pos_ += 2;
            digits();
        }
        if (is_ident_char(static_cast<unsigned char>(peek()))) {
            fail(ErrorCode::SyntaxError, std::string(text_.substr(start, pos_ - start + 1)),
                 "malformed number");
        }
        return make(TokenKind::Number, std::string(text_.substr(start, pos_ - start)), start);
    }

    Token variable() {
        const std::size_t start = pos_;
        ++pos_;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') ++pos_;
        std::string name(text_.substr(start + 1, pos_ - start - 1));
        if (!options_.allow_variables) {
            std::size_t end = pos_;
            while (end < text_.size() && (text_[end] == '@' || is_ident_char(static_cast<unsigned char>(text_[end])))) ++end;
            fail(ErrorCode::ReservedVariable, std::string(text_.substr(start, end - start)),
                 "session variables are reserved for the gateway");
        }
        if (name.empty()) {
            fail(ErrorCode::SyntaxError, std::string(text_.substr(start, 2)), "malformed variable");
        }
        return make(TokenKind::Variable, std::move(name), start);
    }

    std::string_view text_;
    LexOptions options_;
    std::size_t pos_ = 0;
    std::size_t statement_index_ = 0;
};

bool unary_position(const Token* before) {
    if (before == nullptr) return true;
    switch (before->kind) {
        case TokenKind::Operator:
        case TokenKind::LParen:
        case TokenKind::Comma:
        case TokenKind::Keyword:
            return true;
        default:
            return false;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Identifier helpers
// ---------------------------------------------------------------------------
bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------
std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::UnsupportedStatement: return "UnsupportedStatement";
        case ErrorCode::ReservedVariable: return "ReservedVariable";
    }
    return "SyntaxError";
}

SqlError::SqlError(ErrorCode code, std::size_t statement_index, std::string token,
                   const std::string& message)
    : std::runtime_error("statement " + std::to_string(statement_index + 1) + ": " + message +
                         (token.empty() ? std::string() : " near '" + token + "'")),
      code_(code),
      statement_index_(statement_index),
      token_(std::move(token)) {}

// ---------------------------------------------------------------------------
// Lexing and rendering
// ---------------------------------------------------------------------------
std::vector<Token> tokenize(std::string_view text, LexOptions options) {
    return Lexer(text, options).run();
}

std::string quote_string(std::string_view content) {
    std::string out;
    out.reserve(content.size() + 2);
    out.push_back('\'');
    for (char c : content) {
        if (c == '\'') out.push_back('\'');
        out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

std::string render_name(std::string_view name) {
    bool plain = !name.empty() && is_ident_start(static_cast<unsigned char>(name.front())) &&
                 std::all_of(name.begin(), name.end(),
                             [](char c) { return is_ident_char(static_cast<unsigned char>(c)); }) &&
                 !is_keyword_text(to_upper(name));
    if (plain) return std::string(name);
    std::string out = "`";
    for (char c : name) {
        if (c == '`') out.push_back('`');
        out.push_back(c);
    }
    out.push_back('`');
    return out;
}

namespace {

std::string token_text(const Token& t) {
    switch (t.kind) {
        case TokenKind::String: return quote_string(t.text);
        case TokenKind::QuotedIdentifier: {
            std::string out = "`";
            for (char c : t.text) {
                if (c == '`') out.push_back('`');
                out.push_back(c);
            }
            out.push_back('`');
            return out;
        }
        case TokenKind::Variable: return "@" + t.text;
        default: return t.text;
    }
}

}  // namespace

std::string render_tokens(std::span<const Token> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& cur = tokens[i];
        if (i > 0) {
            const Token& prev = tokens[i - 1];
            bool space = true;
            if (cur.kind == TokenKind::Comma || cur.kind == TokenKind::RParen ||
                cur.kind == TokenKind::Semicolon || cur.kind == TokenKind::Dot) {
                space = false;
            } else if (prev.kind == TokenKind::LParen || prev.kind == TokenKind::Dot) {
                space = false;
            } else if (cur.kind == TokenKind::LParen && prev.kind == TokenKind::Identifier &&
                       is_supported_function(prev.text)) {
                space = false;
            } else if (cur.kind == TokenKind::Number && (prev.is_op("-") || prev.is_op("+")) &&
                       unary_position(i >= 2 ? &tokens[i - 2] : nullptr)) {
                space = false;
            }
            if (space) out.push_back(' ');
        }
        out += token_text(cur);
    }
    return out;
}

std::string normalize(std::string_view text, LexOptions options) {
    return render_tokens(tokenize(text, options));
}

bool is_supported_function(std::string_view name) {
    const std::string upper = to_upper(name);
    return std::find(kFunctionNames.begin(), kFunctionNames.end(), upper) != kFunctionNames.end();
}

std::vector<std::string> referenced_variables(std::span<const Token> tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) {
        if (t.kind != TokenKind::Variable) continue;
        if (std::find(out.begin(), out.end(), t.text) == out.end()) out.push_back(t.text);
    }
    return out;
}

std::vector<std::span<const Token>> top_level_conjuncts(std::span<const Token> predicate) {
    std::vector<std::span<const Token>> out;
    int depth = 0;
    int pending_between = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < predicate.size(); ++i) {
        const Token& t = predicate[i];
        if (t.kind == TokenKind::LParen) {
            ++depth;
        } else if (t.kind == TokenKind::RParen) {
            --depth;
        } else if (depth == 0) {
            if (t.is_keyword("OR") || t.is_keyword("XOR")) return {};
            if (t.is_keyword("BETWEEN")) {
                ++pending_between;
            } else if (t.is_keyword("AND")) {
                if (pending_between > 0) {
                    --pending_between;
                } else {
                    out.push_back(predicate.subspan(start, i - start));
                    start = i + 1;
                }
            }
        }
    }
    if (start < predicate.size()) out.push_back(predicate.subspan(start));
    return out;
}

}  // namespace secss::sql
