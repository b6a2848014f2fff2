// ---------------------------------------------------------------------------
// gateway.cpp
// ---------------------------------------------------------------------------

#include "secss/gateway.hpp"

#include <httplib.h>

#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "secss/rewriter.hpp"
#include "secss/sql_frontend.hpp"

namespace secss::gateway {

namespace {

using nlohmann::json;

std::string plural(std::int64_t n, std::string_view word) {
    return std::to_string(n) + " " + std::string(word) + (n == 1 ? "" : "s");
}

ResponseEnvelope failure(std::string_view code, std::string_view detail) {
    ResponseEnvelope env;
    env.ok = false;
    env.feedback = std::string(code) + ": " + std::string(detail);
    env.generation_date = backend::format_utc(backend::Clock::now());
    return env;
}

std::string statement_label(std::size_t index) { return "statement " + std::to_string(index + 1); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const json* member(const json& obj, const char* name) {
    auto it = obj.find(name);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

}  // namespace

// ---------------------------------------------------------------------------
// Envelopes
// ---------------------------------------------------------------------------
std::string encode_request(const identity::SignedRequest& req) {
    json j = json::object();
    j["SQL"] = req.sql;
    if (req.pkcs7) j["Pkcs7"] = *req.pkcs7;
    if (req.comment) j["Comment"] = *req.comment;
    return j.dump(2, ' ', false, json::error_handler_t::replace);
}

identity::SignedRequest decode_request(std::string_view body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw EnvelopeError(std::string("request body is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw EnvelopeError("request body must be a JSON object");
    identity::SignedRequest req;
    auto text = [&](const char* name) -> std::optional<std::string> {
        const json* v = member(j, name);
        if (!v) return std::nullopt;
        if (!v->is_string()) throw EnvelopeError(std::string(name) + " must be a string");
        return v->get<std::string>();
    };
    req.sql = text("SQL").value_or("");
    req.pkcs7 = text("Pkcs7");
    req.comment = text("Comment");
    return req;
}

std::string encode_response(const ResponseEnvelope& env) {
    json results = json::array();
    for (const auto& r : env.results) {
        json rows = json::array();
        for (const auto& row : r.rows) {
            json cells = json::array();
            for (const auto& c : row) {
                cells.push_back({{"Name", c.name}, {"Value", c.value ? json(*c.value) : json(nullptr)}});
            }
            rows.push_back(std::move(cells));
        }
        results.push_back({{"ExecutedSQL", r.executed_sql}, {"RequestedSQL", r.requested_sql}, {"Rows", rows}});
    }
    json j = json::object();
    j["Results"] = std::move(results);
    j["Feedback"] = env.feedback;
    j["GenerationDate"] = env.generation_date;
    j["OK"] = env.ok;
    return j.dump(2, ' ', false, json::error_handler_t::replace);
}

ResponseEnvelope decode_response(std::string_view body) {
    try {
        const json j = json::parse(body);
        ResponseEnvelope env;
        env.ok = j.at("OK").get<bool>();
        env.feedback = j.at("Feedback").get<std::string>();
        env.generation_date = j.at("GenerationDate").get<std::string>();
        for (const auto& r : j.at("Results")) {
            StatementResult sr;
            sr.executed_sql = r.at("ExecutedSQL").get<std::string>();
            sr.requested_sql = r.at("RequestedSQL").get<std::string>();
            for (const auto& row : r.at("Rows")) {
                std::vector<Cell> cells;
                for (const auto& c : row) {
                    const json& v = c.at("Value");
                    cells.push_back({c.at("Name").get<std::string>(),
                                     v.is_null() ? backend::Value{} : backend::Value{v.get<std::string>()}});
                }
                sr.rows.push_back(std::move(cells));
            }
            env.results.push_back(std::move(sr));
        }
        return env;
    } catch (const json::exception& e) {
        throw EnvelopeError(std::string("malformed response envelope: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// ELA publication
// ---------------------------------------------------------------------------
PublishedEla publish_ela(std::string xml, std::optional<std::vector<std::uint8_t>> signature_der,
                         const identity::TrustStore& trust) {
    PublishedEla out;
    out.doc = ela::parse_ela(xml);
    out.etag = "\"" + identity::sha256_hex(xml) + "\"";
    if (signature_der) {
        const auto who = identity::verify_detached(identity::as_bytes(xml), *signature_der, trust);
        out.signer = *who.certified();
    } else {
        out.load_warnings.push_back("ELA is not signed");
    }
    out.xml = std::move(xml);
    return out;
}

PublishedEla load_ela_file(const std::filesystem::path& path, const identity::TrustStore& trust) {
    std::string xml = read_file(path);
    std::filesystem::path sig_path = path;
    sig_path += ".p7s";
    std::optional<std::vector<std::uint8_t>> sig;
    if (std::filesystem::exists(sig_path)) {
        const std::string raw = read_file(sig_path);
        // DER SignedData starts with a SEQUENCE tag; anything else is Base64.
        if (!raw.empty() && static_cast<unsigned char>(raw[0]) == 0x30) {
            sig = std::vector<std::uint8_t>(raw.begin(), raw.end());
        } else {
            std::string compact;
            for (char c : raw) {
                if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
            }
            sig = identity::base64_decode(compact);
        }
    }
    return publish_ela(std::move(xml), std::move(sig), trust);
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------
Gateway::Gateway(backend::Backend& backend, identity::TrustStore trust, PublishedEla ela)
    : backend_(backend), trust_(std::move(trust)), ela_(std::make_shared<const PublishedEla>(std::move(ela))) {}

void Gateway::replace_ela(PublishedEla ela) {
    auto next = std::make_shared<const PublishedEla>(std::move(ela));
    std::lock_guard lock(ela_mutex_);
    ela_ = std::move(next);
}

std::shared_ptr<const PublishedEla> Gateway::ela() const {
    std::lock_guard lock(ela_mutex_);
    return ela_;
}

ResponseEnvelope Gateway::process(const identity::SignedRequest& req) const {
    if (req.sql.find_first_not_of(" \t\r\n") == std::string::npos) return failure("MalformedRequest", "SQL is missing or empty");

    identity::RequesterIdentity who;
    try {
        who = identity::verify(req, trust_);
    } catch (const identity::IdentityError& e) {
        return failure(identity::to_string(e.code()), e.what());
    }

    sql::SqlScript script;
    try {
        script = sql::parse_script(req.sql);
    } catch (const sql::SqlError& e) {
        return failure(sql::to_string(e.code()), e.what());
    }

    // One document for the whole request, even if a reload happens meanwhile.
    const auto published = ela();
    const rewrite::Rewriter rewriter(published->doc, backend_);
    std::vector<rewrite::TransformedScript> transformed;
    bool writes = false;
    for (std::size_t i = 0; i < script.statements.size(); ++i) {
        auto result = rewriter.rewrite(script.statements[i], who, i);
        if (const auto* d = std::get_if<rewrite::Denial>(&result)) {
            return failure(rewrite::to_string(d->reason), statement_label(d->statement_index) + ": " + d->detail);
        }
        auto& ts = std::get<rewrite::TransformedScript>(result);
        const auto referenced = rewrite::variables_in(ts);
        const auto bound = rewrite::variables_bound(ts);
        for (const auto& v : referenced) {
            if (!bound.contains(v)) {
                return failure("InternalError", statement_label(i) + ": variable @" + v + " is never bound");
            }
        }
        writes = writes || ts.kind == sql::StatementKind::Insert || ts.kind == sql::StatementKind::Update;
        transformed.push_back(std::move(ts));
    }

    ResponseEnvelope env;
    std::vector<std::string> notes;
    std::size_t current = 0;
    try {
        auto session = backend_.begin_session(writes ? backend::SessionMode::ReadWrite : backend::SessionMode::ReadOnly);
        for (; current < transformed.size(); ++current) {
            const auto& ts = transformed[current];
            const backend::ResultRelation rel = session->execute(ts);
            StatementResult sr;
            sr.executed_sql = ts.executed_sql();
            sr.requested_sql = ts.requested_sql;
            for (const auto& row : rel.rows) {
                std::vector<Cell> cells;
                for (std::size_t c = 0; c < rel.columns.size(); ++c) cells.push_back({rel.columns[c], row[c]});
                sr.rows.push_back(std::move(cells));
            }
            const bool returns_rows = ts.kind == sql::StatementKind::Select || ts.kind == sql::StatementKind::Show;
            notes.push_back(statement_label(current) + ": " +
                            (returns_rows ? plural(static_cast<std::int64_t>(rel.rows.size()), "row") + " returned"
                                          : plural(rel.affected_rows, "row") + " affected"));
            env.results.push_back(std::move(sr));
        }
        session->commit();
    } catch (const backend::BackendError& e) {
        return failure(backend::to_string(e.code()), statement_label(current) + ": " + e.what());
    }

    env.ok = true;
    env.feedback = "OK: ";
    for (std::size_t i = 0; i < notes.size(); ++i) env.feedback += (i ? "; " : "") + notes[i];
    env.generation_date = backend::format_utc(backend::Clock::now());
    return env;
}

HttpReply Gateway::handle_request(std::string_view body) const {
    HttpReply reply;
    identity::SignedRequest req;
    try {
        req = decode_request(body);
    } catch (const EnvelopeError& e) {
        // Bodies that are not a JSON object at all get 400; shape errors
        // inside an object are reported in the envelope.
        if (std::string_view(e.what()).starts_with("request body")) reply.status = 400;
        reply.body = encode_response(failure("MalformedRequest", e.what()));
        return reply;
    }
    reply.body = encode_response(process(req));
    return reply;
}

HttpReply Gateway::get_ela(std::optional<std::string_view> if_none_match) const {
    const auto published = ela();
    HttpReply reply;
    reply.headers.emplace_back("ETag", published->etag);
    if (if_none_match && *if_none_match == published->etag) {
        reply.status = 304;
        reply.content_type.clear();
        return reply;
    }
    reply.content_type = "application/xml";
    reply.body = published->xml;
    return reply;
}

HttpReply Gateway::health() const {
    const auto published = ela();
    HttpReply reply;
    reply.body = json{{"status", "ok"},
                      {"ela_etag", published->etag},
                      {"restrictions", published->doc.restrictions.size()},
                      {"ela_signed", published->signer.has_value()}}
                     .dump();
    return reply;
}

// ---------------------------------------------------------------------------
// HTTP server
// ---------------------------------------------------------------------------
struct HttpServer::Impl {
    const Gateway& gateway;
    httplib::Server server;
};

namespace {

void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    for (const auto& [k, v] : reply.headers) res.set_header(k, v);
    if (!reply.content_type.empty()) res.set_content(reply.body, reply.content_type.c_str());
}

}  // namespace

HttpServer::HttpServer(const Gateway& gateway) : impl_(new Impl{gateway, {}}) {
    auto& srv = impl_->server;
    const Gateway* gw = &gateway;
    srv.Post("/query", [gw](const httplib::Request& req, httplib::Response& res) {
        send(res, gw->handle_request(req.body));
    });
    srv.Get("/ela", [gw](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string_view> inm;
        const std::string header = req.get_header_value("If-None-Match");
        if (!header.empty()) inm = header;
        send(res, gw->get_ela(inm));
    });
    srv.Get("/health", [gw](const httplib::Request&, httplib::Response& res) { send(res, gw->health()); });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host.c_str());
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host.c_str(), port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

std::pair<std::string, int> parse_listen_address(std::string_view text) {
    std::string host = "127.0.0.1";
    std::string_view port_text = text;
    if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) host = std::string(text.substr(0, colon));
        port_text = text.substr(colon + 1);
    }
    int port = -1;
    const auto res = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (res.ec != std::errc{} || res.ptr != port_text.data() + port_text.size() || port < 0 || port > 65535) {
        throw std::invalid_argument("bad listen address '" + std::string(text) + "'");
    }
    return {host, port};
}

}  // namespace secss::gateway
