// ---------------------------------------------------------------------------
// gateway.hpp
//
// The HTTP/JSON front door. One request runs
//
//   decode -> verify signature -> parse -> rewrite every statement
//          -> execute all of them in one transaction -> encode
//
// and any failure before commit leaves the database untouched.
//
//   POST /query   request envelope  {SQL, Pkcs7, Comment}
//   GET  /ela     the loaded ELA, verbatim, with an ETag
//   GET  /health  liveness
// ---------------------------------------------------------------------------
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "secss/backend.hpp"
#include "secss/ela_policy.hpp"
#include "secss/identity.hpp"

namespace secss::gateway {

struct Cell {
    std::string name;
    backend::Value value;

    friend bool operator==(const Cell&, const Cell&) = default;
};

struct StatementResult {
    std::string executed_sql;
    std::string requested_sql;
    std::vector<std::vector<Cell>> rows;

    friend bool operator==(const StatementResult&, const StatementResult&) = default;
};

struct ResponseEnvelope {
    std::vector<StatementResult> results;
    std::string feedback;
    std::string generation_date;
    bool ok = false;

    friend bool operator==(const ResponseEnvelope&, const ResponseEnvelope&) = default;
};

// Thrown by the decoders on bodies that are not JSON objects of the right
// shape.
class EnvelopeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string encode_request(const identity::SignedRequest& req);
identity::SignedRequest decode_request(std::string_view body);
std::string encode_response(const ResponseEnvelope& env);
ResponseEnvelope decode_response(std::string_view body);

// An ELA as published: the exact bytes, the parsed document, and the
// signer when a detached signature was supplied.
struct PublishedEla {
    std::string xml;
    ela::ElaDocument doc;
    std::string etag;  // quoted hex SHA-256 of xml
    std::optional<identity::Certified> signer;
    std::vector<std::string> load_warnings;
};

PublishedEla publish_ela(std::string xml, std::optional<std::vector<std::uint8_t>> signature_der,
                         const identity::TrustStore& trust);
// Reads path and, when present, the detached signature path + ".p7s"
// (DER or Base64).
PublishedEla load_ela_file(const std::filesystem::path& path, const identity::TrustStore& trust);

struct HttpReply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
};

class Gateway {
public:
    Gateway(backend::Backend& backend, identity::TrustStore trust, PublishedEla ela);

    ResponseEnvelope process(const identity::SignedRequest& req) const;

    HttpReply handle_request(std::string_view body) const;
    HttpReply get_ela(std::optional<std::string_view> if_none_match = std::nullopt) const;
    HttpReply health() const;

    // Swaps the whole document between requests.
    void replace_ela(PublishedEla ela);
    std::shared_ptr<const PublishedEla> ela() const;

private:
    backend::Backend& backend_;
    identity::TrustStore trust_;
    mutable std::mutex ela_mutex_;
    std::shared_ptr<const PublishedEla> ela_;
};

// Blocking HTTP/1.1 server around a Gateway.
class HttpServer {
public:
    explicit HttpServer(const Gateway& gateway);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Serves until stop(); call after bind().
    void run();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// "host:port" or ":port" or "port".
std::pair<std::string, int> parse_listen_address(std::string_view text);

}  // namespace secss::gateway
