// secss-gate: run the gateway and the tooling around it.
//
//   secss-gate serve --ela ela.xml --backend sqlite:play.db?schema=playground
//   secss-gate validate-ela ela.xml
//   secss-gate keygen --cn alice --out-dir keys
//   secss-gate sign --key k.pem --cert c.pem query.sql > request.json
//   secss-gate submit request.json --url http://127.0.0.1:8080
//   secss-gate seed-playground --backend sqlite:play.db?schema=playground
//
// Exit codes: 0 ok, 1 command failed (denied request, invalid ELA, ...),
// 2 usage or I/O error, 3 server rejected the request body.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "secss/backend.hpp"
#include "secss/ela_policy.hpp"
#include "secss/gateway.hpp"
#include "secss/identity.hpp"
#include "secss/playground.hpp"

namespace {

using nlohmann::json;
using namespace secss;

std::string read_input(const std::string& path) {
    if (path == "-") {
        return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << data;
}

identity::TrustStore trust_from(const std::string& dir) {
    if (dir.empty()) return {};
    return identity::TrustStore::from_directory(dir);
}

gateway::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

struct Options {
    std::string listen = "127.0.0.1:8080";
    std::string ela;
    std::string trust_dir;
    std::string backend;
    bool json = false;
    bool force = false;
};

int cmd_serve(const Options& o) {
    if (o.ela.empty()) throw CLI::ValidationError("--ela", "required (or SECSS_ELA)");
    if (o.backend.empty()) throw CLI::ValidationError("--backend", "required (or SECSS_BACKEND)");
    const auto [host, port] = gateway::parse_listen_address(o.listen);
    const auto trust = trust_from(o.trust_dir);
    auto published = gateway::load_ela_file(o.ela, trust);
    for (const auto& w : published.load_warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& w : published.doc.warnings) std::cerr << "warning: " << w.where << ": " << w.message << "\n";
    auto db = backend::open_backend(o.backend);
    gateway::Gateway gw(*db, trust, std::move(published));
    gateway::HttpServer server(gw);
    const int bound = server.bind(host, port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (o.json) {
        std::cout << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
    } else {
        std::cout << "secss-gate listening on http://" << host << ":" << bound << std::endl;
    }
    server.run();
    g_server = nullptr;
    return 0;
}

int cmd_validate(const Options& o, const std::string& path) {
    const std::string xml = read_input(path);
    try {
        const auto doc = ela::parse_ela(xml);
        if (o.json) {
            json restrictions = json::array();
            for (const auto& r : doc.restrictions) {
                json vars = json::array();
                for (const auto& v : r.vars) vars.push_back({{"name", v.name}, {"field", v.field}});
                restrictions.push_back({{"id", r.id},
                                        {"type", ela::to_string(r.type)},
                                        {"table", r.table},
                                        {"field", r.field},
                                        {"use", ela::to_string(r.use)},
                                        {"vars", vars}});
            }
            json permissions = json::array();
            for (const auto& s : doc.schemas) {
                for (const auto& t : s.tables) {
                    for (const auto& f : t.fields) {
                        for (const auto& p : f.permissions) {
                            permissions.push_back({{"field", s.name + "." + t.name + "." + f.name},
                                                   {"user", p.user},
                                                   {"type", ela::to_string(p.type)},
                                                   {"restrictions", p.applied_restrictions},
                                                   {"enforced", p.enforced()}});
                        }
                    }
                }
            }
            json warnings = json::array();
            for (const auto& w : doc.warnings) warnings.push_back({{"where", w.where}, {"message", w.message}});
            std::cout << json{{"valid", true},
                              {"restrictions", restrictions},
                              {"permissions", permissions},
                              {"warnings", warnings}}
                             .dump(2)
                      << "\n";
        } else {
            std::cout << "valid\n" << ela::describe(doc);
        }
        return 0;
    } catch (const ela::ElaError& e) {
        if (o.json) {
            std::cout << json{{"valid", false},
                              {"code", ela::to_string(e.code())},
                              {"line", e.line()},
                              {"message", e.what()}}
                             .dump(2)
                      << "\n";
        } else {
            std::cerr << "invalid: " << ela::to_string(e.code()) << " (line " << e.line() << "): " << e.what()
                      << "\n";
        }
        return 1;
    }
}

int cmd_keygen(const Options& o, const std::string& cn, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path key = std::filesystem::path(out_dir) / (cn + ".key.pem");
    const std::filesystem::path cert = std::filesystem::path(out_dir) / (cn + ".cert.pem");
    if (!o.force && (std::filesystem::exists(key) || std::filesystem::exists(cert))) {
        std::cerr << "error: " << key.string() << " exists; use --force to overwrite\n";
        return 1;
    }
    const auto creds = identity::generate_dev_credentials(cn);
    write_file(key, creds.key_pem);
    std::filesystem::permissions(key, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
    write_file(cert, creds.cert_pem);
    std::optional<std::filesystem::path> trusted;
    if (!o.trust_dir.empty()) {
        std::filesystem::create_directories(o.trust_dir);
        trusted = std::filesystem::path(o.trust_dir) / (cn + ".cert.pem");
        write_file(*trusted, creds.cert_pem);
    }
    const std::string id = identity::identity_of(identity::certificate_der(creds.cert_pem));
    if (o.json) {
        json j{{"key", key.string()}, {"cert", cert.string()}, {"id", id}};
        if (trusted) j["trusted"] = trusted->string();
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "key:  " << key.string() << "\ncert: " << cert.string() << "\nid:   " << id << "\n";
        if (trusted) std::cout << "trusted: " << trusted->string() << "\n";
        std::cout << "(self-signed, test only)\n";
    }
    return 0;
}

int cmd_sign(const std::string& key, const std::string& cert, const std::string& sql_path,
             const std::optional<std::string>& comment) {
    const std::string key_pem = read_input(key);
    const std::string cert_pem = read_input(cert);
    identity::SignedRequest req;
    req.sql = read_input(sql_path);
    req.pkcs7 = identity::sign_sql(req.sql, key_pem, cert_pem);
    req.comment = comment;
    std::cout << gateway::encode_request(req) << "\n";
    return 0;
}

int cmd_submit(const Options& o, const std::string& url, const std::string& request_path) {
    const std::string body = read_input(request_path);
    httplib::Client client(url);
    client.set_connection_timeout(5);
    client.set_read_timeout(60);
    auto res = client.Post("/query", body, "application/json");
    if (!res) {
        std::cerr << "error: cannot reach " << url << ": " << httplib::to_string(res.error()) << "\n";
        return 2;
    }
    std::cout << res->body;
    if (!res->body.empty() && res->body.back() != '\n') std::cout << "\n";
    if (res->status == 400) {
        if (!o.json) std::cerr << "error: server rejected the request body (HTTP 400)\n";
        return 3;
    }
    if (res->status != 200) {
        std::cerr << "error: HTTP " << res->status << "\n";
        return 2;
    }
    try {
        return gateway::decode_response(res->body).ok ? 0 : 1;
    } catch (const gateway::EnvelopeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_seed(const Options& o, const std::string& fixture_name) {
    if (o.backend.empty()) throw CLI::ValidationError("--backend", "required (or SECSS_BACKEND)");
    const playground::Fixture& fixture =
        fixture_name == "paper_tables" ? playground::paper_tables_fixture() : playground::playground_fixture();
    auto db = backend::SqliteBackend::open(o.backend);
    try {
        playground::seed(*db, fixture, o.force);
    } catch (const backend::BackendError& e) {
        if (e.code() != backend::ErrorCode::SchemaExists) throw;
        std::cerr << "error: SchemaExists: " << e.what() << "\n";
        return 1;
    }
    const auto tables = db->table_names();
    if (o.json) {
        std::cout << json{{"seeded", fixture.name}, {"schema", db->default_schema()}, {"tables", tables}}.dump(2)
                  << "\n";
    } else {
        std::cout << "seeded " << fixture.name << " into schema " << db->default_schema() << ":";
        for (const auto& t : tables) std::cout << " " << t;
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"secss-gate: policy-enforcing SQL gateway"};
    app.require_subcommand(1);
    Options o;
    app.add_flag("--json", o.json, "Machine-readable output");

    auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
    serve->add_option("--listen", o.listen, "host:port to listen on")->capture_default_str();
    serve->add_option("--ela", o.ela, "ELA document")->envname("SECSS_ELA");
    serve->add_option("--trust-dir", o.trust_dir, "Directory of trusted certificates")->envname("SECSS_TRUST_DIR");
    serve->add_option("--backend", o.backend, "Backend connection string")->envname("SECSS_BACKEND");

    std::string ela_path;
    auto* validate = app.add_subcommand("validate-ela", "Check an ELA document and summarize it");
    validate->add_option("path", ela_path, "ELA file ('-' for stdin)")->envname("SECSS_ELA");

    std::string cn = "dev";
    std::string out_dir = ".";
    auto* keygen = app.add_subcommand("keygen", "Generate a self-signed test key and certificate");
    keygen->add_option("--cn", cn, "Common name")->capture_default_str();
    keygen->add_option("--out-dir", out_dir, "Where to write the PEM files")->capture_default_str();
    keygen->add_option("--trust-dir", o.trust_dir, "Also copy the certificate here")->envname("SECSS_TRUST_DIR");
    keygen->add_flag("--force", o.force, "Overwrite existing files");

    std::string key_path, cert_path, sql_path;
    std::optional<std::string> comment;
    auto* sign = app.add_subcommand("sign", "Wrap SQL in a signed request envelope");
    sign->add_option("--key", key_path, "Private key (PEM)")->required();
    sign->add_option("--cert", cert_path, "Certificate (PEM)")->required();
    sign->add_option("--comment", comment, "Informative comment");
    sign->add_option("sql", sql_path, "SQL file ('-' for stdin)")->required();

    std::string url = "http://127.0.0.1:8080";
    std::string request_path;
    auto* submit = app.add_subcommand("submit", "POST a request envelope and print the response");
    submit->add_option("--url", url, "Gateway base URL")->capture_default_str();
    submit->add_option("request", request_path, "Request JSON file ('-' for stdin)")->required();

    std::string fixture = "playground";
    auto* seed = app.add_subcommand("seed-playground", "Create and fill the playground tables");
    seed->add_option("--backend", o.backend, "Backend connection string")->envname("SECSS_BACKEND");
    seed->add_option("--fixture", fixture, "playground or paper_tables")
        ->check(CLI::IsMember({"playground", "paper_tables"}))
        ->capture_default_str();
    seed->add_flag("--force", o.force, "Replace existing tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*serve) return cmd_serve(o);
        if (*validate) {
            if (ela_path.empty()) throw CLI::ValidationError("path", "required (or SECSS_ELA)");
            return cmd_validate(o, ela_path);
        }
        if (*keygen) return cmd_keygen(o, cn, out_dir);
        if (*sign) return cmd_sign(key_path, cert_path, sql_path, comment);
        if (*submit) return cmd_submit(o, url, request_path);
        if (*seed) return cmd_seed(o, fixture);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ela::ElaError& e) {
        std::cerr << "error: ELA " << ela::to_string(e.code()) << " (line " << e.line() << "): " << e.what() << "\n";
        return 1;
    } catch (const identity::IdentityError& e) {
        std::cerr << "error: " << identity::to_string(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const backend::BackendError& e) {
        std::cerr << "error: " << backend::to_string(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
