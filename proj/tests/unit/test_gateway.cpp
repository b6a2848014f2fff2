#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>

#include <regex>
#include <thread>

#include "corpora.hpp"
#include "secss/gateway.hpp"
#include "secss/playground.hpp"
#include "test_files.hpp"

using namespace secss;
using nlohmann::json;
using secss::testing::cert_path;
using secss::testing::read_file;

namespace {

class GatewayTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = secss::testing::scratch_dir(std::string("gateway_") + info->name());
        db_ = playground::open_seeded(playground::playground_fixture(), dir_ / "playground.db");
        trust_ = identity::TrustStore::from_directory(cert_path("trusted"));
        gw_ = std::make_unique<gateway::Gateway>(
            *db_, trust_, gateway::publish_ela(std::string(playground::playground_fixture().ela_xml), std::nullopt, trust_));
    }

    gateway::ResponseEnvelope query(const std::string& sql) const { return gw_->process({sql, std::nullopt, std::nullopt}); }

    identity::SignedRequest signed_by(const std::string& who, const std::string& sql) const {
        return {sql, identity::sign_sql(sql, read_file(cert_path(who + ".key.pem")), read_file(cert_path(who + ".cert.pem"))),
                std::nullopt};
    }

    std::filesystem::path dir_;
    std::unique_ptr<backend::SqliteBackend> db_;
    identity::TrustStore trust_;
    std::unique_ptr<gateway::Gateway> gw_;
};

std::vector<std::string> keys_of(const json& j) {
    std::vector<std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.push_back(it.key());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(Wire, RequestFieldNames) {
    const json j = json::parse(gateway::encode_request({"SELECT 1", std::string("c2ln"), std::string("why")}));
    EXPECT_EQ(keys_of(j), (std::vector<std::string>{"Comment", "Pkcs7", "SQL"}));
    EXPECT_EQ(j["SQL"], "SELECT 1");
    EXPECT_EQ(j["Pkcs7"], "c2ln");
    EXPECT_EQ(j["Comment"], "why");
}

TEST(Wire, RequestDecoding) {
    const auto r = gateway::decode_request(R"({"SQL": "SHOW TABLES", "Pkcs7": null, "Comment": "x"})");
    EXPECT_EQ(r.sql, "SHOW TABLES");
    EXPECT_FALSE(r.pkcs7);
    EXPECT_EQ(r.comment, "x");
    EXPECT_EQ(gateway::decode_request("{}").sql, "");
    EXPECT_THROW(gateway::decode_request("[1]"), gateway::EnvelopeError);
    EXPECT_THROW(gateway::decode_request("{"), gateway::EnvelopeError);
    EXPECT_THROW(gateway::decode_request(R"({"SQL": 5})"), gateway::EnvelopeError);
}

TEST(Wire, ResponseShape) {
    gateway::ResponseEnvelope env;
    env.ok = true;
    env.feedback = "OK: statement 1: 1 row returned";
    env.generation_date = "2012-06-15T12:00:00Z";
    env.results.push_back({"SELECT name FROM children;", "SELECT name FROM children", {{{"name", "Mia"}, {"x", std::nullopt}}}});
    const json j = json::parse(gateway::encode_response(env));
    EXPECT_EQ(keys_of(j), (std::vector<std::string>{"Feedback", "GenerationDate", "OK", "Results"}));
    ASSERT_TRUE(j["OK"].is_boolean());
    ASSERT_TRUE(j["Results"].is_array());
    const json& r = j["Results"][0];
    EXPECT_EQ(keys_of(r), (std::vector<std::string>{"ExecutedSQL", "RequestedSQL", "Rows"}));
    const json& cell = r["Rows"][0][0];
    EXPECT_EQ(keys_of(cell), (std::vector<std::string>{"Name", "Value"}));
    EXPECT_EQ(cell["Value"], "Mia");
    EXPECT_TRUE(r["Rows"][0][1]["Value"].is_null());
    EXPECT_EQ(gateway::decode_response(gateway::encode_response(env)), env);
}

TEST_F(GatewayTest, SelectRoundTrip) {
    const auto env = query("SELECT name FROM children ORDER BY name");
    ASSERT_TRUE(env.ok) << env.feedback;
    EXPECT_EQ(env.feedback, "OK: statement 1: 3 rows returned");
    ASSERT_EQ(env.results.size(), 1u);
    EXPECT_EQ(env.results[0].requested_sql, "SELECT name FROM children ORDER BY name");
    EXPECT_EQ(env.results[0].executed_sql, "SELECT name FROM children ORDER BY name;");
    ASSERT_EQ(env.results[0].rows.size(), 3u);
    EXPECT_EQ(env.results[0].rows[0][0], (gateway::Cell{"name", "Ana"}));
    EXPECT_TRUE(std::regex_match(env.generation_date, std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ)")));
}

TEST_F(GatewayTest, DenialNamesField) {
    const auto env = query("SELECT birthday FROM children");
    EXPECT_FALSE(env.ok);
    EXPECT_EQ(env.feedback, "NoPermission: statement 1: no SELECT permission on children.birthday for anon");
    EXPECT_TRUE(env.results.empty());
}

TEST_F(GatewayTest, MultiStatementFeedback) {
    const auto env = query("UPDATE sandbox SET posx = 5 WHERE ninu = '2003022850001'; SELECT posx FROM sandbox");
    ASSERT_TRUE(env.ok) << env.feedback;
    EXPECT_EQ(env.feedback, "OK: statement 1: 1 row affected; statement 2: 1 row returned");
    ASSERT_EQ(env.results.size(), 2u);
    EXPECT_EQ(env.results[1].rows[0][0].value, "5");
}

TEST_F(GatewayTest, LaterDenialAbortsEverything) {
    const std::string before = db_->snapshot();
    const auto env =
        query("UPDATE sandbox SET posx = 5 WHERE ninu = '2003022850001'; SELECT birthday FROM children");
    EXPECT_FALSE(env.ok);
    EXPECT_TRUE(env.feedback.starts_with("NoPermission: statement 2:")) << env.feedback;
    EXPECT_EQ(db_->snapshot(), before);
}

TEST_F(GatewayTest, BackendFailureRollsBackEarlierStatements) {
    const std::string before = db_->snapshot();
    const auto env = query(
        "UPDATE sandbox SET posx = 5 WHERE ninu = '2003022850001'; "
        "INSERT INTO sandbox (ninu, posx, posy) VALUES ('2003022850001', 1, 1)");
    EXPECT_FALSE(env.ok);
    EXPECT_TRUE(env.feedback.starts_with("ConstraintViolation: statement 2:")) << env.feedback;
    EXPECT_EQ(db_->snapshot(), before);
}

TEST_F(GatewayTest, MissingSql) {
    EXPECT_EQ(query("  \n").feedback, "MalformedRequest: SQL is missing or empty");
    EXPECT_FALSE(query("").ok);
}

TEST_F(GatewayTest, SignedRequestsUseTheirIdentity) {
    const auto env = gw_->process(signed_by("alice", "SELECT name FROM children"));
    EXPECT_TRUE(env.ok) << env.feedback;  // falls back to the anon grants
    const auto denied = gw_->process(signed_by("alice", "SELECT birthday FROM children"));
    EXPECT_EQ(denied.feedback, "NoPermission: statement 1: no SELECT permission on children.birthday for "
                               "v33sg7P/ebo31IUg62SHBNiDE2eulqFcVSFqoIyTwfI=");
}

TEST_F(GatewayTest, UntrustedAndTampered) {
    EXPECT_TRUE(gw_->process(signed_by("mallory", "SHOW TABLES")).feedback.starts_with("UntrustedSigner: "));
    auto req = signed_by("bob", "SHOW TABLES");
    req.sql = "SHOW DATABASES";
    EXPECT_TRUE(gw_->process(req).feedback.starts_with("BadSignature: "));
}

TEST_F(GatewayTest, InjectionCorpusNeverExecutes) {
    const std::string before = db_->snapshot();
    for (const auto& sql : secss::testing::injection_corpus()) {
        const auto env = query(sql);
        EXPECT_FALSE(env.ok) << sql << " -> " << env.feedback;
        EXPECT_TRUE(env.results.empty()) << sql;
        EXPECT_EQ(db_->snapshot(), before) << sql;
    }
}

TEST_F(GatewayTest, HandleRequestStatusCodes) {
    EXPECT_EQ(gw_->handle_request("not json").status, 400);
    EXPECT_EQ(gw_->handle_request("[]").status, 400);
    const auto shape = gw_->handle_request(R"({"SQL": 1})");
    EXPECT_EQ(shape.status, 200);
    EXPECT_FALSE(gateway::decode_response(shape.body).ok);
    const auto ok = gw_->handle_request(gateway::encode_request({"SHOW TABLES", std::nullopt, std::nullopt}));
    EXPECT_EQ(ok.status, 200);
    EXPECT_EQ(ok.content_type, "application/json");
    EXPECT_TRUE(gateway::decode_response(ok.body).ok);
}

TEST_F(GatewayTest, ElaIsPublishedWithEtag) {
    const auto reply = gw_->get_ela();
    EXPECT_EQ(reply.status, 200);
    EXPECT_EQ(reply.content_type, "application/xml");
    EXPECT_EQ(reply.body, playground::playground_fixture().ela_xml);
    const std::string etag = "\"" + identity::sha256_hex(reply.body) + "\"";
    ASSERT_EQ(reply.headers.size(), 1u);
    EXPECT_EQ(reply.headers[0], (std::pair<std::string, std::string>{"ETag", etag}));
    EXPECT_EQ(gw_->get_ela(etag).status, 304);
    EXPECT_EQ(gw_->get_ela("\"stale\"").status, 200);
}

TEST_F(GatewayTest, Health) {
    const json j = json::parse(gw_->health().body);
    EXPECT_EQ(j["status"], "ok");
    EXPECT_EQ(j["restrictions"], 2);
    EXPECT_EQ(j["ela_signed"], false);
    EXPECT_EQ(j["ela_etag"], gw_->ela()->etag);
}

TEST_F(GatewayTest, UnsignedElaWarns) {
    const auto& w = gw_->ela()->load_warnings;
    EXPECT_NE(std::find(w.begin(), w.end(), "ELA is not signed"), w.end());
}

TEST_F(GatewayTest, SignedElaFile) {
    const std::string xml(playground::playground_fixture().ela_xml);
    const auto path = dir_ / "ela.xml";
    std::ofstream(path, std::ios::binary) << xml;
    const auto sig = identity::sign_detached(identity::as_bytes(xml), read_file(cert_path("bob.key.pem")),
                                             read_file(cert_path("bob.cert.pem")));
    std::ofstream(dir_ / "ela.xml.p7s", std::ios::binary) << identity::base64_encode(sig) << "\n";
    const auto published = gateway::load_ela_file(path, trust_);
    ASSERT_TRUE(published.signer);
    EXPECT_EQ(published.signer->id, "ODzENcOdYeO0ZvGhRTI84yMgAciAwOP4BtRKhuGHBww=");

    std::ofstream(dir_ / "ela.xml.p7s", std::ios::binary).write(reinterpret_cast<const char*>(sig.data()),
                                                                 static_cast<std::streamsize>(sig.size()));
    EXPECT_TRUE(gateway::load_ela_file(path, trust_).signer);

    std::ofstream(path, std::ios::binary) << xml << " ";
    EXPECT_THROW(gateway::load_ela_file(path, trust_), identity::IdentityError);
}

TEST_F(GatewayTest, ReplaceEla) {
    const auto& tf = playground::paper_tables_fixture();
    gw_->replace_ela(gateway::publish_ela(std::string(tf.ela_xml), std::nullopt, trust_));
    EXPECT_EQ(gw_->get_ela().body, tf.ela_xml);
}

TEST(ListenAddress, Forms) {
    EXPECT_EQ(gateway::parse_listen_address("127.0.0.1:8080"), (std::pair<std::string, int>{"127.0.0.1", 8080}));
    EXPECT_EQ(gateway::parse_listen_address(":9000"), (std::pair<std::string, int>{"127.0.0.1", 9000}));
    EXPECT_EQ(gateway::parse_listen_address("9000").second, 9000);
    EXPECT_THROW(gateway::parse_listen_address("host:notaport"), std::exception);
}

TEST_F(GatewayTest, HttpEndToEnd) {
    gateway::HttpServer server(*gw_);
    const int port = server.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread t([&] { server.run(); });
    httplib::Client cli("127.0.0.1", port);
    cli.set_connection_timeout(5);

    auto res = cli.Post("/query", gateway::encode_request({"SELECT name FROM children", std::nullopt, std::nullopt}),
                        "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
    EXPECT_TRUE(gateway::decode_response(res->body).ok);

    auto bad = cli.Post("/query", "{{{", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);

    auto ela = cli.Get("/ela");
    ASSERT_TRUE(ela);
    EXPECT_EQ(ela->status, 200);
    const std::string etag = ela->get_header_value("ETag");
    EXPECT_EQ(etag, gw_->ela()->etag);
    auto cached = cli.Get("/ela", {{"If-None-Match", etag}});
    ASSERT_TRUE(cached);
    EXPECT_EQ(cached->status, 304);

    auto health = cli.Get("/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(json::parse(health->body)["status"], "ok");

    server.stop();
    t.join();
    EXPECT_FALSE(server.running());
}
