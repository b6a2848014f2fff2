// ---------------------------------------------------------------------------
// identity.hpp
//
// Request authentication: CMS detached signatures over the SQL text,
// X.509 chain checking against a directory of trusted roots, and the
// Base64(SHA-256(DER)) subject identifier used as the ELA user name.
// ---------------------------------------------------------------------------
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace secss::identity {

enum class ErrorCode {
    BadSignature,       // digest or signature mismatch
    UntrustedSigner,    // signer certificate does not chain to a root
    MalformedEnvelope,  // not Base64, not CMS, no signer certificate
    BadCredentials,     // unreadable key/certificate, key does not match cert
};

std::string_view to_string(ErrorCode code);

class IdentityError : public std::runtime_error {
public:
    IdentityError(ErrorCode code, const std::string& message);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct Anonymous {
    friend bool operator==(const Anonymous&, const Anonymous&) = default;
};

struct Certified {
    std::string id;  // Base64(SHA-256(certificate DER)), 44 characters
    std::string subject_name;
    std::array<std::uint8_t, 32> fingerprint{};

    friend bool operator==(const Certified&, const Certified&) = default;
};

class RequesterIdentity {
public:
    RequesterIdentity() = default;
    explicit RequesterIdentity(Certified c) : value_(std::move(c)) {}

    static RequesterIdentity anonymous() { return {}; }

    bool is_anonymous() const { return std::holds_alternative<Anonymous>(value_); }
    const Certified* certified() const { return std::get_if<Certified>(&value_); }

    // The string matched against Permission/@user: "anon" or the id.
    std::string ela_user() const;

    friend bool operator==(const RequesterIdentity&, const RequesterIdentity&) = default;

private:
    std::variant<Anonymous, Certified> value_;
};

inline constexpr std::string_view kAnonymousUser = "anon";

struct SignedRequest {
    std::string sql;
    std::optional<std::string> pkcs7;  // Base64 of DER-encoded CMS SignedData
    std::optional<std::string> comment;
};

// Trusted root (or directly trusted leaf) certificates.
class TrustStore {
public:
    TrustStore();
    ~TrustStore();
    TrustStore(const TrustStore&);
    TrustStore& operator=(const TrustStore&);
    TrustStore(TrustStore&&) noexcept;
    TrustStore& operator=(TrustStore&&) noexcept;

    // Loads every *.pem, *.crt and *.der file in dir.
    static TrustStore from_directory(const std::filesystem::path& dir);

    // PEM text may hold several certificates.
    void add_pem(std::string_view pem);
    void add_der(std::span<const std::uint8_t> der);

    std::size_t size() const;

    struct Impl;
    const Impl& impl() const { return *impl_; }

private:
    std::shared_ptr<Impl> impl_;
};

// Absent pkcs7 gives Anonymous; otherwise the signature must verify over
// the exact bytes of req.sql and the signer must chain to a trusted root.
RequesterIdentity verify(const SignedRequest& req, const TrustStore& trust);

// Same check for arbitrary bytes with a raw DER signature.
RequesterIdentity verify_detached(std::span<const std::uint8_t> data,
                                  std::span<const std::uint8_t> signature_der,
                                  const TrustStore& trust);

std::string identity_of(std::span<const std::uint8_t> cert_der);

// DER bytes of the first certificate in a PEM blob.
std::vector<std::uint8_t> certificate_der(std::string_view cert_pem);

// Detached CMS SignedData (SHA-256, signer certificate embedded), DER.
std::vector<std::uint8_t> sign_detached(std::span<const std::uint8_t> data,
                                        std::string_view key_pem, std::string_view cert_pem);

// Base64 of sign_detached over the UTF-8 bytes of sql.
std::string sign_sql(std::string_view sql, std::string_view key_pem, std::string_view cert_pem);

struct DevCredentials {
    std::string key_pem;
    std::string cert_pem;
};

// Self-signed EC P-256 certificate, valid for ten years, labelled test only.
DevCredentials generate_dev_credentials(std::string_view common_name);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);  // throws MalformedEnvelope

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace secss::identity
