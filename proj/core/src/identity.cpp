// ---------------------------------------------------------------------------
// identity.cpp
//
// OpenSSL CMS backing for request signatures.
// ---------------------------------------------------------------------------

#include "secss/identity.hpp"

#include <openssl/bio.h>
#include <openssl/cms.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>
#include <openssl/x509_vfy.h>

#include <algorithm>
#include <fstream>
#include <iterator>

namespace secss::identity {

namespace {

template <typename T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};

using BioPtr = std::unique_ptr<BIO, Deleter<BIO, BIO_free_all>>;
using X509Ptr = std::unique_ptr<X509, Deleter<X509, X509_free>>;
using StorePtr = std::unique_ptr<X509_STORE, Deleter<X509_STORE, X509_STORE_free>>;
using StoreCtxPtr = std::unique_ptr<X509_STORE_CTX, Deleter<X509_STORE_CTX, X509_STORE_CTX_free>>;
using CmsPtr = std::unique_ptr<CMS_ContentInfo, Deleter<CMS_ContentInfo, CMS_ContentInfo_free>>;
using KeyPtr = std::unique_ptr<EVP_PKEY, Deleter<EVP_PKEY, EVP_PKEY_free>>;
using KeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, Deleter<EVP_PKEY_CTX, EVP_PKEY_CTX_free>>;

void free_cert_stack(STACK_OF(X509) * s) { sk_X509_pop_free(s, X509_free); }
using CertStackPtr = std::unique_ptr<STACK_OF(X509), decltype(&free_cert_stack)>;

std::string openssl_error() {
    std::string out;
    while (unsigned long e = ERR_get_error()) {
        char buf[256];
        ERR_error_string_n(e, buf, sizeof buf);
        if (!out.empty()) out += "; ";
        out += buf;
    }
    return out.empty() ? "unknown OpenSSL error" : out;
}

BioPtr mem_bio(std::span<const std::uint8_t> bytes) {
    BioPtr bio(BIO_new_mem_buf(bytes.data(), static_cast<int>(bytes.size())));
    if (!bio) throw IdentityError(ErrorCode::MalformedEnvelope, "cannot allocate buffer");
    return bio;
}

BioPtr mem_bio(std::string_view text) { return mem_bio(as_bytes(text)); }

std::vector<std::uint8_t> der_of(X509* cert) {
    unsigned char* buf = nullptr;
    const int len = i2d_X509(cert, &buf);
    if (len <= 0) throw IdentityError(ErrorCode::MalformedEnvelope, "cannot encode certificate");
    std::vector<std::uint8_t> out(buf, buf + len);
    OPENSSL_free(buf);
    return out;
}

std::string subject_of(X509* cert) {
    BioPtr bio(BIO_new(BIO_s_mem()));
    X509_NAME_print_ex(bio.get(), X509_get_subject_name(cert), 0, XN_FLAG_RFC2253);
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(len));
}

std::string bio_string(BIO* bio) {
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio, &data);
    return std::string(data, static_cast<std::size_t>(len));
}

X509Ptr read_cert_pem(std::string_view pem) {
    BioPtr bio = mem_bio(pem);
    X509Ptr cert(PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr));
    if (!cert) throw IdentityError(ErrorCode::BadCredentials, "cannot read certificate: " + openssl_error());
    return cert;
}

KeyPtr read_key_pem(std::string_view pem) {
    BioPtr bio = mem_bio(pem);
    KeyPtr key(PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr));
    if (!key) throw IdentityError(ErrorCode::BadCredentials, "cannot read private key: " + openssl_error());
    return key;
}

Certified certified_from(X509* cert) {
    const std::vector<std::uint8_t> der = der_of(cert);
    return Certified{identity_of(der), subject_of(cert), sha256(der)};
}

}  // namespace

struct TrustStore::Impl {
    std::vector<X509Ptr> certs;

    StorePtr build() const {
        StorePtr store(X509_STORE_new());
        for (const auto& c : certs) X509_STORE_add_cert(store.get(), c.get());
        return store;
    }
};

// ---------------------------------------------------------------------------
std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadSignature: return "BadSignature";
        case ErrorCode::UntrustedSigner: return "UntrustedSigner";
        case ErrorCode::MalformedEnvelope: return "MalformedEnvelope";
        case ErrorCode::BadCredentials: return "BadCredentials";
    }
    return "MalformedEnvelope";
}

IdentityError::IdentityError(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

std::string RequesterIdentity::ela_user() const {
    if (const Certified* c = certified()) return c->id;
    return std::string(kAnonymousUser);
}

TrustStore::TrustStore() : impl_(std::make_shared<Impl>()) {}
TrustStore::~TrustStore() = default;
TrustStore::TrustStore(const TrustStore&) = default;
TrustStore& TrustStore::operator=(const TrustStore&) = default;
TrustStore::TrustStore(TrustStore&&) noexcept = default;
TrustStore& TrustStore::operator=(TrustStore&&) noexcept = default;

TrustStore TrustStore::from_directory(const std::filesystem::path& dir) {
    TrustStore store;
    if (!std::filesystem::is_directory(dir)) {
        throw IdentityError(ErrorCode::BadCredentials, "trust directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".pem" || ext == ".crt" || ext == ".der")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (path.extension() == ".der") {
            store.add_der(as_bytes(bytes));
        } else if (bytes.find("-----BEGIN CERTIFICATE-----") != std::string::npos) {
            store.add_pem(bytes);
        }
    }
    return store;
}

void TrustStore::add_pem(std::string_view pem) {
    auto next = std::make_shared<Impl>();
    for (const auto& c : impl_->certs) {
        X509_up_ref(c.get());
        next->certs.emplace_back(c.get());
    }
    BioPtr bio = mem_bio(pem);
    std::size_t added = 0;
    while (X509* cert = PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr)) {
        next->certs.emplace_back(cert);
        ++added;
    }
    ERR_clear_error();
    if (added == 0) throw IdentityError(ErrorCode::BadCredentials, "no certificate in PEM input");
    impl_ = std::move(next);
}

void TrustStore::add_der(std::span<const std::uint8_t> der) {
    const unsigned char* p = der.data();
    X509Ptr cert(d2i_X509(nullptr, &p, static_cast<long>(der.size())));
    if (!cert) throw IdentityError(ErrorCode::BadCredentials, "cannot decode DER certificate");
    auto next = std::make_shared<Impl>();
    for (const auto& c : impl_->certs) {
        X509_up_ref(c.get());
        next->certs.emplace_back(c.get());
    }
    next->certs.push_back(std::move(cert));
    impl_ = std::move(next);
}

std::size_t TrustStore::size() const { return impl_->certs.size(); }

RequesterIdentity verify(const SignedRequest& req, const TrustStore& trust) {
    if (!req.pkcs7) return RequesterIdentity::anonymous();
    const std::vector<std::uint8_t> sig = base64_decode(*req.pkcs7);
    return verify_detached(as_bytes(req.sql), sig, trust);
}

RequesterIdentity verify_detached(std::span<const std::uint8_t> data,
                                  std::span<const std::uint8_t> signature_der,
                                  const TrustStore& trust) {
    ERR_clear_error();
    if (signature_der.empty()) throw IdentityError(ErrorCode::MalformedEnvelope, "empty signature");
    const unsigned char* p = signature_der.data();
    CmsPtr cms(d2i_CMS_ContentInfo(nullptr, &p, static_cast<long>(signature_der.size())));
    if (!cms || p != signature_der.data() + signature_der.size()) {
        ERR_clear_error();
        throw IdentityError(ErrorCode::MalformedEnvelope, "signature is not a DER CMS structure");
    }
    if (OBJ_obj2nid(CMS_get0_type(cms.get())) != NID_pkcs7_signed) {
        throw IdentityError(ErrorCode::MalformedEnvelope, "CMS structure is not SignedData");
    }
    STACK_OF(CMS_SignerInfo)* infos = CMS_get0_SignerInfos(cms.get());
    if (!infos || sk_CMS_SignerInfo_num(infos) != 1) {
        ERR_clear_error();
        throw IdentityError(ErrorCode::MalformedEnvelope, "expected exactly one signer");
    }
    CMS_SignerInfo* info = sk_CMS_SignerInfo_value(infos, 0);
    STACK_OF(X509)* extra = CMS_get1_certs(cms.get());
    CertStackPtr extra_owner(extra, &free_cert_stack);
    X509* signer = nullptr;
    for (int i = 0; extra && i < sk_X509_num(extra) && !signer; ++i) {
        if (CMS_SignerInfo_cert_cmp(info, sk_X509_value(extra, i)) == 0) signer = sk_X509_value(extra, i);
    }
    if (!signer) {
        ERR_clear_error();
        throw IdentityError(ErrorCode::MalformedEnvelope, "signer certificate is not embedded");
    }

    // Signature over the content first; a tampered SQL text is a bad
    // signature whoever the signer is.
    BioPtr content = mem_bio(data);
    const unsigned flags = CMS_DETACHED | CMS_BINARY | CMS_NO_SIGNER_CERT_VERIFY;
    if (CMS_verify(cms.get(), nullptr, nullptr, content.get(), nullptr, flags) != 1) {
        const std::string err = openssl_error();
        throw IdentityError(ErrorCode::BadSignature, "signature does not verify: " + err);
    }

    StorePtr store = trust.impl().build();
    StoreCtxPtr ctx(X509_STORE_CTX_new());
    X509_STORE_CTX_init(ctx.get(), store.get(), signer, extra);
    X509_STORE_CTX_set_purpose(ctx.get(), X509_PURPOSE_ANY);
    if (X509_verify_cert(ctx.get()) != 1) {
        const int err = X509_STORE_CTX_get_error(ctx.get());
        ERR_clear_error();
        throw IdentityError(ErrorCode::UntrustedSigner,
                            std::string("signer certificate rejected: ") + X509_verify_cert_error_string(err));
    }
    return RequesterIdentity(certified_from(signer));
}

std::string identity_of(std::span<const std::uint8_t> cert_der) {
    const auto digest = sha256(cert_der);
    return base64_encode(digest);
}

std::vector<std::uint8_t> certificate_der(std::string_view cert_pem) {
    X509Ptr cert = read_cert_pem(cert_pem);
    return der_of(cert.get());
}

std::vector<std::uint8_t> sign_detached(std::span<const std::uint8_t> data,
                                        std::string_view key_pem, std::string_view cert_pem) {
    ERR_clear_error();
    X509Ptr cert = read_cert_pem(cert_pem);
    KeyPtr key = read_key_pem(key_pem);
    if (X509_check_private_key(cert.get(), key.get()) != 1) {
        ERR_clear_error();
        throw IdentityError(ErrorCode::BadCredentials, "private key does not match certificate");
    }
    BioPtr content = mem_bio(data);
    const unsigned flags = CMS_DETACHED | CMS_BINARY | CMS_PARTIAL;
    CmsPtr cms(CMS_sign(nullptr, nullptr, nullptr, nullptr, flags));
    if (!cms || !CMS_add1_signer(cms.get(), cert.get(), key.get(), EVP_sha256(), 0) ||
        CMS_final(cms.get(), content.get(), nullptr, CMS_DETACHED | CMS_BINARY) != 1) {
        throw IdentityError(ErrorCode::BadCredentials, "signing failed: " + openssl_error());
    }
    unsigned char* buf = nullptr;
    const int len = i2d_CMS_ContentInfo(cms.get(), &buf);
    if (len <= 0) throw IdentityError(ErrorCode::BadCredentials, "cannot encode signature");
    std::vector<std::uint8_t> out(buf, buf + len);
    OPENSSL_free(buf);
    return out;
}

std::string sign_sql(std::string_view sql, std::string_view key_pem, std::string_view cert_pem) {
    return base64_encode(sign_detached(as_bytes(sql), key_pem, cert_pem));
}

DevCredentials generate_dev_credentials(std::string_view common_name) {
    KeyCtxPtr kctx(EVP_PKEY_CTX_new_id(EVP_PKEY_EC, nullptr));
    EVP_PKEY* raw_key = nullptr;
    if (!kctx || EVP_PKEY_keygen_init(kctx.get()) != 1 ||
        EVP_PKEY_CTX_set_ec_paramgen_curve_nid(kctx.get(), NID_X9_62_prime256v1) != 1 ||
        EVP_PKEY_keygen(kctx.get(), &raw_key) != 1) {
        throw IdentityError(ErrorCode::BadCredentials, "key generation failed: " + openssl_error());
    }
    KeyPtr key(raw_key);

    X509Ptr cert(X509_new());
    X509_set_version(cert.get(), 2);
    unsigned char serial[16];
    EVP_Digest(common_name.data(), common_name.size(), serial, nullptr, EVP_md5(), nullptr);
    serial[0] &= 0x7f;
    BIGNUM* bn = BN_bin2bn(serial, sizeof serial, nullptr);
    BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(cert.get()));
    BN_free(bn);
    X509_gmtime_adj(X509_getm_notBefore(cert.get()), 0);
    X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * 3650);
    X509_set_pubkey(cert.get(), key.get());
    X509_NAME* name = X509_get_subject_name(cert.get());
    const std::string cn(common_name);
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8, reinterpret_cast<const unsigned char*>(cn.c_str()), -1,
                               -1, 0);
    X509_NAME_add_entry_by_txt(name, "OU", MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>("secss-gate dev key, test only"), -1, -1, 0);
    X509_set_issuer_name(cert.get(), name);
    if (X509_sign(cert.get(), key.get(), EVP_sha256()) <= 0) {
        throw IdentityError(ErrorCode::BadCredentials, "certificate signing failed: " + openssl_error());
    }

    DevCredentials out;
    BioPtr kbio(BIO_new(BIO_s_mem()));
    PEM_write_bio_PrivateKey(kbio.get(), key.get(), nullptr, nullptr, 0, nullptr, nullptr);
    out.key_pem = bio_string(kbio.get());
    BioPtr cbio(BIO_new(BIO_s_mem()));
    PEM_write_bio_X509(cbio.get(), cert.get());
    out.cert_pem = bio_string(cbio.get());
    return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::string clean;
    clean.reserve(text.size());
    for (char c : text) {
        if (c == '\r' || c == '\n' || c == ' ' || c == '\t') continue;
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' ||
                        c == '/' || c == '=';
        if (!ok) throw IdentityError(ErrorCode::MalformedEnvelope, "Pkcs7 is not valid Base64");
    }
    for (char c : text) {
        if (c != '\r' && c != '\n' && c != ' ' && c != '\t') clean += c;
    }
    if (clean.empty() || clean.size() % 4 != 0) {
        throw IdentityError(ErrorCode::MalformedEnvelope, "Pkcs7 is not valid Base64");
    }
    const auto pad_at = clean.find('=');
    if (pad_at != std::string::npos && (clean.size() - pad_at > 2 ||
                                        clean.find_first_not_of('=', pad_at) != std::string::npos)) {
        throw IdentityError(ErrorCode::MalformedEnvelope, "Pkcs7 is not valid Base64");
    }
    std::vector<std::uint8_t> out(clean.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                  static_cast<int>(clean.size()));
    if (n < 0) throw IdentityError(ErrorCode::MalformedEnvelope, "Pkcs7 is not valid Base64");
    std::size_t size = static_cast<std::size_t>(n);
    if (clean.ends_with("==")) {
        size -= 2;
    } else if (clean.ends_with("=")) {
        size -= 1;
    }
    out.resize(size);
    return out;
}

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr);
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (std::uint8_t b : sha256(as_bytes(bytes))) {
        out += kHex[b >> 4];
        out += kHex[b & 0xf];
    }
    return out;
}

}  // namespace secss::identity
