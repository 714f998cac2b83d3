#pragma once

#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etree/error.hpp"

namespace etree::crypto {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;
using Key128 = std::array<std::uint8_t, 16>;
using Nonce = std::array<std::uint8_t, 12>;
using Tag = std::array<std::uint8_t, 16>;
using PublicKey = std::array<std::uint8_t, 32>;

inline Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
    throw IntegrityError("sha256 failed");
  return out;
}

inline Digest sha256(std::string_view s) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline void random_bytes(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw IntegrityError("RAND_bytes failed");
}

inline std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  for (auto b : data) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2) throw DataError("hex string has odd length");
  Bytes out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw DataError("invalid hex digit");
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

namespace detail {
struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
struct PkeyFree {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct PkeyCtxFree {
  void operator()(EVP_PKEY_CTX* c) const { EVP_PKEY_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;
using Pkey = std::unique_ptr<EVP_PKEY, PkeyFree>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree>;

inline void check(int rc, const char* what) {
  if (rc != 1) throw IntegrityError(std::string("openssl: ") + what + " failed");
}
}  // namespace detail

/// AES-128-GCM encryption; returns the ciphertext and writes the tag.
inline Bytes aes_gcm_seal(const Key128& key, const Nonce& nonce, std::span<const std::uint8_t> ad,
                          std::span<const std::uint8_t> plaintext, Tag& tag) {
  detail::CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw IntegrityError("openssl: cipher context allocation failed");
  detail::check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), nonce.data()), "encrypt init");
  int len = 0;
  if (!ad.empty()) detail::check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())), "aad");
  Bytes out(plaintext.size());
  if (!plaintext.empty())
    detail::check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())),
                  "encrypt");
  detail::check(EVP_EncryptFinal_ex(ctx.get(), out.data() + plaintext.size(), &len), "encrypt final");
  detail::check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(tag.size()), tag.data()), "get tag");
  return out;
}

/// AES-128-GCM decryption; throws IntegrityError when the tag does not verify.
inline Bytes aes_gcm_open(const Key128& key, const Nonce& nonce, std::span<const std::uint8_t> ad,
                          std::span<const std::uint8_t> ciphertext, const Tag& tag) {
  detail::CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw IntegrityError("openssl: cipher context allocation failed");
  detail::check(EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), nonce.data()), "decrypt init");
  int len = 0;
  if (!ad.empty()) detail::check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())), "aad");
  Bytes out(ciphertext.size());
  if (!ciphertext.empty())
    detail::check(
        EVP_DecryptUpdate(ctx.get(), out.data(), &len, ciphertext.data(), static_cast<int>(ciphertext.size())),
        "decrypt");
  Tag t = tag;
  detail::check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(t.size()), t.data()), "set tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + ciphertext.size(), &len) != 1)
    throw IntegrityError("authentication tag mismatch");
  return out;
}

/// Ephemeral X25519 key pair.
class KeyPair {
 public:
  KeyPair() {
    detail::PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_X25519, nullptr));
    EVP_PKEY* raw = nullptr;
    if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 || EVP_PKEY_keygen(ctx.get(), &raw) != 1)
      throw IntegrityError("openssl: X25519 keygen failed");
    key_.reset(raw);
    std::size_t len = public_.size();
    detail::check(EVP_PKEY_get_raw_public_key(key_.get(), public_.data(), &len), "export public key");
  }

  const PublicKey& public_key() const { return public_; }

  /// Raw X25519 shared secret with `peer`.
  Bytes agree(const PublicKey& peer) const {
    detail::Pkey peer_key(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer.data(), peer.size()));
    if (!peer_key) throw IntegrityError("invalid peer public key");
    detail::PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
    if (!ctx) throw IntegrityError("openssl: derive context allocation failed");
    detail::check(EVP_PKEY_derive_init(ctx.get()), "derive init");
    detail::check(EVP_PKEY_derive_set_peer(ctx.get(), peer_key.get()), "derive peer");
    std::size_t len = 0;
    detail::check(EVP_PKEY_derive(ctx.get(), nullptr, &len), "derive length");
    Bytes secret(len);
    detail::check(EVP_PKEY_derive(ctx.get(), secret.data(), &len), "derive");
    secret.resize(len);
    return secret;
  }

 private:
  detail::Pkey key_;
  PublicKey public_{};
};

/// HKDF-SHA256 expanding `ikm` into `length` bytes.
inline Bytes hkdf_sha256(std::span<const std::uint8_t> ikm, std::span<const std::uint8_t> salt,
                         std::span<const std::uint8_t> info, std::size_t length) {
  detail::PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  if (!ctx) throw IntegrityError("openssl: hkdf context allocation failed");
  detail::check(EVP_PKEY_derive_init(ctx.get()), "hkdf init");
  detail::check(EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()), "hkdf md");
  detail::check(EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.data(), static_cast<int>(salt.size())), "hkdf salt");
  detail::check(EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), ikm.data(), static_cast<int>(ikm.size())), "hkdf key");
  detail::check(EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.data(), static_cast<int>(info.size())), "hkdf info");
  Bytes out(length);
  std::size_t len = length;
  detail::check(EVP_PKEY_derive(ctx.get(), out.data(), &len), "hkdf derive");
  return out;
}

}  // namespace etree::crypto
