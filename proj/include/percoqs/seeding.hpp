#pragma once

// Order-independent Bernoulli marks: every node verdict is a pure function
// of (master seed, word), computed from a SHA-256 digest.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "percoqs/lattice.hpp"

namespace percoqs {

using Digest = std::array<unsigned char, 32>;

namespace detail {

struct EvpMdDeleter {
  void operator()(EVP_MD* md) const { EVP_MD_free(md); }
};
struct EvpCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};

inline const EVP_MD* sha256_md() {
  static const std::unique_ptr<EVP_MD, EvpMdDeleter> md(EVP_MD_fetch(nullptr, "SHA256", nullptr));
  if (!md) throw std::runtime_error("OpenSSL: SHA256 unavailable");
  return md.get();
}

inline EVP_MD_CTX* thread_ctx() {
  thread_local const std::unique_ptr<EVP_MD_CTX, EvpCtxDeleter> ctx(EVP_MD_CTX_new());
  if (!ctx) throw std::runtime_error("OpenSSL: cannot allocate digest context");
  return ctx.get();
}

}  // namespace detail

inline Digest sha256(std::string_view msg) {
  EVP_MD_CTX* ctx = detail::thread_ctx();
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestInit_ex(ctx, detail::sha256_md(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, msg.data(), msg.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, out.data(), &len) != 1 || len != out.size())
    throw std::runtime_error("OpenSSL: SHA256 failed");
  return out;
}

inline std::uint64_t leading_u64(const Digest& d) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u = (u << 8) | d[static_cast<std::size_t>(i)];
  return u;
}

/// floor(p * 2^64), saturating at 2^64 - 1 for p >= 1.
inline std::uint64_t survival_threshold(double p) {
  if (!(p > 0.0)) return 0;
  if (p >= 1.0) return std::numeric_limits<std::uint64_t>::max();
  // p * 2^64 is exact in binary64 and strictly below 2^64 here.
  return static_cast<std::uint64_t>(std::ldexp(p, 64));
}

/// Message "<seed>:<labels joined by '.'>".
inline std::string verdict_message(std::uint64_t seed, std::span<const Label> w) {
  std::string m = std::to_string(seed);
  m.push_back(':');
  m += word_to_string(w);
  return m;
}

inline bool verdict(std::string_view message, std::uint64_t threshold) {
  return leading_u64(sha256(message)) < threshold;
}

struct SeedPolicy {
  std::uint64_t master_seed = 0;

  bool survives(double p, std::span<const Label> w) const {
    return verdict(verdict_message(master_seed, w), survival_threshold(p));
  }
};

inline bool node_survives(const SeedPolicy& policy, double p, std::span<const Label> w) {
  if (w.empty()) throw PreconditionError("node_survives needs a non-empty word");
  return policy.survives(p, w);
}

/// Child seed for independent trials: leading 64 bits of
/// SHA-256("<master>/<tag>/<index>").
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
  std::string m = std::to_string(master);
  m.push_back('/');
  m.append(tag);
  m.push_back('/');
  m += std::to_string(index);
  return leading_u64(sha256(m));
}

}  // namespace percoqs
