// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Leveled approximate homomorphic encryption over Z[X]/(X^N+1) with an RNS
// coefficient representation and per-prime NTT arithmetic.
//
// Vectors of reals are encoded through the canonical embedding: slot j of a
// plaintext corresponds to evaluation of the message polynomial at the
// primitive 2N-th root of unity raised to 5^j. Slotwise addition and
// multiplication of vectors therefore correspond to ring addition and
// multiplication of the underlying polynomials.
//
// Modulus chain layout: the last prime of the chain is reserved for key
// switching (relinearization) and never carried by ciphertexts; the
// remaining primes form the data chain. A ciphertext at level l holds
// residues for data primes 0..l. Each rescale divides the scale by the
// dropped prime and decrements the level.

#ifndef HESTIA_CKKS_HPP_
#define HESTIA_CKKS_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "hestia/common.hpp"
#include "hestia/ring.hpp"

namespace hestia::ckks {

using ring::u64;
using ring::u128;
using i128 = __int128;

struct HeParams {
  std::size_t ring_degree = 8192;
  std::vector<int> coeff_modulus_bits = {40, 26, 26, 26, 40};
  double scale = 67108864.0;  // 2^26
  double error_stddev = 3.2;
  // Hamming weight of the ternary secret and of the per-encryption
  // randomness (HEAAN convention); 0 selects dense uniform ternary.
  std::size_t secret_hamming_weight = 64;

  void validate() const {
    if (ring_degree < 16 || (ring_degree & (ring_degree - 1)) != 0)
      throw ConfigError("ring_degree must be a power of two >= 16");
    if (coeff_modulus_bits.size() < 2)
      throw ConfigError("modulus chain needs at least 2 primes");
    if (scale <= 1.0) throw ConfigError("scale must exceed 1");
    const int min_bits =
        *std::min_element(coeff_modulus_bits.begin(), coeff_modulus_bits.end());
    if (std::log2(scale) > static_cast<double>(min_bits))
      throw ConfigError("scale exceeds the capacity of the smallest prime");
    if (error_stddev <= 0.0) throw ConfigError("error_stddev must be positive");
    if (secret_hamming_weight >= ring_degree)
      throw ConfigError("secret hamming weight must be below ring degree");
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a_value(ring_degree);
    for (int b : coeff_modulus_bits) h = fnv1a_value(b, h);
    h = fnv1a_value(scale, h);
    h = fnv1a_value(secret_hamming_weight, h);
    return fnv1a_value(error_stddev, h);
  }
};

/// Approximate classical security from the homomorphicencryption.org tables,
/// reported informationally (this engine targets functional fidelity).
inline int security_level_bits(std::size_t n, int total_modulus_bits) {
  struct Row {
    std::size_t n;
    int logq128, logq192, logq256;
  };
  static constexpr Row kTable[] = {
      {1024, 27, 19, 14},   {2048, 54, 37, 29},   {4096, 109, 75, 58},
      {8192, 218, 152, 118}, {16384, 438, 305, 237}, {32768, 881, 611, 476}};
  for (const Row& r : kTable) {
    if (r.n == n) {
      if (total_modulus_bits <= r.logq256) return 256;
      if (total_modulus_bits <= r.logq192) return 192;
      if (total_modulus_bits <= r.logq128) return 128;
      return 0;
    }
  }
  return 0;
}

class Context {
 public:
  explicit Context(HeParams params) : params_(std::move(params)) {
    params_.validate();
    n_ = params_.ring_degree;
    primes_ = ring::find_ntt_primes(params_.coeff_modulus_bits, n_);
    num_data_ = primes_.size() - 1;  // last prime reserved for key switching
    ntt_.reserve(primes_.size());
    for (u64 q : primes_) ntt_.emplace_back(n_, q);

    // Canonical-embedding tables.
    const std::size_t m = 2 * n_;
    ksi_.resize(m + 1);
    for (std::size_t k = 0; k <= m; ++k) {
      const double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(m);
      ksi_[k] = {std::cos(angle), std::sin(angle)};
    }
    rot_group_.resize(n_ / 2);
    std::size_t five = 1;
    for (std::size_t j = 0; j < n_ / 2; ++j) {
      rot_group_[j] = five;
      five = (five * 5) % m;
    }

    // Key-switching and rescaling precomputations.
    const u64 p = special_prime();
    p_mod_q_.resize(num_data_);
    p_inv_mod_q_.resize(num_data_);
    for (std::size_t j = 0; j < num_data_; ++j) {
      p_mod_q_[j] = p % primes_[j];
      p_inv_mod_q_[j] = ring::inv_mod(p_mod_q_[j], primes_[j]);
    }
    q_inv_mod_q_.resize(num_data_);
    for (std::size_t l = 1; l < num_data_; ++l) {
      q_inv_mod_q_[l].resize(l);
      for (std::size_t j = 0; j < l; ++j)
        q_inv_mod_q_[l][j] =
            ring::inv_mod(primes_[l] % primes_[j], primes_[j]);
    }
  }

  const HeParams& params() const { return params_; }
  std::size_t degree() const { return n_; }
  std::size_t num_slots() const { return n_ / 2; }
  std::size_t num_primes() const { return primes_.size(); }
  std::size_t num_data_primes() const { return num_data_; }
  std::size_t top_level() const { return num_data_ - 1; }
  u64 prime(std::size_t i) const { return primes_[i]; }
  u64 special_prime() const { return primes_.back(); }
  const ring::NttTables& ntt(std::size_t i) const { return ntt_[i]; }
  u64 p_mod_q(std::size_t j) const { return p_mod_q_[j]; }
  u64 p_inv_mod_q(std::size_t j) const { return p_inv_mod_q_[j]; }
  u64 q_inv_mod_q(std::size_t dropped, std::size_t j) const {
    return q_inv_mod_q_[dropped][j];
  }
  const std::vector<std::size_t>& rot_group() const { return rot_group_; }
  std::complex<double> ksi(std::size_t k) const { return ksi_[k]; }

  int security_bits() const {
    int total = 0;
    for (int b : params_.coeff_modulus_bits) total += b;
    return security_level_bits(n_, total);
  }

 private:
  HeParams params_;
  std::size_t n_ = 0;
  std::size_t num_data_ = 0;
  std::vector<u64> primes_;
  std::vector<ring::NttTables> ntt_;
  std::vector<std::complex<double>> ksi_;
  std::vector<std::size_t> rot_group_;
  std::vector<u64> p_mod_q_, p_inv_mod_q_;
  std::vector<std::vector<u64>> q_inv_mod_q_;
};

struct SecretKey {
  ring::RnsPoly s;  // all primes, NTT form
};

struct PublicKey {
  ring::RnsPoly p0, p1;  // data primes, NTT form
};

struct EvalKey {
  // One key pair per data prime of the full chain; each polynomial carries
  // all primes (data + special).
  std::vector<ring::RnsPoly> k0, k1;
};

struct Plaintext {
  ring::RnsPoly poly;  // NTT form, data primes 0..level
  std::size_t level = 0;
  double scale = 1.0;
};

struct Ciphertext {
  std::vector<ring::RnsPoly> parts;  // 2 or 3, NTT form
  std::size_t level = 0;
  double scale = 1.0;

  std::size_t size() const { return parts.size(); }
};

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace detail {

inline void ntt_all(const Context& ctx, ring::RnsPoly& p) {
  for (std::size_t i = 0; i < p.num_limbs; ++i) ctx.ntt(i).forward(p.limb(i));
  p.ntt_form = true;
}

inline ring::RnsPoly from_signed_coeffs(const Context& ctx,
                                        const std::vector<std::int64_t>& c,
                                        std::size_t limbs, bool to_ntt) {
  ring::RnsPoly p(ctx.degree(), limbs, false);
  for (std::size_t i = 0; i < limbs; ++i) {
    const u64 q = ctx.prime(i);
    auto limb = p.limb(i);
    for (std::size_t k = 0; k < ctx.degree(); ++k) {
      const std::int64_t v = c[k];
      limb[k] = v >= 0 ? static_cast<u64>(v) % q
                       : q - (static_cast<u64>(-v) % q);
    }
  }
  if (to_ntt) ntt_all(ctx, p);
  return p;
}

inline ring::RnsPoly sample_ternary(const Context& ctx, std::size_t limbs,
                                    Rng& rng) {
  const std::size_t n = ctx.degree();
  const std::size_t weight = ctx.params().secret_hamming_weight;
  std::vector<std::int64_t> c(n, 0);
  if (weight == 0) {
    for (auto& v : c) v = static_cast<std::int64_t>(rng.next_below(3)) - 1;
  } else {
    std::size_t placed = 0;
    while (placed < weight) {
      const std::size_t pos = rng.next_below(n);
      if (c[pos] != 0) continue;
      c[pos] = rng.bernoulli(0.5) ? 1 : -1;
      ++placed;
    }
  }
  return from_signed_coeffs(ctx, c, limbs, true);
}

inline ring::RnsPoly sample_gaussian(const Context& ctx, std::size_t limbs,
                                     Rng& rng) {
  const double sigma = ctx.params().error_stddev;
  const double bound = std::ceil(6.0 * sigma);
  std::vector<std::int64_t> c(ctx.degree());
  for (auto& v : c) {
    double g = rng.normal(0.0, sigma);
    g = std::clamp(g, -bound, bound);
    v = static_cast<std::int64_t>(std::llround(g));
  }
  return from_signed_coeffs(ctx, c, limbs, true);
}

inline ring::RnsPoly sample_uniform(const Context& ctx, std::size_t limbs,
                                    Rng& rng) {
  // Independent uniform residues per limb define a uniform ring element via
  // CRT; NTT form is a bijection, so sampling directly in NTT form is valid.
  ring::RnsPoly p(ctx.degree(), limbs, true);
  for (std::size_t i = 0; i < limbs; ++i) {
    const u64 q = ctx.prime(i);
    auto limb = p.limb(i);
    for (std::size_t k = 0; k < ctx.degree(); ++k) limb[k] = rng.next_below(q);
  }
  return p;
}

inline void pointwise_mul_acc(std::span<const u64> a, std::span<const u64> b,
                              std::span<u64> acc, u64 q) {
  for (std::size_t i = 0; i < a.size(); ++i)
    acc[i] = ring::add_mod(acc[i], ring::mul_mod(a[i], b[i], q), q);
}

inline void pointwise_mul(std::span<const u64> a, std::span<const u64> b,
                          std::span<u64> out, u64 q) {
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = ring::mul_mod(a[i], b[i], q);
}

inline void pointwise_add(std::span<const u64> a, std::span<const u64> b,
                          std::span<u64> out, u64 q) {
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = ring::add_mod(a[i], b[i], q);
}

inline void pointwise_sub(std::span<const u64> a, std::span<const u64> b,
                          std::span<u64> out, u64 q) {
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = ring::sub_mod(a[i], b[i], q);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Key generation
// ---------------------------------------------------------------------------

struct KeySet {
  SecretKey secret;
  PublicKey pub;
  EvalKey eval;
};

inline KeySet keygen(const Context& ctx, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t all = ctx.num_primes();
  const std::size_t data = ctx.num_data_primes();
  const std::size_t n = ctx.degree();

  KeySet ks;
  ks.secret.s = detail::sample_ternary(ctx, all, rng);

  // Public key (data primes): p = (-a*s + e, a).
  ring::RnsPoly a = detail::sample_uniform(ctx, data, rng);
  ring::RnsPoly e = detail::sample_gaussian(ctx, data, rng);
  ks.pub.p0 = ring::RnsPoly(n, data, true);
  for (std::size_t i = 0; i < data; ++i) {
    const u64 q = ctx.prime(i);
    detail::pointwise_mul(a.limb(i), ks.secret.s.limb(i), ks.pub.p0.limb(i), q);
    detail::pointwise_sub(e.limb(i), ks.pub.p0.limb(i), ks.pub.p0.limb(i), q);
  }
  ks.pub.p1 = std::move(a);

  // Relinearization keys: for each data prime j of the full chain,
  // evk_j = (-a_j*s + e_j + (p mod q_j) * s^2 on limb j, a_j) over all primes.
  ring::RnsPoly s2(n, all, true);
  for (std::size_t i = 0; i < all; ++i)
    detail::pointwise_mul(ks.secret.s.limb(i), ks.secret.s.limb(i), s2.limb(i),
                          ctx.prime(i));
  ks.eval.k0.resize(data);
  ks.eval.k1.resize(data);
  for (std::size_t j = 0; j < data; ++j) {
    ring::RnsPoly aj = detail::sample_uniform(ctx, all, rng);
    ring::RnsPoly ej = detail::sample_gaussian(ctx, all, rng);
    ring::RnsPoly k0(n, all, true);
    for (std::size_t i = 0; i < all; ++i) {
      const u64 q = ctx.prime(i);
      detail::pointwise_mul(aj.limb(i), ks.secret.s.limb(i), k0.limb(i), q);
      detail::pointwise_sub(ej.limb(i), k0.limb(i), k0.limb(i), q);
    }
    const u64 qj = ctx.prime(j);
    const u64 factor = ctx.p_mod_q(j);
    auto limb = k0.limb(j);
    auto s2j = s2.limb(j);
    for (std::size_t k = 0; k < n; ++k)
      limb[k] = ring::add_mod(limb[k], ring::mul_mod(factor, s2j[k], qj), qj);
    ks.eval.k0[j] = std::move(k0);
    ks.eval.k1[j] = std::move(aj);
  }
  return ks;
}

// ---------------------------------------------------------------------------
// Encoding (canonical embedding)
// ---------------------------------------------------------------------------

namespace detail {

inline void array_bit_reverse(std::vector<std::complex<double>>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j >= bit; bit >>= 1) j -= bit;
    j += bit;
    if (i < j) std::swap(v[i], v[j]);
  }
}

// Forward special transform: half-coefficient pairs -> slot values.
inline void emb(const Context& ctx, std::vector<std::complex<double>>& vals) {
  const std::size_t size = vals.size();
  const std::size_t m = 2 * ctx.degree();
  array_bit_reverse(vals);
  for (std::size_t len = 2; len <= size; len <<= 1) {
    const std::size_t lenh = len >> 1;
    const std::size_t lenq = len << 2;
    const std::size_t gap = m / lenq;
    for (std::size_t i = 0; i < size; i += len) {
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (ctx.rot_group()[j] % lenq) * gap;
        auto u = vals[i + j];
        auto v = vals[i + j + lenh] * ctx.ksi(idx);
        vals[i + j] = u + v;
        vals[i + j + lenh] = u - v;
      }
    }
  }
}

// Inverse special transform: slot values -> half-coefficient pairs.
inline void emb_inv(const Context& ctx,
                    std::vector<std::complex<double>>& vals) {
  const std::size_t size = vals.size();
  const std::size_t m = 2 * ctx.degree();
  for (std::size_t len = size; len >= 2; len >>= 1) {
    const std::size_t lenh = len >> 1;
    const std::size_t lenq = len << 2;
    const std::size_t gap = m / lenq;
    for (std::size_t i = 0; i < size; i += len) {
      for (std::size_t j = 0; j < lenh; ++j) {
        const std::size_t idx = (lenq - (ctx.rot_group()[j] % lenq)) * gap;
        auto u = vals[i + j] + vals[i + j + lenh];
        auto v = (vals[i + j] - vals[i + j + lenh]) * ctx.ksi(idx);
        vals[i + j] = u;
        vals[i + j + lenh] = v;
      }
    }
  }
  array_bit_reverse(vals);
  const double inv = 1.0 / static_cast<double>(size);
  for (auto& v : vals) v *= inv;
}

// Garner reconstruction of a centered coefficient from its RNS residues.
inline i128 crt_reconstruct(const std::vector<u64>& residues,
                            const std::vector<u64>& primes) {
  const std::size_t k = residues.size();
  std::vector<u64> digits(k);
  for (std::size_t i = 0; i < k; ++i) {
    const u64 qi = primes[i];
    u64 t = residues[i] % qi;
    u64 prefix = 1 % qi;
    for (std::size_t j = 0; j < i; ++j) {
      t = ring::sub_mod(t, ring::mul_mod(digits[j] % qi, prefix, qi), qi);
      prefix = ring::mul_mod(prefix, primes[j] % qi, qi);
    }
    digits[i] = ring::mul_mod(t, ring::inv_mod(prefix, qi), qi);
  }
  i128 value = 0;
  i128 base = 1;
  i128 modulus = 1;
  for (std::size_t i = 0; i < k; ++i) {
    value += base * static_cast<i128>(digits[i]);
    base *= static_cast<i128>(primes[i]);
    modulus *= static_cast<i128>(primes[i]);
  }
  if (value > modulus / 2) value -= modulus;
  return value;
}

}  // namespace detail

/// Encode a real vector (length <= N/2) at the given level and scale.
inline Plaintext encode(const Context& ctx, std::span<const double> values,
                        std::size_t level, double scale) {
  const std::size_t slots = ctx.num_slots();
  if (values.size() > slots) throw ArgError("too many values for slot count");
  if (level > ctx.top_level()) throw ArgError("level beyond modulus chain");
  double max_abs = 0.0;
  for (double v : values) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs * scale > 0x1p60)
    throw ArgError("encoded magnitude exceeds coefficient capacity");

  std::vector<std::complex<double>> u(slots, {0.0, 0.0});
  for (std::size_t i = 0; i < values.size(); ++i) u[i] = {values[i], 0.0};
  detail::emb_inv(ctx, u);

  std::vector<std::int64_t> coeffs(ctx.degree());
  for (std::size_t i = 0; i < slots; ++i) {
    coeffs[i] = static_cast<std::int64_t>(std::llround(u[i].real() * scale));
    coeffs[i + slots] =
        static_cast<std::int64_t>(std::llround(u[i].imag() * scale));
  }
  Plaintext pt;
  pt.level = level;
  pt.scale = scale;
  pt.poly = detail::from_signed_coeffs(ctx, coeffs, level + 1, true);
  return pt;
}

/// Encode a constant broadcast across all slots. The interpolating
/// polynomial of a constant slot vector is the constant itself, so no
/// transform is needed.
inline Plaintext encode_constant(const Context& ctx, double value,
                                 std::size_t level, double scale) {
  if (level > ctx.top_level()) throw ArgError("level beyond modulus chain");
  if (std::abs(value) * scale > 0x1p60)
    throw ArgError("encoded magnitude exceeds coefficient capacity");
  std::vector<std::int64_t> coeffs(ctx.degree(), 0);
  coeffs[0] = static_cast<std::int64_t>(std::llround(value * scale));
  Plaintext pt;
  pt.level = level;
  pt.scale = scale;
  pt.poly = detail::from_signed_coeffs(ctx, coeffs, level + 1, true);
  return pt;
}

/// Decode to N/2 real slot values.
inline std::vector<double> decode(const Context& ctx, const Plaintext& pt) {
  const std::size_t slots = ctx.num_slots();
  ring::RnsPoly poly = pt.poly;
  for (std::size_t i = 0; i < poly.num_limbs; ++i)
    ctx.ntt(i).inverse(poly.limb(i));

  std::vector<u64> primes(poly.num_limbs);
  for (std::size_t i = 0; i < poly.num_limbs; ++i) primes[i] = ctx.prime(i);

  std::vector<std::complex<double>> vals(slots);
  std::vector<u64> residues(poly.num_limbs);
  for (std::size_t k = 0; k < slots; ++k) {
    for (std::size_t i = 0; i < poly.num_limbs; ++i) residues[i] = poly.limb(i)[k];
    const i128 re = detail::crt_reconstruct(residues, primes);
    for (std::size_t i = 0; i < poly.num_limbs; ++i)
      residues[i] = poly.limb(i)[k + slots];
    const i128 im = detail::crt_reconstruct(residues, primes);
    vals[k] = {static_cast<double>(static_cast<long double>(re) / pt.scale),
               static_cast<double>(static_cast<long double>(im) / pt.scale)};
  }
  detail::emb(ctx, vals);
  std::vector<double> out(slots);
  for (std::size_t k = 0; k < slots; ++k) out[k] = vals[k].real();
  return out;
}

// ---------------------------------------------------------------------------
// Encryption / decryption
// ---------------------------------------------------------------------------

inline Ciphertext encrypt(const Context& ctx, const PublicKey& pk,
                          const Plaintext& pt, Rng& rng) {
  const std::size_t limbs = pt.level + 1;
  const std::size_t n = ctx.degree();
  ring::RnsPoly v = detail::sample_ternary(ctx, limbs, rng);
  ring::RnsPoly e0 = detail::sample_gaussian(ctx, limbs, rng);
  ring::RnsPoly e1 = detail::sample_gaussian(ctx, limbs, rng);

  Ciphertext ct;
  ct.level = pt.level;
  ct.scale = pt.scale;
  ct.parts.assign(2, ring::RnsPoly(n, limbs, true));
  for (std::size_t i = 0; i < limbs; ++i) {
    const u64 q = ctx.prime(i);
    detail::pointwise_mul(v.limb(i), pk.p0.limb(i), ct.parts[0].limb(i), q);
    detail::pointwise_add(ct.parts[0].limb(i), e0.limb(i), ct.parts[0].limb(i), q);
    detail::pointwise_add(ct.parts[0].limb(i), pt.poly.limb(i), ct.parts[0].limb(i), q);
    detail::pointwise_mul(v.limb(i), pk.p1.limb(i), ct.parts[1].limb(i), q);
    detail::pointwise_add(ct.parts[1].limb(i), e1.limb(i), ct.parts[1].limb(i), q);
  }
  return ct;
}

/// Decryption: sum_k parts[k] * s^k.
inline Plaintext decrypt(const Context& ctx, const SecretKey& sk,
                         const Ciphertext& ct) {
  const std::size_t limbs = ct.level + 1;
  Plaintext pt;
  pt.level = ct.level;
  pt.scale = ct.scale;
  pt.poly = ct.parts[0];
  for (std::size_t i = 0; i < limbs; ++i) {
    const u64 q = ctx.prime(i);
    std::vector<u64> spow(sk.s.limb(i).begin(), sk.s.limb(i).end());
    for (std::size_t k = 1; k < ct.parts.size(); ++k) {
      if (k > 1)
        detail::pointwise_mul(std::span<const u64>(spow), sk.s.limb(i),
                              std::span<u64>(spow), q);
      detail::pointwise_mul_acc(ct.parts[k].limb(i),
                                std::span<const u64>(spow), pt.poly.limb(i), q);
    }
  }
  return pt;
}

// ---------------------------------------------------------------------------
// Homomorphic operations
// ---------------------------------------------------------------------------

namespace detail {

inline void require_compatible(const Ciphertext& a, const Ciphertext& b) {
  if (a.level != b.level) throw ArgError("ciphertext level mismatch");
  if (a.scale != b.scale) throw ArgError("ciphertext scale mismatch");
}

}  // namespace detail

inline Ciphertext he_add(const Context& ctx, const Ciphertext& a,
                         const Ciphertext& b) {
  detail::require_compatible(a, b);
  const std::size_t limbs = a.level + 1;
  Ciphertext out;
  out.level = a.level;
  out.scale = a.scale;
  const std::size_t parts = std::max(a.size(), b.size());
  out.parts.assign(parts, ring::RnsPoly(ctx.degree(), limbs, true));
  for (std::size_t k = 0; k < parts; ++k) {
    for (std::size_t i = 0; i < limbs; ++i) {
      const u64 q = ctx.prime(i);
      if (k < a.size() && k < b.size()) {
        detail::pointwise_add(a.parts[k].limb(i), b.parts[k].limb(i),
                              out.parts[k].limb(i), q);
      } else {
        const auto& src = k < a.size() ? a.parts[k] : b.parts[k];
        std::copy(src.limb(i).begin(), src.limb(i).end(),
                  out.parts[k].limb(i).begin());
      }
    }
  }
  return out;
}

/// Tensor product without relinearization: 2x2 parts -> 3 parts.
inline Ciphertext tensor_mult(const Context& ctx, const Ciphertext& a,
                              const Ciphertext& b) {
  if (a.level != b.level) throw ArgError("ciphertext level mismatch");
  if (a.size() != 2 || b.size() != 2)
    throw ArgError("tensor_mult expects 2-part operands");
  if (a.level < 1)
    throw StateError("level exhausted: no prime left to rescale after mult");
  const std::size_t limbs = a.level + 1;
  Ciphertext out;
  out.level = a.level;
  out.scale = a.scale * b.scale;
  out.parts.assign(3, ring::RnsPoly(ctx.degree(), limbs, true));
  for (std::size_t i = 0; i < limbs; ++i) {
    const u64 q = ctx.prime(i);
    detail::pointwise_mul(a.parts[0].limb(i), b.parts[0].limb(i),
                          out.parts[0].limb(i), q);
    detail::pointwise_mul(a.parts[0].limb(i), b.parts[1].limb(i),
                          out.parts[1].limb(i), q);
    detail::pointwise_mul_acc(a.parts[1].limb(i), b.parts[0].limb(i),
                              out.parts[1].limb(i), q);
    detail::pointwise_mul(a.parts[1].limb(i), b.parts[1].limb(i),
                          out.parts[2].limb(i), q);
  }
  return out;
}

/// Key switching of the quadratic part back to a 2-part ciphertext.
inline Ciphertext relinearize(const Context& ctx, const Ciphertext& ct,
                              const EvalKey& ek) {
  if (ct.size() != 3) throw ArgError("relinearize expects a 3-part ciphertext");
  const std::size_t n = ctx.degree();
  const std::size_t level = ct.level;
  const std::size_t data_limbs = level + 1;
  const std::size_t sp = ctx.num_data_primes();  // evk limb index of special prime
  const u64 p = ctx.special_prime();

  // c2 to coefficient form.
  ring::RnsPoly c2 = ct.parts[2];
  for (std::size_t i = 0; i < data_limbs; ++i) ctx.ntt(i).inverse(c2.limb(i));

  // Accumulators over data primes + special prime (NTT form).
  ring::RnsPoly acc0(n, data_limbs + 1, true), acc1(n, data_limbs + 1, true);
  std::vector<u64> dj(n), reduced(n);
  for (std::size_t j = 0; j < data_limbs; ++j) {
    std::copy(c2.limb(j).begin(), c2.limb(j).end(), dj.begin());
    for (std::size_t t = 0; t <= data_limbs; ++t) {
      const std::size_t prime_idx = t < data_limbs ? t : ctx.num_primes() - 1;
      const std::size_t ek_limb = t < data_limbs ? t : sp;
      const u64 q = ctx.prime(prime_idx);
      for (std::size_t k = 0; k < n; ++k) reduced[k] = dj[k] % q;
      ctx.ntt(prime_idx).forward(reduced);
      detail::pointwise_mul_acc(std::span<const u64>(reduced),
                                ek.k0[j].limb(ek_limb), acc0.limb(t), q);
      detail::pointwise_mul_acc(std::span<const u64>(reduced),
                                ek.k1[j].limb(ek_limb), acc1.limb(t), q);
    }
  }

  // Divide by the special prime (coefficient domain, centered).
  Ciphertext out;
  out.level = level;
  out.scale = ct.scale;
  out.parts.assign(2, ring::RnsPoly(n, data_limbs, true));
  ring::RnsPoly* accs[2] = {&acc0, &acc1};
  for (int part = 0; part < 2; ++part) {
    ring::RnsPoly& acc = *accs[part];
    for (std::size_t t = 0; t <= data_limbs; ++t) {
      const std::size_t prime_idx = t < data_limbs ? t : ctx.num_primes() - 1;
      ctx.ntt(prime_idx).inverse(acc.limb(t));
    }
    auto special = acc.limb(data_limbs);
    for (std::size_t t = 0; t < data_limbs; ++t) {
      const u64 q = ctx.prime(t);
      const u64 pinv = ctx.p_inv_mod_q(t);
      auto src = acc.limb(t);
      auto dst = out.parts[part].limb(t);
      for (std::size_t k = 0; k < n; ++k) {
        const u64 r = special[k];
        // centered representative of r mod p, reduced mod q
        const u64 r_mod_q = r > p / 2 ? ring::sub_mod(r % q, p % q, q) : r % q;
        dst[k] = ring::mul_mod(ring::sub_mod(src[k], r_mod_q, q), pinv, q);
      }
      ctx.ntt(t).forward(dst);
      detail::pointwise_add(ct.parts[part].limb(t), dst, dst, q);
    }
  }
  return out;
}

/// Ciphertext-ciphertext multiply: tensor product + relinearization.
/// The result carries scale a.scale * b.scale; callers rescale afterwards.
inline Ciphertext he_mult(const Context& ctx, const Ciphertext& a,
                          const Ciphertext& b, const EvalKey& ek) {
  return relinearize(ctx, tensor_mult(ctx, a, b), ek);
}

/// Plaintext-ciphertext multiply (no relinearization needed).
inline Ciphertext mult_plain(const Context& ctx, const Ciphertext& ct,
                             const Plaintext& pt) {
  if (ct.level != pt.level) throw ArgError("level mismatch");
  if (ct.level < 1)
    throw StateError("level exhausted: no prime left to rescale after mult");
  const std::size_t limbs = ct.level + 1;
  Ciphertext out;
  out.level = ct.level;
  out.scale = ct.scale * pt.scale;
  out.parts.assign(ct.size(), ring::RnsPoly(ctx.degree(), limbs, true));
  for (std::size_t k = 0; k < ct.size(); ++k)
    for (std::size_t i = 0; i < limbs; ++i)
      detail::pointwise_mul(ct.parts[k].limb(i), pt.poly.limb(i),
                            out.parts[k].limb(i), ctx.prime(i));
  return out;
}

/// Drop the last active prime and divide the scale by it.
inline Ciphertext rescale(const Context& ctx, const Ciphertext& ct) {
  if (ct.level == 0) throw StateError("level exhausted: cannot rescale");
  const std::size_t n = ctx.degree();
  const std::size_t l = ct.level;
  const u64 ql = ctx.prime(l);

  Ciphertext out;
  out.level = l - 1;
  out.scale = ct.scale / static_cast<double>(ql);
  out.parts.assign(ct.size(), ring::RnsPoly(n, l, true));
  for (std::size_t part = 0; part < ct.size(); ++part) {
    ring::RnsPoly coeff = ct.parts[part];
    for (std::size_t i = 0; i <= l; ++i) ctx.ntt(i).inverse(coeff.limb(i));
    auto last = coeff.limb(l);
    for (std::size_t i = 0; i < l; ++i) {
      const u64 q = ctx.prime(i);
      const u64 qinv = ctx.q_inv_mod_q(l, i);
      auto src = coeff.limb(i);
      auto dst = out.parts[part].limb(i);
      for (std::size_t k = 0; k < n; ++k) {
        const u64 r = last[k];
        const u64 r_mod_q = r > ql / 2 ? ring::sub_mod(r % q, ql % q, q) : r % q;
        dst[k] = ring::mul_mod(ring::sub_mod(src[k], r_mod_q, q), qinv, q);
      }
      ctx.ntt(i).forward(dst);
    }
  }
  return out;
}

/// Reduce to a lower level without changing the scale (limb dropping).
inline Ciphertext mod_switch_to_level(const Context& ctx, const Ciphertext& ct,
                                      std::size_t target_level) {
  (void)ctx;
  if (target_level > ct.level)
    throw ArgError("mod_switch target above current level");
  Ciphertext out = ct;
  out.level = target_level;
  for (auto& part : out.parts) part.drop_limbs(target_level + 1);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization and size accounting
// ---------------------------------------------------------------------------

namespace io {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p,
                      std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(out, &v, sizeof(T));  // little-endian host
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;

  template <typename T>
  T get() {
    if (p + sizeof(T) > end) throw ArgError("truncated serialized object");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
  }

  void get_bytes(void* dst, std::size_t n) {
    if (p + n > end) throw ArgError("truncated serialized object");
    std::memcpy(dst, p, n);
    p += n;
  }
};

constexpr std::uint32_t kCiphertextMagic = 0x43545348;  // "HSTC"
constexpr std::uint32_t kSecretKeyMagic = 0x4b535348;   // "HSSK"
constexpr std::uint32_t kPublicKeyMagic = 0x4b505348;   // "HSPK"
constexpr std::uint32_t kEvalKeyMagic = 0x4b455348;     // "HSEK"
constexpr std::uint16_t kVersion = 1;

inline void put_poly(std::vector<std::uint8_t>& out, const ring::RnsPoly& p) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.num_limbs));
  put<std::uint8_t>(out, p.ntt_form ? 1 : 0);
  put_bytes(out, p.data.data(), p.data.size() * sizeof(u64));
}

inline ring::RnsPoly get_poly(Reader& r, std::size_t degree) {
  const auto limbs = r.get<std::uint32_t>();
  const auto ntt = r.get<std::uint8_t>();
  ring::RnsPoly p(degree, limbs, ntt != 0);
  r.get_bytes(p.data.data(), p.data.size() * sizeof(u64));
  return p;
}

}  // namespace io

/// Wire format: magic, version, params hash, level, part count, scale,
/// ring degree, then per part the RNS limbs (little-endian u64 per
/// coefficient, one limb per active prime).
inline std::vector<std::uint8_t> serialize(const Context& ctx,
                                           const Ciphertext& ct) {
  std::vector<std::uint8_t> out;
  io::put<std::uint32_t>(out, io::kCiphertextMagic);
  io::put<std::uint16_t>(out, io::kVersion);
  io::put<std::uint64_t>(out, ctx.params().hash());
  io::put<std::uint8_t>(out, static_cast<std::uint8_t>(ct.level));
  io::put<std::uint8_t>(out, static_cast<std::uint8_t>(ct.size()));
  io::put<double>(out, ct.scale);
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ctx.degree()));
  for (const auto& part : ct.parts) io::put_poly(out, part);
  return out;
}

inline Ciphertext deserialize_ciphertext(const Context& ctx,
                                         std::span<const std::uint8_t> bytes) {
  io::Reader r{bytes.data(), bytes.data() + bytes.size()};
  if (r.get<std::uint32_t>() != io::kCiphertextMagic)
    throw ArgError("not a ciphertext blob");
  if (r.get<std::uint16_t>() != io::kVersion)
    throw ArgError("unsupported ciphertext version");
  if (r.get<std::uint64_t>() != ctx.params().hash())
    throw ArgError("ciphertext was produced under different parameters");
  Ciphertext ct;
  ct.level = r.get<std::uint8_t>();
  const std::size_t parts = r.get<std::uint8_t>();
  ct.scale = r.get<double>();
  const std::size_t degree = r.get<std::uint32_t>();
  if (degree != ctx.degree()) throw ArgError("ring degree mismatch");
  for (std::size_t i = 0; i < parts; ++i)
    ct.parts.push_back(io::get_poly(r, degree));
  return ct;
}

/// Exact serialized size: header + parts * active_primes * N * 8.
inline std::size_t ciphertext_size_bytes(const Context& ctx,
                                         const Ciphertext& ct) {
  const std::size_t header = 4 + 2 + 8 + 1 + 1 + 8 + 4;
  const std::size_t per_part = 4 + 1 + (ct.level + 1) * ctx.degree() * 8;
  return header + ct.size() * per_part;
}

inline std::vector<std::uint8_t> serialize(const Context& ctx,
                                           const SecretKey& sk) {
  std::vector<std::uint8_t> out;
  io::put<std::uint32_t>(out, io::kSecretKeyMagic);
  io::put<std::uint16_t>(out, io::kVersion);
  io::put<std::uint64_t>(out, ctx.params().hash());
  io::put_poly(out, sk.s);
  return out;
}

inline std::vector<std::uint8_t> serialize(const Context& ctx,
                                           const PublicKey& pk) {
  std::vector<std::uint8_t> out;
  io::put<std::uint32_t>(out, io::kPublicKeyMagic);
  io::put<std::uint16_t>(out, io::kVersion);
  io::put<std::uint64_t>(out, ctx.params().hash());
  io::put_poly(out, pk.p0);
  io::put_poly(out, pk.p1);
  return out;
}

inline std::vector<std::uint8_t> serialize(const Context& ctx,
                                           const EvalKey& ek) {
  std::vector<std::uint8_t> out;
  io::put<std::uint32_t>(out, io::kEvalKeyMagic);
  io::put<std::uint16_t>(out, io::kVersion);
  io::put<std::uint64_t>(out, ctx.params().hash());
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ek.k0.size()));
  for (std::size_t j = 0; j < ek.k0.size(); ++j) {
    io::put_poly(out, ek.k0[j]);
    io::put_poly(out, ek.k1[j]);
  }
  return out;
}

inline SecretKey deserialize_secret_key(const Context& ctx,
                                        std::span<const std::uint8_t> bytes) {
  io::Reader r{bytes.data(), bytes.data() + bytes.size()};
  if (r.get<std::uint32_t>() != io::kSecretKeyMagic)
    throw ArgError("not a secret key blob");
  if (r.get<std::uint16_t>() != io::kVersion) throw ArgError("bad version");
  if (r.get<std::uint64_t>() != ctx.params().hash())
    throw ArgError("params mismatch");
  return SecretKey{io::get_poly(r, ctx.degree())};
}

inline PublicKey deserialize_public_key(const Context& ctx,
                                        std::span<const std::uint8_t> bytes) {
  io::Reader r{bytes.data(), bytes.data() + bytes.size()};
  if (r.get<std::uint32_t>() != io::kPublicKeyMagic)
    throw ArgError("not a public key blob");
  if (r.get<std::uint16_t>() != io::kVersion) throw ArgError("bad version");
  if (r.get<std::uint64_t>() != ctx.params().hash())
    throw ArgError("params mismatch");
  PublicKey pk;
  pk.p0 = io::get_poly(r, ctx.degree());
  pk.p1 = io::get_poly(r, ctx.degree());
  return pk;
}

inline EvalKey deserialize_eval_key(const Context& ctx,
                                    std::span<const std::uint8_t> bytes) {
  io::Reader r{bytes.data(), bytes.data() + bytes.size()};
  if (r.get<std::uint32_t>() != io::kEvalKeyMagic)
    throw ArgError("not an eval key blob");
  if (r.get<std::uint16_t>() != io::kVersion) throw ArgError("bad version");
  if (r.get<std::uint64_t>() != ctx.params().hash())
    throw ArgError("params mismatch");
  const std::size_t count = r.get<std::uint32_t>();
  EvalKey ek;
  ek.k0.resize(count);
  ek.k1.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    ek.k0[j] = io::get_poly(r, ctx.degree());
    ek.k1[j] = io::get_poly(r, ctx.degree());
  }
  return ek;
}

}  // namespace hestia::ckks

#endif  // HESTIA_CKKS_HPP_
