// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Arithmetic in R_q = Z_q[X]/(X^N + 1) for NTT-friendly 64-bit primes q,
// plus the RNS (residue number system) polynomial type used by the
// encryption layer. Polynomials in NTT form multiply pointwise.

#ifndef HESTIA_RING_HPP_
#define HESTIA_RING_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "hestia/common.hpp"

namespace hestia::ring {

using u64 = std::uint64_t;
using u128 = unsigned __int128;

inline u64 add_mod(u64 a, u64 b, u64 q) {
  u64 s = a + b;  // q < 2^63, no overflow
  return s >= q ? s - q : s;
}

inline u64 sub_mod(u64 a, u64 b, u64 q) { return a >= b ? a - b : a + q - b; }

inline u64 mul_mod(u64 a, u64 b, u64 q) {
  return static_cast<u64>((static_cast<u128>(a) * b) % q);
}

inline u64 pow_mod(u64 base, u64 exp, u64 q) {
  u64 r = 1;
  base %= q;
  while (exp > 0) {
    if (exp & 1) r = mul_mod(r, base, q);
    base = mul_mod(base, base, q);
    exp >>= 1;
  }
  return r;
}

inline u64 inv_mod(u64 a, u64 q) { return pow_mod(a, q - 2, q); }  // q prime

/// Miller-Rabin with a base set that is deterministic for all 64-bit inputs.
inline bool is_prime(u64 n) {
  if (n < 2) return false;
  for (u64 p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL,
                29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL,
                29ULL, 31ULL, 37ULL}) {
    u64 x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (int i = 0; i < r - 1; ++i) {
      x = mul_mod(x, x, n);
      if (x == n - 1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

/// Largest primes below 2^bits with q = 1 (mod 2N), one per requested bit
/// size, all distinct. Deterministic.
inline std::vector<u64> find_ntt_primes(const std::vector<int>& bit_sizes,
                                        std::size_t ring_degree) {
  const u64 two_n = 2 * static_cast<u64>(ring_degree);
  std::vector<u64> primes;
  for (int bits : bit_sizes) {
    if (bits < 20 || bits > 60)
      throw ConfigError("prime bit size out of supported range [20,60]");
    // Largest value below 2^bits congruent to 1 mod 2N.
    u64 cand = (u64{1} << bits) - (((u64{1} << bits) - 1) % two_n);
    const u64 floor = u64{1} << (bits - 1);
    while (true) {
      bool taken = false;
      for (u64 p : primes) taken = taken || (p == cand);
      if (!taken && is_prime(cand)) break;
      if (cand < floor + two_n)
        throw ConfigError("no NTT prime found for bit size");
      cand -= two_n;
    }
    primes.push_back(cand);
  }
  return primes;
}

/// A primitive 2N-th root of unity mod q (q = 1 mod 2N, N a power of two).
inline u64 find_primitive_root(u64 q, std::size_t n) {
  const u64 order = 2 * static_cast<u64>(n);
  for (u64 c = 2;; ++c) {
    u64 psi = pow_mod(c, (q - 1) / order, q);
    // N a power of two, so psi^N = -1 certifies the order is exactly 2N.
    if (pow_mod(psi, n, q) == q - 1) return psi;
  }
}

/// Precomputed twiddle factors for one prime. The mul_root helper uses Shoup
/// precomputation: for a fixed root w, w_shoup = floor(w * 2^64 / q) turns
/// the reduction into one high-product and one subtraction.
class NttTables {
 public:
  NttTables() = default;

  NttTables(std::size_t n, u64 q) : n_(n), q_(q) {
    int logn = 0;
    while ((std::size_t{1} << logn) < n) ++logn;
    const u64 psi = find_primitive_root(q, n);
    const u64 psi_inv = inv_mod(psi, q);
    root_.resize(n);
    root_shoup_.resize(n);
    iroot_.resize(n);
    iroot_shoup_.resize(n);
    // Roots in bit-reversed order, as consumed by the butterfly loops.
    u64 w = 1, wi = 1;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = reverse_bits(i, logn);
      root_[r] = w;
      iroot_[r] = wi;
      w = mul_mod(w, psi, q);
      wi = mul_mod(wi, psi_inv, q);
    }
    for (std::size_t i = 0; i < n; ++i) {
      root_shoup_[i] = shoup(root_[i]);
      iroot_shoup_[i] = shoup(iroot_[i]);
    }
    n_inv_ = inv_mod(static_cast<u64>(n), q);
    n_inv_shoup_ = shoup(n_inv_);
  }

  u64 modulus() const { return q_; }
  std::size_t degree() const { return n_; }

  /// In-place negacyclic forward transform (Cooley-Tukey, psi folded in).
  void forward(std::span<u64> a) const {
    std::size_t t = n_;
    for (std::size_t m = 1; m < n_; m <<= 1) {
      t >>= 1;
      for (std::size_t i = 0; i < m; ++i) {
        const u64 w = root_[m + i];
        const u64 ws = root_shoup_[m + i];
        u64* lo = a.data() + 2 * i * t;
        u64* hi = lo + t;
        for (std::size_t j = 0; j < t; ++j) {
          const u64 x = lo[j];
          const u64 y = mul_root(hi[j], w, ws);
          lo[j] = add_mod(x, y, q_);
          hi[j] = sub_mod(x, y, q_);
        }
      }
    }
  }

  /// In-place negacyclic inverse transform (Gentleman-Sande).
  void inverse(std::span<u64> a) const {
    std::size_t t = 1;
    for (std::size_t m = n_; m > 1; m >>= 1) {
      const std::size_t h = m >> 1;
      for (std::size_t i = 0; i < h; ++i) {
        const u64 w = iroot_[h + i];
        const u64 ws = iroot_shoup_[h + i];
        u64* lo = a.data() + 2 * i * t;
        u64* hi = lo + t;
        for (std::size_t j = 0; j < t; ++j) {
          const u64 x = lo[j];
          const u64 y = hi[j];
          lo[j] = add_mod(x, y, q_);
          hi[j] = mul_root(sub_mod(x, y, q_), w, ws);
        }
      }
      t <<= 1;
    }
    for (std::size_t i = 0; i < n_; ++i)
      a[i] = mul_root(a[i], n_inv_, n_inv_shoup_);
  }

 private:
  static std::size_t reverse_bits(std::size_t v, int bits) {
    std::size_t r = 0;
    for (int i = 0; i < bits; ++i) {
      r = (r << 1) | (v & 1);
      v >>= 1;
    }
    return r;
  }

  u64 shoup(u64 w) const {
    return static_cast<u64>((static_cast<u128>(w) << 64) / q_);
  }

  u64 mul_root(u64 x, u64 w, u64 w_shoup) const {
    const u64 hi = static_cast<u64>((static_cast<u128>(x) * w_shoup) >> 64);
    u64 r = x * w - hi * q_;
    return r >= q_ ? r - q_ : r;
  }

  std::size_t n_ = 0;
  u64 q_ = 0;
  std::vector<u64> root_, root_shoup_, iroot_, iroot_shoup_;
  u64 n_inv_ = 0, n_inv_shoup_ = 0;
};

/// Polynomial in RNS representation: one residue vector (length N) per active
/// prime. Limbs are stored contiguously; `ntt_form` tracks the domain.
struct RnsPoly {
  std::size_t n = 0;
  std::size_t num_limbs = 0;
  bool ntt_form = false;
  std::vector<u64> data;  // num_limbs * n

  RnsPoly() = default;
  RnsPoly(std::size_t degree, std::size_t limbs, bool ntt = false)
      : n(degree), num_limbs(limbs), ntt_form(ntt), data(limbs * degree, 0) {}

  std::span<u64> limb(std::size_t i) { return {data.data() + i * n, n}; }
  std::span<const u64> limb(std::size_t i) const {
    return {data.data() + i * n, n};
  }

  void drop_limbs(std::size_t keep) {
    num_limbs = keep;
    data.resize(keep * n);
  }
};

/// Schoolbook negacyclic product mod q; O(n^2) oracle for the NTT path.
inline std::vector<u64> negacyclic_schoolbook(std::span<const u64> a,
                                              std::span<const u64> b, u64 q) {
  const std::size_t n = a.size();
  std::vector<u64> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const u64 prod = mul_mod(a[i], b[j], q);
      const std::size_t k = i + j;
      if (k < n) {
        out[k] = add_mod(out[k], prod, q);
      } else {
        out[k - n] = sub_mod(out[k - n], prod, q);  // X^n = -1
      }
    }
  }
  return out;
}

}  // namespace hestia::ring

#endif  // HESTIA_RING_HPP_
