// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0

#include "hestia/ring.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "hestia/common.hpp"

using namespace hestia;
using namespace hestia::ring;

TEST_CASE("ntt prime generation") {
  const std::size_t n = 8192;
  auto primes = find_ntt_primes({40, 26, 26, 26, 40}, n);
  REQUIRE(primes.size() == 5);
  for (std::size_t i = 0; i < primes.size(); ++i) {
    CAPTURE(i, primes[i]);
    CHECK(is_prime(primes[i]));
    CHECK(primes[i] % (2 * n) == 1);
  }
  CHECK(primes[0] >> 39 == 1);  // 40-bit
  CHECK(primes[1] >> 25 == 1);  // 26-bit
  CHECK(primes[0] != primes[4]);
  CHECK(primes[1] != primes[2]);
  CHECK(primes[2] != primes[3]);

  // Deterministic.
  CHECK(find_ntt_primes({40, 26, 26, 26, 40}, n) == primes);
}

TEST_CASE("miller-rabin basics") {
  CHECK(is_prime(2));
  CHECK(is_prime(65537));
  CHECK_FALSE(is_prime(1));
  CHECK_FALSE(is_prime(561));        // Carmichael
  CHECK_FALSE(is_prime(3215031751));  // classic pseudoprime composite
  CHECK(is_prime(0xffffffff00000001ULL));
}

TEST_CASE("ntt forward/inverse roundtrip") {
  const std::size_t n = 256;
  auto primes = find_ntt_primes({30}, n);
  NttTables tables(n, primes[0]);
  Rng rng(7);
  std::vector<u64> a(n), orig;
  for (auto& v : a) v = rng.next_below(primes[0]);
  orig = a;
  tables.forward(a);
  CHECK(a != orig);
  tables.inverse(a);
  CHECK(a == orig);
}

TEST_CASE("ntt multiplication equals schoolbook negacyclic convolution") {
  const std::size_t n = 64;
  auto primes = find_ntt_primes({30, 26}, n);
  for (u64 q : primes) {
    NttTables tables(n, q);
    Rng rng(q);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<u64> a(n), b(n);
      for (auto& v : a) v = rng.next_below(q);
      for (auto& v : b) v = rng.next_below(q);
      auto expected = negacyclic_schoolbook(a, b, q);
      std::vector<u64> fa = a, fb = b;
      tables.forward(fa);
      tables.forward(fb);
      for (std::size_t i = 0; i < n; ++i) fa[i] = mul_mod(fa[i], fb[i], q);
      tables.inverse(fa);
      REQUIRE(fa == expected);
    }
  }
}

TEST_CASE("negacyclic wraparound sign") {
  // (X^(n-1))^2 = X^(2n-2) = -X^(n-2) in Z_q[X]/(X^n+1).
  const std::size_t n = 32;
  auto primes = find_ntt_primes({28}, n);
  const u64 q = primes[0];
  std::vector<u64> a(n, 0);
  a[n - 1] = 1;
  auto prod = negacyclic_schoolbook(a, a, q);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == n - 2) {
      CHECK(prod[i] == q - 1);
    } else {
      CHECK(prod[i] == 0);
    }
  }
}
