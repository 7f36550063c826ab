// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0

#include "hestia/ckks.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "hestia/common.hpp"

using namespace hestia;
using namespace hestia::ckks;

namespace {

// Small ring for fast unit tests; the paper-scale parameters are exercised
// by the acceptance suite.
HeParams test_params() {
  HeParams p;
  p.ring_degree = 1024;
  p.coeff_modulus_bits = {40, 30, 30, 40};
  p.scale = 0x1p30;
  p.secret_hamming_weight = 32;
  return p;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b,
                    std::size_t count) {
  double m = 0.0;
  for (std::size_t i = 0; i < count; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> random_vec(Rng& rng, std::size_t len, double bound) {
  std::vector<double> v(len);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

// Signed integer coefficients of a plaintext polynomial.
std::vector<__int128> signed_coeffs(const Context& ctx, const Plaintext& pt) {
  ring::RnsPoly poly = pt.poly;
  for (std::size_t i = 0; i < poly.num_limbs; ++i)
    ctx.ntt(i).inverse(poly.limb(i));
  std::vector<ring::u64> primes(poly.num_limbs);
  for (std::size_t i = 0; i < poly.num_limbs; ++i) primes[i] = ctx.prime(i);
  std::vector<__int128> out(ctx.degree());
  std::vector<ring::u64> residues(poly.num_limbs);
  for (std::size_t k = 0; k < ctx.degree(); ++k) {
    for (std::size_t i = 0; i < poly.num_limbs; ++i)
      residues[i] = poly.limb(i)[k];
    out[k] = detail::crt_reconstruct(residues, primes);
  }
  return out;
}

}  // namespace

TEST_CASE("params validation") {
  HeParams p = test_params();
  CHECK_NOTHROW(p.validate());
  SECTION("non power of two degree") {
    p.ring_degree = 1000;
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }
  SECTION("short chain") {
    p.coeff_modulus_bits = {40};
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }
  SECTION("scale above smallest prime capacity") {
    p.scale = 0x1p31;
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }
}

TEST_CASE("security table is informational but sane") {
  CHECK(security_level_bits(8192, 158) == 128);
  CHECK(security_level_bits(8192, 230) == 0);
  CHECK(security_level_bits(4096, 100) == 128);
}

TEST_CASE("encode/decode roundtrip") {
  Context ctx(test_params());
  const double scale = ctx.params().scale;

  SECTION("zero vector decodes to zero") {
    std::vector<double> v(8, 0.0);
    auto pt = encode(ctx, v, ctx.top_level(), scale);
    auto out = decode(ctx, pt);
    CHECK(max_abs_diff(out, v, v.size()) < 0x1p-20);
  }

  SECTION("random vector roundtrip under 2^-10") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      auto v = random_vec(rng, ctx.num_slots(), 1024.0);
      auto pt = encode(ctx, v, ctx.top_level(), scale);
      auto out = decode(ctx, pt);
      CHECK(max_abs_diff(out, v, v.size()) < 0x1p-10);
    }
  }

  SECTION("mixed signs example") {
    std::vector<double> v = {1.0, -1.0, 0.5, 0.25, -0.125};
    auto pt = encode(ctx, v, ctx.top_level(), scale);
    auto out = decode(ctx, pt);
    CHECK(max_abs_diff(out, v, v.size()) < 0x1p-10);
  }

  SECTION("overlength vector rejected") {
    std::vector<double> v(ctx.num_slots() + 1, 0.0);
    CHECK_THROWS_AS(encode(ctx, v, ctx.top_level(), scale), ArgError);
  }

  SECTION("plaintext addition is slotwise") {
    Rng rng(12);
    auto v = random_vec(rng, 16, 100.0);
    auto w = random_vec(rng, 16, 100.0);
    auto pv = encode(ctx, v, ctx.top_level(), scale);
    auto pw = encode(ctx, w, ctx.top_level(), scale);
    for (std::size_t i = 0; i < pv.poly.num_limbs; ++i)
      detail::pointwise_add(pv.poly.limb(i), pw.poly.limb(i), pv.poly.limb(i),
                            ctx.prime(i));
    auto out = decode(ctx, pv);
    for (std::size_t i = 0; i < 16; ++i)
      CHECK(std::abs(out[i] - (v[i] + w[i])) < 0x1p-9);
  }

  SECTION("broadcast constant encodes in every slot") {
    auto pt = encode_constant(ctx, 3.25, ctx.top_level(), scale);
    auto out = decode(ctx, pt);
    for (std::size_t i = 0; i < ctx.num_slots(); i += 37)
      CHECK(std::abs(out[i] - 3.25) < 0x1p-12);
  }
}

TEST_CASE("embedding turns ring product into slotwise product") {
  HeParams p;
  p.ring_degree = 32;
  p.coeff_modulus_bits = {50, 40};
  p.scale = 0x1p16;
  p.secret_hamming_weight = 8;
  Context ctx(p);
  Rng rng(21);
  auto v = random_vec(rng, ctx.num_slots(), 4.0);
  auto w = random_vec(rng, ctx.num_slots(), 4.0);
  auto pv = encode(ctx, v, 0, p.scale);
  auto pw = encode(ctx, w, 0, p.scale);
  auto cv = signed_coeffs(ctx, pv);
  auto cw = signed_coeffs(ctx, pw);

  // Exact integer negacyclic product.
  const std::size_t n = ctx.degree();
  std::vector<__int128> prod(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i + j < n)
        prod[i + j] += cv[i] * cw[j];
      else
        prod[i + j - n] -= cv[i] * cw[j];
    }
  std::vector<std::int64_t> prod64(n);
  for (std::size_t i = 0; i < n; ++i)
    prod64[i] = static_cast<std::int64_t>(prod[i]);
  Plaintext ppt;
  ppt.level = 0;
  ppt.scale = p.scale * p.scale;
  ppt.poly = detail::from_signed_coeffs(ctx, prod64, 1, true);

  auto out = decode(ctx, ppt);
  for (std::size_t i = 0; i < ctx.num_slots(); ++i)
    CHECK(std::abs(out[i] - v[i] * w[i]) < 1e-2);
}

TEST_CASE("keygen determinism") {
  Context ctx(test_params());
  auto k1 = keygen(ctx, 42);
  auto k2 = keygen(ctx, 42);
  auto k3 = keygen(ctx, 43);
  CHECK(serialize(ctx, k1.secret) == serialize(ctx, k2.secret));
  CHECK(serialize(ctx, k1.pub) == serialize(ctx, k2.pub));
  CHECK(serialize(ctx, k1.eval) == serialize(ctx, k2.eval));
  CHECK(serialize(ctx, k1.secret) != serialize(ctx, k3.secret));
}

TEST_CASE("fresh encryption noise stays below the documented ring bound") {
  Context ctx(test_params());
  auto keys = keygen(ctx, 1);
  Rng rng(2);
  auto v = random_vec(rng, 8, 30.0);
  auto pt = encode(ctx, v, ctx.top_level(), ctx.params().scale);
  auto ct = encrypt(ctx, keys.pub, pt, rng);
  auto dec = decrypt(ctx, keys.secret, ct);

  // c0 + c1*s minus the encoded message, in coefficient form and centered.
  for (std::size_t i = 0; i < dec.poly.num_limbs; ++i)
    detail::pointwise_sub(dec.poly.limb(i), pt.poly.limb(i), dec.poly.limb(i),
                          ctx.prime(i));
  auto noise = signed_coeffs(ctx, dec);
  const double sigma = ctx.params().error_stddev;
  const double bound = 8.0 * sigma * std::sqrt(double(ctx.degree()));
  for (auto c : noise) {
    const double mag = std::abs(static_cast<double>(static_cast<long double>(c)));
    REQUIRE(mag < bound);
  }
}

TEST_CASE("encrypt/decrypt roundtrips") {
  Context ctx(test_params());
  auto keys = keygen(ctx, 3);
  Rng rng(4);
  const double scale = ctx.params().scale;

  SECTION("zone temperature vector") {
    std::vector<double> temps = {23.5, 24.0, 22.0, 25.0};
    auto ct = encrypt(ctx, keys.pub, encode(ctx, temps, ctx.top_level(), scale), rng);
    auto out = decode(ctx, decrypt(ctx, keys.secret, ct));
    CHECK(max_abs_diff(out, temps, temps.size()) < 1e-3);
  }

  SECTION("zero vector") {
    std::vector<double> z(16, 0.0);
    auto ct = encrypt(ctx, keys.pub, encode(ctx, z, ctx.top_level(), scale), rng);
    auto out = decode(ctx, decrypt(ctx, keys.secret, ct));
    CHECK(max_abs_diff(out, z, z.size()) < 1e-3);
  }

  SECTION("same plaintext, fresh randomness") {
    std::vector<double> v = {1.5, -2.5, 3.5};
    auto pt = encode(ctx, v, ctx.top_level(), scale);
    auto c1 = encrypt(ctx, keys.pub, pt, rng);
    auto c2 = encrypt(ctx, keys.pub, pt, rng);
    CHECK(serialize(ctx, c1) != serialize(ctx, c2));
    auto o1 = decode(ctx, decrypt(ctx, keys.secret, c1));
    auto o2 = decode(ctx, decrypt(ctx, keys.secret, c2));
    CHECK(max_abs_diff(o1, v, v.size()) < 1e-3);
    CHECK(max_abs_diff(o2, v, v.size()) < 1e-3);
  }

  SECTION("repeated encryption error does not accumulate") {
    std::vector<double> v = {12.0, -7.0, 0.25, 800.0};
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      auto ct = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), rng);
      auto out = decode(ctx, decrypt(ctx, keys.secret, ct));
      worst = std::max(worst, max_abs_diff(out, v, v.size()));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("homomorphic addition") {
  Context ctx(test_params());
  auto keys = keygen(ctx, 5);
  Rng rng(6);
  const double scale = ctx.params().scale;

  auto v = random_vec(rng, 32, 100.0);
  auto w = random_vec(rng, 32, 100.0);
  auto ca = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), rng);
  auto cb = encrypt(ctx, keys.pub, encode(ctx, w, ctx.top_level(), scale), rng);

  SECTION("matches plaintext sum") {
    auto out = decode(ctx, decrypt(ctx, keys.secret, he_add(ctx, ca, cb)));
    for (std::size_t i = 0; i < 32; ++i)
      CHECK(std::abs(out[i] - (v[i] + w[i])) < 1e-3);
  }

  SECTION("commutes exactly") {
    auto o1 = decode(ctx, decrypt(ctx, keys.secret, he_add(ctx, ca, cb)));
    auto o2 = decode(ctx, decrypt(ctx, keys.secret, he_add(ctx, cb, ca)));
    CHECK(o1 == o2);
  }

  SECTION("additive identity") {
    std::vector<double> z(32, 0.0);
    auto cz = encrypt(ctx, keys.pub, encode(ctx, z, ctx.top_level(), scale), rng);
    auto out = decode(ctx, decrypt(ctx, keys.secret, he_add(ctx, ca, cz)));
    CHECK(max_abs_diff(out, v, 32) < 2e-3);
  }

  SECTION("level mismatch rejected, no implicit alignment") {
    auto lower = mod_switch_to_level(ctx, cb, ctx.top_level() - 1);
    CHECK_THROWS_AS(he_add(ctx, ca, lower), ArgError);
  }

  SECTION("scale mismatch rejected") {
    auto other = encrypt(ctx, keys.pub,
                         encode(ctx, w, ctx.top_level(), scale / 2), rng);
    CHECK_THROWS_AS(he_add(ctx, ca, other), ArgError);
  }
}

TEST_CASE("homomorphic multiplication with relinearization") {
  Context ctx(test_params());
  auto keys = keygen(ctx, 7);
  Rng rng(8);
  const double scale = ctx.params().scale;

  SECTION("scalar product 2*3=6") {
    std::vector<double> a = {2.0}, b = {3.0};
    auto ca = encrypt(ctx, keys.pub, encode(ctx, a, ctx.top_level(), scale), rng);
    auto cb = encrypt(ctx, keys.pub, encode(ctx, b, ctx.top_level(), scale), rng);
    auto prod = rescale(ctx, he_mult(ctx, ca, cb, keys.eval));
    CHECK(prod.level == ctx.top_level() - 1);
    auto out = decode(ctx, decrypt(ctx, keys.secret, prod));
    CHECK(std::abs(out[0] - 6.0) < 1e-2);
  }

  SECTION("multiplicative identity") {
    Rng r2(9);
    auto v = random_vec(r2, 16, 8.0);
    std::vector<double> ones(16, 1.0);
    auto cv = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), r2);
    auto c1 = encrypt(ctx, keys.pub, encode(ctx, ones, ctx.top_level(), scale), r2);
    auto prod = rescale(ctx, he_mult(ctx, cv, c1, keys.eval));
    auto out = decode(ctx, decrypt(ctx, keys.secret, prod));
    CHECK(max_abs_diff(out, v, 16) < 1e-2);
  }

  SECTION("random vectors against the plaintext oracle") {
    Rng r2(10);
    for (int trial = 0; trial < 3; ++trial) {
      auto v = random_vec(r2, 16, 8.0);
      auto w = random_vec(r2, 16, 8.0);
      auto cv = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), r2);
      auto cw = encrypt(ctx, keys.pub, encode(ctx, w, ctx.top_level(), scale), r2);
      auto prod = rescale(ctx, he_mult(ctx, cv, cw, keys.eval));
      auto out = decode(ctx, decrypt(ctx, keys.secret, prod));
      for (std::size_t i = 0; i < 16; ++i)
        CHECK(std::abs(out[i] - v[i] * w[i]) < 1e-2);
    }
  }

  SECTION("plaintext-ciphertext multiply agrees with ct-ct multiply") {
    Rng r2(11);
    auto v = random_vec(r2, 16, 8.0);
    auto w = random_vec(r2, 16, 8.0);
    auto cv = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), r2);
    auto pw = encode(ctx, w, ctx.top_level(), scale);
    auto cw = encrypt(ctx, keys.pub, pw, r2);
    auto o1 = decode(ctx, decrypt(ctx, keys.secret,
                                  rescale(ctx, mult_plain(ctx, cv, pw))));
    auto o2 = decode(ctx, decrypt(ctx, keys.secret,
                                  rescale(ctx, he_mult(ctx, cv, cw, keys.eval))));
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(o1[i] - o2[i]) < 1e-2);
  }
}

TEST_CASE("rescale bookkeeping") {
  Context ctx(test_params());  // data chain: 40, 30, 30 -> two rescales
  auto keys = keygen(ctx, 12);
  Rng rng(13);
  const double scale = ctx.params().scale;
  std::vector<double> v = {1.25, -2.0};
  auto ct = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), rng);

  SECTION("scale returns near the base scale after mult+rescale") {
    auto prod = rescale(ctx, he_mult(ctx, ct, ct, keys.eval));
    const double ratio = prod.scale / scale;
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
  }

  SECTION("two multiplies fit in the chain, the third does not") {
    auto a = rescale(ctx, he_mult(ctx, ct, ct, keys.eval));
    auto b = rescale(ctx, he_mult(ctx, a, a, keys.eval));
    CHECK(b.level == 0);
    CHECK_THROWS_AS(he_mult(ctx, b, b, keys.eval), StateError);
    CHECK_THROWS_AS(rescale(ctx, b), StateError);
  }

  SECTION("decrypted value invariant across rescale") {
    auto prod = he_mult(ctx, ct, ct, keys.eval);
    auto before = decode(ctx, decrypt(ctx, keys.secret, prod));
    auto after = decode(ctx, decrypt(ctx, keys.secret, rescale(ctx, prod)));
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(std::abs(before[i] - after[i]) < 1e-2);
  }

  SECTION("mod switch preserves the value and drops size") {
    auto smaller = mod_switch_to_level(ctx, ct, ctx.top_level() - 1);
    CHECK(smaller.scale == ct.scale);
    auto out = decode(ctx, decrypt(ctx, keys.secret, smaller));
    CHECK(max_abs_diff(out, v, v.size()) < 1e-3);
    CHECK(ciphertext_size_bytes(ctx, smaller) <
          ciphertext_size_bytes(ctx, ct));
  }
}

TEST_CASE("serialization") {
  Context ctx(test_params());
  auto keys = keygen(ctx, 14);
  Rng rng(15);
  const double scale = ctx.params().scale;
  std::vector<double> v = {9.0, -3.5, 0.125};
  auto ct = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), rng);

  SECTION("ciphertext roundtrip is bit exact") {
    auto bytes = serialize(ctx, ct);
    auto back = deserialize_ciphertext(ctx, bytes);
    CHECK(serialize(ctx, back) == bytes);
    auto out = decode(ctx, decrypt(ctx, keys.secret, back));
    CHECK(max_abs_diff(out, v, v.size()) < 1e-3);
  }

  SECTION("reported size matches the serialized byte count") {
    CHECK(serialize(ctx, ct).size() == ciphertext_size_bytes(ctx, ct));
    auto prod = rescale(ctx, he_mult(ctx, ct, ct, keys.eval));
    CHECK(serialize(ctx, prod).size() == ciphertext_size_bytes(ctx, prod));
    // One prime limb per part less after rescale.
    CHECK(ciphertext_size_bytes(ctx, ct) - ciphertext_size_bytes(ctx, prod) ==
          2 * ctx.degree() * 8);
  }

  SECTION("key roundtrips") {
    auto sk = deserialize_secret_key(ctx, serialize(ctx, keys.secret));
    auto pk = deserialize_public_key(ctx, serialize(ctx, keys.pub));
    auto ek = deserialize_eval_key(ctx, serialize(ctx, keys.eval));
    CHECK(serialize(ctx, sk) == serialize(ctx, keys.secret));
    CHECK(serialize(ctx, pk) == serialize(ctx, keys.pub));
    CHECK(serialize(ctx, ek) == serialize(ctx, keys.eval));
  }

  SECTION("params mismatch detected") {
    HeParams other = test_params();
    other.scale = 0x1p29;
    Context ctx2(other);
    auto bytes = serialize(ctx, ct);
    CHECK_THROWS_AS(deserialize_ciphertext(ctx2, bytes), ArgError);
  }
}

TEST_CASE("approximate homomorphism over random vectors") {
  Context ctx(test_params());
  auto keys = keygen(ctx, 16);
  Rng rng(17);
  const double scale = ctx.params().scale;
  for (int trial = 0; trial < 10; ++trial) {
    auto v = random_vec(rng, 24, 8.0);
    auto w = random_vec(rng, 24, 8.0);
    auto cv = encrypt(ctx, keys.pub, encode(ctx, v, ctx.top_level(), scale), rng);
    auto cw = encrypt(ctx, keys.pub, encode(ctx, w, ctx.top_level(), scale), rng);
    auto sum = decode(ctx, decrypt(ctx, keys.secret, he_add(ctx, cv, cw)));
    auto prod = decode(ctx, decrypt(ctx, keys.secret,
                                    rescale(ctx, he_mult(ctx, cv, cw, keys.eval))));
    for (std::size_t i = 0; i < 24; ++i) {
      REQUIRE(std::abs(sum[i] - (v[i] + w[i])) < 1e-3);
      REQUIRE(std::abs(prod[i] - v[i] * w[i]) < 1e-2);
    }
  }
}
