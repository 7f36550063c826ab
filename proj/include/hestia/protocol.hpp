// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Two-party encrypted fast gradient method. The cloud party evaluates the
// gradient and momentum recursions on ciphertexts; the system party owns the
// secret key and performs the box projection in the clear, re-encrypting
// fresh ciphertexts each round. Every exchanged message crosses an
// in-process channel in serialized form, so byte accounting is exact.
//
// Packing: matrix-column layout without slot rotations. The system sends
// each vector component as a broadcast ciphertext (the constant occupies
// every slot); the cloud multiplies by packed matrix columns and sums, which
// leaves the gradient direction d packed in the slots of one ciphertext.
// State vectors are affinely conditioned to O(1) magnitudes before
// encryption (center/scale per component group); the matrix columns absorb
// the scaling, the offset absorbs the centering.
//
// Level/scale plan per round (fresh chain of L data primes, base scale D):
//   u broadcasts   arrive at level L-1, scale D
//   momentum       (1+eta) (x) u  -> rescale -> level L-2, scale D^2/q_{L-1}
//   matrix columns stored at level L-2 (G at scale D, Phi at D^2/q_{L-1})
//   products/offset: level L-2, scale D * D^2/q_{L-1}
//   gradient d     rescaled to level L-3
// Re-encryption at each projection restores the full level, so the levels
// entering every round are identical.

#ifndef HESTIA_PROTOCOL_HPP_
#define HESTIA_PROTOCOL_HPP_

#include <deque>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hestia/ckks.hpp"
#include "hestia/common.hpp"
#include "hestia/mpc.hpp"

namespace hestia::proto {

using ckks::Ciphertext;
using ckks::Context;

enum class Direction { kSystemToCloud, kCloudToSystem };
enum class MessageKind { kInit, kGradient, kProjected, kResult };

inline const char* to_string(Direction d) {
  return d == Direction::kSystemToCloud ? "system_to_cloud" : "cloud_to_system";
}

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kInit: return "init";
    case MessageKind::kGradient: return "gradient";
    case MessageKind::kProjected: return "projected";
    case MessageKind::kResult: return "result";
  }
  return "?";
}

struct TranscriptEntry {
  Direction direction;
  int round = 0;
  MessageKind kind;
  std::size_t bytes = 0;
};

struct Transcript {
  std::vector<TranscriptEntry> entries;
  int iterations = 0;

  std::size_t total_bytes() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.bytes;
    return n;
  }

  std::size_t message_count() const { return entries.size(); }

  /// One JSON object per line: direction, round, kind, bytes.
  std::string to_jsonl() const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << "{\"direction\":\"" << to_string(e.direction) << "\",\"round\":"
         << e.round << ",\"kind\":\"" << to_string(e.kind)
         << "\",\"bytes\":" << e.bytes << "}\n";
    }
    return os.str();
  }
};

/// Length-prefixed ciphertext set with a kind/round header.
struct WireMessage {
  MessageKind kind;
  int round = 0;
  std::vector<std::vector<std::uint8_t>> payloads;

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    ckks::io::put<std::uint8_t>(out, static_cast<std::uint8_t>(kind));
    ckks::io::put<std::uint32_t>(out, static_cast<std::uint32_t>(round));
    ckks::io::put<std::uint32_t>(out, static_cast<std::uint32_t>(payloads.size()));
    for (const auto& p : payloads) {
      ckks::io::put<std::uint64_t>(out, p.size());
      ckks::io::put_bytes(out, p.data(), p.size());
    }
    return out;
  }

  static WireMessage deserialize(std::span<const std::uint8_t> bytes) {
    ckks::io::Reader r{bytes.data(), bytes.data() + bytes.size()};
    WireMessage m;
    m.kind = static_cast<MessageKind>(r.get<std::uint8_t>());
    m.round = static_cast<int>(r.get<std::uint32_t>());
    const auto count = r.get<std::uint32_t>();
    m.payloads.resize(count);
    for (auto& p : m.payloads) {
      p.resize(r.get<std::uint64_t>());
      r.get_bytes(p.data(), p.size());
    }
    return m;
  }
};

/// Ordered, reliable, loss-free in-process duplex channel. Messages travel
/// as serialized bytes and every transfer is recorded in the transcript.
class Channel {
 public:
  void send(Direction dir, MessageKind kind, int round, WireMessage msg) {
    msg.kind = kind;
    msg.round = round;
    auto bytes = msg.serialize();
    transcript_.entries.push_back({dir, round, kind, bytes.size()});
    queue(dir).push_back(std::move(bytes));
  }

  WireMessage receive(Direction dir) {
    auto& q = queue(dir);
    if (q.empty()) throw StateError("protocol violation: no pending message");
    auto bytes = std::move(q.front());
    q.pop_front();
    return WireMessage::deserialize(bytes);
  }

  Transcript& transcript() { return transcript_; }

 private:
  std::deque<std::vector<std::uint8_t>>& queue(Direction dir) {
    return dir == Direction::kSystemToCloud ? to_cloud_ : to_system_;
  }

  std::deque<std::vector<std::uint8_t>> to_cloud_, to_system_;
  Transcript transcript_;
};

/// Affine conditioning of the state vector before encryption.
struct StateConditioning {
  Vec center;
  Vec scale;  // componentwise, strictly positive

  Vec normalize(const Vec& x) const {
    return (x - center).cwiseQuotient(scale);
  }
};

/// Everything the cloud party holds. Contains no secret-key material by
/// construction.
struct CloudContext {
  const Context* ctx = nullptr;
  ckks::PublicKey pk;
  ckks::EvalKey ek;
  std::vector<Ciphertext> step_cols;   // columns of I - H/L
  std::vector<Ciphertext> state_cols;  // columns of -F diag(s)/L
  Ciphertext offset;                   // -(g + F c)/L, packed
  Ciphertext one_plus_eta, neg_eta;    // broadcast momentum constants
  int n_u = 0, n_x = 0;
  std::size_t level_u = 0, level_const = 0;
  double scale_base = 0.0, scale_xi = 0.0, scale_prod = 0.0;

  std::vector<std::uint8_t> serialize_state() const {
    std::vector<std::uint8_t> out;
    auto append = [&](const Ciphertext& ct) {
      auto b = ckks::serialize(*ctx, ct);
      out.insert(out.end(), b.begin(), b.end());
    };
    auto pkb = ckks::serialize(*ctx, pk);
    out.insert(out.end(), pkb.begin(), pkb.end());
    auto ekb = ckks::serialize(*ctx, ek);
    out.insert(out.end(), ekb.begin(), ekb.end());
    for (const auto& c : step_cols) append(c);
    for (const auto& c : state_cols) append(c);
    append(offset);
    append(one_plus_eta);
    append(neg_eta);
    return out;
  }
};

/// The system party: key owner, box projector, re-encryptor.
struct SystemContext {
  const Context* ctx = nullptr;
  ckks::SecretKey sk;
  ckks::PublicKey pk;
  Vec lo, hi;
  StateConditioning conditioning;
  Vec coupling_center;   // F * center, folded into the offset
  Vec default_offset_g;  // condensed offset at construction time
  double inv_l = 0.0;
  int n_u = 0, n_x = 0;
  std::size_t level_u = 0, level_const = 0;
  double scale_base = 0.0, scale_xi = 0.0, scale_prod = 0.0;
  Rng rng{0};
};

struct ProtocolPair {
  CloudContext cloud;
  SystemContext system;
};

/// Builds both party contexts from a condensed QP. Encryption of the
/// constant matrices happens here, on the trusted system side; the cloud
/// receives only ciphertexts and public key material.
inline ProtocolPair make_protocol_pair(const Context& ctx,
                                       const ckks::KeySet& keys,
                                       const mpc::CondensedQP& qp,
                                       const StateConditioning& cond,
                                       std::uint64_t seed) {
  if (ctx.top_level() < 2)
    throw ConfigError("protocol needs at least three data primes");
  const int n_u = qp.dim();
  const int n_x = static_cast<int>(qp.state_coupling.cols());
  if (static_cast<std::size_t>(std::max(n_u, n_x)) > ctx.num_slots())
    throw ConfigError("problem dimension exceeds slot count");
  if (cond.center.size() != n_x || cond.scale.size() != n_x)
    throw ConfigError("conditioning dimension mismatch");
  if (cond.scale.minCoeff() <= 0.0)
    throw ConfigError("conditioning scales must be positive");

  ProtocolPair pair;
  CloudContext& cc = pair.cloud;
  SystemContext& sc = pair.system;

  cc.ctx = &ctx;
  cc.pk = keys.pub;
  cc.ek = keys.eval;
  cc.n_u = n_u;
  cc.n_x = n_x;
  cc.level_u = ctx.top_level();
  cc.level_const = ctx.top_level() - 1;
  cc.scale_base = ctx.params().scale;
  cc.scale_xi =
      cc.scale_base * cc.scale_base / static_cast<double>(ctx.prime(cc.level_u));
  cc.scale_prod = cc.scale_base * cc.scale_xi;

  Rng rng(seed);
  const Mat step = Mat::Identity(n_u, n_u) - qp.H / qp.L;
  const Mat state = -(qp.state_coupling * cond.scale.asDiagonal()) / qp.L;
  const Vec off = -(qp.offset + qp.state_coupling * cond.center) / qp.L;

  auto encrypt_col = [&](const Vec& col, std::size_t level, double scale) {
    std::vector<double> vals(col.data(), col.data() + col.size());
    return ckks::encrypt(ctx, keys.pub, ckks::encode(ctx, vals, level, scale),
                         rng);
  };
  for (int j = 0; j < n_u; ++j)
    cc.step_cols.push_back(encrypt_col(step.col(j), cc.level_const, cc.scale_base));
  for (int i = 0; i < n_x; ++i)
    cc.state_cols.push_back(encrypt_col(state.col(i), cc.level_const, cc.scale_xi));
  cc.offset = encrypt_col(off, cc.level_const, cc.scale_prod);
  cc.one_plus_eta = ckks::encrypt(
      ctx, keys.pub,
      ckks::encode_constant(ctx, 1.0 + qp.eta, cc.level_u, cc.scale_base), rng);
  cc.neg_eta = ckks::encrypt(
      ctx, keys.pub,
      ckks::encode_constant(ctx, -qp.eta, cc.level_u, cc.scale_base), rng);

  sc.ctx = &ctx;
  sc.sk = keys.secret;
  sc.pk = keys.pub;
  sc.lo = qp.lo;
  sc.hi = qp.hi;
  sc.conditioning = cond;
  sc.coupling_center = qp.state_coupling * cond.center;
  sc.default_offset_g = qp.offset;
  sc.inv_l = 1.0 / qp.L;
  sc.n_u = n_u;
  sc.n_x = n_x;
  sc.level_u = cc.level_u;
  sc.level_const = cc.level_const;
  sc.scale_base = cc.scale_base;
  sc.scale_xi = cc.scale_xi;
  sc.scale_prod = cc.scale_prod;
  sc.rng = rng.derive(0x5e55);
  return pair;
}

// ---------------------------------------------------------------------------
// Party operations
// ---------------------------------------------------------------------------

/// Cloud side of one gradient evaluation:
///   Enc(d) = sum_j Enc(G col j) (x) Enc(xi_j)
///          + sum_i Enc(Phi col i) (x) Enc(x_i)  + Enc(offset), rescaled.
inline Ciphertext cloud_gradient_step(const CloudContext& cc,
                                      const std::vector<Ciphertext>& enc_xi,
                                      const std::vector<Ciphertext>& enc_x) {
  const Context& ctx = *cc.ctx;
  if (enc_xi.size() != static_cast<std::size_t>(cc.n_u) ||
      enc_x.size() != static_cast<std::size_t>(cc.n_x))
    throw ArgError("ciphertext set size mismatch");
  std::optional<Ciphertext> acc;
  for (int j = 0; j < cc.n_u; ++j) {
    auto term = ckks::tensor_mult(ctx, cc.step_cols[j], enc_xi[j]);
    acc = acc ? ckks::he_add(ctx, *acc, term) : term;
  }
  for (int i = 0; i < cc.n_x; ++i) {
    auto term = ckks::tensor_mult(ctx, cc.state_cols[i], enc_x[i]);
    acc = acc ? ckks::he_add(ctx, *acc, term) : term;
  }
  acc = ckks::he_add(ctx, *acc, cc.offset);
  return ckks::rescale(ctx, ckks::relinearize(ctx, *acc, cc.ek));
}

/// Cloud side of the momentum recursion, per component:
///   Enc(xi_j) = Enc(1+eta) (x) Enc(u_j(k+1))  +  Enc(-eta) (x) Enc(u_j(k)).
inline std::vector<Ciphertext> cloud_momentum_step(
    const CloudContext& cc, const std::vector<Ciphertext>& enc_u_next,
    const std::vector<Ciphertext>& enc_u_prev) {
  const Context& ctx = *cc.ctx;
  if (enc_u_next.size() != enc_u_prev.size())
    throw ArgError("momentum operand size mismatch");
  std::vector<Ciphertext> out;
  out.reserve(enc_u_next.size());
  for (std::size_t j = 0; j < enc_u_next.size(); ++j) {
    auto a = ckks::tensor_mult(ctx, cc.one_plus_eta, enc_u_next[j]);
    auto b = ckks::tensor_mult(ctx, cc.neg_eta, enc_u_prev[j]);
    auto sum = ckks::he_add(ctx, a, b);
    out.push_back(ckks::rescale(ctx, ckks::relinearize(ctx, sum, cc.ek)));
  }
  return out;
}

struct ProjectionResult {
  Vec u;                            // plaintext projected iterate
  std::vector<Ciphertext> enc_u;    // fresh broadcast re-encryptions
};

/// System side of one round: decrypt the packed direction, project onto the
/// box, re-encrypt each component at full level with fresh randomness.
inline ProjectionResult system_project_round(SystemContext& sc,
                                             const Ciphertext& enc_d) {
  const Context& ctx = *sc.ctx;
  const auto slots = ckks::decode(ctx, ckks::decrypt(ctx, sc.sk, enc_d));
  Vec d(sc.n_u);
  for (int j = 0; j < sc.n_u; ++j) d(j) = slots[j];
  ProjectionResult res;
  res.u = mpc::project_box(d, sc.lo, sc.hi);
  res.enc_u.reserve(sc.n_u);
  for (int j = 0; j < sc.n_u; ++j)
    res.enc_u.push_back(ckks::encrypt(
        ctx, sc.pk,
        ckks::encode_constant(ctx, res.u(j), sc.level_u, sc.scale_base),
        sc.rng));
  return res;
}

/// System-side encryption of the initial message: the conditioned state,
/// the warm start u(0) with its xi(0) encoding, and the current condensed
/// offset (receding-horizon predictions shift it every session).
struct InitPayload {
  std::vector<Ciphertext> enc_x;    // conditioned state, broadcast
  std::vector<Ciphertext> enc_u0;   // warm start at the u level
  std::vector<Ciphertext> enc_xi0;  // warm start at the xi level/scale
  Ciphertext enc_offset;            // packed gradient constant
};

inline InitPayload system_encrypt_init(SystemContext& sc, const Vec& x0,
                                       const Vec& u0, const Vec& offset_g) {
  const Context& ctx = *sc.ctx;
  if (x0.size() != sc.n_x || u0.size() != sc.n_u)
    throw ArgError("initial message dimension mismatch");
  if (offset_g.size() != sc.n_u) throw ArgError("offset dimension mismatch");
  const Vec xn = sc.conditioning.normalize(x0);
  InitPayload p;
  for (int i = 0; i < sc.n_x; ++i)
    p.enc_x.push_back(ckks::encrypt(
        ctx, sc.pk,
        ckks::encode_constant(ctx, xn(i), sc.level_const, sc.scale_base),
        sc.rng));
  for (int j = 0; j < sc.n_u; ++j) {
    p.enc_u0.push_back(ckks::encrypt(
        ctx, sc.pk,
        ckks::encode_constant(ctx, u0(j), sc.level_u, sc.scale_base), sc.rng));
    p.enc_xi0.push_back(ckks::encrypt(
        ctx, sc.pk,
        ckks::encode_constant(ctx, u0(j), sc.level_const, sc.scale_xi),
        sc.rng));
  }
  const Vec folded = -sc.inv_l * (offset_g + sc.coupling_center);
  std::vector<double> vals(folded.data(), folded.data() + folded.size());
  p.enc_offset = ckks::encrypt(
      ctx, sc.pk, ckks::encode(ctx, vals, sc.level_const, sc.scale_prod),
      sc.rng);
  return p;
}

struct ProtocolResult {
  Vec u;                 // final decrypted input trajectory
  Transcript transcript;
};

/// Algorithm driver. Runs K rounds of the encrypted FGM over a recorded
/// channel; the message pattern is exactly
///   init (system->cloud), then per round gradient (cloud->system) and
///   projected (system->cloud), then result (cloud->system),
/// i.e. 2K + 2 messages. On failure the partial transcript is preserved in
/// `transcript_out` and a StateError describes the abort.
inline ProtocolResult run_encrypted_fgm(CloudContext& cc, SystemContext& sc,
                                        const Vec& x0, const Vec& u_init,
                                        int iterations,
                                        Transcript* transcript_out = nullptr,
                                        const Vec* offset_g = nullptr) {
  if (iterations < 1) throw ArgError("iteration count must be >= 1");
  const Context& ctx = *cc.ctx;
  Channel channel;
  auto publish = [&] {
    if (transcript_out) *transcript_out = channel.transcript();
  };

  try {
    // System: initial message.
    auto init = system_encrypt_init(sc, x0, mpc::project_box(u_init, sc.lo, sc.hi),
                                    offset_g ? *offset_g : sc.default_offset_g);
    WireMessage init_msg;
    for (const auto& c : init.enc_x)
      init_msg.payloads.push_back(ckks::serialize(ctx, c));
    for (const auto& c : init.enc_u0)
      init_msg.payloads.push_back(ckks::serialize(ctx, c));
    for (const auto& c : init.enc_xi0)
      init_msg.payloads.push_back(ckks::serialize(ctx, c));
    init_msg.payloads.push_back(ckks::serialize(ctx, init.enc_offset));
    channel.send(Direction::kSystemToCloud, MessageKind::kInit, 0,
                 std::move(init_msg));

    // Cloud: unpack the initial state and the session offset.
    auto received = channel.receive(Direction::kSystemToCloud);
    std::vector<Ciphertext> enc_x, enc_u_prev, enc_xi;
    for (int i = 0; i < cc.n_x; ++i)
      enc_x.push_back(ckks::deserialize_ciphertext(ctx, received.payloads[i]));
    for (int j = 0; j < cc.n_u; ++j)
      enc_u_prev.push_back(
          ckks::deserialize_ciphertext(ctx, received.payloads[cc.n_x + j]));
    for (int j = 0; j < cc.n_u; ++j)
      enc_xi.push_back(ckks::deserialize_ciphertext(
          ctx, received.payloads[cc.n_x + cc.n_u + j]));
    cc.offset = ckks::deserialize_ciphertext(
        ctx, received.payloads[cc.n_x + 2 * cc.n_u]);

    Vec u_final = Vec::Zero(cc.n_u);
    std::vector<Ciphertext> last_projected;
    for (int k = 0; k < iterations; ++k) {
      // Cloud computes and ships the encrypted direction.
      auto enc_d = cloud_gradient_step(cc, enc_xi, enc_x);
      WireMessage grad;
      grad.payloads.push_back(ckks::serialize(ctx, enc_d));
      channel.send(Direction::kCloudToSystem, MessageKind::kGradient, k,
                   std::move(grad));

      // System projects and re-encrypts.
      auto grad_msg = channel.receive(Direction::kCloudToSystem);
      auto proj = system_project_round(
          sc, ckks::deserialize_ciphertext(ctx, grad_msg.payloads[0]));
      u_final = proj.u;
      WireMessage up;
      for (const auto& c : proj.enc_u)
        up.payloads.push_back(ckks::serialize(ctx, c));
      channel.send(Direction::kSystemToCloud, MessageKind::kProjected, k,
                   std::move(up));

      // Cloud advances the momentum state.
      auto up_msg = channel.receive(Direction::kSystemToCloud);
      std::vector<Ciphertext> enc_u_next;
      for (const auto& p : up_msg.payloads)
        enc_u_next.push_back(ckks::deserialize_ciphertext(ctx, p));
      enc_xi = cloud_momentum_step(cc, enc_u_next, enc_u_prev);
      enc_u_prev = enc_u_next;
      last_projected = std::move(enc_u_next);
    }

    // Cloud returns the final encrypted trajectory.
    WireMessage result;
    for (const auto& c : last_projected)
      result.payloads.push_back(ckks::serialize(ctx, c));
    channel.send(Direction::kCloudToSystem, MessageKind::kResult, iterations,
                 std::move(result));
    auto result_msg = channel.receive(Direction::kCloudToSystem);
    Vec u_out(cc.n_u);
    for (int j = 0; j < cc.n_u; ++j) {
      auto ct = ckks::deserialize_ciphertext(ctx, result_msg.payloads[j]);
      u_out(j) = ckks::decode(ctx, ckks::decrypt(ctx, sc.sk, ct))[0];
    }
    (void)u_final;

    channel.transcript().iterations = iterations;
    publish();
    ProtocolResult out;
    out.u = u_out;
    out.transcript = channel.transcript();
    return out;
  } catch (const std::exception& e) {
    publish();
    throw StateError(std::string("protocol abort: ") + e.what());
  }
}

}  // namespace hestia::proto

#endif  // HESTIA_PROTOCOL_HPP_
