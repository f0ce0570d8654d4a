#pragma once

// Binary framing between coordinator and workers.
//
//   offset  size  field
//   0       4     magic "NPG1"
//   4       1     message type (HELLO=1, BROADCAST=2, REPORT=3, SHUTDOWN=4)
//   5       4     iteration, uint32 little-endian
//   9       8     payload length in bytes, uint64 little-endian
//   17      n     payload: float64 little-endian values in field order
//
// Payload field order (integers are carried as exactly representable doubles):
//   HELLO      worker_id, config_hash, rollouts_per_worker
//   BROADCAST  theta[108], whitening_mean[16], whitening_std[16],
//              value_weights[37], config_hash
//   REPORT     worker_id, sample_count, trajectory_count, terminated_count,
//              return_sum, adv_sum, adv_sq_sum, score_adv_sum[108],
//              score_sum[108], fisher_sum upper triangle row-major[5886],
//              value_xtx upper triangle row-major[703], value_xty[37],
//              value_count
//   SHUTDOWN   (empty)

#include "pushnpg/training.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <variant>
#include <vector>

namespace pushnpg {

enum class MessageType : std::uint8_t { Hello = 1, Broadcast = 2, Report = 3, Shutdown = 4 };

inline constexpr std::array<char, 4> kMagic = {'N', 'P', 'G', '1'};
inline constexpr std::size_t kHeaderSize = 17;
inline constexpr std::size_t kHelloFields = 3;
inline constexpr std::size_t kBroadcastFields = kThetaDim + 2 * kObsDim + kFeatureDim + 1;
inline constexpr std::size_t kReportFields =
    7 + 2 * kThetaDim + kFisherTriangle + kFeatureTriangle + kFeatureDim + 1;

struct Hello {
  std::uint32_t worker_id = 0;
  std::uint64_t config_hash = 0;
  std::uint32_t rollouts = 0;
  bool operator==(const Hello&) const = default;
};

struct Shutdown {
  std::uint32_t iteration = 0;
};

using Message = std::variant<Hello, PolicyBroadcast, FisherReport, Shutdown>;

using Bytes = std::vector<std::uint8_t>;

namespace wire {

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

class Writer {
 public:
  void f64(double v) { values_.push_back(v); }
  void integer(std::uint64_t v) {
    if (v >= (std::uint64_t{1} << 53)) throw ProtocolError("integer field exceeds 2^53");
    values_.push_back(static_cast<double>(v));
  }
  template <typename Derived>
  void vec(const Eigen::MatrixBase<Derived>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) values_.push_back(v(i));
  }
  template <typename Derived>
  void upper(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = r; c < m.cols(); ++c) values_.push_back(m(r, c));
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t count) : data_(data), count_(count) {}
  double f64() {
    if (pos_ >= count_) throw ProtocolError("payload too short");
    double v;
    std::memcpy(&v, data_ + 8 * pos_++, 8);
    return v;
  }
  std::uint64_t integer() {
    const double v = f64();
    if (!(v >= 0.0 && v < 9007199254740992.0) || v != std::floor(v))
      throw ProtocolError("malformed integer field");
    return static_cast<std::uint64_t>(v);
  }
  template <typename Derived>
  void vec(Eigen::MatrixBase<Derived>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
  }
  template <typename Derived>
  void upper(Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = r; c < m.cols(); ++c) m(r, c) = f64();
  }
  bool done() const { return pos_ == count_; }

 private:
  const std::uint8_t* data_;
  std::size_t count_;
  std::size_t pos_ = 0;
};

inline Bytes frame(MessageType type, std::uint32_t iteration, const std::vector<double>& payload) {
  Bytes out;
  out.reserve(kHeaderSize + 8 * payload.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(type));
  put_u32(out, iteration);
  put_u64(out, 8 * payload.size());
  const std::size_t at = out.size();
  out.resize(at + 8 * payload.size());
  if (!payload.empty()) std::memcpy(out.data() + at, payload.data(), 8 * payload.size());
  return out;
}

}  // namespace wire

struct FrameHeader {
  MessageType type;
  std::uint32_t iteration;
  std::uint64_t payload_bytes;
};

/// Validates the fixed 17-byte header.
inline FrameHeader decode_header(const std::uint8_t* p) {
  if (std::memcmp(p, kMagic.data(), 4) != 0) throw ProtocolError("bad magic");
  const std::uint8_t t = p[4];
  if (t < 1 || t > 4) throw ProtocolError("unknown message type " + std::to_string(t));
  FrameHeader h{static_cast<MessageType>(t), wire::get_u32(p + 5), wire::get_u64(p + 9)};
  if (h.payload_bytes % 8 != 0) throw ProtocolError("payload length not a multiple of 8");
  std::size_t expected = 0;
  switch (h.type) {
    case MessageType::Hello: expected = kHelloFields; break;
    case MessageType::Broadcast: expected = kBroadcastFields; break;
    case MessageType::Report: expected = kReportFields; break;
    case MessageType::Shutdown: expected = 0; break;
  }
  if (h.payload_bytes != 8 * expected)
    throw ProtocolError("payload length " + std::to_string(h.payload_bytes) + " does not match message type");
  return h;
}

inline Bytes encode(const Message& msg) {
  wire::Writer w;
  return std::visit(
      [&w](const auto& m) -> Bytes {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          w.integer(m.worker_id);
          w.integer(m.config_hash);
          w.integer(m.rollouts);
          return wire::frame(MessageType::Hello, 0, w.values());
        } else if constexpr (std::is_same_v<T, PolicyBroadcast>) {
          w.vec(m.theta);
          w.vec(m.whitening.mean);
          w.vec(m.whitening.std);
          w.vec(m.value_weights);
          w.integer(m.config_hash);
          return wire::frame(MessageType::Broadcast, m.iteration, w.values());
        } else if constexpr (std::is_same_v<T, FisherReport>) {
          const auto& s = m.sums;
          w.integer(m.worker_id);
          w.integer(static_cast<std::uint64_t>(s.sample_count));
          w.integer(static_cast<std::uint64_t>(s.trajectory_count));
          w.integer(static_cast<std::uint64_t>(s.terminated_count));
          w.f64(s.return_sum);
          w.f64(s.adv_sum);
          w.f64(s.adv_sq_sum);
          w.vec(s.score_adv_sum);
          w.vec(s.score_sum);
          w.upper(s.fisher_sum);
          w.upper(s.value_neq.xtx);
          w.vec(s.value_neq.xty);
          w.integer(static_cast<std::uint64_t>(s.value_neq.count));
          return wire::frame(MessageType::Report, m.iteration, w.values());
        } else {
          return wire::frame(MessageType::Shutdown, m.iteration, w.values());
        }
      },
      msg);
}

/// Decodes a payload whose header has already been validated.
inline Message decode_payload(const FrameHeader& h, const std::uint8_t* payload) {
  wire::Reader r(payload, h.payload_bytes / 8);
  Message out;
  switch (h.type) {
    case MessageType::Hello: {
      Hello m;
      m.worker_id = static_cast<std::uint32_t>(r.integer());
      m.config_hash = r.integer();
      m.rollouts = static_cast<std::uint32_t>(r.integer());
      out = m;
      break;
    }
    case MessageType::Broadcast: {
      PolicyBroadcast m;
      m.iteration = h.iteration;
      r.vec(m.theta);
      r.vec(m.whitening.mean);
      r.vec(m.whitening.std);
      r.vec(m.value_weights);
      m.config_hash = r.integer();
      out = m;
      break;
    }
    case MessageType::Report: {
      FisherReport m;
      m.iteration = h.iteration;
      auto& s = m.sums;
      m.worker_id = static_cast<std::uint32_t>(r.integer());
      s.sample_count = static_cast<std::int64_t>(r.integer());
      s.trajectory_count = static_cast<std::int64_t>(r.integer());
      s.terminated_count = static_cast<std::int64_t>(r.integer());
      s.return_sum = r.f64();
      s.adv_sum = r.f64();
      s.adv_sq_sum = r.f64();
      r.vec(s.score_adv_sum);
      r.vec(s.score_sum);
      r.upper(s.fisher_sum);
      r.upper(s.value_neq.xtx);
      r.vec(s.value_neq.xty);
      s.value_neq.count = static_cast<std::int64_t>(r.integer());
      out = m;
      break;
    }
    case MessageType::Shutdown:
      out = Shutdown{h.iteration};
      break;
  }
  if (!r.done()) throw ProtocolError("trailing payload");
  return out;
}

inline Message decode(const Bytes& bytes) {
  if (bytes.size() < kHeaderSize) throw ProtocolError("frame shorter than header");
  const FrameHeader h = decode_header(bytes.data());
  if (bytes.size() != kHeaderSize + h.payload_bytes) throw ProtocolError("frame length mismatch");
  return decode_payload(h, bytes.data() + kHeaderSize);
}

}  // namespace pushnpg
