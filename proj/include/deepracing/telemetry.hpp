#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "deepracing/errors.hpp"

namespace deepracing::telemetry {

/// Fixed wire size of one telemetry datagram.
inline constexpr std::size_t kPacketSize = 121;
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 20777;
inline constexpr const char* kAddrEnvVar = "DEEPRACING_TELEMETRY_ADDR";

/// One timestamped snapshot of vehicle state as carried on the wire.
struct TelemetryPacket {
  double session_time = 0.0;                      ///< seconds on the session clock
  float steering = 0.0F;                          ///< [-1, 1]
  float throttle = 0.0F;                          ///< [0, 1]
  float brake = 0.0F;                             ///< [0, 1]
  std::array<double, 3> position{0.0, 0.0, 0.0};  ///< meters (z = 0 here)
  std::array<double, 3> velocity{0.0, 0.0, 0.0};  ///< m/s
  std::array<double, 4> orientation{1.0, 0.0, 0.0, 0.0};  ///< unit quaternion (w,x,y,z)
  float speed = 0.0F;                             ///< m/s
  float lap_distance = 0.0F;                      ///< arc length along the track, m
  std::uint16_t lap_number = 0;
  std::uint8_t flags = 0;

  [[nodiscard]] bool is_valid() const;
};

/// A packet paired with the receiver-side monotonic clock reading.
struct TimestampedPacket {
  TelemetryPacket packet;
  double os_time = 0.0;  ///< seconds, monotonic receiver clock
};

/// Serialize to the fixed little-endian wire layout:
/// magic "DRTB", version u8, then the fields in declaration order with no
/// alignment padding, then reserved zero bytes up to kPacketSize.
std::vector<std::byte> encode_packet(const TelemetryPacket& p);

/// Inverse of encode_packet. Throws TruncationError on any length other than
/// kPacketSize, ProtocolError on bad magic, UnsupportedVersionError on an
/// unknown version byte.
TelemetryPacket decode_packet(std::span<const std::byte> bytes);

/// Seconds on the process-wide monotonic clock.
double monotonic_now();

/// Thin RAII wrapper over a POSIX UDP socket.
class UdpSocket {
public:
  UdpSocket();
  ~UdpSocket();
  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  /// Bind to host:port; port 0 picks a free port.
  void bind(const std::string& host, std::uint16_t port);
  [[nodiscard]] std::uint16_t local_port() const;

  void send_to(std::span<const std::byte> payload, const std::string& host, std::uint16_t port);

  /// Blocking receive with timeout; nullopt on timeout.
  std::optional<std::vector<std::byte>> receive(double timeout_seconds);

private:
  int fd_;
};

/// "host:port" -> pair; throws std::invalid_argument on malformed input.
std::pair<std::string, std::uint16_t> parse_addr(const std::string& addr);

/// Telemetry destination; the DEEPRACING_TELEMETRY_ADDR environment variable
/// overrides the compiled default of 127.0.0.1:20777.
std::pair<std::string, std::uint16_t> default_telemetry_addr();

/// Fire-and-forget packet publisher. Send failures are counted and swallowed;
/// the stream continues on the next tick.
class Broadcaster {
public:
  Broadcaster(std::string host, std::uint16_t port);

  void send(const TelemetryPacket& p);
  [[nodiscard]] std::uint64_t send_failures() const { return send_failures_; }

private:
  UdpSocket socket_;
  std::string host_;
  std::uint16_t port_;
  std::uint64_t send_failures_ = 0;
};

/// Background receive loop that tags each decoded packet with the monotonic
/// OS time at receipt. Malformed datagrams are counted and skipped. Packets
/// are handed over through a bounded queue; when the queue is full the oldest
/// entry is dropped so the socket-read path never blocks.
class Listener {
public:
  explicit Listener(std::string host = "127.0.0.1", std::uint16_t port = kDefaultPort,
                    std::size_t queue_capacity = 1024);
  ~Listener();

  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  [[nodiscard]] std::uint16_t port() const { return port_; }

  /// Next packet in arrival order; nullopt if none arrives within the timeout.
  std::optional<TimestampedPacket> pop(double timeout_seconds);

  [[nodiscard]] std::uint64_t malformed_count() const { return malformed_count_; }
  [[nodiscard]] std::uint64_t dropped_count() const { return dropped_count_; }

  void stop();

private:
  void run();

  UdpSocket socket_;
  std::uint16_t port_;
  std::size_t capacity_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> malformed_count_{0};
  std::atomic<std::uint64_t> dropped_count_{0};
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<TimestampedPacket> queue_;
  std::thread thread_;
};

/// Fixed-rate pacing against the monotonic clock; deadlines are absolute, so
/// the average rate does not drift with per-tick jitter.
class Pacer {
public:
  explicit Pacer(double rate_hz);

  /// Sleep until the next tick deadline.
  void wait();

private:
  std::chrono::steady_clock::duration period_;
  std::chrono::steady_clock::time_point next_;
};

}  // namespace deepracing::telemetry
