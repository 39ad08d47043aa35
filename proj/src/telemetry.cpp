#include "deepracing/telemetry.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace deepracing::telemetry {

namespace {

constexpr std::array<std::byte, 4> kMagic = {std::byte{'D'}, std::byte{'R'}, std::byte{'T'},
                                             std::byte{'B'}};

template <typename T>
void put_le(std::vector<std::byte>& buf, std::size_t& off, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[off + i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFF);
  }
  off += sizeof(T);
}

template <typename T>
T get_le(std::span<const std::byte> buf, std::size_t& off) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(std::to_integer<std::uint8_t>(buf[off + i])) << (8 * i);
  }
  off += sizeof(T);
  return std::bit_cast<T>(bits);
}

}  // namespace

bool TelemetryPacket::is_valid() const {
  const double quat_norm_sq = orientation[0] * orientation[0] + orientation[1] * orientation[1] +
                              orientation[2] * orientation[2] + orientation[3] * orientation[3];
  return std::isfinite(session_time) && std::isfinite(steering) && std::isfinite(throttle) &&
         std::isfinite(brake) && steering >= -1.0F && steering <= 1.0F && throttle >= 0.0F &&
         throttle <= 1.0F && brake >= 0.0F && brake <= 1.0F &&
         std::abs(std::sqrt(quat_norm_sq) - 1.0) <= 1e-6 && std::isfinite(speed) && speed >= 0.0F;
}

std::vector<std::byte> encode_packet(const TelemetryPacket& p) {
  std::vector<std::byte> buf(kPacketSize, std::byte{0});
  std::size_t off = 0;
  for (std::byte b : kMagic) {
    buf[off++] = b;
  }
  put_le(buf, off, kWireVersion);
  put_le(buf, off, p.session_time);
  put_le(buf, off, p.steering);
  put_le(buf, off, p.throttle);
  put_le(buf, off, p.brake);
  for (double v : p.position) {
    put_le(buf, off, v);
  }
  for (double v : p.velocity) {
    put_le(buf, off, v);
  }
  for (double v : p.orientation) {
    put_le(buf, off, v);
  }
  put_le(buf, off, p.speed);
  put_le(buf, off, p.lap_distance);
  put_le(buf, off, p.lap_number);
  put_le(buf, off, p.flags);
  // Remaining bytes up to kPacketSize are reserved and stay zero.
  return buf;
}

TelemetryPacket decode_packet(std::span<const std::byte> bytes) {
  if (bytes.size() != kPacketSize) {
    throw TruncationError("expected " + std::to_string(kPacketSize) + " bytes, got " +
                          std::to_string(bytes.size()));
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ProtocolError("bad magic");
  }
  std::size_t off = kMagic.size();
  const auto version = get_le<std::uint8_t>(bytes, off);
  if (version != kWireVersion) {
    throw UnsupportedVersionError("wire version " + std::to_string(version));
  }

  TelemetryPacket p;
  p.session_time = get_le<double>(bytes, off);
  p.steering = get_le<float>(bytes, off);
  p.throttle = get_le<float>(bytes, off);
  p.brake = get_le<float>(bytes, off);
  for (double& v : p.position) {
    v = get_le<double>(bytes, off);
  }
  for (double& v : p.velocity) {
    v = get_le<double>(bytes, off);
  }
  for (double& v : p.orientation) {
    v = get_le<double>(bytes, off);
  }
  p.speed = get_le<float>(bytes, off);
  p.lap_distance = get_le<float>(bytes, off);
  p.lap_number = get_le<std::uint16_t>(bytes, off);
  p.flags = get_le<std::uint8_t>(bytes, off);
  return p;
}

double monotonic_now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

UdpSocket::UdpSocket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
  if (fd_ < 0) {
    throw IoError("socket() failed: " + std::string(std::strerror(errno)));
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) {
      ::close(fd_);
    }
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

namespace {

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw std::invalid_argument("not an IPv4 address: " + host);
  }
  return addr;
}

}  // namespace

void UdpSocket::bind(const std::string& host, std::uint16_t port) {
  const sockaddr_in addr = make_addr(host, port);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw IoError("bind() failed: " + std::string(std::strerror(errno)));
  }
}

std::uint16_t UdpSocket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    throw IoError("getsockname() failed: " + std::string(std::strerror(errno)));
  }
  return ntohs(addr.sin_port);
}

void UdpSocket::send_to(std::span<const std::byte> payload, const std::string& host,
                        std::uint16_t port) {
  const sockaddr_in addr = make_addr(host, port);
  const ssize_t sent = ::sendto(fd_, payload.data(), payload.size(), 0,
                                reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  if (sent < 0 || static_cast<std::size_t>(sent) != payload.size()) {
    throw IoError("sendto() failed: " + std::string(std::strerror(errno)));
  }
}

std::optional<std::vector<std::byte>> UdpSocket::receive(double timeout_seconds) {
  pollfd pfd{fd_, POLLIN, 0};
  const int timeout_ms = static_cast<int>(std::lround(timeout_seconds * 1000.0));
  const int ready = ::poll(&pfd, 1, timeout_ms);
  if (ready < 0) {
    if (errno == EINTR) {
      return std::nullopt;
    }
    throw IoError("poll() failed: " + std::string(std::strerror(errno)));
  }
  if (ready == 0) {
    return std::nullopt;
  }
  std::vector<std::byte> buf(65536);
  const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, nullptr, nullptr);
  if (n < 0) {
    throw IoError("recvfrom() failed: " + std::string(std::strerror(errno)));
  }
  buf.resize(static_cast<std::size_t>(n));
  return buf;
}

std::pair<std::string, std::uint16_t> parse_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
    throw std::invalid_argument("expected host:port, got: " + addr);
  }
  const std::string host = addr.substr(0, colon);
  const int port = std::stoi(addr.substr(colon + 1));
  if (port < 1 || port > 65535) {
    throw std::invalid_argument("port out of range: " + addr);
  }
  return {host, static_cast<std::uint16_t>(port)};
}

std::pair<std::string, std::uint16_t> default_telemetry_addr() {
  if (const char* env = std::getenv(kAddrEnvVar)) {
    return parse_addr(env);
  }
  return {"127.0.0.1", kDefaultPort};
}

Broadcaster::Broadcaster(std::string host, std::uint16_t port)
    : host_(std::move(host)), port_(port) {}

void Broadcaster::send(const TelemetryPacket& p) {
  try {
    socket_.send_to(encode_packet(p), host_, port_);
  } catch (const IoError&) {
    ++send_failures_;  // fire-and-forget: keep broadcasting
  }
}

Listener::Listener(std::string host, std::uint16_t port, std::size_t queue_capacity)
    : port_(port), capacity_(queue_capacity) {
  socket_.bind(host, port);
  port_ = socket_.local_port();
  thread_ = std::thread([this] { run(); });
}

Listener::~Listener() { stop(); }

void Listener::stop() {
  stop_.store(true);
  if (thread_.joinable()) {
    thread_.join();
  }
}

void Listener::run() {
  while (!stop_.load()) {
    auto datagram = socket_.receive(0.05);
    if (!datagram) {
      continue;
    }
    const double os_time = monotonic_now();
    TimestampedPacket entry;
    try {
      entry.packet = decode_packet(*datagram);
    } catch (const ProtocolError&) {
      malformed_count_.fetch_add(1);
      continue;
    }
    entry.os_time = os_time;
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() >= capacity_) {
        queue_.pop_front();
        dropped_count_.fetch_add(1);
      }
      queue_.push_back(entry);
    }
    cv_.notify_one();
  }
}

std::optional<TimestampedPacket> Listener::pop(double timeout_seconds) {
  std::unique_lock lock(mutex_);
  if (!cv_.wait_for(lock, std::chrono::duration<double>(timeout_seconds),
                    [this] { return !queue_.empty(); })) {
    return std::nullopt;
  }
  TimestampedPacket out = queue_.front();
  queue_.pop_front();
  return out;
}

Pacer::Pacer(double rate_hz) {
  if (!(rate_hz > 0.0)) {
    throw std::invalid_argument("rate must be positive");
  }
  period_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / rate_hz));
  next_ = std::chrono::steady_clock::now() + period_;
}

void Pacer::wait() {
  std::this_thread::sleep_until(next_);
  next_ += period_;
}

}  // namespace deepracing::telemetry
