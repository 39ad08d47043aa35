#include "deepracing/synclog.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace deepracing::synclog {

namespace {

struct OlsFit {
  double slope;
  double intercept;
  double r_squared;
};

// Centered OLS of y on x; caller guarantees var(x) > 0.
OlsFit ols(std::span<const std::pair<double, double>> pairs) {
  const double n = static_cast<double>(pairs.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (const auto& [x, y] : pairs) {
    mean_x += x;
    mean_y += y;
  }
  mean_x /= n;
  mean_y /= n;

  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& [x, y] : pairs) {
    const double dx = x - mean_x;
    const double dy = y - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }

  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = mean_y - fit.slope * mean_x;

  double ss_res = 0.0;
  for (const auto& [x, y] : pairs) {
    const double r = y - (fit.slope * x + fit.intercept);
    ss_res += r * r;
  }
  if (syy > 0.0) {
    fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  } else {
    fit.r_squared = ss_res == 0.0 ? 1.0 : 0.0;
  }
  return fit;
}

}  // namespace

ClockModel fit_clock_model(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 2) {
    throw DegenerateDataError("need at least 2 samples");
  }
  const double first = pairs.front().first;
  const bool all_equal = std::all_of(pairs.begin(), pairs.end(),
                                     [first](const auto& p) { return p.first == first; });
  if (all_equal) {
    throw DegenerateDataError("all OS timestamps are identical");
  }

  const OlsFit fit = ols(pairs);
  return ClockModel{fit.slope, fit.intercept, fit.r_squared, pairs.size()};
}

double measure_latency(std::span<const std::pair<double, double>> ramp, double ramp_start) {
  std::vector<std::pair<double, double>> rising;
  rising.reserve(ramp.size());
  for (const auto& [os_time, steering] : ramp) {
    if (steering > 0.0 && steering < 1.0) {
      rising.emplace_back(os_time, steering);
    }
  }
  if (rising.size() < 2 || rising.front().first == rising.back().first) {
    throw InsufficientDataError("fewer than 2 unsaturated ramp samples");
  }

  const OlsFit fit = ols(rising);
  if (fit.slope == 0.0) {
    throw InsufficientDataError("ramp has zero slope");
  }
  const double x_intercept = -fit.intercept / fit.slope;
  return x_intercept - ramp_start;
}

std::array<double, 4> slerp(const std::array<double, 4>& a, const std::array<double, 4>& b,
                            double u) {
  std::array<double, 4> bb = b;
  double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
  if (dot < 0.0) {  // take the short way around
    for (double& v : bb) {
      v = -v;
    }
    dot = -dot;
  }

  double wa = 1.0 - u;
  double wb = u;
  if (dot < 1.0 - 1e-12) {
    const double theta = std::acos(std::min(dot, 1.0));
    const double sin_theta = std::sin(theta);
    wa = std::sin((1.0 - u) * theta) / sin_theta;
    wb = std::sin(u * theta) / sin_theta;
  }

  std::array<double, 4> out{};
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = wa * a[i] + wb * bb[i];
    norm_sq += out[i] * out[i];
  }
  const double inv_norm = 1.0 / std::sqrt(norm_sq);
  for (double& v : out) {
    v *= inv_norm;
  }
  return out;
}

StateLog::StateLog(std::vector<telemetry::TimestampedPacket> packets)
    : packets_(std::move(packets)) {}

StateLog StateLog::from_packets(std::vector<telemetry::TimestampedPacket> packets) {
  std::stable_sort(packets.begin(), packets.end(), [](const auto& a, const auto& b) {
    return a.packet.session_time < b.packet.session_time;
  });
  packets.erase(std::unique(packets.begin(), packets.end(),
                            [](const auto& a, const auto& b) {
                              return a.packet.session_time == b.packet.session_time;
                            }),
                packets.end());
  return StateLog(std::move(packets));
}

namespace {
constexpr char kLogHeader[] = "DRLOG 1\n";
constexpr std::size_t kLogHeaderSize = sizeof(kLogHeader) - 1;
constexpr std::size_t kRecordSize = sizeof(double) + telemetry::kPacketSize;
}  // namespace

StateLog StateLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open log file: " + path.string());
  }
  std::array<char, kLogHeaderSize> header{};
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (in.gcount() != static_cast<std::streamsize>(header.size()) ||
      std::memcmp(header.data(), kLogHeader, kLogHeaderSize) != 0) {
    throw IoError("not a DRLOG 1 file: " + path.string());
  }

  std::vector<telemetry::TimestampedPacket> packets;
  std::array<std::byte, kRecordSize> record{};
  while (in.read(reinterpret_cast<char*>(record.data()), kRecordSize)) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(double); ++i) {
      bits |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(record[i])) << (8 * i);
    }
    telemetry::TimestampedPacket entry;
    entry.os_time = std::bit_cast<double>(bits);
    entry.packet =
        telemetry::decode_packet(std::span<const std::byte>(record).subspan(sizeof(double)));
    packets.push_back(entry);
  }
  if (in.gcount() != 0) {
    throw IoError("truncated log record in: " + path.string());
  }
  return from_packets(std::move(packets));
}

void StateLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write log file: " + path.string());
  }
  out.write(kLogHeader, kLogHeaderSize);
  for (const auto& entry : packets_) {
    const auto bits = std::bit_cast<std::uint64_t>(entry.os_time);
    std::array<std::byte, sizeof(double)> time_bytes{};
    for (std::size_t i = 0; i < sizeof(double); ++i) {
      time_bytes[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(time_bytes.data()), time_bytes.size());
    const auto payload = telemetry::encode_packet(entry.packet);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

double StateLog::start_session_time() const {
  if (packets_.empty()) {
    throw std::out_of_range("log is empty");
  }
  return packets_.front().packet.session_time;
}

double StateLog::end_session_time() const {
  if (packets_.empty()) {
    throw std::out_of_range("log is empty");
  }
  return packets_.back().packet.session_time;
}

ClockModel StateLog::fit_clock() const {
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(packets_.size());
  for (const auto& entry : packets_) {
    pairs.emplace_back(entry.os_time, entry.packet.session_time);
  }
  return fit_clock_model(pairs);
}

namespace {

Eigen::Vector2d packet_position(const telemetry::TelemetryPacket& p) {
  return {p.position[0], p.position[1]};
}

// Cubic Hermite segment with finite-difference (Catmull-Rom class) tangents;
// reproduces knots and linear data exactly.
struct HermiteSample {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
};

HermiteSample hermite(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1,
                      const Eigen::Vector2d& m0, const Eigen::Vector2d& m1, double h, double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
  const double h10 = u3 - 2.0 * u2 + u;
  const double h01 = -2.0 * u3 + 3.0 * u2;
  const double h11 = u3 - u2;
  const double d00 = 6.0 * u2 - 6.0 * u;
  const double d10 = 3.0 * u2 - 4.0 * u + 1.0;
  const double d01 = -6.0 * u2 + 6.0 * u;
  const double d11 = 3.0 * u2 - 2.0 * u;

  HermiteSample out;
  out.position = h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
  out.velocity = (d00 * p0 + d01 * p1) / h + d10 * m0 + d11 * m1;
  return out;
}

}  // namespace

Pose interpolate_pose(const StateLog& log, double session_time) {
  const auto packets = log.packets();
  if (packets.size() < 2) {
    throw std::out_of_range("log needs at least 2 samples for interpolation");
  }
  const double t_first = packets.front().packet.session_time;
  const double t_last = packets.back().packet.session_time;
  if (session_time < t_first || session_time > t_last) {
    throw std::out_of_range("query time outside the log span");
  }

  // Bracketing segment [i, i+1].
  auto it = std::upper_bound(packets.begin(), packets.end(), session_time,
                             [](double t, const auto& e) { return t < e.packet.session_time; });
  std::size_t i = static_cast<std::size_t>(std::distance(packets.begin(), it));
  i = std::clamp<std::size_t>(i, 1, packets.size() - 1) - 1;

  const auto& s0 = packets[i].packet;
  const auto& s1 = packets[i + 1].packet;
  const double h = s1.session_time - s0.session_time;
  const double u = (session_time - s0.session_time) / h;

  auto secant = [&](std::size_t a, std::size_t b) -> Eigen::Vector2d {
    return (packet_position(packets[b].packet) - packet_position(packets[a].packet)) /
           (packets[b].packet.session_time - packets[a].packet.session_time);
  };
  auto tangent = [&](std::size_t k) -> Eigen::Vector2d {
    if (k == 0) {
      return secant(0, 1);
    }
    if (k == packets.size() - 1) {
      return secant(k - 1, k);
    }
    return 0.5 * (secant(k - 1, k) + secant(k, k + 1));
  };

  const HermiteSample sample = hermite(packet_position(s0), packet_position(s1), tangent(i),
                                       tangent(i + 1), h, u);
  Pose pose;
  pose.position = sample.position;
  pose.velocity = sample.velocity;
  pose.orientation = slerp(s0.orientation, s1.orientation, u);
  return pose;
}

namespace {

double quaternion_yaw(const std::array<double, 4>& q) {
  const double w = q[0];
  const double x = q[1];
  const double y = q[2];
  const double z = q[3];
  return std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
}

Pose packet_pose(const telemetry::TelemetryPacket& p) {
  Pose pose;
  pose.position = packet_position(p);
  pose.orientation = p.orientation;
  pose.velocity = {p.velocity[0], p.velocity[1]};
  return pose;
}

}  // namespace

std::vector<LabelRecord> extract_label_pairs(const StateLog& log, int context, int points,
                                             double horizon, int degree) {
  if (context < 1) {
    throw std::invalid_argument("context must be at least 1");
  }
  if (points < 2) {
    throw std::invalid_argument("need at least 2 future points");
  }
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("horizon must be positive");
  }
  if (points < degree + 1) {
    throw UnderdeterminedError("need at least degree+1 future points to fit");
  }

  std::vector<LabelRecord> records;
  const auto packets = log.packets();
  if (packets.size() < 2) {
    return records;
  }
  const double t_last = packets.back().packet.session_time;
  const curves::TimeVector s = curves::TimeVector::linspace(points);

  for (std::size_t i = static_cast<std::size_t>(context) - 1; i < packets.size(); ++i) {
    const auto& anchor = packets[i].packet;
    const double t0 = anchor.session_time;
    if (t0 + horizon > t_last) {
      break;
    }

    const double yaw = quaternion_yaw(anchor.orientation);
    const double c = std::cos(yaw);
    const double sn = std::sin(yaw);
    const Eigen::Vector2d origin = packet_position(anchor);
    auto to_local = [c, sn](const Eigen::Vector2d& v) {
      return Eigen::Vector2d{c * v.x() + sn * v.y(), -sn * v.x() + c * v.y()};
    };

    Eigen::MatrixX2d waypoints(points, 2);
    Eigen::MatrixX2d velocities(points, 2);
    for (int k = 0; k < points; ++k) {
      const double tk = t0 + horizon * static_cast<double>(k) / static_cast<double>(points - 1);
      const Pose pose = interpolate_pose(log, std::min(tk, t_last));
      waypoints.row(k) = to_local(pose.position - origin).transpose();
      velocities.row(k) = to_local(pose.velocity).transpose();
    }

    LabelRecord record{
        t0,
        {},
        waypoints,
        velocities,
        curves::fit_least_squares(waypoints, s, degree),
    };
    record.past_states.reserve(static_cast<std::size_t>(context));
    for (std::size_t k = i + 1 - static_cast<std::size_t>(context); k <= i; ++k) {
      record.past_states.push_back(packet_pose(packets[k].packet));
    }
    records.push_back(std::move(record));
  }
  return records;
}

void write_labels_csv(std::span<const LabelRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write labels file: " + path.string());
  }
  out.precision(17);

  const Eigen::Index points = records.empty() ? 0 : records.front().future_waypoints.rows();
  const Eigen::Index cps = records.empty() ? 0 : records.front().fitted_curve.control_points().rows();
  out << "anchor_session_time";
  for (Eigen::Index k = 0; k < points; ++k) {
    out << ",wp" << k << "_x,wp" << k << "_y";
  }
  for (Eigen::Index k = 0; k < cps; ++k) {
    out << ",cp" << k << "_x,cp" << k << "_y";
  }
  out << "\n";

  for (const auto& record : records) {
    out << record.anchor_session_time;
    for (Eigen::Index k = 0; k < record.future_waypoints.rows(); ++k) {
      out << "," << record.future_waypoints(k, 0) << "," << record.future_waypoints(k, 1);
    }
    const auto& cp = record.fitted_curve.control_points();
    for (Eigen::Index k = 0; k < cp.rows(); ++k) {
      out << "," << cp(k, 0) << "," << cp(k, 1);
    }
    out << "\n";
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace deepracing::synclog
