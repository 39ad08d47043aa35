#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "deepracing/curves.hpp"
#include "deepracing/errors.hpp"
#include "deepracing/telemetry.hpp"

namespace deepracing::synclog {

/// Affine fit of session time against OS time.
struct ClockModel {
  double slope = 1.0;
  double intercept = 0.0;
  double r_squared = 1.0;
  std::size_t n_samples = 0;

  [[nodiscard]] double session_time(double os_time) const { return slope * os_time + intercept; }
};

/// Ordinary least squares of session_time on os_time over (os, session)
/// pairs. Throws DegenerateDataError when all os times coincide.
ClockModel fit_clock_model(std::span<const std::pair<double, double>> pairs);

/// Actuation latency from a steering ramp experiment: regress the observed
/// steering values that are strictly inside (0,1) on their OS timestamps and
/// report x_intercept - ramp_start. Saturated samples would bias the
/// intercept, so they are excluded. Throws InsufficientDataError with fewer
/// than two usable samples.
double measure_latency(std::span<const std::pair<double, double>> ramp, double ramp_start);

/// Shortest-arc spherical linear interpolation between unit quaternions
/// (w,x,y,z); antipodal inputs are reconciled by sign flip. Falls back to
/// normalized lerp for nearly parallel inputs. Output has unit norm.
std::array<double, 4> slerp(const std::array<double, 4>& a, const std::array<double, 4>& b,
                            double u);

struct Pose {
  Eigen::Vector2d position{0.0, 0.0};
  std::array<double, 4> orientation{1.0, 0.0, 0.0, 0.0};  ///< (w,x,y,z)
  Eigen::Vector2d velocity{0.0, 0.0};
};

/// Immutable, session-time-ordered sequence of timestamped packets.
/// Duplicated session times are dropped on construction (first wins).
class StateLog {
public:
  static StateLog from_packets(std::vector<telemetry::TimestampedPacket> packets);

  /// Binary file: header "DRLOG 1\n", then per record the receiver os_time
  /// as little-endian f64 followed by the 121-byte packet.
  static StateLog load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  [[nodiscard]] std::span<const telemetry::TimestampedPacket> packets() const { return packets_; }
  [[nodiscard]] std::size_t size() const { return packets_.size(); }
  [[nodiscard]] double start_session_time() const;
  [[nodiscard]] double end_session_time() const;

  /// Clock model fitted to this log's (os_time, session_time) pairs.
  [[nodiscard]] ClockModel fit_clock() const;

private:
  explicit StateLog(std::vector<telemetry::TimestampedPacket> packets);
  std::vector<telemetry::TimestampedPacket> packets_;
};

/// Pose at an arbitrary session time inside the log's span: position and
/// velocity from a knot-reproducing cubic interpolant through the neighboring
/// samples, orientation from shortest-arc slerp between the bracketing
/// quaternions. Throws std::out_of_range outside the span.
Pose interpolate_pose(const StateLog& log, double session_time);

/// One supervised-learning label: the future trajectory of the vehicle in the
/// anchor sample's local frame (+x forward, +y left), plus the fitted curve.
struct LabelRecord {
  double anchor_session_time = 0.0;
  std::vector<Pose> past_states;        ///< context window, oldest first, ends at the anchor
  Eigen::MatrixX2d future_waypoints;    ///< P x 2, local frame, meters
  Eigen::MatrixX2d future_velocities;   ///< P x 2, local frame, m/s
  curves::BezierCurve fitted_curve;     ///< least-squares fit to the waypoints
};

/// Build one LabelRecord per log sample that has `context` past samples and a
/// full `horizon` seconds of future data. The future window is sampled at
/// `points` uniformly spaced session times starting at the anchor.
std::vector<LabelRecord> extract_label_pairs(const StateLog& log, int context, int points,
                                             double horizon, int degree);

/// CSV export: one row per record with the anchor time, the waypoint x/y
/// pairs, then the control point x/y pairs.
void write_labels_csv(std::span<const LabelRecord> records, const std::filesystem::path& path);

}  // namespace deepracing::synclog
