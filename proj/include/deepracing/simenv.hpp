#pragma once

#include <Eigen/Dense>
#include <array>
#include <deque>
#include <filesystem>
#include <optional>
#include <vector>

#include "deepracing/control.hpp"
#include "deepracing/errors.hpp"

namespace deepracing::simenv {

/// Kinematic bicycle state in the world frame.
struct VehicleState {
  Eigen::Vector2d position{0.0, 0.0};  ///< meters
  double heading = 0.0;                ///< radians, CCW from +x
  double speed = 0.0;                  ///< m/s, >= 0

  /// Yaw-only unit quaternion (w,x,y,z) for the current heading.
  [[nodiscard]] std::array<double, 4> orientation() const;
  [[nodiscard]] Eigen::Vector2d velocity() const;
  [[nodiscard]] bool is_finite() const;
};

struct VehicleParams {
  double wheelbase = 3.6;         ///< m
  double a_max = 10.0;            ///< full-throttle acceleration, m/s^2
  double b_max = 20.0;            ///< full-brake deceleration, m/s^2
  double drag = 0.004;            ///< quadratic drag coefficient, 1/m
  double max_wheel_angle = 0.35;  ///< rad; steering +-1 maps to +-this
};

/// One RK4 step of
///   x' = v cos(h), y' = v sin(h), h' = v tan(delta)/L,
///   v' = a_max*throttle - b_max*brake - drag*v^2
/// with delta = steering * max_wheel_angle. Speed is floored at zero.
/// Throws SimulationFault on non-finite state.
VehicleState step_bicycle(const VehicleState& state, const control::ControlCommand& cmd, double dt,
                          const VehicleParams& params);

/// Closed centerline polyline with uniform half width. Point 0 is the
/// start/finish station; the final point repeats the first.
class Track {
public:
  /// points must form a closed loop (first == last) with at least 3 distinct
  /// vertices.
  Track(std::vector<Eigen::Vector2d> centerline, double half_width,
        std::size_t start_finish_index = 0);

  /// Line-oriented text file: "DRTRACK 1", "half_width <m>", then one
  /// "x y" pair per line; '#' starts a comment.
  static Track load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  [[nodiscard]] const std::vector<Eigen::Vector2d>& centerline() const { return points_; }
  [[nodiscard]] double half_width() const { return half_width_; }
  [[nodiscard]] double length() const { return cumulative_.back(); }
  [[nodiscard]] std::size_t start_finish_index() const { return start_finish_index_; }
  [[nodiscard]] double start_finish_arc_length() const { return cumulative_[start_finish_index_]; }

  struct Localization {
    double arc_length = 0.0;        ///< meters along the centerline, in [0, length)
    double lateral_offset = 0.0;    ///< signed meters, + = left of travel direction
    double outside_distance = 0.0;  ///< max(0, |lateral_offset| - half_width)
  };

  /// Nearest-point projection of a world position onto the centerline.
  [[nodiscard]] Localization localize(const Eigen::Vector2d& position) const;

  /// Centerline point at arc length s (wrapped into [0, length)).
  [[nodiscard]] Eigen::Vector2d point_at(double arc_length) const;
  /// Tangent heading at arc length s.
  [[nodiscard]] double heading_at(double arc_length) const;

private:
  std::vector<Eigen::Vector2d> points_;  ///< closed: front() == back()
  std::vector<double> cumulative_;       ///< arc length at each point, 0..length
  double half_width_;
  std::size_t start_finish_index_;
};

/// Stadium-shaped track: two straights joined by semicircles, start/finish at
/// the midpoint of the first straight, sampled at most `spacing` apart.
Track generate_oval_track(double straight_length, double radius, double half_width, double spacing);

/// Affine map from OS time to session time.
struct SessionClock {
  double drift = 1.0;   ///< session seconds per OS second, > 0
  double offset = 0.0;  ///< seconds

  [[nodiscard]] double session_now(double os_time) const { return drift * os_time + offset; }
};

/// FIFO actuation channel that releases each command `delay` seconds after it
/// was actuated. poll() consumes everything released by `now` and returns the
/// newest of it.
class LatencyChannel {
public:
  explicit LatencyChannel(double delay_seconds);

  void actuate(const control::ControlCommand& cmd, double now);
  [[nodiscard]] std::optional<control::ControlCommand> poll(double now);

  [[nodiscard]] double delay() const { return delay_; }
  [[nodiscard]] std::size_t pending() const { return queue_.size(); }

private:
  struct Entry {
    control::ControlCommand cmd;
    double release_time;
  };
  double delay_;
  std::deque<Entry> queue_;
};

}  // namespace deepracing::simenv
