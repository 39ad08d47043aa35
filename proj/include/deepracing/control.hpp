#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <utility>

#include "deepracing/curves.hpp"

namespace deepracing::control {

/// Normalized actuator command. steering in [-1,1] (+ = left), throttle and
/// brake in [0,1], never both nonzero.
struct ControlCommand {
  double steering = 0.0;
  double throttle = 0.0;
  double brake = 0.0;

  [[nodiscard]] bool is_valid() const;

  /// Clamp fields into range and zero the weaker of throttle/brake when both
  /// are set. Used when ingesting commands from outside the process.
  [[nodiscard]] ControlCommand sanitized() const;
};

struct PursuitConfig {
  double gamma = 0.4;            ///< lookahead gain, seconds
  double wheelbase = 3.6;        ///< meters
  double max_wheel_angle = 0.35; ///< radians; maps steering +-1 to the wheel
  double lookahead_min = 2.0;    ///< meters
  double lookahead_max = 50.0;   ///< meters

  void validate() const;
};

/// d = clamp(gamma * v, lookahead_min, lookahead_max).
double lookahead_distance(double speed, const PursuitConfig& cfg);

struct LookaheadChoice {
  Eigen::Vector2d point;
  std::size_t index;
};

/// Waypoint minimizing | ||W|| - d | over local-frame candidates
/// (+x forward, +y left, origin at the rear axle). Ties go to the larger
/// index, i.e. farther along the path.
LookaheadChoice select_lookahead(std::span<const Eigen::Vector2d> waypoints, double distance);

/// Steering onto the circular arc through the origin and the lookahead point:
/// curvature k = 2y/(x^2+y^2), wheel angle atan(k*L), normalized by
/// max_wheel_angle and clamped to [-1,1].
double steering_command(const Eigen::Vector2d& lookahead, const PursuitConfig& cfg);

/// All-or-nothing speed control: below reference -> full throttle, above ->
/// full brake, equal -> coast.
std::pair<double, double> bang_bang_throttle(double v_current, double v_ref);

/// Pure pursuit over an explicit local-frame waypoint list with per-point
/// reference speeds. Steering from the lookahead point, throttle bang-bang
/// against the reference speed at that point.
ControlCommand follow_waypoints(std::span<const Eigen::Vector2d> waypoints,
                                std::span<const double> reference_speeds, double current_speed,
                                const PursuitConfig& cfg);

/// Pure pursuit over a local-frame trajectory curve covering delta_t seconds.
/// The curve is sampled at `samples` uniform parameters; the reference speed
/// is the curve's time derivative at the chosen sample.
ControlCommand follow_bezier(const curves::BezierCurve& trajectory, double delta_t,
                             double current_speed, const PursuitConfig& cfg, int samples = 60);

}  // namespace deepracing::control
