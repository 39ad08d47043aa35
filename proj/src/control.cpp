#include "deepracing/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace deepracing::control {

bool ControlCommand::is_valid() const {
  return std::isfinite(steering) && std::isfinite(throttle) && std::isfinite(brake) &&
         steering >= -1.0 && steering <= 1.0 && throttle >= 0.0 && throttle <= 1.0 &&
         brake >= 0.0 && brake <= 1.0 && throttle * brake == 0.0;
}

ControlCommand ControlCommand::sanitized() const {
  ControlCommand out;
  out.steering = std::isfinite(steering) ? std::clamp(steering, -1.0, 1.0) : 0.0;
  out.throttle = std::isfinite(throttle) ? std::clamp(throttle, 0.0, 1.0) : 0.0;
  out.brake = std::isfinite(brake) ? std::clamp(brake, 0.0, 1.0) : 0.0;
  if (out.throttle > 0.0 && out.brake > 0.0) {
    if (out.throttle >= out.brake) {
      out.brake = 0.0;
    } else {
      out.throttle = 0.0;
    }
  }
  return out;
}

void PursuitConfig::validate() const {
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("gamma must be positive");
  }
  if (!(wheelbase > 0.0)) {
    throw std::invalid_argument("wheelbase must be positive");
  }
  if (!(max_wheel_angle > 0.0)) {
    throw std::invalid_argument("max wheel angle must be positive");
  }
  if (!(lookahead_min > 0.0) || !(lookahead_min <= lookahead_max)) {
    throw std::invalid_argument("need 0 < lookahead_min <= lookahead_max");
  }
}

double lookahead_distance(double speed, const PursuitConfig& cfg) {
  cfg.validate();
  if (speed < 0.0) {
    throw std::invalid_argument("speed must be non-negative");
  }
  return std::clamp(cfg.gamma * speed, cfg.lookahead_min, cfg.lookahead_max);
}

LookaheadChoice select_lookahead(std::span<const Eigen::Vector2d> waypoints, double distance) {
  if (waypoints.empty()) {
    throw std::invalid_argument("waypoint list must be non-empty");
  }
  std::size_t best = 0;
  double best_score = std::abs(waypoints[0].norm() - distance);
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const double score = std::abs(waypoints[i].norm() - distance);
    if (score <= best_score) {  // ties go to the later point
      best = i;
      best_score = score;
    }
  }
  return LookaheadChoice{waypoints[best], best};
}

double steering_command(const Eigen::Vector2d& lookahead, const PursuitConfig& cfg) {
  cfg.validate();
  const double dist_sq = lookahead.squaredNorm();
  if (!(dist_sq > 0.0)) {
    throw std::invalid_argument("lookahead point must not coincide with the vehicle");
  }
  const double curvature = 2.0 * lookahead.y() / dist_sq;
  const double wheel_angle = std::atan(curvature * cfg.wheelbase);
  return std::clamp(wheel_angle / cfg.max_wheel_angle, -1.0, 1.0);
}

std::pair<double, double> bang_bang_throttle(double v_current, double v_ref) {
  if (v_current < 0.0 || v_ref < 0.0) {
    throw std::invalid_argument("speeds must be non-negative");
  }
  if (v_current < v_ref) {
    return {1.0, 0.0};
  }
  if (v_current > v_ref) {
    return {0.0, 1.0};
  }
  return {0.0, 0.0};
}

ControlCommand follow_waypoints(std::span<const Eigen::Vector2d> waypoints,
                                std::span<const double> reference_speeds, double current_speed,
                                const PursuitConfig& cfg) {
  if (waypoints.size() != reference_speeds.size()) {
    throw std::invalid_argument("one reference speed per waypoint required");
  }
  const double d = lookahead_distance(current_speed, cfg);
  const LookaheadChoice choice = select_lookahead(waypoints, d);

  ControlCommand cmd;
  cmd.steering = steering_command(choice.point, cfg);
  const auto [throttle, brake] = bang_bang_throttle(current_speed, reference_speeds[choice.index]);
  cmd.throttle = throttle;
  cmd.brake = brake;
  return cmd;
}

ControlCommand follow_bezier(const curves::BezierCurve& trajectory, double delta_t,
                             double current_speed, const PursuitConfig& cfg, int samples) {
  if (trajectory.dimension() != 2) {
    throw std::invalid_argument("trajectory curve must be planar");
  }
  if (!(delta_t > 0.0)) {
    throw std::invalid_argument("trajectory duration must be positive");
  }
  if (samples < 2) {
    throw std::invalid_argument("need at least 2 samples");
  }

  const curves::TimeVector s = curves::TimeVector::linspace(samples);
  const Eigen::MatrixXd points = trajectory.evaluate(s);
  const Eigen::MatrixXd velocities = trajectory.derivative().evaluate(s) / delta_t;

  std::vector<Eigen::Vector2d> waypoints(static_cast<std::size_t>(samples));
  std::vector<double> speeds(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    waypoints[static_cast<std::size_t>(i)] = points.row(i).transpose();
    speeds[static_cast<std::size_t>(i)] = velocities.row(i).norm();
  }
  return follow_waypoints(waypoints, speeds, current_speed, cfg);
}

}  // namespace deepracing::control
