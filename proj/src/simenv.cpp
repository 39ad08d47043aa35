#include "deepracing/simenv.hpp"

#include <algorithm>
#include <cmath>

namespace deepracing::simenv {

std::array<double, 4> VehicleState::orientation() const {
  const double half = 0.5 * heading;
  return {std::cos(half), 0.0, 0.0, std::sin(half)};
}

Eigen::Vector2d VehicleState::velocity() const {
  return {speed * std::cos(heading), speed * std::sin(heading)};
}

bool VehicleState::is_finite() const {
  return position.allFinite() && std::isfinite(heading) && std::isfinite(speed);
}

namespace {

struct Derivative {
  double dx, dy, dheading, dspeed;
};

Derivative dynamics(double heading, double speed, double wheel_angle, double accel,
                    const VehicleParams& p) {
  const double v = std::max(speed, 0.0);
  return Derivative{
      v * std::cos(heading),
      v * std::sin(heading),
      v * std::tan(wheel_angle) / p.wheelbase,
      accel - p.drag * v * v,
  };
}

}  // namespace

VehicleState step_bicycle(const VehicleState& state, const control::ControlCommand& cmd, double dt,
                          const VehicleParams& params) {
  if (!state.is_finite()) {
    throw SimulationFault("vehicle state is non-finite");
  }
  if (!cmd.is_valid()) {
    throw SimulationFault("control command is out of range");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("dt must be positive");
  }

  const double wheel_angle = cmd.steering * params.max_wheel_angle;
  const double accel = params.a_max * cmd.throttle - params.b_max * cmd.brake;

  const double x0 = state.position.x();
  const double y0 = state.position.y();
  const double h0 = state.heading;
  const double v0 = state.speed;

  const Derivative k1 = dynamics(h0, v0, wheel_angle, accel, params);
  const Derivative k2 =
      dynamics(h0 + 0.5 * dt * k1.dheading, v0 + 0.5 * dt * k1.dspeed, wheel_angle, accel, params);
  const Derivative k3 =
      dynamics(h0 + 0.5 * dt * k2.dheading, v0 + 0.5 * dt * k2.dspeed, wheel_angle, accel, params);
  const Derivative k4 = dynamics(h0 + dt * k3.dheading, v0 + dt * k3.dspeed, wheel_angle, accel, params);

  VehicleState next;
  next.position.x() = x0 + dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  next.position.y() = y0 + dt / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
  next.heading = h0 + dt / 6.0 * (k1.dheading + 2.0 * k2.dheading + 2.0 * k3.dheading + k4.dheading);
  next.speed =
      std::max(0.0, v0 + dt / 6.0 * (k1.dspeed + 2.0 * k2.dspeed + 2.0 * k3.dspeed + k4.dspeed));

  if (!next.is_finite()) {
    throw SimulationFault("vehicle state became non-finite");
  }
  return next;
}

LatencyChannel::LatencyChannel(double delay_seconds) : delay_(delay_seconds) {
  if (delay_ < 0.0) {
    throw std::invalid_argument("delay must be non-negative");
  }
}

void LatencyChannel::actuate(const control::ControlCommand& cmd, double now) {
  queue_.push_back(Entry{cmd, now + delay_});
}

std::optional<control::ControlCommand> LatencyChannel::poll(double now) {
  std::optional<control::ControlCommand> released;
  while (!queue_.empty() && queue_.front().release_time <= now) {
    released = queue_.front().cmd;
    queue_.pop_front();
  }
  return released;
}

}  // namespace deepracing::simenv
