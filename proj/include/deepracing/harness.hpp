#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "deepracing/control.hpp"
#include "deepracing/errors.hpp"
#include "deepracing/simenv.hpp"
#include "deepracing/synclog.hpp"
#include "deepracing/telemetry.hpp"

namespace deepracing::harness {

/// Single-writer broadcast ring holding the most recent telemetry snapshots.
/// The writer publishes through an atomic head counter and never waits on
/// readers; readers copy optimistically and retry if the writer lapped them
/// mid-copy (seqlock style). With slack of capacity+8 slots a retry needs the
/// writer to produce capacity+8 packets during one copy, so readers converge
/// immediately in practice.
class SnapshotRing {
public:
  explicit SnapshotRing(std::size_t capacity);

  /// Writer side; single producer.
  void push(const telemetry::TimestampedPacket& packet);

  /// The most recent min(capacity, pushed) packets, oldest first. Entries are
  /// always consecutive pushes: time-ordered with no gaps.
  [[nodiscard]] std::vector<telemetry::TimestampedPacket> snapshot() const;

  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] std::uint64_t pushed() const { return head_.load(std::memory_order_acquire); }

private:
  std::size_t capacity_;
  std::vector<telemetry::TimestampedPacket> slots_;
  std::atomic<std::uint64_t> head_{0};
};

/// One simulation tick of a closed-loop trial. The command fields hold what
/// was actually applied during the tick (after actuation latency).
struct TraceTick {
  double session_time = 0.0;
  Eigen::Vector2d position{0.0, 0.0};
  double heading = 0.0;
  double speed = 0.0;
  double steering = 0.0;
  double throttle = 0.0;
  double brake = 0.0;
  double arc_length = 0.0;        ///< centerline station, [0, track length)
  double lateral_offset = 0.0;    ///< signed, + = left
  double outside_distance = 0.0;  ///< max(0, |lateral_offset| - half width)
};

/// Maximal contiguous excursion outside the track bounds.
struct BoundaryFailure {
  double t_start = 0.0;       ///< session time of the first outside tick
  double t_end = 0.0;         ///< session time of the first tick back inside
  double s_start = 0.0;       ///< centerline meters traveled at entry (from trace start)
  double s_end = 0.0;         ///< centerline meters traveled at the last outside tick
  double mean_outside = 0.0;  ///< time-averaged outside_distance, meters
};

struct TrialReport {
  std::vector<double> lap_times;  ///< session seconds per completed lap
  std::size_t successful_laps = 0;
  std::vector<BoundaryFailure> failures;
  double bfs = 0.0;  ///< mean over failures of mean_outside; 0 with no failures
  double tbf = 0.0;  ///< mean start-to-start failure gap, seconds; trial duration with <2 failures
  double dbf = 0.0;  ///< mean start-to-start failure gap, centerline meters; trial distance with <2
  double duration = 0.0;  ///< session seconds covered by the trace
  double distance = 0.0;  ///< centerline meters traveled (wrap-aware)
  double controller_time_mean = 0.0;  ///< wall seconds per controller tick
  double controller_time_max = 0.0;
  bool dnf = false;
  std::string dnf_reason;
  std::vector<TraceTick> trace;
  std::vector<telemetry::TimestampedPacket> log;  ///< the broadcast packets, in order

  [[nodiscard]] std::size_t nbf() const { return failures.size(); }
  [[nodiscard]] double mean_lap_time() const;
  [[nodiscard]] double mean_abs_lateral_offset() const;
};

/// Incremental lap detection from (session_time, centerline station) samples.
/// Progress is unwrapped with shortest-arc increments; a lap completes when
/// accumulated progress crosses the next track-length multiple and progress
/// over the preceding second is monotone (rejects reverse crossings). When the
/// first sample sits on the start/finish station, the trial start counts as
/// lap 0's crossing; otherwise the stretch before the first crossing is an
/// out-lap and is not timed.
class LapTracker {
public:
  LapTracker(double track_length, double start_station, double monotone_window = 1.0);

  /// Returns true when this sample completes a lap.
  bool feed(double session_time, double arc_length);

  [[nodiscard]] const std::vector<double>& lap_times() const { return lap_times_; }
  [[nodiscard]] std::size_t laps() const { return lap_times_.size(); }
  [[nodiscard]] double progress() const { return progress_; }

private:
  double length_;
  double start_station_;
  double window_;
  bool started_ = false;
  double prev_station_ = 0.0;
  double progress_ = 0.0;
  double next_mark_ = 0.0;
  std::optional<double> last_crossing_time_;
  std::vector<double> lap_times_;
  std::deque<std::pair<double, double>> history_;  ///< (time, progress) over the window
};

/// Synchronous controller: one command per telemetry window. The window holds
/// the most recent snapshots, oldest first, and is never empty.
class Controller {
public:
  virtual ~Controller() = default;
  virtual control::ControlCommand tick(std::span<const telemetry::TimestampedPacket> window) = 0;
};

/// Pure Pursuit on the track centerline at a constant target speed. Waypoints
/// are centerline samples ahead of the vehicle, transformed into the local
/// frame of the latest snapshot.
class CenterlinePursuitController : public Controller {
public:
  CenterlinePursuitController(const simenv::Track& track, double target_speed,
                              control::PursuitConfig cfg = {});

  control::ControlCommand tick(std::span<const telemetry::TimestampedPacket> window) override;

private:
  const simenv::Track& track_;
  double target_speed_;
  control::PursuitConfig cfg_;
  double spacing_ = 1.0;  ///< centerline sample spacing, meters
};

/// Replays the actuation stream of a recorded log: at each tick, the command
/// of the newest logged sample at or before the current session time.
class ReplayController : public Controller {
public:
  explicit ReplayController(synclog::StateLog log);

  control::ControlCommand tick(std::span<const telemetry::TimestampedPacket> window) override;

private:
  synclog::StateLog log_;
};

/// Fixed command every tick; handy for fault-injection tests.
class ConstantController : public Controller {
public:
  explicit ConstantController(control::ControlCommand cmd) : cmd_(cmd) {}

  control::ControlCommand tick(std::span<const telemetry::TimestampedPacket>) override {
    return cmd_;
  }

private:
  control::ControlCommand cmd_;
};

/// Command wire format for out-of-process controllers: "DRCB", version u8,
/// then steering/throttle/brake as little-endian f32 (17 bytes).
inline constexpr std::size_t kCommandSize = 17;
inline constexpr std::uint8_t kCommandVersion = 1;
inline constexpr std::uint16_t kDefaultCommandPort = 20778;

std::vector<std::byte> encode_command(const control::ControlCommand& cmd);
control::ControlCommand decode_command(std::span<const std::byte> bytes);

/// Bridges the trial loop to an external agent: every tick the latest
/// snapshot is broadcast over UDP and the newest received DRCB command is
/// applied (sanitized). Coasts until the first command arrives.
class ExternalController : public Controller {
public:
  ExternalController(std::uint16_t command_port, std::string telemetry_host,
                     std::uint16_t telemetry_port);
  ~ExternalController() override;

  ExternalController(const ExternalController&) = delete;
  ExternalController& operator=(const ExternalController&) = delete;

  control::ControlCommand tick(std::span<const telemetry::TimestampedPacket> window) override;

  [[nodiscard]] std::uint16_t command_port() const { return command_port_; }
  [[nodiscard]] std::uint64_t commands_received() const {
    return commands_received_.load(std::memory_order_relaxed);
  }

private:
  void run();

  telemetry::UdpSocket socket_;
  std::uint16_t command_port_;
  telemetry::Broadcaster broadcaster_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> commands_received_{0};
  mutable std::mutex mutex_;
  control::ControlCommand latest_{};
  std::thread thread_;
};

struct RunConfig {
  double tick_rate = 60.0;      ///< Hz
  int lap_budget = 0;           ///< stop after this many laps when > 0
  double max_duration = 0.0;    ///< session seconds; cap when lap_budget unmet
  double latency = 0.0;         ///< actuation delay, seconds
  double latency_jitter = 0.0;  ///< uniform extra delay, seconds; 0 keeps runs deterministic
  std::uint64_t seed = 0;
  std::size_t context = 5;      ///< snapshot window length fed to the controller
  bool reset_each_lap = false;  ///< teleport back to the start pose after each lap
  bool realtime = false;        ///< pace the loop at tick_rate on the wall clock
  double start_speed = 0.0;
  simenv::SessionClock clock{};  ///< maps the tick clock to session time
  simenv::VehicleParams vehicle{};
};

/// Closed-loop trial: steps the bicycle model at tick_rate, feeds telemetry
/// through a SnapshotRing to the controller, and routes commands through a
/// LatencyChannel back to the plant. A controller exception or simulation
/// fault marks the trial DNF with the partial trace kept.
TrialReport run_trial(const simenv::Track& track, Controller& controller, const RunConfig& config);

/// Boundary-failure and lap metrics of a recorded trace. Failures are maximal
/// runs of ticks with outside_distance > 0.
TrialReport compute_metrics(std::span<const TraceTick> trace, const simenv::Track& track);

/// Component-wise root-mean-square error over (steering, throttle) pairs.
std::pair<double, double> rmse_control(std::span<const std::pair<double, double>> pred,
                                       std::span<const std::pair<double, double>> gt);

/// Writes report.csv (per-tick trace) and summary.csv (metrics) into out_dir,
/// plus path.svg (driven path over the centerline) when a track is given.
void emit_report(const TrialReport& report, const std::filesystem::path& out_dir,
                 const simenv::Track* track = nullptr);

/// Steering-ramp latency experiment against a LatencyChannel: command a unit
/// ramp, sample the applied steering at rate_hz, regress. The estimate is the
/// injected delay rounded up to the command grid, so the error is below one
/// period of rate_hz.
double run_latency_experiment(double inject_seconds, double rate_hz, double ramp_start = 0.5,
                              double ramp_duration = 1.0, double total_duration = 2.5);

/// Clock-fit experiment: sample a drifting session clock at rate_hz, with
/// optional Gaussian observation noise, and fit the affine model.
synclog::ClockModel run_clock_experiment(double drift, double offset, std::size_t samples,
                                         double noise_std, std::uint64_t seed = 0,
                                         double rate_hz = 60.0);

}  // namespace deepracing::harness
