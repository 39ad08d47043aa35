#include "deepracing/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace deepracing::harness {

SnapshotRing::SnapshotRing(std::size_t capacity)
    : capacity_(capacity), slots_(2 * capacity + 8) {
  if (capacity == 0) {
    throw std::invalid_argument("ring capacity must be positive");
  }
}

void SnapshotRing::push(const telemetry::TimestampedPacket& packet) {
  const std::uint64_t h = head_.load(std::memory_order_relaxed);
  slots_[h % slots_.size()] = packet;
  head_.store(h + 1, std::memory_order_release);
}

std::vector<telemetry::TimestampedPacket> SnapshotRing::snapshot() const {
  const std::uint64_t m = slots_.size();
  std::vector<telemetry::TimestampedPacket> out;
  for (;;) {
    const std::uint64_t h1 = head_.load(std::memory_order_acquire);
    const std::uint64_t n = std::min<std::uint64_t>(capacity_, h1);
    out.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      out[k] = slots_[(h1 - n + k) % m];
    }
    // The copy is valid iff the writer has not started recycling the oldest
    // copied slot, i.e. it produced fewer than m - n new packets meanwhile.
    const std::uint64_t h2 = head_.load(std::memory_order_acquire);
    if (h2 < h1 - n + m) {
      return out;
    }
  }
}

double TrialReport::mean_lap_time() const {
  if (lap_times.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (double t : lap_times) {
    sum += t;
  }
  return sum / static_cast<double>(lap_times.size());
}

double TrialReport::mean_abs_lateral_offset() const {
  if (trace.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (const auto& tick : trace) {
    sum += std::abs(tick.lateral_offset);
  }
  return sum / static_cast<double>(trace.size());
}

LapTracker::LapTracker(double track_length, double start_station, double monotone_window)
    : length_(track_length), start_station_(start_station), window_(monotone_window) {
  if (!(track_length > 0.0)) {
    throw std::invalid_argument("track length must be positive");
  }
}

bool LapTracker::feed(double session_time, double arc_length) {
  if (!started_) {
    started_ = true;
    prev_station_ = arc_length;
    double rel = std::fmod(arc_length - start_station_, length_);
    if (rel < 0.0) {
      rel += length_;
    }
    const bool on_line = rel < 1e-6 || length_ - rel < 1e-6;
    next_mark_ = on_line ? length_ : length_ - rel;
    if (on_line) {
      last_crossing_time_ = session_time;  // the trial starts on the line
    }
  } else {
    double d = arc_length - prev_station_;
    if (d < -0.5 * length_) {
      d += length_;
    } else if (d > 0.5 * length_) {
      d -= length_;
    }
    progress_ += d;
    prev_station_ = arc_length;
  }

  history_.emplace_back(session_time, progress_);
  while (history_.size() > 1 && history_.front().first < session_time - window_) {
    history_.pop_front();
  }

  bool completed = false;
  while (progress_ >= next_mark_) {
    bool monotone = history_.back().second > history_.front().second;
    for (std::size_t i = 0; monotone && i + 1 < history_.size(); ++i) {
      monotone = history_[i + 1].second >= history_[i].second - 1e-9;
    }
    if (!monotone) {
      break;  // reverse crossing; re-test on later samples
    }
    if (last_crossing_time_) {
      lap_times_.push_back(session_time - *last_crossing_time_);
      completed = true;
    }
    last_crossing_time_ = session_time;
    next_mark_ += length_;
  }
  return completed;
}

CenterlinePursuitController::CenterlinePursuitController(const simenv::Track& track,
                                                         double target_speed,
                                                         control::PursuitConfig cfg)
    : track_(track), target_speed_(target_speed), cfg_(cfg) {
  cfg_.validate();
  if (!(target_speed > 0.0)) {
    throw std::invalid_argument("target speed must be positive");
  }
}

control::ControlCommand CenterlinePursuitController::tick(
    std::span<const telemetry::TimestampedPacket> window) {
  if (window.empty()) {
    return {};
  }
  const auto& p = window.back().packet;
  const Eigen::Vector2d pos{p.position[0], p.position[1]};
  const auto& q = p.orientation;
  const double yaw =
      std::atan2(2.0 * (q[0] * q[3] + q[1] * q[2]), 1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3]));
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);

  const auto loc = track_.localize(pos);
  const int count = static_cast<int>(std::ceil(cfg_.lookahead_max / spacing_)) + 2;
  std::vector<Eigen::Vector2d> waypoints(static_cast<std::size_t>(count));
  std::vector<double> speeds(static_cast<std::size_t>(count), target_speed_);
  for (int k = 0; k < count; ++k) {
    const Eigen::Vector2d world =
        track_.point_at(loc.arc_length + static_cast<double>(k + 1) * spacing_);
    const Eigen::Vector2d d = world - pos;
    waypoints[static_cast<std::size_t>(k)] = {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
  }
  return control::follow_waypoints(waypoints, speeds, p.speed, cfg_);
}

ReplayController::ReplayController(synclog::StateLog log) : log_(std::move(log)) {
  if (log_.size() == 0) {
    throw InsufficientDataError("replay log is empty");
  }
}

control::ControlCommand ReplayController::tick(
    std::span<const telemetry::TimestampedPacket> window) {
  if (window.empty()) {
    return {};
  }
  const double now = window.back().packet.session_time;
  const auto packets = log_.packets();
  auto it = std::upper_bound(packets.begin(), packets.end(), now,
                             [](double t, const auto& e) { return t < e.packet.session_time; });
  if (it == packets.begin()) {
    return {};  // before the first logged sample
  }
  const auto& p = std::prev(it)->packet;
  control::ControlCommand cmd{p.steering, p.throttle, p.brake};
  return cmd.sanitized();
}

namespace {

constexpr std::array<std::byte, 4> kCommandMagic{std::byte{'D'}, std::byte{'R'}, std::byte{'C'},
                                                 std::byte{'B'}};

void put_f32(std::vector<std::byte>& out, std::size_t offset, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (std::size_t i = 0; i < 4; ++i) {
    out[offset + i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFF);
  }
}

float get_f32(std::span<const std::byte> in, std::size_t offset) {
  std::uint32_t bits = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<std::byte> encode_command(const control::ControlCommand& cmd) {
  std::vector<std::byte> out(kCommandSize);
  std::memcpy(out.data(), kCommandMagic.data(), kCommandMagic.size());
  out[4] = static_cast<std::byte>(kCommandVersion);
  put_f32(out, 5, static_cast<float>(cmd.steering));
  put_f32(out, 9, static_cast<float>(cmd.throttle));
  put_f32(out, 13, static_cast<float>(cmd.brake));
  return out;
}

control::ControlCommand decode_command(std::span<const std::byte> bytes) {
  if (bytes.size() != kCommandSize) {
    throw TruncationError("command datagram must be " + std::to_string(kCommandSize) + " bytes");
  }
  if (std::memcmp(bytes.data(), kCommandMagic.data(), kCommandMagic.size()) != 0) {
    throw ProtocolError("bad command magic");
  }
  if (std::to_integer<std::uint8_t>(bytes[4]) != kCommandVersion) {
    throw UnsupportedVersionError("unsupported command version");
  }
  control::ControlCommand cmd;
  cmd.steering = get_f32(bytes, 5);
  cmd.throttle = get_f32(bytes, 9);
  cmd.brake = get_f32(bytes, 13);
  return cmd;
}

ExternalController::ExternalController(std::uint16_t command_port, std::string telemetry_host,
                                       std::uint16_t telemetry_port)
    : command_port_(command_port), broadcaster_(std::move(telemetry_host), telemetry_port) {
  socket_.bind("127.0.0.1", command_port);
  command_port_ = socket_.local_port();
  thread_ = std::thread(&ExternalController::run, this);
}

ExternalController::~ExternalController() {
  stop_.store(true, std::memory_order_relaxed);
  if (thread_.joinable()) {
    thread_.join();
  }
}

void ExternalController::run() {
  while (!stop_.load(std::memory_order_relaxed)) {
    auto datagram = socket_.receive(0.05);
    if (!datagram) {
      continue;
    }
    try {
      const control::ControlCommand cmd = decode_command(*datagram).sanitized();
      std::lock_guard<std::mutex> lock(mutex_);
      latest_ = cmd;
      commands_received_.fetch_add(1, std::memory_order_relaxed);
    } catch (const ProtocolError&) {
      // malformed command datagrams are dropped
    }
  }
}

control::ControlCommand ExternalController::tick(
    std::span<const telemetry::TimestampedPacket> window) {
  if (!window.empty()) {
    broadcaster_.send(window.back().packet);
  }
  std::lock_guard<std::mutex> lock(mutex_);
  return latest_;
}

TrialReport run_trial(const simenv::Track& track, Controller& controller,
                      const RunConfig& config) {
  if (!(config.tick_rate > 0.0)) {
    throw std::invalid_argument("tick rate must be positive");
  }
  if (config.latency < 0.0 || config.latency_jitter < 0.0) {
    throw std::invalid_argument("latency must be non-negative");
  }
  const double dt = 1.0 / config.tick_rate;
  double cap = config.max_duration;
  if (cap <= 0.0 && config.lap_budget > 0) {
    // Generous default: half walking pace around the budgeted laps.
    cap = static_cast<double>(config.lap_budget) * track.length() / 2.0 + 60.0;
  }

  TrialReport report;
  simenv::VehicleState state;
  const double start_station = track.start_finish_arc_length();
  state.position = track.point_at(start_station);
  state.heading = track.heading_at(start_station);
  state.speed = config.start_speed;

  SnapshotRing ring(config.context == 0 ? 1 : config.context);
  simenv::LatencyChannel channel(config.latency);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> jitter(0.0, config.latency_jitter);
  LapTracker laps(track.length(), start_station);
  std::optional<telemetry::Pacer> pacer;
  if (config.realtime) {
    pacer.emplace(config.tick_rate);
  }

  control::ControlCommand applied{};
  std::uint16_t lap_number = 0;
  const double session0 = config.clock.session_now(0.0);
  double ctrl_time_sum = 0.0;
  double ctrl_time_max = 0.0;
  std::uint64_t ctrl_ticks = 0;

  for (std::uint64_t k = 0;; ++k) {
    const double os_time = static_cast<double>(k) * dt;
    const double session_time = config.clock.session_now(os_time);
    if (session_time - session0 >= cap - 1e-12) {
      if (config.lap_budget > 0) {
        report.dnf = true;
        report.dnf_reason = "lap budget not reached before the duration cap";
      }
      break;
    }
    if (pacer) {
      pacer->wait();
    }

    const auto loc = track.localize(state.position);
    telemetry::TimestampedPacket ts;
    ts.os_time = os_time;
    ts.packet.session_time = session_time;
    ts.packet.steering = static_cast<float>(applied.steering);
    ts.packet.throttle = static_cast<float>(applied.throttle);
    ts.packet.brake = static_cast<float>(applied.brake);
    ts.packet.position = {state.position.x(), state.position.y(), 0.0};
    const Eigen::Vector2d vel = state.velocity();
    ts.packet.velocity = {vel.x(), vel.y(), 0.0};
    ts.packet.orientation = state.orientation();
    ts.packet.speed = static_cast<float>(state.speed);
    ts.packet.lap_distance = static_cast<float>(loc.arc_length);
    ts.packet.lap_number = lap_number;
    ring.push(ts);
    report.log.push_back(ts);

    control::ControlCommand cmd;
    const double ctrl_start = telemetry::monotonic_now();
    try {
      cmd = controller.tick(ring.snapshot());
    } catch (const std::exception& e) {
      report.dnf = true;
      report.dnf_reason = std::string("controller fault: ") + e.what();
      break;
    }
    const double ctrl_elapsed = telemetry::monotonic_now() - ctrl_start;
    ctrl_time_sum += ctrl_elapsed;
    ctrl_time_max = std::max(ctrl_time_max, ctrl_elapsed);
    ++ctrl_ticks;
    const double extra = config.latency_jitter > 0.0 ? jitter(rng) : 0.0;
    channel.actuate(cmd.sanitized(), os_time + extra);
    if (auto released = channel.poll(os_time)) {
      applied = *released;
    }

    TraceTick tick;
    tick.session_time = session_time;
    tick.position = state.position;
    tick.heading = state.heading;
    tick.speed = state.speed;
    tick.steering = applied.steering;
    tick.throttle = applied.throttle;
    tick.brake = applied.brake;
    tick.arc_length = loc.arc_length;
    tick.lateral_offset = loc.lateral_offset;
    tick.outside_distance = loc.outside_distance;
    report.trace.push_back(tick);

    if (laps.feed(session_time, loc.arc_length)) {
      lap_number = static_cast<std::uint16_t>(laps.laps());
      if (config.reset_each_lap) {
        state.position = track.point_at(start_station);
        state.heading = track.heading_at(start_station);
      }
      if (config.lap_budget > 0 &&
          laps.laps() >= static_cast<std::size_t>(config.lap_budget)) {
        break;
      }
    }

    try {
      state = simenv::step_bicycle(state, applied, dt, config.vehicle);
    } catch (const SimulationFault& e) {
      report.dnf = true;
      report.dnf_reason = std::string("simulation fault: ") + e.what();
      break;
    }
  }

  if (ctrl_ticks > 0) {
    report.controller_time_mean = ctrl_time_sum / static_cast<double>(ctrl_ticks);
    report.controller_time_max = ctrl_time_max;
  }

  TrialReport metrics = compute_metrics(report.trace, track);
  report.lap_times = std::move(metrics.lap_times);
  report.successful_laps = metrics.successful_laps;
  report.failures = std::move(metrics.failures);
  report.bfs = metrics.bfs;
  report.tbf = metrics.tbf;
  report.dbf = metrics.dbf;
  report.duration = metrics.duration;
  report.distance = metrics.distance;
  return report;
}

TrialReport compute_metrics(std::span<const TraceTick> trace, const simenv::Track& track) {
  TrialReport report;
  if (trace.empty()) {
    return report;
  }
  const std::size_t n = trace.size();
  const double length = track.length();

  // Centerline progress, unwrapped with shortest-arc increments.
  std::vector<double> progress(n);
  progress[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    double d = trace[i].arc_length - trace[i - 1].arc_length;
    if (d < -0.5 * length) {
      d += length;
    } else if (d > 0.5 * length) {
      d -= length;
    }
    progress[i] = progress[i - 1] + d;
  }
  report.duration = trace[n - 1].session_time - trace[0].session_time;
  report.distance = progress[n - 1];
  const double mean_dt =
      n >= 2 ? report.duration / static_cast<double>(n - 1) : 1.0 / 60.0;

  for (std::size_t i = 0; i < n;) {
    if (!(trace[i].outside_distance > 0.0)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double sum = 0.0;
    while (j < n && trace[j].outside_distance > 0.0) {
      sum += trace[j].outside_distance;
      ++j;
    }
    BoundaryFailure f;
    f.t_start = trace[i].session_time;
    f.t_end = j < n ? trace[j].session_time : trace[j - 1].session_time + mean_dt;
    f.s_start = progress[i];
    f.s_end = progress[j - 1];
    f.mean_outside = sum / static_cast<double>(j - i);
    report.failures.push_back(f);
    i = j;
  }

  const std::size_t nbf = report.failures.size();
  if (nbf > 0) {
    double sum = 0.0;
    for (const auto& f : report.failures) {
      sum += f.mean_outside;
    }
    report.bfs = sum / static_cast<double>(nbf);
  }
  if (nbf >= 2) {
    double tsum = 0.0;
    double ssum = 0.0;
    for (std::size_t i = 0; i + 1 < nbf; ++i) {
      tsum += report.failures[i + 1].t_start - report.failures[i].t_start;
      ssum += report.failures[i + 1].s_start - report.failures[i].s_start;
    }
    report.tbf = tsum / static_cast<double>(nbf - 1);
    report.dbf = ssum / static_cast<double>(nbf - 1);
  } else {
    report.tbf = report.duration;
    report.dbf = report.distance;
  }

  LapTracker laps(length, track.start_finish_arc_length());
  for (std::size_t i = 0; i < n; ++i) {
    laps.feed(trace[i].session_time, trace[i].arc_length);
  }
  report.lap_times = laps.lap_times();
  report.successful_laps = report.lap_times.size();
  return report;
}

std::pair<double, double> rmse_control(std::span<const std::pair<double, double>> pred,
                                       std::span<const std::pair<double, double>> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("prediction and ground truth lengths differ");
  }
  if (pred.empty()) {
    throw std::invalid_argument("need at least one sample");
  }
  double sq_steer = 0.0;
  double sq_throttle = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double ds = pred[i].first - gt[i].first;
    const double dr = pred[i].second - gt[i].second;
    sq_steer += ds * ds;
    sq_throttle += dr * dr;
  }
  const double inv = 1.0 / static_cast<double>(pred.size());
  return {std::sqrt(sq_steer * inv), std::sqrt(sq_throttle * inv)};
}

namespace {

void write_path_svg(const TrialReport& report, const simenv::Track& track,
                    const std::filesystem::path& path) {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  auto grow = [&](const Eigen::Vector2d& p) {
    min_x = std::min(min_x, p.x());
    min_y = std::min(min_y, p.y());
    max_x = std::max(max_x, p.x());
    max_y = std::max(max_y, p.y());
  };
  for (const auto& p : track.centerline()) {
    grow(p);
  }
  for (const auto& tick : report.trace) {
    grow(tick.position);
  }
  const double margin = 2.0 * track.half_width() + 5.0;
  min_x -= margin;
  min_y -= margin;
  max_x += margin;
  max_y += margin;
  const double scale = 900.0 / std::max(max_x - min_x, max_y - min_y);
  const double width = (max_x - min_x) * scale;
  const double height = (max_y - min_y) * scale;
  auto map = [&](const Eigen::Vector2d& p) {
    return Eigen::Vector2d{(p.x() - min_x) * scale, (max_y - p.y()) * scale};
  };

  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write SVG: " + path.string());
  }
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <polyline fill=\"none\" stroke=\"#999999\" stroke-width=\""
      << 2.0 * track.half_width() * scale << "\" stroke-opacity=\"0.35\" points=\"";
  for (const auto& p : track.centerline()) {
    const Eigen::Vector2d m = map(p);
    out << m.x() << "," << m.y() << " ";
  }
  out << "\"/>\n";
  out << "  <polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"";
  for (const auto& tick : report.trace) {
    const Eigen::Vector2d m = map(tick.position);
    out << m.x() << "," << m.y() << " ";
  }
  out << "\"/>\n";
  out << "</svg>\n";
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace

void emit_report(const TrialReport& report, const std::filesystem::path& out_dir,
                 const simenv::Track* track) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory: " + out_dir.string());
  }

  {
    std::ofstream out(out_dir / "report.csv");
    if (!out) {
      throw IoError("cannot write report.csv in " + out_dir.string());
    }
    out.precision(12);
    out << "session_time,x,y,speed,steering,throttle,brake,lateral_offset,outside_distance\n";
    for (const auto& tick : report.trace) {
      out << tick.session_time << "," << tick.position.x() << "," << tick.position.y() << ","
          << tick.speed << "," << tick.steering << "," << tick.throttle << "," << tick.brake << ","
          << tick.lateral_offset << "," << tick.outside_distance << "\n";
    }
    if (!out) {
      throw IoError("write failed: report.csv");
    }
  }
  {
    std::ofstream out(out_dir / "summary.csv");
    if (!out) {
      throw IoError("cannot write summary.csv in " + out_dir.string());
    }
    out.precision(12);
    out << "laps,mean_lap_time,NBF,BFS,TBF,DBF,dnf\n";
    out << report.successful_laps << "," << report.mean_lap_time() << "," << report.nbf() << ","
        << report.bfs << "," << report.tbf << "," << report.dbf << "," << (report.dnf ? 1 : 0)
        << "\n";
    if (!out) {
      throw IoError("write failed: summary.csv");
    }
  }
  if (track != nullptr) {
    write_path_svg(report, *track, out_dir / "path.svg");
  }
}

double run_latency_experiment(double inject_seconds, double rate_hz, double ramp_start,
                              double ramp_duration, double total_duration) {
  if (!(rate_hz > 0.0) || inject_seconds < 0.0 || !(ramp_duration > 0.0)) {
    throw std::invalid_argument("invalid latency experiment parameters");
  }
  if (total_duration < ramp_start + ramp_duration + inject_seconds) {
    throw std::invalid_argument("experiment too short to observe the full ramp");
  }
  const double dt = 1.0 / rate_hz;
  simenv::LatencyChannel channel(inject_seconds);
  control::ControlCommand applied{};
  std::vector<std::pair<double, double>> samples;
  for (std::uint64_t k = 0; static_cast<double>(k) * dt <= total_duration + 1e-12; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double commanded = std::clamp((t - ramp_start) / ramp_duration, 0.0, 1.0);
    channel.actuate(control::ControlCommand{commanded, 0.0, 0.0}, t);
    if (auto released = channel.poll(t)) {
      applied = *released;
    }
    samples.emplace_back(t, applied.steering);
  }
  return synclog::measure_latency(samples, ramp_start);
}

synclog::ClockModel run_clock_experiment(double drift, double offset, std::size_t samples,
                                         double noise_std, std::uint64_t seed, double rate_hz) {
  if (!(rate_hz > 0.0)) {
    throw std::invalid_argument("sample rate must be positive");
  }
  const simenv::SessionClock clock{drift, offset};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double os_time = static_cast<double>(k) / rate_hz;
    double session_time = clock.session_now(os_time);
    if (noise_std > 0.0) {
      session_time += noise(rng);
    }
    pairs.emplace_back(os_time, session_time);
  }
  return synclog::fit_clock_model(pairs);
}

}  // namespace deepracing::harness
