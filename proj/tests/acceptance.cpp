// Acceptance suite: exercises every subsystem end to end against pinned
// tolerances and prints one PASS/FAIL line per criterion. The process exit
// code is the number of failed criteria.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "deepracing/curves.hpp"
#include "deepracing/harness.hpp"
#include "deepracing/simenv.hpp"
#include "deepracing/synclog.hpp"
#include "deepracing/telemetry.hpp"

using namespace deepracing;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Criterion {
  std::string name;
  std::function<bool(std::string&)> run;
};

bool check(bool condition, const std::string& label, std::string& detail) {
  if (!condition) {
    if (!detail.empty()) {
      detail += "; ";
    }
    detail += "failed: " + label;
  }
  return condition;
}

// ---------------------------------------------------------------------------
// 1. Clock-model fit: noiseless drifting clock, 10^4 samples, sub-second.
bool criterion_clock(std::string& detail) {
  const double t0 = now_seconds();
  const auto model = harness::run_clock_experiment(0.99999, -1.616876, 10000, 0.0);
  const double elapsed = now_seconds() - t0;

  std::ostringstream os;
  os << "slope_err=" << std::abs(model.slope - 0.99999)
     << " intercept_err=" << std::abs(model.intercept + 1.616876) << " r2=" << model.r_squared
     << " elapsed=" << elapsed << "s";
  detail = os.str();

  bool ok = true;
  ok &= check(std::abs(model.slope - 0.99999) <= 1e-9, "slope within 1e-9", detail);
  ok &= check(std::abs(model.intercept + 1.616876) <= 1e-6, "intercept within 1e-6", detail);
  ok &= check(model.r_squared >= 1.0 - 1e-12, "r^2 >= 1-1e-12", detail);
  ok &= check(model.n_samples == 10000, "10000 samples", detail);
  ok &= check(elapsed < 1.0, "under 1 s", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 2. Latency estimation: 26.79 ms injected; error below one command period.
bool criterion_latency(std::string& detail) {
  const double t0 = now_seconds();
  const double inject = 0.02679;
  const double at60 = harness::run_latency_experiment(inject, 60.0);
  const double at1k = harness::run_latency_experiment(inject, 1000.0);
  const double elapsed = now_seconds() - t0;

  std::ostringstream os;
  os << "est60=" << at60 * 1e3 << "ms err60=" << std::abs(at60 - inject) * 1e3
     << "ms est1k=" << at1k * 1e3 << "ms err1k=" << std::abs(at1k - inject) * 1e3
     << "ms elapsed=" << elapsed << "s";
  detail = os.str();

  bool ok = true;
  ok &= check(std::abs(at60 - inject) <= 1.0 / 60.0, "60 Hz error within 16.7 ms", detail);
  ok &= check(std::abs(at1k - inject) <= 0.002, "1 kHz error within 2 ms", detail);
  ok &= check(elapsed < 5.0, "under 5 s", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 3. Closed loop: five clean pursuit laps on the default oval, bounded error.
bool criterion_closed_loop(std::string& detail) {
  const double t0 = now_seconds();
  const simenv::Track track = simenv::generate_oval_track(300.0, 60.0, 6.0, 2.0);
  harness::CenterlinePursuitController controller(track, 15.0);  // gamma 0.4 default
  harness::RunConfig config;
  config.lap_budget = 5;
  const harness::TrialReport report = harness::run_trial(track, controller, config);
  const double elapsed = now_seconds() - t0;

  std::ostringstream os;
  os << "laps=" << report.successful_laps << " nbf=" << report.nbf()
     << " mean_abs_lat=" << report.mean_abs_lateral_offset() << "m"
     << " mean_lap=" << report.mean_lap_time() << "s elapsed=" << elapsed << "s";
  detail = os.str();

  bool ok = true;
  ok &= check(!report.dnf, "finished", detail);
  ok &= check(report.successful_laps == 5, "5 laps", detail);
  ok &= check(report.nbf() == 0, "no boundary failures", detail);
  ok &= check(report.mean_abs_lateral_offset() <= 0.5, "mean |lateral| <= 0.5 m", detail);
  ok &= check(elapsed < 30.0, "under 30 s", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 4. Curve fidelity: fit round trips and analytic derivatives.
bool criterion_curves(std::string& detail) {
  const double t0 = now_seconds();
  std::mt19937_64 rng(421);
  std::uniform_real_distribution<double> u(-50.0, 50.0);

  double max_cp_err = 0.0;
  const curves::TimeVector t60 = curves::TimeVector::linspace(60);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd cp(6, 2);
    for (int r = 0; r < 6; ++r) {
      cp(r, 0) = u(rng);
      cp(r, 1) = u(rng);
    }
    const curves::BezierCurve curve(cp);
    const curves::BezierCurve refit =
        curves::fit_least_squares(curve.evaluate(t60), t60, curve.degree());
    max_cp_err =
        std::max(max_cp_err, (refit.control_points() - curve.control_points()).cwiseAbs().maxCoeff());
  }

  double max_rel_fd = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int degree = 1 + static_cast<int>(rng() % 8);
    Eigen::MatrixXd cp(degree + 1, 2);
    for (int r = 0; r <= degree; ++r) {
      cp(r, 0) = u(rng);
      cp(r, 1) = u(rng);
    }
    const curves::BezierCurve curve(cp);
    const curves::BezierCurve deriv = curve.derivative();
    const double h = 1e-6;
    for (double s = 0.1; s < 0.95; s += 0.2) {
      const Eigen::RowVectorXd fd = (curve.evaluate_at(s + h) - curve.evaluate_at(s - h)) / (2.0 * h);
      const Eigen::RowVectorXd exact = deriv.evaluate_at(s);
      const double rel = (fd - exact).norm() / std::max(1.0, exact.norm());
      max_rel_fd = std::max(max_rel_fd, rel);
    }
  }
  const double elapsed = now_seconds() - t0;

  std::ostringstream os;
  os << "max_cp_err=" << max_cp_err << " max_fd_rel_err=" << max_rel_fd << " elapsed=" << elapsed
     << "s";
  detail = os.str();

  bool ok = true;
  ok &= check(max_cp_err < 1e-8, "round-trip control points within 1e-8", detail);
  ok &= check(max_rel_fd < 1e-6, "derivative matches finite differences to 1e-6", detail);
  ok &= check(elapsed < 5.0, "under 5 s", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 5. Loss arithmetic: weighted combination and a pure-translation probe.
bool criterion_losses(std::string& detail) {
  const curves::LossWeights weights{};
  const double combined = weights.combine(2.0, 10.0, 20.0);

  // Ground truth = predicted curve translated by (0.3, -0.4): the position
  // and control-point terms both equal the offset norm, velocities match.
  Eigen::MatrixXd cp(4, 2);
  cp << 0.0, 0.0, 1.0, 2.0, 3.0, -1.0, 4.0, 1.0;
  const curves::BezierCurve pred(cp);
  const curves::TimeVector t = curves::TimeVector::linspace(30);
  const double delta_t = 2.0;

  Eigen::MatrixXd gt_points = pred.evaluate(t);
  gt_points.col(0).array() += 0.3;
  gt_points.col(1).array() -= 0.4;
  const Eigen::MatrixXd gt_velocities = pred.derivative().evaluate(t) / delta_t;

  curves::TimeVector seconds(Eigen::VectorXd::LinSpaced(30, 10.0, 10.0 + delta_t));
  const auto loss = curves::bezier_loss(pred, gt_points, gt_velocities, seconds, weights);

  std::ostringstream os;
  os << "combine=" << combined << " position=" << loss.position << " velocity=" << loss.velocity
     << " control_point=" << loss.control_point << " total=" << loss.total;
  detail = os.str();

  bool ok = true;
  ok &= check(std::abs(combined - 4.0) <= 1e-12, "combine(2,10,20) == 4", detail);
  ok &= check(std::abs(loss.position - 0.5) <= 1e-9, "position term == offset norm", detail);
  ok &= check(std::abs(loss.velocity) <= 1e-9, "velocity term vanishes", detail);
  ok &= check(std::abs(loss.control_point - 0.5) <= 1e-9, "control-point term == offset norm",
              detail);
  ok &= check(std::abs(loss.total - 0.525) <= 1e-9, "weighted total", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 6. Telemetry integrity: bit-exact codec at scale plus a paced loopback.
bool criterion_telemetry(std::string& detail) {
  const double t0 = now_seconds();
  std::mt19937_64 rng(8080);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  std::uint64_t mismatches = 0;
  for (int k = 0; k < 100000; ++k) {
    telemetry::TelemetryPacket p;
    p.session_time = 1e4 * u(rng);
    p.steering = static_cast<float>(u(rng));
    p.throttle = static_cast<float>(0.5 + 0.5 * u(rng));
    p.brake = static_cast<float>(0.5 + 0.5 * u(rng));
    for (auto& v : p.position) {
      v = 1e3 * u(rng);
    }
    for (auto& v : p.velocity) {
      v = 1e2 * u(rng);
    }
    const double half = u(rng);
    p.orientation = {std::cos(half), 0.0, 0.0, std::sin(half)};
    p.speed = static_cast<float>(50.0 + 40.0 * u(rng));
    p.lap_distance = static_cast<float>(3000.0 + 2000.0 * u(rng));
    p.lap_number = static_cast<std::uint16_t>(rng());
    p.flags = static_cast<std::uint8_t>(rng());

    const auto bytes = telemetry::encode_packet(p);
    if (bytes.size() != 121) {
      ++mismatches;
      continue;
    }
    const auto q = telemetry::decode_packet(bytes);
    if (telemetry::encode_packet(q) != bytes) {
      ++mismatches;
    }
  }

  // Paced loopback: 60 Hz for 10 seconds on the local stack.
  telemetry::Listener listener("127.0.0.1", 0, 4096);
  telemetry::Broadcaster caster("127.0.0.1", listener.port());
  telemetry::Pacer pacer(60.0);
  const int sent = 600;
  for (int k = 0; k < sent; ++k) {
    pacer.wait();
    telemetry::TelemetryPacket p;
    p.session_time = static_cast<double>(k) / 60.0;
    caster.send(p);
  }
  std::vector<double> arrivals;
  while (auto item = listener.pop(0.25)) {
    arrivals.push_back(item->os_time);
  }
  listener.stop();

  double mean_gap = 0.0;
  if (arrivals.size() >= 2) {
    mean_gap = (arrivals.back() - arrivals.front()) / static_cast<double>(arrivals.size() - 1);
  }
  const double elapsed = now_seconds() - t0;

  std::ostringstream os;
  os << "codec_mismatches=" << mismatches << " delivered=" << arrivals.size() << "/" << sent
     << " mean_gap=" << mean_gap * 1e3 << "ms elapsed=" << elapsed << "s";
  detail = os.str();

  bool ok = true;
  ok &= check(mismatches == 0, "100000 packets round trip bit-exactly", detail);
  ok &= check(arrivals.size() >= 594, "at least 99% of packets delivered", detail);
  ok &= check(arrivals.size() >= 2 && std::abs(mean_gap - 1.0 / 60.0) <= 0.005,
              "mean inter-arrival within 5 ms of the 60 Hz period", detail);
  ok &= check(caster.send_failures() == 0, "no send failures", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 7. Boundary metrics: exact agreement with an independent brute-force pass.
struct OracleFailure {
  double t_start, t_end, s_start, s_end, mean_outside;
};

bool criterion_metrics(std::string& detail) {
  const simenv::Track track = simenv::generate_oval_track(200.0, 50.0, 6.0, 1.0);
  const double length = track.length();
  std::mt19937_64 rng(1617);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::uint64_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    std::vector<harness::TraceTick> trace;
    double t = u(rng);
    double station = length * u(rng);
    int outside_left = 0;
    for (std::size_t k = 0; k < n; ++k) {
      t += 0.005 + 0.1 * u(rng);
      station = std::fmod(station + 0.3 * length * u(rng), length);
      if (outside_left == 0 && u(rng) < 0.2) {
        outside_left = 1 + static_cast<int>(rng() % 8);
      }
      harness::TraceTick tick;
      tick.session_time = t;
      tick.arc_length = station;
      if (outside_left > 0) {
        tick.outside_distance = 0.05 + 2.0 * u(rng);
        --outside_left;
      }
      trace.push_back(tick);
    }

    // Brute-force re-derivation in the same arithmetic order.
    std::vector<double> progress(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      double d = trace[i].arc_length - trace[i - 1].arc_length;
      if (d < -0.5 * length) {
        d += length;
      } else if (d > 0.5 * length) {
        d -= length;
      }
      progress[i] = progress[i - 1] + d;
    }
    const double duration = trace[n - 1].session_time - trace[0].session_time;
    const double distance = progress[n - 1];
    const double mean_dt = n >= 2 ? duration / static_cast<double>(n - 1) : 1.0 / 60.0;
    std::vector<OracleFailure> failures;
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
      failures.push_back(OracleFailure{
          trace[i].session_time,
          j < n ? trace[j].session_time : trace[j - 1].session_time + mean_dt,
          progress[i],
          progress[j - 1],
          sum / static_cast<double>(j - i),
      });
      i = j;
    }
    double bfs = 0.0;
    if (!failures.empty()) {
      double s = 0.0;
      for (const auto& f : failures) {
        s += f.mean_outside;
      }
      bfs = s / static_cast<double>(failures.size());
    }
    double tbf = duration;
    double dbf = distance;
    if (failures.size() >= 2) {
      double ts = 0.0;
      double ss = 0.0;
      for (std::size_t i = 0; i + 1 < failures.size(); ++i) {
        ts += failures[i + 1].t_start - failures[i].t_start;
        ss += failures[i + 1].s_start - failures[i].s_start;
      }
      tbf = ts / static_cast<double>(failures.size() - 1);
      dbf = ss / static_cast<double>(failures.size() - 1);
    }

    const harness::TrialReport report = harness::compute_metrics(trace, track);
    bool same = report.nbf() == failures.size() && report.bfs == bfs && report.tbf == tbf &&
                report.dbf == dbf && report.duration == duration && report.distance == distance;
    for (std::size_t i = 0; same && i < failures.size(); ++i) {
      same = report.failures[i].t_start == failures[i].t_start &&
             report.failures[i].t_end == failures[i].t_end &&
             report.failures[i].s_start == failures[i].s_start &&
             report.failures[i].s_end == failures[i].s_end &&
             report.failures[i].mean_outside == failures[i].mean_outside;
    }
    if (!same) {
      ++mismatches;
    }
  }

  // Deterministic cross-check: three excursions of constant depth 2.
  std::vector<harness::TraceTick> synthetic;
  for (int k = 0; k < 60; ++k) {
    harness::TraceTick tick;
    tick.session_time = 0.1 * k;
    tick.arc_length = std::fmod(2.0 * k, length);
    const bool outside = (k >= 10 && k <= 12) || (k >= 30 && k <= 31) || k == 50;
    tick.outside_distance = outside ? 2.0 : 0.0;
    synthetic.push_back(tick);
  }
  const harness::TrialReport synth = harness::compute_metrics(synthetic, track);

  std::ostringstream os;
  os << "random_mismatches=" << mismatches << "/1000 synthetic_nbf=" << synth.nbf()
     << " synthetic_bfs=" << synth.bfs;
  detail = os.str();

  bool ok = true;
  ok &= check(mismatches == 0, "1000 random traces agree exactly", detail);
  ok &= check(synth.nbf() == 3, "three excursions counted", detail);
  ok &= check(synth.bfs == 2.0, "mean severity exactly 2.0", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 8. Dataset extraction: straight-line labels in the local frame.
bool criterion_dataset(std::string& detail) {
  std::vector<telemetry::TimestampedPacket> packets;
  const double speed = 20.0;
  for (int k = 0; k <= 200; ++k) {
    const double t = static_cast<double>(k) / 20.0;
    telemetry::TimestampedPacket ts;
    ts.os_time = t;
    ts.packet.session_time = t;
    ts.packet.position = {speed * t, 0.0, 0.0};
    ts.packet.velocity = {speed, 0.0, 0.0};
    ts.packet.speed = static_cast<float>(speed);
    packets.push_back(ts);
  }
  const synclog::StateLog log = synclog::StateLog::from_packets(std::move(packets));
  const int points = 60;
  const double horizon = 1.4;
  const auto records = synclog::extract_label_pairs(log, 5, points, horizon, 5);

  double max_y = 0.0;
  double max_span_err = 0.0;
  double max_fit_err = 0.0;
  const curves::TimeVector t60 = curves::TimeVector::linspace(points);
  for (const auto& record : records) {
    for (int k = 0; k < points; ++k) {
      max_y = std::max(max_y, std::abs(record.future_waypoints(k, 1)));
    }
    max_span_err = std::max(
        max_span_err, std::abs(record.future_waypoints(points - 1, 0) - speed * horizon));
    const Eigen::MatrixXd reproduced = record.fitted_curve.evaluate(t60);
    max_fit_err =
        std::max(max_fit_err, (reproduced - record.future_waypoints).cwiseAbs().maxCoeff());
  }

  std::ostringstream os;
  os << "records=" << records.size() << " max|y|=" << max_y << " span_err=" << max_span_err
     << " fit_err=" << max_fit_err;
  detail = os.str();

  bool ok = true;
  ok &= check(!records.empty(), "records extracted", detail);
  ok &= check(static_cast<int>(records.front().future_waypoints.rows()) == points,
              "60 waypoints per record", detail);
  ok &= check(max_y < 1e-9, "lateral label error below 1e-9", detail);
  ok &= check(max_span_err <= 1e-6, "labels span the full 1.4 s horizon", detail);
  ok &= check(max_fit_err < 1e-8, "fitted curves reproduce the labels within 1e-8", detail);
  return ok;
}

// ---------------------------------------------------------------------------
// 9. Snapshot ring under contention: a million pushes, no torn windows.
bool criterion_ring(std::string& detail) {
  const double t0 = now_seconds();
  harness::SnapshotRing ring(32);
  constexpr std::uint64_t kTotal = 1000000;
  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> violations{0};
  std::atomic<std::uint64_t> reads{0};

  auto reader = [&] {
    double last_tail = -1.0;
    bool final_pass = false;
    while (true) {
      if (done.load(std::memory_order_acquire)) {
        if (final_pass) {
          break;
        }
        final_pass = true;  // one last read after the writer finishes
      }
      const auto snap = ring.snapshot();
      if (snap.empty()) {
        continue;
      }
      reads.fetch_add(1, std::memory_order_relaxed);
      for (std::size_t i = 1; i < snap.size(); ++i) {
        if (snap[i].packet.session_time != snap[i - 1].packet.session_time + 1.0) {
          violations.fetch_add(1, std::memory_order_relaxed);
        }
      }
      if (snap.back().packet.session_time < last_tail) {
        violations.fetch_add(1, std::memory_order_relaxed);
      }
      last_tail = snap.back().packet.session_time;
    }
  };

  std::thread r1(reader);
  std::thread r2(reader);
  std::thread writer([&] {
    telemetry::TimestampedPacket ts;
    for (std::uint64_t k = 0; k < kTotal; ++k) {
      ts.packet.session_time = static_cast<double>(k);
      ts.os_time = static_cast<double>(k);
      ring.push(ts);
    }
    done.store(true, std::memory_order_release);
  });
  writer.join();
  r1.join();
  r2.join();
  const double elapsed = now_seconds() - t0;

  const auto final_snap = ring.snapshot();
  const bool tail_ok = !final_snap.empty() &&
                       final_snap.back().packet.session_time == static_cast<double>(kTotal - 1);

  std::ostringstream os;
  os << "pushes=" << ring.pushed() << " reads=" << reads.load() << " violations=" << violations.load()
     << " elapsed=" << elapsed << "s";
  detail = os.str();

  bool ok = true;
  ok &= check(ring.pushed() == kTotal, "all pushes landed", detail);
  ok &= check(violations.load() == 0, "no gapped or out-of-order windows", detail);
  ok &= check(reads.load() > 0, "readers made progress", detail);
  ok &= check(tail_ok, "final window ends at the last push", detail);
  return ok;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"clock model fit recovers drift and offset", criterion_clock},
      {"latency estimate within one command period", criterion_latency},
      {"pursuit completes 5 clean laps on the oval", criterion_closed_loop},
      {"curve fits round trip and derivatives check out", criterion_curves},
      {"trajectory loss arithmetic is exact", criterion_losses},
      {"telemetry codec is bit-exact and loopback holds rate", criterion_telemetry},
      {"boundary metrics match a brute-force oracle", criterion_metrics},
      {"dataset labels are exact in the local frame", criterion_dataset},
      {"snapshot ring is consistent under contention", criterion_ring},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) {
      ++failures;
    }
    std::printf("%s  %s  [%s]\n", ok ? "PASS" : "FAIL", criterion.name.c_str(), detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures),
              criteria.size());
  return failures;
}
