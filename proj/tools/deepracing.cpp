// Command-line front end: closed-loop trials, clock/latency experiments,
// dataset extraction, and curve fitting.

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "deepracing/harness.hpp"

namespace dr = deepracing;

namespace {

struct RunOptions {
  std::string track = "oval";
  std::string controller = "pure-pursuit-centerline";
  double gamma = 0.4;
  double speed = 15.0;
  int laps = 5;
  double duration = 0.0;
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  std::uint64_t seed = 0;
  double rate = 60.0;
  double drift = 1.0;
  double offset = 0.0;
  std::size_t context = 5;
  bool realtime = false;
  std::string out = "out";
  std::string log;
  std::string replay_log;
  std::uint16_t command_port = dr::harness::kDefaultCommandPort;
  std::string telemetry_addr;
  double oval_straight = 300.0;
  double oval_radius = 60.0;
  double oval_half_width = 6.0;
  double oval_spacing = 2.0;
};

dr::simenv::Track resolve_track(const RunOptions& opt) {
  if (opt.track == "oval") {
    return dr::simenv::generate_oval_track(opt.oval_straight, opt.oval_radius,
                                           opt.oval_half_width, opt.oval_spacing);
  }
  return dr::simenv::Track::load(opt.track);
}

int cmd_run(const RunOptions& opt) {
  const dr::simenv::Track track = resolve_track(opt);

  std::unique_ptr<dr::harness::Controller> controller;
  if (opt.controller == "pure-pursuit-centerline") {
    dr::control::PursuitConfig cfg;
    cfg.gamma = opt.gamma;
    controller = std::make_unique<dr::harness::CenterlinePursuitController>(track, opt.speed, cfg);
  } else if (opt.controller == "replay") {
    if (opt.replay_log.empty()) {
      throw std::invalid_argument("the replay controller needs --replay-log");
    }
    controller =
        std::make_unique<dr::harness::ReplayController>(dr::synclog::StateLog::load(opt.replay_log));
  } else {
    auto [host, port] = opt.telemetry_addr.empty()
                            ? dr::telemetry::default_telemetry_addr()
                            : dr::telemetry::parse_addr(opt.telemetry_addr);
    controller =
        std::make_unique<dr::harness::ExternalController>(opt.command_port, host, port);
  }

  dr::harness::RunConfig config;
  config.tick_rate = opt.rate;
  config.lap_budget = opt.duration > 0.0 ? 0 : opt.laps;
  config.max_duration = opt.duration;
  config.latency = opt.latency_ms / 1000.0;
  config.latency_jitter = opt.jitter_ms / 1000.0;
  config.seed = opt.seed;
  config.context = opt.context;
  config.realtime = opt.realtime;
  config.clock = dr::simenv::SessionClock{opt.drift, opt.offset};

  const dr::harness::TrialReport report = dr::harness::run_trial(track, *controller, config);
  dr::harness::emit_report(report, opt.out, &track);
  if (!opt.log.empty()) {
    dr::synclog::StateLog::from_packets(report.log).save(opt.log);
  }

  std::cout << std::setprecision(6) << std::fixed;
  std::cout << "laps=" << report.successful_laps << " mean_lap_time=" << report.mean_lap_time()
            << " NBF=" << report.nbf() << " BFS=" << report.bfs << " TBF=" << report.tbf
            << " DBF=" << report.dbf << " dnf=" << (report.dnf ? 1 : 0) << "\n";
  if (report.dnf) {
    std::cout << "# dnf: " << report.dnf_reason << "\n";
  }
  std::cout << "controller_mean_ms=" << report.controller_time_mean * 1000.0
            << " controller_max_ms=" << report.controller_time_max * 1000.0
            << " budget_ms=" << 1000.0 / opt.rate << "\n";
  std::cout << "wrote " << opt.out << "/report.csv " << opt.out << "/summary.csv " << opt.out
            << "/path.svg";
  if (!opt.log.empty()) {
    std::cout << " " << opt.log;
  }
  std::cout << "\n";
  return 0;
}

int cmd_clock_test(double drift, double offset, std::size_t samples, double noise,
                   std::uint64_t seed, double rate) {
  const dr::synclog::ClockModel model =
      dr::harness::run_clock_experiment(drift, offset, samples, noise, seed, rate);
  std::cout << std::setprecision(12) << "slope=" << model.slope
            << " intercept=" << model.intercept << " r_squared=" << model.r_squared
            << " n=" << model.n_samples << "\n";
  return 0;
}

int cmd_latency_test(double inject_ms, double rate) {
  const double measured = dr::harness::run_latency_experiment(inject_ms / 1000.0, rate);
  std::cout << std::setprecision(6) << std::fixed << "latency_ms=" << measured * 1000.0 << "\n";
  return 0;
}

int cmd_dataset(const std::string& log_path, int context, int points, double horizon, int degree,
                const std::string& out) {
  const dr::synclog::StateLog log = dr::synclog::StateLog::load(log_path);
  const auto records = dr::synclog::extract_label_pairs(log, context, points, horizon, degree);
  dr::synclog::write_labels_csv(records, out);
  std::cout << "records=" << records.size() << " wrote=" << out << "\n";
  return 0;
}

int cmd_bezier_fit(const std::string& in, int degree, const std::string& out) {
  std::ifstream input(in);
  if (!input) {
    throw dr::IoError("cannot open input: " + in);
  }
  std::vector<Eigen::Vector2d> pts;
  std::string line;
  while (std::getline(input, line)) {
    for (char& c : line) {
      if (c == ',') {
        c = ' ';
      }
    }
    std::istringstream row(line);
    double x = 0.0;
    double y = 0.0;
    if (row >> x >> y) {
      pts.emplace_back(x, y);
    }
  }
  if (pts.size() < static_cast<std::size_t>(degree) + 1) {
    throw dr::InsufficientDataError("need at least degree+1 points to fit");
  }

  Eigen::MatrixX2d samples(static_cast<Eigen::Index>(pts.size()), 2);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    samples.row(i) = pts[static_cast<std::size_t>(i)].transpose();
  }
  const auto curve = dr::curves::fit_least_squares(
      samples, dr::curves::TimeVector::linspace(samples.rows()), degree);

  std::ofstream output(out);
  if (!output) {
    throw dr::IoError("cannot write output: " + out);
  }
  output.precision(17);
  output << "x,y\n";
  const auto& cp = curve.control_points();
  for (Eigen::Index i = 0; i < cp.rows(); ++i) {
    output << cp(i, 0) << "," << cp(i, 1) << "\n";
  }
  std::cout << "control_points=" << cp.rows() << " wrote=" << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deepracing: closed-loop racing testbed"};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "Run a closed-loop trial and write reports");
  run->add_option("--track", run_opt.track, "Track file (DRTRACK 1) or 'oval'");
  run->add_option("--controller", run_opt.controller, "Controller")
      ->check(CLI::IsMember({"pure-pursuit-centerline", "replay", "external"}));
  run->add_option("--gamma", run_opt.gamma, "Lookahead gain, seconds");
  run->add_option("--speed", run_opt.speed, "Target speed, m/s");
  run->add_option("--laps", run_opt.laps, "Lap budget");
  run->add_option("--duration", run_opt.duration,
                  "Trial duration in session seconds (overrides --laps)");
  run->add_option("--latency", run_opt.latency_ms, "Actuation latency, ms");
  run->add_option("--jitter", run_opt.jitter_ms, "Uniform extra actuation latency, ms");
  run->add_option("--seed", run_opt.seed, "RNG seed");
  run->add_option("--rate", run_opt.rate, "Tick rate, Hz");
  run->add_option("--drift", run_opt.drift, "Session clock drift");
  run->add_option("--offset", run_opt.offset, "Session clock offset, s");
  run->add_option("--context", run_opt.context, "Snapshot window length");
  run->add_flag("--realtime", run_opt.realtime, "Pace the loop on the wall clock");
  run->add_option("--out", run_opt.out, "Output directory");
  run->add_option("--log", run_opt.log, "Also write the telemetry log (DRLOG 1)");
  run->add_option("--replay-log", run_opt.replay_log, "Log to replay (controller=replay)");
  run->add_option("--command-port", run_opt.command_port,
                  "UDP port for DRCB commands (controller=external)");
  run->add_option("--telemetry-addr", run_opt.telemetry_addr,
                  "host:port telemetry destination (controller=external)");
  run->add_option("--oval-straight", run_opt.oval_straight, "Oval straight length, m");
  run->add_option("--oval-radius", run_opt.oval_radius, "Oval corner radius, m");
  run->add_option("--oval-half-width", run_opt.oval_half_width, "Oval half width, m");
  run->add_option("--oval-spacing", run_opt.oval_spacing, "Oval sample spacing, m");

  double ct_drift = 0.99999;
  double ct_offset = -1.616876;
  std::size_t ct_samples = 10000;
  double ct_noise = 0.0;
  std::uint64_t ct_seed = 0;
  double ct_rate = 60.0;
  CLI::App* clock_test = app.add_subcommand("clock-test", "Fit the session clock model");
  clock_test->add_option("--drift", ct_drift, "True clock drift");
  clock_test->add_option("--offset", ct_offset, "True clock offset, s");
  clock_test->add_option("--samples", ct_samples, "Number of samples");
  clock_test->add_option("--noise", ct_noise, "Gaussian observation noise, s");
  clock_test->add_option("--seed", ct_seed, "RNG seed");
  clock_test->add_option("--rate", ct_rate, "Sample rate, Hz");

  double lt_inject = 26.79;
  double lt_rate = 60.0;
  CLI::App* latency_test = app.add_subcommand("latency-test", "Measure injected actuation latency");
  latency_test->add_option("--inject", lt_inject, "Injected latency, ms");
  latency_test->add_option("--rate", lt_rate, "Observation rate, Hz");

  std::string ds_log;
  int ds_context = 5;
  int ds_points = 60;
  double ds_horizon = 1.4;
  int ds_degree = 5;
  std::string ds_out;
  CLI::App* dataset = app.add_subcommand("dataset", "Extract trajectory labels from a log");
  dataset->add_option("--log", ds_log, "Input log (DRLOG 1)")
      ->required()
      ->check(CLI::ExistingFile);
  dataset->add_option("--context", ds_context, "Past samples per record");
  dataset->add_option("--points", ds_points, "Future waypoints per record");
  dataset->add_option("--horizon", ds_horizon, "Future horizon, s");
  dataset->add_option("--degree", ds_degree, "Fitted curve degree");
  dataset->add_option("--out", ds_out, "Output CSV")->required();

  std::string bf_in;
  int bf_degree = 5;
  std::string bf_out;
  CLI::App* bezier_fit = app.add_subcommand("bezier-fit", "Least-squares curve fit of x,y points");
  bezier_fit->add_option("--in", bf_in, "Input CSV of x,y points")
      ->required()
      ->check(CLI::ExistingFile);
  bezier_fit->add_option("--degree", bf_degree, "Curve degree");
  bezier_fit->add_option("--out", bf_out, "Output CSV of control points")->required();

  try {
    app.parse(argc, argv);
    if (run->parsed()) {
      return cmd_run(run_opt);
    }
    if (clock_test->parsed()) {
      return cmd_clock_test(ct_drift, ct_offset, ct_samples, ct_noise, ct_seed, ct_rate);
    }
    if (latency_test->parsed()) {
      return cmd_latency_test(lt_inject, lt_rate);
    }
    if (dataset->parsed()) {
      return cmd_dataset(ds_log, ds_context, ds_points, ds_horizon, ds_degree, ds_out);
    }
    if (bezier_fit->parsed()) {
      return cmd_bezier_fit(bf_in, bf_degree, bf_out);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
