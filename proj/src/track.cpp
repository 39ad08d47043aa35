#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "deepracing/simenv.hpp"

namespace deepracing::simenv {

Track::Track(std::vector<Eigen::Vector2d> centerline, double half_width,
             std::size_t start_finish_index)
    : points_(std::move(centerline)), half_width_(half_width), start_finish_index_(start_finish_index) {
  if (points_.size() < 4) {
    throw std::invalid_argument("track needs at least 3 distinct vertices plus closure");
  }
  if (points_.front() != points_.back()) {
    throw std::invalid_argument("track centerline must be closed (first point == last point)");
  }
  if (!(half_width_ > 0.0)) {
    throw std::invalid_argument("half width must be positive");
  }
  if (start_finish_index_ >= points_.size() - 1) {
    throw std::invalid_argument("start/finish index out of range");
  }

  cumulative_.resize(points_.size());
  cumulative_[0] = 0.0;
  for (std::size_t i = 1; i < points_.size(); ++i) {
    const double seg = (points_[i] - points_[i - 1]).norm();
    if (!(seg > 0.0)) {
      throw std::invalid_argument("track has a zero-length segment");
    }
    cumulative_[i] = cumulative_[i - 1] + seg;
  }
}

Track Track::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open track file: " + path.string());
  }

  auto next_line = [&in](std::string& line) -> bool {
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) {
        line.erase(hash);
      }
      const auto end = line.find_last_not_of(" \t\r\n");
      if (end == std::string::npos) {
        continue;  // blank or comment-only
      }
      line.erase(end + 1);
      return true;
    }
    return false;
  };

  std::string line;
  if (!next_line(line) || line != "DRTRACK 1") {
    throw IoError("not a DRTRACK 1 file: " + path.string());
  }
  if (!next_line(line)) {
    throw IoError("missing half_width line");
  }
  std::istringstream header(line);
  std::string key;
  double half_width = 0.0;
  if (!(header >> key >> half_width) || key != "half_width") {
    throw IoError("malformed half_width line: " + line);
  }

  std::vector<Eigen::Vector2d> points;
  while (next_line(line)) {
    std::istringstream row(line);
    double x = 0.0;
    double y = 0.0;
    if (!(row >> x >> y)) {
      throw IoError("malformed point line: " + line);
    }
    points.emplace_back(x, y);
  }
  return Track(std::move(points), half_width);
}

void Track::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write track file: " + path.string());
  }
  out.precision(17);
  out << "DRTRACK 1\n";
  out << "half_width " << half_width_ << "\n";
  for (const auto& p : points_) {
    out << p.x() << " " << p.y() << "\n";
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Track::Localization Track::localize(const Eigen::Vector2d& position) const {
  double best_dist_sq = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double best_side = 0.0;

  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Eigen::Vector2d& a = points_[i];
    const Eigen::Vector2d dir = points_[i + 1] - a;
    const double len_sq = dir.squaredNorm();
    const double u = std::clamp((position - a).dot(dir) / len_sq, 0.0, 1.0);
    const Eigen::Vector2d closest = a + u * dir;
    const double dist_sq = (position - closest).squaredNorm();
    if (dist_sq < best_dist_sq) {
      best_dist_sq = dist_sq;
      best_s = cumulative_[i] + u * std::sqrt(len_sq);
      // Sign of the z component of dir x (position - a): + means left.
      best_side = dir.x() * (position.y() - a.y()) - dir.y() * (position.x() - a.x());
    }
  }

  Localization out;
  const double dist = std::sqrt(best_dist_sq);
  out.arc_length = std::min(best_s, length());
  if (out.arc_length == length()) {
    out.arc_length = 0.0;
  }
  out.lateral_offset = best_side >= 0.0 ? dist : -dist;
  out.outside_distance = std::max(0.0, dist - half_width_);
  return out;
}

namespace {

double wrap_arc_length(double s, double total) {
  double w = std::fmod(s, total);
  if (w < 0.0) {
    w += total;
  }
  return w;
}

}  // namespace

Eigen::Vector2d Track::point_at(double arc_length) const {
  const double s = wrap_arc_length(arc_length, length());
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
  const std::size_t seg = std::min(i, points_.size() - 2);
  const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
  const double u = (s - cumulative_[seg]) / seg_len;
  return points_[seg] + u * (points_[seg + 1] - points_[seg]);
}

double Track::heading_at(double arc_length) const {
  const double s = wrap_arc_length(arc_length, length());
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
  const std::size_t seg = std::min(i, points_.size() - 2);
  const Eigen::Vector2d dir = points_[seg + 1] - points_[seg];
  return std::atan2(dir.y(), dir.x());
}

Track generate_oval_track(double straight_length, double radius, double half_width, double spacing) {
  if (!(straight_length > 0.0) || !(radius > 0.0) || !(half_width > 0.0) || !(spacing > 0.0)) {
    throw std::invalid_argument("oval parameters must all be positive");
  }

  std::vector<Eigen::Vector2d> points;
  const double arc_length = std::numbers::pi * radius;

  // Straight segment from `from` toward `to`, excluding the final point.
  auto add_straight = [&](const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
    const double len = (to - from).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int i = 0; i < n; ++i) {
      points.push_back(from + (static_cast<double>(i) / n) * (to - from));
    }
  };
  // CCW semicircle around `center` from angle a0 to a0+pi, excluding the endpoint.
  auto add_arc = [&](const Eigen::Vector2d& center, double a0) {
    const int n = std::max(1, static_cast<int>(std::ceil(arc_length / spacing)));
    for (int i = 0; i < n; ++i) {
      const double a = a0 + std::numbers::pi * static_cast<double>(i) / n;
      points.push_back(center + radius * Eigen::Vector2d{std::cos(a), std::sin(a)});
    }
  };

  const double hs = 0.5 * straight_length;
  // Counter-clockwise, starting at the midpoint of the bottom straight.
  add_straight({0.0, 0.0}, {hs, 0.0});
  add_arc({hs, radius}, -std::numbers::pi / 2.0);
  add_straight({hs, 2.0 * radius}, {-hs, 2.0 * radius});
  add_arc({-hs, radius}, std::numbers::pi / 2.0);
  add_straight({-hs, 0.0}, {0.0, 0.0});
  points.push_back(points.front());

  return Track(std::move(points), half_width, 0);
}

}  // namespace deepracing::simenv
