#include "deepracing/curves.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <string>
#include <vector>

namespace deepracing::curves {
namespace {

void require_normalized(const TimeVector& t) {
  if (!t.is_normalized()) {
    throw std::invalid_argument("time vector must be normalized to [0,1] with exact endpoints");
  }
}

// C(n,0..n) by the multiplicative recurrence; exact in double for n <= 20.
std::vector<double> binomial_row(int n) {
  std::vector<double> row(static_cast<std::size_t>(n) + 1);
  row[0] = 1.0;
  for (int k = 1; k <= n; ++k) {
    row[static_cast<std::size_t>(k)] =
        row[static_cast<std::size_t>(k) - 1] * static_cast<double>(n - k + 1) / static_cast<double>(k);
  }
  return row;
}

}  // namespace

TimeVector::TimeVector(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw std::invalid_argument("time vector needs at least 2 samples");
  }
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw std::invalid_argument("time vector contains a non-finite value");
    }
    if (i > 0 && values_[i] <= values_[i - 1]) {
      throw std::invalid_argument("time vector must be strictly increasing");
    }
  }
}

TimeVector TimeVector::linspace(int n) {
  if (n < 2) {
    throw std::invalid_argument("linspace needs at least 2 samples");
  }
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  }
  v[0] = 0.0;
  v[n - 1] = 1.0;
  return TimeVector(std::move(v));
}

bool TimeVector::is_normalized() const {
  return values_[0] == 0.0 && values_[values_.size() - 1] == 1.0;
}

NormalizedTimes normalize_times(const TimeVector& t) {
  const Eigen::VectorXd& v = t.values();
  const double delta_t = v[v.size() - 1] - v[0];
  if (!(delta_t > 0.0)) {
    throw std::invalid_argument("time span must be positive");
  }
  Eigen::VectorXd s = (v.array() - v[0]) / delta_t;
  // Kill roundoff at the endpoints; the interior stays strictly increasing.
  s[0] = 0.0;
  s[s.size() - 1] = 1.0;
  return NormalizedTimes{TimeVector(std::move(s)), delta_t};
}

Eigen::MatrixXd bernstein_matrix(const TimeVector& t, int degree) {
  if (degree < 0 || degree > kMaxDegree) {
    throw std::invalid_argument("degree must be in [0, " + std::to_string(kMaxDegree) + "]");
  }
  require_normalized(t);

  const Eigen::Index n_rows = t.size();
  const int n = degree;
  const std::vector<double> binom = binomial_row(n);

  Eigen::MatrixXd a(n_rows, n + 1);
  std::vector<double> pow_t(static_cast<std::size_t>(n) + 1);
  std::vector<double> pow_one_minus_t(static_cast<std::size_t>(n) + 1);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const double ti = t[i];
    const double ui = 1.0 - ti;
    pow_t[0] = 1.0;
    pow_one_minus_t[0] = 1.0;
    for (int k = 1; k <= n; ++k) {
      pow_t[static_cast<std::size_t>(k)] = pow_t[static_cast<std::size_t>(k) - 1] * ti;
      pow_one_minus_t[static_cast<std::size_t>(k)] =
          pow_one_minus_t[static_cast<std::size_t>(k) - 1] * ui;
    }
    for (int j = 0; j <= n; ++j) {
      a(i, j) = binom[static_cast<std::size_t>(j)] *
                pow_one_minus_t[static_cast<std::size_t>(n - j)] * pow_t[static_cast<std::size_t>(j)];
    }
  }
  return a;
}

BezierCurve::BezierCurve(Eigen::MatrixXd control_points) : control_points_(std::move(control_points)) {
  if (control_points_.rows() < 1 || control_points_.cols() < 1) {
    throw std::invalid_argument("control point matrix must be non-empty");
  }
  if (control_points_.rows() > kMaxDegree + 1) {
    throw std::invalid_argument("curve degree exceeds " + std::to_string(kMaxDegree));
  }
  if (!control_points_.allFinite()) {
    throw std::invalid_argument("control points must be finite");
  }
}

Eigen::MatrixXd BezierCurve::evaluate(const TimeVector& t) const {
  return bernstein_matrix(t, degree()) * control_points_;
}

Eigen::RowVectorXd BezierCurve::evaluate_at(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw std::invalid_argument("curve parameter must lie in [0,1]");
  }
  const int n = degree();
  const std::vector<double> binom = binomial_row(n);
  Eigen::RowVectorXd weights(n + 1);
  double pow_s = 1.0;
  for (int j = 0; j <= n; ++j) {
    weights[j] = binom[static_cast<std::size_t>(j)] * pow_s;
    pow_s *= s;
  }
  double pow_u = 1.0;
  for (int j = n; j >= 0; --j) {
    weights[j] *= pow_u;
    pow_u *= 1.0 - s;
  }
  return weights * control_points_;
}

BezierCurve BezierCurve::derivative() const {
  const int n = degree();
  if (n < 1) {
    throw std::invalid_argument("derivative requires degree >= 1");
  }
  Eigen::MatrixXd delta =
      static_cast<double>(n) *
      (control_points_.bottomRows(n) - control_points_.topRows(n));
  return BezierCurve(std::move(delta));
}

BezierCurve fit_least_squares(const Eigen::MatrixXd& samples, const TimeVector& t, int degree) {
  if (degree < 0 || degree > kMaxDegree) {
    throw std::invalid_argument("degree must be in [0, " + std::to_string(kMaxDegree) + "]");
  }
  if (samples.rows() != t.size()) {
    throw std::invalid_argument("sample count must match time vector length");
  }
  if (samples.rows() < degree + 1) {
    throw UnderdeterminedError("need at least degree+1 samples to fit");
  }

  const Eigen::MatrixXd a = bernstein_matrix(t, degree);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double cutoff = 1e-12 * sigma[0];

  // P* = V S^+ U^T L with small singular values zeroed.
  Eigen::MatrixXd ut_l = svd.matrixU().transpose() * samples;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (sigma[k] > cutoff) {
      ut_l.row(k) /= sigma[k];
    } else {
      ut_l.row(k).setZero();
    }
  }
  return BezierCurve(svd.matrixV() * ut_l);
}

void LossWeights::validate() const {
  if (position < 0.0 || velocity < 0.0 || control_point < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (position == 0.0 && velocity == 0.0 && control_point == 0.0) {
    throw std::invalid_argument("loss weights must not all be zero");
  }
}

double LossWeights::combine(double position_term, double velocity_term,
                            double control_point_term) const {
  return position * position_term + velocity * velocity_term + control_point * control_point_term;
}

namespace {

double mean_row_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    sum += (a.row(i) - b.row(i)).norm();
  }
  return sum / static_cast<double>(a.rows());
}

}  // namespace

LossBreakdown bezier_loss(const BezierCurve& pred, const Eigen::MatrixXd& gt_points,
                          const Eigen::MatrixXd& gt_velocities, const TimeVector& t,
                          const LossWeights& weights) {
  weights.validate();
  if (gt_points.rows() != t.size() || gt_velocities.rows() != t.size()) {
    throw std::invalid_argument("ground-truth arrays must match the time vector length");
  }
  if (gt_points.cols() != pred.dimension() || gt_velocities.cols() != pred.dimension()) {
    throw std::invalid_argument("ground-truth dimension must match the curve dimension");
  }

  const auto [s, delta_t] = normalize_times(t);

  LossBreakdown out;
  out.position = mean_row_distance(pred.evaluate(s), gt_points);

  const Eigen::MatrixXd velocity = pred.derivative().evaluate(s) / delta_t;
  out.velocity = mean_row_distance(velocity, gt_velocities);

  const BezierCurve gt_fit = fit_least_squares(gt_points, s, pred.degree());
  out.control_point = mean_row_distance(pred.control_points(), gt_fit.control_points());

  out.total = weights.combine(out.position, out.velocity, out.control_point);
  return out;
}

double waypoint_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt, bool mean_of_norms) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw std::invalid_argument("waypoint arrays must have identical shapes");
  }
  if (pred.rows() == 0) {
    throw std::invalid_argument("waypoint arrays must be non-empty");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const double dist = (pred.row(i) - gt.row(i)).norm();
    sum += mean_of_norms ? dist : std::sqrt(dist);
  }
  return mean_of_norms ? sum / static_cast<double>(pred.rows()) : sum;
}

}  // namespace deepracing::curves
