#pragma once

#include <Eigen/Dense>

#include "deepracing/errors.hpp"

namespace deepracing::curves {

/// Largest curve degree supported. Binomial coefficients are computed by a
/// multiplicative recurrence in double precision, which is exact up to here.
inline constexpr int kMaxDegree = 20;

/// Ordered vector of sample parameters (seconds, or normalized to [0,1]).
/// Values are strictly increasing; N >= 2.
class TimeVector {
public:
  explicit TimeVector(Eigen::VectorXd values);

  /// n uniformly spaced values on [0,1]; endpoints exact.
  static TimeVector linspace(int n);

  /// values[0] == 0 and values[N-1] == 1 exactly.
  [[nodiscard]] bool is_normalized() const;

  [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
  [[nodiscard]] Eigen::Index size() const { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

private:
  Eigen::VectorXd values_;
};

/// Result of mapping a time vector in seconds onto the unit interval.
struct NormalizedTimes {
  TimeVector s;    ///< s[i] = (t[i]-t[0])/delta_t, endpoints exactly 0 and 1
  double delta_t;  ///< t[N-1] - t[0], seconds
};

/// Rescale a strictly increasing time vector to [0,1].
/// Throws std::invalid_argument if the span is degenerate.
NormalizedTimes normalize_times(const TimeVector& t);

/// N x (n+1) Bernstein basis matrix:
///   A(i,j) = C(n,j) * (1 - t_i)^(n-j) * t_i^j
/// Rows of a normalized-input matrix sum to 1. Requires a normalized t and
/// 0 <= n <= kMaxDegree.
Eigen::MatrixXd bernstein_matrix(const TimeVector& t, int degree);

/// Polynomial curve defined by an (n+1) x d control point matrix; row k is
/// control point k. Evaluation and derivatives are dense matrix products
/// against the Bernstein basis.
class BezierCurve {
public:
  /// Control points must be finite, with 1..kMaxDegree+1 rows. A single row
  /// is the constant (degree 0) curve, which arises as the derivative of a
  /// line.
  explicit BezierCurve(Eigen::MatrixXd control_points);

  [[nodiscard]] int degree() const { return static_cast<int>(control_points_.rows()) - 1; }
  [[nodiscard]] int dimension() const { return static_cast<int>(control_points_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& control_points() const { return control_points_; }

  /// B(t) = A(t,n) P for a normalized time vector; returns N x d samples.
  [[nodiscard]] Eigen::MatrixXd evaluate(const TimeVector& t) const;

  /// Single-parameter evaluation, s in [0,1].
  [[nodiscard]] Eigen::RowVectorXd evaluate_at(double s) const;

  /// Curve of degree n-1 with control points n*(P_{k+1} - P_k). Evaluating
  /// it yields dB/ds on the normalized parameter. Requires degree >= 1.
  [[nodiscard]] BezierCurve derivative() const;

private:
  Eigen::MatrixXd control_points_;
};

/// Least-squares control points P* = V S^-1 U^T L for samples L taken at the
/// normalized times t. Singular values below 1e-12 * sigma_max are treated as
/// zero. Throws UnderdeterminedError when N < n+1.
BezierCurve fit_least_squares(const Eigen::MatrixXd& samples, const TimeVector& t, int degree);

/// Weights of the composite trajectory loss. Non-negative, not all zero.
struct LossWeights {
  double position = 1.0;
  double velocity = 0.1;
  double control_point = 0.05;

  void validate() const;
  [[nodiscard]] double combine(double position_term, double velocity_term,
                               double control_point_term) const;
};

struct LossBreakdown {
  double position = 0.0;       ///< mean ||B(s_i) - y*_i||
  double velocity = 0.0;       ///< mean ||B'(s_i)/delta_t - v*_i||
  double control_point = 0.0;  ///< mean ||P_k - P*_k|| vs. least-squares fit
  double total = 0.0;          ///< weighted sum of the three terms
};

/// Composite loss between a predicted curve and ground-truth samples taken at
/// the times t (seconds). gt_points and gt_velocities are N x d with N equal
/// to t's length; the ground-truth fit uses the predicted curve's degree.
LossBreakdown bezier_loss(const BezierCurve& pred, const Eigen::MatrixXd& gt_points,
                          const Eigen::MatrixXd& gt_velocities, const TimeVector& t,
                          const LossWeights& weights);

/// Waypoint regression loss. The default is sum_i sqrt(||pred_i - gt_i||);
/// with mean_of_norms the result is the average euclidean distance instead.
double waypoint_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt,
                     bool mean_of_norms = false);

}  // namespace deepracing::curves
