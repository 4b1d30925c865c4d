#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace dct {

/// Finite set of d-dimensional points, one per row.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(Eigen::MatrixXd points);

  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  bool empty() const { return points_.rows() == 0; }
  Eigen::RowVectorXd row(Eigen::Index i) const { return points_.row(i); }
  Eigen::VectorXd mean() const;

  bool operator==(const SampleSet& o) const { return points_ == o.points_; }

 private:
  Eigen::MatrixXd points_;
};

struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
  /// Throws std::invalid_argument unless cov is symmetric (1e-12) and SPD.
  void validate() const;
};

}  // namespace dct
