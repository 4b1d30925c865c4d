#include "dct/linalg.hpp"

#include <cmath>
#include <stdexcept>

#include "dct/sample_set.hpp"

namespace dct {

SampleSet::SampleSet(Eigen::MatrixXd points) : points_(std::move(points)) {
  if (!points_.allFinite())
    throw std::invalid_argument("SampleSet: non-finite entries");
}

Eigen::VectorXd SampleSet::mean() const {
  if (empty()) throw std::invalid_argument("SampleSet::mean: empty set");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim());
  for (Eigen::Index i = 0; i < size(); ++i) acc += points_.row(i).transpose();
  return acc / static_cast<double>(size());
}

void GaussianParams::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw std::invalid_argument("GaussianParams: dimension mismatch");
  if (!mean.allFinite() || !cov.allFinite())
    throw std::invalid_argument("GaussianParams: non-finite entries");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("GaussianParams: covariance not symmetric");
  if (!linalg::is_spd(cov))
    throw std::invalid_argument("GaussianParams: covariance not SPD");
}

namespace linalg {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

bool is_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m, double floor) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sqrtm: not square");
  if (m.rows() == 2) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double tr = m(0, 0) + m(1, 1);
    const double s = std::sqrt(std::max(det, 0.0));
    const double t = std::sqrt(std::max(tr + 2.0 * s, 0.0));
    if (t > floor) {
      Eigen::MatrixXd r = m;
      r(0, 0) += s;
      r(1, 1) += s;
      return r / t;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd inv_sqrtm_spd(const Eigen::MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace linalg
}  // namespace dct
