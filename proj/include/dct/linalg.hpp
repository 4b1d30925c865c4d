#pragma once

#include <Eigen/Dense>

namespace dct::linalg {

/// Principal square root of a symmetric positive semi-definite matrix.
/// 2x2 inputs use the closed form sqrt(M) = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det));
/// larger inputs use an eigendecomposition with eigenvalues floored at
/// `floor`.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m, double floor = 1e-12);

/// Inverse principal square root via eigendecomposition.
Eigen::MatrixXd inv_sqrtm_spd(const Eigen::MatrixXd& m, double floor = 1e-12);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

bool is_spd(const Eigen::MatrixXd& m);

}  // namespace dct::linalg
