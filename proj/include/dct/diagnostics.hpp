#pragma once

#include <functional>
#include <vector>

#include "dct/datagen.hpp"
#include "dct/training.hpp"

namespace dct {

struct AlignmentReport {
  double d_pair = 0.0;
  double d_rand = 0.0;
  double ratio = 0.0;          // NaN when d_rand == 0
  double spearman_rho = 0.0;   // NaN when undefined
  bool rho_defined = false;
  int n_samples = 0;
  int n_permutations = 0;
};

/// Spearman rank correlation with average ranks for ties. NaN when either
/// input is constant.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Alignment statistics from samples: source X, transported Yhat (row i is
/// the image of X row i) and independent target samples Y. Cost is the
/// Euclidean norm after centering X at mean(X) and Yhat, Y at mean(Y).
AlignmentReport alignment_from_samples(const Eigen::MatrixXd& X,
                                       const Eigen::MatrixXd& Yhat,
                                       const Eigen::MatrixXd& Y, int n_perm,
                                       Rng& rng);

/// Draws n samples from each law, embeds them, transports the source
/// samples and reports their alignment.
AlignmentReport alignment_diagnostic(TransportModel& model,
                                     const DistributionParams& u,
                                     const DistributionParams& v, int n,
                                     int n_perm, Rng& rng);

/// Average of the fields over reports (rho over defined entries only).
AlignmentReport average_reports(const std::vector<AlignmentReport>& reports);

struct ScalingReport {
  std::vector<int> m;
  std::vector<double> value;  // spread or gap per m
  double slope = 0.0;         // NaN when undefined
  bool slope_defined = false;
  Eigen::MatrixXd covariance;  // CLT only: embedding covariance at largest m
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

using SetEmbedder = std::function<Eigen::VectorXd(const SampleSet&)>;

/// Embedding spread across `reps` fresh sets of each size m. Spread is the
/// root mean coordinate variance.
ScalingReport clt_scaling(const SetEmbedder& embed, const DistributionParams& law,
                          const std::vector<int>& m_list, int reps, Rng& rng);

struct PluginConfig {
  Eigen::Index pool_size = 8192;  // points drawn per law
  Eigen::Index eval_size = 256;   // fixed evaluation subset
};

/// Mean |loss(z_m) - loss(z_full)| over reps, where z_m embeds size-m
/// subsamples of the pools and the loss is the energy distance between the
/// transported evaluation source subset and the target evaluation subset.
ScalingReport plugin_loss_convergence(TransportModel& model,
                                      const DistributionParams& u,
                                      const DistributionParams& v,
                                      const std::vector<int>& m_list, int reps,
                                      Rng& rng, const PluginConfig& cfg = {});

GaussianParams gaussian_ot_displacement(const GaussianParams& p,
                                        const GaussianParams& q, double t);

struct TrajectoryReport {
  std::vector<double> t;
  std::vector<SampleSet> sets;
  std::vector<GaussianParams> fits;
  std::vector<GaussianParams> ot;  // closed-form path between endpoint fits
  std::vector<double> w2_gap;
  double endpoint_w2 = 0.0;

  double mean_gap() const;  // over steps 1..K
};

/// Pushes S_u through z_k = (1 - t_k) z_u + t_k z_v, t_k = k / K_steps,
/// with x_{k+1} = T(x_k | z_k, z_{k+1}).
TrajectoryReport latent_interpolation_path(TransportModel& model,
                                           const SampleSet& su,
                                           const SampleSet& sv, int k_steps,
                                           Rng& rng);

}  // namespace dct
