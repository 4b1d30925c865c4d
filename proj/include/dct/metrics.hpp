#pragma once

// Distributional distances between sample sets. The set metrics double as
// training losses: the *_loss functions build the same estimators on a
// Graph so they can be differentiated w.r.t. generated points.

#include <optional>

#include "dct/rng.hpp"
#include "dct/sample_set.hpp"
#include "dct/tensor.hpp"

namespace dct {

/// Unbiased energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'|.
///
/// Within-set means exclude the diagonal. For equal sizes n >= 2 the cross
/// term also excludes index-matched pairs (paired U-statistic), so the value
/// is exactly 0 for A == B and may be slightly negative otherwise.
double energy_distance(const SampleSet& a, const SampleSet& b);

/// Sliced 2-Wasserstein distance over `n_projections` directions drawn
/// uniformly from the unit sphere. The larger set is subsampled without
/// replacement when sizes differ.
double sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                          int n_projections, Rng& rng);

/// Median pairwise distance over the pooled set (pairs i < j). Returns 1 when
/// the pooled set has no positive distance.
double median_heuristic(const SampleSet& a, const SampleSet& b);

/// Squared MMD with RBF kernel exp(-|x-y|^2 / (2 sigma^2)). Same estimator
/// structure as energy_distance. sigma defaults to the median heuristic.
double mmd_rbf(const SampleSet& a, const SampleSet& b,
               std::optional<double> bandwidth = std::nullopt);

/// Bures-Wasserstein (closed-form W2) distance between Gaussians.
double gaussian_w2(const GaussianParams& p, const GaussianParams& q);

struct GaussianFit {
  GaussianParams params;
  bool regularized = false;  // covariance was degenerate; 1e-9 I added
};

/// Sample mean and (n-1)-denominator covariance, symmetrized.
GaussianFit fit_gaussian(const SampleSet& a);

/// Directions drawn uniformly on the unit sphere, one per column (d x L).
Tensor random_projections(Eigen::Index dim, int count, Rng& rng);

// Differentiable losses. `pred` rows are grouped by `segs` (one segment per
// pair); `target` is a constant with the same layout. Both return the mean
// over segments.

/// Mean over segments of the energy distance estimator above.
Var energy_loss(Graph& g, Var pred, const Tensor& target, const Segments& segs);

/// Mean over segments of the squared sliced Wasserstein distance with shared
/// projection directions (d x L).
Var swd_loss(Graph& g, Var pred, const Tensor& target, const Segments& segs,
             const Tensor& projections);

}  // namespace dct
