#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dct/rng.hpp"
#include "dct/sample_set.hpp"

namespace dct {

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Box square(Eigen::Index dim, double lo, double hi);
  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Box& inner) const;
};

/// Metadistribution over bivariate (or d-variate) normals:
/// mean ~ Uniform(box), cov ~ InverseWishart(dof, scale).
struct MVNPrior {
  Box mean_box = Box::square(2, 0.0, 5.0);
  double iw_dof = 10.0;
  Eigen::MatrixXd iw_scale = Eigen::MatrixXd::Identity(2, 2);

  Eigen::Index dim() const { return mean_box.dim(); }
  void validate() const;
  std::uint64_t hash() const;
};

struct GMMParams {
  Eigen::VectorXd weights;
  std::vector<GaussianParams> components;

  Eigen::Index dim() const { return components.front().dim(); }
  void validate() const;
};

/// Mixture metadistribution: weights ~ Dirichlet(alpha 1_C), components iid
/// from the MVN prior.
struct GMMPrior {
  MVNPrior component_prior;
  int components = 3;
  double dirichlet_alpha = 1.0;

  Eigen::Index dim() const { return component_prior.dim(); }
  void validate() const;
  std::uint64_t hash() const;
};

using DistributionParams = std::variant<GaussianParams, GMMParams>;
using Prior = std::variant<MVNPrior, GMMPrior>;

/// Mean of the law described by the parameters.
Eigen::VectorXd distribution_mean(const DistributionParams& p);

enum class TimeTag : std::uint8_t { none = 0, early = 1, late = 2 };

struct Dataset {
  std::vector<SampleSet> sets;
  std::vector<DistributionParams> params;  // ground truth per set
  std::vector<std::size_t> unique_id;      // index into the K unique draws
  std::vector<TimeTag> tags;
  std::size_t K = 0;
  bool truncated = false;  // K did not divide n_sets
  std::uint64_t prior_hash = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return sets.size(); }
  Eigen::Index dim() const { return sets.empty() ? 0 : sets.front().dim(); }
  void validate() const;
};

enum class PairKind { mvn_shift, gmm_bimodal };

struct PairSpec {
  PairKind kind = PairKind::mvn_shift;
  Eigen::VectorXd shift = Eigen::Vector2d(1.0, 1.0);
  Eigen::VectorXd offaxis = Eigen::Vector2d(-0.1, 0.1);  // gmm_bimodal only
};

struct PairedDataset {
  std::vector<SampleSet> sources;
  std::vector<SampleSet> targets;
  std::vector<DistributionParams> source_params;
  std::vector<DistributionParams> target_params;
  PairSpec spec;

  std::size_t size() const { return sources.size(); }
  void validate() const;
};

Eigen::MatrixXd sample_inverse_wishart(double dof, const Eigen::MatrixXd& scale,
                                       Rng& rng);

GaussianParams sample_mvn_params(const MVNPrior& prior, Rng& rng);
GMMParams sample_gmm_params(const GMMPrior& prior, Rng& rng);
DistributionParams sample_params(const Prior& prior, Rng& rng);

SampleSet draw_mvn_set(const GaussianParams& params, Eigen::Index n, Rng& rng);
SampleSet draw_gmm_set(const GMMParams& params, Eigen::Index n, Rng& rng);
SampleSet draw_set(const DistributionParams& params, Eigen::Index n, Rng& rng);

/// K unique parameter draws, each repeated ceil(n_sets / K) times in
/// contiguous blocks; the last block is truncated (and flagged) when K does
/// not divide n_sets.
Dataset build_unsupervised_dataset(const Prior& prior, std::size_t K,
                                   std::size_t n_sets, Eigen::Index set_size,
                                   std::uint64_t seed);

/// Paired source/target sets. Source means are drawn from `support`; for
/// mixtures every component mean is. Targets are permuted so that no
/// pointwise correspondence survives.
PairedDataset build_supervised_pairs(const PairSpec& spec, const Prior& prior,
                                     const Box& support, std::size_t n_pairs,
                                     Eigen::Index set_size, std::uint64_t seed);

/// Target parameters implied by a source under the pairing transformation.
DistributionParams paired_target_params(const PairSpec& spec,
                                        const DistributionParams& source);
/// Applies the pairing transformation to a source set (then permutes).
SampleSet paired_target_set(const PairSpec& spec, const SampleSet& source,
                            Rng& rng);

/// resolution x resolution grid of means spanning the prior's mean box
/// (row-major: first coordinate varies slowest), covariances from the prior.
std::vector<GaussianParams> ood_target_grid(int resolution,
                                            const MVNPrior& prior,
                                            std::uint64_t seed);

}  // namespace dct
