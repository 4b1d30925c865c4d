#pragma once

#include <vector>

#include "dct/nn.hpp"
#include "dct/sample_set.hpp"

namespace dct {

struct Embedding {
  Eigen::VectorXd z;
  bool unit_norm = false;

  Eigen::Index dim() const { return z.size(); }
};

struct EncoderConfig {
  Eigen::Index input_dim = 2;
  Eigen::Index hidden = 64;
  Eigen::Index latent = 16;
  int pool_blocks = 2;
  bool normalize = false;
};

/// One mean-pooled update: h <- MLP([h; mean(h)]). The first layer's weight
/// is stored as two blocks (per-point and pooled) so the pooled half is
/// applied once per set; the map is the same as a single weight on the
/// concatenation.
struct PoolBlock {
  Linear self;
  Parameter pool_weight;  // hidden x hidden
  Linear out;

  PoolBlock() = default;
  PoolBlock(const std::string& name, Eigen::Index hidden, Rng& rng);
  Var operator()(Graph& g, Var h, const Segments& segs);
  void collect(std::vector<Parameter*>& params);
};

/// Mean-pooled deep-set distribution encoder:
/// h = MLP_in(x); L pool blocks; z = SELU(W mean(h) + b).
class DeepSetEncoder {
 public:
  DeepSetEncoder() = default;
  DeepSetEncoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  /// Stacked sets (rows grouped by segs) -> one embedding row per set.
  Var forward(Graph& g, Var points, const Segments& segs);
  Embedding encode(const SampleSet& s);
  std::vector<Parameter*> parameters();

 private:
  EncoderConfig cfg_;
  Mlp input_;
  std::vector<PoolBlock> blocks_;
  Linear head_;
};

/// K-to-K baseline: one learnable embedding per training distribution.
class OneHotEncoder {
 public:
  OneHotEncoder() = default;
  OneHotEncoder(std::size_t K, Eigen::Index latent, Rng& rng);

  std::size_t K() const { return static_cast<std::size_t>(table_.value.rows()); }
  Eigen::Index latent() const { return table_.value.cols(); }
  Var forward(Graph& g, std::span<const std::size_t> indices);
  Embedding encode(std::size_t index) const;
  std::vector<Parameter*> parameters() { return {&table_}; }

  /// Training-set mean of each distribution, used to assign unseen sets.
  std::vector<Eigen::VectorXd> centroids;

 private:
  Parameter table_;
};

/// Index of the centroid closest (Euclidean) to the sample mean of `target`;
/// ties resolve to the lowest index.
std::size_t nearest_training_distribution(
    const SampleSet& target, const std::vector<Eigen::VectorXd>& centroids);

}  // namespace dct
