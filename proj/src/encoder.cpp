#include "dct/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace dct {

PoolBlock::PoolBlock(const std::string& name, Eigen::Index hidden, Rng& rng)
    : self(name + ".0", hidden, hidden, Init::lecun_normal, rng) {
  // The concatenated layer has fan-in 2*hidden; both halves share that scale.
  Tensor w(hidden, hidden);
  const double sd = 1.0 / std::sqrt(2.0 * static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < hidden; ++i)
    for (Eigen::Index j = 0; j < hidden; ++j) w(i, j) = sd * rng.normal();
  pool_weight = Parameter(name + ".0.pool", std::move(w));
  self.weight.value *= std::sqrt(0.5);
  out = Linear(name + ".1", hidden, hidden, Init::lecun_normal, rng);
}

Var PoolBlock::operator()(Graph& g, Var h, const Segments& segs) {
  Var pooled = g.matmul(g.segment_mean(h, segs), g.parameter(pool_weight));
  Var a = g.add(self(g, h), g.segment_expand(pooled, segs));
  return g.selu(out(g, g.selu(a)));
}

void PoolBlock::collect(std::vector<Parameter*>& params) {
  self.collect(params);
  params.push_back(&pool_weight);
  out.collect(params);
}

DeepSetEncoder::DeepSetEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.input_dim < 1 || cfg.hidden < 1 || cfg.latent < 1 || cfg.pool_blocks < 0)
    throw std::invalid_argument("DeepSetEncoder: invalid dimensions");
  input_ = Mlp("encoder.in", {cfg.input_dim, cfg.hidden, cfg.hidden}, true, rng);
  for (int l = 0; l < cfg.pool_blocks; ++l)
    blocks_.emplace_back("encoder.block" + std::to_string(l), cfg.hidden, rng);
  head_ = Linear("encoder.head", cfg.hidden, cfg.latent, Init::lecun_normal, rng);
}

Var DeepSetEncoder::forward(Graph& g, Var points, const Segments& segs) {
  if (g.value(points).cols() != cfg_.input_dim)
    throw ShapeError("DeepSetEncoder: point dimension mismatch");
  Var h = input_(g, points);
  for (auto& b : blocks_) h = b(g, h, segs);
  Var z = g.selu(head_(g, g.segment_mean(h, segs)));
  return cfg_.normalize ? g.normalize_rows(z) : z;
}

Embedding DeepSetEncoder::encode(const SampleSet& s) {
  if (s.empty()) throw std::invalid_argument("encode: empty sample set");
  Graph g;
  Var z = forward(g, g.constant(s.points()),
                  Segments::uniform(1, s.size()));
  return Embedding{g.value(z).row(0).transpose(), cfg_.normalize};
}

std::vector<Parameter*> DeepSetEncoder::parameters() {
  std::vector<Parameter*> p;
  input_.collect(p);
  for (auto& b : blocks_) b.collect(p);
  head_.collect(p);
  return p;
}

OneHotEncoder::OneHotEncoder(std::size_t K, Eigen::Index latent, Rng& rng) {
  if (K == 0 || latent < 1)
    throw std::invalid_argument("OneHotEncoder: invalid dimensions");
  table_ = Parameter("onehot.table",
                     rng.normal_matrix(static_cast<Eigen::Index>(K), latent));
}

Var OneHotEncoder::forward(Graph& g, std::span<const std::size_t> indices) {
  return g.gather_rows(table_, indices);
}

Embedding OneHotEncoder::encode(std::size_t index) const {
  if (index >= K()) throw std::out_of_range("OneHotEncoder: index out of range");
  return Embedding{table_.value.row(static_cast<Eigen::Index>(index)).transpose(),
                   false};
}

std::size_t nearest_training_distribution(
    const SampleSet& target, const std::vector<Eigen::VectorXd>& centroids) {
  if (centroids.empty())
    throw std::invalid_argument("nearest_training_distribution: no centroids");
  const Eigen::VectorXd mu = target.mean();
  std::size_t best = 0;
  double best_d = (centroids[0] - mu).squaredNorm();
  for (std::size_t i = 1; i < centroids.size(); ++i) {
    const double d = (centroids[i] - mu).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace dct
