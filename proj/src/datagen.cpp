#include "dct/datagen.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dct/linalg.hpp"

namespace dct {

namespace {

std::uint64_t hash_matrix(std::uint64_t h, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.rows() << 'x' << m.cols() << ':';
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << m(i, j) << ',';
  return fnv1a(os.str(), h);
}

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("Cholesky factorization failed");
  return llt.matrixL();
}

}  // namespace

Box Box::square(Eigen::Index dim, double lo, double hi) {
  return Box{Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
}

bool Box::contains(const Box& inner) const {
  return inner.dim() == dim() && (inner.lo.array() >= lo.array()).all() &&
         (inner.hi.array() <= hi.array()).all();
}

void MVNPrior::validate() const {
  const Eigen::Index d = dim();
  if (d < 1 || mean_box.hi.size() != d)
    throw std::invalid_argument("MVNPrior: bad mean box");
  if ((mean_box.hi.array() < mean_box.lo.array()).any())
    throw std::invalid_argument("MVNPrior: empty mean box");
  if (!(iw_dof > static_cast<double>(d) + 1.0))
    throw std::invalid_argument("MVNPrior: inverse-Wishart dof must exceed d+1");
  if (iw_scale.rows() != d || !linalg::is_spd(iw_scale))
    throw std::invalid_argument("MVNPrior: scale matrix must be d x d SPD");
}

std::uint64_t MVNPrior::hash() const {
  std::uint64_t h = fnv1a("mvn");
  h = hash_matrix(h, mean_box.lo);
  h = hash_matrix(h, mean_box.hi);
  h = hash_matrix(h, Eigen::MatrixXd::Constant(1, 1, iw_dof));
  return hash_matrix(h, iw_scale);
}

void GMMParams::validate() const {
  if (components.empty() ||
      weights.size() != static_cast<Eigen::Index>(components.size()))
    throw std::invalid_argument("GMMParams: weights/components mismatch");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("GMMParams: weights not on the simplex");
  for (const auto& c : components) c.validate();
}

void GMMPrior::validate() const {
  component_prior.validate();
  if (components < 1) throw std::invalid_argument("GMMPrior: components < 1");
  if (!(dirichlet_alpha > 0.0))
    throw std::invalid_argument("GMMPrior: alpha <= 0");
}

std::uint64_t GMMPrior::hash() const {
  std::uint64_t h = fnv1a("gmm", component_prior.hash());
  h = fnv1a(std::to_string(components), h);
  return hash_matrix(h, Eigen::MatrixXd::Constant(1, 1, dirichlet_alpha));
}

Eigen::VectorXd distribution_mean(const DistributionParams& p) {
  if (const auto* g = std::get_if<GaussianParams>(&p)) return g->mean;
  const auto& m = std::get<GMMParams>(p);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m.dim());
  for (std::size_t c = 0; c < m.components.size(); ++c)
    mu += m.weights(static_cast<Eigen::Index>(c)) * m.components[c].mean;
  return mu;
}

void Dataset::validate() const {
  if (params.size() != sets.size() || unique_id.size() != sets.size() ||
      tags.size() != sets.size())
    throw std::invalid_argument("Dataset: parallel lists differ in length");
  for (std::size_t id : unique_id)
    if (id >= K) throw std::invalid_argument("Dataset: unique_id >= K");
}

void PairedDataset::validate() const {
  if (sources.size() != targets.size() ||
      source_params.size() != sources.size() ||
      target_params.size() != sources.size())
    throw std::invalid_argument("PairedDataset: parallel lists differ");
}

Eigen::MatrixXd sample_inverse_wishart(double dof, const Eigen::MatrixXd& scale,
                                       Rng& rng) {
  const Eigen::Index d = scale.rows();
  if (scale.cols() != d || !linalg::is_spd(scale))
    throw std::invalid_argument("inverse Wishart: scale must be SPD");
  if (!(dof > static_cast<double>(d) - 1.0))
    throw std::invalid_argument("inverse Wishart: dof must exceed d-1");
  // Bartlett decomposition of W ~ Wishart(dof, scale^-1); Sigma = W^-1.
  const Eigen::MatrixXd L = cholesky_or_throw(scale.inverse());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  const Eigen::MatrixXd LA = L * A;
  const Eigen::MatrixXd W = LA * LA.transpose();
  return linalg::symmetrize(W.inverse());
}

GaussianParams sample_mvn_params(const MVNPrior& prior, Rng& rng) {
  GaussianParams p;
  p.mean.resize(prior.dim());
  for (Eigen::Index i = 0; i < prior.dim(); ++i)
    p.mean(i) = rng.uniform(prior.mean_box.lo(i), prior.mean_box.hi(i));
  p.cov = sample_inverse_wishart(prior.iw_dof, prior.iw_scale, rng);
  return p;
}

GMMParams sample_gmm_params(const GMMPrior& prior, Rng& rng) {
  GMMParams p;
  p.weights.resize(prior.components);
  double total = 0.0;
  for (int c = 0; c < prior.components; ++c) {
    p.weights(c) = rng.gamma(prior.dirichlet_alpha);
    total += p.weights(c);
  }
  p.weights /= total;
  for (int c = 0; c < prior.components; ++c)
    p.components.push_back(sample_mvn_params(prior.component_prior, rng));
  return p;
}

DistributionParams sample_params(const Prior& prior, Rng& rng) {
  if (const auto* m = std::get_if<MVNPrior>(&prior))
    return sample_mvn_params(*m, rng);
  return sample_gmm_params(std::get<GMMPrior>(prior), rng);
}

SampleSet draw_mvn_set(const GaussianParams& params, Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("draw_mvn_set: n < 1");
  const Eigen::MatrixXd L = cholesky_or_throw(params.cov);
  const Eigen::Index d = params.dim();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) z(k) = rng.normal();
    x.row(j) = (params.mean + L * z).transpose();
  }
  return SampleSet(std::move(x));
}

SampleSet draw_gmm_set(const GMMParams& params, Eigen::Index n, Rng& rng) {
  params.validate();
  if (n < 1) throw std::invalid_argument("draw_gmm_set: n < 1");
  std::vector<Eigen::MatrixXd> chol;
  for (const auto& c : params.components) chol.push_back(cholesky_or_throw(c.cov));
  const Eigen::Index d = params.dim();
  const Eigen::Index C = params.weights.size();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double u = rng.uniform();
    Eigen::Index c = 0;
    double cum = params.weights(0);
    while (c + 1 < C && (u >= cum || params.weights(c) == 0.0)) {
      ++c;
      cum += params.weights(c);
    }
    for (Eigen::Index k = 0; k < d; ++k) z(k) = rng.normal();
    const auto& comp = params.components[static_cast<std::size_t>(c)];
    x.row(j) = (comp.mean + chol[static_cast<std::size_t>(c)] * z).transpose();
  }
  return SampleSet(std::move(x));
}

SampleSet draw_set(const DistributionParams& params, Eigen::Index n, Rng& rng) {
  if (const auto* g = std::get_if<GaussianParams>(&params))
    return draw_mvn_set(*g, n, rng);
  return draw_gmm_set(std::get<GMMParams>(params), n, rng);
}

Dataset build_unsupervised_dataset(const Prior& prior, std::size_t K,
                                   std::size_t n_sets, Eigen::Index set_size,
                                   std::uint64_t seed) {
  std::visit([](const auto& p) { p.validate(); }, prior);
  if (K == 0) throw std::invalid_argument("build_unsupervised_dataset: K = 0");
  if (K > n_sets)
    throw std::invalid_argument("build_unsupervised_dataset: K > n_sets");
  Dataset ds;
  ds.K = K;
  ds.seed = seed;
  ds.prior_hash = std::visit([](const auto& p) { return p.hash(); }, prior);
  ds.truncated = n_sets % K != 0;
  const std::size_t reps = (n_sets + K - 1) / K;
  std::vector<DistributionParams> unique;
  unique.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng rng(seed, "dataset.params", k);
    unique.push_back(sample_params(prior, rng));
  }
  ds.sets.reserve(n_sets);
  for (std::size_t i = 0; i < n_sets; ++i) {
    const std::size_t k = i / reps;
    Rng rng(seed, "dataset.set", i);
    ds.sets.push_back(draw_set(unique[k], set_size, rng));
    ds.params.push_back(unique[k]);
    ds.unique_id.push_back(k);
    ds.tags.push_back(TimeTag::none);
  }
  return ds;
}

DistributionParams paired_target_params(const PairSpec& spec,
                                        const DistributionParams& source) {
  if (spec.kind == PairKind::mvn_shift) {
    if (const auto* g = std::get_if<GaussianParams>(&source))
      return GaussianParams{g->mean + spec.shift, g->cov};
    GMMParams out = std::get<GMMParams>(source);
    for (auto& c : out.components) c.mean += spec.shift;
    return out;
  }
  // Each component splits into two half-weight copies at +/- offaxis.
  std::vector<GaussianParams> comps;
  std::vector<double> w;
  auto split = [&](const GaussianParams& c, double weight) {
    comps.push_back({c.mean + spec.shift + spec.offaxis, c.cov});
    comps.push_back({c.mean + spec.shift - spec.offaxis, c.cov});
    w.push_back(0.5 * weight);
    w.push_back(0.5 * weight);
  };
  if (const auto* g = std::get_if<GaussianParams>(&source)) {
    split(*g, 1.0);
  } else {
    const auto& m = std::get<GMMParams>(source);
    for (std::size_t c = 0; c < m.components.size(); ++c)
      split(m.components[c], m.weights(static_cast<Eigen::Index>(c)));
  }
  GMMParams out;
  out.components = std::move(comps);
  out.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return out;
}

SampleSet paired_target_set(const PairSpec& spec, const SampleSet& source,
                            Rng& rng) {
  const Eigen::Index n = source.size();
  const Eigen::Index d = source.dim();
  if (spec.shift.size() != d)
    throw std::invalid_argument("paired_target_set: shift dimension mismatch");
  if (spec.kind == PairKind::mvn_shift) {
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    Eigen::MatrixXd y(n, d);
    for (Eigen::Index j = 0; j < n; ++j)
      y.row(j) = source.points().row(static_cast<Eigen::Index>(perm[j])) +
                 spec.shift.transpose();
    return SampleSet(std::move(y));
  }
  Eigen::MatrixXd both(2 * n, d);
  both.topRows(n) = source.points().rowwise() + (spec.shift + spec.offaxis).transpose();
  both.bottomRows(n) = source.points().rowwise() + (spec.shift - spec.offaxis).transpose();
  // Random subset of size n, in random order.
  const auto pick = rng.sample_without_replacement(static_cast<std::size_t>(2 * n),
                                                   static_cast<std::size_t>(n));
  Eigen::MatrixXd y(n, d);
  for (Eigen::Index j = 0; j < n; ++j)
    y.row(j) = both.row(static_cast<Eigen::Index>(pick[j]));
  return SampleSet(std::move(y));
}

PairedDataset build_supervised_pairs(const PairSpec& spec, const Prior& prior,
                                     const Box& support, std::size_t n_pairs,
                                     Eigen::Index set_size, std::uint64_t seed) {
  PairedDataset ds;
  ds.spec = spec;
  // Restrict the prior's mean box to the support box.
  Prior restricted = prior;
  std::visit(
      [&](auto& p) {
        MVNPrior* mvn;
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, MVNPrior>)
          mvn = &p;
        else
          mvn = &p.component_prior;
        if (!mvn->mean_box.contains(support))
          throw std::invalid_argument(
              "build_supervised_pairs: support box outside the prior box");
        mvn->mean_box = support;
        p.validate();
      },
      restricted);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Rng prng(seed, "pairs.params", i);
    DistributionParams src = sample_params(restricted, prng);
    Rng srng(seed, "pairs.source", i);
    SampleSet s = draw_set(src, set_size, srng);
    Rng trng(seed, "pairs.target", i);
    ds.targets.push_back(paired_target_set(spec, s, trng));
    ds.sources.push_back(std::move(s));
    ds.target_params.push_back(paired_target_params(spec, src));
    ds.source_params.push_back(std::move(src));
  }
  return ds;
}

std::vector<GaussianParams> ood_target_grid(int resolution,
                                            const MVNPrior& prior,
                                            std::uint64_t seed) {
  prior.validate();
  if (resolution < 2) throw std::invalid_argument("ood_target_grid: resolution < 2");
  if (prior.dim() != 2)
    throw std::invalid_argument("ood_target_grid: grid is defined for d = 2");
  std::vector<GaussianParams> grid;
  const auto& box = prior.mean_box;
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const double fi = static_cast<double>(i) / (resolution - 1);
      const double fj = static_cast<double>(j) / (resolution - 1);
      GaussianParams p;
      p.mean = Eigen::Vector2d(box.lo(0) + fi * (box.hi(0) - box.lo(0)),
                               box.lo(1) + fj * (box.hi(1) - box.lo(1)));
      Rng rng(seed, "ood.grid", static_cast<std::uint64_t>(i * resolution + j));
      p.cov = sample_inverse_wishart(prior.iw_dof, prior.iw_scale, rng);
      grid.push_back(std::move(p));
    }
  }
  return grid;
}

}  // namespace dct
