#include "dct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dct/linalg.hpp"

namespace dct {

namespace {

void require_pair(const SampleSet& a, const SampleSet& b, const char* what) {
  if (a.empty() || b.empty())
    throw std::invalid_argument(std::string(what) + ": empty sample set");
  if (a.dim() != b.dim())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// within(A) + within(B) - 2 cross(A, B) for a symmetric kernel k.
template <typename Kernel>
double two_sample_statistic(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            Kernel k) {
  auto within = [&](const Eigen::MatrixXd& S) {
    const Eigen::Index n = S.rows();
    if (n < 2) return k(S.row(0), S.row(0));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) acc += k(S.row(i), S.row(j));
    return 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n - 1));
  };
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.rows();
  double cross = 0.0;
  const bool paired = n == m && n >= 2;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (!paired || i != j) cross += k(A.row(i), B.row(j));
  cross /= paired ? static_cast<double>(n) * static_cast<double>(n - 1)
                  : static_cast<double>(n) * static_cast<double>(m);
  return within(A) + within(B) - 2.0 * cross;
}

}  // namespace

double energy_distance(const SampleSet& a, const SampleSet& b) {
  require_pair(a, b, "energy_distance");
  return two_sample_statistic(
      a.points(), b.points(),
      [](const auto& x, const auto& y) { return -(x - y).norm(); });
}

double median_heuristic(const SampleSet& a, const SampleSet& b) {
  require_pair(a, b, "median_heuristic");
  Eigen::MatrixXd pooled(a.size() + b.size(), a.dim());
  pooled << a.points(), b.points();
  std::vector<double> d;
  const Eigen::Index n = pooled.rows();
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d.push_back((pooled.row(i) - pooled.row(j)).norm());
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const std::size_t h = d.size() / 2;
  const double med = d.size() % 2 ? d[h] : 0.5 * (d[h - 1] + d[h]);
  return med > 0.0 ? med : 1.0;
}

double mmd_rbf(const SampleSet& a, const SampleSet& b,
               std::optional<double> bandwidth) {
  require_pair(a, b, "mmd_rbf");
  const double sigma = bandwidth ? *bandwidth : median_heuristic(a, b);
  if (!(sigma > 0.0)) throw std::invalid_argument("mmd_rbf: bandwidth <= 0");
  const double inv = 1.0 / (2.0 * sigma * sigma);
  return two_sample_statistic(
      a.points(), b.points(), [inv](const auto& x, const auto& y) {
        return std::exp(-(x - y).squaredNorm() * inv);
      });
}

Tensor random_projections(Eigen::Index dim, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("n_projections < 1");
  if (dim < 1) throw std::invalid_argument("projection dimension < 1");
  Tensor p(dim, count);
  for (int l = 0; l < count; ++l) {
    double norm = 0.0;
    do {
      for (Eigen::Index i = 0; i < dim; ++i) p(i, l) = rng.normal();
      norm = p.col(l).norm();
    } while (norm < 1e-12);
    p.col(l) /= norm;
  }
  return p;
}

double sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                          int n_projections, Rng& rng) {
  require_pair(a, b, "sliced_wasserstein");
  const Tensor proj = random_projections(a.dim(), n_projections, rng);
  auto take = [&](const SampleSet& s, Eigen::Index n) -> Eigen::MatrixXd {
    if (s.size() == n) return s.points();
    const auto idx = rng.sample_without_replacement(
        static_cast<std::size_t>(s.size()), static_cast<std::size_t>(n));
    Eigen::MatrixXd out(n, s.dim());
    for (Eigen::Index i = 0; i < n; ++i)
      out.row(i) = s.points().row(static_cast<Eigen::Index>(idx[i]));
    return out;
  };
  const Eigen::Index n = std::min(a.size(), b.size());
  Eigen::MatrixXd pa = take(a, n) * proj;
  Eigen::MatrixXd pb = take(b, n) * proj;
  double acc = 0.0;
  for (int l = 0; l < n_projections; ++l) {
    std::sort(pa.col(l).begin(), pa.col(l).end());
    std::sort(pb.col(l).begin(), pb.col(l).end());
    acc += (pa.col(l) - pb.col(l)).squaredNorm();
  }
  return std::sqrt(acc / (static_cast<double>(n) * n_projections));
}

double gaussian_w2(const GaussianParams& p, const GaussianParams& q) {
  p.validate();
  q.validate();
  if (p.dim() != q.dim())
    throw std::invalid_argument("gaussian_w2: dimension mismatch");
  const Eigen::MatrixXd sq = linalg::sqrtm_psd(q.cov);
  const Eigen::MatrixXd cross =
      linalg::sqrtm_psd(linalg::symmetrize(sq * p.cov * sq));
  const double bures = (p.cov + q.cov - 2.0 * cross).trace();
  const double d2 = (p.mean - q.mean).squaredNorm() + std::max(bures, 0.0);
  return std::sqrt(d2);
}

GaussianFit fit_gaussian(const SampleSet& a) {
  if (a.empty()) throw std::invalid_argument("fit_gaussian: empty set");
  const Eigen::Index n = a.size();
  const Eigen::Index d = a.dim();
  if (n < d + 1)
    throw std::invalid_argument("fit_gaussian: need at least d+1 points");
  GaussianFit fit;
  fit.params.mean = a.mean();
  Eigen::MatrixXd centered = a.points().rowwise() - fit.params.mean.transpose();
  fit.params.cov = linalg::symmetrize(centered.transpose() * centered /
                                      static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.params.cov,
                                                    Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, fit.params.cov.diagonal().maxCoeff());
  if (es.eigenvalues().minCoeff() <= 1e-12 * scale) {
    fit.params.cov += 1e-9 * Eigen::MatrixXd::Identity(d, d);
    fit.regularized = true;
  }
  return fit;
}

Var energy_loss(Graph& g, Var pred, const Tensor& target,
                const Segments& segs) {
  const Tensor& P = g.value(pred);
  if (P.rows() != segs.total() || target.rows() != segs.total() ||
      target.cols() != P.cols())
    throw ShapeError("energy_loss: prediction/target layout mismatch");
  std::vector<Var> terms;
  terms.reserve(static_cast<std::size_t>(segs.count()));
  for (Eigen::Index s = 0; s < segs.count(); ++s) {
    const Eigen::Index n = segs.size(s);
    const Eigen::Index b = segs.begin(s);
    Var p = g.slice_rows(pred, b, n);
    const Tensor t = target.middleRows(b, n);
    Var tv = g.constant(t);
    if (n < 2) {
      // Singletons: no within-set pairs.
      terms.push_back(g.scale(g.sum(g.pairwise_distances(p, tv)), 2.0));
      continue;
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    Tensor offdiag = Tensor::Ones(n, n);
    offdiag.diagonal().setZero();
    Var cross = g.sum(g.mul(g.pairwise_distances(p, tv), g.constant(offdiag)));
    Var within = g.sum(g.pairwise_distances(p, p));
    double wt = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) wt += (t.row(i) - t.row(j)).norm();
    wt = 2.0 * wt / pairs;
    Var term = g.sub(g.scale(cross, 2.0 / pairs), g.scale(within, 1.0 / pairs));
    Tensor c(1, 1);
    c(0, 0) = -wt;
    terms.push_back(g.add(term, g.constant(c)));
  }
  return g.mean(g.concat_rows(terms));
}

Var swd_loss(Graph& g, Var pred, const Tensor& target, const Segments& segs,
             const Tensor& projections) {
  // Copy the shape: adding nodes below may reallocate the graph storage.
  const Eigen::Index rows = g.value(pred).rows();
  const Eigen::Index cols = g.value(pred).cols();
  if (rows != segs.total() || target.rows() != segs.total() ||
      target.cols() != cols || projections.rows() != cols)
    throw ShapeError("swd_loss: prediction/target layout mismatch");
  Var proj = g.matmul(pred, g.constant(projections));
  Var sorted = g.sort_columns(proj, segs);
  Graph scratch;
  Tensor target_sorted =
      scratch.value(scratch.sort_columns(scratch.constant(target * projections), segs));
  Var diff = g.sub(sorted, g.constant(std::move(target_sorted)));
  // Every segment contributes n_s * L squared gaps; average per segment.
  Tensor weights(rows, projections.cols());
  for (Eigen::Index s = 0; s < segs.count(); ++s)
    weights.middleRows(segs.begin(s), segs.size(s))
        .setConstant(1.0 / (static_cast<double>(segs.size(s)) *
                            static_cast<double>(projections.cols()) *
                            static_cast<double>(segs.count())));
  return g.sum(g.mul(g.square(diff), g.constant(std::move(weights))));
}

}  // namespace dct
