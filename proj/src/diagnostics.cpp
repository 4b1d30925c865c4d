#include "dct/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dct/linalg.hpp"
#include "dct/metrics.hpp"

namespace dct {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd average_ranks(const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return x(a) < x(b); });
  Eigen::VectorXd r(x.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x(idx[j + 1]) == x(idx[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(idx[k]) = avg;
    i = j + 1;
  }
  return r;
}

double mean_centered_cost(const Eigen::MatrixXd& Xc, const Eigen::MatrixXd& Yc,
                          const std::vector<std::size_t>* perm) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < Xc.rows(); ++i) {
    const Eigen::Index j = perm ? static_cast<Eigen::Index>((*perm)[i]) : i;
    s += (Xc.row(i) - Yc.row(j)).norm();
  }
  return s / static_cast<double>(Xc.rows());
}

}  // namespace

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length vectors, n >= 2");
  const Eigen::VectorXd ra = average_ranks(a);
  const Eigen::VectorXd rb = average_ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean();
  const Eigen::VectorXd cb = rb.array() - rb.mean();
  const double den = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  return den > 0.0 ? ca.dot(cb) / den : kNaN;
}

AlignmentReport alignment_from_samples(const Eigen::MatrixXd& X,
                                       const Eigen::MatrixXd& Yhat,
                                       const Eigen::MatrixXd& Y, int n_perm,
                                       Rng& rng) {
  if (X.rows() < 2 || Yhat.rows() != X.rows() || Y.rows() != X.rows() ||
      Yhat.cols() != X.cols() || Y.cols() != X.cols())
    throw std::invalid_argument("alignment: need n >= 2 rows of equal shape");
  if (n_perm < 1) throw std::invalid_argument("alignment: n_perm < 1");
  const Eigen::RowVectorXd mu_u = X.colwise().mean();
  const Eigen::RowVectorXd mu_v = Y.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mu_u;
  const Eigen::MatrixXd Yhc = Yhat.rowwise() - mu_v;
  const Eigen::MatrixXd Yc = Y.rowwise() - mu_v;

  AlignmentReport r;
  r.n_samples = static_cast<int>(X.rows());
  r.n_permutations = n_perm;
  r.d_pair = mean_centered_cost(Xc, Yhc, nullptr);
  double acc = 0.0;
  for (int p = 0; p < n_perm; ++p) {
    const auto perm = rng.permutation(static_cast<std::size_t>(X.rows()));
    acc += mean_centered_cost(Xc, Yc, &perm);
  }
  r.d_rand = acc / n_perm;
  r.ratio = r.d_rand > 0.0 ? r.d_pair / r.d_rand : kNaN;

  const Eigen::VectorXd delta = (mu_v - mu_u).transpose();
  if (delta.norm() > 0.0) {
    r.spearman_rho = spearman(X * delta, Yhat * delta);
    r.rho_defined = std::isfinite(r.spearman_rho);
  } else {
    r.spearman_rho = kNaN;
  }
  return r;
}

AlignmentReport alignment_diagnostic(TransportModel& model,
                                     const DistributionParams& u,
                                     const DistributionParams& v, int n,
                                     int n_perm, Rng& rng) {
  if (n < 2) throw std::invalid_argument("alignment_diagnostic: n < 2");
  const SampleSet xs = draw_set(u, n, rng);
  const SampleSet ys = draw_set(v, n, rng);
  const Embedding zu = model.embed(xs);
  const Embedding zv = model.embed(ys);
  const SampleSet yhat = model.has_target_slot()
                             ? model.transport(xs, zu, zv, rng)
                             : model.transport(xs, zu, std::nullopt, rng);
  return alignment_from_samples(xs.points(), yhat.points(), ys.points(), n_perm, rng);
}

AlignmentReport average_reports(const std::vector<AlignmentReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: empty");
  AlignmentReport a;
  int rho_count = 0;
  double rho = 0.0;
  for (const auto& r : reports) {
    a.d_pair += r.d_pair;
    a.d_rand += r.d_rand;
    a.ratio += r.ratio;
    if (r.rho_defined) {
      rho += r.spearman_rho;
      ++rho_count;
    }
  }
  const auto n = static_cast<double>(reports.size());
  a.d_pair /= n;
  a.d_rand /= n;
  a.ratio /= n;
  a.rho_defined = rho_count > 0;
  a.spearman_rho = rho_count > 0 ? rho / rho_count : kNaN;
  a.n_samples = reports.front().n_samples;
  a.n_permutations = reports.front().n_permutations;
  return a;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope: need two equal-length series");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return kNaN;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : kNaN;
}

namespace {

void finish_slope(ScalingReport& r) {
  std::vector<double> m(r.m.begin(), r.m.end());
  r.slope = loglog_slope(m, r.value);
  r.slope_defined = std::isfinite(r.slope);
}

}  // namespace

ScalingReport clt_scaling(const SetEmbedder& embed, const DistributionParams& law,
                          const std::vector<int>& m_list, int reps, Rng& rng) {
  if (m_list.size() < 3) throw std::invalid_argument("clt_scaling: need >= 3 sizes");
  if (reps < 30) throw std::invalid_argument("clt_scaling: need >= 30 reps");
  ScalingReport r;
  for (int m : m_list) {
    if (m < 1) throw std::invalid_argument("clt_scaling: m < 1");
    Eigen::MatrixXd Z;
    for (int k = 0; k < reps; ++k) {
      const Eigen::VectorXd z = embed(draw_set(law, m, rng));
      if (k == 0) Z.resize(reps, z.size());
      Z.row(k) = z.transpose();
    }
    const Eigen::MatrixXd C = Z.rowwise() - Z.colwise().mean();
    const Eigen::MatrixXd cov = C.transpose() * C / static_cast<double>(reps - 1);
    r.m.push_back(m);
    r.value.push_back(std::sqrt(cov.trace() / static_cast<double>(cov.rows())));
    r.covariance = cov;
  }
  finish_slope(r);
  return r;
}

ScalingReport plugin_loss_convergence(TransportModel& model,
                                      const DistributionParams& u,
                                      const DistributionParams& v,
                                      const std::vector<int>& m_list, int reps,
                                      Rng& rng, const PluginConfig& cfg) {
  if (!model.has_target_slot())
    throw std::invalid_argument("plugin_loss_convergence: needs an STC model");
  if (reps < 1 || cfg.eval_size < 2 || cfg.pool_size < cfg.eval_size)
    throw std::invalid_argument("plugin_loss_convergence: invalid sizes");
  const SampleSet pu = draw_set(u, cfg.pool_size, rng);
  const SampleSet pv = draw_set(v, cfg.pool_size, rng);
  const SampleSet xe(pu.points().topRows(cfg.eval_size));
  const SampleSet ye(pv.points().topRows(cfg.eval_size));
  // Deterministic generators only: the noise stream is fixed per evaluation.
  auto loss = [&](const Embedding& zu, const Embedding& zv) {
    Rng noise(0, "plugin.noise");
    return energy_distance(model.transport(xe, zu, zv, noise), ye);
  };
  const double full = loss(model.embed(pu), model.embed(pv));

  auto subsample = [&](const SampleSet& s, int m) {
    const auto idx = rng.sample_without_replacement(static_cast<std::size_t>(s.size()),
                                                    static_cast<std::size_t>(m));
    Eigen::MatrixXd out(m, s.dim());
    for (int i = 0; i < m; ++i) out.row(i) = s.points().row(static_cast<Eigen::Index>(idx[i]));
    return SampleSet(std::move(out));
  };
  ScalingReport r;
  for (int m : m_list) {
    if (m < 1 || m > cfg.pool_size)
      throw std::invalid_argument("plugin_loss_convergence: m outside [1, pool]");
    double gap = 0.0;
    for (int k = 0; k < reps; ++k) {
      const Embedding zu = model.embed(subsample(pu, m));
      const Embedding zv = model.embed(subsample(pv, m));
      gap += std::abs(loss(zu, zv) - full);
    }
    r.m.push_back(m);
    r.value.push_back(gap / reps);
  }
  finish_slope(r);
  return r;
}

GaussianParams gaussian_ot_displacement(const GaussianParams& p,
                                        const GaussianParams& q, double t) {
  p.validate();
  q.validate();
  if (p.dim() != q.dim())
    throw std::invalid_argument("gaussian_ot_displacement: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("gaussian_ot_displacement: t outside [0, 1]");
  if (t == 0.0) return p;
  if (t == 1.0) return q;
  const Eigen::MatrixXd ps = linalg::sqrtm_psd(p.cov);
  const Eigen::MatrixXd pis = linalg::inv_sqrtm_spd(p.cov);
  const Eigen::MatrixXd T =
      linalg::symmetrize(pis * linalg::sqrtm_psd(linalg::symmetrize(ps * q.cov * ps)) * pis);
  const Eigen::Index d = p.dim();
  const Eigen::MatrixXd M =
      (1.0 - t) * Eigen::MatrixXd::Identity(d, d) + t * T;
  return GaussianParams{(1.0 - t) * p.mean + t * q.mean,
                        linalg::symmetrize(M * p.cov * M)};
}

double TrajectoryReport::mean_gap() const {
  if (w2_gap.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t k = 1; k < w2_gap.size(); ++k) s += w2_gap[k];
  return s / static_cast<double>(w2_gap.size() - 1);
}

TrajectoryReport latent_interpolation_path(TransportModel& model,
                                           const SampleSet& su,
                                           const SampleSet& sv, int k_steps,
                                           Rng& rng) {
  if (!model.has_target_slot())
    throw std::invalid_argument("latent_interpolation_path: model has no target slot");
  if (k_steps < 1) throw std::invalid_argument("latent_interpolation_path: K_steps < 1");
  const Embedding zu = model.embed(su);
  const Embedding zv = model.embed(sv);
  const GaussianParams P = fit_gaussian(su).params;
  const GaussianParams Q = fit_gaussian(sv).params;

  TrajectoryReport r;
  r.endpoint_w2 = gaussian_w2(P, Q);
  SampleSet x = su;
  for (int k = 0; k <= k_steps; ++k) {
    const double t = static_cast<double>(k) / k_steps;
    if (k > 0) {
      const double tp = static_cast<double>(k - 1) / k_steps;
      const Embedding zp{(1.0 - tp) * zu.z + tp * zv.z, false};
      const Embedding zk{(1.0 - t) * zu.z + t * zv.z, false};
      x = model.transport(x, zp, zk, rng);
    }
    r.t.push_back(t);
    r.sets.push_back(x);
    r.fits.push_back(fit_gaussian(x).params);
    r.ot.push_back(gaussian_ot_displacement(P, Q, t));
    r.w2_gap.push_back(gaussian_w2(r.fits.back(), r.ot.back()));
  }
  return r;
}

}  // namespace dct
