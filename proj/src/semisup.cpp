#include "dct/semisup.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dct {

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int e = -6; e <= 6; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

RidgePredictor fit_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                         double alpha) {
  if (X.rows() != Y.rows() || X.rows() < 1)
    throw std::invalid_argument("fit_ridge: X and Y need the same nonzero row count");
  if (!(alpha >= 0.0)) throw std::invalid_argument("fit_ridge: alpha < 0");
  const Eigen::RowVectorXd mx = X.colwise().mean();
  const Eigen::RowVectorXd my = Y.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mx;
  const Eigen::MatrixXd Yc = Y.rowwise() - my;
  Eigen::MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += alpha;
  const Eigen::MatrixXd B = Xc.transpose() * Yc;
  Eigen::MatrixXd coef = A.ldlt().solve(B);  // in x out
  // One refinement step tightens the normal-equation residual.
  coef += A.ldlt().solve(B - A * coef);
  RidgePredictor p;
  p.W = coef.transpose();
  p.b = my.transpose() - p.W * mx.transpose();
  p.alpha = alpha;
  if (!p.W.allFinite() || !p.b.allFinite())
    throw std::runtime_error("fit_ridge: non-finite coefficients");
  return p;
}

RidgePredictor fit_ridge_cv(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            int folds, const std::vector<double>& alpha_grid,
                            std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("fit_ridge_cv: folds < 2");
  if (X.rows() != Y.rows())
    throw std::invalid_argument("fit_ridge_cv: X and Y row counts differ");
  if (X.rows() < folds)
    throw std::invalid_argument("fit_ridge_cv: fewer pairs than folds");
  if (alpha_grid.empty()) throw std::invalid_argument("fit_ridge_cv: empty alpha grid");
  const auto n = static_cast<std::size_t>(X.rows());
  Rng rng(seed, "ridge.folds");
  const auto perm = rng.permutation(n);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % folds);

  double best_mse = std::numeric_limits<double>::infinity();
  double best_alpha = alpha_grid.front();
  for (double alpha : alpha_grid) {
    double mse = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, va;
      for (std::size_t i = 0; i < n; ++i)
        (fold[i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
      const RidgePredictor p = fit_ridge(X(tr, Eigen::all), Y(tr, Eigen::all), alpha);
      const Eigen::MatrixXd pred =
          (X(va, Eigen::all) * p.W.transpose()).rowwise() + p.b.transpose();
      mse += (pred - Y(va, Eigen::all)).squaredNorm() /
             static_cast<double>(va.size() * static_cast<std::size_t>(Y.cols()));
    }
    mse /= folds;
    if (mse < best_mse) {
      best_mse = mse;
      best_alpha = alpha;
    }
  }
  return fit_ridge(X, Y, best_alpha);
}

Embedding predict_target_embedding(const RidgePredictor& pred,
                                   const Embedding& z_src) {
  if (pred.W.cols() != z_src.dim())
    throw std::invalid_argument("predict_target_embedding: dimension mismatch");
  return Embedding{pred.W * z_src.z + pred.b, false};
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::supervised_sc: return "supervised";
    case Regime::semi_supervised_stc: return "semi_supervised";
    case Regime::oracle_stc: return "oracle";
  }
  return "?";
}

void RegimeSpec::validate() const {
  if (!model) throw std::invalid_argument("RegimeSpec: no model");
  if (regime == Regime::supervised_sc && model->has_target_slot())
    throw std::invalid_argument("RegimeSpec: supervised regime needs an SC model");
  if (regime != Regime::supervised_sc && !model->has_target_slot())
    throw std::invalid_argument("RegimeSpec: regime needs an STC model");
  if (regime == Regime::semi_supervised_stc && !predictor)
    throw std::invalid_argument("RegimeSpec: semi-supervised regime needs a predictor");
  if (model->is_onehot())
    throw std::invalid_argument("RegimeSpec: one-hot models are not supported");
}

SampleSet regime_transport(const RegimeSpec& spec, const SampleSet& source,
                           const SampleSet* target, Rng& rng) {
  spec.validate();
  TransportModel& m = *spec.model;
  const Embedding zs = m.embed(source);
  switch (spec.regime) {
    case Regime::supervised_sc:
      return m.transport(source, zs, std::nullopt, rng);
    case Regime::semi_supervised_stc:
      return m.transport(source, zs, predict_target_embedding(*spec.predictor, zs), rng);
    case Regime::oracle_stc:
      if (!target) throw std::invalid_argument("oracle regime needs the target set");
      return m.transport(source, zs, m.embed(*target), rng);
  }
  throw std::invalid_argument("regime_transport: unknown regime");
}

std::vector<MetricsRecord> evaluate_regime(const RegimeSpec& spec,
                                           const std::vector<TestPair>& pairs,
                                           const std::vector<MetricKind>& metrics,
                                           const MetricsRecord& base,
                                           double iid_radius) {
  spec.validate();
  std::vector<MetricsRecord> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const TestPair& p = pairs[i];
    Rng rng(base.seed, "eval.regime", i);
    const SampleSet& view = p.oracle_view.empty() ? p.target : p.oracle_view;
    const SampleSet* tgt = spec.regime == Regime::oracle_stc ? &view : nullptr;
    const SampleSet gen = regime_transport(spec, p.source, tgt, rng);
    const double mu_inf = p.source_mean.cwiseAbs().maxCoeff();
    for (MetricKind k : metrics) {
      MetricsRecord r = base;
      r.regime = to_string(spec.regime);
      r.split = mu_inf <= iid_radius ? "IID" : "OOD";
      r.metric = to_string(k);
      r.value = compute_metric(k, gen, p.target, rng);
      r.mu_inf_bucket = mu_inf_bucket(mu_inf);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace dct
