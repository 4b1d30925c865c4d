#pragma once

#include <optional>
#include <vector>

#include "dct/records.hpp"
#include "dct/training.hpp"

namespace dct {

/// Linear map z_tgt = W z_src + b.
struct RidgePredictor {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
  double alpha = 0.0;
};

/// 13 log-spaced values from 1e-6 to 1e6.
std::vector<double> default_alpha_grid();

/// Ridge fit with an unpenalized intercept (columns centered first).
/// Rows of X and Y are paired observations.
RidgePredictor fit_ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                         double alpha);

/// Selects alpha by k-fold cross-validated mean squared error (folds from a
/// seeded shuffle), then refits on all rows.
RidgePredictor fit_ridge_cv(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            int folds, const std::vector<double>& alpha_grid,
                            std::uint64_t seed);

Embedding predict_target_embedding(const RidgePredictor& pred,
                                   const Embedding& z_src);

enum class Regime { supervised_sc, semi_supervised_stc, oracle_stc };

std::string to_string(Regime r);

struct RegimeSpec {
  Regime regime = Regime::supervised_sc;
  TransportModel* model = nullptr;
  const RidgePredictor* predictor = nullptr;  // semi-supervised only

  void validate() const;
};

struct TestPair {
  SampleSet source;
  SampleSet target;             // ground truth, used for scoring
  SampleSet oracle_view;        // set the oracle embeds; empty: target
  Eigen::VectorXd source_mean;  // true mean of the source law
};

/// Transported source set under the regime. Only the oracle regime reads
/// `target`; the other regimes see the source alone.
SampleSet regime_transport(const RegimeSpec& spec, const SampleSet& source,
                           const SampleSet* target, Rng& rng);

/// One record per (pair, metric). `base` supplies the experiment, model and
/// seed columns. Split is IID when |mu_src|_inf <= iid_radius.
std::vector<MetricsRecord> evaluate_regime(const RegimeSpec& spec,
                                           const std::vector<TestPair>& pairs,
                                           const std::vector<MetricKind>& metrics,
                                           const MetricsRecord& base,
                                           double iid_radius = 2.5);

}  // namespace dct
