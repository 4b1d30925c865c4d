#pragma once

#include <optional>

#include "dct/encoder.hpp"
#include "dct/nn.hpp"
#include "dct/ode.hpp"
#include "dct/rng.hpp"
#include "dct/sample_set.hpp"

namespace dct {

/// Pointwise MLP conditioned on a per-set vector:
/// y_j = MLP([p_j; c_s]) for point j of set s, with SELU between layers and a
/// linear output. The first layer keeps separate point and condition weights
/// so the condition half is evaluated once per set.
class ConditionalMlp {
 public:
  ConditionalMlp() = default;
  ConditionalMlp(const std::string& name, Eigen::Index point_dim,
                 Eigen::Index cond_dim, Eigen::Index hidden,
                 Eigen::Index out_dim, int layers, Rng& rng);

  Eigen::Index point_dim() const { return point_dim_; }
  Eigen::Index cond_dim() const { return cond_dim_; }
  Eigen::Index out_dim() const { return rest_.empty() ? 0 : rest_.back().out(); }

  Var forward(Graph& g, Var points, Var cond, const Segments& segs);
  std::vector<Parameter*> parameters();
  /// Zeroes the output layer's weight (output becomes its bias).
  void zero_output_weight();
  Linear& output_layer() { return rest_.back(); }

 private:
  Eigen::Index point_dim_ = 0;
  Eigen::Index cond_dim_ = 0;
  Linear first_;
  Parameter cond_weight_;
  std::vector<Linear> rest_;
};

/// Deterministic conditional map T(x | z_src[, z_tgt]) trained with a set
/// loss (SWD or energy). With `noise_dim > 0` it takes extra per-point noise
/// T(x, xi | ...), the stochastic energy sampler.
struct RegressionMap {
  ConditionalMlp net;
  Eigen::Index data_dim = 0;
  Eigen::Index noise_dim = 0;

  RegressionMap() = default;
  RegressionMap(Eigen::Index dim, Eigen::Index cond_dim, Eigen::Index hidden,
                Eigen::Index noise_dim, Rng& rng);
};

/// Time-conditional velocity v(x, t | z_src[, z_tgt]); t enters as a raw
/// scalar input.
struct VelocityField {
  ConditionalMlp net;
  Eigen::Index data_dim = 0;

  VelocityField() = default;
  VelocityField(Eigen::Index dim, Eigen::Index cond_dim, Eigen::Index hidden,
                Rng& rng);

  /// Velocity at (x, t) for the rows of x under one condition vector.
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& x, double t,
                           const Eigen::RowVectorXd& cond);
};

/// [z_src; z_tgt] (or z_src alone) after checking dimensions.
Eigen::RowVectorXd condition_vector(Eigen::Index expected_dim,
                                    const Embedding& z_src,
                                    const std::optional<Embedding>& z_tgt);

/// Applies a deterministic map to every point of S.
SampleSet transport_apply(RegressionMap& map, const SampleSet& s,
                          const Embedding& z_src,
                          const std::optional<Embedding>& z_tgt);

/// One draw per row of x from the stochastic map: T(x_j, xi_j | z).
Eigen::MatrixXd stochastic_energy_sample(RegressionMap& map,
                                         const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& xi,
                                         const Embedding& z_src,
                                         const std::optional<Embedding>& z_tgt);

/// x_t = (1 - t) x0 + t x1 + sigma eps, row-wise with t given per row.
Eigen::MatrixXd fm_interpolate(const Eigen::MatrixXd& x0,
                               const Eigen::MatrixXd& x1,
                               const Eigen::VectorXd& t, double sigma,
                               const Eigen::MatrixXd& eps);

/// Conditional flow-matching loss: mean over points of
/// |v(x_t, t | c) - (x1 - x0)|^2 with t ~ U[0,1] and eps ~ N(0, I) per point.
/// Rows of x0/x1 are grouped by segs; `cond` has one row per segment.
Var fm_loss(Graph& g, VelocityField& field, const Eigen::MatrixXd& x0,
            const Eigen::MatrixXd& x1, Var cond, const Segments& segs,
            double sigma, Rng& rng);

/// Integrates dx/dt = v(x, t | cond) from t = 0 to 1 for every row of x0.
ODEResult fm_integrate(VelocityField& field, const Eigen::MatrixXd& x0,
                       const Eigen::RowVectorXd& cond,
                       const ODESolverConfig& cfg);

}  // namespace dct
