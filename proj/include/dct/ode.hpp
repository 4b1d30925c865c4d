#pragma once

#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

namespace dct {

struct ODESolverConfig {
  double atol = 1e-4;
  double rtol = 1e-4;
  double initial_step = 0.0;  // 0 selects a step from the initial slope
  long max_steps = 10000;

  void validate() const;
};

class ODEError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ODEResult {
  Eigen::MatrixXd state;
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;
};

/// dx/dt = f(t, x); each row of x is an independent trajectory.
using VectorField = std::function<Eigen::MatrixXd(double, const Eigen::MatrixXd&)>;

/// Dormand-Prince 5(4) with PI step-size control from t0 to t1.
///
/// The error norm is the RMS over a row's coordinates, maximized over rows,
/// so every trajectory meets the tolerance it would meet if integrated alone.
ODEResult ode_integrate(const VectorField& f, Eigen::MatrixXd x0,
                        const ODESolverConfig& cfg, double t0 = 0.0,
                        double t1 = 1.0);

}  // namespace dct
