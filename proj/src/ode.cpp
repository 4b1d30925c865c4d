#include "dct/ode.hpp"

#include <algorithm>
#include <cmath>

namespace dct {

namespace {

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// Difference between 5th-order and embedded 4th-order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Eigen::MatrixXd& err, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& xn, double atol, double rtol) {
  const Eigen::MatrixXd sc =
      (atol + rtol * x.cwiseAbs().cwiseMax(xn.cwiseAbs()).array()).matrix();
  const Eigen::MatrixXd r = err.cwiseQuotient(sc);
  const double cols = static_cast<double>(std::max<Eigen::Index>(x.cols(), 1));
  return std::sqrt(r.cwiseAbs2().rowwise().sum().maxCoeff() / cols);
}

}  // namespace

void ODESolverConfig::validate() const {
  if (!(atol > 0.0) || !(rtol > 0.0))
    throw std::invalid_argument("ODESolverConfig: tolerances must be positive");
  if (max_steps < 1) throw std::invalid_argument("ODESolverConfig: max_steps < 1");
  if (initial_step < 0.0)
    throw std::invalid_argument("ODESolverConfig: negative initial step");
}

ODEResult ode_integrate(const VectorField& f, Eigen::MatrixXd x0,
                        const ODESolverConfig& cfg, double t0, double t1) {
  cfg.validate();
  ODEResult res;
  if (x0.size() == 0 || t1 == t0) {
    res.state = std::move(x0);
    return res;
  }
  const double span = t1 - t0;
  const double dir = span > 0 ? 1.0 : -1.0;
  double t = t0;
  Eigen::MatrixXd x = std::move(x0);
  Eigen::MatrixXd k1 = f(t, x);
  ++res.evaluations;

  double h = cfg.initial_step;
  if (h == 0.0) {
    // Hairer-Norsett-Wanner starting step heuristic.
    const double d0 = error_norm(x, x, x, cfg.atol, cfg.rtol);
    const double d1 = error_norm(k1, x, x, cfg.atol, cfg.rtol);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, std::abs(span));
    const Eigen::MatrixXd x1 = x + dir * h0 * k1;
    const Eigen::MatrixXd k = f(t + dir * h0, x1);
    ++res.evaluations;
    const double d2 = error_norm(k - k1, x, x, cfg.atol, cfg.rtol) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15
                          ? std::max(1e-6, h0 * 1e-3)
                          : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min(std::abs(h), std::abs(span));

  constexpr double safety = 0.9, min_factor = 0.2, max_factor = 10.0;
  constexpr double beta = 0.04, expo = 0.2 - beta * 0.75;
  double err_prev = 1e-4;
  bool last_rejected = false;

  while (dir * (t1 - t) > 0.0) {
    if (res.accepted + res.rejected >= cfg.max_steps)
      throw ODEError("ode_integrate: maximum number of steps exceeded");
    if (std::abs(t1 - t) <= h * (1.0 + 1e-12)) h = std::abs(t1 - t);
    const double hs = dir * h;
    const Eigen::MatrixXd k2 = f(t + c2 * hs, x + hs * (a21 * k1));
    const Eigen::MatrixXd k3 = f(t + c3 * hs, x + hs * (a31 * k1 + a32 * k2));
    const Eigen::MatrixXd k4 =
        f(t + c4 * hs, x + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const Eigen::MatrixXd k5 =
        f(t + c5 * hs, x + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Eigen::MatrixXd k6 = f(
        t + hs, x + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Eigen::MatrixXd xn =
        x + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Eigen::MatrixXd k7 = f(t + hs, xn);
    res.evaluations += 6;
    if (!xn.allFinite()) throw ODEError("ode_integrate: non-finite state");

    const Eigen::MatrixXd err =
        hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = error_norm(err, x, xn, cfg.atol, cfg.rtol);

    if (en <= 1.0) {
      t = (std::abs(t1 - (t + hs)) <= 1e-14 * std::abs(span)) ? t1 : t + hs;
      x = xn;
      k1 = k7;  // first-same-as-last
      ++res.accepted;
      double fac = en == 0.0 ? max_factor
                             : safety * std::pow(err_prev, beta) / std::pow(en, expo);
      fac = std::clamp(fac, min_factor, last_rejected ? 1.0 : max_factor);
      h *= fac;
      err_prev = std::max(en, 1e-4);
      last_rejected = false;
    } else {
      ++res.rejected;
      h *= std::max(min_factor, safety / std::pow(en, expo));
      last_rejected = true;
    }
    if (h < 1e-14 * std::abs(span))
      throw ODEError("ode_integrate: step size underflow");
  }
  res.state = std::move(x);
  return res;
}

}  // namespace dct
