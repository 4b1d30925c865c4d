#pragma once

// Reference implementations used only by tests. They are written against
// plain arrays and share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dct/tensor.hpp"

namespace oracle {

using Points = std::vector<std::vector<double>>;

inline Points to_points(const Eigen::MatrixXd& m) {
  Points p(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return p;
}

inline double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

/// U-statistic two-sample form with kernel k:
///   mean_{i!=j} k(a_i,a_j) + mean_{i!=j} k(b_i,b_j) - 2 * cross,
/// where cross skips i == j when both sets have the same size n >= 2.
/// A singleton's within term is k(x, x).
inline double two_sample(const Points& a, const Points& b,
                         const std::function<double(const std::vector<double>&,
                                                    const std::vector<double>&)>& k) {
  auto within = [&](const Points& s) {
    if (s.size() == 1) return k(s[0], s[0]);
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (i != j) {
          acc += k(s[i], s[j]);
          ++cnt;
        }
    return acc / static_cast<double>(cnt);
  };
  const bool paired = a.size() == b.size() && a.size() >= 2;
  double cross = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (!paired || i != j) {
        cross += k(a[i], b[j]);
        ++cnt;
      }
  return within(a) + within(b) - 2.0 * cross / static_cast<double>(cnt);
}

inline double energy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return two_sample(to_points(a), to_points(b), [](const auto& x, const auto& y) {
    return -std::sqrt(dist2(x, y));
  });
}

inline double median_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Points p = to_points(a);
  const Points q = to_points(b);
  p.insert(p.end(), q.begin(), q.end());
  std::vector<double> d;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) d.push_back(std::sqrt(dist2(p[i], p[j])));
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const double med = d.size() % 2 ? d[d.size() / 2]
                                   : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  return med > 0.0 ? med : 1.0;
}

inline double mmd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma) {
  return two_sample(to_points(a), to_points(b), [sigma](const auto& x, const auto& y) {
    return std::exp(-dist2(x, y) / (2.0 * sigma * sigma));
  });
}

/// Central finite-difference gradient of a scalar function of a matrix.
inline Eigen::MatrixXd fd_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                   Eigen::MatrixXd x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x.data()[i];
    x.data()[i] = x0 + h;
    const double fp = f(x);
    x.data()[i] = x0 - h;
    const double fm = f(x);
    x.data()[i] = x0;
    g.data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(1, max|b|): relative to the gradient scale, absolute
/// near zero.
inline double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Builds a scalar on a graph from one variable leaf; compares the tape
/// gradient with finite differences. Returns the relative error.
inline double check_op(const std::function<dct::Var(dct::Graph&, dct::Var)>& build,
                       const Eigen::MatrixXd& x, double h = 1e-5) {
  dct::Graph g;
  const dct::Var v = g.variable(x);
  g.backward(build(g, v));
  const Eigen::MatrixXd analytic = g.grad(v);
  const Eigen::MatrixXd numeric = fd_gradient(
      [&](const Eigen::MatrixXd& xx) {
        dct::Graph g2;
        return g2.value(build(g2, g2.variable(xx)))(0, 0);
      },
      x, h);
  return rel_error(analytic, numeric);
}

/// Same check against every entry of a parameter set.
inline double check_params(const std::function<double()>& loss_value,
                           const std::function<void()>& loss_backward,
                           const std::vector<dct::Parameter*>& params, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  loss_backward();
  double worst = 0.0;
  for (auto* p : params) {
    const Eigen::MatrixXd analytic = p->grad;
    Eigen::MatrixXd numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double x0 = p->value.data()[i];
      p->value.data()[i] = x0 + h;
      const double fp = loss_value();
      p->value.data()[i] = x0 - h;
      const double fm = loss_value();
      p->value.data()[i] = x0;
      numeric.data()[i] = (fp - fm) / (2.0 * h);
    }
    worst = std::max(worst, rel_error(analytic, numeric));
  }
  return worst;
}

}  // namespace oracle
