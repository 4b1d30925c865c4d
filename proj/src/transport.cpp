#include "dct/transport.hpp"

#include <cmath>
#include <stdexcept>

namespace dct {

ConditionalMlp::ConditionalMlp(const std::string& name, Eigen::Index point_dim,
                               Eigen::Index cond_dim, Eigen::Index hidden,
                               Eigen::Index out_dim, int layers, Rng& rng)
    : point_dim_(point_dim), cond_dim_(cond_dim) {
  if (layers < 2) throw std::invalid_argument("ConditionalMlp: layers < 2");
  if (point_dim < 1 || cond_dim < 0 || hidden < 1 || out_dim < 1)
    throw std::invalid_argument("ConditionalMlp: invalid dimensions");
  // LeCun scale for the full fan-in of the concatenated input.
  const double sd =
      1.0 / std::sqrt(static_cast<double>(point_dim + cond_dim));
  first_ = Linear(name + ".0", point_dim, hidden, Init::zeros, rng);
  for (Eigen::Index i = 0; i < point_dim; ++i)
    for (Eigen::Index j = 0; j < hidden; ++j)
      first_.weight.value(i, j) = sd * rng.normal();
  Tensor cw(cond_dim, hidden);
  for (Eigen::Index i = 0; i < cond_dim; ++i)
    for (Eigen::Index j = 0; j < hidden; ++j) cw(i, j) = sd * rng.normal();
  cond_weight_ = Parameter(name + ".0.cond", std::move(cw));
  for (int l = 1; l < layers; ++l) {
    const bool last = l + 1 == layers;
    rest_.emplace_back(name + "." + std::to_string(l), hidden,
                       last ? out_dim : hidden,
                       last ? Init::scaled_uniform : Init::lecun_normal, rng);
  }
}

Var ConditionalMlp::forward(Graph& g, Var points, Var cond,
                            const Segments& segs) {
  if (g.value(points).cols() != point_dim_)
    throw ShapeError("ConditionalMlp: point input has wrong width");
  if (g.value(cond).cols() != cond_dim_ || g.value(cond).rows() != segs.count())
    throw ShapeError("ConditionalMlp: condition has wrong shape");
  Var h = first_(g, points);
  if (cond_dim_ > 0)
    h = g.add(h, g.segment_expand(g.matmul(cond, g.parameter(cond_weight_)), segs));
  h = g.selu(h);
  for (std::size_t i = 0; i < rest_.size(); ++i) {
    h = rest_[i](g, h);
    if (i + 1 < rest_.size()) h = g.selu(h);
  }
  return h;
}

std::vector<Parameter*> ConditionalMlp::parameters() {
  std::vector<Parameter*> p;
  first_.collect(p);
  p.push_back(&cond_weight_);
  for (auto& l : rest_) l.collect(p);
  return p;
}

void ConditionalMlp::zero_output_weight() { rest_.back().weight.value.setZero(); }

RegressionMap::RegressionMap(Eigen::Index dim, Eigen::Index cond_dim,
                             Eigen::Index hidden, Eigen::Index noise,
                             Rng& rng)
    : net("map", dim + noise, cond_dim, hidden, dim, 4, rng),
      data_dim(dim),
      noise_dim(noise) {}

VelocityField::VelocityField(Eigen::Index dim, Eigen::Index cond_dim,
                             Eigen::Index hidden, Rng& rng)
    : net("field", dim + 1, cond_dim, hidden, dim, 4, rng), data_dim(dim) {}

Eigen::MatrixXd VelocityField::evaluate(const Eigen::MatrixXd& x, double t,
                                        const Eigen::RowVectorXd& cond) {
  Graph g;
  Eigen::MatrixXd in(x.rows(), x.cols() + 1);
  in.leftCols(x.cols()) = x;
  in.col(x.cols()).setConstant(t);
  Var out = net.forward(g, g.constant(std::move(in)), g.constant(cond),
                        Segments::uniform(1, x.rows()));
  return g.value(out);
}

Eigen::RowVectorXd condition_vector(Eigen::Index expected_dim,
                                    const Embedding& z_src,
                                    const std::optional<Embedding>& z_tgt) {
  const Eigen::Index got = z_src.dim() + (z_tgt ? z_tgt->dim() : 0);
  if (got != expected_dim)
    throw std::invalid_argument(
        "embedding dimension mismatch: map expects " +
        std::to_string(expected_dim) + " conditioning values, got " +
        std::to_string(got));
  Eigen::RowVectorXd c(got);
  c.head(z_src.dim()) = z_src.z.transpose();
  if (z_tgt) c.tail(z_tgt->dim()) = z_tgt->z.transpose();
  return c;
}

SampleSet transport_apply(RegressionMap& map, const SampleSet& s,
                          const Embedding& z_src,
                          const std::optional<Embedding>& z_tgt) {
  if (map.noise_dim != 0)
    throw std::invalid_argument("transport_apply: map requires noise input");
  if (s.dim() != map.data_dim)
    throw std::invalid_argument("transport_apply: point dimension mismatch");
  const Eigen::RowVectorXd c = condition_vector(map.net.cond_dim(), z_src, z_tgt);
  Graph g;
  Var out = map.net.forward(g, g.constant(s.points()), g.constant(c),
                            Segments::uniform(1, s.size()));
  return SampleSet(g.value(out));
}

Eigen::MatrixXd stochastic_energy_sample(RegressionMap& map,
                                         const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& xi,
                                         const Embedding& z_src,
                                         const std::optional<Embedding>& z_tgt) {
  if (map.noise_dim < 1 || xi.cols() != map.noise_dim || xi.rows() != x.rows())
    throw std::invalid_argument("stochastic_energy_sample: noise shape mismatch");
  const Eigen::RowVectorXd c = condition_vector(map.net.cond_dim(), z_src, z_tgt);
  Eigen::MatrixXd in(x.rows(), x.cols() + xi.cols());
  in << x, xi;
  Graph g;
  Var out = map.net.forward(g, g.constant(std::move(in)), g.constant(c),
                            Segments::uniform(1, x.rows()));
  return g.value(out);
}

Eigen::MatrixXd fm_interpolate(const Eigen::MatrixXd& x0,
                               const Eigen::MatrixXd& x1,
                               const Eigen::VectorXd& t, double sigma,
                               const Eigen::MatrixXd& eps) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols() || t.size() != x0.rows())
    throw std::invalid_argument("fm_interpolate: shape mismatch");
  if ((t.array() < 0.0).any() || (t.array() > 1.0).any())
    throw std::invalid_argument("fm_interpolate: t outside [0, 1]");
  Eigen::MatrixXd xt = (1.0 - t.array()).matrix().asDiagonal() * x0;
  xt += t.asDiagonal() * x1;
  if (sigma != 0.0) xt += sigma * eps;
  return xt;
}

Var fm_loss(Graph& g, VelocityField& field, const Eigen::MatrixXd& x0,
            const Eigen::MatrixXd& x1, Var cond, const Segments& segs,
            double sigma, Rng& rng) {
  const Eigen::Index n = x0.rows();
  if (x1.rows() != n || segs.total() != n)
    throw std::invalid_argument("fm_loss: shape mismatch");
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = rng.uniform();
  const Eigen::MatrixXd eps = rng.normal_matrix(n, x0.cols());
  Eigen::MatrixXd in(n, x0.cols() + 1);
  in.leftCols(x0.cols()) = fm_interpolate(x0, x1, t, sigma, eps);
  in.col(x0.cols()) = t;
  Var v = field.net.forward(g, g.constant(std::move(in)), cond, segs);
  Var err = g.sub(v, g.constant(x1 - x0));
  return g.scale(g.sum(g.square(err)), 1.0 / static_cast<double>(n));
}

ODEResult fm_integrate(VelocityField& field, const Eigen::MatrixXd& x0,
                       const Eigen::RowVectorXd& cond,
                       const ODESolverConfig& cfg) {
  if (cond.size() != field.net.cond_dim())
    throw std::invalid_argument("fm_integrate: condition dimension mismatch");
  return ode_integrate(
      [&](double t, const Eigen::MatrixXd& x) { return field.evaluate(x, t, cond); },
      x0, cfg);
}

}  // namespace dct
