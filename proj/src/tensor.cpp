#include "dct/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dct {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

void require_segments(const Tensor& x, const Segments& segs, const char* op) {
  if (segs.total() != x.rows())
    throw ShapeError(std::string(op) + ": segments cover " +
                     std::to_string(segs.total()) + " rows, input has " +
                     std::to_string(x.rows()));
  for (Eigen::Index s = 0; s < segs.count(); ++s)
    if (segs.size(s) <= 0)
      throw ShapeError(std::string(op) + ": empty segment");
}

}  // namespace

double selu(double x) {
  return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

Segments Segments::uniform(Eigen::Index count, Eigen::Index size) {
  Segments s;
  for (Eigen::Index i = 0; i < count; ++i) s.push(size);
  return s;
}

Var Graph::push(Tensor value, bool requires_grad, BackwardFn fn,
                const char* op) {
  if (!value.allFinite())
    throw NonFiniteError(std::string("non-finite value produced by ") + op);
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  backward_done_ = false;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size())
    throw std::out_of_range("Graph: invalid variable");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const {
  const Node& n = node(v);
  return n.ref ? *n.ref : n.value;
}

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  const Tensor& val = n.ref ? *n.ref : n.value;
  if (!backward_done_) throw std::logic_error("Graph::grad before backward");
  if (n.grad.size() == 0) return Tensor::Zero(val.rows(), val.cols());
  return n.grad;
}

template <typename Expr>
void Graph::accumulate(Var v, const Expr& delta) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = delta;
  else
    n.grad += delta;
}

Var Graph::constant(Tensor value) {
  return push(std::move(value), false, nullptr, "constant");
}

Var Graph::variable(Tensor value) {
  return push(std::move(value), true, [](Graph&, std::uint32_t) {}, "variable");
}

Var Graph::parameter(Parameter& p) {
  if (!p.value.allFinite())
    throw NonFiniteError("non-finite parameter " + p.name);
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.requires_grad = true;
  n.backward = [](Graph&, std::uint32_t) {};
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
  return push(A * B, needs(a) || needs(b),
              [a, b](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                if (G.needs(a)) G.accumulate(a, gy * G.value(b).transpose());
                if (G.needs(b)) G.accumulate(b, G.value(a).transpose() * gy);
              },
              "matmul");
}

Var Graph::linear(Var x, Parameter& weight, Parameter& bias) {
  const Tensor& X = value(x);
  if (X.cols() != weight.value.rows())
    throw ShapeError("linear: input has " + std::to_string(X.cols()) +
                     " columns, weight " + weight.name + " expects " +
                     std::to_string(weight.value.rows()));
  Tensor y = X * weight.value;
  y.rowwise() += bias.value.row(0);
  Parameter* W = &weight;
  Parameter* b = &bias;
  return push(std::move(y), true,
              [x, W, b](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                W->grad.noalias() += G.value(x).transpose() * gy;
                b->grad.row(0) += gy.colwise().sum();
                if (G.needs(x)) G.accumulate(x, gy * W->value.transpose());
              },
              "linear");
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), needs(a) || needs(b),
              [a, b](Graph& G, std::uint32_t self) {
                G.accumulate(a, G.g(self));
                G.accumulate(b, G.g(self));
              },
              "add");
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), needs(a) || needs(b),
              [a, b](Graph& G, std::uint32_t self) {
                G.accumulate(a, G.g(self));
                if (G.needs(b)) G.accumulate(b, -G.g(self));
              },
              "sub");
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b),
              [a, b](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                if (G.needs(a)) G.accumulate(a, gy.cwiseProduct(G.value(b)));
                if (G.needs(b)) G.accumulate(b, gy.cwiseProduct(G.value(a)));
              },
              "mul");
}

Var Graph::scale(Var a, double s) {
  return push(value(a) * s, needs(a),
              [a, s](Graph& G, std::uint32_t self) {
                G.accumulate(a, G.g(self) * s);
              },
              "scale");
}

Var Graph::add_row(Var a, Var row) {
  const Tensor& A = value(a);
  const Tensor& R = value(row);
  if (R.rows() != 1 || R.cols() != A.cols())
    throw ShapeError("add_row: row must be 1 x cols(a)");
  Tensor y = A;
  y.rowwise() += R.row(0);
  return push(std::move(y), needs(a) || needs(row),
              [a, row](Graph& G, std::uint32_t self) {
                G.accumulate(a, G.g(self));
                if (G.needs(row)) G.accumulate(row, G.g(self).colwise().sum());
              },
              "add_row");
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += value(p).cols();
    req = req || needs(p);
  }
  Tensor y(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    y.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(y), req,
              [ps](Graph& G, std::uint32_t self) {
                Eigen::Index c0 = 0;
                for (Var p : ps) {
                  const Eigen::Index w = G.value(p).cols();
                  if (G.needs(p)) G.accumulate(p, G.g(self).middleCols(c0, w));
                  c0 += w;
                }
              },
              "concat_cols");
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += value(p).rows();
    req = req || needs(p);
  }
  Tensor y(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    y.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(y), req,
              [ps](Graph& G, std::uint32_t self) {
                Eigen::Index r0 = 0;
                for (Var p : ps) {
                  const Eigen::Index h = G.value(p).rows();
                  if (G.needs(p)) G.accumulate(p, G.g(self).middleRows(r0, h));
                  r0 += h;
                }
              },
              "concat_rows");
}

Var Graph::slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  const Tensor& A = value(a);
  if (begin < 0 || count < 0 || begin + count > A.rows())
    throw ShapeError("slice_rows: out of range");
  return push(A.middleRows(begin, count), needs(a),
              [a, begin, count](Graph& G, std::uint32_t self) {
                const Tensor& X = G.value(a);
                Tensor d = Tensor::Zero(X.rows(), X.cols());
                d.middleRows(begin, count) = G.g(self);
                G.accumulate(a, d);
              },
              "slice_rows");
}

Var Graph::slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  const Tensor& A = value(a);
  if (begin < 0 || count < 0 || begin + count > A.cols())
    throw ShapeError("slice_cols: out of range");
  return push(A.middleCols(begin, count), needs(a),
              [a, begin, count](Graph& G, std::uint32_t self) {
                const Tensor& X = G.value(a);
                Tensor d = Tensor::Zero(X.rows(), X.cols());
                d.middleCols(begin, count) = G.g(self);
                G.accumulate(a, d);
              },
              "slice_cols");
}

Var Graph::gather_rows(Parameter& table, std::span<const std::size_t> rows) {
  Tensor y(static_cast<Eigen::Index>(rows.size()), table.value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(table.value.rows()))
      throw std::out_of_range("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(i)) =
        table.value.row(static_cast<Eigen::Index>(rows[i]));
  }
  Parameter* T = &table;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return push(std::move(y), true,
              [T, idx](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                for (std::size_t i = 0; i < idx.size(); ++i)
                  T->grad.row(static_cast<Eigen::Index>(idx[i])) +=
                      gy.row(static_cast<Eigen::Index>(i));
              },
              "gather_rows");
}

Var Graph::segment_mean(Var x, const Segments& segs) {
  const Tensor& X = value(x);
  require_segments(X, segs, "segment_mean");
  Tensor y(segs.count(), X.cols());
  for (Eigen::Index s = 0; s < segs.count(); ++s) {
    // Fixed left-to-right summation order.
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(X.cols());
    for (Eigen::Index r = segs.begin(s); r < segs.begin(s) + segs.size(s); ++r)
      acc += X.row(r);
    y.row(s) = acc / static_cast<double>(segs.size(s));
  }
  return push(std::move(y), needs(x),
              [x, segs](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                Tensor d(segs.total(), gy.cols());
                for (Eigen::Index s = 0; s < segs.count(); ++s)
                  d.middleRows(segs.begin(s), segs.size(s)).rowwise() =
                      gy.row(s) / static_cast<double>(segs.size(s));
                G.accumulate(x, d);
              },
              "segment_mean");
}

Var Graph::segment_expand(Var x, const Segments& segs) {
  const Tensor& X = value(x);
  if (X.rows() != segs.count())
    throw ShapeError("segment_expand: one row per segment required");
  Tensor y(segs.total(), X.cols());
  for (Eigen::Index s = 0; s < segs.count(); ++s)
    y.middleRows(segs.begin(s), segs.size(s)).rowwise() = X.row(s);
  return push(std::move(y), needs(x),
              [x, segs](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                Tensor d(segs.count(), gy.cols());
                for (Eigen::Index s = 0; s < segs.count(); ++s)
                  d.row(s) = gy.middleRows(segs.begin(s), segs.size(s))
                                 .colwise()
                                 .sum();
                G.accumulate(x, d);
              },
              "segment_expand");
}

Var Graph::selu(Var x) {
  const auto a = value(x).array();
  Tensor y = (a > 0.0)
                 .select(kSeluScale * a,
                         (kSeluScale * kSeluAlpha) * (a.min(0.0).exp() - 1.0))
                 .matrix();
  return push(std::move(y), needs(x),
              [x](Graph& G, std::uint32_t self) {
                const auto a = G.value(x).array();
                const auto y = G.value(Var{self}).array();
                Tensor d = (a > 0.0)
                               .select(Tensor::Constant(a.rows(), a.cols(), kSeluScale).array(),
                                       y + kSeluScale * kSeluAlpha)
                               .matrix();
                G.accumulate(x, d.cwiseProduct(G.g(self)));
              },
              "selu");
}

Var Graph::gelu(Var x) {
  Tensor y = value(x).unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  });
  return push(std::move(y), needs(x),
              [x](Graph& G, std::uint32_t self) {
                Tensor d = G.value(x).unaryExpr([](double v) {
                  return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
                         v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
                });
                G.accumulate(x, d.cwiseProduct(G.g(self)));
              },
              "gelu");
}

Var Graph::square(Var x) {
  return push(value(x).cwiseAbs2(), needs(x),
              [x](Graph& G, std::uint32_t self) {
                G.accumulate(x, 2.0 * G.value(x).cwiseProduct(G.g(self)));
              },
              "square");
}

Var Graph::sqrt(Var x) {
  const Tensor& X = value(x);
  if ((X.array() < 0.0).any()) throw NonFiniteError("sqrt of negative value");
  return push(X.cwiseSqrt(), needs(x),
              [x](Graph& G, std::uint32_t self) {
                const Tensor& Y = G.value(Var{self});
                Tensor d = Y.unaryExpr(
                    [](double v) { return v > 0.0 ? 0.5 / v : 0.0; });
                G.accumulate(x, d.cwiseProduct(G.g(self)));
              },
              "sqrt");
}

Var Graph::normalize_rows(Var x) {
  const Tensor& X = value(x);
  Eigen::VectorXd norms = X.rowwise().norm();
  if ((norms.array() <= 0.0).any())
    throw NonFiniteError("normalize_rows: zero row");
  Tensor y = norms.cwiseInverse().asDiagonal() * X;
  return push(std::move(y), needs(x),
              [x](Graph& G, std::uint32_t self) {
                const Tensor& Y = G.value(Var{self});
                const Tensor& gy = G.g(self);
                Eigen::VectorXd norms = G.value(x).rowwise().norm();
                Eigen::VectorXd dots = Y.cwiseProduct(gy).rowwise().sum();
                Tensor d = gy - dots.asDiagonal() * Y;
                G.accumulate(x, norms.cwiseInverse().asDiagonal() * d);
              },
              "normalize_rows");
}

Var Graph::sort_columns(Var x) {
  return sort_columns(x, Segments::uniform(1, value(x).rows()));
}

Var Graph::sort_columns(Var x, const Segments& segs) {
  const Tensor& X = value(x);
  require_segments(X, segs, "sort_columns");
  // order(r, j): input row that lands in output row r of column j.
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> order(X.rows(),
                                                                    X.cols());
  Tensor y(X.rows(), X.cols());
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index s = 0; s < segs.count(); ++s) {
      const Eigen::Index b = segs.begin(s);
      const Eigen::Index n = segs.size(s);
      idx.resize(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), b);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](Eigen::Index p, Eigen::Index q) {
                         return X(p, j) < X(q, j);
                       });
      for (Eigen::Index k = 0; k < n; ++k) {
        order(b + k, j) = idx[static_cast<std::size_t>(k)];
        y(b + k, j) = X(idx[static_cast<std::size_t>(k)], j);
      }
    }
  }
  return push(std::move(y), needs(x),
              [x, order](Graph& G, std::uint32_t self) {
                const Tensor& gy = G.g(self);
                Tensor d(gy.rows(), gy.cols());
                for (Eigen::Index j = 0; j < gy.cols(); ++j)
                  for (Eigen::Index r = 0; r < gy.rows(); ++r)
                    d(order(r, j), j) = gy(r, j);
                G.accumulate(x, d);
              },
              "sort_columns");
}

Var Graph::sum(Var x) {
  Tensor y(1, 1);
  y(0, 0) = value(x).sum();
  return push(std::move(y), needs(x),
              [x](Graph& G, std::uint32_t self) {
                const Tensor& X = G.value(x);
                G.accumulate(x, Tensor::Constant(X.rows(), X.cols(),
                                                 G.g(self)(0, 0)));
              },
              "sum");
}

Var Graph::mean(Var x) {
  const double n = static_cast<double>(value(x).size());
  if (n == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), 1.0 / n);
}

Var Graph::row_sums(Var x) {
  return push(value(x).rowwise().sum(), needs(x),
              [x](Graph& G, std::uint32_t self) {
                const Tensor& X = G.value(x);
                Tensor d(X.rows(), X.cols());
                d.colwise() = G.g(self).col(0);
                G.accumulate(x, d);
              },
              "row_sums");
}

Var Graph::pairwise_distances(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.cols())
    throw ShapeError("pairwise_distances: dimension mismatch");
  Tensor D(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      D(i, j) = (A.row(i) - B.row(j)).norm();
  return push(std::move(D), needs(a) || needs(b),
              [a, b](Graph& G, std::uint32_t self) {
                const Tensor& A = G.value(a);
                const Tensor& B = G.value(b);
                const Tensor& D = G.value(Var{self});
                const Tensor& gy = G.g(self);
                // W = g / D with 0 where D == 0; then
                // dA = diag(rowsum W) A - W B, dB = diag(colsum W) B - W^T A.
                Tensor W = gy.binaryExpr(D, [](double gv, double dv) {
                  return dv > 0.0 ? gv / dv : 0.0;
                });
                if (G.needs(a)) {
                  Tensor dA = W.rowwise().sum().asDiagonal() * A;
                  dA.noalias() -= W * B;
                  G.accumulate(a, dA);
                }
                if (G.needs(b)) {
                  Tensor dB = W.colwise().sum().transpose().asDiagonal() * B;
                  dB.noalias() -= W.transpose() * A;
                  G.accumulate(b, dB);
                }
              },
              "pairwise_distances");
}

void Graph::backward(Var output, const Tensor& output_gradient) {
  if (nodes_.empty() || !output.valid() || output.id >= nodes_.size())
    throw std::logic_error("Graph::backward: no forward pass recorded");
  require_same_shape(value(output), output_gradient, "backward");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[output.id].grad = output_gradient;
  for (std::uint32_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
      continue;
    }
    n.backward(*this, id);
  }
  backward_done_ = true;
}

void Graph::backward(Var scalar_output) {
  if (nodes_.empty() || !scalar_output.valid())
    throw std::logic_error("Graph::backward: no forward pass recorded");
  if (value(scalar_output).size() != 1)
    throw ShapeError("backward: output is not a scalar");
  backward(scalar_output, Tensor::Ones(1, 1));
}

}  // namespace dct
