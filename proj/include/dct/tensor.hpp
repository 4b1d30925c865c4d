#pragma once

// Reverse-mode automatic differentiation over dense row-of-points matrices.
//
// A Graph records operations eagerly: every op computes its value when it is
// called and appends a node holding a backward closure. Nodes are created in
// topological order, so backward() walks them once in reverse. A Graph lives
// for one forward/backward pass; parameters live in the models and receive
// accumulated gradients.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dct {

using Tensor = Eigen::MatrixXd;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)),
        grad(Tensor::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Contiguous row blocks: block s spans rows [offsets[s], offsets[s+1]).
/// Used to run set-level operations (pooling, sorting) over many sets that
/// are stacked into one matrix.
struct Segments {
  std::vector<Eigen::Index> offsets{0};

  static Segments uniform(Eigen::Index count, Eigen::Index size);
  void push(Eigen::Index size) { offsets.push_back(offsets.back() + size); }
  Eigen::Index count() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
  Eigen::Index total() const { return offsets.back(); }
  Eigen::Index begin(Eigen::Index s) const { return offsets[s]; }
  Eigen::Index size(Eigen::Index s) const { return offsets[s + 1] - offsets[s]; }
};

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

class Graph {
 public:
  Graph() = default;

  // Leaves.
  Var constant(Tensor value);
  /// Differentiable leaf (gradient readable via grad()).
  Var variable(Tensor value);
  /// Leaf bound to a model parameter; backward accumulates into p.grad.
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() output w.r.t. v (zeros if unreached).
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Linear algebra.
  Var matmul(Var a, Var b);
  /// x * W + b with W stored (in x out) and b (1 x out).
  Var linear(Var x, Parameter& weight, Parameter& bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var add_row(Var a, Var row);  // broadcast a 1 x c row over all rows

  // Structure.
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
  Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
  Var gather_rows(Parameter& table, std::span<const std::size_t> rows);

  // Set pooling.
  Var segment_mean(Var x, const Segments& segs);    // N x c -> S x c
  Var segment_expand(Var x, const Segments& segs);  // S x c -> N x c

  // Elementwise nonlinearities.
  Var selu(Var x);
  Var gelu(Var x);
  Var square(Var x);
  Var sqrt(Var x);
  /// Each row divided by its Euclidean norm.
  Var normalize_rows(Var x);

  /// Sorts each column ascending within each segment (stable: ties keep
  /// their original order). Backward routes each output slot's gradient
  /// to the input slot it came from.
  Var sort_columns(Var x, const Segments& segs);
  Var sort_columns(Var x);

  // Reductions.
  Var sum(Var x);        // -> 1 x 1
  Var mean(Var x);       // -> 1 x 1
  Var row_sums(Var x);   // N x c -> N x 1

  /// D(i, j) = ||a_i - b_j||_2. The gradient at D = 0 is taken as 0.
  Var pairwise_distances(Var a, Var b);

  void backward(Var output, const Tensor& output_gradient);
  /// backward() seeded with 1 for a 1 x 1 output.
  void backward(Var scalar_output);

 private:
  using BackwardFn = std::function<void(Graph&, std::uint32_t)>;
  struct Node {
    Tensor value;
    Tensor grad;
    const Tensor* ref = nullptr;  // parameter leaves alias the parameter
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn, const char* op);
  const Node& node(Var v) const;
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  const Tensor& g(std::uint32_t id) const { return nodes_[id].grad; }
  template <typename Expr>
  void accumulate(Var v, const Expr& delta);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kSeluScale = 1.0507009873554804934193349852946;

double selu(double x);

}  // namespace dct
