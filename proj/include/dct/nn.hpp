#pragma once

#include <vector>

#include "dct/rng.hpp"
#include "dct/tensor.hpp"

namespace dct {

enum class Init {
  lecun_normal,    // N(0, 1/fan_in), for layers feeding a SELU
  scaled_uniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  zeros,
};

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(std::string name, Eigen::Index in, Eigen::Index out, Init init,
         Rng& rng);

  Eigen::Index in() const { return weight.value.rows(); }
  Eigen::Index out() const { return weight.value.cols(); }
  Var operator()(Graph& g, Var x) { return g.linear(x, weight, bias); }
  void collect(std::vector<Parameter*>& out);
};

/// Stack of linear layers with SELU between them. The last layer is
/// followed by SELU only when `selu_output` is set.
struct Mlp {
  std::vector<Linear> layers;
  bool selu_output = false;

  Mlp() = default;
  /// widths = {in, hidden..., out}.
  Mlp(std::string name, const std::vector<Eigen::Index>& widths,
      bool selu_output, Rng& rng);

  Eigen::Index in() const { return layers.front().in(); }
  Eigen::Index out() const { return layers.back().out(); }
  Var operator()(Graph& g, Var x);
  void collect(std::vector<Parameter*>& out);
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update; gradients are read from params[i]->grad.
void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               double lr);

void zero_grad(const std::vector<Parameter*>& params);

}  // namespace dct
