#include "dct/nn.hpp"

#include <cmath>

namespace dct {

Linear::Linear(std::string name, Eigen::Index in, Eigen::Index out, Init init,
               Rng& rng) {
  Tensor w(in, out);
  Tensor b = Tensor::Zero(1, out);
  const double fan = static_cast<double>(in);
  switch (init) {
    case Init::lecun_normal: {
      const double sd = 1.0 / std::sqrt(fan);
      for (Eigen::Index i = 0; i < in; ++i)
        for (Eigen::Index j = 0; j < out; ++j) w(i, j) = sd * rng.normal();
      break;
    }
    case Init::scaled_uniform: {
      const double bound = 1.0 / std::sqrt(fan);
      for (Eigen::Index i = 0; i < in; ++i)
        for (Eigen::Index j = 0; j < out; ++j) w(i, j) = rng.uniform(-bound, bound);
      for (Eigen::Index j = 0; j < out; ++j) b(0, j) = rng.uniform(-bound, bound);
      break;
    }
    case Init::zeros:
      w.setZero();
      break;
  }
  weight = Parameter(name + ".weight", std::move(w));
  bias = Parameter(name + ".bias", std::move(b));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Mlp::Mlp(std::string name, const std::vector<Eigen::Index>& widths,
         bool selu_out, Rng& rng)
    : selu_output(selu_out) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    const Init init =
        (!last || selu_output) ? Init::lecun_normal : Init::scaled_uniform;
    layers.emplace_back(name + "." + std::to_string(i), widths[i],
                        widths[i + 1], init, rng);
  }
}

Var Mlp::operator()(Graph& g, Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](g, x);
    if (i + 1 < layers.size() || selu_output) x = g.selu(x);
  }
  return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               double lr) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: parameter count changed");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (p.grad.rows() != m.rows() || p.grad.cols() != m.cols())
      throw ShapeError("adam_step: shape mismatch for " + p.name);
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

}  // namespace dct
