#ifndef XDSP_OPTIM_HPP
#define XDSP_OPTIM_HPP

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "xdsp/errors.hpp"
#include "xdsp/tape.hpp"
#include "xdsp/tensor.hpp"

namespace xdsp::num {

// Named references to the trainable tensors of a model, in canonical order.
template <typename S>
using ParamRefs = std::vector<std::pair<std::string, Tensor<S>*>>;

template <typename S>
S global_norm(const GradientSet<S>& g) {
  S acc = S(0);
  for (const auto& [name, t] : g.grads) {
    const Mat<S>& m = t.mat();
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) acc += m(i, j) * m(i, j);
  }
  return std::sqrt(acc);
}

// Scale all gradients by cap/norm when the global L2 norm exceeds cap.
template <typename S>
GradientSet<S> clip_global_norm(GradientSet<S> g, S cap) {
  if (!(cap > S(0))) throw ContractError("clip_global_norm: cap must be positive");
  S norm = global_norm(g);
  // The tolerance keeps reclipping a just-clipped set an exact no-op.
  if (norm <= cap * (S(1) + S(4) * std::numeric_limits<S>::epsilon())) return g;
  S factor = cap / norm;
  for (auto& [name, t] : g.grads) t.mat() *= factor;
  return g;
}

template <typename S>
struct AdamConfig {
  S alpha = S(1e-3);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

template <typename S>
struct AdamState {
  AdamConfig<S> cfg;
  std::map<std::string, Mat<S>> m;  // first moment
  std::map<std::string, Mat<S>> v;  // second moment, entries >= 0
  long t = 0;                       // completed steps

  static AdamState fresh(const ParamRefs<S>& params, AdamConfig<S> cfg = {}) {
    AdamState s;
    s.cfg = cfg;
    for (const auto& [name, tensor] : params) {
      s.m.emplace(name, Mat<S>::Zero(tensor->rows(), tensor->cols()));
      s.v.emplace(name, Mat<S>::Zero(tensor->rows(), tensor->cols()));
    }
    return s;
  }
};

// Bias-corrected Adam update, in place; t advances by exactly one.
template <typename S>
void adam_step(ParamRefs<S>& params, const GradientSet<S>& grads, AdamState<S>& state) {
  state.t += 1;
  const AdamConfig<S>& c = state.cfg;
  S bc1 = S(1) - std::pow(c.beta1, S(state.t));
  S bc2 = S(1) - std::pow(c.beta2, S(state.t));
  for (auto& [name, tensor] : params) {
    auto git = grads.grads.find(name);
    if (git == grads.grads.end()) throw ContractError("adam_step: missing gradient for " + name);
    const Mat<S>& g = git->second.mat();
    Mat<S>& m = state.m.at(name);
    Mat<S>& v = state.v.at(name);
    if (g.rows() != tensor->rows() || g.cols() != tensor->cols())
      throw ContractError("adam_step: shape mismatch for " + name);
    m = c.beta1 * m + (S(1) - c.beta1) * g;
    v = c.beta2 * v + (S(1) - c.beta2) * g.cwiseProduct(g);
    Mat<S> mhat = m / bc1;
    Mat<S> vhat = v / bc2;
    tensor->mat().array() -= c.alpha * mhat.array() / (vhat.array().sqrt() + c.eps);
  }
}

}  // namespace xdsp::num

#endif
