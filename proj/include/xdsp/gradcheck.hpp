#ifndef XDSP_GRADCHECK_HPP
#define XDSP_GRADCHECK_HPP

#include <algorithm>
#include <functional>
#include <map>
#include <string>

#include "xdsp/errors.hpp"
#include "xdsp/tape.hpp"
#include "xdsp/tensor.hpp"

namespace xdsp::num {

using ParamMap = std::map<std::string, Tensor<double>>;

// Builds the scalar loss on the given tape from the given parameter values,
// registering each parameter it uses under its map key.
using LossBuilder = std::function<Value<double>(Tape<double>&, const ParamMap&)>;

// Central-difference check of reverse-mode gradients, 64-bit only. Returns
// max over coordinates of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
inline double grad_check(const LossBuilder& f, const ParamMap& theta, double eps = 1e-5) {
  if (!(eps > 0)) throw ContractError("grad_check: eps must be positive");

  auto eval = [&f](const ParamMap& p) {
    Tape<double> tape;
    Value<double> loss = f(tape, p);
    return loss.scalar();
  };

  double l0 = eval(theta);
  double l1 = eval(theta);
  if (l0 != l1) throw DeterminismError("grad_check: two evaluations at theta differ");

  Tape<double> tape;
  Value<double> loss = f(tape, theta);
  GradientSet<double> ad = backward(tape, loss);

  double max_rel = 0.0;
  for (const auto& [name, t] : theta) {
    // Untouched parameters carry zero analytic gradient.
    Mat<double> g_ad = ad.grads.count(name) ? ad.at(name).mat()
                                            : Mat<double>::Zero(t.rows(), t.cols());
    ParamMap perturbed = theta;
    Mat<double>& p = perturbed.at(name).mat();
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = 0; j < p.cols(); ++j) {
        double orig = p(i, j);
        p(i, j) = orig + eps;
        double fp = eval(perturbed);
        p(i, j) = orig - eps;
        double fm = eval(perturbed);
        p(i, j) = orig;
        double g_fd = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::abs(g_ad(i, j)), std::abs(g_fd), 1e-8});
        max_rel = std::max(max_rel, std::abs(g_ad(i, j) - g_fd) / denom);
      }
    }
  }
  return max_rel;
}

}  // namespace xdsp::num

#endif
