#ifndef XDSP_TESTS_NAIVE_SCORER_HPP
#define XDSP_TESTS_NAIVE_SCORER_HPP

// Test-only reference scorer. Re-implements the scoring computation step by
// step from the model equations, independent of the library's forward code:
// per-candidate, per-step, nothing cached across steps. Reductions are
// sequential in index order, matrix products are plain Eigen products.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "xdsp/corpus.hpp"
#include "xdsp/model.hpp"

namespace naive {

using xdsp::num::Index;
template <typename S>
using M = xdsp::num::Mat<S>;

template <typename S>
M<S> sig(const M<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
M<S> th(const M<S>& x) {
  return x.array().tanh().matrix();
}

template <typename S>
M<S> soft(const M<S>& x) {
  M<S> y(x.rows(), 1);
  S mx = x(0, 0);
  for (Index i = 1; i < x.rows(); ++i) mx = std::max(mx, x(i, 0));
  S z = S(0);
  for (Index i = 0; i < x.rows(); ++i) {
    y(i, 0) = std::exp(x(i, 0) - mx);
    z += y(i, 0);
  }
  for (Index i = 0; i < x.rows(); ++i) y(i, 0) /= z;
  return y;
}

template <typename S>
M<S> gru(const xdsp::model::GruCellParams<S>& p, const M<S>& x, const M<S>& h) {
  M<S> z = sig<S>(p.w_update.mat() * x + p.u_update.mat() * h + p.b_update.mat());
  M<S> r = sig<S>(p.w_reset.mat() * x + p.u_reset.mat() * h + p.b_reset.mat());
  M<S> c = th<S>(p.w_cand.mat() * x + p.u_cand.mat() * h.cwiseProduct(r) + p.b_cand.mat());
  return z.cwiseProduct(h) + (M<S>::Constant(z.rows(), 1, S(1)) - z).cwiseProduct(c);
}

// log p(c|u), walked one step at a time from the written equations.
template <typename S>
S score(const std::vector<int>& u, const std::vector<int>& c,
        const xdsp::model::ModelParams<S>& P) {
  const Index m = static_cast<Index>(u.size());
  const Index s = P.state_size();

  M<S> states(2 * s, m);
  M<S> h = M<S>::Zero(s, 1);
  for (Index i = 0; i < m; ++i) {
    M<S> x = P.embedding.mat().row(u[static_cast<std::size_t>(i)]).transpose();
    h = gru<S>(P.enc_fw, x, h);
    states.block(0, i, s, 1) = h;
  }
  M<S> fw_last = h;
  h = M<S>::Zero(s, 1);
  for (Index i = m - 1; i >= 0; --i) {
    M<S> x = P.embedding.mat().row(u[static_cast<std::size_t>(i)]).transpose();
    h = gru<S>(P.enc_bw, x, h);
    states.block(s, i, s, 1) = h;
  }
  M<S> bw_first = h;

  M<S> boundary(2 * s, 1);
  boundary.topRows(s) = fw_last;
  boundary.bottomRows(s) = bw_first;
  M<S> d = th<S>(P.w_init.mat() * boundary);

  std::vector<int> targets = c;
  targets.push_back(xdsp::corpus::Vocabulary::kEos);

  S total = S(0);
  for (int tok : targets) {
    M<S> scores(m, 1);
    for (Index i = 0; i < m; ++i) {
      M<S> hi = states.col(i);
      M<S> t = th<S>(P.w_att_enc.mat() * hi + P.w_att_dec.mat() * d);
      S ui = S(0);
      for (Index k = 0; k < t.rows(); ++k) ui += P.v_att.mat()(k, 0) * t(k, 0);
      scores(i, 0) = ui;
    }
    M<S> alpha = soft<S>(scores);
    M<S> summary = states * alpha;
    M<S> cat(3 * s, 1);
    cat.topRows(s) = d;
    cat.bottomRows(2 * s) = summary;
    M<S> dist = soft<S>(M<S>(P.w_out.mat() * cat + P.b_out.mat()));
    total += std::log(dist(tok, 0));

    M<S> x(P.emb_dim() + 2 * s, 1);
    x.topRows(P.emb_dim()) = P.embedding.mat().row(tok).transpose();
    x.bottomRows(2 * s) = summary;
    d = gru<S>(P.dec, x, d);
  }
  return total;
}

}  // namespace naive

#endif
