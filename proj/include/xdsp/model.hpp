#ifndef XDSP_MODEL_HPP
#define XDSP_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xdsp/corpus.hpp"
#include "xdsp/errors.hpp"
#include "xdsp/optim.hpp"
#include "xdsp/rng.hpp"
#include "xdsp/tape.hpp"
#include "xdsp/tensor.hpp"

namespace xdsp::model {

using num::Index;
using num::Mat;
using num::Tensor;
using num::Value;
using num::Vec;

inline constexpr int kDefaultMaxSeqLen = 60;

// Update, reset and candidate gates, each over the input and the state.
template <typename S>
struct GruCellParams {
  Tensor<S> w_update, u_update, b_update;
  Tensor<S> w_reset, u_reset, b_reset;
  Tensor<S> w_cand, u_cand, b_cand;

  Index state_size() const { return w_update.rows(); }
  Index input_size() const { return w_update.cols(); }
};

template <typename S>
struct DropoutConfig {
  S input_keep = S(0.7);
  S output_keep = S(0.5);
  bool enabled = false;
};

// Every trainable tensor of the paraphrase model. The embedding table is
// shared by the encoder and decoder inputs; the output projection is its
// own parameter.
template <typename S>
struct ModelParams {
  Tensor<S> embedding;  // |V| x d
  GruCellParams<S> enc_fw, enc_bw;  // input d, state s
  GruCellParams<S> dec;             // input d + 2s, state s
  Tensor<S> w_init;     // s x 2s, initial decoder state
  Tensor<S> w_att_enc;  // s x 2s, attention over encoder states
  Tensor<S> w_att_dec;  // s x s, attention query from the decoder state
  Tensor<S> v_att;      // s
  Tensor<S> w_out;      // |V| x 3s
  Tensor<S> b_out;      // |V|

  Index vocab_size() const { return embedding.rows(); }
  Index emb_dim() const { return embedding.cols(); }
  Index state_size() const { return w_att_dec.rows(); }

  num::ParamRefs<S> param_refs() {
    num::ParamRefs<S> refs;
    refs.emplace_back("embedding", &embedding);
    auto add_gru = [&refs](const std::string& prefix, GruCellParams<S>& g) {
      refs.emplace_back(prefix + ".update.w", &g.w_update);
      refs.emplace_back(prefix + ".update.u", &g.u_update);
      refs.emplace_back(prefix + ".update.b", &g.b_update);
      refs.emplace_back(prefix + ".reset.w", &g.w_reset);
      refs.emplace_back(prefix + ".reset.u", &g.u_reset);
      refs.emplace_back(prefix + ".reset.b", &g.b_reset);
      refs.emplace_back(prefix + ".cand.w", &g.w_cand);
      refs.emplace_back(prefix + ".cand.u", &g.u_cand);
      refs.emplace_back(prefix + ".cand.b", &g.b_cand);
    };
    add_gru("enc_fw", enc_fw);
    add_gru("enc_bw", enc_bw);
    add_gru("dec", dec);
    refs.emplace_back("w_init", &w_init);
    refs.emplace_back("w_att_enc", &w_att_enc);
    refs.emplace_back("w_att_dec", &w_att_dec);
    refs.emplace_back("v_att", &v_att);
    refs.emplace_back("w_out", &w_out);
    refs.emplace_back("b_out", &b_out);
    return refs;
  }

  // Uniform Xavier for weights, zero biases, U(-sqrt(3), sqrt(3)) for the
  // embedding table. Draw order is the canonical parameter order.
  static ModelParams init(Index vocab, Index d, Index s, std::uint64_t seed);

  std::map<std::string, Tensor<S>> to_map() {
    std::map<std::string, Tensor<S>> m;
    for (auto& [name, t] : param_refs()) m.emplace(name, *t);
    return m;
  }

  void assign_from_map(const std::map<std::string, Tensor<S>>& m) {
    for (auto& [name, t] : param_refs()) {
      auto it = m.find(name);
      if (it == m.end()) throw ContractError("assign_from_map: missing tensor " + name);
      if (!t->same_shape(it->second))
        throw ContractError("assign_from_map: shape mismatch for " + name);
      *t = it->second;
    }
  }
};

namespace detail {

template <typename S>
Mat<S> xavier(Rng& rng, Index rows, Index cols) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<S> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(rng.uniform(-limit, limit));
  return m;
}

template <typename S>
GruCellParams<S> init_gru(Rng& rng, Index input, Index state) {
  GruCellParams<S> g;
  g.w_update = Tensor<S>::matrix(xavier<S>(rng, state, input));
  g.u_update = Tensor<S>::matrix(xavier<S>(rng, state, state));
  g.b_update = Tensor<S>::vector(Vec<S>::Zero(state));
  g.w_reset = Tensor<S>::matrix(xavier<S>(rng, state, input));
  g.u_reset = Tensor<S>::matrix(xavier<S>(rng, state, state));
  g.b_reset = Tensor<S>::vector(Vec<S>::Zero(state));
  g.w_cand = Tensor<S>::matrix(xavier<S>(rng, state, input));
  g.u_cand = Tensor<S>::matrix(xavier<S>(rng, state, state));
  g.b_cand = Tensor<S>::vector(Vec<S>::Zero(state));
  return g;
}

template <typename S>
Mat<S> sigmoid_m(const Mat<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
Mat<S> tanh_m(const Mat<S>& x) {
  return x.array().tanh().matrix();
}

// Max-subtracted softmax with sequential normalization.
template <typename S>
Mat<S> softmax_m(const Mat<S>& x) {
  Mat<S> y(x.rows(), 1);
  S m = x(0, 0);
  for (Index i = 1; i < x.rows(); ++i) m = std::max(m, x(i, 0));
  S z = S(0);
  for (Index i = 0; i < x.rows(); ++i) {
    y(i, 0) = std::exp(x(i, 0) - m);
    z += y(i, 0);
  }
  for (Index i = 0; i < x.rows(); ++i) y(i, 0) /= z;
  return y;
}

}  // namespace detail

template <typename S>
ModelParams<S> ModelParams<S>::init(Index vocab, Index d, Index s, std::uint64_t seed) {
  if (vocab < 4 || d < 1 || s < 1) throw ContractError("ModelParams::init: bad sizes");
  ModelParams<S> p;
  Rng emb_rng(mix64(seed, 0x656d62ULL));  // "emb"
  Mat<S> e(vocab, d);
  constexpr double kSqrt3 = 1.7320508075688772935;
  for (Index i = 0; i < vocab; ++i)
    for (Index j = 0; j < d; ++j) e(i, j) = static_cast<S>(emb_rng.uniform(-kSqrt3, kSqrt3));
  p.embedding = Tensor<S>::matrix(std::move(e));

  Rng rng(mix64(seed, 0x696e6974ULL));  // "init"
  p.enc_fw = detail::init_gru<S>(rng, d, s);
  p.enc_bw = detail::init_gru<S>(rng, d, s);
  p.dec = detail::init_gru<S>(rng, d + 2 * s, s);
  p.w_init = Tensor<S>::matrix(detail::xavier<S>(rng, s, 2 * s));
  p.w_att_enc = Tensor<S>::matrix(detail::xavier<S>(rng, s, 2 * s));
  p.w_att_dec = Tensor<S>::matrix(detail::xavier<S>(rng, s, s));
  p.v_att = Tensor<S>::vector(detail::xavier<S>(rng, s, 1));
  p.w_out = Tensor<S>::matrix(detail::xavier<S>(rng, vocab, 3 * s));
  p.b_out = Tensor<S>::vector(Vec<S>::Zero(vocab));
  return p;
}

// ---------------------------------------------------------------------------
// Inference path: plain Eigen forward, no tape, dropout disabled.

// h' = z . h_prev + (1 - z) . h_cand, per the cited GRU definition.
template <typename S>
Mat<S> gru_cell(const Mat<S>& x, const Mat<S>& h_prev, const GruCellParams<S>& p) {
  if (x.rows() != p.input_size() || h_prev.rows() != p.state_size())
    throw ContractError("gru_cell: dimension mismatch");
  Mat<S> z = detail::sigmoid_m<S>(p.w_update.mat() * x + p.u_update.mat() * h_prev + p.b_update.mat());
  Mat<S> r = detail::sigmoid_m<S>(p.w_reset.mat() * x + p.u_reset.mat() * h_prev + p.b_reset.mat());
  Mat<S> cand = detail::tanh_m<S>(p.w_cand.mat() * x +
                                  p.u_cand.mat() * h_prev.cwiseProduct(r) + p.b_cand.mat());
  return z.cwiseProduct(h_prev) + (Mat<S>::Constant(z.rows(), 1, S(1)) - z).cwiseProduct(cand);
}

// Concatenated bi-directional states plus the two boundary states that seed
// the decoder.
template <typename S>
struct EncoderStates {
  Mat<S> states;    // 2s x m, column i is [fw_i; bw_i]
  Mat<S> fw_last;   // s x 1
  Mat<S> bw_first;  // s x 1
  Index length() const { return states.cols(); }
};

template <typename S>
EncoderStates<S> encode(const std::vector<int>& ids, const ModelParams<S>& params,
                        int max_len = kDefaultMaxSeqLen) {
  const Index m = static_cast<Index>(ids.size());
  if (m < 1) throw ContractError("encode: empty sequence");
  if (m > max_len)
    throw ContractError("encode: sequence length " + std::to_string(m) + " exceeds maximum " +
                        std::to_string(max_len));
  for (int id : ids)
    if (id < 0 || id >= params.vocab_size())
      throw VocabularyError("encode: token id " + std::to_string(id) + " out of range");

  const Index s = params.state_size();
  EncoderStates<S> enc;
  enc.states.resize(2 * s, m);
  Mat<S> h = Mat<S>::Zero(s, 1);
  for (Index i = 0; i < m; ++i) {
    Mat<S> x = params.embedding.mat().row(ids[static_cast<std::size_t>(i)]).transpose();
    h = gru_cell<S>(x, h, params.enc_fw);
    enc.states.block(0, i, s, 1) = h;
  }
  enc.fw_last = h;
  h = Mat<S>::Zero(s, 1);
  for (Index i = m - 1; i >= 0; --i) {
    Mat<S> x = params.embedding.mat().row(ids[static_cast<std::size_t>(i)]).transpose();
    h = gru_cell<S>(x, h, params.enc_bw);
    enc.states.block(s, i, s, 1) = h;
  }
  enc.bw_first = h;
  return enc;
}

// d0 = tanh(W0 [fw_last, bw_first]).
template <typename S>
Mat<S> decoder_init(const EncoderStates<S>& enc, const ModelParams<S>& params) {
  Mat<S> boundary(enc.fw_last.rows() + enc.bw_first.rows(), 1);
  boundary.topRows(enc.fw_last.rows()) = enc.fw_last;
  boundary.bottomRows(enc.bw_first.rows()) = enc.bw_first;
  return detail::tanh_m<S>(params.w_init.mat() * boundary);
}

template <typename S>
struct AttendResult {
  Mat<S> attention;  // m x 1, non-negative, sums to one
  Mat<S> summary;    // 2s x 1
  Mat<S> dist;       // |V| x 1
};

// Attention and output distribution from the current decoder state.
template <typename S>
AttendResult<S> step_attend(const Mat<S>& d, const EncoderStates<S>& enc,
                            const ModelParams<S>& params) {
  const Index m = enc.length();
  Mat<S> query = params.w_att_dec.mat() * d;
  Mat<S> scores(m, 1);
  for (Index i = 0; i < m; ++i) {
    Mat<S> hcol = enc.states.col(i);
    Mat<S> t = detail::tanh_m<S>(params.w_att_enc.mat() * hcol + query);
    S u = S(0);
    for (Index k = 0; k < t.rows(); ++k) u += params.v_att.mat()(k, 0) * t(k, 0);
    scores(i, 0) = u;
  }
  AttendResult<S> r;
  r.attention = detail::softmax_m<S>(scores);
  r.summary = enc.states * r.attention;
  Mat<S> cat(d.rows() + r.summary.rows(), 1);
  cat.topRows(d.rows()) = d;
  cat.bottomRows(r.summary.rows()) = r.summary;
  r.dist = detail::softmax_m<S>(params.w_out.mat() * cat + params.b_out.mat());
  return r;
}

// Next decoder state from the consumed token and the attention summary.
template <typename S>
Mat<S> advance(const Mat<S>& d, int token, const Mat<S>& summary, const ModelParams<S>& params) {
  if (token < 0 || token >= params.vocab_size())
    throw VocabularyError("advance: token id " + std::to_string(token) + " out of range");
  Mat<S> x(params.emb_dim() + summary.rows(), 1);
  x.topRows(params.emb_dim()) = params.embedding.mat().row(token).transpose();
  x.bottomRows(summary.rows()) = summary;
  return gru_cell<S>(x, d, params.dec);
}

// One decoding step: the distribution scores the given token, which is then
// consumed to form the next state.
template <typename S>
std::pair<Mat<S>, Mat<S>> decoder_step(const Mat<S>& d, int token, const EncoderStates<S>& enc,
                                       const ModelParams<S>& params) {
  AttendResult<S> a = step_attend<S>(d, enc, params);
  Mat<S> next = advance<S>(d, token, a.summary, params);
  return {a.dist, next};
}

// log p(c|u) summed over the n+1 prediction steps (tokens plus </s>).
template <typename S>
S sequence_log_prob(const std::vector<int>& u_ids, const std::vector<int>& c_ids,
                    const ModelParams<S>& params, int max_len = kDefaultMaxSeqLen) {
  EncoderStates<S> enc = encode<S>(u_ids, params, max_len);
  Mat<S> d = decoder_init<S>(enc, params);
  std::vector<int> targets = c_ids;
  targets.push_back(corpus::Vocabulary::kEos);
  S total = S(0);
  for (int tok : targets) {
    AttendResult<S> a = step_attend<S>(d, enc, params);
    total += std::log(a.dist(tok, 0));
    d = advance<S>(d, tok, a.summary, params);
  }
  return total;
}

struct GreedyResult {
  std::vector<int> ids;
  bool truncated = false;
};

// Argmax decoding; <pad> and <s> are never emitted, </s> terminates.
template <typename S>
GreedyResult generate_greedy(const std::vector<int>& u_ids, const ModelParams<S>& params,
                             int max_len, int enc_max_len = kDefaultMaxSeqLen) {
  if (max_len < 1) throw ContractError("generate_greedy: max_len must be >= 1");
  EncoderStates<S> enc = encode<S>(u_ids, params, enc_max_len);
  Mat<S> d = decoder_init<S>(enc, params);
  GreedyResult out;
  for (int step = 0; step < max_len; ++step) {
    AttendResult<S> a = step_attend<S>(d, enc, params);
    int best = -1;
    for (Index i = 0; i < a.dist.rows(); ++i) {
      if (i == corpus::Vocabulary::kPad || i == corpus::Vocabulary::kBos) continue;
      if (best < 0 || a.dist(i, 0) > a.dist(best, 0)) best = static_cast<int>(i);
    }
    if (best == corpus::Vocabulary::kEos) return out;
    out.ids.push_back(best);
    d = advance<S>(d, best, a.summary, params);
  }
  out.truncated = true;
  return out;
}

// ---------------------------------------------------------------------------
// Training path: the same computation recorded on a tape.

template <typename S>
struct BoundGru {
  Value<S> w_update, u_update, b_update;
  Value<S> w_reset, u_reset, b_reset;
  Value<S> w_cand, u_cand, b_cand;
};

template <typename S>
struct BoundModel {
  num::Tape<S>* tape = nullptr;
  Value<S> embedding, w_init, w_att_enc, w_att_dec, v_att, w_out, b_out;
  BoundGru<S> enc_fw, enc_bw, dec;

  // Registers every trainable tensor so untouched parameters still appear
  // (with zero gradients) in the backward result.
  static BoundModel bind(num::Tape<S>& tape, ModelParams<S>& params) {
    BoundModel b;
    b.tape = &tape;
    auto bind_gru = [&tape](const std::string& prefix, GruCellParams<S>& g) {
      BoundGru<S> bg;
      bg.w_update = tape.param(prefix + ".update.w", g.w_update);
      bg.u_update = tape.param(prefix + ".update.u", g.u_update);
      bg.b_update = tape.param(prefix + ".update.b", g.b_update);
      bg.w_reset = tape.param(prefix + ".reset.w", g.w_reset);
      bg.u_reset = tape.param(prefix + ".reset.u", g.u_reset);
      bg.b_reset = tape.param(prefix + ".reset.b", g.b_reset);
      bg.w_cand = tape.param(prefix + ".cand.w", g.w_cand);
      bg.u_cand = tape.param(prefix + ".cand.u", g.u_cand);
      bg.b_cand = tape.param(prefix + ".cand.b", g.b_cand);
      return bg;
    };
    b.embedding = tape.param("embedding", params.embedding);
    b.enc_fw = bind_gru("enc_fw", params.enc_fw);
    b.enc_bw = bind_gru("enc_bw", params.enc_bw);
    b.dec = bind_gru("dec", params.dec);
    b.w_init = tape.param("w_init", params.w_init);
    b.w_att_enc = tape.param("w_att_enc", params.w_att_enc);
    b.w_att_dec = tape.param("w_att_dec", params.w_att_dec);
    b.v_att = tape.param("v_att", params.v_att);
    b.w_out = tape.param("w_out", params.w_out);
    b.b_out = tape.param("b_out", params.b_out);
    return b;
  }
};

template <typename S>
Value<S> gru_cell_on_tape(const BoundGru<S>& g, Value<S> x, Value<S> h_prev) {
  using namespace num;
  Value<S> z = sigmoid_(add(add(matmul(g.w_update, x), matmul(g.u_update, h_prev)), g.b_update));
  Value<S> r = sigmoid_(add(add(matmul(g.w_reset, x), matmul(g.u_reset, h_prev)), g.b_reset));
  Value<S> cand =
      tanh_(add(add(matmul(g.w_cand, x), matmul(g.u_cand, cmul(r, h_prev))), g.b_cand));
  return add(cmul(z, h_prev), cmul(one_minus(z), cand));
}

// Inverted-dropout masks for one example; entries are 0 or 1/keep.
template <typename S>
struct DropoutMasks {
  std::vector<Mat<S>> enc_fw_in, enc_fw_out, enc_bw_in, enc_bw_out;  // per position
  std::vector<Mat<S>> dec_in, dec_out;                               // per decoding step
};

template <typename S>
Mat<S> sample_mask(Rng& rng, Index n, S keep) {
  Mat<S> m(n, 1);
  for (Index i = 0; i < n; ++i) m(i, 0) = rng.bernoulli(static_cast<double>(keep)) ? S(1) / keep : S(0);
  return m;
}

template <typename S>
DropoutMasks<S> sample_dropout_masks(Rng& rng, Index m, Index n_steps, Index d, Index s,
                                     const DropoutConfig<S>& cfg) {
  DropoutMasks<S> masks;
  for (Index i = 0; i < m; ++i) {
    masks.enc_fw_in.push_back(sample_mask<S>(rng, d, cfg.input_keep));
    masks.enc_fw_out.push_back(sample_mask<S>(rng, s, cfg.output_keep));
  }
  for (Index i = 0; i < m; ++i) {
    masks.enc_bw_in.push_back(sample_mask<S>(rng, d, cfg.input_keep));
    masks.enc_bw_out.push_back(sample_mask<S>(rng, s, cfg.output_keep));
  }
  for (Index j = 0; j < n_steps; ++j) {
    masks.dec_in.push_back(sample_mask<S>(rng, d + 2 * s, cfg.input_keep));
    masks.dec_out.push_back(sample_mask<S>(rng, s, cfg.output_keep));
  }
  return masks;
}

template <typename S>
struct TapeEncoder {
  Value<S> states;    // 2s x m (dropped outputs when dropout is on)
  Value<S> fw_last;   // recurrence-side states, never dropped
  Value<S> bw_first;
};

// Negative log-likelihood of one example; dropout masks may be null.
template <typename S>
Value<S> example_nll_on_tape(const BoundModel<S>& b, const std::vector<int>& u_ids,
                             const std::vector<int>& c_ids, const DropoutMasks<S>* masks) {
  using namespace num;
  Tape<S>& t = *b.tape;
  const Index m = static_cast<Index>(u_ids.size());
  if (m < 1) throw ContractError("example_nll_on_tape: empty utterance");

  auto dropped = [&t](Value<S> v, const Mat<S>& mask) {
    return cmul(v, t.constant(Tensor<S>::vector(mask)));
  };

  // Encoder. Output dropout applies to the states consumed by attention;
  // the recurrence and the boundary states stay undropped.
  std::vector<Value<S>> fw(static_cast<std::size_t>(m)), bw(static_cast<std::size_t>(m));
  Value<S> h = t.constant(Tensor<S>::vector(Vec<S>::Zero(t.val(b.w_att_dec.id).rows())));
  for (Index i = 0; i < m; ++i) {
    Value<S> x = row_of(b.embedding, u_ids[static_cast<std::size_t>(i)]);
    if (masks) x = dropped(x, masks->enc_fw_in[static_cast<std::size_t>(i)]);
    h = gru_cell_on_tape(b.enc_fw, x, h);
    fw[static_cast<std::size_t>(i)] = h;
  }
  Value<S> fw_last = h;
  h = t.constant(Tensor<S>::vector(Vec<S>::Zero(t.val(b.w_att_dec.id).rows())));
  for (Index i = m - 1; i >= 0; --i) {
    Value<S> x = row_of(b.embedding, u_ids[static_cast<std::size_t>(i)]);
    if (masks) x = dropped(x, masks->enc_bw_in[static_cast<std::size_t>(i)]);
    h = gru_cell_on_tape(b.enc_bw, x, h);
    bw[static_cast<std::size_t>(i)] = h;
  }
  Value<S> bw_first = h;

  std::vector<Value<S>> cols(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    Value<S> f = fw[static_cast<std::size_t>(i)];
    Value<S> w = bw[static_cast<std::size_t>(i)];
    if (masks) {
      f = dropped(f, masks->enc_fw_out[static_cast<std::size_t>(i)]);
      w = dropped(w, masks->enc_bw_out[static_cast<std::size_t>(i)]);
    }
    cols[static_cast<std::size_t>(i)] = concat_rows(f, w);
  }
  Value<S> H = hstack(cols);
  Value<S> att_pre = matmul(b.w_att_enc, H);  // cached once per example

  Value<S> d = tanh_(matmul(b.w_init, concat_rows(fw_last, bw_first)));
  Value<S> d_cons = d;  // what attention and the output layer see

  std::vector<int> targets = c_ids;
  targets.push_back(corpus::Vocabulary::kEos);

  Value<S> total_ll;
  bool first = true;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    int tok = targets[j];
    Value<S> query = matmul(b.w_att_dec, d_cons);
    Value<S> scores = vecmat(b.v_att, tanh_(add_colwise(att_pre, query)));
    Value<S> alpha = softmax_vec(scores);
    Value<S> summary = matmul(H, alpha);
    Value<S> logits = add(matmul(b.w_out, concat_rows(d_cons, summary)), b.b_out);
    Value<S> step_ll = sub(pick(logits, tok), logsumexp_vec(logits));
    total_ll = first ? step_ll : add(total_ll, step_ll);
    first = false;

    Value<S> x = concat_rows(row_of(b.embedding, tok), summary);
    if (masks) x = dropped(x, masks->dec_in[j]);
    d = gru_cell_on_tape(b.dec, x, d);
    d_cons = masks ? dropped(d, masks->dec_out[j]) : d;
  }
  return neg(total_ll);
}

// Padded token id batch; trailing <pad> never contributes to the loss.
struct Batch {
  std::vector<std::vector<int>> u_ids, c_ids;  // true lengths

  static Batch from_examples(const std::vector<corpus::Example>& examples,
                             const corpus::Vocabulary& vocab, int max_len = kDefaultMaxSeqLen) {
    Batch b;
    for (const auto& e : examples) {
      auto u = vocab.encode(e.utterance);
      auto c = vocab.encode(e.canonical);
      if (static_cast<int>(u.size()) > max_len || static_cast<int>(c.size()) > max_len)
        throw ContractError("Batch: sequence exceeds maximum length " + std::to_string(max_len));
      b.u_ids.push_back(std::move(u));
      b.c_ids.push_back(std::move(c));
    }
    return b;
  }

  // Rectangular views padded with <pad>, for interchange and tests.
  std::pair<Eigen::MatrixXi, Eigen::MatrixXi> padded() const {
    auto pad = [](const std::vector<std::vector<int>>& rows) {
      std::size_t w = 0;
      for (const auto& r : rows) w = std::max(w, r.size());
      Eigen::MatrixXi m = Eigen::MatrixXi::Constant(static_cast<Eigen::Index>(rows.size()),
                                                    static_cast<Eigen::Index>(w),
                                                    corpus::Vocabulary::kPad);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      return m;
    };
    return {pad(u_ids), pad(c_ids)};
  }

  static std::vector<int> strip_padding(const Eigen::RowVectorXi& row) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (row(j) == corpus::Vocabulary::kPad) break;
      out.push_back(row(j));
    }
    return out;
  }
};

// Mean negative sequence log-probability over the batch (per-example sums).
// Returns the loss value; the caller owns the tape and the bound model.
template <typename S>
Value<S> batch_loss_on_tape(const BoundModel<S>& b, const Batch& batch,
                            const DropoutConfig<S>& dropout, Rng* rng) {
  using namespace num;
  if (batch.u_ids.empty()) throw ContractError("batch_loss: empty batch");
  if (dropout.enabled && rng == nullptr)
    throw ContractError("batch_loss: dropout enabled but no generator supplied");
  Tape<S>& t = *b.tape;
  const Index d_dim = t.val(b.embedding.id).cols();
  const Index s_dim = t.val(b.w_att_dec.id).rows();

  Value<S> total;
  for (std::size_t i = 0; i < batch.u_ids.size(); ++i) {
    DropoutMasks<S> masks;
    const DropoutMasks<S>* mp = nullptr;
    if (dropout.enabled) {
      masks = sample_dropout_masks<S>(*rng, static_cast<Index>(batch.u_ids[i].size()),
                                      static_cast<Index>(batch.c_ids[i].size()) + 1, d_dim,
                                      s_dim, dropout);
      mp = &masks;
    }
    Value<S> nll = example_nll_on_tape(b, batch.u_ids[i], batch.c_ids[i], mp);
    total = (i == 0) ? nll : add(total, nll);
  }
  return scale(total, S(1) / static_cast<S>(batch.u_ids.size()));
}

}  // namespace xdsp::model

#endif
