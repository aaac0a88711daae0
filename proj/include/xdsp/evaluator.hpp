#ifndef XDSP_EVALUATOR_HPP
#define XDSP_EVALUATOR_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xdsp/corpus.hpp"
#include "xdsp/errors.hpp"
#include "xdsp/model.hpp"

namespace xdsp::eval {

template <typename S>
struct Ranked {
  int inventory_index = -1;
  S score = S(0);  // log p(c|u)
  int rank = 0;    // dense from 1
};

// Scores every canonical in the inventory and sorts by score, descending;
// exact ties keep inventory order.
template <typename S>
std::vector<Ranked<S>> rank_canonicals(const model::ModelParams<S>& params,
                                       const corpus::Vocabulary& vocab,
                                       const std::vector<int>& u_ids,
                                       const std::vector<corpus::CanonicalEntry>& inventory,
                                       int max_len = model::kDefaultMaxSeqLen) {
  if (inventory.empty()) throw ContractError("rank_canonicals: empty inventory");
  std::vector<Ranked<S>> out(inventory.size());
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    out[i].inventory_index = static_cast<int>(i);
    out[i].score =
        model::sequence_log_prob<S>(u_ids, vocab.encode(inventory[i].tokens), params, max_len);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Ranked<S>& a, const Ranked<S>& b) { return a.score > b.score; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

struct Prediction {
  std::string utterance;
  std::string gold;
  std::string predicted;
  std::string predicted_logical_form;
  bool correct = false;
};

// Top-ranked canonical compared against the gold canonical, by token
// sequence. Through the one-to-one mapping g this matches logical forms.
template <typename S>
std::vector<Prediction> predict_all(const model::ModelParams<S>& params,
                                    const corpus::Vocabulary& vocab,
                                    const std::vector<corpus::Example>& examples,
                                    const std::vector<corpus::CanonicalEntry>& inventory,
                                    int max_len = model::kDefaultMaxSeqLen) {
  std::vector<Prediction> preds;
  preds.reserve(examples.size());
  for (const auto& e : examples) {
    auto ranked = rank_canonicals<S>(params, vocab, vocab.encode(e.utterance), inventory, max_len);
    const corpus::CanonicalEntry& top =
        inventory[static_cast<std::size_t>(ranked.front().inventory_index)];
    Prediction p;
    p.utterance = corpus::join_tokens(e.utterance);
    p.gold = corpus::join_tokens(e.canonical);
    p.predicted = corpus::join_tokens(top.tokens);
    p.predicted_logical_form = top.logical_form;
    p.correct = top.tokens == e.canonical;
    preds.push_back(std::move(p));
  }
  return preds;
}

template <typename S>
double evaluate_accuracy(const model::ModelParams<S>& params, const corpus::Vocabulary& vocab,
                         const std::vector<corpus::Example>& examples,
                         const std::vector<corpus::CanonicalEntry>& inventory,
                         int max_len = model::kDefaultMaxSeqLen) {
  if (examples.empty()) throw ContractError("evaluate_accuracy: empty example set");
  auto preds = predict_all<S>(params, vocab, examples, inventory, max_len);
  std::size_t hits = 0;
  for (const auto& p : preds) hits += p.correct;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Sample Pearson correlation coefficient.
inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ContractError("pearson_correlation: need two same-length series of length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DegenerateDataError("pearson_correlation: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace xdsp::eval

#endif
