#ifndef XDSP_TRAINER_HPP
#define XDSP_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xdsp/checkpoint.hpp"
#include "xdsp/corpus.hpp"
#include "xdsp/embedding.hpp"
#include "xdsp/errors.hpp"
#include "xdsp/evaluator.hpp"
#include "xdsp/model.hpp"
#include "xdsp/optim.hpp"
#include "xdsp/rng.hpp"

namespace xdsp::train {

struct TrainConfig {
  int state_size = 100;
  int emb_dim = 300;
  int batch_size = 512;  // clamped to the train-set size when larger
  double grad_clip = 5.0;
  double input_keep = 0.7;
  double output_keep = 0.5;
  bool dropout = true;
  double adam_alpha = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 300;
  int patience = 5;
  std::uint64_t seed = 1;
  std::string embedding_source = "random";   // random | pretrained
  std::string embedding_transform = "none";  // none | es | fs | en
  std::string embedding_path;
  std::string precision = "f64";  // f64 | f32
  int max_seq_len = model::kDefaultMaxSeqLen;

  nlohmann::json to_json() const {
    return nlohmann::json{{"state_size", state_size},
                          {"emb_dim", emb_dim},
                          {"batch_size", batch_size},
                          {"grad_clip", grad_clip},
                          {"input_keep", input_keep},
                          {"output_keep", output_keep},
                          {"dropout", dropout},
                          {"adam_alpha", adam_alpha},
                          {"adam_beta1", adam_beta1},
                          {"adam_beta2", adam_beta2},
                          {"adam_eps", adam_eps},
                          {"max_epochs", max_epochs},
                          {"patience", patience},
                          {"seed", seed},
                          {"embedding_source", embedding_source},
                          {"embedding_transform", embedding_transform},
                          {"embedding_path", embedding_path},
                          {"precision", precision},
                          {"max_seq_len", max_seq_len}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto opt = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("state_size", c.state_size);
    opt("emb_dim", c.emb_dim);
    opt("batch_size", c.batch_size);
    opt("grad_clip", c.grad_clip);
    opt("input_keep", c.input_keep);
    opt("output_keep", c.output_keep);
    opt("dropout", c.dropout);
    opt("adam_alpha", c.adam_alpha);
    opt("adam_beta1", c.adam_beta1);
    opt("adam_beta2", c.adam_beta2);
    opt("adam_eps", c.adam_eps);
    opt("max_epochs", c.max_epochs);
    opt("patience", c.patience);
    opt("seed", c.seed);
    opt("embedding_source", c.embedding_source);
    opt("embedding_transform", c.embedding_transform);
    opt("embedding_path", c.embedding_path);
    opt("precision", c.precision);
    opt("max_seq_len", c.max_seq_len);
    c.validate();
    return c;
  }

  void validate() const {
    if (state_size < 1 || emb_dim < 1 || batch_size < 1) throw ContractError("config: bad sizes");
    if (!(input_keep > 0.0 && input_keep <= 1.0 && output_keep > 0.0 && output_keep <= 1.0))
      throw ContractError("config: keep probabilities must lie in (0, 1]");
    if (!(grad_clip > 0.0)) throw ContractError("config: grad_clip must be positive");
    if (max_epochs < 0 || patience < 0) throw ContractError("config: bad epoch budget");
    if (embedding_source != "random" && embedding_source != "pretrained")
      throw ContractError("config: embedding_source must be random|pretrained");
    if (precision != "f64" && precision != "f32")
      throw ContractError("config: precision must be f64|f32");
    (void)embed::strategy_from_flag(embedding_transform);
  }
};

// Strict improvement resets the counter; ties count against patience.
struct EarlyStopState {
  double best_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int best_epoch = 0;
};

enum class StopDecision { continue_training, stop };

inline std::pair<EarlyStopState, StopDecision> early_stop_update(EarlyStopState s, double metric,
                                                                 int patience, int epoch) {
  if (!std::isfinite(metric)) throw ContractError("early_stop_update: non-finite metric");
  if (metric > s.best_metric) {
    s.best_metric = metric;
    s.epochs_since_improvement = 0;
    s.best_epoch = epoch;
  } else {
    s.epochs_since_improvement += 1;
  }
  return {s, s.epochs_since_improvement >= patience ? StopDecision::stop
                                                    : StopDecision::continue_training};
}

struct StepInfo {
  int phase = 1;
  int epoch = 0;
  int batch = 0;
  double loss = 0;
  double clipped_norm = 0;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(int epoch, double val_accuracy)> on_epoch;
};

template <typename S>
struct TrainOutcome {
  model::ModelParams<S> params;
  int best_epoch = 0;  // phase-1 epoch count reused for retraining
  double best_val_accuracy = 0.0;
};

namespace detail {

template <typename S>
void run_epochs(const TrainConfig& cfg, const corpus::Vocabulary& vocab,
                const std::vector<corpus::Example>& examples, model::ModelParams<S>& params,
                int n_epochs, int phase, const corpus::Domain* val_domain,
                const std::vector<corpus::Example>* validation, int patience,
                const TrainHooks* hooks, int* best_epoch_out, double* best_acc_out) {
  using model::Batch;
  if (examples.empty()) throw InsufficientDataError("train: empty train set");

  auto refs = params.param_refs();
  num::AdamConfig<S> acfg;
  acfg.alpha = static_cast<S>(cfg.adam_alpha);
  acfg.beta1 = static_cast<S>(cfg.adam_beta1);
  acfg.beta2 = static_cast<S>(cfg.adam_beta2);
  acfg.eps = static_cast<S>(cfg.adam_eps);
  auto adam = num::AdamState<S>::fresh(refs, acfg);

  model::DropoutConfig<S> drop;
  drop.enabled = cfg.dropout && (cfg.input_keep < 1.0 || cfg.output_keep < 1.0);
  drop.input_keep = static_cast<S>(cfg.input_keep);
  drop.output_keep = static_cast<S>(cfg.output_keep);

  const std::size_t n = examples.size();
  const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);

  EarlyStopState es;
  for (int epoch = 1; epoch <= n_epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix64(cfg.seed, 0x73687566ULL + static_cast<std::uint64_t>(phase),
                          static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(mix64(cfg.seed, 0x64726f70ULL + static_cast<std::uint64_t>(phase),
                          static_cast<std::uint64_t>(epoch)));

    int batch_idx = 0;
    for (std::size_t start = 0; start < n; start += bsz, ++batch_idx) {
      std::vector<corpus::Example> chunk;
      for (std::size_t k = start; k < std::min(n, start + bsz); ++k)
        chunk.push_back(examples[order[k]]);
      Batch batch = Batch::from_examples(chunk, vocab, cfg.max_seq_len);

      num::Tape<S> tape;
      auto bound = model::BoundModel<S>::bind(tape, params);
      double loss_v = 0;
      num::GradientSet<S> grads;
      try {
        num::Value<S> loss = model::batch_loss_on_tape<S>(bound, batch, drop, &dropout_rng);
        loss_v = static_cast<double>(loss.scalar());
        if (!std::isfinite(loss_v)) throw NonFiniteError("non-finite loss");
        grads = num::backward(tape, loss);
      } catch (const NonFiniteError& e) {
        throw DivergenceError("train: diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_idx) + " (" + e.what() + ")");
      }
      grads = num::clip_global_norm(std::move(grads), static_cast<S>(cfg.grad_clip));
      double norm = static_cast<double>(num::global_norm(grads));
      num::adam_step(refs, grads, adam);
      if (hooks && hooks->on_step) hooks->on_step(StepInfo{phase, epoch, batch_idx, loss_v, norm});
    }

    if (validation && !validation->empty()) {
      double acc = eval::evaluate_accuracy<S>(params, vocab, *validation, val_domain->inventory(),
                                              cfg.max_seq_len);
      if (hooks && hooks->on_epoch) hooks->on_epoch(epoch, acc);
      auto [next, decision] = early_stop_update(es, acc, patience, epoch);
      es = next;
      if (decision == StopDecision::stop) break;
    } else if (hooks && hooks->on_epoch) {
      hooks->on_epoch(epoch, -1.0);
    }
  }
  if (best_epoch_out) *best_epoch_out = es.best_epoch;
  if (best_acc_out) *best_acc_out = es.best_metric;
}

}  // namespace detail

// Phase 1 trains with early stopping on validation ranking accuracy and
// records the best epoch E*; phase 2 restarts from the same initial
// parameters and trains on train+validation for E* epochs. With an empty
// validation set there is a single phase of max_epochs.
template <typename S>
TrainOutcome<S> train_model(const TrainConfig& cfg, const corpus::Domain& domain,
                            const corpus::Splits& splits, const corpus::Vocabulary& vocab,
                            const model::ModelParams<S>& init, const TrainHooks* hooks = nullptr) {
  if (splits.train.empty()) throw InsufficientDataError("train: empty train split");

  TrainOutcome<S> out{init, 0, 0.0};
  if (cfg.max_epochs == 0) return out;

  if (splits.validation.empty()) {
    detail::run_epochs<S>(cfg, vocab, splits.train, out.params, cfg.max_epochs, 1, nullptr,
                          nullptr, cfg.patience, hooks, nullptr, nullptr);
    out.best_epoch = cfg.max_epochs;
    return out;
  }

  // Phase 1: early-stopped run, parameters discarded afterwards.
  model::ModelParams<S> probe = init;
  int best_epoch = 0;
  double best_acc = 0.0;
  detail::run_epochs<S>(cfg, vocab, splits.train, probe, cfg.max_epochs, 1, &domain,
                        &splits.validation, cfg.patience, hooks, &best_epoch, &best_acc);
  out.best_epoch = best_epoch;
  out.best_val_accuracy = best_acc;
  if (best_epoch == 0) return out;  // metric never finite-improved; keep the init

  // Phase 2: identical reinitialization, full training pool, E* epochs.
  std::vector<corpus::Example> pool = splits.train;
  pool.insert(pool.end(), splits.validation.begin(), splits.validation.end());
  detail::run_epochs<S>(cfg, vocab, pool, out.params, best_epoch, 2, nullptr, nullptr,
                        cfg.patience, hooks, nullptr, nullptr);
  return out;
}

template <typename S>
Checkpoint make_checkpoint(const TrainConfig& cfg, const corpus::Vocabulary& vocab,
                           model::ModelParams<S>& params, const TrainOutcome<S>& outcome,
                           nlohmann::json lineage = nlohmann::json::array()) {
  Checkpoint ckpt;
  ckpt.metadata = nlohmann::json{{"config", cfg.to_json()},
                                 {"vocabulary", vocab.tokens()},
                                 {"seed", cfg.seed},
                                 {"epochs_run", outcome.best_epoch},
                                 {"best_validation_accuracy", outcome.best_val_accuracy},
                                 {"lineage", std::move(lineage)}};
  ckpt.tensors = pack_params<S>(params);
  return ckpt;
}

template <typename S>
model::ModelParams<S> params_from_checkpoint(const Checkpoint& ckpt) {
  corpus::Vocabulary vocab =
      corpus::Vocabulary::from_tokens(ckpt.metadata.at("vocabulary").get<std::vector<std::string>>());
  TrainConfig cfg = TrainConfig::from_json(ckpt.metadata.at("config"));
  return unpack_params<S>(ckpt, vocab.size(), cfg.emb_dim, cfg.state_size);
}

// Source-initialized target model: shared rows copied, new embedding rows
// taken from the supplied (already transformed) embedding when present,
// otherwise drawn from U(-sqrt(3), sqrt(3)); new output rows Xavier.
template <typename S>
model::ModelParams<S> adapt_initialize(const Checkpoint& source, const TrainConfig& cfg,
                                       const corpus::Vocabulary& source_vocab,
                                       const corpus::Vocabulary& target_vocab,
                                       const embed::EmbeddingMatrix* pretrained) {
  TrainConfig src_cfg = TrainConfig::from_json(source.metadata.at("config"));
  if (src_cfg.state_size != cfg.state_size || src_cfg.emb_dim != cfg.emb_dim)
    throw IncompatibilityError(
        "adapt: source checkpoint has s=" + std::to_string(src_cfg.state_size) +
        ", d=" + std::to_string(src_cfg.emb_dim) + "; config wants s=" +
        std::to_string(cfg.state_size) + ", d=" + std::to_string(cfg.emb_dim));

  model::ModelParams<S> src =
      unpack_params<S>(source, source_vocab.size(), cfg.emb_dim, cfg.state_size);
  const num::Index v_old = source_vocab.size();
  const num::Index v_new = target_vocab.size();
  const num::Index d = src.emb_dim();
  const num::Index s = src.state_size();
  for (int i = 0; i < static_cast<int>(v_old); ++i)
    if (source_vocab.token(i) != target_vocab.token(i))
      throw IncompatibilityError("adapt: target vocabulary does not extend the source vocabulary");

  model::ModelParams<S> out = src;  // recurrent, attention and init weights copied
  if (v_new == v_old) return out;

  std::unordered_map<std::string, Eigen::Index> emb_row;
  if (pretrained) {
    if (pretrained->dim() != d)
      throw IncompatibilityError("adapt: embedding dimension " + std::to_string(pretrained->dim()) +
                                 " does not match model dimension " + std::to_string(d));
    for (std::size_t i = 0; i < pretrained->words.size(); ++i)
      if (pretrained->provenance[i] == embed::Provenance::pretrained)
        emb_row.emplace(pretrained->words[i], static_cast<Eigen::Index>(i));
  }

  num::Mat<S> emb(v_new, d);
  emb.topRows(v_old) = src.embedding.mat();
  Rng fill_rng(mix64(cfg.seed, 0x61656d62ULL));  // "aemb"
  constexpr double kSqrt3 = 1.7320508075688772935;
  for (num::Index i = v_old; i < v_new; ++i) {
    auto it = emb_row.find(target_vocab.token(static_cast<int>(i)));
    if (it != emb_row.end()) {
      for (num::Index j = 0; j < d; ++j)
        emb(i, j) = static_cast<S>(pretrained->rows(it->second, j));
    } else {
      for (num::Index j = 0; j < d; ++j)
        emb(i, j) = static_cast<S>(fill_rng.uniform(-kSqrt3, kSqrt3));
    }
  }
  out.embedding = num::Tensor<S>::matrix(std::move(emb));

  num::Mat<S> w_out(v_new, 3 * s);
  w_out.topRows(v_old) = src.w_out.mat();
  Rng out_rng(mix64(cfg.seed, 0x616f7574ULL));  // "aout"
  double limit = std::sqrt(6.0 / static_cast<double>(3 * s + v_new));
  for (num::Index i = v_old; i < v_new; ++i)
    for (num::Index j = 0; j < 3 * s; ++j)
      w_out(i, j) = static_cast<S>(out_rng.uniform(-limit, limit));
  out.w_out = num::Tensor<S>::matrix(std::move(w_out));

  num::Vec<S> b_out = num::Vec<S>::Zero(v_new);
  b_out.topRows(v_old) = src.b_out.mat();
  out.b_out = num::Tensor<S>::vector(b_out);
  return out;
}

// The full three-step protocol: initialize from the source checkpoint,
// extend the vocabulary, fine-tune on the target splits.
template <typename S>
std::pair<TrainOutcome<S>, corpus::Vocabulary> adapt_model(
    const Checkpoint& source, const corpus::Domain& target, const corpus::Splits& splits,
    const TrainConfig& cfg, const embed::EmbeddingMatrix* pretrained,
    const TrainHooks* hooks = nullptr) {
  corpus::Vocabulary source_vocab = corpus::Vocabulary::from_tokens(
      source.metadata.at("vocabulary").get<std::vector<std::string>>());
  auto [target_vocab, added] = corpus::Vocabulary::extend(source_vocab, target);
  (void)added;
  model::ModelParams<S> init =
      adapt_initialize<S>(source, cfg, source_vocab, target_vocab, pretrained);
  TrainOutcome<S> outcome = train_model<S>(cfg, target, splits, target_vocab, init, hooks);
  return {std::move(outcome), std::move(target_vocab)};
}

}  // namespace xdsp::train

#endif
