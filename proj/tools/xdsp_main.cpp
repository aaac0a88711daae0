// xdsp: cross-domain semantic parsing via paraphrasing.
//
// Subcommands: prepare, embed-stats, train, adapt, evaluate, sweep, report.
// Results go to files, diagnostics to stderr. Exit codes: 0 success, 1
// domain errors (parse/consistency/divergence/...), 2 usage errors.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "xdsp/corpus.hpp"
#include "xdsp/digest.hpp"
#include "xdsp/embedding.hpp"
#include "xdsp/errors.hpp"
#include "xdsp/evaluator.hpp"
#include "xdsp/io.hpp"
#include "xdsp/report.hpp"
#include "xdsp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xdsp;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string data_dir;
  std::string target;
  std::string exclude;
  std::string embeddings;
  std::string strategy;
  std::string random_spec;  // "V,D"
  std::string source_ckpt;
  std::string ckpt;
  std::string runs_dir;
  std::string out;
  std::string rates = "0.1,0.2,0.3,0.5,0.7,1.0";
  int repeats = 3;
  long long pairs = 1000000;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

class ManifestWriter {
 public:
  ManifestWriter(std::string command, json config, std::uint64_t seed)
      : start_(std::chrono::steady_clock::now()) {
    manifest_["command"] = std::move(command);
    manifest_["config"] = std::move(config);
    manifest_["seed"] = seed;
    manifest_["inputs"] = json::object();
    manifest_["outputs"] = json::array();
  }

  void input(const std::string& path) {
    manifest_["inputs"][path] = digest::sha256_file(path);
  }
  void input_dir_tsv(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() &&
          (e.path().extension() == ".tsv" || e.path().extension() == ".canonicals"))
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) input(f);
  }
  void output(const std::string& path) { manifest_["outputs"].push_back(path); }
  void note(const std::string& key, const json& value) { manifest_[key] = value; }

  // Alongside the primary output: "<out>.manifest.json", or manifest.json
  // inside an output directory.
  void write(const std::string& primary_out, bool is_dir = false) {
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
    manifest_["duration_seconds"] = elapsed.count();
    fs::path p = is_dir ? fs::path(primary_out) / "manifest.json"
                        : fs::path(primary_out + ".manifest.json");
    io::atomic_write(p.string(), manifest_.dump(2) + "\n");
  }

 private:
  json manifest_;
  std::chrono::steady_clock::time_point start_;
};

train::TrainConfig resolve_config(const CommonFlags& f, bool config_required) {
  train::TrainConfig cfg;
  if (!f.config_path.empty()) {
    try {
      cfg = train::TrainConfig::from_json(json::parse(io::read_file(f.config_path)));
    } catch (const json::exception& e) {
      throw ParseError("config " + f.config_path + ": " + e.what());
    }
  } else if (config_required) {
    throw ContractError("--config is required");  // CLI11 enforces first; belt and braces
  }
  // Flags win over the config file.
  if (!f.embeddings.empty()) {
    cfg.embedding_path = f.embeddings;
    cfg.embedding_source = "pretrained";
  }
  if (!f.strategy.empty()) cfg.embedding_transform = f.strategy;
  if (f.seed_set) cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

std::string strategy_label(const train::TrainConfig& cfg) {
  if (cfg.embedding_source == "random") return "random";
  return "pretrained+" + cfg.embedding_transform;
}

corpus::Domain select_domain(const std::vector<corpus::Domain>& domains, const std::string& name) {
  for (const auto& d : domains)
    if (d.name() == name) return d;
  std::string have;
  for (const auto& d : domains) have += " " + d.name();
  throw ContractError("domain '" + name + "' not found in data dir; have:" + have);
}

std::set<std::string> embedding_file_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::set<std::string> words;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string w;
    ss >> w;
    if (first) {
      first = false;
      long long a, b;
      std::string rest;
      std::istringstream hdr(line);
      if ((hdr >> a >> b) && !(hdr >> rest)) continue;  // header line
    }
    if (!w.empty()) words.insert(w);
  }
  return words;
}

std::vector<double> parse_rates(const std::string& spec) {
  std::vector<double> rates;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    rates.push_back(std::stod(item));
  }
  if (rates.empty()) throw RangeError("--rates: no rates given");
  for (double r : rates)
    if (!(r > 0.0) || r > 1.0) throw RangeError("--rates: rate out of (0,1]: " + std::to_string(r));
  return rates;
}

// Embedding matrix aligned with the vocabulary, transformed per config.
embed::EmbeddingMatrix load_model_embedding(const train::TrainConfig& cfg,
                                            const std::vector<std::string>& vocab_tokens,
                                            double* coverage_out) {
  auto [emb, coverage] =
      embed::load_pretrained(cfg.embedding_path, vocab_tokens, cfg.seed, cfg.emb_dim);
  if (coverage_out) *coverage_out = coverage;
  return embed::apply_strategy(emb, embed::strategy_from_flag(cfg.embedding_transform));
}

template <typename S>
model::ModelParams<S> initial_params(const train::TrainConfig& cfg,
                                     const corpus::Vocabulary& vocab,
                                     const embed::EmbeddingMatrix* emb) {
  auto params = model::ModelParams<S>::init(vocab.size(), cfg.emb_dim, cfg.state_size, cfg.seed);
  if (emb) {
    num::Mat<S> rows(emb->rows.rows(), emb->rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      for (Eigen::Index j = 0; j < rows.cols(); ++j)
        rows(i, j) = static_cast<S>(emb->rows(i, j));
    params.embedding = num::Tensor<S>::matrix(std::move(rows));
  }
  return params;
}

// ---------------------------------------------------------------------------

int cmd_prepare(const CommonFlags& f) {
  ManifestWriter manifest("prepare", json::object(), f.seed);
  auto domains = corpus::load_domain_dir(f.data_dir);
  manifest.input_dir_tsv(f.data_dir);
  std::set<std::string> emb_vocab;
  if (!f.embeddings.empty()) {
    emb_vocab = embedding_file_vocab(f.embeddings);
    manifest.input(f.embeddings);
  }
  auto stats = corpus::domain_statistics(domains, emb_vocab);
  io::atomic_write(f.out, corpus::domain_stats_csv(stats));
  manifest.output(f.out);
  manifest.write(f.out);
  return 0;
}

int cmd_embed_stats(const CommonFlags& f) {
  ManifestWriter manifest("embed-stats", json{{"strategy", f.strategy}, {"pairs", f.pairs}},
                          f.seed);
  embed::EmbeddingMatrix base;
  if (!f.random_spec.empty()) {
    long long v = 0, d = 0;
    if (std::sscanf(f.random_spec.c_str(), "%lld,%lld", &v, &d) != 2 || v < 1 || d < 1)
      throw RangeError("--random expects V,D with positive integers");
    base = embed::random_embedding(v, d, f.seed);
  } else if (!f.embeddings.empty()) {
    auto words_set = embedding_file_vocab(f.embeddings);
    std::vector<std::string> words(words_set.begin(), words_set.end());
    auto [emb, coverage] = embed::load_pretrained(f.embeddings, words, f.seed);
    base = std::move(emb);
    manifest.input(f.embeddings);
  } else {
    throw ContractError("embed-stats needs --embeddings or --random V,D");
  }

  std::string csv = embed::stats_csv_header() + "\n";
  std::stringstream ss(f.strategy.empty() ? std::string("none") : f.strategy);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    embed::Strategy s = embed::strategy_from_flag(item);
    embed::EmbeddingMatrix transformed = embed::apply_strategy(base, s);
    auto st = embed::embedding_stats(transformed, f.pairs, f.seed);
    csv += embed::stats_csv_row(transformed.strategy, st) + "\n";
  }
  io::atomic_write(f.out, csv);
  manifest.output(f.out);
  manifest.write(f.out);
  return 0;
}

template <typename S>
int run_train(const CommonFlags& f, const train::TrainConfig& cfg) {
  ManifestWriter manifest("train", cfg.to_json(), cfg.seed);
  auto domains = corpus::load_domain_dir(f.data_dir);
  manifest.input_dir_tsv(f.data_dir);

  corpus::Domain domain = [&]() {
    if (!f.target.empty() && !f.exclude.empty())
      throw ContractError("train takes --target or --exclude, not both");
    if (!f.target.empty()) return select_domain(domains, f.target);
    if (!f.exclude.empty()) {
      std::vector<corpus::Domain> sources;
      for (const auto& d : domains)
        if (d.name() != f.exclude) sources.push_back(d);
      if (sources.size() == domains.size())
        throw ContractError("--exclude " + f.exclude + ": no such domain");
      if (sources.empty()) throw InsufficientDataError("--exclude removed every domain");
      return corpus::merge_source_domains(sources);
    }
    throw ContractError("train needs --target <domain> or --exclude <domain>");
  }();

  corpus::Vocabulary vocab = corpus::Vocabulary::build({domain});
  corpus::Splits splits = corpus::split_domain(domain, cfg.seed);

  embed::EmbeddingMatrix emb;
  const embed::EmbeddingMatrix* emb_ptr = nullptr;
  if (cfg.embedding_source == "pretrained") {
    if (cfg.embedding_path.empty()) throw ContractError("pretrained embedding needs --embeddings");
    double coverage = 0;
    emb = load_model_embedding(cfg, vocab.tokens(), &coverage);
    manifest.input(cfg.embedding_path);
    manifest.note("embedding_coverage", coverage);
    std::cerr << "embedding coverage: " << coverage << "\n";
    emb_ptr = &emb;
  }

  auto init = initial_params<S>(cfg, vocab, emb_ptr);
  auto outcome = train::train_model<S>(cfg, domain, splits, vocab, init);
  train::Checkpoint ckpt = train::make_checkpoint<S>(cfg, vocab, outcome.params, outcome);
  ckpt.metadata["domain"] = domain.name();
  train::save_checkpoint(ckpt, f.out);
  std::cerr << "best epoch " << outcome.best_epoch << ", validation accuracy "
            << outcome.best_val_accuracy << "\n";
  manifest.output(f.out);
  manifest.write(f.out);
  return 0;
}

template <typename S>
int run_adapt(const CommonFlags& f, const train::TrainConfig& cfg) {
  ManifestWriter manifest("adapt", cfg.to_json(), cfg.seed);
  if (f.source_ckpt.empty()) throw ContractError("adapt needs --source-ckpt");
  auto domains = corpus::load_domain_dir(f.data_dir);
  manifest.input_dir_tsv(f.data_dir);
  manifest.input(f.source_ckpt);
  if (f.target.empty()) throw ContractError("adapt needs --target");
  corpus::Domain target = select_domain(domains, f.target);
  corpus::Splits splits = corpus::split_domain(target, cfg.seed);

  train::Checkpoint source = train::load_checkpoint(f.source_ckpt);
  corpus::Vocabulary source_vocab = corpus::Vocabulary::from_tokens(
      source.metadata.at("vocabulary").get<std::vector<std::string>>());
  auto [ext_vocab_probe, added] = corpus::Vocabulary::extend(source_vocab, target);

  embed::EmbeddingMatrix emb;
  const embed::EmbeddingMatrix* emb_ptr = nullptr;
  if (cfg.embedding_source == "pretrained") {
    if (cfg.embedding_path.empty()) throw ContractError("pretrained embedding needs --embeddings");
    double coverage = 0;
    emb = load_model_embedding(cfg, ext_vocab_probe.tokens(), &coverage);
    manifest.input(cfg.embedding_path);
    manifest.note("embedding_coverage", coverage);
    emb_ptr = &emb;
  }

  auto [outcome, vocab] = train::adapt_model<S>(source, target, splits, cfg, emb_ptr);
  json lineage = json::array();
  lineage.push_back({{"source_checkpoint", f.source_ckpt},
                     {"source_digest", digest::sha256_file(f.source_ckpt)},
                     {"source_domain", source.metadata.value("domain", std::string())},
                     {"new_tokens", added}});
  train::Checkpoint ckpt =
      train::make_checkpoint<S>(cfg, vocab, outcome.params, outcome, std::move(lineage));
  ckpt.metadata["domain"] = target.name();
  train::save_checkpoint(ckpt, f.out);
  std::cerr << "adapted with " << added << " new tokens; best epoch " << outcome.best_epoch
            << ", validation accuracy " << outcome.best_val_accuracy << "\n";
  manifest.output(f.out);
  manifest.write(f.out);
  return 0;
}

template <typename S>
eval::EvalReport evaluate_checkpoint(const train::Checkpoint& ckpt, const corpus::Domain& domain,
                                     const train::TrainConfig& cfg) {
  corpus::Vocabulary vocab = corpus::Vocabulary::from_tokens(
      ckpt.metadata.at("vocabulary").get<std::vector<std::string>>());
  auto params = train::unpack_params<S>(ckpt, vocab.size(), cfg.emb_dim, cfg.state_size);
  corpus::Splits splits = corpus::split_domain(domain, cfg.seed);

  eval::EvalReport r;
  r.domain = domain.name();
  r.setting = ckpt.metadata.at("lineage").empty() ? eval::kInDomain : eval::kCrossDomain;
  r.strategy = strategy_label(cfg);
  r.seed = cfg.seed;
  r.predictions = eval::predict_all<S>(params, vocab, splits.test, domain.inventory(),
                                       cfg.max_seq_len);
  std::size_t hits = 0;
  for (const auto& p : r.predictions) hits += p.correct;
  r.accuracy = r.predictions.empty()
                   ? 0.0
                   : static_cast<double>(hits) / static_cast<double>(r.predictions.size());
  r.n_examples = domain.examples().size();
  r.n_train = splits.train.size();
  r.n_test = splits.test.size();
  r.vocab_size = domain.content_vocabulary().size();
  r.abundance = static_cast<double>(r.n_examples) / static_cast<double>(r.vocab_size);
  r.config_digest = digest::sha256_hex(cfg.to_json().dump());
  return r;
}

int cmd_evaluate(const CommonFlags& f) {
  if (f.ckpt.empty()) throw ContractError("evaluate needs --ckpt");
  if (f.target.empty()) throw ContractError("evaluate needs --target");
  train::Checkpoint ckpt = train::load_checkpoint(f.ckpt);
  train::TrainConfig cfg = train::TrainConfig::from_json(ckpt.metadata.at("config"));
  ManifestWriter manifest("evaluate", cfg.to_json(), cfg.seed);
  manifest.input(f.ckpt);
  auto domains = corpus::load_domain_dir(f.data_dir);
  manifest.input_dir_tsv(f.data_dir);
  corpus::Domain domain = select_domain(domains, f.target);

  eval::EvalReport r = cfg.precision == "f32"
                           ? evaluate_checkpoint<float>(ckpt, domain, cfg)
                           : evaluate_checkpoint<double>(ckpt, domain, cfg);
  eval::write_report(f.out, r);
  std::cerr << "accuracy " << r.accuracy << " on " << r.n_test << " test examples\n";
  manifest.output(f.out);
  manifest.write(f.out);
  return 0;
}

template <typename S>
int run_sweep(const CommonFlags& f, const train::TrainConfig& cfg) {
  ManifestWriter manifest("sweep", cfg.to_json(), cfg.seed);
  auto domains = corpus::load_domain_dir(f.data_dir);
  manifest.input_dir_tsv(f.data_dir);
  if (f.target.empty()) throw ContractError("sweep needs --target");
  corpus::Domain target = select_domain(domains, f.target);
  std::vector<double> rates = parse_rates(f.rates);
  if (f.repeats < 1) throw RangeError("--repeats must be >= 1");

  std::optional<train::Checkpoint> source;
  if (!f.source_ckpt.empty()) {
    source = train::load_checkpoint(f.source_ckpt);
    manifest.input(f.source_ckpt);
  }

  corpus::Splits base = corpus::split_domain(target, cfg.seed);
  std::vector<corpus::Example> pool = base.train;
  pool.insert(pool.end(), base.validation.begin(), base.validation.end());

  fs::create_directories(f.out);
  std::vector<eval::SweepRow> in_rows, x_rows;
  for (std::size_t ri = 0; ri < rates.size(); ++ri) {
    for (int rep = 1; rep <= f.repeats; ++rep) {
      std::uint64_t run_seed =
          mix64(cfg.seed, 0x7377656570ULL, ri * 1000 + static_cast<std::uint64_t>(rep));
      auto sampled = corpus::downsample(pool, rates[ri], run_seed);
      auto [tr, val] = corpus::holdout_validation(sampled, run_seed);
      corpus::Splits splits{tr, val, base.test, run_seed};
      train::TrainConfig run_cfg = cfg;
      run_cfg.seed = run_seed;

      corpus::Vocabulary vocab = corpus::Vocabulary::build({target});
      embed::EmbeddingMatrix emb;
      const embed::EmbeddingMatrix* emb_ptr = nullptr;
      if (run_cfg.embedding_source == "pretrained") {
        emb = load_model_embedding(run_cfg, vocab.tokens(), nullptr);
        emb_ptr = &emb;
      }
      char tag[64];
      std::snprintf(tag, sizeof(tag), "rate%.2f_rep%d", rates[ri], rep);

      auto init = initial_params<S>(run_cfg, vocab, emb_ptr);
      auto outcome = train::train_model<S>(run_cfg, target, splits, vocab, init);
      double acc = splits.test.empty()
                       ? 0.0
                       : eval::evaluate_accuracy<S>(outcome.params, vocab, splits.test,
                                                    target.inventory(), run_cfg.max_seq_len);
      in_rows.push_back({rates[ri], rep, run_seed, acc, eval::kInDomain});
      train::Checkpoint in_ckpt = train::make_checkpoint<S>(run_cfg, vocab, outcome.params, outcome);
      in_ckpt.metadata["domain"] = target.name();
      eval::EvalReport in_report = evaluate_checkpoint<S>(in_ckpt, target, run_cfg);
      in_report.n_train = tr.size();
      eval::write_report((fs::path(f.out) / (std::string("in_") + tag + ".report.json")).string(),
                         in_report);

      if (source) {
        embed::EmbeddingMatrix xemb;
        const embed::EmbeddingMatrix* xemb_ptr = nullptr;
        corpus::Vocabulary src_vocab = corpus::Vocabulary::from_tokens(
            source->metadata.at("vocabulary").get<std::vector<std::string>>());
        auto [ext_vocab, _] = corpus::Vocabulary::extend(src_vocab, target);
        if (run_cfg.embedding_source == "pretrained") {
          xemb = load_model_embedding(run_cfg, ext_vocab.tokens(), nullptr);
          xemb_ptr = &xemb;
        }
        auto [x_outcome, x_vocab] =
            train::adapt_model<S>(*source, target, splits, run_cfg, xemb_ptr);
        double x_acc = splits.test.empty()
                           ? 0.0
                           : eval::evaluate_accuracy<S>(x_outcome.params, x_vocab, splits.test,
                                                        target.inventory(), run_cfg.max_seq_len);
        x_rows.push_back({rates[ri], rep, run_seed, x_acc, eval::kCrossDomain});
        train::Checkpoint x_ckpt = train::make_checkpoint<S>(
            run_cfg, x_vocab, x_outcome.params, x_outcome,
            json::array({{{"source_checkpoint", f.source_ckpt}}}));
        x_ckpt.metadata["domain"] = target.name();
        eval::EvalReport x_report = evaluate_checkpoint<S>(x_ckpt, target, run_cfg);
        x_report.n_train = tr.size();
        eval::write_report((fs::path(f.out) / (std::string("x_") + tag + ".report.json")).string(),
                           x_report);
      }
      std::cerr << tag << " done\n";
    }
  }
  io::atomic_write((fs::path(f.out) / "sweep_in.csv").string(), eval::sweep_csv(in_rows));
  manifest.output((fs::path(f.out) / "sweep_in.csv").string());
  if (!x_rows.empty()) {
    io::atomic_write((fs::path(f.out) / "sweep_cross.csv").string(), eval::sweep_csv(x_rows));
    manifest.output((fs::path(f.out) / "sweep_cross.csv").string());
  }
  manifest.write(f.out, /*is_dir=*/true);
  return 0;
}

int cmd_report(const CommonFlags& f) {
  ManifestWriter manifest("report", json::object(), f.seed);
  if (f.runs_dir.empty()) throw ContractError("report needs --runs <dir>");
  std::vector<eval::EvalReport> runs;
  std::vector<eval::SweepRow> sweep_rows;
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(f.runs_dir))
    if (e.is_regular_file()) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    if (p.ends_with(".report.json")) {
      runs.push_back(eval::read_report(p));
      manifest.input(p);
    } else if (p.ends_with("sweep_in.csv")) {
      auto rows = eval::parse_sweep_csv(io::read_file(p), eval::kInDomain);
      sweep_rows.insert(sweep_rows.end(), rows.begin(), rows.end());
      manifest.input(p);
    } else if (p.ends_with("sweep_cross.csv")) {
      auto rows = eval::parse_sweep_csv(io::read_file(p), eval::kCrossDomain);
      sweep_rows.insert(sweep_rows.end(), rows.begin(), rows.end());
      manifest.input(p);
    }
  }
  if (runs.empty() && sweep_rows.empty())
    throw InsufficientDataError("report: no .report.json or sweep csv files under " + f.runs_dir);

  eval::ReportOutput out = eval::assemble_report(runs, sweep_rows);
  fs::create_directories(f.out);
  io::atomic_write((fs::path(f.out) / "report.md").string(), out.markdown);
  manifest.output((fs::path(f.out) / "report.md").string());
  io::atomic_write((fs::path(f.out) / "correlation.csv").string(), out.correlation_csv);
  manifest.output((fs::path(f.out) / "correlation.csv").string());
  if (!out.sweep_curve_csv.empty()) {
    io::atomic_write((fs::path(f.out) / "sweep_curve.csv").string(), out.sweep_curve_csv);
    manifest.output((fs::path(f.out) / "sweep_curve.csv").string());
  }
  manifest.write(f.out, /*is_dir=*/true);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain semantic parsing via paraphrase ranking"};
  app.require_subcommand(1);
  CommonFlags f;

  auto add_common = [&f](CLI::App* cmd) {
    cmd->add_option("--seed", f.seed, "Seed for all randomness")->each([&f](const std::string&) {
      f.seed_set = true;
    });
  };

  CLI::App* prepare = app.add_subcommand("prepare", "Validate domains and emit statistics");
  prepare->add_option("--data", f.data_dir, "Directory of domain .tsv files")->required();
  prepare->add_option("--embeddings", f.embeddings, "Pre-trained embedding file");
  prepare->add_option("--out", f.out, "Output CSV path")->required();
  add_common(prepare);

  CLI::App* estats = app.add_subcommand("embed-stats", "Embedding matrix statistics");
  estats->add_option("--embeddings", f.embeddings, "Pre-trained embedding file");
  estats->add_option("--random", f.random_spec, "Random matrix spec V,D");
  estats->add_option("--strategy", f.strategy, "Comma list of none|es|fs|en");
  estats->add_option("--pairs", f.pairs, "Cosine pair sample size");
  estats->add_option("--out", f.out, "Output CSV path")->required();
  add_common(estats);

  CLI::App* train_cmd = app.add_subcommand("train", "Train a paraphrase model");
  train_cmd->add_option("--config", f.config_path, "Config JSON")->required();
  train_cmd->add_option("--data", f.data_dir, "Directory of domain .tsv files")->required();
  train_cmd->add_option("--target", f.target, "Train in-domain on this domain");
  train_cmd->add_option("--exclude", f.exclude, "Train on all domains except this one, merged");
  train_cmd->add_option("--embeddings", f.embeddings, "Pre-trained embedding file");
  train_cmd->add_option("--strategy", f.strategy, "Embedding transform none|es|fs|en");
  train_cmd->add_option("--out", f.out, "Output checkpoint path")->required();
  add_common(train_cmd);

  CLI::App* adapt_cmd = app.add_subcommand("adapt", "Fine-tune a source model on a target domain");
  adapt_cmd->add_option("--config", f.config_path, "Config JSON")->required();
  adapt_cmd->add_option("--data", f.data_dir, "Directory of domain .tsv files")->required();
  adapt_cmd->add_option("--target", f.target, "Target domain")->required();
  adapt_cmd->add_option("--source-ckpt", f.source_ckpt, "Source checkpoint")->required();
  adapt_cmd->add_option("--embeddings", f.embeddings, "Pre-trained embedding file");
  adapt_cmd->add_option("--strategy", f.strategy, "Embedding transform none|es|fs|en");
  adapt_cmd->add_option("--out", f.out, "Output checkpoint path")->required();
  add_common(adapt_cmd);

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a domain");
  eval_cmd->add_option("--ckpt", f.ckpt, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--data", f.data_dir, "Directory of domain .tsv files")->required();
  eval_cmd->add_option("--target", f.target, "Domain to evaluate on")->required();
  eval_cmd->add_option("--out", f.out, "Output report JSON path")->required();
  add_common(eval_cmd);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Accuracy curves over downsampled training data");
  sweep_cmd->add_option("--config", f.config_path, "Config JSON")->required();
  sweep_cmd->add_option("--data", f.data_dir, "Directory of domain .tsv files")->required();
  sweep_cmd->add_option("--target", f.target, "Target domain")->required();
  sweep_cmd->add_option("--source-ckpt", f.source_ckpt, "Source checkpoint for cross-domain runs");
  sweep_cmd->add_option("--rates", f.rates, "Comma list of downsampling rates");
  sweep_cmd->add_option("--repeats", f.repeats, "Repeats per rate");
  sweep_cmd->add_option("--embeddings", f.embeddings, "Pre-trained embedding file");
  sweep_cmd->add_option("--strategy", f.strategy, "Embedding transform none|es|fs|en");
  sweep_cmd->add_option("--out", f.out, "Output directory")->required();
  add_common(sweep_cmd);

  CLI::App* report_cmd = app.add_subcommand("report", "Assemble evaluation reports");
  report_cmd->add_option("--runs", f.runs_dir, "Directory of evaluation runs")->required();
  report_cmd->add_option("--out", f.out, "Output directory")->required();
  add_common(report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*prepare) return cmd_prepare(f);
    if (*estats) return cmd_embed_stats(f);
    if (*eval_cmd) return cmd_evaluate(f);
    if (*report_cmd) return cmd_report(f);
    if (*train_cmd) {
      train::TrainConfig cfg = resolve_config(f, true);
      return cfg.precision == "f32" ? run_train<float>(f, cfg) : run_train<double>(f, cfg);
    }
    if (*adapt_cmd) {
      train::TrainConfig cfg = resolve_config(f, true);
      return cfg.precision == "f32" ? run_adapt<float>(f, cfg) : run_adapt<double>(f, cfg);
    }
    if (*sweep_cmd) {
      train::TrainConfig cfg = resolve_config(f, true);
      return cfg.precision == "f32" ? run_sweep<float>(f, cfg) : run_sweep<double>(f, cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
