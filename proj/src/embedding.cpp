#include "xdsp/embedding.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "xdsp/errors.hpp"
#include "xdsp/rng.hpp"

namespace xdsp::embed {

namespace {

constexpr double kSqrt3 = 1.7320508075688772935;

// Population variance of a row, mean-centered inside the computation only.
double row_variance(const Eigen::MatrixXd& m, Eigen::Index i) {
  const Eigen::Index d = m.cols();
  double mean = 0;
  for (Eigen::Index j = 0; j < d; ++j) mean += m(i, j);
  mean /= static_cast<double>(d);
  double var = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    double c = m(i, j) - mean;
    var += c * c;
  }
  return var / static_cast<double>(d);
}

double col_variance(const Eigen::MatrixXd& m, Eigen::Index j,
                    const std::vector<Eigen::Index>& rows) {
  double mean = 0;
  for (Eigen::Index i : rows) mean += m(i, j);
  mean /= static_cast<double>(rows.size());
  double var = 0;
  for (Eigen::Index i : rows) {
    double c = m(i, j) - mean;
    var += c * c;
  }
  return var / static_cast<double>(rows.size());
}

void require_transformable(const EmbeddingMatrix& e, const char* op) {
  if (e.strategy != Strategy::raw && e.strategy != Strategy::random)
    throw ContractError(std::string(op) + ": matrix already carries transform '" +
                        strategy_name(e.strategy) + "'; transforms do not compose");
}

// Rows a transform acts on. OOV filler rows inside a loaded matrix are
// exempt (already unit variance by construction); a pure random matrix is
// transformed whole.
std::vector<Eigen::Index> pretrained_rows(const EmbeddingMatrix& e) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(e.rows.rows()));
  const bool all_rows = e.strategy == Strategy::random || e.provenance.empty();
  for (Eigen::Index i = 0; i < e.rows.rows(); ++i)
    if (all_rows || e.provenance[static_cast<std::size_t>(i)] == Provenance::pretrained)
      idx.push_back(i);
  return idx;
}

std::string word_label(const EmbeddingMatrix& e, Eigen::Index i) {
  if (static_cast<std::size_t>(i) < e.words.size()) return "'" + e.words[static_cast<std::size_t>(i)] + "'";
  return "#" + std::to_string(i);
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double pop_std_of(const std::vector<double>& xs, double mean) {
  double s = 0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::raw: return "raw";
    case Strategy::per_example_standardized: return "es";
    case Strategy::per_feature_standardized: return "fs";
    case Strategy::per_example_normalized: return "en";
  }
  return "?";
}

Strategy strategy_from_flag(const std::string& flag) {
  if (flag == "none" || flag == "raw") return Strategy::raw;
  if (flag == "es") return Strategy::per_example_standardized;
  if (flag == "fs") return Strategy::per_feature_standardized;
  if (flag == "en") return Strategy::per_example_normalized;
  if (flag == "random") return Strategy::random;
  throw RangeError("unknown embedding strategy '" + flag + "' (expected none|es|fs|en)");
}

EmbeddingMatrix random_embedding(Eigen::Index vocab_size, Eigen::Index d, std::uint64_t seed) {
  if (vocab_size < 1 || d < 1) throw ContractError("random_embedding: vocab_size and d must be >= 1");
  EmbeddingMatrix e;
  e.rows.resize(vocab_size, d);
  Rng rng(mix64(seed, 0x72616e64ULL));  // "rand"
  for (Eigen::Index i = 0; i < vocab_size; ++i)
    for (Eigen::Index j = 0; j < d; ++j) e.rows(i, j) = rng.uniform(-kSqrt3, kSqrt3);
  e.provenance.assign(static_cast<std::size_t>(vocab_size), Provenance::random_filled);
  e.strategy = Strategy::random;
  return e;
}

std::pair<EmbeddingMatrix, double> load_pretrained(const std::string& path,
                                                   const std::vector<std::string>& vocab,
                                                   std::uint64_t seed, Eigen::Index expected_dim) {
  if (vocab.empty()) throw ContractError("load_pretrained: empty vocabulary");
  std::ifstream in(path);
  if (!in) throw IoError("load_pretrained: cannot open " + path);

  std::unordered_map<std::string, Eigen::Index> want;
  for (std::size_t i = 0; i < vocab.size(); ++i) want.emplace(vocab[i], static_cast<Eigen::Index>(i));

  Eigen::Index dim = expected_dim;
  std::string line;
  long line_no = 0;
  std::vector<std::pair<Eigen::Index, std::vector<double>>> hits;

  // Optional "<count> <dim>" header.
  std::streampos first = in.tellg();
  if (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    long long count = 0, hdim = 0;
    std::string extra;
    if ((ss >> count >> hdim) && !(ss >> extra)) {
      if (expected_dim > 0 && hdim != expected_dim)
        throw DimensionError("load_pretrained: header dimension " + std::to_string(hdim) +
                             " disagrees with configured " + std::to_string(expected_dim));
      dim = static_cast<Eigen::Index>(hdim);
    } else {
      in.clear();
      in.seekg(first);
      line_no = 0;
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (dim == 0) dim = static_cast<Eigen::Index>(vals.size());
    if (static_cast<Eigen::Index>(vals.size()) != dim)
      throw ParseError("load_pretrained: line " + std::to_string(line_no) + " has " +
                       std::to_string(vals.size()) + " values, expected " + std::to_string(dim));
    auto it = want.find(word);
    if (it != want.end()) hits.emplace_back(it->second, std::move(vals));
  }
  if (dim == 0) throw ParseError("load_pretrained: no vectors in " + path);

  EmbeddingMatrix e;
  e.words = vocab;
  e.rows.resize(static_cast<Eigen::Index>(vocab.size()), dim);
  e.provenance.assign(vocab.size(), Provenance::random_filled);
  Rng rng(mix64(seed, 0x66696c6cULL));  // "fill"
  for (Eigen::Index i = 0; i < e.rows.rows(); ++i)
    for (Eigen::Index j = 0; j < dim; ++j) e.rows(i, j) = rng.uniform(-kSqrt3, kSqrt3);
  std::set<Eigen::Index> covered;
  for (const auto& [row, vals] : hits) {
    for (Eigen::Index j = 0; j < dim; ++j) e.rows(row, j) = vals[static_cast<std::size_t>(j)];
    e.provenance[static_cast<std::size_t>(row)] = Provenance::pretrained;
    covered.insert(row);
  }
  e.strategy = Strategy::raw;
  double coverage = static_cast<double>(covered.size()) / static_cast<double>(vocab.size());
  return {std::move(e), coverage};
}

Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double var = row_variance(m, i);
    if (var <= 0.0)
      throw DegenerateDataError("standardize_rows: row " + std::to_string(i) + " has zero variance");
    out.row(i) /= std::sqrt(var);
  }
  return out;
}

Eigen::MatrixXd standardize_cols(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  std::vector<Eigen::Index> all(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    double var = col_variance(m, j, all);
    if (var <= 0.0)
      throw DegenerateDataError("standardize_cols: column " + std::to_string(j) +
                                " has zero variance");
    out.col(j) /= std::sqrt(var);
  }
  return out;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double norm = m.row(i).norm();
    if (norm <= 0.0)
      throw DegenerateDataError("normalize_rows: row " + std::to_string(i) + " is zero");
    out.row(i) /= norm;
  }
  return out;
}

EmbeddingMatrix standardize_per_example(const EmbeddingMatrix& e) {
  require_transformable(e, "standardize_per_example");
  EmbeddingMatrix out = e;
  for (Eigen::Index i : pretrained_rows(e)) {
    double var = row_variance(e.rows, i);
    if (var <= 0.0)
      throw DegenerateDataError("standardize_per_example: constant row for word " +
                                word_label(e, i));
    out.rows.row(i) /= std::sqrt(var);
  }
  out.strategy = Strategy::per_example_standardized;
  return out;
}

EmbeddingMatrix standardize_per_feature(const EmbeddingMatrix& e) {
  require_transformable(e, "standardize_per_feature");
  EmbeddingMatrix out = e;
  std::vector<Eigen::Index> rows = pretrained_rows(e);
  if (!rows.empty()) {
    for (Eigen::Index j = 0; j < e.rows.cols(); ++j) {
      double var = col_variance(e.rows, j, rows);
      if (var <= 0.0)
        throw DegenerateDataError("standardize_per_feature: column " + std::to_string(j) +
                                  " has zero variance");
      double s = std::sqrt(var);
      for (Eigen::Index i : rows) out.rows(i, j) = e.rows(i, j) / s;
    }
  }
  out.strategy = Strategy::per_feature_standardized;
  return out;
}

EmbeddingMatrix normalize_per_example(const EmbeddingMatrix& e) {
  require_transformable(e, "normalize_per_example");
  EmbeddingMatrix out = e;
  for (Eigen::Index i : pretrained_rows(e)) {
    double norm = e.rows.row(i).norm();
    if (norm <= 0.0)
      throw DegenerateDataError("normalize_per_example: zero row for word " + word_label(e, i));
    out.rows.row(i) /= norm;
  }
  out.strategy = Strategy::per_example_normalized;
  return out;
}

EmbeddingMatrix apply_strategy(const EmbeddingMatrix& e, Strategy s) {
  switch (s) {
    case Strategy::per_example_standardized: return standardize_per_example(e);
    case Strategy::per_feature_standardized: return standardize_per_feature(e);
    case Strategy::per_example_normalized: return normalize_per_example(e);
    default: return e;
  }
}

EmbedStats embedding_stats(const EmbeddingMatrix& e, std::int64_t n_pairs, std::uint64_t seed) {
  const Eigen::Index n = e.rows.rows();
  if (n_pairs < 1) throw ContractError("embedding_stats: n_pairs must be >= 1");
  if (n < 2) throw ContractError("embedding_stats: need at least two rows");

  std::vector<double> l2(static_cast<std::size_t>(n)), mv(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    l2[static_cast<std::size_t>(i)] = e.rows.row(i).norm();
    mv[static_cast<std::size_t>(i)] = row_variance(e.rows, i);
  }

  EmbedStats st;
  st.l2_mean = mean_of(l2);
  st.l2_std = pop_std_of(l2, st.l2_mean);
  st.mv_mean = mean_of(mv);
  st.mv_std = pop_std_of(mv, st.mv_mean);
  st.seed = seed;

  // Distinct unordered pairs, sampled without replacement.
  const double max_pairs_d = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  std::int64_t m = n_pairs;
  if (static_cast<double>(m) > max_pairs_d) m = static_cast<std::int64_t>(max_pairs_d);
  Rng rng(mix64(seed, 0x70616972ULL));  // "pair"
  std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
  std::vector<double> cos;
  cos.reserve(static_cast<std::size_t>(m));
  while (static_cast<std::int64_t>(cos.size()) < m) {
    Eigen::Index a = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
    Eigen::Index b = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!seen.emplace(a, b).second) continue;
    double na = l2[static_cast<std::size_t>(a)], nb = l2[static_cast<std::size_t>(b)];
    double c = (na > 0 && nb > 0) ? e.rows.row(a).dot(e.rows.row(b)) / (na * nb) : 0.0;
    cos.push_back(c);
  }
  st.cos_mean = mean_of(cos);
  st.cos_std = pop_std_of(cos, st.cos_mean);
  st.pairs = m;
  return st;
}

std::string stats_csv_header() {
  return "strategy,l2_mean,l2_std,mv_mean,mv_std,cos_mean,cos_std,pairs,seed";
}

std::string stats_csv_row(Strategy s, const EmbedStats& st) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%lld,%llu",
                strategy_name(s).c_str(), st.l2_mean, st.l2_std, st.mv_mean, st.mv_std,
                st.cos_mean, st.cos_std, static_cast<long long>(st.pairs),
                static_cast<unsigned long long>(st.seed));
  return buf;
}

}  // namespace xdsp::embed
