#ifndef XDSP_EMBEDDING_HPP
#define XDSP_EMBEDDING_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace xdsp::embed {

enum class Provenance : std::uint8_t { pretrained, random_filled };

enum class Strategy : std::uint8_t {
  random,                    // sampled from U(-sqrt(3), sqrt(3))
  raw,                       // loaded vectors, no transform
  per_example_standardized,  // each row divided by its own std
  per_feature_standardized,  // each column divided by its std
  per_example_normalized,    // each row scaled to unit L2
};

std::string strategy_name(Strategy s);
Strategy strategy_from_flag(const std::string& flag);  // none|es|fs|en (plus random)

// |V| x d matrix of word vectors with per-row provenance. The strategy tag
// names the last transform applied; transforms do not compose.
struct EmbeddingMatrix {
  Eigen::MatrixXd rows;
  std::vector<std::string> words;  // aligned with rows; may be empty for synthetic matrices
  std::vector<Provenance> provenance;
  Strategy strategy = Strategy::raw;

  Eigen::Index vocab_size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
};

EmbeddingMatrix random_embedding(Eigen::Index vocab_size, Eigen::Index d, std::uint64_t seed);

// Text format: optional "<count> <dim>" header, then "<word> v1 ... vd"
// lines. Vocabulary words absent from the file are filled from the random
// distribution above. Returns the matrix and the pretrained coverage
// fraction. expected_dim 0 means take the file's dimension.
std::pair<EmbeddingMatrix, double> load_pretrained(const std::string& path,
                                                   const std::vector<std::string>& vocab,
                                                   std::uint64_t seed,
                                                   Eigen::Index expected_dim = 0);

// Plain matrix transforms (population variance, mean used only inside the
// variance; rows/columns are never shifted). Degenerate rows/columns throw.
Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& m);
Eigen::MatrixXd standardize_cols(const Eigen::MatrixXd& m);
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m);

// Provenance-aware transforms: pretrained rows are transformed, random-filled
// rows pass through untouched (they are unit variance by construction).
EmbeddingMatrix standardize_per_example(const EmbeddingMatrix& e);
EmbeddingMatrix standardize_per_feature(const EmbeddingMatrix& e);
EmbeddingMatrix normalize_per_example(const EmbeddingMatrix& e);

EmbeddingMatrix apply_strategy(const EmbeddingMatrix& e, Strategy s);

struct EmbedStats {
  double l2_mean = 0, l2_std = 0;    // per-row L2 norm
  double mv_mean = 0, mv_std = 0;    // per-row (micro) variance
  double cos_mean = 0, cos_std = 0;  // over the sampled pair set
  std::int64_t pairs = 0;
  std::uint64_t seed = 0;
};

// Row statistics are exact over all rows; cosine statistics use n_pairs
// distinct pairs drawn deterministically from the seed.
EmbedStats embedding_stats(const EmbeddingMatrix& e, std::int64_t n_pairs, std::uint64_t seed);

std::string stats_csv_header();
std::string stats_csv_row(Strategy s, const EmbedStats& st);

}  // namespace xdsp::embed

#endif
