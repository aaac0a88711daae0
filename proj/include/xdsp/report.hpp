#ifndef XDSP_REPORT_HPP
#define XDSP_REPORT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xdsp/evaluator.hpp"

namespace xdsp::eval {

inline constexpr const char* kInDomain = "in-domain";
inline constexpr const char* kCrossDomain = "cross-domain";

// One evaluation run, serialized as JSON next to its outputs.
struct EvalReport {
  std::string domain;
  std::string setting;   // in-domain | cross-domain
  std::string strategy;  // e.g. "random", "pretrained+es"
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t n_examples = 0;  // domain size N (abundance numerator)
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t vocab_size = 0;  // content vocabulary (abundance denominator)
  double abundance = 0.0;      // N / |V|
  std::string config_digest;
  std::vector<Prediction> predictions;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

void write_report(const std::string& path, const EvalReport& r);
EvalReport read_report(const std::string& path);

struct SweepRow {
  double rate = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::string setting;
};

std::string sweep_csv(const std::vector<SweepRow>& rows);  // "rate,repeat,seed,accuracy"
std::vector<SweepRow> parse_sweep_csv(const std::string& text, const std::string& setting);

struct ReportOutput {
  std::string markdown;         // per-domain I/X table plus correlations
  std::string correlation_csv;  // "init_strategy,pearson_r"
  std::string sweep_curve_csv;  // "rate,setting,mean_accuracy,repeats"
};

// Pairs in-domain and cross-domain runs by (domain, strategy), computes
// X - I improvements and the Pearson correlation of abundance against
// improvement per strategy. Unpaired runs raise a pairing error. Degenerate
// (zero-variance) correlations are flagged, not errors.
ReportOutput assemble_report(const std::vector<EvalReport>& runs,
                             const std::vector<SweepRow>& sweep_rows = {});

}  // namespace xdsp::eval

#endif
