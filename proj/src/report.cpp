#include "xdsp/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "xdsp/errors.hpp"
#include "xdsp/io.hpp"

namespace xdsp::eval {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : predictions)
    preds.push_back({{"utterance", p.utterance},
                     {"gold", p.gold},
                     {"predicted", p.predicted},
                     {"predicted_logical_form", p.predicted_logical_form},
                     {"correct", p.correct}});
  return nlohmann::json{{"domain", domain},
                        {"setting", setting},
                        {"strategy", strategy},
                        {"seed", seed},
                        {"accuracy", accuracy},
                        {"n_examples", n_examples},
                        {"n_train", n_train},
                        {"n_test", n_test},
                        {"vocab_size", vocab_size},
                        {"abundance", abundance},
                        {"config_digest", config_digest},
                        {"predictions", std::move(preds)}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.domain = j.at("domain").get<std::string>();
  r.setting = j.at("setting").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  r.n_train = j.at("n_train").get<std::size_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  r.vocab_size = j.at("vocab_size").get<std::size_t>();
  r.abundance = j.at("abundance").get<double>();
  r.config_digest = j.value("config_digest", "");
  if (j.contains("predictions")) {
    for (const auto& p : j.at("predictions")) {
      Prediction pred;
      pred.utterance = p.at("utterance").get<std::string>();
      pred.gold = p.at("gold").get<std::string>();
      pred.predicted = p.at("predicted").get<std::string>();
      pred.predicted_logical_form = p.value("predicted_logical_form", "");
      pred.correct = p.at("correct").get<bool>();
      r.predictions.push_back(std::move(pred));
    }
  }
  return r;
}

void write_report(const std::string& path, const EvalReport& r) {
  io::atomic_write(path, r.to_json().dump(2) + "\n");
}

EvalReport read_report(const std::string& path) {
  try {
    return EvalReport::from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report " + path + ": " + e.what());
  }
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "rate,repeat,seed,accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f,%d,%llu,%.6f\n", r.rate, r.repeat,
                  static_cast<unsigned long long>(r.seed), r.accuracy);
    out += buf;
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text, const std::string& setting) {
  std::vector<SweepRow> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      if (line != "rate,repeat,seed,accuracy")
        throw ParseError("sweep csv: unexpected header '" + line + "'");
      header = false;
      continue;
    }
    SweepRow r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "%lf,%d,%llu,%lf", &r.rate, &r.repeat, &seed, &r.accuracy) != 4)
      throw ParseError("sweep csv line " + std::to_string(line_no) + ": cannot parse '" + line + "'");
    r.seed = seed;
    r.setting = setting;
    rows.push_back(r);
  }
  return rows;
}

ReportOutput assemble_report(const std::vector<EvalReport>& runs,
                             const std::vector<SweepRow>& sweep_rows) {
  // Mean accuracy per (strategy, domain, setting); repeats with different
  // seeds average into one cell.
  struct Cell {
    double sum = 0;
    int n = 0;
    double abundance = 0;
    double mean() const { return sum / n; }
  };
  std::map<std::string, std::map<std::string, std::map<std::string, Cell>>> table;
  for (const auto& r : runs) {
    if (r.setting != kInDomain && r.setting != kCrossDomain)
      throw FormatError("report for " + r.domain + " has unknown setting '" + r.setting + "'");
    Cell& c = table[r.strategy][r.domain][r.setting];
    c.sum += r.accuracy;
    c.n += 1;
    c.abundance = r.abundance;
  }

  std::vector<std::string> orphans;
  for (const auto& [strategy, domains] : table)
    for (const auto& [domain, cells] : domains) {
      if (!cells.count(kInDomain)) orphans.push_back(strategy + "/" + domain + " (missing in-domain)");
      if (!cells.count(kCrossDomain))
        orphans.push_back(strategy + "/" + domain + " (missing cross-domain)");
    }
  if (!orphans.empty()) {
    std::string msg = "report: unpaired runs:";
    for (const auto& o : orphans) msg += " " + o;
    throw PairingError(msg);
  }

  std::ostringstream md;
  std::string corr_csv = "init_strategy,pearson_r\n";
  md << "# Cross-domain evaluation report\n";
  char buf[256];
  for (const auto& [strategy, domains] : table) {
    md << "\n## Initialization: " << strategy << "\n\n";
    md << "| domain | abundance (N/|V|) | in-domain | cross-domain | X - I |\n";
    md << "|---|---|---|---|---|\n";
    std::vector<double> abundance, improvement;
    for (const auto& [domain, cells] : domains) {
      double i_acc = cells.at(kInDomain).mean();
      double x_acc = cells.at(kCrossDomain).mean();
      abundance.push_back(cells.at(kInDomain).abundance);
      improvement.push_back(x_acc - i_acc);
      std::snprintf(buf, sizeof(buf), "| %s | %.2f | %.4f | %.4f | %+.4f |\n", domain.c_str(),
                    cells.at(kInDomain).abundance, i_acc, x_acc, x_acc - i_acc);
      md << buf;
    }
    std::string r_str = "degenerate";
    if (abundance.size() >= 2) {
      try {
        std::snprintf(buf, sizeof(buf), "%.4f", pearson_correlation(abundance, improvement));
        r_str = buf;
      } catch (const DegenerateDataError&) {
        r_str = "degenerate";
      }
    }
    md << "\nPearson r (abundance vs improvement): " << r_str << "\n";
    corr_csv += strategy + "," + r_str + "\n";
  }

  std::string curve;
  if (!sweep_rows.empty()) {
    curve = "rate,setting,mean_accuracy,repeats\n";
    std::map<std::pair<std::string, double>, std::pair<double, int>> agg;
    for (const auto& r : sweep_rows) {
      auto& cell = agg[{r.setting, r.rate}];
      cell.first += r.accuracy;
      cell.second += 1;
    }
    md << "\n## Downsampling sweep\n\n| rate | setting | mean accuracy | repeats |\n|---|---|---|---|\n";
    for (const auto& [key, cell] : agg) {
      std::snprintf(buf, sizeof(buf), "%.4f,%s,%.6f,%d\n", key.second, key.first.c_str(),
                    cell.first / cell.second, cell.second);
      curve += buf;
      std::snprintf(buf, sizeof(buf), "| %.2f | %s | %.4f | %d |\n", key.second,
                    key.first.c_str(), cell.first / cell.second, cell.second);
      md << buf;
    }
  }

  return ReportOutput{md.str(), corr_csv, curve};
}

}  // namespace xdsp::eval
