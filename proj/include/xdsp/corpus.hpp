#ifndef XDSP_CORPUS_HPP
#define XDSP_CORPUS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace xdsp::corpus {

using Tokens = std::vector<std::string>;

std::string join_tokens(const Tokens& ts);
Tokens tokenize(const std::string& text);  // lowercase, split on single spaces

// One (input utterance, canonical utterance, logical form) triple.
struct Example {
  Tokens utterance;
  Tokens canonical;
  std::string logical_form;
  std::string domain;
};

struct CanonicalEntry {
  std::string key;  // canonical text, namespaced "<domain>::<text>" after a merge
  Tokens tokens;
  std::string logical_form;
};

// Inventory entry not observed in the examples (from a companion file or
// carried through a merge). ns overrides the namespace when non-empty.
struct ExtraCanonical {
  std::string text;
  std::string logical_form;
  std::string ns;
};

// A domain: examples plus the canonical inventory and the one-to-one map
// from canonical utterance to logical form.
class Domain {
 public:
  static Domain build(std::string name, std::vector<Example> examples,
                      std::vector<ExtraCanonical> extra_canonicals = {},
                      bool namespaced = false);

  const std::string& name() const { return name_; }
  const std::vector<Example>& examples() const { return examples_; }
  const std::vector<CanonicalEntry>& inventory() const { return inventory_; }
  bool namespaced() const { return namespaced_; }

  std::string canonical_key(const Example& e) const;
  const CanonicalEntry& entry_for(const Example& e) const;
  std::set<std::string> content_vocabulary() const;  // tokens of u and c

 private:
  std::string name_;
  std::vector<Example> examples_;
  std::vector<CanonicalEntry> inventory_;
  std::unordered_map<std::string, std::size_t> key_index_;
  bool namespaced_ = false;
};

// One example per line: "utterance<TAB>canonical<TAB>logical_form". A
// companion "<stem>.canonicals" file may extend the inventory.
Domain parse_domain_file(const std::string& path);
std::string serialize_domain(const Domain& d);

// All domain files ("*.tsv") in a directory, sorted by name.
std::vector<Domain> load_domain_dir(const std::string& dir);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  static Vocabulary build(const std::vector<Domain>& domains);
  static Vocabulary from_tokens(const std::vector<std::string>& id_order);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;                  // -1 when absent
  int id_or_unk(const std::string& token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  std::vector<int> encode(const Tokens& ts) const;  // unknown -> <unk>

  // Source vocabulary order preserved, new tokens appended in first-occurrence
  // order. Returns the extended vocabulary and the count of new tokens.
  static std::pair<Vocabulary, int> extend(const Vocabulary& base, const Domain& extra);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Splits {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
  std::uint64_t seed = 0;
};

// 80/20 test split, then 20% of the remainder held out for validation;
// floor arithmetic at each stage.
Splits split_domain(const Domain& d, std::uint64_t seed);
std::pair<std::vector<Example>, std::vector<Example>> holdout_validation(
    const std::vector<Example>& pool, std::uint64_t seed);

Domain merge_source_domains(const std::vector<Domain>& domains);

std::vector<Example> downsample(const std::vector<Example>& examples, double rate,
                                std::uint64_t seed);

struct DomainStats {
  std::string name;
  std::size_t n_examples = 0;
  std::size_t n_canonicals = 0;
  std::size_t vocab_size = 0;         // content tokens only
  double pct_other_domains = 0;       // % of vocabulary found in any other domain
  double pct_embedding = 0;           // % found in the embedding vocabulary
  double pct_either = 0;
};

std::vector<DomainStats> domain_statistics(const std::vector<Domain>& domains,
                                           const std::set<std::string>& embedding_vocab);
std::string domain_stats_csv(const std::vector<DomainStats>& stats);

}  // namespace xdsp::corpus

#endif
