#include "xdsp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xdsp/errors.hpp"
#include "xdsp/rng.hpp"

namespace xdsp::corpus {

namespace fs = std::filesystem;

std::string join_tokens(const Tokens& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out += ' ';
    out += ts[i];
  }
  return out;
}

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Domain Domain::build(std::string name, std::vector<Example> examples,
                     std::vector<ExtraCanonical> extra_canonicals, bool namespaced) {
  Domain d;
  d.name_ = std::move(name);
  d.namespaced_ = namespaced;
  std::unordered_map<std::string, std::string> z_to_key;

  auto add_entry = [&d, &z_to_key](const std::string& key, Tokens tokens, const std::string& z) {
    auto it = d.key_index_.find(key);
    if (it != d.key_index_.end()) {
      if (d.inventory_[it->second].logical_form != z)
        throw ConsistencyError("canonical '" + key + "' maps to both '" +
                               d.inventory_[it->second].logical_form + "' and '" + z + "'");
      return;
    }
    auto zit = z_to_key.find(z);
    if (zit != z_to_key.end())
      throw ConsistencyError("logical form '" + z + "' reached from both '" + zit->second +
                             "' and '" + key + "'");
    d.key_index_.emplace(key, d.inventory_.size());
    d.inventory_.push_back(CanonicalEntry{key, std::move(tokens), z});
    z_to_key.emplace(z, key);
  };

  // In a merged domain both sides of g live in per-domain namespaces; logical
  // forms of distinct domains are distinct spaces even when spelled alike.
  for (const Example& e : examples) {
    if (e.utterance.empty() || e.canonical.empty() || e.logical_form.empty())
      throw ConsistencyError("domain " + d.name_ + ": example with empty field");
    std::string key = join_tokens(e.canonical);
    std::string z = e.logical_form;
    if (namespaced) {
      key = e.domain + "::" + key;
      z = e.domain + "::" + z;
    }
    add_entry(key, e.canonical, z);
  }
  for (const ExtraCanonical& xc : extra_canonicals) {
    Tokens toks = tokenize(xc.text);
    if (toks.empty() || xc.logical_form.empty())
      throw ConsistencyError("domain " + d.name_ + ": empty extra canonical entry");
    std::string key = join_tokens(toks);
    std::string z = xc.logical_form;
    if (namespaced) {
      const std::string& ns = xc.ns.empty() ? d.name_ : xc.ns;
      key = ns + "::" + key;
      z = ns + "::" + z;
    }
    add_entry(key, std::move(toks), z);
  }
  d.examples_ = std::move(examples);
  return d;
}

std::string Domain::canonical_key(const Example& e) const {
  return namespaced_ ? e.domain + "::" + join_tokens(e.canonical) : join_tokens(e.canonical);
}

const CanonicalEntry& Domain::entry_for(const Example& e) const {
  auto it = key_index_.find(canonical_key(e));
  if (it == key_index_.end())
    throw ConsistencyError("domain " + name_ + ": canonical not in inventory: " +
                           join_tokens(e.canonical));
  return inventory_[it->second];
}

std::set<std::string> Domain::content_vocabulary() const {
  std::set<std::string> vocab;
  for (const Example& e : examples_) {
    vocab.insert(e.utterance.begin(), e.utterance.end());
    vocab.insert(e.canonical.begin(), e.canonical.end());
  }
  for (const CanonicalEntry& c : inventory_) vocab.insert(c.tokens.begin(), c.tokens.end());
  return vocab;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Domain parse_domain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("parse_domain_file: cannot open " + path);
  std::string name = fs::path(path).stem().string();

  std::vector<Example> examples;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    Example e;
    e.utterance = tokenize(fields[0]);
    e.canonical = tokenize(fields[1]);
    e.logical_form = fields[2];
    e.domain = name;
    if (e.utterance.empty() || e.canonical.empty() || e.logical_form.empty())
      throw ParseError(path + ":" + std::to_string(line_no) + ": empty field");
    examples.push_back(std::move(e));
  }
  if (examples.empty()) throw InsufficientDataError("parse_domain_file: " + path + " has no examples");

  std::vector<ExtraCanonical> extra;
  fs::path companion = fs::path(path).parent_path() / (name + ".canonicals");
  if (fs::exists(companion)) {
    std::ifstream cin_(companion);
    long cline = 0;
    while (std::getline(cin_, line)) {
      ++cline;
      if (line.empty()) continue;
      auto fields = split_tabs(line);
      if (fields.size() != 2)
        throw ParseError(companion.string() + ":" + std::to_string(cline) +
                         ": expected 2 tab-separated fields");
      extra.push_back(ExtraCanonical{fields[0], fields[1], ""});
    }
  }
  return Domain::build(name, std::move(examples), std::move(extra));
}

std::string serialize_domain(const Domain& d) {
  std::string out;
  for (const Example& e : d.examples()) {
    out += join_tokens(e.utterance);
    out += '\t';
    out += join_tokens(e.canonical);
    out += '\t';
    out += e.logical_form;
    out += '\n';
  }
  return out;
}

std::vector<Domain> load_domain_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".tsv")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("load_domain_dir: no .tsv files in " + dir);
  std::vector<Domain> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(parse_domain_file(f));
  return out;
}

Vocabulary Vocabulary::build(const std::vector<Domain>& domains) {
  if (domains.empty()) throw ContractError("Vocabulary::build: no domains");
  Vocabulary v;
  auto push = [&v](const std::string& tok) {
    if (v.ids_.emplace(tok, static_cast<int>(v.tokens_.size())).second) v.tokens_.push_back(tok);
  };
  push("<pad>");
  push("<unk>");
  push("<s>");
  push("</s>");
  for (const Domain& d : domains) {
    for (const Example& e : d.examples()) {
      for (const auto& t : e.utterance) push(t);
      for (const auto& t : e.canonical) push(t);
    }
    for (const CanonicalEntry& c : d.inventory())
      for (const auto& t : c.tokens) push(t);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& id_order) {
  Vocabulary v;
  for (const auto& tok : id_order) {
    if (!v.ids_.emplace(tok, static_cast<int>(v.tokens_.size())).second)
      throw ContractError("Vocabulary::from_tokens: duplicate token " + tok);
    v.tokens_.push_back(tok);
  }
  if (v.size() < 4 || v.tokens_[0] != "<pad>" || v.tokens_[1] != "<unk>" ||
      v.tokens_[2] != "<s>" || v.tokens_[3] != "</s>")
    throw ContractError("Vocabulary::from_tokens: reserved tokens missing or misplaced");
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? -1 : it->second;
}

int Vocabulary::id_or_unk(const std::string& token) const {
  int i = id(token);
  return i < 0 ? kUnk : i;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw VocabularyError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& ts) const {
  std::vector<int> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(id_or_unk(t));
  return out;
}

std::pair<Vocabulary, int> Vocabulary::extend(const Vocabulary& base, const Domain& extra) {
  Vocabulary v = base;
  int added = 0;
  auto push = [&v, &added](const std::string& tok) {
    if (v.ids_.emplace(tok, static_cast<int>(v.tokens_.size())).second) {
      v.tokens_.push_back(tok);
      ++added;
    }
  };
  for (const Example& e : extra.examples()) {
    for (const auto& t : e.utterance) push(t);
    for (const auto& t : e.canonical) push(t);
  }
  for (const CanonicalEntry& c : extra.inventory())
    for (const auto& t : c.tokens) push(t);
  return {std::move(v), added};
}

std::pair<std::vector<Example>, std::vector<Example>> holdout_validation(
    const std::vector<Example>& pool, std::uint64_t seed) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix64(seed, 0x76616cULL));  // "val"
  rng.shuffle(idx);
  std::size_t n_val = pool.size() / 5;
  std::vector<Example> val, train;
  for (std::size_t k = 0; k < idx.size(); ++k)
    (k < n_val ? val : train).push_back(pool[idx[k]]);
  return {std::move(train), std::move(val)};
}

Splits split_domain(const Domain& d, std::uint64_t seed) {
  const auto& ex = d.examples();
  if (ex.size() < 5)
    throw InsufficientDataError("split_domain: need at least 5 examples, got " +
                                std::to_string(ex.size()));
  std::vector<std::size_t> idx(ex.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix64(seed, 0x74657374ULL));  // "test"
  rng.shuffle(idx);
  std::size_t n_test = ex.size() / 5;
  Splits s;
  s.seed = seed;
  std::vector<Example> pool;
  for (std::size_t k = 0; k < idx.size(); ++k)
    (k < n_test ? s.test : pool).push_back(ex[idx[k]]);
  auto [train, val] = holdout_validation(pool, seed);
  s.train = std::move(train);
  s.validation = std::move(val);
  return s;
}

Domain merge_source_domains(const std::vector<Domain>& domains) {
  if (domains.empty()) throw ContractError("merge_source_domains: no domains");
  std::set<std::string> names;
  for (const Domain& d : domains)
    if (!names.insert(d.name()).second)
      throw ConsistencyError("merge_source_domains: duplicate domain name " + d.name());

  std::string merged_name;
  std::vector<Example> examples;
  std::vector<ExtraCanonical> extra;
  for (const Domain& d : domains) {
    if (d.namespaced()) throw ContractError("merge_source_domains: domain already merged: " + d.name());
    if (!merged_name.empty()) merged_name += '+';
    merged_name += d.name();
    for (const Example& e : d.examples()) examples.push_back(e);
    // Inventory entries observed only via companion files are carried along,
    // namespaced under their origin domain.
    std::set<std::string> seen;
    for (const Example& e : d.examples()) seen.insert(join_tokens(e.canonical));
    for (const CanonicalEntry& c : d.inventory())
      if (!seen.count(c.key)) extra.push_back(ExtraCanonical{c.key, c.logical_form, d.name()});
  }
  return Domain::build(merged_name, std::move(examples), std::move(extra), /*namespaced=*/true);
}

std::vector<Example> downsample(const std::vector<Example>& examples, double rate,
                                std::uint64_t seed) {
  if (!(rate > 0.0) || rate > 1.0)
    throw RangeError("downsample: rate must be in (0,1], got " + std::to_string(rate));
  std::size_t n = examples.size();
  std::size_t k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  if (k < 1) k = 1;
  if (k > n) k = n;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix64(seed, 0x646f776eULL));  // "down"
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<Example> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(examples[i]);
  return out;
}

std::vector<DomainStats> domain_statistics(const std::vector<Domain>& domains,
                                           const std::set<std::string>& embedding_vocab) {
  if (domains.size() < 2)
    throw ContractError("domain_statistics: need at least 2 domains for overlap columns");
  std::vector<std::set<std::string>> vocabs;
  vocabs.reserve(domains.size());
  for (const Domain& d : domains) vocabs.push_back(d.content_vocabulary());

  std::vector<DomainStats> out;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    std::set<std::string> others;
    for (std::size_t j = 0; j < domains.size(); ++j)
      if (j != i) others.insert(vocabs[j].begin(), vocabs[j].end());

    DomainStats st;
    st.name = domains[i].name();
    st.n_examples = domains[i].examples().size();
    st.n_canonicals = domains[i].inventory().size();
    st.vocab_size = vocabs[i].size();
    std::size_t in_other = 0, in_emb = 0, in_either = 0;
    for (const auto& tok : vocabs[i]) {
      bool o = others.count(tok) > 0;
      bool e = embedding_vocab.count(tok) > 0;
      in_other += o;
      in_emb += e;
      in_either += (o || e);
    }
    double denom = static_cast<double>(st.vocab_size);
    st.pct_other_domains = 100.0 * static_cast<double>(in_other) / denom;
    st.pct_embedding = 100.0 * static_cast<double>(in_emb) / denom;
    st.pct_either = 100.0 * static_cast<double>(in_either) / denom;
    out.push_back(std::move(st));
  }
  return out;
}

std::string domain_stats_csv(const std::vector<DomainStats>& stats) {
  std::string out = "domain,n,canonicals,vocab,pct_other_domains,pct_embedding,pct_either\n";
  char buf[256];
  for (const DomainStats& s : stats) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%.1f,%.1f,%.1f\n", s.name.c_str(),
                  s.n_examples, s.n_canonicals, s.vocab_size, s.pct_other_domains,
                  s.pct_embedding, s.pct_either);
    out += buf;
  }
  return out;
}

}  // namespace xdsp::corpus
