#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "xdsp/corpus.hpp"
#include "xdsp/errors.hpp"

using namespace xdsp;
using namespace xdsp::corpus;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p;
}

Example ex(const std::string& u, const std::string& c, const std::string& z,
           const std::string& dom = "d") {
  return Example{tokenize(u), tokenize(c), z, dom};
}

Domain toy_domain(const std::string& name, int n) {
  std::vector<Example> es;
  for (int i = 0; i < n; ++i) {
    std::string s = std::to_string(i);
    es.push_back(ex("ask item " + s, "item number " + s, "item(" + s + ")", name));
  }
  return Domain::build(name, std::move(es));
}

}  // namespace

TEST_CASE("parse_domain_file") {
  SUBCASE("two distinct triples") {
    auto p = write_temp("dom_ok.tsv", "what is a\tthe a thing\tA\nwhat is b\tthe b thing\tB\n");
    Domain d = parse_domain_file(p.string());
    CHECK(d.examples().size() == 2);
    CHECK(d.inventory().size() == 2);
    CHECK(d.name() == "dom_ok");
  }
  SUBCASE("same canonical different logical form is a consistency error") {
    auto p = write_temp("dom_bad.tsv", "u one\tsame c\tZ1\nu two\tsame c\tZ2\n");
    CHECK_THROWS_WITH_AS(parse_domain_file(p.string()), doctest::Contains("same c"),
                         ConsistencyError);
  }
  SUBCASE("same logical form different canonical is also rejected") {
    auto p = write_temp("dom_bad2.tsv", "u one\tc one\tZ\nu two\tc two\tZ\n");
    CHECK_THROWS_AS(parse_domain_file(p.string()), ConsistencyError);
  }
  SUBCASE("wrong field count names the line") {
    auto p = write_temp("dom_fields.tsv", "u\tc\tz\nu only\n");
    CHECK_THROWS_WITH_AS(parse_domain_file(p.string()), doctest::Contains(":2"), ParseError);
  }
  SUBCASE("empty file") {
    auto p = write_temp("dom_empty.tsv", "");
    CHECK_THROWS_AS(parse_domain_file(p.string()), InsufficientDataError);
  }
  SUBCASE("tokenization lowercases") {
    auto p = write_temp("dom_case.tsv", "What IS a\tThe A Thing\tA\n");
    Domain d = parse_domain_file(p.string());
    CHECK(d.examples()[0].utterance == Tokens{"what", "is", "a"});
  }
  SUBCASE("companion canonicals extend the inventory") {
    write_temp("dom_comp.canonicals", "extra canonical\tEXTRA\n");
    auto p = write_temp("dom_comp.tsv", "u here\tc here\tC\n");
    Domain d = parse_domain_file(p.string());
    CHECK(d.inventory().size() == 2);
    CHECK(d.inventory()[1].logical_form == "EXTRA");
  }
  SUBCASE("round trip up to whitespace normalization") {
    std::string body = "what is a\tthe a thing\tA\nwhat is b\tthe b thing\tB\n";
    auto p = write_temp("dom_rt.tsv", body);
    CHECK(serialize_domain(parse_domain_file(p.string())) == body);
  }
}

TEST_CASE("vocabulary building") {
  Domain d1 = Domain::build("d1", {ex("a b", "a", "Z1", "d1")});
  Domain d2 = Domain::build("d2", {ex("b c", "c", "Z2", "d2")});
  SUBCASE("counts and reserved tokens") {
    auto v = Vocabulary::build({d1});
    CHECK(v.size() == 6);  // 4 reserved + a, b
    CHECK(v.id("<pad>") == 0);
    CHECK(v.id("<unk>") == 1);
    CHECK(v.id("<s>") == 2);
    CHECK(v.id("</s>") == 3);
    auto v2 = Vocabulary::build({d1, d2});
    CHECK(v2.size() == 7);
  }
  SUBCASE("deterministic assignment") {
    auto a = Vocabulary::build({d1, d2});
    auto b = Vocabulary::build({d1, d2});
    CHECK(a.tokens() == b.tokens());
  }
  SUBCASE("encode maps unknowns to <unk>") {
    auto v = Vocabulary::build({d1});
    auto ids = v.encode({"a", "zzz"});
    CHECK(ids[0] == v.id("a"));
    CHECK(ids[1] == Vocabulary::kUnk);
  }
  SUBCASE("extension preserves base ids") {
    auto v = Vocabulary::build({d1});
    auto [vx, added] = Vocabulary::extend(v, d2);
    CHECK(added == 1);  // only "c" is new
    CHECK(vx.id("a") == v.id("a"));
    CHECK(vx.id("c") == v.size());
  }
}

TEST_CASE("split_domain arithmetic and determinism") {
  SUBCASE("N=100 gives 64/16/20") {
    Domain d = toy_domain("s100", 100);
    Splits s = split_domain(d, 7);
    CHECK(s.test.size() == 20);
    CHECK(s.validation.size() == 16);
    CHECK(s.train.size() == 64);
  }
  SUBCASE("N=10 gives 7/1/2") {
    Domain d = toy_domain("s10", 10);
    Splits s = split_domain(d, 7);
    CHECK(s.test.size() == 2);
    CHECK(s.validation.size() == 1);
    CHECK(s.train.size() == 7);
  }
  SUBCASE("same seed same membership, partition holds") {
    Domain d = toy_domain("s37", 37);
    Splits a = split_domain(d, 3);
    Splits b = split_domain(d, 3);
    auto key = [](const Example& e) { return join_tokens(e.utterance); };
    std::multiset<std::string> ka, kb, all;
    for (const auto& e : a.train) ka.insert(key(e));
    for (const auto& e : a.validation) ka.insert(key(e));
    for (const auto& e : a.test) ka.insert(key(e));
    for (const auto& e : b.train) kb.insert(key(e));
    for (const auto& e : b.validation) kb.insert(key(e));
    for (const auto& e : b.test) kb.insert(key(e));
    for (const auto& e : d.examples()) all.insert(key(e));
    CHECK(ka == all);
    CHECK(ka == kb);
    std::set<std::string> train_a, test_a;
    for (const auto& e : a.train) train_a.insert(key(e));
    for (const auto& e : a.test) test_a.insert(key(e));
    for (const auto& e : a.validation) CHECK(!train_a.count(key(e)));
    for (const auto& e : a.test) CHECK(!train_a.count(key(e)));
  }
  SUBCASE("too few examples") {
    Domain d = toy_domain("s4", 4);
    CHECK_THROWS_AS(split_domain(d, 1), InsufficientDataError);
  }
}

TEST_CASE("merge_source_domains") {
  Domain a = Domain::build("A", {ex("u one", "c one", "Z1", "A"), ex("u two", "c two", "Z2", "A"),
                                 ex("u three", "c three", "Z3", "A")});
  Domain b = Domain::build("B", {ex("v one", "d one", "Y1", "B"), ex("v two", "d two", "Y2", "B")});
  SUBCASE("concatenation preserves counts and domain ids") {
    Domain m = merge_source_domains({a, b});
    CHECK(m.examples().size() == 5);
    CHECK(m.examples()[0].domain == "A");
    CHECK(m.examples()[4].domain == "B");
    CHECK(m.inventory().size() == 5);
  }
  SUBCASE("identical canonical strings kept under distinct namespaces") {
    Domain c = Domain::build("C", {ex("w one", "c one", "W1", "C")});
    Domain m = merge_source_domains({a, c});
    int hits = 0;
    for (const auto& entry : m.inventory())
      if (join_tokens(entry.tokens) == "c one") ++hits;
    CHECK(hits == 2);
  }
  SUBCASE("identical logical form strings in different domains are distinct") {
    Domain c = Domain::build("C", {ex("w one", "totally new", "Z1", "C")});
    CHECK_NOTHROW(merge_source_domains({a, c}));
  }
  SUBCASE("single domain merge keeps examples") {
    Domain m = merge_source_domains({a});
    CHECK(m.examples().size() == 3);
  }
  SUBCASE("duplicate names rejected") {
    CHECK_THROWS_AS(merge_source_domains({a, a}), ConsistencyError);
  }
}

TEST_CASE("downsample") {
  Domain d = toy_domain("ds", 10);
  SUBCASE("rate 1.0 is identity") {
    auto out = downsample(d.examples(), 1.0, 5);
    CHECK(out.size() == 10);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(join_tokens(out[i].utterance) == join_tokens(d.examples()[i].utterance));
  }
  SUBCASE("rate 0.5 keeps exactly half") {
    CHECK(downsample(d.examples(), 0.5, 5).size() == 5);
  }
  SUBCASE("deterministic") {
    auto a = downsample(d.examples(), 0.3, 5);
    auto b = downsample(d.examples(), 0.3, 5);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(join_tokens(a[i].utterance) == join_tokens(b[i].utterance));
  }
  SUBCASE("tiny rate keeps at least one") {
    CHECK(downsample(d.examples(), 0.01, 5).size() == 1);
  }
  SUBCASE("rate out of range") {
    CHECK_THROWS_AS(downsample(d.examples(), 0.0, 5), RangeError);
    CHECK_THROWS_AS(downsample(d.examples(), 1.5, 5), RangeError);
  }
}

TEST_CASE("domain_statistics") {
  Domain d1 = Domain::build("d1", {ex("a b", "a b", "Z1", "d1")});
  Domain d2 = Domain::build("d2", {ex("b c", "b c", "Z2", "d2")});
  SUBCASE("two-domain overlap 50%") {
    auto st = domain_statistics({d1, d2}, {});
    CHECK(st[0].pct_other_domains == doctest::Approx(50.0));
    CHECK(st[1].pct_other_domains == doctest::Approx(50.0));
  }
  SUBCASE("full embedding coverage is 100%") {
    auto st = domain_statistics({d1, d2}, {"a", "b", "c"});
    CHECK(st[0].pct_embedding == doctest::Approx(100.0));
    CHECK(st[1].pct_embedding == doctest::Approx(100.0));
  }
  SUBCASE("three-domain fixture matches brute-force set arithmetic") {
    Domain x = Domain::build("x", {ex("red green blue", "red green", "Zx", "x")});
    Domain y = Domain::build("y", {ex("green yellow", "yellow pink", "Zy", "y")});
    Domain z = Domain::build("z", {ex("blue pink", "blue black", "Zz", "z")});
    std::set<std::string> emb = {"red", "yellow", "black", "unused"};
    auto st = domain_statistics({x, y, z}, emb);

    std::vector<std::set<std::string>> vocabs = {x.content_vocabulary(), y.content_vocabulary(),
                                                 z.content_vocabulary()};
    for (std::size_t i = 0; i < 3; ++i) {
      std::set<std::string> others;
      for (std::size_t j = 0; j < 3; ++j)
        if (j != i) others.insert(vocabs[j].begin(), vocabs[j].end());
      std::size_t in_other = 0, in_emb = 0, in_either = 0;
      for (const auto& t : vocabs[i]) {
        bool o = others.count(t) > 0, e = emb.count(t) > 0;
        in_other += o;
        in_emb += e;
        in_either += (o || e);
      }
      double n = static_cast<double>(vocabs[i].size());
      CHECK(st[i].pct_other_domains == doctest::Approx(100.0 * in_other / n).epsilon(1e-12));
      CHECK(st[i].pct_embedding == doctest::Approx(100.0 * in_emb / n).epsilon(1e-12));
      CHECK(st[i].pct_either == doctest::Approx(100.0 * in_either / n).epsilon(1e-12));
    }
    // Hand counts: x vocab {red,green,blue}; y∪z = {green,yellow,pink,blue,black}.
    CHECK(st[0].pct_other_domains == doctest::Approx(100.0 * 2 / 3).epsilon(1e-12));
    CHECK(st[0].pct_embedding == doctest::Approx(100.0 * 1 / 3).epsilon(1e-12));
    CHECK(st[0].pct_either == doctest::Approx(100.0).epsilon(1e-12));
  }
  SUBCASE("one domain is rejected") {
    CHECK_THROWS_AS(domain_statistics({d1}, {}), ContractError);
  }
}
