#include <queue>
#include <random>
#include <sstream>

#include "doctest.h"
#include "kbc/corpus.hpp"
#include "support/fixtures.hpp"

using namespace kbc;
using kbc::testing::make_sentence;
using kbc::testing::make_span;

namespace {

std::vector<Sentence> parse(const std::string& text) {
  std::istringstream in(text);
  return read_corpus(in);
}

// Exhaustive oracle: enumerate all matching n-grams, then walk left to right
// taking the longest match starting at each free position.
std::vector<std::pair<int, int>> brute_force_matches(const Sentence& s, const Gazetteer& g) {
  const int n = s.size();
  std::vector<std::vector<int>> lengths(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (g.contains(s.surface(i, j))) lengths[i].push_back(j - i + 1);
    }
  }
  std::vector<std::pair<int, int>> out;
  int i = 0;
  while (i < n) {
    if (lengths[i].empty()) {
      ++i;
      continue;
    }
    int best = *std::max_element(lengths[i].begin(), lengths[i].end());
    out.emplace_back(i, i + best - 1);
    i += best;
  }
  return out;
}

std::vector<int> bfs_path(const Sentence& s, int from, int to) {
  const int n = s.size();
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    if (s.tokens[i].head >= 0) {
      adj[i].push_back(s.tokens[i].head);
      adj[s.tokens[i].head].push_back(i);
    }
  }
  std::vector<int> prev(n, -2);
  std::queue<int> q;
  q.push(from);
  prev[from] = -1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (prev[v] == -2) {
        prev[v] = u;
        q.push(v);
      }
    }
  }
  std::vector<int> path;
  for (int v = to; v != -1; v = prev[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

TEST_CASE("ingest_corpus parses a well-formed sentence") {
  auto c = parse(R"({"id": "s1", "tokens": ["a", "b", "c"], "heads": [-1, 0, 0]})");
  REQUIRE(c.size() == 1);
  CHECK(c[0].size() == 3);
  CHECK(c[0].tokens[2].head == 0);
  CHECK(c[0].tokens[1].pos == "UNK");
}

TEST_CASE("ingest_corpus rejects malformed trees") {
  SUBCASE("two-cycle without root") {
    try {
      parse(R"({"id": "bad7", "tokens": ["a", "b", "c"], "heads": [1, 0, 1]})");
      FAIL("expected an error");
    } catch (const CorpusError& e) {
      CHECK(std::string(e.what()).find("bad7") != std::string::npos);
    }
  }
  SUBCASE("head out of range") {
    CHECK_THROWS_AS(parse(R"({"id": "x", "tokens": ["a", "b"], "heads": [-1, 5]})"), CorpusError);
  }
  SUBCASE("two roots") {
    CHECK_THROWS_AS(parse(R"({"id": "x", "tokens": ["a", "b"], "heads": [-1, -1]})"), CorpusError);
  }
  SUBCASE("overlapping spans") {
    CHECK_THROWS_AS(parse(R"({"id": "x", "tokens": ["a", "b", "c"],
        "spans": [{"start": 0, "end": 1}, {"start": 1, "end": 2}]})"),
                    CorpusError);
  }
  SUBCASE("malformed json names the line") {
    try {
      parse("{\"id\": \"ok\", \"tokens\": [\"a\"]}\n{not json\n");
      FAIL("expected an error");
    } catch (const CorpusError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
}

TEST_CASE("corpus JSONL round-trips") {
  std::string text =
      R"({"id":"s1","tokens":["Robert","Downey","starred","in","Endgame"],"pos":["NNP","NNP","VB","IN","NNP"],)"
      R"("heads":[1,2,-1,2,3],"spans":[{"start":0,"end":1,"type":"Agent","entity":"B","method":"subgraph"},)"
      R"({"start":4,"end":4,"type":null,"entity":null}]})";
  auto first = parse(text);
  std::ostringstream out;
  write_corpus(out, first);
  auto second = parse(out.str());
  std::ostringstream again;
  write_corpus(again, second);
  CHECK(out.str() == again.str());
  REQUIRE(second[0].spans.size() == 2);
  CHECK(second[0].spans[0].entity == std::optional<EntityId>("B"));
  CHECK(second[0].spans[0].method == LinkMethod::kSubgraph);
  CHECK(second[0].spans[0].surface == "Robert Downey");
  CHECK_FALSE(second[0].spans[1].type.has_value());
}

TEST_CASE("fallback_parse builds a left-headed chain") {
  auto s = fallback_parse("a b c");
  CHECK(s.size() == 3);
  CHECK(s.tokens[0].head == -1);
  CHECK(s.tokens[1].head == 0);
  CHECK(s.tokens[2].head == 1);
  auto one = fallback_parse("hello");
  CHECK(one.size() == 1);
  CHECK(one.tokens[0].head == -1);
  CHECK_THROWS_AS(fallback_parse("   \t "), CorpusError);

  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    std::string raw;
    int words = std::uniform_int_distribution<int>(1, 12)(rng);
    for (int w = 0; w < words; ++w) raw += std::string(std::uniform_int_distribution<int>(0, 3)(rng), ' ') + "w";
    CHECK_NOTHROW(validate_sentence(fallback_parse(raw)));
  }
}

TEST_CASE("longest_ngram_match prefers the longest alias") {
  auto s = make_sentence({"Avengers", "Endgame", "premiered"}, {});
  Gazetteer both;
  both.add("Avengers Endgame", "A1");
  both.add("Avengers", "A2");
  auto spans = longest_ngram_match(s, both);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 1);

  Gazetteer shorter;
  shorter.add("Avengers", "A2");
  spans = longest_ngram_match(s, shorter);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].end == 0);

  CHECK(longest_ngram_match(make_sentence({"nothing", "here"}, {}), both).empty());
}

TEST_CASE("case folding is opt-in") {
  auto s = make_sentence({"avengers"}, {});
  Gazetteer exact;
  exact.add("Avengers", "A");
  CHECK(longest_ngram_match(s, exact).empty());
  Gazetteer folded(KnowledgeBase{}, true);
  folded.add("Avengers", "A");
  CHECK(longest_ngram_match(s, folded).size() == 1);
}

TEST_CASE("longest_ngram_match equals exhaustive enumeration") {
  std::mt19937_64 rng(42);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  std::uniform_int_distribution<int> word(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    Gazetteer g;
    int aliases = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int k = 0; k < aliases; ++k) {
      int len = std::uniform_int_distribution<int>(1, 3)(rng);
      std::string alias;
      for (int w = 0; w < len; ++w) alias += (w ? " " : "") + vocab[word(rng)];
      g.add(alias, "E" + std::to_string(k));
    }
    int n = std::uniform_int_distribution<int>(1, 12)(rng);
    std::vector<std::string> words;
    for (int i = 0; i < n; ++i) words.push_back(vocab[word(rng)]);
    auto s = make_sentence(words, {});
    auto spans = longest_ngram_match(s, g);
    std::vector<std::pair<int, int>> got;
    for (const auto& sp : spans) got.emplace_back(sp.start, sp.end);
    REQUIRE(got == brute_force_matches(s, g));
    for (std::size_t a = 0; a + 1 < spans.size(); ++a) REQUIRE(spans[a].end < spans[a + 1].start);
  }
}

TEST_CASE("shortest_dependency_path") {
  SUBCASE("chain") {
    // 0 <- 1 <- 2 : token 2 is root, 1 attaches to 2, 0 attaches to 1
    auto s = make_sentence({"x", "y", "z"}, {1, 2, -1});
    CHECK(shortest_dependency_path(s, make_span(s, 0, 0), make_span(s, 2, 2)) == std::vector<int>{0, 1, 2});
  }
  SUBCASE("direct head link") {
    auto s = make_sentence({"x", "y"}, {-1, 0});
    CHECK(shortest_dependency_path(s, make_span(s, 0, 0), make_span(s, 1, 1)) == std::vector<int>{0, 1});
  }
  SUBCASE("overlap is an error") {
    auto s = make_sentence({"x", "y", "z"}, {});
    CHECK_THROWS_AS(shortest_dependency_path(s, make_span(s, 0, 1), make_span(s, 1, 2)), Error);
  }
  SUBCASE("anchor choice") {
    auto s = make_sentence({"a", "b", "c", "d"}, {-1, 0, 1, 2});
    auto a = make_span(s, 0, 1), b = make_span(s, 3, 3);
    CHECK(shortest_dependency_path(s, a, b, SdpAnchor::kLast) == std::vector<int>{1, 2, 3});
    CHECK(shortest_dependency_path(s, a, b, SdpAnchor::kFirst) == std::vector<int>{0, 1, 2, 3});
  }
}

TEST_CASE("SDP equals BFS on random trees and reverses with its arguments") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    int n = std::uniform_int_distribution<int>(2, 15)(rng);
    auto s = kbc::testing::random_tree_sentence(rng, n);
    REQUIRE_NOTHROW(validate_sentence(s));
    int a = std::uniform_int_distribution<int>(0, n - 1)(rng);
    int b = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (a == b) continue;
    auto sa = make_span(s, a, a), sb = make_span(s, b, b);
    auto path = shortest_dependency_path(s, sa, sb);
    REQUIRE(path == bfs_path(s, a, b));
    auto back = shortest_dependency_path(s, sb, sa);
    std::reverse(back.begin(), back.end());
    REQUIRE(back == path);
  }
}

TEST_CASE("sdp_adjacency normalization") {
  SUBCASE("single token") {
    auto s = make_sentence({"x"}, {});
    auto a = sdp_adjacency(s, {0});
    REQUIRE(a.rows() == 1);
    CHECK(a(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("two connected tokens") {
    // A + I = [[1,1],[1,1]], D = diag(2,2), so every entry is 1/2.
    auto s = make_sentence({"x", "y"}, {-1, 0});
    auto a = sdp_adjacency(s, {0, 1});
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(a(i, j) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("symmetric, non-negative, off-path rows are identity rows") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      int n = std::uniform_int_distribution<int>(2, 12)(rng);
      auto s = kbc::testing::random_tree_sentence(rng, n);
      int a = 0, b = n - 1;
      auto path = shortest_dependency_path(s, make_span(s, a, a), make_span(s, b, b));
      auto adj = sdp_adjacency(s, path);
      REQUIRE((adj - adj.transpose()).cwiseAbs().maxCoeff() < 1e-15);
      REQUIRE(adj.minCoeff() >= 0.0);
      REQUIRE(adj.allFinite());
      std::vector<char> on(n, 0);
      for (int v : path) on[v] = 1;
      for (int i = 0; i < n; ++i) {
        REQUIRE(adj.row(i).sum() > 0.0);
        if (!on[i]) {
          for (int j = 0; j < n; ++j) REQUIRE(adj(i, j) == (i == j ? 1.0 : 0.0));
        }
      }
    }
  }
}

TEST_CASE("sdp_nodes adds span-internal tokens when configured") {
  auto s = make_sentence({"a", "b", "c", "d"}, {-1, 0, 1, 2});
  auto a = make_span(s, 0, 1), b = make_span(s, 3, 3);
  SdpOptions first{SdpAnchor::kFirst, false};
  SdpOptions last{SdpAnchor::kLast, false};
  SdpOptions last_internal{SdpAnchor::kLast, true};
  CHECK(sdp_nodes(s, a, b, first) == std::vector<int>{0, 1, 2, 3});
  CHECK(sdp_nodes(s, a, b, last) == std::vector<int>{1, 2, 3});
  CHECK(sdp_nodes(s, a, b, last_internal) == std::vector<int>{0, 1, 2, 3});
}
