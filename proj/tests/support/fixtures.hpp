#pragma once
// Small builders shared by the unit and acceptance suites.

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kbc/corpus.hpp"
#include "kbc/kb_store.hpp"

namespace kbc::testing {

inline KnowledgeBase kb_from_text(const std::string& entities, const std::string& triples,
                                  KbOptions options = {}) {
  std::istringstream e(entities), t(triples);
  return KnowledgeBase::load_streams(e, t, options);
}

// n entities "E0".."E{n-1}" with types drawn from `types`, and `triples`
// random non-reflexive triples over `relations` relation names.
inline KnowledgeBase random_kb(std::mt19937_64& rng, int n, int triples, int relations = 3, int types = 3) {
  KnowledgeBase kb;
  std::uniform_int_distribution<int> type_dist(0, types - 1);
  for (int i = 0; i < n; ++i) {
    Entity e;
    e.id = "E" + std::to_string(i);
    e.canonical_name = "name" + std::to_string(i);
    e.type = "T" + std::to_string(type_dist(rng));
    kb.add_entity(e);
  }
  std::uniform_int_distribution<int> ent(0, n - 1), rel(0, relations - 1);
  std::vector<Triple> ts;
  for (int k = 0; k < triples; ++k) {
    int s = ent(rng), o = ent(rng);
    if (s == o) continue;
    ts.push_back({"E" + std::to_string(s), "r" + std::to_string(rel(rng)), "E" + std::to_string(o)});
  }
  kb.add_triples(ts);
  return kb;
}

inline Sentence make_sentence(const std::vector<std::string>& words, const std::vector<int>& heads,
                              std::string id = "s") {
  Sentence s;
  s.id = std::move(id);
  for (int i = 0; i < static_cast<int>(words.size()); ++i) {
    s.tokens.push_back({i, words[i], "UNK", heads.empty() ? i - 1 : heads[i]});
  }
  return s;
}

inline Span make_span(const Sentence& s, int start, int end) {
  Span sp;
  sp.start = start;
  sp.end = end;
  sp.surface = s.surface(start, end);
  return sp;
}

// Random dependency tree: token i > 0 attaches to a uniformly chosen earlier
// token, then tokens are relabelled by a random permutation.
inline Sentence random_tree_sentence(std::mt19937_64& rng, int n) {
  std::vector<int> parent(n, -1);
  for (int i = 1; i < n; ++i) parent[i] = std::uniform_int_distribution<int>(0, i - 1)(rng);
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> heads(n);
  for (int i = 0; i < n; ++i) heads[perm[i]] = parent[i] < 0 ? -1 : perm[parent[i]];
  std::vector<std::string> words;
  for (int i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  return make_sentence(words, heads);
}

}  // namespace kbc::testing
