#pragma once
// Deliberately naive re-implementations used as test oracles. They read the
// raw triple list, never the KB indexes.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kbc/kb_store.hpp"

namespace kbc::testing {

inline std::set<std::pair<std::string, std::string>> undirected_pairs(const std::vector<Triple>& triples) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& t : triples) {
    out.insert({t.subject, t.object});
    out.insert({t.object, t.subject});
  }
  return out;
}

// Counts for every candidate: how many candidates of every OTHER span it is
// connected to. A span is decided when its maximum is positive and unique.
struct SubgraphOracle {
  std::vector<std::vector<int>> counts;
  std::vector<std::optional<std::string>> decisions;
};

inline SubgraphOracle brute_force_subgraph(const std::vector<std::vector<std::string>>& spans,
                                           const std::vector<Triple>& triples) {
  auto pairs = undirected_pairs(triples);
  SubgraphOracle out;
  for (std::size_t a = 0; a < spans.size(); ++a) {
    std::vector<int> c;
    for (const auto& e : spans[a]) {
      int n = 0;
      for (std::size_t b = 0; b < spans.size(); ++b) {
        if (b == a) continue;
        for (const auto& f : spans[b]) n += pairs.count({e, f}) ? 1 : 0;
      }
      c.push_back(n);
    }
    std::optional<std::string> decision;
    int best = 0, ties = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] > best) {
        best = c[i];
        ties = 1;
        decision = spans[a][i];
      } else if (c[i] == best && best > 0) {
        ++ties;
      }
    }
    if (ties != 1) decision.reset();
    out.counts.push_back(c);
    out.decisions.push_back(decision);
  }
  return out;
}

}  // namespace kbc::testing
