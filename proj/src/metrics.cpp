#include "kbc/metrics.hpp"

#include <algorithm>
#include <map>

namespace kbc {

using json = nlohmann::json;

namespace {

std::optional<double> ratio(long long num, long long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const Span* gold_span_at(const Sentence& gold, const Span& sp) {
  for (const auto& g : gold.spans) {
    if (g.same_range(sp)) return &g;
  }
  return nullptr;
}

}  // namespace

ElMetrics eval_entity_linker(const std::vector<std::vector<LinkDecision>>& decisions,
                             const std::vector<Sentence>& gold) {
  if (decisions.size() != gold.size()) throw Error("eval_entity_linker: one decision list per gold sentence");
  ElMetrics m;
  double rank_sum = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    for (const auto& g : gold[k].spans) m.gold_spans += g.entity.has_value();
    for (const auto& d : decisions[k]) {
      const Span* g = gold_span_at(gold[k], d.span);
      const bool correct = g && g->entity && *g->entity == d.entity;
      if (d.method == LinkMethod::kSubgraph) {
        ++m.subgraph_links;
        m.subgraph_correct += correct;
        continue;
      }
      ++m.context_decisions;
      m.context_correct += correct;
      if (d.ranking.size() >= 2) {
        ++m.context_ambiguous;
        m.context_ambiguous_correct += correct;
      }
      // Rank of the gold entity; one past the end when it was never a candidate.
      std::size_t rank = d.ranking.size() + 1;
      if (g && g->entity) {
        for (std::size_t r = 0; r < d.ranking.size(); ++r) {
          if (d.ranking[r].first == *g->entity) {
            rank = r + 1;
            break;
          }
        }
      }
      rank_sum += static_cast<double>(rank);
    }
  }
  m.precision_at_1 = ratio(m.subgraph_correct, m.subgraph_links);
  m.coverage = ratio(m.subgraph_links, m.gold_spans);
  m.accuracy_at_1 = ratio(m.context_correct, m.context_decisions);
  if (m.context_decisions > 0) m.mean_rank = rank_sum / static_cast<double>(m.context_decisions);
  return m;
}

SpanMetrics eval_spans(const std::vector<std::vector<Span>>& predicted, const std::vector<Sentence>& gold) {
  if (predicted.size() != gold.size()) throw Error("eval_spans: one span list per gold sentence");
  SpanMetrics m;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    m.gold += static_cast<long long>(gold[k].spans.size());
    m.predicted += static_cast<long long>(predicted[k].size());
    for (const auto& p : predicted[k]) m.true_positive += gold_span_at(gold[k], p) != nullptr;
  }
  m.precision = ratio(m.true_positive, m.predicted);
  m.recall = ratio(m.true_positive, m.gold);
  if (m.precision && m.recall && *m.precision + *m.recall > 0) {
    m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
  } else if (m.precision && m.recall) {
    m.f1 = 0.0;
  }
  return m;
}

ReMetrics eval_relation_extractor(const std::vector<std::vector<RelationId>>& predicted,
                                  const std::vector<std::vector<RelationId>>& gold) {
  if (gold.empty()) throw Error("eval_relation_extractor: empty gold");
  return micro_metrics(predicted, gold);
}

json MetricsReport::to_json() const {
  json j;
  if (entity_linking) {
    const auto& e = *entity_linking;
    j["entity_linking"] = {{"precision_at_1", opt(e.precision_at_1)},
                           {"coverage", opt(e.coverage)},
                           {"accuracy_at_1", opt(e.accuracy_at_1)},
                           {"mean_rank", opt(e.mean_rank)},
                           {"gold_spans", e.gold_spans},
                           {"subgraph_links", e.subgraph_links},
                           {"subgraph_correct", e.subgraph_correct},
                           {"context_decisions", e.context_decisions},
                           {"context_correct", e.context_correct},
                           {"context_ambiguous", e.context_ambiguous},
                           {"context_ambiguous_correct", e.context_ambiguous_correct}};
  } else {
    j["entity_linking"] = nullptr;
  }
  if (relation_extraction) {
    const auto& r = *relation_extraction;
    j["relation_extraction"] = {{"accuracy", r.bags ? json(r.exact_accuracy) : json(nullptr)},
                                {"precision", r.predicted ? json(r.precision) : json(nullptr)},
                                {"recall", r.gold ? json(r.recall) : json(nullptr)},
                                {"f1", r.predicted && r.gold ? json(r.f1) : json(nullptr)},
                                {"true_positive", r.true_positive},
                                {"predicted", r.predicted},
                                {"gold", r.gold},
                                {"bags", r.bags}};
  } else {
    j["relation_extraction"] = nullptr;
  }
  if (span_recognition) {
    const auto& s = *span_recognition;
    j["span_recognition"] = {{"precision", opt(s.precision)}, {"recall", opt(s.recall)}, {"f1", opt(s.f1)},
                             {"true_positive", s.true_positive}, {"predicted", s.predicted}, {"gold", s.gold}};
  } else {
    j["span_recognition"] = nullptr;
  }
  if (triples) {
    const auto& t = *triples;
    j["triples"] = {{"extracted", t.extracted}, {"accepted", t.accepted},         {"rejected", t.rejected},
                    {"added", t.added},         {"accepted_true", t.accepted_true}, {"precision", opt(t.precision)}};
  } else {
    j["triples"] = nullptr;
  }
  j["bootstrap"] = {{"round_counts", round_counts}, {"best_round", best_round}};
  j["counts"] = counts;
  return j;
}

}  // namespace kbc
