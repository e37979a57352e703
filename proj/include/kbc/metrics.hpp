#pragma once
// Evaluation harness and the run report. Rates with a zero denominator are
// absent (std::nullopt, JSON null), never 0.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kbc/entity_linker.hpp"
#include "kbc/relation_extractor.hpp"

namespace kbc {

struct ElMetrics {
  std::optional<double> precision_at_1;  // correct sub-graph links / sub-graph links
  std::optional<double> coverage;        // sub-graph links / gold spans
  std::optional<double> accuracy_at_1;   // correct context links / context decisions
  std::optional<double> mean_rank;       // rank of the gold entity under context scores
  long long gold_spans = 0;
  long long subgraph_links = 0, subgraph_correct = 0;
  long long context_decisions = 0, context_correct = 0;
  // Context decisions that had at least two candidates to choose from.
  long long context_ambiguous = 0, context_ambiguous_correct = 0;
};

// decisions[k] are the linker's decisions for gold[k]; a decision is correct
// when a gold span with the same token range carries the same entity.
ElMetrics eval_entity_linker(const std::vector<std::vector<LinkDecision>>& decisions,
                             const std::vector<Sentence>& gold);

struct SpanMetrics {
  std::optional<double> precision, recall, f1;
  long long true_positive = 0, predicted = 0, gold = 0;
};

// Exact token-range matching of predicted against gold spans.
SpanMetrics eval_spans(const std::vector<std::vector<Span>>& predicted, const std::vector<Sentence>& gold);

// Micro P/R/F1 over (bag, relation) pairs with NA excluded; accuracy is the
// exact-set match rate over bags. Throws on empty gold.
ReMetrics eval_relation_extractor(const std::vector<std::vector<RelationId>>& predicted,
                                  const std::vector<std::vector<RelationId>>& gold);

struct TripleMetrics {
  long long extracted = 0, accepted = 0, rejected = 0, added = 0;
  long long accepted_true = 0;
  std::optional<double> precision;  // accepted triples that hold in the reference world
};

struct MetricsReport {
  std::optional<ElMetrics> entity_linking;
  std::optional<ReMetrics> relation_extraction;
  std::optional<SpanMetrics> span_recognition;
  std::optional<TripleMetrics> triples;
  std::vector<int> round_counts;
  int best_round = 0;
  std::map<std::string, long long> counts;

  nlohmann::json to_json() const;
};

}  // namespace kbc
