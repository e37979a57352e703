#pragma once
// Self-training loop that grows entity-linked text, and distant supervision
// that turns linked text into multi-label bags.

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "kbc/corpus.hpp"
#include "kbc/embeddings.hpp"
#include "kbc/entity_linker.hpp"
#include "kbc/kb_store.hpp"

namespace kbc {

struct GenerationRound {
  int round_index = 0;  // 1-based
  int extracted_count = 0;
  // Student trained on this round's corpus; null for a round that was
  // discarded because its count fell.
  std::shared_ptr<const TrainableSpanClassifier> recognizer;
};

struct BootstrapConfig {
  int max_rounds = 3;
  int k = 0;  // k-NN candidates on top of the dictionary
  SubgraphOptions subgraph;
  SpanClassifierConfig classifier;
};

struct BootstrapResult {
  std::vector<Sentence> corpus;
  std::vector<GenerationRound> rounds;
  int best_round = 0;
  std::shared_ptr<const TrainableSpanClassifier> recognizer;
};

// Recognize, link with the sub-graph step only, and keep the sentence when
// at least two spans were linked; unlinked spans are dropped.
std::optional<Sentence> filter_linked(const Sentence& sentence, const Recognizer& recognizer,
                                      const KnowledgeBase& kb, const EmbeddingTable& table, int k,
                                      const SubgraphOptions& options = {});

// One round: returns the kept corpus and the student trained on it.
using RoundStep = std::function<std::pair<std::vector<Sentence>, std::shared_ptr<const TrainableSpanClassifier>>(
    int round_index)>;

// Runs rounds 1..max_rounds, stopping at the first round whose count falls
// below the previous one; that previous round is the result.
BootstrapResult run_rounds(const RoundStep& step, int max_rounds);

BootstrapResult bootstrap_linked_corpus(const std::vector<Sentence>& raw, const KnowledgeBase& kb,
                                        const EmbeddingTable& table, const BootstrapConfig& cfg = {});

void write_generation_report(std::ostream& out, const BootstrapResult& result);

// ---- distant supervision ----------------------------------------------------

struct Bag {
  EntityId subject;
  EntityId object;
  std::vector<std::string> sentences;  // sentence ids
  std::vector<RelationId> labels;      // sorted; empty = NA

  bool is_na() const { return labels.empty(); }
  bool operator==(const Bag&) const = default;
};

struct DistantSupervisionConfig {
  int max_bag_size = 32;
  double na_ratio = 1.0;
  std::uint64_t seed = 1;
};

std::vector<Bag> distant_supervision(const std::vector<Sentence>& linked, const KnowledgeBase& kb,
                                     const DistantSupervisionConfig& cfg = {});

struct DatasetSplit {
  std::vector<Bag> train, valid, test;
};

DatasetSplit split_dataset(const std::vector<Bag>& bags, std::array<double, 3> ratios, std::uint64_t seed);

std::string bag_to_json_line(const Bag& bag);
Bag bag_from_json_line(const std::string& line);
void write_bags(const std::filesystem::path& file, const std::vector<Bag>& bags);
std::vector<Bag> read_bags(const std::filesystem::path& file);

}  // namespace kbc
