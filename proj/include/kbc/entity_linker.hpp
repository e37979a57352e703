#pragma once
// Recognition, candidate generation and two-step disambiguation: KB
// sub-graph voting first, a neural context ranker for whatever is left.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kbc/corpus.hpp"
#include "kbc/embeddings.hpp"
#include "kbc/kb_store.hpp"
#include "kbc/nn/checkpoint.hpp"
#include "kbc/nn/tensor.hpp"

namespace kbc {

// ---- recognition ------------------------------------------------------------

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  // Non-overlapping typed spans in left-to-right order.
  virtual std::vector<Span> recognize(const Sentence& sentence) const = 0;
};

// KB type for a surface when every entity carrying that alias agrees on it,
// otherwise kUntyped.
class SurfaceTyper {
 public:
  SurfaceTyper() = default;
  SurfaceTyper(const KnowledgeBase& kb, const Gazetteer& gazetteer);
  std::string type_of(const std::string& surface) const;

 private:
  std::unordered_map<std::string, std::string> types_;
  bool lowercase_ = false;
};

class GazetteerRecognizer : public Recognizer {
 public:
  explicit GazetteerRecognizer(const KnowledgeBase& kb, bool lowercase = false);
  std::vector<Span> recognize(const Sentence& sentence) const override;
  const Gazetteer& gazetteer() const { return gazetteer_; }

 private:
  Gazetteer gazetteer_;
  SurfaceTyper typer_;
};

struct SpanClassifierConfig {
  int hash_bits = 16;
  int epochs = 5;
  double learning_rate = 0.1;
  double l2 = 1e-6;
  // Longest n-gram scored; 0 takes the longest training span.
  int max_ngram = 0;
  std::uint64_t seed = 1;
};

// Logistic model over hashed span features (surface, gazetteer membership,
// length, span words, context words within +-2). Every n-gram up to
// max_ngram is scored; spans with p > 0.5 are kept greedily by probability.
class TrainableSpanClassifier : public Recognizer {
 public:
  TrainableSpanClassifier(const KnowledgeBase& kb, SpanClassifierConfig cfg = {});

  // Labeled spans of each sentence are positives, all other n-grams negatives.
  void train(const std::vector<Sentence>& labeled);
  bool trained() const { return trained_; }

  double probability(const Sentence& sentence, int start, int end) const;
  std::vector<Span> recognize(const Sentence& sentence) const override;

  const SpanClassifierConfig& config() const { return cfg_; }
  int max_ngram() const { return max_ngram_; }

  nn::Checkpoint to_checkpoint() const;
  void load_checkpoint(const nn::Checkpoint& ckpt);

 private:
  std::vector<std::uint32_t> features(const Sentence& sentence, int start, int end) const;
  double logit(const std::vector<std::uint32_t>& feats) const;

  SpanClassifierConfig cfg_;
  Gazetteer gazetteer_;
  SurfaceTyper typer_;
  std::vector<double> weights_;
  int max_ngram_ = 0;
  bool trained_ = false;
};

inline std::vector<Span> recognize(const Sentence& sentence, const Recognizer& recognizer) {
  return recognizer.recognize(sentence);
}

// ---- candidates -------------------------------------------------------------

enum class CandidateSource { kDictionary, kKnn, kBoth };
const char* to_string(CandidateSource s);

struct Candidate {
  Span span;
  std::vector<EntityId> entities;  // dictionary hits first, then k-NN by distance
  CandidateSource source = CandidateSource::kDictionary;

  bool empty() const { return entities.empty(); }
};

Candidate generate_candidates(const Span& span, const KnowledgeBase& kb, const EmbeddingTable& table, int k);

// ---- step one: sub-graph voting ---------------------------------------------

struct LinkDecision {
  Span span;
  EntityId entity;
  LinkMethod method = LinkMethod::kSubgraph;
  double score = 0.0;  // connection count, or ranker output
  // Every candidate with its score, best first (ties by id).
  std::vector<std::pair<EntityId, double>> ranking;
};

struct SubgraphOptions {
  // Count parallel triples between a pair once each instead of once in total.
  bool count_multiplicity = false;
};

// Per-candidate connection counts over cross-span candidate pairs.
std::vector<std::vector<double>> subgraph_counts(const std::vector<Candidate>& candidates,
                                                 const KnowledgeBase& kb, const SubgraphOptions& options = {});

// One entry per candidate span: a decision when a unique positive maximum exists.
std::vector<std::optional<LinkDecision>> subgraph_link(const std::vector<Candidate>& candidates,
                                                       const KnowledgeBase& kb,
                                                       const SubgraphOptions& options = {});

// ---- step two: context ranker -----------------------------------------------

struct ContextLinkerConfig {
  int hidden = 16;       // per LSTM direction
  int mlp_hidden = 32;
  double margin = 0.2;
  int epochs = 8;
  double learning_rate = 5e-3;
  int k = 10;            // k-NN candidates during training
  std::uint64_t seed = 1;
};

class ContextLinkerModel {
 public:
  ContextLinkerModel() = default;
  ContextLinkerModel(int embedding_dim, const ContextLinkerConfig& cfg);

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  int embedding_dim() const { return dim_; }
  int context_dim() const { return 2 * cfg_.hidden; }
  int scorer_input_dim() const { return context_dim() + 2 * dim_; }
  const ContextLinkerConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  // Word vectors of every token, zero for out-of-vocabulary words.
  nn::Matrix token_inputs(const Sentence& sentence, const EmbeddingTable& table) const;
  // v_c: last forward state over first backward state.
  nn::Vector encode_context(const Sentence& sentence, const EmbeddingTable& table) const;
  // Scorer input [v_c; w_e; v_e].
  nn::Vector scorer_input(const nn::Vector& context, const Span& span, const EntityId& entity,
                          const EmbeddingTable& table) const;
  double score_input(const nn::Vector& input) const;

  nn::Checkpoint to_checkpoint() const;
  static ContextLinkerModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  void build(Rng* rng);

  int dim_ = 0;
  ContextLinkerConfig cfg_;
  nn::ParameterStore params_;
  bool trained_ = false;
};

double context_score(const ContextLinkerModel& model, const EmbeddingTable& table, const Sentence& sentence,
                     const Span& span, const EntityId& entity);

inline double hinge_loss(double positive, double negative, double margin) {
  return std::max(0.0, negative - positive + margin);
}

struct ContextTrainingTrace {
  std::vector<double> epoch_loss;  // mean hinge loss per item
  int items = 0;
};

// Items are the linked spans of the corpus; candidates come from
// generate_candidates with cfg.k.
ContextLinkerModel train_context_linker(const std::vector<Sentence>& linked, const KnowledgeBase& kb,
                                        const EmbeddingTable& table, const ContextLinkerConfig& cfg,
                                        ContextTrainingTrace* trace = nullptr);

// ---- full linker ------------------------------------------------------------

struct LinkOptions {
  int k = 10;
  SubgraphOptions subgraph;
};

// Disambiguates pre-recognized spans (types kept, entity/method ignored).
std::vector<LinkDecision> link_spans(const Sentence& sentence, const std::vector<Span>& spans,
                                     const KnowledgeBase& kb, const EmbeddingTable& table,
                                     const ContextLinkerModel& model, const LinkOptions& options = {});

std::vector<LinkDecision> link(const Sentence& sentence, const KnowledgeBase& kb, const EmbeddingTable& table,
                               const ContextLinkerModel& model, const Recognizer& recognizer,
                               const LinkOptions& options = {});

// Copy of the sentence whose spans are exactly the decisions.
Sentence apply_links(const Sentence& sentence, const std::vector<LinkDecision>& decisions);

}  // namespace kbc
