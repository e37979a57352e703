#pragma once
// Bag-level multi-label relation extraction: token embeddings, PCNN and
// C-GCN sentence encoders, a selective gate over the bag, an MLP scorer with
// a learnable threshold, and type-template validation of the output.
//
// Shapes (n tokens, d_e input dim, d_h hidden dim, R relations):
//   X       d_e x n
//   s_pcnn  3 d_h          s_gcn 3 d_h          s = [s_pcnn; s_gcn]  6 d_h
//   g       6 d_h          v = sum_i g_i * s_i  6 d_h
//   r       R, each score in (0, 1)

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kbc/corpus.hpp"
#include "kbc/data_generator.hpp"
#include "kbc/embeddings.hpp"
#include "kbc/kb_store.hpp"
#include "kbc/nn/checkpoint.hpp"
#include "kbc/nn/layers.hpp"
#include "kbc/nn/tensor.hpp"

namespace kbc {

enum class AttentionAxis { kTokens, kFeatures };

struct REConfig {
  int word_dim = 32;  // replaced by the table dim when word vectors are supplied
  int position_dim = 5;
  int type_dim = 5;
  int tag_dim = 5;
  int hidden = 32;  // d_h, even: the BiLSTM runs d_h/2 per direction
  int conv_width = 3;
  int gcn_layers = 2;
  double margin = 0.1;     // gamma
  double na_weight = 0.5;  // lambda
  double threshold_init = 0.5;
  int max_position = 30;
  double learning_rate = 1e-3;
  int epochs = 20;
  int batch_size = 4;
  int max_bag_size = 32;
  std::uint64_t seed = 1;
  AttentionAxis attention_axis = AttentionAxis::kTokens;
  SdpOptions sdp;

  int input_dim() const { return word_dim + 3 * position_dim + type_dim + tag_dim; }
  void validate() const;
};

struct Vocabularies {
  std::vector<std::string> words;  // index 0 is the unknown word
  std::vector<std::string> types;  // 0 unknown, 1 "no entity"
  std::vector<std::string> tags;   // 0 unknown
  std::vector<RelationId> relations;

  static Vocabularies build(const std::vector<Sentence>& sentences, const KnowledgeBase& kb,
                            const EmbeddingTable* table);
  int word(const std::string& w) const;
  int type(const std::string& t) const;
  int tag(const std::string& t) const;
  int relation(const RelationId& r) const;  // -1 if absent

 private:
  void index();
  std::unordered_map<std::string, int> word_index_, type_index_, tag_index_, relation_index_;
  friend class RelationModel;
};

// Per-token lookup indexes for one (sentence, subject, object) instance.
struct TokenEncoding {
  int n = 0;
  std::vector<int> word, pos1, pos2, pos3, type, tag;
  std::vector<int> dist1, dist2, dist3;  // clipped distances; dist3 is -1 without other entities
};

// Signed distance of token i to span: negative before, 0 inside, positive after.
int relative_distance(int i, const Span& span);

TokenEncoding token_encoding(const Sentence& sentence, const Span& subject, const Span& object,
                             const Vocabularies& vocab, int max_position,
                             const std::function<std::string(const Span&)>& span_type);

// One sentence of a bag, ready for the encoders.
struct Instance {
  std::string sentence_id;
  TokenEncoding tokens;
  Span subject, object;
  int i = 0, j = 0;  // segment split points: starts of the earlier and later span
  nn::Matrix adjacency;
};

struct PcnnCache {
  nn::Matrix x, h;
  nn::PoolResult pools[3];
  nn::Vector s;
};

struct CgcnCache {
  nn::BiLstmCache lstm;
  std::vector<nn::GcnCache> gcn;
  int n = 0;
  nn::PoolResult pools[3];
  nn::Vector s;
};

struct GateCache {
  nn::Matrix x, z1, a1, p;
  nn::Vector s_att_raw, s_att, z_g1, a_g1, g;
};

struct PredictCache {
  nn::Vector v, z1, a1, r;
};

struct SentenceCache {
  nn::Matrix x;
  PcnnCache pcnn;
  CgcnCache cgcn;
  GateCache gate;
  nn::Vector s, g;
};

struct BagForward {
  std::vector<SentenceCache> sentences;
  nn::Vector v;
  PredictCache predict;
  nn::Vector scores;
};

struct LossGrads {
  nn::Vector d_scores;
  double d_threshold = 0.0;
};

// Sum over relations of  y max(0, B + gamma - r)^2 + lambda (1 - y) max(0, r - (B - gamma))^2.
double sliding_margin_loss(const nn::Vector& scores, const nn::Vector& gold, double threshold, double margin,
                           double na_weight, LossGrads* grads = nullptr);

// v = sum_i g_i * s_i.
nn::Vector aggregate_bag(const std::vector<nn::Vector>& s, const std::vector<nn::Vector>& g);

class RelationModel {
 public:
  RelationModel() = default;
  // Word vectors come from `table` (and stay frozen) when given, otherwise
  // they are randomly initialized and trained.
  RelationModel(REConfig cfg, Vocabularies vocab, const EmbeddingTable* table);

  const REConfig& config() const { return cfg_; }
  const Vocabularies& vocab() const { return vocab_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  int relation_count() const { return static_cast<int>(vocab_.relations.size()); }
  double threshold() const;

  Instance prepare(const Sentence& sentence, const Span& subject, const Span& object,
                   const KnowledgeBase& kb) const;

  nn::Matrix embed(const TokenEncoding& enc) const;
  void embed_backward(const TokenEncoding& enc, const nn::Matrix& dx);

  nn::Vector pcnn(const nn::Matrix& x, int i, int j, PcnnCache* cache) const;
  nn::Matrix pcnn_backward(const PcnnCache& cache, const nn::Vector& ds);

  nn::Vector cgcn(const nn::Matrix& x, const nn::Matrix& adjacency, const Span& subject, const Span& object,
                  CgcnCache* cache) const;
  nn::Matrix cgcn_backward(const nn::Matrix& adjacency, const CgcnCache& cache, const nn::Vector& ds);

  nn::Vector gate(const nn::Matrix& x, GateCache* cache) const;
  nn::Matrix gate_backward(const GateCache& cache, const nn::Vector& dg);

  nn::Vector predict(const nn::Vector& v, PredictCache* cache) const;
  nn::Vector predict_backward(const PredictCache& cache, const nn::Vector& dr);

  BagForward forward(const std::vector<Instance>& bag) const;
  // Accumulates gradients of the loss into params(); returns the loss.
  double backward(const std::vector<Instance>& bag, const BagForward& fwd, const nn::Vector& gold);

  nn::Checkpoint to_checkpoint() const;
  static RelationModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  void build(Rng* rng, const EmbeddingTable* table);

  REConfig cfg_;
  Vocabularies vocab_;
  nn::ParameterStore params_;
};

// Thin wrappers named after the stages.
nn::Matrix encode_tokens(const RelationModel& model, const Sentence& sentence, const Span& subject,
                         const Span& object, const KnowledgeBase& kb);
nn::Vector pcnn_encode(const RelationModel& model, const nn::Matrix& x, int i, int j);
nn::Vector cgcn_encode(const RelationModel& model, const nn::Matrix& x, const nn::Matrix& adjacency,
                       const Span& subject, const Span& object);
nn::Vector selective_gate(const RelationModel& model, const nn::Matrix& x);

struct Prediction {
  nn::Vector scores;
  std::vector<RelationId> relations;  // empty = NA
};

Prediction predict_bag(const RelationModel& model, const nn::Vector& v);
Prediction predict_bag(const RelationModel& model, const std::vector<Instance>& bag);

// ---- training ---------------------------------------------------------------

struct LabeledBag {
  std::vector<Instance> instances;
  nn::Vector gold;
  EntityId subject, object;
};

// Resolves bag sentences by id; sentences missing either linked entity are skipped.
std::vector<LabeledBag> prepare_bags(const RelationModel& model, const std::vector<Bag>& bags,
                                     const std::map<std::string, const Sentence*>& sentences,
                                     const KnowledgeBase& kb);

struct ReMetrics {
  double precision = 0, recall = 0, f1 = 0;
  double exact_accuracy = 0;  // predicted set equals gold set, NA included
  long long true_positive = 0, predicted = 0, gold = 0;
  int bags = 0;
};

// Micro precision/recall/F1 over (bag, relation) pairs, NA excluded.
ReMetrics micro_metrics(const std::vector<std::vector<RelationId>>& predicted,
                        const std::vector<std::vector<RelationId>>& gold);

ReMetrics evaluate_relation_model(const RelationModel& model, const std::vector<LabeledBag>& bags);

struct ReTrainingTrace {
  std::vector<double> epoch_loss;
  std::vector<double> valid_f1;
  int best_epoch = -1;
};

// Adam over shuffled mini-batches; keeps the parameters of the epoch with the
// best validation F1 when validation bags are given.
RelationModel train_relation_model(const std::vector<LabeledBag>& train, const std::vector<LabeledBag>& valid,
                                   RelationModel model, ReTrainingTrace* trace = nullptr);

// ---- validation and extraction ----------------------------------------------

enum class Verdict { kAccept, kUnknownRelation, kUnknownEntity, kSubjectType, kObjectType };
const char* to_string(Verdict v);

Verdict validate_triple(const Triple& triple, const KnowledgeBase& kb, const FactTypeTemplate& tmpl);

struct ExtractedTriple {
  Triple triple;
  double confidence = 0;
  std::vector<std::string> sentence_ids;
};

struct RejectedTriple {
  ExtractedTriple extracted;
  Verdict reason = Verdict::kAccept;
};

struct Extraction {
  std::vector<ExtractedTriple> accepted;
  std::vector<RejectedTriple> rejected;
};

Extraction extract(const std::vector<Sentence>& linked, const KnowledgeBase& kb, const RelationModel& model,
                   const FactTypeTemplate& tmpl);

void write_triples_tsv(const std::filesystem::path& file, const std::vector<ExtractedTriple>& triples);
void write_rejected_tsv(const std::filesystem::path& file, const std::vector<RejectedTriple>& rejected);
std::vector<ExtractedTriple> read_triples_tsv(const std::filesystem::path& file);

}  // namespace kbc
