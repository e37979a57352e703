#pragma once
// Word and entity vectors sharing one space. Entity rows use the "ent:"
// symbol prefix so the two namespaces never collide.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "kbc/corpus.hpp"
#include "kbc/kb_store.hpp"

namespace kbc {

inline constexpr const char* kEntityPrefix = "ent:";

inline std::string entity_symbol(const EntityId& id) { return kEntityPrefix + id; }
inline bool is_entity_symbol(const std::string& s) { return s.rfind(kEntityPrefix, 0) == 0; }

struct SkipGramConfig {
  int dim = 32;
  int epochs = 20;
  double learning_rate = 0.05;
  int negatives = 5;
  int window = 3;
  std::uint64_t seed = 1;
  // Runs the 1-hop KB objective inside every joint-training epoch.
  bool interleave_kb_objective = true;

  void validate() const;
};

class EmbeddingTable {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  // Appends a symbol with a zero vector unless it already exists; returns its row.
  int add_symbol(const std::string& symbol, std::int64_t count = 0);
  bool contains(const std::string& symbol) const { return index_.count(symbol) != 0; }
  int row(const std::string& symbol) const;
  int find(const std::string& symbol) const;  // -1 if absent

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(int row) const { return symbols_[row]; }
  std::int64_t count(int row) const { return counts_[row]; }
  void add_count(int row, std::int64_t c) { counts_[row] += c; }

  Matrix& vectors() { return vectors_; }
  const Matrix& vectors() const { return vectors_; }
  Eigen::VectorXd vector(const std::string& symbol) const { return vectors_.row(row(symbol)).transpose(); }

  // Mean of the in-vocabulary word vectors of a whitespace-tokenized phrase;
  // false when every word is out of vocabulary.
  bool phrase_vector(const std::string& phrase, Eigen::VectorXd& out) const;

  std::vector<int> entity_rows() const;
  bool all_finite() const { return vectors_.allFinite(); }

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& file) const;
  static EmbeddingTable load(std::istream& in);
  static EmbeddingTable load(const std::filesystem::path& file);

  bool operator==(const EmbeddingTable& o) const {
    return dim_ == o.dim_ && symbols_ == o.symbols_ && vectors_ == o.vectors_;
  }

 private:
  int dim_ = 0;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::int64_t> counts_;
  Matrix vectors_;
};

struct TrainingTrace {
  std::vector<double> epoch_loss;           // mean loss per positive pair
  std::vector<EntityId> isolated_entities;  // no neighbors, left at initialization
};

// Skip-gram with negative sampling over every ordered 1-hop pair of the KB.
EmbeddingTable train_node_embeddings(const KnowledgeBase& kb, const SkipGramConfig& cfg,
                                     TrainingTrace* trace = nullptr);

// Continues training `init` on linked text: each linked span contributes its
// surface words and its entity symbol to the token stream.
EmbeddingTable train_joint_embeddings(const std::vector<Sentence>& linked_sentences,
                                      const KnowledgeBase& kb, const EmbeddingTable& init,
                                      const SkipGramConfig& cfg, TrainingTrace* trace = nullptr);

// Skip-gram token stream for one sentence (exposed for tests).
std::vector<std::string> joint_token_stream(const Sentence& sentence);

struct Neighbor {
  EntityId entity;
  double distance;
};

// k entities nearest to the phrase vector by L2 distance, ascending, ties by id.
std::vector<Neighbor> knn_candidates(const EmbeddingTable& table, const std::string& phrase, int k);

}  // namespace kbc
