#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "kbc/common.hpp"
#include "kbc/kb_store.hpp"

namespace kbc {

enum class LinkMethod { kSubgraph, kContext };

const char* to_string(LinkMethod m);
LinkMethod link_method_from_string(const std::string& s);

struct Token {
  int index = 0;
  std::string surface;
  std::string pos = "UNK";
  int head = -1;  // -1 marks the root
};

// Inclusive token range [start, end].
struct Span {
  int start = 0;
  int end = 0;
  std::string surface;
  std::optional<std::string> type;
  std::optional<EntityId> entity;
  std::optional<LinkMethod> method;

  int length() const { return end - start + 1; }
  bool overlaps(const Span& o) const { return start <= o.end && o.start <= end; }
  bool same_range(const Span& o) const { return start == o.start && end == o.end; }
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;
  std::vector<Span> spans;

  int size() const { return static_cast<int>(tokens.size()); }
  std::string surface(int start, int end) const;
  std::string text() const { return surface(0, size() - 1); }
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

// Throws CorpusError naming the sentence when token or span invariants fail:
// heads in range, exactly one root, acyclic heads, spans in range and
// mutually non-overlapping.
void validate_sentence(const Sentence& s);

Sentence sentence_from_json_line(const std::string& line);
std::string sentence_to_json_line(const Sentence& s);

std::vector<Sentence> ingest_corpus(const std::filesystem::path& jsonl_file);
std::vector<Sentence> read_corpus(std::istream& in, const std::string& name = "corpus");
void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences);
void write_corpus(const std::filesystem::path& file, const std::vector<Sentence>& sentences);

// Whitespace tokenization with a left-headed chain as the dependency tree.
Sentence fallback_parse(const std::string& raw, std::string id = "s0");

class Gazetteer {
 public:
  Gazetteer() = default;
  // Built from every alias of every KB entity.
  explicit Gazetteer(const KnowledgeBase& kb, bool lowercase = false);

  void add(const std::string& alias, const EntityId& entity);
  // Sorted entity ids for an alias; empty if absent.
  const std::vector<EntityId>& lookup(const std::string& surface) const;
  bool contains(const std::string& surface) const;
  int max_ngram() const { return max_ngram_; }
  bool lowercase() const { return lowercase_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::string key(const std::string& s) const;

  std::unordered_map<std::string, std::vector<EntityId>> entries_;
  int max_ngram_ = 0;
  bool lowercase_ = false;
};

// Greedy left-to-right leftmost-longest matching of token n-grams against
// gazetteer aliases. Returned spans carry no type or entity.
std::vector<Span> longest_ngram_match(const Sentence& sentence, const Gazetteer& gazetteer);

enum class SdpAnchor { kFirst, kLast };

struct SdpOptions {
  SdpAnchor anchor = SdpAnchor::kLast;
  // Adjacency also keeps edges internal to the two entity spans.
  bool include_internal = true;
};

int span_anchor(const Span& span, SdpAnchor anchor);

// Unique tree path between the anchor tokens of a and b, both included.
std::vector<int> shortest_dependency_path(const Sentence& sentence, const Span& a, const Span& b,
                                          SdpAnchor anchor = SdpAnchor::kLast);

// D^-1/2 (A + I) D^-1/2 where A keeps only dependency edges with both
// endpoints in `nodes`.
Eigen::MatrixXd sdp_adjacency(const Sentence& sentence, const std::vector<int>& nodes);

// Node set fed to sdp_adjacency for an entity pair: the SDP plus, when
// include_internal is set, every token of both spans.
std::vector<int> sdp_nodes(const Sentence& sentence, const Span& a, const Span& b,
                           const SdpOptions& options);

}  // namespace kbc
