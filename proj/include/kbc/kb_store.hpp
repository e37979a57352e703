#pragma once
// Typed triple store with the indexes the pipeline queries on hot paths:
//
//   connection index   unordered entity pair -> bool        (sub-graph linking)
//   neighbor lists     entity -> sorted 1-hop neighbors      (node embeddings)
//   pair relations     ordered pair -> relation set          (distant supervision)
//   alias index        alias string -> entities              (candidate lookup)
//
// Entities and relations are interned to dense indices at load time; the
// public surface speaks string ids.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kbc/common.hpp"

namespace kbc {

using EntityId = std::string;
using RelationId = std::string;

inline constexpr const char* kUntyped = "UNTYPED";

struct Entity {
  EntityId id;
  std::string canonical_name;
  std::vector<std::string> aliases;  // always contains canonical_name
  std::string type = kUntyped;
};

struct Triple {
  EntityId subject;
  RelationId relation;
  EntityId object;

  auto operator<=>(const Triple&) const = default;
};

class KbLoadError : public Error {
 public:
  using Error::Error;
};

struct KbOptions {
  // When true, connected(a, b) only holds for triples (a, r, b).
  bool directed_connections = false;
  bool allow_reflexive = false;
};

// Per-relation admissible subject and object types, mined from the KB.
class FactTypeTemplate {
 public:
  struct Entry {
    std::set<std::string> subject_types;
    std::set<std::string> object_types;
  };

  bool has_relation(const RelationId& r) const { return entries_.count(r) != 0; }
  const Entry& entry(const RelationId& r) const;
  bool admits(const RelationId& r, const std::string& subject_type,
              const std::string& object_type) const;
  const std::map<RelationId, Entry>& entries() const { return entries_; }
  std::map<RelationId, Entry>& mutable_entries() { return entries_; }

 private:
  std::map<RelationId, Entry> entries_;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(KbOptions options) : options_(options) {}

  // Loads the entity and triple TSV files. Throws KbLoadError naming the
  // offending file and line.
  static KnowledgeBase load(const std::filesystem::path& entity_file,
                            const std::filesystem::path& triple_file, KbOptions options = {});
  static KnowledgeBase load_streams(std::istream& entities, std::istream& triples,
                                    KbOptions options = {}, const std::string& entity_name = "entities",
                                    const std::string& triple_name = "triples");

  // Registers an entity; duplicate ids throw.
  void add_entity(Entity entity);

  // Adds triples atomically: either every id resolves and all genuinely new
  // triples are indexed, or nothing changes. Returns the number added.
  std::size_t add_triples(std::span<const Triple> triples);
  std::size_t add_triple(const Triple& t) { return add_triples(std::span(&t, 1)); }

  bool has_entity(const EntityId& id) const { return entity_index_.count(id) != 0; }
  const Entity& entity(const EntityId& id) const;
  const std::string& type_of(const EntityId& id) const { return entity(id).type; }

  bool connected(const EntityId& a, const EntityId& b) const;
  // Number of distinct triples linking a and b (direction per options).
  std::size_t connection_multiplicity(const EntityId& a, const EntityId& b) const;
  std::set<RelationId> relations_between(const EntityId& subject, const EntityId& object) const;
  std::vector<EntityId> neighbors(const EntityId& id) const;

  // Entities listing `alias` among their aliases, sorted by id.
  const std::vector<EntityId>& lookup_alias(const std::string& alias) const;

  std::size_t entity_count() const { return entities_.size(); }
  std::size_t triple_count() const { return triples_.size(); }
  std::size_t relation_count() const { return relation_names_.size(); }

  const std::vector<Entity>& entities() const { return entities_; }
  // Triples in insertion order.
  std::vector<Triple> triples() const;
  bool contains(const Triple& t) const;
  std::vector<RelationId> relations() const;
  std::vector<std::string> entity_types() const;
  const KbOptions& options() const { return options_; }

  FactTypeTemplate build_fact_type_templates() const;

  // Re-derives every index from the entity and triple lists; used to check
  // that incremental updates keep the indexes exact.
  KnowledgeBase rebuilt() const;
  bool indexes_equal(const KnowledgeBase& other) const;

  void write_entities(std::ostream& out) const;
  void write_triples(std::ostream& out) const;

 private:
  using Index = std::uint32_t;
  struct EncodedTriple {
    Index s, r, o;
    auto operator<=>(const EncodedTriple&) const = default;
  };

  Index require_entity(const EntityId& id) const;
  Index intern_relation(const RelationId& r);
  static std::uint64_t pair_key(Index a, Index b) { return (std::uint64_t{a} << 32) | b; }
  std::uint64_t connection_key(Index a, Index b) const;
  void index_triple(const EncodedTriple& t);

  KbOptions options_;
  std::vector<Entity> entities_;
  std::unordered_map<EntityId, Index> entity_index_;
  std::vector<RelationId> relation_names_;
  std::unordered_map<RelationId, Index> relation_index_;

  std::vector<EncodedTriple> triples_;
  std::set<EncodedTriple> triple_set_;
  std::unordered_map<std::uint64_t, std::uint32_t> connection_index_;  // key -> multiplicity
  std::vector<std::set<Index>> neighbor_lists_;
  std::unordered_map<std::uint64_t, std::set<Index>> pair_relations_;
  std::unordered_map<std::string, std::vector<EntityId>> alias_index_;
};

}  // namespace kbc
