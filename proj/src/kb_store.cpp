#include "kbc/kb_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "kbc/text_util.hpp"

namespace kbc {

namespace {

const std::vector<EntityId> kNoEntities;

std::string load_error(const std::string& file, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << file << ":" << line << ": " << what;
  return os.str();
}

}  // namespace

const FactTypeTemplate::Entry& FactTypeTemplate::entry(const RelationId& r) const {
  auto it = entries_.find(r);
  if (it == entries_.end()) throw Error("no fact-type template for relation '" + r + "'");
  return it->second;
}

bool FactTypeTemplate::admits(const RelationId& r, const std::string& subject_type,
                              const std::string& object_type) const {
  auto it = entries_.find(r);
  if (it == entries_.end()) return false;
  return it->second.subject_types.count(subject_type) && it->second.object_types.count(object_type);
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& entity_file,
                                  const std::filesystem::path& triple_file, KbOptions options) {
  std::ifstream entities(entity_file);
  if (!entities) throw KbLoadError("cannot open entity file " + entity_file.string());
  std::ifstream triples(triple_file);
  if (!triples) throw KbLoadError("cannot open triple file " + triple_file.string());
  return load_streams(entities, triples, options, entity_file.string(), triple_file.string());
}

KnowledgeBase KnowledgeBase::load_streams(std::istream& entities, std::istream& triples,
                                          KbOptions options, const std::string& entity_name,
                                          const std::string& triple_name) {
  KnowledgeBase kb(options);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(entities, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < 3) {
      throw KbLoadError(load_error(entity_name, lineno, "expected id<TAB>type<TAB>name[<TAB>aliases]"));
    }
    Entity e;
    e.id = fields[0];
    // Only the first listed type is kept.
    std::string type = split(fields[1], ',').front();
    e.type = type.empty() ? kUntyped : type;
    e.canonical_name = fields[2];
    if (e.id.empty()) throw KbLoadError(load_error(entity_name, lineno, "empty entity id"));
    if (e.canonical_name.empty()) throw KbLoadError(load_error(entity_name, lineno, "empty canonical name"));
    if (fields.size() > 3) {
      for (auto& a : split(fields[3], '|')) {
        if (!a.empty()) e.aliases.push_back(a);
      }
    }
    if (kb.has_entity(e.id)) {
      throw KbLoadError(load_error(entity_name, lineno, "duplicate entity id '" + e.id + "'"));
    }
    kb.add_entity(std::move(e));
  }

  lineno = 0;
  std::vector<Triple> parsed;
  while (std::getline(triples, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw KbLoadError(load_error(triple_name, lineno, "expected subject<TAB>relation<TAB>object"));
    }
    for (int k : {0, 2}) {
      if (!kb.has_entity(fields[k])) {
        throw KbLoadError(load_error(triple_name, lineno, "unknown entity '" + fields[k] + "'"));
      }
    }
    if (fields[0] == fields[2] && !options.allow_reflexive) {
      throw KbLoadError(load_error(triple_name, lineno, "reflexive triple on '" + fields[0] + "'"));
    }
    parsed.push_back({fields[0], fields[1], fields[2]});
  }
  kb.add_triples(parsed);
  return kb;
}

void KnowledgeBase::add_entity(Entity entity) {
  if (entity.canonical_name.empty()) throw Error("entity '" + entity.id + "' has empty canonical name");
  if (has_entity(entity.id)) throw Error("duplicate entity id '" + entity.id + "'");
  if (entity.type.empty()) entity.type = kUntyped;
  if (std::find(entity.aliases.begin(), entity.aliases.end(), entity.canonical_name) == entity.aliases.end()) {
    entity.aliases.insert(entity.aliases.begin(), entity.canonical_name);
  }
  // De-duplicate aliases while keeping order.
  std::vector<std::string> unique;
  for (auto& a : entity.aliases) {
    if (std::find(unique.begin(), unique.end(), a) == unique.end()) unique.push_back(a);
  }
  entity.aliases = std::move(unique);

  auto idx = static_cast<Index>(entities_.size());
  entity_index_.emplace(entity.id, idx);
  for (const auto& a : entity.aliases) {
    auto& ids = alias_index_[a];
    ids.insert(std::upper_bound(ids.begin(), ids.end(), entity.id), entity.id);
  }
  entities_.push_back(std::move(entity));
  neighbor_lists_.emplace_back();
}

KnowledgeBase::Index KnowledgeBase::require_entity(const EntityId& id) const {
  auto it = entity_index_.find(id);
  if (it == entity_index_.end()) throw Error("unknown entity '" + id + "'");
  return it->second;
}

KnowledgeBase::Index KnowledgeBase::intern_relation(const RelationId& r) {
  auto [it, inserted] = relation_index_.emplace(r, static_cast<Index>(relation_names_.size()));
  if (inserted) relation_names_.push_back(r);
  return it->second;
}

std::uint64_t KnowledgeBase::connection_key(Index a, Index b) const {
  if (options_.directed_connections) return pair_key(a, b);
  return pair_key(std::min(a, b), std::max(a, b));
}

void KnowledgeBase::index_triple(const EncodedTriple& t) {
  triples_.push_back(t);
  triple_set_.insert(t);
  ++connection_index_[connection_key(t.s, t.o)];
  neighbor_lists_[t.s].insert(t.o);
  neighbor_lists_[t.o].insert(t.s);
  pair_relations_[pair_key(t.s, t.o)].insert(t.r);
}

std::size_t KnowledgeBase::add_triples(std::span<const Triple> triples) {
  // Validate everything before touching any index.
  std::vector<std::pair<Index, Index>> ends;
  ends.reserve(triples.size());
  for (const auto& t : triples) {
    Index s = require_entity(t.subject);
    Index o = require_entity(t.object);
    if (s == o && !options_.allow_reflexive) throw Error("reflexive triple on '" + t.subject + "'");
    if (t.relation.empty()) throw Error("empty relation id");
    ends.emplace_back(s, o);
  }
  std::size_t added = 0;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto rit = relation_index_.find(triples[i].relation);
    if (rit != relation_index_.end() &&
        triple_set_.count({ends[i].first, rit->second, ends[i].second})) {
      continue;
    }
    Index r = intern_relation(triples[i].relation);
    index_triple({ends[i].first, r, ends[i].second});
    ++added;
  }
  return added;
}

const Entity& KnowledgeBase::entity(const EntityId& id) const { return entities_[require_entity(id)]; }

bool KnowledgeBase::connected(const EntityId& a, const EntityId& b) const {
  return connection_multiplicity(a, b) > 0;
}

std::size_t KnowledgeBase::connection_multiplicity(const EntityId& a, const EntityId& b) const {
  auto it = connection_index_.find(connection_key(require_entity(a), require_entity(b)));
  return it == connection_index_.end() ? 0 : it->second;
}

std::set<RelationId> KnowledgeBase::relations_between(const EntityId& subject, const EntityId& object) const {
  std::set<RelationId> out;
  auto it = pair_relations_.find(pair_key(require_entity(subject), require_entity(object)));
  if (it == pair_relations_.end()) return out;
  for (Index r : it->second) out.insert(relation_names_[r]);
  return out;
}

std::vector<EntityId> KnowledgeBase::neighbors(const EntityId& id) const {
  std::vector<EntityId> out;
  for (Index n : neighbor_lists_[require_entity(id)]) out.push_back(entities_[n].id);
  return out;
}

const std::vector<EntityId>& KnowledgeBase::lookup_alias(const std::string& alias) const {
  auto it = alias_index_.find(alias);
  return it == alias_index_.end() ? kNoEntities : it->second;
}

std::vector<Triple> KnowledgeBase::triples() const {
  std::vector<Triple> out;
  out.reserve(triples_.size());
  for (const auto& t : triples_) {
    out.push_back({entities_[t.s].id, relation_names_[t.r], entities_[t.o].id});
  }
  return out;
}

bool KnowledgeBase::contains(const Triple& t) const {
  auto s = entity_index_.find(t.subject);
  auto o = entity_index_.find(t.object);
  auto r = relation_index_.find(t.relation);
  if (s == entity_index_.end() || o == entity_index_.end() || r == relation_index_.end()) return false;
  return triple_set_.count({s->second, r->second, o->second}) != 0;
}

std::vector<RelationId> KnowledgeBase::relations() const {
  std::vector<RelationId> out = relation_names_;
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> KnowledgeBase::entity_types() const {
  std::set<std::string> types;
  for (const auto& e : entities_) types.insert(e.type);
  return {types.begin(), types.end()};
}

FactTypeTemplate KnowledgeBase::build_fact_type_templates() const {
  FactTypeTemplate tpl;
  auto& entries = tpl.mutable_entries();
  for (const auto& t : triples_) {
    auto& e = entries[relation_names_[t.r]];
    e.subject_types.insert(entities_[t.s].type);
    e.object_types.insert(entities_[t.o].type);
  }
  return tpl;
}

KnowledgeBase KnowledgeBase::rebuilt() const {
  KnowledgeBase kb(options_);
  for (const auto& e : entities_) kb.add_entity(e);
  auto ts = triples();
  kb.add_triples(ts);
  return kb;
}

bool KnowledgeBase::indexes_equal(const KnowledgeBase& other) const {
  // Relation interning order may differ, so compare through names.
  auto named_pairs = [](const KnowledgeBase& kb) {
    std::map<std::pair<EntityId, EntityId>, std::set<RelationId>> out;
    for (const auto& [key, rels] : kb.pair_relations_) {
      auto s = kb.entities_[key >> 32].id;
      auto o = kb.entities_[key & 0xffffffffu].id;
      for (Index r : rels) out[{s, o}].insert(kb.relation_names_[r]);
    }
    return out;
  };
  auto named_connections = [](const KnowledgeBase& kb) {
    std::map<std::pair<EntityId, EntityId>, std::uint32_t> out;
    for (const auto& [key, count] : kb.connection_index_) {
      out[{kb.entities_[key >> 32].id, kb.entities_[key & 0xffffffffu].id}] = count;
    }
    return out;
  };
  auto named_neighbors = [](const KnowledgeBase& kb) {
    std::map<EntityId, std::set<EntityId>> out;
    for (std::size_t i = 0; i < kb.entities_.size(); ++i) {
      auto& ns = out[kb.entities_[i].id];
      for (Index n : kb.neighbor_lists_[i]) ns.insert(kb.entities_[n].id);
    }
    return out;
  };
  return named_pairs(*this) == named_pairs(other) &&
         named_connections(*this) == named_connections(other) &&
         named_neighbors(*this) == named_neighbors(other) && alias_index_ == other.alias_index_;
}

void KnowledgeBase::write_entities(std::ostream& out) const {
  for (const auto& e : entities_) {
    out << e.id << '\t' << e.type << '\t' << e.canonical_name << '\t' << join(e.aliases, "|") << '\n';
  }
}

void KnowledgeBase::write_triples(std::ostream& out) const {
  for (const auto& t : triples_) {
    out << entities_[t.s].id << '\t' << relation_names_[t.r] << '\t' << entities_[t.o].id << '\n';
  }
}

}  // namespace kbc
