#pragma once
// Seeded synthetic world for desk-scale runs: a typed KB, templated
// sentences that realize its triples through relation-specific cue phrases,
// distractor sentences that pair unrelated entities, and gold annotations.
//
// Every entity is named "<Stem> <Family>" and also answers to "<Family>".
// Families are shared inside ambiguity groups whose members all have
// different types, so a bare family name is ambiguous while the cue phrase
// around it still points at one type.

#include <filesystem>
#include <string>
#include <vector>

#include "kbc/corpus.hpp"
#include "kbc/data_generator.hpp"
#include "kbc/kb_store.hpp"

namespace kbc {

struct SynthSpec {
  int entities = 200;
  int types = 5;
  int relations = 10;
  int triples = 400;
  int sentences_per_triple = 3;
  double distractor_rate = 0.2;     // fraction of all sentences
  double hidden_fraction = 0.1;     // triples withheld from the KB, realized only in held-out text
  double heldout_fraction = 0.15;   // share of the remaining sentences moved to held-out text
  double ambiguous_fraction = 0.5;  // entities placed in shared-family groups
  double alias_rate = 0.4;          // mentions using the bare family name
  std::uint64_t seed = 7;

  void validate() const;
};

struct RelationSignature {
  RelationId relation;
  std::string subject_type, object_type;
  std::vector<std::string> cue;
};

struct SynthFixture {
  KnowledgeBase kb;                 // observed KB, hidden triples removed
  std::vector<Triple> hidden;       // true facts absent from kb
  std::vector<RelationSignature> signatures;
  std::vector<Sentence> corpus;     // raw text: tokens, POS, heads, no spans
  std::vector<Sentence> heldout;    // raw text for extraction
  std::vector<Sentence> gold_corpus, gold_heldout;  // same sentences with gold links
  std::vector<Bag> gold_bags;       // distant supervision over gold_corpus

  // Truth of the world: observed plus hidden triples.
  bool holds(const Triple& t) const;
};

SynthFixture synth_fixture(const SynthSpec& spec);

struct SynthFiles {
  std::filesystem::path entities, triples, hidden_triples, corpus, heldout, gold_corpus, gold_links, gold_bags,
      config;
};

// Writes the fixture plus a pipeline.ini that runs on it.
SynthFiles write_synth_fixture(const SynthFixture& fixture, const std::filesystem::path& dir);

}  // namespace kbc
