#include "kbc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "kbc/text_util.hpp"

namespace kbc {

namespace {

const char* kTypeNames[] = {"Person", "Organization", "Place", "Work", "Event"};

const char* kCues[] = {"was born in",   "works for", "founded",     "directed",  "is based in",     "produced",
                       "took place in", "organized", "competed at", "is set in", "was acquired by", "performed at"};

const std::set<std::string> kPrepositions = {"in", "for", "at", "by", "with", "on", "of"};

struct Filler {
  std::vector<std::string> words, tags;
};

const Filler kPrefixes[] = {{{"Reportedly", ","}, {"RB", ","}},
                            {{"In", "1998", ","}, {"IN", "CD", ","}},
                            {{"According", "to", "sources", ","}, {"VBG", "IN", "NNS", ","}},
                            {{"Later", ","}, {"RB", ","}}};

const Filler kSuffixes[] = {{{"last", "year"}, {"JJ", "NN"}},
                            {{"in", "the", "end"}, {"IN", "DT", "NN"}},
                            {{"again"}, {"RB"}},
                            {{"long", "ago"}, {"RB", "RB"}}};

// Distractors: $X and $Y are placeholders; root is the index of the main verb.
struct DistractorTemplate {
  std::vector<std::string> words, tags;
  int root;
};

const DistractorTemplate kDistractors[] = {
    {{"$X", "and", "$Y", "appeared", "together"}, {"", "CC", "", "VBD", "RB"}, 3},
    {{"$X", "was", "mentioned", "alongside", "$Y"}, {"", "VBD", "VBN", "IN", ""}, 2},
    {{"$X", "and", "$Y", "were", "listed", "in", "the", "archive"}, {"", "CC", "", "VBD", "VBN", "IN", "DT", "NN"}, 4},
    {{"nobody", "confused", "$X", "with", "$Y"}, {"NN", "VBD", "", "IN", ""}, 1}};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

class NameMaker {
 public:
  explicit NameMaker(Rng& rng) : rng_(rng) {
    // Capitalized filler words must never double as names.
    for (const auto& f : kPrefixes) used_.insert(f.words[0]);
  }

  std::string next() {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    static const char* codas[] = {"", "", "n", "r", "l", "s"};
    for (;;) {
      int syllables = std::uniform_int_distribution<int>(2, 3)(rng_);
      std::string w;
      for (int k = 0; k < syllables; ++k) {
        w += onsets[pick(14)];
        w += vowels[pick(5)];
      }
      w += codas[pick(6)];
      w = capitalize(w);
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::size_t pick(int n) { return static_cast<std::size_t>(std::uniform_int_distribution<int>(0, n - 1)(rng_)); }
  Rng& rng_;
  std::set<std::string> used_;
};

struct Mention {
  std::vector<std::string> words;
  EntityId entity;
  std::string type;
};

// Builds tokens, heads and gold spans; the mention's last token heads it.
class SentenceBuilder {
 public:
  int add(const std::string& word, const std::string& tag, int head) {
    s_.tokens.push_back({static_cast<int>(s_.tokens.size()), word, tag, head});
    return static_cast<int>(s_.tokens.size()) - 1;
  }

  // Attaches to `head` later via set_head when the head index is not yet known.
  int add_mention(const Mention& m) {
    int start = static_cast<int>(s_.tokens.size());
    int last = start + static_cast<int>(m.words.size()) - 1;
    for (std::size_t k = 0; k < m.words.size(); ++k) add(m.words[k], "NNP", k + 1 < m.words.size() ? last : -1);
    Span sp;
    sp.start = start;
    sp.end = last;
    sp.type = m.type;
    sp.entity = m.entity;
    s_.spans.push_back(sp);
    return last;
  }

  void set_head(int token, int head) { s_.tokens[static_cast<std::size_t>(token)].head = head; }

  Sentence finish() {
    for (auto& sp : s_.spans) sp.surface = s_.surface(sp.start, sp.end);
    std::sort(s_.spans.begin(), s_.spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
    return std::move(s_);
  }

 private:
  Sentence s_;
};

}  // namespace

void SynthSpec::validate() const {
  if (entities < 2 || relations < 1 || triples < 1 || sentences_per_triple < 1) {
    throw Error("synth: counts must be positive");
  }
  if (types < 2) throw Error("synth: need at least two entity types");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(distractor_rate) || distractor_rate >= 1.0 || !unit(hidden_fraction) || !unit(heldout_fraction) ||
      !unit(ambiguous_fraction) || !unit(alias_rate)) {
    throw Error("synth: rates must lie in [0, 1] (distractor_rate below 1)");
  }
}

bool SynthFixture::holds(const Triple& t) const {
  return kb.contains(t) || std::find(hidden.begin(), hidden.end(), t) != hidden.end();
}

SynthFixture synth_fixture(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth"));
  NameMaker names(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SynthFixture fx;

  std::vector<std::string> type_names;
  for (int t = 0; t < spec.types; ++t) {
    type_names.push_back(t < 5 ? kTypeNames[t] : "Type" + std::to_string(t));
  }

  // Entities: type by index; ambiguity groups share a family word across types.
  std::vector<Entity> entities(static_cast<std::size_t>(spec.entities));
  std::vector<std::vector<int>> by_type(static_cast<std::size_t>(spec.types));
  for (int i = 0; i < spec.entities; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "Q%04d", i);
    entities[i].id = id;
    entities[i].type = type_names[static_cast<std::size_t>(i % spec.types)];
    by_type[static_cast<std::size_t>(i % spec.types)].push_back(i);
  }
  std::vector<int> order(static_cast<std::size_t>(spec.entities));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_ambiguous = static_cast<std::size_t>(std::llround(spec.ambiguous_fraction * spec.entities));
  std::vector<std::string> family(static_cast<std::size_t>(spec.entities));
  {
    // Greedy grouping: walk the ambiguous pool and open a new group whenever
    // the current one is full or already holds the entity's type.
    std::vector<int> group;
    std::set<std::string> group_types;
    int target = 2;
    auto close = [&]() {
      if (group.empty()) return;
      std::string f = names.next();
      for (int e : group) family[static_cast<std::size_t>(e)] = f;
      group.clear();
      group_types.clear();
      target = std::uniform_int_distribution<int>(2, 3)(rng);
    };
    for (std::size_t k = 0; k < n_ambiguous; ++k) {
      int e = order[k];
      if (static_cast<int>(group.size()) >= target || group_types.count(entities[e].type)) close();
      group.push_back(e);
      group_types.insert(entities[e].type);
    }
    close();
  }
  for (int i = 0; i < spec.entities; ++i) {
    auto& f = family[static_cast<std::size_t>(i)];
    if (f.empty()) f = names.next();
    entities[i].canonical_name = names.next() + " " + f;
    entities[i].aliases = {entities[i].canonical_name, f};
  }

  // Relation signatures and cue phrases.
  for (int r = 0; r < spec.relations; ++r) {
    RelationSignature sig;
    int st = r % spec.types;
    int ot = (3 * r + 1) % spec.types;
    if (ot == st && spec.types > 1) ot = (ot + 1) % spec.types;
    sig.subject_type = type_names[static_cast<std::size_t>(st)];
    sig.object_type = type_names[static_cast<std::size_t>(ot)];
    sig.cue = r < 12 ? split_ws(kCues[r]) : std::vector<std::string>{names.next() + "ed", "with"};
    for (auto& w : sig.cue) w[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(w[0])));
    for (const auto& w : sig.cue) sig.relation += (sig.relation.empty() ? "" : "_") + w;
    fx.signatures.push_back(sig);
  }

  // Triples consistent with the signatures.
  std::set<Triple> world;
  int attempts = 0;
  while (static_cast<int>(world.size()) < spec.triples) {
    if (++attempts > spec.triples * 1000) throw Error("synth: cannot place the requested number of triples");
    const auto& sig =
        fx.signatures[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, spec.relations - 1)(rng))];
    auto type_index = [&](const std::string& t) {
      return static_cast<std::size_t>(std::find(type_names.begin(), type_names.end(), t) - type_names.begin());
    };
    const auto& subs = by_type[type_index(sig.subject_type)];
    const auto& objs = by_type[type_index(sig.object_type)];
    if (subs.empty() || objs.empty()) continue;
    int s =
        subs[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, static_cast<int>(subs.size()) - 1)(rng))];
    int o =
        objs[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, static_cast<int>(objs.size()) - 1)(rng))];
    if (s == o) continue;
    world.insert({entities[s].id, sig.relation, entities[o].id});
  }
  std::vector<Triple> all(world.begin(), world.end());
  std::shuffle(all.begin(), all.end(), rng);
  auto n_hidden = static_cast<std::size_t>(std::llround(spec.hidden_fraction * static_cast<double>(all.size())));
  fx.hidden.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_hidden));
  std::sort(fx.hidden.begin(), fx.hidden.end());
  std::vector<Triple> observed(all.begin() + static_cast<std::ptrdiff_t>(n_hidden), all.end());
  std::sort(observed.begin(), observed.end());

  for (const auto& e : entities) fx.kb.add_entity(e);
  fx.kb.add_triples(observed);

  std::map<EntityId, const Entity*> by_id;
  for (const auto& e : entities) by_id[e.id] = &e;
  auto mention = [&](const EntityId& id) {
    const Entity& e = *by_id.at(id);
    bool alias = unit(rng) < spec.alias_rate;
    return Mention{split_ws(alias ? e.aliases[1] : e.canonical_name), e.id, e.type};
  };
  std::map<RelationId, const RelationSignature*> sig_of;
  for (const auto& s : fx.signatures) sig_of[s.relation] = &s;

  auto realize = [&](const Triple& t) {
    SentenceBuilder b;
    const auto& cue = sig_of.at(t.relation)->cue;
    std::vector<int> prefix;
    if (unit(rng) < 0.3) {
      const auto& f = kPrefixes[std::uniform_int_distribution<int>(0, 3)(rng)];
      for (std::size_t k = 0; k < f.words.size(); ++k) prefix.push_back(b.add(f.words[k], f.tags[k], -1));
    }
    int x_head = b.add_mention(mention(t.subject));
    int root = -1, last_cue = -1;
    for (std::size_t k = 0; k < cue.size(); ++k) {
      const bool prep = kPrepositions.count(cue[k]) != 0;
      last_cue = b.add(cue[k], k == 0 ? "VBD" : prep ? "IN" : "VBN", root);
      if (k == 0) root = last_cue;
    }
    int y_head = b.add_mention(mention(t.object));
    b.set_head(x_head, root);
    b.set_head(y_head, last_cue == root ? root : last_cue);
    for (int p : prefix) b.set_head(p, root);
    if (unit(rng) < 0.4) {
      const auto& f = kSuffixes[std::uniform_int_distribution<int>(0, 3)(rng)];
      int first = -1;
      for (std::size_t k = 0; k < f.words.size(); ++k) {
        int tok = b.add(f.words[k], f.tags[k], first < 0 ? root : first);
        if (first < 0) first = tok;
      }
    }
    b.add(".", ".", root);
    return b.finish();
  };

  auto distract = [&](const EntityId& a, const EntityId& c) {
    SentenceBuilder b;
    const auto& tpl = kDistractors[std::uniform_int_distribution<int>(0, 3)(rng)];
    int root = -1;
    std::vector<int> attach;
    for (std::size_t k = 0; k < tpl.words.size(); ++k) {
      if (tpl.words[k] == "$X" || tpl.words[k] == "$Y") {
        attach.push_back(b.add_mention(mention(tpl.words[k] == "$X" ? a : c)));
      } else {
        int tok = b.add(tpl.words[k], tpl.tags[k], -1);
        if (static_cast<int>(k) == tpl.root) {
          root = tok;
        } else {
          attach.push_back(tok);
        }
      }
    }
    for (int t : attach) b.set_head(t, root);
    b.add(".", ".", root);
    return b.finish();
  };

  // Realizations: hidden facts only appear in held-out text.
  std::vector<Sentence> train_gold, heldout_gold;
  std::set<Triple> hidden_set(fx.hidden.begin(), fx.hidden.end());
  int relation_sentences = 0;
  for (const auto& t : all) {
    for (int k = 0; k < spec.sentences_per_triple; ++k) {
      auto s = realize(t);
      ++relation_sentences;
      if (hidden_set.count(t) || unit(rng) < spec.heldout_fraction) {
        heldout_gold.push_back(std::move(s));
      } else {
        train_gold.push_back(std::move(s));
      }
    }
  }
  auto n_distractors =
      static_cast<int>(std::llround(spec.distractor_rate * relation_sentences / (1.0 - spec.distractor_rate)));
  for (int k = 0; k < n_distractors;) {
    int a = std::uniform_int_distribution<int>(0, spec.entities - 1)(rng);
    int c = std::uniform_int_distribution<int>(0, spec.entities - 1)(rng);
    const auto& ea = entities[static_cast<std::size_t>(a)].id;
    const auto& ec = entities[static_cast<std::size_t>(c)].id;
    bool related = a == c;
    for (const auto& t : all)
      related = related || (t.subject == ea && t.object == ec) || (t.subject == ec && t.object == ea);
    if (related) continue;
    auto s = distract(ea, ec);
    (unit(rng) < spec.heldout_fraction ? heldout_gold : train_gold).push_back(std::move(s));
    ++k;
  }

  auto finalize = [&](std::vector<Sentence>& gold, std::vector<Sentence>& raw, const char* prefix) {
    std::shuffle(gold.begin(), gold.end(), rng);
    for (std::size_t k = 0; k < gold.size(); ++k) {
      char id[24];
      std::snprintf(id, sizeof id, "%s%05zu", prefix, k);
      gold[k].id = id;
      validate_sentence(gold[k]);
      Sentence r = gold[k];
      r.spans.clear();
      raw.push_back(std::move(r));
    }
  };
  finalize(train_gold, fx.corpus, "s");
  finalize(heldout_gold, fx.heldout, "h");
  fx.gold_corpus = std::move(train_gold);
  fx.gold_heldout = std::move(heldout_gold);

  DistantSupervisionConfig ds;
  ds.seed = spec.seed;
  fx.gold_bags = distant_supervision(fx.gold_corpus, fx.kb, ds);
  return fx;
}

SynthFiles write_synth_fixture(const SynthFixture& fx, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthFiles f{dir / "entities.tsv",     dir / "triples.tsv",     dir / "hidden_triples.tsv",
               dir / "corpus.jsonl",     dir / "heldout.jsonl",   dir / "gold_corpus.jsonl",
               dir / "gold_links.jsonl", dir / "gold_bags.jsonl", dir / "pipeline.ini"};
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(f.entities);
    fx.kb.write_entities(out);
  }
  {
    auto out = open(f.triples);
    fx.kb.write_triples(out);
  }
  {
    auto out = open(f.hidden_triples);
    for (const auto& t : fx.hidden) out << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
  }
  write_corpus(f.corpus, fx.corpus);
  write_corpus(f.heldout, fx.heldout);
  write_corpus(f.gold_corpus, fx.gold_corpus);
  write_corpus(f.gold_links, fx.gold_heldout);
  write_bags(f.gold_bags, fx.gold_bags);
  {
    auto out = open(f.config);
    out << "# Synthetic fixture; paths are relative to this file.\n"
           "[paths]\n"
           "entities = entities.tsv\n"
           "triples = triples.tsv\n"
           "corpus = corpus.jsonl\n"
           "heldout = heldout.jsonl\n"
           "gold_links = gold_links.jsonl\n"
           "hidden_triples = hidden_triples.tsv\n"
           "\n"
           "# Every extra nearest-neighbour candidate adds chances of a spurious KB\n"
           "# connection in sub-graph counting; one keeps link precision high here.\n"
           "[link]\n"
           "k = 1\n";
  }
  return f;
}

}  // namespace kbc
