#include "kbc/pipeline.hpp"

#include <openssl/evp.h>

#include <Eigen/Core>
#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "kbc/text_util.hpp"

namespace kbc {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---- stages -----------------------------------------------------------------

namespace {

const std::vector<std::pair<Stage, const char*>> kStageNames = {
    {Stage::kIngest, "ingest"},    {Stage::kEmbeddings, "embeddings"}, {Stage::kBootstrap, "bootstrap"},
    {Stage::kTrainEl, "train-el"}, {Stage::kGenBags, "gen-bags"},      {Stage::kTrainRe, "train-re"},
    {Stage::kExtract, "extract"},  {Stage::kValidate, "validate"},     {Stage::kEnrich, "enrich"},
    {Stage::kEval, "eval"}};

}  // namespace

const char* to_string(Stage s) {
  for (const auto& [stage, name] : kStageNames) {
    if (stage == s) return name;
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (const auto& [stage, name] : kStageNames) {
    if (s == name) return stage;
  }
  throw Error("unknown stage '" + s + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = [] {
    std::vector<Stage> out;
    for (const auto& p : kStageNames) out.push_back(p.first);
    return out;
  }();
  return stages;
}

PipelineError::PipelineError(Stage stage, const std::string& cause)
    : Error(std::string("stage '") + to_string(stage) + "' failed: " + cause), stage_(stage) {}

// ---- config -----------------------------------------------------------------

namespace {

void parse_value(const std::string& v, int& out) {
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw Error("expected an integer, got '" + v + "'");
}

void parse_value(const std::string& v, std::uint64_t& out) {
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw Error("expected a non-negative integer, got '" + v + "'");
  }
}

void parse_value(const std::string& v, double& out) {
  std::size_t used = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw Error("expected a number, got '" + v + "'");
}

void parse_value(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
  } else if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
  } else {
    throw Error("expected a boolean, got '" + v + "'");
  }
}

void parse_value(const std::string& v, fs::path& out) { out = v; }

void parse_value(const std::string& v, AttentionAxis& out) {
  if (v == "tokens") {
    out = AttentionAxis::kTokens;
  } else if (v == "features") {
    out = AttentionAxis::kFeatures;
  } else {
    throw Error("expected tokens or features, got '" + v + "'");
  }
}

void parse_value(const std::string& v, SdpAnchor& out) {
  if (v == "first") {
    out = SdpAnchor::kFirst;
  } else if (v == "last") {
    out = SdpAnchor::kLast;
  } else {
    throw Error("expected first or last, got '" + v + "'");
  }
}

std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const fs::path& v) { return v.string(); }
std::string format_value(AttentionAxis v) { return v == AttentionAxis::kTokens ? "tokens" : "features"; }
std::string format_value(SdpAnchor v) { return v == SdpAnchor::kFirst ? "first" : "last"; }
std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Ref>
Field field(std::string key, Ref ref) {
  return {std::move(key), [ref](PipelineConfig& c, const std::string& v) { parse_value(v, ref(c)); },
          [ref](const PipelineConfig& c) { return format_value(ref(const_cast<PipelineConfig&>(c))); }};
}

#define KBC_FIELD(key, expr) field(key, [](PipelineConfig& c) -> auto& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      KBC_FIELD("paths.entities", c.entities),
      KBC_FIELD("paths.triples", c.triples),
      KBC_FIELD("paths.corpus", c.corpus),
      KBC_FIELD("paths.heldout", c.heldout),
      KBC_FIELD("paths.gold_links", c.gold_links),
      KBC_FIELD("paths.hidden_triples", c.hidden_triples),
      KBC_FIELD("paths.output", c.output),
      KBC_FIELD("run.seed", c.seed),
      KBC_FIELD("run.threads", c.threads),
      KBC_FIELD("kb.directed_connections", c.kb.directed_connections),
      KBC_FIELD("kb.allow_reflexive", c.kb.allow_reflexive),
      KBC_FIELD("embeddings.dim", c.embeddings.dim),
      KBC_FIELD("embeddings.epochs", c.embeddings.epochs),
      KBC_FIELD("embeddings.learning_rate", c.embeddings.learning_rate),
      KBC_FIELD("embeddings.negatives", c.embeddings.negatives),
      KBC_FIELD("embeddings.window", c.embeddings.window),
      KBC_FIELD("embeddings.interleave_kb_objective", c.embeddings.interleave_kb_objective),
      KBC_FIELD("bootstrap.max_rounds", c.bootstrap.max_rounds),
      KBC_FIELD("bootstrap.k", c.bootstrap.k),
      KBC_FIELD("bootstrap.count_multiplicity", c.bootstrap.subgraph.count_multiplicity),
      KBC_FIELD("bootstrap.classifier_hash_bits", c.bootstrap.classifier.hash_bits),
      KBC_FIELD("bootstrap.classifier_epochs", c.bootstrap.classifier.epochs),
      KBC_FIELD("bootstrap.classifier_learning_rate", c.bootstrap.classifier.learning_rate),
      KBC_FIELD("bootstrap.classifier_l2", c.bootstrap.classifier.l2),
      KBC_FIELD("bootstrap.classifier_max_ngram", c.bootstrap.classifier.max_ngram),
      KBC_FIELD("linker.hidden", c.linker.hidden),
      KBC_FIELD("linker.mlp_hidden", c.linker.mlp_hidden),
      KBC_FIELD("linker.margin", c.linker.margin),
      KBC_FIELD("linker.epochs", c.linker.epochs),
      KBC_FIELD("linker.learning_rate", c.linker.learning_rate),
      KBC_FIELD("linker.k", c.linker.k),
      KBC_FIELD("link.k", c.link.k),
      KBC_FIELD("link.count_multiplicity", c.link.subgraph.count_multiplicity),
      KBC_FIELD("bags.max_bag_size", c.bags.max_bag_size),
      KBC_FIELD("bags.na_ratio", c.bags.na_ratio),
      KBC_FIELD("bags.train", c.split[0]),
      KBC_FIELD("bags.valid", c.split[1]),
      KBC_FIELD("bags.test", c.split[2]),
      KBC_FIELD("re.word_dim", c.re.word_dim),
      KBC_FIELD("re.position_dim", c.re.position_dim),
      KBC_FIELD("re.type_dim", c.re.type_dim),
      KBC_FIELD("re.tag_dim", c.re.tag_dim),
      KBC_FIELD("re.hidden", c.re.hidden),
      KBC_FIELD("re.conv_width", c.re.conv_width),
      KBC_FIELD("re.gcn_layers", c.re.gcn_layers),
      KBC_FIELD("re.margin", c.re.margin),
      KBC_FIELD("re.na_weight", c.re.na_weight),
      KBC_FIELD("re.threshold_init", c.re.threshold_init),
      KBC_FIELD("re.max_position", c.re.max_position),
      KBC_FIELD("re.learning_rate", c.re.learning_rate),
      KBC_FIELD("re.epochs", c.re.epochs),
      KBC_FIELD("re.batch_size", c.re.batch_size),
      KBC_FIELD("re.max_bag_size", c.re.max_bag_size),
      KBC_FIELD("re.attention_axis", c.re.attention_axis),
      KBC_FIELD("re.sdp_anchor", c.re.sdp.anchor),
      KBC_FIELD("re.sdp_include_internal", c.re.sdp.include_internal),
      KBC_FIELD("re.use_embeddings", c.re_use_embeddings),
      KBC_FIELD("stages.extract", c.run_extract),
      KBC_FIELD("stages.enrich", c.run_enrich),
      KBC_FIELD("stages.eval", c.run_eval),
  };
  return table;
}

#undef KBC_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw Error("unknown config key '" + key + "'");
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
  try {
    find_field(key).set(*this, value);
  } catch (const Error& e) {
    throw Error("config " + key + ": " + e.what());
  }
}

std::string PipelineConfig::get(const std::string& key) const { return find_field(key).get(*this); }

std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

PipelineConfig PipelineConfig::load(const fs::path& ini_file) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(ini_file.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("cannot read config: " + std::string(e.what()));
  }
  PipelineConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error("config " + ini_file.string() + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
  const fs::path base = ini_file.parent_path();
  for (fs::path* p : {&cfg.entities, &cfg.triples, &cfg.corpus, &cfg.heldout, &cfg.gold_links, &cfg.hidden_triples}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  if (tree.get_child_optional("paths.output") && cfg.output.is_relative()) cfg.output = base / cfg.output;
  return cfg;
}

void PipelineConfig::propagate_seed() {
  embeddings.seed = derive_seed(seed, "embeddings");
  bootstrap.classifier.seed = derive_seed(seed, "span-classifier");
  linker.seed = derive_seed(seed, "context-linker");
  bags.seed = derive_seed(seed, "bags");
  re.seed = derive_seed(seed, "relation-model");
}

void PipelineConfig::validate() const {
  if (entities.empty() || triples.empty()) throw Error("config: paths.entities and paths.triples are required");
  if (corpus.empty()) throw Error("config: paths.corpus is required");
  if (output.empty()) throw Error("config: paths.output is empty");
  if (threads < 1) throw Error("config: run.threads must be >= 1");
  embeddings.validate();
  re.validate();
}

// ---- hashing ----------------------------------------------------------------

namespace {

std::string hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 15];
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

std::string file_sha256(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.finish();
}

// ---- artifacts --------------------------------------------------------------

Artifacts::Artifacts(fs::path r) : root(std::move(r)) {
  vectors = dir(Stage::kEmbeddings) / "vectors.txt";
  embedding_trace = dir(Stage::kEmbeddings) / "trace.json";
  linked = dir(Stage::kBootstrap) / "linked.jsonl";
  recognizer = dir(Stage::kBootstrap) / "recognizer.ckpt";
  bootstrap_report = dir(Stage::kBootstrap) / "report.json";
  context_linker = dir(Stage::kTrainEl) / "context_linker.ckpt";
  linker_trace = dir(Stage::kTrainEl) / "trace.json";
  bags = dir(Stage::kGenBags) / "bags.jsonl";
  train_bags = dir(Stage::kGenBags) / "train.jsonl";
  valid_bags = dir(Stage::kGenBags) / "valid.jsonl";
  test_bags = dir(Stage::kGenBags) / "test.jsonl";
  re_model = dir(Stage::kTrainRe) / "relation_model.ckpt";
  re_trace = dir(Stage::kTrainRe) / "trace.json";
  heldout_linked = dir(Stage::kExtract) / "heldout_linked.jsonl";
  extracted = dir(Stage::kExtract) / "extracted.tsv";
  accepted = dir(Stage::kValidate) / "accepted.tsv";
  rejected = dir(Stage::kValidate) / "rejected.tsv";
  enriched_entities = dir(Stage::kEnrich) / "entities.tsv";
  enriched_triples = dir(Stage::kEnrich) / "triples.tsv";
  provenance = dir(Stage::kEnrich) / "provenance.tsv";
  metrics = dir(Stage::kEval) / "metrics.json";
  kb_stats = dir(Stage::kIngest) / "kb_stats.json";
  corpus_stats = dir(Stage::kIngest) / "corpus_stats.json";
}

fs::path Artifacts::dir(Stage s) const { return root / to_string(s); }

// ---- stage runner -----------------------------------------------------------

namespace {

constexpr const char* kStageFormat = "kbc-stage 1";

fs::path summary_file(const Artifacts& a, Stage s) { return a.dir(s) / "summary.json"; }

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  return json::parse(in);
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Runner {
 public:
  Runner(const PipelineConfig& cfg, PipelineResult& result) : cfg_(cfg), art_(cfg.output), result_(result) {}

  const Artifacts& artifacts() const { return art_; }

  // Runs `body` unless the stage's key and outputs are already in place.
  void stage(Stage s, const std::vector<std::string>& sections, const std::vector<fs::path>& inputs,
             std::vector<fs::path> outputs, const std::function<json()>& body) {
    const fs::path dir = art_.dir(s);
    outputs.push_back(summary_file(art_, s));
    std::string key;
    try {
      key = stage_key(s, sections, inputs);
    } catch (const std::exception& e) {
      throw PipelineError(s, e.what());
    }
    const fs::path key_file = dir / ".key";
    bool cached = fs::exists(key_file) && read_text(key_file) == key;
    for (const auto& o : outputs) cached = cached && fs::exists(o);
    if (cached) {
      result_.cached.push_back(s);
      return;
    }
    fs::create_directories(dir);
    fs::remove(key_file);
    try {
      json summary = body();
      write_json(summary_file(art_, s), summary);
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(s, e.what());
    }
    std::ofstream(key_file, std::ios::binary) << key;
    result_.executed.push_back(s);
  }

 private:
  std::string stage_key(Stage s, const std::vector<std::string>& sections, const std::vector<fs::path>& inputs) const {
    std::ostringstream text;
    text << kStageFormat << '\n' << to_string(s) << '\n';
    for (const auto& key : PipelineConfig::keys()) {
      if (key.rfind("paths.", 0) == 0) continue;  // file identity is by content below
      bool relevant = key == "run.seed" || key.rfind("kb.", 0) == 0;
      for (const auto& sec : sections) relevant = relevant || key.rfind(sec + ".", 0) == 0;
      if (relevant) text << key << '=' << cfg_.get(key) << '\n';
    }
    for (const auto& in : inputs) {
      if (in.empty()) {
        text << "input <none>\n";
      } else {
        if (!fs::exists(in)) throw Error("input " + in.string() + " does not exist");
        text << "input " << in.filename().string() << ' ' << file_sha256(in) << '\n';
      }
    }
    return sha256_hex(text.str());
  }

  const PipelineConfig& cfg_;
  Artifacts art_;
  PipelineResult& result_;
};

KnowledgeBase load_kb(const PipelineConfig& cfg) { return KnowledgeBase::load(cfg.entities, cfg.triples, cfg.kb); }

std::vector<Sentence> load_raw(const fs::path& file) {
  auto sentences = ingest_corpus(file);
  for (auto& s : sentences) s.spans.clear();
  return sentences;
}

std::vector<Triple> read_triple_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::vector<Triple> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3) throw Error(file.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
    out.push_back({cols[0], cols[1], cols[2]});
  }
  return out;
}

TrainableSpanClassifier load_recognizer(const KnowledgeBase& kb, const PipelineConfig& cfg, const Artifacts& a) {
  TrainableSpanClassifier rec(kb, cfg.bootstrap.classifier);
  rec.load_checkpoint(nn::Checkpoint::load(a.recognizer));
  return rec;
}

std::map<std::string, const Sentence*> index_by_id(const std::vector<Sentence>& sentences) {
  std::map<std::string, const Sentence*> out;
  for (const auto& s : sentences) out[s.id] = &s;
  return out;
}

json loss_tail(const std::vector<double>& losses) { return losses.empty() ? json(nullptr) : json(losses.back()); }

// Sentences whose gazetteer matches name exactly one entity get that link;
// they seed the joint word/entity space before any model exists.
std::vector<Sentence> unambiguous_links(const std::vector<Sentence>& raw, const KnowledgeBase& kb) {
  Gazetteer gazetteer(kb);
  std::vector<Sentence> out;
  for (const auto& s : raw) {
    Sentence t = s;
    for (auto sp : longest_ngram_match(s, gazetteer)) {
      const auto& ents = gazetteer.lookup(sp.surface);
      if (ents.size() != 1) continue;
      sp.entity = ents.front();
      sp.type = kb.type_of(ents.front());
      t.spans.push_back(std::move(sp));
    }
    if (!t.spans.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(PipelineConfig cfg, Stage until) {
  cfg.validate();
  cfg.propagate_seed();
  Eigen::setNbThreads(cfg.threads);
  PipelineResult result;
  Runner runner(cfg, result);
  const Artifacts& a = runner.artifacts();
  fs::create_directories(a.root);
  auto reached = [&](Stage s) { return static_cast<int>(s) <= static_cast<int>(until); };
  auto enabled = [&](Stage s) {
    switch (s) {
      case Stage::kExtract:
      case Stage::kValidate:
        return cfg.run_extract;
      case Stage::kEnrich:
        return cfg.run_extract && cfg.run_enrich;
      case Stage::kEval:
        return cfg.run_eval;
      default:
        return true;
    }
  };
  const std::vector<fs::path> kb_inputs = {cfg.entities, cfg.triples};
  auto with = [](std::vector<fs::path> base, std::initializer_list<fs::path> more) {
    base.insert(base.end(), more.begin(), more.end());
    return base;
  };

  for (Stage s : all_stages()) {
    if (!reached(s)) break;
    if (!enabled(s)) continue;
    switch (s) {
      case Stage::kIngest: {
        runner.stage(Stage::kIngest, {}, with(kb_inputs, {cfg.corpus, cfg.heldout}), {a.kb_stats, a.corpus_stats}, [&] {
          auto kb = load_kb(cfg);
          json kb_stats = {{"entities", kb.entity_count()},
                           {"triples", kb.triple_count()},
                           {"relations", kb.relation_count()},
                           {"types", kb.entity_types().size()}};
          auto corpus = ingest_corpus(cfg.corpus);
          long long tokens = 0;
          for (const auto& s : corpus) tokens += s.size();
          json corpus_stats = {{"sentences", corpus.size()}, {"tokens", tokens}};
          corpus_stats["heldout_sentences"] =
              cfg.heldout.empty() ? json(nullptr) : json(ingest_corpus(cfg.heldout).size());
          write_json(a.kb_stats, kb_stats);
          write_json(a.corpus_stats, corpus_stats);
          return json{{"kb", kb_stats}, {"corpus", corpus_stats}};
        });
        break;
      }
      case Stage::kEmbeddings: {
        runner.stage(Stage::kEmbeddings, {"embeddings"}, with(kb_inputs, {cfg.corpus}), {a.vectors, a.embedding_trace},
                     [&] {
                       auto kb = load_kb(cfg);
                       TrainingTrace node_trace, joint_trace;
                       auto table = train_node_embeddings(kb, cfg.embeddings, &node_trace);
                       auto seeded = unambiguous_links(load_raw(cfg.corpus), kb);
                       table = train_joint_embeddings(seeded, kb, table, cfg.embeddings, &joint_trace);
                       table.save(a.vectors);
                       write_json(a.embedding_trace, {{"node_loss", node_trace.epoch_loss},
                                                      {"joint_loss", joint_trace.epoch_loss},
                                                      {"isolated_entities", node_trace.isolated_entities}});
                       return json{{"symbols", table.size()},
                                   {"dim", table.dim()},
                                   {"seed_sentences", seeded.size()},
                                   {"final_joint_loss", loss_tail(joint_trace.epoch_loss)}};
                     });
        break;
      }
      case Stage::kBootstrap: {
        runner.stage(Stage::kBootstrap, {"bootstrap"}, with(kb_inputs, {cfg.corpus, a.vectors}),
                     {a.linked, a.recognizer, a.bootstrap_report}, [&] {
                       auto kb = load_kb(cfg);
                       auto table = EmbeddingTable::load(a.vectors);
                       auto result = bootstrap_linked_corpus(load_raw(cfg.corpus), kb, table, cfg.bootstrap);
                       if (!result.recognizer) throw Error("no round produced a recognizer");
                       write_corpus(a.linked, result.corpus);
                       result.recognizer->to_checkpoint().save(a.recognizer);
                       std::ofstream report(a.bootstrap_report);
                       write_generation_report(report, result);
                       std::vector<int> counts;
                       for (const auto& r : result.rounds) counts.push_back(r.extracted_count);
                       return json{{"round_counts", counts},
                                   {"best_round", result.best_round},
                                   {"sentences", result.corpus.size()}};
                     });
        break;
      }
      case Stage::kTrainEl: {
        runner.stage(Stage::kTrainEl, {"linker"}, with(kb_inputs, {a.linked, a.vectors}),
                     {a.context_linker, a.linker_trace}, [&] {
                       auto kb = load_kb(cfg);
                       auto table = EmbeddingTable::load(a.vectors);
                       ContextTrainingTrace trace;
                       auto model = train_context_linker(ingest_corpus(a.linked), kb, table, cfg.linker, &trace);
                       model.to_checkpoint().save(a.context_linker);
                       write_json(a.linker_trace, {{"epoch_loss", trace.epoch_loss}, {"items", trace.items}});
                       return json{{"items", trace.items}, {"final_loss", loss_tail(trace.epoch_loss)}};
                     });
        break;
      }
      case Stage::kGenBags: {
        runner.stage(Stage::kGenBags, {"bags"}, with(kb_inputs, {a.linked}),
                     {a.bags, a.train_bags, a.valid_bags, a.test_bags}, [&] {
                       auto kb = load_kb(cfg);
                       auto bags = distant_supervision(ingest_corpus(a.linked), kb, cfg.bags);
                       auto split = split_dataset(bags, cfg.split, cfg.bags.seed);
                       write_bags(a.bags, bags);
                       write_bags(a.train_bags, split.train);
                       write_bags(a.valid_bags, split.valid);
                       write_bags(a.test_bags, split.test);
                       auto positive = std::count_if(bags.begin(), bags.end(), [](const Bag& b) { return !b.is_na(); });
                       return json{{"bags", bags.size()},
                                   {"positive", positive},
                                   {"na", static_cast<long long>(bags.size()) - positive},
                                   {"train", split.train.size()},
                                   {"valid", split.valid.size()},
                                   {"test", split.test.size()}};
                     });
        break;
      }
      case Stage::kTrainRe: {
        runner.stage(Stage::kTrainRe, {"re"}, with(kb_inputs, {a.linked, a.train_bags, a.valid_bags, a.vectors}),
                     {a.re_model, a.re_trace}, [&] {
                       auto kb = load_kb(cfg);
                       auto linked = ingest_corpus(a.linked);
                       auto by_id = index_by_id(linked);
                       EmbeddingTable table;
                       const EmbeddingTable* words = nullptr;
                       if (cfg.re_use_embeddings) {
                         table = EmbeddingTable::load(a.vectors);
                         words = &table;
                       }
                       RelationModel model(cfg.re, Vocabularies::build(linked, kb, words), words);
                       auto train = prepare_bags(model, read_bags(a.train_bags), by_id, kb);
                       auto valid = prepare_bags(model, read_bags(a.valid_bags), by_id, kb);
                       ReTrainingTrace trace;
                       model = train_relation_model(train, valid, std::move(model), &trace);
                       model.to_checkpoint().save(a.re_model);
                       write_json(a.re_trace, {{"epoch_loss", trace.epoch_loss},
                                               {"valid_f1", trace.valid_f1},
                                               {"best_epoch", trace.best_epoch}});
                       return json{{"train_bags", train.size()},
                                   {"valid_bags", valid.size()},
                                   {"best_epoch", trace.best_epoch},
                                   {"final_loss", loss_tail(trace.epoch_loss)},
                                   {"threshold", model.threshold()}};
                     });
        break;
      }
      case Stage::kExtract: {
        if (cfg.heldout.empty()) throw PipelineError(Stage::kExtract, "paths.heldout is not set");
        runner.stage(Stage::kExtract, {"link"},
                     with(kb_inputs, {cfg.heldout, a.vectors, a.recognizer, a.context_linker, a.re_model}),
                     {a.heldout_linked, a.extracted}, [&] {
                       auto kb = load_kb(cfg);
                       auto table = EmbeddingTable::load(a.vectors);
                       auto recognizer = load_recognizer(kb, cfg, a);
                       auto linker = ContextLinkerModel::from_checkpoint(nn::Checkpoint::load(a.context_linker));
                       auto model = RelationModel::from_checkpoint(nn::Checkpoint::load(a.re_model));
                       std::vector<Sentence> linked;
                       long long spans = 0;
                       for (const auto& s : load_raw(cfg.heldout)) {
                         linked.push_back(apply_links(s, link(s, kb, table, linker, recognizer, cfg.link)));
                         spans += static_cast<long long>(linked.back().spans.size());
                       }
                       write_corpus(a.heldout_linked, linked);
                       auto ex = extract(linked, kb, model, kb.build_fact_type_templates());
                       std::vector<ExtractedTriple> all = ex.accepted;
                       for (const auto& r : ex.rejected) all.push_back(r.extracted);
                       std::sort(all.begin(), all.end(), [](const ExtractedTriple& x, const ExtractedTriple& y) {
                         return x.triple < y.triple;
                       });
                       write_triples_tsv(a.extracted, all);
                       return json{{"sentences", linked.size()}, {"linked_spans", spans}, {"extracted", all.size()}};
                     });
        break;
      }
      case Stage::kValidate: {
        runner.stage(Stage::kValidate, {}, with(kb_inputs, {a.extracted}), {a.accepted, a.rejected}, [&] {
          auto kb = load_kb(cfg);
          auto tmpl = kb.build_fact_type_templates();
          std::vector<ExtractedTriple> accepted;
          std::vector<RejectedTriple> rejected;
          std::map<std::string, int> reasons;
          for (auto& t : read_triples_tsv(a.extracted)) {
            Verdict v = validate_triple(t.triple, kb, tmpl);
            if (v == Verdict::kAccept) {
              accepted.push_back(std::move(t));
            } else {
              ++reasons[to_string(v)];
              rejected.push_back({std::move(t), v});
            }
          }
          write_triples_tsv(a.accepted, accepted);
          write_rejected_tsv(a.rejected, rejected);
          return json{{"accepted", accepted.size()}, {"rejected", rejected.size()}, {"reasons", reasons}};
        });
        break;
      }
      case Stage::kEnrich: {
        runner.stage(Stage::kEnrich, {}, with(kb_inputs, {a.accepted}),
                     {a.enriched_entities, a.enriched_triples, a.provenance}, [&] {
                       auto kb = load_kb(cfg);
                       const auto before = kb.triple_count();
                       std::vector<ExtractedTriple> added;
                       for (auto& t : read_triples_tsv(a.accepted)) {
                         if (kb.contains(t.triple)) continue;
                         kb.add_triple(t.triple);
                         added.push_back(std::move(t));
                       }
                       std::ofstream ents(a.enriched_entities), trips(a.enriched_triples);
                       kb.write_entities(ents);
                       kb.write_triples(trips);
                       write_triples_tsv(a.provenance, added);
                       return json{{"before", before}, {"added", added.size()}, {"after", kb.triple_count()}};
                     });
        break;
      }
      case Stage::kEval: {
        std::vector<fs::path> inputs =
            with(kb_inputs,
                 {a.linked, a.bootstrap_report, a.vectors, a.recognizer, a.context_linker, a.re_model, a.test_bags,
                  a.kb_stats, a.corpus_stats, summary_file(a, Stage::kGenBags), cfg.gold_links, cfg.hidden_triples});
        const bool extracted = cfg.run_extract && fs::exists(a.accepted);
        const bool enriched = extracted && cfg.run_enrich && fs::exists(a.provenance);
        if (extracted) inputs.insert(inputs.end(), {a.extracted, a.accepted, a.rejected});
        if (enriched) inputs.push_back(a.provenance);
        runner.stage(Stage::kEval, {"link"}, inputs, {a.metrics}, [&] {
          auto kb = load_kb(cfg);
          auto table = EmbeddingTable::load(a.vectors);
          MetricsReport report;
          if (!cfg.gold_links.empty()) {
            auto gold = ingest_corpus(cfg.gold_links);
            auto linker = ContextLinkerModel::from_checkpoint(nn::Checkpoint::load(a.context_linker));
            auto recognizer = load_recognizer(kb, cfg, a);
            std::vector<std::vector<LinkDecision>> decisions;
            std::vector<std::vector<Span>> recognized;
            for (const auto& s : gold) {
              decisions.push_back(link_spans(s, s.spans, kb, table, linker, cfg.link));
              recognized.push_back(recognizer.recognize(s));
            }
            report.entity_linking = eval_entity_linker(decisions, gold);
            report.span_recognition = eval_spans(recognized, gold);
          }
          auto test = read_bags(a.test_bags);
          if (!test.empty()) {
            auto linked = ingest_corpus(a.linked);
            auto model = RelationModel::from_checkpoint(nn::Checkpoint::load(a.re_model));
            report.relation_extraction =
                evaluate_relation_model(model, prepare_bags(model, test, index_by_id(linked), kb));
          }
          if (extracted) {
            TripleMetrics t;
            auto accepted = read_triples_tsv(a.accepted);
            t.extracted = static_cast<long long>(read_triples_tsv(a.extracted).size());
            t.accepted = static_cast<long long>(accepted.size());
            t.rejected = t.extracted - t.accepted;
            if (enriched) t.added = static_cast<long long>(read_triples_tsv(a.provenance).size());
            if (!cfg.hidden_triples.empty()) {
              auto hidden = read_triple_file(cfg.hidden_triples);
              std::set<Triple> truth(hidden.begin(), hidden.end());
              for (const auto& x : accepted) t.accepted_true += truth.count(x.triple) || kb.contains(x.triple);
              if (t.accepted > 0) t.precision = static_cast<double>(t.accepted_true) / static_cast<double>(t.accepted);
            }
            report.triples = t;
          }
          auto boot = read_json(a.bootstrap_report);
          for (const auto& r : boot.at("rounds")) report.round_counts.push_back(r.at("extracted").get<int>());
          report.best_round = boot.at("best_round").get<int>();
          auto kb_stats = read_json(a.kb_stats);
          auto corpus_stats = read_json(a.corpus_stats);
          auto bag_stats = read_json(summary_file(a, Stage::kGenBags));
          report.counts = {{"kb_entities", kb_stats.at("entities").get<long long>()},
                           {"kb_triples", kb_stats.at("triples").get<long long>()},
                           {"corpus_sentences", corpus_stats.at("sentences").get<long long>()},
                           {"linked_sentences", boot.at("sentences").get<long long>()},
                           {"bags", bag_stats.at("bags").get<long long>()},
                           {"train_bags", bag_stats.at("train").get<long long>()},
                           {"valid_bags", bag_stats.at("valid").get<long long>()},
                           {"test_bags", bag_stats.at("test").get<long long>()}};
          if (!corpus_stats.at("heldout_sentences").is_null()) {
            report.counts["heldout_sentences"] = corpus_stats.at("heldout_sentences").get<long long>();
          }
          json j = report.to_json();
          write_json(a.metrics, j);
          return json{{"metrics", "metrics.json"}};
        });
        break;
      }
    }
  }

  if (reached(Stage::kEval) && cfg.run_eval && fs::exists(a.metrics)) {
    result.metrics = read_json(a.metrics);
  } else {
    json stages = json::object();
    for (Stage s : all_stages()) {
      if (reached(s) && fs::exists(summary_file(a, s))) stages[to_string(s)] = read_json(summary_file(a, s));
    }
    result.metrics = {{"stages", stages}};
  }
  write_json(a.root / "metrics.json", result.metrics);
  return result;
}

// ---- benchmark --------------------------------------------------------------

Benchmark load_benchmark(const fs::path& dir) {
  Benchmark b;
  const fs::path entities = dir / "entities.tsv", triples = dir / "triples.tsv", labeled = dir / "human_labeled.jsonl";
  for (const auto& p : {entities, triples, labeled}) {
    if (!fs::exists(p)) {
      b.message = "benchmark not installed: missing " + p.string();
      return b;
    }
  }
  try {
    b.kb = KnowledgeBase::load(entities, triples);
    std::ifstream in(labeled);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      strip_cr(line);
      if (line.empty()) continue;
      auto j = json::parse(line);
      b.sentences.push_back(sentence_from_json_line(j.at("sentence").dump()));
      auto t = j.at("triple");
      if (!t.is_array() || t.size() != 3) throw Error("line " + std::to_string(lineno) + ": triple must have 3 ids");
      b.gold.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
    }
  } catch (const std::exception& e) {
    b = Benchmark{};
    b.message = "benchmark layout not recognized under " + dir.string() + ": " + e.what();
    return b;
  }
  b.installed = true;
  b.message = "loaded " + std::to_string(b.gold.size()) + " labeled pairs";
  return b;
}

json benchmark_report(const Benchmark& bench, const Artifacts& artifacts, const PipelineConfig& cfg) {
  (void)cfg;
  if (!bench.installed) return {{"installed", false}, {"message", bench.message}};
  auto model = RelationModel::from_checkpoint(nn::Checkpoint::load(artifacts.re_model));
  // One bag per ordered pair, gold labels from every labeled triple of the pair.
  std::map<std::pair<EntityId, EntityId>, std::pair<std::vector<Instance>, std::set<RelationId>>> bags;
  for (std::size_t k = 0; k < bench.gold.size(); ++k) {
    const auto& s = bench.sentences[k];
    const auto& t = bench.gold[k];
    const Span *subj = nullptr, *obj = nullptr;
    for (const auto& sp : s.spans) {
      if (sp.entity == t.subject && !subj) subj = &sp;
      if (sp.entity == t.object && !obj) obj = &sp;
    }
    auto& bag = bags[{t.subject, t.object}];
    bag.second.insert(t.relation);
    if (subj && obj && bag.first.size() < static_cast<std::size_t>(model.config().max_bag_size)) {
      bag.first.push_back(model.prepare(s, *subj, *obj, bench.kb));
    }
  }
  std::vector<std::vector<RelationId>> predicted, gold;
  for (const auto& [pair, bag] : bags) {
    if (bag.first.empty()) continue;
    predicted.push_back(predict_bag(model, bag.first).relations);
    gold.emplace_back(bag.second.begin(), bag.second.end());
  }
  json j = {{"installed", true},
            {"labeled_pairs", bench.gold.size()},
            {"kb_triples", bench.kb.triple_count()},
            {"bags", gold.size()}};
  if (!gold.empty()) {
    auto m = eval_relation_extractor(predicted, gold);
    j["relation_extraction"] = {
        {"accuracy", m.exact_accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  }
  return j;
}

}  // namespace kbc
