#pragma once
// End-to-end orchestration. Each stage writes its artifacts under
// <output>/<stage>/ together with a ".key" file holding the SHA-256 of the
// stage name, its config subsection and the contents of every input file.
// A stage whose key matches and whose outputs all exist is skipped, so a
// config edit re-runs only the stages downstream of it.

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kbc/data_generator.hpp"
#include "kbc/embeddings.hpp"
#include "kbc/entity_linker.hpp"
#include "kbc/kb_store.hpp"
#include "kbc/metrics.hpp"
#include "kbc/relation_extractor.hpp"

namespace kbc {

enum class Stage { kIngest, kEmbeddings, kBootstrap, kTrainEl, kGenBags, kTrainRe, kExtract, kValidate, kEnrich, kEval };

const char* to_string(Stage s);
Stage stage_from_string(const std::string& s);
const std::vector<Stage>& all_stages();

class PipelineError : public Error {
 public:
  PipelineError(Stage stage, const std::string& cause);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct PipelineConfig {
  // [paths]; relative paths in a config file resolve against its directory.
  std::filesystem::path entities, triples, corpus, heldout, gold_links, hidden_triples;
  std::filesystem::path output = "kbc-out";

  // [run]
  std::uint64_t seed = 1;
  int threads = 1;

  KbOptions kb;                    // [kb]
  SkipGramConfig embeddings;       // [embeddings]
  BootstrapConfig bootstrap;       // [bootstrap]
  ContextLinkerConfig linker;      // [linker]
  LinkOptions link;                // [link]
  DistantSupervisionConfig bags;   // [bags]
  std::array<double, 3> split{0.8, 0.1, 0.1};
  REConfig re;                     // [re]
  bool re_use_embeddings = true;   // frozen word vectors from the embedding stage

  // [stages] toggles for the optional tail of the pipeline.
  bool run_extract = true, run_enrich = true, run_eval = true;

  static PipelineConfig load(const std::filesystem::path& ini_file);
  // Sets "section.key" from its text form; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  // Every module seed derived from `seed`.
  void propagate_seed();
  void validate() const;
};

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& file);

struct PipelineResult {
  nlohmann::json metrics;
  std::vector<Stage> executed, cached;
};

// Runs every stage up to and including `until`, reusing cached stages.
PipelineResult run_pipeline(PipelineConfig config, Stage until = Stage::kEval);

// Artifact locations relative to the output directory.
struct Artifacts {
  explicit Artifacts(std::filesystem::path root);
  std::filesystem::path root;
  std::filesystem::path dir(Stage s) const;
  std::filesystem::path vectors, embedding_trace, linked, recognizer, bootstrap_report, context_linker,
      linker_trace, bags, train_bags, valid_bags, test_bags, re_model, re_trace, heldout_linked, extracted,
      accepted, rejected, enriched_entities, enriched_triples, provenance, metrics, kb_stats, corpus_stats;
};

// Optional published benchmark. Expected layout under `dir`:
//   entities.tsv, triples.tsv        KB in the usual formats
//   human_labeled.jsonl              one line per (sentence, triple) pair:
//                                    {"sentence": <corpus JSON line object>,
//                                     "triple": [subject, relation, object]}
struct Benchmark {
  bool installed = false;
  std::string message;
  KnowledgeBase kb;
  std::vector<Sentence> sentences;
  std::vector<Triple> gold;  // gold[k] is the pair labeled in sentences[k]
};

Benchmark load_benchmark(const std::filesystem::path& dir);

// Report over a loaded benchmark with trained models from a pipeline run.
nlohmann::json benchmark_report(const Benchmark& bench, const Artifacts& artifacts, const PipelineConfig& cfg);

}  // namespace kbc
