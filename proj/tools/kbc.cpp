// kbc: command-line front end for the knowledge-base completion pipeline.
//
//   kbc synth --out fixture/
//   kbc run-all --config fixture/pipeline.ini --out run/
//   kbc train-re --config fixture/pipeline.ini --out run/ --set re.epochs=30

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "kbc/pipeline.hpp"
#include "kbc/synth.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::vector<std::string> overrides;
};

kbc::PipelineConfig make_config(const Globals& g) {
  kbc::PipelineConfig cfg = g.config.empty() ? kbc::PipelineConfig{} : kbc::PipelineConfig::load(g.config);
  for (const auto& kv : g.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw kbc::Error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (!g.out.empty()) cfg.output = g.out;
  return cfg;
}

void emit(const json& metrics, const fs::path& out_dir) {
  std::cout << metrics.dump(2) << '\n';
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "metrics.json") << metrics.dump(2) << '\n';
}

void report_stages(const kbc::PipelineResult& r) {
  for (auto s : r.cached) std::cerr << "[kbc] " << kbc::to_string(s) << ": cached\n";
  for (auto s : r.executed) std::cerr << "[kbc] " << kbc::to_string(s) << ": ran\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-base completion: entity linking, relation extraction, KB enrichment"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key-value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "global seed, overrides run.seed");
  app.add_option("--out", g.out, "output directory, overrides paths.output");
  app.add_option("--threads", g.threads, "worker threads, overrides run.threads")->check(CLI::PositiveNumber);
  app.add_option("--set", g.overrides, "config override section.key=value (repeatable)");

  const std::map<std::string, std::pair<kbc::Stage, std::string>> staged = {
      {"train-embeddings", {kbc::Stage::kEmbeddings, "train word and entity embeddings"}},
      {"bootstrap", {kbc::Stage::kBootstrap, "self-train the recognizer and build the linked corpus"}},
      {"train-el", {kbc::Stage::kTrainEl, "train the context linker"}},
      {"gen-bags", {kbc::Stage::kGenBags, "distant supervision and dataset split"}},
      {"train-re", {kbc::Stage::kTrainRe, "train the relation extractor"}},
      {"extract", {kbc::Stage::kExtract, "link held-out text and extract triples"}},
      {"validate", {kbc::Stage::kValidate, "check extracted triples against type templates"}},
      {"enrich", {kbc::Stage::kEnrich, "append accepted triples to the KB"}},
      {"run-all", {kbc::Stage::kEval, "run every stage and report metrics"}},
  };
  for (const auto& [name, info] : staged) app.add_subcommand(name, info.second)->fallthrough();

  app.add_subcommand("ingest-kb", "load and validate the KB files")->fallthrough();
  auto* ingest_corpus = app.add_subcommand("ingest-corpus", "load and validate a corpus file")->fallthrough();
  std::string corpus_file;
  ingest_corpus->add_option("file", corpus_file, "corpus JSONL; defaults to paths.corpus");

  auto* eval = app.add_subcommand("eval", "run the pipeline through evaluation")->fallthrough();
  std::string benchmark_dir;
  eval->add_option("--benchmark", benchmark_dir, "directory holding the published benchmark, if installed");

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic fixture")->fallthrough();
  kbc::SynthSpec spec;
  synth->add_option("--entities", spec.entities)->capture_default_str();
  synth->add_option("--types", spec.types)->capture_default_str();
  synth->add_option("--relations", spec.relations)->capture_default_str();
  synth->add_option("--triples", spec.triples)->capture_default_str();
  synth->add_option("--sentences-per-triple", spec.sentences_per_triple)->capture_default_str();
  synth->add_option("--distractor-rate", spec.distractor_rate)->capture_default_str();
  synth->add_option("--hidden-fraction", spec.hidden_fraction)->capture_default_str();
  synth->add_option("--heldout-fraction", spec.heldout_fraction)->capture_default_str();
  synth->add_option("--ambiguous-fraction", spec.ambiguous_fraction)->capture_default_str();
  synth->add_option("--alias-rate", spec.alias_rate)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    if (name == "synth") {
      if (g.seed) spec.seed = *g.seed;
      const fs::path dir = g.out.empty() ? fs::path("synth") : fs::path(g.out);
      auto fx = kbc::synth_fixture(spec);
      auto files = kbc::write_synth_fixture(fx, dir);
      emit({{"entities", fx.kb.entity_count()},
            {"triples", fx.kb.triple_count()},
            {"hidden_triples", fx.hidden.size()},
            {"corpus_sentences", fx.corpus.size()},
            {"heldout_sentences", fx.heldout.size()},
            {"gold_bags", fx.gold_bags.size()},
            {"config", files.config.string()}},
           dir);
      return 0;
    }

    auto cfg = make_config(g);
    if (name == "ingest-kb") {
      auto kb = kbc::KnowledgeBase::load(cfg.entities, cfg.triples, cfg.kb);
      auto tmpl = kb.build_fact_type_templates();
      emit({{"entities", kb.entity_count()},
            {"triples", kb.triple_count()},
            {"relations", kb.relation_count()},
            {"types", kb.entity_types().size()},
            {"templates", tmpl.entries().size()}},
           cfg.output);
      return 0;
    }
    if (name == "ingest-corpus") {
      const fs::path file = corpus_file.empty() ? cfg.corpus : fs::path(corpus_file);
      auto sentences = kbc::ingest_corpus(file);
      long long tokens = 0, spans = 0;
      for (const auto& s : sentences) {
        tokens += s.size();
        spans += static_cast<long long>(s.spans.size());
      }
      emit({{"sentences", sentences.size()}, {"tokens", tokens}, {"spans", spans}}, cfg.output);
      return 0;
    }

    const kbc::Stage until = name == "eval" ? kbc::Stage::kEval : staged.at(name).first;
    auto result = kbc::run_pipeline(cfg, until);
    report_stages(result);
    json metrics = result.metrics;
    if (name == "eval" && !benchmark_dir.empty()) {
      auto bench = kbc::load_benchmark(benchmark_dir);
      if (!bench.installed) std::cerr << "[kbc] " << bench.message << '\n';
      metrics["benchmark"] = kbc::benchmark_report(bench, kbc::Artifacts(cfg.output), cfg);
    }
    emit(metrics, cfg.output);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "kbc: " << e.what() << '\n';
    return 1;
  }
}
