#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kbc/metrics.hpp"
#include "kbc/pipeline.hpp"
#include "kbc/synth.hpp"

namespace py = pybind11;
using namespace kbc;

namespace {

std::string validate(const KnowledgeBase& kb, const std::string& s, const std::string& r, const std::string& o) {
  return to_string(validate_triple({s, r, o}, kb, kb.build_fact_type_templates()));
}

}  // namespace

PYBIND11_MODULE(_kbc, m) {
  m.doc() = "Knowledge-base completion core";
  py::register_exception<Error>(m, "KbcError");

  py::class_<Triple>(m, "Triple")
      .def(py::init<EntityId, RelationId, EntityId>(), py::arg("subject"), py::arg("relation"), py::arg("object"))
      .def_readwrite("subject", &Triple::subject)
      .def_readwrite("relation", &Triple::relation)
      .def_readwrite("object", &Triple::object)
      .def("__repr__",
           [](const Triple& t) { return "Triple(" + t.subject + ", " + t.relation + ", " + t.object + ")"; });

  py::class_<KnowledgeBase>(m, "KnowledgeBase")
      .def_static(
          "load",
          [](const std::filesystem::path& e, const std::filesystem::path& t) { return KnowledgeBase::load(e, t); },
          py::arg("entities"), py::arg("triples"))
      .def_property_readonly("entity_count", &KnowledgeBase::entity_count)
      .def_property_readonly("triple_count", &KnowledgeBase::triple_count)
      .def_property_readonly("relation_count", &KnowledgeBase::relation_count)
      .def("type_of", &KnowledgeBase::type_of)
      .def("connected", &KnowledgeBase::connected)
      .def("relations_between", &KnowledgeBase::relations_between)
      .def("lookup_alias", &KnowledgeBase::lookup_alias)
      .def("contains", &KnowledgeBase::contains)
      .def("triples", &KnowledgeBase::triples)
      .def("validate_triple", &validate, py::arg("subject"), py::arg("relation"), py::arg("object"),
           "'accept' or the rejection reason under the KB's own type templates");

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("entities", &SynthSpec::entities)
      .def_readwrite("types", &SynthSpec::types)
      .def_readwrite("relations", &SynthSpec::relations)
      .def_readwrite("triples", &SynthSpec::triples)
      .def_readwrite("sentences_per_triple", &SynthSpec::sentences_per_triple)
      .def_readwrite("distractor_rate", &SynthSpec::distractor_rate)
      .def_readwrite("hidden_fraction", &SynthSpec::hidden_fraction)
      .def_readwrite("heldout_fraction", &SynthSpec::heldout_fraction)
      .def_readwrite("ambiguous_fraction", &SynthSpec::ambiguous_fraction)
      .def_readwrite("alias_rate", &SynthSpec::alias_rate)
      .def_readwrite("seed", &SynthSpec::seed);

  m.def(
      "write_synth",
      [](const SynthSpec& spec, const std::filesystem::path& dir) {
        return write_synth_fixture(synth_fixture(spec), dir).config;
      },
      py::arg("spec"), py::arg("dir"), "Writes a synthetic fixture; returns the path of its pipeline.ini.");

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_static("load", &PipelineConfig::load)
      .def("set", &PipelineConfig::set)
      .def("get", &PipelineConfig::get)
      .def_static("keys", &PipelineConfig::keys)
      .def("validate", &PipelineConfig::validate)
      .def_readwrite("output", &PipelineConfig::output)
      .def_readwrite("seed", &PipelineConfig::seed);

  m.def(
      "_run_pipeline",
      [](const PipelineConfig& cfg, const std::string& until) {
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(cfg, stage_from_string(until));
        }
        std::vector<std::string> executed, cached;
        for (auto s : r.executed) executed.emplace_back(to_string(s));
        for (auto s : r.cached) cached.emplace_back(to_string(s));
        return py::make_tuple(r.metrics.dump(), executed, cached);
      },
      py::arg("config"), py::arg("until") = "eval");

  m.def("stages", [] {
    std::vector<std::string> out;
    for (auto s : all_stages()) out.emplace_back(to_string(s));
    return out;
  });

  m.def(
      "sliding_margin_loss",
      [](const nn::Vector& scores, const nn::Vector& gold, double threshold, double margin, double na_weight) {
        return sliding_margin_loss(scores, gold, threshold, margin, na_weight);
      },
      py::arg("scores"), py::arg("gold"), py::arg("threshold"), py::arg("margin"), py::arg("na_weight"));
  m.def("hinge_loss", &hinge_loss, py::arg("positive"), py::arg("negative"), py::arg("margin"));

  m.def(
      "relation_metrics",
      [](const std::vector<std::vector<RelationId>>& predicted, const std::vector<std::vector<RelationId>>& gold) {
        auto r = eval_relation_extractor(predicted, gold);
        return py::dict(py::arg("precision") = r.precision, py::arg("recall") = r.recall, py::arg("f1") = r.f1,
                        py::arg("true_positive") = r.true_positive, py::arg("predicted") = r.predicted,
                        py::arg("gold") = r.gold);
      },
      py::arg("predicted"), py::arg("gold"));

  m.def("sha256_hex", &sha256_hex);
}
