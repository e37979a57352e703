import json

import pytest

import kbc


def test_stage_order():
    names = kbc.stages()
    assert names[0] == "ingest"
    assert names[-1] == "eval"


def test_loss_arithmetic():
    assert kbc.sliding_margin_loss([0.9], [1.0], 0.5, 0.1, 0.5) == 0.0
    assert abs(kbc.sliding_margin_loss([0.9], [0.0], 0.5, 0.1, 0.5) - 0.125) < 1e-9
    assert abs(kbc.hinge_loss(0.4, 0.7, 0.2) - 0.5) < 1e-9


def test_relation_metrics():
    gold = [["r1", "r2"], ["r1"], ["r3"], ["r2"], ["r1"], []]
    pred = [["r1", "r2"], ["r1"], ["r3"], [], [], ["r2"]]
    m = kbc.relation_metrics(pred, gold)
    assert abs(m["precision"] - 0.8) < 1e-12
    assert abs(m["recall"] - 2 / 3) < 1e-12
    with pytest.raises(kbc.KbcError):
        kbc.relation_metrics([], [])


def test_sha256():
    assert kbc.sha256_hex("abc").startswith("ba7816bf")


def test_config_errors():
    cfg = kbc.PipelineConfig()
    cfg.set("re.hidden", "8")
    assert cfg.get("re.hidden") == "8"
    with pytest.raises(kbc.KbcError):
        cfg.set("re.nope", "1")
    assert "link.k" in kbc.PipelineConfig.keys()


def test_synth_and_pipeline(tmp_path):
    spec = kbc.SynthSpec()
    spec.entities = 40
    spec.types = 3
    spec.relations = 4
    spec.triples = 50
    spec.sentences_per_triple = 2
    ini = kbc.write_synth(spec, tmp_path / "fixture")
    cfg = kbc.PipelineConfig.load(ini)
    kb = kbc.KnowledgeBase.load(tmp_path / "fixture" / "entities.tsv", tmp_path / "fixture" / "triples.tsv")
    assert kb.entity_count == 40
    for t in kb.triples()[:20]:
        assert kb.validate_triple(t.subject, t.relation, t.object) == "accept"

    cfg.output = tmp_path / "out"
    for key, value in [("embeddings.dim", "8"), ("embeddings.epochs", "1"), ("bootstrap.max_rounds", "1"),
                       ("linker.epochs", "1"), ("re.epochs", "1"), ("re.hidden", "4")]:
        cfg.set(key, value)
    metrics, executed, cached = kbc.run_pipeline(cfg)
    assert executed == kbc.stages()
    assert not cached
    assert set(metrics) >= {"entity_linking", "relation_extraction", "triples", "bootstrap"}
    on_disk = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert on_disk == metrics

    again, executed, cached = kbc.run_pipeline(cfg)
    assert executed == []
    assert again == metrics
