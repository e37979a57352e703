"""Python access to the knowledge-base completion core."""

import json as _json

from ._kbc import (
    KbcError,
    KnowledgeBase,
    PipelineConfig,
    SynthSpec,
    Triple,
    _run_pipeline,
    hinge_loss,
    relation_metrics,
    sha256_hex,
    sliding_margin_loss,
    stages,
    write_synth,
)


def run_pipeline(config, until="eval"):
    """Run the pipeline up to `until`; returns (metrics dict, executed stages, cached stages)."""
    metrics, executed, cached = _run_pipeline(config, until)
    return _json.loads(metrics), executed, cached

__all__ = [
    "KbcError",
    "KnowledgeBase",
    "PipelineConfig",
    "SynthSpec",
    "Triple",
    "hinge_loss",
    "relation_metrics",
    "run_pipeline",
    "sha256_hex",
    "sliding_margin_loss",
    "stages",
    "write_synth",
]
