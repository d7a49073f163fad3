"""Python bindings for the biasforge core.

Structured results come back as plain dicts and lists.
"""

import json
import os

from . import _core
from ._core import BiasforgeError, leaky_relu, percentile_interval, two_sided_z

__all__ = [
    "BiasforgeError",
    "bootstrap_per_class",
    "compare_models",
    "confidence_interval",
    "emit_comparison_chart",
    "error_kind",
    "identify_bias",
    "ingest",
    "leaky_relu",
    "percentile_interval",
    "recommend_augmentation",
    "render_batch",
    "run_experiment",
    "stratified_split",
    "two_sided_z",
]


def error_kind(exc):
    """Kind name of a BiasforgeError, e.g. "EmptyClass"."""
    return str(exc).split(":", 1)[0]


def confidence_interval(values, level=0.95):
    return _core.confidence_interval(list(values), level)


def ingest(root, provenance="real", render_spec_id=None):
    """Returns (manifest, rejects)."""
    manifest, rejects = _core.ingest(os.fspath(root), provenance, render_spec_id)
    return json.loads(manifest), json.loads(rejects)


def stratified_split(manifest, train=4, val=1, seed=0):
    """Returns (train_manifest, val_manifest)."""
    tr, va = _core.stratified_split(json.dumps(manifest), train, val, seed)
    return json.loads(tr), json.loads(va)


def render_batch(spec, out_root):
    """Returns (manifest, per_image_params)."""
    manifest, params = _core.render_batch(json.dumps(spec), os.fspath(out_root))
    return json.loads(manifest), json.loads(params)


def bootstrap_per_class(predictions_csv, truth, replicates=500, per_class_n=200, confidence_level=0.95, seed=0):
    text = _core.bootstrap_per_class(predictions_csv, json.dumps(truth), replicates, per_class_n,
                                     confidence_level, seed)
    return json.loads(text)


def compare_models(stats_by_model, regression_epsilon=0.01):
    """stats_by_model: ordered (model_id, stats) pairs, baseline first."""
    items = [(model_id, json.dumps(stats)) for model_id, stats in stats_by_model]
    return json.loads(_core.compare_models(items, regression_epsilon))


def identify_bias(stats, strategy="worst_k", k=1, threshold=0.7):
    return _core.identify_bias(json.dumps(stats), strategy, k, threshold)


def recommend_augmentation(biased, template, per_class_count=200):
    return json.loads(_core.recommend_augmentation(list(biased), json.dumps(template), per_class_count))


def emit_comparison_chart(report, out_dir):
    return _core.emit_comparison_chart(json.dumps(report), os.fspath(out_dir))


def run_experiment(plan_file, master_seed=None, quiet=True):
    """Runs a YAML plan; returns the comparison report, or None when stopped early."""
    return json.loads(_core.run_experiment(os.fspath(plan_file), master_seed, quiet))
