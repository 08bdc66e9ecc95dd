"""Python access to the zoosight core.

Structured results come back from the native module as JSON text and are decoded here.
"""

import json

from . import _core
from ._core import Error, majority_vote, normalize_answer, parse_score

__all__ = [
    "Error",
    "ReviewService",
    "evaluate",
    "low_color_variation",
    "majority_vote",
    "normalize_answer",
    "parse_score",
    "render_matching_prompt",
    "run_cli",
]


def run_cli(*args):
    """Runs the command-line entry point in-process. Returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


def _jsonl(predictions):
    if isinstance(predictions, str):
        return predictions
    return "".join(json.dumps(p) + "\n" for p in predictions)


def evaluate(predictions, n_bins=20, thresholds=None):
    """Metrics report for a prediction log (JSONL text or a list of record dicts)."""
    return json.loads(_core.evaluate_jsonl(_jsonl(predictions), n_bins, thresholds))


def render_matching_prompt(caption, kb):
    """Returns (system_message, prompt). `kb` is a knowledge-base dict."""
    return _core.render_matching_prompt(caption, json.dumps(kb))


def low_color_variation(image, crop_fraction=0.8, epsilon=10):
    """`image` is an HxWx3 uint8 array. Returns (detected, max_channel_spread)."""
    return _core.low_color_variation(image, crop_fraction, epsilon)


class ReviewService:
    def __init__(self, state_dir=None, snapshot_every=64):
        self._svc = _core.ReviewService(None if state_dir is None else str(state_dir), snapshot_every)

    def create_run(self, predictions, labels, p, run_id=None):
        return self._svc.create_run(_jsonl(predictions), list(labels), p, run_id)

    def run_ids(self):
        return self._svc.run_ids()

    def next_item(self, run_id, reviewer):
        doc = self._svc.next_item(run_id, reviewer)
        return None if doc is None else json.loads(doc)

    def submit_label(self, item_id, label, reviewer):
        return json.loads(self._svc.submit_label(item_id, label, reviewer))

    def summary(self, run_id):
        return json.loads(self._svc.summary(run_id))
