"""Model files: a fitted posterior in support form plus fit metadata (JSON)."""

import json

from .sparse import SparsePosterior

FORMAT = "spgptd-model/1"


def save_model(path, posterior, estimator, metrics=None):
    doc = {"format": FORMAT, "estimator": estimator, "posterior": posterior.to_dict(), "metrics": metrics or {}}
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_model(path):
    """Returns ``(posterior, estimator, metrics)``."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a model file (format {doc.get('format')!r})")
    return SparsePosterior.from_dict(doc["posterior"]), doc["estimator"], doc.get("metrics", {})
