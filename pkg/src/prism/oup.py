"""Online prediction: nearest-centroid routing to one head per sample.

Also owns the on-disk format of a ModelPack (versioned JSON).
"""
from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import _jsonio
from .clustering import assign_nearest
from .dataset import Dataset, Sample
from .errors import CompatibilityError, ParseError, SchemaError, ShapeError
from .metrics import EvalReport, evaluate_labels
from .numerics import FeedforwardNet, net_forward, softmax
from .tde import SCHEMA_VERSION, ModelPack, TdeConfig


@dataclass
class PredictionRecord:
    sample_id: str
    chosen_domain: int
    class_probs: list[float]
    predicted_label: int
    true_label: int | None = None

    @property
    def max_prob(self) -> float:
        return max(self.class_probs)


def _check_window(pack: ModelPack, window: np.ndarray) -> np.ndarray:
    flat = np.asarray(window, dtype=np.float64).reshape(-1)
    if flat.shape[0] != pack.encoder.in_dim:
        raise ShapeError(f"window has {flat.shape[0]} values, pack expects {pack.encoder.in_dim}")
    return flat


def predict(pack: ModelPack, sample: Sample) -> PredictionRecord:
    """Embed, pick the nearest centroid, run that domain's head only."""
    feat = net_forward(pack.encoder, _check_window(pack, sample.window)[None, :])[0]
    domain = assign_nearest(pack.centroids, feat)
    probs = softmax(net_forward(pack.heads[domain], feat[None, :]))[0]
    return PredictionRecord(sample.id, domain, probs.tolist(), int(np.argmax(probs)), sample.label)


def predict_dataset(pack: ModelPack, data: Dataset) -> list[PredictionRecord]:
    """Batched equivalent of calling :func:`predict` on every sample."""
    if data.window_len * data.channels != pack.encoder.in_dim:
        raise ShapeError(f"dataset windows have {data.window_len * data.channels} values, "
                         f"pack expects {pack.encoder.in_dim}")
    domains, probs = pack.predict_proba(data.flat)
    labels = np.argmax(probs, axis=1)
    return [PredictionRecord(s.id, int(d), p.tolist(), int(l), s.label)
            for s, d, p, l in zip(data.samples, domains, probs, labels)]


def report_from_predictions(records: list[PredictionRecord], num_classes: int) -> EvalReport:
    y_true = [r.true_label for r in records]
    y_pred = [r.predicted_label for r in records]
    counts = Counter(str(r.chosen_domain) for r in records)
    return evaluate_labels(y_true, y_pred, num_classes,
                           {k: counts[k] for k in sorted(counts, key=int)})


def evaluate(pack: ModelPack, test: Dataset) -> EvalReport:
    return report_from_predictions(predict_dataset(pack, test), test.num_classes)


def predictions_csv(records: list[PredictionRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "chosen_domain", "predicted_label", "true_label", "max_prob"])
    for r in records:
        w.writerow([r.sample_id, r.chosen_domain, r.predicted_label,
                    "" if r.true_label is None else r.true_label, repr(r.max_prob)])
    return buf.getvalue()


def predictions_json(records: list[PredictionRecord]) -> str:
    return json.dumps([asdict(r) for r in records])


# --------------------------------------------------------------------------
# ModelPack serialization

def _net_to_dict(net: FeedforwardNet) -> dict:
    return {"layer_dims": net.layer_dims, "weights": net.weights, "biases": net.biases}


def _net_from_dict(d: dict) -> FeedforwardNet:
    dims = d["layer_dims"]
    weights = [np.asarray(w, dtype=np.float64).reshape(a, b)
               for w, a, b in zip(d["weights"], dims[:-1], dims[1:])]
    net = FeedforwardNet(weights, [np.asarray(b, dtype=np.float64) for b in d["biases"]])
    if net.layer_dims != list(dims):
        raise SchemaError(f"declared layer_dims {dims} disagree with parameters {net.layer_dims}")
    return net


def pack_to_json(pack: ModelPack) -> str:
    doc = {
        "schema_version": pack.schema_version,
        "config": pack.config.to_dict(),
        "num_classes": pack.num_classes,
        "encoder": _net_to_dict(pack.encoder),
        "heads": [_net_to_dict(h) for h in pack.heads],
        "centroids": pack.centroids,
        "provenance": pack.provenance,
    }
    return _jsonio.dumps(doc) + "\n"


def pack_from_json(text: str) -> ModelPack:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model pack is not valid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ParseError("model pack lacks a schema_version")
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise CompatibilityError(f"model pack schema_version {version} is not supported "
                                 f"(this build reads version {SCHEMA_VERSION})")
    try:
        centroids = doc["centroids"]
        return ModelPack(
            encoder=_net_from_dict(doc["encoder"]),
            heads=[_net_from_dict(h) for h in doc["heads"]],
            centroids=None if centroids is None else np.asarray(centroids, dtype=np.float64),
            config=TdeConfig.from_dict(doc["config"]),
            num_classes=int(doc["num_classes"]),
            schema_version=version,
            provenance=doc.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"model pack is missing or has malformed fields: {exc}") from None


def save_pack(pack: ModelPack, path: str | os.PathLike) -> None:
    _jsonio.write_atomic(path, pack_to_json(pack))


def load_pack(path: str | os.PathLike) -> ModelPack:
    with open(path, encoding="utf-8") as fh:
        return pack_from_json(fh.read())
