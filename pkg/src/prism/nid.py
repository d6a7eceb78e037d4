"""Distribution inconsistence detection: clip-swap traversal, NI and NID."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import stream
from .dataset import Dataset
from .errors import EvaluationError, InputError
from .numerics import FeedforwardNet, net_forward

DEFAULT_K = 10
DEFAULT_THRESHOLD = 1.0
DEFAULT_MIN_CLASS_COUNT = 2
STD_FLOOR = 1e-8


@dataclass
class ClipSchedule:
    """``2k`` clips of sample ids and, per round, which clips form each half.

    Clips are referred to by their 0-based index into ``clips`` (clip ``c_i``
    in the usual 1-based notation is ``clips[i - 1]``).
    """

    k: int
    clips: list[list[str]]
    rounds: list[tuple[list[int], list[int]]]

    def halves(self, r: int) -> tuple[list[str], list[str]]:
        alpha, beta = self.rounds[r]
        return ([sid for c in alpha for sid in self.clips[c]],
                [sid for c in beta for sid in self.clips[c]])


def swap_rounds(k: int) -> list[tuple[list[int], list[int]]]:
    """Round 1 puts clips 0..k-1 on side alpha; round i swaps c_{i-1} with c_{k+i-1}."""
    alpha = list(range(k))
    beta = list(range(k, 2 * k))
    rounds = [(alpha.copy(), beta.copy())]
    for i in range(2, k + 1):
        out_a, out_b = i - 2, k + i - 2
        alpha.remove(out_a)
        beta.remove(out_b)
        alpha.append(out_b)
        beta.append(out_a)
        rounds.append((alpha.copy(), beta.copy()))
    return rounds


def build_schedule(dataset: Dataset | list[str], k: int = DEFAULT_K, seed: int = 0,
                   contiguous: bool = True, permute: bool = False) -> ClipSchedule:
    """Cut the dataset into ``2k`` near-equal clips and lay out the swap rounds.

    With ``contiguous`` (default) each clip is a contiguous stretch of the
    dataset in stored order, numbered in that order so the first round
    compares the first half of the data with the second; ``permute``
    numbers the clips in a seeded random order instead. Without
    ``contiguous`` samples are scattered into clips at random.
    """
    ids = list(dataset.ids if isinstance(dataset, Dataset) else dataset)
    if k < 2:
        raise InputError(f"k must be >= 2, got {k}")
    if len(ids) < 2 * k:
        raise InputError(f"need at least 2k={2 * k} samples, got {len(ids)}")
    rng = stream(seed, "nid-clips")
    if contiguous:
        chunks = np.array_split(np.arange(len(ids)), 2 * k)
        order = rng.permutation(2 * k) if permute else np.arange(2 * k)
        clips = [[ids[i] for i in chunks[o]] for o in order]
    else:
        chunks = np.array_split(rng.permutation(len(ids)), 2 * k)
        clips = [[ids[i] for i in chunk] for chunk in chunks]
    return ClipSchedule(k, clips, swap_rounds(k))


@dataclass
class NidReport:
    ni_values: list[float]
    nid: float
    k: int
    threshold: float
    is_non_iid: bool
    skipped_classes: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def ni_from_features(feat_a: np.ndarray, labels_a: np.ndarray, feat_b: np.ndarray,
                     labels_b: np.ndarray, class_std: dict[int, np.ndarray],
                     min_class_count: int = DEFAULT_MIN_CLASS_COUNT) -> tuple[float, list[int]]:
    """Average over classes of the std-normalized feature-mean gap."""
    terms, skipped = [], []
    for cls in sorted(class_std):
        in_a = labels_a == cls
        in_b = labels_b == cls
        if in_a.sum() < min_class_count or in_b.sum() < min_class_count:
            skipped.append(cls)
            continue
        gap = (feat_a[in_a].mean(axis=0) - feat_b[in_b].mean(axis=0)) / class_std[cls]
        terms.append(float(np.sqrt(np.sum(gap * gap))))
    if not terms:
        raise EvaluationError("no class has enough samples on both sides")
    return float(np.mean(terms)), skipped


def class_stds(features: np.ndarray, labels: np.ndarray, num_classes: int) -> dict[int, np.ndarray]:
    out = {}
    for cls in range(num_classes):
        members = labels == cls
        if members.any():
            out[cls] = np.maximum(features[members].std(axis=0), STD_FLOOR)
    return out


def ni(encoder: FeedforwardNet, side_a: Dataset, side_b: Dataset, whole: Dataset,
       min_class_count: int = DEFAULT_MIN_CLASS_COUNT) -> tuple[float, list[int]]:
    feats_whole = net_forward(encoder, whole.flat)
    stds = class_stds(feats_whole, whole.labels, whole.num_classes)
    return ni_from_features(net_forward(encoder, side_a.flat), side_a.labels,
                            net_forward(encoder, side_b.flat), side_b.labels,
                            stds, min_class_count)


def nid(encoder: FeedforwardNet, dataset: Dataset, schedule: ClipSchedule,
        threshold: float = DEFAULT_THRESHOLD,
        min_class_count: int = DEFAULT_MIN_CLASS_COUNT) -> NidReport:
    feats = net_forward(encoder, dataset.flat)
    labels = dataset.labels
    stds = class_stds(feats, labels, dataset.num_classes)
    position = {sid: i for i, sid in enumerate(dataset.ids)}
    missing = [sid for clip in schedule.clips for sid in clip if sid not in position]
    if missing:
        raise InputError(f"schedule references {len(missing)} ids not in the dataset")
    values, skipped = [], []
    for r in range(len(schedule.rounds)):
        ids_a, ids_b = schedule.halves(r)
        ia = np.fromiter((position[s] for s in ids_a), dtype=np.int64, count=len(ids_a))
        ib = np.fromiter((position[s] for s in ids_b), dtype=np.int64, count=len(ids_b))
        value, skip = ni_from_features(feats[ia], labels[ia], feats[ib], labels[ib], stds,
                                       min_class_count)
        values.append(value)
        skipped.append(skip)
    score = float(np.mean(values))
    return NidReport(values, score, schedule.k, float(threshold), bool(score > threshold), skipped)
