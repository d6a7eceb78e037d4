"""Comparison methods, the partition-cost objective and a brute-force optimal partition.

Every baseline starts from the same initial model M_0 (shared encoder plus
classifier trained on all training data). The partitioned baselines split
the training set into subsets, fine-tune a private copy of M_0 on each and
route a test sample to one subset's model:

* ``p0``  -- no split at all;
* ``sem`` -- one subset per value of a metadata attribute, routed by the
  attribute itself;
* ``cd``  -- k-means over raw flattened windows, nearest raw centroid;
* ``cf``  -- k-means over M_0 embeddings, nearest embedding centroid.

With a single subset every method collapses to M_0 unchanged.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .clustering import assign_all, kmeans
from .dataset import Dataset
from .errors import CapacityError, InputError, SchemaError
from .metrics import EvalReport, evaluate_labels
from .numerics import FeedforwardNet, net_forward
from .oup import evaluate as evaluate_pack
from .tde import InitialModel, LineSearch, ModelPack, TdeConfig, descend_ce, single_domain_pack, train_initial

METHODS = ("p0", "sem", "cd", "cf", "prism", "oracle")
MAX_ORACLE_CANDIDATES = 4096
FALLBACK = -1


@dataclass
class PartitionScheme:
    """Assignment of sample ids to subsets ``0 .. n_subsets - 1``.

    Subsets may be empty; ``canonical`` renumbers them by first appearance.
    """

    name: str
    assignment: dict[str, int]
    n_subsets: int

    def __post_init__(self):
        if self.name not in METHODS:
            raise InputError(f"unknown partition method {self.name!r}")
        if self.n_subsets < 1:
            raise InputError("a partition needs at least one subset")
        bad = [sid for sid, k in self.assignment.items() if not 0 <= k < self.n_subsets]
        if bad:
            raise InputError(f"{len(bad)} samples assigned outside 0..{self.n_subsets - 1}")

    def subset_of(self, data: Dataset) -> np.ndarray:
        missing = [s.id for s in data.samples if s.id not in self.assignment]
        if missing:
            raise InputError(f"partition does not cover {len(missing)} samples (e.g. {missing[0]!r})")
        return np.array([self.assignment[s.id] for s in data.samples], dtype=np.int64)

    def used(self) -> list[int]:
        return sorted(set(self.assignment.values()))

    def canonical(self) -> "PartitionScheme":
        relabel: dict[int, int] = {}
        out = {}
        for sid, k in self.assignment.items():
            out[sid] = relabel.setdefault(k, len(relabel))
        return PartitionScheme(self.name, out, max(len(relabel), 1))


def fine_tune(initial: InitialModel, subset: Dataset, config: TdeConfig
              ) -> tuple[FeedforwardNet, FeedforwardNet]:
    """Domain-adaptation fine-tune: ``config.finetune_passes`` descent passes from M_0."""
    enc, head, *_ = descend_ce(initial.encoder, initial.head, subset, config.finetune_passes,
                               LineSearch(config))
    return enc, head


@dataclass
class RoutedEnsemble:
    """Per-subset models plus a router; ``None`` models fall back to M_0."""

    name: str
    initial: InitialModel
    models: list[tuple[FeedforwardNet, FeedforwardNet] | None]
    router: Callable[[Dataset], np.ndarray]
    meta: dict = field(default_factory=dict)

    def predict(self, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(route, label)`` per sample; route ``-1`` marks a fallback."""
        routes = np.asarray(self.router(data), dtype=np.int64)
        labels = np.empty(len(data), dtype=np.int64)
        x = data.flat
        for k in np.unique(routes):
            rows = routes == k
            model = self.models[k] if k >= 0 else None
            enc, head = model if model is not None else (self.initial.encoder, self.initial.head)
            labels[rows] = np.argmax(net_forward(head, net_forward(enc, x[rows])), axis=1)
        return routes, labels

    def evaluate(self, test: Dataset) -> EvalReport:
        routes, labels = self.predict(test)
        counts = {str(k): int(np.sum(routes == k)) for k in range(len(self.models))}
        report = evaluate_labels(test.labels, labels, test.num_classes, counts)
        report.fallback_count = int(np.sum(routes == FALLBACK))
        return report


def _fit_subsets(initial: InitialModel, train: Dataset, subset_idx: np.ndarray, n: int,
                 config: TdeConfig) -> list:
    models = []
    for k in range(n):
        rows = np.flatnonzero(subset_idx == k)
        models.append(fine_tune(initial, train.subset(rows), config) if rows.size else None)
    return models


def _initial(train, val, config, initial):
    return initial if initial is not None else train_initial(train, val, config)


def p0_pack(train: Dataset, val: Dataset, config: TdeConfig,
            initial: InitialModel | None = None) -> ModelPack:
    return single_domain_pack(_initial(train, val, config, initial), train, config)


def baseline_p0(train: Dataset, val: Dataset, test: Dataset, config: TdeConfig,
                initial: InitialModel | None = None) -> EvalReport:
    """One model trained on everything."""
    return evaluate_pack(p0_pack(train, val, config, initial), test)


def fit_semantic(train, val, meta_key: str, config, initial=None) -> RoutedEnsemble | None:
    """``None`` when the attribute takes a single value (nothing to split)."""
    initial = _initial(train, val, config, initial)
    values = train.meta_values(meta_key)
    if any(v is None for v in values):
        raise SchemaError(f"some training samples lack meta[{meta_key!r}]")
    levels = sorted(set(values))
    if len(levels) == 1:
        return None
    index = {v: i for i, v in enumerate(levels)}
    models = _fit_subsets(initial, train, np.array([index[v] for v in values]), len(levels), config)

    def router(data: Dataset) -> np.ndarray:
        return np.array([index.get(v, FALLBACK) for v in data.meta_values(meta_key)], dtype=np.int64)

    return RoutedEnsemble("sem", initial, models, router, {"levels": levels})


def baseline_semantic(train: Dataset, val: Dataset, test: Dataset, meta_key: str,
                      config: TdeConfig, initial: InitialModel | None = None) -> EvalReport:
    """Split by a known attribute; unseen test values use M_0 and are counted."""
    model = fit_semantic(train, val, meta_key, config, initial)
    if model is None:
        return baseline_p0(train, val, test, config, initial)
    return model.evaluate(test)


def _fit_clustered(name, points_fn, train, val, n, config, initial):
    initial = _initial(train, val, config, initial)
    if n == 1:
        return None
    points = points_fn(initial, train)
    km = kmeans(points, n, seed=config.seed, max_iter=config.kmeans_max_iter,
                tol=config.kmeans_tol, n_init=config.kmeans_restarts)
    models = _fit_subsets(initial, train, km.assignment, n, config)
    centroids = km.centroids

    def router(data: Dataset) -> np.ndarray:
        return assign_all(centroids, points_fn(initial, data))

    return RoutedEnsemble(name, initial, models, router, {"centroids": centroids,
                                                          "assignment": km.assignment})


def _raw(initial, data):
    return data.flat


def _features(initial, data):
    return net_forward(initial.encoder, data.flat)


def fit_cluster_data(train, val, n, config, initial=None) -> RoutedEnsemble | None:
    return _fit_clustered("cd", _raw, train, val, n, config, initial)


def fit_cluster_feature(train, val, n, config, initial=None) -> RoutedEnsemble | None:
    return _fit_clustered("cf", _features, train, val, n, config, initial)


def baseline_cluster_data(train: Dataset, val: Dataset, test: Dataset, n: int,
                          config: TdeConfig, initial: InitialModel | None = None) -> EvalReport:
    """k-means on raw windows, nearest raw centroid at test time."""
    model = fit_cluster_data(train, val, n, config, initial)
    if model is None:
        return baseline_p0(train, val, test, config, initial)
    return model.evaluate(test)


def baseline_cluster_feature(train: Dataset, val: Dataset, test: Dataset, n: int,
                             config: TdeConfig, initial: InitialModel | None = None) -> EvalReport:
    """k-means once on M_0 embeddings (no refinement), nearest feature centroid."""
    model = fit_cluster_feature(train, val, n, config, initial)
    if model is None:
        return baseline_p0(train, val, test, config, initial)
    return model.evaluate(test)


# --------------------------------------------------------------------------
# partition cost and oracle

@dataclass
class PartitionCost:
    total_error: float
    weighted_error: float
    subset_errors: list[float]
    train_sizes: list[int]
    test_sizes: list[int]
    flags: dict[int, str] = field(default_factory=dict)


def eval_partition(partition: PartitionScheme, train: Dataset, test: Dataset, config: TdeConfig,
                   initial: InitialModel | None = None, val: Dataset | None = None) -> PartitionCost:
    """Sum over subsets of the test error (1 - accuracy) of that subset's model.

    A subset without training samples, or whose training samples miss a
    class, scores 1.0 and is flagged. A subset without test samples
    contributes 0 and is flagged. Subsets with no samples at all are
    ignored. When only one subset holds data its model is M_0 itself.
    """
    if initial is None:
        if val is None:
            raise InputError("need either a trained initial model or a validation split")
        initial = train_initial(train, val, config)
    tr_idx = partition.subset_of(train)
    te_idx = partition.subset_of(test)
    occupied = sorted(set(tr_idx.tolist()) | set(te_idx.tolist()))
    errors, tr_sizes, te_sizes, flags = [], [], [], {}
    for k in range(partition.n_subsets):
        tr_rows = np.flatnonzero(tr_idx == k)
        te_rows = np.flatnonzero(te_idx == k)
        tr_sizes.append(int(tr_rows.size))
        te_sizes.append(int(te_rows.size))
        if k not in occupied:
            errors.append(0.0)
            continue
        if te_rows.size == 0:
            errors.append(0.0)
            flags[k] = "empty test subset"
            continue
        sub_train = train.subset(tr_rows) if tr_rows.size else None
        if sub_train is None or np.any(sub_train.class_coverage() == 0):
            errors.append(1.0)
            flags[k] = "training subset empty or missing classes"
            continue
        if len(occupied) == 1:
            enc, head = initial.encoder, initial.head
        else:
            enc, head = fine_tune(initial, sub_train, config)
        x = test.flat[te_rows]
        pred = np.argmax(net_forward(head, net_forward(enc, x)), axis=1)
        errors.append(float(1.0 - np.mean(pred == test.labels[te_rows])))
    sizes = np.array(te_sizes, dtype=np.float64)
    weighted = float(np.dot(sizes, errors) / sizes.sum()) if sizes.sum() else 0.0
    return PartitionCost(float(np.sum(errors)), weighted, errors, tr_sizes, te_sizes, flags)


def group_partition(groups: list[str], assignment: tuple[int, ...], train: Dataset, test: Dataset,
                    group_key: str, n: int) -> PartitionScheme:
    index = dict(zip(groups, assignment))
    mapping = {}
    for data in (train, test):
        for s in data.samples:
            g = s.meta.get(group_key)
            if g not in index:
                raise SchemaError(f"sample {s.id!r} has no known meta[{group_key!r}]")
            mapping[s.id] = index[g]
    return PartitionScheme("oracle", mapping, n)


def exhaustive_partition_oracle(train: Dataset, test: Dataset, n: int, config: TdeConfig,
                                group_key: str = "domain", initial: InitialModel | None = None,
                                val: Dataset | None = None,
                                record: list | None = None) -> tuple[PartitionScheme, float]:
    """Try every assignment of the ``G`` metadata groups to ``n`` subsets.

    Assignments are visited in lexicographic order and the first minimum
    wins. When ``record`` is a list, ``(assignment, total_error)`` pairs are
    appended to it.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    groups = sorted({str(v) for v in train.meta_values(group_key) + test.meta_values(group_key)
                     if v is not None})
    if not groups:
        raise SchemaError(f"no sample carries meta[{group_key!r}]")
    if n ** len(groups) > MAX_ORACLE_CANDIDATES:
        raise CapacityError(f"{n}**{len(groups)} candidate partitions exceeds {MAX_ORACLE_CANDIDATES}")
    if initial is None:
        if val is None:
            raise InputError("need either a trained initial model or a validation split")
        initial = train_initial(train, val, config)
    best, best_err = None, np.inf
    for assignment in itertools.product(range(n), repeat=len(groups)):
        scheme = group_partition(groups, assignment, train, test, group_key, n)
        err = eval_partition(scheme, train, test, config, initial).total_error
        if record is not None:
            record.append((assignment, err))
        if err < best_err:
            best, best_err = scheme, err
    return best, float(best_err)


def partition_from_pack(pack: ModelPack, train_assignment: np.ndarray, train: Dataset,
                        test: Dataset) -> PartitionScheme:
    """Mined training assignment plus nearest-centroid routing of the test samples."""
    mapping = {sid: int(k) for sid, k in zip(train.ids, train_assignment)}
    domains, _ = pack.predict_proba(test.flat)
    mapping.update({sid: int(k) for sid, k in zip(test.ids, domains)})
    return PartitionScheme("prism", mapping, pack.n)


# --------------------------------------------------------------------------
# comparison table

@dataclass
class ComparisonRow:
    method: str
    seed: int
    accuracy: float
    macro_f1: float
    per_domain_accuracy: dict[str, float]


def per_group_accuracy(test: Dataset, predicted: np.ndarray, group_key: str = "domain") -> dict[str, float]:
    groups = test.meta_values(group_key)
    out = {}
    for g in sorted({str(v) for v in groups if v is not None}):
        rows = np.array([str(v) == g for v in groups])
        out[g] = float(np.mean(predicted[rows] == test.labels[rows]))
    return out


def comparison_csv(rows: list[ComparisonRow]) -> str:
    groups = sorted({g for r in rows for g in r.per_domain_accuracy})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "seed", "accuracy", "macro_f1", *[f"acc_domain_{g}" for g in groups]])
    for r in rows:
        w.writerow([r.method, r.seed, repr(r.accuracy), repr(r.macro_f1),
                    *[repr(r.per_domain_accuracy[g]) if g in r.per_domain_accuracy else ""
                      for g in groups]])
    return buf.getvalue()
