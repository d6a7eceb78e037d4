"""Standard synthetic fixtures plus the comparison and sweep runners."""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .baselines import (ComparisonRow, fit_cluster_data, fit_cluster_feature, fit_semantic,
                        p0_pack, per_group_accuracy)
from .dataset import (Dataset, SplitSpec, SynthDomainSpec, device_domain_specs, generate_synthetic,
                      split)
from .errors import InputError
from .metrics import evaluate_labels
from .tde import TdeConfig, mine, train_initial

COMPARE_METHODS = ("p0", "sem", "cd", "cf", "prism")
SWEEP_PARAMS = ("alpha", "n", "margin")


@dataclass
class GenConfig:
    """Parameters of the device-mounting synthetic family (see ``device_domain_specs``)."""

    n_domains: int = 4
    num_classes: int = 4
    per_cell: int = 50
    window_len: int = 64
    channels: int = 6
    shift: float = 1.0
    noise_sigma: float = 1.0
    gravity: float = 2.0
    motion_amplitude: float = 0.3
    rotate_motion: bool = False
    permute_labels: bool = True
    seed: int = 0
    name: str = "synthetic"

    def specs(self) -> list[SynthDomainSpec]:
        return device_domain_specs(self.n_domains, self.num_classes, self.channels, self.shift,
                                   self.noise_sigma, self.permute_labels, self.gravity,
                                   self.motion_amplitude, self.rotate_motion)

    def generate(self) -> Dataset:
        return generate_synthetic(self.specs(), self.per_cell, self.window_len, self.channels,
                                  self.num_classes, self.seed, self.name)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown generator keys: {sorted(unknown)}")
        return cls(**d)


def four_domain_fixture(seed: int = 0, per_cell: int = 50) -> Dataset:
    return GenConfig(per_cell=per_cell, seed=seed, name="four-domain").generate()


def single_domain_fixture(seed: int = 0, per_cell: int = 200) -> Dataset:
    """Same size as the four-domain fixture but drawn from one domain."""
    return GenConfig(n_domains=1, per_cell=per_cell, seed=seed, name="single-domain").generate()


def two_domain_fixture(seed: int = 0, per_cell: int = 30, noise_sigma: float = 0.5) -> Dataset:
    """Two domains tilted half a turn apart with permuted labels.

    Noise is half that of the four-domain fixture so that a model trained on
    one domain alone is clearly better than the pooled model; with only 18
    training windows per (domain, class) the default noise leaves per-domain
    fine-tuning barely above the pooled error.
    """
    return GenConfig(n_domains=2, per_cell=per_cell, noise_sigma=noise_sigma, seed=seed,
                     name="two-domain").generate()


def shift_ladder(seed: int = 0, shifts=(0.0, 0.5, 1.0), per_cell: int = 50) -> list[Dataset]:
    """Four-domain datasets of increasing covariate shift and the same labelling."""
    return [GenConfig(shift=s, permute_labels=False, per_cell=per_cell, seed=seed,
                      name=f"shift-{s:g}").generate() for s in shifts]


# --------------------------------------------------------------------------
# comparison

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PRISM_THREADS", "1")))
    except ValueError:
        raise InputError("PRISM_THREADS must be an integer") from None


def _map(fn, jobs: list) -> list:
    """Run ``fn`` over ``jobs``, in worker processes when PRISM_THREADS > 1."""
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def compare_seed(job: tuple) -> list[ComparisonRow]:
    """All five methods on one seed, sharing a single initial model."""
    data, spec, config, seed, meta_key = job
    cfg = config.replace(seed=seed)
    train, val, test = split(data, SplitSpec(spec.ratios, seed))
    initial = train_initial(train, val, cfg)
    _, probs = p0_pack(train, val, cfg, initial).predict_proba(test.flat)
    predictions = {"p0": np.argmax(probs, axis=1)}
    for name, model in (("sem", fit_semantic(train, val, meta_key, cfg, initial)),
                        ("cd", fit_cluster_data(train, val, cfg.n, cfg, initial)),
                        ("cf", fit_cluster_feature(train, val, cfg.n, cfg, initial))):
        predictions[name] = predictions["p0"] if model is None else model.predict(test)[1]
    pack, _, _ = mine(train, val, cfg, initial=initial)
    predictions["prism"] = pack.predict_labels(test.flat)
    rows = []
    for method in COMPARE_METHODS:
        pred = predictions[method]
        rep = evaluate_labels(test.labels, pred, test.num_classes)
        rows.append(ComparisonRow(method, seed, rep.accuracy, rep.macro_f1,
                                  per_group_accuracy(test, pred, meta_key)))
    return rows


def run_comparison(data: Dataset, config: TdeConfig, seeds, spec: SplitSpec | None = None,
                   meta_key: str = "domain") -> list[ComparisonRow]:
    seeds = list(seeds)
    if not seeds:
        raise InputError("need at least one seed")
    spec = spec or SplitSpec()
    jobs = [(data, spec, config, s, meta_key) for s in seeds]
    rows = [r for batch in _map(compare_seed, jobs) for r in batch]
    order = {m: i for i, m in enumerate(COMPARE_METHODS)}
    return sorted(rows, key=lambda r: (order[r.method], r.seed))


def mean_by_method(rows: list[ComparisonRow], metric: str = "macro_f1") -> dict[str, float]:
    out = {}
    for method in COMPARE_METHODS:
        vals = [getattr(r, metric) for r in rows if r.method == method]
        if vals:
            out[method] = float(np.mean(vals))
    return out


# --------------------------------------------------------------------------
# sweep

@dataclass
class SweepRow:
    param: str
    value: float
    seed: int
    accuracy: float
    macro_f1: float
    ari: float | None = None
    best_epoch: int = 0


def _cast(param: str, value):
    return int(value) if param == "n" else float(value)


def sweep_seed(job: tuple) -> list[SweepRow]:
    data, spec, config, seed, param, values = job
    cfg = config.replace(seed=seed)
    train, val, test = split(data, SplitSpec(spec.ratios, seed))
    initial = train_initial(train, val, cfg)
    rows = []
    for v in values:
        pack, part, _ = mine(train, val, cfg.replace(**{param: v}), initial=initial)
        rep = evaluate_labels(test.labels, pack.predict_labels(test.flat), test.num_classes)
        rows.append(SweepRow(param, v, seed, rep.accuracy, rep.macro_f1,
                             part.ari_vs_meta, pack.provenance.get("best_epoch", 0)))
    return rows


def run_sweep(data: Dataset, config: TdeConfig, param: str, values, seeds,
              spec: SplitSpec | None = None) -> list[SweepRow]:
    """Mine once per (value, seed) with ``param`` overridden; M_0 is shared per seed."""
    if param not in SWEEP_PARAMS:
        raise InputError(f"can only sweep one of {SWEEP_PARAMS}, got {param!r}")
    values = [_cast(param, v) for v in values]
    seeds = list(seeds)
    if not values:
        raise InputError("sweep grid is empty")
    if not seeds:
        raise InputError("need at least one seed")
    for v in values:
        config.replace(**{param: v})  # validate before any training
    spec = spec or SplitSpec()
    rows = [r for batch in _map(sweep_seed, [(data, spec, config, s, param, values) for s in seeds])
            for r in batch]
    return sorted(rows, key=lambda r: (values.index(r.value), r.seed))


def sweep_medians(rows: list[SweepRow], metric: str = "accuracy") -> dict[float, float]:
    out: dict[float, list[float]] = {}
    for r in rows:
        out.setdefault(r.value, []).append(getattr(r, metric))
    return {v: float(np.median(vals)) for v, vals in out.items()}


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "seed", "accuracy", "macro_f1", "ari", "best_epoch"])
    for r in rows:
        w.writerow([r.param, r.value, r.seed, repr(r.accuracy), repr(r.macro_f1),
                    "" if r.ari is None else repr(r.ari), r.best_epoch])
    return buf.getvalue()
