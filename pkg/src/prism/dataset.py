"""Windowed multichannel samples, splitting, JSON-lines I/O and synthetic data."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _jsonio
from ._rng import stream
from .errors import InputError, ParseError, SchemaError

STANDARD_GRAVITY = 9.80665
# Default layout: three accelerometer axes followed by three gyroscope axes.
ACC_MASK_6 = (True, True, True, False, False, False)


@dataclass(eq=False)
class Sample:
    id: str
    window: np.ndarray
    label: int
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.window = np.asarray(self.window, dtype=np.float64)
        self.label = int(self.label)
        if self.window.ndim != 2:
            raise SchemaError(f"sample {self.id!r}: window must be T x C, got {self.window.shape}")
        if not np.all(np.isfinite(self.window)):
            raise SchemaError(f"sample {self.id!r}: window has non-finite entries")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (self.id == other.id and self.label == other.label and self.meta == other.meta
                and self.window.shape == other.window.shape
                and np.array_equal(self.window, other.window))


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple[Sample, ...]
    num_classes: int
    window_len: int
    channels: int
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise SchemaError("dataset is empty")
        if self.num_classes < 1:
            raise SchemaError("num_classes must be positive")
        seen = set()
        for s in self.samples:
            if s.window.shape != (self.window_len, self.channels):
                raise SchemaError(f"sample {s.id!r}: window {s.window.shape} != "
                                  f"({self.window_len}, {self.channels})")
            if not 0 <= s.label < self.num_classes:
                raise SchemaError(f"sample {s.id!r}: label {s.label} outside [0, {self.num_classes})")
            if s.id in seen:
                raise SchemaError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.num_classes == other.num_classes and self.window_len == other.window_len
                and self.channels == other.channels and self.name == other.name
                and len(self) == len(other)
                and all(a == b for a, b in zip(self.samples, other.samples)))

    @cached_property
    def flat(self) -> np.ndarray:
        """``N x (T*C)`` matrix of flattened windows (row-major, time first)."""
        x = np.stack([s.window.reshape(-1) for s in self.samples])
        x.setflags(write=False)
        return x

    @cached_property
    def labels(self) -> np.ndarray:
        y = np.array([s.label for s in self.samples], dtype=np.int64)
        y.setflags(write=False)
        return y

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def meta_values(self, key: str) -> list[str | None]:
        return [s.meta.get(key) for s in self.samples]

    def subset(self, indices: Iterable[int], name: str | None = None) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices), self.num_classes,
                       self.window_len, self.channels, name or self.name)

    def class_coverage(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0


@dataclass
class SynthDomainSpec:
    """One latent domain of the synthetic generator.

    ``class_motifs[c]`` is ``(cycles_per_window, phase, amplitude)`` for
    class ``c``. Channel ``j`` of the motif stack is the class sinusoid with
    an extra phase offset ``2*pi*j/C``; the stack is then mixed across
    channels, scaled, offset and corrupted with Gaussian noise.
    """

    domain_id: int
    channel_mix: np.ndarray
    channel_bias: np.ndarray
    amplitude_scale: float = 1.0
    noise_sigma: float = 0.0
    class_motifs: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.channel_mix = np.asarray(self.channel_mix, dtype=np.float64)
        self.channel_bias = np.asarray(self.channel_bias, dtype=np.float64)
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be nonnegative")
        if self.amplitude_scale <= 0:
            raise InputError("amplitude_scale must be positive")


def normalize_gravity(dataset: Dataset, g: float = STANDARD_GRAVITY,
                      channel_mask: Sequence[bool] = ACC_MASK_6) -> Dataset:
    """Divide accelerometer channels (``channel_mask``) by ``g``."""
    if g <= 0:
        raise InputError(f"g must be positive, got {g}")
    mask = np.asarray(channel_mask, dtype=bool)
    if mask.shape != (dataset.channels,):
        raise InputError(f"channel mask needs {dataset.channels} entries, got {mask.shape}")
    if not mask.any():
        return dataset
    out = []
    for s in dataset.samples:
        w = s.window.copy()
        w[:, mask] = s.window[:, mask] / g
        out.append(Sample(s.id, w, s.label, dict(s.meta)))
    return Dataset(tuple(out), dataset.num_classes, dataset.window_len, dataset.channels, dataset.name)


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise InputError(f"split ratios must be three nonnegative reals summing to 1, got {ratios}")
    n_train = int(round(n * r[0]))
    n_val = int(round(n * r[1]))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InputError(f"ratios {tuple(ratios)} leave an empty split for N={n}")
    return n_train, n_val, n_test


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle, then cut into train / val / test."""
    n_train, n_val, _ = split_sizes(len(dataset), spec.ratios)
    order = stream(spec.seed, "split").permutation(len(dataset))
    return (dataset.subset(order[:n_train], f"{dataset.name}/train"),
            dataset.subset(order[n_train:n_train + n_val], f"{dataset.name}/val"),
            dataset.subset(order[n_train + n_val:], f"{dataset.name}/test"))


# --------------------------------------------------------------------------
# JSON-lines I/O

def dumps_jsonl(dataset: Dataset) -> str:
    header = {"num_classes": dataset.num_classes, "window_len": dataset.window_len,
              "channels": dataset.channels, "name": dataset.name}
    lines = [_jsonio.dumps(header)]
    for s in dataset.samples:
        lines.append(_jsonio.dumps({"id": s.id, "label": s.label, "meta": s.meta, "window": s.window}))
    return "\n".join(lines) + "\n"


def save_jsonl(dataset: Dataset, path: str | os.PathLike) -> None:
    _jsonio.write_atomic(path, dumps_jsonl(dataset))


def load_jsonl(path: str | os.PathLike) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_jsonl(fh)


def parse_jsonl(lines: Iterable[str]) -> Dataset:
    header = None
    samples = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno)
        if header is None:
            try:
                header = {k: obj[k] for k in ("num_classes", "window_len", "channels")}
            except KeyError as exc:
                raise ParseError(f"header missing field {exc}", lineno) from None
            header["name"] = str(obj.get("name", "dataset"))
            continue
        try:
            window = np.asarray(obj["window"], dtype=np.float64)
            label = obj["label"]
            sid = obj["id"]
            meta = obj.get("meta", {})
        except KeyError as exc:
            raise ParseError(f"record missing field {exc}", lineno) from None
        except (TypeError, ValueError):
            raise SchemaError(f"line {lineno}: window is not a rectangular numeric array") from None
        if not isinstance(label, int) or isinstance(label, bool):
            raise SchemaError(f"line {lineno}: label must be an integer")
        if not isinstance(sid, str):
            raise SchemaError(f"line {lineno}: id must be a string")
        if not isinstance(meta, dict) or not all(isinstance(v, str) for v in meta.values()):
            raise SchemaError(f"line {lineno}: meta must map strings to strings")
        if window.shape != (header["window_len"], header["channels"]):
            raise SchemaError(f"line {lineno}: window shape {window.shape} != "
                              f"({header['window_len']}, {header['channels']})")
        if not 0 <= label < header["num_classes"]:
            raise SchemaError(f"line {lineno}: label {label} outside [0, {header['num_classes']})")
        samples.append(Sample(sid, window, label, dict(meta)))
    if header is None:
        raise ParseError("file is empty (no header line)")
    return Dataset(tuple(samples), int(header["num_classes"]), int(header["window_len"]),
                   int(header["channels"]), header["name"])


# --------------------------------------------------------------------------
# Synthetic generator

def motif_stack(motif: tuple[float, float, float], T: int, C: int) -> np.ndarray:
    freq, phase, amp = motif
    t = np.arange(T, dtype=np.float64)[:, None] / T
    offsets = 2.0 * np.pi * np.arange(C, dtype=np.float64)[None, :] / C
    return amp * np.sin(2.0 * np.pi * freq * t + phase + offsets)


def clean_window(spec: SynthDomainSpec, label: int, T: int, C: int) -> np.ndarray:
    """Noise-free window for ``label`` in domain ``spec``."""
    return spec.amplitude_scale * motif_stack(spec.class_motifs[label], T, C) @ spec.channel_mix.T \
        + spec.channel_bias


def generate_synthetic(domain_specs: Sequence[SynthDomainSpec], samples_per_domain_per_class: int,
                       T: int, C: int, num_classes: int, seed: int,
                       name: str = "synthetic") -> Dataset:
    """Emit ``samples_per_domain_per_class`` windows for every (domain, class).

    Samples are ordered domain-major, then by repetition, then by class, so
    contiguous stretches of the file come from one domain (like recordings
    grouped by session). Each sample's noise is drawn from its own stream
    keyed by (seed, domain, repetition, class).
    """
    if not domain_specs:
        raise InputError("need at least one domain")
    if num_classes < 2:
        raise InputError("need at least two classes")
    if samples_per_domain_per_class < 1:
        raise InputError("samples_per_domain_per_class must be >= 1")
    for spec in domain_specs:
        if spec.channel_mix.shape != (C, C) or spec.channel_bias.shape != (C,):
            raise InputError(f"domain {spec.domain_id}: mix/bias shapes do not match C={C}")
        if np.linalg.matrix_rank(spec.channel_mix) < C or np.linalg.cond(spec.channel_mix) > 1e12:
            raise InputError(f"domain {spec.domain_id}: channel_mix is singular")
        if len(spec.class_motifs) < num_classes:
            raise InputError(f"domain {spec.domain_id}: need {num_classes} class motifs")
    samples = []
    for d_idx, spec in enumerate(domain_specs):
        templates = [clean_window(spec, c, T, C) for c in range(num_classes)]
        for rep in range(samples_per_domain_per_class):
            for c in range(num_classes):
                w = templates[c]
                if spec.noise_sigma > 0:
                    w = w + stream(seed, "synth", d_idx, rep, c).normal(0.0, spec.noise_sigma, size=(T, C))
                samples.append(Sample(f"d{spec.domain_id}-c{c}-{rep:05d}", w, c,
                                      {"domain": str(spec.domain_id)}))
    return Dataset(tuple(samples), num_classes, T, C, name)


def _rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def base_motifs(num_classes: int, amplitude: float = 1.0) -> list[tuple[float, float, float]]:
    """Distinct sinusoid motifs, one per class."""
    return [(1.0 + c, 0.7 * c, amplitude) for c in range(num_classes)]


def device_domain_specs(n_domains: int, num_classes: int, channels: int = 6, shift: float = 1.0,
                        noise_sigma: float = 1.0, permute_labels: bool = True,
                        gravity: float = 2.0, motion_amplitude: float = 0.3,
                        rotate_motion: bool = False) -> list[SynthDomainSpec]:
    """Domains that mimic one set of motions recorded by differently mounted devices.

    Domain ``d`` is tilted by ``shift * d * 2*pi/n_domains`` about an axis
    nearly perpendicular to gravity, so the constant gravity offset on the
    accelerometer triad points somewhere else in every domain, and its
    motion amplitude is scaled by ``1 + 0.25 * shift * d``. With
    ``rotate_motion`` the tilt is also applied to the motion signal of both
    triads (``channel_mix``); otherwise the mix is the identity.

    With ``permute_labels`` the class-to-motif mapping is cyclically shifted
    per domain: the same motion means a different label in another domain, a
    task-dependent shift a single model cannot absorb without knowing the
    domain. ``shift = 0`` with ``permute_labels=False`` gives identical
    domains.
    """
    if channels % 3:
        raise InputError("channels must be a multiple of 3 (sensor triads)")
    motifs = base_motifs(num_classes, motion_amplitude)
    axis = np.array([1.0, 0.4, 0.2])
    specs = []
    for d in range(n_domains):
        rot = _rotation(axis, shift * d * 2.0 * np.pi / max(n_domains, 1))
        mix = np.kron(np.eye(channels // 3), rot) if rotate_motion else np.eye(channels)
        bias = np.zeros(channels)
        bias[:3] = rot @ np.array([0.0, 0.0, gravity])
        order = [(c + d) % num_classes for c in range(num_classes)] if permute_labels \
            else list(range(num_classes))
        specs.append(SynthDomainSpec(
            domain_id=d, channel_mix=mix, channel_bias=bias,
            amplitude_scale=1.0 + 0.25 * shift * d, noise_sigma=noise_sigma,
            class_motifs=[motifs[o] for o in order]))
    return specs
