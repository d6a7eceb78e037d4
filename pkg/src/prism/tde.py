"""Task-specific domain estimation.

An initial encoder + classifier is trained on all data, its classifier is
copied into ``n`` per-domain heads, and then an EM loop alternates

* E-step: k-means over encoder embeddings assigns every training sample to
  one of ``n`` domains;
* M-step: full-batch descent on ``alpha * L_contrastive + L_task`` where the
  contrastive term pulls same-domain embeddings together and pushes
  different-domain ones at least ``margin`` apart, and the task term routes
  each sample through the head of its assigned domain.

Every descent step is backtracked until the objective (on a fixed pair
sample and fixed assignment) does not increase.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._rng import stream
from .clustering import adjusted_rand_index, assign_all, kmeans
from .dataset import Dataset
from .errors import InputError, NumericError
from .metrics import macro_f1
from .numerics import (FeedforwardNet, GradientSet, contrastive_pair_loss, forward_cached,
                       net_forward, net_gradients, sgd_step, softmax, softmax_cross_entropy)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class TdeConfig:
    n: int = 4
    # weight of the contrastive term; the within-domain pull acts on unit
    # vectors and at 0.1 it flattens class structure in a small embedding
    alpha: float = 0.01
    margin: float = 1.0
    epochs: int = 200
    m_step_passes: int = 5
    lr: float = 0.05
    backtrack: float = 0.5
    max_halvings: int = 20
    # after a step accepted at the first trial the next trial lr grows by this factor
    lr_growth: float = 2.0
    lr_max: float = 5.0
    pairs_per_epoch: int | None = None  # None -> 4 * N
    seed: int = 0
    # one affine encoder layer and linear heads: a single head cannot express
    # a domain-dependent labelling, a head per domain can
    encoder_dims: tuple[int, ...] = (32,)
    head_dims: tuple[int, ...] = ()
    contrastive_pairs: str = "domain"
    # distances for the contrastive term: "unit" (L2-normalized embeddings) or "raw"
    contrastive_space: str = "unit"
    kmeans_restarts: int = 5
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    finetune_passes: int = 20

    def __post_init__(self):
        self.encoder_dims = tuple(int(d) for d in self.encoder_dims)
        self.head_dims = tuple(int(d) for d in self.head_dims)
        if self.n < 1:
            raise InputError(f"n must be >= 1, got {self.n}")
        if self.alpha < 0 or self.margin <= 0:
            raise InputError("alpha must be >= 0 and margin > 0")
        if self.epochs < 0 or self.m_step_passes < 1:
            raise InputError("epochs must be >= 0 and m_step_passes >= 1")
        if self.lr <= 0 or not 0 < self.backtrack < 1 or self.lr_growth < 1:
            raise InputError("need lr > 0, 0 < backtrack < 1, lr_growth >= 1")
        if not self.encoder_dims or min(self.encoder_dims) < 1 or min(self.head_dims, default=1) < 1:
            raise InputError("layer sizes must be positive")
        if self.contrastive_pairs not in ("domain", "class"):
            raise InputError("contrastive_pairs must be 'domain' or 'class'")
        if self.contrastive_space not in ("unit", "raw"):
            raise InputError("contrastive_space must be 'unit' or 'raw'")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < 2:
            raise InputError("pairs_per_epoch must be >= 2")

    @property
    def feature_dim(self) -> int:
        return self.encoder_dims[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_dims"] = list(self.encoder_dims)
        d["head_dims"] = list(self.head_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TdeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TdeConfig":
        return TdeConfig.from_dict({**self.to_dict(), **changes})


@dataclass
class InitialModel:
    """The single encoder + classifier trained on all data (M_0)."""

    encoder: FeedforwardNet
    head: FeedforwardNet
    val_accuracy: float
    best_epoch: int
    losses: list[float] = field(default_factory=list)

    def predict_proba(self, x) -> np.ndarray:
        return softmax(net_forward(self.head, net_forward(self.encoder, x)))


@dataclass
class ModelPack:
    encoder: FeedforwardNet
    heads: list[FeedforwardNet]
    centroids: np.ndarray | None
    config: TdeConfig
    num_classes: int
    schema_version: int = SCHEMA_VERSION
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        feat = self.encoder.out_dim
        for i, h in enumerate(self.heads):
            if h.in_dim != feat or h.out_dim != self.num_classes:
                raise InputError(f"head {i} maps {h.in_dim}->{h.out_dim}, "
                                 f"expected {feat}->{self.num_classes}")
        if self.centroids is not None:
            self.centroids = np.asarray(self.centroids, dtype=np.float64)
            if self.centroids.shape != (len(self.heads), feat):
                raise InputError(f"centroids {self.centroids.shape} do not match "
                                 f"{len(self.heads)} heads x {feat} features")

    @property
    def n(self) -> int:
        return len(self.heads)

    def copy(self) -> "ModelPack":
        return ModelPack(self.encoder.copy(), [h.copy() for h in self.heads],
                         None if self.centroids is None else self.centroids.copy(),
                         self.config, self.num_classes, self.schema_version,
                         copy.deepcopy(self.provenance))

    def embed(self, x) -> np.ndarray:
        return net_forward(self.encoder, x)

    def route(self, features: np.ndarray) -> np.ndarray:
        if self.centroids is None:
            raise InputError("pack has no centroids yet; run an E-step first")
        return assign_all(self.centroids, features)

    def predict_proba(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Chosen domain per row and class probabilities from that domain's head only."""
        feats = self.embed(x)
        domains = self.route(feats)
        probs = np.empty((feats.shape[0], self.num_classes))
        for k in np.unique(domains):
            rows = domains == k
            probs[rows] = softmax(net_forward(self.heads[k], feats[rows]))
        return domains, probs

    def predict_labels(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x)[1], axis=1)


@dataclass
class PartitionResult:
    ids: list[str]
    assignment: np.ndarray
    centroids: np.ndarray
    domain_sizes: list[int]
    ari_vs_meta: float | None = None

    def as_dict(self) -> dict[str, int]:
        return {sid: int(a) for sid, a in zip(self.ids, self.assignment)}


@dataclass
class EpochRecord:
    epoch: int
    l_c: float
    l_t: float
    l_tde: float
    l_tde_post_e: float
    steps: list[float]
    skipped_steps: int
    val_macro_f1: float
    ari: float | None


@dataclass
class LossTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_csv(self) -> str:
        head = "epoch,l_c,l_t,l_tde,l_tde_post_e,accepted_steps,skipped_steps,val_macro_f1,ari"
        rows = [head]
        for r in self.records:
            ari = "" if r.ari is None else repr(r.ari)
            rows.append(f"{r.epoch},{r.l_c!r},{r.l_t!r},{r.l_tde!r},{r.l_tde_post_e!r},"
                        f"{len(r.steps)},{r.skipped_steps},{r.val_macro_f1!r},{ari}")
        return "\n".join(rows) + "\n"


# --------------------------------------------------------------------------
# descent

class LineSearch:
    """Full-batch descent accepting a step only when the loss does not go up.

    The trial learning rate starts at the last accepted value, is halved up
    to ``max_halvings`` times on failure, and is multiplied by ``lr_growth``
    after a first-try acceptance.
    """

    def __init__(self, config: TdeConfig):
        self.cfg = config
        self.lr = config.lr

    def step(self, nets: list[FeedforwardNet], loss: float, grads: list[GradientSet],
             loss_fn: Callable[[list[FeedforwardNet]], float]):
        """Return ``(nets, loss, accepted)``."""
        if not np.isfinite(loss):
            raise NumericError(f"objective is not finite: {loss}")
        lr = self.lr
        for attempt in range(self.cfg.max_halvings + 1):
            try:
                trial = [sgd_step(net, g, lr) for net, g in zip(nets, grads)]
                with np.errstate(over="ignore", invalid="ignore"):
                    new_loss = loss_fn(trial)
            except NumericError:
                new_loss = np.inf
            if np.isfinite(new_loss) and new_loss <= loss:
                grow = self.cfg.lr_growth if attempt == 0 else 1.0
                self.lr = min(lr * grow, self.cfg.lr_max)
                return trial, new_loss, True
            lr *= self.cfg.backtrack
        self.lr = self.cfg.lr
        return nets, loss, False


def _ce_objective(encoder: FeedforwardNet, head: FeedforwardNet, x: np.ndarray, y: np.ndarray,
                  need_grad: bool = True):
    enc = forward_cached(encoder, x)
    hc = forward_cached(head, enc.output)
    loss, g_logits = softmax_cross_entropy(hc.output, y)
    if not need_grad:
        return loss
    g_head, g_feat = net_gradients(head, None, g_logits, cache=hc)
    g_enc, _ = net_gradients(encoder, None, g_feat, cache=enc)
    return loss, [g_enc, g_head]


def descend_ce(encoder: FeedforwardNet, head: FeedforwardNet, data: Dataset, passes: int,
               search: LineSearch, val: Dataset | None = None):
    """Backtracking descent on mean cross-entropy; keeps the best-val snapshot.

    Returns ``(encoder, head, losses, best_epoch, best_val_accuracy)``. Ties
    in validation accuracy keep the earlier snapshot, which is the less
    fitted one. Without ``val`` the last iterate is returned.
    """
    x, y = data.flat, data.labels
    nets = [encoder, head]

    def val_acc(ns):
        if val is None:
            return 0.0
        pred = np.argmax(net_forward(ns[1], net_forward(ns[0], val.flat)), axis=1)
        return float(np.mean(pred == val.labels))

    best, best_acc, best_epoch = nets, val_acc(nets), 0
    loss, grads = _ce_objective(*nets, x, y)
    losses = [loss]
    for epoch in range(1, passes + 1):
        nets, loss, accepted = search.step(
            nets, loss, grads, lambda ns: _ce_objective(ns[0], ns[1], x, y, need_grad=False))
        losses.append(loss)
        if val is not None:
            acc = val_acc(nets)
            if acc > best_acc:
                best, best_acc, best_epoch = nets, acc, epoch
        if epoch < passes:
            loss, grads = _ce_objective(*nets, x, y)
    if val is None:
        best, best_epoch = nets, passes
    return best[0], best[1], losses, best_epoch, best_acc


def build_initial_nets(input_dim: int, num_classes: int, config: TdeConfig):
    encoder = FeedforwardNet.init([input_dim, *config.encoder_dims], stream(config.seed, "init-encoder"))
    head = FeedforwardNet.init([config.feature_dim, *config.head_dims, num_classes],
                               stream(config.seed, "init-head"))
    return encoder, head


def train_initial(train: Dataset, val: Dataset, config: TdeConfig) -> InitialModel:
    """Train the shared encoder + single classifier on all training samples."""
    if np.any(train.class_coverage() == 0):
        raise InputError("training split does not cover every class")
    encoder, head = build_initial_nets(train.window_len * train.channels, train.num_classes, config)
    encoder, head, losses, best_epoch, acc = descend_ce(encoder, head, train, config.epochs,
                                                        LineSearch(config), val)
    return InitialModel(encoder, head, acc, best_epoch, losses)


def init_pack(initial: InitialModel, n: int, config: TdeConfig, num_classes: int | None = None) -> ModelPack:
    """Shared encoder from M_0 and ``n`` identical copies of its classifier."""
    if n < 2:
        raise InputError(f"a domain pack needs n >= 2, got {n}")
    k = num_classes if num_classes is not None else initial.head.out_dim
    return ModelPack(initial.encoder.copy(), [initial.head.copy() for _ in range(n)], None,
                     config.replace(n=n), k)


def single_domain_pack(initial: InitialModel, train: Dataset, config: TdeConfig) -> ModelPack:
    """A one-head pack that behaves exactly like M_0."""
    centroid = net_forward(initial.encoder, train.flat).mean(axis=0, keepdims=True)
    return ModelPack(initial.encoder.copy(), [initial.head.copy()], centroid,
                     config.replace(n=1), train.num_classes)


# --------------------------------------------------------------------------
# E-step

def _align_labels(new: np.ndarray, previous: np.ndarray, n: int) -> np.ndarray:
    """Permute cluster ids of ``new`` to overlap ``previous`` as much as possible."""
    overlap = np.zeros((n, n))
    np.add.at(overlap, (new, previous), 1)
    rows, cols = linear_sum_assignment(-overlap)
    mapping = np.empty(n, dtype=np.int64)
    mapping[rows] = cols
    return mapping


def ground_truth_domains(data: Dataset, key: str = "domain") -> list[str] | None:
    values = data.meta_values(key)
    return None if any(v is None for v in values) else values


def e_step(pack: ModelPack, train: Dataset, seed: int | None = None,
           previous: np.ndarray | None = None) -> PartitionResult:
    """Cluster current embeddings into ``pack.n`` domains and store the centroids.

    When ``previous`` is given the new cluster ids are permuted to agree
    with it as far as possible, so head ``i`` keeps serving the same domain.
    """
    cfg = pack.config
    feats = pack.embed(train.flat)
    model = kmeans(feats, pack.n, seed=cfg.seed if seed is None else seed,
                   max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol, n_init=cfg.kmeans_restarts)
    assignment, centroids = model.assignment, model.centroids
    if previous is not None:
        mapping = _align_labels(assignment, np.asarray(previous), pack.n)
        assignment = mapping[assignment]
        reordered = np.empty_like(centroids)
        reordered[mapping] = centroids
        centroids = reordered
    pack.centroids = centroids.copy()
    truth = ground_truth_domains(train)
    ari = adjusted_rand_index(truth, assignment) if truth is not None else None
    return PartitionResult(train.ids, assignment, centroids.copy(),
                           np.bincount(assignment, minlength=pack.n).tolist(), ari)


# --------------------------------------------------------------------------
# M-step

@dataclass
class PairSample:
    left: np.ndarray
    right: np.ndarray
    same: np.ndarray  # 1.0 for pairs to pull together, 0.0 to push apart

    def __len__(self) -> int:
        return self.left.shape[0]


def sample_pairs(groups: np.ndarray, count: int, rng: np.random.Generator) -> PairSample:
    """Half same-group, half different-group pairs with uniform anchors.

    Positive partners exclude the anchor itself unless its group is a
    singleton. If every sample shares one group, all pairs are positive.
    """
    groups = np.asarray(groups)
    N = groups.shape[0]
    order = np.argsort(groups, kind="stable")
    sorted_groups = groups[order]
    rank = np.empty(N, dtype=np.int64)
    rank[order] = np.arange(N)
    _, start, size = np.unique(sorted_groups, return_index=True, return_counts=True)
    block = np.searchsorted(np.unique(sorted_groups), groups)
    n_pos = count // 2
    n_neg = count - n_pos

    anchors = rng.integers(N, size=count)
    a_start, a_size = start[block[anchors]], size[block[anchors]]
    partners = np.empty(count, dtype=np.int64)

    pa = anchors[:n_pos]
    ps, pz = a_start[:n_pos], a_size[:n_pos]
    r = np.floor(rng.random(n_pos) * np.maximum(pz - 1, 1)).astype(np.int64)
    pos = ps + r
    pos = np.where((pz > 1) & (pos >= rank[pa]), pos + 1, pos)
    pos = np.where(pz > 1, pos, rank[pa])
    partners[:n_pos] = order[pos]
    same = np.ones(count)

    na = anchors[n_pos:]
    ns, nz = a_start[n_pos:], a_size[n_pos:]
    others = N - nz
    if np.all(others == 0):
        r = np.floor(rng.random(n_neg) * np.maximum(nz - 1, 1)).astype(np.int64)
        pos = np.where((nz > 1) & (ns + r >= rank[na]), ns + r + 1, ns + r)
        pos = np.where(nz > 1, pos, rank[na])
        partners[n_pos:] = order[pos]
    else:
        r = np.floor(rng.random(n_neg) * np.maximum(others, 1)).astype(np.int64)
        pos = np.where(r < ns, r, r + nz)
        partners[n_pos:] = order[pos]
        same[n_pos:] = 0.0
    return PairSample(anchors, partners, same)


def _tde_objective(nets: Sequence[FeedforwardNet], x: np.ndarray, y: np.ndarray,
                   assignment: np.ndarray, pairs: PairSample, alpha: float, margin: float,
                   need_grad: bool = True, unit: bool = True):
    encoder, heads = nets[0], nets[1:]
    enc = forward_cached(encoder, x)
    h = enc.output
    N = h.shape[0]

    if unit:
        norms = np.maximum(np.sqrt(np.sum(h * h, axis=1, keepdims=True)), 1e-12)
        z = h / norms
    else:
        z = h
    diff = z[pairs.left] - z[pairs.right]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    terms, dterm = contrastive_pair_loss(dist, pairs.same, margin)
    scale = 1.0 / (2.0 * len(pairs))
    l_c = float(np.sum(terms) * scale)

    l_t = 0.0
    head_grads: list[GradientSet] = []
    g_h = np.zeros_like(h)
    for k, head in enumerate(heads):
        rows = np.flatnonzero(assignment == k)
        if rows.size == 0:
            head_grads.append(GradientSet.zeros_like(head))
            continue
        hc = forward_cached(head, h[rows])
        ce, g_logits = softmax_cross_entropy(hc.output, y[rows])
        share = rows.size / N
        l_t += ce * share
        if need_grad:
            g_head, g_in = net_gradients(head, None, g_logits * share, cache=hc)
            head_grads.append(g_head)
            g_h[rows] += g_in
    l_tde = alpha * l_c + l_t
    if not need_grad:
        return l_c, l_t, l_tde

    # d/dh of each pair term; positives use 2(h_i - h_j) directly so d = 0 is fine
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(pairs.same == 1.0, 2.0, np.where(dist > 0, dterm / dist, 0.0))
    g_pair = (alpha * scale) * coef[:, None] * diff
    g_c = np.zeros_like(h)
    np.add.at(g_c, pairs.left, g_pair)
    np.add.at(g_c, pairs.right, -g_pair)
    if unit:
        # back through z = h / |h|
        g_c = (g_c - np.sum(g_c * z, axis=1, keepdims=True) * z) / norms
    g_enc, _ = net_gradients(encoder, None, g_h + g_c, cache=enc)
    return (l_c, l_t, l_tde), [g_enc, *head_grads]


def make_pairs(train: Dataset, assignment: np.ndarray, config: TdeConfig, key) -> PairSample:
    groups = assignment if config.contrastive_pairs == "domain" else train.labels
    count = config.pairs_per_epoch or 4 * len(train)
    return sample_pairs(groups, count, stream(config.seed, "pairs", key))


def total_loss(pack: ModelPack, train: Dataset, assignment, pairs: PairSample,
               alpha: float, margin: float) -> tuple[float, float, float]:
    """``(L_c, L_t, alpha * L_c + L_t)`` without touching the pack."""
    return _tde_objective([pack.encoder, *pack.heads], train.flat, train.labels,
                          np.asarray(assignment), pairs, alpha, margin, need_grad=False,
                          unit=pack.config.contrastive_space == "unit")


@dataclass
class MStepResult:
    l_c: float
    l_t: float
    l_tde: float
    l_tde_start: float
    steps: list[float]
    skipped: int


def m_step(pack: ModelPack, train: Dataset, assignment, config: TdeConfig,
           search: LineSearch | None = None, pairs: PairSample | None = None,
           pair_key=0) -> tuple[ModelPack, MStepResult]:
    """``m_step_passes`` backtracked descent steps on the joint objective.

    The pair sample is drawn once and held fixed for the whole call, so the
    accepted objective values in ``MStepResult.steps`` are comparable and
    non-increasing.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (len(train),) or assignment.min() < 0 or assignment.max() >= pack.n:
        raise InputError("assignment must give every training sample a domain in [0, n)")
    search = search or LineSearch(config)
    if pairs is None:
        pairs = make_pairs(train, assignment, config, pair_key)
    x, y = train.flat, train.labels
    nets = [pack.encoder, *pack.heads]

    def objective(ns, need_grad=True):
        return _tde_objective(ns, x, y, assignment, pairs, config.alpha, config.margin, need_grad,
                              unit=config.contrastive_space == "unit")

    (l_c, l_t, l_tde), grads = objective(nets)
    start = l_tde
    steps, skipped = [], 0
    for p in range(config.m_step_passes):
        nets, l_tde, accepted = search.step(nets, l_tde, grads, lambda ns: objective(ns, False)[2])
        if accepted:
            steps.append(l_tde)
        else:
            skipped += 1
            log.debug("M-step pass %d: backtracking exhausted, step skipped", p)
        if p < config.m_step_passes - 1:
            (l_c, l_t, l_tde), grads = objective(nets)
    l_c, l_t, l_tde = objective(nets, False)
    out = ModelPack(nets[0], list(nets[1:]), pack.centroids, pack.config, pack.num_classes,
                    pack.schema_version, pack.provenance)
    return out, MStepResult(l_c, l_t, l_tde, start, steps, skipped)


def domain_means(pack: ModelPack, train: Dataset, assignment: np.ndarray) -> np.ndarray:
    """Per-domain mean embedding under the current encoder (stale centroid kept if empty)."""
    feats = pack.embed(train.flat)
    cents = pack.centroids.copy()
    for k in range(pack.n):
        rows = assignment == k
        if rows.any():
            cents[k] = feats[rows].mean(axis=0)
    return cents


# --------------------------------------------------------------------------
# driver

def mine(train: Dataset, val: Dataset, config: TdeConfig,
         initial: InitialModel | None = None,
         on_epoch: Callable[[EpochRecord], None] | None = None
         ) -> tuple[ModelPack, PartitionResult, LossTrace]:
    """Run the full EM loop and return the best-validation pack.

    After each epoch the centroids are refreshed to the per-domain embedding
    means under the updated encoder and the pack is scored on ``val`` by
    macro-F1 through nearest-centroid routing. Ties go to the later epoch.
    With ``config.n == 1`` there is nothing to estimate and M_0 itself is
    returned as a one-head pack.
    """
    if initial is None:
        initial = train_initial(train, val, config)
    trace = LossTrace()
    provenance = {"dataset": train.name, "seed": config.seed,
                  "initial_best_epoch": initial.best_epoch}
    truth = ground_truth_domains(train)
    if config.n == 1:
        pack = single_domain_pack(initial, train, config)
        pack.provenance = {**provenance, "best_epoch": 0, "loss_history": []}
        assignment = np.zeros(len(train), dtype=np.int64)
        part = PartitionResult(train.ids, assignment, pack.centroids.copy(), [len(train)],
                               adjusted_rand_index(truth, assignment) if truth is not None else None)
        return pack, part, trace

    pack = init_pack(initial, config.n, config, train.num_classes)
    search = LineSearch(config)
    best = None
    previous = None
    for epoch in range(1, config.epochs + 1):
        part = e_step(pack, train, seed=int(stream(config.seed, "e-step", epoch).integers(2 ** 31)),
                      previous=previous)
        previous = part.assignment
        pack, res = m_step(pack, train, part.assignment, config, search, pair_key=epoch)
        pack.centroids = domain_means(pack, train, part.assignment)
        f1 = macro_f1(val.labels, pack.predict_labels(val.flat), val.num_classes)
        rec = EpochRecord(epoch, res.l_c, res.l_t, res.l_tde, res.l_tde_start, res.steps,
                          res.skipped, f1, part.ari_vs_meta)
        trace.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        if best is None or f1 >= best[0]:
            part.centroids = pack.centroids.copy()
            best = (f1, epoch, pack.copy(), part)
    if best is None:
        # zero epochs: route with the initial embedding clusters
        part = e_step(pack, train, seed=config.seed)
        best = (float("nan"), 0, pack, part)
    _, best_epoch, pack, part = best
    pack.provenance = {**provenance, "best_epoch": best_epoch,
                       "loss_history": [r.l_tde for r in trace.records]}
    return pack, part, trace
