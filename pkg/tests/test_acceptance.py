"""Acceptance criteria 1 to 12.

Each test prints one ``PASS``/``FAIL`` line (collected and repeated in the
terminal summary). Run just this suite with::

    pytest -v tests/test_acceptance.py

The module can also be executed directly, which runs every criterion in
order and prints the same lines.
"""
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from prism import oup
from prism.baselines import (baseline_cluster_feature, baseline_p0, eval_partition, exhaustive_partition_oracle,
                             partition_from_pack)
from prism.clustering import exhaustive_min_sse, kmeans
from prism.dataset import Dataset, Sample, SplitSpec, dumps_jsonl, load_jsonl, parse_jsonl, save_jsonl, split
from prism.errors import CompatibilityError, ParseError
from prism.experiments import (four_domain_fixture, run_sweep, shift_ladder, single_domain_fixture,
                               two_domain_fixture)
from prism.metrics import macro_f1
from prism.nid import build_schedule, ni, nid
from prism.numerics import (FeedforwardNet, contrastive_pair_loss, finite_difference_check, forward_cached,
                            net_forward, net_gradients, relu_margin, softmax_cross_entropy)
from prism.tde import (PairSample, TdeConfig, _tde_objective, init_pack, mine, sample_pairs, train_initial)

SEEDS = (0, 1, 2, 3, 4)


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# --------------------------------------------------------------------------
# 1. gradient oracle

def _random_net(rng, dims):
    net = FeedforwardNet.init(dims, rng)
    return FeedforwardNet(net.weights, [rng.normal(scale=0.5, size=b.shape) for b in net.biases])


def _random_dims(rng, out_dim):
    hidden = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(1, 3)))]
    return [int(rng.integers(2, 5)), *hidden, out_dim]


def _check_ce(rng):
    net = _random_net(rng, _random_dims(rng, 3))
    x = rng.normal(size=(6, net.in_dim))
    y = rng.integers(3, size=6)
    cache = forward_cached(net, x)
    _, g = softmax_cross_entropy(cache.output, y)
    grads, _ = net_gradients(net, x, g, cache=cache)
    return finite_difference_check(net, lambda: softmax_cross_entropy(net_forward(net, x), y)[0], grads,
                                   at_kink=lambda: relu_margin(net, x) < 1e-4)


def _check_contrastive(rng):
    """Mean pair loss on raw embeddings, differentiated by hand through the net."""
    net = _random_net(rng, _random_dims(rng, 3))
    x = rng.normal(size=(8, net.in_dim))
    left, right = rng.integers(8, size=10), rng.integers(8, size=10)
    keep = left != right
    left, right = left[keep], right[keep]
    same = rng.integers(2, size=left.size)
    margin = 1.5

    def distances():
        h = net_forward(net, x)
        return h, np.sqrt(np.sum((h[left] - h[right]) ** 2, axis=1))

    def loss():
        return float(np.mean(contrastive_pair_loss(distances()[1], same, margin)[0]))

    h, d = distances()
    _, dd = contrastive_pair_loss(d, same, margin)
    unit = (h[left] - h[right]) / np.maximum(d, 1e-300)[:, None]
    g = np.zeros_like(h)
    np.add.at(g, left, (dd / left.size)[:, None] * unit)
    np.add.at(g, right, -(dd / left.size)[:, None] * unit)
    grads, _ = net_gradients(net, x, g)

    def kink():
        h_now, d_now = distances()
        near_margin = np.any((same == 0) & (np.abs(d_now - margin) < 1e-4))
        return relu_margin(net, x) < 1e-4 or near_margin or np.any(d_now < 1e-6)

    return finite_difference_check(net, loss, grads, at_kink=kink)


def _check_tde(rng, unit):
    x = rng.normal(size=(10, int(rng.integers(2, 5))))
    y = rng.integers(3, size=10)
    assignment = rng.integers(2, size=10)
    enc = _random_net(rng, [x.shape[1], int(rng.integers(2, 6)), 4])
    nets = [enc, _random_net(rng, [4, 3]), _random_net(rng, [4, 3])]
    pairs = sample_pairs(assignment, 12, rng)
    alpha, margin = float(rng.uniform(0.1, 1.0)), 1.5
    _, grads = _tde_objective(nets, x, y, assignment, pairs, alpha, margin, unit=unit)
    params = [p for net in nets for p in net.params()]
    analytic = [g for gs in grads for g in gs.params()]

    def loss():
        return _tde_objective(nets, x, y, assignment, pairs, alpha, margin, need_grad=False, unit=unit)[2]

    def kink():
        h = net_forward(enc, x)
        if unit:
            h = h / np.linalg.norm(h, axis=1, keepdims=True)
        d = np.linalg.norm(h[pairs.left] - h[pairs.right], axis=1)
        near = np.any((pairs.same == 0) & (np.abs(d - margin) < 1e-4))
        return relu_margin(enc, x) < 1e-4 or near

    return finite_difference_check(params, loss, analytic, at_kink=kink)


def test_criterion_01_gradient_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, excluded, failed = 0.0, 0, []
    for i in range(50):
        for name, check in (("ce", _check_ce), ("contrastive", _check_contrastive),
                            ("tde-unit", lambda r: _check_tde(r, True)),
                            ("tde-raw", lambda r: _check_tde(r, False))):
            report = check(rng)
            if report.excluded:
                excluded += 1
                continue
            worst = max(worst, report.max_rel_error)
            if not report.passed:
                failed.append((i, name, report.max_rel_error))
    elapsed = time.perf_counter() - start
    verdict(1, "gradient oracle", not failed and elapsed < 30,
            f"50 nets x 4 objectives, max rel err {worst:.2e}, {excluded} at hinge, "
            f"{len(failed)} failures, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 2. loss unit values

def test_criterion_02_loss_unit_values():
    checks = {}
    checks["contrastive 0.18"] = abs(contrastive_pair_loss(0.4, 0, 1.0)[0] / 2 - 0.18)
    checks["ce ln4"] = abs(softmax_cross_entropy(np.zeros((1, 4)), np.array([0]))[0] - math.log(4))
    checks["ce ln2"] = abs(softmax_cross_entropy(np.zeros((1, 2)), np.array([1]))[0] - math.log(2))
    eye = FeedforwardNet([np.eye(2)], [np.zeros(2)])
    zero = FeedforwardNet([np.zeros((2, 2))], [np.zeros(2)])
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    pairs = PairSample(np.array([0]), np.array([1]), np.array([0.0]))
    _, _, l_tde = _tde_objective([eye, zero, eye], x, np.array([0, 1]), np.array([0, 1]), pairs,
                                 0.5, 3.0, need_grad=False, unit=False)
    expected = 0.5 * (7 - 3 * math.sqrt(5)) + (math.log(2) + math.log(1 + math.exp(-2))) / 2
    checks["L_tde hand instance"] = abs(l_tde - expected)
    worst = max(checks.values())
    verdict(2, "loss unit values", worst <= 1e-12,
            ", ".join(f"{k} err {v:.1e}" for k, v in checks.items()))


# --------------------------------------------------------------------------
# 3. NI / NID

def _nid_of(data: Dataset, seed: int) -> float:
    train, val, _ = split(data, SplitSpec(seed=seed))
    encoder = train_initial(train, val, TdeConfig(seed=seed)).encoder
    return nid(encoder, data, build_schedule(data, 10, seed)).nid


@pytest.mark.slow
def test_criterion_03_nid():
    start = time.perf_counter()
    eye = FeedforwardNet([np.eye(1)], [np.zeros(1)])

    def one_d(vals, prefix):
        return Dataset(tuple(Sample(f"{prefix}{i}", np.array([[v]]), 0) for i, v in enumerate(vals)), 1, 1, 1)

    a, b, whole = one_d([0.0, 2.0], "a"), one_d([2.0, 4.0], "b"), one_d([1.0, 3.0], "w")
    zero_ok = ni(eye, a, a, whole)[0] == 0.0
    hand_ok = ni(eye, a, b, whole)[0] == 2.0

    ratios, ladders = [], []
    for seed in SEEDS:
        four, single = _nid_of(four_domain_fixture(seed), seed), _nid_of(single_domain_fixture(seed), seed)
        ratios.append(four / single)
        ladders.append([_nid_of(d, seed) for d in shift_ladder(seed)])
    ratio_ok = all(r >= 2 for r in ratios)
    ladder_ok = all(l0 <= l1 <= l2 for l0, l1, l2 in ladders)
    elapsed = time.perf_counter() - start
    ladder_txt = "; ".join("/".join(f"{v:.2f}" for v in lad) for lad in ladders)
    verdict(3, "NI/NID", zero_ok and hand_ok and ratio_ok and ladder_ok and elapsed < 120,
            f"NI identical=0 {zero_ok}, 1-D hand=2.0 {hand_ok}, NID ratio min {min(ratios):.2f}, "
            f"shift ladder {ladder_txt}, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 4. k-means against exhaustive search

def test_criterion_04_kmeans_oracle():
    rng = np.random.default_rng(11)
    exact, within, worst = 0, 0, 0.0
    for _ in range(20):
        pts = rng.normal(size=(int(rng.integers(3, 11)), 2))
        best = kmeans(pts, 2, seed=int(rng.integers(2 ** 31)), n_init=5).inertia
        _, opt = exhaustive_min_sse(pts, 2)
        exact += abs(best - opt) <= 1e-9
        gap = (best - opt) / opt if opt > 0 else 0.0
        within += gap <= 0.1
        worst = max(worst, gap)
    verdict(4, "k-means vs exhaustive", exact >= 18 and within == 20,
            f"{exact}/20 exact, {within}/20 within 10%, worst gap {worst:.2%}")


# --------------------------------------------------------------------------
# 5. M-step monotonicity

@pytest.mark.slow
def test_criterion_05_m_step_monotone():
    data = two_domain_fixture(seed=0)
    train, val, _ = split(data, SplitSpec(seed=0))
    cfg = TdeConfig(n=2, seed=0)
    worst, checked = -np.inf, 0

    def watch(rec):
        nonlocal worst, checked
        values = [rec.l_tde_post_e, *rec.steps]
        for a, b in zip(values, values[1:]):
            worst = max(worst, b - a)
            checked += 1

    _, _, trace = mine(train, val, cfg, on_epoch=watch)
    verdict(5, "M-step monotonicity", len(trace) == 200 and worst <= 1e-9,
            f"{len(trace)} epochs, {checked} accepted steps, largest increase {worst:.2e}")


# --------------------------------------------------------------------------
# 6 and 7 share one run per seed

@pytest.fixture(scope="module")
def four_domain_runs():
    runs = []
    for seed in SEEDS:
        start = time.perf_counter()
        train, val, test = split(four_domain_fixture(seed), SplitSpec(seed=seed))
        cfg = TdeConfig(seed=seed)
        initial = train_initial(train, val, cfg)
        p0 = baseline_p0(train, val, test, cfg, initial).macro_f1
        cf = baseline_cluster_feature(train, val, test, cfg.n, cfg, initial).macro_f1
        pack, part, _ = mine(train, val, cfg, initial=initial)
        prism = macro_f1(test.labels, pack.predict_labels(test.flat), test.num_classes)
        runs.append(dict(seed=seed, p0=p0, cf=cf, prism=prism, ari=part.ari_vs_meta,
                         seconds=time.perf_counter() - start))
    return runs


@pytest.mark.slow
def test_criterion_06_domain_recovery(four_domain_runs):
    aris = [r["ari"] for r in four_domain_runs]
    total = sum(r["seconds"] for r in four_domain_runs)
    verdict(6, "domain recovery", min(aris) >= 0.8 and total < 600,
            f"ARI per seed {[round(a, 3) for a in aris]}, {total:.0f}s")


@pytest.mark.slow
def test_criterion_07_end_to_end_gain(four_domain_runs):
    gain = 100 * (np.mean([r["prism"] for r in four_domain_runs]) - np.mean([r["p0"] for r in four_domain_runs]))
    beats_cf = sum(r["prism"] >= r["cf"] for r in four_domain_runs)
    detail = ", ".join(f"s{r['seed']} P0 {r['p0']:.3f} CF {r['cf']:.3f} Prism {r['prism']:.3f}"
                       for r in four_domain_runs)
    verdict(7, "end-to-end gain", gain >= 5 and beats_cf >= 4,
            f"Prism - P0 = {gain:+.1f} points, Prism >= CF in {beats_cf}/5 ({detail})")


# --------------------------------------------------------------------------
# 8. degeneration identities

def test_criterion_08_degeneration():
    identical, heads_ok = [], []
    for seed in (0, 1):
        train, val, test = split(four_domain_fixture(seed, per_cell=20), SplitSpec(seed=seed))
        cfg = TdeConfig(seed=seed, epochs=60)
        pack, _, _ = mine(train, val, cfg.replace(n=1, alpha=0.0))
        identical.append(oup.evaluate(pack, test) == baseline_p0(train, val, test, cfg))
        initial = train_initial(train, val, cfg)
        fresh = init_pack(initial, 4, cfg)
        heads_ok.append(all(h.equals(initial.head) for h in fresh.heads))
    verdict(8, "degeneration identities", all(identical) and all(heads_ok),
            f"n=1, alpha=0 report equals P0 in {sum(identical)}/2 seeds; "
            f"init_pack heads bit-identical in {sum(heads_ok)}/2")


# --------------------------------------------------------------------------
# 9. accuracy against n

@pytest.mark.slow
def test_criterion_09_n_sweep():
    medians = {}
    for seed in (0, 1, 2):
        rows = run_sweep(four_domain_fixture(seed), TdeConfig(), "n", [2, 4, 8, 16], [seed])
        for r in rows:
            medians.setdefault(r.value, []).append(r.accuracy)
    med = {n: float(np.median(v)) for n, v in medians.items()}
    peak = max(med, key=lambda n: (med[n], -n))
    ok = peak in (4, 8) and med[16] < med[peak]
    verdict(9, "accuracy vs n", ok,
            "median accuracy " + ", ".join(f"n={n}: {a:.3f}" for n, a in med.items()) + f", peak n={peak}")


# --------------------------------------------------------------------------
# 10. linear scaling

def _mine_seconds(total: int) -> float:
    data = four_domain_fixture(0, per_cell=total // 16)
    train, val, _ = split(data, SplitSpec(seed=0))
    start = time.perf_counter()
    mine(train, val, TdeConfig(seed=0))
    return time.perf_counter() - start


@pytest.mark.slow
def test_criterion_10_linear_scaling():
    small, large = _mine_seconds(2000), _mine_seconds(4000)
    ratio = large / small
    verdict(10, "linear scaling", ratio <= 2.6,
            f"N=2000 {small:.1f}s, N=4000 {large:.1f}s, ratio {ratio:.2f}")


# --------------------------------------------------------------------------
# 11. tiny-instance oracle

@pytest.mark.slow
def test_criterion_11_partition_oracle():
    train, val, test = split(two_domain_fixture(seed=0), SplitSpec(seed=0))
    cfg = TdeConfig(n=2, seed=0)
    initial = train_initial(train, val, cfg)
    best, optimum = exhaustive_partition_oracle(train, test, 2, cfg, initial=initial)
    by_group = {}
    for s in (*train.samples, *test.samples):
        by_group.setdefault(s.meta["domain"], set()).add(best.assignment[s.id])
    separates = all(len(v) == 1 for v in by_group.values()) and len(set.union(*by_group.values())) == 2
    pack, part, _ = mine(train, val, cfg, initial=initial)
    mined = eval_partition(partition_from_pack(pack, part.assignment, train, test), train, test, cfg,
                           initial).total_error
    verdict(11, "partition oracle", separates and mined <= optimum + 0.1,
            f"oracle separates groups {separates}, optimum {optimum:.3f}, Prism partition {mined:.3f}")


# --------------------------------------------------------------------------
# 12. serialization

def test_criterion_12_serialization(tmp_path):
    data = four_domain_fixture(0, per_cell=10)
    save_jsonl(data, tmp_path / "d.jsonl")
    back = load_jsonl(tmp_path / "d.jsonl")
    records_ok = back == data and all(np.array_equal(a.window, b.window) for a, b in zip(back.samples, data.samples))

    train, val, test = split(data, SplitSpec(seed=0))
    pack, _, _ = mine(train, val, TdeConfig(seed=0, epochs=5))
    oup.save_pack(pack, tmp_path / "p.json")
    loaded = oup.load_pack(tmp_path / "p.json")
    before, after = pack.predict_proba(back.flat), loaded.predict_proba(back.flat)
    preds_ok = np.array_equal(before[0], after[0]) and np.array_equal(before[1], after[1])

    text = (tmp_path / "p.json").read_text()
    doc = json.loads(text)
    doc["schema_version"] += 1
    try:
        oup.pack_from_json(json.dumps(doc))
        version_ok = False
    except CompatibilityError:
        version_ok = True
    errors_ok = []
    for bad in (lambda: oup.pack_from_json(text[: len(text) // 2]),
                lambda: parse_jsonl(dumps_jsonl(data)[:-40].splitlines())):
        try:
            bad()
            errors_ok.append(False)
        except ParseError:
            errors_ok.append(True)
    verdict(12, "serialization", records_ok and preds_ok and version_ok and all(errors_ok),
            f"dataset round trip {records_ok}, pack predictions identical {preds_ok}, "
            f"version mismatch rejected {version_ok}, truncation rejected {all(errors_ok)}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
