import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import prism.oup as oup
from prism.dataset import Dataset, Sample
from prism.errors import CompatibilityError, ParseError, SchemaError, ShapeError
from prism.metrics import confusion_matrix, evaluate_labels, macro_f1, report_from_confusion
from prism.numerics import FeedforwardNet
from prism.tde import ModelPack, TdeConfig

CFG = TdeConfig(n=3, encoder_dims=(4,))


def make_pack(seed=0, n=3, in_dim=6, classes=3):
    rng = np.random.default_rng(seed)
    enc = FeedforwardNet.init([in_dim, 4], rng)
    heads = [FeedforwardNet.init([4, classes], rng) for _ in range(n)]
    return ModelPack(enc, heads, rng.normal(size=(n, 4)), CFG.replace(n=n), classes,
                     provenance={"note": "unit"})


def make_data(n=100, seed=0, T=3, C=2, classes=3):
    rng = np.random.default_rng(seed)
    return Dataset(tuple(Sample(f"s{i}", rng.normal(size=(T, C)), int(rng.integers(classes)))
                         for i in range(n)), classes, T, C)


def test_predict_runs_exactly_one_head(monkeypatch):
    pack = make_pack()
    calls = []
    real = oup.net_forward

    def counting(net, x):
        calls.append(id(net))
        return real(net, x)

    monkeypatch.setattr(oup, "net_forward", counting)
    rec = oup.predict(pack, make_data(1).samples[0])
    head_calls = [c for c in calls if c in {id(h) for h in pack.heads}]
    assert head_calls == [id(pack.heads[rec.chosen_domain])]
    assert abs(sum(rec.class_probs) - 1.0) < 1e-12


def test_batched_prediction_matches_single_sample_path():
    pack, data = make_pack(1), make_data(40, 1)
    batch = oup.predict_dataset(pack, data)
    for rec, s in zip(batch, data.samples):
        one = oup.predict(pack, s)
        assert one.chosen_domain == rec.chosen_domain and one.predicted_label == rec.predicted_label
        assert np.allclose(one.class_probs, rec.class_probs, atol=1e-12)


def test_wrong_window_shape():
    pack = make_pack()
    with pytest.raises(ShapeError):
        oup.predict(pack, Sample("x", np.zeros((2, 2)), 0))
    with pytest.raises(ShapeError):
        oup.predict_dataset(pack, make_data(3, T=2))


def test_pack_round_trip_gives_identical_predictions(tmp_path):
    pack, data = make_pack(2), make_data(100, 2)
    path = tmp_path / "pack.json"
    oup.save_pack(pack, path)
    back = oup.load_pack(path)
    assert back.encoder.equals(pack.encoder) and all(a.equals(b) for a, b in zip(back.heads, pack.heads))
    assert np.array_equal(back.centroids, pack.centroids)
    assert back.config == pack.config and back.provenance == pack.provenance
    a, b = oup.predict_dataset(pack, data), oup.predict_dataset(back, data)
    assert [r.predicted_label for r in a] == [r.predicted_label for r in b]
    assert [r.class_probs for r in a] == [r.class_probs for r in b]
    assert oup.pack_to_json(back) == path.read_text()


def test_truncated_pack_is_a_parse_error():
    text = oup.pack_to_json(make_pack())
    with pytest.raises(ParseError):
        oup.pack_from_json(text[: len(text) // 2])


def test_future_schema_version_is_rejected():
    doc = json.loads(oup.pack_to_json(make_pack()))
    doc["schema_version"] += 1
    with pytest.raises(CompatibilityError):
        oup.pack_from_json(json.dumps(doc))


def test_missing_and_inconsistent_fields():
    doc = json.loads(oup.pack_to_json(make_pack()))
    del doc["heads"]
    with pytest.raises(SchemaError):
        oup.pack_from_json(json.dumps(doc))
    doc = json.loads(oup.pack_to_json(make_pack()))
    doc["encoder"]["layer_dims"] = [6, 5]
    with pytest.raises((SchemaError, ShapeError)):
        oup.pack_from_json(json.dumps(doc))
    with pytest.raises(ParseError):
        oup.pack_from_json("[]")


def test_evaluate_report_counts_domains():
    pack, data = make_pack(3), make_data(60, 3)
    report = oup.evaluate(pack, data)
    assert sum(report.per_domain_counts.values()) == 60 == report.n_samples
    recs = oup.predict_dataset(pack, data)
    assert report.accuracy == np.mean([r.predicted_label == r.true_label for r in recs])


def test_predictions_csv_and_json():
    recs = oup.predict_dataset(make_pack(), make_data(5))
    lines = oup.predictions_csv(recs).splitlines()
    assert lines[0] == "sample_id,chosen_domain,predicted_label,true_label,max_prob"
    assert len(lines) == 6
    assert json.loads(oup.predictions_json(recs))[0]["sample_id"] == "s0"


def test_macro_f1_worked_example():
    report = report_from_confusion(np.array([[1, 1], [0, 2]]))
    assert report.f1 == pytest.approx([2 / 3, 0.8], abs=1e-15)
    assert report.macro_f1 == pytest.approx(0.7333333333333333, abs=1e-12)
    assert report.accuracy == 0.75


def test_absent_class_is_flagged():
    report = evaluate_labels([0, 0, 1], [0, 0, 1], 3)
    assert report.absent_classes == [2]
    assert report.f1[2] == 0.0


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50),
       st.permutations(range(4)))
@settings(max_examples=50, deadline=None)
def test_macro_f1_invariant_under_class_relabelling(pairs, perm):
    y, p = np.array(pairs).T
    perm = np.array(perm)
    assert macro_f1(y, p, 4) == pytest.approx(macro_f1(perm[y], perm[p], 4), abs=1e-12)
    assert confusion_matrix(y, p, 4).sum() == len(pairs)
