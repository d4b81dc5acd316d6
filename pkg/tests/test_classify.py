import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from polarmp.classify import (
    FEATURE_NAMES,
    Adam,
    EvalReport,
    PolarFeatureExtractor,
    SoftmaxAdamClassifier,
    cross_entropy,
    evaluate,
    extract_features,
    fuse_predictions,
    import_predictions,
    perimeter,
    report_from_confusion,
    softmax,
    softmax_predict,
    write_predictions,
)
from polarmp.dataset import CLASSES

from conftest import disk_mask

# AOLP test confusion counts: rows true PP/HDPE/LDPE, columns predicted
REFERENCE_COUNTS = np.array([[22, 0, 8], [1, 25, 4], [1, 4, 25]])
REFERENCE_MACRO_F1 = 0.8028470328832923


def counts_to_predictions(cm, confidence=0.9):
    preds, truth = {}, {}
    n = 0
    for t, row in enumerate(cm):
        for p, c in enumerate(row):
            for _ in range(c):
                v = np.full(3, (1 - confidence) / 2)
                v[p] = confidence
                preds[f"s{n:03d}"] = v
                truth[f"s{n:03d}"] = CLASSES[t]
                n += 1
    return preds, truth


def two_clusters(n=60, d=5, gap=4.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array(CLASSES)[np.arange(n) % 3]
    centers = {c: rng.normal(0, gap, d) for c in CLASSES}
    X = np.array([centers[c] for c in y]) + rng.normal(0, 0.3, (n, d))
    return X, y


# ---------------------------------------------------------------- features


def test_feature_layout():
    assert len(FEATURE_NAMES) == 40
    m = disk_mask((64, 64), 32, 32, 12)
    f = extract_features(np.where(m, 90.0, 0.0), m)
    assert f.shape == (40,)
    assert f[:32].sum() == pytest.approx(1.0)


def test_uniform_value_single_bin():
    m = disk_mask((64, 64), 32, 32, 12)
    f = extract_features(np.full((64, 64), 45.0), m)
    assert np.count_nonzero(f[:32]) == 1
    assert f[33] == 0.0


@pytest.mark.parametrize("r", [12, 25, 40])
def test_disk_circularity(r):
    m = disk_mask((80, 80), 40, 40, r)
    f = extract_features(np.ones((80, 80)), m)
    assert 0.85 <= f[39] <= 1.0


def test_perimeter_of_square():
    m = np.zeros((10, 10), bool)
    m[2:6, 2:6] = True
    # 0.5 contour of a 4x4 block cuts each corner by a half-diagonal
    assert perimeter(m) == pytest.approx(4 * 3 + 4 * np.sqrt(0.5))


def test_brightness_doubling_keeps_geometry(rng):
    m = disk_mask((48, 48), 24, 24, 10)
    img = rng.uniform(10, 60, (48, 48))
    a = extract_features(img, m)
    b = extract_features(2 * img, m)
    np.testing.assert_array_equal(a[37:], b[37:])
    assert not np.array_equal(a[:32], b[:32])


def test_empty_mask_rejected():
    with pytest.raises(ValueError):
        extract_features(np.ones((8, 8)), np.zeros((8, 8), bool))


def test_extractor_uses_nonzero_support():
    m = disk_mask((32, 32), 16, 16, 8)
    img = np.where(m, 50.0, 0.0)
    ex = PolarFeatureExtractor()
    np.testing.assert_array_equal(ex.fit_transform(img[None])[0], extract_features(img, m))
    np.testing.assert_array_equal(ex.fit_transform(img[None], masks=m[None])[0], extract_features(img, m))


# ---------------------------------------------------------------- softmax


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax([np.log(2), 0, 0]), [0.5, 0.25, 0.25], atol=1e-9)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-1e3, 1e3))
def test_softmax_shift_invariance_and_simplex(z, c):
    p = softmax(z)
    np.testing.assert_allclose(softmax(np.array(z) + c), p, atol=1e-12)
    assert abs(p.sum() - 1) <= 1e-9 and p.min() >= 0


def test_zero_model_predicts_uniform():
    X, y = two_clusters()
    m = SoftmaxAdamClassifier(max_epochs=1).fit(X, y)
    m.coef_[:] = 0
    m.intercept_[:] = 0
    np.testing.assert_allclose(softmax_predict(m, X[0]), [1 / 3] * 3)
    with pytest.raises(ValueError):
        softmax_predict(m, np.full(X.shape[1], np.nan))


def test_adam_first_step():
    p = np.array([1.0])
    Adam(lr=0.001).step([p], [np.array([2.0])])
    assert p[0] - 1.0 == pytest.approx(-0.001 * 2 / (2 + 1e-8), rel=1e-12)


def _numeric_grad(W, b, X, y, h=1e-6):
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        gW[idx] = (cross_entropy(Wp, b, X, y)[0] - cross_entropy(Wm, b, X, y)[0]) / (2 * h)
    for i in range(b.size):
        bp, bm = b.copy(), b.copy()
        bp[i] += h
        bm[i] -= h
        gb[i] = (cross_entropy(W, bp, X, y)[0] - cross_entropy(W, bm, X, y)[0]) / (2 * h)
    return gW, gb


def gradient_rel_error(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(3, 12), rng.integers(2, 7)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 3, n)
    W = rng.normal(size=(3, d))
    b = rng.normal(size=3)
    _, aW, ab = cross_entropy(W, b, X, y)
    nW, nb = _numeric_grad(W, b, X, y)
    a = np.concatenate([aW.ravel(), ab])
    num = np.concatenate([nW.ravel(), nb])
    return np.max(np.abs(a - num)) / max(np.max(np.abs(num)), 1e-12)


@settings(max_examples=20)
@given(st.integers(0, 10**6))
def test_gradient_matches_finite_differences(seed):
    assert gradient_rel_error(seed) <= 1e-5


def test_separable_training_accuracy():
    X, y = two_clusters()
    m = SoftmaxAdamClassifier(max_epochs=200, random_state=1).fit(X, y)
    assert m.score(X, y) == 1.0
    assert np.all(np.abs(m.predict_proba(X).sum(axis=1) - 1) <= 1e-9)


def test_training_deterministic():
    X, y = two_clusters()
    a = SoftmaxAdamClassifier(max_epochs=30, random_state=4).fit(X, y)
    b = SoftmaxAdamClassifier(max_epochs=30, random_state=4).fit(X, y)
    assert a.loss_curve_ == b.loss_curve_
    np.testing.assert_array_equal(a.coef_, b.coef_)


def test_full_batch_small_lr_loss_non_increasing():
    X, y = two_clusters(n=45, gap=1.0, seed=2)
    m = SoftmaxAdamClassifier(learning_rate=1e-4, batch_size=len(y), max_epochs=100,
                              patience=1000, random_state=0).fit(X, y)
    assert np.all(np.diff(m.loss_curve_) <= 1e-12)


def test_early_stopping_restores_best_epoch():
    X, y = two_clusters(seed=5)
    Xv, yv = two_clusters(seed=6)
    m = SoftmaxAdamClassifier(max_epochs=80, patience=5, random_state=0).fit(X, y, Xv, yv)
    assert m.val_losses_.shape == (m.n_epochs_, len(yv))
    assert m.best_epoch_ == int(np.argmin(m.val_loss_curve_))


def test_degenerate_class_coverage():
    X, y = two_clusters()
    keep = y != "LDPE"
    with pytest.raises(ValueError, match="LDPE"):
        SoftmaxAdamClassifier().fit(X[keep], np.where(y[keep] == "PP", "PP", "HDPE").tolist() + [])


def test_model_json_round_trip(tmp_path):
    X, y = two_clusters()
    m = SoftmaxAdamClassifier(max_epochs=10).fit(X, y)
    m.save(tmp_path / "m.json")
    again = SoftmaxAdamClassifier.load(tmp_path / "m.json")
    np.testing.assert_array_equal(again.predict_proba(X), m.predict_proba(X))


# ---------------------------------------------------------------- evaluation


def f1_oracle(cm):
    """Per-class precision/recall by explicit loops."""
    k = len(cm)
    f1s = []
    for c in range(k):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(k) if r != c)
        fn = sum(cm[c][r] for r in range(k) if r != c)
        p = tp / (tp + fp)
        r = tp / (tp + fn)
        f1s.append(2 * p * r / (p + r))
    return sum(f1s) / k


def test_reference_counts():
    preds, truth = counts_to_predictions(REFERENCE_COUNTS)
    rep = evaluate(preds, truth)
    assert rep.accuracy == (25 + 25 + 22) / 90 == pytest.approx(0.80)
    np.testing.assert_array_equal(rep.confusion, REFERENCE_COUNTS)
    assert rep.macro_f1 == pytest.approx(REFERENCE_MACRO_F1, abs=1e-12)
    assert f1_oracle(REFERENCE_COUNTS.tolist()) == pytest.approx(REFERENCE_MACRO_F1, abs=1e-12)
    ids = sorted(truth)
    y_true = [truth[i] for i in ids]
    y_pred = [CLASSES[int(np.argmax(preds[i]))] for i in ids]
    assert f1_score(y_true, y_pred, average="macro") == pytest.approx(REFERENCE_MACRO_F1, abs=1e-12)
    np.testing.assert_allclose(rep.normalized.sum(axis=1), 1.0)
    assert rep.avg_confidence == pytest.approx(0.9)


def test_all_correct():
    preds, truth = counts_to_predictions(np.diag([5, 5, 5]))
    rep = evaluate(preds, truth)
    assert rep.accuracy == 1.0 and rep.macro_f1 == 1.0
    np.testing.assert_array_equal(rep.normalized, np.eye(3))


def test_ties_go_to_earlier_class():
    rep = evaluate({"a": [0.4, 0.4, 0.2], "b": [0.2, 0.4, 0.4]}, {"a": "PP", "b": "HDPE"})
    assert rep.accuracy == 1.0


def test_evaluate_id_mismatch():
    with pytest.raises(ValueError):
        evaluate({"a": [1, 0, 0]}, {"b": "PP"})


def test_evaluate_permutation_invariant(rng):
    preds, truth = counts_to_predictions(REFERENCE_COUNTS)
    keys = list(preds)
    shuffled = {k: preds[k] for k in rng.permutation(keys)}
    a, b = evaluate(preds, truth), evaluate(shuffled, truth)
    assert a.accuracy == b.accuracy and a.macro_f1 == b.macro_f1
    assert a.confusion.dtype.kind == "i" and a.confusion.sum() == 90


def test_report_from_confusion_matches_evaluate():
    preds, truth = counts_to_predictions(REFERENCE_COUNTS)
    assert report_from_confusion(REFERENCE_COUNTS).macro_f1 == evaluate(preds, truth).macro_f1


def test_import_predictions(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("id,p_pp,p_hdpe,p_ldpe\nx1,1,0,0\nx2,0.3334,0.3333,0.3333\n")
    got = import_predictions(p)
    np.testing.assert_array_equal(got["x1"], [1, 0, 0])
    assert got["x2"].sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("row, msg", [
    ("x3,0.25,0.25,0", ":3: probabilities sum"),
    ("x3,-0.1,0.6,0.5", ":3: negative"),
    ("x3,a,b,c", ":3: malformed"),
    ("x3,1,0", ":3: expected 4"),
])
def test_import_predictions_rejections(tmp_path, row, msg):
    p = tmp_path / "p.csv"
    p.write_text(f"id,p_pp,p_hdpe,p_ldpe\nx1,1,0,0\n{row}\n")
    with pytest.raises(ValueError, match=msg):
        import_predictions(p)


def test_prediction_round_trip(tmp_path):
    preds, _ = counts_to_predictions(REFERENCE_COUNTS)
    write_predictions(tmp_path / "p.csv", preds)
    back = import_predictions(tmp_path / "p.csv")
    for k in preds:
        np.testing.assert_allclose(back[k], preds[k], atol=1e-15)


def test_fuse_predictions():
    out = fuse_predictions({"a": [1.0, 0, 0]}, {"a": [0, 1.0, 0]})
    np.testing.assert_array_equal(out["a"], [0.5, 0.5, 0])
    with pytest.raises(ValueError):
        fuse_predictions({"a": [1, 0, 0]}, {"b": [1, 0, 0]})


def test_eval_report_save(tmp_path):
    preds, truth = counts_to_predictions(REFERENCE_COUNTS)
    rep = evaluate(preds, truth)
    rep.save(tmp_path / "r.json", tmp_path / "m.csv")
    back = EvalReport.from_json(__import__("json").loads((tmp_path / "r.json").read_text()))
    assert back.accuracy == rep.accuracy
    assert "predicted" in back.metadata["avg_confidence"]
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "true\\pred,PP,HDPE,LDPE"
