"""End-to-end glue: mosaic -> descriptor image -> features -> model -> reports.

These helpers are what the CLI calls per record; they are also the harness
for the degradation study and the cross-validation loss ledger.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .classify import SoftmaxAdamClassifier, evaluate, extract_features
from .dataset import LossLedger
from .degrade import SCENARIO_LABELS, SCENARIOS, DegradeParams, Scenario, apply_scenario, scenario_support
from .demosaic import demosaic_bilinear, demosaic_fdzp
from .imagery import ANGLES
from .stokes import apply_mask, compute_descriptors, compute_stokes

# value range of each descriptor, used for histograms and PGM quantization
DESCRIPTOR_RANGES = {"aolp": (0.0, 180.0), "dolp": (0.0, 1.0)}

REPORT_COLUMNS = ("Scenario", "Accuracy", "F1-Macro", "Avg-Confidence")


def parallel_map(fn, items, jobs=1):
    """``list(map(fn, items))``, optionally on a process pool; order is kept."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def demosaic(mosaic, method="fdzp", phase_shift=True):
    """Four full-resolution planes and an info dict (clamp counts for FDZP)."""
    if method == "fdzp":
        return demosaic_fdzp(mosaic, phase_shift=phase_shift)
    if method == "bilinear":
        return demosaic_bilinear(mosaic), {"clamped": {a: 0 for a in ANGLES}}
    raise ValueError(f"unknown demosaic method {method!r}; expected fdzp or bilinear")


def descriptors(mosaic, method="fdzp", phase_shift=True, eps=None, require_s1=True):
    """Run demosaic -> Stokes -> DOLP/AOLP on one mosaic.

    Returns ``(PolarimetricImage, StokesImage, demosaic_info)``.
    """
    planes, info = demosaic(mosaic, method, phase_shift)
    stokes = compute_stokes(planes[0], planes[45], planes[90], planes[135])
    return compute_descriptors(stokes, eps=eps, require_s1=require_s1), stokes, info


def descriptor_image(polar, descriptor="aolp", mask=None):
    """Select one descriptor plane (invalid pixels 0), optionally masked."""
    if descriptor not in DESCRIPTOR_RANGES:
        raise ValueError(f"unknown descriptor {descriptor!r}; expected aolp or dolp")
    img = getattr(polar, descriptor)
    return img if mask is None else apply_mask(img, mask)


def feature_matrix(images, masks, descriptor="aolp"):
    vr = DESCRIPTOR_RANGES[descriptor]
    return np.array([extract_features(img, m, value_range=vr) for img, m in zip(images, masks)])


def split_arrays(features, labels, splits):
    """Map split name -> (X, y) over the rows tagged with that split."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    splits = np.asarray(splits, dtype=object)
    return {s: (features[splits == s], labels[splits == s]) for s in ("train", "val", "test")}


def train_baseline(features, labels, splits, **clf_params):
    """Fit the softmax baseline on ``train`` with early stopping on ``val``."""
    parts = split_arrays(features, labels, splits)
    Xtr, ytr = parts["train"]
    Xv, yv = parts["val"]
    if len(ytr) == 0:
        raise ValueError("no training records")
    model = SoftmaxAdamClassifier(**clf_params)
    if len(yv):
        return model.fit(Xtr, ytr, Xv, yv)
    return model.fit(Xtr, ytr)


def cross_validation_ledger(features, labels, ids, plan, ledger=None, **clf_params):
    """Train one model per fold and record per-image validation losses.

    ``plan`` is a :class:`FoldPlan` over a subset of ``ids``. Returns the
    ledger and the fitted fold models (fold order).
    """
    ledger = ledger if ledger is not None else LossLedger()
    index = {rid: i for i, rid in enumerate(ids)}
    features = np.asarray(features)
    labels = np.asarray(labels)
    models = []
    for fold in range(plan.k):
        tr = [index[i] for i in plan.training_ids(fold)]
        va_ids = plan.validation_ids(fold)
        va = [index[i] for i in va_ids]
        m = SoftmaxAdamClassifier(**clf_params).fit(features[tr], labels[tr], features[va], labels[va])
        m.record_validation_losses(ledger, va_ids, fold)
        models.append(m)
    return ledger, models


def degrade_record(img, mask, scenario, params, stream):
    """Degraded image and the support mask that goes with it."""
    s = Scenario.parse(scenario)
    return apply_scenario(img, mask, s, params, stream=stream), scenario_support(mask, s, params)


def degradation_study(model, images, masks, labels, ids, params=None, scenarios=SCENARIOS,
                      descriptor="aolp", streams=None, fuse=None):
    """Evaluate a trained model on every degradation scenario.

    Image ``j`` uses random stream ``streams[j]`` (default ``j``). ``fuse``
    is an optional ``(model, images, descriptor)`` triple whose probability
    vectors are averaged with the primary model's (same degradation seed).
    Returns ``{Scenario: EvalReport}`` in table row order.
    """
    params = params or DegradeParams()
    streams = range(len(ids)) if streams is None else streams
    truth = dict(zip(ids, labels))
    out = {}
    for sc in (Scenario.parse(s) for s in scenarios):
        P = _scenario_probs(model, images, masks, sc, params, streams, descriptor)
        if fuse is not None:
            fmodel, fimages, fdesc = fuse
            P = 0.5 * (P + _scenario_probs(fmodel, fimages, masks, sc, params, streams, fdesc))
        out[sc] = evaluate(dict(zip(ids, P)), truth)
    return out


def _scenario_probs(model, images, masks, scenario, params, streams, descriptor):
    vr = DESCRIPTOR_RANGES[descriptor]
    feats = []
    for img, m, st in zip(images, masks, streams):
        d, sup = degrade_record(img, m, scenario, params, st)
        feats.append(extract_features(d, sup, value_range=vr))
    return model.predict_proba(np.array(feats))


def report_rows(reports, labels=None):
    """Rows of the degradation table: Scenario, Accuracy, F1-Macro, Avg-Confidence."""
    rows = []
    for key, rep in reports.items():
        try:
            name = (labels or SCENARIO_LABELS)[Scenario.parse(key)]
        except (KeyError, ValueError):
            name = str(key)
        rows.append({
            "Scenario": name,
            "Accuracy": f"{rep.accuracy:.4f}",
            "F1-Macro": f"{rep.macro_f1:.4f}",
            "Avg-Confidence": f"{rep.avg_confidence:.4f}",
        })
    return rows
