"""Sample registry, stratified splits, CV folds, loss ledger and refinement.

The registry is a list of :class:`ParticleRecord`, persisted as a CSV
manifest with columns ``id,label,image,mask,split``. Refinement never
touches test records: flagged train/val ids move to ``split="removed"``.
"""

import csv
import json
import math
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._validation import check_seed, make_rng

CLASSES = ("PP", "HDPE", "LDPE")
SPLITS = ("train", "val", "test", "removed")
MANIFEST_COLUMNS = ("id", "label", "image", "mask", "split")


@dataclass(frozen=True)
class ParticleRecord:
    id: str
    label: str
    image_ref: str = ""
    mask_ref: str = ""
    split: str | None = None

    def __post_init__(self):
        if self.label not in CLASSES:
            raise ValueError(f"unknown label {self.label!r}; expected one of {CLASSES}")
        if self.split not in (None, *SPLITS):
            raise ValueError(f"unknown split {self.split!r}")


def _check_unique(records):
    seen = Counter(r.id for r in records)
    dup = [i for i, c in seen.items() if c > 1]
    if dup:
        raise ValueError(f"duplicate ids in registry: {sorted(dup)[:5]}")


def read_manifest(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest {path} missing columns: {sorted(missing)}")
        for row in reader:
            records.append(
                ParticleRecord(
                    row["id"], row["label"], row["image"], row["mask"], row["split"] or None
                )
            )
    _check_unique(records)
    return records


def write_manifest(path, records):
    _check_unique(records)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in sorted(records, key=lambda r: r.id):
            w.writerow([r.id, r.label, r.image_ref, r.mask_ref, r.split or ""])


def _by_class(records):
    groups = defaultdict(list)
    for r in sorted(records, key=lambda r: r.id):
        groups[r.label].append(r)
    return groups


def _largest_remainder(n, ratios):
    raw = [n * r for r in ratios]
    base = [math.floor(x + 1e-9) for x in raw]
    left = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def stratified_holdout(records, ratios=(0.70, 0.15, 0.15), seed=None):
    """Assign each record to train/val/test, preserving class proportions.

    Per-class split counts are floor quotas plus at most one extra record
    per split; the extras are steered so global split sizes match the
    largest-remainder apportionment of the whole registry.

    Returns a new list of records with ``split`` set.
    """
    seed = check_seed(seed)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-6:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    _check_unique(records)
    groups = _by_class(records)
    targets = _largest_remainder(len(records), ratios)
    if any(t == 0 for r, t in zip(ratios, targets) if r > 0):
        raise ValueError(
            f"class too small for requested ratios: {len(records)} records cannot fill every split"
        )
    quotas = {}
    for label in CLASSES:
        if label not in groups:
            continue
        n = len(groups[label])
        raw = [n * r for r in ratios]
        quotas[label] = [math.floor(x + 1e-9) for x in raw]
    deficit = [t - sum(q[s] for q in quotas.values()) for s, t in enumerate(targets)]
    for label in quotas:
        n = len(groups[label])
        q = quotas[label]
        frac = [n * r - b for r, b in zip(ratios, q)]
        used = set()
        for _ in range(n - sum(q)):
            free = [s for s in range(3) if s not in used]
            want = [s for s in free if deficit[s] > 0] or free
            s = max(want, key=lambda s: (frac[s], -s))
            q[s] += 1
            deficit[s] -= 1
            used.add(s)
    out = []
    for ci, label in enumerate(CLASSES):
        if label not in groups:
            continue
        members = groups[label]
        perm = make_rng(seed, 1, ci).permutation(len(members))
        names = []
        for s, c in zip(("train", "val", "test"), quotas[label]):
            names += [s] * c
        for idx, split in zip(perm, names):
            out.append(replace(members[idx], split=split))
    return sorted(out, key=lambda r: r.id)


@dataclass
class FoldPlan:
    k: int
    assignments: dict

    def validation_ids(self, fold):
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def training_ids(self, fold):
        return sorted(i for i, f in self.assignments.items() if f != fold)

    def to_json(self):
        return {"k": self.k, "assignments": dict(sorted(self.assignments.items()))}

    @classmethod
    def from_json(cls, data):
        return cls(int(data["k"]), {str(k): int(v) for k, v in data["assignments"].items()})


def make_folds(pool, k=5, seed=None):
    """Stratified k-fold plan over ``pool``.

    Records are shuffled within class, classes are concatenated in fixed
    order and fold indices dealt round-robin, so both per-class and overall
    fold sizes differ by at most one.
    """
    seed = check_seed(seed)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    _check_unique(pool)
    groups = _by_class(pool)
    for label, members in groups.items():
        if len(members) < k:
            raise ValueError(f"class {label} has {len(members)} members, fewer than k={k}")
    assignments = {}
    pos = 0
    for ci, label in enumerate(CLASSES):
        members = groups.get(label, [])
        for idx in make_rng(seed, 2, ci).permutation(len(members)):
            assignments[members[idx].id] = pos % k
            pos += 1
    return FoldPlan(k, assignments)


class LossLedger:
    """Per-image validation losses keyed by (id, fold, epoch).

    Writes go through a lock so concurrently trained folds can share a
    ledger; ``snapshot`` returns an immutable copy for readers.
    """

    def __init__(self, entries=None):
        self._entries = {}
        self._lock = threading.Lock()
        for key, loss in (entries or {}).items():
            self._store(key, loss)

    def _store(self, key, loss):
        loss = float(loss)
        if not (math.isfinite(loss) and loss >= 0):
            raise ValueError(f"loss must be finite and non-negative, got {loss}")
        self._entries[(str(key[0]), int(key[1]), int(key[2]))] = loss

    def record(self, id, fold, epoch, loss):
        with self._lock:
            self._store((id, fold, epoch), loss)
        return self

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, key):
        return self._entries[key]

    def snapshot(self):
        with self._lock:
            return dict(self._entries)

    def to_json(self):
        return {
            "entries": [
                {"id": i, "fold": f, "epoch": e, "loss": v}
                for (i, f, e), v in sorted(self.snapshot().items())
            ]
        }

    @classmethod
    def from_json(cls, data):
        led = cls()
        for row in data["entries"]:
            led.record(row["id"], row["fold"], row["epoch"], row["loss"])
        return led

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def record_loss(ledger, id, fold, epoch, prob_true):
    """Store the cross-entropy ``-ln(prob_true)`` for one validation image."""
    p = float(prob_true)
    if not (0 < p <= 1):
        raise ValueError(f"prob_true must lie in (0, 1], got {prob_true}")
    # + 0.0 turns -log(1) = -0.0 into 0.0
    return ledger.record(id, fold, epoch, -math.log(p) + 0.0)


def best_epochs(ledger):
    """Epoch of minimum mean validation loss for every fold (earliest on ties)."""
    sums = defaultdict(lambda: [0.0, 0])
    for (_, fold, epoch), v in ledger.snapshot().items():
        acc = sums[(fold, epoch)]
        acc[0] += v
        acc[1] += 1
    best = {}
    for (fold, epoch), (s, n) in sorted(sums.items()):
        m = s / n
        if fold not in best or m < best[fold][1]:
            best[fold] = (epoch, m)
    return {f: e for f, (e, _) in best.items()}


def per_id_losses(ledger, epochs="best"):
    """Mean and max loss per id over the selected ledger entries."""
    entries = ledger.snapshot()
    if not entries:
        raise ValueError("empty ledger")
    keep = best_epochs(ledger) if epochs == "best" else None
    vals = defaultdict(list)
    for (i, fold, epoch), v in sorted(entries.items()):
        if keep is None or keep[fold] == epoch:
            vals[i].append(v)
    return {i: (float(np.mean(v)), float(np.max(v))) for i, v in vals.items()}


def flag_outliers(ledger, policy="mean", n_sigma=2.0, top_frac=None, epochs="best"):
    """Flag ids with exceptionally high loss.

    ``policy`` is ``"mean"``, ``"max"`` or ``"either"``. By default an id is
    flagged when its statistic exceeds mu + ``n_sigma`` * sigma of that
    statistic over all ids (population sigma). With ``top_frac`` the
    highest-loss fraction of ids is flagged instead.

    Returns ``(flagged_ids, info)``.
    """
    if policy not in ("mean", "max", "either"):
        raise ValueError(f"policy must be mean, max or either, got {policy!r}")
    stats = per_id_losses(ledger, epochs)
    ids = sorted(stats)
    info = {"policy": policy, "n_sigma": n_sigma, "top_frac": top_frac, "epochs": epochs, "n_ids": len(ids)}
    if len(ids) < 2:
        return [], info
    means = np.array([stats[i][0] for i in ids])
    maxes = np.array([stats[i][1] for i in ids])
    if top_frac is not None:
        if not 0 <= top_frac <= 1:
            raise ValueError(f"top_frac must lie in [0, 1], got {top_frac}")
        key = means if policy == "mean" else maxes if policy == "max" else np.maximum(means, maxes)
        n = int(round(top_frac * len(ids)))
        # stable: ties resolved by id order
        order = sorted(range(len(ids)), key=lambda j: (-key[j], ids[j]))
        return sorted(ids[j] for j in order[:n]), info
    flags = np.zeros(len(ids), dtype=bool)
    for name, arr in (("mean", means), ("max", maxes)):
        mu, sigma = float(arr.mean()), float(arr.std())
        thr = mu + n_sigma * sigma
        info[f"{name}_mu"], info[f"{name}_sigma"], info[f"{name}_threshold"] = mu, sigma, thr
        if policy in (name, "either"):
            flags |= arr > thr
    return [i for i, f in zip(ids, flags) if f], info


def apply_refinement(records, flagged):
    """Move flagged train/val records to ``split="removed"``.

    Raises ``ValueError`` (leaving the registry untouched) if any flagged id
    is a test record or unknown. Returns ``(records, report)``.
    """
    by_id = {r.id: r for r in records}
    flagged = sorted(set(flagged))
    unknown = [i for i in flagged if i not in by_id]
    if unknown:
        raise ValueError(f"flagged ids not in registry: {unknown[:5]}")
    test_ids = [i for i in flagged if by_id[i].split == "test"]
    if test_ids:
        raise ValueError(f"refinement must not touch test records: {test_ids[:5]}")
    bad = [i for i in flagged if by_id[i].split not in ("train", "val", "removed")]
    if bad:
        raise ValueError(f"flagged ids have no train/val assignment: {bad[:5]}")
    newly = [i for i in flagged if by_id[i].split != "removed"]
    out = [replace(r, split="removed") if r.id in set(flagged) else r for r in records]
    pool = sum(1 for r in records if r.split in ("train", "val", "removed"))
    per_class = Counter(by_id[i].label for i in flagged)
    report = {
        "flagged_ids": flagged,
        "removed_count": len(flagged),
        "newly_removed": len(newly),
        "fraction_of_total": len(flagged) / len(records) if records else 0.0,
        "fraction_of_pool": len(flagged) / pool if pool else 0.0,
        "per_class": {c: per_class.get(c, 0) for c in CLASSES},
        "active_count": sum(1 for r in out if r.split != "removed"),
    }
    return out, report
