"""``polarmp`` command line: one executable, one subcommand per pipeline stage.

Stages exchange directories. Each stage directory holds ``manifest.csv``
(refs relative to the directory), per-record files named ``<id>_<tag>.<ext>``,
``stage.json`` (format and quantization ranges) and ``run_manifest.json``
(parameters, seeds, input hashes, version). File-producing commands write
``<file>.manifest.json`` next to the file.

Errors print one JSON line on stderr (``{"error": ..., "key": ..., "command": ...}``)
and exit nonzero: 2 for usage/config problems, 1 for runtime failures.
"""

import argparse
import csv
import hashlib
import json
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    EvalReport,
    SoftmaxAdamClassifier,
    evaluate,
    fuse_predictions,
    import_predictions,
    write_predictions,
)
from .config import ConfigError, load_config
from .dataset import (
    FoldPlan,
    LossLedger,
    apply_refinement,
    flag_outliers,
    make_folds,
    read_manifest,
    stratified_holdout,
    write_manifest,
)
from .degrade import SCENARIOS, Scenario
from .imagery import (
    ANGLES,
    load_image,
    load_mask,
    load_mosaic,
    save_image,
    save_mask,
)
from .pipeline import (
    DESCRIPTOR_RANGES,
    REPORT_COLUMNS,
    degradation_study,
    degrade_record,
    demosaic,
    descriptor_image,
    feature_matrix,
    parallel_map,
    report_rows,
)
from .segment import segment_particle
from .stokes import compute_descriptors, compute_stokes
from .synth import generate_sample, sample_plan, write_dataset


class CLIError(Exception):
    def __init__(self, key, message, status=1):
        super().__init__(message)
        self.key = key
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flags = re.findall(r"--[\w-]+", message)
        key = flags[0] if flags else "argv"
        raise CLIError(key, message, status=2)


# ---------------------------------------------------------------------------
# stage directories


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Stage:
    """A directory with ``manifest.csv`` and optional ``stage.json``."""

    def __init__(self, root, key="--in"):
        self.root = Path(root)
        self.manifest = self.root / "manifest.csv"
        if not self.manifest.is_file():
            raise CLIError(key, f"no manifest.csv in {self.root}")
        meta = self.root / "stage.json"
        self.meta = json.loads(meta.read_text()) if meta.is_file() else {"stage": "dataset"}
        # a stage may borrow its planes from another directory (segment does)
        self.data_root = (self.root / self.meta["source"]) if "source" in self.meta else self.root
        self.records = read_manifest(self.manifest)
        self.inputs = [self.manifest]

    @property
    def kind(self):
        return self.meta["stage"]

    def file(self, rid, tag):
        return self.data_root / f"{rid}_{tag}.{self.meta.get('format', 'pgm')}"

    def load(self, rid, tag):
        lo, hi = self.meta["ranges"][tag]
        p = self.file(rid, tag)
        if not p.is_file():
            raise CLIError("--in", f"missing {p.name} ({tag!r} not produced by stage {self.kind})")
        return load_image(p, lo, hi)

    def mask(self, rec):
        if not rec.mask_ref:
            raise CLIError("mask", f"record {rec.id} has no mask")
        p = self.root / rec.mask_ref
        if not p.is_file():
            raise CLIError("mask", f"missing mask file {p}")
        return load_mask(p)

    def ref(self, rec, out_dir):
        """``rec`` with mask/image refs rewritten relative to ``out_dir``."""
        def rel(r):
            return os.path.relpath(self.root / r, out_dir) if r else ""
        return type(rec)(rec.id, rec.label, rel(rec.image_ref), rel(rec.mask_ref), rec.split)


def _write_stage(out, stage, fmt, ranges, records, extra=None):
    out.mkdir(parents=True, exist_ok=True)
    meta = {"stage": stage, "format": fmt, "ranges": ranges, **(extra or {})}
    (out / "stage.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_manifest(out / "manifest.csv", records)


def _run_manifest(path, args, cfg, inputs, outputs, seeds, extra=None):
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    data = {
        "subcommand": args.command,
        "version": __version__,
        "numpy": np.__version__,
        "params": json.loads(json.dumps(params, default=str)),
        "config": cfg.to_json(),
        "config_source": cfg.source,
        "seeds": seeds,
        "inputs": {str(p): sha256(p) for p in sorted({Path(p) for p in inputs}, key=str)},
        "outputs": sorted(str(p) for p in outputs),
    }
    if extra:
        data.update(extra)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return data


def _file_manifest_path(path):
    return Path(str(path) + ".manifest.json")


def _need_file(path, key):
    if path is None or not Path(path).is_file():
        raise CLIError(key, f"input not found: {path}")
    return Path(path)


# ---------------------------------------------------------------------------
# per-record workers (top-level so a process pool can pickle them)


def _demosaic_worker(job):
    root, rec, layout, method, phase_shift, fmt, out, hi = job
    mos = load_mosaic(Path(root) / rec.image_ref, layout)
    if mos.max_value != hi:
        raise ValueError(f"{rec.id}: bit depth differs from the rest of the dataset")
    planes, info = demosaic(mos, method, phase_shift)
    for a in ANGLES:
        save_image(Path(out) / f"{rec.id}_i{a}.{fmt}", planes[a], 0.0, hi)
    return rec.id, {str(a): n for a, n in info["clamped"].items()}


def _stokes_worker(job):
    stage, rec, layout, dm, eps, require_s1, apply, fmt, out, s0_hi = job
    if stage.kind == "dataset":
        mos = load_mosaic(stage.root / rec.image_ref, layout)
        planes, _ = demosaic(mos, dm["method"], dm["phase_shift"])
    else:
        planes = {a: stage.load(rec.id, f"i{a}") for a in ANGLES}
    st = compute_stokes(planes[0], planes[45], planes[90], planes[135])
    pol = compute_descriptors(st, eps=eps, require_s1=require_s1)
    mask = stage.mask(rec) if apply else None
    out = Path(out)
    save_image(out / f"{rec.id}_s0.{fmt}", st.s0, 0.0, s0_hi)
    for d in ("aolp", "dolp"):
        lo, hi = DESCRIPTOR_RANGES[d]
        save_image(out / f"{rec.id}_{d}.{fmt}", descriptor_image(pol, d, mask), lo, hi)
    valid = pol.valid if mask is None else pol.valid & mask
    save_mask(out / f"{rec.id}_valid.pgm", valid)
    return rec.id, {"overflow": int(pol.overflow_count), "violations": int(st.violations)}


def _segment_worker(job):
    stage, rec, tag, params, out = job
    img = load_image(stage.root / rec.image_ref) if tag == "image" else stage.load(rec.id, tag)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mask, status = segment_particle(img, params)
    save_mask(Path(out) / f"{rec.id}_mask.pgm", mask)
    return rec.id, status


def _degrade_worker(job):
    stage, rec, descriptor, scenario, params, stream, fmt, out = job
    img = stage.load(rec.id, descriptor)
    mask = stage.mask(rec)
    d, support = degrade_record(img, mask, scenario, params, stream)
    lo, hi = stage.meta["ranges"][descriptor]
    save_image(Path(out) / f"{rec.id}_{descriptor}.{fmt}", d, lo, hi)
    save_mask(Path(out) / f"{rec.id}_mask.pgm", support)
    return rec.id


def _features_worker(job):
    stage, rec, descriptor = job
    return feature_matrix([stage.load(rec.id, descriptor)], [stage.mask(rec)], descriptor)[0]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg):
    out = Path(args.out)
    layout = cfg.polarizer_layout()
    plan = sample_plan(args.n)
    jobs = [(i, label, args.seed, None, args.size, args.noise, layout, args.bit_depth) for i, label in plan]
    samples = parallel_map(_synth_worker, jobs, args.jobs)
    write_dataset(samples, out)
    outputs = [out / "manifest.csv"] + [out / s.record.image_ref for s in samples]
    _run_manifest(out / "run_manifest.json", args, cfg, [], outputs, {"seed": args.seed})
    return f"wrote {len(samples)} records to {out}"


def _synth_worker(job):
    return generate_sample(*job)


def cmd_demosaic(args, cfg):
    stage = Stage(args.inp)
    if stage.kind != "dataset":
        raise CLIError("--in", f"demosaic needs a dataset directory with mosaics, got stage {stage.kind!r}")
    cfg.override("demosaic", "method", args.method)
    if args.no_phase_shift:
        cfg.override("demosaic", "phase_shift", False)
    method = cfg.get("demosaic", "method")
    phase = cfg.get("demosaic", "phase_shift")
    layout = cfg.polarizer_layout()
    out = Path(args.out or stage.root / "demosaic")
    out.mkdir(parents=True, exist_ok=True)
    first = load_mosaic(stage.root / stage.records[0].image_ref, layout)
    hi = float(first.max_value)
    jobs = [(str(stage.root), r, layout, method, phase, args.format, str(out), hi) for r in stage.records]
    stats = dict(parallel_map(_demosaic_worker, jobs, args.jobs))
    records = [stage.ref(r, out) for r in stage.records]
    records = [type(r)(r.id, r.label, f"{r.id}_i0.{args.format}", r.mask_ref, r.split) for r in records]
    ranges = {f"i{a}": [0.0, hi] for a in ANGLES}
    _write_stage(out, "demosaic", args.format, ranges, records, {"method": method, "phase_shift": phase})
    inputs = stage.inputs + [stage.root / r.image_ref for r in stage.records]
    _run_manifest(out / "run_manifest.json", args, cfg, inputs, [out / "manifest.csv"], {},
                  {"clamped": stats})
    total = sum(sum(v.values()) for v in stats.values())
    return f"demosaiced {len(records)} mosaics ({method}) into {out}; clamped {total} negative pixels"


def cmd_stokes(args, cfg):
    stage = Stage(args.inp)
    if stage.kind not in ("dataset", "demosaic"):
        raise CLIError("--in", f"stokes needs a dataset or demosaic directory, got stage {stage.kind!r}")
    cfg.override("stokes", "eps", args.eps)
    if args.s0_only:
        cfg.override("stokes", "require_s1", False)
    eps = cfg.get("stokes", "eps")
    if eps is not None and not eps > 0:
        raise CLIError("stokes.eps", "eps must be > 0", status=2)
    layout = cfg.polarizer_layout()
    if stage.kind == "dataset":
        hi = float(load_mosaic(stage.root / stage.records[0].image_ref, layout).max_value)
    else:
        hi = float(stage.meta["ranges"]["i0"][1])
    out = Path(args.out or stage.root / "stokes")
    out.mkdir(parents=True, exist_ok=True)
    dm = cfg.values["demosaic"]
    jobs = [(stage, r, layout, dm, eps, cfg.get("stokes", "require_s1"), args.apply_mask, args.format, str(out), 2 * hi)
            for r in stage.records]
    stats = dict(parallel_map(_stokes_worker, jobs, args.jobs))
    records = [stage.ref(r, out) for r in stage.records]
    records = [type(r)(r.id, r.label, f"{r.id}_aolp.{args.format}", r.mask_ref, r.split) for r in records]
    ranges = {"s0": [0.0, 2 * hi], **{d: list(v) for d, v in DESCRIPTOR_RANGES.items()}}
    _write_stage(out, "stokes", args.format, ranges, records, {"masked": bool(args.apply_mask)})
    _run_manifest(out / "run_manifest.json", args, cfg, stage.inputs, [out / "manifest.csv"], {},
                  {"stats": stats})
    overflow = sum(s["overflow"] for s in stats.values())
    return f"wrote descriptors for {len(records)} records into {out}; DOLP overflow {overflow} px"


def cmd_segment(args, cfg):
    stage = Stage(args.inp)
    params = cfg.segmentation_params()
    out = Path(args.out or stage.root / "segment")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(stage, r, args.source, params, str(out)) for r in stage.records]
    statuses = dict(parallel_map(_segment_worker, jobs, args.jobs))
    records = [stage.ref(r, out) for r in stage.records]
    records = [type(r)(r.id, r.label, r.image_ref, f"{r.id}_mask.pgm", r.split) for r in records]
    # the new masks travel with the source planes, which stay where they are
    meta = {k: v for k, v in stage.meta.items() if k not in ("stage", "source")}
    source = os.path.relpath(stage.data_root, out)
    _write_stage(out, "segment", meta.pop("format", "pgm"), meta.pop("ranges", {}), records,
                 {"source": source, "source_stage": stage.kind, **meta})
    _run_manifest(out / "run_manifest.json", args, cfg, stage.inputs, [out / "manifest.csv"], {},
                  {"statuses": statuses})
    empty = sorted(k for k, v in statuses.items() if v != "ok")
    msg = f"segmented {len(records)} frames into {out}"
    if empty:
        msg += f"; warning: empty edge map for {len(empty)} frame(s): {','.join(empty[:5])}"
    return msg


def cmd_degrade(args, cfg):
    stage = Stage(args.inp)
    if args.descriptor not in stage.meta.get("ranges", {}):
        raise CLIError("--descriptor", f"stage {stage.kind!r} has no {args.descriptor!r} planes")
    cfg.override("degrade", "fill_mode", args.fill_mode)
    cfg.override("degrade", "hull_sigma_frac", args.hull_sigma_frac)
    params = cfg.degrade_params(args.seed)
    scenarios = _parse_scenarios(args.scenario)
    root_out = Path(args.out or stage.root / "degrade")
    fmt = stage.meta.get("format", "pgm")
    written = []
    for sc in scenarios:
        out = root_out / sc.value
        out.mkdir(parents=True, exist_ok=True)
        jobs = [(stage, r, args.descriptor, sc, params, i, fmt, str(out)) for i, r in enumerate(stage.records)]
        parallel_map(_degrade_worker, jobs, args.jobs)
        records = [type(r)(r.id, r.label, f"{r.id}_{args.descriptor}.{fmt}", f"{r.id}_mask.pgm", r.split)
                   for r in stage.records]
        ranges = {args.descriptor: stage.meta["ranges"][args.descriptor]}
        _write_stage(out, "degrade", fmt, ranges, records, {"scenario": sc.value, "descriptor": args.descriptor})
        _run_manifest(out / "run_manifest.json", args, cfg, stage.inputs, [out / "manifest.csv"],
                      {"seed": args.seed, "stream": "record index in manifest order"})
        written.append(sc.value)
    return f"wrote scenarios {','.join(written)} under {root_out}"


def _table_position(name):
    try:
        return SCENARIOS.index(Scenario.parse(name)), str(name)
    except ValueError:
        return len(SCENARIOS), str(name)


def _parse_scenarios(text):
    if text in ("all", None):
        return list(SCENARIOS)
    try:
        return [Scenario.parse(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CLIError("--scenario", str(exc), status=2) from None


def _ratios_arg(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise CLIError("--ratios", f"cannot parse ratios {text!r}", status=2) from None
    if len(vals) != 3:
        raise CLIError("--ratios", "need three comma-separated ratios", status=2)
    return vals


def cmd_split(args, cfg):
    path = _need_file(args.manifest, "--manifest")
    ratios = _ratios_arg(args.ratios) if args.ratios else cfg.get("dataset", "ratios")
    records = read_manifest(path)
    assigned = stratified_holdout(records, ratios, args.seed)
    out = Path(args.out or path)
    write_manifest(out, assigned)
    counts = {s: sum(r.split == s for r in assigned) for s in ("train", "val", "test")}
    _run_manifest(_file_manifest_path(out), args, cfg, [path], [out], {"seed": args.seed}, {"counts": counts})
    return "split " + " ".join(f"{k}={v}" for k, v in counts.items())


def cmd_folds(args, cfg):
    path = _need_file(args.manifest, "--manifest")
    k = args.k or cfg.get("dataset", "folds")
    pool = [r for r in read_manifest(path) if r.split in ("train", "val")]
    if not pool:
        raise CLIError("--manifest", "no train/val records; run split first")
    plan = make_folds(pool, k, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(plan.to_json(), indent=2, sort_keys=True) + "\n")
    _run_manifest(_file_manifest_path(out), args, cfg, [path], [out], {"seed": args.seed})
    sizes = [len(plan.validation_ids(f)) for f in range(plan.k)]
    return f"{plan.k} folds over {len(pool)} records, sizes {sizes}"


def _stage_features(stage, records, descriptor, jobs):
    return np.array(parallel_map(_features_worker, [(stage, r, descriptor) for r in records], jobs))


def _descriptor_of(stage, requested):
    if requested:
        return requested
    return stage.meta.get("descriptor", "aolp")


def cmd_train(args, cfg):
    stage = Stage(args.inp)
    descriptor = _descriptor_of(stage, args.descriptor)
    if descriptor not in stage.meta.get("ranges", {}):
        raise CLIError("--descriptor", f"stage {stage.kind!r} has no {descriptor!r} planes")
    active = [r for r in stage.records if r.split in ("train", "val")]
    if not any(r.split == "train" for r in active):
        raise CLIError("split", "no records with split=train; run split first")
    X = _stage_features(stage, active, descriptor, args.jobs)
    y = np.array([r.label for r in active])
    sp = np.array([r.split for r in active])
    params = cfg.classifier_params(args.seed)
    model = SoftmaxAdamClassifier(**params)
    if (sp == "val").any():
        model.fit(X[sp == "train"], y[sp == "train"], X[sp == "val"], y[sp == "val"])
    else:
        model.fit(X[sp == "train"], y[sp == "train"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data = model.to_json()
    data["descriptor"] = descriptor
    data["loss_curve"] = model.loss_curve_
    data["val_loss_curve"] = model.val_loss_curve_
    out.write_text(json.dumps(data) + "\n")
    outputs = [out]
    msg = f"trained on {int((sp == 'train').sum())} records, best epoch {model.best_epoch_}"
    if args.folds:
        if not args.ledger:
            raise CLIError("--ledger", "--folds needs --ledger to write per-image losses", status=2)
        plan = FoldPlan.from_json(json.loads(_need_file(args.folds, "--folds").read_text()))
        index = {r.id: i for i, r in enumerate(active)}
        missing = [i for i in plan.assignments if i not in index]
        if missing:
            raise CLIError("--folds", f"fold ids not in the train/val pool: {missing[:3]}")
        ledger = LossLedger()
        for fold in range(plan.k):
            tr = [index[i] for i in plan.training_ids(fold)]
            va_ids = plan.validation_ids(fold)
            va = [index[i] for i in va_ids]
            m = SoftmaxAdamClassifier(**params).fit(X[tr], y[tr], X[va], y[va])
            m.record_validation_losses(ledger, va_ids, fold)
        ledger.save(args.ledger)
        outputs.append(Path(args.ledger))
        msg += f"; ledger with {len(ledger)} entries over {plan.k} folds"
    inputs = stage.inputs + ([Path(args.folds)] if args.folds else [])
    _run_manifest(_file_manifest_path(out), args, cfg, inputs, outputs, {"seed": args.seed})
    return msg


def _load_model(path):
    data = json.loads(_need_file(path, "--model").read_text())
    return SoftmaxAdamClassifier.from_json(data), data.get("descriptor", "aolp")


def _model_predictions(model, descriptor, stage, records, jobs):
    X = _stage_features(stage, records, descriptor, jobs)
    return dict(zip([r.id for r in records], model.predict_proba(X)))


def cmd_eval(args, cfg):
    truth_path = _need_file(args.truth, "--truth")
    records = read_manifest(truth_path)
    if args.split:
        records = [r for r in records if r.split == args.split]
    inputs = [truth_path]
    if args.pred:
        preds = _import(args.pred, "--pred")
        inputs.append(Path(args.pred))
    elif args.model:
        model, descriptor = _load_model(args.model)
        stage = Stage(args.inp or truth_path.parent)
        sel = {r.id for r in records}
        preds = _model_predictions(model, descriptor, stage, [r for r in stage.records if r.id in sel], args.jobs)
        inputs += [Path(args.model)] + stage.inputs
    else:
        raise CLIError("--pred", "give --pred CSV or --model", status=2)
    if args.fuse:
        preds = fuse_predictions(preds, _import(args.fuse, "--fuse"))
        inputs.append(Path(args.fuse))
    if args.write_pred:
        write_predictions(args.write_pred, preds)
    truth = {r.id: r.label for r in records}
    try:
        report = evaluate(preds, truth)
    except ValueError as exc:
        raise CLIError("--truth", str(exc)) from None
    outputs = []
    if args.out:
        report.save(args.out, args.matrix)
        outputs = [Path(args.out)] + ([Path(args.matrix)] if args.matrix else [])
        _run_manifest(_file_manifest_path(args.out), args, cfg, inputs, outputs, {})
    return (f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f} "
            f"avg_confidence={report.avg_confidence:.4f} n={report.n}")


def _import(path, key):
    try:
        return import_predictions(_need_file(path, key))
    except ValueError as exc:
        raise CLIError(key, str(exc)) from None


def cmd_refine(args, cfg):
    path = _need_file(args.manifest, "--manifest")
    ledger = LossLedger.load(_need_file(args.ledger, "--ledger"))
    cfg.override("refine", "policy", args.policy)
    cfg.override("refine", "n_sigma", args.n_sigma)
    cfg.override("refine", "top_frac", args.top_frac)
    r = cfg.values["refine"]
    flagged, info = flag_outliers(ledger, r["policy"], r["n_sigma"], r["top_frac"])
    records = read_manifest(path)
    try:
        refined, report = apply_refinement(records, flagged)
    except ValueError as exc:
        raise CLIError("--ledger", str(exc)) from None
    out = Path(args.out or path)
    write_manifest(out, refined)
    report = {**report, "policy": r["policy"], "n_sigma": r["n_sigma"], "top_frac": r["top_frac"],
              "thresholds": info, "ledger": str(args.ledger)}
    rep_path = Path(args.report or out.with_name(out.stem + "_refinement.json"))
    rep_path.write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    _run_manifest(_file_manifest_path(out), args, cfg, [path, Path(args.ledger)], [out, rep_path], {})
    return f"flagged {len(flagged)} ids; {report['active_count']} active records remain"


def cmd_report(args, cfg):
    out = Path(args.out)
    if args.reports:
        reports = {}
        for p in args.reports:
            rep = EvalReport.from_json(json.loads(_need_file(p, "--reports").read_text()))
            reports[rep.metadata.get("scenario", Path(p).stem)] = rep
        reports = dict(sorted(reports.items(), key=lambda kv: _table_position(kv[0])))
        inputs = [Path(p) for p in args.reports]
        seeds = {}
    else:
        if not (args.model and args.inp):
            raise CLIError("--model", "give --reports JSON files, or --model with --in to run the study", status=2)
        if args.seed is None:
            raise CLIError("--seed", "the degradation study needs --seed", status=2)
        model, descriptor = _load_model(args.model)
        stage = Stage(args.inp)
        recs = [(i, r) for i, r in enumerate(stage.records) if args.split is None or r.split == args.split]
        if not recs:
            raise CLIError("--split", f"no records with split={args.split}")
        images = [stage.load(r.id, descriptor) for _, r in recs]
        masks = [stage.mask(r) for _, r in recs]
        fuse = None
        inputs = stage.inputs + [Path(args.model)]
        if args.fuse_model:
            fmodel, fdesc = _load_model(args.fuse_model)
            fuse = (fmodel, [stage.load(r.id, fdesc) for _, r in recs], fdesc)
            inputs.append(Path(args.fuse_model))
        params = cfg.degrade_params(args.seed)
        reports = degradation_study(
            model, images, masks, [r.label for _, r in recs], [r.id for _, r in recs], params,
            _parse_scenarios(args.scenarios), descriptor, streams=[i for i, _ in recs], fuse=fuse,
        )
        if args.reports_dir:
            for sc, rep in reports.items():
                rep.metadata["scenario"] = sc.value
                rep.save(Path(args.reports_dir) / f"{sc.value}.json", Path(args.reports_dir) / f"{sc.value}_matrix.csv")
        seeds = {"seed": args.seed}
    rows = report_rows(reports)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _run_manifest(_file_manifest_path(out), args, cfg, inputs, [out], seeds)
    return "\n".join(",".join(row[c] for c in REPORT_COLUMNS) for row in rows)


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="polarmp", description="Polarimetric microplastic imaging pipeline.")
    p.add_argument("--version", action="version", version=f"polarmp {__version__}")
    p.add_argument("--config", help="INI run config (default: $POLARMP_CONFIG)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (output is order-independent)")
        return sp

    sp = add("synth", cmd_synth, "generate a labeled synthetic dataset tree")
    sp.add_argument("--n", type=int, required=True, help="records per class")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--size", type=int, default=128, help="image side, px (even)")
    sp.add_argument("--noise", type=float, default=0.0, help="Gaussian sensor noise sigma, DN")
    sp.add_argument("--bit-depth", type=int, default=16, choices=(8, 16))

    sp = add("demosaic", cmd_demosaic, "mosaics -> four analyzer planes")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")
    sp.add_argument("--method", choices=("fdzp", "bilinear"))
    sp.add_argument("--no-phase-shift", action="store_true", help="skip half-pixel co-registration")
    sp.add_argument("--format", choices=("pgm", "npy"), default="pgm")

    sp = add("stokes", cmd_stokes, "analyzer planes -> S0, DOLP, AOLP, validity")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--s0-only", action="store_true", help="validity guard on S0 alone")
    sp.add_argument("--apply-mask", action="store_true", help="zero descriptors outside the record masks")
    sp.add_argument("--format", choices=("pgm", "npy"), default="pgm")

    sp = add("segment", cmd_segment, "grayscale frames -> filled particle masks")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")
    sp.add_argument("--source", default="s0", help="plane tag to segment, or 'image' for the manifest image")

    sp = add("degrade", cmd_degrade, "apply feature-degradation scenarios")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")
    sp.add_argument("--scenario", default="all", help="tag, comma list, or 'all'")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--descriptor", default="aolp", choices=sorted(DESCRIPTOR_RANGES))
    sp.add_argument("--fill-mode", choices=("mask-mean", "mid-gray"))
    sp.add_argument("--hull-sigma-frac", type=float)

    sp = add("split", cmd_split, "stratified train/val/test assignment")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--ratios", help="train,val,test (default 0.70,0.15,0.15)")
    sp.add_argument("--out", help="output manifest (default: overwrite --manifest)")

    sp = add("folds", cmd_folds, "stratified k-fold plan over train+val")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train the softmax baseline (and optionally a CV loss ledger)")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, help="model JSON")
    sp.add_argument("--descriptor", choices=sorted(DESCRIPTOR_RANGES))
    sp.add_argument("--folds", help="fold plan JSON for the cross-validation ledger")
    sp.add_argument("--ledger", help="ledger JSON output")

    sp = add("eval", cmd_eval, "evaluate predictions against a manifest")
    sp.add_argument("--truth", required=True, help="manifest CSV with labels")
    sp.add_argument("--pred", help="prediction CSV id,p_pp,p_hdpe,p_ldpe")
    sp.add_argument("--model", help="model JSON (predicts on --in)")
    sp.add_argument("--in", dest="inp", help="stage directory for --model")
    sp.add_argument("--split", help="restrict truth to one split")
    sp.add_argument("--fuse", help="second prediction CSV to average with")
    sp.add_argument("--write-pred", help="write the (fused) predictions here")
    sp.add_argument("--out", help="EvalReport JSON")
    sp.add_argument("--matrix", help="normalized confusion matrix CSV")

    sp = add("refine", cmd_refine, "flag high-loss ids and move them to split=removed")
    sp.add_argument("--ledger", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--policy", choices=("mean", "max", "either"))
    sp.add_argument("--n-sigma", type=float)
    sp.add_argument("--top-frac", type=float)
    sp.add_argument("--out", help="output manifest (default: overwrite --manifest)")
    sp.add_argument("--report", help="refinement report JSON")

    sp = add("report", cmd_report, "degradation table: Scenario, Accuracy, F1-Macro, Avg-Confidence")
    sp.add_argument("--out", required=True, help="table CSV")
    sp.add_argument("--reports", nargs="+", help="aggregate existing EvalReport JSON files")
    sp.add_argument("--model", help="model JSON (runs the degradation study)")
    sp.add_argument("--in", dest="inp", help="stage directory with descriptor planes and masks")
    sp.add_argument("--scenarios", default="all")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--split", default="test")
    sp.add_argument("--fuse-model", help="second model whose probabilities are averaged in")
    sp.add_argument("--reports-dir", help="also save per-scenario EvalReports here")
    return p


def run(argv=None):
    """Run one command; return the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command = next((a for a in argv if not a.startswith("-")), None)
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        cfg = load_config(args.config)
        msg = args.func(args, cfg)
    except CLIError as exc:
        return _fail(command, exc.key, str(exc), exc.status)
    except ConfigError as exc:
        return _fail(command, exc.key, str(exc), 2)
    except (ValueError, OSError) as exc:
        return _fail(command, "input", str(exc), 1)
    if msg:
        print(msg)
    return 0


def _fail(command, key, message, status):
    line = json.dumps({"error": " ".join(str(message).split()), "key": key, "command": command})
    print(line, file=sys.stderr)
    return status


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
