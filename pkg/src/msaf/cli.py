"""Command-line interface: one executable, one verb per pipeline stage.

Every stochastic verb honors --seed, every stage writes file artifacts,
and failures exit with a machine-readable JSON line on stderr using the
taxonomy's exit codes: 2 config, 3 data, 4 numeric.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .errors import (
    AmbiguousLabels,
    ConfigError,
    DataError,
    InvalidConfig,
    MsafError,
    NumericError,
    UnlabeledData,
)
from .explain import ShapExplanation, explain, global_ranking
from .features import build_feature_table, extract_features
from .io import (
    load_feature_table,
    read_json,
    save_recording,
    standard_1020_montage,
)
from .microstates import (
    MicrostateMaps,
    Segmentation,
    backfit,
    group_cluster,
    label_maps,
)
from .models import (
    DEFAULT_GRIDS,
    MODEL_KINDS,
    make_trainer,
    model_from_json_dict,
    model_to_json_dict,
)
from .models._common import child_seed
from .models.evaluate import grid_search, stratified_kfold_cv
from .pipeline import (
    PipelineConfig,
    band_sweep,
    compute_stats,
    load_input_recordings,
    preprocess_recording,
    run_pipeline,
    subject_microstates,
    _commit_json,
    _commit_text,
    _ordered_map,
    _segmentation_json,
)
from .synth import (
    STANDARD_BANDS,
    SynthConfig,
    canonical_templates,
    generate,
    make_band_cohort,
    make_cohort,
    transition_from_weights,
)
from .topo import render_bar_chart, render_topomap

logger = logging.getLogger("msaf.cli")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None,
                        help="seed overriding any config seed (default 0)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; never changes output bytes")
    common.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))

    p = argparse.ArgumentParser(
        prog="msaf",
        description="EEG microstate analysis: segmentation, features, "
                    "classification, attribution, statistics.",
    )
    p.add_argument("--version", action="version", version=f"msaf {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, help_, **kw):
        return sub.add_parser(name, help=help_, parents=[common], **kw)

    q = verb("preprocess", "filter/reference/resample recordings")
    q.add_argument("input_dir", help="directory of .eegb recordings")
    q.set_defaults(func=_cmd_preprocess)

    q = verb("synth", "generate synthetic recordings with ground truth")
    q.set_defaults(func=_cmd_synth)

    q = verb("segment", "cluster each subject's GFP-peak maps")
    q.add_argument("input_dir")
    q.add_argument("--k", type=int, default=4)
    q.set_defaults(func=_cmd_segment)

    q = verb("group-maps", "cluster per-subject maps into group maps")
    q.add_argument("maps_dir", help="directory of per-subject maps JSON")
    q.add_argument("--k", type=int, default=4)
    q.set_defaults(func=_cmd_group_maps)

    q = verb("label", "assign A/B/C/F labels to maps")
    q.add_argument("maps_json")
    q.add_argument("--templates", default="auto",
                   help="'auto' for built-in templates or a maps JSON path")
    q.add_argument("--mapping", default=None,
                   help="explicit 'index=LABEL,...' assignment")
    q.set_defaults(func=_cmd_label)

    q = verb("backfit", "assign every sample to its best group map")
    q.add_argument("input_dir")
    q.add_argument("maps_json")
    q.add_argument("--min-segment-ms", type=float, default=0.0)
    q.set_defaults(func=_cmd_backfit)

    q = verb("features", "temporal dynamics features per subject")
    q.add_argument("seg_dir", help="directory of segmentation JSON files")
    q.add_argument("--gfp-aggregate", default="mean", choices=("mean", "median"))
    q.add_argument("--trim-edge-runs", action="store_true")
    q.set_defaults(func=_cmd_features)

    q = verb("train", "fit a classifier on a feature table")
    q.add_argument("features_csv")
    q.add_argument("--model", default="svm", choices=MODEL_KINDS)
    q.add_argument("--params", default=None, help="JSON object of parameters")
    q.add_argument("--grid", default=None,
                   help="'default' or a JSON object of parameter lists")
    q.add_argument("--folds", type=int, default=5)
    q.set_defaults(func=_cmd_train)

    q = verb("evaluate", "stratified k-fold cross-validation report")
    q.add_argument("features_csv")
    q.add_argument("--model", default="svm", choices=MODEL_KINDS)
    q.add_argument("--params", default=None)
    q.add_argument("--folds", type=int, default=5)
    q.set_defaults(func=_cmd_evaluate)

    q = verb("explain", "per-feature attribution of model scores")
    q.add_argument("model_json")
    q.add_argument("features_csv")
    q.add_argument("--method", default="auto",
                   choices=("auto", "exact", "kernel", "tree"))
    q.add_argument("--class", dest="class_name", default=None,
                   help="restrict stored attributions to one class")
    q.add_argument("--background", type=int, default=64)
    q.add_argument("--n-samples", type=int, default=2048)
    q.set_defaults(func=_cmd_explain)

    q = verb("explain-rank", "global feature ranking from attributions")
    q.add_argument("shap_json")
    q.set_defaults(func=_cmd_explain_rank)

    q = verb("stats", "nonparametric group tests per feature")
    q.add_argument("features_csv")
    q.set_defaults(func=_cmd_stats)

    q = verb("topo", "render scalp topography SVGs for maps")
    q.add_argument("maps_json")
    q.add_argument("--size", type=int, default=360)
    q.set_defaults(func=_cmd_topo)

    q = verb("band-sweep", "run the pipeline once per frequency band")
    q.add_argument("--bands", default="delta,theta,alpha,beta",
                   help="comma list of standard names or name=low-high")
    q.set_defaults(func=_cmd_band_sweep)

    q = verb("run", "full pipeline: preprocess through statistics")
    q.set_defaults(func=_cmd_run)
    return p


def _need(args, attr: str, flag: str):
    v = getattr(args, attr, None)
    if not v:
        raise InvalidConfig(f"this verb requires {flag}")
    return v


def _seed_of(args, cfg: Optional[dict] = None) -> int:
    if args.seed is not None:
        return args.seed
    if cfg and isinstance(cfg.get("seed"), int):
        return cfg["seed"]
    return 0


def _load_config(args) -> dict:
    path = _need(args, "config", "--config")
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{path!r} must hold a JSON object")
    return doc


def _pipeline_config(args) -> PipelineConfig:
    doc = _load_config(args)
    if args.out:
        doc["out_dir"] = args.out
    if "out_dir" not in doc or not doc["out_dir"]:
        raise InvalidConfig("set out_dir in the config or pass --out")
    if args.seed is not None:
        doc["seed"] = args.seed
    return PipelineConfig.from_json_dict(doc)


# --- verb implementations ---

def _cmd_preprocess(args) -> int:
    out = _need(args, "out", "--out")
    doc = read_json(args.config) if args.config else {}
    unknown = set(doc) - {"montage", "steps", "band", "seed"}
    if unknown:
        raise InvalidConfig(f"unknown preprocess config keys {sorted(unknown)}")
    cfg = PipelineConfig(
        input_dir=args.input_dir,
        out_dir=out,
        montage=tuple(doc["montage"]) if doc.get("montage") else None,
        steps=tuple(doc.get("steps", ())),
        band=tuple(doc["band"]) if doc.get("band") else None,
    )
    os.makedirs(out, exist_ok=True)
    recs = load_input_recordings(cfg.input_dir, cfg.montage)
    done = _ordered_map(
        lambda r: preprocess_recording(r, cfg), recs, args.threads
    )
    for rec in done:
        stem = os.path.join(out, rec.subject_id)
        save_recording(rec, stem + ".partial")
        os.replace(stem + ".partial.eegb", stem + ".eegb")
        os.replace(stem + ".partial.json", stem + ".json")
    print(f"preprocessed {len(done)} recordings -> {out}")
    return 0


def _normalize_profiles(doc: dict) -> dict:
    profiles = {}
    for label, fields in doc.items():
        if not isinstance(fields, dict):
            raise InvalidConfig(f"profile {label!r} must be an object")
        unknown = set(fields) - {"weights", "transition", "mean_dwell_ms", "amplitudes"}
        if unknown:
            raise InvalidConfig(f"profile {label!r} has unknown keys {sorted(unknown)}")
        p = dict(fields)
        if "weights" in p:
            if "transition" in p:
                raise InvalidConfig(f"profile {label!r}: give weights or transition, not both")
            p["transition"] = transition_from_weights(p.pop("weights"))
        profiles[str(label)] = p
    return profiles


def _cmd_synth(args) -> int:
    out = _need(args, "out", "--out")
    doc = _load_config(args)
    kind = doc.get("kind", "cohort")
    seed = _seed_of(args, doc)
    os.makedirs(out, exist_ok=True)
    truth_dir = os.path.join(out, "truth")
    os.makedirs(truth_dir, exist_ok=True)

    if kind == "cohort":
        allowed = {"kind", "n_per_class", "seed", "profiles", "base"}
        unknown = set(doc) - allowed
        if unknown:
            raise InvalidConfig(f"unknown synth keys {sorted(unknown)}")
        profiles = (
            _normalize_profiles(doc["profiles"]) if doc.get("profiles") else None
        )
        pairs = make_cohort(
            int(doc.get("n_per_class", 10)),
            profiles=profiles,
            seed=seed,
            base=doc.get("base"),
        )
    elif kind == "band_cohort":
        allowed = {"kind", "n_per_class", "band", "snr", "duration", "fs", "seed"}
        unknown = set(doc) - allowed
        if unknown:
            raise InvalidConfig(f"unknown synth keys {sorted(unknown)}")
        pairs = make_band_cohort(
            int(doc.get("n_per_class", 10)),
            band=tuple(doc.get("band", (4.0, 8.0))),
            seed=seed,
            snr=float(doc.get("snr", 4.0)),
            duration=float(doc.get("duration", 20.0)),
            fs=float(doc.get("fs", 250.0)),
        )
    elif kind == "single":
        fields = dict(doc)
        fields.pop("kind", None)
        fields["seed"] = seed
        rec, seg, _ = generate(SynthConfig(**fields))
        pairs = [(rec, seg)]
    else:
        raise InvalidConfig(f"synth kind must be cohort|band_cohort|single, got {kind!r}")

    for rec, seg in pairs:
        stem = os.path.join(out, rec.subject_id)
        save_recording(rec, stem + ".partial")
        os.replace(stem + ".partial.eegb", stem + ".eegb")
        os.replace(stem + ".partial.json", stem + ".json")
        _commit_json(
            os.path.join(truth_dir, rec.subject_id + ".json"),
            _segmentation_json(rec, seg),
        )
    print(f"wrote {len(pairs)} recordings (+truth) -> {out}")
    return 0


def _kmeans_cfg(args) -> PipelineConfig:
    doc = read_json(args.config) if args.config else {}
    unknown = set(doc) - {"kmeans", "min_peak_distance_ms", "seed"}
    if unknown:
        raise InvalidConfig(f"unknown segment config keys {sorted(unknown)}")
    return PipelineConfig(
        input_dir=args.input_dir,
        out_dir="unused",
        k=args.k,
        kmeans=doc.get("kmeans"),
        min_peak_distance_ms=float(doc.get("min_peak_distance_ms", 0.0)),
    )


def _cmd_segment(args) -> int:
    out = _need(args, "out", "--out")
    cfg = _kmeans_cfg(args)
    seed = _seed_of(args, read_json(args.config) if args.config else None)
    recs = load_input_recordings(args.input_dir)
    os.makedirs(out, exist_ok=True)

    def _one(item):
        idx, rec = item
        return subject_microstates(rec, cfg, seed=child_seed(seed, 100, idx))

    maps = _ordered_map(_one, list(enumerate(recs)), args.threads)
    for rec, m in zip(recs, maps):
        _commit_json(os.path.join(out, rec.subject_id + ".json"), m.to_json_dict())
    print(f"segmented {len(recs)} subjects -> {out}")
    return 0


def _cmd_group_maps(args) -> int:
    out = _need(args, "out", "--out")
    names = sorted(f for f in os.listdir(args.maps_dir) if f.endswith(".json"))
    if not names:
        raise InvalidConfig(f"no maps JSON files in {args.maps_dir!r}")
    subj_maps = [
        MicrostateMaps.from_json_dict(read_json(os.path.join(args.maps_dir, f)))
        for f in names
    ]
    gmaps = group_cluster(
        subj_maps, args.k, seed=child_seed(_seed_of(args), 200)
    )
    _commit_json(out, gmaps.to_json_dict())
    print(f"group maps (k={args.k}, gev={gmaps.gev_total:.4f}) -> {out}")
    return 0


def _parse_mapping(text: str) -> dict[int, str]:
    mapping = {}
    for part in text.split(","):
        if "=" not in part:
            raise InvalidConfig(f"mapping entries look like index=LABEL, got {part!r}")
        idx, label = part.split("=", 1)
        try:
            mapping[int(idx.strip())] = label.strip()
        except ValueError:
            raise InvalidConfig(f"map index must be an integer, got {idx!r}")
    return mapping


def _cmd_label(args) -> int:
    out = _need(args, "out", "--out")
    maps = MicrostateMaps.from_json_dict(read_json(args.maps_json))
    if args.mapping is not None:
        if args.templates != "auto":
            raise AmbiguousLabels("give --mapping or --templates, not both")
        labeled = label_maps(maps, mapping=_parse_mapping(args.mapping))
    elif args.templates == "auto":
        montage = standard_1020_montage(maps.channels)
        labeled = label_maps(maps, templates=canonical_templates(montage))
    else:
        templates = MicrostateMaps.from_json_dict(read_json(args.templates))
        labeled = label_maps(maps, templates=templates)
    _commit_json(out, labeled.to_json_dict())
    print(f"labels {list(labeled.labels)} -> {out}")
    return 0


def _cmd_backfit(args) -> int:
    out = _need(args, "out", "--out")
    gmaps = MicrostateMaps.from_json_dict(read_json(args.maps_json))
    recs = load_input_recordings(args.input_dir)
    os.makedirs(out, exist_ok=True)
    segs = _ordered_map(
        lambda r: backfit(r, gmaps, min_segment_ms=args.min_segment_ms),
        recs,
        args.threads,
    )
    for rec, seg in zip(recs, segs):
        _commit_json(
            os.path.join(out, rec.subject_id + ".json"),
            _segmentation_json(rec, seg),
        )
    print(f"backfitted {len(recs)} recordings -> {out}")
    return 0


def _cmd_features(args) -> int:
    out = _need(args, "out", "--out")
    names = sorted(f for f in os.listdir(args.seg_dir) if f.endswith(".json"))
    if not names:
        raise InvalidConfig(f"no segmentation JSON files in {args.seg_dir!r}")
    entries = []
    for f in names:
        doc = read_json(os.path.join(args.seg_dir, f))
        seg = Segmentation.from_json_dict(doc)
        sid = doc.get("subject_id", os.path.splitext(f)[0])
        label = doc.get("label")
        if label is None:
            raise UnlabeledData(f"segmentation {f!r} has no class label")
        fv = extract_features(
            seg,
            gfp_aggregate=args.gfp_aggregate,
            trim_edge_runs=args.trim_edge_runs,
        )
        entries.append((sid, label, fv))
    table = build_feature_table(entries)
    table.to_csv(out + ".partial")
    os.replace(out + ".partial", out)
    print(f"{table.n_rows} x {len(table.feature_names)} feature table -> {out}")
    return 0


def _parse_params(text: Optional[str]) -> dict:
    if not text:
        return {}
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"--params must be a JSON object: {e}")
    if not isinstance(doc, dict):
        raise InvalidConfig("--params must be a JSON object")
    return doc


def _cmd_train(args) -> int:
    out = _need(args, "out", "--out")
    table = load_feature_table(args.features_csv)
    params = _parse_params(args.params)
    seed = _seed_of(args)
    grid_doc = None
    if args.grid:
        grid_doc = (
            DEFAULT_GRIDS[args.model]
            if args.grid == "default"
            else _parse_params(args.grid)
        )
        gs = grid_search(
            lambda p: make_trainer(args.model, {**params, **p}),
            table.values,
            table.y,
            grid_doc,
            n_folds=args.folds,
            seed=child_seed(seed, 300),
        )
        params.update(gs.best_params)
        logger.info("grid best %s at %.4f", gs.best_params, gs.best_score)
    model = make_trainer(args.model, params)(
        table.values, table.y, child_seed(seed, 301)
    )
    doc = model_to_json_dict(model)
    doc["feature_names"] = list(table.feature_names)
    doc["class_names"] = list(table.class_names)
    if grid_doc:
        doc["grid_best_params"] = {k: params[k] for k in grid_doc}
    _commit_json(out, doc)
    print(f"trained {args.model} on {table.n_rows} rows -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    out = _need(args, "out", "--out")
    table = load_feature_table(args.features_csv)
    report = stratified_kfold_cv(
        make_trainer(args.model, _parse_params(args.params)),
        table.values,
        table.y,
        n_folds=args.folds,
        seed=child_seed(_seed_of(args), 400),
        class_names=table.class_names,
    )
    _commit_json(out, report.to_json_dict())
    print(report.format_table())
    print(f"eval report -> {out}")
    return 0


def _cmd_explain(args) -> int:
    out = _need(args, "out", "--out")
    doc = read_json(args.model_json)
    model = model_from_json_dict(doc)
    table = load_feature_table(args.features_csv)
    seed = _seed_of(args)
    n_bg = min(args.background, table.n_rows)
    if n_bg < 1:
        raise InvalidConfig("--background must be >= 1")
    rng = np.random.default_rng([child_seed(seed, 500)])
    bg_idx = np.sort(rng.choice(table.n_rows, size=n_bg, replace=False))
    expl = explain(
        model,
        table.values,
        table.values[bg_idx],
        method=args.method,
        n_samples=args.n_samples,
        seed=child_seed(seed, 501),
        feature_names=table.feature_names,
    )
    class_names = list(doc.get("class_names", [str(c) for c in model.classes]))
    payload = expl.to_json_dict()
    payload["class_names"] = class_names
    payload["subject_ids"] = list(table.subject_ids)
    if args.class_name is not None:
        if args.class_name not in class_names:
            raise InvalidConfig(
                f"--class {args.class_name!r} not in {class_names}"
            )
        ci = class_names.index(args.class_name)
        payload["phi"] = [
            [[feat[ci]] for feat in inst] for inst in payload["phi"]
        ]
        payload["phi0"] = [payload["phi0"][ci]]
        payload["classes"] = [payload["classes"][ci]]
        payload["class_names"] = [args.class_name]
    _commit_json(out, payload)
    print(f"{expl.method} attributions for {table.n_rows} instances -> {out}")
    return 0


def _cmd_explain_rank(args) -> int:
    out = _need(args, "out", "--out")
    doc = read_json(args.shap_json)
    expl = ShapExplanation(
        method=doc["method"],
        classes=tuple(doc["classes"]),
        phi0=np.asarray(doc["phi0"], dtype=np.float64),
        phi=np.asarray(doc["phi"], dtype=np.float64),
        feature_names=tuple(doc["feature_names"]) if doc.get("feature_names") else None,
        meta=doc.get("meta", {}),
    )
    class_names = [
        str(c) for c in doc.get("class_names", [str(c) for c in expl.classes])
    ]
    lines = ["scope,rank,feature,mean_abs_shap"]
    overall = global_ranking(expl)
    for rank, (feat, score) in enumerate(overall.entries, start=1):
        lines.append(f"all,{rank},{feat},{repr(float(score))}")
    base = os.path.splitext(out)[0]
    for ci, cname in enumerate(class_names):
        ranked = global_ranking(expl, class_index=ci)
        for rank, (feat, score) in enumerate(ranked.entries, start=1):
            lines.append(f"{cname},{rank},{feat},{repr(float(score))}")
        svg = render_bar_chart(
            [n for n, _ in ranked.entries],
            [s for _, s in ranked.entries],
            title=f"mean |attribution|: {cname}",
        )
        _commit_text(f"{base}_{cname}.svg", svg)
    _commit_text(out, "\n".join(lines) + "\n")
    print(f"ranking ({len(class_names)} classes) -> {out}")
    return 0


def _cmd_stats(args) -> int:
    out = _need(args, "out", "--out")
    table = load_feature_table(args.features_csv)
    _commit_json(out, compute_stats(table))
    print(f"group statistics for {len(table.feature_names)} features -> {out}")
    return 0


def _cmd_topo(args) -> int:
    out = _need(args, "out", "--out")
    maps = MicrostateMaps.from_json_dict(read_json(args.maps_json))
    montage = standard_1020_montage(maps.channels)
    os.makedirs(out, exist_ok=True)
    for i, label in enumerate(maps.labels):
        svg = render_topomap(
            montage, maps.maps[i], title=str(label), size=args.size
        )
        _commit_text(os.path.join(out, f"{label}.svg"), svg)
    print(f"{maps.k} topographies -> {out}")
    return 0


def _parse_bands(text: str) -> list[tuple[str, tuple[float, float]]]:
    bands = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            name, rng = part.split("=", 1)
            try:
                lo, hi = rng.split("-", 1)
                bands.append((name.strip(), (float(lo), float(hi))))
            except ValueError:
                raise InvalidConfig(f"custom band looks like name=low-high, got {part!r}")
        elif part in STANDARD_BANDS:
            bands.append((part, STANDARD_BANDS[part]))
        else:
            raise InvalidConfig(
                f"unknown band {part!r}; standard bands: {sorted(STANDARD_BANDS)}"
            )
    if not bands:
        raise InvalidConfig("--bands selected nothing")
    return bands


def _cmd_band_sweep(args) -> int:
    cfg = _pipeline_config(args)
    rows = band_sweep(
        cfg, _parse_bands(args.bands), threads=args.threads
    )
    for row in rows:
        print(f"{row['rank']}. {row['band']:8s} "
              f"{row['low_hz']:.1f}-{row['high_hz']:.1f} Hz  "
              f"accuracy {row['cv_accuracy']:.4f}")
    return 0


def _cmd_run(args) -> int:
    cfg = _pipeline_config(args)
    manifest = run_pipeline(cfg, threads=args.threads)
    print(f"pipeline complete: {manifest['n_subjects']} subjects, "
          f"cv accuracy {manifest['cv_accuracy']:.4f}, "
          f"{len(manifest['artifacts'])} artifacts -> {cfg.out_dir}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.func(args) or 0)
    except MsafError as e:
        if isinstance(e, ConfigError):
            code = 2
        elif isinstance(e, DataError):
            code = 3
        elif isinstance(e, NumericError):
            code = 4
        else:
            code = 4
        print(
            json.dumps(
                {
                    "error": type(e).__name__,
                    "category": type(e).__mro__[1].__name__,
                    "message": str(e),
                    "exit_code": code,
                },
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return code


if __name__ == "__main__":
    sys.exit(main())
