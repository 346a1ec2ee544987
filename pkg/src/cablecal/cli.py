"""Command-line front end.

Commands operate on a workspace directory (``--out``) with a fixed
layout: ``data/`` holds the tab-separated datasets, ``models/`` the
trained calibrator checkpoints, ``metrics/`` one JSON per experiment
cell, and ``report/`` the rendered tables.  Every command resolves the
same profile/config/seed triple, so a pipeline is reproducible from the
global seed alone.

Exit codes: 0 success, 2 configuration, 3 missing file or I/O, 4 dataset
schema, 5 invalid data or state, 70 unexpected internal error.  Failures
print one JSON line to stderr with a machine-readable category.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import ablation, calibrator as cal, report as report_mod
from .ablation import ResultStore, RunResult, TORQUE_OPS
from .calibrator import Calibrator
from .config import WorkbenchConfig, load_config, save_config
from .errors import MissingDataset, WorkbenchError
from .kinematics import KinematicParams
from .plant import REFERENCE_PLANT_PARAMS
from .protocol import collect_homed_suite, collect_homing_suite, collect_standard
from .seeding import derive_seed
from .statestream import Dataset

EXIT_BY_CATEGORY = {
    "config": 2,
    "io": 3,
    "missing-dataset": 3,
    "schema-mismatch": 4,
}
EXIT_OTHER_WORKBENCH = 5
EXIT_INTERNAL = 70

LOADS = ("unloaded", "loaded")


def _dirs(out: str) -> dict:
    return {name: os.path.join(out, name) for name in ("data", "models", "metrics", "report")}


def _dataset_path(out: str, name: str) -> str:
    return os.path.join(out, "data", name + ".tsv")


def _model_path(out: str, label: str, seed: int) -> str:
    safe = label.replace(":", "_")
    return os.path.join(out, "models", f"{safe}_seed{seed}.cal")


def _load_dataset(out: str, name: str) -> Dataset:
    path = _dataset_path(out, name)
    if not os.path.exists(path):
        raise MissingDataset(
            f"dataset {name!r} not found at {path}; run gen-data first"
        )
    return Dataset.read(path)


def _load_models(out: str, label: str, seeds) -> list:
    models = []
    for seed in seeds:
        path = _model_path(out, label, seed)
        if not os.path.exists(path):
            raise MissingDataset(
                f"model {label!r} seed {seed} not found at {path}; run train first"
            )
        models.append(Calibrator.load(path))
    return models


def _single_result(label: str, metrics, meta=None) -> RunResult:
    return RunResult(
        label=label,
        per_seed=[metrics],
        agg=cal.aggregate([metrics]),
        meta=dict(meta or {}),
    )


def _print_aggregate(label: str, agg) -> None:
    d = agg.display()
    cells = []
    for j, unit in enumerate(d["units"]):
        cells.append(f"j{j + 1} {d['rmse_mean'][j]:.4f} {unit}")
    print(f"{label:<28s} rmse " + "  ".join(cells))


# --- gen-data -----------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.profile).validated()
    out = args.out
    for d in _dirs(out).values():
        os.makedirs(d, exist_ok=True)
    save_config(cfg, os.path.join(out, "config.json"))
    with open(os.path.join(out, "plant.json"), "w") as fh:
        json.dump(REFERENCE_PLANT_PARAMS.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    plan = cfg.plan()
    params = REFERENCE_PLANT_PARAMS
    kin = KinematicParams()
    seed = args.seed

    if args.homing:
        train, test, segments = collect_homing_suite(
            plan, params, kin, derive_seed(seed, "data", "unloaded")
        )
        for k, seg in enumerate(segments):
            seg.write(_dataset_path(out, f"homing_seg{k}"))
    else:
        train, test = collect_standard(
            plan, params, kin, derive_seed(seed, "data", "unloaded")
        )
    train.write(_dataset_path(out, "train_unloaded"))
    test.write(_dataset_path(out, "test_unloaded"))
    print(f"train_unloaded: {len(train)} records")
    print(f"test_unloaded: {len(test)} records")

    train_l, test_l = collect_standard(
        plan, params, kin, derive_seed(seed, "data", "loaded"), load_mass=cfg.load_mass
    )
    train_l.write(_dataset_path(out, "train_loaded"))
    test_l.write(_dataset_path(out, "test_loaded"))
    print(f"train_loaded: {len(train_l)} records")
    print(f"test_loaded: {len(test_l)} records")

    if args.homing:
        train_h, segments_h = collect_homed_suite(
            plan, params, kin, derive_seed(seed, "data", "homed")
        )
        train_h.write(_dataset_path(out, "homed_train"))
        for k, seg in enumerate(segments_h):
            seg.write(_dataset_path(out, f"homed_seg{k}"))
        print(f"homed_train: {len(train_h)} records, {len(segments_h)} segments")
    return 0


# --- train --------------------------------------------------------------


def _train_and_save(out, train, label, ccfg, seeds, meta) -> list:
    calibrators, _ = ablation.train_seeds(train, ccfg, seeds, meta=meta)
    for seed, c in zip(seeds, calibrators):
        c.meta = dict(meta, seed=int(seed))
        c.save(_model_path(out, label, seed))
    return calibrators


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.profile).validated()
    out = args.out
    os.makedirs(os.path.join(out, "models"), exist_ok=True)
    ccfg = cfg.calibrator_config()
    for load, seeds in (
        ("unloaded", cfg.baseline_seeds),
        ("loaded", cfg.seeds),
    ):
        train = _load_dataset(out, f"train_{load}")
        label = f"baseline:{load}"
        _train_and_save(out, train, label, ccfg, seeds, {"load": load})
        print(f"{label}: trained seeds {list(seeds)} on {len(train)} records")
    return 0


# --- eval ---------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.profile).validated()
    out = args.out
    store = ResultStore(os.path.join(out, "metrics"))
    for load in args.load:
        seeds = cfg.baseline_seeds if load == "unloaded" else cfg.seeds
        train = _load_dataset(out, f"train_{load}")
        test = _load_dataset(out, f"test_{load}")
        models = _load_models(out, f"baseline:{load}", seeds)

        before = _single_result(f"before:{load}", cal.before_calibration_metrics(test))
        bias = _single_result(f"bias:{load}", cal.bias_removal_metrics(train, test))
        baseline = ablation.evaluate_seeds(models, test, f"baseline:{load}")
        store.put(before, [0])
        store.put(bias, [0])
        store.put(baseline, seeds)
        _print_aggregate(before.label, before.agg)
        _print_aggregate(bias.label, bias.agg)
        _print_aggregate(baseline.label, baseline.agg)
    return 0


# --- ablate -------------------------------------------------------------


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.profile).validated()
    out = args.out
    store = ResultStore(os.path.join(out, "metrics"))
    train = _load_dataset(out, "train_unloaded")
    test = _load_dataset(out, "test_unloaded")
    ccfg = cfg.calibrator_config()
    seeds = cfg.seeds
    noise_seed = derive_seed(args.seed, "noise")

    removal_groups = args.groups or list(ablation.REMOVAL_GROUPS)
    inaccurate_groups = args.groups or list(ablation.INACCURATE_GROUPS)

    for group in removal_groups:
        result, _ = ablation.removal_run(train, test, ccfg, group, seeds)
        store.put(result, seeds)
        _print_aggregate(result.label, result.agg)

    models = _load_models(out, "baseline:unloaded", seeds)
    for group in inaccurate_groups:
        result = ablation.inaccurate_run(models, test, group, noise_seed)
        store.put(result, seeds)
        _print_aggregate(result.label, result.agg)
    return 0


# --- torque-study -------------------------------------------------------


def cmd_torque_study(args) -> int:
    cfg = load_config(args.config, args.profile).validated()
    out = args.out
    store = ResultStore(os.path.join(out, "metrics"))
    test = _load_dataset(out, "test_unloaded")
    seeds = cfg.seeds
    models = _load_models(out, "baseline:unloaded", seeds)
    noise_seed = derive_seed(args.seed, "noise")
    for op in TORQUE_OPS:
        result = ablation.torque_run(models, test, op, noise_seed)
        store.put(result, seeds)
        _print_aggregate(result.label, result.agg)
    return 0


# --- homing-study -------------------------------------------------------


def cmd_homing_study(args) -> int:
    cfg = load_config(args.config, args.profile).validated()
    out = args.out
    store = ResultStore(os.path.join(out, "metrics"))
    seeds = cfg.seeds

    train = _load_dataset(out, "train_unloaded")
    segments = []
    k = 0
    while os.path.exists(_dataset_path(out, f"homing_seg{k}")):
        segments.append(_load_dataset(out, f"homing_seg{k}"))
        k += 1
    if len(segments) < 2:
        raise MissingDataset(
            "homing study needs at least two homing_seg datasets; "
            "run gen-data --homing first"
        )

    full_cfg = cfg.calibrator_config(excluded_groups=())
    raw_models = _train_and_save(
        out, train, "homing:raw_all", full_cfg, seeds, {"mask": "all"}
    )
    selected_models = _load_models(out, "baseline:unloaded", seeds)

    series = {
        "raw_all": ablation.homing_series(raw_models, segments, "homing:raw_all"),
        "selected": ablation.homing_series(
            selected_models, segments, "homing:selected"
        ),
    }
    for name, rows in series.items():
        store.put_series(f"homing_series:{name}", rows)
        for row in rows:
            _print_aggregate(f"{name} segment {row['segment']}", row["aggregate"])

    train_h = _load_dataset(out, "homed_train")
    seg0 = _load_dataset(out, "homed_seg0")
    homed_all = _train_and_save(
        out, train_h, "homed:all", full_cfg, seeds, {"mask": "all"}
    )
    # Encoder registers as the only pose source: drop the published pose
    # families, keep everything else (status, velocity, torque, wrench).
    enc_cfg = cfg.calibrator_config(
        excluded_groups=("joint_poses", "end_effector")
    ).validated()
    enc_models = _train_and_save(
        out, train_h, "homed:encoder_only", enc_cfg, seeds,
        {"mask": "encoders_as_pose"},
    )

    rows = [
        ablation.evaluate_seeds(homed_all, seg0, "homed:all"),
        ablation.evaluate_seeds(enc_models, seg0, "homed:encoder_only"),
        ablation.inaccurate_run(
            enc_models,
            seg0,
            "encoders",
            derive_seed(args.seed, "noise", "homed"),
        ),
    ]
    rows[-1].label = "homed:encoder_only_inaccurate"
    for result in rows:
        store.put(result, seeds)
        _print_aggregate(result.label, result.agg)
    return 0


# --- report -------------------------------------------------------------

REMOVAL_TABLE_ORDER = [
    ("before calibration", "before_unloaded_aggregate"),
    ("bias removal", "bias_unloaded_aggregate"),
    ("all features", "baseline_unloaded_aggregate"),
] + [
    (f"removed {g}", f"removal_{g}_aggregate") for g in ablation.REMOVAL_GROUPS
]

INACCURATE_TABLE_ORDER = [("all features", "baseline_unloaded_aggregate")] + [
    (f"inaccurate {g}", f"inaccurate_{g}_aggregate")
    for g in ablation.INACCURATE_GROUPS
]

TORQUE_TABLE_ORDER = [(f"torque {op}", f"torque_{op}_aggregate") for op in TORQUE_OPS]

HOMED_TABLE_ORDER = [
    ("all features", "homed_all_aggregate"),
    ("only encoder", "homed_encoder_only_aggregate"),
    ("inaccurate encoder", "homed_encoder_only_inaccurate_aggregate"),
]


def _rows_from_store(payloads: dict, order) -> list:
    rows = []
    for name, key in order:
        payload = payloads.get(key)
        if payload is not None:
            rows.append((name, payload["aggregate"]))
    return rows


def cmd_report(args) -> int:
    out = args.out
    store = ResultStore(os.path.join(out, "metrics"))
    payloads = store.read_all()
    os.makedirs(os.path.join(out, "report"), exist_ok=True)

    sections = [
        report_mod.study_table(
            "Feature removal", _rows_from_store(payloads, REMOVAL_TABLE_ORDER),
            "all features",
        ),
        report_mod.study_table(
            "Inaccurate features (test-time noise)",
            _rows_from_store(payloads, INACCURATE_TABLE_ORDER), "all features",
        ),
        report_mod.study_table(
            "Torque modification", _rows_from_store(payloads, TORQUE_TABLE_ORDER),
            "torque none",
        ),
        report_mod.study_table(
            "Homing-aware feature configurations",
            _rows_from_store(payloads, HOMED_TABLE_ORDER), "all features",
        ),
    ]
    doc = report_mod.render_report(
        [s for s in sections if "nothing to report" not in s]
    )
    path = os.path.join(out, "report", "tables.md")
    with open(path, "w") as fh:
        fh.write(doc)
    print(f"wrote {path}")

    series = {}
    for key, payload in payloads.items():
        if key.startswith("homing_series_"):
            series[key[len("homing_series_"):]] = payload["rows"]
    if series:
        tsv = report_mod.homing_series_tsv(series)
        spath = os.path.join(out, "report", "homing_series.tsv")
        with open(spath, "w") as fh:
            fh.write(tsv)
        print(f"wrote {spath}")
    return 0


# --- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cablecal",
        description="Joint-pose calibration workbench on a synthetic "
        "cable-driven robot plant.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="workspace directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument(
            "--profile",
            choices=("desk", "paper", "micro"),
            help="named parameter profile (default desk)",
        )
        p.add_argument("--seed", type=int, default=0, help="global seed")

    p = sub.add_parser("gen-data", help="simulate and write the datasets")
    common(p)
    p.add_argument(
        "--homing", action="store_true", help="also write the homing-study datasets"
    )
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the all-features calibrators")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate baselines against references")
    common(p)
    p.add_argument(
        "--load",
        nargs="+",
        choices=LOADS,
        default=list(LOADS),
        help="which load conditions to evaluate",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run removal and inaccurate studies")
    common(p)
    p.add_argument(
        "--groups", nargs="+", help="restrict to these feature groups"
    )
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("torque-study", help="run torque-modification study")
    common(p)
    p.set_defaults(func=cmd_torque_study)

    p = sub.add_parser("homing-study", help="run the homing studies")
    common(p)
    p.set_defaults(func=cmd_homing_study)

    p = sub.add_parser("report", help="render tables from stored metrics")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    np.seterr(all="raise", under="ignore")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
        return 0 if code is None else int(code)
    except WorkbenchError as exc:
        line = json.dumps({"category": exc.category, "error": str(exc)})
        print(line, file=sys.stderr)
        return EXIT_BY_CATEGORY.get(exc.category, EXIT_OTHER_WORKBENCH)
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        line = json.dumps({"category": "internal", "error": repr(exc)})
        print(line, file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
