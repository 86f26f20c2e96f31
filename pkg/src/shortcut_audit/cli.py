"""Command-line entry point: ``shortcut-audit {audit,calibrate,split,utility,generate}``.

Exit codes: 0 on success (per-attribute problems become warnings), 2 for
configuration or input-data errors, 1 for anything unexpected.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import synthgen
from .audit import InsufficientData, compute_utility, default_jobs, derive_seed, prepare_attribute, prepare_label
from .audit import run_audit
from .calibration import run_calibration
from .config import AuditConfig, ConfigError, parse_config, schema_to_dicts
from .dataset import Dataset, DatasetError, encode_features, load_csv, rows_with_attribute, write_csv
from .report import (csv_text, dumps, load_report_json, utilities_from_report, write_atomic, write_audit,
                     write_calibration, write_split)
from .split_probe import correlate_detectability, split_probe, train_task_model

log = logging.getLogger("shortcut_audit")

OUT_ENV = "SHORTCUT_AUDIT_OUT"
EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2
UTILITY_COLUMNS = ("attribute", "utility_ami", "utility_mi_nats", "utility_ci_low", "utility_ci_high", "n_used",
                   "warnings")


class UsageError(ValueError):
    """Bad command-line input (distinct from config-file problems)."""


def output_dir(cfg: AuditConfig, cli_out: str | None = None) -> Path:
    """``--out`` beats the environment variable, which beats ``output.dir``."""
    if cli_out:
        return Path(cli_out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return cfg.output_dir


def _load(cfg: AuditConfig) -> Dataset:
    return encode_features(load_csv(cfg.data_path, cfg.schema))


def _attributes(cfg: AuditConfig, ds: Dataset) -> list[str]:
    return list(ds.attribute_names if cfg.attributes is None else cfg.attributes)


# --------------------------------------------------------------------------
# subcommands


def cmd_audit(cfg: AuditConfig, out: Path, jobs: int | None = None) -> int:
    ds = _load(cfg)
    jobs = jobs or cfg.jobs or default_jobs()
    report = run_audit(ds, cfg.settings(jobs))
    paths = write_audit(report, out)
    for a in report.attributes:
        for w in a.warnings:
            log.warning("%s: %s", a.attribute, w)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_utility(cfg: AuditConfig, out: Path) -> int:
    ds = _load(cfg)
    rows_out, doc = [], []
    for attr in _attributes(cfg, ds):
        warnings: list[str] = []
        rec = {"attribute": attr, "warnings": warnings}
        try:
            rows = rows_with_attribute(ds, attr)
            if rows.size == 0:
                raise InsufficientData("attribute is missing on every row")
            a = prepare_attribute(ds, attr, rows, cfg.min_count, warnings)
            y = prepare_label(ds, rows)
            score, ci = compute_utility(a, y, cfg.bootstrap_replicates, derive_seed(cfg.seed, attr, "utility"),
                                        cfg.normalization, warnings)
            rec.update(utility=score.to_dict(), utility_ci=list(ci), n_used=int(rows.size))
            rows_out.append([attr, score.ami, score.mi, ci[0], ci[1], int(rows.size), " | ".join(warnings)])
        except ValueError as exc:
            warnings.append(f"attribute skipped: {exc}")
            rec["error"] = str(exc)
            rows_out.append([attr, None, None, None, None, 0, " | ".join(warnings)])
        doc.append(rec)
    write_atomic(out / "utility.json", dumps({"config": cfg.settings().echo(), "seed": cfg.seed,
                                              "dataset": ds.fingerprint, "attributes": doc}))
    write_atomic(out / "utility.csv", csv_text(UTILITY_COLUMNS, rows_out))
    return EXIT_OK


def cmd_calibrate(cfg: AuditConfig, out: Path, markers_from: str | None = None) -> int:
    ds = _load(cfg)
    curve = run_calibration(ds, cfg.calibration_config())
    src = markers_from or cfg.calibration.markers_from
    markers = utilities_from_report(load_report_json(src)) if src else []
    write_calibration(curve, out, markers)
    for r in curve.rows:
        if r.error:
            log.warning("flip fraction %s failed: %s", r.flip_fraction, r.error)
    return EXIT_OK


def cmd_split(cfg: AuditConfig, out: Path, report_path: str | None = None) -> int:
    tm = cfg.split.task_model
    if tm.family != "mlp":
        raise ConfigError(f"split.task_model.family: {tm.family!r} has no penultimate representation; use 'mlp'")
    ds = _load(cfg)
    model = train_task_model(ds, tm.spec(derive_seed(cfg.seed, "split", "task_model")))
    probes = []
    for attr in _attributes(cfg, ds):
        try:
            probes.append(split_probe(model, ds, attr, cfg.folds, cfg.seed, cfg.min_count))
        except ValueError as exc:
            log.warning("%s: probe skipped: %s", attr, exc)
    src = report_path or cfg.split.report
    rho = None
    if src:
        doc = load_report_json(src)
        det = {a["attribute"]: a.get("detectability_ensemble") for a in doc.get("attributes", [])}
        try:
            rho = correlate_detectability(det, probes)
        except ValueError as exc:
            log.warning("no rank correlation: %s", exc)
    write_split(probes, out, rho, {"task_model": tm.family, "folds": cfg.folds, "seed": cfg.seed})
    return EXIT_OK


GENERATORS = ("joint", "channel", "chain", "collider", "task", "shortcut", "suite", "icu")


def _matrix(text: str) -> list[list[float]]:
    try:
        return [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError as exc:
        raise UsageError(f"--probabilities: cannot parse {text!r} (rows ';'-separated, cells ',')") from exc


def generate(kind: str, n: int, seed: int, *, probabilities: str | None = None, flip: float | None = None,
             copies: int = 5, distractors: int = 2) -> tuple[Dataset, dict, str]:
    """Build a synthetic dataset; returns (dataset, analytic truth, suggested direction)."""
    params = {"n": n, "seed": seed}
    if n < 1:
        raise UsageError("--n must be positive")
    try:
        if kind == "joint":
            spec = synthgen.JointSpec(_matrix(probabilities or "0.4,0.1;0.1,0.4"))
            ds = synthgen.joint_dataset(spec, n, seed)
            truth = {"probabilities": np.asarray(spec.probabilities).tolist(), "analytic_mi": spec.analytic_mi,
                     "analytic_h_a": spec.analytic_h_a, "analytic_h_y": spec.analytic_h_y}
            return ds, {**params, **truth}, "causal_x_to_y"
        if kind == "channel":
            ch = synthgen.ChannelSpec(0.1 if flip is None else flip, copies, distractors)
            truth = {"flip_probability": ch.flip_probability, "copies": ch.copies,
                     "distractor_count": ch.distractor_count, "analytic_mi_per_copy": ch.analytic_mi_per_copy}
            return synthgen.channel_dataset(n, ch, seed), {**params, **truth}, "causal_x_to_y"
        if kind == "chain":
            lf = 0.2 if flip is None else flip
            ds = synthgen.chain_dataset(n, seed, label_flip=lf, copies=copies, distractors=distractors)
            return ds, {**params, "label_flip": lf, **synthgen.chain_truth(lf)}, "anticausal_y_to_x"
        if kind == "collider":
            lf = 0.1 if flip is None else flip
            ds = synthgen.collider_dataset(n, seed, label_flip=lf, copies=copies, distractors=distractors)
            return ds, {**params, "label_flip": lf, **synthgen.collider_truth(lf)}, "causal_x_to_y"
        if kind == "task":
            sf = 0.3 if flip is None else flip
            return synthgen.task_dataset(n, seed, signal_flip=sf), {**params, "signal_flip": sf}, "causal_x_to_y"
        if kind == "shortcut":
            sf = 0.19 if flip is None else flip
            truth = {"shortcut_flip": sf, "analytic_mi_planted_y": synthgen.LN2 - synthgen.binary_entropy(sf),
                     "analytic_mi_noise_y": 0.0}
            return synthgen.shortcut_dataset(n, seed, shortcut_flip=sf), {**params, **truth}, "causal_x_to_y"
        if kind == "suite":
            flips = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
            truth = {f"analytic_mi_a{k}_leak{k}": synthgen.LN2 - synthgen.binary_entropy(p)
                     for k, p in enumerate(flips)}
            return synthgen.detectability_suite(n, seed, flips), {**params, **truth}, "causal_x_to_y"
        if kind == "icu":
            return synthgen.icu_dataset(n, seed), params, "anticausal_y_to_x"
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid {kind} parameters: {exc}") from exc
    raise UsageError(f"unknown generator {kind!r}; choose from {GENERATORS}")


def cmd_generate(kind: str, out: Path, n: int, seed: int, **kw) -> int:
    """Write ``out`` (CSV), ``<stem>.truth.json`` and a ready-to-run ``<stem>.config.yaml``."""
    ds, truth, direction = generate(kind, n, seed, **kw)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    write_csv(ds, tmp)
    os.replace(tmp, out)
    write_atomic(out.with_suffix(".truth.json"), dumps({"kind": kind, **truth}))
    stub = {"data": {"path": out.name, "schema": schema_to_dicts(ds.schema)}, "direction": direction,
            "seed": seed, "output": {"dir": f"{out.stem}_out"}}
    write_atomic(out.with_suffix(".config.yaml"), yaml.safe_dump(stub, sort_keys=False))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shortcut-audit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else output.dir)")
        if jobs:
            sp.add_argument("--jobs", type=int, help="worker processes (default: config, else CPU count)")

    common(sub.add_parser("audit", help="utility and detectability of every attribute"))
    common(sub.add_parser("utility", help="utility only, no model training"), jobs=False)
    sp = sub.add_parser("calibrate", help="AUC drop vs utility of a planted artifact")
    common(sp, jobs=False)
    sp.add_argument("--markers", help="report.json whose utilities become vertical markers")
    sp = sub.add_parser("split", help="linear probes on a task model's hidden layer")
    common(sp, jobs=False)
    sp.add_argument("--report", help="report.json to rank-correlate probe F1 against")

    sp = sub.add_parser("generate", help="write a synthetic dataset with known ground truth")
    sp.add_argument("kind", choices=GENERATORS)
    sp.add_argument("--out", required=True, help="CSV path; sidecars are written next to it")
    sp.add_argument("--n", type=int, default=20_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--probabilities", help="joint: matrix like '0.4,0.1;0.1,0.4'")
    sp.add_argument("--flip", type=float, help="channel/chain/collider/task/shortcut flip probability")
    sp.add_argument("--copies", type=int, default=5)
    sp.add_argument("--distractors", type=int, default=2)
    return p


def run(args: argparse.Namespace) -> int:
    if args.command == "generate":
        return cmd_generate(args.kind, Path(args.out), args.n, args.seed, probabilities=args.probabilities,
                            flip=args.flip, copies=args.copies, distractors=args.distractors)
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    out = output_dir(cfg, args.out)
    if args.command == "audit":
        return cmd_audit(cfg, out, args.jobs)
    if args.command == "utility":
        return cmd_utility(cfg, out)
    if args.command == "calibrate":
        return cmd_calibrate(cfg, out, args.markers)
    return cmd_split(cfg, out, args.report)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, DatasetError, UsageError, InsufficientData) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_INPUT
    except Exception:  # noqa: BLE001 - last-resort guard, reported with traceback
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
