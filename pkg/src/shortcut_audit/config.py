"""YAML run configuration with strict key checking.

A minimal file names the data and the causal direction::

    data:
      path: cohort.csv
      schema:
        - {name: age, role: attribute, kind: continuous, bin_width: 5}
        - {name: heart_rate, role: feature}
        - {name: died, role: label, kind: categorical}
    direction: anticausal

Everything else has a default. Unknown keys are errors at every level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .audit import MISSING_POLICIES, AuditSettings
from .calibration import ARTIFACT_MODES, DEFAULT_FLIP_FRACTIONS, CalibrationConfig
from .dataset import KINDS, ROLES, ColumnSchema, DatasetError, validate_schema
from .discretization import DEFAULT_MIN_COUNT
from .infotheory import NORMALIZATIONS
from .models import DEFAULT_HYPERPARAMETERS, FAMILIES, PredictorSpec

DIRECTION_ALIASES = {"causal": "causal_x_to_y", "anticausal": "anticausal_y_to_x",
                     "causal_x_to_y": "causal_x_to_y", "anticausal_y_to_x": "anticausal_y_to_x"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TaskModelConfig:
    family: str = "mlp"
    hyperparameters: dict = field(default_factory=dict)
    seed: int | None = None  # None: derived from the run seed

    def spec(self, run_seed: int) -> PredictorSpec:
        return PredictorSpec(self.family, dict(self.hyperparameters), run_seed if self.seed is None else self.seed)


@dataclass(frozen=True)
class CalibrationSection:
    flip_fractions: tuple[float, ...] = DEFAULT_FLIP_FRACTIONS
    task_model: TaskModelConfig = field(default_factory=TaskModelConfig)
    artifact_mode: str = "all_rows"
    use_artifact: bool = True
    markers_from: Path | None = None  # prior report.json; its utilities become vertical markers


@dataclass(frozen=True)
class SplitSection:
    task_model: TaskModelConfig = field(default_factory=TaskModelConfig)
    report: Path | None = None  # prior report.json to correlate against


@dataclass(frozen=True)
class AuditConfig:
    data_path: Path
    schema: tuple[ColumnSchema, ...]
    direction: str
    attributes: tuple[str, ...] | None = None
    models: tuple[str, ...] = FAMILIES
    folds: int = 3
    seed: int = 0
    bootstrap_replicates: int = 1000
    detectability_replicates: int = 200
    min_count: int = DEFAULT_MIN_COUNT
    missing_policy: str = "per_attribute"
    normalization: str = "max"
    hyperparameters: dict = field(default_factory=dict)
    output_dir: Path = Path("audit_out")
    jobs: int | None = None
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    split: SplitSection = field(default_factory=SplitSection)

    def settings(self, jobs: int = 1) -> AuditSettings:
        return AuditSettings(direction=self.direction, attributes=self.attributes, models=self.models,
                             folds=self.folds, seed=self.seed, bootstrap_replicates=self.bootstrap_replicates,
                             detectability_replicates=self.detectability_replicates, min_count=self.min_count,
                             missing_policy=self.missing_policy, normalization=self.normalization,
                             hyperparameters=self.hyperparameters, jobs=jobs)

    def calibration_config(self) -> CalibrationConfig:
        c = self.calibration
        return CalibrationConfig(flip_fractions=c.flip_fractions, task_model=c.task_model.spec(self.seed),
                                 folds=self.folds, seed=self.seed, artifact_mode=c.artifact_mode,
                                 use_artifact=c.use_artifact)


_TOP_KEYS = {"data", "direction", "attributes", "models", "folds", "seed", "bootstrap", "rare_merge",
             "missing_policy", "normalization", "hyperparameters", "output", "jobs", "calibration", "split"}
_REQUIRED = ("data.path", "data.schema", "direction")


def _check_keys(section: Any, allowed: set[str], where: str) -> dict:
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(section).__name__}")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")
    return section


def _int(v, name: str, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be >= {lo}")
    return v


def _choice(v, name: str, options) -> str:
    if v not in options:
        raise ConfigError(f"{name}: {v!r} is not one of {sorted(options)}")
    return v


def _schema(entries) -> tuple[ColumnSchema, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("data.schema: expected a non-empty list of columns")
    out = []
    allowed = {"name", "role", "kind", "missing_token", "bin_width", "bin_edges"}
    for i, e in enumerate(entries):
        e = _check_keys(e, allowed, f"data.schema[{i}]")
        if "name" not in e or "role" not in e:
            raise ConfigError(f"data.schema[{i}]: 'name' and 'role' are required")
        _choice(e["role"], f"data.schema[{i}].role", ROLES)
        _choice(e.get("kind", "continuous"), f"data.schema[{i}].kind", KINDS)
        edges = e.get("bin_edges")
        try:
            out.append(ColumnSchema(name=str(e["name"]), role=e["role"], kind=e.get("kind", "continuous"),
                                    missing_token=str(e.get("missing_token", "")), bin_width=e.get("bin_width"),
                                    bin_edges=tuple(float(x) for x in edges) if edges is not None else None))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"data.schema[{i}]: {exc}") from exc
    try:
        validate_schema(out)
    except DatasetError as exc:
        raise ConfigError(f"data.schema: {exc}") from exc
    return tuple(out)


def _task_model(sec, where: str) -> TaskModelConfig:
    sec = _check_keys(sec, {"family", "hyperparameters", "seed"}, where)
    fam = _choice(sec.get("family", "mlp"), f"{where}.family", FAMILIES)
    hp = _check_keys(sec.get("hyperparameters"), set(DEFAULT_HYPERPARAMETERS[fam]), f"{where}.hyperparameters")
    seed = sec.get("seed")
    return TaskModelConfig(fam, dict(hp), None if seed is None else _int(seed, f"{where}.seed"))


def _path(v, base: Path) -> Path:
    p = Path(str(v)).expanduser()
    return p if p.is_absolute() else base / p


def config_from_dict(raw: dict, base: Path = Path(".")) -> AuditConfig:
    raw = _check_keys(raw, _TOP_KEYS, "config")
    data = _check_keys(raw.get("data"), {"path", "schema"}, "data")
    missing = [k for k in _REQUIRED if (k.split(".")[1] not in data if k.startswith("data.") else k not in raw)]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    schema = _schema(data["schema"])
    names = {c.name for c in schema}
    direction = _choice(raw["direction"], "direction", DIRECTION_ALIASES)

    attrs = raw.get("attributes")
    if attrs is not None:
        if not isinstance(attrs, list):
            raise ConfigError("attributes: expected a list of column names")
        roles = {c.name: c.role for c in schema}
        bad = [a for a in attrs if a not in names]
        if bad:
            raise ConfigError(f"attributes: column(s) {bad} not in data.schema")
        wrong = [a for a in attrs if roles[a] != "attribute"]
        if wrong:
            raise ConfigError(f"attributes: column(s) {wrong} do not have role 'attribute'")
        attrs = tuple(str(a) for a in attrs)

    models = raw.get("models", list(FAMILIES))
    if not isinstance(models, list) or not models:
        raise ConfigError("models: at least one model family required")
    for m in models:
        _choice(m, "models", FAMILIES)

    folds = _int(raw.get("folds", 3), "folds")
    if folds < 2:
        raise ConfigError("K must be ≥ 2 (folds)")
    boot = _check_keys(raw.get("bootstrap"), {"replicates", "detectability_replicates"}, "bootstrap")
    rare = _check_keys(raw.get("rare_merge"), {"min_count"}, "rare_merge")
    out = _check_keys(raw.get("output"), {"dir"}, "output")

    hyper = _check_keys(raw.get("hyperparameters"), set(FAMILIES), "hyperparameters")
    hyper = {f: dict(_check_keys(h, set(DEFAULT_HYPERPARAMETERS[f]), f"hyperparameters.{f}"))
             for f, h in hyper.items()}

    cal = _check_keys(raw.get("calibration"),
                      {"flip_fractions", "task_model", "artifact_mode", "use_artifact", "markers_from"}, "calibration")
    fr = tuple(float(f) for f in cal.get("flip_fractions", DEFAULT_FLIP_FRACTIONS))
    if any(not 0.0 <= f < 0.5 for f in fr) or list(fr) != sorted(fr) or not fr:
        raise ConfigError("calibration.flip_fractions: need a non-empty ascending list in [0, 0.5)")
    calibration = CalibrationSection(
        flip_fractions=fr, task_model=_task_model(cal.get("task_model"), "calibration.task_model"),
        artifact_mode=_choice(cal.get("artifact_mode", "all_rows"), "calibration.artifact_mode", ARTIFACT_MODES),
        use_artifact=bool(cal.get("use_artifact", True)),
        markers_from=_path(cal["markers_from"], base) if cal.get("markers_from") else None)
    sp = _check_keys(raw.get("split"), {"task_model", "report"}, "split")
    split = SplitSection(task_model=_task_model(sp.get("task_model"), "split.task_model"),
                         report=_path(sp["report"], base) if sp.get("report") else None)

    jobs = raw.get("jobs")
    return AuditConfig(
        data_path=_path(data["path"], base),
        schema=schema,
        direction=DIRECTION_ALIASES[direction],
        attributes=attrs,
        models=tuple(models),
        folds=folds,
        seed=_int(raw.get("seed", 0), "seed"),
        bootstrap_replicates=_int(boot.get("replicates", 1000), "bootstrap.replicates", 0),
        detectability_replicates=_int(boot.get("detectability_replicates", 200),
                                      "bootstrap.detectability_replicates", 0),
        min_count=_int(rare.get("min_count", DEFAULT_MIN_COUNT), "rare_merge.min_count", 1),
        missing_policy=_choice(raw.get("missing_policy", "per_attribute"), "missing_policy", MISSING_POLICIES),
        normalization=_choice(raw.get("normalization", "max"), "normalization", NORMALIZATIONS),
        hyperparameters=hyper,
        output_dir=_path(out.get("dir", "audit_out"), base),
        jobs=None if jobs is None else _int(jobs, "jobs", 1),
        calibration=calibration,
        split=split,
    )


def parse_config(path: str | Path) -> AuditConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, path.parent)


def schema_to_dicts(schema) -> list[dict]:
    out = []
    for c in schema:
        d = {"name": c.name, "role": c.role, "kind": c.kind}
        if c.missing_token:
            d["missing_token"] = c.missing_token
        if c.bin_width is not None:
            d["bin_width"] = c.bin_width
        if c.bin_edges is not None:
            d["bin_edges"] = list(c.bin_edges)
        out.append(d)
    return out
