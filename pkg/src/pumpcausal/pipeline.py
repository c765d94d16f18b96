"""Workflow orchestration: data -> fit -> features -> groups -> discovery.

Each stage reads and writes files under the output directory, so any stage
can be re-run from cached upstream artifacts.  The pipeline command hashes
stage inputs into a manifest and skips a stage whose inputs and outputs are
both unchanged; a corrupted or missing output invalidates the cache entry.

All outputs are byte-deterministic for fixed (inputs, config, seed) except
``timings.json``, the only timing-bearing artifact.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import features as features_mod
from . import lingam as lingam_mod
from .diagnostics import RandomEffectEstimate, extract_random_effects
from .errors import ConfigError, DataError, InsufficientGroupError, PumpcausalError, StageError
from .grouping import (
    Group,
    GroupAssignment,
    GroupDataset,
    assign_groups,
    build_group_datasets,
    min_members,
)
from .hazard import ParamLayout, make_logp_and_grad
from .nuts import (
    SamplerConfig,
    diagnostic_flags,
    sample,
    write_diagnostics_json,
    write_draws_csv,
)
from .synth import SynthConfig, generate_hazard_data

STAGES = ("synth", "fit", "features", "group", "discover")

FILES = {
    "inspections": "inspections.csv",
    "timeseries": "timeseries.csv",
    "ground_truth": "ground_truth.json",
    "transitions": "transitions.csv",
    "draws": "draws.csv",
    "diagnostics": "diagnostics.json",
    "u_estimates": "u_estimates.csv",
    "features": "features.csv",
    "groups": "groups.csv",
    "report": "report.json",
    "timings": "timings.json",
    "manifest": "manifest.json",
    "u_hist": "u_hist.csv",
}

U_HIST_BINS = 20


@dataclass(frozen=True)
class PipelineConfig:
    """Every stage's settings plus the output directory and global seed."""

    out_dir: Path = Path("out")
    seed: int = 0
    threads: int | None = None
    source: str = "synth"  # synth | files
    inspections: Path | None = None
    timeseries: Path | None = None
    top_k: int = 10
    synth: SynthConfig = SynthConfig()
    n_draws: int = 2000
    n_tune: int = 1000
    n_chains: int = 8
    target_accept: float = 0.95
    max_tree_depth: int = 10
    use_covariates: bool = True
    feature_window: int = 90
    feature_window_end: int | None = None
    active_features: tuple[str, ...] = features_mod.DEFAULT_ACTIVE_FEATURES
    ica_tol: float = 1e-4
    ica_max_iter: int = 200
    n_bootstrap: int = 1000

    def __post_init__(self):
        if self.source not in ("synth", "files"):
            raise ConfigError(f"source must be 'synth' or 'files', got {self.source}")
        if self.source == "files":
            for label, path in (("inspections", self.inspections), ("timeseries", self.timeseries)):
                if path is None:
                    raise ConfigError(f"source=files requires an {label} path")
                if not Path(path).exists():
                    raise ConfigError(f"{label} file not found: {path}")
        unknown = [n for n in self.active_features if n not in features_mod.FEATURE_NAMES]
        if unknown:
            raise ConfigError(f"unknown active features: {unknown}")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            n_draws=self.n_draws,
            n_tune=self.n_tune,
            n_chains=self.n_chains,
            target_accept=self.target_accept,
            max_tree_depth=self.max_tree_depth,
            seed=self.seed,
            threads=self.threads,
        )

    def lingam_config(self) -> lingam_mod.LingamConfig:
        return lingam_mod.LingamConfig(
            ica_tol=self.ica_tol,
            ica_max_iter=self.ica_max_iter,
            n_bootstrap=self.n_bootstrap,
            seed=self.seed,
            threads=self.threads,
        )

    def path(self, key: str) -> Path:
        return Path(self.out_dir) / FILES[key]

    def inspections_path(self) -> Path:
        return Path(self.inspections) if self.source == "files" else self.path("inspections")

    def timeseries_path(self) -> Path:
        return Path(self.timeseries) if self.source == "files" else self.path("timeseries")


_SECTION_KEYS = {
    "pipeline": {"out_dir", "seed", "threads", "source", "inspections", "timeseries", "top_k"},
    "synth": {
        "n_pumps", "n_states", "sigma_u", "study_days", "interval_min",
        "interval_max", "ar_coeff", "ar_noise_sd", "scenario_rows",
    },
    "sampler": {"n_draws", "n_tune", "n_chains", "target_accept", "max_tree_depth"},
    "hazard": {"use_covariates"},
    "features": {"window", "window_end", "active"},
    "lingam": {"n_bootstrap", "ica_tol", "ica_max_iter"},
}


def load_config(
    path: str | Path | None = None,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    threads: int | None = None,
) -> PipelineConfig:
    """Build a PipelineConfig from an INI-style file plus CLI overrides.

    Every key has a default matching the documented settings (2000 draws,
    1000 tune, 8 chains, 0.95 target acceptance, 1000 bootstrap resamples,
    90-day windows); an absent file means all defaults.
    """
    values: dict[str, dict[str, str]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in _SECTION_KEYS:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser[section]:
                if key not in _SECTION_KEYS[section]:
                    raise ConfigError(f"unknown key '{key}' in section [{section}]")
            values[section] = dict(parser[section])

    def get(section: str, key: str, default):
        raw = values.get(section, {}).get(key)
        if raw is None or raw == "":
            return default
        try:
            if isinstance(default, bool) or key == "use_covariates":
                return raw.strip().lower() in ("1", "true", "yes", "on")
            if isinstance(default, int) and not isinstance(default, bool):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
        except ValueError:
            raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from None
        return raw

    seed_val = seed if seed is not None else get("pipeline", "seed", 0)
    threads_raw = threads if threads is not None else get("pipeline", "threads", 0)
    active_raw = values.get("features", {}).get("active", "")
    active = (
        tuple(name.strip() for name in active_raw.split(",") if name.strip())
        if active_raw
        else features_mod.DEFAULT_ACTIVE_FEATURES
    )
    window_end_raw = values.get("features", {}).get("window_end", "")
    inspections = values.get("pipeline", {}).get("inspections") or None
    timeseries = values.get("pipeline", {}).get("timeseries") or None
    try:
        synth = SynthConfig(
            n_pumps=get("synth", "n_pumps", 30),
            n_states=get("synth", "n_states", 8),
            sigma_u=get("synth", "sigma_u", 1.0),
            study_days=get("synth", "study_days", 650),
            interval_min=get("synth", "interval_min", 7),
            interval_max=get("synth", "interval_max", 173),
            ar_coeff=get("synth", "ar_coeff", 0.8),
            ar_noise_sd=get("synth", "ar_noise_sd", 0.5),
            scenario_rows=get("synth", "scenario_rows", 2000),
            seed=seed_val,
        )
        return PipelineConfig(
            out_dir=Path(out_dir) if out_dir is not None else Path(get("pipeline", "out_dir", "out")),
            seed=seed_val,
            threads=threads_raw if threads_raw else None,
            source=get("pipeline", "source", "synth"),
            inspections=Path(inspections) if inspections else None,
            timeseries=Path(timeseries) if timeseries else None,
            top_k=get("pipeline", "top_k", 10),
            synth=synth,
            n_draws=get("sampler", "n_draws", 2000),
            n_tune=get("sampler", "n_tune", 1000),
            n_chains=get("sampler", "n_chains", 8),
            target_accept=get("sampler", "target_accept", 0.95),
            max_tree_depth=get("sampler", "max_tree_depth", 10),
            use_covariates=get("hazard", "use_covariates", True),
            feature_window=get("features", "window", 90),
            feature_window_end=int(window_end_raw) if window_end_raw else None,
            active_features=active,
            ica_tol=get("lingam", "ica_tol", 1e-4),
            ica_max_iter=get("lingam", "ica_max_iter", 200),
            n_bootstrap=get("lingam", "n_bootstrap", 1000),
        )
    except PumpcausalError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _stage_guard(stage: str):
    """Re-raise package errors with the failing stage's label."""

    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, PumpcausalError) and not isinstance(exc, StageError):
                raise StageError(stage, str(exc)) from exc
            return False

    return _Guard()


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def run_synth(cfg: PipelineConfig) -> None:
    """Write synthetic inspections, timeseries, and ground truth."""
    with _stage_guard("synth"):
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        synthesis = generate_hazard_data(cfg.synth)
        data_mod.write_inspections_csv(synthesis.records, cfg.path("inspections"))
        data_mod.write_timeseries_csv(synthesis.covariates, cfg.path("timeseries"))
        synthesis.truth.write(cfg.path("ground_truth"))


def _load_inputs(cfg: PipelineConfig):
    records = data_mod.ingest_inspections(cfg.inspections_path())
    series = data_mod.ingest_timeseries(cfg.timeseries_path())
    return records, series


def run_fit(cfg: PipelineConfig) -> list[str]:
    """Fit the hazard model; returns soft diagnostic flags."""
    with _stage_guard("fit"):
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        records, series = _load_inputs(cfg)
        covariates = series if cfg.use_covariates else []
        build = data_mod.build_transitions(records, covariates)
        data_mod.write_transitions_csv(build.dataset, cfg.path("transitions"))
        layout = ParamLayout.for_dataset(build.dataset)
        target = make_logp_and_grad(build.dataset, layout)
        samples = sample(
            target, layout.dim, cfg.sampler_config(), init_center=layout.prior_center()
        )
        names = layout.names()
        write_draws_csv(samples, names, cfg.path("draws"))
        write_diagnostics_json(samples, names, cfg.path("diagnostics"))
        estimates = extract_random_effects(samples, layout)
        _write_u_estimates(estimates, build.pump_ids, cfg.path("u_estimates"))
        return diagnostic_flags(samples)


def _write_u_estimates(
    estimates: list[RandomEffectEstimate], pump_ids, path: Path
) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pump_id", "u_mean", "hdi_low", "hdi_high"])
        for est in estimates:
            writer.writerow(
                [
                    pump_ids[est.pump_index],
                    repr(est.u_mean),
                    repr(est.hdi_low),
                    repr(est.hdi_high),
                ]
            )


def read_u_estimates(path: Path) -> dict[str, tuple[float, float, float]]:
    if not path.exists():
        raise DataError(f"file not found: {path}")
    out: dict[str, tuple[float, float, float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["pump_id", "u_mean", "hdi_low", "hdi_high"]:
            raise DataError(f"{path}: bad u-estimates header")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path} line {line_no}: wrong field count")
            out[row[0]] = (float(row[1]), float(row[2]), float(row[3]))
    return out


def run_features(cfg: PipelineConfig) -> None:
    """Extract the active feature set from each pump's trailing window."""
    with _stage_guard("features"):
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        series = data_mod.ingest_timeseries(cfg.timeseries_path())
        # one representative series per pump: the first in file order
        seen: dict[str, data_mod.CovariateSeries] = {}
        for s in series:
            seen.setdefault(s.pump_id, s)
        chosen = list(seen.values())
        window_end = cfg.feature_window_end
        if window_end is None:
            window_end = min(s.end_day - 1 for s in chosen)
        matrix = features_mod.extract_features(
            chosen, window_end, cfg.feature_window, cfg.active_features
        )
        features_mod.write_features_csv(matrix, cfg.path("features"))


def _load_group_inputs(cfg: PipelineConfig):
    matrix = features_mod.read_features_csv(cfg.path("features"))
    u_map = read_u_estimates(cfg.path("u_estimates"))
    missing = [pid for pid in matrix.pump_ids if pid not in u_map]
    extra = [pid for pid in u_map if pid not in matrix.pump_ids]
    if missing or extra:
        raise DataError(
            f"pump sets differ between features and u-estimates "
            f"(missing u for {missing}, features for {extra})"
        )
    estimates = [
        RandomEffectEstimate(
            pump_index=i,
            u_mean=u_map[pid][0],
            hdi_low=u_map[pid][1],
            hdi_high=u_map[pid][2],
        )
        for i, pid in enumerate(matrix.pump_ids)
    ]
    return matrix, estimates


def run_group(cfg: PipelineConfig) -> None:
    """Assign pumps to sign groups and persist the assignment."""
    with _stage_guard("group"):
        matrix, estimates = _load_group_inputs(cfg)
        assignments = assign_groups(estimates)
        with cfg.path("groups").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pump_id", "u_mean", "group"])
            for a in assignments:
                writer.writerow(
                    [matrix.pump_ids[a.pump_index], repr(a.u_mean), a.group.value]
                )


def read_groups(path: Path) -> list[tuple[str, float, Group]]:
    if not path.exists():
        raise DataError(f"file not found: {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["pump_id", "u_mean", "group"]:
            raise DataError(f"{path}: bad groups header")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"{path} line {line_no}: wrong field count")
            out.append((row[0], float(row[1]), Group(row[2])))
    return out


def _group_datasets_from_artifacts(cfg: PipelineConfig):
    matrix = features_mod.read_features_csv(cfg.path("features"))
    rows = read_groups(cfg.path("groups"))
    by_id = {pid: (u, grp) for pid, u, grp in rows}
    missing = [pid for pid in matrix.pump_ids if pid not in by_id]
    if missing:
        raise DataError(f"groups file lacks pumps: {missing}")
    assignments = [
        GroupAssignment(pump_index=i, u_mean=by_id[pid][0], group=by_id[pid][1])
        for i, pid in enumerate(matrix.pump_ids)
    ]
    return matrix, build_group_datasets(matrix, assignments)


def _write_u_hist(rows: list[tuple[str, float, Group]], path: Path) -> None:
    """Histogram counts of u by group: the data behind the distribution figure."""
    u_all = np.array([u for _, u, _ in rows])
    lo, hi = float(u_all.min()), float(u_all.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, U_HIST_BINS + 1)
    u_pos = np.array([u for _, u, g in rows if g is Group.POSITIVE])
    u_neg = np.array([u for _, u, g in rows if g is Group.NEGATIVE])
    pos_counts, _ = np.histogram(u_pos, bins=edges)
    neg_counts, _ = np.histogram(u_neg, bins=edges)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count_positive", "count_negative"])
        for b in range(U_HIST_BINS):
            writer.writerow(
                [repr(float(edges[b])), repr(float(edges[b + 1])), int(pos_counts[b]), int(neg_counts[b])]
            )


def group_artifact_paths(cfg: PipelineConfig, group: Group) -> dict[str, Path]:
    out = Path(cfg.out_dir)
    return {
        "adjacency": out / f"adjacency_{group.value}.csv",
        "order": out / f"order_{group.value}.json",
        "effects": out / f"effects_{group.value}.csv",
        "top_effects": out / f"top_effects_{group.value}.csv",
    }


def _write_top_effects(model: lingam_mod.CausalModel, path: Path, top_k: int) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "effect", "ci_low", "ci_high", "sign_stability"])
        for row in model.target_edge_table()[:top_k]:
            writer.writerow(
                [
                    row["from"],
                    repr(row["effect"]),
                    repr(row["ci_low"]),
                    repr(row["ci_high"]),
                    repr(row["sign_stability"]),
                ]
            )


def discover_group(
    group_data: GroupDataset, cfg: PipelineConfig
) -> lingam_mod.CausalModel:
    return lingam_mod.discover(group_data, cfg.lingam_config())


def run_discover(cfg: PipelineConfig) -> None:
    """Per-group causal discovery plus figure data and the run report."""
    with _stage_guard("discover"):
        matrix, (positive, negative) = _group_datasets_from_artifacts(cfg)
        rows = read_groups(cfg.path("groups"))
        _write_u_hist(rows, cfg.path("u_hist"))
        skipped: list[str] = []
        for group_data in (positive, negative):
            paths = group_artifact_paths(cfg, group_data.group)
            if group_data.count < min_members(len(group_data.feature_names)):
                skipped.append(group_data.group.value)
                for stale in paths.values():
                    stale.unlink(missing_ok=True)
                continue
            try:
                model = discover_group(group_data, cfg)
            except InsufficientGroupError:
                skipped.append(group_data.group.value)
                continue
            lingam_mod.write_adjacency_csv(model, paths["adjacency"])
            lingam_mod.write_order_json(model, paths["order"])
            lingam_mod.write_effects_csv(model, paths["effects"])
            _write_top_effects(model, paths["top_effects"], cfg.top_k)
        build_report(cfg, skipped_groups=skipped)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_effects_csv(path: Path) -> list[dict]:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            low, high = float(row["ci_low"]), float(row["ci_high"])
            rows.append(
                {
                    "feature": row["feature"],
                    "effect": float(row["effect"]),
                    "ci_low": low,
                    "ci_high": high,
                    "ci_excludes_zero": low > 0.0 or high < 0.0,
                    "sign_stability": float(row["sign_stability"]),
                }
            )
    return rows


@dataclass
class RunReport:
    sampler: dict
    groups: dict
    effects: dict
    gap_ratio: float | None
    skipped_groups: list[str]
    timings: dict[str, float] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "sampler": self.sampler,
            "groups": self.groups,
            "effects": self.effects,
            "gap_ratio": self.gap_ratio,
            "skipped_groups": self.skipped_groups,
        }


def build_report(cfg: PipelineConfig, skipped_groups: list[str] | None = None) -> RunReport:
    """Assemble the run report purely from persisted stage artifacts."""
    with _stage_guard("report"):
        diag_path = cfg.path("diagnostics")
        sampler_summary: dict = {}
        if diag_path.exists():
            sampler_summary = json.loads(diag_path.read_text(encoding="utf-8"))["summary"]
        rows = read_groups(cfg.path("groups"))
        total = len(rows)
        groups_summary = {}
        for group in (Group.POSITIVE, Group.NEGATIVE):
            us = [u for _, u, g in rows if g is group]
            groups_summary[group.value] = {
                "count": len(us),
                "share": len(us) / total if total else 0.0,
                "u_min": min(us) if us else None,
                "u_max": max(us) if us else None,
            }
        effects: dict[str, list[dict]] = {}
        max_effect: dict[str, float] = {}
        if skipped_groups is None:
            skipped_groups = []
            for group in (Group.POSITIVE, Group.NEGATIVE):
                if not group_artifact_paths(cfg, group)["effects"].exists():
                    skipped_groups.append(group.value)
        for group in (Group.POSITIVE, Group.NEGATIVE):
            path = group_artifact_paths(cfg, group)["effects"]
            if group.value in skipped_groups or not path.exists():
                continue
            table = _read_effects_csv(path)
            effects[group.value] = table[: cfg.top_k]
            max_effect[group.value] = max(
                (abs(r["effect"]) for r in table), default=0.0
            )
        if len(max_effect) == 2:
            hi = max(max_effect.values())
            lo = min(max_effect.values())
            gap_ratio: float | None = hi / lo if lo > 0.0 else float("inf")
        else:
            gap_ratio = None
        timings = {}
        timings_path = cfg.path("timings")
        if timings_path.exists():
            timings = json.loads(timings_path.read_text(encoding="utf-8"))
        report = RunReport(
            sampler=sampler_summary,
            groups=groups_summary,
            effects=effects,
            gap_ratio=gap_ratio,
            skipped_groups=sorted(skipped_groups),
            timings=timings,
        )
        cfg.path("report").write_text(
            json.dumps(report.to_payload(), indent=2) + "\n", encoding="utf-8"
        )
        return report


# ---------------------------------------------------------------------------
# cached pipeline
# ---------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _stage_signature(cfg: PipelineConfig, stage: str) -> str:
    """Hash of a stage's input files and the config subset it depends on."""
    parts: list[str] = [stage, str(cfg.seed)]
    if stage == "synth":
        parts.append(repr(cfg.synth))
    elif stage == "fit":
        parts += [repr(cfg.sampler_config()), str(cfg.use_covariates)]
        inputs = [cfg.inspections_path(), cfg.timeseries_path()]
    elif stage == "features":
        parts += [
            str(cfg.feature_window),
            str(cfg.feature_window_end),
            ",".join(cfg.active_features),
        ]
        inputs = [cfg.timeseries_path()]
    elif stage == "group":
        inputs = [cfg.path("u_estimates"), cfg.path("features")]
    elif stage == "discover":
        parts += [repr(cfg.lingam_config()), str(cfg.top_k)]
        inputs = [cfg.path("groups"), cfg.path("features"), cfg.path("diagnostics")]
    if stage == "synth":
        inputs = []
    for path in inputs:
        parts.append(_sha256_file(path) if path.exists() else "missing")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


_STAGE_OUTPUTS = {
    "synth": ["inspections", "timeseries", "ground_truth"],
    "fit": ["transitions", "draws", "diagnostics", "u_estimates"],
    "features": ["features"],
    "group": ["groups"],
    "discover": ["u_hist", "report"],
}


def _stage_output_paths(cfg: PipelineConfig, stage: str) -> list[Path]:
    paths = [cfg.path(key) for key in _STAGE_OUTPUTS[stage]]
    if stage == "discover":
        for group in Group:
            paths.extend(group_artifact_paths(cfg, group).values())
    return paths


def _load_manifest(cfg: PipelineConfig) -> dict:
    path = cfg.path("manifest")
    if not path.exists():
        return {}
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        return manifest if isinstance(manifest, dict) else {}
    except json.JSONDecodeError:
        return {}


def _stage_cached(cfg: PipelineConfig, manifest: dict, stage: str) -> bool:
    entry = manifest.get(stage)
    if not entry or entry.get("inputs") != _stage_signature(cfg, stage):
        return False
    for name, digest in entry.get("outputs", {}).items():
        path = Path(cfg.out_dir) / name
        if not path.exists() or _sha256_file(path) != digest:
            return False
    return True


def _record_stage(cfg: PipelineConfig, manifest: dict, stage: str) -> None:
    outputs = {}
    for path in _stage_output_paths(cfg, stage):
        if path.exists():
            outputs[path.name] = _sha256_file(path)
    manifest[stage] = {"inputs": _stage_signature(cfg, stage), "outputs": outputs}
    cfg.path("manifest").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def run_pipeline(cfg: PipelineConfig, use_cache: bool = True) -> list[str]:
    """Run all stages in order, skipping stages whose cache entry is valid.

    Returns the fit stage's diagnostic flags (from fresh or cached output).
    """
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(cfg) if use_cache else {}
    timings: dict[str, float] = {}
    runners = {
        "synth": run_synth,
        "fit": run_fit,
        "features": run_features,
        "group": run_group,
        "discover": run_discover,
    }
    for stage in STAGES:
        if stage == "synth" and cfg.source == "files":
            continue
        if use_cache and _stage_cached(cfg, manifest, stage):
            timings[f"{stage}_cached"] = 0.0
            continue
        started = time.perf_counter()
        runners[stage](cfg)
        timings[stage] = time.perf_counter() - started
        _record_stage(cfg, manifest, stage)
    cfg.path("timings").write_text(
        json.dumps(timings, indent=2) + "\n", encoding="utf-8"
    )
    diag_path = cfg.path("diagnostics")
    if diag_path.exists():
        summary = json.loads(diag_path.read_text(encoding="utf-8"))["summary"]
        return list(summary.get("flags", []))
    return []
