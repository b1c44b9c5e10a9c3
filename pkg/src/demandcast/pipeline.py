"""Pipeline stages. Each stage reads only the files written by earlier stages.

Output directory layout::

    series/<REGION>.csv        ingest     timestamp,demand_mw (gaps empty)
    ingest.json                ingest     per-region row accounting
    features/<REGION>.csv      featurize  timestamp,<features...>,target_dn
    coverage.csv               featurize  region,year,hours_available,hours_total,annual_total_mwh
    splits.csv                 split      region,year,part
    split_summary.json         split
    model.json                 train
    predictions/<REGION>.csv   predict    timestamp,actual_dn,predicted_dn
    forecasts/<REGION>_<YEAR>.csv  predict  timestamp,demand_mw (rescaled)
    metrics.json               evaluate
    report.csv, report.json    report
    profiles/<REGION>.csv      report     best and worst test regions
    manifest.json              every stage: config hash, seed, output digests
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from demandcast.errors import InputError
from demandcast.evaluation import (
    DEFAULT_EPSILON,
    RegionMetrics,
    emit_profile_csv,
    region_metrics,
    render_report,
    select_profile_regions,
)
from demandcast.features import FeatureMatrix, build_feature_matrix, read_feature_csv
from demandcast.gbdt import GBDTModel, GBDTParams, predict, train
from demandcast.ingest import RawSourceSpec, harmonize_with_report, parse_covariates, read_annual_csv
from demandcast.normalization import (
    NormalizedSeries,
    normalize,
    read_estimates_csv,
    rescale,
)
from demandcast.splits import (
    assign_splits,
    available_years,
    manifest_frame,
    read_manifest,
    summarize,
)
from demandcast.timeseries import HourlyDemandSeries, YearCoverage

LOGGER = logging.getLogger(__name__)

STAGES = ("ingest", "featurize", "split", "train", "predict", "evaluate", "report")


@dataclass(frozen=True)
class RegionInputs:
    spec: RawSourceSpec
    grid: Path
    temperature: Path


@dataclass(frozen=True)
class RunConfig:
    regions: dict[str, RegionInputs]
    output_dir: Path
    annual_covariates: Path | None = None
    annual_estimates: Path | None = None
    params: GBDTParams = field(default_factory=GBDTParams)
    coverage_threshold: float = 0.1
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    profile_window_hours: int = 168
    config_hash: str = ""

    @property
    def stamp(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.seed}


def _path(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _must_exist(path: Path, what: str) -> Path:
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path


def load_config(path: Path, out: Path | None = None, seed: int | None = None) -> RunConfig:
    """Read and validate a YAML/JSON run config. Relative paths resolve against its folder."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: invalid config ({exc})") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("regions"), dict) or not raw["regions"]:
        raise InputError(f"{path}: config needs a non-empty 'regions' mapping")
    base = path.parent
    if seed is not None:
        raw["seed"] = seed
    seed_value = int(raw.get("seed", 0))

    regions = {}
    for code, fields_ in sorted(raw["regions"].items()):
        if not isinstance(fields_, dict):
            raise InputError(f"region {code}: expected a mapping")
        spec = RawSourceSpec.from_mapping(str(code), fields_, base)
        _must_exist(spec.path, f"{code} demand file")
        for key in ("grid", "temperature"):
            if key not in fields_:
                raise InputError(f"region {code}: missing '{key}' path")
        regions[spec.region] = RegionInputs(
            spec,
            _must_exist(_path(base, fields_["grid"]), f"{code} grid file"),
            _must_exist(_path(base, fields_["temperature"]), f"{code} temperature file"),
        )

    annual = raw.get("annual_covariates")
    estimates = raw.get("annual_estimates")
    params = dict(raw.get("params") or {})
    params.setdefault("seed", seed_value)
    threshold = float(raw.get("coverage_threshold", 0.1))
    if not 0 <= threshold <= 1:
        raise InputError("coverage_threshold must lie in [0, 1]")
    epsilon = float(raw.get("epsilon", DEFAULT_EPSILON))
    if not epsilon > 0:
        raise InputError("epsilon must be > 0")

    digest = hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return RunConfig(
        regions=regions,
        output_dir=Path(out) if out is not None else _path(base, raw.get("output_dir", "out")),
        annual_covariates=_must_exist(_path(base, annual), "annual covariates") if annual else None,
        annual_estimates=_must_exist(_path(base, estimates), "annual estimates") if estimates else None,
        params=GBDTParams.from_mapping(params),
        coverage_threshold=threshold,
        epsilon=epsilon,
        seed=seed_value,
        profile_window_hours=int(raw.get("profile_window_hours", 168)),
        config_hash=digest,
    )


# --------------------------------------------------------------------------- io


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, doc: dict) -> None:
    _write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj)}")


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise InputError(f"missing stage output {path}; run the earlier stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def _iso(index: pd.DatetimeIndex) -> pd.Index:
    return index.strftime("%Y-%m-%dT%H:%M:%SZ")


def write_series(series: HourlyDemandSeries, path: Path) -> None:
    frame = pd.DataFrame({"timestamp": _iso(series.timestamps), "demand_mw": series.values})
    _write(path, frame.to_csv(index=False, na_rep="", float_format="%.17g", lineterminator="\n"))


def read_series(path: Path, region: str) -> HourlyDemandSeries:
    if not path.is_file():
        raise InputError(f"missing stage output {path}; run the earlier stage first")
    frame = pd.read_csv(path, float_precision="round_trip")
    times = pd.DatetimeIndex(pd.to_datetime(frame["timestamp"], utc=True))
    return HourlyDemandSeries(region, times[0], frame["demand_mw"].to_numpy(dtype=np.float64))


def _update_manifest(cfg: RunConfig, stage: str, outputs: list[Path]) -> None:
    path = cfg.output_dir / "manifest.json"
    doc = json.loads(path.read_text()) if path.is_file() else {}
    doc.update(cfg.stamp)
    stages = doc.setdefault("stages", {})
    stages[stage] = {
        str(p.relative_to(cfg.output_dir)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(outputs)
    }
    _write_json(path, doc)


# ----------------------------------------------------------------------- stages


def stage_ingest(cfg: RunConfig) -> dict[str, HourlyDemandSeries]:
    """Harmonize every region; nothing is written unless all regions succeed."""
    results, errors = {}, {}
    for region, inputs in cfg.regions.items():
        try:
            results[region] = harmonize_with_report(inputs.spec)
        except InputError as exc:
            errors[region] = str(exc)
    if errors:
        summary = "; ".join(f"{r}: {msg}" for r, msg in sorted(errors.items()))
        raise InputError(f"ingest failed for {len(errors)} region(s): {summary}")

    outputs, accounting = [], {}
    for region, (series, report) in sorted(results.items()):
        path = cfg.output_dir / "series" / f"{region}.csv"
        write_series(series, path)
        outputs.append(path)
        accounting[region] = {
            "rows": report.n_rows,
            "accepted": report.n_accepted,
            "gaps": report.n_gaps,
            "malformed": len(report.malformed),
            "duplicates_averaged": report.n_duplicates,
            "hours": report.n_hours,
            "missing_hours": report.n_missing_hours,
        }
    path = cfg.output_dir / "ingest.json"
    _write_json(path, {**cfg.stamp, "regions": accounting})
    _update_manifest(cfg, "ingest", outputs + [path])
    return {r: s for r, (s, _) in results.items()}


def stage_featurize(cfg: RunConfig) -> None:
    annual = read_annual_csv(cfg.annual_covariates) if cfg.annual_covariates else None
    coverage_rows, outputs = [], []
    for region, inputs in sorted(cfg.regions.items()):
        series = read_series(cfg.output_dir / "series" / f"{region}.csv", region)
        normalized = normalize(series)
        grid = parse_covariates(inputs.grid, inputs.temperature, region=region)
        if annual is not None:
            grid = replace(grid, annual=annual[annual["region"] == region].reset_index(drop=True))
        matrix, _ = build_feature_matrix(series, normalized, grid, include_gaps=True)
        path = cfg.output_dir / "features" / f"{region}.csv"
        _write(path, matrix.to_csv(targets=normalized.values))
        outputs.append(path)
        for cov in normalized.coverage.values():
            coverage_rows.append(asdict(cov) | {"region": region})
    cov_frame = pd.DataFrame(
        coverage_rows, columns=["region", "year", "hours_available", "hours_total", "annual_total_mwh"]
    )
    path = cfg.output_dir / "coverage.csv"
    _write(path, cov_frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))
    _update_manifest(cfg, "featurize", outputs + [path])


def read_coverage(cfg: RunConfig) -> dict[str, dict[int, YearCoverage]]:
    path = cfg.output_dir / "coverage.csv"
    if not path.is_file():
        raise InputError(f"missing stage output {path}; run featurize first")
    frame = pd.read_csv(path, float_precision="round_trip")
    out: dict[str, dict[int, YearCoverage]] = {}
    for r in frame.itertuples(index=False):
        out.setdefault(str(r.region), {})[int(r.year)] = YearCoverage(
            int(r.year), int(r.hours_available), int(r.hours_total), float(r.annual_total_mwh)
        )
    return out


def stage_split(cfg: RunConfig):
    coverage = read_coverage(cfg)
    available = {}
    for region, by_year in coverage.items():
        years = available_years(by_year.values(), cfg.coverage_threshold)
        if not years:
            LOGGER.warning("%s: no year reaches %.0f%% coverage; region skipped", region, 100 * cfg.coverage_threshold)
            continue
        available[region] = years
    if not available:
        raise InputError("no region has a year with enough coverage")
    assignments = assign_splits(available)
    counts = {(r, y): c.hours_available for r, by in coverage.items() for y, c in by.items()}
    summary = summarize(assignments, counts)
    path = cfg.output_dir / "splits.csv"
    _write(path, manifest_frame(assignments).to_csv(index=False, lineterminator="\n"))
    spath = cfg.output_dir / "split_summary.json"
    _write_json(spath, {**cfg.stamp, "counts": summary.counts, "fractions": summary.fractions})
    _update_manifest(cfg, "split", [path, spath])
    return assignments, summary


def read_splits(cfg: RunConfig):
    path = cfg.output_dir / "splits.csv"
    if not path.is_file():
        raise InputError(f"missing stage output {path}; run split first")
    return read_manifest(pd.read_csv(path))


def _load_features(cfg: RunConfig, region: str) -> tuple[FeatureMatrix, np.ndarray]:
    path = cfg.output_dir / "features" / f"{region}.csv"
    if not path.is_file():
        raise InputError(f"missing stage output {path}; run featurize first")
    matrix, targets = read_feature_csv(path, region)
    return matrix, targets


def stage_train(cfg: RunConfig, n_threads: int = 1) -> GBDTModel:
    """One model over the pooled training rows of every region."""
    blocks, ys, schema = [], [], None
    for a in read_splits(cfg):
        matrix, targets = _load_features(cfg, a.region)
        keep = ~np.isnan(targets) & np.isin(matrix.timestamps.year, list(a.train_years))
        if schema is None:
            schema = matrix.schema
        elif matrix.schema != schema:
            raise InputError(f"{a.region}: feature schema differs from other regions")
        blocks.append(matrix.values[keep])
        ys.append(targets[keep])
    X = np.vstack(blocks)
    y = np.concatenate(ys)
    if len(y) == 0:
        raise InputError("no training rows: every region has fewer than three usable years")
    pooled = FeatureMatrix("POOLED", schema, pd.date_range("2000-01-01", periods=len(y), freq="h", tz="UTC"), X)
    LOGGER.info("training on %d rows, %d features", len(y), X.shape[1])
    model = train(pooled, y, cfg.params, n_threads=n_threads)
    model.save(cfg.output_dir / "model.json", extra={**cfg.stamp, "n_train_rows": int(len(y))})
    _update_manifest(cfg, "train", [cfg.output_dir / "model.json"])
    return model


def stage_predict(cfg: RunConfig) -> list[str]:
    """Predict every hour; rescale to MW for each available annual estimate."""
    model = GBDTModel.load(cfg.output_dir / "model.json") if (cfg.output_dir / "model.json").is_file() else None
    if model is None:
        raise InputError("missing stage output model.json; run train first")
    coverage = read_coverage(cfg)
    estimates = read_estimates_csv(cfg.annual_estimates) if cfg.annual_estimates else []
    notices, outputs = [], []
    if not estimates:
        notices.append("no annual estimates configured; rescaling to MW skipped")
        LOGGER.warning(notices[-1])
    for region in sorted(cfg.regions):
        matrix, targets = _load_features(cfg, region)
        predicted = predict(model, matrix)
        frame = pd.DataFrame({"timestamp": _iso(matrix.timestamps), "actual_dn": targets, "predicted_dn": predicted})
        path = cfg.output_dir / "predictions" / f"{region}.csv"
        _write(path, frame.to_csv(index=False, na_rep="", float_format="%.17g", lineterminator="\n"))
        outputs.append(path)

        profile = NormalizedSeries(region, matrix.timestamps[0], np.maximum(predicted, 0.0), coverage[region])
        for est in estimates:
            if est.region != region:
                continue
            cov = coverage[region].get(est.year)
            if cov is None or cov.hours_available == 0:
                notices.append(f"{region} {est.year}: no observed hours; rescaling skipped")
                continue
            mw = rescale(profile, est)
            fpath = cfg.output_dir / "forecasts" / f"{region}_{est.year}.csv"
            write_series(mw, fpath)
            outputs.append(fpath)
    path = cfg.output_dir / "predict.json"
    _write_json(path, {**cfg.stamp, "notices": notices})
    _update_manifest(cfg, "predict", outputs + [path])
    return notices


def _load_predictions(cfg: RunConfig, region: str) -> pd.DataFrame:
    path = cfg.output_dir / "predictions" / f"{region}.csv"
    if not path.is_file():
        raise InputError(f"missing stage output {path}; run predict first")
    frame = pd.read_csv(path, float_precision="round_trip")
    frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True)
    return frame


def stage_evaluate(cfg: RunConfig) -> list[RegionMetrics]:
    metrics = []
    for a in read_splits(cfg):
        frame = _load_predictions(cfg, a.region)
        metrics.append(
            region_metrics(
                a.region,
                pd.DatetimeIndex(frame["timestamp"]),
                frame["actual_dn"].to_numpy(dtype=np.float64),
                frame["predicted_dn"].to_numpy(dtype=np.float64),
                a,
                cfg.epsilon,
            )
        )
    doc = {
        **cfg.stamp,
        "regions": [
            {"region": m.region, "mape_train": m.mape_train, "mape_val": m.mape_val,
             "mape_test": m.mape_test, "counts": m.counts, "excluded": m.excluded}
            for m in metrics
        ],
    }
    path = cfg.output_dir / "metrics.json"
    _write_json(path, doc)
    _update_manifest(cfg, "evaluate", [path])
    return metrics


def stage_report(cfg: RunConfig):
    doc = _read_json(cfg.output_dir / "metrics.json")
    metrics = [
        RegionMetrics(d["region"], d["mape_train"], d["mape_val"], d["mape_test"], d["counts"], d["excluded"])
        for d in doc["regions"]
    ]
    split_doc = _read_json(cfg.output_dir / "split_summary.json")
    model_doc = _read_json(cfg.output_dir / "model.json")
    metadata = {
        **cfg.stamp,
        "params": model_doc["params"],
        "n_train_rows": model_doc.get("metadata", {}).get("n_train_rows"),
        "split_summary": {"counts": split_doc["counts"], "fractions": split_doc["fractions"]},
        "epsilon": cfg.epsilon,
    }
    report = render_report(metrics, metadata)
    outputs = [cfg.output_dir / "report.csv", cfg.output_dir / "report.json"]
    _write(outputs[0], report.to_csv())
    _write(outputs[1], report.to_json())

    splits = {a.region: a for a in read_splits(cfg)}
    best, worst = select_profile_regions(metrics)
    for region in dict.fromkeys([best, worst]):
        frame = _load_predictions(cfg, region)
        times = pd.DatetimeIndex(frame["timestamp"])
        test_year = splits[region].test_year
        in_test = times[times.year == test_year]
        hours = min(cfg.profile_window_hours, len(in_test))
        text = emit_profile_csv(
            region, times, frame["actual_dn"].to_numpy(), frame["predicted_dn"].to_numpy(),
            in_test[0], hours, test_year,
        )
        path = cfg.output_dir / "profiles" / f"{region}.csv"
        _write(path, text)
        outputs.append(path)
    _update_manifest(cfg, "report", outputs)
    LOGGER.info(report.summary())
    return report


def run_all(cfg: RunConfig, n_threads: int = 1):
    for name in STAGES:
        LOGGER.info("stage %s", name)
        run_stage(cfg, name, n_threads)
    return _read_json(cfg.output_dir / "report.json")


def run_stage(cfg: RunConfig, name: str, n_threads: int = 1):
    funcs = {
        "ingest": lambda: stage_ingest(cfg),
        "featurize": lambda: stage_featurize(cfg),
        "split": lambda: stage_split(cfg),
        "train": lambda: stage_train(cfg, n_threads),
        "predict": lambda: stage_predict(cfg),
        "evaluate": lambda: stage_evaluate(cfg),
        "report": lambda: stage_report(cfg),
    }
    try:
        return funcs[name]()
    except InputError as exc:
        raise InputError(f"stage {name} failed: {exc}") from exc
