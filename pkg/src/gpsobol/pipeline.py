"""Stages of a metamodel-based sensitivity analysis, chained through files.

Every stage reads its inputs from and writes its outputs to the run's output
directory, so stages can be run one at a time and an expensive evaluation
stage never has to be repeated.  Each artifact records the hash of the
configuration that produced it; a stage refuses inputs carrying another hash.

Artifacts::

    design_train.csv   training inputs (physical units)
    design_test.csv    held-out inputs, builtin models only
    design_mc.csv      pick-freeze design with a ``block`` column
    training.csv       training inputs and model outputs
    test.csv           held-out inputs and outputs, builtin models only
    cache/evals.log    model evaluation cache, external models only
    gp.json            trained metamodel
    validation.json    Q2 on the held-out set and by leave-one-out
    indices.json/.csv  index estimates with uncertainty decomposition
    projection.csv     binned projections of the posterior mean
    convergence.csv    mean-only indices and Q2 against training size
    report.json/.csv   final report; figures are added by :mod:`gpsobol.report`
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .bench import nash_sutcliffe
from .config import RunConfig
from .errors import ConfigError, DegenerateVariance, DomainError, ModelEvaluationError
from .gp import FitConfig, KernelSpec, TrainedGP, TrainingSet, fit, from_standard, predict_mean
from .gp.sampling import project_mean
from .runner import EvalCache, evaluate_batch, read_training_csv, write_training_csv
from .seeding import STREAM_TEST, task_rng
from .space import build_design, read_design_csv, scale_to_space, to_unit, training_points
from .uncertainty import RunInfo, Target, build_report, compute_index_matrix, decompose

log = logging.getLogger(__name__)

STAGES = ("design", "evaluate", "fit", "validate", "analyze", "report")


class ArtifactMismatch(ConfigError):
    """An input artifact was produced by a different configuration."""


class StageError(Exception):
    """Wraps the error of a failed stage with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class Paths:
    root: Path

    def __getattr__(self, name):
        names = {
            "design_train": "design_train.csv", "design_test": "design_test.csv",
            "design_mc": "design_mc.csv", "training": "training.csv", "test": "test.csv",
            "cache": "cache", "gp": "gp.json", "validation": "validation.json",
            "indices": "indices.json", "indices_csv": "indices.csv",
            "projection": "projection.csv", "convergence": "convergence.csv",
            "report": "report.json", "report_csv": "report.csv",
        }
        if name not in names:
            raise AttributeError(name)
        return self.root / names[name]


def _meta(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.hash}


def artifact_hash(path) -> str | None:
    """Config hash recorded in a CSV comment line or a JSON document."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return doc.get("config_hash") or (doc.get("meta") or {}).get("config_hash") \
            or (doc.get("metadata") or {}).get("config_hash")
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            if key == "config_hash":
                return value
    return None


def require(cfg: RunConfig, *paths) -> None:
    for path in paths:
        if not Path(path).exists():
            raise FileNotFoundError(f"missing artifact {path}; run the earlier stages first")
        found = artifact_hash(path)
        if found != cfg.hash:
            raise ArtifactMismatch(f"{path} was produced by config {found}, current is {cfg.hash}")


def _current(cfg, *paths) -> bool:
    return all(Path(p).exists() and artifact_hash(p) == cfg.hash for p in paths)


def _write_csv(path, header, rows, meta):
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")


def _kernel(cfg):
    return KernelSpec(cfg.kernel, cfg.space.dim)


def _fit_config(cfg):
    return FitConfig(restarts=cfg.restarts, seed=cfg.seed, workers=cfg.workers)


def _block_size(cfg, design):
    # 0 means exact joint sampling over the whole design
    return design.n_rows if cfg.block_size == 0 else cfg.block_size


def stage_design(cfg: RunConfig, paths: Paths) -> None:
    paths.root.mkdir(parents=True, exist_ok=True)
    meta = _meta(cfg)
    X = training_points(cfg.space, cfg.n_train)
    write_training_csv(paths.design_train, X, np.full(len(X), np.nan), cfg.space.names,
                       "unused", meta)
    if cfg.is_builtin and cfg.n_test > 0:
        U = task_rng(cfg.seed, STREAM_TEST).random((cfg.n_test, cfg.space.dim))
        Xt = scale_to_space(U, cfg.space)
        write_training_csv(paths.design_test, Xt, np.full(len(Xt), np.nan), cfg.space.names,
                           "unused", meta)
    design = build_design(cfg.space, cfg.m_mc, include_second_order=cfg.second_order)
    design.to_csv(paths.design_mc, meta)
    log.info("design: %d training points, %d Monte-Carlo rows", cfg.n_train, design.n_rows)


def _evaluate(cfg, paths, X):
    if cfg.is_builtin:
        try:
            return cfg.model.evaluate(X), 0
        except DomainError as exc:
            raise ModelEvaluationError(f"builtin model: {exc}") from exc
    cache = EvalCache(paths.cache)
    result = evaluate_batch(cfg.model, X, cache, cfg.parallelism)
    if result.failures:
        first = result.failures[0]
        raise ModelEvaluationError(
            f"{len(result.failures)} of {len(X)} model runs failed; first: row {first.index} "
            f"({first.cause}) {first.detail}", result.failures)
    return result.values, result.launches


def stage_evaluate(cfg: RunConfig, paths: Paths) -> None:
    names = cfg.space.names
    require(cfg, paths.design_train)
    X, _, _ = read_training_csv(paths.design_train, names)
    y, launches = _evaluate(cfg, paths, X)
    write_training_csv(paths.training, X, y, names, _output_name(cfg), _meta(cfg))
    log.info("evaluate: %d training outputs, %d model launches", len(y), launches)
    if cfg.is_builtin and cfg.n_test > 0:
        require(cfg, paths.design_test)
        Xt, _, _ = read_training_csv(paths.design_test, names)
        write_training_csv(paths.test, Xt, cfg.model.evaluate(Xt), names, _output_name(cfg),
                           _meta(cfg))


def _output_name(cfg):
    return "y" if cfg.is_builtin else cfg.model.output_column


def load_training(cfg: RunConfig, paths: Paths, n=None) -> TrainingSet:
    require(cfg, paths.training)
    X, y, _ = read_training_csv(paths.training, cfg.space.names, _output_name(cfg))
    if n is not None:
        X, y = X[:n], y[:n]
    return TrainingSet.from_raw(to_unit(X, cfg.space), y)


def stage_fit(cfg: RunConfig, paths: Paths) -> TrainedGP:
    train = load_training(cfg, paths)
    gp = fit(train, _kernel(cfg), _fit_config(cfg), space=cfg.space)
    gp.save(paths.gp, _meta(cfg))
    log.info("fit: lml %.6g, length scales %s", gp.lml, np.array2string(gp.theta.length_scales))
    return gp


def load_gp(cfg: RunConfig, paths: Paths) -> TrainedGP:
    require(cfg, paths.gp)
    return TrainedGP.load(paths.gp)


def loo_predictions(gp: TrainedGP) -> np.ndarray:
    """Leave-one-out predictive means in model-output units (closed form)."""
    n = gp.train.n
    Kinv = linalg.cho_solve((gp.chol, True), np.eye(n))
    loo = gp.train.y_std - gp.alpha / np.diag(Kinv)
    return from_standard(gp.train, loo)


def _q2(pred, truth):
    try:
        return nash_sutcliffe(pred, truth)
    except DegenerateVariance:
        return float("nan")


def validation_summary(cfg, gp, paths) -> dict:
    doc = {"n_train": gp.train.n, "q2_loo": _q2(loo_predictions(gp), gp.train.y_raw)}
    if cfg.is_builtin and cfg.n_test > 0:
        require(cfg, paths.test)
        Xt, yt, _ = read_training_csv(paths.test, cfg.space.names)
        pred = from_standard(gp.train, predict_mean(gp, to_unit(Xt, cfg.space)))
        doc.update(n_test=len(yt), q2_test=_q2(pred, yt),
                   note="q2_test on held-out uniform random points")
    else:
        doc.update(n_test=0, q2_test=None,
                   note="no held-out set; q2_loo is leave-one-out cross-validation")
    return doc


def stage_validate(cfg: RunConfig, paths: Paths) -> dict:
    gp = load_gp(cfg, paths)
    doc = {**validation_summary(cfg, gp, paths), **_meta(cfg)}
    _write_json(paths.validation, doc)
    log.info("validate: Q2 loo %.4f, test %s", doc["q2_loo"], doc["q2_test"])
    return doc


def _targets(cfg, order):
    d = cfg.space.dim
    if order == "second":
        return [Target("second", i, j) for i in range(d) for j in range(i + 1, d)]
    return [Target(order, i) for i in range(d)]


def stage_analyze(cfg: RunConfig, paths: Paths):
    gp = load_gp(cfg, paths)
    require(cfg, paths.design_mc)
    design = read_design_csv(paths.design_mc, cfg.space)
    bs = _block_size(cfg, design)
    info = RunInfo()
    matrices = compute_index_matrix(gp, design, cfg.n_gp, cfg.n_boot, cfg.seed,
                                    targets=_targets(cfg, "first") + _targets(cfg, "total"),
                                    block_size=bs, workers=cfg.workers, info=info)
    if cfg.second_order and cfg.space.dim > 1:
        mean_only = cfg.second_order_mode == "mean_only"
        matrices.update(compute_index_matrix(gp, design, cfg.n_gp, cfg.n_boot, cfg.seed,
                                             targets=_targets(cfg, "second"),
                                             mean_only=mean_only, block_size=bs,
                                             workers=cfg.workers))
    metadata = {
        **_meta(cfg),
        "n_train": gp.train.n,
        "m_mc": design.m,
        "design_rows": design.n_rows,
        "n_gp": cfg.n_gp,
        "n_boot": cfg.n_boot,
        "seed": cfg.seed,
        "kernel": cfg.kernel.value,
        "ci": cfg.ci,
        "level": cfg.level,
        "second_order_mode": cfg.second_order_mode if cfg.second_order else None,
        "realisation_blocks": info.blocks,
        "rows_per_block": info.points_per_block,
        "max_realisation_jitter": info.max_jitter,
        "hyperparameters": gp.theta.to_dict(),
        "lml": gp.lml,
    }
    report = build_report(matrices, cfg.space.names, metadata, cfg.level, cfg.ci)
    paths.indices.write_text(report.to_json())
    header, rows = report.csv_rows()
    _write_csv(paths.indices_csv, header, rows, _meta(cfg))

    bins_rows = []
    for i, name in enumerate(cfg.space.names):
        for k, b in enumerate(project_mean(gp, i, cfg.projection_bins, cfg.projection_probes,
                                           cfg.seed, cfg.space)):
            bins_rows.append([name, k, b.center, b.mean, b.lo95, b.hi95, b.count])
    _write_csv(paths.projection, ["param", "bin", "center", "mean", "lo95", "hi95", "count"],
               bins_rows, _meta(cfg))

    _write_csv(paths.convergence, *convergence_table(cfg, paths, design, gp), _meta(cfg))
    log.info("analyze: %d index estimates", len(report.estimates))
    return report


def convergence_table(cfg, paths, design, full_gp):
    """Mean-only first/total indices and Q2 for growing training prefixes."""
    header = ["n_train", "q2_loo", "q2_test", "order", "param", "mean"]
    rows = []
    sizes = sorted(set(cfg.convergence) | {cfg.n_train})
    for n in sizes:
        gp = full_gp if n == cfg.n_train else fit(load_training(cfg, paths, n), _kernel(cfg),
                                                  _fit_config(cfg), space=cfg.space)
        val = validation_summary(cfg, gp, paths)
        mats = compute_index_matrix(gp, design, 1, 2, cfg.seed,
                                    targets=_targets(cfg, "first") + _targets(cfg, "total"),
                                    mean_only=True, block_size=_block_size(cfg, design))
        for t, mat in mats.items():
            est = decompose(mat)
            rows.append([n, val["q2_loo"], "" if val["q2_test"] is None else val["q2_test"],
                         t.order, cfg.space.names[t.i], est.mean])
    return header, rows


def stage_report(cfg: RunConfig, paths: Paths, figures: bool = True) -> dict:
    """Assemble the final report; refuses artifacts from another configuration."""
    require(cfg, paths.training, paths.gp, paths.validation, paths.indices, paths.projection,
            paths.convergence)
    doc = json.loads(paths.indices.read_text())
    validation = json.loads(paths.validation.read_text())
    validation.pop("config_hash", None)
    doc["metadata"]["validation"] = validation
    doc["metadata"]["units"] = dict(cfg.units)
    paths.report.write_text(json.dumps(doc, indent=1) + "\n")
    with open(paths.indices_csv) as src, open(paths.report_csv, "w") as dst:
        dst.write(src.read())
    if figures:
        from .report import render_figures

        render_figures(paths.root, cfg.space.names)
    return doc


STAGE_FUNCS = {
    "design": stage_design,
    "evaluate": stage_evaluate,
    "fit": stage_fit,
    "validate": stage_validate,
    "analyze": stage_analyze,
    "report": stage_report,
}

STAGE_OUTPUTS = {
    "design": ("design_train", "design_mc"),
    "evaluate": ("training",),
    "fit": ("gp",),
    "validate": ("validation",),
    "analyze": ("indices", "indices_csv", "projection", "convergence"),
    "report": ("report", "report_csv"),
}


def run_stage(cfg: RunConfig, stage: str, force: bool = False) -> bool:
    """Run one stage unless its outputs are current; returns True if it ran."""
    paths = Paths(Path(cfg.output_dir))
    outputs = [getattr(paths, n) for n in STAGE_OUTPUTS[stage]]
    if not force and stage != "report" and _current(cfg, *outputs):
        log.info("%s: artifacts current, skipped", stage)
        return False
    paths.root.mkdir(parents=True, exist_ok=True)
    try:
        STAGE_FUNCS[stage](cfg, paths)
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return True


def run_pipeline(cfg: RunConfig, force: bool = False) -> dict:
    """Run every stage in order, reusing current artifacts; returns the report."""
    for stage in STAGES:
        run_stage(cfg, stage, force)
    return json.loads(Paths(Path(cfg.output_dir)).report.read_text())
