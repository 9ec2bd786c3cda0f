"""generate -> train -> evaluate -> report, as plain functions over directories.

Every random draw derives from the experiment seed through a fixed
``SeedSequence([seed, stage])`` key, so each stage can be rerun on its own
and reproduces the same bytes.
"""
from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import MODELS, ExperimentConfig
from .errors import ConfigError, PipelineIOError, ShapeError
from .evaluation import MODEL_LABELS, align_components, aligned_estimate, score_models
from .io import read_json, read_signals, write_json, write_signals
from .models import (
    Z_95,
    HalfVaeModel,
    encode,
    init_half_vae,
    init_vae,
    model_loss,
    posterior_means,
    train,
)
from .synth import MixingMap, generate_sources, make_mixing, mix
from .whitening import Whitener, fit_whitener

log = logging.getLogger(__name__)

SOURCES = "sources.csv"
OBSERVATIONS = "observations.csv"
MIXING = "mixing.json"
CHECKPOINT = "checkpoint.json"
REPORT = "report.json"
METRICS = "metrics.json"
CHECKPOINT_FORMAT = "halfvae.checkpoint/1"
EVAL_CHUNK = 64

# stage keys mixed into the seed
SOURCE_KEY, MIXING_KEY, INIT_KEY, TRAIN_KEY, EVAL_KEY = range(5)


def stage_seed(seed, key):
    return [int(seed), key]


# -- generate ---------------------------------------------------------------


def generate(cfg: ExperimentConfig, out_dir) -> dict:
    cfg.validate()
    out = Path(out_dir)
    z = generate_sources(cfg.specs(), stage_seed(cfg.seed, SOURCE_KEY))
    mapping = make_mixing(cfg.m, cfg.n, cfg.mixing_kind, stage_seed(cfg.seed, MIXING_KEY))
    x = mix(mapping, z)
    write_signals(out / SOURCES, "component", z)
    write_signals(out / OBSERVATIONS, "channel", x)
    record = mapping.to_dict()
    record["experiment_seed"] = cfg.seed
    record["config_hash"] = cfg.hash()
    write_json(out / MIXING, record)
    return {"sources": z, "observations": x, "mixing": mapping}


def load_mixing(data_dir) -> MixingMap:
    return MixingMap.from_dict(read_json(Path(data_dir) / MIXING, "mixing record", "generate"))


def load_observations(cfg, data_dir):
    x = read_signals(Path(data_dir) / OBSERVATIONS, "channel", "observations", "generate")
    if x.shape != (cfg.m, cfg.l):
        field = "m" if x.shape[0] != cfg.m else "l"
        raise ConfigError(
            f"observations are {x.shape[0]} channels x {x.shape[1]} samples, config expects {cfg.m} x {cfg.l}",
            field=field,
        )
    return x


def load_truth(path, n, length):
    z = read_signals(path, "component", "truth sources", "generate")
    if z.shape != (n, length):
        raise ConfigError(f"truth is {z.shape[0]} x {z.shape[1]}, model expects {n} x {length}", field="n")
    return z


# -- models and checkpoints ---------------------------------------------------


def build_model(cfg: ExperimentConfig):
    seed = stage_seed(cfg.seed, INIT_KEY)
    dec = tuple(cfg.decoder_hidden)
    if cfg.model == "half_vae":
        return init_half_vae(cfg.n, cfg.m, cfg.l, cfg.k, seed, dec, cfg.activation, cfg.lam)
    prior = "gmm" if cfg.model == "vae_gmm" else "standard_normal"
    return init_vae(cfg.n, cfg.m, cfg.k, seed, prior, dec, cfg.activation, cfg.lam, tuple(cfg.encoder_hidden))


def checkpoint_payload(cfg, model, whitener):
    params = {
        name: {"shape": list(arr.shape), "values": arr.ravel().tolist()}
        for name, arr in model.param_arrays().items()
    }
    return {
        "format": CHECKPOINT_FORMAT,
        "model": model.kind,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "whitener": whitener.to_dict(),
        "params": params,
    }


def load_checkpoint(path):
    """Rebuild ``(config, model, whitener)`` from a checkpoint file."""
    doc = read_json(path, "checkpoint", "train")
    try:
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise PipelineIOError(f"{path} is not a {CHECKPOINT_FORMAT} file")
        cfg = ExperimentConfig.from_dict(doc["config"]).validate()
        model = build_model(cfg)
        arrays = model.param_arrays()
        stored = doc["params"]
        if set(stored) != set(arrays):
            raise PipelineIOError(f"checkpoint {path} parameter groups do not match a {cfg.model} model")
        for name, arr in arrays.items():
            values = np.asarray(stored[name]["values"], dtype=np.float64)
            if list(arr.shape) != stored[name]["shape"] or values.size != arr.size:
                raise PipelineIOError(f"checkpoint {path}: group {name} has the wrong shape")
            arr[...] = values.reshape(arr.shape)
        whitener = Whitener.from_dict(doc["whitener"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise PipelineIOError(f"checkpoint {path} is malformed: {exc!r}") from None
    return cfg, model, whitener


# -- train --------------------------------------------------------------------


def final_metrics(model, xw, truth):
    est = posterior_means(model, xw)
    scored = score_models({model.kind: est}, truth)
    return {"mean_rmse": scored["models"][model.kind]["mean_rmse"], "table": scored["table"]}


def run_train(cfg: ExperimentConfig, data_dir, out_dir, snapshot_every=None) -> dict:
    """Train the configured model on ``data_dir`` and write checkpoint, report and snapshots."""
    cfg.validate()
    if snapshot_every is not None and snapshot_every < 1:
        raise ConfigError("snapshot interval must be a positive number of epochs", field="snapshot_every")
    data_dir, out = Path(data_dir), Path(out_dir)
    x = load_observations(cfg, data_dir)
    whitener = fit_whitener(x) if cfg.whiten else Whitener.identity(cfg.m)
    xw = whitener.transform(x)
    model = build_model(cfg)
    start = time.perf_counter()
    history = train(
        model,
        xw,
        cfg.epochs,
        cfg.learning_rate,
        cfg.train_samples,
        np.random.default_rng(stage_seed(cfg.seed, TRAIN_KEY)),
        cfg.warmup_fraction,
        snapshot_every,
    )
    wall = time.perf_counter() - start
    write_json(out / CHECKPOINT, checkpoint_payload(cfg, model, whitener))
    snapshots = []
    for epoch, zmu in sorted(history.snapshots.items()):
        name = f"zmu_epoch_{epoch}.csv"
        write_signals(out / name, "component", zmu)
        snapshots.append({"epoch": epoch, "file": name})
    truth_path = data_dir / SOURCES
    metrics = final_metrics(model, xw, load_truth(truth_path, cfg.n, cfg.l)) if truth_path.exists() else None
    report = {
        "model": model.kind,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "epochs": cfg.epochs,
        "wall_seconds": wall,
        "loss_curve": {"loss": history.loss, "reconstruction": history.reconstruction, "kl": history.kl},
        "snapshots": snapshots,
        "final_metrics": metrics,
    }
    write_json(out / REPORT, report)
    log.info("trained %s seed %s in %.1fs", model.kind, cfg.seed, wall)
    return report


# -- evaluate -----------------------------------------------------------------


def posterior_spread(model, xw):
    """Posterior standard deviation [N x L] of each latent entry."""
    if isinstance(model, HalfVaeModel):
        return np.broadcast_to(model.bank.sigma[:, None], model.bank.z_mu.shape).copy()
    return encode(model, xw)[1]


def evaluation_loss(model, xw, samples, seed):
    """Loss terms averaged over ``samples`` fresh draws, evaluated in fixed-size chunks."""
    rng = np.random.default_rng(stage_seed(seed, EVAL_KEY))
    totals = np.zeros(3)
    done = 0
    while done < samples:
        s = min(EVAL_CHUNK, samples - done)
        res = model_loss(model, xw, s, rng)
        totals += s * np.array([res.loss, res.reconstruction, res.kl])
        done += s
    loss, recon, kl = (totals / samples).tolist()
    return {"samples": samples, "loss": loss, "reconstruction": recon, "kl": kl}


def ci_band(est, spread, truth, alignment):
    """95% band per truth row, in the z-scored and sign-corrected frame of the estimate."""
    mean = aligned_estimate(est, truth, alignment)
    half = np.empty_like(mean)
    for i, j in enumerate(alignment.permutation):
        row = est[i]
        std = np.sqrt(np.mean((row - row.mean()) ** 2))
        half[j] = Z_95 * spread[i] / std
    return {"z": Z_95, "mean": mean.tolist(), "lower": (mean - half).tolist(), "upper": (mean + half).tolist()}


def run_evaluate(checkpoint, data_dir, out_dir, truth=None) -> dict:
    cfg, model, whitener = load_checkpoint(checkpoint)
    data_dir = Path(data_dir)
    try:
        x = load_observations(cfg, data_dir)
    except ConfigError as exc:
        raise ConfigError(f"checkpoint does not match the data: {exc}", field=exc.field) from None
    truth_path = Path(truth) if truth is not None else data_dir / SOURCES
    z = load_truth(truth_path, cfg.n, cfg.l)
    xw = whitener.transform(x)
    try:
        est = posterior_means(model, xw)
        alignment = align_components(est, z)
    except ShapeError as exc:
        raise ConfigError(str(exc)) from None
    table = score_models({model.kind: est}, z)["table"]
    tz = np.vstack([(r - r.mean()) / np.sqrt(np.mean((r - r.mean()) ** 2)) for r in z])
    metrics = {
        "model": model.kind,
        "label": MODEL_LABELS[model.kind],
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "alignment": alignment.to_dict(),
        "table": table,
        "evaluation_loss": evaluation_loss(model, xw, cfg.eval_samples, cfg.seed),
        "ci_band": ci_band(est, posterior_spread(model, xw), z, alignment),
        "truth_zscored": tz.tolist(),
    }
    write_json(Path(out_dir) / METRICS, metrics)
    return metrics


# -- multi-seed ---------------------------------------------------------------


def seed_dir(base, seed):
    return Path(base) / f"seed_{seed}"


def _data_for(data_dir, seed):
    d = seed_dir(data_dir, seed)
    return d if d.is_dir() else Path(data_dir)


def _train_job(args):
    cfg, data_dir, out_dir, snapshot_every = args
    return run_train(cfg, data_dir, out_dir, snapshot_every)


def _evaluate_job(args):
    checkpoint, data_dir, out_dir, truth = args
    return run_evaluate(checkpoint, data_dir, out_dir, truth)


def _pool_map(fn, jobs, workers=None):
    if len(jobs) == 1:
        return [fn(jobs[0])]
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def summarize(values):
    arr = np.asarray(values, dtype=np.float64)
    return {"min": float(arr.min()), "mean": float(arr.mean()), "max": float(arr.max())}


def aggregate(seeds, rmses):
    return {
        "seeds": list(seeds),
        "mean_rmse": summarize(rmses),
        "per_seed": [{"seed": s, "mean_rmse": r} for s, r in zip(seeds, rmses)],
    }


def train_seeds(cfg, seeds, data_dir, out_dir, snapshot_every=None, workers=None):
    """Independent runs, one per seed, into ``out_dir/seed_<s>``; aggregates RMSE when truth is present."""
    cfgs = [cfg.with_seed(s).validate() for s in seeds]
    jobs = [(c, _data_for(data_dir, c.seed), seed_dir(out_dir, c.seed), snapshot_every) for c in cfgs]
    reports = _pool_map(_train_job, jobs, workers)
    summary = None
    if all(r["final_metrics"] is not None for r in reports):
        summary = aggregate(seeds, [r["final_metrics"]["mean_rmse"] for r in reports])
        summary["model"] = cfg.model
        write_json(Path(out_dir) / "aggregate.json", summary)
    return reports, summary


def evaluate_seeds(seeds, data_dir, out_dir, truth=None, workers=None):
    jobs = [
        (seed_dir(out_dir, s) / CHECKPOINT, _data_for(data_dir, s), seed_dir(out_dir, s), truth)
        for s in seeds
    ]
    results = _pool_map(_evaluate_job, jobs, workers)
    summary = aggregate(seeds, [m["alignment"]["mean_rmse"] for m in results])
    summary["model"] = results[0]["model"]
    write_json(Path(out_dir) / "aggregate.json", summary)
    return results, summary


# -- report -------------------------------------------------------------------


def find_metrics(paths):
    """Expand directories into the metrics.json files beneath them."""
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.rglob(METRICS)))
        elif p.is_file():
            found.append(p)
        else:
            raise PipelineIOError(f"no such file or directory: {p} (run `halfvae evaluate` first)")
    if not found:
        raise PipelineIOError(f"no {METRICS} under {[str(p) for p in paths]} (run `halfvae evaluate` first)")
    return found


def build_table(metrics_docs) -> dict:
    """Per-component and mean aligned RMSE per model; multiple seeds are averaged with min/max kept."""
    by_model = {}
    for doc in metrics_docs:
        by_model.setdefault(doc["model"], []).append(doc)
    order = [m for m in MODELS if m in by_model] + sorted(set(by_model) - set(MODELS))
    n_set = {len(d["alignment"]["per_component_rmse"]) for d in metrics_docs}
    if len(n_set) != 1:
        raise ConfigError("metrics files disagree on the number of components", field="n")
    n = n_set.pop()
    rows = []
    for j in range(n + 1):
        label = "Mean" if j == n else f"Component {j + 1}"
        stats = []
        for model in order:
            vals = [
                d["alignment"]["mean_rmse"] if j == n else d["alignment"]["per_component_rmse"][j]
                for d in by_model[model]
            ]
            stats.append(summarize(vals))
        rows.append({
            "label": label,
            "values": [s["mean"] for s in stats],
            "min": [s["min"] for s in stats],
            "max": [s["max"] for s in stats],
        })
    return {
        "columns": [MODEL_LABELS.get(m, m) for m in order],
        "models": order,
        "seeds": {m: [d["seed"] for d in by_model[m]] for m in order},
        "rows": rows,
    }


def run_report(paths, out_dir) -> dict:
    docs = [read_json(p, "metrics", "evaluate") for p in find_metrics(paths)]
    table = build_table(docs)
    out = Path(out_dir)
    write_json(out / "table.json", table)
    lines = ["label," + ",".join(table["columns"])]
    lines += [row["label"] + "," + ",".join(repr(v) for v in row["values"]) for row in table["rows"]]
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise PipelineIOError(f"cannot write {out / 'table.csv'}: {exc}") from exc
    return table


def replace_model(cfg, model):
    if model is None:
        return cfg
    return dataclasses.replace(cfg, model=model)

