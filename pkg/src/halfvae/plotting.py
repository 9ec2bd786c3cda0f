"""Plot data (CSV) and minimal SVG renderings of pipeline outputs.

The CSV files are the contract; the SVGs are line and band drawings for a
quick look.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import PipelineIOError
from .io import read_json, read_signals, write_columns
from .pipeline import METRICS, OBSERVATIONS, REPORT, SOURCES


def _render(path, t, series, bands=None, title=""):
    """One panel per entry of ``series`` (a list of {label: values}); ``bands`` adds (lower, upper) per panel."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "halfvae"
    fig, axes = plt.subplots(len(series), 1, figsize=(8, 1.8 * len(series)), sharex=True, squeeze=False)
    for i, (ax, lines) in enumerate(zip(axes[:, 0], series)):
        if bands is not None:
            lo, hi = bands[i]
            ax.fill_between(t, lo, hi, alpha=0.3, linewidth=0)
        for label, values in lines.items():
            ax.plot(t, values, linewidth=0.8, label=label)
        ax.legend(loc="upper right", fontsize=6)
    axes[0, 0].set_title(title)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise PipelineIOError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)


def _signal_figure(out, stem, mat, prefix, title):
    t = np.arange(mat.shape[1], dtype=np.float64)
    header = ["t"] + [f"{prefix}_{i + 1}" for i in range(mat.shape[0])]
    write_columns(out / f"{stem}.csv", header, [t, *mat])
    _render(out / f"{stem}.svg", t, [{h: row} for h, row in zip(header[1:], mat)], title=title)
    return [out / f"{stem}.csv", out / f"{stem}.svg"]


def plot_data(data_dir, out):
    files = _signal_figure(out, "sources", read_signals(data_dir / SOURCES, "component", "sources", "generate"),
                           "component", "Independent components")
    files += _signal_figure(out, "observations",
                            read_signals(data_dir / OBSERVATIONS, "channel", "observations", "generate"),
                            "channel", "Observations")
    return files


def plot_report(run_dir, out, tag):
    report = read_json(run_dir / REPORT, "report", "train")
    curve = report["loss_curve"]
    epochs = np.arange(1, len(curve["loss"]) + 1, dtype=np.float64)
    files = [out / f"loss_{tag}.csv"]
    write_columns(files[0], ["epoch", "loss", "reconstruction", "kl"],
                  [epochs, curve["loss"], curve["reconstruction"], curve["kl"]])
    for snap in report["snapshots"]:
        zmu = read_signals(run_dir / snap["file"], "component", "snapshot", "train")
        files += _signal_figure(out, f"zmu_trajectory_{tag}_epoch_{snap['epoch']}", zmu, "component",
                                f"Z_mu at epoch {snap['epoch']}")
    return files


def plot_metrics(run_dir, out, tag):
    metrics = read_json(run_dir / METRICS, "metrics", "evaluate")
    band = metrics["ci_band"]
    mean, lower, upper = (np.asarray(band[k]) for k in ("mean", "lower", "upper"))
    truth = np.asarray(metrics["truth_zscored"])
    n, length = mean.shape
    t = np.arange(length, dtype=np.float64)
    header, cols = ["t"], [t]
    for j in range(n):
        header += [f"mean_{j + 1}", f"lower_{j + 1}", f"upper_{j + 1}", f"truth_{j + 1}"]
        cols += [mean[j], lower[j], upper[j], truth[j]]
    write_columns(out / f"ci_band_{tag}.csv", header, cols)
    _render(out / f"ci_band_{tag}.svg", t, [{f"estimate_{j + 1}": mean[j], f"truth_{j + 1}": truth[j]} for j in range(n)],
            bands=list(zip(lower, upper)), title=f"{metrics['label']}: 95% band")
    header, cols = ["t"], [t]
    for j in range(n):
        header += [f"truth_{j + 1}", f"estimate_{j + 1}"]
        cols += [truth[j], mean[j]]
    write_columns(out / f"overlay_{tag}.csv", header, cols)
    _render(out / f"overlay_{tag}.svg", t, [{f"truth_{j + 1}": truth[j], f"estimate_{j + 1}": mean[j]} for j in range(n)],
            title=f"{metrics['label']}: truth vs estimate")
    return [out / f"ci_band_{tag}.csv", out / f"ci_band_{tag}.svg", out / f"overlay_{tag}.csv", out / f"overlay_{tag}.svg"]


def _tag(run_dir):
    for name in (METRICS, REPORT):
        if (run_dir / name).exists():
            doc = read_json(run_dir / name, name)
            return f"{doc['model']}_seed_{doc['seed']}"
    raise PipelineIOError(f"{run_dir} has neither {REPORT} nor {METRICS} (run `halfvae train` and `halfvae evaluate` first)")


def run_plot(out_dir, data_dir=None, run_dirs=()) -> list:
    """Write plot files for a data directory and any number of run directories."""
    if data_dir is None and not run_dirs:
        raise PipelineIOError("nothing to plot: pass --data and/or --runs")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineIOError(f"cannot create {out}: {exc}") from exc
    files = plot_data(Path(data_dir), out) if data_dir is not None else []
    for run in map(Path, run_dirs):
        tag = _tag(run)
        if (run / REPORT).exists():
            files += plot_report(run, out, tag)
        if (run / METRICS).exists():
            files += plot_metrics(run, out, tag)
    return files
