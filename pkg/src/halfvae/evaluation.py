"""Scoring estimated components against ground truth.

ICA recovers sources only up to order, sign and scale, so both matrices are
z-scored row by row and the estimate is aligned to the truth by exhaustive
search over permutations and sign flips before RMSE is taken.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError, SizeLimitError

MAX_ALIGN_N = 8
MODEL_LABELS = {"half_vae": "Half-VAE(GMM)", "vae_gmm": "VAE(GMM)", "vanilla_vae": "Vanilla VAE"}


@dataclass
class AlignmentResult:
    """Best assignment of estimated rows to truth rows.

    ``permutation[i]`` is the truth row matched to estimated row ``i`` and
    ``signs[i]`` the flip applied to that estimate. ``per_component_rmse`` is
    indexed by truth row.
    """

    permutation: list
    signs: list
    per_component_rmse: list
    mean_rmse: float

    def to_dict(self):
        return {
            "permutation": list(self.permutation),
            "signs": list(self.signs),
            "per_component_rmse": list(self.per_component_rmse),
            "mean_rmse": self.mean_rmse,
        }


def zscore(series):
    """Shift to mean 0 and scale to population standard deviation 1."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise DegenerateInputError("z-score needs a 1-D series of length >= 2")
    centred = x - x.mean()
    # second pass removes the rounding left by a large offset
    centred -= centred.mean()
    std = np.sqrt(np.mean(centred * centred))
    if not std > 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise DegenerateInputError("cannot z-score a constant series")
    return centred / std


def rmse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size == 0:
        raise ShapeError(f"rmse needs equal non-empty shapes, got {a.shape} and {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _zscore_rows(mat, name):
    try:
        return np.vstack([zscore(row) for row in mat])
    except DegenerateInputError as exc:
        raise DegenerateInputError(f"{name}: {exc}") from None


def align_components(estimated, truth) -> AlignmentResult:
    """Exhaustive permutation x sign search minimising the summed per-pair RMSE.

    Ties go to the lexicographically smallest permutation, then the smallest
    sign pattern with ``+1`` ordered before ``-1``.
    """
    est = np.asarray(estimated, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if est.shape != tru.shape or est.ndim != 2:
        raise ShapeError(f"estimated {est.shape} and truth {tru.shape} must be equal 2-D shapes")
    n = est.shape[0]
    if n > MAX_ALIGN_N:
        raise SizeLimitError(f"exhaustive alignment supports at most {MAX_ALIGN_N} components, got {n}")
    ez = _zscore_rows(est, "estimated")
    tz = _zscore_rows(tru, "truth")

    # pair_cost[i, j, b]: RMSE of estimate i (sign bit b) against truth j
    signs_pm = np.array([1.0, -1.0])
    diff = signs_pm[None, None, :, None] * ez[:, None, None, :] - tz[None, :, None, :]
    pair_cost = np.sqrt(np.mean(diff * diff, axis=-1))

    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    bits = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.intp)
    rows = np.arange(n)
    best = (np.inf, 0, 0)
    chunk = max(1, 2_000_000 // (len(bits) * n))
    for start in range(0, len(perms), chunk):
        p = perms[start:start + chunk]
        cost = pair_cost[rows[None, None, :], p[:, None, :], bits[None, :, :]].sum(axis=-1)
        flat = int(np.argmin(cost))
        value = cost.flat[flat]
        if value < best[0]:
            best = (value, start + flat // len(bits), flat % len(bits))
    _, pi, bi = best
    perm = perms[pi]
    sign_bits = bits[bi]
    per_truth = np.empty(n)
    per_truth[perm] = pair_cost[rows, perm, sign_bits]
    per = [float(v) for v in per_truth]
    return AlignmentResult(
        [int(j) for j in perm],
        [1 if b == 0 else -1 for b in sign_bits],
        per,
        float(np.mean(per)),
    )


def aligned_estimate(estimated, truth, alignment: AlignmentResult):
    """Z-scored estimate reordered and sign-corrected to line up with z-scored truth rows."""
    ez = _zscore_rows(np.asarray(estimated, dtype=np.float64), "estimated")
    out = np.empty_like(ez)
    for i, (j, s) in enumerate(zip(alignment.permutation, alignment.signs)):
        out[j] = s * ez[i]
    return out


def score_models(results: dict, truth) -> dict:
    """Table of aligned RMSE per model: one row per truth component plus the mean.

    ``results`` maps a model key (``half_vae``, ``vae_gmm``, ``vanilla_vae`` or
    any other name) to its [N x L] estimated means.
    """
    truth = np.asarray(truth, dtype=np.float64)
    models = {}
    for name, est in results.items():
        est = np.asarray(est, dtype=np.float64)
        if est.shape != truth.shape:
            raise ShapeError(f"{name}: estimate {est.shape} does not match truth {truth.shape}")
        models[name] = align_components(est, truth).to_dict()
    n = truth.shape[0]
    columns = [MODEL_LABELS.get(name, name) for name in models]
    rows = [
        {"label": f"Component {j + 1}", "values": [models[name]["per_component_rmse"][j] for name in models]}
        for j in range(n)
    ]
    rows.append({"label": "Mean", "values": [models[name]["mean_rmse"] for name in models]})
    return {"models": models, "table": {"columns": columns, "rows": rows}}
